//! Tensor-product biquadratic (Q2) Lagrange bases on axis-aligned
//! rectangles, with the exact element matrices used for curvature terms.
//!
//! Cells are axis-aligned, so all evaluations work directly on the
//! physical rectangle through the scaled coordinate `s = (x - x0)/w`;
//! no Jacobian machinery is needed.

use nalgebra::SMatrix;

/// 1D quadratic Lagrange basis at nodes {0, 1/2, 1}, evaluated at `s`.
#[inline]
pub fn shape1(s: f64) -> [f64; 3] {
    [
        2.0 * s * s - 3.0 * s + 1.0,
        4.0 * s * (1.0 - s),
        2.0 * s * s - s,
    ]
}

/// Derivatives (in `s`) of the 1D quadratic Lagrange basis.
#[inline]
pub fn dshape1(s: f64) -> [f64; 3] {
    [4.0 * s - 3.0, 4.0 - 8.0 * s, 4.0 * s - 1.0]
}

/// Three-point Gauss rule on [0, 1]: exact for polynomials of degree 5.
pub const GAUSS3: [(f64, f64); 3] = {
    // nodes (1 ± sqrt(3/5))/2, weights (5/18, 8/18, 5/18)
    const D: f64 = 0.387_298_334_620_741_69; // sqrt(3/5)/2
    [
        (0.5 - D, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 + D, 5.0 / 18.0),
    ]
};

/// 1D stiffness matrix `∫ φi' φj'` of the quadratic basis on `[0, L]`.
pub fn stiffness1(len: f64) -> SMatrix<f64, 3, 3> {
    SMatrix::<f64, 3, 3>::new(7.0, -8.0, 1.0, -8.0, 16.0, -8.0, 1.0, -8.0, 7.0) / (3.0 * len)
}

/// 1D mass matrix `∫ φi φj` of the quadratic basis on `[0, L]`.
pub fn mass1(len: f64) -> SMatrix<f64, 3, 3> {
    SMatrix::<f64, 3, 3>::new(4.0, 2.0, -1.0, 2.0, 16.0, 2.0, -1.0, 2.0, 4.0) * (len / 30.0)
}

/// Element matrix `∫_T ∇φ_p · ∇φ_q` of the 9 tensor-product Q2 basis
/// functions on a `w x h` rectangle. Point index `p = 3*iy + ix`.
pub fn q2_stiffness(w: f64, h: f64) -> SMatrix<f64, 9, 9> {
    let sx = stiffness1(w);
    let mx = mass1(w);
    let sy = stiffness1(h);
    let my = mass1(h);
    let mut k = SMatrix::<f64, 9, 9>::zeros();
    for iy in 0..3 {
        for ix in 0..3 {
            for jy in 0..3 {
                for jx in 0..3 {
                    k[(3 * iy + ix, 3 * jy + jx)] =
                        sx[(ix, jx)] * my[(iy, jy)] + mx[(ix, jx)] * sy[(iy, jy)];
                }
            }
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_functions_are_nodal() {
        for (i, &s) in [0.0, 0.5, 1.0].iter().enumerate() {
            let phi = shape1(s);
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((phi[j] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gauss3_integrates_degree_five() {
        for deg in 0..=5 {
            let quad: f64 = GAUSS3.iter().map(|&(s, w)| w * s.powi(deg)).sum();
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!((quad - exact).abs() < 1e-15, "degree {deg}");
        }
    }

    #[test]
    fn element_matrices_match_quadrature() {
        let (w, h) = (0.625, 0.25);
        let k = q2_stiffness(w, h);
        let mut k_quad = SMatrix::<f64, 9, 9>::zeros();
        for &(sx, wx) in &GAUSS3 {
            for &(sy, wy) in &GAUSS3 {
                let (px, dpx) = (shape1(sx), dshape1(sx));
                let (py, dpy) = (shape1(sy), dshape1(sy));
                for p in 0..9 {
                    let (ix, iy) = (p % 3, p / 3);
                    let gi = [dpx[ix] / w * py[iy], px[ix] * dpy[iy] / h];
                    for q in 0..9 {
                        let (jx, jy) = (q % 3, q / 3);
                        let gj = [dpx[jx] / w * py[jy], px[jx] * dpy[jy] / h];
                        k_quad[(p, q)] += wx * wy * w * h * (gi[0] * gj[0] + gi[1] * gj[1]);
                    }
                }
            }
        }
        assert!((k - k_quad).norm() < 1e-12 * k.norm());
    }
}
