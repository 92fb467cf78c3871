//! Conforming partitions of plate domains into axis-aligned rectangles.
//!
//! Domains are described as a small grid of rectangular blocks (one block
//! for a plain rectangle, seven for the I-shaped plate, eight for the
//! O-shaped plate). Every block is subdivided into `2^k x 2^k` uniform
//! cells, shared block interfaces produce bitwise identical vertex
//! coordinates, and the union is re-indexed into a single conforming mesh
//! without hanging nodes.
//!
//! Vertices are numbered lexicographically with `y` as the major key, so
//! consecutive indices sweep each horizontal row left to right. This keeps
//! the bandwidth of vertex-coupled matrices proportional to the number of
//! vertices per row and makes all outputs deterministic.

use std::collections::HashMap;

use crate::{Error, Result};

/// Classification of a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    /// Clamped: deformation and gradient are prescribed.
    Dirichlet,
    /// Traction-free.
    Free,
}

/// Selects the clamped portion of the boundary.
///
/// Selectors are evaluated on edge midpoints, so an edge is either matched
/// as a whole or not at all and endpoint ties cannot split an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundarySelector {
    /// All boundary edges on the line `x = min x`.
    Left,
    /// All boundary edges on the line `x = max x`.
    Right,
    /// All boundary edges on the line `y = min y`.
    Bottom,
    /// All boundary edges on the line `y = max y`.
    Top,
    /// A neighborhood of the bottom-left corner: the part of the left side
    /// with `y <= y_to` together with the part of the bottom side with
    /// `x <= x_to`.
    CornerBottomLeft { x_to: f64, y_to: f64 },
}

/// Plate outline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Axis-aligned rectangle `(x0, x1) x (y0, y1)`.
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    /// I-shaped plate: two `5/2 x 4` flanges joined by a `5 x 3/4` web,
    /// total outline `10 x 4` centered vertically at `y = 0`.
    IShape,
    /// O-shaped plate: a `10 x 20/3` rectangle with a centered `4 x 8/3`
    /// rectangular hole.
    OShape,
}

/// Complete description of a plate domain and its clamped boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub shape: Shape,
    /// Number of uniform refinements: every block of the outline is split
    /// into `2^refinements x 2^refinements` cells.
    pub refinements: u32,
    pub dirichlet: BoundarySelector,
}

/// An edge of the partition together with its cell adjacency.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    /// Endpoint vertex indices, `vertices.0 < vertices.1`.
    pub vertices: (usize, usize),
    /// Adjacent cell(s); boundary edges have exactly one.
    pub cells: (usize, Option<usize>),
    /// Tag for boundary edges, `None` for interior edges.
    pub tag: Option<BoundaryTag>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.cells.1.is_none()
    }
}

/// A conforming partition of a plate domain into axis-aligned rectangles.
///
/// Immutable after construction; share it freely across threads.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    /// Cell corner indices in counterclockwise order (SW, SE, NE, NW).
    cells: Vec<[usize; 4]>,
    /// Per-cell (width, height).
    cell_extent: Vec<(f64, f64)>,
    edges: Vec<Edge>,
    vertex_cells: Vec<Vec<usize>>,
    dirichlet_vertex: Vec<bool>,
    area: f64,
    shape_regularity: f64,
    bounds: [f64; 4],
}

impl Mesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    /// Corner vertices in counterclockwise order (SW, SE, NE, NW).
    pub fn cell_vertices(&self, cell: usize) -> [usize; 4] {
        self.cells[cell]
    }

    /// Corner vertices in tensor order (SW, SE, NW, NE), i.e. x fastest.
    pub fn cell_corners(&self, cell: usize) -> [usize; 4] {
        let [sw, se, ne, nw] = self.cells[cell];
        [sw, se, nw, ne]
    }

    /// South-west corner coordinates of a cell.
    pub fn cell_origin(&self, cell: usize) -> [f64; 2] {
        self.vertices[self.cells[cell][0]]
    }

    pub fn cell_extent(&self, cell: usize) -> (f64, f64) {
        self.cell_extent[cell]
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        let (w, h) = self.cell_extent[cell];
        w * h
    }

    pub fn cell_midpoint(&self, cell: usize) -> [f64; 2] {
        let o = self.cell_origin(cell);
        let (w, h) = self.cell_extent[cell];
        [o[0] + 0.5 * w, o[1] + 0.5 * h]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_midpoint(&self, edge: &Edge) -> [f64; 2] {
        let a = self.vertices[edge.vertices.0];
        let b = self.vertices[edge.vertices.1];
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    /// Cells incident to a vertex.
    pub fn vertex_cells(&self, v: usize) -> &[usize] {
        &self.vertex_cells[v]
    }

    /// Whether the vertex lies on at least one Dirichlet edge.
    pub fn is_dirichlet_vertex(&self, v: usize) -> bool {
        self.dirichlet_vertex[v]
    }

    pub fn dirichlet_vertex_count(&self) -> usize {
        self.dirichlet_vertex.iter().filter(|d| **d).count()
    }

    pub fn dirichlet_edge_count(&self) -> usize {
        self.edges
            .iter()
            .filter(|e| e.tag == Some(BoundaryTag::Dirichlet))
            .count()
    }

    /// Total domain area (sum of cell areas).
    pub fn area(&self) -> f64 {
        self.area
    }

    /// Largest cell aspect ratio `max(w/h, h/w)` over all cells.
    pub fn shape_regularity(&self) -> f64 {
        self.shape_regularity
    }

    /// Axis-aligned bounding box `[xmin, xmax, ymin, ymax]`.
    pub fn bounds(&self) -> [f64; 4] {
        self.bounds
    }

    /// Largest cell diameter.
    pub fn mesh_size(&self) -> f64 {
        self.cell_extent
            .iter()
            .map(|&(w, h)| (w * w + h * h).sqrt())
            .fold(0.0, f64::max)
    }

    /// Re-tags the boundary with a new selector, keeping the geometry.
    pub fn tag_boundary(mut self, selector: BoundarySelector) -> Result<Mesh> {
        let tol = 1e-9 * self.diameter();
        let [xmin, xmax, ymin, ymax] = self.bounds;
        let mut any = false;
        let mut dirichlet_vertex = vec![false; self.vertices.len()];
        for edge in self.edges.iter_mut() {
            if !edge.is_boundary() {
                continue;
            }
            let a = self.vertices[edge.vertices.0];
            let b = self.vertices[edge.vertices.1];
            let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let hit = match selector {
                BoundarySelector::Left => (m[0] - xmin).abs() <= tol,
                BoundarySelector::Right => (m[0] - xmax).abs() <= tol,
                BoundarySelector::Bottom => (m[1] - ymin).abs() <= tol,
                BoundarySelector::Top => (m[1] - ymax).abs() <= tol,
                BoundarySelector::CornerBottomLeft { x_to, y_to } => {
                    ((m[0] - xmin).abs() <= tol && m[1] <= y_to)
                        || ((m[1] - ymin).abs() <= tol && m[0] <= x_to)
                }
            };
            edge.tag = Some(if hit {
                any = true;
                dirichlet_vertex[edge.vertices.0] = true;
                dirichlet_vertex[edge.vertices.1] = true;
                BoundaryTag::Dirichlet
            } else {
                BoundaryTag::Free
            });
        }
        if !any {
            return Err(Error::EmptyDirichlet);
        }
        self.dirichlet_vertex = dirichlet_vertex;
        Ok(self)
    }

    fn diameter(&self) -> f64 {
        let [xmin, xmax, ymin, ymax] = self.bounds;
        ((xmax - xmin).powi(2) + (ymax - ymin).powi(2)).sqrt()
    }
}

/// Builds the mesh described by `spec`, including boundary tags.
pub fn build_mesh(spec: &DomainSpec) -> Result<Mesh> {
    let blocks = block_layout(&spec.shape)?;
    let n = 1usize << spec.refinements;

    // Generate vertices per block; cut positions along any shared block
    // line are computed from the same (lo, hi, n) triple in both blocks,
    // so deduplication can key on exact bit patterns.
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut quads: Vec<[usize; 4]> = Vec::new();
    let mut extents: Vec<(f64, f64)> = Vec::new();

    let cut = |lo: f64, hi: f64, i: usize| -> f64 {
        if i == n {
            hi
        } else {
            lo + (i as f64) * (hi - lo) / (n as f64)
        }
    };

    for b in &blocks {
        let w = (b.x1 - b.x0) / n as f64;
        let h = (b.y1 - b.y0) / n as f64;
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "block ({}, {}) x ({}, {}) has non-positive extent",
                b.x0, b.x1, b.y0, b.y1
            )));
        }
        let mut id = |x: f64, y: f64| -> usize {
            *index.entry((x.to_bits(), y.to_bits())).or_insert_with(|| {
                vertices.push([x, y]);
                vertices.len() - 1
            })
        };
        for j in 0..n {
            let y0 = cut(b.y0, b.y1, j);
            let y1 = cut(b.y0, b.y1, j + 1);
            for i in 0..n {
                let x0 = cut(b.x0, b.x1, i);
                let x1 = cut(b.x0, b.x1, i + 1);
                let sw = id(x0, y0);
                let se = id(x1, y0);
                let ne = id(x1, y1);
                let nw = id(x0, y1);
                quads.push([sw, se, ne, nw]);
                extents.push((x1 - x0, y1 - y0));
            }
        }
    }

    // Re-index vertices lexicographically, y-major.
    let mut order: Vec<usize> = (0..vertices.len()).collect();
    order.sort_by(|&a, &b| {
        let (va, vb) = (vertices[a], vertices[b]);
        va[1].total_cmp(&vb[1]).then(va[0].total_cmp(&vb[0]))
    });
    let mut rank = vec![0usize; vertices.len()];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let vertices: Vec<[f64; 2]> = order.iter().map(|&old| vertices[old]).collect();
    for q in quads.iter_mut() {
        for v in q.iter_mut() {
            *v = rank[*v];
        }
    }

    // Edge adjacency.
    let mut edge_map: HashMap<(usize, usize), (usize, Option<usize>)> = HashMap::new();
    for (c, q) in quads.iter().enumerate() {
        for k in 0..4 {
            let (a, b) = (q[k], q[(k + 1) % 4]);
            let key = (a.min(b), a.max(b));
            match edge_map.get_mut(&key) {
                None => {
                    edge_map.insert(key, (c, None));
                }
                Some(entry) => {
                    if entry.1.is_some() {
                        return Err(Error::InvalidSpec(format!(
                            "edge {key:?} is shared by more than two cells"
                        )));
                    }
                    entry.1 = Some(c);
                }
            }
        }
    }
    let mut edge_keys: Vec<(usize, usize)> = edge_map.keys().copied().collect();
    edge_keys.sort_unstable();
    let edges: Vec<Edge> = edge_keys
        .into_iter()
        .map(|key| {
            let cells = edge_map[&key];
            Edge { vertices: key, cells, tag: None }
        })
        .collect();

    let mut vertex_cells = vec![Vec::new(); vertices.len()];
    for (c, q) in quads.iter().enumerate() {
        for &v in q {
            vertex_cells[v].push(c);
        }
    }

    let area = extents.iter().map(|&(w, h)| w * h).sum();
    let shape_regularity = extents
        .iter()
        .map(|&(w, h)| (w / h).max(h / w))
        .fold(0.0, f64::max);
    let bounds = vertices.iter().fold(
        [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY],
        |acc, v| {
            [acc[0].min(v[0]), acc[1].max(v[0]), acc[2].min(v[1]), acc[3].max(v[1])]
        },
    );

    let mesh = Mesh {
        dirichlet_vertex: vec![false; vertices.len()],
        vertices,
        cells: quads,
        cell_extent: extents,
        edges,
        vertex_cells,
        area,
        shape_regularity,
        bounds,
    };
    mesh.tag_boundary(spec.dirichlet)
}

struct Block {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

/// Decomposes the outline into rectangular blocks on a shared cut grid.
fn block_layout(shape: &Shape) -> Result<Vec<Block>> {
    match *shape {
        Shape::Rectangle { x0, x1, y0, y1 } => {
            if !(x1 > x0 && y1 > y0) {
                return Err(Error::InvalidSpec(format!(
                    "rectangle ({x0}, {x1}) x ({y0}, {y1}) has non-positive extent"
                )));
            }
            Ok(vec![Block { x0, x1, y0, y1 }])
        }
        Shape::IShape => {
            // Flanges 5/2 x 4 at both ends, web 5 x 3/4, outline 10 x 4.
            let xc = [0.0, 2.5, 7.5, 10.0];
            let yc = [-2.0, -0.375, 0.375, 2.0];
            Ok(grid_blocks(&xc, &yc, |i, j| i != 1 || j == 1))
        }
        Shape::OShape => {
            // Outer 10 x 20/3 with a centered 4 x 8/3 hole.
            let xc = [0.0, 3.0, 7.0, 10.0];
            let yc = [0.0, 2.0, 14.0 / 3.0, 20.0 / 3.0];
            Ok(grid_blocks(&xc, &yc, |i, j| !(i == 1 && j == 1)))
        }
    }
}

fn grid_blocks(xc: &[f64; 4], yc: &[f64; 4], keep: impl Fn(usize, usize) -> bool) -> Vec<Block> {
    let mut blocks = Vec::new();
    for j in 0..3 {
        for i in 0..3 {
            if keep(i, j) {
                blocks.push(Block {
                    x0: xc[i],
                    x1: xc[i + 1],
                    y0: yc[j],
                    y1: yc[j + 1],
                });
            }
        }
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benchmark_spec(refinements: u32) -> DomainSpec {
        DomainSpec {
            shape: Shape::Rectangle { x0: -5.0, x1: 5.0, y0: -2.0, y1: 2.0 },
            refinements,
            dirichlet: BoundarySelector::Left,
        }
    }

    #[test]
    fn unrefined_rectangle_is_one_cell() {
        let mesh = build_mesh(&benchmark_spec(0)).unwrap();
        assert_eq!(mesh.cell_count(), 1);
        assert_eq!(mesh.vertex_count(), 4);
        assert_eq!(mesh.cell_extent(0), (10.0, 4.0));
    }

    #[test]
    fn refined_rectangle_counts() {
        let mesh = build_mesh(&benchmark_spec(4)).unwrap();
        assert_eq!(mesh.cell_count(), 256);
        assert_eq!(mesh.vertex_count(), 289);
    }

    #[test]
    fn refinement_quadruples_cells_and_preserves_area() {
        for k in 0..5 {
            let coarse = build_mesh(&benchmark_spec(k)).unwrap();
            let fine = build_mesh(&benchmark_spec(k + 1)).unwrap();
            assert_eq!(fine.cell_count(), 4 * coarse.cell_count());
            assert!((coarse.area() - 40.0).abs() <= 1e-12 * 40.0);
            assert!((fine.area() - 40.0).abs() <= 1e-12 * 40.0);
        }
    }

    #[test]
    fn vertices_are_y_major_lexicographic() {
        let mesh = build_mesh(&benchmark_spec(2)).unwrap();
        for v in 1..mesh.vertex_count() {
            let a = mesh.vertex(v - 1);
            let b = mesh.vertex(v);
            assert!(a[1] < b[1] || (a[1] == b[1] && a[0] < b[0]));
        }
    }

    #[test]
    fn adjacency_round_trip() {
        let mesh = build_mesh(&benchmark_spec(3)).unwrap();
        for v in 0..mesh.vertex_count() {
            for &c in mesh.vertex_cells(v) {
                assert!(mesh.cell_vertices(c).contains(&v));
            }
        }
        for c in 0..mesh.cell_count() {
            for &v in &mesh.cell_vertices(c) {
                assert!(mesh.vertex_cells(v).contains(&c));
            }
        }
    }

    #[test]
    fn interior_edges_have_two_cells() {
        let mesh = build_mesh(&benchmark_spec(3)).unwrap();
        let n = 1 << 3;
        let interior = 2 * n * (n - 1);
        let boundary = 4 * n;
        assert_eq!(mesh.edges().len(), interior + boundary);
        for e in mesh.edges() {
            if e.is_boundary() {
                assert!(e.tag.is_some());
            } else {
                assert!(e.cells.1.is_some());
                assert!(e.tag.is_none());
            }
        }
    }

    #[test]
    fn left_selector_on_mesh1() {
        let mesh = build_mesh(&benchmark_spec(1)).unwrap();
        assert_eq!(mesh.dirichlet_edge_count(), 2);
        assert_eq!(mesh.dirichlet_vertex_count(), 3);
    }

    #[test]
    fn corner_selector_matches_exactly_the_corner_edges() {
        let spec = DomainSpec {
            shape: Shape::Rectangle { x0: -3.0, x1: 3.0, y0: -2.0, y1: 2.0 },
            refinements: 3,
            dirichlet: BoundarySelector::CornerBottomLeft { x_to: 0.0, y_to: 0.0 },
        };
        let mesh = build_mesh(&spec).unwrap();
        // 8x8 cells: half of the left side (4 edges) plus half of the
        // bottom side (4 edges).
        assert_eq!(mesh.dirichlet_edge_count(), 8);
        for e in mesh.edges() {
            if e.tag == Some(BoundaryTag::Dirichlet) {
                let m = mesh.edge_midpoint(e);
                assert!(
                    (m[0] == -3.0 && m[1] < 0.0) || (m[1] == -2.0 && m[0] < 0.0),
                    "unexpected Dirichlet edge at {m:?}"
                );
            }
        }
    }

    #[test]
    fn empty_selector_is_rejected() {
        let spec = DomainSpec {
            shape: Shape::Rectangle { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 },
            refinements: 1,
            dirichlet: BoundarySelector::CornerBottomLeft { x_to: -10.0, y_to: -10.0 },
        };
        assert!(matches!(build_mesh(&spec), Err(Error::EmptyDirichlet)));
    }

    #[test]
    fn non_positive_rectangle_is_rejected() {
        let spec = DomainSpec {
            shape: Shape::Rectangle { x0: 0.0, x1: 0.0, y0: 0.0, y1: 1.0 },
            refinements: 0,
            dirichlet: BoundarySelector::Left,
        };
        assert!(matches!(build_mesh(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn i_and_o_shapes_hit_the_reference_cell_counts() {
        let ispec = DomainSpec {
            shape: Shape::IShape,
            refinements: 5,
            dirichlet: BoundarySelector::Left,
        };
        let imesh = build_mesh(&ispec).unwrap();
        assert_eq!(imesh.cell_count(), 7168);
        assert!((imesh.area() - 23.75).abs() < 1e-12 * 23.75);

        let ospec = DomainSpec {
            shape: Shape::OShape,
            refinements: 5,
            dirichlet: BoundarySelector::Left,
        };
        let omesh = build_mesh(&ospec).unwrap();
        assert_eq!(omesh.cell_count(), 8192);
        assert!((omesh.area() - 56.0).abs() < 1e-12 * 56.0);
    }

    #[test]
    fn o_shape_is_conforming_across_blocks() {
        let spec = DomainSpec {
            shape: Shape::OShape,
            refinements: 2,
            dirichlet: BoundarySelector::Left,
        };
        let mesh = build_mesh(&spec).unwrap();
        // Hole boundary is free, outer-left is clamped.
        let boundary = mesh.edges().iter().filter(|e| e.is_boundary()).count();
        // Outer perimeter 4*(10+20/3) scaled to cells of the block grid:
        // each side of a block contributes 4 edges at refinement level 2.
        assert_eq!(boundary, (3 + 3 + 3 + 3) * 4 + (1 + 1 + 1 + 1) * 4);
        for e in mesh.edges() {
            if !e.is_boundary() {
                assert!(e.cells.1.is_some());
            }
        }
    }
}
