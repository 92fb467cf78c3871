//! Error taxonomy shared by all modules.

use thiserror::Error;

/// Errors reported by mesh construction, assembly and the gradient flow.
#[derive(Debug, Error)]
pub enum Error {
    /// A domain specification with non-positive dimensions or an otherwise
    /// unusable shape description.
    #[error("invalid domain specification: {0}")]
    InvalidSpec(String),

    /// A boundary selector that matches no boundary edge. The flow requires
    /// a nonempty clamped portion of the boundary.
    #[error("boundary selector matches no edge; the plate must be clamped somewhere")]
    EmptyDirichlet,

    /// A cell with non-positive width or height.
    #[error("degenerate cell extent {width} x {height}")]
    DegenerateCell { width: f64, height: f64 },

    /// Evaluation of user-supplied data failed or produced a non-finite value.
    #[error("data evaluation failed: {0}")]
    Data(String),

    /// A point handed to a cell-local evaluation lies outside the cell.
    #[error("point ({x}, {y}) lies outside cell {cell}")]
    OutsideCell { cell: usize, x: f64, y: f64 },

    /// A state that violates the admissibility guarantees of the flow
    /// (nodal metric below the identity, rank-deficient constraint block,
    /// or a singular system composition). Indicates a broken invariant
    /// rather than a modeling regime.
    #[error("inadmissible state: {0}")]
    InadmissibleState(String),

    /// The inner fixed-point iteration exhausted its iteration budget;
    /// the pseudo-timestep exceeds the contraction threshold for the data.
    #[error("fixed-point iteration did not converge at outer step {outer_step} after {inner_iters} iterations")]
    NoConvergence { outer_step: usize, inner_iters: usize },

    /// The direct solver produced a solution whose residual exceeds the
    /// accepted tolerance.
    #[error("linear solve failed: relative residual {residual:.3e} exceeds tolerance")]
    SolverFailure { residual: f64 },

    /// A runtime invariant of the flow (energy decrease, metric
    /// monotonicity, constraint satisfaction) was violated.
    #[error("invariant violation at outer step {outer_step}: {detail}")]
    InvariantViolation { outer_step: usize, detail: String },
}
