//! Mixed 0-1 linear programming: model container, LP text format, a sparse
//! bounded dual simplex and a branch-and-bound driver with lazy cuts.

pub mod bnb;
pub mod error;
pub mod lp_format;
pub mod model;
mod propagate;
pub mod simplex;

pub use bnb::{
    solve, Branching, Completion, LazyCutPolicy, MilpSolution, MilpStatus, NodeOutcome, NodeRecord, Progress, Search,
    SolveParams,
};
pub use error::{LpFormatError, ModelError, SolveError};
pub use model::{Model, ModelStatistics, Priority, Row, RowId, Sense, VarId, VarKind, Variable};
pub use simplex::{solve_lp, Basis, DualSimplex, LpLimits, LpSolution, LpStatus, SparseLp};
