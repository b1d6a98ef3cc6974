//! Sparse linear programs and a self-contained simplex solver.

mod farkas;
mod lu;
mod model;
pub mod mps;
mod simplex;

pub use farkas::{box_maximum, extract_farkas, verify_farkas, FarkasCertificate};
pub use lu::{LuFactors, Singular};
pub use model::{Column, LpModel, Row, RowId, Sense, VarId};
pub use simplex::{solve_lp, solve_lp_from, Basis, LpSolution, Status, Tolerances, VarStatus};
