//! Reverse-mode differentiation, a finite-difference audit, and Adam.

mod adam;
mod backend;
mod gradcheck;
mod param;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use backend::{Backend, Eager, ShapeCounter};
pub use gradcheck::{finite_diff_check, relative_error, GradReport, Selection};
pub use param::{Param, ParamList, Parameterized};
pub use tape::{Gradients, Tape, Var};
