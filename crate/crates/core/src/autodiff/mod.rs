//! Minimal reverse-mode differentiation with MLP and GRU blocks, the RMSProp
//! optimiser and a central-difference gradient checker.

mod gradcheck;
mod graph;
mod nn;
mod optim;
mod tensor;

pub use gradcheck::{
    finite_diff_check, relative_error, DifferentiableLoss, GradCheckReport, GraphLoss, REL_ERROR_FLOOR,
};
pub use graph::{BoundParams, Gradients, Graph, Var};
pub use nn::{gru_step, mlp_forward, GruCell, Mlp};
pub use optim::{rmsprop_step, OptimizerState, RmsProp};
pub use tensor::{ParamSet, Tensor};
