//! Small deterministic CNN kernel: `f64` tensors, the layer set of the
//! pretext networks, SGD with momentum and a finite-difference checker.

pub mod checkpoint;
mod gemm;
pub mod gradcheck;
pub mod net;
pub mod ops;
pub mod optim;
pub mod spec;
pub mod tensor;

pub use checkpoint::{write_atomic, Checkpoint};
pub use gradcheck::{grad_check, GradCheckOptions, GradReport, LayerCheck, LossHead, NetObjective, Objective};
pub use net::{Net, Param, Tape, BN_RUNNING_MOMENTUM};
pub use optim::{sgd_momentum_step, Sgd};
pub use spec::{LayerSpec, NamedLayer, NetSpec};
pub use tensor::Tensor;
