//! Causal sequence operators with a shared interface, an attention-pooling
//! classification head, and a synthetic two-modality fusion pipeline.
//!
//! The crate is forward-only and deterministic: all parameters come from
//! seeded streams and every reduction runs in a fixed order.

pub mod config;
pub mod error;
pub mod math;
pub mod mechanisms;
pub mod memory;
pub mod pipeline;
pub mod pooling;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use mechanisms::{
    ExecutionMode, Mechanism, MechanismConfig, MechanismKind, RecurrentState,
};
pub use memory::{MemoryAccountant, Workspace};
pub use rng::Rng;
pub use tensor::{Matrix, SequenceTensor};
