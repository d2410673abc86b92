//! Multi-agent asynchronous optimization: a central solver dispatches
//! candidate points to concurrent worker agents over message ports and
//! aggregates results into a pluggable search strategy (random, grid, or
//! Gaussian-process Bayesian optimization with constant-liar batching).

pub mod acquisition;
pub mod coordinator;
pub mod gp;
pub mod objective;
pub mod space;
pub mod strategy;
pub mod transport;

pub use acquisition::{AcquisitionSpec, LieStrategy};
pub use coordinator::{RunConfig, RunResult, TransportKind, TrialRecord};
pub use objective::{Objective, ObjectiveSpec};
pub use space::{Dimension, DimensionKind, Point, SearchSpace, UnitPoint};
pub use strategy::{Strategy, StrategyKind, Trial, TrialState};
pub use transport::{Message, PortPair};
