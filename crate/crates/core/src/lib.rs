//! Bayesian optimization of coupled knob pairs on a synthetic split-and-delay
//! testbed: a paired 45-degree coordinate rotation, an exact GP surrogate,
//! UCB with reverse annealing, two-objective EHVI, trust-region and standard
//! baselines, and a reproducible multi-trial campaign harness.

pub mod acquisition;
pub mod bounds;
pub mod error;
pub mod harness;
pub mod objective;
pub mod optimizers;
pub mod seeding;
pub mod sequence;
pub mod simulator;
pub mod surrogate;
pub mod trace;
pub mod transform;

pub use acquisition::{ehvi_2d, maximize_acquisition, ucb, AnnealingSchedule, ParetoFront, ScheduleKind};
pub use bounds::Bounds;
pub use error::{Error, Result};
pub use harness::{aggregate, run_campaign, CampaignConfig};
pub use objective::{scalarize, NormalizationBounds, Scalarizer};
pub use optimizers::{OptimizerSpec, TrustRegionState, TurboConfig};
pub use simulator::{Simulator, SimulatorConfig};
pub use surrogate::{GpSurrogate, KernelParams};
pub use trace::{Metric, OptimizerKind, TrialTrace};
pub use transform::{CoordinateTransform, KnobPair, PairedTransform};
