//! Synthetic worlds, expert panels, the full round protocol and the
//! verification suites.

pub mod checks;
pub mod experts;
pub mod monte_carlo;
pub mod rng;
pub mod run;
pub mod spec;
pub mod world;

pub use checks::{identity_suite, monte_carlo_checks, Check, CheckOptions, CheckReport};
pub use experts::ExpertModel;
pub use monte_carlo::{monte_carlo, replication_seed, MonteCarloSummary, Stats};
pub use run::{
    run_experiment, run_streaming, run_summary, BoundReport, RunSummary, TraceRecord, TraceSink,
};
pub use spec::{
    BaseLoss, BoundConfig, EstimatorConfig, ExperimentSpec, LearnerConfig, OutputConfig,
    PeerScoreConfig, SigmaChoice, SigmaRule,
};
pub use world::{Generator, PDistribution, WorldModel};
