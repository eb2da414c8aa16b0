//! Online expert selection driven by peer-prediction feedback.
//!
//! Experts forecast a binary outcome that is never revealed. The learner
//! scores each forecast against a noisy reference answer aggregated from the
//! panel itself, corrects the score for the reference's noise, and runs
//! Hedge on the corrected scores. The [`sim`] module builds synthetic worlds
//! around that loop and keeps the counterfactual books against the truth.

pub mod aggregation;
pub mod bounds;
pub mod error;
pub mod estimation;
pub mod learner;
pub mod loss;
pub mod peer_score;
pub mod probability;
pub mod sim;

pub use aggregation::{aggregate, reference_prob, Aggregate, AggregationRule, NoiseChannel};
pub use bounds::{
    choose_flip_prob, e_mart, sigma_g_paper, theorem1_bound, theorem3_bound, theorem6_bound,
    BoundInputs,
};
pub use error::{Error, Result};
pub use estimation::{
    estimation_error_bound, solve_noise_system, ImportanceWeightedEstimator, NoiseSolution,
    SolveStatus, TwoGroupEstimator,
};
pub use learner::{
    hedge_learning_rate, online_bound, LedgerSummary, RegretLedger, RoundData, ScoreScaler,
    WeightVector,
};
pub use loss::{f_divergence, loss, CalibrationPair, LossFunction, PsiParams, SavagePotential};
pub use peer_score::{Correction, FlipMode, PeerScoreSpec, RoundView};
pub use probability::{Outcome, Probability};
