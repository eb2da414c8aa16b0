//! Shared fixtures for the benchmarks.

use peerhedge_core::aggregation::{AggregationRule, NoiseChannel};
use peerhedge_core::sim::{
    EstimatorConfig, ExperimentSpec, ExpertModel, Generator, OutputConfig, PDistribution,
    PeerScoreConfig, WorldModel,
};
use peerhedge_core::{Correction, FlipMode, LossFunction, PeerScoreSpec};

/// A panel of `n` experts around an oracle: alternating biases and noise
/// levels, symmetric channel at `eta`.
pub fn panel_spec(n: usize, horizon: usize, eta: f64) -> ExperimentSpec {
    let mut experts = vec![ExpertModel::Oracle];
    for i in 1..n {
        let k = i as f64 / n as f64;
        experts.push(if i % 2 == 0 {
            ExpertModel::ConstantBias { offset: 0.3 * k }
        } else {
            ExpertModel::Perturbed { sigma: 0.3 * k }
        });
    }
    ExperimentSpec {
        seed: 1,
        world: WorldModel {
            horizon,
            generator: Generator::Iid {
                distribution: PDistribution::Uniform {
                    low: 0.0,
                    high: 1.0,
                },
            },
        },
        experts,
        aggregation: AggregationRule::Channel {
            channel: NoiseChannel::Symmetric { eta },
        },
        peer_score: PeerScoreConfig {
            base_loss: Default::default(),
            correction: Correction::Symmetric { eta },
            flips: FlipMode::None,
        },
        estimator: EstimatorConfig::None,
        learner: Default::default(),
        bounds: Default::default(),
        output: OutputConfig {
            trace: None,
            summary: None,
        },
    }
}

pub fn symmetric_score_spec(eta: f64) -> PeerScoreSpec {
    PeerScoreSpec::new(
        LossFunction::Squared,
        Correction::Symmetric { eta },
        FlipMode::None,
    )
    .expect("valid rate")
}

/// Exact moments for the two-group system at `(p0, eta_a, eta_b)`.
pub fn moments(p0: f64, eta_a: f64, eta_b: f64) -> (f64, f64, f64) {
    (
        p0 * eta_a + (1.0 - p0) * (1.0 - eta_a),
        p0 * eta_b + (1.0 - p0) * (1.0 - eta_b),
        p0 * eta_a * eta_b + (1.0 - p0) * (1.0 - eta_a) * (1.0 - eta_b),
    )
}
