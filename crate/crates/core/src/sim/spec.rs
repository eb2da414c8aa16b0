//! Experiment descriptions.

use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregationRule, NoiseChannel};
use crate::error::{Error, Result};
use crate::loss::LossFunction;
use crate::peer_score::{Correction, FlipMode, PeerScoreSpec};
use crate::sim::experts::ExpertModel;
use crate::sim::world::WorldModel;

/// Base losses that can be named in a config. Savage losses carry closures
/// and are only available through the library API.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLoss {
    #[default]
    Squared,
}

impl BaseLoss {
    pub fn to_loss(self) -> LossFunction {
        match self {
            BaseLoss::Squared => LossFunction::Squared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeerScoreConfig {
    #[serde(default)]
    pub base_loss: BaseLoss,
    pub correction: Correction,
    #[serde(default)]
    pub flips: FlipMode,
}

impl PeerScoreConfig {
    pub fn build(&self) -> Result<PeerScoreSpec> {
        PeerScoreSpec::new(
            self.base_loss.to_loss(),
            self.correction.clone(),
            self.flips.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorConfig {
    #[default]
    None,
    /// Ground truth revealed each round with probability `reveal_prob`.
    ImportanceWeighted { reveal_prob: f64 },
    /// Split the panel into two groups. Under channel aggregation group A
    /// uses the configured channel and group B uses `group_b_channel`
    /// (defaulting to the same law), sampled independently; otherwise each
    /// group aggregates its own forecasts with the configured rule.
    TwoGroup {
        #[serde(default)]
        group_b_channel: Option<NoiseChannel>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    /// Hedge rate on scores mapped to [0, 1]; defaults to `sqrt(8 ln N / T)`.
    #[serde(default)]
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaRule {
    /// Closed-form increment bound over the world's support.
    ClosedForm,
    /// Largest increment observed in the run.
    Empirical,
}

/// Increment bound fed to the martingale terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaChoice {
    Rule(SigmaRule),
    Value(f64),
}

impl Default for SigmaChoice {
    fn default() -> Self {
        SigmaChoice::Rule(SigmaRule::ClosedForm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub sigma_g: SigmaChoice,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub delta_g: f64,
}

fn default_delta() -> f64 {
    0.05
}

fn default_alpha() -> f64 {
    2.1
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            delta: default_delta(),
            sigma_g: SigmaChoice::default(),
            alpha: default_alpha(),
            delta_g: 0.0,
        }
    }
}

/// Output file names, relative to the output directory. Only front ends
/// read this block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_trace")]
    pub trace: Option<String>,
    #[serde(default = "default_summary")]
    pub summary: Option<String>,
}

fn default_trace() -> Option<String> {
    Some("trace.csv".into())
}

fn default_summary() -> Option<String> {
    Some("summary.json".into())
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            trace: default_trace(),
            summary: default_summary(),
        }
    }
}

/// A complete, self-contained experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub world: WorldModel,
    pub experts: Vec<ExpertModel>,
    pub aggregation: AggregationRule,
    pub peer_score: PeerScoreConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub bounds: BoundConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn at(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config(message) | Error::Input(message) => Error::spec(path, message),
        other => other,
    }
}

impl ExperimentSpec {
    pub fn horizon(&self) -> usize {
        self.world.horizon
    }

    /// Consistency checks; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        if self.experts.is_empty() {
            return Err(Error::spec("experts", "the expert panel is empty"));
        }
        for (i, e) in self.experts.iter().enumerate() {
            if let Some((field, message)) = e.check() {
                return Err(Error::spec(format!("experts[{i}].{field}"), message));
            }
        }
        self.aggregation.validate().map_err(at("aggregation"))?;
        self.peer_score.build().map_err(at("peer_score"))?;
        match &self.estimator {
            EstimatorConfig::None => {
                if matches!(self.peer_score.correction, Correction::Estimated { .. }) {
                    return Err(Error::spec(
                        "estimator",
                        "an estimated correction needs an estimator (importance_weighted or two_group)",
                    ));
                }
            }
            EstimatorConfig::ImportanceWeighted { reveal_prob } => {
                if !(reveal_prob.is_finite() && *reveal_prob > 0.0 && *reveal_prob <= 1.0) {
                    return Err(Error::spec(
                        "estimator.reveal_prob",
                        format!("must lie in (0, 1], got {reveal_prob}"),
                    ));
                }
            }
            EstimatorConfig::TwoGroup { group_b_channel } => {
                if self.experts.len() < 2 {
                    return Err(Error::spec(
                        "estimator",
                        "two-group estimation needs at least two experts",
                    ));
                }
                if let Some(ch) = group_b_channel {
                    if !self.aggregation.needs_outcome() {
                        return Err(Error::spec(
                            "estimator.group_b_channel",
                            "a second channel only applies under channel aggregation",
                        ));
                    }
                    ch.validate().map_err(at("estimator.group_b_channel"))?;
                }
            }
        }
        if let Some(lr) = self.learner.learning_rate {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::spec(
                    "learner.learning_rate",
                    format!("must be positive, got {lr}"),
                ));
            }
        }
        let b = &self.bounds;
        if !(b.delta > 0.0 && b.delta < 1.0) {
            return Err(Error::spec(
                "bounds.delta",
                format!("must lie in (0, 1), got {}", b.delta),
            ));
        }
        if !(b.alpha.is_finite() && b.alpha > 2.0) {
            return Err(Error::spec(
                "bounds.alpha",
                format!("must exceed 2, got {}", b.alpha),
            ));
        }
        if !(0.0..=1.0).contains(&b.delta_g) {
            return Err(Error::spec(
                "bounds.delta_g",
                format!("must lie in [0, 1], got {}", b.delta_g),
            ));
        }
        if let SigmaChoice::Value(s) = b.sigma_g {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::spec(
                    "bounds.sigma_g",
                    format!("must be nonnegative, got {s}"),
                ));
            }
        }
        Ok(())
    }
}
