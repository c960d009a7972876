//! Central finite-difference check of the analytic head gradients.

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::labeler::LabeledRecord;
use crate::rng::SeededRng;

use super::heads::HeadParams;
use super::objective::{hp_objective, ict_objective, IctWeights};

/// Coordinates checked per call.
pub const SAMPLE_COORDS: usize = 200;
/// Below this gradient magnitude the absolute difference is reported.
pub const ABS_FLOOR: f64 = 1e-6;

const COORD_TAG: u64 = 0x6C4E;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GradTarget {
    /// Regression term alone.
    Regression,
    /// Weighted in-batch negatives alone.
    Negatives,
    /// Regression plus `lambda` times negatives.
    Total,
    /// Ranking loss on the perceptron.
    Margin,
}

impl std::str::FromStr for GradTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "regression" | "ict" => GradTarget::Regression,
            "negatives" | "neg" => GradTarget::Negatives,
            "total" => GradTarget::Total,
            "margin" => GradTarget::Margin,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown gradient target {other:?}"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub target: GradTarget,
    /// Max over checked coordinates of the relative error, or the absolute
    /// error where both gradients are below `ABS_FLOOR`.
    pub max_error: f64,
    pub checked: usize,
    /// Coordinates skipped because a hinge changed activity inside the
    /// difference stencil.
    pub excluded_kink: Vec<usize>,
}

pub fn gradient_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < ABS_FLOOR {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

struct Eval {
    loss: f64,
    pattern: Vec<[bool; 2]>,
}

pub fn finite_diff_check(
    params: &HeadParams,
    batch: &[LabeledRecord],
    config: &RunConfig,
    epsilon: f64,
    target: GradTarget,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let refs: Vec<&LabeledRecord> = batch.iter().collect();
    let triplets: Vec<_> = batch.iter().map(|l| &l.record).collect();
    let weights = match target {
        GradTarget::Regression => IctWeights {
            regression: 1.0,
            negatives: 0.0,
        },
        GradTarget::Negatives => IctWeights {
            regression: 0.0,
            negatives: 1.0,
        },
        GradTarget::Total | GradTarget::Margin => IctWeights::training(config),
    };

    let eval = |p: &HeadParams| -> Result<(Eval, Vec<f64>)> {
        if target == GradTarget::Margin {
            let out = hp_objective(p, &triplets, config.margin);
            Ok((
                Eval {
                    loss: out.report.l_total,
                    pattern: out.active,
                },
                out.report.gradient,
            ))
        } else {
            let r = ict_objective(p, &refs, config, weights)?;
            Ok((
                Eval {
                    loss: r.l_total,
                    pattern: Vec::new(),
                },
                r.gradient,
            ))
        }
    };

    let (center, analytic) = eval(params)?;
    let range = if target == GradTarget::Margin {
        params.hp_range()
    } else {
        params.ict_range()
    };
    let mut coords: Vec<usize> = range.collect();
    if coords.len() > SAMPLE_COORDS {
        SeededRng::new(config.seed)
            .derive(COORD_TAG)
            .shuffle(&mut coords);
        coords.truncate(SAMPLE_COORDS);
        coords.sort_unstable();
    }

    let mut max_error: f64 = 0.0;
    let mut checked = 0;
    let mut excluded_kink = Vec::new();
    let mut probe = params.clone();
    for &c in &coords {
        let base = params.as_slice()[c];
        probe.as_mut_slice()[c] = base + epsilon;
        let (plus, _) = eval(&probe)?;
        probe.as_mut_slice()[c] = base - epsilon;
        let (minus, _) = eval(&probe)?;
        probe.as_mut_slice()[c] = base;
        if plus.pattern != center.pattern || minus.pattern != center.pattern {
            excluded_kink.push(c);
            continue;
        }
        let numeric = (plus.loss - minus.loss) / (2.0 * epsilon);
        max_error = max_error.max(gradient_error(analytic[c], numeric));
        checked += 1;
    }
    Ok(GradCheckReport {
        target,
        max_error,
        checked,
        excluded_kink,
    })
}
