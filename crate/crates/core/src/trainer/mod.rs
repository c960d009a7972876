//! Two-stage head training.
//!
//! Stage one fits the paired text/image projections to ICT labels with the
//! regression plus in-batch negative objective. Stage two freezes the
//! projections and fits the image-only perceptron with the ranking loss.
//! Both stages use mini-batch Adam and are fully determined by the seed.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod heads;
pub mod objective;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::TripletRecord;
use crate::error::{Error, Result};
use crate::evaluator::{bt_log_likelihood, pairwise_accuracy, AccuracyTable, HpScorer, IctScorer};
use crate::labeler::LabeledRecord;
use crate::rng::SeededRng;

use adam::Adam;
use heads::{init_heads, HeadParams};
use objective::{hp_objective, ict_objective, IctWeights};

const INIT_TAG: u64 = 0x1417;
const ICT_EPOCH_TAG: u64 = 0x1C7_0000;
const HP_EPOCH_TAG: u64 = 0x4B_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ict,
    Hp,
}

/// Epoch means of the batch losses plus end-of-epoch diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_ict: f64,
    pub l_neg: f64,
    pub l_total: f64,
    pub l_margin: f64,
    pub accuracy: AccuracyTable,
    /// HP stage only.
    pub bt_log_likelihood: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHistory {
    pub stage: Stage,
    pub epochs: Vec<EpochRecord>,
    /// Wall-clock seconds per epoch; excluded from equality and from the
    /// serialized history so reruns compare identical.
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
}

impl PartialEq for TrainHistory {
    fn eq(&self, other: &Self) -> bool {
        self.stage == other.stage && self.epochs == other.epochs
    }
}

impl TrainHistory {
    fn new(stage: Stage) -> Self {
        Self {
            stage,
            epochs: Vec::new(),
            epoch_seconds: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("history serializes");
        s.push('\n');
        s
    }
}

/// The parameters `train_ict` starts from for a given dimension and config.
pub fn initial_heads(dim: usize, config: &RunConfig) -> Result<HeadParams> {
    let mut rng = SeededRng::new(config.seed).derive(INIT_TAG);
    init_heads(dim, config.hidden_width, &mut rng)
}

fn epoch_order(n: usize, seed: u64, tag: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed)
        .derive(tag + epoch as u64)
        .shuffle(&mut order);
    order
}

fn common_dim<'a>(records: impl Iterator<Item = &'a TripletRecord>) -> Result<usize> {
    let mut dim = None;
    for r in records {
        for e in [&r.img1, &r.img2, &r.img3, &r.prompt_easy, &r.prompt_ref] {
            match dim {
                None => dim = Some(e.dim()),
                Some(d) if d != e.dim() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: e.dim(),
                    })
                }
                _ => {}
            }
        }
    }
    dim.ok_or(Error::EmptyDataset)
}

pub fn train_ict(data: &[LabeledRecord], config: &RunConfig) -> Result<(HeadParams, TrainHistory)> {
    train_ict_validated(data, data, config)
}

/// Stage one with accuracy tracked on a separate validation set.
pub fn train_ict_validated(
    data: &[LabeledRecord],
    validation: &[LabeledRecord],
    config: &RunConfig,
) -> Result<(HeadParams, TrainHistory)> {
    config.validate()?;
    let dim = common_dim(data.iter().map(|l| &l.record))?;
    let mut params = initial_heads(dim, config)?;
    let val_records: Vec<TripletRecord> = validation.iter().map(|l| l.record.clone()).collect();
    let range = params.ict_range();
    let mut opt = Adam::new(range.len(), config.lr);
    let weights = IctWeights::training(config);
    let mut history = TrainHistory::new(Stage::Ict);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let order = epoch_order(data.len(), config.seed, ICT_EPOCH_TAG, epoch);
        let (mut s_ict, mut s_neg, mut s_total, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&LabeledRecord> = chunk.iter().map(|&i| &data[i]).collect();
            let report = ict_objective(&params, &batch, config, weights)?;
            if !report.l_total.is_finite() || report.gradient.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            opt.step(
                &mut params.as_mut_slice()[range.clone()],
                &report.gradient[range.clone()],
            );
            if !params.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            s_ict += report.l_ict;
            s_neg += report.l_neg;
            s_total += report.l_total;
            batches += 1;
        }
        let nb = batches as f64;
        let accuracy = if val_records.is_empty() {
            AccuracyTable {
                acc_21: 0.0,
                acc_32: 0.0,
                acc_31: 0.0,
                mean: 0.0,
            }
        } else {
            pairwise_accuracy(
                &IctScorer {
                    params: &params,
                    tau: config.tau,
                },
                &val_records,
            )?
        };
        history.epochs.push(EpochRecord {
            epoch,
            l_ict: s_ict / nb,
            l_neg: s_neg / nb,
            l_total: s_total / nb,
            l_margin: 0.0,
            accuracy,
            bt_log_likelihood: None,
        });
        history.epoch_seconds.push(started.elapsed().as_secs_f64());
        log::debug!("ict epoch {epoch}: total {:.6}", s_total / nb);
    }
    Ok((params, history))
}

pub fn train_hp(
    data: &[TripletRecord],
    ict_params: &HeadParams,
    config: &RunConfig,
) -> Result<(HeadParams, TrainHistory)> {
    train_hp_validated(data, data, ict_params, config)
}

/// Stage two: only the perceptron block moves; the projections are copied
/// through untouched.
pub fn train_hp_validated(
    data: &[TripletRecord],
    validation: &[TripletRecord],
    ict_params: &HeadParams,
    config: &RunConfig,
) -> Result<(HeadParams, TrainHistory)> {
    config.validate()?;
    let dim = common_dim(data.iter())?;
    if dim != ict_params.dim() {
        return Err(Error::DimensionMismatch {
            expected: ict_params.dim(),
            found: dim,
        });
    }
    let mut params = ict_params.clone();
    let range = params.hp_range();
    let mut opt = Adam::new(range.len(), config.lr);
    let mut history = TrainHistory::new(Stage::Hp);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let order = epoch_order(data.len(), config.seed, HP_EPOCH_TAG, epoch);
        let (mut s_margin, mut batches) = (0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&TripletRecord> = chunk.iter().map(|&i| &data[i]).collect();
            let report = hp_objective(&params, &batch, config.margin).report;
            if !report.l_margin.is_finite() || report.gradient.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            opt.step(
                &mut params.as_mut_slice()[range.clone()],
                &report.gradient[range.clone()],
            );
            if !params.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            s_margin += report.l_margin;
            batches += 1;
        }
        let nb = batches as f64;
        let (accuracy, ll) = if validation.is_empty() {
            (
                AccuracyTable {
                    acc_21: 0.0,
                    acc_32: 0.0,
                    acc_31: 0.0,
                    mean: 0.0,
                },
                None,
            )
        } else {
            let scorer = HpScorer { params: &params };
            (
                pairwise_accuracy(&scorer, validation)?,
                Some(bt_log_likelihood(&scorer, validation)?),
            )
        };
        history.epochs.push(EpochRecord {
            epoch,
            l_ict: 0.0,
            l_neg: 0.0,
            l_total: s_margin / nb,
            l_margin: s_margin / nb,
            accuracy,
            bt_log_likelihood: ll,
        });
        history.epoch_seconds.push(started.elapsed().as_secs_f64());
        log::debug!("hp epoch {epoch}: margin {:.6}", s_margin / nb);
    }
    Ok((params, history))
}
