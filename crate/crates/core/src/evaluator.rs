//! Triplet preference accuracy, composed rewards, and Bradley-Terry
//! diagnostics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::TripletRecord;
use crate::error::{Error, Result};
use crate::geometry::cosine_similarity;
use crate::labeler::LabeledRecord;
use crate::trainer::heads::{forward_hp, forward_ict, logistic, HeadParams};

/// Scores closer than this count as a tie and earn half credit.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// The three preference pairs of a triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PreferencePair {
    TwoOverOne,
    ThreeOverTwo,
    ThreeOverOne,
}

impl PreferencePair {
    pub const ALL: [PreferencePair; 3] = [
        PreferencePair::TwoOverOne,
        PreferencePair::ThreeOverTwo,
        PreferencePair::ThreeOverOne,
    ];

    /// `(preferred, other)` slot indices.
    pub fn slots(self) -> (usize, usize) {
        match self {
            PreferencePair::TwoOverOne => (1, 0),
            PreferencePair::ThreeOverTwo => (2, 1),
            PreferencePair::ThreeOverOne => (2, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceOutcome {
    pub pair: PreferencePair,
    pub credit: f64,
}

pub fn pair_outcome(scores: &[f64; 3], pair: PreferencePair) -> PreferenceOutcome {
    let (hi, lo) = pair.slots();
    let diff = scores[hi] - scores[lo];
    let credit = if diff.abs() <= TIE_TOLERANCE {
        0.5
    } else if diff > 0.0 {
        1.0
    } else {
        0.0
    };
    PreferenceOutcome { pair, credit }
}

/// Per-pair accuracies in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub acc_21: f64,
    pub acc_32: f64,
    pub acc_31: f64,
    pub mean: f64,
}

impl AccuracyTable {
    fn from_percent(acc_21: f64, acc_32: f64, acc_31: f64) -> Self {
        Self {
            acc_21,
            acc_32,
            acc_31,
            mean: (acc_21 + acc_32 + acc_31) / 3.0,
        }
    }
}

/// Accuracy over precomputed `[s1, s2, s3]` triplet scores.
pub fn accuracy_from_scores(scores: &[[f64; 3]]) -> Result<AccuracyTable> {
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut credit = [0.0f64; 3];
    for s in scores {
        for (c, pair) in credit.iter_mut().zip(PreferencePair::ALL) {
            *c += pair_outcome(s, pair).credit;
        }
    }
    let pct = |c: f64| 100.0 * c / scores.len() as f64;
    Ok(AccuracyTable::from_percent(
        pct(credit[0]),
        pct(credit[1]),
        pct(credit[2]),
    ))
}

/// Maps a triplet to scores for `[img1, img2, img3]`.
pub trait TripletScorer {
    fn score_triplet(&self, record: &TripletRecord) -> Result<[f64; 3]>;
}

impl<F> TripletScorer for F
where
    F: Fn(&TripletRecord) -> Result<[f64; 3]>,
{
    fn score_triplet(&self, record: &TripletRecord) -> Result<[f64; 3]> {
        self(record)
    }
}

pub fn score_all(scorer: &impl TripletScorer, records: &[TripletRecord]) -> Result<Vec<[f64; 3]>> {
    records.iter().map(|r| scorer.score_triplet(r)).collect()
}

pub fn pairwise_accuracy(
    scorer: &impl TripletScorer,
    records: &[TripletRecord],
) -> Result<AccuracyTable> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    accuracy_from_scores(&score_all(scorer, records)?)
}

/// Raw cosine similarity of each image with the basic prompt.
pub struct CosineScorer;

impl TripletScorer for CosineScorer {
    fn score_triplet(&self, r: &TripletRecord) -> Result<[f64; 3]> {
        let c = |img| cosine_similarity(img, &r.prompt_easy).map(|s| s.value());
        Ok([c(&r.img1)?, c(&r.img2)?, c(&r.img3)?])
    }
}

/// Two-tower ICT score of each image against the basic prompt.
pub struct IctScorer<'a> {
    pub params: &'a HeadParams,
    pub tau: f64,
}

impl TripletScorer for IctScorer<'_> {
    fn score_triplet(&self, r: &TripletRecord) -> Result<[f64; 3]> {
        let s = |img| forward_ict(self.params, &r.prompt_easy, img, self.tau);
        Ok([s(&r.img1)?, s(&r.img2)?, s(&r.img3)?])
    }
}

/// Raw (pre-logistic) image-only HP score.
pub struct HpScorer<'a> {
    pub params: &'a HeadParams,
}

impl TripletScorer for HpScorer<'_> {
    fn score_triplet(&self, r: &TripletRecord) -> Result<[f64; 3]> {
        let s = |img| forward_hp(self.params, img).map(|(raw, _)| raw);
        Ok([s(&r.img1)?, s(&r.img2)?, s(&r.img3)?])
    }
}

/// Per-image product of the clamped ICT score and the squashed HP score.
pub struct CombinedScorer<'a> {
    pub ict: IctScorer<'a>,
    pub hp: HpScorer<'a>,
}

impl TripletScorer for CombinedScorer<'_> {
    fn score_triplet(&self, r: &TripletRecord) -> Result<[f64; 3]> {
        let rewards = self.rewards(r)?;
        Ok(rewards.map(|x| x.combined))
    }
}

impl CombinedScorer<'_> {
    pub fn rewards(&self, r: &TripletRecord) -> Result<[RewardRecord; 3]> {
        let ict = self.ict.score_triplet(r)?;
        let hp = self.hp.score_triplet(r)?;
        Ok([0, 1, 2].map(|k| combined_reward(ict[k], logistic(hp[k]))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub ict: f64,
    pub hp: f64,
    pub combined: f64,
}

/// `clamp(ict, 0, 1) * hp`. Either factor at zero zeroes the reward.
pub fn combined_reward(ict_score: f64, hp_squashed: f64) -> RewardRecord {
    let ict = ict_score.clamp(0.0, 1.0);
    let hp = hp_squashed.clamp(0.0, 1.0);
    RewardRecord {
        ict,
        hp,
        combined: ict * hp,
    }
}

/// Field-wise mean; `combined` is therefore the mean of per-sample products.
pub fn mean_reward(records: &[RewardRecord]) -> Result<RewardRecord> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = records.len() as f64;
    let (mut i, mut h, mut c) = (0.0, 0.0, 0.0);
    for r in records {
        i += r.ict;
        h += r.hp;
        c += r.combined;
    }
    Ok(RewardRecord {
        ict: i / n,
        hp: h / n,
        combined: c / n,
    })
}

/// Bradley-Terry probability that the item scored `s_j` beats the one
/// scored `s_i`.
pub fn bt_pair_probability(s_j: f64, s_i: f64) -> f64 {
    logistic(s_j - s_i)
}

/// `ln(logistic(x))`, stable for large `|x|`.
fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Sum over triplets of `ln P(I2 > I1) + ln P(I3 > I2)`.
pub fn bt_log_likelihood_from_scores(scores: &[[f64; 3]]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(scores
        .iter()
        .map(|s| log_logistic(s[1] - s[0]) + log_logistic(s[2] - s[1]))
        .sum())
}

pub fn bt_log_likelihood(scorer: &impl TripletScorer, records: &[TripletRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    bt_log_likelihood_from_scores(&score_all(scorer, records)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerAccuracies {
    pub ground_truth: AccuracyTable,
    pub cosine: AccuracyTable,
    pub ict: AccuracyTable,
    pub hp: AccuracyTable,
    pub ict_hp: AccuracyTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSummary {
    pub img1: RewardRecord,
    pub img2: RewardRecord,
    pub img3: RewardRecord,
    pub all: RewardRecord,
    /// `all.ict * all.hp`, reported next to the mean of products.
    pub product_of_means: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config_hash: String,
    pub config: RunConfig,
    pub count: usize,
    pub accuracy: ScorerAccuracies,
    pub rewards: RewardSummary,
    /// Bradley-Terry log-likelihood of the HP raw scores.
    pub bt_log_likelihood: f64,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per scorer, percentages with two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scorer,acc_21,acc_32,acc_31,mean\n");
        let a = &self.accuracy;
        for (name, t) in [
            ("ground_truth", &a.ground_truth),
            ("cosine", &a.cosine),
            ("ict", &a.ict),
            ("hp", &a.hp),
            ("ict_hp", &a.ict_hp),
        ] {
            let _ = writeln!(
                out,
                "{name},{:.2},{:.2},{:.2},{:.2}",
                t.acc_21, t.acc_32, t.acc_31, t.mean
            );
        }
        out
    }
}

pub fn evaluate_run(
    ict_params: &HeadParams,
    hp_params: &HeadParams,
    dataset: &[LabeledRecord],
    config: &RunConfig,
) -> Result<EvaluationReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let records: Vec<TripletRecord> = dataset.iter().map(|l| l.record.clone()).collect();
    let truth: Vec<[f64; 3]> = dataset.iter().map(|l| l.labels.basic()).collect();

    let ict = IctScorer {
        params: ict_params,
        tau: config.tau,
    };
    let hp = HpScorer { params: hp_params };
    let hp_scores = score_all(&hp, &records)?;
    let combined = CombinedScorer {
        ict: IctScorer {
            params: ict_params,
            tau: config.tau,
        },
        hp: HpScorer { params: hp_params },
    };

    let mut per_slot: [Vec<RewardRecord>; 3] = Default::default();
    let mut combined_scores = Vec::with_capacity(records.len());
    for r in &records {
        let rw = combined.rewards(r)?;
        combined_scores.push(rw.map(|x| x.combined));
        for (slot, x) in per_slot.iter_mut().zip(rw) {
            slot.push(x);
        }
    }
    let all: Vec<RewardRecord> = per_slot.iter().flatten().copied().collect();
    let all_mean = mean_reward(&all)?;

    Ok(EvaluationReport {
        config_hash: config.hash(),
        config: config.clone(),
        count: records.len(),
        accuracy: ScorerAccuracies {
            ground_truth: accuracy_from_scores(&truth)?,
            cosine: pairwise_accuracy(&CosineScorer, &records)?,
            ict: pairwise_accuracy(&ict, &records)?,
            hp: accuracy_from_scores(&hp_scores)?,
            ict_hp: accuracy_from_scores(&combined_scores)?,
        },
        rewards: RewardSummary {
            img1: mean_reward(&per_slot[0])?,
            img2: mean_reward(&per_slot[1])?,
            img3: mean_reward(&per_slot[2])?,
            all: all_mean,
            product_of_means: all_mean.ict * all_mean.hp,
        },
        bt_log_likelihood: bt_log_likelihood_from_scores(&hp_scores)?,
    })
}
