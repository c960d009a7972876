//! Batch losses and their gradients with respect to the flat head
//! parameters.

use crate::config::{NegativeImages, RunConfig};
use crate::dataset::TripletRecord;
use crate::embedding::dot;
use crate::error::Result;
use crate::labeler::LabeledRecord;
use crate::objectives::{ict_loss, margin_loss, negative_loss, LossReport, ScoreMatrix};

use super::heads::{hp_backprop, hp_trace, project, HeadParams, Projected};

/// Coefficients of the regression and negative terms in the ICT objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IctWeights {
    pub regression: f64,
    pub negatives: f64,
}

impl IctWeights {
    pub fn training(config: &RunConfig) -> Self {
        Self {
            regression: 1.0,
            negatives: config.lambda,
        }
    }
}

/// Per-sample mean of `regression * L_ict + negatives * L_neg` over a batch.
///
/// Both reported terms are divided by the batch size, so `l_total` equals
/// `l_ict + lambda * l_neg` under the training weights.
pub fn ict_objective(
    params: &HeadParams,
    batch: &[&LabeledRecord],
    config: &RunConfig,
    weights: IctWeights,
) -> Result<LossReport> {
    let n = batch.len();
    let d = params.dim();
    let tau = config.tau;
    let scale = 1.0 / n.max(1) as f64;

    // [easy, refined] per sample, [img1, img2, img3] per sample
    let mut texts: Vec<[Projected; 2]> = Vec::with_capacity(n);
    let mut images: Vec<[Projected; 3]> = Vec::with_capacity(n);
    for l in batch {
        let r = &l.record;
        let tp = params.text_proj();
        let ip = params.image_proj();
        texts.push([
            project(tp, r.prompt_easy.as_slice())?,
            project(tp, r.prompt_ref.as_slice())?,
        ]);
        images.push([
            project(ip, r.img1.as_slice())?,
            project(ip, r.img2.as_slice())?,
            project(ip, r.img3.as_slice())?,
        ]);
    }

    let mut g_text = vec![[vec![0.0; d], vec![0.0; d]]; n];
    let mut g_image = vec![[vec![0.0; d], vec![0.0; d], vec![0.0; d]]; n];
    // d score / d text_unit = image_unit / tau and vice versa
    let mut push = |s: usize, k: usize, t: usize, p: usize, g: f64| {
        if g == 0.0 {
            return;
        }
        let c = g / tau;
        for ((gt, gi), (tu, iu)) in g_text[t][p]
            .iter_mut()
            .zip(g_image[s][k].iter_mut())
            .zip(texts[t][p].unit.iter().zip(&images[s][k].unit))
        {
            *gt += c * iu;
            *gi += c * tu;
        }
    };

    let mut l_ict = 0.0;
    for (s, l) in batch.iter().enumerate() {
        let mut pred = [0.0; 6];
        for k in 0..3 {
            pred[k] = dot(&images[s][k].unit, &texts[s][0].unit) / tau;
            pred[3 + k] = dot(&images[s][k].unit, &texts[s][1].unit) / tau;
        }
        let (loss, g) = ict_loss(&pred, &l.labels);
        l_ict += loss;
        let w = weights.regression * scale;
        for k in 0..3 {
            push(s, k, s, 0, w * g[k]);
            push(s, k, s, 1, w * g[3 + k]);
        }
    }

    let slots: &[usize] = match config.negatives {
        NegativeImages::All => &[0, 1, 2],
        NegativeImages::I3Only => &[2],
    };
    let mut l_neg = 0.0;
    if n >= 2 {
        for &k in slots {
            let mut m = ScoreMatrix::zeros(n);
            for (s, img) in images.iter().enumerate() {
                for (t, txt) in texts.iter().enumerate() {
                    let idx = m.idx(s, t);
                    m.easy[idx] = dot(&img[k].unit, &txt[0].unit) / tau;
                    m.refined[idx] = dot(&img[k].unit, &txt[1].unit) / tau;
                }
            }
            let (loss, gm) = negative_loss(&m, config.alpha, config.beta);
            l_neg += loss;
            let w = weights.negatives * scale;
            for s in 0..n {
                for t in 0..n {
                    if s == t {
                        continue;
                    }
                    let idx = gm.idx(s, t);
                    push(s, k, t, 0, w * gm.easy[idx]);
                    push(s, k, t, 1, w * gm.refined[idx]);
                }
            }
        }
    } else if n == 1 {
        log::warn!("batch of 1 sample has no in-batch negatives; negative loss is 0");
    }

    let mut gradient = vec![0.0; params.len()];
    let tr = params.text_proj_range();
    let ir = params.image_proj_range();
    for (s, l) in batch.iter().enumerate() {
        let r = &l.record;
        for (p, input) in [&r.prompt_easy, &r.prompt_ref].into_iter().enumerate() {
            let g_raw = texts[s][p].backprop(&g_text[s][p]);
            outer_add(&mut gradient[tr.clone()], &g_raw, input.as_slice());
        }
        for (k, input) in r.images().into_iter().enumerate() {
            let g_raw = images[s][k].backprop(&g_image[s][k]);
            outer_add(&mut gradient[ir.clone()], &g_raw, input.as_slice());
        }
    }

    let l_ict = l_ict * scale;
    let l_neg = l_neg * scale;
    Ok(LossReport {
        l_ict,
        l_neg,
        l_margin: 0.0,
        l_total: weights.regression * l_ict + weights.negatives * l_neg,
        gradient,
    })
}

fn outer_add(block: &mut [f64], left: &[f64], right: &[f64]) {
    let d = right.len();
    for (row, &a) in block.chunks_exact_mut(d).zip(left) {
        if a == 0.0 {
            continue;
        }
        for (x, &b) in row.iter_mut().zip(right) {
            *x += a * b;
        }
    }
}

/// HP objective output together with the hinge activity of every triplet,
/// used to detect kink crossings in gradient checks.
#[derive(Debug, Clone)]
pub struct MarginBatch {
    pub report: LossReport,
    pub active: Vec<[bool; 2]>,
    pub scores: Vec<[f64; 3]>,
}

/// Per-sample mean ranking loss on raw perceptron outputs.
pub fn hp_objective(params: &HeadParams, batch: &[&TripletRecord], margin: f64) -> MarginBatch {
    let n = batch.len();
    let scale = 1.0 / n.max(1) as f64;
    let mut gradient = vec![0.0; params.len()];
    let mut total = 0.0;
    let mut active = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for r in batch {
        let traces = r.images().map(|img| hp_trace(params, img.as_slice()));
        let s = [traces[0].raw, traces[1].raw, traces[2].raw];
        let term = margin_loss(s[0], s[1], s[2], margin);
        total += term.loss;
        for (k, img) in r.images().into_iter().enumerate() {
            hp_backprop(
                params,
                img.as_slice(),
                &traces[k],
                term.grad[k] * scale,
                &mut gradient,
            );
        }
        active.push(term.active);
        scores.push(s);
    }
    let l_margin = total * scale;
    MarginBatch {
        report: LossReport {
            l_ict: 0.0,
            l_neg: 0.0,
            l_margin,
            l_total: l_margin,
            gradient,
        },
        active,
        scores,
    }
}
