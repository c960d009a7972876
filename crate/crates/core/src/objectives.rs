//! Training objectives with hand-derived gradients.
//!
//! * ICT regression: squared error of the six triplet scores against labels.
//! * In-batch negatives: unpaired image/prompt scores regressed to zero,
//!   each weighted by a sigmoid that fades out likely false negatives.
//! * HP ranking: two hinge terms enforcing `s3 - s2 >= m` and `s2 - s1 >= m`.

use serde::{Deserialize, Serialize};

use crate::dataset::IctLabelSet;

/// Exponents beyond this magnitude saturate the sigmoid weight to 0 or 1.
const EXP_LIMIT: f64 = 700.0;

/// Aggregated loss terms for one batch plus the gradient with respect to the
/// flattened head parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_ict: f64,
    pub l_neg: f64,
    pub l_margin: f64,
    pub l_total: f64,
    #[serde(skip)]
    pub gradient: Vec<f64>,
}

/// Returns the loss and its gradient with respect to the predictions, both
/// laid out as `[y1e, y2e, y3e, y1r, y2r, y3r]`.
pub fn ict_loss(pred: &[f64; 6], labels: &IctLabelSet) -> (f64, [f64; 6]) {
    let target = labels.as_array();
    let mut loss = 0.0;
    let mut grad = [0.0; 6];
    for k in 0..6 {
        let r = target[k] - pred[k];
        loss += r * r;
        grad[k] = -2.0 * r;
    }
    (loss, grad)
}

/// Sigmoid weight `1 / (1 + exp(alpha * (|y| - beta)))`.
pub fn negative_weight(y: f64, alpha: f64, beta: f64) -> f64 {
    let z = alpha * (y.abs() - beta);
    if z > EXP_LIMIT {
        0.0
    } else if z < -EXP_LIMIT {
        1.0
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// `d w / d y`.
pub fn negative_weight_derivative(y: f64, alpha: f64, beta: f64) -> f64 {
    let w = negative_weight(y, alpha, beta);
    let sign = if y > 0.0 {
        1.0
    } else if y < 0.0 {
        -1.0
    } else {
        0.0
    };
    -alpha * sign * w * (1.0 - w)
}

/// `w(y) * y^2` and its derivative, differentiating through the weight.
pub fn weighted_square(y: f64, alpha: f64, beta: f64) -> (f64, f64) {
    let w = negative_weight(y, alpha, beta);
    let dw = negative_weight_derivative(y, alpha, beta);
    (w * y * y, dw * y * y + 2.0 * w * y)
}

/// Scores of every image (of one fixed slot) in a batch against every basic
/// and refined prompt. Entry `(i, j)` pairs the image of sample `i` with the
/// prompt of sample `j`; the diagonal holds the positive pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    pub easy: Vec<f64>,
    pub refined: Vec<f64>,
}

impl ScoreMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            easy: vec![0.0; n * n],
            refined: vec![0.0; n * n],
        }
    }

    /// Builds from row-major `n x n` matrices.
    pub fn from_rows(easy: Vec<f64>, refined: Vec<f64>) -> Option<Self> {
        let n = (easy.len() as f64).sqrt().round() as usize;
        (n * n == easy.len() && refined.len() == easy.len()).then_some(Self { n, easy, refined })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }
}

/// Weighted in-batch negative loss and its gradient (diagonal entries get
/// zero gradient). Batches of one sample have no negatives and contribute 0.
pub fn negative_loss(scores: &ScoreMatrix, alpha: f64, beta: f64) -> (f64, ScoreMatrix) {
    let n = scores.n();
    let mut grad = ScoreMatrix::zeros(n);
    if n < 2 {
        log::warn!("batch of {n} sample(s) has no in-batch negatives; negative loss is 0");
        return (0.0, grad);
    }
    let mut loss = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let k = scores.idx(i, j);
            let (le, ge) = weighted_square(scores.easy[k], alpha, beta);
            let (lr, gr) = weighted_square(scores.refined[k], alpha, beta);
            loss += le + lr;
            grad.easy[k] = ge;
            grad.refined[k] = gr;
        }
    }
    (loss, grad)
}

pub fn total_loss(l_ict: f64, l_neg: f64, lambda: f64) -> f64 {
    l_ict + lambda * l_neg
}

/// Result of the two-hinge ranking loss on one triplet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginTerm {
    pub loss: f64,
    pub grad: [f64; 3],
    /// Whether the `2 over 1` and `3 over 2` hinges are active.
    pub active: [bool; 2],
    /// Signed hinge arguments `m - (s2 - s1)` and `m - (s3 - s2)`; zero is
    /// the kink.
    pub hinge_args: [f64; 2],
}

/// `max(0, m - (s2 - s1)) + max(0, m - (s3 - s2))` on raw scores. The
/// subgradient at a kink is 0.
pub fn margin_loss(s1: f64, s2: f64, s3: f64, m: f64) -> MarginTerm {
    let h21 = m - (s2 - s1);
    let h32 = m - (s3 - s2);
    let mut grad = [0.0; 3];
    let mut loss = 0.0;
    let a21 = h21 > 0.0;
    let a32 = h32 > 0.0;
    if a21 {
        loss += h21;
        grad[0] += 1.0;
        grad[1] -= 1.0;
    }
    if a32 {
        loss += h32;
        grad[1] += 1.0;
        grad[2] -= 1.0;
    }
    MarginTerm {
        loss,
        grad,
        active: [a21, a32],
        hinge_args: [h21, h32],
    }
}
