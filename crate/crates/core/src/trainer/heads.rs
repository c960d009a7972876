//! Trainable heads over frozen embeddings.
//!
//! All parameters live in one flat vector so the optimizer and the
//! checkpoint format see the same layout:
//!
//! | block        | shape              |
//! |--------------|--------------------|
//! | text proj    | `d x d`, row-major |
//! | image proj   | `d x d`, row-major |
//! | MLP layer 1  | `h x d` weights, then `h` biases |
//! | MLP layer 2  | `h` weights, then 1 bias |
//!
//! The perceptron computes `w2 . softplus(W1 (sqrt(d) x) + b1) + b2`.

use std::ops::Range;

use crate::embedding::{dot, l2_norm, Embedding, MIN_NORM};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    dim: usize,
    hidden: usize,
    data: Vec<f64>,
}

pub fn param_count(dim: usize, hidden: usize) -> usize {
    2 * dim * dim + (dim + 1) * hidden + (hidden + 1)
}

impl HeadParams {
    /// All-zero parameters.
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            dim,
            hidden,
            data: vec![0.0; param_count(dim, hidden)],
        }
    }

    pub fn from_flat(dim: usize, hidden: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != param_count(dim, hidden) {
            return Err(Error::DimensionMismatch {
                expected: param_count(dim, hidden),
                found: data.len(),
            });
        }
        Ok(Self { dim, hidden, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn text_proj_range(&self) -> Range<usize> {
        0..self.dim * self.dim
    }

    pub fn image_proj_range(&self) -> Range<usize> {
        let dd = self.dim * self.dim;
        dd..2 * dd
    }

    /// Both projection matrices.
    pub fn ict_range(&self) -> Range<usize> {
        0..2 * self.dim * self.dim
    }

    /// The whole perceptron.
    pub fn hp_range(&self) -> Range<usize> {
        2 * self.dim * self.dim..self.data.len()
    }

    fn w1_range(&self) -> Range<usize> {
        let start = self.hp_range().start;
        start..start + self.hidden * self.dim
    }

    fn b1_range(&self) -> Range<usize> {
        let start = self.w1_range().end;
        start..start + self.hidden
    }

    fn w2_range(&self) -> Range<usize> {
        let start = self.b1_range().end;
        start..start + self.hidden
    }

    fn b2_index(&self) -> usize {
        self.data.len() - 1
    }

    pub fn text_proj(&self) -> &[f64] {
        &self.data[self.text_proj_range()]
    }

    pub fn image_proj(&self) -> &[f64] {
        &self.data[self.image_proj_range()]
    }

    /// Replaces the perceptron block with the one from `other`.
    pub fn with_hp_from(&self, other: &HeadParams) -> Result<HeadParams> {
        if other.dim != self.dim || other.hidden != self.hidden {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        let mut out = self.clone();
        let r = self.hp_range();
        out.data[r.clone()].copy_from_slice(&other.data[r]);
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Default standard deviation of the projection noise, `0.01 / sqrt(d)`.
pub fn default_noise_scale(dim: usize) -> f64 {
    0.01 / (dim as f64).sqrt()
}

pub fn init_heads(dim: usize, hidden: usize, rng: &mut SeededRng) -> Result<HeadParams> {
    init_heads_with_noise(dim, hidden, default_noise_scale(dim), rng)
}

/// Identity projections plus Gaussian noise of the given scale; perceptron
/// weights uniform in `+-1/sqrt(fan_in)`; zero biases.
pub fn init_heads_with_noise(
    dim: usize,
    hidden: usize,
    noise: f64,
    rng: &mut SeededRng,
) -> Result<HeadParams> {
    if dim < crate::dataset::MIN_DIM {
        return Err(Error::DimensionTooSmall(dim, crate::dataset::MIN_DIM));
    }
    if hidden == 0 {
        return Err(Error::InvalidConfig("hidden_width must be positive".into()));
    }
    let mut p = HeadParams::zeros(dim, hidden);
    for r in [p.text_proj_range(), p.image_proj_range()] {
        let block = &mut p.data[r];
        for i in 0..dim {
            for j in 0..dim {
                let eye = if i == j { 1.0 } else { 0.0 };
                block[i * dim + j] = eye + noise * rng.normal();
            }
        }
    }
    let b1 = 1.0 / (dim as f64).sqrt();
    let w1 = p.w1_range();
    for x in &mut p.data[w1] {
        *x = rng.uniform_range(-b1, b1);
    }
    let b2 = 1.0 / (hidden as f64).sqrt();
    let w2 = p.w2_range();
    for x in &mut p.data[w2] {
        *x = rng.uniform_range(-b2, b2);
    }
    Ok(p)
}

pub(crate) fn matvec(m: &[f64], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    m.chunks_exact(d).map(|row| dot(row, x)).collect()
}

/// A projected and re-normalized vector, kept with its pre-normalization
/// norm for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Projected {
    pub unit: Vec<f64>,
    pub norm: f64,
}

pub(crate) fn project(matrix: &[f64], x: &[f64]) -> Result<Projected> {
    let mut u = matvec(matrix, x);
    let norm = l2_norm(&u);
    if !(norm > MIN_NORM) {
        return Err(Error::DegenerateProjection);
    }
    for v in u.iter_mut() {
        *v /= norm;
    }
    Ok(Projected { unit: u, norm })
}

impl Projected {
    /// Maps a gradient with respect to the unit vector back to the raw
    /// projection: `(g - (g . u) u) / |raw|`.
    pub fn backprop(&self, g_unit: &[f64]) -> Vec<f64> {
        let gu = dot(g_unit, &self.unit);
        g_unit
            .iter()
            .zip(&self.unit)
            .map(|(g, u)| (g - gu * u) / self.norm)
            .collect()
    }
}

/// `dot(normalize(W_t text), normalize(W_i image)) / tau`.
pub fn forward_ict(
    params: &HeadParams,
    text: &Embedding,
    image: &Embedding,
    tau: f64,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::NonPositiveTemperature(tau));
    }
    for e in [text, image] {
        if e.dim() != params.dim {
            return Err(Error::DimensionMismatch {
                expected: params.dim,
                found: e.dim(),
            });
        }
    }
    let t = project(params.text_proj(), text.as_slice())?;
    let i = project(params.image_proj(), image.as_slice())?;
    Ok(dot(&t.unit, &i.unit) / tau)
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Hidden activations of the perceptron for one input.
#[derive(Debug, Clone)]
pub(crate) struct HpTrace {
    pub hidden: Vec<f64>,
    /// Derivative of each hidden activation with respect to its input.
    pub slope: Vec<f64>,
    pub raw: f64,
}

/// Unit-norm inputs have per-coordinate RMS `1/sqrt(d)`; the perceptron sees
/// them multiplied by `sqrt(d)` so fan-in initialization yields order-one
/// pre-activations.
fn input_scale(dim: usize) -> f64 {
    (dim as f64).sqrt()
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn hp_trace(params: &HeadParams, x: &[f64]) -> HpTrace {
    let w1 = &params.data[params.w1_range()];
    let b1 = &params.data[params.b1_range()];
    let w2 = &params.data[params.w2_range()];
    let sc = input_scale(params.dim);
    let pre: Vec<f64> = w1
        .chunks_exact(params.dim)
        .zip(b1)
        .map(|(row, b)| sc * dot(row, x) + b)
        .collect();
    let hidden: Vec<f64> = pre.iter().map(|&a| softplus(a)).collect();
    let slope = pre.iter().map(|&a| logistic(a)).collect();
    let raw = dot(w2, &hidden) + params.data[params.b2_index()];
    HpTrace { hidden, slope, raw }
}

/// Accumulates `g * d raw / d theta` into `grad` (full-length).
pub(crate) fn hp_backprop(
    params: &HeadParams,
    x: &[f64],
    trace: &HpTrace,
    g: f64,
    grad: &mut [f64],
) {
    if g == 0.0 {
        return;
    }
    let d = params.dim;
    let sc = input_scale(d);
    let w2r = params.w2_range();
    let w1r = params.w1_range();
    let b1r = params.b1_range();
    for (k, (h, slope)) in trace.hidden.iter().zip(&trace.slope).enumerate() {
        grad[w2r.start + k] += g * h;
        let da = g * params.data[w2r.start + k] * slope;
        grad[b1r.start + k] += da;
        let row = &mut grad[w1r.start + k * d..w1r.start + (k + 1) * d];
        for (gw, xi) in row.iter_mut().zip(x) {
            *gw += sc * da * xi;
        }
    }
    grad[params.b2_index()] += g;
}

/// Image-only preference score: `(raw, logistic(raw))`.
pub fn forward_hp(params: &HeadParams, image: &Embedding) -> Result<(f64, f64)> {
    if image.dim() != params.dim {
        return Err(Error::DimensionMismatch {
            expected: params.dim,
            found: image.dim(),
        });
    }
    let raw = hp_trace(params, image.as_slice()).raw;
    Ok((raw, logistic(raw)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_heads(4, 3, &mut SeededRng::new(7)).unwrap();
        let b = init_heads(4, 3, &mut SeededRng::new(7)).unwrap();
        let bits = |p: &HeadParams| p.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn zero_noise_gives_identity_projections() {
        let p = init_heads_with_noise(5, 2, 0.0, &mut SeededRng::new(1)).unwrap();
        for block in [p.text_proj(), p.image_proj()] {
            for i in 0..5 {
                for j in 0..5 {
                    assert_eq!(block[i * 5 + j], if i == j { 1.0 } else { 0.0 });
                }
            }
        }
        // biases are zero
        assert_eq!(p.as_slice()[p.b1_range()], [0.0, 0.0]);
        assert_eq!(p.as_slice()[p.b2_index()], 0.0);
    }

    #[test]
    fn parameter_count() {
        assert_eq!(param_count(64, 128), 16_641);
        assert_eq!(HeadParams::zeros(64, 128).len(), 16_641);
        let p = HeadParams::zeros(3, 4);
        assert_eq!(p.hp_range().len(), 4 * 3 + 4 + 4 + 1);
    }

    #[test]
    fn ict_forward_examples() {
        let p = init_heads_with_noise(3, 2, 0.0, &mut SeededRng::new(0)).unwrap();
        let a = emb(&[1.0, 2.0, 2.0]);
        let b = emb(&[2.0, -1.0, 0.0]);
        assert!((forward_ict(&p, &a, &a, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(forward_ict(&p, &a, &b, 1.0).unwrap().abs() < 1e-15);
        assert!((forward_ict(&p, &a, &a, 0.5).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ict_forward_degenerate_projection() {
        let p = HeadParams::zeros(3, 2);
        let a = emb(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            forward_ict(&p, &a, &a, 1.0),
            Err(Error::DegenerateProjection)
        ));
    }

    #[test]
    fn hp_forward_examples() {
        let p = HeadParams::zeros(3, 2);
        let (raw, sq) = forward_hp(&p, &emb(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(raw, 0.0);
        assert_eq!(sq, 0.5);
        assert!((logistic(1.2528) - 0.7778).abs() < 1e-4);
        assert!(logistic(800.0) == 1.0 && logistic(-800.0) == 0.0);
    }

    #[test]
    fn with_hp_from_swaps_only_perceptron() {
        let a = init_heads(3, 2, &mut SeededRng::new(1)).unwrap();
        let b = init_heads(3, 2, &mut SeededRng::new(2)).unwrap();
        let c = a.with_hp_from(&b).unwrap();
        assert_eq!(c.as_slice()[c.ict_range()], a.as_slice()[a.ict_range()]);
        assert_eq!(c.as_slice()[c.hp_range()], b.as_slice()[b.hp_range()]);
    }
}
