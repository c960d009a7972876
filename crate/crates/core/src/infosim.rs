//! Analytic model of why cosine-style scores penalize detailed images.
//!
//! Image information splits into a text-aligned part `I(v;t)` and a surplus
//! `I(v|t)`. A cosine-style score behaves like
//! `I(v;t) / sqrt(I(t) * (I(v;t) + I(v|t)))`: it rises while alignment grows
//! and falls once alignment saturates and only the surplus keeps growing.
//! Thresholding at `theta* = I* / sqrt((I* + I_max) * I(t))` gives every
//! saturated pair a containment score of exactly 1.
//!
//! [`synth_triplets`] realizes the same effect geometrically: the preferred
//! image carries an extra component in a dedicated "detail" subspace that
//! the prompt does not touch, which lowers its raw cosine.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{validate_dataset, TripletRecord, ValidatedDataset};
use crate::embedding::{dot, l2_norm, Embedding};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoState {
    /// `I(t)`
    pub i_t: f64,
    /// `I(v;t)`
    pub i_vt: f64,
    /// `I(v|t)`
    pub i_v_extra: f64,
    /// Saturation level `I*(v,t)`.
    pub i_star: f64,
    /// Largest surplus `I_max(v|t)` among aligned pairs.
    pub i_extra_max: f64,
}

impl InfoState {
    pub fn new(i_t: f64, i_vt: f64, i_v_extra: f64, i_star: f64, i_extra_max: f64) -> Result<Self> {
        let s = Self {
            i_t,
            i_vt,
            i_v_extra,
            i_star,
            i_extra_max,
        };
        s.validate()?;
        Ok(s)
    }

    /// A state saturating at `I* = I(t)`.
    pub fn aligned_to_text(i_t: f64, i_vt: f64, i_v_extra: f64) -> Result<Self> {
        Self::new(i_t, i_vt, i_v_extra, i_t, i_v_extra)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.i_t,
            self.i_vt,
            self.i_v_extra,
            self.i_star,
            self.i_extra_max,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidState("non-finite quantity".into()));
        }
        if !(self.i_t > 0.0 && self.i_star > 0.0) {
            return Err(Error::InvalidState("I(t) and I* must be positive".into()));
        }
        if self.i_vt < 0.0 || self.i_v_extra < 0.0 || self.i_extra_max < 0.0 {
            return Err(Error::InvalidState("information cannot be negative".into()));
        }
        if self.i_vt > self.i_t || self.i_vt > self.i_star || self.i_star > self.i_t {
            return Err(Error::InvalidState("require I(v;t) <= I* <= I(t)".into()));
        }
        Ok(())
    }

    /// Total image information `I(v) = I(v;t) + I(v|t)`.
    pub fn i_v(&self) -> f64 {
        self.i_vt + self.i_v_extra
    }
}

/// `I(v;t) / sqrt(I(t) * I(v))`.
pub fn clip_proxy(state: &InfoState) -> Result<f64> {
    let i_v = state.i_v();
    if !(i_v > 0.0) {
        return Err(Error::DegenerateState);
    }
    if !(state.i_t > 0.0) {
        return Err(Error::InvalidState("I(t) must be positive".into()));
    }
    Ok(state.i_vt / (state.i_t * i_v).sqrt())
}

/// `I* / sqrt((I* + I_max) * I(t))`: the smallest cosine-style score any
/// saturated pair can receive.
pub fn critical_threshold(i_star: f64, i_extra_max: f64, i_t: f64) -> Result<f64> {
    if !(i_star > 0.0 && i_t > 0.0 && i_extra_max >= 0.0) {
        return Err(Error::InvalidState(
            "need I* > 0, I(t) > 0, I_max >= 0".into(),
        ));
    }
    Ok(i_star / ((i_star + i_extra_max) * i_t).sqrt())
}

/// Information-theoretic ICT, `I(v;t) / I(t)`. Kept alongside the
/// thresholded operational score; the two are different normalizations.
pub fn ict_information_ratio(state: &InfoState) -> f64 {
    state.i_vt / state.i_t
}

/// Bounded monotone preference proxy `x / (x + 1)` of the surplus.
pub fn hp_proxy(i_v_extra: f64) -> f64 {
    let x = i_v_extra.max(0.0);
    x / (x + 1.0)
}

/// How aligned information grows with total image information.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum SaturationModel {
    /// `I(v;t) = min(I(v), I*)`.
    #[default]
    Hard,
    /// `I(v;t) = (I(v)^-p + I*^-p)^(-1/p)`, approaching `Hard` as `p` grows.
    Smooth { sharpness: f64 },
}

impl SaturationModel {
    pub fn aligned(&self, i_v: f64, i_star: f64) -> f64 {
        match *self {
            SaturationModel::Hard => i_v.min(i_star),
            SaturationModel::Smooth { sharpness: p } => {
                (i_v.powf(-p) + i_star.powf(-p)).powf(-1.0 / p)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub i_v: f64,
    pub clip_proxy: f64,
    pub ict_proxy: f64,
}

pub fn simulate_information_curve(i_t: f64, sweep: &[f64], theta: f64) -> Result<Vec<CurvePoint>> {
    simulate_information_curve_with(i_t, sweep, theta, SaturationModel::Hard)
}

/// Sweeps total image information at a fixed prompt with `I* = I(t)`.
pub fn simulate_information_curve_with(
    i_t: f64,
    sweep: &[f64],
    theta: f64,
    model: SaturationModel,
) -> Result<Vec<CurvePoint>> {
    if !(i_t > 0.0 && i_t.is_finite()) {
        return Err(Error::InvalidState(format!(
            "I(t) must be positive, got {i_t}"
        )));
    }
    if !(theta > 0.0) {
        return Err(Error::NonPositiveThreshold(theta));
    }
    if let SaturationModel::Smooth { sharpness } = model {
        if !(sharpness > 0.0) {
            return Err(Error::InvalidState("sharpness must be positive".into()));
        }
    }
    sweep
        .iter()
        .map(|&i_v| {
            if !(i_v > 0.0 && i_v.is_finite()) {
                return Err(Error::InvalidState(format!(
                    "sweep value {i_v} must be positive"
                )));
            }
            let i_vt = model.aligned(i_v, i_t);
            let state = InfoState {
                i_t,
                i_vt,
                i_v_extra: (i_v - i_vt).max(0.0),
                i_star: i_t,
                i_extra_max: (i_v - i_vt).max(0.0),
            };
            let clip = clip_proxy(&state)?;
            Ok(CurvePoint {
                i_v,
                clip_proxy: clip,
                ict_proxy: (clip / theta).clamp(0.0, 1.0),
            })
        })
        .collect()
}

/// CSV with `# key=value` comment lines, then `i_v,clip_proxy,ict_proxy`.
pub fn curve_csv(points: &[CurvePoint], comments: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in comments {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str("i_v,clip_proxy,ict_proxy\n");
    for p in points {
        let _ = writeln!(out, "{:.6},{:.6},{:.6}", p.i_v, p.clip_proxy, p.ict_proxy);
    }
    out
}

/// Norm of the non-detail perturbation on the middle image.
const MIDDLE_SEMANTIC_OFFSET: f64 = 0.3;
/// Detail carried by the middle image, as a fraction of rho.
const MIDDLE_DETAIL_FRACTION: f64 = 1.0 / 3.0;
/// Range of the semantic offset on the least preferred image.
const LOW_SEMANTIC_OFFSET: (f64, f64) = (0.8, 1.8);
/// Rotation of the refined prompt toward the preferred image's detail.
const REFINED_TILT: f64 = 0.25;

/// Number of trailing coordinates reserved for detail.
pub fn detail_dims(d: usize) -> usize {
    (d / 4).max(1)
}

fn random_unit(rng: &mut SeededRng, d: usize, coords: std::ops::Range<usize>) -> Vec<f64> {
    loop {
        let mut v = vec![0.0; d];
        for x in &mut v[coords.clone()] {
            *x = rng.normal();
        }
        let n = l2_norm(&v);
        if n > 1e-9 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

/// Random unit vector in `coords` orthogonal to the unit vector `to`.
fn random_orthogonal(
    rng: &mut SeededRng,
    d: usize,
    coords: std::ops::Range<usize>,
    to: &[f64],
) -> Vec<f64> {
    loop {
        let mut v = random_unit(rng, d, coords.clone());
        let p = dot(&v, to);
        v.iter_mut().zip(to).for_each(|(x, t)| *x -= p * t);
        let n = l2_norm(&v);
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

fn combine(parts: &[(f64, &[f64])], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for (c, v) in parts {
        for (o, x) in out.iter_mut().zip(*v) {
            *o += c * x;
        }
    }
    out
}

/// Synthetic triplets in which the preferred image carries extra detail.
///
/// Coordinates split into a semantic block and a trailing detail block of
/// `d/4` dimensions. Per sample:
///
/// * `prompt_easy`: random unit vector in the semantic block.
/// * `img3 = norm(P + rho u3 + noise)`, `u3` a random detail direction and
///   `rho` uniform in `rho_range`, so `cos(img3, P) = 1/sqrt(1 + rho^2)`
///   before noise.
/// * `img2 = norm(P + 0.3 v2 + (rho/3) u2 + noise)`: mostly aligned, a
///   little detail.
/// * `img1 = norm(P + g v1 + noise)` with `g` in `[0.8, 1.8]` and no detail.
/// * `prompt_ref = norm(P + 0.25 u3)`.
///
/// `noise` is the expected norm of an isotropic Gaussian perturbation.
pub fn synth_triplets(
    n: usize,
    d: usize,
    rho_range: (f64, f64),
    noise: f64,
    rng: &mut SeededRng,
) -> Result<ValidatedDataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if d < 4 {
        return Err(Error::DimensionTooSmall(d, 4));
    }
    let (lo, hi) = rho_range;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
        return Err(Error::InvalidConfig(format!("bad rho range ({lo}, {hi})")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "noise must be non-negative, got {noise}"
        )));
    }

    let k = detail_dims(d);
    let semantic = 0..d - k;
    let detail = d - k..d;
    let sigma = noise / (d as f64).sqrt();
    let jitter =
        |rng: &mut SeededRng| -> Vec<f64> { (0..d).map(|_| sigma * rng.normal()).collect() };

    let mut records = Vec::with_capacity(n);
    for idx in 0..n {
        let p = random_unit(rng, d, semantic.clone());
        let u3 = random_unit(rng, d, detail.clone());
        let u2 = random_unit(rng, d, detail.clone());
        let v2 = random_orthogonal(rng, d, semantic.clone(), &p);
        let v1 = random_orthogonal(rng, d, semantic.clone(), &p);
        let rho = rng.uniform_range(lo, hi);
        let g = rng.uniform_range(LOW_SEMANTIC_OFFSET.0, LOW_SEMANTIC_OFFSET.1);
        let (n3, n2, n1) = (jitter(rng), jitter(rng), jitter(rng));

        let img3 = combine(&[(1.0, &p), (rho, &u3), (1.0, &n3)], d);
        let img2 = combine(
            &[
                (1.0, &p),
                (MIDDLE_SEMANTIC_OFFSET, &v2),
                (MIDDLE_DETAIL_FRACTION * rho, &u2),
                (1.0, &n2),
            ],
            d,
        );
        let img1 = combine(&[(1.0, &p), (g, &v1), (1.0, &n1)], d);
        let p_ref = combine(&[(1.0, &p), (REFINED_TILT, &u3)], d);

        records.push(TripletRecord {
            id: format!("syn-{idx:06}"),
            img1: Embedding::new(img1)?,
            img2: Embedding::new(img2)?,
            img3: Embedding::new(img3)?,
            prompt_easy: Embedding::new(p)?,
            prompt_ref: Embedding::new(p_ref)?,
            meta: BTreeMap::new(),
        });
    }
    validate_dataset(records)
}
