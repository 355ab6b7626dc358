//! Cost volume, softmax over hypotheses and expectation regression, with the
//! matching reverse pass.
//!
//! `S(u, v, k) = <W phi_L(u, v), W phi_R(u - d_k, v)> / tau`. Right-image
//! embeddings at fractional columns are interpolated linearly. Rows are
//! independent, so both passes split over rows and reduce in row order.

use rayon::prelude::*;

use super::descriptor::{DescriptorConfig, DescriptorField};
use super::hypotheses::DisparityHypotheses;
use super::model::ModelState;
use crate::grid::Grid;
use crate::scalar::Real;
use crate::scenegen::SceneSample;

/// Score assigned to hypotheses whose match column falls left of the image.
pub const INVALID_SCORE: f64 = -1e6;

/// Precomputed descriptors of a stereo pair.
#[derive(Clone, Debug)]
pub struct StereoInput<T> {
    pub left: DescriptorField<T>,
    pub right: DescriptorField<T>,
}

impl<T: Real> StereoInput<T> {
    pub fn new(left: &Grid<T>, right: &Grid<T>, cfg: DescriptorConfig) -> Self {
        Self {
            left: DescriptorField::compute(left, cfg),
            right: DescriptorField::compute(right, cfg),
        }
    }

    pub fn from_sample(sample: &SceneSample<T>, cfg: DescriptorConfig) -> Self {
        Self::new(&sample.left, &sample.right, cfg)
    }

    pub fn width(&self) -> usize {
        self.left.width
    }

    pub fn height(&self) -> usize {
        self.left.height
    }
}

/// `H x W x D` array, hypothesis index fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    pub width: usize,
    pub height: usize,
    pub depth: usize,
    pub data: Vec<T>,
}

/// Per-pixel distribution over the hypothesis set.
pub type ProbabilityVolume<T> = Volume<T>;
pub type ScoreVolume<T> = Volume<T>;

impl<T: Real> Volume<T> {
    pub fn zeros(width: usize, height: usize, depth: usize) -> Self {
        Self {
            width,
            height,
            depth,
            data: vec![T::zero(); width * height * depth],
        }
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> &[T] {
        let i = (v * self.width + u) * self.depth;
        &self.data[i..i + self.depth]
    }

    #[inline]
    pub fn at_mut(&mut self, u: usize, v: usize) -> &mut [T] {
        let i = (v * self.width + u) * self.depth;
        &mut self.data[i..i + self.depth]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.depth)
    }

    /// Slice `k` as a map, e.g. for PFM export.
    pub fn slice(&self, k: usize) -> Grid<T> {
        Grid::from_fn(self.width, self.height, |u, v| self.at(u, v)[k])
    }
}

/// Where hypothesis `k` samples the right row: column `u - shift` with
/// weight `1 - t` and `u - shift + 1` with weight `t`; valid for `u >= min_u`.
#[derive(Clone, Copy, Debug)]
struct Tap<T> {
    shift: usize,
    t: T,
    min_u: usize,
}

fn taps<T: Real>(hyps: &DisparityHypotheses<T>) -> Vec<Tap<T>> {
    hyps.values()
        .iter()
        .map(|&d| {
            let fl = d.floor();
            let frac = d - fl;
            let fl = fl.to_usize().expect("positive hypothesis");
            if frac == T::zero() {
                Tap { shift: fl, t: T::zero(), min_u: fl }
            } else {
                Tap { shift: fl + 1, t: T::one() - frac, min_u: fl + 1 }
            }
        })
        .collect()
}

fn embed_all<T: Real>(state: &ModelState<T>, field: &DescriptorField<T>) -> Vec<T> {
    let e = state.embed_dim;
    let f = field.dim;
    let w = field.width;
    let mut out = vec![T::zero(); field.width * field.height * e];
    out.par_chunks_mut(w * e).enumerate().for_each(|(v, row)| {
        for u in 0..w {
            let phi = field.at(u, v);
            let dst = &mut row[u * e..(u + 1) * e];
            for (i, slot) in dst.iter_mut().enumerate() {
                let wi = &state.weights[i * f..(i + 1) * f];
                *slot = wi.iter().zip(phi).map(|(&a, &b)| a * b).sum();
            }
        }
    });
    out
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Cached intermediate results of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward<T> {
    pub emb_left: Vec<T>,
    pub emb_right: Vec<T>,
    pub scores: ScoreVolume<T>,
    pub prob: ProbabilityVolume<T>,
    pub pred: Grid<T>,
}

fn scores_from_embeddings<T: Real>(
    emb_l: &[T],
    emb_r: &[T],
    width: usize,
    height: usize,
    e: usize,
    tau: T,
    hyps: &DisparityHypotheses<T>,
) -> ScoreVolume<T> {
    let taps = taps(hyps);
    let depth = hyps.len();
    let mut vol = Volume::zeros(width, height, depth);
    let invalid = T::lit(INVALID_SCORE);
    vol.data
        .par_chunks_mut(width * depth)
        .enumerate()
        .for_each(|(v, row)| {
            let rl = &emb_l[v * width * e..(v + 1) * width * e];
            let rr = &emb_r[v * width * e..(v + 1) * width * e];
            for u in 0..width {
                let el = &rl[u * e..(u + 1) * e];
                let out = &mut row[u * depth..(u + 1) * depth];
                for (k, tap) in taps.iter().enumerate() {
                    if u < tap.min_u {
                        out[k] = invalid;
                        continue;
                    }
                    let x0 = u - tap.shift;
                    let mut s = dot(el, &rr[x0 * e..(x0 + 1) * e]);
                    if tap.t != T::zero() {
                        let s1 = dot(el, &rr[(x0 + 1) * e..(x0 + 2) * e]);
                        s = s * (T::one() - tap.t) + s1 * tap.t;
                    }
                    out[k] = s / tau;
                }
            }
        });
    vol
}

/// Correlation scores of every pixel against every hypothesis.
pub fn score_volume<T: Real>(
    input: &StereoInput<T>,
    state: &ModelState<T>,
    hyps: &DisparityHypotheses<T>,
) -> ScoreVolume<T> {
    let emb_l = embed_all(state, &input.left);
    let emb_r = embed_all(state, &input.right);
    scores_from_embeddings(&emb_l, &emb_r, input.width(), input.height(), state.embed_dim, state.tau(), hyps)
}

/// Max-subtracted softmax along the hypothesis axis.
pub fn softmax_over_hypotheses<T: Real>(scores: &ScoreVolume<T>) -> ProbabilityVolume<T> {
    let mut out = scores.clone();
    out.data.par_chunks_mut(scores.depth).for_each(|px| {
        let m = px.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for s in px.iter_mut() {
            *s = (*s - m).exp();
            z = z + *s;
        }
        for s in px.iter_mut() {
            *s = *s / z;
        }
    });
    out
}

/// Expected disparity under each pixel's distribution.
pub fn predict_disparity<T: Real>(prob: &ProbabilityVolume<T>, hyps: &DisparityHypotheses<T>) -> Grid<T> {
    let d = hyps.values();
    let data = prob.pixels().map(|p| dot(p, d)).collect();
    Grid::from_vec(prob.width, prob.height, data).expect("volume shape")
}

pub fn forward<T: Real>(
    input: &StereoInput<T>,
    state: &ModelState<T>,
    hyps: &DisparityHypotheses<T>,
) -> Forward<T> {
    let emb_left = embed_all(state, &input.left);
    let emb_right = embed_all(state, &input.right);
    let scores = scores_from_embeddings(
        &emb_left,
        &emb_right,
        input.width(),
        input.height(),
        state.embed_dim,
        state.tau(),
        hyps,
    );
    let prob = softmax_over_hypotheses(&scores);
    let pred = predict_disparity(&prob, hyps);
    Forward {
        emb_left,
        emb_right,
        scores,
        prob,
        pred,
    }
}

/// Gradient with respect to the weights and `log tau`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient<T> {
    pub weights: Vec<T>,
    pub log_tau: T,
}

impl<T: Real> Gradient<T> {
    pub fn zeros_like(state: &ModelState<T>) -> Self {
        Self {
            weights: vec![T::zero(); state.weights.len()],
            log_tau: T::zero(),
        }
    }

    /// Derivative with respect to `tau` itself.
    pub fn tau(&self, state: &ModelState<T>) -> T {
        self.log_tau / state.tau()
    }

    pub fn flat(&self) -> Vec<T> {
        let mut g = self.weights.clone();
        g.push(self.log_tau);
        g
    }

    pub fn add_scaled(&mut self, other: &Gradient<T>, scale: T) {
        for (a, &b) in self.weights.iter_mut().zip(&other.weights) {
            *a = *a + b * scale;
        }
        self.log_tau = self.log_tau + other.log_tau * scale;
    }

    pub fn norm(&self) -> T {
        (self.weights.iter().map(|&w| w * w).sum::<T>() + self.log_tau * self.log_tau).sqrt()
    }
}

/// Chains `dL/dS` (same layout as the score volume) back to the parameters.
/// Pixels whose score gradient is identically zero are skipped.
pub fn backward<T: Real>(
    input: &StereoInput<T>,
    state: &ModelState<T>,
    hyps: &DisparityHypotheses<T>,
    fwd: &Forward<T>,
    dscores: &[T],
) -> Gradient<T> {
    let (width, height) = (input.width(), input.height());
    let e = state.embed_dim;
    let f = state.feature_dim();
    let depth = hyps.len();
    let tau = state.tau();
    let taps = taps(hyps);

    let rows: Vec<Gradient<T>> = (0..height)
        .into_par_iter()
        .map(|v| {
            let mut g = Gradient::zeros_like(state);
            let rl = &fwd.emb_left[v * width * e..(v + 1) * width * e];
            let rr = &fwd.emb_right[v * width * e..(v + 1) * width * e];
            let mut d_er = vec![T::zero(); width * e];
            let mut d_el = vec![T::zero(); e];
            for u in 0..width {
                let base = (v * width + u) * depth;
                let ds = &dscores[base..base + depth];
                if ds.iter().all(|&x| x == T::zero()) {
                    continue;
                }
                let s = fwd.scores.at(u, v);
                let el = &rl[u * e..(u + 1) * e];
                d_el.iter_mut().for_each(|x| *x = T::zero());
                for (k, tap) in taps.iter().enumerate() {
                    if u < tap.min_u || ds[k] == T::zero() {
                        continue;
                    }
                    g.log_tau = g.log_tau - ds[k] * s[k];
                    let draw = ds[k] / tau;
                    let x0 = u - tap.shift;
                    let w0 = T::one() - tap.t;
                    for i in 0..e {
                        let mut er = rr[x0 * e + i] * w0;
                        if tap.t != T::zero() {
                            er = er + rr[(x0 + 1) * e + i] * tap.t;
                        }
                        d_el[i] = d_el[i] + draw * er;
                        d_er[x0 * e + i] = d_er[x0 * e + i] + draw * w0 * el[i];
                        if tap.t != T::zero() {
                            d_er[(x0 + 1) * e + i] = d_er[(x0 + 1) * e + i] + draw * tap.t * el[i];
                        }
                    }
                }
                let phi = input.left.at(u, v);
                for i in 0..e {
                    if d_el[i] == T::zero() {
                        continue;
                    }
                    let gw = &mut g.weights[i * f..(i + 1) * f];
                    for (slot, &p) in gw.iter_mut().zip(phi) {
                        *slot = *slot + d_el[i] * p;
                    }
                }
            }
            for x in 0..width {
                let de = &d_er[x * e..(x + 1) * e];
                if de.iter().all(|&z| z == T::zero()) {
                    continue;
                }
                let phi = input.right.at(x, v);
                for i in 0..e {
                    let gw = &mut g.weights[i * f..(i + 1) * f];
                    for (slot, &p) in gw.iter_mut().zip(phi) {
                        *slot = *slot + de[i] * p;
                    }
                }
            }
            g
        })
        .collect();

    let mut total = Gradient::zeros_like(state);
    for g in &rows {
        total.add_scaled(g, T::one());
    }
    total
}
