//! Training objectives and their closed-form gradients.
//!
//! Every term is a mean over the pixels it touches. Terms that depend on the
//! predicted disparity push `dL/dpred` back through the expectation and the
//! softmax: `dL/dS_k = g * p_k * (d_k - pred)`. The entropy term works on
//! log-probabilities directly: `dH/dS_k = -p_k * (log p_k + H)`.

use super::hypotheses::DisparityHypotheses;
use super::model::ModelState;
use super::volume::{backward, forward, Forward, Gradient, StereoInput};
use crate::grid::Grid;
use crate::scalar::{smooth_l1, smooth_l1_grad, Real};

/// A single supervised pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparseTarget<T> {
    pub u: usize,
    pub v: usize,
    pub target: T,
}

pub enum LossSpec<'a, T> {
    /// Mean smooth-L1 to `target` over pixels with a finite target (and
    /// `mask` set, when given). Zero when nothing contributes.
    SmoothL1 {
        target: &'a Grid<T>,
        mask: Option<&'a Grid<bool>>,
        beta: T,
    },
    /// Mean smooth-L1 over explicit entries; repeated pixels count repeatedly.
    Sparse {
        entries: &'a [SparseTarget<T>],
        beta: T,
    },
    /// Mean entropy at `pixels` plus `lambda_l2` times the mean squared
    /// deviation of the whole prediction from `anchor`.
    Entropy {
        pixels: &'a [(usize, usize)],
        anchor: &'a Grid<T>,
        lambda_l2: T,
    },
    Weighted(Vec<(T, LossSpec<'a, T>)>),
}

/// Entropy of one pixel's distribution, computed from its scores.
pub fn pixel_entropy<T: Real>(scores: &[T]) -> T {
    let (lse, _) = log_sum_exp(scores);
    scores
        .iter()
        .map(|&s| {
            let lp = s - lse;
            let p = lp.exp();
            if p == T::zero() {
                T::zero()
            } else {
                -p * lp
            }
        })
        .sum()
}

fn log_sum_exp<T: Real>(scores: &[T]) -> (T, T) {
    let m = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let z: T = scores.iter().map(|&s| (s - m).exp()).sum();
    (m + z.ln(), m)
}

/// Per-pixel entropy map of a forward pass.
pub fn entropy_map<T: Real>(fwd: &Forward<T>) -> Grid<T> {
    let s = &fwd.scores;
    Grid::from_fn(s.width, s.height, |u, v| pixel_entropy(s.at(u, v)))
}

struct Seeds<T> {
    dpred: Grid<T>,
    dscores: Vec<T>,
}

fn accumulate<T: Real>(spec: &LossSpec<'_, T>, fwd: &Forward<T>, scale: T, seeds: &mut Option<Seeds<T>>) -> T {
    let pred = &fwd.pred;
    match spec {
        LossSpec::SmoothL1 { target, mask, beta } => {
            let mut n = 0usize;
            let mut sum = T::zero();
            for (u, v, t) in target.iter_indexed() {
                if t.is_nan() || mask.is_some_and(|m| !m.get(u, v)) {
                    continue;
                }
                n += 1;
                sum = sum + smooth_l1(pred.get(u, v) - t, *beta);
            }
            if n == 0 {
                return T::zero();
            }
            let inv = T::one() / T::from_usize_lossy(n);
            if let Some(sd) = seeds {
                for (u, v, t) in target.iter_indexed() {
                    if t.is_nan() || mask.is_some_and(|m| !m.get(u, v)) {
                        continue;
                    }
                    let g = smooth_l1_grad(pred.get(u, v) - t, *beta) * inv * scale;
                    let i = sd.dpred.index(u, v);
                    sd.dpred.as_mut_slice()[i] = sd.dpred.as_slice()[i] + g;
                }
            }
            sum * inv
        }
        LossSpec::Sparse { entries, beta } => {
            if entries.is_empty() {
                return T::zero();
            }
            let inv = T::one() / T::from_usize_lossy(entries.len());
            let mut sum = T::zero();
            for e in entries.iter() {
                let r = pred.get(e.u, e.v) - e.target;
                sum = sum + smooth_l1(r, *beta);
                if let Some(sd) = seeds {
                    let i = sd.dpred.index(e.u, e.v);
                    sd.dpred.as_mut_slice()[i] = sd.dpred.as_slice()[i] + smooth_l1_grad(r, *beta) * inv * scale;
                }
            }
            sum * inv
        }
        LossSpec::Entropy {
            pixels,
            anchor,
            lambda_l2,
        } => {
            let depth = fwd.scores.depth;
            let mut ent = T::zero();
            if !pixels.is_empty() {
                let inv = T::one() / T::from_usize_lossy(pixels.len());
                for &(u, v) in pixels.iter() {
                    let s = fwd.scores.at(u, v);
                    let h = pixel_entropy(s);
                    ent = ent + h;
                    if let Some(sd) = seeds {
                        let (lse, _) = log_sum_exp(s);
                        let base = (v * fwd.scores.width + u) * depth;
                        for k in 0..depth {
                            let lp = s[k] - lse;
                            let p = lp.exp();
                            if p == T::zero() {
                                continue;
                            }
                            sd.dscores[base + k] = sd.dscores[base + k] - p * (lp + h) * inv * scale;
                        }
                    }
                }
                ent = ent * inv;
            }
            let mut l2 = T::zero();
            if *lambda_l2 != T::zero() {
                let inv = T::one() / T::from_usize_lossy(pred.len());
                for (i, (&p, &a)) in pred.as_slice().iter().zip(anchor.as_slice()).enumerate() {
                    let r = p - a;
                    l2 = l2 + r * r;
                    if let Some(sd) = seeds {
                        sd.dpred.as_mut_slice()[i] =
                            sd.dpred.as_slice()[i] + T::lit(2.0) * *lambda_l2 * r * inv * scale;
                    }
                }
                l2 = *lambda_l2 * l2 * inv;
            }
            ent + l2
        }
        LossSpec::Weighted(terms) => {
            let mut total = T::zero();
            for (w, term) in terms {
                if *w == T::zero() {
                    continue;
                }
                total = total + *w * accumulate(term, fwd, scale * *w, seeds);
            }
            total
        }
    }
}

/// Loss value of an existing forward pass.
pub fn loss_value<T: Real>(spec: &LossSpec<'_, T>, fwd: &Forward<T>) -> T {
    accumulate(spec, fwd, T::one(), &mut None)
}

/// Loss and gradient with respect to the weights and `log tau`.
pub fn loss_gradients<T: Real>(
    state: &ModelState<T>,
    input: &StereoInput<T>,
    hyps: &DisparityHypotheses<T>,
    spec: &LossSpec<'_, T>,
) -> (T, Gradient<T>, Forward<T>) {
    let fwd = forward(input, state, hyps);
    let (loss, grad) = loss_gradients_from(state, input, hyps, spec, &fwd);
    (loss, grad, fwd)
}

pub fn loss_gradients_from<T: Real>(
    state: &ModelState<T>,
    input: &StereoInput<T>,
    hyps: &DisparityHypotheses<T>,
    spec: &LossSpec<'_, T>,
    fwd: &Forward<T>,
) -> (T, Gradient<T>) {
    let (w, h) = (input.width(), input.height());
    let depth = hyps.len();
    let mut seeds = Some(Seeds {
        dpred: Grid::filled(w, h, T::zero()),
        dscores: vec![T::zero(); w * h * depth],
    });
    let loss = accumulate(spec, fwd, T::one(), &mut seeds);
    let Seeds { dpred, mut dscores } = seeds.unwrap();
    let d = hyps.values();
    for (i, &g) in dpred.as_slice().iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        let pred = fwd.pred.as_slice()[i];
        let p = &fwd.prob.data[i * depth..(i + 1) * depth];
        for k in 0..depth {
            dscores[i * depth + k] = dscores[i * depth + k] + g * p[k] * (d[k] - pred);
        }
    }
    (loss, backward(input, state, hyps, fwd, &dscores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stereomodel::descriptor::DescriptorConfig;

    #[test]
    fn entropy_examples() {
        let uniform = vec![0.7f64; 8];
        assert!((pixel_entropy(&uniform) - 8f64.ln()).abs() < 1e-14);
        let saturated = [0.0f64, 1e3, 0.0];
        assert!(pixel_entropy(&saturated) < 1e-300);
        let with_sentinel = [-1e6f64, 2.0, 2.0];
        assert!((pixel_entropy(&with_sentinel) - 2f64.ln()).abs() < 1e-14);
    }

    fn scene() -> (StereoInput<f64>, DisparityHypotheses<f64>) {
        let t = crate::scenegen::ValueNoise::broadband(11);
        let left = Grid::from_fn(16, 6, |u, v| t.sample(u as f64, v as f64));
        let right = Grid::from_fn(16, 6, |x, v| t.sample(x as f64 + 3.0, v as f64));
        (
            StereoInput::new(&left, &right, DescriptorConfig::default()),
            DisparityHypotheses::integer_range(1, 6).unwrap(),
        )
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let (input, hyps) = scene();
        let state: ModelState<f64> = ModelState::random(2, 4, DescriptorConfig::default(), 0.5);
        let fwd = forward(&input, &state, &hyps);
        let target = fwd.pred.clone();
        let spec = LossSpec::SmoothL1 { target: &target, mask: None, beta: 1.0 };
        let (loss, grad, _) = loss_gradients(&state, &input, &hyps, &spec);
        assert_eq!(loss, 0.0);
        assert!(grad.norm() == 0.0);
    }

    #[test]
    fn empty_supports_give_zero() {
        let (input, hyps) = scene();
        let state: ModelState<f64> = ModelState::random(2, 4, DescriptorConfig::default(), 0.5);
        let target = Grid::filled(16, 6, 3.0);
        let mask = Grid::filled(16, 6, false);
        let spec = LossSpec::SmoothL1 { target: &target, mask: Some(&mask), beta: 1.0 };
        let (loss, grad, _) = loss_gradients(&state, &input, &hyps, &spec);
        assert_eq!(loss, 0.0);
        assert_eq!(grad.norm(), 0.0);
        let spec = LossSpec::Sparse { entries: &[], beta: 1.0 };
        assert_eq!(loss_gradients(&state, &input, &hyps, &spec).0, 0.0);
    }

    /// Near a saturated distribution the entropy gradient vanishes.
    #[test]
    fn saturated_entropy_has_tiny_gradient() {
        let (input, hyps) = scene();
        let mut state: ModelState<f64> = ModelState::random(5, 4, DescriptorConfig::default(), 1.0);
        state.log_tau = (1e-4f64).ln();
        let anchor = Grid::filled(16, 6, 0.0);
        let fwd = forward(&input, &state, &hyps);
        let p = fwd.prob.at(10, 3);
        assert!(p.iter().cloned().fold(0.0, f64::max) > 1.0 - 1e-12);
        let pixels = [(10usize, 3usize)];
        let spec = LossSpec::Entropy { pixels: &pixels, anchor: &anchor, lambda_l2: 0.0 };
        let (_, grad, _) = loss_gradients(&state, &input, &hyps, &spec);
        assert!(grad.norm() < 1e-6, "{}", grad.norm());
    }

    #[test]
    fn weighted_combination_is_linear() {
        let (input, hyps) = scene();
        let state: ModelState<f64> = ModelState::random(7, 4, DescriptorConfig::default(), 0.4);
        let target = Grid::filled(16, 6, 3.0);
        let entries = [SparseTarget { u: 9, v: 2, target: 4.5 }];
        let a = LossSpec::SmoothL1 { target: &target, mask: None, beta: 1.0 };
        let b = LossSpec::Sparse { entries: &entries, beta: 1.0 };
        let (la, ga, _) = loss_gradients(&state, &input, &hyps, &a);
        let (lb, gb, _) = loss_gradients(&state, &input, &hyps, &b);
        let both = LossSpec::Weighted(vec![
            (2.0, LossSpec::SmoothL1 { target: &target, mask: None, beta: 1.0 }),
            (0.5, LossSpec::Sparse { entries: &entries, beta: 1.0 }),
        ]);
        let (l, g, _) = loss_gradients(&state, &input, &hyps, &both);
        assert!((l - (2.0 * la + 0.5 * lb)).abs() < 1e-12);
        for ((x, y), z) in g.flat().iter().zip(ga.flat()).zip(gb.flat()) {
            assert!((x - (2.0 * y + 0.5 * z)).abs() < 1e-10);
        }
    }
}
