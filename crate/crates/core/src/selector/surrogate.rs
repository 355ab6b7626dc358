//! Surrogate utility and entropy-based self-supervised tuning.

use super::confidence::{confidence_map, smooth_mask, unconfident_mask};
use super::SelectionConfig;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;
use crate::stereomodel::{
    forward, loss_gradients, pixel_entropy, Adam, DisparityHypotheses, Forward, LossSpec, ModelState, Role,
    StereoInput,
};

/// Intermediate maps behind one view's surrogate utility.
#[derive(Clone, Debug)]
pub struct MaskMaps<T> {
    pub forward: Forward<T>,
    pub confidence: Grid<T>,
    pub mask: Grid<bool>,
    pub smoothed: Grid<T>,
}

pub fn smoothed_mask_for<T: Real>(
    state: &ModelState<T>,
    input: &StereoInput<T>,
    hyps: &DisparityHypotheses<T>,
    cfg: &SelectionConfig,
) -> MaskMaps<T> {
    let fwd = forward(input, state, hyps);
    let confidence = confidence_map(&fwd.prob, &fwd.pred, hyps, T::lit(cfg.epsilon));
    // Columns with no valid hypothesis carry no matching evidence at all; they
    // are left out of the mask so their blur does not leak into candidates.
    let first_valid = hyps.min().ceil().to_f64_lossy().max(0.0) as usize;
    let mut mask = unconfident_mask(&confidence, T::lit(cfg.c1));
    for v in 0..mask.height() {
        for u in 0..first_valid.min(mask.width()) {
            mask.set(u, v, false);
        }
    }
    let smoothed = smooth_mask(&mask, cfg.sigma_u);
    MaskMaps {
        forward: fwd,
        confidence,
        mask,
        smoothed,
    }
}

/// Negated total of the smoothed unconfident mask over all views.
pub fn surrogate_utility<T: Real>(
    state: &ModelState<T>,
    inputs: &[&StereoInput<T>],
    hyps: &DisparityHypotheses<T>,
    cfg: &SelectionConfig,
) -> T {
    let total: T = inputs
        .iter()
        .map(|input| smoothed_mask_for(state, input, hyps, cfg).smoothed.as_slice().iter().copied().sum::<T>())
        .sum();
    -total
}

#[derive(Clone, Debug)]
pub struct TuneOutcome<T> {
    /// Lowest-loss iterate whose mean touched-pixel entropy did not rise.
    pub state: ModelState<T>,
    pub steps: usize,
    pub converged: bool,
    pub entry_entropy: Vec<T>,
    pub exit_entropy: Vec<T>,
    pub loss_history: Vec<f64>,
}

impl<T: Real> TuneOutcome<T> {
    fn mean(v: &[T]) -> T {
        v.iter().copied().sum::<T>() / T::from_usize_lossy(v.len())
    }

    pub fn mean_entropy_non_increasing(&self, tol: f64) -> bool {
        (Self::mean(&self.exit_entropy) - Self::mean(&self.entry_entropy)).to_f64_lossy() <= tol
    }

    pub fn every_entropy_non_increasing(&self, tol: f64) -> bool {
        self.entry_entropy
            .iter()
            .zip(&self.exit_entropy)
            .all(|(&a, &b)| (b - a).to_f64_lossy() <= tol)
    }
}

fn touched_entropy<T: Real>(fwd: &Forward<T>, pixels: &[(usize, usize)]) -> Vec<T> {
    pixels.iter().map(|&(u, v)| pixel_entropy(fwd.scores.at(u, v))).collect()
}

/// Minimises mean entropy at `pixels` plus an L2 pull towards the entering
/// prediction.
pub fn entropy_tune<T: Real>(
    state: &ModelState<T>,
    input: &StereoInput<T>,
    hyps: &DisparityHypotheses<T>,
    pixels: &[(usize, usize)],
    cfg: &SelectionConfig,
) -> Result<TuneOutcome<T>> {
    if pixels.is_empty() {
        return Err(Error::Domain("entropy tuning needs at least one touched pixel".into()));
    }
    if let Some(&(u, v)) = pixels.iter().find(|&&(u, v)| u >= input.width() || v >= input.height()) {
        return Err(Error::Domain(format!("touched pixel ({u}, {v}) lies outside the image")));
    }
    let entry_fwd = forward(input, state, hyps);
    let anchor = entry_fwd.pred.clone();
    let entry_entropy = touched_entropy(&entry_fwd, pixels);
    let spec = LossSpec::Entropy {
        pixels,
        anchor: &anchor,
        lambda_l2: T::lit(cfg.lambda_l2),
    };

    let mut current = state.clone();
    let mut adam = Adam::new(cfg.surrogate_adam(), current.num_params());
    let mut best: Option<(T, ModelState<T>, Vec<T>)> = None;
    let mut history = Vec::new();
    let mut prev: Option<T> = None;
    let mut converged = false;
    let mut steps = 0;
    loop {
        let (loss, grad, fwd) = loss_gradients(&current, input, hyps, &spec);
        history.push(loss.to_f64_lossy());
        let ent = touched_entropy(&fwd, pixels);
        // Only iterates that leave every touched pixel at or below its entering
        // entropy may be returned; the entering model always qualifies.
        let admissible = ent
            .iter()
            .zip(&entry_entropy)
            .all(|(&e, &e0)| (e - e0).to_f64_lossy() <= 1e-6);
        if admissible && loss.is_finite() && best.as_ref().map_or(true, |(b, _, _)| loss < *b) {
            best = Some((loss, current.clone(), ent));
        }
        if prev.is_some_and(|p: T| (p - loss).abs().to_f64_lossy() < cfg.surrogate_tol) {
            converged = true;
            break;
        }
        if steps == cfg.surrogate_max_steps {
            break;
        }
        let mut params = current.params();
        adam.adam_step(&mut params, &grad.flat());
        current.set_params(&params);
        prev = Some(loss);
        steps += 1;
    }
    let (_, best_state, exit_entropy) = best.unwrap_or_else(|| (T::zero(), state.clone(), entry_entropy.clone()));
    Ok(TuneOutcome {
        state: best_state.with_role(Role::Surrogate),
        steps,
        converged,
        entry_entropy,
        exit_entropy,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::ValueNoise;
    use crate::stereomodel::DescriptorConfig;

    fn fixture() -> (StereoInput<f64>, DisparityHypotheses<f64>, ModelState<f64>) {
        let t = ValueNoise::broadband(5);
        let left = Grid::from_fn(40, 12, |u, v| t.sample(u as f64, v as f64));
        let right = Grid::from_fn(40, 12, |x, v| t.sample(x as f64 + 6.0, v as f64));
        let input = StereoInput::new(&left, &right, DescriptorConfig::default());
        let hyps = DisparityHypotheses::integer_range(2, 12).unwrap();
        let state = ModelState::random(3, 8, DescriptorConfig::default(), 0.5);
        (input, hyps, state)
    }

    fn cfg() -> SelectionConfig {
        SelectionConfig {
            surrogate_lr: 0.02,
            surrogate_max_steps: 30,
            c1: 0.9,
            epsilon: 2.0,
            sigma_u: 2.0,
            ..SelectionConfig::desk()
        }
    }

    #[test]
    fn single_pixel_tuning_lowers_entropy() {
        let (input, hyps, state) = fixture();
        let out = entropy_tune(&state, &input, &hyps, &[(25, 6)], &cfg()).unwrap();
        assert!(out.exit_entropy[0] < out.entry_entropy[0]);
        assert_eq!(out.state.role, Role::Surrogate);
        assert!(out.mean_entropy_non_increasing(1e-6));
    }

    #[test]
    fn rejects_empty_and_outside_pixels() {
        let (input, hyps, state) = fixture();
        assert!(entropy_tune(&state, &input, &hyps, &[], &cfg()).is_err());
        assert!(entropy_tune(&state, &input, &hyps, &[(40, 0)], &cfg()).is_err());
    }

    #[test]
    fn utility_is_negated_mask_total() {
        let (input, hyps, state) = fixture();
        let c = cfg();
        let maps = smoothed_mask_for(&state, &input, &hyps, &c);
        let brute: f64 = maps.smoothed.as_slice().iter().sum();
        let u = surrogate_utility(&state, &[&input, &input], &hyps, &c);
        assert!((u + 2.0 * brute).abs() < 1e-9);
        assert!(u <= 0.0);
    }

    #[test]
    fn saturated_pixel_leaves_state_unchanged() {
        let (input, hyps, mut state) = fixture();
        // a tiny temperature saturates every pixel
        state.log_tau = (1e-6f64).ln();
        let out = entropy_tune(&state, &input, &hyps, &[(30, 5)], &cfg()).unwrap();
        assert!(out.entry_entropy[0] < 1e-6);
        let drift: f64 = out
            .state
            .params()
            .iter()
            .zip(state.params())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(out.loss_history[0] < 1e-6);
        assert!(drift < 0.05, "drift {drift}");
    }
}
