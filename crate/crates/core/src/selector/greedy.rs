//! Greedy pixel choosing with per-view surrogate tuning.

use super::surrogate::{entropy_tune, smoothed_mask_for};
use super::touches::{Strategy, Touch, TouchSet};
use super::{SelectView, SelectionConfig};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;
use crate::stereomodel::{DisparityHypotheses, ModelState};

/// Everything needed to re-verify one selection step.
#[derive(Clone, Debug)]
pub struct StepRecord<T> {
    pub view_index: usize,
    pub step_in_view: usize,
    /// Model the smoothed mask was computed from.
    pub state: ModelState<T>,
    pub touch: Touch,
    pub mask_value: T,
    /// Set when the view's mask was zero on every candidate and the
    /// least-confident candidate was taken instead.
    pub fallback: bool,
    /// Mean entropy at this view's touches entering and leaving the tune
    /// that followed the pick (absent when no tune ran).
    pub tune_entropy: Option<(Vec<T>, Vec<T>)>,
    pub tune_converged: bool,
}

#[derive(Clone, Debug)]
pub struct GreedyOutcome<T> {
    pub touches: TouchSet,
    pub steps: Vec<StepRecord<T>>,
}

impl<T: Real> GreedyOutcome<T> {
    pub fn fallbacks(&self) -> usize {
        self.steps.iter().filter(|s| s.fallback).count()
    }
}

/// First maximiser in row-major order among allowed pixels.
fn argmax_row_major<T: Real>(values: &Grid<T>, allowed: impl Fn(usize, usize) -> bool) -> Option<(usize, usize, T)> {
    let mut best: Option<(usize, usize, T)> = None;
    for (u, v, x) in values.iter_indexed() {
        if allowed(u, v) && best.map_or(true, |(_, _, b)| x > b) {
            best = Some((u, v, x));
        }
    }
    best
}

/// Picks the next pixel for one view under `state`.
fn pick<T: Real>(
    state: &ModelState<T>,
    view: &SelectView<'_, T>,
    hyps: &DisparityHypotheses<T>,
    cfg: &SelectionConfig,
    taken: &[(usize, usize)],
) -> Result<(usize, usize, T, bool)> {
    let maps = smoothed_mask_for(state, &view.input, hyps, cfg);
    let allowed = |u: usize, v: usize| view.candidates.get(u, v) && !taken.contains(&(u, v));
    let (u, v, x) = argmax_row_major(&maps.smoothed, allowed).ok_or(Error::Shortfall {
        view: format!("scene {} view {}", view.sample.scene_id, view.sample.view_id),
        needed: taken.len() + 1,
        available: taken.len(),
    })?;
    if x > T::zero() {
        return Ok((u, v, x, false));
    }
    let neg = maps.confidence.map(|c| -c);
    let (u, v, _) = argmax_row_major(&neg, allowed).expect("candidate exists");
    Ok((u, v, x, true))
}

/// Re-runs the pick of a recorded step and reports whether it agrees.
pub fn replay_step<T: Real>(
    record: &StepRecord<T>,
    view: &SelectView<'_, T>,
    hyps: &DisparityHypotheses<T>,
    cfg: &SelectionConfig,
    earlier_in_view: &[(usize, usize)],
) -> Result<bool> {
    let (u, v, _, _) = pick(&record.state, view, hyps, cfg, earlier_in_view)?;
    Ok((u, v) == (record.touch.u, record.touch.v))
}

/// Selects `cfg.n` touches in each view, tuning the surrogate after each pick
/// and carrying it into the next view.
pub fn greedy_select<T: Real>(
    pretrained: &ModelState<T>,
    views: &[SelectView<'_, T>],
    hyps: &DisparityHypotheses<T>,
    cfg: &SelectionConfig,
) -> Result<GreedyOutcome<T>> {
    cfg.validate()?;
    if views.is_empty() {
        return Err(Error::config("selection needs at least one view"));
    }
    let mut state = pretrained.clone();
    let mut touches = TouchSet::default();
    let mut steps = Vec::new();
    for (k, view) in views.iter().enumerate() {
        let mut taken: Vec<(usize, usize)> = Vec::with_capacity(cfg.n);
        for i in 0..cfg.n {
            let (u, v, value, fallback) = pick(&state, view, hyps, cfg, &taken)?;
            let touch = Touch {
                scene_id: view.sample.scene_id,
                view_id: view.sample.view_id,
                u,
                v,
            };
            touches.push(touch, Strategy::Utility);
            taken.push((u, v));
            let mut record = StepRecord {
                view_index: k,
                step_in_view: i,
                state: state.clone(),
                touch,
                mask_value: value,
                fallback,
                tune_entropy: None,
                tune_converged: false,
            };
            let last = k + 1 == views.len() && i + 1 == cfg.n;
            if !last {
                let out = entropy_tune(&state, &view.input, hyps, &taken, cfg)?;
                record.tune_converged = out.converged;
                record.tune_entropy = Some((out.entry_entropy, out.exit_entropy));
                state = out.state;
            }
            steps.push(record);
        }
    }
    Ok(GreedyOutcome { touches, steps })
}
