//! Touch-point selection: confidence maps, the smoothed unconfident mask,
//! entropy-based surrogate tuning, greedy selection and baseline strategies.

mod baselines;
mod confidence;
mod greedy;
mod surrogate;
mod touches;

pub use baselines::{baseline_confidence, baseline_oracle_center, baseline_random};
pub use confidence::{confidence_map, gaussian_kernel, smooth_mask, unconfident_mask};
pub use greedy::{greedy_select, replay_step, GreedyOutcome, StepRecord};
pub use surrogate::{entropy_tune, smoothed_mask_for, surrogate_utility, MaskMaps, TuneOutcome};
pub use touches::{Strategy, Touch, TouchRecord, TouchSet};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kv::{read_bool, KvConfig};
use crate::scalar::Real;
use crate::scenegen::{Material, SceneSample};
use crate::stereomodel::{AdamConfig, DescriptorConfig, DisparityHypotheses, StereoInput};

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionConfig {
    pub epsilon: f64,
    pub c1: f64,
    pub sigma_u: f64,
    pub lambda_l2: f64,
    pub surrogate_lr: f64,
    pub surrogate_tol: f64,
    pub surrogate_max_steps: usize,
    /// Touches per view.
    pub n: usize,
    pub min_spacing: f64,
    pub boundary_exclusion: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SelectionConfig {
    pub fn paper() -> Self {
        Self {
            epsilon: 5.0,
            c1: 0.999,
            sigma_u: 6.5,
            lambda_l2: 0.01,
            surrogate_lr: 1e-5,
            surrogate_tol: 1e-6,
            surrogate_max_steps: 200,
            n: 5,
            min_spacing: 20.0,
            boundary_exclusion: true,
        }
    }

    pub fn desk() -> Self {
        Self {
            epsilon: 3.0,
            lambda_l2: 0.01,
            surrogate_lr: 0.01,
            surrogate_max_steps: 25,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::config("select.epsilon must be positive"));
        }
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return Err(Error::config("select.c1 must lie in (0, 1)"));
        }
        if !(self.sigma_u > 0.0) {
            return Err(Error::config("select.sigma_u must be positive"));
        }
        if self.n == 0 {
            return Err(Error::config("select.n must be at least 1"));
        }
        if !(self.lambda_l2 >= 0.0 && self.surrogate_lr >= 0.0 && self.surrogate_tol >= 0.0) {
            return Err(Error::config("select: lambda_l2, surrogate_lr and surrogate_tol must be non-negative"));
        }
        Ok(())
    }

    pub fn surrogate_adam(&self) -> AdamConfig {
        AdamConfig::with_lr(self.surrogate_lr)
    }

    pub fn apply_kv(&mut self, kv: &KvConfig) -> Result<()> {
        kv.read_into("select.epsilon", &mut self.epsilon)?;
        kv.read_into("select.c1", &mut self.c1)?;
        kv.read_into("select.sigma_u", &mut self.sigma_u)?;
        kv.read_into("select.lambda_l2", &mut self.lambda_l2)?;
        kv.read_into("select.surrogate_lr", &mut self.surrogate_lr)?;
        kv.read_into("select.surrogate_tol", &mut self.surrogate_tol)?;
        kv.read_into("select.surrogate_max_steps", &mut self.surrogate_max_steps)?;
        kv.read_into("select.n", &mut self.n)?;
        kv.read_into("select.min_spacing", &mut self.min_spacing)?;
        read_bool(kv, "select.boundary_exclusion", &mut self.boundary_exclusion)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("select.epsilon", self.epsilon);
        kv.set("select.c1", self.c1);
        kv.set("select.sigma_u", self.sigma_u);
        kv.set("select.lambda_l2", self.lambda_l2);
        kv.set("select.surrogate_lr", self.surrogate_lr);
        kv.set("select.surrogate_tol", self.surrogate_tol);
        kv.set("select.surrogate_max_steps", self.surrogate_max_steps);
        kv.set("select.n", self.n);
        kv.set("select.min_spacing", self.min_spacing);
        kv.set("select.boundary_exclusion", self.boundary_exclusion);
        kv
    }
}

/// One view prepared for selection.
#[derive(Clone, Debug)]
pub struct SelectView<'a, T> {
    pub sample: &'a SceneSample<T>,
    pub input: StereoInput<T>,
    /// Pixels that may be touched.
    pub candidates: Grid<bool>,
}

impl<'a, T: Real> SelectView<'a, T> {
    /// Candidates exclude boundary pixels (when enabled) and columns where
    /// every hypothesis shifts outside the right image.
    pub fn new(
        sample: &'a SceneSample<T>,
        descriptor: DescriptorConfig,
        hyps: &DisparityHypotheses<T>,
        boundary_exclusion: bool,
    ) -> Self {
        let first_valid = hyps.min().ceil().to_f64_lossy().max(0.0) as usize;
        let candidates = Grid::from_fn(sample.width(), sample.height(), |u, v| {
            u >= first_valid && !(boundary_exclusion && sample.material.get(u, v) == Material::Boundary)
        });
        Self {
            sample,
            input: StereoInput::from_sample(sample, descriptor),
            candidates,
        }
    }
}
