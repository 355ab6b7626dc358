//! Dense supervised pretraining on diffuse-only scenes.

use super::adam::{Adam, AdamConfig};
use super::hypotheses::DisparityHypotheses;
use super::loss::{loss_gradients, LossSpec};
use super::model::{ModelState, Role};
use super::volume::{forward, StereoInput};
use crate::grid::Grid;
use crate::scalar::Real;
use crate::scenegen::{Material, SceneSample};

/// A training or validation view with its supervision.
#[derive(Clone, Debug)]
pub struct TrainView<T> {
    pub input: StereoInput<T>,
    /// Ground-truth disparity, `NaN` where invalid.
    pub target: Grid<T>,
    /// Pixels validation EPE is measured on.
    pub eval_mask: Grid<bool>,
}

impl<T: Real> TrainView<T> {
    /// Supervises and evaluates pixels whose true match lies inside the
    /// right image; evaluation further keeps only diffuse and background.
    pub fn from_sample(sample: &SceneSample<T>, state: &ModelState<T>) -> Self {
        let target = Grid::from_fn(sample.width(), sample.height(), |u, v| {
            let d = sample.gt_disparity.get(u, v);
            if T::from_usize_lossy(u) >= d {
                d
            } else {
                T::nan()
            }
        });
        let eval_mask = Grid::from_fn(sample.width(), sample.height(), |u, v| {
            !target.get(u, v).is_nan()
                && matches!(sample.material.get(u, v), Material::Diffuse | Material::Background)
        });
        Self {
            input: StereoInput::from_sample(sample, state.descriptor),
            target,
            eval_mask,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainConfig {
    pub adam: AdamConfig,
    pub max_epochs: usize,
    /// Stop as soon as validation EPE (px) falls below this.
    pub target_epe: f64,
    pub beta: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::with_lr(0.02),
            max_epochs: 40,
            target_epe: 0.5,
            beta: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretrainReport<T> {
    pub state: ModelState<T>,
    pub epochs_run: usize,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    pub val_epe: f64,
    pub reached_target: bool,
}

/// Mean absolute disparity error over the evaluation masks of `views`.
pub fn validation_epe<T: Real>(state: &ModelState<T>, views: &[TrainView<T>], hyps: &DisparityHypotheses<T>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for view in views {
        let fwd = forward(&view.input, state, hyps);
        for (u, v, m) in view.eval_mask.iter_indexed() {
            let t = view.target.get(u, v);
            if m && !t.is_nan() {
                sum += (fwd.pred.get(u, v) - t).abs().to_f64_lossy();
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// One pass over `views` in order, one Adam step per view. Returns the mean
/// loss seen before each step.
pub fn train_epoch<T: Real>(
    state: &mut ModelState<T>,
    adam: &mut Adam<T>,
    views: &[TrainView<T>],
    hyps: &DisparityHypotheses<T>,
    beta: T,
) -> f64 {
    let mut total = 0.0;
    for view in views {
        let spec = LossSpec::SmoothL1 {
            target: &view.target,
            mask: None,
            beta,
        };
        let (loss, grad, _) = loss_gradients(state, &view.input, hyps, &spec);
        total += loss.to_f64_lossy();
        let mut params = state.params();
        adam.adam_step(&mut params, &grad.flat());
        state.set_params(&params);
    }
    total / views.len().max(1) as f64
}

/// Supervised pretraining with smooth-L1 on ground truth. Training that does
/// not reach `target_epe` still returns its final state, flagged in the report.
pub fn pretrain<T: Real>(
    init: &ModelState<T>,
    train: &[TrainView<T>],
    val: &[TrainView<T>],
    hyps: &DisparityHypotheses<T>,
    cfg: &PretrainConfig,
) -> PretrainReport<T> {
    let mut state = init.clone();
    let mut adam = Adam::new(cfg.adam, state.num_params());
    let mut history = Vec::new();
    let mut val_epe = validation_epe(&state, val, hyps);
    let mut reached = val_epe < cfg.target_epe;
    let mut epochs = 0;
    while !reached && epochs < cfg.max_epochs {
        history.push(train_epoch(&mut state, &mut adam, train, hyps, T::lit(cfg.beta)));
        epochs += 1;
        val_epe = validation_epe(&state, val, hyps);
        reached = val_epe < cfg.target_epe;
    }
    PretrainReport {
        state: state.with_role(Role::Pretrained),
        epochs_run: epochs,
        loss_history: history,
        val_epe,
        reached_target: reached,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_scene, SceneConfig};
    use crate::stereomodel::descriptor::DescriptorConfig;

    fn views(seeds: std::ops::Range<u64>, state: &ModelState<f64>) -> Vec<TrainView<f64>> {
        let cfg = SceneConfig {
            n_transparent: 0,
            ..SceneConfig::desk()
        };
        seeds
            .map(|s| TrainView::from_sample(&generate_scene(s, &cfg).unwrap(), state))
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_state_unchanged() {
        let init: ModelState<f64> = ModelState::random(1, 4, DescriptorConfig::default(), 0.2);
        let hyps = DisparityHypotheses::integer_range(8, 40).unwrap();
        let train = views(0..1, &init);
        let cfg = PretrainConfig {
            adam: AdamConfig::with_lr(0.0),
            max_epochs: 2,
            target_epe: 0.0,
            beta: 1.0,
        };
        let report = pretrain(&init, &train, &train, &hyps, &cfg);
        assert_eq!(report.state.weights, init.weights);
        assert_eq!(report.state.log_tau, init.log_tau);
        assert_eq!(report.epochs_run, 2);
        assert!(!report.reached_target);
        assert_eq!(report.state.role, Role::Pretrained);
    }

    /// With targets equal to the model's own prediction the gradient is zero,
    /// so an epoch leaves the loss where it was.
    #[test]
    fn converged_state_is_a_fixed_point() {
        let mut state: ModelState<f64> = ModelState::random(2, 4, DescriptorConfig::default(), 0.2);
        let hyps = DisparityHypotheses::integer_range(8, 40).unwrap();
        let mut train = views(3..4, &state);
        train[0].target = forward(&train[0].input, &state, &hyps).pred;
        let mut adam = Adam::new(AdamConfig::with_lr(0.05), state.num_params());
        let before = train_epoch(&mut state, &mut adam, &train, &hyps, 1.0);
        let after = train_epoch(&mut state, &mut adam, &train, &hyps, 1.0);
        assert!(after <= before + 1e-6);
    }

    #[test]
    fn single_step_matches_hand_update() {
        let init: ModelState<f64> = ModelState::random(3, 2, DescriptorConfig::default(), 0.3);
        let hyps = DisparityHypotheses::integer_range(8, 40).unwrap();
        let mut train = views(5..6, &init);
        // supervise a single pixel
        let (u, v) = (60, 40);
        let t = train[0].target.get(u, v);
        train[0].target = Grid::filled(train[0].target.width(), train[0].target.height(), f64::NAN);
        train[0].target.set(u, v, t);
        let spec = LossSpec::SmoothL1 { target: &train[0].target, mask: None, beta: 1.0 };
        let (_, grad, _) = loss_gradients(&init, &train[0].input, &hyps, &spec);

        let lr = 1e-3;
        let mut state = init.clone();
        let mut adam = Adam::new(AdamConfig::with_lr(lr), state.num_params());
        train_epoch(&mut state, &mut adam, &train, &hyps, 1.0);
        // first Adam step: -lr * g / (|g| + eps)
        for ((p0, p1), g) in init.params().iter().zip(state.params()).zip(grad.flat()) {
            let expect = p0 - lr * g / (g.abs() + 1e-8);
            assert!((p1 - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn pretraining_reduces_validation_error() {
        let init: ModelState<f64> = ModelState::random(4, 8, DescriptorConfig::default(), 0.2);
        let hyps = DisparityHypotheses::integer_range(8, 40).unwrap();
        let train = views(10..13, &init);
        let val = views(20..21, &init);
        let before = validation_epe(&init, &val, &hyps);
        let cfg = PretrainConfig {
            max_epochs: 6,
            target_epe: 0.0,
            ..PretrainConfig::default()
        };
        let report = pretrain(&init, &train, &val, &hyps, &cfg);
        assert!(report.val_epe < before, "{} -> {}", before, report.val_epe);
        let again = pretrain(&init, &train, &val, &hyps, &cfg);
        assert_eq!(again.state, report.state);
    }
}
