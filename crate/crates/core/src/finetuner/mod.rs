//! Sparse-label finetuning: Gaussian-refined patch labels around each touch,
//! a pseudo-label regulariser on confidently predicted pixels, and the Adam
//! loop that combines them.

use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kv::KvConfig;
use crate::probesim::{ProbeBatch, ProbeResult};
use crate::scalar::{smooth_l1, Real};
use crate::scenegen::SceneSample;
use crate::selector::{confidence_map, Touch};
use crate::stereomodel::{
    forward, loss_gradients, loss_value, Adam, AdamConfig, DisparityHypotheses, LossSpec, ModelState, Role,
    SparseTarget, StereoInput,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TactileMode {
    Patch,
    Pixel,
}

impl TactileMode {
    pub fn name(self) -> &'static str {
        match self {
            TactileMode::Patch => "patch",
            TactileMode::Pixel => "pixel",
        }
    }
}

impl FromStr for TactileMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "patch" => Ok(TactileMode::Patch),
            "pixel" => Ok(TactileMode::Pixel),
            _ => Err(Error::config(format!("unknown tactile mode `{s}` (patch, pixel)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneConfig {
    pub lambda_t: f64,
    pub lambda_r: f64,
    pub patch_radius: usize,
    pub sigma_t: f64,
    pub c2: f64,
    /// Neighbourhood used for the pretrained confidence behind the pseudo mask.
    pub epsilon: f64,
    pub lr: f64,
    pub epochs: usize,
    pub beta: f64,
    pub tactile_mode: TactileMode,
    /// Abort once an epoch's mean loss exceeds this multiple of the entry loss.
    pub divergence_factor: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl FinetuneConfig {
    pub fn paper() -> Self {
        Self {
            lambda_t: 1.0,
            lambda_r: 100.0,
            patch_radius: 7,
            sigma_t: 12.0,
            c2: 0.9999,
            epsilon: 5.0,
            lr: 2e-5,
            epochs: 10,
            beta: 1.0,
            tactile_mode: TactileMode::Patch,
            divergence_factor: 10.0,
        }
    }

    pub fn desk() -> Self {
        Self {
            lambda_r: 1.0,
            epsilon: 3.0,
            lr: 0.01,
            epochs: 10,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_t > 0.0) {
            return Err(Error::config("finetune.sigma_t must be positive"));
        }
        if !(self.c2 > 0.0 && self.c2 < 1.0) {
            return Err(Error::config("finetune.c2 must lie in (0, 1)"));
        }
        if !(self.lambda_t >= 0.0 && self.lambda_r >= 0.0 && self.lr >= 0.0) {
            return Err(Error::config("finetune: lambda_t, lambda_r and lr must be non-negative"));
        }
        if !(self.epsilon > 0.0 && self.beta > 0.0 && self.divergence_factor > 1.0) {
            return Err(Error::config("finetune: epsilon and beta must be positive, divergence_factor above 1"));
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, kv: &KvConfig) -> Result<()> {
        kv.read_into("finetune.lambda_t", &mut self.lambda_t)?;
        kv.read_into("finetune.lambda_r", &mut self.lambda_r)?;
        kv.read_into("finetune.patch_radius", &mut self.patch_radius)?;
        kv.read_into("finetune.sigma_t", &mut self.sigma_t)?;
        kv.read_into("finetune.c2", &mut self.c2)?;
        kv.read_into("finetune.epsilon", &mut self.epsilon)?;
        kv.read_into("finetune.lr", &mut self.lr)?;
        kv.read_into("finetune.epochs", &mut self.epochs)?;
        kv.read_into("finetune.beta", &mut self.beta)?;
        kv.read_into("finetune.tactile_mode", &mut self.tactile_mode)?;
        kv.read_into("finetune.divergence_factor", &mut self.divergence_factor)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("finetune.lambda_t", self.lambda_t);
        kv.set("finetune.lambda_r", self.lambda_r);
        kv.set("finetune.patch_radius", self.patch_radius);
        kv.set("finetune.sigma_t", self.sigma_t);
        kv.set("finetune.c2", self.c2);
        kv.set("finetune.epsilon", self.epsilon);
        kv.set("finetune.lr", self.lr);
        kv.set("finetune.epochs", self.epochs);
        kv.set("finetune.beta", self.beta);
        kv.set("finetune.tactile_mode", self.tactile_mode.name());
        kv.set("finetune.divergence_factor", self.divergence_factor);
        kv
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchEntry<T> {
    pub u: usize,
    pub v: usize,
    pub target: T,
    pub weight: T,
}

/// A touch turned into a patch of disparity targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TactileLabel<T> {
    pub touch: Touch,
    pub label_disparity: T,
    /// Row-major over the border-clipped patch.
    pub entries: Vec<PatchEntry<T>>,
}

impl<T: Real> TactileLabel<T> {
    pub fn center(&self) -> &PatchEntry<T> {
        self.entries
            .iter()
            .find(|e| (e.u, e.v) == (self.touch.u, self.touch.v))
            .expect("patch contains its centre")
    }
}

/// Blends the probed disparity into the pretrained prediction with a
/// Gaussian weight centred on the touch.
pub fn build_tactile_label<T: Real>(
    probe: &ProbeResult,
    pretrained_pred: &Grid<T>,
    cfg: &FinetuneConfig,
) -> Result<TactileLabel<T>> {
    if !probe.success {
        return Err(Error::Domain(format!(
            "probe at ({}, {}) failed and cannot become a label",
            probe.u, probe.v
        )));
    }
    let (w, h) = (pretrained_pred.width(), pretrained_pred.height());
    if probe.u >= w || probe.v >= h {
        return Err(Error::Domain(format!("probe ({}, {}) lies outside the image", probe.u, probe.v)));
    }
    let label = T::lit(probe.derived_disparity_px);
    let p = cfg.patch_radius;
    let two_s2 = 2.0 * cfg.sigma_t * cfg.sigma_t;
    let mut entries = Vec::new();
    for v in probe.v.saturating_sub(p)..=(probe.v + p).min(h - 1) {
        for u in probe.u.saturating_sub(p)..=(probe.u + p).min(w - 1) {
            let du = u as f64 - probe.u as f64;
            let dv = v as f64 - probe.v as f64;
            let g = T::lit((-(du * du + dv * dv) / two_s2).exp());
            let prior = pretrained_pred.get(u, v);
            entries.push(PatchEntry {
                u,
                v,
                target: g * label + (T::one() - g) * prior,
                weight: g,
            });
        }
    }
    Ok(TactileLabel {
        touch: probe.touch(),
        label_disparity: label,
        entries,
    })
}

/// Loss targets a set of labels contributes under `mode`.
pub fn tactile_targets<T: Real>(labels: &[TactileLabel<T>], mode: TactileMode) -> Vec<SparseTarget<T>> {
    let mut out = Vec::new();
    for l in labels {
        match mode {
            TactileMode::Patch => out.extend(l.entries.iter().map(|e| SparseTarget {
                u: e.u,
                v: e.v,
                target: e.target,
            })),
            TactileMode::Pixel => {
                let c = l.center();
                out.push(SparseTarget {
                    u: c.u,
                    v: c.v,
                    target: c.target,
                });
            }
        }
    }
    out
}

/// Mean smooth-L1 over every contributing label pixel.
pub fn tactile_loss<T: Real>(pred: &Grid<T>, labels: &[TactileLabel<T>], cfg: &FinetuneConfig) -> Result<T> {
    if labels.is_empty() {
        return Err(Error::Domain("tactile loss needs at least one label".into()));
    }
    let targets = tactile_targets(labels, cfg.tactile_mode);
    let sum: T = targets
        .iter()
        .map(|t| smooth_l1(pred.get(t.u, t.v) - t.target, T::lit(cfg.beta)))
        .sum();
    Ok(sum / T::from_usize_lossy(targets.len()))
}

/// Pixels whose pretrained confidence reaches `c2`.
pub fn pseudo_mask<T: Real>(confidence: &Grid<T>, c2: T) -> Grid<bool> {
    confidence.map(|c| c >= c2)
}

/// Mean smooth-L1 to the pretrained prediction over the pseudo mask.
pub fn regularization_loss<T: Real>(pred: &Grid<T>, pretrained_pred: &Grid<T>, mask: &Grid<bool>, beta: T) -> T {
    let mut n = 0usize;
    let mut sum = T::zero();
    for (u, v, m) in mask.iter_indexed() {
        if m {
            n += 1;
            sum = sum + smooth_l1(pred.get(u, v) - pretrained_pred.get(u, v), beta);
        }
    }
    if n == 0 {
        T::zero()
    } else {
        sum / T::from_usize_lossy(n)
    }
}

/// One probed view with everything frozen at finetune entry.
#[derive(Clone, Debug)]
pub struct FinetuneView<T> {
    pub input: StereoInput<T>,
    pub labels: Vec<TactileLabel<T>>,
    pub targets: Vec<SparseTarget<T>>,
    pub anchor: Grid<T>,
    pub pseudo: Grid<bool>,
}

impl<T: Real> FinetuneView<T> {
    /// Builds the view's labels from the successful probes that hit it.
    pub fn prepare(
        pretrained: &ModelState<T>,
        sample: &SceneSample<T>,
        probes: &[ProbeResult],
        hyps: &DisparityHypotheses<T>,
        cfg: &FinetuneConfig,
    ) -> Result<Self> {
        let input = StereoInput::from_sample(sample, pretrained.descriptor);
        let fwd = forward(&input, pretrained, hyps);
        let conf = confidence_map(&fwd.prob, &fwd.pred, hyps, T::lit(cfg.epsilon));
        let labels = probes
            .iter()
            .filter(|p| p.success && p.scene_id == sample.scene_id && p.view_id == sample.view_id)
            .map(|p| build_tactile_label(p, &fwd.pred, cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            targets: tactile_targets(&labels, cfg.tactile_mode),
            labels,
            pseudo: pseudo_mask(&conf, T::lit(cfg.c2)),
            anchor: fwd.pred,
            input,
        })
    }

    fn losses(&self, state_fwd: &crate::stereomodel::Forward<T>, beta: T) -> (T, T) {
        let tactile = loss_value(&LossSpec::Sparse { entries: &self.targets, beta }, state_fwd);
        let reg = regularization_loss(&state_fwd.pred, &self.anchor, &self.pseudo, beta);
        (tactile, reg)
    }
}

/// Builds finetune views for every sample that received at least one probe.
pub fn prepare_views<T: Real>(
    pretrained: &ModelState<T>,
    samples: &[SceneSample<T>],
    probes: &ProbeBatch,
    hyps: &DisparityHypotheses<T>,
    cfg: &FinetuneConfig,
) -> Result<Vec<FinetuneView<T>>> {
    samples
        .iter()
        .filter(|s| probes.results.iter().any(|p| p.scene_id == s.scene_id && p.view_id == s.view_id))
        .map(|s| FinetuneView::prepare(pretrained, s, &probes.results, hyps, cfg))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub tactile: f64,
    pub regularization: f64,
    pub combined: f64,
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome<T> {
    pub state: ModelState<T>,
    /// Entry losses as epoch 0, then one row per epoch measured before each
    /// view's update.
    pub log: Vec<EpochLog>,
}

impl<T> FinetuneOutcome<T> {
    pub fn log_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.log {
            w.serialize(row)?;
        }
        w.into_inner().map_err(|e| Error::config(format!("csv flush: {e}")))
    }

    pub fn save_log(&self, path: &Path) -> Result<()> {
        crate::scenegen::write_bytes(path, &self.log_csv()?)
    }
}

pub fn finetune<T: Real>(
    pretrained: &ModelState<T>,
    views: &[FinetuneView<T>],
    hyps: &DisparityHypotheses<T>,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome<T>> {
    cfg.validate()?;
    if pretrained.role != Role::Pretrained {
        return Err(Error::Domain(format!(
            "finetuning starts from a pretrained model, got role `{}`",
            pretrained.role.name()
        )));
    }
    if views.iter().all(|v| v.labels.is_empty()) {
        return Err(Error::Domain("finetuning needs at least one tactile label".into()));
    }
    let beta = T::lit(cfg.beta);
    let (lt, lr) = (T::lit(cfg.lambda_t), T::lit(cfg.lambda_r));
    let mut state = pretrained.clone();
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), state.num_params());

    let summarize = |epoch: usize, parts: &[(T, T)]| {
        let n = parts.len().max(1) as f64;
        let tactile = parts.iter().map(|p| p.0.to_f64_lossy()).sum::<f64>() / n;
        let regularization = parts.iter().map(|p| p.1.to_f64_lossy()).sum::<f64>() / n;
        EpochLog {
            epoch,
            tactile,
            regularization,
            combined: cfg.lambda_t * tactile + cfg.lambda_r * regularization,
        }
    };
    let entry: Vec<(T, T)> = views
        .iter()
        .map(|v| v.losses(&forward(&v.input, &state, hyps), beta))
        .collect();
    let mut log = vec![summarize(0, &entry)];
    let initial = log[0].combined;

    for epoch in 1..=cfg.epochs {
        let mut parts = Vec::with_capacity(views.len());
        for view in views {
            let spec = LossSpec::Weighted(vec![
                (lt, LossSpec::Sparse { entries: &view.targets, beta }),
                (
                    lr,
                    LossSpec::SmoothL1 {
                        target: &view.anchor,
                        mask: Some(&view.pseudo),
                        beta,
                    },
                ),
            ]);
            let (_, grad, fwd) = loss_gradients(&state, &view.input, hyps, &spec);
            parts.push(view.losses(&fwd, beta));
            let mut params = state.params();
            adam.adam_step(&mut params, &grad.flat());
            state.set_params(&params);
        }
        let row = summarize(epoch, &parts);
        log.push(row);
        if !row.combined.is_finite() || !state.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss or parameters at epoch {epoch}")));
        }
        if initial > 0.0 && row.combined > cfg.divergence_factor * initial {
            return Err(Error::Divergence(format!(
                "epoch {epoch} loss {:.6} exceeds {}x the entry loss {:.6}",
                row.combined, cfg.divergence_factor, initial
            )));
        }
    }
    Ok(FinetuneOutcome {
        state: state.with_role(Role::Finetuned),
        log,
    })
}
