//! In-memory experiment stages shared by the command line and the tests.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::evaluator::{report_many, EvalConfig, MetricReport};
use crate::finetuner::{finetune, prepare_views, FinetuneConfig, FinetuneOutcome};
use crate::kv::KvConfig;
use crate::probesim::{probe_batch, ProbeBatch, ProbeConfig};
use crate::scenegen::{generate_view, mix, SceneConfig, SceneSample};
use crate::selector::{
    baseline_confidence, baseline_oracle_center, baseline_random, greedy_select, GreedyOutcome, SelectView,
    SelectionConfig, Strategy, TouchSet,
};
use crate::stereomodel::{
    forward, pretrain, AdamConfig, DescriptorConfig, DisparityHypotheses, ModelState, PretrainConfig,
    PretrainReport, TrainView,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::config(format!("unknown profile `{s}` (desk, paper)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub seed: u64,
    pub pretrain_scenes: usize,
    pub pretrain_views_per_scene: usize,
    pub validation_scenes: usize,
    pub probe_scenes: usize,
    pub views_per_scene: usize,
    pub eval_scenes: usize,
    pub eval_views_per_scene: usize,
    /// Scene parameters for probing scenes; pretraining scenes drop the
    /// transparent objects and evaluation scenes widen the instance pool.
    pub scene: SceneConfig,
    pub eval_transparent_instances: Vec<u32>,
    pub embed_dim: usize,
    pub init_tau: f64,
    pub pretrain: PretrainConfig,
    pub strategy: Strategy,
    pub selection: SelectionConfig,
    pub probe: ProbeConfig,
    pub finetune: FinetuneConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn desk() -> Self {
        Self {
            profile: Profile::Desk,
            seed: 0,
            pretrain_scenes: 8,
            pretrain_views_per_scene: 2,
            validation_scenes: 2,
            probe_scenes: 5,
            views_per_scene: 4,
            eval_scenes: 4,
            eval_views_per_scene: 2,
            scene: SceneConfig::desk(),
            eval_transparent_instances: (0..8).collect(),
            embed_dim: 8,
            init_tau: 0.2,
            pretrain: PretrainConfig::default(),
            strategy: Strategy::Utility,
            selection: SelectionConfig::desk(),
            probe: ProbeConfig::default(),
            finetune: FinetuneConfig::desk(),
            eval: EvalConfig::default(),
        }
    }

    pub fn paper() -> Self {
        Self {
            profile: Profile::Paper,
            scene: SceneConfig::paper(),
            pretrain: PretrainConfig {
                adam: AdamConfig::with_lr(0.01),
                ..PretrainConfig::default()
            },
            selection: SelectionConfig::paper(),
            finetune: FinetuneConfig::paper(),
            ..Self::desk()
        }
    }

    pub fn for_profile(p: Profile) -> Self {
        match p {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    pub fn hypotheses(&self) -> Result<DisparityHypotheses<f64>> {
        let r = &self.scene.rig;
        if r.disparity_min.fract() != 0.0 || r.disparity_max.fract() != 0.0 {
            return Err(Error::config("disparity range must have integer endpoints"));
        }
        DisparityHypotheses::integer_range(r.disparity_min as usize, r.disparity_max as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.selection.validate()?;
        self.probe.validate()?;
        self.finetune.validate()?;
        self.hypotheses()?;
        if self.embed_dim == 0 || !(self.init_tau > 0.0) {
            return Err(Error::config("embed_dim must be positive and init_tau above zero"));
        }
        if self.probe_scenes * self.views_per_scene == 0 || self.eval_scenes * self.eval_views_per_scene == 0 {
            return Err(Error::config("need at least one probing view and one evaluation view"));
        }
        if self.pretrain_scenes * self.pretrain_views_per_scene == 0 || self.validation_scenes == 0 {
            return Err(Error::config("need at least one pretraining and one validation scene"));
        }
        let missing: Vec<u32> = self
            .scene
            .transparent_instances
            .iter()
            .copied()
            .filter(|i| !self.eval_transparent_instances.contains(i))
            .collect();
        if !missing.is_empty() {
            return Err(Error::config(format!(
                "probing transparent instances {missing:?} are absent from the evaluation pool"
            )));
        }
        Ok(())
    }

    /// Total touch budget.
    pub fn budget(&self) -> usize {
        self.probe_scenes * self.views_per_scene * self.selection.n
    }

    pub fn apply_kv(&mut self, kv: &KvConfig) -> Result<()> {
        Self::check_known_keys(kv)?;
        if let Some(p) = kv.parse_value::<Profile>("profile")? {
            if p != self.profile {
                return Err(Error::config(format!(
                    "config is for profile `{}` but `{}` was requested",
                    p.name(),
                    self.profile.name()
                )));
            }
        }
        kv.read_into("seed", &mut self.seed)?;
        kv.read_into("pretrain_scenes", &mut self.pretrain_scenes)?;
        kv.read_into("pretrain_views_per_scene", &mut self.pretrain_views_per_scene)?;
        kv.read_into("validation_scenes", &mut self.validation_scenes)?;
        kv.read_into("probe_scenes", &mut self.probe_scenes)?;
        kv.read_into("views_per_scene", &mut self.views_per_scene)?;
        kv.read_into("eval_scenes", &mut self.eval_scenes)?;
        kv.read_into("eval_views_per_scene", &mut self.eval_views_per_scene)?;
        kv.read_into("embed_dim", &mut self.embed_dim)?;
        kv.read_into("init_tau", &mut self.init_tau)?;
        kv.read_into("pretrain.lr", &mut self.pretrain.adam.lr)?;
        kv.read_into("pretrain.max_epochs", &mut self.pretrain.max_epochs)?;
        kv.read_into("pretrain.target_epe", &mut self.pretrain.target_epe)?;
        kv.read_into("strategy", &mut self.strategy)?;
        crate::kv::read_bool(kv, "eval.include_boundary", &mut self.eval.include_boundary)?;
        if let Some(list) = kv.get("eval_transparent_instances") {
            self.eval_transparent_instances = list
                .split(',')
                .map(|t| t.trim().parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::config("bad list `eval_transparent_instances`"))?;
        }
        self.scene.apply_kv(kv)?;
        self.selection.apply_kv(kv)?;
        self.probe.apply_kv(kv)?;
        self.finetune.apply_kv(kv)
    }

    /// Rejects keys no part of the configuration reads, so a misspelt key
    /// fails loudly instead of being ignored.
    pub fn check_known_keys(kv: &KvConfig) -> Result<()> {
        let known = Self::desk().to_kv();
        let extra = ["background_disparity", "object"];
        let unknown: Vec<&str> = kv
            .keys()
            .filter(|k| known.get(k).is_none() && !extra.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!("unknown configuration keys: {}", unknown.join(", "))))
        }
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("profile", self.profile.name());
        kv.set("seed", self.seed);
        kv.set("pretrain_scenes", self.pretrain_scenes);
        kv.set("pretrain_views_per_scene", self.pretrain_views_per_scene);
        kv.set("validation_scenes", self.validation_scenes);
        kv.set("probe_scenes", self.probe_scenes);
        kv.set("views_per_scene", self.views_per_scene);
        kv.set("eval_scenes", self.eval_scenes);
        kv.set("eval_views_per_scene", self.eval_views_per_scene);
        kv.set("embed_dim", self.embed_dim);
        kv.set("init_tau", self.init_tau);
        kv.set("pretrain.lr", self.pretrain.adam.lr);
        kv.set("pretrain.max_epochs", self.pretrain.max_epochs);
        kv.set("pretrain.target_epe", self.pretrain.target_epe);
        kv.set("strategy", self.strategy);
        kv.set("eval.include_boundary", self.eval.include_boundary);
        kv.set(
            "eval_transparent_instances",
            self.eval_transparent_instances.iter().map(u32::to_string).collect::<Vec<_>>().join(","),
        );
        kv.extend(&self.scene.to_kv());
        kv.extend(&self.selection.to_kv());
        kv.extend(&self.probe.to_kv());
        kv.extend(&self.finetune.to_kv());
        kv
    }
}

/// All scenes of one experiment.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub pretrain: Vec<SceneSample<f64>>,
    pub validation: Vec<SceneSample<f64>>,
    pub probing: Vec<SceneSample<f64>>,
    pub eval: Vec<SceneSample<f64>>,
}

const PRETRAIN_SALT: u64 = 0x11;
const VALIDATION_SALT: u64 = 0x22;
const PROBE_SALT: u64 = 0x33;
const EVAL_SALT: u64 = 0x44;

fn views(seed: u64, salt: u64, scenes: usize, per_scene: usize, cfg: &SceneConfig) -> Result<Vec<SceneSample<f64>>> {
    let mut out = Vec::with_capacity(scenes * per_scene);
    for s in 0..scenes {
        let scene_seed = mix(mix(seed, salt), s as u64);
        for v in 0..per_scene {
            out.push(generate_view(scene_seed, v as u32, cfg)?);
        }
    }
    Ok(out)
}

pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.validate()?;
    let diffuse_only = SceneConfig {
        n_transparent: 0,
        ..cfg.scene.clone()
    };
    let eval_scene = SceneConfig {
        transparent_instances: cfg.eval_transparent_instances.clone(),
        ..cfg.scene.clone()
    };
    Ok(Dataset {
        pretrain: views(cfg.seed, PRETRAIN_SALT, cfg.pretrain_scenes, cfg.pretrain_views_per_scene, &diffuse_only)?,
        validation: views(cfg.seed, VALIDATION_SALT, cfg.validation_scenes, 1, &diffuse_only)?,
        probing: views(cfg.seed, PROBE_SALT, cfg.probe_scenes, cfg.views_per_scene, &cfg.scene)?,
        eval: views(cfg.seed, EVAL_SALT, cfg.eval_scenes, cfg.eval_views_per_scene, &eval_scene)?,
    })
}

pub fn run_pretrain(cfg: &ExperimentConfig, data: &Dataset) -> Result<PretrainReport<f64>> {
    run_pretrain_views(cfg, &data.pretrain, &data.validation)
}

pub fn run_pretrain_views(
    cfg: &ExperimentConfig,
    train: &[SceneSample<f64>],
    validation: &[SceneSample<f64>],
) -> Result<PretrainReport<f64>> {
    let hyps = cfg.hypotheses()?;
    let init = ModelState::random(mix(cfg.seed, 0x1417), cfg.embed_dim, DescriptorConfig::default(), cfg.init_tau);
    let train: Vec<_> = train.iter().map(|s| TrainView::from_sample(s, &init)).collect();
    let val: Vec<_> = validation.iter().map(|s| TrainView::from_sample(s, &init)).collect();
    Ok(pretrain(&init, &train, &val, &hyps, &cfg.pretrain))
}

/// Touches chosen by `strategy`, with the greedy trace for the utility strategy.
pub fn run_select(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    pretrained: &ModelState<f64>,
    data: &Dataset,
) -> Result<(TouchSet, Option<GreedyOutcome<f64>>)> {
    run_select_views(cfg, strategy, pretrained, &data.probing)
}

pub fn run_select_views(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    pretrained: &ModelState<f64>,
    probing: &[SceneSample<f64>],
) -> Result<(TouchSet, Option<GreedyOutcome<f64>>)> {
    let hyps = cfg.hypotheses()?;
    let views: Vec<SelectView<'_, f64>> = probing
        .iter()
        .map(|s| SelectView::new(s, pretrained.descriptor, &hyps, cfg.selection.boundary_exclusion))
        .collect();
    Ok(match strategy {
        Strategy::Utility => {
            let out = greedy_select(pretrained, &views, &hyps, &cfg.selection)?;
            (out.touches.clone(), Some(out))
        }
        Strategy::Random => (baseline_random(&views, &cfg.selection, mix(cfg.seed, 0x7a9d))?, None),
        Strategy::Confidence => (baseline_confidence(pretrained, &views, &hyps, &cfg.selection)?, None),
        Strategy::OracleCenter => (baseline_oracle_center(&views, &cfg.selection)?, None),
    })
}

pub fn run_probe(cfg: &ExperimentConfig, data: &Dataset, touches: &TouchSet) -> Result<ProbeBatch> {
    run_probe_views(cfg, &data.probing, touches)
}

pub fn run_probe_views(cfg: &ExperimentConfig, probing: &[SceneSample<f64>], touches: &TouchSet) -> Result<ProbeBatch> {
    let probe_cfg = ProbeConfig {
        seed: mix(cfg.seed, cfg.probe.seed),
        ..cfg.probe
    };
    probe_batch(probing, touches, &probe_cfg)
}

pub fn run_finetune(
    cfg: &ExperimentConfig,
    finetune_cfg: &FinetuneConfig,
    pretrained: &ModelState<f64>,
    data: &Dataset,
    probes: &ProbeBatch,
) -> Result<FinetuneOutcome<f64>> {
    let hyps = cfg.hypotheses()?;
    let views = prepare_views(pretrained, &data.probing, probes, &hyps, finetune_cfg)?;
    finetune(pretrained, &views, &hyps, finetune_cfg)
}

/// Metrics of `state` over the evaluation scenes.
pub fn run_eval(cfg: &ExperimentConfig, state: &ModelState<f64>, samples: &[SceneSample<f64>]) -> Result<MetricReport> {
    let hyps = cfg.hypotheses()?;
    let preds: Vec<_> = samples
        .iter()
        .map(|s| {
            let input = crate::stereomodel::StereoInput::from_sample(s, state.descriptor);
            (forward(&input, state, &hyps).pred, s)
        })
        .collect();
    Ok(report_many(&preds, &cfg.eval))
}
