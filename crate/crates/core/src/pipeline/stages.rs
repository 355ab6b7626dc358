//! Disk-backed stages. Each stage reads its inputs from the workspace, writes
//! its outputs there and records both in a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::artifacts::{decode_view, save_view, sha256_hex, Manifest, Workspace};
use super::experiment::{
    generate_dataset, run_eval, run_finetune, run_pretrain_views, run_probe_views, run_select_views, Dataset,
    ExperimentConfig,
};
use crate::error::{Error, Result};
use crate::evaluator::{ComparisonTable, MetricReport, SeedSummary};
use crate::finetuner::{FinetuneConfig, TactileMode};
use crate::probesim::ProbeBatch;
use crate::scenegen::{write_bytes, Material, SceneSample};
use crate::selector::{GreedyOutcome, Strategy, TouchSet};
use crate::stereomodel::ModelState;

pub const GEN_DATA: &str = "gen-data";
pub const PRETRAIN: &str = "pretrain";
pub const SELECT: &str = "select";
pub const PROBE: &str = "probe";
pub const FINETUNE: &str = "finetune";
pub const EVAL: &str = "eval";
pub const ABLATE: &str = "ablate";

const SPLITS: [&str; 4] = ["pretrain", "validation", "probing", "eval"];

/// Name under which a finetuned model and its report are stored, e.g.
/// `utility`, `random`, `utility_pixel`, `utility_noreg`.
pub fn run_label(strategy: Strategy, ft: &FinetuneConfig) -> String {
    let mut label = strategy.name().to_string();
    if ft.tactile_mode == TactileMode::Pixel {
        label.push_str("_pixel");
    }
    if ft.lambda_r == 0.0 {
        label.push_str("_noreg");
    }
    label
}

/// Collects the hashes of everything a stage reads and writes.
struct Recorder<'a> {
    ws: &'a Workspace,
    cfg: &'a ExperimentConfig,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl<'a> Recorder<'a> {
    fn new(ws: &'a Workspace, cfg: &'a ExperimentConfig) -> Self {
        Self {
            ws,
            cfg,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn read(&mut self, path: &Path, stage: &'static str) -> Result<Vec<u8>> {
        let bytes = self.ws.read_input(path, stage)?;
        self.inputs.insert(self.ws.relative(path), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_bytes(path, bytes)?;
        self.outputs.insert(self.ws.relative(path), sha256_hex(bytes));
        Ok(())
    }

    /// Hashes files some other writer produced.
    fn written(&mut self, paths: &[PathBuf]) -> Result<()> {
        for p in paths {
            let bytes = crate::scenegen::read_bytes(p)?;
            self.outputs.insert(self.ws.relative(p), sha256_hex(&bytes));
        }
        Ok(())
    }

    fn finish(self, stage: String) -> Result<Manifest> {
        let m = Manifest {
            stage,
            profile: self.cfg.profile.name().to_string(),
            seed: self.cfg.seed,
            config: self.cfg.to_kv().entries().to_vec(),
            inputs: self.inputs,
            outputs: self.outputs,
        };
        self.ws.write_manifest(&m)?;
        Ok(m)
    }
}

/// Refuses to mix artifacts generated under another profile or seed.
fn check_origin(ws: &Workspace, cfg: &ExperimentConfig) -> Result<Manifest> {
    let m = ws.load_manifest(GEN_DATA)?;
    if m.profile != cfg.profile.name() || m.seed != cfg.seed {
        return Err(Error::config(format!(
            "{} holds data for profile `{}` seed {}, but profile `{}` seed {} was requested; rerun `{GEN_DATA}`",
            ws.root().display(),
            m.profile,
            m.seed,
            cfg.profile.name(),
            cfg.seed
        )));
    }
    Ok(m)
}

fn load_split(
    ws: &Workspace,
    rec: &mut Recorder<'_>,
    data_manifest: &Manifest,
    split: &str,
) -> Result<Vec<SceneSample<f64>>> {
    let prefix = format!("data/{split}/");
    let mut out = Vec::new();
    for rel in data_manifest.outputs.keys() {
        if rel.starts_with(&prefix) && rel.ends_with(".view") {
            let bytes = rec.read(&ws.root().join(rel), GEN_DATA)?;
            if sha256_hex(&bytes) != data_manifest.outputs[rel] {
                return Err(Error::config(format!(
                    "{rel} changed since `{GEN_DATA}` wrote it; rerun `{GEN_DATA}`"
                )));
            }
            out.push(decode_view(&bytes)?);
        }
    }
    if out.is_empty() {
        return Err(Error::MissingArtifact {
            path: ws.data().join(split),
            stage: GEN_DATA,
        });
    }
    Ok(out)
}

fn load_model(rec: &mut Recorder<'_>, path: &Path, stage: &'static str) -> Result<ModelState<f64>> {
    ModelState::from_bytes(&rec.read(path, stage)?)
}

fn pretrained_path(ws: &Workspace) -> PathBuf {
    ws.models().join("pretrained.model")
}

fn touches_path(ws: &Workspace, s: Strategy) -> PathBuf {
    ws.touches().join(format!("{}.csv", s.name()))
}

fn probes_path(ws: &Workspace, s: Strategy) -> PathBuf {
    ws.touches().join(format!("{}_probes.csv", s.name()))
}

fn finetuned_path(ws: &Workspace, label: &str) -> PathBuf {
    ws.models().join(format!("finetuned_{label}.model"))
}

pub fn stage_gen_data(cfg: &ExperimentConfig, ws: &Workspace) -> Result<Manifest> {
    let data = generate_dataset(cfg)?;
    let mut rec = Recorder::new(ws, cfg);
    for (split, views) in SPLITS.iter().zip([&data.pretrain, &data.validation, &data.probing, &data.eval]) {
        let dir = ws.data().join(split);
        for (i, v) in views.iter().enumerate() {
            let paths = save_view(&dir, &format!("{i:03}"), v)?;
            rec.written(&paths)?;
        }
    }
    rec.finish(GEN_DATA.into())
}

pub fn stage_pretrain(cfg: &ExperimentConfig, ws: &Workspace) -> Result<Manifest> {
    let origin = check_origin(ws, cfg)?;
    let mut rec = Recorder::new(ws, cfg);
    let train = load_split(ws, &mut rec, &origin, "pretrain")?;
    let val = load_split(ws, &mut rec, &origin, "validation")?;
    let report = run_pretrain_views(cfg, &train, &val)?;
    let model = pretrained_path(ws);
    rec.write(&model, &report.state.to_bytes())?;
    rec.write(&ws.models().join("pretrained.model.txt"), report.state.sidecar().to_text().as_bytes())?;
    let mut log = String::from("epoch,loss\n");
    for (i, l) in report.loss_history.iter().enumerate() {
        log.push_str(&format!("{},{l}\n", i + 1));
    }
    log.push_str(&format!("# val_epe={} reached_target={}\n", report.val_epe, report.reached_target));
    rec.write(&ws.models().join("pretrain_log.csv"), log.as_bytes())?;
    rec.finish(PRETRAIN.into())
}

fn trace_csv(out: &GreedyOutcome<f64>) -> String {
    let mut s = String::from("view_index,step_in_view,scene_id,view_id,u,v,mask_value,fallback,tune_converged\n");
    for r in &out.steps {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.view_index,
            r.step_in_view,
            r.touch.scene_id,
            r.touch.view_id,
            r.touch.u,
            r.touch.v,
            r.mask_value,
            r.fallback,
            if r.tune_entropy.is_some() { r.tune_converged.to_string() } else { "-".to_string() }
        ));
    }
    s
}

pub fn stage_select(cfg: &ExperimentConfig, ws: &Workspace) -> Result<Manifest> {
    let origin = check_origin(ws, cfg)?;
    let mut rec = Recorder::new(ws, cfg);
    let pretrained = load_model(&mut rec, &pretrained_path(ws), PRETRAIN)?;
    let probing = load_split(ws, &mut rec, &origin, "probing")?;
    let (touches, trace) = run_select_views(cfg, cfg.strategy, &pretrained, &probing)?;
    rec.write(&touches_path(ws, cfg.strategy), &touches.to_csv()?)?;
    if let Some(t) = trace {
        rec.write(&ws.touches().join("utility_trace.csv"), trace_csv(&t).as_bytes())?;
    }
    rec.finish(format!("{SELECT}_{}", cfg.strategy.name()))
}

pub fn stage_probe(cfg: &ExperimentConfig, ws: &Workspace) -> Result<Manifest> {
    let origin = check_origin(ws, cfg)?;
    let mut rec = Recorder::new(ws, cfg);
    let touches = TouchSet::from_csv(&rec.read(&touches_path(ws, cfg.strategy), SELECT)?)?;
    let probing = load_split(ws, &mut rec, &origin, "probing")?;
    let batch = run_probe_views(cfg, &probing, &touches)?;
    rec.write(&probes_path(ws, cfg.strategy), &batch.to_csv()?)?;
    rec.finish(format!("{PROBE}_{}", cfg.strategy.name()))
}

pub fn stage_finetune(cfg: &ExperimentConfig, ws: &Workspace) -> Result<Manifest> {
    let origin = check_origin(ws, cfg)?;
    let mut rec = Recorder::new(ws, cfg);
    let pretrained = load_model(&mut rec, &pretrained_path(ws), PRETRAIN)?;
    let probes = ProbeBatch::from_csv(&rec.read(&probes_path(ws, cfg.strategy), PROBE)?)?;
    let probing = load_split(ws, &mut rec, &origin, "probing")?;
    let data = Dataset {
        probing,
        ..Dataset::default()
    };
    let out = run_finetune(cfg, &cfg.finetune, &pretrained, &data, &probes)?;
    let label = run_label(cfg.strategy, &cfg.finetune);
    let path = finetuned_path(ws, &label);
    rec.write(&path, &out.state.to_bytes())?;
    rec.write(&ws.models().join(format!("finetuned_{label}.model.txt")), out.state.sidecar().to_text().as_bytes())?;
    rec.write(&ws.models().join(format!("finetune_{label}_log.csv")), &out.log_csv()?)?;
    rec.finish(format!("{FINETUNE}_{label}"))
}

fn write_table(rec: &mut Recorder<'_>, dir: &Path, stem: &str, t: &ComparisonTable) -> Result<()> {
    rec.write(&dir.join(format!("{stem}.csv")), &t.to_csv()?)?;
    rec.write(&dir.join(format!("{stem}.txt")), t.to_text().as_bytes())?;
    rec.write(&dir.join(format!("{stem}.json")), (t.to_json()? + "\n").as_bytes())
}

fn write_summary(rec: &mut Recorder<'_>, dir: &Path, stem: &str, t: &SeedSummary) -> Result<()> {
    rec.write(&dir.join(format!("{stem}.csv")), &t.to_csv()?)?;
    rec.write(&dir.join(format!("{stem}.txt")), t.to_text().as_bytes())?;
    rec.write(&dir.join(format!("{stem}.json")), (t.to_json()? + "\n").as_bytes())
}

/// Compares the pretrained model with the finetuned model of the configured
/// strategy and ablation setting on the held-out evaluation views.
pub fn stage_eval(cfg: &ExperimentConfig, ws: &Workspace) -> Result<Manifest> {
    let origin = check_origin(ws, cfg)?;
    let mut rec = Recorder::new(ws, cfg);
    let label = run_label(cfg.strategy, &cfg.finetune);
    let pretrained = load_model(&mut rec, &pretrained_path(ws), PRETRAIN)?;
    let finetuned = load_model(&mut rec, &finetuned_path(ws, &label), FINETUNE)?;
    let eval = load_split(ws, &mut rec, &origin, "eval")?;
    let mut table = ComparisonTable::new(format!("held-out evaluation, seed {}", cfg.seed));
    table.push("pretrained", run_eval(cfg, &pretrained, &eval)?);
    table.push(label.clone(), run_eval(cfg, &finetuned, &eval)?);
    write_table(&mut rec, &ws.reports(), &format!("eval_{label}"), &table)?;
    rec.finish(format!("{EVAL}_{label}"))
}

/// Runs every stage in order for the configured strategy.
pub fn full_run(cfg: &ExperimentConfig, ws: &Workspace, progress: &mut dyn FnMut(&str)) -> Result<Vec<Manifest>> {
    let stages: [(&str, fn(&ExperimentConfig, &Workspace) -> Result<Manifest>); 6] = [
        (GEN_DATA, stage_gen_data),
        (PRETRAIN, stage_pretrain),
        (SELECT, stage_select),
        (PROBE, stage_probe),
        (FINETUNE, stage_finetune),
        (EVAL, stage_eval),
    ];
    let mut out = Vec::new();
    for (name, f) in stages {
        progress(name);
        out.push(f(cfg, ws)?);
    }
    Ok(out)
}

pub const TACTILE_PATCH: &str = "utility_patch";
pub const TACTILE_PIXEL: &str = "utility_pixel";
pub const REG_ON: &str = "utility_reg";
pub const REG_OFF: &str = "utility_noreg";

/// Results of one seed of the ablation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub seed: u64,
    pub pretrain_val_epe: f64,
    /// Keyed by `pretrained`, the strategy names, and the ablation keys
    /// [`TACTILE_PATCH`], [`TACTILE_PIXEL`], [`REG_ON`], [`REG_OFF`].
    pub reports: BTreeMap<String, MetricReport>,
    /// Touches that landed on transparent pixels, per strategy.
    pub transparent_touches: BTreeMap<String, usize>,
}

/// Strategy comparison, patch/pixel tactile loss and regularization on/off,
/// for seeds `cfg.seed .. cfg.seed + seeds`. The tactile and regularization
/// variants reuse the utility touches.
pub fn ablate(cfg: &ExperimentConfig, seeds: usize, progress: &mut dyn FnMut(&str)) -> Result<Vec<AblationRun>> {
    let mut runs = Vec::with_capacity(seeds);
    for k in 0..seeds as u64 {
        let cfg = ExperimentConfig {
            seed: cfg.seed + k,
            ..cfg.clone()
        };
        progress(&format!("seed {}: data and pretraining", cfg.seed));
        let data = generate_dataset(&cfg)?;
        let pre = run_pretrain_views(&cfg, &data.pretrain, &data.validation)?;
        let mut run = AblationRun {
            seed: cfg.seed,
            pretrain_val_epe: pre.val_epe,
            reports: BTreeMap::new(),
            transparent_touches: BTreeMap::new(),
        };
        run.reports.insert("pretrained".into(), run_eval(&cfg, &pre.state, &data.eval)?);
        for strategy in Strategy::ALL {
            progress(&format!("seed {}: {}", cfg.seed, strategy.name()));
            let (touches, _) = run_select_views(&cfg, strategy, &pre.state, &data.probing)?;
            let on_trans = touches
                .records
                .iter()
                .filter(|r| {
                    data.probing
                        .iter()
                        .find(|s| s.scene_id == r.scene_id && s.view_id == r.view_id)
                        .is_some_and(|s| s.material.get(r.u, r.v) == Material::Transparent)
                })
                .count();
            run.transparent_touches.insert(strategy.name().into(), on_trans);
            let probes = run_probe_views(&cfg, &data.probing, &touches)?;
            let out = run_finetune(&cfg, &cfg.finetune, &pre.state, &data, &probes)?;
            let report = run_eval(&cfg, &out.state, &data.eval)?;
            if strategy == Strategy::Utility {
                let (patch, pixel) = (
                    FinetuneConfig { tactile_mode: TactileMode::Patch, ..cfg.finetune.clone() },
                    FinetuneConfig { tactile_mode: TactileMode::Pixel, ..cfg.finetune.clone() },
                );
                for (key, ft) in [(TACTILE_PATCH, patch), (TACTILE_PIXEL, pixel)] {
                    let r = if ft == cfg.finetune {
                        report.clone()
                    } else {
                        let out = run_finetune(&cfg, &ft, &pre.state, &data, &probes)?;
                        run_eval(&cfg, &out.state, &data.eval)?
                    };
                    run.reports.insert(key.into(), r);
                }
                run.reports.insert(REG_ON.into(), report.clone());
                let off = FinetuneConfig { lambda_r: 0.0, ..cfg.finetune.clone() };
                let out = run_finetune(&cfg, &off, &pre.state, &data, &probes)?;
                run.reports.insert(REG_OFF.into(), run_eval(&cfg, &out.state, &data.eval)?);
            }
            run.reports.insert(strategy.name().into(), report);
        }
        runs.push(run);
    }
    Ok(runs)
}

/// The three mean±std tables of an ablation: strategies, tactile loss and
/// regularization.
pub fn ablation_tables(runs: &[AblationRun]) -> [(&'static str, SeedSummary); 3] {
    let group = |label: &str, key: &str| -> (String, Vec<MetricReport>) {
        (label.to_string(), runs.iter().filter_map(|r| r.reports.get(key).cloned()).collect())
    };
    let mut strategies = vec![group("pretrained", "pretrained")];
    strategies.extend(Strategy::ALL.iter().map(|s| group(s.name(), s.name())));
    let tactile = vec![group("patch", TACTILE_PATCH), group("pixel", TACTILE_PIXEL)];
    let regularization = vec![
        group("pretrained", "pretrained"),
        group("with_regularization", REG_ON),
        group("without_regularization", REG_OFF),
    ];
    [
        ("ablate_strategies", SeedSummary::new("touch selection strategies", &strategies)),
        ("ablate_tactile", SeedSummary::new("tactile loss support", &tactile)),
        ("ablate_regularization", SeedSummary::new("regularization", &regularization)),
    ]
}

pub fn stage_ablate(
    cfg: &ExperimentConfig,
    ws: &Workspace,
    seeds: usize,
    progress: &mut dyn FnMut(&str),
) -> Result<(Manifest, Vec<AblationRun>)> {
    if seeds == 0 {
        return Err(Error::config("ablate needs at least one seed"));
    }
    let runs = ablate(cfg, seeds, progress)?;
    let mut rec = Recorder::new(ws, cfg);
    let dir = ws.reports();
    for (stem, table) in ablation_tables(&runs) {
        write_summary(&mut rec, &dir, stem, &table)?;
    }
    rec.write(&dir.join("ablate_runs.json"), (serde_json::to_string_pretty(&runs)? + "\n").as_bytes())?;
    Ok((rec.finish(ABLATE.into())?, runs))
}
