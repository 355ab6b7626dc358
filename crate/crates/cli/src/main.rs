//! Command-line driver for the touch-selection and finetuning pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tacstereo::kv::KvConfig;
use tacstereo::pipeline::{
    ablation_tables, full_run, stage_ablate, stage_eval, stage_finetune, stage_gen_data, stage_pretrain, stage_probe,
    stage_select, ExperimentConfig, Manifest, Profile, Workspace,
};
use tacstereo::selector::Strategy;
use tacstereo::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "tacstereo", version, about = "Touch selection and sparse-label finetuning for simulated stereo")]
struct Cli {
    /// key = value configuration file (supports `include <path>`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Experiment seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Parameter profile: desk or paper. Defaults to the config file's
    /// `profile` entry, then desk.
    #[arg(long, global = true)]
    profile: Option<Profile>,
    /// Touch selection strategy: utility, random, confidence, oracle_center.
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
    /// Extra `key=value` override, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate pretraining, validation, probing and evaluation scenes.
    GenData,
    /// Pretrain the stereo model on diffuse-only scenes.
    Pretrain,
    /// Choose touch pixels on the probing views.
    Select,
    /// Probe the chosen pixels with the simulated tactile sensor.
    Probe,
    /// Finetune the pretrained model on the probe labels.
    Finetune,
    /// Compare pretrained and finetuned models on held-out scenes.
    Eval,
    /// Strategy, tactile-loss and regularization grids over several seeds.
    Ablate {
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Run gen-data through eval in one go.
    FullRun,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut kv = match &cli.config {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::new(),
    };
    for entry in &cli.set {
        let Some((k, v)) = entry.split_once('=') else {
            return Err(Error::config(format!("--set expects KEY=VALUE, got `{entry}`")));
        };
        kv.set(k.trim(), v.trim());
    }
    let profile = match (cli.profile, kv.parse_value::<Profile>("profile")?) {
        (Some(p), _) => p,
        (None, Some(p)) => p,
        (None, None) => Profile::Desk,
    };
    let mut cfg = ExperimentConfig::for_profile(profile);
    cfg.apply_kv(&kv)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(s) = cli.strategy {
        cfg.strategy = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn announce(m: &Manifest) {
    println!("{}: wrote {} file(s), read {} input(s)", m.stage, m.outputs.len(), m.inputs.len());
}

fn print_report(ws: &Workspace, m: &Manifest) {
    for rel in m.outputs.keys().filter(|k| k.ends_with(".txt") && k.starts_with("reports/")) {
        if let Ok(text) = std::fs::read_to_string(ws.root().join(rel)) {
            println!("\n{text}");
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let ws = Workspace::new(&cli.out_dir);
    let mut progress = |msg: &str| eprintln!("[{}] {msg}", cfg.profile.name());
    match &cli.command {
        Command::GenData => announce(&stage_gen_data(&cfg, &ws)?),
        Command::Pretrain => announce(&stage_pretrain(&cfg, &ws)?),
        Command::Select => announce(&stage_select(&cfg, &ws)?),
        Command::Probe => announce(&stage_probe(&cfg, &ws)?),
        Command::Finetune => announce(&stage_finetune(&cfg, &ws)?),
        Command::Eval => {
            let m = stage_eval(&cfg, &ws)?;
            announce(&m);
            print_report(&ws, &m);
        }
        Command::Ablate { seeds } => {
            let (m, runs) = stage_ablate(&cfg, &ws, *seeds, &mut progress)?;
            announce(&m);
            for (_, table) in ablation_tables(&runs) {
                println!("\n{}", table.to_text());
            }
        }
        Command::FullRun => {
            let manifests = full_run(&cfg, &ws, &mut progress)?;
            for m in &manifests {
                announce(m);
            }
            if let Some(last) = manifests.last() {
                print_report(&ws, last);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
