//! Runs the desk benchmark grid and prints transparent/diffuse EPE.
//! Usage: cargo run --release --example calibrate -- [key=value ...]

use std::time::Instant;

use tacstereo::evaluator::Split;
use tacstereo::finetuner::{FinetuneConfig, TactileMode};
use tacstereo::kv::KvConfig;
use tacstereo::pipeline::*;
use tacstereo::selector::Strategy;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kv = KvConfig::parse(&args.join("\n")).unwrap();
    let seeds: u64 = kv.parse_value("seeds").unwrap().unwrap_or(5);
    let mut sums = std::collections::BTreeMap::<String, (f64, f64)>::new();
    for seed in 0..seeds {
        let mut cfg = ExperimentConfig::desk();
        cfg.apply_kv(&experiment_keys(&kv)).unwrap();
        cfg.seed = seed;
        let t = Instant::now();
        let data = generate_dataset(&cfg).unwrap();
        let pre = run_pretrain(&cfg, &data).unwrap();
        let base = run_eval(&cfg, &pre.state, &data.eval).unwrap();
        let mut line = format!(
            "seed {seed}: pre val {:.3} ep {} ({:.1}s) trans {:.3} diff {:.3}",
            pre.val_epe,
            pre.epochs_run,
            t.elapsed().as_secs_f64(),
            base.split(Split::Trans).epe_px,
            base.split(Split::Diffuse).epe_px
        );
        let mut add = |name: &str, r: &tacstereo::evaluator::MetricReport| {
            let e = sums.entry(name.to_string()).or_default();
            e.0 += r.split(Split::Trans).epe_px;
            e.1 += r.split(Split::Diffuse).epe_px + 0.0 * r.split(Split::Background).epe_px;
        };
        add("pretrained", &base);
        let only: bool = kv.parse_value("only_utility").unwrap().unwrap_or(false);
        for s in Strategy::ALL {
            if only && s != Strategy::Utility {
                continue;
            }
            let t = Instant::now();
            let (touches, _) = run_select(&cfg, s, &pre.state, &data).unwrap();
            let ts = t.elapsed().as_secs_f64();
            let probes = run_probe(&cfg, &data, &touches).unwrap();
            let on_trans = touches.records.iter().filter(|r| {
                let smp = data.probing.iter().find(|x| x.scene_id == r.scene_id && x.view_id == r.view_id).unwrap();
                smp.material.get(r.u, r.v) == tacstereo::scenegen::Material::Transparent
            }).count();
            line += &format!("\n   {:>14}: {on_trans}/{} touches on transparent", s.name(), touches.len());
            let mut variants: Vec<(String, FinetuneConfig)> = vec![(s.name().into(), cfg.finetune.clone())];
            if s == Strategy::Utility {
                variants.push(("utility_pixel".into(), FinetuneConfig { tactile_mode: TactileMode::Pixel, ..cfg.finetune.clone() }));
                variants.push(("utility_noreg".into(), FinetuneConfig { lambda_r: 0.0, ..cfg.finetune.clone() }));
                for extra in [0.03, 0.1, 0.3, 3.0] {
                    if kv.parse_value::<bool>("sweep_r").unwrap().unwrap_or(false) {
                        variants.push((format!("utility_r{extra}"), FinetuneConfig { lambda_r: extra, ..cfg.finetune.clone() }));
                    }
                }
            }
            for (name, fc) in variants {
                let ft = run_finetune(&cfg, &fc, &pre.state, &data, &probes).unwrap();
                let r = run_eval(&cfg, &ft.state, &data.eval).unwrap();
                line += &format!(
                    "\n   {name:>14}: trans {:.3} diff {:.3} bg {:.3} (sel {ts:.1}s)",
                    r.split(Split::Trans).epe_px,
                    r.split(Split::Diffuse).epe_px,
                    r.split(Split::Background).epe_px
                );
                add(&name, &r);
            }
        }
        println!("{line}");
    }
    for (k, (t, d)) in &sums {
        println!("{k:>14}: trans {:.4} diff {:.4}", t / seeds as f64, d / seeds as f64);
    }
}

/// Drops the keys this tool reads itself so the rest can go to the config.
fn experiment_keys(kv: &KvConfig) -> KvConfig {
    let mut out = KvConfig::new();
    for (k, v) in kv.entries().iter().filter(|(k, _)| !["seeds", "only_utility", "sweep_r"].contains(&k.as_str())) {
        out.set(k, v);
    }
    out
}
