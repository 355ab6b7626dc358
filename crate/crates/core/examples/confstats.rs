//! Confidence percentiles per material after pretraining.
use tacstereo::kv::KvConfig;
use tacstereo::pipeline::*;
use tacstereo::scenegen::Material;
use tacstereo::selector::confidence_map;
use tacstereo::stereomodel::*;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kv = KvConfig::parse(&args.join("\n")).unwrap();
    let mut cfg = ExperimentConfig::desk();
    cfg.apply_kv(&experiment_keys(&kv)).unwrap();
    let data = generate_dataset(&cfg).unwrap();
    let pre = run_pretrain(&cfg, &data).unwrap();
    let hyps = cfg.hypotheses().unwrap();
    let r = run_eval(&cfg, &pre.state, &data.eval).unwrap();
    use tacstereo::evaluator::Split;
    println!("val {:.3} tau {:.4} trans {:.3} diff {:.3} bg {:.3}", pre.val_epe, pre.state.tau(), r.split(Split::Trans).epe_px, r.split(Split::Diffuse).epe_px, r.split(Split::Background).epe_px);
    {
        let s = &data.probing[0];
        let m: f64 = s.left.as_slice().iter().sum::<f64>() / s.left.len() as f64;
        let sd = (s.left.as_slice().iter().map(|x| (x - m).powi(2)).sum::<f64>() / s.left.len() as f64).sqrt();
        println!("left mean {m:.3} std {sd:.3}");
    }
    if std::env::var("MAP").is_ok() {
        let s = &data.probing[0];
        let c1: f64 = kv.parse_value("c1").unwrap().unwrap_or(0.999);
        let input = StereoInput::from_sample(s, pre.state.descriptor);
        let f = forward(&input, &pre.state, &hyps);
        let c = confidence_map(&f.prob, &f.pred, &hyps, 3.0);
        for v in (0..s.height()).step_by(2) {
            let mut line = String::new();
            for u in 0..s.width() {
                let m = s.material.get(u, v);
                let unc = c.get(u, v) <= c1;
                line.push(match (m, unc) {
                    (Material::Transparent, true) => 'T', (Material::Transparent, false) => 't',
                    (Material::Diffuse, true) => 'D', (Material::Diffuse, false) => 'd',
                    (Material::Background, true) => '#', (Material::Background, false) => '.',
                    (Material::Boundary, true) => 'B', (Material::Boundary, false) => 'b',
                });
            }
            println!("{line}");
        }
    }
    for eps in [3.0] {
        let mut by: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
        for s in &data.probing {
            let input = StereoInput::from_sample(s, pre.state.descriptor);
            let f = forward(&input, &pre.state, &hyps);
            let c = confidence_map(&f.prob, &f.pred, &hyps, eps);
            for (u, v, m) in s.material.iter_indexed() {
                let k = match m { Material::Transparent => "trans", Material::Diffuse => "diff", Material::Background => "bg", Material::Boundary => "bnd" };
                by.entry(k).or_default().push(c.get(u, v));
            }
        }
        for (k, mut v) in by {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let q = |p: f64| v[((v.len() - 1) as f64 * p) as usize];
            let f = |t: f64| v.iter().filter(|&&x| x <= t).count() as f64 / v.len() as f64;
            println!("eps {eps} {k:>5}: p10 {:.4} p20 {:.4} p50 {:.4} | <=0.9 {:.3} <=0.99 {:.3} <=0.999 {:.3} <=0.9999 {:.3}", q(0.1), q(0.2), q(0.5), f(0.9), f(0.99), f(0.999), f(0.9999));
        }
    }
}

#[allow(dead_code)]
fn _unused() {}

/// Drops the keys this tool reads itself so the rest can go to the config.
fn experiment_keys(kv: &KvConfig) -> KvConfig {
    let mut out = KvConfig::new();
    for (k, v) in kv.entries().iter().filter(|(k, _)| !["c1"].contains(&k.as_str())) {
        out.set(k, v);
    }
    out
}
