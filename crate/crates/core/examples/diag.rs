//! Upper-bound check: finetune on dense transparent labels.
use tacstereo::evaluator::Split;
use tacstereo::finetuner::*;
use tacstereo::kv::KvConfig;
use tacstereo::pipeline::*;
use tacstereo::scenegen::Material;
use tacstereo::stereomodel::*;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kv = KvConfig::parse(&args.join("\n")).unwrap();
    let mut cfg = ExperimentConfig::desk();
    cfg.apply_kv(&experiment_keys(&kv)).unwrap();
    let epochs: usize = kv.parse_value("epochs").unwrap().unwrap_or(20);
    let data = generate_dataset(&cfg).unwrap();
    let pre = run_pretrain(&cfg, &data).unwrap();
    let base = run_eval(&cfg, &pre.state, &data.eval).unwrap();
    println!("pre val {:.3} trans {:.3} diff {:.3} bg {:.3} tau {:.4}", pre.val_epe, base.split(Split::Trans).epe_px, base.split(Split::Diffuse).epe_px, base.split(Split::Background).epe_px, pre.state.tau());
    let hyps = cfg.hypotheses().unwrap();
    // mean pred on transparent vs gt vs bg
    let mut views = Vec::new();
    for s in &data.probing {
        let input = StereoInput::from_sample(s, pre.state.descriptor);
        let fwd = forward(&input, &pre.state, &hyps);
        let mut targets = Vec::new();
        for (u, v, m) in s.material.iter_indexed() {
            if m == Material::Transparent || (u % 4 == 0 && v % 4 == 0 && m != Material::Boundary) {
                targets.push(SparseTarget { u, v, target: s.gt_disparity.get(u, v) });
            }
        }
        views.push(FinetuneView { input, labels: vec![], targets, anchor: fwd.pred.clone(), pseudo: fwd.pred.map(|_| false) });
    }
    for lr in [0.003, 0.01, 0.03] {
        let hyps = cfg.hypotheses().unwrap();
        let mut state = pre.state.clone();
        let mut adam = Adam::new(AdamConfig::with_lr(lr), state.num_params());
        for _ in 0..epochs {
            for v in &views {
                let spec = LossSpec::Sparse { entries: &v.targets, beta: 1.0 };
                let (_, g, _) = loss_gradients(&state, &v.input, &hyps, &spec);
                let mut p = state.params();
                adam.adam_step(&mut p, &g.flat());
                state.set_params(&p);
            }
        }
        let r = run_eval(&cfg, &state, &data.eval).unwrap();
        println!("dense lr {lr}: trans {:.3} diff {:.3} bg {:.3} tau {:.4}", r.split(Split::Trans).epe_px, r.split(Split::Diffuse).epe_px, r.split(Split::Background).epe_px, state.tau());
    }
}

/// Drops the keys this tool reads itself so the rest can go to the config.
fn experiment_keys(kv: &KvConfig) -> KvConfig {
    let mut out = KvConfig::new();
    for (k, v) in kv.entries().iter().filter(|(k, _)| !["epochs"].contains(&k.as_str())) {
        out.set(k, v);
    }
    out
}
