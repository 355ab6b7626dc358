//! Experiment orchestration: configuration, stages and on-disk artifacts.

mod artifacts;
mod experiment;
mod stages;

pub use artifacts::{decode_view, encode_view, save_view, sha256_hex, Manifest, Workspace};
pub use experiment::{
    generate_dataset, run_eval, run_finetune, run_pretrain, run_pretrain_views, run_probe, run_probe_views,
    run_select, run_select_views, Dataset, ExperimentConfig, Profile,
};
pub use stages::{
    ablate, ablation_tables, full_run, run_label, stage_ablate, stage_eval, stage_finetune, stage_gen_data,
    stage_pretrain, stage_probe, stage_select, AblationRun, ABLATE, EVAL, FINETUNE, GEN_DATA, PRETRAIN, PROBE,
    REG_OFF, REG_ON, SELECT, TACTILE_PATCH, TACTILE_PIXEL,
};
