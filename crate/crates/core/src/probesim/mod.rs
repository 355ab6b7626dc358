//! Simulated tactile probing: ground-truth depth plus bounded relocation
//! noise, converted back to a disparity label.

use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::KvConfig;
use crate::scalar::Real;
use crate::scenegen::{mix, SceneSample};
use crate::selector::{Touch, TouchSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    TruncatedNormal,
    Uniform,
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NoiseModel::None),
            "truncated_normal" => Ok(NoiseModel::TruncatedNormal),
            "uniform" => Ok(NoiseModel::Uniform),
            _ => Err(Error::config(format!("unknown noise model `{s}`"))),
        }
    }
}

impl NoiseModel {
    pub fn name(self) -> &'static str {
        match self {
            NoiseModel::None => "none",
            NoiseModel::TruncatedNormal => "truncated_normal",
            NoiseModel::Uniform => "uniform",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeConfig {
    pub noise_model: NoiseModel,
    pub noise_sigma_m: f64,
    pub noise_bound_m: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            noise_model: NoiseModel::TruncatedNormal,
            noise_sigma_m: 0.001,
            noise_bound_m: 0.003,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma_m >= 0.0) || !(self.noise_bound_m >= 0.0) {
            return Err(Error::config("probe noise sigma and bound must be non-negative"));
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, kv: &KvConfig) -> Result<()> {
        kv.read_into("probe.noise_model", &mut self.noise_model)?;
        kv.read_into("probe.noise_sigma_m", &mut self.noise_sigma_m)?;
        kv.read_into("probe.noise_bound_m", &mut self.noise_bound_m)?;
        kv.read_into("probe.seed", &mut self.seed)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("probe.noise_model", self.noise_model.name());
        kv.set("probe.noise_sigma_m", self.noise_sigma_m);
        kv.set("probe.noise_bound_m", self.noise_bound_m);
        kv.set("probe.seed", self.seed);
        kv
    }

    /// The relocation error for `touch`, a pure function of seed and touch.
    pub fn noise_for(&self, touch: &Touch) -> f64 {
        let key = mix(mix(mix(self.seed, touch.scene_id), touch.view_id as u64), ((touch.u as u64) << 32) | touch.v as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let b = self.noise_bound_m;
        let eta = match self.noise_model {
            NoiseModel::None => 0.0,
            _ if b == 0.0 => 0.0,
            NoiseModel::Uniform => Uniform::new_inclusive(-b, b).sample(&mut rng),
            NoiseModel::TruncatedNormal => {
                if self.noise_sigma_m == 0.0 {
                    0.0
                } else {
                    let normal = Normal::new(0.0, self.noise_sigma_m).expect("valid sigma");
                    (0..10_000)
                        .map(|_| normal.sample(&mut rng))
                        .find(|x: &f64| x.abs() <= b)
                        .unwrap_or(0.0)
                }
            }
        };
        eta.clamp(-b, b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub scene_id: u64,
    pub view_id: u32,
    pub u: usize,
    pub v: usize,
    /// `NaN` when the probe failed.
    pub measured_depth_m: f64,
    pub derived_disparity_px: f64,
    pub success: bool,
}

impl ProbeResult {
    pub fn touch(&self) -> Touch {
        Touch {
            scene_id: self.scene_id,
            view_id: self.view_id,
            u: self.u,
            v: self.v,
        }
    }

    fn failed(t: &Touch) -> Self {
        Self {
            scene_id: t.scene_id,
            view_id: t.view_id,
            u: t.u,
            v: t.v,
            measured_depth_m: f64::NAN,
            derived_disparity_px: f64::NAN,
            success: false,
        }
    }
}

/// Probes one pixel of `sample`. A pixel without valid ground truth yields
/// an unsuccessful result rather than an error.
pub fn probe<T: Real>(sample: &SceneSample<T>, touch: &Touch, cfg: &ProbeConfig) -> Result<ProbeResult> {
    if (touch.scene_id, touch.view_id) != (sample.scene_id, sample.view_id) {
        return Err(Error::Domain(format!(
            "touch for scene {} view {} applied to scene {} view {}",
            touch.scene_id, touch.view_id, sample.scene_id, sample.view_id
        )));
    }
    if !sample.gt_disparity.contains(touch.u as isize, touch.v as isize) {
        return Err(Error::Domain(format!("touch ({}, {}) lies outside the image", touch.u, touch.v)));
    }
    let d = sample.gt_disparity.get(touch.u, touch.v).to_f64_lossy();
    if d.is_nan() {
        return Ok(ProbeResult::failed(touch));
    }
    let z = sample.rig.disparity_to_depth(d)? + cfg.noise_for(touch);
    let Ok(disparity) = sample.rig.depth_to_disparity(z) else {
        return Ok(ProbeResult::failed(touch));
    };
    Ok(ProbeResult {
        scene_id: touch.scene_id,
        view_id: touch.view_id,
        u: touch.u,
        v: touch.v,
        measured_depth_m: z,
        derived_disparity_px: disparity,
        success: true,
    })
}

/// Results of probing a touch set, in touch order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProbeBatch {
    pub results: Vec<ProbeResult>,
    /// Probes spent, failures included.
    pub probes_spent: usize,
}

impl ProbeBatch {
    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| !r.success).count()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.results {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| Error::config(format!("csv flush: {e}")))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let results = r.deserialize().collect::<std::result::Result<Vec<ProbeResult>, _>>()?;
        Ok(Self {
            probes_spent: results.len(),
            results,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::scenegen::write_bytes(path, &self.to_csv()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&crate::scenegen::read_bytes(path)?)
    }
}

pub fn probe_batch<T: Real>(samples: &[SceneSample<T>], touches: &TouchSet, cfg: &ProbeConfig) -> Result<ProbeBatch> {
    cfg.validate()?;
    let mut batch = ProbeBatch::default();
    for t in touches.touches() {
        let sample = samples
            .iter()
            .find(|s| s.scene_id == t.scene_id && s.view_id == t.view_id)
            .ok_or_else(|| Error::Domain(format!("no view for scene {} view {}", t.scene_id, t.view_id)))?;
        batch.results.push(probe(sample, &t, cfg)?);
        batch.probes_spent += 1;
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_scene, SceneConfig};
    use crate::selector::Strategy;

    fn sample() -> SceneSample<f64> {
        generate_scene(1, &SceneConfig::desk()).unwrap()
    }

    fn touch(s: &SceneSample<f64>, u: usize, v: usize) -> Touch {
        Touch { scene_id: s.scene_id, view_id: s.view_id, u, v }
    }

    #[test]
    fn noiseless_probe_is_exact() {
        let s = sample();
        let cfg = ProbeConfig { noise_model: NoiseModel::None, ..Default::default() };
        let r = probe(&s, &touch(&s, 60, 40), &cfg).unwrap();
        let d = s.gt_disparity.get(60, 40);
        assert!(r.success);
        assert_eq!(r.measured_depth_m, s.rig.disparity_to_depth(d).unwrap());
        assert!((r.derived_disparity_px - d).abs() < 1e-12);
    }

    #[test]
    fn draws_are_bounded_and_replayable() {
        let s = sample();
        for model in [NoiseModel::TruncatedNormal, NoiseModel::Uniform] {
            let cfg = ProbeConfig { noise_model: model, seed: 5, ..Default::default() };
            for u in 20..60 {
                let t = touch(&s, u, 30);
                let a = probe(&s, &t, &cfg).unwrap();
                let b = probe(&s, &t, &cfg).unwrap();
                assert_eq!(a.measured_depth_m.to_bits(), b.measured_depth_m.to_bits());
                let gt = s.rig.disparity_to_depth(s.gt_disparity.get(u, 30)).unwrap();
                assert!((a.measured_depth_m - gt).abs() <= 0.003 + 1e-15);
            }
        }
    }

    #[test]
    fn invalid_pixel_fails_without_dropping() {
        let mut s = sample();
        s.gt_disparity.set(10, 10, f64::NAN);
        let mut set = TouchSet::default();
        set.push(touch(&s, 10, 10), Strategy::Random);
        set.push(touch(&s, 11, 10), Strategy::Random);
        let batch = probe_batch(std::slice::from_ref(&s), &set, &ProbeConfig::default()).unwrap();
        assert_eq!(batch.results.len(), 2);
        assert_eq!(batch.probes_spent, 2);
        assert_eq!(batch.failures(), 1);
        assert!(!batch.results[0].success && batch.results[1].success);
        let empty = probe_batch(std::slice::from_ref(&s), &TouchSet::default(), &ProbeConfig::default()).unwrap();
        assert!(empty.results.is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let s = sample();
        let mut set = TouchSet::default();
        set.push(touch(&s, 40, 20), Strategy::Random);
        let batch = probe_batch(std::slice::from_ref(&s), &set, &ProbeConfig::default()).unwrap();
        let bytes = batch.to_csv().unwrap();
        assert!(String::from_utf8_lossy(&bytes).starts_with("scene_id,view_id,u,v,measured_depth_m,derived_disparity_px,success"));
        assert_eq!(ProbeBatch::from_csv(&bytes).unwrap(), batch);
    }
}
