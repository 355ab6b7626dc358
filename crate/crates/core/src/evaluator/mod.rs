//! Disparity and depth metrics split by material, plus comparison tables.

mod tables;

pub use tables::{ComparisonTable, SeedSummary, SummaryRow};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::scalar::Real;
use crate::scenegen::{CameraRig, Material, ObjectKind, SceneSample};

pub const SCHEMA_VERSION: u32 = 1;

/// Running sums for one pixel subset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    pub pixels: usize,
    pub abs_disparity: f64,
    pub bad1: usize,
    pub abs_depth_m: f64,
    pub gt4mm: usize,
    pub delta105: usize,
}

impl Accumulator {
    /// Adds one pixel; `pred` and `gt` are disparities in pixels.
    pub fn add(&mut self, pred: f64, gt: f64, rig: &CameraRig) {
        let err = (pred - gt).abs();
        // one conversion path for every depth metric
        let fb = rig.focal_baseline();
        let (z, zgt) = (fb / pred, fb / gt);
        let dz = (z - zgt).abs();
        self.pixels += 1;
        self.abs_disparity += err;
        self.bad1 += usize::from(err > 1.0);
        self.abs_depth_m += dz;
        self.gt4mm += usize::from(dz > 0.004);
        self.delta105 += usize::from(dz / zgt < 0.05);
    }

    pub fn merge(&mut self, o: &Accumulator) {
        self.pixels += o.pixels;
        self.abs_disparity += o.abs_disparity;
        self.bad1 += o.bad1;
        self.abs_depth_m += o.abs_depth_m;
        self.gt4mm += o.gt4mm;
        self.delta105 += o.delta105;
    }

    pub fn metrics(&self) -> SplitMetrics {
        let n = self.pixels as f64;
        let frac = |c: usize| if self.pixels == 0 { f64::NAN } else { c as f64 / n };
        SplitMetrics {
            epe_px: if self.pixels == 0 { f64::NAN } else { self.abs_disparity / n },
            bad1: frac(self.bad1),
            abs_depth_mm: if self.pixels == 0 { f64::NAN } else { 1000.0 * self.abs_depth_m / n },
            frac_gt_4mm: frac(self.gt4mm),
            delta105: frac(self.delta105),
            pixel_count: self.pixels,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub epe_px: f64,
    pub bad1: f64,
    pub abs_depth_mm: f64,
    pub frac_gt_4mm: f64,
    pub delta105: f64,
    pub pixel_count: usize,
}

fn masked<T: Real>(pred: &Grid<T>, gt: &Grid<T>, mask: &Grid<bool>, rig: &CameraRig) -> Accumulator {
    let mut acc = Accumulator::default();
    for (u, v, m) in mask.iter_indexed() {
        let g = gt.get(u, v).to_f64_lossy();
        if m && !g.is_nan() {
            acc.add(pred.get(u, v).to_f64_lossy(), g, rig);
        }
    }
    acc
}

/// Mean absolute disparity error over valid masked pixels.
pub fn epe<T: Real>(pred: &Grid<T>, gt: &Grid<T>, mask: &Grid<bool>) -> f64 {
    // the rig only matters for depth metrics
    masked(pred, gt, mask, &CameraRig::desk()).metrics().epe_px
}

/// Fraction of pixels whose disparity error exceeds one pixel.
pub fn bad1<T: Real>(pred: &Grid<T>, gt: &Grid<T>, mask: &Grid<bool>) -> f64 {
    masked(pred, gt, mask, &CameraRig::desk()).metrics().bad1
}

/// Mean absolute depth error in millimetres.
pub fn abs_depth_err<T: Real>(pred: &Grid<T>, gt: &Grid<T>, rig: &CameraRig, mask: &Grid<bool>) -> f64 {
    masked(pred, gt, mask, rig).metrics().abs_depth_mm
}

pub fn frac_gt_4mm<T: Real>(pred: &Grid<T>, gt: &Grid<T>, rig: &CameraRig, mask: &Grid<bool>) -> f64 {
    masked(pred, gt, mask, rig).metrics().frac_gt_4mm
}

/// Fraction of pixels with relative depth error strictly below 5%.
pub fn delta105<T: Real>(pred: &Grid<T>, gt: &Grid<T>, rig: &CameraRig, mask: &Grid<bool>) -> f64 {
    masked(pred, gt, mask, rig).metrics().delta105
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    All,
    Trans,
    Diffuse,
    Background,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::All, Split::Trans, Split::Diffuse, Split::Background];

    pub fn name(self) -> &'static str {
        match self {
            Split::All => "all",
            Split::Trans => "trans",
            Split::Diffuse => "diffuse",
            Split::Background => "background",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalConfig {
    /// Keep boundary-ring pixels in every split.
    pub include_boundary: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { include_boundary: true }
    }
}

/// Metric sums over any number of views.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportBuilder {
    splits: BTreeMap<Split, Accumulator>,
    classes: BTreeMap<String, Accumulator>,
}

impl ReportBuilder {
    /// Boundary pixels count towards the object (or background) they belong to.
    pub fn add_view<T: Real>(&mut self, pred: &Grid<T>, sample: &SceneSample<T>, cfg: &EvalConfig) {
        for (u, v, gt) in sample.gt_disparity.iter_indexed() {
            let g = gt.to_f64_lossy();
            if g.is_nan() {
                continue;
            }
            let material = sample.material.get(u, v);
            if material == Material::Boundary && !cfg.include_boundary {
                continue;
            }
            let id = sample.object_id.get(u, v) as usize;
            let object = (id > 0).then(|| &sample.objects[id - 1]);
            let split = match object.map(|o| o.kind) {
                None => Split::Background,
                Some(ObjectKind::Transparent) => Split::Trans,
                Some(ObjectKind::Diffuse) => Split::Diffuse,
            };
            let p = pred.get(u, v).to_f64_lossy();
            for s in [Split::All, split] {
                self.splits.entry(s).or_default().add(p, g, &sample.rig);
            }
            if let Some(o) = object {
                self.classes.entry(o.class_label()).or_default().add(p, g, &sample.rig);
            }
        }
    }

    pub fn finish(&self) -> MetricReport {
        MetricReport {
            schema_version: SCHEMA_VERSION,
            splits: Split::ALL
                .iter()
                .map(|&s| (s, self.splits.get(&s).copied().unwrap_or_default().metrics()))
                .collect(),
            per_class_abs_depth_mm: self
                .classes
                .iter()
                .map(|(k, a)| (k.clone(), a.metrics().abs_depth_mm))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub splits: BTreeMap<Split, SplitMetrics>,
    /// Mean absolute depth error per object class (`kind#instance`).
    pub per_class_abs_depth_mm: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn split(&self, s: Split) -> &SplitMetrics {
        &self.splits[&s]
    }
}

pub fn report<T: Real>(pred: &Grid<T>, sample: &SceneSample<T>, cfg: &EvalConfig) -> MetricReport {
    let mut b = ReportBuilder::default();
    b.add_view(pred, sample, cfg);
    b.finish()
}

/// One report over several views, weighting every valid pixel equally.
pub fn report_many<T: Real>(views: &[(Grid<T>, &SceneSample<T>)], cfg: &EvalConfig) -> MetricReport {
    let mut b = ReportBuilder::default();
    for (pred, sample) in views {
        b.add_view(pred, sample, cfg);
    }
    b.finish()
}

#[cfg(test)]
mod tests;
