//! Synthetic rectified stereo scenes with diffuse and transparent objects.
//!
//! The background is a textured fronto-parallel plane; objects are textured
//! planes at their own (larger) disparity. Transparent objects carry the
//! ground-truth disparity of their surface, but the right view inside them is
//! dominated by the background seen through the object, so photometric
//! evidence points at the background plane.

mod io;
mod rig;
mod texture;
mod warp;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kv::{read_bool, KvConfig};
use crate::scalar::Real;

pub use io::{
    decode_pfm, decode_pgm, dequantize16, encode_pfm, encode_pgm16, encode_pgm8, load_image,
    load_pfm, load_pgm8, quantize16, save_image, save_pfm, save_pfm_stack, save_pgm8,
};
pub(crate) use io::{read as read_bytes, write_bytes};
pub use rig::CameraRig;
pub use texture::{Octave, ValueNoise};
pub use warp::{warp_right_from_left, Warped};

/// Per-pixel material label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Material {
    Background,
    Diffuse,
    Transparent,
    Boundary,
}

impl Material {
    /// Code used in 8-bit mask images.
    pub fn code(self) -> u8 {
        match self {
            Material::Background => 0,
            Material::Diffuse => 64,
            Material::Transparent => 128,
            Material::Boundary => 255,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Material::Background),
            64 => Some(Material::Diffuse),
            128 => Some(Material::Transparent),
            255 => Some(Material::Boundary),
            _ => None,
        }
    }
}

pub type MaterialMask = Grid<Material>;

pub fn mask_to_codes(mask: &MaterialMask) -> Grid<u8> {
    mask.map(Material::code)
}

pub fn mask_from_codes(codes: &Grid<u8>) -> Result<MaterialMask> {
    if let Some((u, v, c)) = codes.iter_indexed().find(|&(_, _, c)| Material::from_code(c).is_none()) {
        return Err(Error::config(format!("unknown material code {c} at ({u}, {v})")));
    }
    Ok(codes.map(|c| Material::from_code(c).unwrap()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectKind {
    Diffuse,
    Transparent,
}

impl ObjectKind {
    pub fn material(self) -> Material {
        match self {
            ObjectKind::Diffuse => Material::Diffuse,
            ObjectKind::Transparent => Material::Transparent,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::Diffuse => "diffuse",
            ObjectKind::Transparent => "transparent",
        }
    }
}

/// Silhouette in pixel coordinates (pixel centers sit on integers).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// Half-open box `[cx - w/2, cx + w/2) x [cy - h/2, cy + h/2)`.
    Rect { cx: f64, cy: f64, w: f64, h: f64 },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
}

impl Shape {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        match *self {
            Shape::Rect { cx, cy, w, h } => {
                u >= cx - w / 2.0 && u < cx + w / 2.0 && v >= cy - h / 2.0 && v < cy + h / 2.0
            }
            Shape::Ellipse { cx, cy, rx, ry } => {
                let a = (u - cx) / rx;
                let b = (v - cy) / ry;
                a * a + b * b <= 1.0
            }
        }
    }

    pub fn center(&self) -> (f64, f64) {
        match *self {
            Shape::Rect { cx, cy, .. } | Shape::Ellipse { cx, cy, .. } => (cx, cy),
        }
    }

    /// Axis-aligned half extents.
    pub fn half_extent(&self) -> (f64, f64) {
        match *self {
            Shape::Rect { w, h, .. } => (w / 2.0, h / 2.0),
            Shape::Ellipse { rx, ry, .. } => (rx, ry),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub kind: ObjectKind,
    pub shape: Shape,
    pub disparity: f64,
    /// Object identity; selects the surface texture.
    pub instance: u32,
}

impl ObjectSpec {
    pub fn class_label(&self) -> String {
        format!("{}#{}", self.kind.name(), self.instance)
    }

    /// Parses `<kind> <rect|ellipse> <cx> <cy> <w> <h> <disparity> [instance]`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let bad = || Error::config(format!("malformed object `{s}`"));
        if parts.len() != 7 && parts.len() != 8 {
            return Err(bad());
        }
        let kind = match parts[0] {
            "diffuse" => ObjectKind::Diffuse,
            "transparent" => ObjectKind::Transparent,
            _ => return Err(bad()),
        };
        let num = |i: usize| parts[i].parse::<f64>().map_err(|_| bad());
        let (cx, cy, w, h, d) = (num(2)?, num(3)?, num(4)?, num(5)?, num(6)?);
        let shape = match parts[1] {
            "rect" => Shape::Rect { cx, cy, w, h },
            "ellipse" => Shape::Ellipse { cx, cy, rx: w / 2.0, ry: h / 2.0 },
            _ => return Err(bad()),
        };
        let instance = match parts.get(7) {
            Some(p) => p.parse().map_err(|_| bad())?,
            None => 0,
        };
        Ok(Self {
            kind,
            shape,
            disparity: d,
            instance,
        })
    }
}

impl std::fmt::Display for ObjectSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (kind, shape, cx, cy, w, h) = match self.shape {
            Shape::Rect { cx, cy, w, h } => (self.kind.name(), "rect", cx, cy, w, h),
            Shape::Ellipse { cx, cy, rx, ry } => {
                (self.kind.name(), "ellipse", cx, cy, 2.0 * rx, 2.0 * ry)
            }
        };
        write!(f, "{kind} {shape} {cx} {cy} {w} {h} {} {}", self.disparity, self.instance)
    }
}

/// Scene generation parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub rig: CameraRig,
    pub background_disparity_min: f64,
    pub background_disparity_max: f64,
    pub n_diffuse: usize,
    pub n_transparent: usize,
    pub object_size_min: f64,
    pub object_size_max: f64,
    pub object_disparity_min: f64,
    pub object_disparity_max: f64,
    /// Instance pools random objects are drawn from.
    pub diffuse_instances: Vec<u32>,
    pub transparent_instances: Vec<u32>,
    /// Explicit objects; when non-empty no random objects are placed.
    pub objects: Vec<ObjectSpec>,
    /// Weight of the transparent surface's own texture; 0 renders pure
    /// background through the object.
    pub transparent_alpha: f64,
    /// Drop the finest background octaves seen through transparent objects.
    pub transparent_blur: bool,
    /// Contrast kept inside transparent objects, around mid-grey.
    pub transparent_contrast: f64,
    /// Standard deviation of independent per-pixel sensor noise in each view.
    pub noise_sigma: f64,
    pub boundary_width: usize,
    /// Number of 3x3 invalid-ground-truth holes.
    pub invalid_holes: usize,
    /// Minimum gap between objects and to the image border.
    pub placement_margin: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SceneConfig {
    pub fn desk() -> Self {
        Self {
            rig: CameraRig::desk(),
            background_disparity_min: 8.0,
            background_disparity_max: 9.0,
            n_diffuse: 2,
            n_transparent: 2,
            object_size_min: 22.0,
            object_size_max: 32.0,
            object_disparity_min: 18.0,
            object_disparity_max: 34.0,
            diffuse_instances: (0..8).collect(),
            transparent_instances: (0..4).collect(),
            objects: Vec::new(),
            transparent_alpha: 0.3,
            transparent_blur: true,
            transparent_contrast: 1.0,
            noise_sigma: 0.0,
            boundary_width: 2,
            invalid_holes: 0,
            placement_margin: 4.0,
        }
    }

    pub fn paper() -> Self {
        Self {
            rig: CameraRig::paper(),
            background_disparity_min: 16.0,
            background_disparity_max: 24.0,
            n_diffuse: 3,
            n_transparent: 2,
            object_size_min: 40.0,
            object_size_max: 70.0,
            object_disparity_min: 36.0,
            object_disparity_max: 80.0,
            ..Self::desk()
        }
    }

    /// A scene with the given background disparity and explicit objects only.
    pub fn fixed(rig: CameraRig, background_disparity: f64, objects: Vec<ObjectSpec>) -> Self {
        Self {
            rig,
            background_disparity_min: background_disparity,
            background_disparity_max: background_disparity,
            n_diffuse: 0,
            n_transparent: 0,
            objects,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rig.validate()?;
        let (lo, hi) = (self.rig.disparity_min, self.rig.disparity_max);
        let in_range = |d: f64| d >= lo && d <= hi;
        if !(in_range(self.background_disparity_min)
            && in_range(self.background_disparity_max)
            && self.background_disparity_min <= self.background_disparity_max)
        {
            return Err(Error::config(format!(
                "background disparity [{}, {}] outside rig range [{lo}, {hi}]",
                self.background_disparity_min, self.background_disparity_max
            )));
        }
        if self.n_diffuse + self.n_transparent > 0 {
            if !(in_range(self.object_disparity_min)
                && in_range(self.object_disparity_max)
                && self.object_disparity_min <= self.object_disparity_max)
            {
                return Err(Error::config(format!(
                    "object disparity [{}, {}] outside rig range [{lo}, {hi}]",
                    self.object_disparity_min, self.object_disparity_max
                )));
            }
            if self.object_disparity_min <= self.background_disparity_max {
                return Err(Error::config("objects must be closer than the background"));
            }
            if !(self.object_size_min > 0.0 && self.object_size_min <= self.object_size_max) {
                return Err(Error::config("invalid object size range"));
            }
            if self.n_diffuse > 0 && self.diffuse_instances.is_empty()
                || self.n_transparent > 0 && self.transparent_instances.is_empty()
            {
                return Err(Error::config("empty object instance pool"));
            }
        }
        for o in &self.objects {
            if !in_range(o.disparity) {
                return Err(Error::config(format!(
                    "object disparity {} outside rig range [{lo}, {hi}]",
                    o.disparity
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.transparent_alpha) {
            return Err(Error::config("transparent_alpha must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.transparent_contrast) {
            return Err(Error::config("transparent_contrast must lie in [0, 1]"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::config("noise_sigma must be non-negative"));
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, kv: &KvConfig) -> Result<()> {
        let r = &mut self.rig;
        kv.read_into("width", &mut r.width)?;
        kv.read_into("height", &mut r.height)?;
        kv.read_into("focal_px", &mut r.focal_px)?;
        kv.read_into("baseline_m", &mut r.baseline_m)?;
        kv.read_into("disparity_min", &mut r.disparity_min)?;
        kv.read_into("disparity_max", &mut r.disparity_max)?;
        kv.read_into("background_disparity_min", &mut self.background_disparity_min)?;
        kv.read_into("background_disparity_max", &mut self.background_disparity_max)?;
        if let Some(d) = kv.parse_value::<f64>("background_disparity")? {
            self.background_disparity_min = d;
            self.background_disparity_max = d;
        }
        kv.read_into("n_diffuse", &mut self.n_diffuse)?;
        kv.read_into("n_transparent", &mut self.n_transparent)?;
        kv.read_into("object_size_min", &mut self.object_size_min)?;
        kv.read_into("object_size_max", &mut self.object_size_max)?;
        kv.read_into("object_disparity_min", &mut self.object_disparity_min)?;
        kv.read_into("object_disparity_max", &mut self.object_disparity_max)?;
        kv.read_into("transparent_alpha", &mut self.transparent_alpha)?;
        read_bool(kv, "transparent_blur", &mut self.transparent_blur)?;
        kv.read_into("transparent_contrast", &mut self.transparent_contrast)?;
        kv.read_into("noise_sigma", &mut self.noise_sigma)?;
        kv.read_into("boundary_width", &mut self.boundary_width)?;
        kv.read_into("invalid_holes", &mut self.invalid_holes)?;
        kv.read_into("placement_margin", &mut self.placement_margin)?;
        for (key, pool) in [
            ("diffuse_instances", &mut self.diffuse_instances),
            ("transparent_instances", &mut self.transparent_instances),
        ] {
            if let Some(list) = kv.get(key) {
                *pool = parse_list(list).ok_or_else(|| Error::config(format!("bad list `{key}`")))?;
            }
        }
        let objects: Vec<ObjectSpec> = kv.get_all("object").map(ObjectSpec::parse).collect::<Result<_>>()?;
        if !objects.is_empty() {
            self.objects = objects;
            self.n_diffuse = 0;
            self.n_transparent = 0;
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        let r = &self.rig;
        kv.set("width", r.width);
        kv.set("height", r.height);
        kv.set("focal_px", r.focal_px);
        kv.set("baseline_m", r.baseline_m);
        kv.set("disparity_min", r.disparity_min);
        kv.set("disparity_max", r.disparity_max);
        kv.set("background_disparity_min", self.background_disparity_min);
        kv.set("background_disparity_max", self.background_disparity_max);
        kv.set("n_diffuse", self.n_diffuse);
        kv.set("n_transparent", self.n_transparent);
        kv.set("object_size_min", self.object_size_min);
        kv.set("object_size_max", self.object_size_max);
        kv.set("object_disparity_min", self.object_disparity_min);
        kv.set("object_disparity_max", self.object_disparity_max);
        kv.set("diffuse_instances", join_list(&self.diffuse_instances));
        kv.set("transparent_instances", join_list(&self.transparent_instances));
        kv.set("transparent_alpha", self.transparent_alpha);
        kv.set("transparent_blur", self.transparent_blur);
        kv.set("transparent_contrast", self.transparent_contrast);
        kv.set("noise_sigma", self.noise_sigma);
        kv.set("boundary_width", self.boundary_width);
        kv.set("invalid_holes", self.invalid_holes);
        kv.set("placement_margin", self.placement_margin);
        for o in &self.objects {
            kv.set("object", o);
        }
        kv
    }
}

fn parse_list(s: &str) -> Option<Vec<u32>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().ok())
        .collect()
}

fn join_list(v: &[u32]) -> String {
    v.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

/// One rectified stereo view with ground truth.
#[derive(Clone, Debug)]
pub struct SceneSample<T> {
    pub left: Grid<T>,
    pub right: Grid<T>,
    /// Ground-truth disparity in pixels; `NaN` marks invalid pixels.
    pub gt_disparity: Grid<T>,
    pub material: MaterialMask,
    /// 0 for background, `k + 1` for `objects[k]`.
    pub object_id: Grid<u16>,
    pub objects: Vec<ObjectSpec>,
    pub rig: CameraRig,
    pub scene_id: u64,
    pub view_id: u32,
}

impl<T: Real> SceneSample<T> {
    pub fn width(&self) -> usize {
        self.left.width()
    }

    pub fn height(&self) -> usize {
        self.left.height()
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        !self.gt_disparity.get(u, v).is_nan()
    }

    /// `|left(u, v) - right(u - d, v)|` with linear interpolation, `None` when
    /// `u - d` leaves the image.
    pub fn photometric_residual(&self, u: usize, v: usize, d: T) -> Option<T> {
        let r = self.right.sample_row_linear(T::from_usize_lossy(u) - d, v)?;
        Some((self.left.get(u, v) - r).abs())
    }

    pub fn cast<U: Real>(&self) -> SceneSample<U> {
        SceneSample {
            left: self.left.cast(),
            right: self.right.cast(),
            gt_disparity: self.gt_disparity.cast(),
            material: self.material.clone(),
            object_id: self.object_id.clone(),
            objects: self.objects.clone(),
            rig: self.rig,
            scene_id: self.scene_id,
            view_id: self.view_id,
        }
    }
}

pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn texture_for(kind: ObjectKind, instance: u32) -> ValueNoise {
    match kind {
        ObjectKind::Diffuse => ValueNoise::broadband(mix(0xd1ff, instance as u64)),
        ObjectKind::Transparent => ValueNoise::fine(mix(0x7a45, instance as u64)),
    }
}

/// Generates view 0 of the scene identified by `seed`.
pub fn generate_scene<T: Real>(seed: u64, cfg: &SceneConfig) -> Result<SceneSample<T>> {
    generate_view(seed, 0, cfg)
}

/// Generates one view of a scene. All views of a scene share the background
/// texture and the set of object instances; object placement and the
/// background distance change per view.
pub fn generate_view<T: Real>(scene_seed: u64, view_id: u32, cfg: &SceneConfig) -> Result<SceneSample<T>> {
    cfg.validate()?;
    let mut scene_rng = ChaCha8Rng::seed_from_u64(mix(scene_seed, 0x5ce7e));
    let pick = |rng: &mut ChaCha8Rng, pool: &[u32], n: usize| -> Vec<u32> {
        let mut pool = pool.to_vec();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            if pool.is_empty() {
                break;
            }
            let k = rng.gen_range(0..pool.len());
            out.push(pool.swap_remove(k));
            let _ = i;
        }
        out
    };
    let diffuse = pick(&mut scene_rng, &cfg.diffuse_instances, cfg.n_diffuse);
    let transparent = pick(&mut scene_rng, &cfg.transparent_instances, cfg.n_transparent);
    let bg_texture = ValueNoise::broadband(scene_rng.gen());

    let mut view_rng = ChaCha8Rng::seed_from_u64(mix(mix(scene_seed, 0x71e3), view_id as u64));
    let bg_disparity = if cfg.background_disparity_min == cfg.background_disparity_max {
        cfg.background_disparity_min
    } else {
        view_rng
            .gen_range(cfg.background_disparity_min..=cfg.background_disparity_max)
            .round()
    };
    let objects = if cfg.objects.is_empty() {
        let wanted: Vec<(ObjectKind, u32)> = transparent
            .iter()
            .map(|&i| (ObjectKind::Transparent, i))
            .chain(diffuse.iter().map(|&i| (ObjectKind::Diffuse, i)))
            .collect();
        place_objects(&mut view_rng, cfg, &wanted)?
    } else {
        cfg.objects.clone()
    };

    let sample = render(cfg, bg_disparity, &bg_texture, &objects, &mut view_rng);
    Ok(SceneSample {
        scene_id: scene_seed,
        view_id,
        ..sample
    }
    .cast())
}

/// Places every wanted object, restarting the whole layout when one of them
/// finds no free spot.
fn place_objects(
    rng: &mut ChaCha8Rng,
    cfg: &SceneConfig,
    wanted: &[(ObjectKind, u32)],
) -> Result<Vec<ObjectSpec>> {
    for _ in 0..100 {
        if let Some(layout) = try_layout(rng, cfg, wanted) {
            return Ok(layout);
        }
    }
    Err(Error::config(format!(
        "could not place {} objects in a {}x{} view",
        wanted.len(),
        cfg.rig.width,
        cfg.rig.height
    )))
}

fn try_layout(rng: &mut ChaCha8Rng, cfg: &SceneConfig, wanted: &[(ObjectKind, u32)]) -> Option<Vec<ObjectSpec>> {
    let (w, h) = (cfg.rig.width as f64, cfg.rig.height as f64);
    let m = cfg.placement_margin;
    let mut placed: Vec<ObjectSpec> = Vec::new();
    for &(kind, instance) in wanted {
        let mut ok = false;
        for _ in 0..200 {
            let sw = rng.gen_range(cfg.object_size_min..=cfg.object_size_max).round();
            let sh = rng.gen_range(cfg.object_size_min..=cfg.object_size_max).round();
            let d = rng
                .gen_range(cfg.object_disparity_min..=cfg.object_disparity_max)
                .round();
            // the whole object must stay visible in the right view
            let x_lo = d + sw / 2.0 + m;
            let x_hi = w - sw / 2.0 - m;
            let y_lo = sh / 2.0 + m;
            let y_hi = h - sh / 2.0 - m;
            if x_lo >= x_hi || y_lo >= y_hi {
                continue;
            }
            let cx = rng.gen_range(x_lo..x_hi).round();
            let cy = rng.gen_range(y_lo..y_hi).round();
            let shape = if rng.gen_bool(0.5) {
                Shape::Rect { cx, cy, w: sw, h: sh }
            } else {
                Shape::Ellipse { cx, cy, rx: sw / 2.0, ry: sh / 2.0 }
            };
            let clash = placed.iter().any(|o| {
                let (ox, oy) = o.shape.center();
                let (ohw, ohh) = o.shape.half_extent();
                (cx - ox).abs() < sw / 2.0 + ohw + m && (cy - oy).abs() < sh / 2.0 + ohh + m
            });
            if clash {
                continue;
            }
            placed.push(ObjectSpec {
                kind,
                shape,
                disparity: d,
                instance,
            });
            ok = true;
            break;
        }
        if !ok {
            return None;
        }
    }
    Some(placed)
}

fn render(
    cfg: &SceneConfig,
    bg_disparity: f64,
    bg_texture: &ValueNoise,
    objects: &[ObjectSpec],
    rng: &mut ChaCha8Rng,
) -> SceneSample<f64> {
    let (w, h) = (cfg.rig.width, cfg.rig.height);
    let see_through = if cfg.transparent_blur {
        bg_texture.lowpass(6.0)
    } else {
        bg_texture.clone()
    };
    let textures: Vec<ValueNoise> = objects
        .iter()
        .map(|o| texture_for(o.kind, o.instance))
        .collect();
    let alpha = cfg.transparent_alpha;
    let contrast = cfg.transparent_contrast;
    let dim = |x: f64| 0.5 + contrast * (x - 0.5);

    let object_id = Grid::from_fn(w, h, |u, v| {
        objects
            .iter()
            .position(|o| o.shape.contains(u as f64, v as f64))
            .map_or(0u16, |k| k as u16 + 1)
    });

    let mut left = Grid::filled(w, h, 0.0);
    // left view with transparent objects reduced to what lies behind them
    let mut left_opaque = Grid::filled(w, h, 0.0);
    let mut gt = Grid::filled(w, h, bg_disparity);
    let mut render_disp = Grid::filled(w, h, bg_disparity);
    for v in 0..h {
        for u in 0..w {
            let (x, y) = (u as f64, v as f64);
            let id = object_id.get(u, v);
            if id == 0 {
                let t = bg_texture.sample(x, y);
                left.set(u, v, t);
                left_opaque.set(u, v, t);
                continue;
            }
            let k = id as usize - 1;
            let o = &objects[k];
            let (cx, cy) = o.shape.center();
            let surface = textures[k].sample(x - cx, y - cy);
            gt.set(u, v, o.disparity);
            match o.kind {
                ObjectKind::Diffuse => {
                    left.set(u, v, surface);
                    left_opaque.set(u, v, surface);
                    render_disp.set(u, v, o.disparity);
                }
                ObjectKind::Transparent => {
                    let behind = see_through.sample(x, y);
                    left.set(u, v, dim((1.0 - alpha) * behind + alpha * surface));
                    left_opaque.set(u, v, behind);
                }
            }
        }
    }

    let fill = Grid::from_fn(w, h, |x, y| bg_texture.sample(x as f64 + bg_disparity, y as f64));
    let Warped {
        image: mut right,
        zbuffer,
    } = warp_right_from_left(&left_opaque, &render_disp, Some(&fill));

    if alpha > 0.0 || contrast < 1.0 {
        for v in 0..h {
            for x in 0..w {
                for (k, o) in objects.iter().enumerate() {
                    if o.kind != ObjectKind::Transparent {
                        continue;
                    }
                    let u = x as f64 + o.disparity;
                    if !o.shape.contains(u, v as f64) {
                        continue;
                    }
                    let z = zbuffer.get(x, v);
                    if !z.is_nan() && z > o.disparity {
                        continue;
                    }
                    let (cx, cy) = o.shape.center();
                    let surface = textures[k].sample(u - cx, v as f64 - cy);
                    let base = right.get(x, v);
                    right.set(x, v, dim((1.0 - alpha) * base + alpha * surface));
                }
            }
        }
    }

    for _ in 0..cfg.invalid_holes {
        let u0 = rng.gen_range(0..w.saturating_sub(3).max(1));
        let v0 = rng.gen_range(0..h.saturating_sub(3).max(1));
        for v in v0..(v0 + 3).min(h) {
            for u in u0..(u0 + 3).min(w) {
                gt.set(u, v, f64::NAN);
            }
        }
    }

    if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
        for img in [&mut left, &mut right] {
            for x in img.as_mut_slice() {
                *x = (*x + noise.sample(rng)).clamp(0.0, 1.0);
            }
        }
    }

    let material = material_mask(&object_id, objects, cfg.boundary_width);
    SceneSample {
        left,
        right,
        gt_disparity: gt,
        material,
        object_id,
        objects: objects.to_vec(),
        rig: cfg.rig,
        scene_id: 0,
        view_id: 0,
    }
}

/// Labels pixels by object kind and marks a ring of `boundary_width` pixels
/// straddling every silhouette edge.
pub fn material_mask(object_id: &Grid<u16>, objects: &[ObjectSpec], boundary_width: usize) -> MaterialMask {
    let r = boundary_width.div_ceil(2) as isize;
    Grid::from_fn(object_id.width(), object_id.height(), |u, v| {
        let id = object_id.get(u, v);
        if r > 0 {
            for dv in -r..=r {
                for du in -r..=r {
                    let (x, y) = (u as isize + du, v as isize + dv);
                    if object_id.contains(x, y) && object_id.get(x as usize, y as usize) != id {
                        return Material::Boundary;
                    }
                }
            }
        }
        if id == 0 {
            Material::Background
        } else {
            objects[id as usize - 1].kind.material()
        }
    })
}
