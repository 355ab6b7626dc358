//! Patch descriptors: flattened, mean-subtracted, L2-normalised neighbourhoods.

use crate::grid::Grid;
use crate::scalar::Real;

/// Patches whose centred norm falls below this are treated as constant.
const FLAT_NORM: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DescriptorConfig {
    pub patch_radius: usize,
    pub normalize: bool,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            patch_radius: 2,
            normalize: true,
        }
    }
}

impl DescriptorConfig {
    pub fn dim(&self) -> usize {
        let s = 2 * self.patch_radius + 1;
        s * s
    }
}

/// Descriptor of the patch centred on `(u, v)`, edge-clamped at borders.
pub fn extract_descriptor<T: Real>(image: &Grid<T>, u: usize, v: usize, cfg: DescriptorConfig) -> Vec<T> {
    let mut out = vec![T::zero(); cfg.dim()];
    write_descriptor(image, u, v, cfg, &mut out);
    out
}

fn write_descriptor<T: Real>(image: &Grid<T>, u: usize, v: usize, cfg: DescriptorConfig, out: &mut [T]) {
    let r = cfg.patch_radius as isize;
    let mut k = 0;
    for dv in -r..=r {
        for du in -r..=r {
            out[k] = image.get_clamped(u as isize + du, v as isize + dv);
            k += 1;
        }
    }
    let n = T::from_usize_lossy(out.len());
    let mean = out.iter().copied().sum::<T>() / n;
    for x in out.iter_mut() {
        *x = *x - mean;
    }
    let norm = out.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm < T::lit(FLAT_NORM) {
        out.iter_mut().for_each(|x| *x = T::zero());
    } else if cfg.normalize {
        out.iter_mut().for_each(|x| *x = *x / norm);
    }
}

/// Descriptors of every pixel of an image, pixel-major (`dim` values each).
#[derive(Clone, Debug)]
pub struct DescriptorField<T> {
    pub width: usize,
    pub height: usize,
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Real> DescriptorField<T> {
    pub fn compute(image: &Grid<T>, cfg: DescriptorConfig) -> Self {
        let dim = cfg.dim();
        let (w, h) = (image.width(), image.height());
        let mut data = vec![T::zero(); w * h * dim];
        for v in 0..h {
            for u in 0..w {
                let i = v * w + u;
                write_descriptor(image, u, v, cfg, &mut data[i * dim..(i + 1) * dim]);
            }
        }
        Self {
            width: w,
            height: h,
            dim,
            data,
        }
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> &[T] {
        let i = v * self.width + u;
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG1: DescriptorConfig = DescriptorConfig {
        patch_radius: 1,
        normalize: true,
    };

    #[test]
    fn constant_patch_gives_zero_vector() {
        let img = Grid::filled(5, 5, 0.3f64);
        assert!(extract_descriptor(&img, 2, 2, CFG1).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn hand_computed_3x3() {
        // patch 0..8, mean 4, centred -4..4, norm sqrt(60)
        let img = Grid::from_fn(3, 3, |u, v| (3 * v + u) as f64);
        let d = extract_descriptor(&img, 1, 1, CFG1);
        let n = 60f64.sqrt();
        for (k, &x) in d.iter().enumerate() {
            assert!((x - (k as f64 - 4.0) / n).abs() < 1e-15);
        }
        let norm: f64 = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unnormalised_keeps_contrast() {
        let img = Grid::from_fn(3, 3, |u, v| (3 * v + u) as f64);
        let cfg = DescriptorConfig { normalize: false, ..CFG1 };
        let d = extract_descriptor(&img, 1, 1, cfg);
        assert_eq!(d[0], -4.0);
        assert_eq!(d[8], 4.0);
    }

    #[test]
    fn edge_clamping_and_brightness_invariance() {
        let img = Grid::from_fn(4, 4, |u, v| ((u * 5 + v * 3) % 7) as f64 * 0.1);
        let shifted = img.map(|x| x + 0.25);
        for (u, v) in [(0, 0), (3, 1), (2, 3)] {
            let a = extract_descriptor(&img, u, v, CFG1);
            let b = extract_descriptor(&shifted, u, v, CFG1);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        // corner patch replicates the corner pixel
        let raw = extract_descriptor(&img, 0, 0, DescriptorConfig { normalize: false, ..CFG1 });
        assert_eq!(raw[0], raw[4]);
    }

    #[test]
    fn field_matches_pointwise() {
        let img = Grid::from_fn(6, 5, |u, v| ((u * 7 + v * 11) % 13) as f32 / 13.0);
        let field = DescriptorField::compute(&img, CFG1);
        assert_eq!(field.at(4, 3), extract_descriptor(&img, 4, 3, CFG1).as_slice());
    }
}
