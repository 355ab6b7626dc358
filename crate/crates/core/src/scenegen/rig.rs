use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Rectified stereo camera pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    /// Horizontal focal length in pixels.
    pub focal_px: f64,
    /// Stereo baseline in meters.
    pub baseline_m: f64,
    pub width: usize,
    pub height: usize,
    pub disparity_min: f64,
    pub disparity_max: f64,
}

impl CameraRig {
    /// 128x96 sensor, disparities 8..40 px.
    pub fn desk() -> Self {
        Self {
            focal_px: 240.0,
            baseline_m: 0.055,
            width: 128,
            height: 96,
            disparity_min: 8.0,
            disparity_max: 40.0,
        }
    }

    /// Larger sensor with the 12..96 px disparity range of the original setup.
    pub fn paper() -> Self {
        Self {
            focal_px: 600.0,
            baseline_m: 0.055,
            width: 320,
            height: 240,
            disparity_min: 12.0,
            disparity_max: 96.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_px > 0.0) || !(self.baseline_m > 0.0) {
            return Err(Error::config("focal_px and baseline_m must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("rig dimensions must be nonzero"));
        }
        if !(0.0 < self.disparity_min
            && self.disparity_min < self.disparity_max
            && self.disparity_max < self.width as f64)
        {
            return Err(Error::config(format!(
                "need 0 < disparity_min ({}) < disparity_max ({}) < width ({})",
                self.disparity_min, self.disparity_max, self.width
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn focal_baseline(&self) -> f64 {
        self.focal_px * self.baseline_m
    }

    /// Depth in meters of a positive disparity in pixels.
    pub fn disparity_to_depth<T: Real>(&self, d: T) -> Result<T> {
        if !(d > T::zero()) {
            return Err(Error::Domain(format!("disparity must be positive, got {d}")));
        }
        Ok(T::lit(self.focal_baseline()) / d)
    }

    /// Disparity in pixels of a positive depth in meters.
    pub fn depth_to_disparity<T: Real>(&self, z: T) -> Result<T> {
        if !(z > T::zero()) {
            return Err(Error::Domain(format!("depth must be positive, got {z}")));
        }
        Ok(T::lit(self.focal_baseline()) / z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rig600() -> CameraRig {
        CameraRig {
            focal_px: 600.0,
            baseline_m: 0.055,
            ..CameraRig::paper()
        }
    }

    #[test]
    fn disparity_depth_examples() {
        let rig = rig600();
        assert!((rig.disparity_to_depth(33.0f64).unwrap() - 1.0).abs() < 1e-12);
        assert!((rig.depth_to_disparity(1.0f64).unwrap() - 33.0).abs() < 1e-12);
        assert!((rig.disparity_to_depth(66.0f64).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_inputs_are_domain_errors() {
        let rig = rig600();
        assert!(matches!(rig.disparity_to_depth(0.0f64), Err(Error::Domain(_))));
        assert!(matches!(rig.depth_to_disparity(-1.0f32), Err(Error::Domain(_))));
        assert!(rig.disparity_to_depth(f64::NAN).is_err());
    }

    #[test]
    fn rig_validation() {
        assert!(CameraRig::desk().validate().is_ok());
        assert!(CameraRig::paper().validate().is_ok());
        let mut bad = CameraRig::desk();
        bad.disparity_max = 200.0;
        assert!(bad.validate().is_err());
    }
}
