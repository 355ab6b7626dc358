//! Band-limited multi-octave value noise.

/// One octave: lattice spacing in pixels and relative amplitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Octave {
    pub cell: f64,
    pub amplitude: f64,
}

/// Deterministic value-noise texture in `[0, 1]`, defined on the whole plane.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueNoise {
    seed: u64,
    octaves: Vec<Octave>,
    norm: f64,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn lattice(seed: u64, octave: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix64(
        seed ^ splitmix64(octave ^ splitmix64((ix as u64) ^ splitmix64(iy as u64).rotate_left(17))),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[inline]
fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

impl ValueNoise {
    pub fn new(seed: u64, octaves: Vec<Octave>) -> Self {
        let norm = octaves.iter().map(|o| o.amplitude).sum::<f64>().max(f64::MIN_POSITIVE);
        Self {
            seed,
            octaves,
            norm,
        }
    }

    /// Broadband texture for opaque surfaces.
    pub fn broadband(seed: u64) -> Self {
        Self::new(
            seed,
            vec![
                Octave { cell: 12.0, amplitude: 1.0 },
                Octave { cell: 6.0, amplitude: 0.8 },
                Octave { cell: 3.0, amplitude: 0.6 },
                Octave { cell: 1.5, amplitude: 0.45 },
            ],
        )
    }

    /// The same texture with its finest octaves removed, as seen through a
    /// refracting surface.
    pub fn lowpass(&self, min_cell: f64) -> Self {
        let octaves = self
            .octaves
            .iter()
            .copied()
            .filter(|o| o.cell >= min_cell)
            .collect();
        let mut out = Self::new(self.seed, octaves);
        // keep the amplitude scale of the source so the blur does not add contrast
        out.norm = self.norm;
        out
    }

    /// Fine-grained surface texture (scratches, print, dust).
    pub fn fine(seed: u64) -> Self {
        Self::new(
            seed,
            vec![
                Octave { cell: 2.0, amplitude: 1.0 },
                Octave { cell: 1.0, amplitude: 0.7 },
            ],
        )
    }

    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let mut acc = 0.0;
        for (k, o) in self.octaves.iter().enumerate() {
            let fx = x / o.cell;
            let fy = y / o.cell;
            let x0 = fx.floor();
            let y0 = fy.floor();
            let tx = smoothstep(fx - x0);
            let ty = smoothstep(fy - y0);
            let (ix, iy) = (x0 as i64, y0 as i64);
            let k = k as u64;
            let a = lattice(self.seed, k, ix, iy);
            let b = lattice(self.seed, k, ix + 1, iy);
            let c = lattice(self.seed, k, ix, iy + 1);
            let d = lattice(self.seed, k, ix + 1, iy + 1);
            let top = a + (b - a) * tx;
            let bot = c + (d - c) * tx;
            acc += o.amplitude * (top + (bot - top) * ty);
        }
        acc / self.norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let t = ValueNoise::broadband(7);
        let u = ValueNoise::broadband(7);
        for i in 0..200 {
            let (x, y) = (i as f64 * 0.73 - 40.0, i as f64 * 1.37);
            let s = t.sample(x, y);
            assert_eq!(s, u.sample(x, y));
            assert!((0.0..=1.0).contains(&s));
        }
        assert_ne!(t.sample(3.0, 4.0), ValueNoise::broadband(8).sample(3.0, 4.0));
    }

    #[test]
    fn lowpass_is_smoother() {
        let t = ValueNoise::broadband(3);
        let lp = t.lowpass(6.0);
        let rough = |n: &ValueNoise| -> f64 {
            (0..500)
                .map(|i| {
                    let x = i as f64;
                    (n.sample(x + 1.0, 5.0) - n.sample(x, 5.0)).powi(2)
                })
                .sum()
        };
        assert!(rough(&lp) < 0.5 * rough(&t));
    }
}
