use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::descriptor::DescriptorConfig;
use crate::error::{Error, Result};
use crate::kv::KvConfig;
use crate::scalar::Real;
use crate::scenegen::write_bytes;

const MAGIC: &[u8; 4] = b"TSMS";
const FORMAT_VERSION: u32 = 1;

/// What a set of weights stands for in the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Initial,
    Pretrained,
    Surrogate,
    Finetuned,
}

impl Role {
    fn code(self) -> u8 {
        match self {
            Role::Initial => 0,
            Role::Pretrained => 1,
            Role::Surrogate => 2,
            Role::Finetuned => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Role::Initial,
            1 => Role::Pretrained,
            2 => Role::Surrogate,
            3 => Role::Finetuned,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Initial => "initial",
            Role::Pretrained => "pretrained",
            Role::Surrogate => "surrogate",
            Role::Finetuned => "finetuned",
        }
    }
}

/// Learnable parameters: a shared linear patch embedding and a softmax
/// temperature (stored as its logarithm so it stays positive).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<T> {
    /// `embed_dim x descriptor dim`, row-major.
    pub weights: Vec<T>,
    pub log_tau: T,
    pub embed_dim: usize,
    pub descriptor: DescriptorConfig,
    pub role: Role,
}

impl<T: Real> ModelState<T> {
    /// Gaussian weights with variance `1 / embed_dim`, so unit descriptors
    /// embed to roughly unit norm.
    pub fn random(seed: u64, embed_dim: usize, descriptor: DescriptorConfig, tau: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (embed_dim as f64).sqrt();
        let weights = (0..embed_dim * descriptor.dim())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::lit(z * scale)
            })
            .collect();
        Self {
            weights,
            log_tau: T::lit(tau.ln()),
            embed_dim,
            descriptor,
            role: Role::Initial,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.descriptor.dim()
    }

    pub fn tau(&self) -> T {
        self.log_tau.exp()
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + 1
    }

    /// Flat parameter vector: weights followed by `log_tau`.
    pub fn params(&self) -> Vec<T> {
        let mut p = self.weights.clone();
        p.push(self.log_tau);
        p
    }

    pub fn set_params(&mut self, p: &[T]) {
        let n = self.weights.len();
        self.weights.copy_from_slice(&p[..n]);
        self.log_tau = p[n];
    }

    pub fn is_finite(&self) -> bool {
        self.log_tau.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.embed_dim * self.feature_dim() {
            return Err(Error::Shape(format!(
                "weights hold {} values, expected {}x{}",
                self.weights.len(),
                self.embed_dim,
                self.feature_dim()
            )));
        }
        if !self.is_finite() {
            return Err(Error::Domain("non-finite model parameters".into()));
        }
        Ok(())
    }

    /// Versioned little-endian binary: magic, version, dims, role, then
    /// `log_tau` and the weights as `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.embed_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.feature_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.descriptor.patch_radius as u32).to_le_bytes());
        out.push(self.descriptor.normalize as u8);
        out.push(self.role.code());
        out.extend_from_slice(&self.log_tau.to_f64_lossy().to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_f64_lossy().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            if bytes.len() < pos + n {
                return Err(Error::parse(bytes.len(), "truncated model file"));
            }
            let s = &bytes[pos..pos + n];
            pos += n;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(Error::parse(0, "not a model file (bad magic)"));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes([s[0], s[1], s[2], s[3]]);
        let version = u32_at(take(4)?);
        if version != FORMAT_VERSION {
            return Err(Error::parse(4, format!("unsupported model version {version}")));
        }
        let embed_dim = u32_at(take(4)?) as usize;
        let feature_dim = u32_at(take(4)?) as usize;
        let patch_radius = u32_at(take(4)?) as usize;
        let normalize = take(1)?[0] != 0;
        let role = Role::from_code(take(1)?[0]).ok_or_else(|| Error::parse(21, "unknown role"))?;
        let descriptor = DescriptorConfig {
            patch_radius,
            normalize,
        };
        if descriptor.dim() != feature_dim {
            return Err(Error::parse(12, "feature dimension does not match patch radius"));
        }
        let f64_at = |s: &[u8]| {
            let mut b = [0u8; 8];
            b.copy_from_slice(s);
            f64::from_le_bytes(b)
        };
        let log_tau = T::lit(f64_at(take(8)?));
        let mut weights = Vec::with_capacity(embed_dim * feature_dim);
        for _ in 0..embed_dim * feature_dim {
            weights.push(T::lit(f64_at(take(8)?)));
        }
        if pos != bytes.len() {
            return Err(Error::parse(pos, "trailing bytes after model payload"));
        }
        Ok(Self {
            weights,
            log_tau,
            embed_dim,
            descriptor,
            role,
        })
    }

    /// Human-readable hyperparameter sidecar.
    pub fn sidecar(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("format_version", FORMAT_VERSION);
        kv.set("role", self.role.name());
        kv.set("embed_dim", self.embed_dim);
        kv.set("feature_dim", self.feature_dim());
        kv.set("patch_radius", self.descriptor.patch_radius);
        kv.set("normalize", self.descriptor.normalize);
        kv.set("tau", self.tau().to_f64_lossy());
        kv
    }

    /// Writes `<path>` (binary) and `<path>.txt` (sidecar).
    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes())?;
        let mut side = path.as_os_str().to_owned();
        side.push(".txt");
        write_bytes(Path::new(&side), self.sidecar().to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn random_state_is_deterministic() {
        let a: ModelState<f64> = ModelState::random(3, 8, DescriptorConfig::default(), 0.2);
        let b: ModelState<f64> = ModelState::random(3, 8, DescriptorConfig::default(), 0.2);
        assert_eq!(a, b);
        assert_eq!(a.weights.len(), 200);
        assert!((a.tau() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let s: ModelState<f64> = ModelState::random(1, 2, DescriptorConfig::default(), 0.5);
        let bytes = s.to_bytes();
        assert!(ModelState::<f64>::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ModelState::<f64>::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(ModelState::<f64>::from_bytes(&long).is_err());
    }

    #[test]
    fn save_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let s: ModelState<f64> = ModelState::random(1, 4, DescriptorConfig::default(), 0.5).with_role(Role::Finetuned);
        s.save(&path).unwrap();
        assert_eq!(ModelState::<f64>::load(&path).unwrap(), s);
        let side = KvConfig::load(&dir.path().join("m.bin.txt")).unwrap();
        assert_eq!(side.get("role"), Some("finetuned"));
        assert_eq!(side.get("normalize"), Some("true"));
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(seed in any::<u64>(), e in 1usize..6, r in 0usize..3, tau in 0.01f64..10.0) {
            let d = DescriptorConfig { patch_radius: r, normalize: seed % 2 == 0 };
            let s: ModelState<f64> = ModelState::random(seed, e, d, tau).with_role(Role::Surrogate);
            let back = ModelState::<f64>::from_bytes(&s.to_bytes()).unwrap();
            prop_assert_eq!(back.log_tau.to_bits(), s.log_tau.to_bits());
            prop_assert!(back.weights.iter().zip(&s.weights).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back, s);
        }
    }
}
