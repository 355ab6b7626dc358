//! On-disk artifacts: exact view files, content hashes and stage manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scenegen::{
    mask_from_codes, mask_to_codes, read_bytes, save_image, save_pfm, save_pgm8, write_bytes, CameraRig, ObjectSpec,
    SceneSample,
};

const VIEW_MAGIC: &[u8; 8] = b"TSVIEW1\n";

#[derive(Serialize, Deserialize)]
struct ViewMeta {
    scene_id: u64,
    view_id: u32,
    width: usize,
    height: usize,
    rig: CameraRig,
    objects: Vec<ObjectSpec>,
}

/// Lossless binary encoding of a view (images and ground truth as f64).
pub fn encode_view(s: &SceneSample<f64>) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&ViewMeta {
        scene_id: s.scene_id,
        view_id: s.view_id,
        width: s.width(),
        height: s.height(),
        rig: s.rig,
        objects: s.objects.clone(),
    })?;
    let n = s.left.len();
    let mut out = Vec::with_capacity(VIEW_MAGIC.len() + 4 + meta.len() + n * 27);
    out.extend_from_slice(VIEW_MAGIC);
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    for g in [&s.left, &s.right, &s.gt_disparity] {
        for x in g.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out.extend_from_slice(mask_to_codes(&s.material).as_slice());
    for id in s.object_id.as_slice() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::parse(self.pos, "truncated view file"));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}

pub fn decode_view(bytes: &[u8]) -> Result<SceneSample<f64>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(VIEW_MAGIC.len())? != VIEW_MAGIC {
        return Err(Error::parse(0, "not a view file"));
    }
    let meta_len = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes")) as usize;
    let meta: ViewMeta = serde_json::from_slice(c.take(meta_len)?)?;
    let (w, h) = (meta.width, meta.height);
    let n = w * h;
    let left = Grid::from_vec(w, h, c.f64s(n)?)?;
    let right = Grid::from_vec(w, h, c.f64s(n)?)?;
    let gt_disparity = Grid::from_vec(w, h, c.f64s(n)?)?;
    let material = mask_from_codes(&Grid::from_vec(w, h, c.take(n)?.to_vec())?)?;
    let ids = c
        .take(n * 2)?
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect();
    let object_id = Grid::from_vec(w, h, ids)?;
    if c.pos != bytes.len() {
        return Err(Error::parse(c.pos, "trailing bytes after view payload"));
    }
    Ok(SceneSample {
        left,
        right,
        gt_disparity,
        material,
        object_id,
        objects: meta.objects,
        rig: meta.rig,
        scene_id: meta.scene_id,
        view_id: meta.view_id,
    })
}

/// Writes `<stem>.view` plus PGM/PFM companions for inspection; returns the
/// written paths.
pub fn save_view(dir: &Path, stem: &str, s: &SceneSample<f64>) -> Result<Vec<PathBuf>> {
    let paths = [
        dir.join(format!("{stem}.view")),
        dir.join(format!("{stem}_left.pgm")),
        dir.join(format!("{stem}_right.pgm")),
        dir.join(format!("{stem}_gt.pfm")),
        dir.join(format!("{stem}_material.pgm")),
    ];
    write_bytes(&paths[0], &encode_view(s)?)?;
    save_image(&paths[1], &s.left)?;
    save_image(&paths[2], &s.right)?;
    save_pfm(&paths[3], &s.gt_disparity)?;
    save_pgm8(&paths[4], &mask_to_codes(&s.material))?;
    Ok(paths.to_vec())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Record of one stage run. Paths are relative to the output directory and
/// map to SHA-256 digests of the file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub profile: String,
    pub seed: u64,
    pub config: Vec<(String, String)>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn file_name(stage: &str) -> String {
        format!("manifest_{stage}.json")
    }
}

/// Output directory with the fixed `data`, `models`, `touches`, `reports` layout.
#[derive(Clone, Debug)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn touches(&self) -> PathBuf {
        self.root.join("touches")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn manifest_path(&self, stage: &str) -> PathBuf {
        self.root.join("manifests").join(Manifest::file_name(stage))
    }

    pub fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    /// Reads an upstream artifact, naming `stage` when it is absent.
    pub fn read_input(&self, path: &Path, stage: &'static str) -> Result<Vec<u8>> {
        if !path.is_file() {
            return Err(Error::MissingArtifact {
                path: path.to_path_buf(),
                stage,
            });
        }
        read_bytes(path)
    }

    pub fn load_manifest(&self, stage: &'static str) -> Result<Manifest> {
        let bytes = self.read_input(&self.manifest_path(stage), stage)?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn write_manifest(&self, m: &Manifest) -> Result<PathBuf> {
        let path = self.manifest_path(&m.stage);
        let mut text = serde_json::to_string_pretty(m)?;
        text.push('\n');
        write_bytes(&path, text.as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_view, SceneConfig};

    #[test]
    fn view_round_trip_is_exact() {
        let cfg = SceneConfig {
            invalid_holes: 2,
            ..SceneConfig::desk()
        };
        let s = generate_view::<f64>(7, 1, &cfg).unwrap();
        let back = decode_view(&encode_view(&s).unwrap()).unwrap();
        let bits = |g: &Grid<f64>| g.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&s.left), bits(&back.left));
        assert_eq!(bits(&s.right), bits(&back.right));
        assert_eq!(bits(&s.gt_disparity), bits(&back.gt_disparity));
        assert_eq!(s.material, back.material);
        assert_eq!(s.object_id, back.object_id);
        assert_eq!(s.objects, back.objects);
        assert_eq!((s.scene_id, s.view_id), (back.scene_id, back.view_id));
    }

    #[test]
    fn truncated_view_is_a_parse_error() {
        let s = generate_view::<f64>(3, 0, &SceneConfig::desk()).unwrap();
        let bytes = encode_view(&s).unwrap();
        assert!(matches!(decode_view(&bytes[..bytes.len() - 1]), Err(Error::Parse { .. })));
        assert!(matches!(decode_view(b"nope"), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_input_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path());
        let err = ws.read_input(&ws.models().join("pretrained.model"), "pretrain").unwrap_err();
        assert!(err.to_string().contains("run `pretrain` first"), "{err}");
    }
}
