//! Touch records and their CSV form.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Utility,
    Random,
    Confidence,
    OracleCenter,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Utility, Strategy::Random, Strategy::Confidence, Strategy::OracleCenter];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Utility => "utility",
            Strategy::Random => "random",
            Strategy::Confidence => "confidence",
            Strategy::OracleCenter => "oracle_center",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::config(format!("unknown strategy `{s}` (utility, random, confidence, oracle_center)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Touch {
    pub scene_id: u64,
    pub view_id: u32,
    pub u: usize,
    pub v: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TouchRecord {
    pub scene_id: u64,
    pub view_id: u32,
    pub u: usize,
    pub v: usize,
    pub selection_step: usize,
    pub strategy: Strategy,
}

impl TouchRecord {
    pub fn touch(&self) -> Touch {
        Touch {
            scene_id: self.scene_id,
            view_id: self.view_id,
            u: self.u,
            v: self.v,
        }
    }
}

/// Ordered touches in selection order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TouchSet {
    pub records: Vec<TouchRecord>,
}

impl TouchSet {
    pub fn push(&mut self, touch: Touch, strategy: Strategy) {
        let selection_step = self.records.len();
        self.records.push(TouchRecord {
            scene_id: touch.scene_id,
            view_id: touch.view_id,
            u: touch.u,
            v: touch.v,
            selection_step,
            strategy,
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn touches(&self) -> impl Iterator<Item = Touch> + '_ {
        self.records.iter().map(TouchRecord::touch)
    }

    /// `true` when no (scene, view, u, v) appears twice.
    pub fn all_distinct(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.touches().all(|t| seen.insert(t))
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| Error::config(format!("csv flush: {e}")))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let records = r.deserialize().collect::<std::result::Result<Vec<TouchRecord>, _>>()?;
        Ok(Self { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::scenegen::write_bytes(path, &self.to_csv()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = crate::scenegen::read_bytes(path)?;
        Self::from_csv(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_header() {
        let mut set = TouchSet::default();
        set.push(Touch { scene_id: 3, view_id: 1, u: 40, v: 7 }, Strategy::OracleCenter);
        set.push(Touch { scene_id: 3, view_id: 2, u: 41, v: 8 }, Strategy::OracleCenter);
        let bytes = set.to_csv().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("scene_id,view_id,u,v,selection_step,strategy\n"));
        assert!(text.contains("3,2,41,8,1,oracle_center"));
        assert_eq!(TouchSet::from_csv(&bytes).unwrap(), set);
        assert!(set.all_distinct());
    }

    #[test]
    fn strategy_names_parse() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("human".parse::<Strategy>().is_err());
    }
}
