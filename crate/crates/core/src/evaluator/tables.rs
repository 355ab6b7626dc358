//! Comparison tables in CSV, aligned text and JSON.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{MetricReport, Split, SplitMetrics, SCHEMA_VERSION};
use crate::error::{Error, Result};

const METRICS: [&str; 5] = ["epe_px", "bad1", "abs_depth_mm", "frac_gt_4mm", "delta105"];

fn values(m: &SplitMetrics) -> [f64; 5] {
    [m.epe_px, m.bad1, m.abs_depth_mm, m.frac_gt_4mm, m.delta105]
}

fn aligned(header: &[String], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(String::len).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&width)
            .enumerate()
            .map(|(i, (c, &w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header);
    line(&width.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>());
    for r in rows {
        line(r);
    }
    out
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::config(format!("csv flush: {e}")))
}

/// One report per labelled run (strategy, ablation setting, ...).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub schema_version: u32,
    pub title: String,
    pub rows: Vec<(String, MetricReport)>,
}

impl ComparisonTable {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            title: title.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, report: MetricReport) {
        self.rows.push((label.into(), report));
    }

    fn cells(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header = vec!["label".to_string(), "split".to_string()];
        header.extend(METRICS.iter().map(|s| s.to_string()));
        header.push("pixels".into());
        let mut rows = Vec::new();
        for (label, rep) in &self.rows {
            for s in Split::ALL {
                let m = rep.split(s);
                let mut r = vec![label.clone(), s.name().to_string()];
                r.extend(values(m).iter().map(|x| format!("{x:.4}")));
                r.push(m.pixel_count.to_string());
                rows.push(r);
            }
        }
        (header, rows)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let (h, r) = self.cells();
        csv_bytes(&h, &r)
    }

    pub fn to_text(&self) -> String {
        let (h, r) = self.cells();
        format!("{}\n{}", self.title, aligned(&h, &r))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub split: Split,
    pub seeds: usize,
    /// Per metric, in the order epe_px, bad1, abs_depth_mm, frac_gt_4mm, delta105.
    pub mean: [f64; 5],
    pub std: [f64; 5],
}

/// Mean and sample standard deviation of each metric across seeds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub schema_version: u32,
    pub title: String,
    pub rows: Vec<SummaryRow>,
}

impl SeedSummary {
    pub fn new(title: impl Into<String>, groups: &[(String, Vec<MetricReport>)]) -> Self {
        let mut rows = Vec::new();
        for (label, reports) in groups {
            for s in Split::ALL {
                let vals: Vec<[f64; 5]> = reports.iter().map(|r| values(r.split(s))).collect();
                let n = vals.len() as f64;
                let mut mean = [0.0; 5];
                let mut std = [0.0; 5];
                for i in 0..5 {
                    mean[i] = vals.iter().map(|v| v[i]).sum::<f64>() / n;
                    if vals.len() > 1 {
                        let ss: f64 = vals.iter().map(|v| (v[i] - mean[i]).powi(2)).sum();
                        std[i] = (ss / (n - 1.0)).sqrt();
                    }
                }
                rows.push(SummaryRow {
                    label: label.clone(),
                    split: s,
                    seeds: vals.len(),
                    mean,
                    std,
                });
            }
        }
        Self {
            schema_version: SCHEMA_VERSION,
            title: title.into(),
            rows,
        }
    }

    pub fn row(&self, label: &str, split: Split) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.label == label && r.split == split)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut header = vec!["label".to_string(), "split".to_string(), "seeds".to_string()];
        for m in METRICS {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_std"));
        }
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut c = vec![r.label.clone(), r.split.name().to_string(), r.seeds.to_string()];
                for i in 0..5 {
                    c.push(format!("{:.6}", r.mean[i]));
                    c.push(format!("{:.6}", r.std[i]));
                }
                c
            })
            .collect();
        csv_bytes(&header, &rows)
    }

    pub fn to_text(&self) -> String {
        let mut header = vec!["label".to_string(), "split".to_string()];
        header.extend(METRICS.iter().map(|s| s.to_string()));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut c = vec![r.label.clone(), r.split.name().to_string()];
                c.extend((0..5).map(|i| format!("{:.4}±{:.4}", r.mean[i], r.std[i])));
                c
            })
            .collect();
        let seeds = self.rows.first().map_or(0, |r| r.seeds);
        format!("{} (mean±std over {seeds} seeds)\n{}", self.title, aligned(&header, &rows))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
