//! Per-neuron importance of a GLU layer's intermediate dimension.
//!
//! * MAW: `(max(gate_n) + |min(gate_n)|) + (max(up_n) + |min(up_n)|)` over
//!   the neuron's incoming weights. Taken literally, this is the peak-to-peak
//!   range of each row rather than the largest magnitude.
//! * VOW: population variance of the gate row plus that of the up row.
//! * PON: `‖gate_n‖₂ · ‖up_n‖₂`.
//!
//! Lowest-scoring neurons are the ones removed.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glu::GluLayer;
use crate::tensor::Matrix;
use crate::transformer::ToyTransformer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Criterion {
    /// Maximum Absolute Weight.
    Maw,
    /// Variance of Weights.
    Vow,
    /// Product of Norms.
    Pon,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Maw, Criterion::Vow, Criterion::Pon];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Maw => "MAW",
            Criterion::Vow => "VOW",
            Criterion::Pon => "PON",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maw" => Ok(Criterion::Maw),
            "vow" => Ok(Criterion::Vow),
            "pon" => Ok(Criterion::Pon),
            _ => Err(Error::InvalidArgument(format!(
                "unknown criterion {s:?} (expected maw, vow or pon)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub criterion: Criterion,
    pub layer_index: usize,
    pub scores: Vec<f64>,
}

fn row_range(row: &[f32]) -> f64 {
    let mut max = row[0];
    let mut min = row[0];
    for &v in &row[1..] {
        max = max.max(v);
        min = min.min(v);
    }
    max as f64 + (min as f64).abs()
}

/// Welford's online variance, divided by the row length.
fn row_variance(row: &[f32]) -> f64 {
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for (i, &v) in row.iter().enumerate() {
        let v = v as f64;
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    m2 / row.len() as f64
}

fn row_norm(row: &[f32]) -> f64 {
    row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
}

fn paired_scores(layer: &GluLayer, f: impl Fn(&Matrix, usize) -> f64) -> Vec<f64> {
    (0..layer.d_ff())
        .map(|n| f(&layer.w_gate, n) + f(&layer.w_up, n))
        .collect()
}

pub fn maw_scores(layer: &GluLayer, layer_index: usize) -> ImportanceVector {
    ImportanceVector {
        criterion: Criterion::Maw,
        layer_index,
        scores: paired_scores(layer, |m, n| row_range(m.row(n))),
    }
}

pub fn vow_scores(layer: &GluLayer, layer_index: usize) -> ImportanceVector {
    ImportanceVector {
        criterion: Criterion::Vow,
        layer_index,
        scores: paired_scores(layer, |m, n| row_variance(m.row(n))),
    }
}

pub fn pon_scores(layer: &GluLayer, layer_index: usize) -> ImportanceVector {
    let scores = (0..layer.d_ff())
        .map(|n| row_norm(layer.w_gate.row(n)) * row_norm(layer.w_up.row(n)))
        .collect();
    ImportanceVector {
        criterion: Criterion::Pon,
        layer_index,
        scores,
    }
}

pub fn score_layer(layer: &GluLayer, layer_index: usize, criterion: Criterion) -> ImportanceVector {
    match criterion {
        Criterion::Maw => maw_scores(layer, layer_index),
        Criterion::Vow => vow_scores(layer, layer_index),
        Criterion::Pon => pon_scores(layer, layer_index),
    }
}

/// Scores every block's MLP independently.
pub fn score_model(model: &ToyTransformer, criterion: Criterion) -> Vec<ImportanceVector> {
    model
        .blocks
        .par_iter()
        .enumerate()
        .map(|(i, b)| score_layer(&b.mlp, i, criterion))
        .collect()
}

/// The `k` lowest-scoring neurons, ties broken by ascending index, returned
/// in ascending index order.
pub fn select_prune_set(scores: &ImportanceVector, k: usize) -> Result<Vec<usize>> {
    let n = scores.scores.len();
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot remove {k} of {n} neurons"
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let s = &scores.scores;
    let mut idx: Vec<usize> = (0..n).collect();
    let cmp = |a: &usize, b: &usize| s[*a].total_cmp(&s[*b]).then(a.cmp(b));
    if k < n {
        idx.select_nth_unstable_by(k - 1, cmp);
    }
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

/// CSV with columns `layer,neuron,criterion,score`.
pub fn write_scores_csv<W: Write>(out: W, vectors: &[ImportanceVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["layer", "neuron", "criterion", "score"])?;
    for v in vectors {
        for (n, s) in v.scores.iter().enumerate() {
            w.write_record([
                v.layer_index.to_string(),
                n.to_string(),
                v.criterion.to_string(),
                s.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Parses [`write_scores_csv`] output back into per-layer vectors.
pub fn read_scores_csv<R: std::io::Read>(input: R) -> Result<Vec<ImportanceVector>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out: Vec<ImportanceVector> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |m: &str| Error::Fixture {
            line,
            message: m.to_string(),
        };
        if rec.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        let layer: usize = rec[0].parse().map_err(|_| bad("bad layer"))?;
        let neuron: usize = rec[1].parse().map_err(|_| bad("bad neuron"))?;
        let criterion: Criterion = rec[2].parse()?;
        let score: f64 = rec[3].parse().map_err(|_| bad("bad score"))?;
        match out.last_mut() {
            Some(v) if v.layer_index == layer && v.criterion == criterion => {
                if neuron != v.scores.len() {
                    return Err(bad("neurons out of order"));
                }
                v.scores.push(score);
            }
            _ => {
                if neuron != 0 {
                    return Err(bad("layer does not start at neuron 0"));
                }
                out.push(ImportanceVector {
                    criterion,
                    layer_index: layer,
                    scores: vec![score],
                });
            }
        }
    }
    Ok(out)
}
