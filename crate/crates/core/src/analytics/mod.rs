//! Statistics over published result tables and local sweeps.

pub mod fixtures;
pub mod report;
pub mod stats;

use serde::{Deserialize, Serialize};

pub use fixtures::{
    embedded_fixtures, load_fixtures, parse_fixtures, BenchmarkFixture, Direction, FixtureSet, Series,
};
pub use report::{emit_report, read_sweep_csv, write_sweep_csv, ReportInputs, SweepRow};
pub use stats::{pearson_r, t_pvalue};

use crate::error::{Error, Result};

/// Each point as a percentage of the baseline (largest-ratio) entry.
/// Lower-is-better series are inverted so that values under 100 always mean
/// degradation.
pub fn normalize_to_baseline(series: &Series) -> Result<Vec<(f64, f64)>> {
    let (_, base) = series
        .baseline()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no points", series.benchmark)))?;
    if base == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "{} baseline is zero",
            series.benchmark
        )));
    }
    series
        .points
        .iter()
        .map(|&(r, v)| {
            let pct = match series.direction {
                Direction::Higher => v / base * 100.0,
                Direction::Lower => {
                    if v == 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "{} has a zero value at {r}",
                            series.benchmark
                        )));
                    }
                    base / v * 100.0
                }
            };
            Ok((r, pct))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub label: String,
    pub series_x: String,
    pub series_y: String,
    pub n: usize,
    pub r: f64,
    pub p_two_sided: f64,
}

pub fn correlate(label: &str, name_x: &str, x: &[f64], name_y: &str, y: &[f64]) -> Result<CorrelationReport> {
    let r = pearson_r(x, y)?;
    Ok(CorrelationReport {
        label: label.to_string(),
        series_x: name_x.to_string(),
        series_y: name_y.to_string(),
        n: x.len(),
        r,
        p_two_sided: t_pvalue(r, x.len())?,
    })
}

/// MMLU vs TruthfulQA-MC2 across expansion ratios: per model, then both
/// models' points pooled without standardization.
pub fn knowledge_truthfulness_correlations(fx: &FixtureSet) -> Result<Vec<CorrelationReport>> {
    let (x_name, y_name) = ("MMLU", "TruthfulQA-MC2");
    let mut out = Vec::new();
    let (mut all_x, mut all_y) = (Vec::new(), Vec::new());
    for model in ["1B", "3B"] {
        let x = fx.series(model, x_name)?.values();
        let y = fx.series(model, y_name)?.values();
        out.push(correlate(model, x_name, &x, y_name, &y)?);
        all_x.extend(x);
        all_y.extend(y);
    }
    out.push(correlate("combined", x_name, &all_x, y_name, &all_y)?);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaPoint {
    pub expansion_ratio: f64,
    pub value: f64,
    pub pct_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDeltas {
    pub column: String,
    pub points: Vec<DeltaPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRatio {
    pub expansion_ratio: f64,
    pub single_j_per_token: f64,
    pub batch_j_per_token: f64,
    /// B1 J/token divided by B8 J/token.
    pub single_over_batch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub model: String,
    pub columns: Vec<ColumnDeltas>,
    pub single_vs_batch: Vec<ModeRatio>,
}

pub fn pct_change(value: f64, baseline: f64) -> f64 {
    (value - baseline) / baseline * 100.0
}

/// Percentage change against baseline for every efficiency column, plus the
/// single-request over batch J/token ratio at each expansion ratio.
pub fn efficiency_deltas(fixture: &BenchmarkFixture) -> Result<EfficiencyReport> {
    let columns: Vec<ColumnDeltas> = fixture
        .series
        .values()
        .filter(|s| s.benchmark.starts_with("energy:"))
        .map(|s| {
            let (_, base) = s.baseline().expect("series is never empty");
            ColumnDeltas {
                column: s.benchmark.trim_start_matches("energy:").to_string(),
                points: s
                    .points
                    .iter()
                    .map(|&(r, v)| DeltaPoint {
                        expansion_ratio: r,
                        value: v,
                        pct_change: pct_change(v, base),
                    })
                    .collect(),
            }
        })
        .collect();
    if columns.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "model {} has no efficiency fixtures",
            fixture.model
        )));
    }
    let mut single_vs_batch = Vec::new();
    if let (Some(b1), Some(b8)) = (
        fixture.series.get("energy:B1:j_per_token"),
        fixture.series.get("energy:B8:j_per_token"),
    ) {
        for &(r, s) in &b1.points {
            if let Some(b) = b8.value_at(r) {
                single_vs_batch.push(ModeRatio {
                    expansion_ratio: r,
                    single_j_per_token: s,
                    batch_j_per_token: b,
                    single_over_batch: s / b,
                });
            }
        }
    }
    Ok(EfficiencyReport {
        model: fixture.model.clone(),
        columns,
        single_vs_batch,
    })
}

#[derive(Debug, Clone, Copy)]
enum HeadlineKind {
    Normalized,
    PctChange,
    SingleOverBatch,
}

/// (name, model, benchmark, ratio, kind) of each quoted headline number.
const HEADLINES: &[(&str, &str, &str, f64, HeadlineKind)] = &[
    ("1B IFEval % of baseline @2.8x", "1B", "IFEval", 2.8, HeadlineKind::Normalized),
    ("3B IFEval % of baseline @1.6x", "3B", "IFEval", 1.6, HeadlineKind::Normalized),
    ("1B IFEval % of baseline @1.6x", "1B", "IFEval", 1.6, HeadlineKind::Normalized),
    ("3B IFEval % of baseline @1.07x", "3B", "IFEval", 1.07, HeadlineKind::Normalized),
    ("1B IFEval % of baseline @2.4x", "1B", "IFEval", 2.4, HeadlineKind::Normalized),
    ("3B IFEval % of baseline @2.4x", "3B", "IFEval", 2.4, HeadlineKind::Normalized),
    ("1B GSM8K % of baseline @3.6x", "1B", "GSM8K", 3.6, HeadlineKind::Normalized),
    ("1B GSM8K % of baseline @2.4x", "1B", "GSM8K", 2.4, HeadlineKind::Normalized),
    ("1B GSM8K % of baseline @1.6x", "1B", "GSM8K", 1.6, HeadlineKind::Normalized),
    ("3B GSM8K % of baseline @2.4x", "3B", "GSM8K", 2.4, HeadlineKind::Normalized),
    ("3B GSM8K % of baseline @1.07x", "3B", "GSM8K", 1.07, HeadlineKind::Normalized),
    ("1B MUSR % of baseline @2.4x", "1B", "MUSR", 2.4, HeadlineKind::Normalized),
    ("1B TruthfulQA-MC2 % of baseline @1.6x", "1B", "TruthfulQA-MC2", 1.6, HeadlineKind::Normalized),
    ("3B TruthfulQA-MC2 % of baseline @1.07x", "3B", "TruthfulQA-MC2", 1.07, HeadlineKind::Normalized),
    ("1B MMLU % of baseline @2.4x", "1B", "MMLU", 2.4, HeadlineKind::Normalized),
    ("3B MMLU % of baseline @2.4x", "3B", "MMLU", 2.4, HeadlineKind::Normalized),
    ("1B MMLU % of baseline @1.6x", "1B", "MMLU", 1.6, HeadlineKind::Normalized),
    ("3B MMLU % of baseline @1.07x", "3B", "MMLU", 1.07, HeadlineKind::Normalized),
    ("1B B1 J/token change @2.4x", "1B", "energy:B1:j_per_token", 2.4, HeadlineKind::PctChange),
    ("1B B1 J/token change @1.6x", "1B", "energy:B1:j_per_token", 1.6, HeadlineKind::PctChange),
    ("3B B1 J/token change @1.07x", "3B", "energy:B1:j_per_token", 1.07, HeadlineKind::PctChange),
    ("1B B1 latency change @2.4x", "1B", "energy:B1:latency_ms", 2.4, HeadlineKind::PctChange),
    ("1B B1 latency change @1.6x", "1B", "energy:B1:latency_ms", 1.6, HeadlineKind::PctChange),
    ("1B B1/B8 J/token @2.4x", "1B", "", 2.4, HeadlineKind::SingleOverBatch),
    ("3B B1/B8 J/token @2.4x", "3B", "", 2.4, HeadlineKind::SingleOverBatch),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub name: String,
    pub value: f64,
}

/// Recomputes the headline figures of the result discussion from fixtures.
pub fn headline_numbers(fx: &FixtureSet) -> Result<Vec<Headline>> {
    let mut out = Vec::new();
    for c in knowledge_truthfulness_correlations(fx)? {
        out.push(Headline { name: format!("{} MMLU~TruthfulQA-MC2 r", c.label), value: c.r });
        out.push(Headline { name: format!("{} MMLU~TruthfulQA-MC2 p", c.label), value: c.p_two_sided });
    }
    for &(name, model, bench, ratio, kind) in HEADLINES {
        let missing = || Error::InvalidArgument(format!("fixtures lack the point for {name:?}"));
        let value = match kind {
            HeadlineKind::Normalized => normalize_to_baseline(fx.series(model, bench)?)?
                .into_iter()
                .find(|(r, _)| (r - ratio).abs() < 1e-9)
                .map(|(_, p)| p)
                .ok_or_else(missing)?,
            HeadlineKind::PctChange => {
                let s = fx.series(model, bench)?;
                let (_, base) = s.baseline().ok_or_else(missing)?;
                pct_change(s.value_at(ratio).ok_or_else(missing)?, base)
            }
            HeadlineKind::SingleOverBatch => {
                let b1 = fx.series(model, "energy:B1:j_per_token")?.value_at(ratio);
                let b8 = fx.series(model, "energy:B8:j_per_token")?.value_at(ratio);
                match (b1, b8) {
                    (Some(a), Some(b)) => a / b,
                    _ => return Err(missing()),
                }
            }
        };
        out.push(Headline { name: name.to_string(), value });
    }
    Ok(out)
}
