//! Report emission: one flat list of rows, written as `report.csv` and
//! grouped by section in `report.json`. Floats carry 6 significant digits.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::fixtures::FixtureSet;
use super::{efficiency_deltas, headline_numbers, knowledge_truthfulness_correlations, normalize_to_baseline};
use crate::error::{Error, Result};
use crate::profiler::ProfileRecord;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_CSV_HEADER: [&str; 6] = ["section", "model", "key", "expansion_ratio", "metric", "value"];

/// One evaluated configuration of a local pruning sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model_tag: String,
    pub criterion: String,
    pub pruning_pct: f64,
    pub expansion_ratio: f64,
    pub perplexity: f64,
    pub next_token_accuracy: f64,
    pub token_count: usize,
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| {
        if e.is_io_error() {
            Error::io(path, std::io::Error::other(e.to_string()))
        } else {
            Error::Csv(e)
        }
    })?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub fixtures: Option<FixtureSet>,
    pub sweep: Vec<SweepRow>,
    pub profile: Vec<ProfileRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub section: &'static str,
    pub model: String,
    pub key: String,
    pub expansion_ratio: Option<f64>,
    pub metric: String,
    pub value: f64,
}

/// Rounds to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn row(section: &'static str, model: &str, key: &str, ratio: Option<f64>, metric: &str, value: f64) -> ReportRow {
    ReportRow {
        section,
        model: model.to_string(),
        key: key.to_string(),
        expansion_ratio: ratio,
        metric: metric.to_string(),
        value: round_sig6(value),
    }
}

fn fixture_rows(fx: &FixtureSet, rows: &mut Vec<ReportRow>) -> Result<()> {
    for (model, s) in fx.iter() {
        for &(r, v) in &s.points {
            rows.push(row("raw", model, &s.benchmark, Some(r), "value", v));
        }
    }
    for (model, s) in fx.iter() {
        if s.benchmark.starts_with("energy:") {
            continue;
        }
        for (r, pct) in normalize_to_baseline(s)? {
            rows.push(row("normalized", model, &s.benchmark, Some(r), "pct_of_baseline", pct));
        }
    }
    for c in knowledge_truthfulness_correlations(fx)? {
        let key = format!("{}~{}", c.series_x, c.series_y);
        rows.push(row("correlation", &c.label, &key, None, "n", c.n as f64));
        rows.push(row("correlation", &c.label, &key, None, "r", c.r));
        rows.push(row("correlation", &c.label, &key, None, "p_two_sided", c.p_two_sided));
    }
    let reports: Vec<_> = fx.fixtures.values().filter_map(|f| efficiency_deltas(f).ok()).collect();
    for e in &reports {
        for c in &e.columns {
            for p in &c.points {
                rows.push(row("efficiency", &e.model, &c.column, Some(p.expansion_ratio), "value", p.value));
                rows.push(row("efficiency", &e.model, &c.column, Some(p.expansion_ratio), "pct_change", p.pct_change));
            }
        }
    }
    for e in &reports {
        for m in &e.single_vs_batch {
            rows.push(row("single_vs_batch", &e.model, "j_per_token", Some(m.expansion_ratio), "single_over_batch", m.single_over_batch));
        }
    }
    for h in headline_numbers(fx)? {
        rows.push(row("headline", "", &h.name, None, "value", h.value));
    }
    Ok(())
}

/// All report rows in deterministic order: section, then model, benchmark,
/// descending ratio.
pub fn build_report(inputs: &ReportInputs) -> Result<Vec<ReportRow>> {
    if inputs.fixtures.is_none() && inputs.sweep.is_empty() && inputs.profile.is_empty() {
        return Err(Error::InvalidArgument("report needs fixtures or sweep results".into()));
    }
    let mut rows = Vec::new();
    if let Some(fx) = &inputs.fixtures {
        fixture_rows(fx, &mut rows)?;
    }
    let mut sweep = inputs.sweep.clone();
    sweep.sort_by(|a, b| {
        (&a.model_tag, &a.criterion)
            .cmp(&(&b.model_tag, &b.criterion))
            .then(b.expansion_ratio.total_cmp(&a.expansion_ratio))
    });
    for s in &sweep {
        let r = Some(s.expansion_ratio);
        rows.push(row("sweep", &s.model_tag, &s.criterion, r, "pruning_pct", s.pruning_pct));
        rows.push(row("sweep", &s.model_tag, &s.criterion, r, "perplexity", s.perplexity));
        rows.push(row("sweep", &s.model_tag, &s.criterion, r, "next_token_accuracy", s.next_token_accuracy));
        rows.push(row("sweep", &s.model_tag, &s.criterion, r, "token_count", s.token_count as f64));
    }
    let mut profile = inputs.profile.clone();
    profile.sort_by(|a, b| b.ratio.total_cmp(&a.ratio).then(a.batch_size.cmp(&b.batch_size)));
    for p in &profile {
        let key = format!("B{}", p.batch_size);
        let r = Some(p.ratio);
        rows.push(row("profile", "", &key, r, "j_per_token", p.joules_per_token));
        rows.push(row("profile", "", &key, r, "latency_ms", p.latency_ms));
        rows.push(row("profile", "", &key, r, "throughput_tok_s", p.throughput_tok_s));
    }
    Ok(rows)
}

fn json_number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

pub fn report_json(rows: &[ReportRow]) -> Value {
    let mut sections: BTreeMap<&str, Vec<Value>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !sections.contains_key(r.section) {
            order.push(r.section);
        }
        sections.entry(r.section).or_default().push(json!({
            "model": r.model,
            "key": r.key,
            "expansion_ratio": r.expansion_ratio.map_or(Value::Null, json_number),
            "metric": r.metric,
            "value": json_number(r.value),
        }));
    }
    json!({
        "float_significant_digits": 6,
        "section_order": order,
        "sections": sections,
    })
}

pub fn write_report_csv<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.section.to_string(),
            r.model.clone(),
            r.key.clone(),
            r.expansion_ratio.map_or_else(String::new, |v| v.to_string()),
            r.metric.clone(),
            r.value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Writes `report.json` and `report.csv` into `out_dir`.
pub fn emit_report(inputs: &ReportInputs, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let rows = build_report(inputs)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let json_path = out_dir.join(REPORT_JSON);
    let csv_path = out_dir.join(REPORT_CSV);
    let text = serde_json::to_string_pretty(&report_json(&rows))?;
    std::fs::write(&json_path, text + "\n").map_err(|e| Error::io(&json_path, e))?;
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_report_csv(std::io::BufWriter::new(file), &rows)?;
    Ok((json_path, csv_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(round_sig6(175.024_154_589_371_97), 175.024);
        assert_eq!(round_sig6(0.311_1), 0.3111);
        assert_eq!(round_sig6(-0.676_969_149), -0.676_969);
        assert_eq!(round_sig6(0.0), 0.0);
        assert_eq!(round_sig6(1_234_567.0), 1_234_570.0);
    }

    #[test]
    fn needs_a_source() {
        assert!(build_report(&ReportInputs::default()).is_err());
    }

    #[test]
    fn sweep_only_report() {
        let inputs = ReportInputs {
            sweep: vec![SweepRow {
                model_tag: "toy".into(),
                criterion: "MAW".into(),
                pruning_pct: 10.0,
                expansion_ratio: 3.6,
                perplexity: 250.123456789,
                next_token_accuracy: 0.01,
                token_count: 100,
            }],
            ..Default::default()
        };
        let rows = build_report(&inputs).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[1].value, 250.123);
    }
}
