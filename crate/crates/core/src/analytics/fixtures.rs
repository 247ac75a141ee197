//! Published result tables as long-form CSV:
//! `model,benchmark,direction,expansion_ratio,value`.
//!
//! Benchmark names are either plain (the 13-task suite), `energy:<B1|B8>:<column>`
//! for the efficiency tables, or `criterion:<MAW|VOW|PON>:<task>` for the
//! criterion comparison at 10% pruning.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMBEDDED_FIXTURES: &str = include_str!("../../fixtures/published_tables.csv");

/// Expansion ratios of the seven pruning levels as printed in the tables.
pub const RATIOS_1B: [f64; 7] = [4.0, 3.6, 3.2, 2.8, 2.4, 2.0, 1.6];
pub const RATIOS_3B: [f64; 7] = [2.67, 2.4, 2.13, 1.87, 1.6, 1.33, 1.07];

pub const SUITE: [&str; 13] = [
    "MMLU",
    "ARC-Challenge",
    "GSM8K",
    "MUSR",
    "HellaSwag",
    "WinoGrande",
    "PIQA",
    "BoolQ",
    "WikiText",
    "Lambada",
    "TruthfulQA-MC1",
    "TruthfulQA-MC2",
    "IFEval",
];

const ENERGY_COLUMNS: [(&str, Direction); 5] = [
    ("energy:B1:j_per_token", Direction::Lower),
    ("energy:B1:latency_ms", Direction::Lower),
    ("energy:B1:throughput_tok_s", Direction::Higher),
    ("energy:B8:j_per_token", Direction::Lower),
    ("energy:B8:throughput_tok_s", Direction::Higher),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Higher,
    Lower,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Higher => "higher",
            Direction::Lower => "lower",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub benchmark: String,
    pub direction: Direction,
    /// `(expansion_ratio, value)`, ratios descending.
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn value_at(&self, ratio: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|(r, _)| (r - ratio).abs() < 1e-9)
            .map(|&(_, v)| v)
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|&(_, v)| v).collect()
    }

    pub fn baseline(&self) -> Option<(f64, f64)> {
        self.points.first().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkFixture {
    pub model: String,
    pub series: BTreeMap<String, Series>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FixtureSet {
    pub fixtures: BTreeMap<String, BenchmarkFixture>,
}

impl FixtureSet {
    pub fn model(&self, model: &str) -> Result<&BenchmarkFixture> {
        self.fixtures
            .get(model)
            .ok_or_else(|| Error::InvalidArgument(format!("no fixtures for model {model:?}")))
    }

    pub fn series(&self, model: &str, benchmark: &str) -> Result<&Series> {
        self.model(model)?.series.get(benchmark).ok_or_else(|| {
            Error::InvalidArgument(format!("no {benchmark:?} series for model {model:?}"))
        })
    }

    /// Every series in (model, benchmark) order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Series)> {
        self.fixtures
            .values()
            .flat_map(|f| f.series.values().map(move |s| (f.model.as_str(), s)))
    }
}

pub fn canonical_ratios(model: &str) -> Option<&'static [f64; 7]> {
    match model {
        "1B" | "1B-Instruct" => Some(&RATIOS_1B),
        "3B" => Some(&RATIOS_3B),
        _ => None,
    }
}

/// Known direction of a benchmark name, `None` if unknown.
pub fn benchmark_direction(name: &str) -> Option<Direction> {
    let task_direction = |task: &str| {
        SUITE.contains(&task).then(|| {
            if task == "WikiText" || task == "Lambada" {
                Direction::Lower
            } else {
                Direction::Higher
            }
        })
    };
    if let Some(rest) = name.strip_prefix("criterion:") {
        let (crit, task) = rest.split_once(':')?;
        if !["MAW", "VOW", "PON"].contains(&crit) {
            return None;
        }
        return task_direction(task);
    }
    if name.starts_with("energy:") {
        return ENERGY_COLUMNS.iter().find(|(n, _)| *n == name).map(|&(_, d)| d);
    }
    task_direction(name)
}

/// Whether a series must cover all seven canonical ratios of its model.
fn needs_full_coverage(model: &str, benchmark: &str) -> bool {
    model != "1B-Instruct" && !benchmark.starts_with("criterion:")
}

pub fn parse_fixtures(text: &str) -> Result<FixtureSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let expected = ["model", "benchmark", "direction", "expansion_ratio", "value"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Fixture {
            line: 1,
            message: format!("header must be {}", expected.join(",")),
        });
    }
    let mut set = FixtureSet::default();
    let mut first_line: BTreeMap<(String, String), u64> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Fixture { line, message };
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", rec.len())));
        }
        let (model, bench, dir) = (rec[0].trim(), rec[1].trim(), rec[2].trim());
        let grid = canonical_ratios(model).ok_or_else(|| bad(format!("unknown model {model:?}")))?;
        let known = benchmark_direction(bench).ok_or_else(|| bad(format!("unknown benchmark {bench:?}")))?;
        let direction = match dir {
            "higher" => Direction::Higher,
            "lower" => Direction::Lower,
            other => return Err(bad(format!("direction must be higher or lower, got {other:?}"))),
        };
        if direction != known {
            return Err(bad(format!("{bench} is {}-is-better", known.as_str())));
        }
        let ratio: f64 = rec[3]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad expansion_ratio {:?}", &rec[3])))?;
        if !grid.iter().any(|g| (g - ratio).abs() < 1e-9) {
            return Err(bad(format!("ratio {ratio} is not a canonical ratio for {model}")));
        }
        let value: f64 = rec[4]
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| bad(format!("bad value {:?}", &rec[4])))?;

        let fixture = set
            .fixtures
            .entry(model.to_string())
            .or_insert_with(|| BenchmarkFixture {
                model: model.to_string(),
                series: BTreeMap::new(),
            });
        let series = fixture
            .series
            .entry(bench.to_string())
            .or_insert_with(|| Series {
                benchmark: bench.to_string(),
                direction,
                points: Vec::new(),
            });
        if series.value_at(ratio).is_some() {
            return Err(bad(format!("duplicate {model} {bench} entry at {ratio}")));
        }
        series.points.push((ratio, value));
        first_line
            .entry((model.to_string(), bench.to_string()))
            .or_insert(line);
    }
    for f in set.fixtures.values_mut() {
        let grid = canonical_ratios(&f.model).expect("validated above");
        for s in f.series.values_mut() {
            s.points.sort_by(|a, b| b.0.total_cmp(&a.0));
            if needs_full_coverage(&f.model, &s.benchmark) {
                if let Some(missing) = grid.iter().find(|&&g| s.value_at(g).is_none()) {
                    return Err(Error::Fixture {
                        line: first_line[&(f.model.clone(), s.benchmark.clone())],
                        message: format!("{} {} is missing ratio {missing}", f.model, s.benchmark),
                    });
                }
            }
        }
    }
    Ok(set)
}

pub fn load_fixtures(path: &Path) -> Result<FixtureSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fixtures(&text)
}

/// The tables shipped with the crate.
pub fn embedded_fixtures() -> FixtureSet {
    parse_fixtures(EMBEDDED_FIXTURES).expect("embedded fixtures are well-formed")
}
