//! Latency, throughput and energy-per-token of greedy generation in
//! single-request (B1) and batched (B8) modes.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transformer::ToyTransformer;

pub const DEFAULT_SEEDS: [u64; 3] = [42, 123, 456];
pub const CANONICAL_BATCH_SIZES: [usize; 2] = [1, 8];

/// Source of joules consumed during a timed section.
pub trait EnergySource {
    /// Called right before a timed section starts.
    fn begin(&mut self) {}

    /// Joules consumed since the matching `begin`.
    fn end(&mut self, wall_seconds: f64) -> f64;
}

/// Reports no energy; J/token comes out as zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullEnergy;

impl EnergySource for NullEnergy {
    fn end(&mut self, _wall_seconds: f64) -> f64 {
        0.0
    }
}

/// `J = watts × seconds`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPower {
    watts: f64,
}

impl ConstantPower {
    pub fn new(watts: f64) -> Result<Self> {
        if !(watts > 0.0 && watts.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "power must be positive, got {watts} W"
            )));
        }
        Ok(Self { watts })
    }

    pub fn watts(&self) -> f64 {
        self.watts
    }
}

impl EnergySource for ConstantPower {
    fn end(&mut self, wall_seconds: f64) -> f64 {
        self.watts * wall_seconds
    }
}

/// Wraps a cumulative joule counter (RAPL, NVML, a smart plug...).
pub struct MeterHook<F: FnMut() -> f64> {
    read_joules: F,
    start: f64,
}

impl<F: FnMut() -> f64> MeterHook<F> {
    pub fn new(read_joules: F) -> Self {
        Self {
            read_joules,
            start: 0.0,
        }
    }
}

impl<F: FnMut() -> f64> EnergySource for MeterHook<F> {
    fn begin(&mut self) {
        self.start = (self.read_joules)();
    }

    fn end(&mut self, _wall_seconds: f64) -> f64 {
        (self.read_joules)() - self.start
    }
}

pub fn joules_per_token(joules: f64, tokens: usize) -> Result<f64> {
    if tokens == 0 {
        return Err(Error::InvalidArgument(
            "joules per token is undefined for zero generated tokens".into(),
        ));
    }
    Ok(joules / tokens as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub ratio: f64,
    pub pruning_pct: f64,
    pub batch_size: usize,
    /// Mean end-to-end generation time per prompt.
    pub latency_ms: f64,
    pub throughput_tok_s: f64,
    pub joules_per_token: f64,
    pub gen_tokens: usize,
    pub runs: usize,
    pub seed_list: Vec<u64>,
    /// Wall-clock seconds of each timed batch, in execution order.
    pub batch_seconds: Vec<f64>,
    pub canonical: bool,
}

#[derive(Debug, Clone)]
pub struct ProfileOptions {
    pub batch_size: usize,
    pub gen_tokens: usize,
    /// One timed run per seed; the seed fixes the order prompts are batched in.
    pub seeds: Vec<u64>,
    pub warmup: bool,
    /// Upper bound on prompt length plus generated tokens.
    pub max_context: usize,
    pub pruning_pct: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            batch_size: 1,
            gen_tokens: 16,
            seeds: DEFAULT_SEEDS.to_vec(),
            warmup: true,
            max_context: 1024,
            pruning_pct: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub record: ProfileRecord,
    /// Generated ids per prompt, in the caller's prompt order.
    pub generated: Vec<Vec<u32>>,
}

#[allow(clippy::too_many_arguments)]
fn run_once(
    model: &ToyTransformer,
    prompts: &[Vec<u32>],
    order: &[usize],
    opts: &ProfileOptions,
    energy: &mut dyn EnergySource,
    generated: &mut [Vec<u32>],
    batch_seconds: &mut Vec<f64>,
    latencies: &mut Vec<f64>,
) -> Result<f64> {
    let mut joules = 0.0;
    for chunk in order.chunks(opts.batch_size) {
        let batch: Vec<Vec<u32>> = chunk.iter().map(|&i| prompts[i].clone()).collect();
        energy.begin();
        let start = Instant::now();
        let out = model.generate_greedy(&batch, opts.gen_tokens)?;
        let secs = start.elapsed().as_secs_f64();
        joules += energy.end(secs);
        batch_seconds.push(secs);
        latencies.extend(std::iter::repeat_n(secs, chunk.len()));
        for (&i, ids) in chunk.iter().zip(out) {
            generated[i] = ids;
        }
    }
    Ok(joules)
}

/// Times greedy generation of `gen_tokens` per prompt, `batch_size` prompts
/// at a time, once per seed after an untimed warm-up pass.
///
/// Latency of a prompt is the wall-clock time of the batch it ran in.
pub fn measure(
    model: &ToyTransformer,
    prompts: &[Vec<u32>],
    opts: &ProfileOptions,
    energy: &mut dyn EnergySource,
) -> Result<Measurement> {
    if prompts.is_empty() {
        return Err(Error::InvalidArgument("no prompts to profile".into()));
    }
    if opts.gen_tokens == 0 {
        return Err(Error::InvalidArgument("gen_tokens must be >= 1".into()));
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    if opts.seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed (run) is required".into()));
    }
    for (i, p) in prompts.iter().enumerate() {
        if p.is_empty() {
            return Err(Error::InvalidArgument(format!("prompt {i} is empty")));
        }
        if p.len() + opts.gen_tokens > opts.max_context {
            return Err(Error::InvalidArgument(format!(
                "prompt {i} ({} tokens) plus {} generated exceeds the context budget of {}",
                p.len(),
                opts.gen_tokens,
                opts.max_context
            )));
        }
    }

    let mut generated = vec![Vec::new(); prompts.len()];
    let identity: Vec<usize> = (0..prompts.len()).collect();
    if opts.warmup {
        run_once(model, prompts, &identity, opts, &mut NullEnergy, &mut generated, &mut Vec::new(), &mut Vec::new())?;
    }

    let mut batch_seconds = Vec::new();
    let mut latencies = Vec::new();
    let mut joules = 0.0;
    for &seed in &opts.seeds {
        let mut order = identity.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        joules += run_once(model, prompts, &order, opts, energy, &mut generated, &mut batch_seconds, &mut latencies)?;
    }

    let tokens = prompts.len() * opts.gen_tokens * opts.seeds.len();
    let total_secs: f64 = batch_seconds.iter().sum();
    let record = ProfileRecord {
        ratio: model.expansion_ratio(),
        pruning_pct: opts.pruning_pct,
        batch_size: opts.batch_size,
        latency_ms: latencies.iter().sum::<f64>() / latencies.len() as f64 * 1e3,
        throughput_tok_s: tokens as f64 / total_secs,
        joules_per_token: joules_per_token(joules, tokens)?,
        gen_tokens: opts.gen_tokens,
        runs: opts.seeds.len(),
        seed_list: opts.seeds.clone(),
        batch_seconds,
        canonical: CANONICAL_BATCH_SIZES.contains(&opts.batch_size),
    };
    Ok(Measurement { record, generated })
}

/// One profiled configuration of a sweep.
pub struct SweepEntry<'a> {
    pub model: &'a ToyTransformer,
    pub pruning_pct: f64,
}

/// Profiles every (configuration, batch size) pair. Records come back in
/// descending ratio order, batch sizes ascending within a ratio.
pub fn profile_sweep(
    entries: &[SweepEntry<'_>],
    prompts: &[Vec<u32>],
    batch_sizes: &[usize],
    base: &ProfileOptions,
    energy: &mut dyn EnergySource,
) -> Result<Vec<ProfileRecord>> {
    if entries.is_empty() || batch_sizes.is_empty() {
        return Err(Error::InvalidArgument("profile sweep needs at least one configuration".into()));
    }
    let mut records = Vec::with_capacity(entries.len() * batch_sizes.len());
    for e in entries {
        for &b in batch_sizes {
            let opts = ProfileOptions {
                batch_size: b,
                pruning_pct: e.pruning_pct,
                ..base.clone()
            };
            records.push(measure(e.model, prompts, &opts, energy)?.record);
        }
    }
    records.sort_by(|a, b| b.ratio.total_cmp(&a.ratio).then(a.batch_size.cmp(&b.batch_size)));
    Ok(records)
}

/// Printable-ASCII prompts of `len` bytes wrapped as `[BOS, bytes...]`.
pub fn synthetic_prompts(seed: u64, count: usize, len: usize) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut p = vec![crate::eval::BOS];
            p.extend((0..len).map(|_| rng.random_range(32u32..127)));
            p
        })
        .collect()
}

pub const PROFILE_CSV_HEADER: [&str; 9] = [
    "expansion_ratio",
    "pruning_pct",
    "batch_size",
    "gen_tokens",
    "j_per_token",
    "latency_ms",
    "throughput_tok_s",
    "runs",
    "seeds",
];

pub fn write_profile_csv<W: Write>(out: W, records: &[ProfileRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PROFILE_CSV_HEADER)?;
    for r in records {
        let seeds: Vec<String> = r.seed_list.iter().map(u64::to_string).collect();
        w.write_record([
            r.ratio.to_string(),
            r.pruning_pct.to_string(),
            r.batch_size.to_string(),
            r.gen_tokens.to_string(),
            r.joules_per_token.to_string(),
            r.latency_ms.to_string(),
            r.throughput_tok_s.to_string(),
            r.runs.to_string(),
            seeds.join(";"),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Reads a file written by [`write_profile_csv`]. Per-batch timings are not
/// stored there, so `batch_seconds` comes back empty.
pub fn read_profile_csv<R: std::io::Read>(input: R) -> Result<Vec<ProfileRecord>> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(PROFILE_CSV_HEADER) {
        return Err(Error::InvalidArgument(format!(
            "profile CSV header must be {}",
            PROFILE_CSV_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |col: &str| Error::InvalidArgument(format!("profile CSV row {}: bad {col}", i + 1));
        let f = |idx: usize| rec[idx].parse::<f64>().map_err(|_| bad(PROFILE_CSV_HEADER[idx]));
        let u = |idx: usize| rec[idx].parse::<usize>().map_err(|_| bad(PROFILE_CSV_HEADER[idx]));
        let seed_list = rec[8]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<u64>().map_err(|_| bad("seeds")))
            .collect::<Result<Vec<_>>>()?;
        let batch_size = u(2)?;
        out.push(ProfileRecord {
            ratio: f(0)?,
            pruning_pct: f(1)?,
            batch_size,
            gen_tokens: u(3)?,
            joules_per_token: f(4)?,
            latency_ms: f(5)?,
            throughput_tok_s: f(6)?,
            runs: u(7)?,
            seed_list,
            batch_seconds: Vec::new(),
            canonical: CANONICAL_BATCH_SIZES.contains(&batch_size),
        });
    }
    Ok(out)
}
