//! `glu-shears`: score, plan, prune, evaluate and profile GLU width pruning.
//!
//! Exit codes: 0 success, 1 invalid input or failed check, 2 I/O failure.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use glu_shears_core::analytics::{self, report, FixtureSet};
use glu_shears_core::eval::{self, Corpus};
use glu_shears_core::importance::{self, Criterion};
use glu_shears_core::model_io::{self, model::CONFIG_FILE, model::WEIGHTS_FILE, ModelConfig};
use glu_shears_core::profiler::{self, ConstantPower, EnergySource, NullEnergy, ProfileOptions, SweepEntry};
use glu_shears_core::pruner::{self, PruningPlan};
use glu_shears_core::tensor::DataKind;
use glu_shears_core::transformer::{init_toy_model, ToyTransformer};
use serde::Serialize;

const THREADS_ENV: &str = "GLU_SHEARS_THREADS";
const PLAN_FILE: &str = "plan.json";

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<glu_shears_core::Error> for CliError {
    fn from(e: glu_shears_core::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "glu-shears", version, about = "Structured width pruning of GLU feed-forward layers")]
#[command(after_help = "Set GLU_SHEARS_THREADS to cap worker threads (default: all cores).\n\
Exit codes: 0 success, 1 invalid input or failed check, 2 I/O failure.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random model directory
    Init(InitArgs),
    /// Print config, per-layer MLP shapes and expansion ratio
    Inspect(InspectArgs),
    /// Score every MLP neuron and write layer,neuron,criterion,score rows
    Score(ScoreArgs),
    /// Decide which neurons to remove for a fraction or target ratio
    Plan(PlanArgs),
    /// Apply a plan and write the pruned model directory
    Prune(PruneArgs),
    /// Check the shape invariants of a model directory
    Verify(ModelArg),
    /// Byte-level perplexity of a model on a corpus
    EvalPpl(EvalArgs),
    /// Time greedy generation and estimate energy per token
    Profile(ProfileArgs),
    /// Prune at several fractions and evaluate each on a corpus
    Sweep(SweepArgs),
    /// Recompute the analysis tables and write report.json and report.csv
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    /// d_model 64, d_ff 256, 2 layers
    Toy,
    /// d_model 2048, d_ff 8192 (r = 4.0)
    #[value(name = "1b")]
    OneB,
    /// d_model 3072, d_ff 8192 (r ≈ 2.67)
    #[value(name = "3b")]
    ThreeB,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dtype {
    F32,
    Bf16,
}

impl From<Dtype> for DataKind {
    fn from(d: Dtype) -> Self {
        match d {
            Dtype::F32 => DataKind::F32,
            Dtype::Bf16 => DataKind::BF16,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Maw,
    Vow,
    Pon,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Maw => Criterion::Maw,
            CriterionArg::Vow => Criterion::Vow,
            CriterionArg::Pon => Criterion::Pon,
        }
    }
}

#[derive(Args)]
struct InitArgs {
    /// Output model directory
    #[arg(long)]
    out: PathBuf,
    /// Weight initialization seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Architecture preset, ignored when --config is given
    #[arg(long, value_enum, default_value = "toy")]
    shape: Shape,
    /// Number of layers for the 1b/3b presets
    #[arg(long, default_value_t = 1)]
    layers: usize,
    /// Read the architecture from this config.json instead of a preset
    #[arg(long)]
    config: Option<PathBuf>,
    /// Element type of the written weights
    #[arg(long, value_enum, default_value = "f32")]
    dtype: Dtype,
}

#[derive(Args)]
struct InspectArgs {
    /// Model directory, or a bare config.json
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct ModelArg {
    /// Model directory (config.json + model.safetensors)
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Model directory
    #[arg(long)]
    model: PathBuf,
    /// Importance criterion
    #[arg(long, value_enum, default_value = "maw")]
    criterion: CriterionArg,
    /// Output CSV (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    /// Model directory
    #[arg(long)]
    model: PathBuf,
    /// Importance criterion
    #[arg(long, value_enum, default_value = "maw")]
    criterion: CriterionArg,
    /// Fraction of d_ff to remove, in [0, 1)
    #[arg(long, conflicts_with = "ratio", required_unless_present = "ratio")]
    fraction: Option<f64>,
    /// Target expansion ratio d_ff / d_model
    #[arg(long)]
    ratio: Option<f64>,
    /// Output plan JSON (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PruneArgs {
    /// Model directory
    #[arg(long)]
    model: PathBuf,
    /// Plan JSON written by `plan`
    #[arg(long)]
    plan: PathBuf,
    /// Output model directory
    #[arg(long)]
    out: PathBuf,
    /// Element type of the written weights
    #[arg(long, value_enum, default_value = "f32")]
    dtype: Dtype,
}

#[derive(Args)]
struct EvalArgs {
    /// Model directory
    #[arg(long)]
    model: PathBuf,
    /// Text file (one document per line) or directory (one document per file)
    #[arg(long)]
    corpus: PathBuf,
    /// Output CSV (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Label written in the model_tag column (default: the directory name)
    #[arg(long)]
    tag: Option<String>,
}

#[derive(Args)]
struct ProfileArgs {
    /// Model directory
    #[arg(long)]
    model: PathBuf,
    /// Batch sizes, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1,8")]
    batch: Vec<usize>,
    /// Tokens generated per prompt
    #[arg(long, default_value_t = 32)]
    gen_tokens: usize,
    /// Constant power draw in watts; J/token is reported as 0 without it
    #[arg(long)]
    watts: Option<f64>,
    /// One timed run per seed; each seed shuffles the prompt order
    #[arg(long, value_delimiter = ',', default_value = "42,123,456")]
    seeds: Vec<u64>,
    /// Number of synthetic prompts
    #[arg(long, default_value_t = 8)]
    prompts: usize,
    /// Bytes per synthetic prompt
    #[arg(long, default_value_t = 16)]
    prompt_len: usize,
    /// Seed of the synthetic prompt text
    #[arg(long, default_value_t = 42)]
    prompt_seed: u64,
    /// Also profile pruned variants at these fractions, comma separated
    #[arg(long, value_delimiter = ',')]
    fractions: Vec<f64>,
    /// Criterion used for --fractions
    #[arg(long, value_enum, default_value = "maw")]
    criterion: CriterionArg,
    /// Skip the untimed warm-up run
    #[arg(long)]
    no_warmup: bool,
    /// Output CSV (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Model directory
    #[arg(long)]
    model: PathBuf,
    /// Pruning fractions, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6")]
    fractions: Vec<f64>,
    /// Importance criterion
    #[arg(long, value_enum, default_value = "maw")]
    criterion: CriterionArg,
    /// Text file (one document per line) or directory (one document per file)
    #[arg(long)]
    corpus: PathBuf,
    /// Output CSV (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Label written in the model_tag column (default: the directory name)
    #[arg(long)]
    tag: Option<String>,
    /// Also write each pruned model to DIR/p<percent>
    #[arg(long)]
    save_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Result-table CSV, or `builtin` for the tables shipped with the tool
    #[arg(long)]
    fixtures: Option<String>,
    /// CSV written by `sweep`
    #[arg(long)]
    sweep: Option<PathBuf>,
    /// CSV written by `profile`
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

/// Opens `path` for writing, or stdout.
fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
            Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn load(dir: &Path) -> CliResult<ToyTransformer> {
    Ok(model_io::load_model_dir(dir)?)
}

fn default_tag(dir: &Path, tag: Option<String>) -> String {
    tag.unwrap_or_else(|| {
        dir.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into())
    })
}

/// `r = 4.00×` when exact at two decimals, `r ≈ 2.67×` otherwise.
fn ratio_label(r: f64) -> String {
    let shown = format!("{r:.2}");
    let exact = (shown.parse::<f64>().unwrap_or(f64::NAN) - r).abs() < 1e-12;
    format!("r {} {shown}×", if exact { "=" } else { "≈" })
}

fn check_fraction(f: f64) -> CliResult {
    if !(0.0..1.0).contains(&f) {
        return Err(CliError::Invalid(format!("fraction {f} must be in [0, 1)")));
    }
    Ok(())
}

fn init(a: InitArgs) -> CliResult {
    let config = match &a.config {
        Some(p) => ModelConfig::read(p)?,
        None => match a.shape {
            Shape::Toy => ModelConfig::default(),
            Shape::OneB => ModelConfig::llama_1b_shape(a.layers),
            Shape::ThreeB => ModelConfig::llama_3b_shape(a.layers),
        },
    };
    let model = init_toy_model(a.seed, &config)?;
    model_io::save_model_dir(&model, &a.out, a.dtype.into())?;
    println!("wrote {} ({}, seed {})", a.out.display(), ratio_label(config.expansion_ratio()), a.seed);
    Ok(())
}

fn inspect(a: InspectArgs) -> CliResult {
    let (config_path, weights) = if a.model.is_dir() {
        (a.model.join(CONFIG_FILE), Some(a.model.join(WEIGHTS_FILE)).filter(|w| w.exists()))
    } else {
        (a.model.clone(), None)
    };
    let config = ModelConfig::read(&config_path)?;
    println!("hidden_size        {}", config.hidden_size);
    println!("intermediate_size  {}", config.intermediate_size);
    println!("num_layers         {}", config.num_layers);
    println!("num_heads          {}", config.num_heads);
    println!("vocab_size         {}", config.vocab_size);
    println!("rope_theta         {}", config.rope_theta);
    println!("rms_eps            {}", config.rms_eps);
    match weights {
        Some(w) => {
            let archive = model_io::read_archive(&w)?;
            for i in 0..config.num_layers {
                let shapes: Vec<String> = ["gate_proj", "up_proj", "down_proj"]
                    .iter()
                    .map(|p| {
                        let name = model_io::model::mlp_name(i, p);
                        archive.get(&name).map_or_else(|| format!("{p} missing"), |t| format!("{p} {:?}", t.shape))
                    })
                    .collect();
                println!("layer {i:<3} {}", shapes.join("  "));
            }
            if let Err(e) = model_io::load_model(&archive, &config) {
                println!("warning: weights do not match config: {e}");
            }
        }
        None => {
            let (d, ff) = (config.hidden_size, config.intermediate_size);
            for i in 0..config.num_layers {
                println!("layer {i:<3} gate_proj [{ff}, {d}]  up_proj [{ff}, {d}]  down_proj [{d}, {ff}]  (from config)");
            }
        }
    }
    println!("expansion ratio    {}", ratio_label(config.expansion_ratio()));
    Ok(())
}

#[derive(Serialize)]
struct EvalRow<'a> {
    model_tag: &'a str,
    expansion_ratio: f64,
    perplexity: f64,
    next_token_accuracy: f64,
    token_count: usize,
}

fn score(a: ScoreArgs) -> CliResult {
    let model = load(&a.model)?;
    let vectors = importance::score_model(&model, a.criterion.into());
    importance::write_scores_csv(output(a.out.as_deref())?, &vectors)?;
    if let Some(p) = &a.out {
        eprintln!("wrote {} scores for {} layers to {}", vectors.iter().map(|v| v.scores.len()).sum::<usize>(), vectors.len(), p.display());
    }
    Ok(())
}

fn plan(a: PlanArgs) -> CliResult {
    let model = load(&a.model)?;
    let crit = a.criterion.into();
    let plan = match (a.fraction, a.ratio) {
        (Some(f), _) => {
            check_fraction(f)?;
            pruner::plan_from_fraction(&model, crit, f)?
        }
        (None, Some(r)) => pruner::plan_from_ratio(&model, crit, r)?,
        (None, None) => unreachable!("clap requires one of --fraction/--ratio"),
    };
    let summary = format!(
        "{} {:.1}%: d_ff {} -> {} ({}), {} neurons removed per layer",
        plan.criterion,
        plan.fraction * 100.0,
        plan.original_d_ff,
        plan.retained_d_ff,
        ratio_label(plan.target_ratio),
        plan.removed_per_layer()
    );
    match &a.out {
        Some(p) => {
            plan.write(p)?;
            println!("{summary}");
            println!("wrote {}", p.display());
        }
        None => {
            eprintln!("{summary}");
            let mut out = output(None)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&plan).expect("plan serializes"))
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    Ok(())
}

fn prune(a: PruneArgs) -> CliResult {
    let model = load(&a.model)?;
    let plan = PruningPlan::read(&a.plan)?;
    let pruned = pruner::prune_model(&model, &plan)?;
    let report = pruner::verify_consistency(&pruned);
    if !report.passed {
        return Err(CliError::Invalid(format!(
            "pruned model failed consistency: {}",
            report.violation.unwrap_or_default()
        )));
    }
    model_io::save_model_dir(&pruned, &a.out, a.dtype.into())?;
    plan.write(&a.out.join(PLAN_FILE))?;
    println!(
        "wrote {}: d_ff {} -> {} ({})",
        a.out.display(),
        plan.original_d_ff,
        pruned.config.intermediate_size,
        ratio_label(pruned.expansion_ratio())
    );
    Ok(())
}

fn verify(a: ModelArg) -> CliResult {
    let model = load(&a.model)?;
    let report = pruner::verify_consistency(&model);
    match report.violation {
        Some(v) => Err(CliError::Invalid(format!("consistency check failed after {} checks: {v}", report.checks))),
        None => {
            println!("passed ({} checks, {})", report.checks, ratio_label(model.expansion_ratio()));
            Ok(())
        }
    }
}

fn eval_ppl(a: EvalArgs) -> CliResult {
    let model = load(&a.model)?;
    let corpus = Corpus::load(&a.corpus)?;
    let tag = default_tag(&a.model, a.tag);
    let r = eval::evaluate(&model, &corpus, &tag)?;
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    let row = EvalRow {
        model_tag: &r.model_tag,
        expansion_ratio: r.ratio,
        perplexity: r.perplexity,
        next_token_accuracy: r.next_token_accuracy,
        token_count: r.token_count,
    };
    w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    if a.out.is_some() {
        println!("{tag}: perplexity {:.4} over {} tokens ({})", r.perplexity, r.token_count, ratio_label(r.ratio));
    }
    Ok(())
}

fn profile(a: ProfileArgs) -> CliResult {
    let base = load(&a.model)?;
    for &f in &a.fractions {
        check_fraction(f)?;
    }
    let mut variants: Vec<(ToyTransformer, f64)> = Vec::new();
    for &f in &a.fractions {
        let plan = pruner::plan_from_fraction(&base, a.criterion.into(), f)?;
        variants.push((pruner::prune_model(&base, &plan)?, f * 100.0));
    }
    let mut entries = Vec::new();
    if !a.fractions.contains(&0.0) {
        entries.push(SweepEntry { model: &base, pruning_pct: 0.0 });
    }
    entries.extend(variants.iter().map(|(m, p)| SweepEntry { model: m, pruning_pct: *p }));

    let prompts = profiler::synthetic_prompts(a.prompt_seed, a.prompts, a.prompt_len);
    let opts = ProfileOptions {
        gen_tokens: a.gen_tokens,
        seeds: a.seeds.clone(),
        warmup: !a.no_warmup,
        ..Default::default()
    };
    let mut energy: Box<dyn EnergySource> = match a.watts {
        Some(w) => Box::new(ConstantPower::new(w)?),
        None => Box::new(NullEnergy),
    };
    let records = profiler::profile_sweep(&entries, &prompts, &a.batch, &opts, energy.as_mut())?;
    profiler::write_profile_csv(output(a.out.as_deref())?, &records)?;
    if a.out.is_some() {
        for r in &records {
            println!(
                "r {:.2} B{}: {:.1} tok/s, {:.2} ms latency, {:.4} J/token",
                r.ratio, r.batch_size, r.throughput_tok_s, r.latency_ms, r.joules_per_token
            );
        }
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> CliResult {
    for &f in &a.fractions {
        check_fraction(f)?;
    }
    let base = load(&a.model)?;
    let corpus = Corpus::load(&a.corpus)?;
    let tag = default_tag(&a.model, a.tag);
    let crit: Criterion = a.criterion.into();
    let mut rows = Vec::new();
    for &f in &a.fractions {
        let plan = pruner::plan_from_fraction(&base, crit, f)?;
        let model = pruner::prune_model(&base, &plan)?;
        if let Some(dir) = &a.save_dir {
            let out = dir.join(format!("p{:02}", (f * 100.0).round() as u32));
            model_io::save_model_dir(&model, &out, DataKind::F32)?;
            plan.write(&out.join(PLAN_FILE))?;
        }
        let r = eval::evaluate(&model, &corpus, &tag)?;
        rows.push(report::SweepRow {
            model_tag: tag.clone(),
            criterion: crit.to_string(),
            pruning_pct: f * 100.0,
            expansion_ratio: r.ratio,
            perplexity: r.perplexity,
            next_token_accuracy: r.next_token_accuracy,
            token_count: r.token_count,
        });
        if a.out.is_some() {
            println!("{crit} {:>4.1}%  {}  ppl {:.4}", f * 100.0, ratio_label(r.ratio), r.perplexity);
        }
    }
    analytics::write_sweep_csv(output(a.out.as_deref())?, &rows)?;
    Ok(())
}

fn report_cmd(a: ReportArgs) -> CliResult {
    let fixtures: Option<FixtureSet> = match a.fixtures.as_deref() {
        None => None,
        Some("builtin") => Some(analytics::embedded_fixtures()),
        Some(p) => Some(analytics::load_fixtures(Path::new(p))?),
    };
    let sweep = match &a.sweep {
        Some(p) => analytics::read_sweep_csv(p)?,
        None => Vec::new(),
    };
    let profile = match &a.profile {
        Some(p) => profiler::read_profile_csv(File::open(p).map_err(|e| io_err(p, e))?)?,
        None => Vec::new(),
    };
    let inputs = report::ReportInputs { fixtures, sweep, profile };
    let (json, csv) = analytics::emit_report(&inputs, &a.out)?;
    if let Some(fx) = &inputs.fixtures {
        for c in analytics::knowledge_truthfulness_correlations(fx)? {
            println!("{:<9} r = {:+.3}  p = {:.3}  (n = {})", c.label, c.r, c.p_two_sided, c.n);
        }
    }
    println!("wrote {} and {}", json.display(), csv.display());
    Ok(())
}

fn configure_threads() -> CliResult {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Invalid(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Invalid(e.to_string()))
}

fn run(cli: Cli) -> CliResult {
    configure_threads()?;
    match cli.command {
        Command::Init(a) => init(a),
        Command::Inspect(a) => inspect(a),
        Command::Score(a) => score(a),
        Command::Plan(a) => plan(a),
        Command::Prune(a) => prune(a),
        Command::Verify(a) => verify(a),
        Command::EvalPpl(a) => eval_ppl(a),
        Command::Profile(a) => profile(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Invalid(_) => 1,
                CliError::Io(_) => 2,
            })
        }
    }
}
