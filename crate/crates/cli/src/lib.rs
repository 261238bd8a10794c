//! The `cogflow` command line.
//!
//! Exit codes: 0 success, 1 a criterion or validation check failed,
//! 2 configuration error, 3 backend or I/O error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info, LevelFilter};
use thiserror::Error;

use cogflow::config::{BackendKind, Config, ConfigError, ExperimentKind};
use cogflow::flow::{generate, FlowError, GenerationContext, GenerationRequest};
use cogflow::harness::{emit_output, ExperimentRunner, HarnessError};
use cogflow::output::write_files_atomically;
use cogflow::polarize::{build_all_sets, build_chain_orders, PolarizeError, PromptSetExport};
use cogflow::verify::invariant_suite;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cogflow", version, about = "Cognitive-anchor blending over flow-matching fields")]
pub struct Cli {
    /// Experiment config (JSON). Required by polarize, generate and experiment.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory [default: ./cogflow_out, or ./cogflow_out/<kind> for experiments].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Override a config key by dotted path, e.g. `blend.lambda=0`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Cap on worker threads [default: one per core].
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Override `flow.seed`.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Override `polarize.backend`.
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendArg>,

    /// Only log errors.
    #[arg(long, short, global = true, conflicts_with = "verbose")]
    pub quiet: bool,

    /// Log debug detail.
    #[arg(long, short, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Template,
    Llm,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Template => BackendKind::Template,
            BackendArg::Llm => BackendKind::Llm,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build every anchor's polarized prompt set and export it as JSON
    /// (`prompt_sets.json` under --out, or stdout when --out is absent).
    Polarize,
    /// Sample one generation request and write endpoints.csv, decoded.csv,
    /// metadata.json (and trajectories.csv when recorded).
    Generate,
    /// Run a harness experiment and write metrics.json, metrics.csv,
    /// series.csv and timing.json.
    Experiment {
        /// vertex_recovery, continuity_sweep, order_bias, cost_accounting,
        /// stochastic_equivalence or response_sweep [default: experiment.kind].
        kind: Option<String>,
    },
    /// Run the built-in invariant checks and print one line per check.
    Validate,
    /// Print the cyclic chain orders for n dimensions.
    Orders {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=6))]
        n: u8,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Polarize(#[from] PolarizeError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Failed(String),
}

fn polarize_code(e: &PolarizeError) -> i32 {
    match e {
        PolarizeError::EmptyPrompt | PolarizeError::ForeignAnchor { .. } | PolarizeError::DimensionCount(_) => {
            EXIT_CONFIG
        }
        PolarizeError::InChain { source, .. } => polarize_code(source),
        _ => EXIT_BACKEND,
    }
}

fn flow_code(e: &FlowError) -> i32 {
    match e {
        FlowError::Divergence { .. } => EXIT_FAILED,
        FlowError::Config(_) | FlowError::Binding(_) | FlowError::Blend(_) => EXIT_CONFIG,
        FlowError::Polarize(p) => polarize_code(p),
        FlowError::Sample { source, .. } => flow_code(source),
        FlowError::Io(_) => EXIT_BACKEND,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Polarize(e) => polarize_code(e),
            CliError::Flow(e) => flow_code(e),
            CliError::Harness(h) => match h {
                HarnessError::Config(_)
                | HarnessError::Setup(_)
                | HarnessError::Semantics(_)
                | HarnessError::Blend(_) => EXIT_CONFIG,
                HarnessError::Flow(e) => flow_code(e),
                HarnessError::Polarize(e) => polarize_code(e),
                HarnessError::Io { .. } => EXIT_BACKEND,
            },
            CliError::Io { .. } => EXIT_BACKEND,
            CliError::Failed(_) => EXIT_FAILED,
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Usage("this subcommand needs --config PATH".into()))?;
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("flow.seed={seed}"));
    }
    if let Some(b) = cli.backend {
        let name = match b {
            BackendArg::Template => "template",
            BackendArg::Llm => "llm",
        };
        overrides.push(format!("polarize.backend=\"{name}\""));
    }
    Ok(Config::load(path, &overrides)?)
}

fn out_dir(cli: &Cli, leaf: Option<&str>) -> PathBuf {
    match &cli.out {
        Some(p) => p.clone(),
        None => {
            let base = PathBuf::from("cogflow_out");
            leaf.map_or(base.clone(), |l| base.join(l))
        }
    }
}

fn write_files(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<(), CliError> {
    write_files_atomically(dir, files).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    Ok(())
}

fn cmd_orders(n: u8) -> Result<(), CliError> {
    let orders = build_chain_orders(n as usize)?;
    let line: Vec<String> = orders
        .iter()
        .map(|o| {
            let parts: Vec<String> = o.iter().map(|i| i.to_string()).collect();
            format!("({})", parts.join(","))
        })
        .collect();
    println!("{}", line.join(","));
    Ok(())
}

fn cmd_validate() -> Result<(), CliError> {
    let checks = invariant_suite();
    let mut failed = 0;
    for c in &checks {
        println!("{} {} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.pass);
    }
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}

fn cmd_polarize(cli: &Cli) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let backend = config.backend(config.polarize.backend)?;
    let cache = config.open_cache()?;
    let sets = build_all_sets(backend.as_ref(), &config.polarize.base_prompt, &config.space, &cache)?;
    let export = PromptSetExport::new(&config.polarize.base_prompt, &config.space, &sets);
    let mut json = serde_json::to_vec_pretty(&export).expect("export serializes");
    json.push(b'\n');
    match &cli.out {
        Some(dir) => {
            write_files(dir, &[("prompt_sets.json", json)])?;
            info!("wrote {}", dir.join("prompt_sets.json").display());
        }
        None => print!("{}", String::from_utf8(json).expect("JSON is UTF-8")),
    }
    info!("cache: {} hits, {} misses", cache.hits(), cache.misses());
    Ok(())
}

fn cmd_generate(cli: &Cli) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let model = config.semantic_model()?;
    let backend = config.backend(config.polarize.backend)?;
    let cache = config.open_cache()?;
    let ctx = GenerationContext {
        space: &config.space,
        model: &model,
        backend: backend.as_ref(),
        cache: &cache,
    };
    let request = GenerationRequest {
        base_prompt: config.polarize.base_prompt.clone(),
        score: config.score()?,
        seed: config.flow.seed,
        sample_count: config.flow.samples,
        mode: config.blend.mode,
        lambda: config.blend.lambda,
        draw: config.blend.draw,
        integration: config.flow.integration(),
        decoder: config.flow.decoder.clone(),
    };
    let mut batch = generate(&request, &ctx)?;
    batch.metadata.config = serde_json::json!({
        "config_digest": config.digest(),
        "request": batch.metadata.config,
    });
    let dir = out_dir(cli, None);
    batch.write_to(&dir)?;
    info!(
        "wrote {} samples to {} ({} inner evaluations)",
        batch.metadata.sample_count,
        dir.display(),
        batch.metadata.eval_count
    );
    Ok(())
}

fn cmd_experiment(cli: &Cli, kind: Option<&str>) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let kind = match kind {
        Some(name) => ExperimentKind::parse(name).ok_or_else(|| {
            let known: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
            CliError::Usage(format!("unknown experiment {name:?}; expected one of {}", known.join(", ")))
        })?,
        None => config.experiment.kind.ok_or_else(|| {
            CliError::Usage("no experiment named; pass one or set experiment.kind".into())
        })?,
    };
    let dir = match (&cli.out, &config.experiment.output_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => out_dir(cli, Some(kind.name())),
    };
    let runner = ExperimentRunner::new(config)?;
    let output = runner.run(kind)?;
    emit_output(&output, &dir)?;
    for w in &output.report.summary.warnings {
        log::warn!("{w}");
    }
    if !cli.quiet {
        for c in &output.report.summary.criteria {
            let verdict = match c.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "INCONCLUSIVE",
            };
            let value = c.value.map_or("n/a".to_string(), |v| format!("{v:e}"));
            println!("{verdict} {} value={value} threshold: {}", c.name, c.threshold);
        }
    }
    info!("wrote report to {}", dir.display());
    if !output.report.passed() {
        return Err(CliError::Failed(format!("{} criteria failed", kind.name())));
    }
    Ok(())
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        LevelFilter::Error
    } else if cli.verbose {
        LevelFilter::Debug
    } else {
        LevelFilter::Info
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("COGFLOW_LOG")
        .format_target(false)
        .try_init();
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("configuring thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Orders { n } => cmd_orders(*n),
        Command::Validate => cmd_validate(),
        Command::Polarize => cmd_polarize(cli),
        Command::Generate => cmd_generate(cli),
        Command::Experiment { kind } => cmd_experiment(cli, kind.as_deref()),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    init_logging(&cli);
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            error!("{e}");
            e.exit_code()
        }
    }
}
