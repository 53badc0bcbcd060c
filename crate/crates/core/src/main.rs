use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spectral_select::clustering::BisectionStrategy;
use spectral_select::dataset::write_team_seasons;
use spectral_select::pipeline::{execute, PipelineConfig, PipelineOutput, Stage};
use spectral_select::synthetic::{planted_league, LeagueSpec};
use spectral_select::{Error, ErrorKind};

/// Exit code for command-line usage errors.
const USAGE_EXIT: u8 = 4;

#[derive(Parser)]
#[command(name = "spectral-select", version, about = "Spectral team selection pipeline")]
struct Cli {
    /// Worker threads for forest fitting and k validation (outputs do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: all artifacts plus report.json.
    Run(StageArgs),
    /// Forest importance, variable selection and descriptives.
    Vim(StageArgs),
    /// Up to the Laplacian eigenmap embedding.
    Embed(StageArgs),
    /// Up to SOM validation of the cluster count.
    Validate(StageArgs),
    /// Up to recursive bisection and the network export.
    Cluster(StageArgs),
    /// Write a synthetic league with planted groups as season-level CSV.
    Synth(SynthArgs),
}

#[derive(Copy, Clone, ValueEnum)]
enum StrategyArg {
    Recursive,
    GlobalGap,
}

#[derive(Args)]
struct StageArgs {
    /// Season-level CSV input.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Root seed; required for `run`.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config, or a report.json whose `config` echo is reused. Flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Recompute every stage instead of reusing cached results.
    #[arg(long)]
    no_cache: bool,

    #[arg(long)]
    response: Option<String>,
    /// Comma-separated variables removed from the predictors.
    #[arg(long, value_delimiter = ',')]
    exclude: Option<Vec<String>>,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long)]
    min_node_size: Option<usize>,
    /// Shadow-feature replications for the importance correction.
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    cv_folds: Option<usize>,
    /// Comma-separated manual variable selection.
    #[arg(long, value_delimiter = ',')]
    select: Option<Vec<String>>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Use raw feature units for distances.
    #[arg(long)]
    no_standardize: bool,
    /// Smallest k validated.
    #[arg(long)]
    k_min: Option<usize>,
    /// Largest k validated.
    #[arg(long)]
    k_max: Option<usize>,
    /// Fix the cluster count instead of using the validated choice.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long, value_enum)]
    bisection: Option<StrategyArg>,
    #[arg(long)]
    som_epochs: Option<usize>,
    #[arg(long)]
    som_rate_start: Option<f64>,
    #[arg(long)]
    som_rate_end: Option<f64>,
    #[arg(long)]
    benchmark_low: Option<f64>,
    #[arg(long)]
    benchmark_high: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    groups: usize,
    #[arg(long, default_value_t = 4)]
    teams_per_group: usize,
    #[arg(long, default_value_t = 3)]
    seasons: usize,
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_config(path: &Path) -> Result<PipelineConfig, Error> {
    let value: serde_json::Value = serde_json::from_slice(&fs::read(path)?)?;
    let echo = match value.get("config") {
        Some(c) if value.get("tool").is_some() => c.clone(),
        _ => value,
    };
    Ok(serde_json::from_value(echo)?)
}

fn build_config(a: &StageArgs, require_seed: bool) -> Result<PipelineConfig, Error> {
    let mut c = match &a.config {
        Some(p) => load_config(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &a.input {
        c.input = v.clone();
    }
    if c.input.as_os_str().is_empty() {
        return Err(Error::Parameter("an input CSV is required (--input or --config)".into()));
    }
    match a.seed {
        Some(s) => c.seed = s,
        None if require_seed && a.config.is_none() => {
            return Err(Error::Parameter("`run` requires --seed".into()));
        }
        None => {}
    }
    macro_rules! set {
        ($field:ident, $arg:expr) => {
            if let Some(v) = $arg.clone() {
                c.$field = v;
            }
        };
    }
    set!(response, a.response);
    set!(excluded, a.exclude);
    set!(n_trees, a.n_trees);
    set!(min_node_size, a.min_node_size);
    set!(vim_replications, a.replications);
    set!(cv_folds, a.cv_folds);
    set!(sigma, a.sigma);
    set!(benchmark_low_q, a.benchmark_low);
    set!(benchmark_high_q, a.benchmark_high);
    if a.mtry.is_some() {
        c.mtry = a.mtry;
    }
    if a.select.is_some() {
        c.selected_variables = a.select.clone();
    }
    if a.clusters.is_some() {
        c.clusters = a.clusters;
    }
    if a.no_standardize {
        c.standardize = false;
    }
    if a.k_min.is_some() || a.k_max.is_some() {
        let lo = a.k_min.unwrap_or(*c.k_range.first().unwrap_or(&2));
        let hi = a.k_max.unwrap_or(*c.k_range.last().unwrap_or(&6));
        c.k_range = (lo..=hi).collect();
    }
    if let Some(b) = a.bisection {
        c.bisection = match b {
            StrategyArg::Recursive => BisectionStrategy::Recursive,
            StrategyArg::GlobalGap => BisectionStrategy::GlobalGap,
        };
    }
    if let Some(v) = a.som_epochs {
        c.som.epochs = v;
    }
    if let Some(v) = a.som_rate_start {
        c.som.rate_start = v;
    }
    if let Some(v) = a.som_rate_end {
        c.som.rate_end = v;
    }
    Ok(c)
}

fn summarize(out: &PipelineOutput, dir: &Path) {
    for a in &out.artifacts {
        println!("wrote {}", dir.join(a.name).display());
    }
    if let Some(r) = &out.report {
        println!(
            "selected: {}; refined OOB r2 {}; k = {} ({}), sizes {:?}, avg silhouette {:.3}",
            r.forest.selection.variables.join(", "),
            r.forest.refined.oob_r2.map_or("n/a".into(), |v| format!("{v:.4}")),
            r.clusters.k,
            r.clusters.k_source,
            r.clusters.sizes,
            r.clusters.avg_silhouette
        );
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Parameter("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    }
    let (args, stage) = match cli.command {
        Command::Synth(s) => {
            let spec = LeagueSpec {
                groups: s.groups,
                teams_per_group: s.teams_per_group,
                seasons: s.seasons,
                separation: s.separation,
                seed: s.seed,
            };
            if spec.groups == 0 || spec.teams_per_group == 0 || spec.seasons == 0 {
                return Err(Error::Parameter("groups, teams and seasons must be positive".into()));
            }
            let (records, _) = planted_league(&spec);
            if let Some(dir) = s.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            write_team_seasons(&records, fs::File::create(&s.out)?)?;
            println!("wrote {} season records to {}", records.len(), s.out.display());
            return Ok(());
        }
        Command::Run(a) => (a, Stage::Run),
        Command::Vim(a) => (a, Stage::Vim),
        Command::Embed(a) => (a, Stage::Embed),
        Command::Validate(a) => (a, Stage::Validate),
        Command::Cluster(a) => (a, Stage::Cluster),
    };
    let config = build_config(&args, stage == Stage::Run)?;
    let out = execute(&config, stage, &args.out, !args.no_cache)?;
    summarize(&out, &args.out);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_EXIT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let kind: ErrorKind = e.kind();
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}
