use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use sbm::analysis::{
    build_node_table, fit_by_group, load_groups, load_outcomes, node_table_csv, parse_adjacency_matrix,
    run_takeup_models, takeup_table_csv, GroupFitOptions,
};
use sbm::graph::degree_partition;
use sbm::harness::{
    degree_distribution_csv, overlay_csv, records_csv, run_monte_carlo_records, summarize, summary_csv,
};
use sbm::path::default_max_size;
use sbm::{
    degree_distribution, er_mle, fit_support, load_edge_list, model_fit_overlay, sample_sbm, select, solution_path,
    Criterion, FitConfig, FitReport, MonteCarloConfig, PathReport, SbmError, SbmParams,
};

#[derive(Parser)]
#[command(name = "sbm", version, about = "Sparse beta-model: fit, select, simulate")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct BoxArgs {
    /// Bound on |mu|.
    #[arg(long, default_value_t = 30.0)]
    m1: f64,
    /// Upper bound on each beta.
    #[arg(long, default_value_t = 30.0)]
    m2: f64,
    /// Projected-gradient tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

impl BoxArgs {
    fn config(&self) -> Result<FitConfig, CliError> {
        let cfg = FitConfig {
            m1: self.m1,
            m2: self.m2,
            tol: self.tol,
            max_iter: self.max_iter,
            warm_start: None,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit one sparsity level, or select one by an information criterion.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Fit this sparsity level (must be a level of the degree partition).
        #[arg(long, conflicts_with = "select")]
        s: Option<usize>,
        /// Select the level by bic (the default) or bic_star.
        #[arg(long)]
        select: Option<Criterion>,
        /// Let the Erdős–Rényi fit (s = 0) compete in selection.
        #[arg(long)]
        include_null: bool,
        /// Largest level examined when selecting (default: n / 2).
        #[arg(long)]
        max_size: Option<usize>,
        #[command(flatten)]
        fit: BoxArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit every level of the degree-sorted path.
    Path {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        max_size: Option<usize>,
        #[command(flatten)]
        fit: BoxArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a graph with beta on the first s0 nodes.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long, allow_hyphen_values = true)]
        mu: f64,
        #[arg(long, default_value_t = 0)]
        s0: usize,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        /// Drawn at random and reported when absent.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Erdős–Rényi MLE with standard errors.
    Er {
        #[arg(long)]
        input: PathBuf,
        /// Density rate for the asymptotic standard errors.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo support recovery experiment.
    Mc {
        #[arg(long)]
        config: PathBuf,
        /// Summary CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-replication CSV.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Degree distribution as (k, p_k).
    DegreeDist {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Observed degree distribution beside simulations from the selected fit.
    Overlay {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "bic")]
        select: Criterion,
        #[arg(long)]
        max_size: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-group fits followed by the eight take-up regressions.
    Analyze {
        /// Directory of <group>.tsv edge lists with optional <group>.labels.
        #[arg(long)]
        edges_dir: PathBuf,
        /// CSV with columns node_id, group_id, takeup.
        #[arg(long)]
        outcomes: PathBuf,
        /// Coefficient table.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the per-node covariate table.
        #[arg(long)]
        nodes: Option<PathBuf>,
        /// Support cap as a fraction of each group's size.
        #[arg(long, default_value_t = 0.5)]
        cap_fraction: f64,
        #[arg(long, default_value = "bic")]
        select: Criterion,
        #[arg(long)]
        include_null: bool,
    },
    /// Convert square adjacency matrices (CSV or whitespace) into edge lists.
    ConvertAdjacency {
        /// Directory of matrix files; a trailing number in the file stem
        /// becomes the group id.
        #[arg(long)]
        input_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(anyhow::Error),
    NonConvergence(String),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        let nonconv = e
            .chain()
            .any(|c| matches!(c.downcast_ref::<SbmError>(), Some(SbmError::NoConvergence { .. })));
        if nonconv {
            CliError::NonConvergence(describe(&e))
        } else {
            CliError::Data(e)
        }
    }
}

impl From<SbmError> for CliError {
    fn from(e: SbmError) -> Self {
        CliError::from(anyhow::Error::new(e))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
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

    let result = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| run(cli.command)),
            Err(e) => Err(CliError::Data(anyhow!(e))),
        },
        None => run(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
        Err(CliError::NonConvergence(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

/// The error chain joined by ": ", skipping causes already spelled out by
/// the message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Fit {
            input,
            s,
            select: criterion,
            include_null,
            max_size,
            fit,
            out,
        } => cmd_fit(
            &input,
            s,
            criterion,
            include_null,
            max_size,
            &fit.config()?,
            out.as_deref(),
        ),
        Command::Path {
            input,
            max_size,
            fit,
            out,
        } => {
            let cfg = fit.config()?;
            let g = load(&input)?;
            let path = solution_path(&g, check_max_size(max_size, g.n())?, &cfg)?;
            for w in &path.warnings {
                log::warn!("{w}");
            }
            emit(out.as_deref(), &json(&PathReport::new(&path))?)
        }
        Command::Generate {
            n,
            mu,
            s0,
            beta,
            seed,
            out,
        } => {
            let seed = seed_or_draw(seed);
            let params = SbmParams::planted(n, mu, s0, beta).map_err(|e| CliError::Usage(e.to_string()))?;
            emit(out.as_deref(), &sample_sbm(&params, seed).to_edge_list())
        }
        Command::Er { input, gamma, out } => {
            if let Some(g) = gamma {
                if !(0.0..2.0).contains(&g) {
                    return Err(CliError::Usage(format!("--gamma must lie in [0, 2), got {g}")));
                }
            }
            let fit = er_mle(&load(&input)?, gamma)?;
            emit(out.as_deref(), &json(&fit)?)
        }
        Command::Mc { config, out, records } => {
            let cfg = MonteCarloConfig::load(&config)
                .with_context(|| format!("invalid Monte Carlo config {}", config.display()))?;
            let recs = run_monte_carlo_records(&cfg)?;
            let summary = summarize(&recs, cfg.s0());
            if let Some(path) = records {
                write_file(&path, &records_csv(&recs))?;
            }
            emit(out.as_deref(), &summary_csv(&summary))
        }
        Command::DegreeDist { input, out } => emit(
            out.as_deref(),
            &degree_distribution_csv(&degree_distribution(&load(&input)?)),
        ),
        Command::Overlay {
            input,
            reps,
            seed,
            select: criterion,
            max_size,
            out,
        } => {
            if reps == 0 {
                return Err(CliError::Usage("--reps must be at least 1".into()));
            }
            let g = load(&input)?;
            let seed = seed_or_draw(seed);
            let path = solution_path(&g, check_max_size(max_size, g.n())?, &FitConfig::default())?;
            let entry = select(&path, criterion, false)?;
            if !entry.fit.converged {
                return Err(CliError::NonConvergence(format!(
                    "selected fit (s={}) did not converge",
                    entry.s
                )));
            }
            let rows = model_fit_overlay(&g, &entry.fit.params, reps, seed)?;
            emit(out.as_deref(), &overlay_csv(&rows))
        }
        Command::Analyze {
            edges_dir,
            outcomes,
            out,
            nodes,
            cap_fraction,
            select: criterion,
            include_null,
        } => {
            if !(cap_fraction > 0.0 && cap_fraction <= 1.0) {
                return Err(CliError::Usage(format!(
                    "--cap-fraction must lie in (0, 1], got {cap_fraction}"
                )));
            }
            let groups = load_groups(&edges_dir)?;
            let outcomes = load_outcomes(&outcomes)?;
            let opts = GroupFitOptions {
                cap_fraction,
                criterion,
                include_null,
                ..GroupFitOptions::default()
            };
            let fits = fit_by_group(&groups, &opts)?;
            let table = build_node_table(&fits, &groups, &outcomes)?;
            let models = run_takeup_models(&table)?;
            let tables = takeup_table_csv(&models);
            if let Some(path) = nodes {
                write_file(&path, &node_table_csv(&table))?;
            }
            emit(out.as_deref(), &tables)
        }
        Command::ConvertAdjacency { input_dir, out_dir } => convert(&input_dir, &out_dir),
    }
}

fn cmd_fit(
    input: &Path,
    s: Option<usize>,
    criterion: Option<Criterion>,
    include_null: bool,
    max_size: Option<usize>,
    cfg: &FitConfig,
    out: Option<&Path>,
) -> CliResult {
    let g = load(input)?;
    let entry = match s {
        Some(s) => {
            let partition = degree_partition(&g);
            let support = if s == 0 {
                Vec::new()
            } else {
                partition.support_for_level(s).ok_or_else(|| {
                    CliError::Data(anyhow!(
                        "s={s} splits a group of tied degrees; admissible levels are {:?}",
                        partition.cumulative
                    ))
                })?
            };
            let fit = fit_support(&g, &support, cfg)?;
            let bic = sbm::path::information_criterion(&fit, g.n(), g.d_plus(), Criterion::Bic)?;
            let bic_star = sbm::path::information_criterion(&fit, g.n(), g.d_plus(), Criterion::BicStar).ok();
            sbm::PathEntry {
                s: support.len(),
                support,
                fit,
                bic,
                bic_star,
            }
        }
        None => {
            let path = solution_path(&g, check_max_size(max_size, g.n())?, cfg)?;
            for w in &path.warnings {
                log::warn!("{w}");
            }
            select(&path, criterion.unwrap_or(Criterion::Bic), include_null)?.clone()
        }
    };
    if !entry.fit.converged {
        return Err(CliError::NonConvergence(format!(
            "fit at s={} did not converge after {} iterations (residual {:e})",
            entry.s, entry.fit.iterations, entry.fit.kkt_residual
        )));
    }
    if !entry.fit.existence_ok {
        log::warn!("the MLE may not exist for this support; boundary values reported");
    }
    emit(out, &json(&FitReport::new(g.n(), &entry))?)
}

fn check_max_size(max_size: Option<usize>, n: usize) -> CliResult<usize> {
    match max_size {
        Some(0) => Err(CliError::Usage("--max-size must be at least 1".into())),
        Some(k) => Ok(k),
        None => Ok(default_max_size(n)),
    }
}

fn seed_or_draw(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand_seed();
        eprintln!("seed: {s}");
        s
    })
}

fn rand_seed() -> u64 {
    use std::collections::hash_map::RandomState;
    use std::hash::BuildHasher;
    RandomState::new().hash_one(std::time::SystemTime::now())
}

fn load(path: &Path) -> CliResult<sbm::Graph> {
    match load_edge_list(path) {
        Ok(g) => Ok(g),
        Err(e @ SbmError::Io { .. }) => Err(e.into()),
        Err(e) => Err(anyhow::Error::new(e).context(path.display().to_string()).into()),
    }
}

fn json<T: serde::Serialize>(value: &T) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(anyhow!(e)))?;
    text.push('\n');
    Ok(text)
}

fn write_file(path: &Path, text: &str) -> CliResult {
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(CliError::Data)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn convert(input_dir: &Path, out_dir: &Path) -> CliResult {
    let mut files: Vec<PathBuf> = fs::read_dir(input_dir)
        .with_context(|| format!("cannot read {}", input_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(anyhow!("no matrix files in {}", input_dir.display())));
    }
    let mut converted = Vec::new();
    for path in &files {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let g = parse_adjacency_matrix(&text).with_context(|| format!("in {}", path.display()))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let digits: String = stem
            .chars()
            .rev()
            .take_while(char::is_ascii_digit)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        let group = if digits.is_empty() { stem } else { digits };
        converted.push((group, g));
    }
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    for (group, g) in converted {
        write_file(&out_dir.join(format!("{group}.tsv")), &g.to_edge_list())?;
        log::info!("group {group}: n={} edges={}", g.n(), g.d_plus());
    }
    Ok(())
}
