//! `facd` command-line front end.
//!
//! Exit codes: 0 success, 1 bad input or configuration, 2 internal failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod plot;

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use facd::data::TimeMap;
use facd::grid::Grid;
use facd::io;
use facd::metrics::{evaluate, evaluate_model, Estimate, EvaluationReport};
use facd::pipeline::{self, FacdConfig, Sparsity};
use facd::simulate::{self, Design, GroundTruth, SimulationConfig};
use facd::{FacdError, Model};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "facd", version, about = "Sparse functional cross-covariance decomposition of paired longitudinal data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw paired datasets with known ground truth.
    Simulate(SimulateArgs),
    /// Fit a model to two long-format CSV files.
    Fit(FitArgs),
    /// Score new paired data with a fitted model.
    Scores(ScoresArgs),
    /// Compare fitted components with a simulation's ground truth.
    Evaluate(EvaluateArgs),
    /// Export time-integrated feature correlations as an edge list.
    Network(NetworkArgs),
    /// Draw loadings and scores as SVG files.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Directory receiving x.csv, y.csv and truth.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// JSON simulation settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    /// Number of true components.
    #[arg(long)]
    components: Option<usize>,
    /// Active features per side.
    #[arg(long)]
    active: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Observe every subject on this many equispaced times.
    #[arg(long)]
    regular: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Settings of a `fit` run. Every field is optional in the JSON file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    facd: FacdConfig,
    /// z-score every feature on ingestion.
    standardize: bool,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// Directory receiving model.json, loadings.csv and scores.csv.
    #[arg(long)]
    out_dir: PathBuf,
    /// JSON run settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    components: Option<usize>,
    /// Fixed sparsity levels; cross-validated when absent.
    #[arg(long, requires = "rho_y")]
    rho_x: Option<f64>,
    #[arg(long, requires = "rho_x")]
    rho_y: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Points per side of the default sparsity grid.
    #[arg(long)]
    rho_grid_len: Option<usize>,
    #[arg(long)]
    kappa_threshold: Option<f64>,
    #[arg(long)]
    kappa_x: Option<usize>,
    #[arg(long)]
    kappa_y: Option<usize>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    standardize: bool,
}

#[derive(Args)]
struct ScoresArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, conflicts_with_all = ["loadings", "scores"], required_unless_present = "loadings")]
    model: Option<PathBuf>,
    /// Loadings CSV of any method, in the `fit` output layout.
    #[arg(long, requires = "scores")]
    loadings: Option<PathBuf>,
    #[arg(long, requires = "loadings")]
    scores: Option<PathBuf>,
    /// Components to evaluate; all shared ones when absent.
    #[arg(long)]
    components: Option<usize>,
    #[arg(long, default_value = "0")]
    replicate: String,
    #[arg(long, default_value = "facd")]
    method: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NetworkArgs {
    #[arg(long)]
    model: PathBuf,
    /// Keep edges with |rho| above this.
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    loadings: PathBuf,
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Features drawn per panel, by loading norm.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Debug)]
enum CliError {
    User(String),
    Internal(String),
}

impl From<FacdError> for CliError {
    fn from(e: FacdError) -> Self {
        if e.is_user_error() {
            CliError::User(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::User(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn user<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::User(msg.into()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::User(format!("{}: {e}", dir.display())))
}

fn simulate_cmd(a: SimulateArgs) -> CliResult<()> {
    let mut cfg: SimulationConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SimulationConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:expr),*) => {
            $(if let Some(v) = a.$flag { $field = v; })*
        };
    }
    set!(n => cfg.n, p => cfg.p, q => cfg.q, components => cfg.n_components, active => cfg.n_active,
         noise_sd => cfg.noise.sd, seed => cfg.seed);
    if let Some(points) = a.regular {
        cfg.design = Design::Regular { points };
    }
    let (x, y, truth) = simulate::generate::<f64>(&cfg)?;
    ensure_dir(&a.out_dir)?;
    let map = TimeMap::identity();
    io::write_long_csv(create(&a.out_dir.join("x.csv"))?, &x, &map)?;
    io::write_long_csv(create(&a.out_dir.join("y.csv"))?, &y, &map)?;
    io::save_truth(a.out_dir.join("truth.json"), &truth, &map)?;
    println!(
        "simulated n={} p={} q={} R={} into {}",
        cfg.n,
        cfg.p,
        cfg.q,
        cfg.n_components,
        a.out_dir.display()
    );
    Ok(())
}

fn fit_cmd(a: FitArgs) -> CliResult<()> {
    let mut run: RunConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    let c = &mut run.facd;
    if let Some(r) = a.components {
        c.n_components = r;
    }
    if let (Some(rho_x), Some(rho_y)) = (a.rho_x, a.rho_y) {
        c.sparsity = Sparsity::Fixed { rho_x, rho_y };
    }
    if a.folds.is_some() || a.rho_grid_len.is_some() {
        match &mut c.sparsity {
            Sparsity::CrossValidated { n_folds, grid_len, .. } => {
                *n_folds = a.folds.unwrap_or(*n_folds);
                *grid_len = a.rho_grid_len.unwrap_or(*grid_len);
            }
            Sparsity::Fixed { .. } => return user("--folds and --rho-grid-len need cross-validated sparsity"),
        }
    }
    if let Some(t) = a.kappa_threshold {
        c.kappa_threshold = t;
    }
    if a.kappa_x.is_some() {
        c.kappa_x = a.kappa_x;
    }
    if a.kappa_y.is_some() {
        c.kappa_y = a.kappa_y;
    }
    if let Some(g) = a.grid_size {
        c.grid_size = g;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    run.standardize |= a.standardize;

    let (x, y, map) = io::ingest_pair::<f64>(&a.x, &a.y, run.standardize)?;
    let mut model = pipeline::fit_with_time_map(&x, &y, &run.facd, map)?;
    model.standardized = run.standardize;
    ensure_dir(&a.out_dir)?;
    io::write_model(create(&a.out_dir.join("model.json"))?, &model)?;
    io::write_loadings(create(&a.out_dir.join("loadings.csv"))?, &model)?;
    io::write_scores(create(&a.out_dir.join("scores.csv"))?, &io::model_scores(&model))?;
    println!(
        "n={} p={} q={} kappa=({}, {})",
        model.subject_ids.len(),
        model.p(),
        model.q(),
        model.eig_x.kappa,
        model.eig_y.kappa
    );
    for c in &model.components {
        println!(
            "component {}: eta={:.6} rho=({:.4e}, {:.4e}) support=({}, {})",
            c.rank_index,
            c.eta,
            c.rho_x,
            c.rho_y,
            c.support_x.len(),
            c.support_y.len()
        );
    }
    for w in &model.diagnostics.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn load_model(path: &Path) -> CliResult<Model> {
    io::load_model(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

fn scores_cmd(a: ScoresArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let (x, y) = io::ingest_pair_with_map::<f64>(&a.x, &a.y, &model.time_map, model.standardized)?;
    let s = pipeline::scores(&model, &x, &y)?;
    io::write_scores(create(&a.out)?, &s)?;
    println!("scored {} subjects on {} components", s.subject_ids.len(), s.per_component.len());
    Ok(())
}

/// Rebuilds an estimate from exported CSVs, matching features to the truth
/// by name.
fn evaluate_tables(a: &EvaluateArgs, truth: &GroundTruth) -> CliResult<Vec<EvaluationReport>> {
    let loadings = io::read_loadings(open(a.loadings.as_ref().expect("clap requires it"))?)?;
    let scores = io::read_scores(open(a.scores.as_ref().expect("clap requires it"))?)?;
    let mut reports = Vec::new();
    for (&r, table) in &loadings {
        if a.components.is_some_and(|k| r > k) || r > truth.n_components() {
            continue;
        }
        let grid = Grid::<f64>::uniform(table.grid.len())?;
        if grid.points().iter().zip(&table.grid).any(|(a, b)| (a - b).abs() > 1e-9) {
            return user(format!("component {r}: loadings are not on a uniform [0, 1] grid"));
        }
        let align = |names: &[String], values: &[Vec<f64>], want: &[String]| -> CliResult<Vec<Vec<f64>>> {
            let by_name: HashMap<&str, &Vec<f64>> = names.iter().map(String::as_str).zip(values).collect();
            want.iter()
                .map(|f| match by_name.get(f.as_str()) {
                    Some(v) => Ok((*v).clone()),
                    None => Err(CliError::User(format!("component {r}: no loading for feature `{f}`"))),
                })
                .collect()
        };
        let lx = align(&table.features_x, &table.x, &truth.x.feature_names)?;
        let ly = align(&table.features_y, &table.y, &truth.y.feature_names)?;
        let rows: Vec<_> = scores.iter().filter(|s| s.component == r).collect();
        let ids: Vec<String> = rows.iter().map(|s| s.subject.clone()).collect();
        let sx: Vec<f64> = rows.iter().map(|s| s.score_x).collect();
        let sy: Vec<f64> = rows.iter().map(|s| s.score_y).collect();
        let est = Estimate {
            grid: &grid,
            loadings_x: &lx,
            loadings_y: &ly,
            subject_ids: &ids,
            scores_x: &sx,
            scores_y: &sy,
        };
        reports.push(evaluate(&est, truth, r)?);
    }
    Ok(reports)
}

fn evaluate_cmd(a: EvaluateArgs) -> CliResult<()> {
    let (truth, _) = io::load_truth(&a.truth).map_err(|e| CliError::User(format!("{}: {e}", a.truth.display())))?;
    let reports = match &a.model {
        Some(path) => {
            let model = load_model(path)?;
            let shared = model.components.len().min(truth.n_components());
            let k = a.components.map_or(shared, |k| k.min(shared));
            (1..=k)
                .map(|r| evaluate_model(&model, &truth, r))
                .collect::<Result<Vec<_>, _>>()?
        }
        None => evaluate_tables(&a, &truth)?,
    };
    if reports.is_empty() {
        return user("nothing to evaluate: no shared components");
    }
    let rows: Vec<io::ReportRow> = reports.iter().map(|r| io::ReportRow::new(&a.replicate, &a.method, r)).collect();
    io::write_report(create(&a.out)?, &rows)?;
    for r in &reports {
        println!(
            "component {}: error=({:.4}, {:.4}) fpr=({:.1}%, {:.1}%) fnr=({:.1}%, {:.1}%) corr=({:.3}, {:.3})",
            r.rank_index,
            r.loading_error_x,
            r.loading_error_y,
            r.fpr_x,
            r.fpr_y,
            r.fnr_x,
            r.fnr_y,
            r.score_corr_x,
            r.score_corr_y
        );
    }
    Ok(())
}

fn network_cmd(a: NetworkArgs) -> CliResult<()> {
    if !(a.threshold >= 0.0) {
        return user("threshold must be nonnegative");
    }
    let model = load_model(&a.model)?;
    let n = io::write_network(create(&a.out)?, &model, a.threshold)?;
    println!("wrote {n} edges");
    Ok(())
}

fn plot_cmd(a: PlotArgs) -> CliResult<()> {
    let loadings = io::read_loadings(open(&a.loadings)?)?;
    let scores = match &a.scores {
        Some(p) => io::read_scores(open(p)?)?,
        None => Vec::new(),
    };
    ensure_dir(&a.out_dir)?;
    let written = plot::draw_all(&loadings, &scores, &a.out_dir, a.top).map_err(CliError::Internal)?;
    println!("wrote {written} plots to {}", a.out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Scores(a) => scores_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Network(a) => network_cmd(a),
        Command::Plot(a) => plot_cmd(a),
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
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(CliError::User(m))) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Ok(Err(CliError::Internal(m))) => {
            eprintln!("internal error: {m}");
            ExitCode::from(2)
        }
        Err(_) => ExitCode::from(2),
    }
}
