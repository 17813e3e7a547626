//! Command-line front end: simulate panels, run the estimation pipeline,
//! select factor-space ranks, export candidate graphs, and run the Monte
//! Carlo studies.
//!
//! Configuration precedence: command-line flags override the optional flat
//! key=value config file (`--config`), which overrides built-in defaults.
//! `NSMFM_SEED` overrides the default seed when no flag or config entry is
//! given. Exit codes: 0 success, 2 validation error, 3 numerical failure,
//! 4 I/O error.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use nsmfm::error::Error;
use nsmfm::estimators::EstimationOutput;
use nsmfm::harness::{
    run_rank_study, run_rate_study, summarize, GroupField, McResult, RankCase, RateCase, StudyGrid,
};
use nsmfm::io;
use nsmfm::linalg::subspace_distance_loadings;
use nsmfm::model::{simulate, DgpConfig, MatrixPanel, Ranks};
use nsmfm::ranksel::{
    build_rank_graph, estimate_with_selected_ranks, select_ranks, Criterion, ErConfig,
};

#[derive(Parser)]
#[command(name = "nsmfm", version, about = "Matrix factor models with common stochastic trends")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel from the factor-model DGP and write it with the
    /// generating truth.
    Simulate(SimulateArgs),
    /// Estimate loadings and factors from a panel CSV.
    Estimate(EstimateArgs),
    /// Select the four factor-space ranks from a panel CSV.
    Ranks(RanksArgs),
    /// Export the rank-selection candidate graph as an edge list.
    Graph(GraphArgs),
    /// Monte Carlo studies.
    #[command(subcommand)]
    Mc(McCommand),
}

#[derive(Subcommand)]
enum McCommand {
    /// Convergence-rate study over the parameter cases.
    Rates(McRatesArgs),
    /// Rank-selection frequency study over the rank cases.
    Ranks(McRanksArgs),
}

#[derive(Args)]
struct CommonConfig {
    /// Flat key=value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonConfig,
    #[arg(long)]
    p1: Option<usize>,
    #[arg(long)]
    p2: Option<usize>,
    #[arg(long = "T", alias = "t")]
    t_len: Option<usize>,
    /// Ranks as hR1,hC1,hR0,hC0.
    #[arg(long)]
    ranks: Option<String>,
    #[arg(long)]
    a0: Option<f64>,
    #[arg(long)]
    a1: Option<f64>,
    #[arg(long)]
    sigma0: Option<f64>,
    #[arg(long = "noise-std")]
    noise_std: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if absent).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonConfig,
    /// Panel CSV produced by `simulate` (or matching its format).
    #[arg(long)]
    panel: PathBuf,
    /// Metadata sidecar; defaults to the panel path with extension `.meta`.
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Ranks as hR1,hC1,hR0,hC0, or `auto` for eigenvalue-ratio selection.
    #[arg(long)]
    ranks: Option<String>,
    /// Selection criterion used with `--ranks auto`.
    #[arg(long)]
    criterion: Option<String>,
    #[arg(long = "h-max")]
    h_max: Option<usize>,
    /// Directory with truth files (from `simulate`) for distance reporting.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RanksArgs {
    #[command(flatten)]
    common: CommonConfig,
    #[arg(long)]
    panel: PathBuf,
    #[arg(long)]
    meta: Option<PathBuf>,
    #[arg(long)]
    criterion: Option<String>,
    #[arg(long = "h-max")]
    h_max: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphArgs {
    #[command(flatten)]
    common: CommonConfig,
    #[arg(long)]
    panel: PathBuf,
    #[arg(long)]
    meta: Option<PathBuf>,
    #[arg(long = "h-max")]
    h_max: Option<usize>,
    /// Output CSV path for the edge list.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct McRatesArgs {
    #[command(flatten)]
    common: CommonConfig,
    /// Comma-separated case ids (e.g. 1.1,2.2); defaults to all eight.
    #[arg(long)]
    cases: Option<String>,
    #[arg(long = "p1-grid")]
    p1_grid: Option<String>,
    #[arg(long)]
    p2: Option<usize>,
    #[arg(long = "t-grid")]
    t_grid: Option<String>,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long = "noise-std")]
    noise_std: Option<f64>,
    /// Use the full-size grid instead of the desk-scale default.
    #[arg(long = "full-grid")]
    full_grid: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct McRanksArgs {
    #[command(flatten)]
    common: CommonConfig,
    /// Comma-separated case ids (1..8); defaults to all eight.
    #[arg(long)]
    cases: Option<String>,
    /// Comma-separated criteria from static,it0,it1,it2.
    #[arg(long)]
    criteria: Option<String>,
    #[arg(long = "p1-grid")]
    p1_grid: Option<String>,
    #[arg(long)]
    p2: Option<usize>,
    #[arg(long = "t-grid")]
    t_grid: Option<String>,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long = "noise-std")]
    noise_std: Option<f64>,
    #[arg(long = "h-max")]
    h_max: Option<usize>,
    #[arg(long = "full-grid")]
    full_grid: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Config-file backed defaults: flag value, then file entry, then default.
struct FileConfig {
    map: HashMap<String, String>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig, Error> {
        let mut map = HashMap::new();
        if let Some(p) = path {
            for (k, v) in io::read_kv(p)? {
                map.insert(k, v);
            }
        }
        Ok(FileConfig { map })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                Error::InvalidConfig(format!("config key '{key}' has invalid value '{raw}'"))
            }),
        }
    }

    fn resolve<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, Error> {
        Ok(flag.or(self.get(key)?).unwrap_or(default))
    }

    fn resolve_opt<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<Option<T>, Error> {
        Ok(match flag {
            Some(v) => Some(v),
            None => self.get(key)?,
        })
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("NSMFM_SEED").ok().and_then(|v| v.parse().ok())
}

fn resolve_seed(flag: Option<u64>, cfg: &FileConfig) -> Result<u64, Error> {
    Ok(cfg
        .resolve_opt(flag, "seed")?
        .or_else(env_seed)
        .unwrap_or(0))
}

fn parse_ranks(text: &str) -> Result<Ranks, Error> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err(Error::InvalidConfig(format!(
            "ranks must be hR1,hC1,hR0,hC0, got '{text}'"
        )));
    }
    let mut vals = [0usize; 4];
    for (slot, part) in vals.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|_| {
            Error::InvalidConfig(format!("invalid rank component '{part}' in '{text}'"))
        })?;
    }
    Ranks::new(vals[0], vals[1], vals[2], vals[3])
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>, Error> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("invalid {what} entry '{part}'")))
        })
        .collect()
}

fn parse_criteria(text: &str) -> Result<Vec<Criterion>, Error> {
    text.split(',').map(|c| Criterion::parse(c.trim())).collect()
}

fn meta_path_for(panel: &Path, meta: Option<&PathBuf>) -> PathBuf {
    meta.cloned()
        .unwrap_or_else(|| panel.with_extension("meta"))
}

fn load_panel(panel_path: &Path, meta: Option<&PathBuf>) -> Result<(MatrixPanel, Vec<(String, String)>), Error> {
    let meta_path = meta_path_for(panel_path, meta);
    let pairs = io::read_kv(&meta_path)?;
    let p1: usize = io::kv_get(&pairs, "p1")?
        .parse()
        .map_err(|_| Error::InvalidConfig("bad p1 in metadata".into()))?;
    let p2: usize = io::kv_get(&pairs, "p2")?
        .parse()
        .map_err(|_| Error::InvalidConfig("bad p2 in metadata".into()))?;
    let t_len: usize = io::kv_get(&pairs, "T")?
        .parse()
        .map_err(|_| Error::InvalidConfig("bad T in metadata".into()))?;
    let panel = io::read_panel_csv(panel_path, p1, p2, t_len)?;
    Ok((panel, pairs))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let p1 = cfg.resolve(args.p1, "p1", 10)?;
    let p2 = cfg.resolve(args.p2, "p2", 10)?;
    let t_len = cfg.resolve(args.t_len, "T", 100)?;
    let ranks_text: String = cfg.resolve(args.ranks, "ranks", "1,1,1,1".into())?;
    let ranks = parse_ranks(&ranks_text)?;
    let seed = resolve_seed(args.seed, &cfg)?;

    let mut dgp = DgpConfig::new(p1, p2, t_len, ranks, seed)?;
    dgp.a0 = cfg.resolve(args.a0, "a0", 1.0)?;
    dgp.a1 = cfg.resolve(args.a1, "a1", 1.0)?;
    dgp.sigma0 = cfg.resolve(args.sigma0, "sigma0", 1.0)?;
    dgp.noise_std = cfg.resolve(args.noise_std, "noise-std", 1.0)?;
    dgp.validate()?;

    let (panel, model) = simulate(&dgp)?;
    std::fs::create_dir_all(&args.out)?;
    io::write_panel_csv(&args.out.join("panel.csv"), &panel)?;
    io::write_kv(
        &args.out.join("panel.meta"),
        &[
            ("p1", p1.to_string()),
            ("p2", p2.to_string()),
            ("T", t_len.to_string()),
            ("h_r1", ranks.h_r1.to_string()),
            ("h_c1", ranks.h_c1.to_string()),
            ("h_r0", ranks.h_r0.to_string()),
            ("h_c0", ranks.h_c0.to_string()),
            ("a0", dgp.a0.to_string()),
            ("a1", dgp.a1.to_string()),
            ("sigma0", dgp.sigma0.to_string()),
            ("noise_std", dgp.noise_std.to_string()),
            ("seed", seed.to_string()),
        ],
    )?;
    io::write_loadings_csv(&args.out.join("truth_r1.csv"), &model.r1)?;
    io::write_loadings_csv(&args.out.join("truth_c1.csv"), &model.c1)?;
    io::write_loadings_csv(&args.out.join("truth_r0.csv"), &model.r0)?;
    io::write_loadings_csv(&args.out.join("truth_c0.csv"), &model.c0)?;
    io::write_factor_csv(&args.out.join("truth_f1.csv"), &model.f1)?;
    io::write_factor_csv(&args.out.join("truth_f0.csv"), &model.f0)?;
    println!(
        "simulated panel {p1}x{p2}x{t_len} (seed {seed}) -> {}",
        args.out.display()
    );
    Ok(())
}

fn write_estimation_output(out_dir: &Path, output: &EstimationOutput) -> Result<(), Error> {
    io::write_loadings_csv(&out_dir.join("loading_r1_hat.csv"), &output.stage1.r1_hat)?;
    io::write_loadings_csv(&out_dir.join("loading_c1_hat.csv"), &output.stage1.c1_hat)?;
    io::write_loadings_csv(&out_dir.join("loading_r0_hat.csv"), &output.stationary.r0_hat)?;
    io::write_loadings_csv(&out_dir.join("loading_c0_hat.csv"), &output.stationary.c0_hat)?;
    io::write_loadings_csv(&out_dir.join("loading_r1_tilde.csv"), &output.refined.r1_tilde)?;
    io::write_loadings_csv(&out_dir.join("loading_c1_tilde.csv"), &output.refined.c1_tilde)?;
    io::write_loadings_csv(&out_dir.join("loading_r0_tilde.csv"), &output.second_round.r0_hat)?;
    io::write_loadings_csv(&out_dir.join("loading_c0_tilde.csv"), &output.second_round.c0_hat)?;
    io::write_factor_csv(&out_dir.join("factors_f1_hat.csv"), &output.stage1.f1_hat)?;
    io::write_factor_csv(&out_dir.join("factors_f0_hat.csv"), &output.stationary.f0_hat)?;
    io::write_factor_csv(&out_dir.join("factors_f1_tilde.csv"), &output.refined.f1_tilde)?;
    io::write_factor_csv(&out_dir.join("factors_f0_tilde.csv"), &output.second_round.f0_hat)?;
    io::write_spectra_csv(
        &out_dir.join("spectra.csv"),
        &[
            ("m_r1", &output.stage1.spec_r),
            ("m_c1", &output.stage1.spec_c),
            ("m_r1_perp", &output.stationary.spec_r_perp),
            ("m_c1_perp", &output.stationary.spec_c_perp),
            ("m_r1_diamond", &output.refined.spec_r_diamond),
            ("m_c1_diamond", &output.refined.spec_c_diamond),
            ("m_r1_perp2", &output.second_round.spec_r_perp),
            ("m_c1_perp2", &output.second_round.spec_c_perp),
        ],
    )?;
    Ok(())
}

fn truth_distances(
    truth_dir: &Path,
    output: &EstimationOutput,
) -> Result<Vec<(&'static str, f64)>, Error> {
    let pairs = io::read_kv(&truth_dir.join("panel.meta"))?;
    let p1: usize = io::kv_get(&pairs, "p1")?.parse().unwrap_or(0);
    let p2: usize = io::kv_get(&pairs, "p2")?.parse().unwrap_or(0);
    let h_r1: usize = io::kv_get(&pairs, "h_r1")?.parse().unwrap_or(0);
    let h_c1: usize = io::kv_get(&pairs, "h_c1")?.parse().unwrap_or(0);
    let h_r0: usize = io::kv_get(&pairs, "h_r0")?.parse().unwrap_or(0);
    let h_c0: usize = io::kv_get(&pairs, "h_c0")?.parse().unwrap_or(0);
    if output.stage1.r1_hat.p() != p1 || output.stage1.c1_hat.p() != p2 {
        return Err(Error::ShapeError(format!(
            "truth dimensions ({p1}, {p2}) do not match the estimated panel ({}, {})",
            output.stage1.r1_hat.p(),
            output.stage1.c1_hat.p()
        )));
    }
    let mut report = Vec::new();
    if h_r1 > 0 && output.ranks_used.h_r1 > 0 {
        let r1 = io::read_loadings_csv(&truth_dir.join("truth_r1.csv"), p1, h_r1)?;
        let c1 = io::read_loadings_csv(&truth_dir.join("truth_c1.csv"), p2, h_c1)?;
        report.push(("ds_r1_flat", subspace_distance_loadings(&output.stage1.r1_hat, &r1)?));
        report.push(("ds_c1_flat", subspace_distance_loadings(&output.stage1.c1_hat, &c1)?));
        report.push(("ds_r1_proj", subspace_distance_loadings(&output.refined.r1_tilde, &r1)?));
        report.push(("ds_c1_proj", subspace_distance_loadings(&output.refined.c1_tilde, &c1)?));
    }
    if h_r0 > 0 && output.ranks_used.h_r0 > 0 {
        let r0 = io::read_loadings_csv(&truth_dir.join("truth_r0.csv"), p1, h_r0)?;
        let c0 = io::read_loadings_csv(&truth_dir.join("truth_c0.csv"), p2, h_c0)?;
        report.push(("ds_r0_flat", subspace_distance_loadings(&output.stationary.r0_hat, &r0)?));
        report.push(("ds_c0_flat", subspace_distance_loadings(&output.stationary.c0_hat, &c0)?));
        report.push(("ds_r0_proj", subspace_distance_loadings(&output.second_round.r0_hat, &r0)?));
        report.push(("ds_c0_proj", subspace_distance_loadings(&output.second_round.c0_hat, &c0)?));
    }
    Ok(report)
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), Error> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let (panel, _meta) = load_panel(&args.panel, args.meta.as_ref())?;
    let ranks_text: String = cfg.resolve(args.ranks, "ranks", "auto".into())?;
    let criterion_text: String = cfg.resolve(args.criterion, "criterion", "it2".into())?;

    let (output, ranks, converged) = if ranks_text.trim() == "auto" {
        let criterion = Criterion::parse(criterion_text.trim())?;
        let mut er = ErConfig::for_panel(&panel);
        if let Some(h) = cfg.resolve_opt(args.h_max, "h-max")? {
            er = er.with_h_max(h);
        }
        estimate_with_selected_ranks(&panel, &er, criterion)?
    } else {
        let ranks = parse_ranks(&ranks_text)?;
        let output = nsmfm::estimators::estimate_pipeline(&panel, &ranks)?;
        (output, ranks, None)
    };

    std::fs::create_dir_all(&args.out)?;
    write_estimation_output(&args.out, &output)?;
    let mut meta = vec![
        ("h_r1", ranks.h_r1.to_string()),
        ("h_c1", ranks.h_c1.to_string()),
        ("h_r0", ranks.h_r0.to_string()),
        ("h_c0", ranks.h_c0.to_string()),
        ("ranks_mode", if ranks_text.trim() == "auto" { "auto".into() } else { "fixed".into() }),
        (
            "stages",
            "stage_one,antiproject_stationary,filtered_projection,second_round_stationary".into(),
        ),
    ];
    if ranks_text.trim() == "auto" {
        meta.push(("criterion", criterion_text.trim().to_string()));
    }
    if let Some(c) = converged {
        meta.push(("it0_converged", c.to_string()));
    }
    io::write_kv(&args.out.join("estimate.meta"), &meta)?;

    println!(
        "ranks_used={},{},{},{}",
        ranks.h_r1, ranks.h_c1, ranks.h_r0, ranks.h_c0
    );
    if let Some(truth_dir) = &args.truth {
        for (name, value) in truth_distances(truth_dir, &output)? {
            println!("{name}={value}");
        }
    }
    Ok(())
}

fn cmd_ranks(args: RanksArgs) -> Result<(), Error> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let (panel, _) = load_panel(&args.panel, args.meta.as_ref())?;
    let criterion_text: String = cfg.resolve(args.criterion, "criterion", "it2".into())?;
    let criterion = Criterion::parse(criterion_text.trim())?;
    let mut er = ErConfig::for_panel(&panel);
    if let Some(h) = cfg.resolve_opt(args.h_max, "h-max")? {
        er = er.with_h_max(h);
    }
    let selections = select_ranks(&panel, &er, &[criterion])?;
    let (_, ranks) = selections[0];
    std::fs::create_dir_all(&args.out)?;
    io::write_kv(
        &args.out.join("ranks.meta"),
        &[
            ("criterion", criterion.name().to_string()),
            ("h_r1", ranks.h_r1.to_string()),
            ("h_c1", ranks.h_c1.to_string()),
            ("h_r0", ranks.h_r0.to_string()),
            ("h_c0", ranks.h_c0.to_string()),
            ("h_max", er.h_max.to_string()),
        ],
    )?;
    println!(
        "{}: ranks={},{},{},{}",
        criterion.name(),
        ranks.h_r1,
        ranks.h_c1,
        ranks.h_r0,
        ranks.h_c0
    );
    Ok(())
}

fn cmd_graph(args: GraphArgs) -> Result<(), Error> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let (panel, _) = load_panel(&args.panel, args.meta.as_ref())?;
    let er = ErConfig::for_panel(&panel);
    let default_h_max = er.h_max.min(4);
    let er = er.with_h_max(cfg.resolve(args.h_max, "h-max", default_h_max)?);
    let graph = build_rank_graph(&panel, &er)?;
    let records = io::graph_edge_records(&graph);
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    io::write_rank_graph_csv(&args.out, &records)?;
    let fixed: Vec<String> = graph
        .fixed_points()
        .iter()
        .map(|fp| format!("({},{})", fp.0, fp.1))
        .collect();
    println!(
        "graph with {} nodes, fixed points: {}",
        records.len(),
        if fixed.is_empty() { "none".into() } else { fixed.join(" ") }
    );
    Ok(())
}

fn write_mc_outputs(
    out_dir: &Path,
    result: &McResult,
    manifest: Vec<(&'static str, String)>,
) -> Result<(), Error> {
    std::fs::create_dir_all(out_dir)?;
    io::write_mc_records_csv(&out_dir.join("results.csv"), result)?;
    let rows = summarize(result, &GroupField::ALL, None)?;
    io::write_aggregates_csv(&out_dir.join("aggregate.csv"), &rows)?;
    io::write_kv(&out_dir.join("run.meta"), &manifest)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn grid_from_args(
    cfg: &FileConfig,
    base: StudyGrid,
    p1_grid: Option<String>,
    p2: Option<usize>,
    t_grid: Option<String>,
    reps: Option<u64>,
    seed: Option<u64>,
    threads: Option<usize>,
    noise_std: Option<f64>,
    h_max: Option<usize>,
    full_grid: bool,
) -> Result<StudyGrid, Error> {
    let mut grid = if full_grid { base.with_full_grid() } else { base };
    if let Some(text) = cfg.resolve_opt(p1_grid, "p1-grid")? {
        grid.p1_grid = parse_usize_list(&text, "p1-grid")?;
    }
    grid.p2 = cfg.resolve(p2, "p2", grid.p2)?;
    if let Some(text) = cfg.resolve_opt(t_grid, "t-grid")? {
        grid.t_grid = parse_usize_list(&text, "t-grid")?;
    }
    grid.reps = cfg.resolve(reps, "reps", grid.reps)?;
    grid.master_seed = resolve_seed(seed, cfg)?;
    grid.threads = cfg.resolve(threads, "threads", 0)?;
    grid.noise_std = cfg.resolve(noise_std, "noise-std", grid.noise_std)?;
    grid.h_max = cfg.resolve(h_max, "h-max", grid.h_max)?;
    Ok(grid)
}

fn manifest_common(grid: &StudyGrid, started: Instant, result: &McResult) -> Vec<(&'static str, String)> {
    vec![
        (
            "p1_grid",
            grid.p1_grid.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        ),
        ("p2", grid.p2.to_string()),
        (
            "t_grid",
            grid.t_grid.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        ),
        ("reps", grid.reps.to_string()),
        ("master_seed", grid.master_seed.to_string()),
        ("threads", grid.threads.to_string()),
        ("noise_std", grid.noise_std.to_string()),
        ("h_max", grid.h_max.to_string()),
        ("records", result.records.len().to_string()),
        ("failures", result.failures.len().to_string()),
        ("version", env!("CARGO_PKG_VERSION").to_string()),
        ("wall_time_secs", format!("{:.3}", started.elapsed().as_secs_f64())),
    ]
}

fn cmd_mc_rates(args: McRatesArgs) -> Result<(), Error> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let cases = match cfg.resolve_opt(args.cases, "cases")? {
        Some(text) => text
            .split(',')
            .map(|id| RateCase::by_id(id.trim()))
            .collect::<Result<Vec<_>, _>>()?,
        None => RateCase::table(),
    };
    let grid = grid_from_args(
        &cfg,
        StudyGrid::rate_defaults(),
        args.p1_grid,
        args.p2,
        args.t_grid,
        args.reps,
        args.seed,
        args.threads,
        args.noise_std,
        None,
        args.full_grid,
    )?;
    let started = Instant::now();
    let result = run_rate_study(&cases, &grid)?;
    let mut manifest = vec![
        ("study", "rates".to_string()),
        (
            "cases",
            cases.iter().map(|c| c.id.clone()).collect::<Vec<_>>().join(","),
        ),
    ];
    manifest.extend(manifest_common(&grid, started, &result));
    write_mc_outputs(&args.out, &result, manifest)?;
    println!(
        "rate study: {} records, {} failures -> {}",
        result.records.len(),
        result.failures.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_mc_ranks(args: McRanksArgs) -> Result<(), Error> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let cases = match cfg.resolve_opt(args.cases, "cases")? {
        Some(text) => text
            .split(',')
            .map(|id| {
                id.trim()
                    .parse::<u8>()
                    .map_err(|_| Error::InvalidConfig(format!("invalid rank case '{id}'")))
                    .and_then(RankCase::by_id)
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => RankCase::table(),
    };
    let criteria = match cfg.resolve_opt(args.criteria, "criteria")? {
        Some(text) => parse_criteria(&text)?,
        None => Criterion::ALL.to_vec(),
    };
    let grid = grid_from_args(
        &cfg,
        StudyGrid::rank_defaults(),
        args.p1_grid,
        args.p2,
        args.t_grid,
        args.reps,
        args.seed,
        args.threads,
        args.noise_std,
        args.h_max,
        args.full_grid,
    )?;
    let started = Instant::now();
    let result = run_rank_study(&cases, &grid, &criteria)?;
    let mut manifest = vec![
        ("study", "ranks".to_string()),
        (
            "cases",
            cases.iter().map(|c| c.id.to_string()).collect::<Vec<_>>().join(","),
        ),
        (
            "criteria",
            criteria.iter().map(|c| c.name().to_string()).collect::<Vec<_>>().join(","),
        ),
    ];
    manifest.extend(manifest_common(&grid, started, &result));
    write_mc_outputs(&args.out, &result, manifest)?;
    println!(
        "rank study: {} records, {} failures -> {}",
        result.records.len(),
        result.failures.len(),
        args.out.display()
    );
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidInput(_)
        | Error::InvalidConfig(_)
        | Error::ShapeError(_)
        | Error::ParseError { .. }
        | Error::RankTooLarge { .. }
        | Error::InvalidQuery(_) => 2,
        Error::NumericalFailure { .. }
        | Error::SingularGram { .. }
        | Error::SingularInput(_)
        | Error::DegenerateAntiProjection { .. } => 3,
        Error::StageFailure { source, .. } => exit_code_for(source),
        Error::Io(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Ranks(args) => cmd_ranks(args),
        Command::Graph(args) => cmd_graph(args),
        Command::Mc(McCommand::Rates(args)) => cmd_mc_rates(args),
        Command::Mc(McCommand::Ranks(args)) => cmd_mc_ranks(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
