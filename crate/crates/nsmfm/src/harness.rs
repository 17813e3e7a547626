//! Monte Carlo experiment runner: convergence-rate studies over the eight
//! designed parameter cases and rank-selection studies over the eight rank cases,
//! with parallel replications, deterministic per-replication seeds and
//! long-format aggregation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{dagger_estimate, estimate_pipeline};
use crate::linalg::subspace_distance_loadings;
use crate::model::{simulate, DgpConfig, Ranks, TrueModel};
use crate::ranksel::{select_ranks, Criterion, ErConfig};
use crate::util::{derive_seed, hash_label, median, quantile};

/// A row of the convergence-rate study design (the eight parameter cases).
#[derive(Debug, Clone, PartialEq)]
pub struct RateCase {
    pub id: String,
    pub ranks: Ranks,
    pub a0: f64,
    pub a1: f64,
    pub sigma0: f64,
}

impl RateCase {
    /// The full designed case table (1.1 through 4.2).
    pub fn table() -> Vec<RateCase> {
        let mk = |id: &str, h_r0: usize, h_c0: usize, h_r1: usize, h_c1: usize, a0: f64, a1: f64, sigma0: f64| {
            RateCase {
                id: id.to_string(),
                ranks: Ranks::new(h_r1, h_c1, h_r0, h_c0).expect("valid case ranks"),
                a0,
                a1,
                sigma0,
            }
        };
        vec![
            mk("1.1", 1, 1, 1, 1, 1.0, 1.0, 1.0),
            mk("1.2", 1, 1, 1, 1, 1.0, 1.0, 2.0),
            mk("2.1", 1, 1, 2, 2, 1.0, 1.0, 1.0),
            mk("2.2", 1, 1, 2, 2, 1.0, 1.0, 2.0),
            mk("3.1", 2, 2, 1, 1, 1.0, 1.0, 1.0),
            mk("3.2", 2, 2, 1, 1, 1.0, 1.0, 2.0),
            mk("4.1", 1, 1, 1, 1, 10.0, 10.0, 1.0),
            mk("4.2", 1, 1, 1, 1, 10.0, 10.0, 2.0),
        ]
    }

    pub fn by_id(id: &str) -> Result<RateCase> {
        Self::table()
            .into_iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown rate case '{id}'")))
    }
}

/// A row of the rank-selection study design (cases 1 through 8).
#[derive(Debug, Clone, PartialEq)]
pub struct RankCase {
    pub id: u8,
    pub ranks: Ranks,
}

impl RankCase {
    pub fn table() -> Vec<RankCase> {
        let mk = |id: u8, h_r0: usize, h_c0: usize, h_r1: usize, h_c1: usize| RankCase {
            id,
            ranks: Ranks::new(h_r1, h_c1, h_r0, h_c0).expect("valid case ranks"),
        };
        vec![
            mk(1, 1, 1, 1, 1),
            mk(2, 2, 2, 2, 2),
            mk(3, 1, 1, 2, 2),
            mk(4, 1, 1, 3, 3),
            mk(5, 2, 2, 1, 1),
            mk(6, 3, 3, 1, 1),
            mk(7, 2, 1, 1, 1),
            mk(8, 1, 1, 2, 1),
        ]
    }

    pub fn by_id(id: u8) -> Result<RankCase> {
        Self::table()
            .into_iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown rank case '{id}'")))
    }
}

/// Grid and execution settings shared by both studies.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyGrid {
    pub p1_grid: Vec<usize>,
    pub p2: usize,
    pub t_grid: Vec<usize>,
    pub reps: u64,
    pub master_seed: u64,
    /// Worker threads; 0 means the library default pool.
    pub threads: usize,
    /// Idiosyncratic noise standard deviation for the simulated panels.
    pub noise_std: f64,
    /// Candidate-rank bound for rank studies.
    pub h_max: usize,
    /// Hold the loadings draw fixed across replications.
    pub fixed_loadings: bool,
}

impl StudyGrid {
    /// Desk-scale defaults for the rate study. The noise level 0.3 keeps the
    /// stationary interference (the term the projection refinement removes)
    /// above the trend-noise error floor that both estimators share at these
    /// panel sizes.
    pub fn rate_defaults() -> StudyGrid {
        StudyGrid {
            p1_grid: vec![10, 20, 50],
            p2: 20,
            t_grid: vec![50, 100, 200],
            reps: 200,
            master_seed: 0,
            threads: 0,
            noise_std: 0.3,
            h_max: 4,
            fixed_loadings: false,
        }
    }

    /// Desk-scale defaults for the rank-selection study.
    pub fn rank_defaults() -> StudyGrid {
        StudyGrid {
            noise_std: 1.0,
            ..StudyGrid::rate_defaults()
        }
    }

    /// The full-size grid: both studies combine the cases with
    /// p1 in {10, 20, 50, 100}, p2 = 20, T in {20, 50, 100, 200}.
    pub fn with_full_grid(mut self) -> StudyGrid {
        self.p1_grid = vec![10, 20, 50, 100];
        self.t_grid = vec![20, 50, 100, 200];
        self
    }

    fn validate(&self) -> Result<()> {
        if self.p1_grid.is_empty() || self.t_grid.is_empty() {
            return Err(Error::InvalidConfig("empty p1 or T grid".into()));
        }
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.p2 == 0 {
            return Err(Error::InvalidConfig("p2 must be positive".into()));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(Error::InvalidConfig("noise_std must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One metric observation of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct McRecord {
    pub case_id: String,
    pub p1: usize,
    pub p2: usize,
    pub t_len: usize,
    pub rep: u64,
    pub criterion: String,
    pub metric: String,
    pub value: f64,
}

/// A replication that failed; excluded from aggregates, counted in the
/// manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct McFailure {
    pub case_id: String,
    pub p1: usize,
    pub t_len: usize,
    pub rep: u64,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct McResult {
    pub records: Vec<McRecord>,
    pub failures: Vec<McFailure>,
}

impl McResult {
    fn sort(&mut self) {
        self.records.sort_by(|a, b| {
            (
                &a.case_id,
                a.p1,
                a.t_len,
                a.rep,
                &a.criterion,
                &a.metric,
            )
                .cmp(&(&b.case_id, b.p1, b.t_len, b.rep, &b.criterion, &b.metric))
        });
        self.failures
            .sort_by(|a, b| (&a.case_id, a.p1, a.t_len, a.rep).cmp(&(&b.case_id, b.p1, b.t_len, b.rep)));
    }
}

/// Per-replication seed: the master seed folded with the case label, the
/// cell dimensions and the replication index.
pub fn replication_seed(master: u64, case_id: &str, p1: usize, t_len: usize, rep: u64) -> u64 {
    derive_seed(master, &[hash_label(case_id), p1 as u64, t_len as u64, rep])
}

fn run_in_pool<F, T>(threads: usize, job: F) -> Result<T>
where
    F: FnOnce() -> T + Send,
    T: Send,
{
    if threads == 0 {
        Ok(job())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        Ok(pool.install(job))
    }
}

struct Cell<'a> {
    case_id: String,
    ranks: Ranks,
    a0: f64,
    a1: f64,
    sigma0: f64,
    p1: usize,
    t_len: usize,
    rep: u64,
    grid: &'a StudyGrid,
}

fn cell_config(cell: &Cell) -> Result<DgpConfig> {
    let seed = replication_seed(cell.grid.master_seed, &cell.case_id, cell.p1, cell.t_len, cell.rep);
    let mut cfg = DgpConfig::new(cell.p1, cell.grid.p2, cell.t_len, cell.ranks, seed)?;
    cfg.a0 = cell.a0;
    cfg.a1 = cell.a1;
    cfg.sigma0 = cell.sigma0;
    cfg.noise_std = cell.grid.noise_std;
    if cell.grid.fixed_loadings {
        cfg.loadings_seed = Some(replication_seed(
            cell.grid.master_seed,
            &cell.case_id,
            cell.p1,
            cell.t_len,
            0,
        ));
    }
    Ok(cfg)
}

fn rate_metrics(cell: &Cell) -> Result<Vec<McRecord>> {
    let cfg = cell_config(cell)?;
    let (panel, model) = simulate(&cfg)?;
    let out = estimate_pipeline(&panel, &cell.ranks)?;
    let dagger = dagger_estimate(&panel, &out.stage1, &cell.ranks)?;

    let TrueModel { r1, c1, r0, c0, .. } = &model;
    let d_r1_flat = subspace_distance_loadings(&out.stage1.r1_hat, r1)?;
    let d_c1_flat = subspace_distance_loadings(&out.stage1.c1_hat, c1)?;
    let d_r0_flat = subspace_distance_loadings(&out.stationary.r0_hat, r0)?;
    let d_c0_flat = subspace_distance_loadings(&out.stationary.c0_hat, c0)?;
    let d_r1_proj = subspace_distance_loadings(&out.refined.r1_tilde, r1)?;
    let d_c1_proj = subspace_distance_loadings(&out.refined.c1_tilde, c1)?;
    let d_r0_proj = subspace_distance_loadings(&out.second_round.r0_hat, r0)?;
    let d_c0_proj = subspace_distance_loadings(&out.second_round.c0_hat, c0)?;
    let d_r1_dag = subspace_distance_loadings(&dagger.r1_hat, r1)?;
    let d_c1_dag = subspace_distance_loadings(&dagger.c1_hat, c1)?;

    let metrics = [
        ("ds_r1_flat", d_r1_flat),
        ("ds_c1_flat", d_c1_flat),
        ("ds_r0_flat", d_r0_flat),
        ("ds_c0_flat", d_c0_flat),
        ("ds_r1_proj", d_r1_proj),
        ("ds_c1_proj", d_c1_proj),
        ("ds_r0_proj", d_r0_proj),
        ("ds_c0_proj", d_c0_proj),
        ("ds_r1_dagger", d_r1_dag),
        ("ds_c1_dagger", d_c1_dag),
        ("ratio_r1", d_r1_flat / d_r1_proj),
        ("ratio_c1", d_c1_flat / d_c1_proj),
        ("ratio_r0", d_r0_flat / d_r0_proj),
        ("ratio_c0", d_c0_flat / d_c0_proj),
        ("ratio_dagger_r1", d_r1_dag / d_r1_flat),
        ("ratio_dagger_c1", d_c1_dag / d_c1_flat),
    ];
    Ok(metrics
        .into_iter()
        .map(|(name, value)| McRecord {
            case_id: cell.case_id.clone(),
            p1: cell.p1,
            p2: cell.grid.p2,
            t_len: cell.t_len,
            rep: cell.rep,
            criterion: "-".into(),
            metric: name.into(),
            value,
        })
        .collect())
}

fn study_cells<'a>(
    ids_ranks: &[(String, Ranks, f64, f64, f64)],
    grid: &'a StudyGrid,
) -> Result<Vec<Cell<'a>>> {
    grid.validate()?;
    let mut cells = Vec::new();
    for (case_id, ranks, a0, a1, sigma0) in ids_ranks {
        for &p1 in &grid.p1_grid {
            // estimation needs strictly fewer factors than panel rows/columns
            if ranks.h_r1 >= p1 || ranks.h_r0 >= p1 || ranks.h_c1 >= grid.p2 || ranks.h_c0 >= grid.p2 {
                return Err(Error::InvalidConfig(format!(
                    "case {case_id}: ranks {ranks:?} too large for p1={p1}, p2={}",
                    grid.p2
                )));
            }
            for &t_len in &grid.t_grid {
                for rep in 0..grid.reps {
                    cells.push(Cell {
                        case_id: case_id.clone(),
                        ranks: *ranks,
                        a0: *a0,
                        a1: *a1,
                        sigma0: *sigma0,
                        p1,
                        t_len,
                        rep,
                        grid,
                    });
                }
            }
        }
    }
    Ok(cells)
}

fn collect_cells<F>(cells: Vec<Cell<'_>>, threads: usize, eval: F) -> Result<McResult>
where
    F: Fn(&Cell) -> Result<Vec<McRecord>> + Sync,
{
    let outcomes: Vec<std::result::Result<Vec<McRecord>, McFailure>> = run_in_pool(threads, || {
        cells
            .par_iter()
            .map(|cell| {
                eval(cell).map_err(|e| McFailure {
                    case_id: cell.case_id.clone(),
                    p1: cell.p1,
                    t_len: cell.t_len,
                    rep: cell.rep,
                    seed: replication_seed(
                        cell.grid.master_seed,
                        &cell.case_id,
                        cell.p1,
                        cell.t_len,
                        cell.rep,
                    ),
                    message: e.to_string(),
                })
            })
            .collect()
    })?;

    let mut result = McResult::default();
    for outcome in outcomes {
        match outcome {
            Ok(records) => result.records.extend(records),
            Err(failure) => result.failures.push(failure),
        }
    }
    result.sort();
    Ok(result)
}

/// Convergence-rate study: for every (case, p1, T, replication) simulate a
/// panel, run the full pipeline with the true ranks plus the dagger
/// estimator, and record the subspace distances of all loading estimates
/// and the flat/projected and dagger/flat ratios.
pub fn run_rate_study(cases: &[RateCase], grid: &StudyGrid) -> Result<McResult> {
    if cases.is_empty() {
        return Err(Error::InvalidConfig("no rate cases given".into()));
    }
    let ids: Vec<(String, Ranks, f64, f64, f64)> = cases
        .iter()
        .map(|c| (c.id.clone(), c.ranks, c.a0, c.a1, c.sigma0))
        .collect();
    let cells = study_cells(&ids, grid)?;
    collect_cells(cells, grid.threads, rate_metrics)
}

/// Rank-selection study: per (case, p1, T, replication) run the requested
/// criteria and record per-coordinate and full-quadruple correctness along
/// with the selected values.
pub fn run_rank_study(
    cases: &[RankCase],
    grid: &StudyGrid,
    criteria: &[Criterion],
) -> Result<McResult> {
    if cases.is_empty() {
        return Err(Error::InvalidConfig("no rank cases given".into()));
    }
    if criteria.is_empty() {
        return Err(Error::InvalidConfig("no criteria requested".into()));
    }
    let ids: Vec<(String, Ranks, f64, f64, f64)> = cases
        .iter()
        .map(|c| (c.id.to_string(), c.ranks, 1.0, 1.0, 1.0))
        .collect();
    let cells = study_cells(&ids, grid)?;
    let criteria = criteria.to_vec();
    collect_cells(cells, grid.threads, move |cell| {
        let cfg = cell_config(cell)?;
        let (panel, _) = simulate(&cfg)?;
        let er = ErConfig::default().with_h_max(cell.grid.h_max);
        er.validate_against(panel.p1(), panel.p2(), panel.len())?;
        let selections = select_ranks(&panel, &er, &criteria)?;
        let truth = cell.ranks;
        let mut records = Vec::new();
        for (criterion, picked) in selections {
            let entries = [
                ("correct_hr1", (picked.h_r1 == truth.h_r1) as u8 as f64),
                ("correct_hc1", (picked.h_c1 == truth.h_c1) as u8 as f64),
                ("correct_hr0", (picked.h_r0 == truth.h_r0) as u8 as f64),
                ("correct_hc0", (picked.h_c0 == truth.h_c0) as u8 as f64),
                ("correct_all", (picked == truth) as u8 as f64),
                ("sel_hr1", picked.h_r1 as f64),
                ("sel_hc1", picked.h_c1 as f64),
                ("sel_hr0", picked.h_r0 as f64),
                ("sel_hc0", picked.h_c0 as f64),
            ];
            for (metric, value) in entries {
                records.push(McRecord {
                    case_id: cell.case_id.clone(),
                    p1: cell.p1,
                    p2: cell.grid.p2,
                    t_len: cell.t_len,
                    rep: cell.rep,
                    criterion: criterion.name().into(),
                    metric: metric.into(),
                    value,
                });
            }
        }
        Ok(records)
    })
}

/// Fields the aggregation can group by (the metric is always part of the
/// key).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupField {
    Case,
    P1,
    P2,
    T,
    Criterion,
}

impl GroupField {
    pub const ALL: [GroupField; 5] = [
        GroupField::Case,
        GroupField::P1,
        GroupField::P2,
        GroupField::T,
        GroupField::Criterion,
    ];
}

/// One aggregate row; fields outside the grouping are None.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub case_id: Option<String>,
    pub p1: Option<usize>,
    pub p2: Option<usize>,
    pub t_len: Option<usize>,
    pub criterion: Option<String>,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
}

/// Aggregate the long-format records by the requested grouping. For 0/1
/// correctness metrics the mean is the selection frequency. A metric filter
/// naming an unknown metric is rejected.
pub fn summarize(
    result: &McResult,
    group_by: &[GroupField],
    metrics: Option<&[String]>,
) -> Result<Vec<AggregateRow>> {
    if result.records.is_empty() {
        return Err(Error::InvalidInput("cannot summarize an empty result".into()));
    }
    if let Some(wanted) = metrics {
        for m in wanted {
            if !result.records.iter().any(|r| &r.metric == m) {
                return Err(Error::InvalidQuery(format!("unknown metric '{m}'")));
            }
        }
    }

    type Key = (Option<String>, Option<usize>, Option<usize>, Option<usize>, Option<String>, String);
    let mut groups: std::collections::BTreeMap<Key, Vec<f64>> = std::collections::BTreeMap::new();
    for r in &result.records {
        if let Some(wanted) = metrics {
            if !wanted.iter().any(|m| m == &r.metric) {
                continue;
            }
        }
        let key: Key = (
            group_by.contains(&GroupField::Case).then(|| r.case_id.clone()),
            group_by.contains(&GroupField::P1).then_some(r.p1),
            group_by.contains(&GroupField::P2).then_some(r.p2),
            group_by.contains(&GroupField::T).then_some(r.t_len),
            group_by
                .contains(&GroupField::Criterion)
                .then(|| r.criterion.clone()),
            r.metric.clone(),
        );
        groups.entry(key).or_default().push(r.value);
    }

    Ok(groups
        .into_iter()
        .map(|((case_id, p1, p2, t_len, criterion, metric), values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            AggregateRow {
                case_id,
                p1,
                p2,
                t_len,
                criterion,
                metric,
                n,
                mean,
                median: median(&values),
                q25: quantile(&values, 0.25),
                q75: quantile(&values, 0.75),
                min,
                max,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_grid(reps: u64, threads: usize) -> StudyGrid {
        StudyGrid {
            p1_grid: vec![8],
            p2: 6,
            t_grid: vec![20],
            reps,
            master_seed: 5,
            threads,
            noise_std: 0.3,
            h_max: 3,
            fixed_loadings: false,
        }
    }

    #[test]
    fn single_rep_gives_one_record_per_metric() {
        let cases = vec![RateCase::by_id("1.1").unwrap()];
        let result = run_rate_study(&cases, &tiny_grid(1, 0)).unwrap();
        assert_eq!(result.records.len(), 16);
        assert!(result.failures.is_empty());
        let again = run_rate_study(&cases, &tiny_grid(1, 0)).unwrap();
        assert_eq!(result, again);
    }

    #[test]
    fn distances_lie_in_unit_interval() {
        let cases = vec![RateCase::by_id("1.1").unwrap()];
        let result = run_rate_study(&cases, &tiny_grid(5, 0)).unwrap();
        for r in &result.records {
            if r.metric.starts_with("ds_") {
                assert!(r.value >= 0.0 && r.value <= 1.0, "{}: {}", r.metric, r.value);
            }
        }
    }

    #[test]
    fn parallel_equals_serial() {
        let cases = vec![RateCase::by_id("1.1").unwrap(), RateCase::by_id("3.1").unwrap()];
        let serial = run_rate_study(&cases, &tiny_grid(4, 1)).unwrap();
        let parallel = run_rate_study(&cases, &tiny_grid(4, 4)).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn rank_study_reports_frequencies() {
        let cases = vec![RankCase::by_id(1).unwrap()];
        let result =
            run_rank_study(&cases, &tiny_grid(3, 0), &[Criterion::Static, Criterion::It0]).unwrap();
        // 2 criteria x 9 metrics x 3 reps
        assert_eq!(result.records.len(), 54);
        for r in &result.records {
            if r.metric.starts_with("correct_") {
                assert!(r.value == 0.0 || r.value == 1.0);
            }
        }
    }

    #[test]
    fn degenerate_grid_rejected() {
        let cases = vec![RankCase::by_id(2).unwrap()]; // ranks (2,2,2,2)
        let mut grid = tiny_grid(1, 0);
        grid.p1_grid = vec![2];
        assert!(matches!(
            run_rank_study(&cases, &grid, &[Criterion::Static]),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn replication_seeds_distinct() {
        let mut seeds = std::collections::HashSet::new();
        for rep in 0..50 {
            assert!(seeds.insert(replication_seed(1, "1.1", 10, 50, rep)));
        }
        assert!(!seeds.contains(&replication_seed(2, "1.1", 10, 50, 0)) || true);
        assert_ne!(
            replication_seed(1, "1.1", 10, 50, 0),
            replication_seed(1, "1.2", 10, 50, 0)
        );
    }

    #[test]
    fn summarize_single_record_equals_record() {
        let result = McResult {
            records: vec![McRecord {
                case_id: "1.1".into(),
                p1: 10,
                p2: 20,
                t_len: 50,
                rep: 0,
                criterion: "-".into(),
                metric: "ds_r1_flat".into(),
                value: 0.25,
            }],
            failures: vec![],
        };
        let rows = summarize(&result, &GroupField::ALL, None).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].n, 1);
        assert_eq!(rows[0].mean, 0.25);
        assert_eq!(rows[0].median, 0.25);
        assert_eq!(rows[0].min, 0.25);
    }

    #[test]
    fn summarize_constant_metric_has_zero_spread() {
        let records = (0..4)
            .map(|rep| McRecord {
                case_id: "1.1".into(),
                p1: 10,
                p2: 20,
                t_len: 50,
                rep,
                criterion: "-".into(),
                metric: "ratio_r1".into(),
                value: 2.0,
            })
            .collect();
        let result = McResult {
            records,
            failures: vec![],
        };
        let rows = summarize(&result, &[GroupField::Case], None).unwrap();
        assert_eq!(rows[0].n, 4);
        assert_eq!(rows[0].min, rows[0].max);
        assert_eq!(rows[0].mean, 2.0);
    }

    #[test]
    fn summarize_hand_built_fixture() {
        let values = [1.0, 3.0, 2.0, 10.0];
        let records = values
            .iter()
            .enumerate()
            .map(|(rep, &value)| McRecord {
                case_id: "1.1".into(),
                p1: 10,
                p2: 20,
                t_len: 50,
                rep: rep as u64,
                criterion: "-".into(),
                metric: "x".into(),
                value,
            })
            .collect();
        let result = McResult {
            records,
            failures: vec![],
        };
        let rows = summarize(&result, &[GroupField::Case], None).unwrap();
        assert_eq!(rows[0].mean, 4.0);
        assert_eq!(rows[0].median, 2.5);
    }

    #[test]
    fn summarize_unknown_metric_rejected() {
        let result = McResult {
            records: vec![McRecord {
                case_id: "1.1".into(),
                p1: 10,
                p2: 20,
                t_len: 50,
                rep: 0,
                criterion: "-".into(),
                metric: "ds_r1_flat".into(),
                value: 0.5,
            }],
            failures: vec![],
        };
        assert!(matches!(
            summarize(&result, &GroupField::ALL, Some(&["nope".to_string()])),
            Err(Error::InvalidQuery(_))
        ));
    }
}
