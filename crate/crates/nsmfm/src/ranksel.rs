//! Eigenvalue-ratio estimation of the four factor-space dimensions,
//! including mock eigenvalues, the delta penalty sequences, and the
//! static / it0 / it1 / it2 selection procedures with the fixed-point
//! candidate graph.
//!
//! The criterion maximizes lambda_j / (lambda_{j+1} + c * delta) over
//! j = 0..h_max, with an artificial lambda_0 = omega so that rank zero can
//! be selected. The delta penalty sequences match the convergence rates of
//! the junk eigenvalues of each second-moment matrix; because the
//! eigenvalue scale of each second-moment matrix depends on the loading and
//! factor scales of the data, the procedures multiply delta by the mean
//! eigenvalue of the target matrix and anchor omega at that same mean
//! eigenvalue. This is the simplest deterministic stand-in for choosing the
//! criterion constants adaptively by subsampling (see
//! [`calibrate_constants`] for the subsampling version).

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimators::{
    antiprojected_covariances_with, antiprojected_factor_path, filtered_covariances_with,
    flattened_covariances, StationaryEstimate,
};
use crate::linalg::{
    loadings_from_spectrum, orth_projector_complement, sym_eig_desc, Loadings, Projector,
    Spectrum, SymmetricMatrix,
};
use crate::model::{FactorPath, MatrixPanel, Ranks};
use crate::util::derive_seed;

/// The six penalty sequences of the eigenvalue-ratio criteria.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaSequences {
    pub r1: f64,
    pub c1: f64,
    pub r1_diamond: f64,
    pub c1_diamond: f64,
    pub r0: f64,
    pub c0: f64,
}

/// Evaluate the delta sequences at the given panel dimensions:
/// delta_R1 = delta_C1 = 1/T;
/// delta_R1_diamond = (p_min^{1/2} T^{3/2})^-1 + (p2 T)^-1 + T^-2
///                  + (p1^{1/2} p2^{1/2} T)^-1, column analogue with p1 and
/// p2 swapped in the middle term;
/// delta_R0 = (p2^{1/2} T^{1/2})^-1 + (p1 p2)^-1, column analogue likewise.
pub fn delta_sequences(p1: usize, p2: usize, t_len: usize) -> DeltaSequences {
    let p1f = p1 as f64;
    let p2f = p2 as f64;
    let t = t_len as f64;
    let p_min = p1f.min(p2f);
    let shared = 1.0 / (p_min.sqrt() * t.powf(1.5)) + 1.0 / (t * t) + 1.0 / ((p1f * p2f).sqrt() * t);
    DeltaSequences {
        r1: 1.0 / t,
        c1: 1.0 / t,
        r1_diamond: shared + 1.0 / (p2f * t),
        c1_diamond: shared + 1.0 / (p1f * t),
        r0: 1.0 / (p2f.sqrt() * t.sqrt()) + 1.0 / (p1f * p2f),
        c0: 1.0 / (p1f.sqrt() * t.sqrt()) + 1.0 / (p1f * p2f),
    }
}

/// Mock eigenvalue omega = delta * log(min(p1, p2, T)); it vanishes
/// asymptotically while omega / delta diverges, so the ratio criterion can
/// select rank zero.
pub fn mock_eigenvalue(delta: f64, p1: usize, p2: usize, t_len: usize) -> Result<f64> {
    let min_dim = p1.min(p2).min(t_len);
    if min_dim < 2 {
        return Err(Error::InvalidInput(
            "mock eigenvalue needs min(p1, p2, T) >= 2".into(),
        ));
    }
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::InvalidInput("mock eigenvalue needs delta > 0".into()));
    }
    Ok(delta * (min_dim as f64).ln())
}

/// Eigenvalue ratios lambda_j / (lambda_{j+1} + c * delta) for
/// j = 0..=h_max, with lambda_0 = omega and eigenvalues clipped below at
/// zero. A zero numerator gives ratio 0; a positive numerator over a zero
/// denominator gives +inf.
pub(crate) fn er_ratios(
    spectrum: &Spectrum,
    delta: f64,
    c: f64,
    omega: f64,
    h_max: usize,
) -> Result<Vec<f64>> {
    if spectrum.dim() < h_max + 1 {
        return Err(Error::RankTooLarge {
            requested: h_max,
            limit: spectrum.dim().saturating_sub(1),
        });
    }
    let lam = |j: usize| spectrum.eigenvalue(j).max(0.0);
    let mut ratios = Vec::with_capacity(h_max + 1);
    for j in 0..=h_max {
        let num = if j == 0 { omega.max(0.0) } else { lam(j - 1) };
        let den = lam(j) + c * delta;
        let ratio = if num == 0.0 {
            0.0
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        };
        ratios.push(ratio);
    }
    Ok(ratios)
}

/// Argmax of the eigenvalue-ratio objective; ties resolve toward the
/// smallest rank.
pub fn er_argmax(
    spectrum: &Spectrum,
    delta: f64,
    c: f64,
    omega: f64,
    h_max: usize,
) -> Result<usize> {
    let ratios = er_ratios(spectrum, delta, c, omega, h_max)?;
    let mut best = 0;
    for (j, &r) in ratios.iter().enumerate() {
        if r > ratios[best] {
            best = j;
        }
    }
    Ok(best)
}

/// Configuration of the eigenvalue-ratio procedures.
#[derive(Debug, Clone, PartialEq)]
pub struct ErConfig {
    /// Upper bound on every candidate rank; must stay below min(p1, p2, T).
    pub h_max: usize,
    pub c_r1: f64,
    pub c_c1: f64,
    pub c_r1_diamond: f64,
    pub c_c1_diamond: f64,
    pub c_r0: f64,
    pub c_c0: f64,
    /// Multiplier on the mock eigenvalue.
    pub omega_multiplier: f64,
    /// Iteration cap for it0 and the graph-based refinements.
    pub max_iter: usize,
    /// When set, it1 orders fixed-point candidates by cluster size first and
    /// average ER value second (the reverse of the default ordering).
    pub it1_prefer_cluster_size: bool,
}

impl Default for ErConfig {
    fn default() -> Self {
        // The flattened criteria get a larger constant: in the flattened
        // second-moment matrix the stationary structure leaks a positive
        // eigenvalue below the trend eigenvalues, and the larger penalty
        // keeps it reading as junk even for weak realized trends.
        ErConfig {
            h_max: 8,
            c_r1: 4.0,
            c_c1: 4.0,
            c_r1_diamond: 1.0,
            c_c1_diamond: 1.0,
            c_r0: 1.0,
            c_c0: 1.0,
            omega_multiplier: 1.0,
            max_iter: 10,
            it1_prefer_cluster_size: false,
        }
    }
}

impl ErConfig {
    /// Default configuration clamped to the panel dimensions.
    pub fn for_panel(panel: &MatrixPanel) -> Self {
        let cap = panel.p1().min(panel.p2()).min(panel.len()).saturating_sub(1);
        ErConfig {
            h_max: 8.min(cap.max(1)),
            ..ErConfig::default()
        }
    }

    pub fn with_h_max(mut self, h_max: usize) -> Self {
        self.h_max = h_max;
        self
    }

    /// Set all six criterion constants to the same value.
    pub fn with_constant(mut self, c: f64) -> Self {
        self.c_r1 = c;
        self.c_c1 = c;
        self.c_r1_diamond = c;
        self.c_c1_diamond = c;
        self.c_r0 = c;
        self.c_c0 = c;
        self
    }

    pub fn validate_against(&self, p1: usize, p2: usize, t_len: usize) -> Result<()> {
        if self.h_max == 0 {
            return Err(Error::InvalidConfig("h_max must be positive".into()));
        }
        if self.h_max >= p1.min(p2).min(t_len) {
            return Err(Error::InvalidConfig(format!(
                "h_max={} must be below min(p1, p2, T)={}",
                self.h_max,
                p1.min(p2).min(t_len)
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be positive".into()));
        }
        for c in [
            self.c_r1,
            self.c_c1,
            self.c_r1_diamond,
            self.c_c1_diamond,
            self.c_r0,
            self.c_c0,
            self.omega_multiplier,
        ] {
            if !c.is_finite() || c <= 0.0 {
                return Err(Error::InvalidConfig(
                    "criterion constants must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Which selection procedure to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    Static,
    It0,
    It1,
    It2,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::Static,
        Criterion::It0,
        Criterion::It1,
        Criterion::It2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Static => "static",
            Criterion::It0 => "it0",
            Criterion::It1 => "it1",
            Criterion::It2 => "it2",
        }
    }

    pub fn parse(s: &str) -> Result<Criterion> {
        match s {
            "static" => Ok(Criterion::Static),
            "it0" => Ok(Criterion::It0),
            "it1" => Ok(Criterion::It1),
            "it2" => Ok(Criterion::It2),
            other => Err(Error::InvalidConfig(format!(
                "unknown criterion '{other}' (expected static, it0, it1 or it2)"
            ))),
        }
    }
}

/// One directed edge of the candidate graph: the refined estimate reached
/// from a starting (hR1, hC1) pair, together with the stationary ranks and
/// the full ER objective vectors of that pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub from: (usize, usize),
    pub to: (usize, usize),
    pub h_r0: usize,
    pub h_c0: usize,
    pub er_row: Vec<f64>,
    pub er_col: Vec<f64>,
    /// Set when the pass failed; the node maps to itself but is excluded
    /// from the fixed-point candidates.
    pub degenerate: bool,
}

impl GraphEdge {
    /// ER objective of this pass evaluated at ranks (a, b).
    pub fn er_at(&self, a: usize, b: usize) -> f64 {
        self.er_row[a] + self.er_col[b]
    }

    pub fn er_value(&self) -> f64 {
        self.er_at(self.to.0, self.to.1)
    }
}

/// Complete out-degree-one graph over the grid {1..h_max}^2.
#[derive(Debug, Clone)]
pub struct RankGraph {
    h_max: usize,
    edges: Vec<GraphEdge>,
}

impl RankGraph {
    pub(crate) fn from_edges(h_max: usize, edges: Vec<GraphEdge>) -> Self {
        RankGraph { h_max, edges }
    }

    pub fn h_max(&self) -> usize {
        self.h_max
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn edge(&self, node: (usize, usize)) -> Option<&GraphEdge> {
        if node.0 == 0 || node.1 == 0 || node.0 > self.h_max || node.1 > self.h_max {
            return None;
        }
        self.edges.get((node.0 - 1) * self.h_max + (node.1 - 1))
    }

    /// Nodes with non-degenerate self-edges, in row-major grid order.
    pub fn fixed_points(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .filter(|e| !e.degenerate && e.to == e.from)
            .map(|e| e.from)
            .collect()
    }

    /// Nodes whose edge-following walk ends at `fp` (including `fp` itself).
    pub fn basin(&self, fp: (usize, usize)) -> Vec<(usize, usize)> {
        let mut members = Vec::new();
        for e in &self.edges {
            let mut current = e.from;
            let mut steps = 0;
            loop {
                if current == fp {
                    members.push(e.from);
                    break;
                }
                steps += 1;
                if steps > self.edges.len() {
                    break;
                }
                match self.edge(current) {
                    Some(next) if !next.degenerate => {
                        if next.to == current {
                            break;
                        }
                        current = next.to;
                    }
                    _ => break,
                }
            }
        }
        members
    }

    pub fn cluster_size(&self, fp: (usize, usize)) -> usize {
        self.basin(fp).len()
    }
}

/// Outcome of one refinement pass started from a trend-rank pair.
#[derive(Debug, Clone)]
struct PassOutcome {
    next: (usize, usize),
    h_r0: usize,
    h_c0: usize,
    er_row: Vec<f64>,
    er_col: Vec<f64>,
}

/// A trend-rank pair must be zero on both sides or on neither; when the two
/// ER criteria disagree about the existence of a block, the pair collapses
/// to (0, 0) (parsimony).
fn reconcile_pair(a: usize, b: usize) -> (usize, usize) {
    if a == 0 || b == 0 {
        (0, 0)
    } else {
        (a, b)
    }
}

/// Shared state for the selection procedures: the panel, the criterion
/// configuration, and the flattened covariances with their spectra (which
/// do not depend on any candidate rank).
pub struct Selector<'a> {
    panel: &'a MatrixPanel,
    cfg: &'a ErConfig,
    deltas: DeltaSequences,
    flat_r: SymmetricMatrix,
    flat_c: SymmetricMatrix,
    spec_r: Spectrum,
    spec_c: Spectrum,
    /// Matrices whose mean eigenvalue falls below this floor are treated as
    /// exactly zero: anti-projection of a noiseless block leaves pure
    /// rounding residue at ~1e-30 of the data scale, which must not be read
    /// as factor structure.
    scale_floor: f64,
}

struct StationaryPass {
    h_r0: usize,
    h_c0: usize,
    spec_r_perp: Spectrum,
    spec_c_perp: Spectrum,
    r_perp: Projector,
    c_perp: Projector,
    r1: Loadings,
    c1: Loadings,
}

impl<'a> Selector<'a> {
    pub fn new(panel: &'a MatrixPanel, cfg: &'a ErConfig) -> Result<Self> {
        cfg.validate_against(panel.p1(), panel.p2(), panel.len())?;
        let deltas = delta_sequences(panel.p1(), panel.p2(), panel.len());
        let (flat_r, flat_c) = flattened_covariances(panel)?;
        let spec_r = sym_eig_desc(&flat_r)?;
        let spec_c = sym_eig_desc(&flat_c)?;
        let scale_floor =
            1e-12 * flat_r.mean_eigenvalue().max(flat_c.mean_eigenvalue()).max(0.0);
        Ok(Selector {
            panel,
            cfg,
            deltas,
            flat_r,
            flat_c,
            spec_r,
            spec_c,
            scale_floor,
        })
    }

    /// ER selection on one matrix. The penalty is c * delta anchored at the
    /// matrix's top eigenvalue, so an eigenvalue below a delta-fraction of
    /// the leading one reads as junk; the mock eigenvalue is the mean
    /// eigenvalue inflated by log(min(p1, p2, T)), which dominates a
    /// junk-only spectrum but stays below a factor eigenvalue. A matrix at
    /// the rounding floor selects rank zero outright.
    fn er_select(
        &self,
        m: &SymmetricMatrix,
        spec: &Spectrum,
        delta: f64,
        c: f64,
    ) -> Result<(usize, Vec<f64>)> {
        let mean_scale = m.mean_eigenvalue().max(0.0);
        let top_scale = spec.eigenvalue(0).max(0.0);
        if mean_scale <= self.scale_floor || top_scale <= 0.0 {
            return Ok((0, vec![0.0; self.cfg.h_max + 1]));
        }
        let omega = self.cfg.omega_multiplier
            * mock_eigenvalue(mean_scale, self.panel.p1(), self.panel.p2(), self.panel.len())?;
        let ratios = er_ratios(spec, delta * top_scale, c, omega, self.cfg.h_max)?;
        let mut best = 0;
        for (j, &r) in ratios.iter().enumerate() {
            if r > ratios[best] {
                best = j;
            }
        }
        Ok((best, ratios))
    }

    /// Trend ranks from the flattened spectra.
    fn trend_ranks_flat(&self) -> Result<(usize, usize)> {
        let (h_r1, _) = self.er_select(&self.flat_r, &self.spec_r, self.deltas.r1, self.cfg.c_r1)?;
        let (h_c1, _) = self.er_select(&self.flat_c, &self.spec_c, self.deltas.c1, self.cfg.c_c1)?;
        Ok(reconcile_pair(h_r1, h_c1))
    }

    fn trend_loadings(&self, h_r1: usize, h_c1: usize) -> Result<(Loadings, Loadings)> {
        Ok((
            loadings_from_spectrum(&self.spec_r, h_r1, self.panel.p1())?,
            loadings_from_spectrum(&self.spec_c, h_c1, self.panel.p2())?,
        ))
    }

    /// Anti-projection step for a given trend-rank pair: stationary ranks
    /// from the anti-projected spectra.
    fn stationary_pass(&self, h_r1: usize, h_c1: usize) -> Result<StationaryPass> {
        let (r1, c1) = self.trend_loadings(h_r1, h_c1)?;
        let r_perp = orth_projector_complement(&r1)?;
        let c_perp = orth_projector_complement(&c1)?;
        let (m_r_perp, m_c_perp) = antiprojected_covariances_with(self.panel, &r_perp, &c_perp)?;
        let spec_r_perp = sym_eig_desc(&m_r_perp)?;
        let spec_c_perp = sym_eig_desc(&m_c_perp)?;
        let (h_r0, _) = self.er_select(&m_r_perp, &spec_r_perp, self.deltas.r0, self.cfg.c_r0)?;
        let (h_c0, _) = self.er_select(&m_c_perp, &spec_c_perp, self.deltas.c0, self.cfg.c_c0)?;
        let (h_r0, h_c0) = reconcile_pair(h_r0, h_c0);
        Ok(StationaryPass {
            h_r0,
            h_c0,
            spec_r_perp,
            spec_c_perp,
            r_perp,
            c_perp,
            r1,
            c1,
        })
    }

    /// One full refinement pass: estimate the stationary structure given the
    /// current trend ranks, filter it out, project, and re-select the trend
    /// ranks from the projected spectra.
    fn one_pass(&self, h_r1: usize, h_c1: usize) -> Result<PassOutcome> {
        let sp = self.stationary_pass(h_r1, h_c1)?;
        let r0 = loadings_from_spectrum(&sp.spec_r_perp, sp.h_r0, self.panel.p1())?;
        let c0 = loadings_from_spectrum(&sp.spec_c_perp, sp.h_c0, self.panel.p2())?;
        let f0 = if sp.h_r0 > 0 {
            let a_r = sp.r_perp.as_matrix() * r0.as_matrix();
            let a_c = sp.c_perp.as_matrix() * c0.as_matrix();
            antiprojected_factor_path(self.panel, &a_r, &a_c, "rank_selection")?
        } else {
            FactorPath::empty(self.panel.len())
        };
        let stationary = StationaryEstimate {
            r0_hat: r0,
            c0_hat: c0,
            f0_hat: f0,
            spec_r_perp: sp.spec_r_perp,
            spec_c_perp: sp.spec_c_perp,
        };
        let (m_r_d, m_c_d) =
            filtered_covariances_with(self.panel, &sp.r1, &sp.c1, &stationary)?;
        let spec_r_d = sym_eig_desc(&m_r_d)?;
        let spec_c_d = sym_eig_desc(&m_c_d)?;
        let (next_r, er_row) =
            self.er_select(&m_r_d, &spec_r_d, self.deltas.r1_diamond, self.cfg.c_r1_diamond)?;
        let (next_c, er_col) =
            self.er_select(&m_c_d, &spec_c_d, self.deltas.c1_diamond, self.cfg.c_c1_diamond)?;
        let next = reconcile_pair(next_r, next_c);
        Ok(PassOutcome {
            next,
            h_r0: sp.h_r0,
            h_c0: sp.h_c0,
            er_row,
            er_col,
        })
    }

    /// Static criterion: flattened ER for the trend ranks, anti-projected ER
    /// for the stationary ranks, each estimated once.
    pub fn static_ranks(&self) -> Result<Ranks> {
        let (h_r1, h_c1) = self.trend_ranks_flat()?;
        let sp = self.stationary_pass(h_r1, h_c1)?;
        Ranks::new(h_r1, h_c1, sp.h_r0, sp.h_c0)
    }

    /// it0: iterate refinement passes from the static trend ranks until the
    /// refined pair reproduces itself or the iteration cap is hit; on
    /// non-convergence falls back to the static solution.
    pub fn it0(&self) -> Result<(Ranks, bool)> {
        let static_ranks = self.static_ranks()?;
        let mut current = (static_ranks.h_r1, static_ranks.h_c1);
        for _ in 0..self.cfg.max_iter {
            let pass = self.one_pass(current.0, current.1)?;
            if pass.next == current {
                return Ok((Ranks::new(current.0, current.1, pass.h_r0, pass.h_c0)?, true));
            }
            current = pass.next;
        }
        Ok((static_ranks, false))
    }

    /// One refinement pass per grid node; failed passes become degenerate
    /// self-edges.
    pub fn build_graph(&self) -> Result<RankGraph> {
        let h_max = self.cfg.h_max;
        let mut edges = Vec::with_capacity(h_max * h_max);
        for i in 1..=h_max {
            for j in 1..=h_max {
                match self.one_pass(i, j) {
                    Ok(pass) => edges.push(GraphEdge {
                        from: (i, j),
                        to: pass.next,
                        h_r0: pass.h_r0,
                        h_c0: pass.h_c0,
                        er_row: pass.er_row,
                        er_col: pass.er_col,
                        degenerate: false,
                    }),
                    Err(Error::DegenerateAntiProjection { .. }) => edges.push(GraphEdge {
                        from: (i, j),
                        to: (i, j),
                        h_r0: 0,
                        h_c0: 0,
                        er_row: vec![0.0; h_max + 1],
                        er_col: vec![0.0; h_max + 1],
                        degenerate: true,
                    }),
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(RankGraph::from_edges(h_max, edges))
    }

    /// it1: on it0 non-convergence, pick the fixed point with the largest
    /// average ER objective over its basin (cluster size breaks ties), then
    /// re-estimate the stationary ranks at the chosen trend ranks.
    pub fn it1(&self, it0_result: &(Ranks, bool), graph: &RankGraph) -> Result<Ranks> {
        let (it0_ranks, converged) = it0_result;
        if *converged {
            return Ok(*it0_ranks);
        }
        let candidates = graph.fixed_points();
        if candidates.is_empty() {
            return Ok(*it0_ranks);
        }
        let mut scored: Vec<((usize, usize), f64, usize)> = candidates
            .iter()
            .map(|&fp| {
                let basin = graph.basin(fp);
                let avg = if basin.is_empty() {
                    0.0
                } else {
                    basin
                        .iter()
                        .map(|&n| graph.edge(n).map(|e| e.er_at(fp.0, fp.1)).unwrap_or(0.0))
                        .sum::<f64>()
                        / basin.len() as f64
                };
                (fp, avg, basin.len())
            })
            .collect();
        let prefer_cluster = self.cfg.it1_prefer_cluster_size;
        scored.sort_by(|a, b| {
            let primary = if prefer_cluster {
                a.2.cmp(&b.2).then(
                    a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal),
                )
            } else {
                a.1.partial_cmp(&b.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.2.cmp(&b.2))
            };
            // descending on the score, ascending on the rank pair
            primary.reverse().then(a.0.cmp(&b.0))
        });
        let chosen = scored[0].0;
        let sp = self.stationary_pass(chosen.0, chosen.1)?;
        Ranks::new(chosen.0, chosen.1, sp.h_r0, sp.h_c0)
    }

    /// it2: on it0 non-convergence, keep it0's stationary ranks and choose
    /// hR1 and hC1 coordinate-wise as the ER-value maximizers among the
    /// fixed-point candidates.
    pub fn it2(&self, it0_result: &(Ranks, bool), graph: &RankGraph) -> Result<Ranks> {
        let (it0_ranks, converged) = it0_result;
        if *converged {
            return Ok(*it0_ranks);
        }
        let candidates = graph.fixed_points();
        if candidates.is_empty() {
            return Ok(*it0_ranks);
        }
        let mut best_row = candidates[0];
        let mut best_row_val = f64::NEG_INFINITY;
        let mut best_col = candidates[0];
        let mut best_col_val = f64::NEG_INFINITY;
        for &fp in &candidates {
            let edge = graph.edge(fp).expect("fixed point edge exists");
            let row_val = edge.er_row[fp.0];
            let col_val = edge.er_col[fp.1];
            if row_val > best_row_val {
                best_row_val = row_val;
                best_row = fp;
            }
            if col_val > best_col_val {
                best_col_val = col_val;
                best_col = fp;
            }
        }
        Ranks::new(best_row.0, best_col.1, it0_ranks.h_r0, it0_ranks.h_c0)
    }
}

/// Static eigenvalue-ratio selection of all four ranks.
pub fn estimate_ranks_static(panel: &MatrixPanel, cfg: &ErConfig) -> Result<Ranks> {
    Selector::new(panel, cfg)?.static_ranks()
}

/// Iterative selection started from the static estimate; the flag reports
/// whether a fixed point was reached.
pub fn estimate_ranks_it0(panel: &MatrixPanel, cfg: &ErConfig) -> Result<(Ranks, bool)> {
    Selector::new(panel, cfg)?.it0()
}

/// Candidate graph over the initial-value grid {1..h_max}^2.
pub fn build_rank_graph(panel: &MatrixPanel, cfg: &ErConfig) -> Result<RankGraph> {
    Selector::new(panel, cfg)?.build_graph()
}

pub fn estimate_ranks_it1(panel: &MatrixPanel, cfg: &ErConfig) -> Result<Ranks> {
    let selector = Selector::new(panel, cfg)?;
    let it0 = selector.it0()?;
    if it0.1 {
        return Ok(it0.0);
    }
    let graph = selector.build_graph()?;
    selector.it1(&it0, &graph)
}

pub fn estimate_ranks_it2(panel: &MatrixPanel, cfg: &ErConfig) -> Result<Ranks> {
    let selector = Selector::new(panel, cfg)?;
    let it0 = selector.it0()?;
    if it0.1 {
        return Ok(it0.0);
    }
    let graph = selector.build_graph()?;
    selector.it2(&it0, &graph)
}

/// Ranks selected by every requested criterion, sharing the flattened
/// spectra, the it0 iteration and (when needed) the candidate graph.
pub fn select_ranks(
    panel: &MatrixPanel,
    cfg: &ErConfig,
    criteria: &[Criterion],
) -> Result<Vec<(Criterion, Ranks)>> {
    let selector = Selector::new(panel, cfg)?;
    let mut wanted: Vec<Criterion> = criteria.to_vec();
    wanted.sort();
    wanted.dedup();

    let needs_it0 = wanted.iter().any(|c| *c != Criterion::Static);
    let static_ranks = selector.static_ranks()?;
    let it0 = if needs_it0 { Some(selector.it0()?) } else { None };
    let needs_graph = wanted
        .iter()
        .any(|c| matches!(c, Criterion::It1 | Criterion::It2))
        && it0.as_ref().map(|r| !r.1).unwrap_or(false);
    let graph = if needs_graph {
        Some(selector.build_graph()?)
    } else {
        None
    };

    let mut out = Vec::with_capacity(wanted.len());
    for c in wanted {
        let ranks = match c {
            Criterion::Static => static_ranks,
            Criterion::It0 => it0.as_ref().expect("it0 computed").0,
            Criterion::It1 => match (&it0, &graph) {
                (Some(r), Some(g)) => selector.it1(r, g)?,
                (Some(r), None) => r.0,
                _ => unreachable!("it1 requires it0"),
            },
            Criterion::It2 => match (&it0, &graph) {
                (Some(r), Some(g)) => selector.it2(r, g)?,
                (Some(r), None) => r.0,
                _ => unreachable!("it2 requires it0"),
            },
        };
        out.push((c, ranks));
    }
    Ok(out)
}

/// Run the full estimation pipeline with ranks selected by the given
/// criterion. Returns the output, the selected ranks and - for the
/// iterative criteria - whether it0 reached a fixed point.
pub fn estimate_with_selected_ranks(
    panel: &MatrixPanel,
    cfg: &ErConfig,
    criterion: Criterion,
) -> Result<(crate::estimators::EstimationOutput, Ranks, Option<bool>)> {
    let selector = Selector::new(panel, cfg)?;
    let (ranks, converged) = match criterion {
        Criterion::Static => (selector.static_ranks()?, None),
        Criterion::It0 => {
            let (r, c) = selector.it0()?;
            (r, Some(c))
        }
        Criterion::It1 | Criterion::It2 => {
            let it0 = selector.it0()?;
            let ranks = if it0.1 {
                it0.0
            } else {
                let graph = selector.build_graph()?;
                if criterion == Criterion::It1 {
                    selector.it1(&it0, &graph)?
                } else {
                    selector.it2(&it0, &graph)?
                }
            };
            (ranks, Some(it0.1))
        }
    };
    let output = crate::estimators::estimate_pipeline(panel, &ranks)?;
    Ok((output, ranks, converged))
}

/// Subsampling plan for the adaptive choice of the criterion constants.
#[derive(Debug, Clone)]
pub struct SubsampleGrid {
    /// Fraction of each dimension retained in a subsample, in (0, 1].
    pub fraction: f64,
    /// Number of time-block subsamples and of cross-section subsamples.
    pub count: usize,
    /// Seed for the random cross-section subsets.
    pub seed: u64,
    /// Candidate constants, tried in ascending order.
    pub constants: Vec<f64>,
}

impl Default for SubsampleGrid {
    fn default() -> Self {
        SubsampleGrid {
            fraction: 0.7,
            count: 4,
            seed: 0,
            constants: vec![0.1, 0.3162277660168379, 1.0, 3.1622776601683795, 10.0],
        }
    }
}

fn sub_panel_time(panel: &MatrixPanel, start: usize, len: usize) -> Result<MatrixPanel> {
    MatrixPanel::new(panel.slices()[start..start + len].to_vec())
}

fn sub_panel_cross(panel: &MatrixPanel, rows: &[usize], cols: &[usize]) -> Result<MatrixPanel> {
    let slices = panel
        .slices()
        .iter()
        .map(|x| {
            DMatrix::from_fn(rows.len(), cols.len(), |i, j| x[(rows[i], cols[j])])
        })
        .collect();
    MatrixPanel::new(slices)
}

/// Pick the smallest constant on the candidate grid whose static rank
/// selection is identical across all subsamples (contiguous time blocks and
/// random cross-section subsets); falls back to c = 1 when none stabilizes.
/// A single-candidate grid is returned as-is.
pub fn calibrate_constants(
    panel: &MatrixPanel,
    cfg: &ErConfig,
    grid: &SubsampleGrid,
) -> Result<ErConfig> {
    if grid.constants.is_empty() {
        return Err(Error::InvalidConfig("empty constant grid".into()));
    }
    if grid.constants.len() == 1 {
        return Ok(cfg.clone().with_constant(grid.constants[0]));
    }
    if !(grid.fraction > 0.0 && grid.fraction <= 1.0) || grid.count == 0 {
        return Err(Error::InvalidConfig(
            "subsample fraction must be in (0, 1] and count positive".into(),
        ));
    }
    let sub_t = ((panel.len() as f64 * grid.fraction).ceil() as usize).max(1);
    let sub_p1 = ((panel.p1() as f64 * grid.fraction).ceil() as usize).max(1);
    let sub_p2 = ((panel.p2() as f64 * grid.fraction).ceil() as usize).max(1);
    if cfg.h_max >= sub_t.min(sub_p1).min(sub_p2) {
        return Err(Error::InvalidConfig(format!(
            "subsamples too small for h_max={}: min subsample dim {}",
            cfg.h_max,
            sub_t.min(sub_p1).min(sub_p2)
        )));
    }

    let mut subsamples = Vec::new();
    for k in 0..grid.count {
        let span = panel.len() - sub_t;
        let start = if grid.count == 1 {
            0
        } else {
            (span * k) / (grid.count - 1)
        };
        subsamples.push(sub_panel_time(panel, start, sub_t)?);
    }
    for k in 0..grid.count {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(grid.seed, &[k as u64]));
        let mut rows: Vec<usize> = (0..panel.p1()).collect();
        let mut cols: Vec<usize> = (0..panel.p2()).collect();
        rows.shuffle(&mut rng);
        cols.shuffle(&mut rng);
        let mut rows: Vec<usize> = rows.into_iter().take(sub_p1).collect();
        let mut cols: Vec<usize> = cols.into_iter().take(sub_p2).collect();
        rows.sort_unstable();
        cols.sort_unstable();
        subsamples.push(sub_panel_cross(panel, &rows, &cols)?);
    }

    let mut constants = grid.constants.clone();
    constants.sort_by(|a, b| a.partial_cmp(b).expect("finite constants"));
    for &c in &constants {
        let candidate = cfg.clone().with_constant(c);
        let mut selections = Vec::with_capacity(subsamples.len());
        let mut ok = true;
        for sub in &subsamples {
            match estimate_ranks_static(sub, &candidate) {
                Ok(r) => selections.push(r),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && selections.windows(2).all(|w| w[0] == w[1]) {
            return Ok(candidate);
        }
    }
    Ok(cfg.clone().with_constant(1.0))
}
