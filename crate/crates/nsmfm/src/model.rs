//! Domain types for the matrix factor model and the data-generating process
//! used by the Monte Carlo studies.
//!
//! The observed panel is X_t = R1 F1_t C1' + R0 F0_t C0' + E_t, where F1 is a
//! matrix random walk (the common stochastic trends) and F0 is a stationary
//! matrix factor.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::linalg::Loadings;

/// Sub-stream labels for the master seed; each model component draws from its
/// own ChaCha stream so that changing one component's parameters never
/// perturbs another component's draw.
pub mod streams {
    pub const LOADINGS_R1: u64 = 1;
    pub const LOADINGS_C1: u64 = 2;
    pub const LOADINGS_R0: u64 = 3;
    pub const LOADINGS_C0: u64 = 4;
    pub const TREND_INNOVATIONS: u64 = 5;
    pub const STATIONARY_FACTORS: u64 = 6;
    pub const NOISE: u64 = 7;
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A T-length sequence of p1 x p2 real matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPanel {
    p1: usize,
    p2: usize,
    data: Vec<DMatrix<f64>>,
}

impl MatrixPanel {
    pub fn new(data: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = data
            .first()
            .ok_or_else(|| Error::InvalidInput("panel must have T >= 1".into()))?;
        let (p1, p2) = first.shape();
        if p1 == 0 || p2 == 0 {
            return Err(Error::InvalidInput("panel dimensions must be positive".into()));
        }
        for (t, m) in data.iter().enumerate() {
            if m.shape() != (p1, p2) {
                return Err(Error::ShapeError(format!(
                    "panel slice {t} has shape {:?}, expected ({p1}, {p2})",
                    m.shape()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "panel slice {t} has non-finite entries"
                )));
            }
        }
        Ok(MatrixPanel { p1, p2, data })
    }

    pub fn p1(&self) -> usize {
        self.p1
    }

    pub fn p2(&self) -> usize {
        self.p2
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn slice(&self, t: usize) -> &DMatrix<f64> {
        &self.data[t]
    }

    pub fn slices(&self) -> &[DMatrix<f64>] {
        &self.data
    }

    pub fn scale(&self, kappa: f64) -> MatrixPanel {
        MatrixPanel {
            p1: self.p1,
            p2: self.p2,
            data: self.data.iter().map(|m| m * kappa).collect(),
        }
    }
}

/// A T-length sequence of hR x hC factor matrices. An empty path (hR*hC = 0)
/// represents an absent factor block.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPath {
    h_r: usize,
    h_c: usize,
    data: Vec<DMatrix<f64>>,
}

impl FactorPath {
    pub fn new(h_r: usize, h_c: usize, data: Vec<DMatrix<f64>>) -> Result<Self> {
        for (t, m) in data.iter().enumerate() {
            if m.shape() != (h_r, h_c) {
                return Err(Error::ShapeError(format!(
                    "factor slice {t} has shape {:?}, expected ({h_r}, {h_c})",
                    m.shape()
                )));
            }
        }
        Ok(FactorPath { h_r, h_c, data })
    }

    pub fn empty(len: usize) -> Self {
        FactorPath {
            h_r: 0,
            h_c: 0,
            data: vec![DMatrix::zeros(0, 0); len],
        }
    }

    pub fn h_r(&self) -> usize {
        self.h_r
    }

    pub fn h_c(&self) -> usize {
        self.h_c
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True when the factor block is absent (hR * hC = 0).
    pub fn is_absent(&self) -> bool {
        self.h_r == 0 || self.h_c == 0
    }

    pub fn slice(&self, t: usize) -> &DMatrix<f64> {
        &self.data[t]
    }

    pub fn slices(&self) -> &[DMatrix<f64>] {
        &self.data
    }
}

/// The quadruple of factor-space dimensions (hR1, hC1, hR0, hC0).
///
/// A factor block exists on both sides or not at all: hR1 = 0 iff hC1 = 0,
/// and likewise for the stationary block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ranks {
    pub h_r1: usize,
    pub h_c1: usize,
    pub h_r0: usize,
    pub h_c0: usize,
}

impl Ranks {
    pub fn new(h_r1: usize, h_c1: usize, h_r0: usize, h_c0: usize) -> Result<Self> {
        let r = Ranks {
            h_r1,
            h_c1,
            h_r0,
            h_c0,
        };
        r.validate_pairing()?;
        Ok(r)
    }

    pub fn validate_pairing(&self) -> Result<()> {
        if (self.h_r1 == 0) != (self.h_c1 == 0) {
            return Err(Error::InvalidConfig(format!(
                "trend ranks must be zero together, got hR1={} hC1={}",
                self.h_r1, self.h_c1
            )));
        }
        if (self.h_r0 == 0) != (self.h_c0 == 0) {
            return Err(Error::InvalidConfig(format!(
                "stationary ranks must be zero together, got hR0={} hC0={}",
                self.h_r0, self.h_c0
            )));
        }
        Ok(())
    }

    pub fn validate_against(&self, p1: usize, p2: usize) -> Result<()> {
        self.validate_pairing()?;
        if self.h_r1 > p1 || self.h_r0 > p1 {
            return Err(Error::InvalidConfig(format!(
                "row ranks ({}, {}) exceed p1={p1}",
                self.h_r1, self.h_r0
            )));
        }
        if self.h_c1 > p2 || self.h_c0 > p2 {
            return Err(Error::InvalidConfig(format!(
                "column ranks ({}, {}) exceed p2={p2}",
                self.h_c1, self.h_c0
            )));
        }
        Ok(())
    }

    pub fn has_trend(&self) -> bool {
        self.h_r1 > 0
    }

    pub fn has_stationary(&self) -> bool {
        self.h_r0 > 0
    }
}

/// Configuration of the simulation DGP.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub p1: usize,
    pub p2: usize,
    pub t_len: usize,
    pub ranks: Ranks,
    /// Half-width of the uniform law for the stationary loadings R0, C0.
    pub a0: f64,
    /// Half-width of the uniform law for the trend loadings R1, C1.
    pub a1: f64,
    /// Variance of each entry of vec(F0_t) ~ N(0, sigma0 I).
    pub sigma0: f64,
    /// Standard deviation of the idiosyncratic noise entries.
    pub noise_std: f64,
    pub seed: u64,
    /// When set, the loadings streams derive from this seed instead of
    /// `seed`, holding the loadings fixed while factors and noise vary.
    pub loadings_seed: Option<u64>,
}

impl DgpConfig {
    pub fn new(p1: usize, p2: usize, t_len: usize, ranks: Ranks, seed: u64) -> Result<Self> {
        let cfg = DgpConfig {
            p1,
            p2,
            t_len,
            ranks,
            a0: 1.0,
            a1: 1.0,
            sigma0: 1.0,
            noise_std: 1.0,
            seed,
            loadings_seed: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p1 == 0 || self.p2 == 0 || self.t_len == 0 {
            return Err(Error::InvalidConfig(
                "p1, p2 and T must be positive".into(),
            ));
        }
        self.ranks.validate_against(self.p1, self.p2)?;
        if !self.a0.is_finite() || self.a0 <= 0.0 || !self.a1.is_finite() || self.a1 <= 0.0 {
            return Err(Error::InvalidConfig("a0 and a1 must be positive".into()));
        }
        if self.sigma0 < 0.0 || self.noise_std < 0.0 {
            return Err(Error::InvalidConfig(
                "sigma0 and noise_std must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// The generated truth: raw loadings, factor paths and the noise panel.
/// The assembled panel equals R1 F1_t C1' + R0 F0_t C0' + E_t entry-exactly.
#[derive(Debug, Clone)]
pub struct TrueModel {
    pub r1: Loadings,
    pub c1: Loadings,
    pub r0: Loadings,
    pub c0: Loadings,
    pub f1: FactorPath,
    pub f0: FactorPath,
    pub e: MatrixPanel,
}

fn draw_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, half_width: f64) -> DMatrix<f64> {
    let dist = Uniform::new_inclusive(-half_width, half_width).expect("valid uniform bounds");
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = dist.sample(rng);
        }
    }
    m
}

fn draw_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let z: f64 = StandardNormal.sample(rng);
            m[(i, j)] = std * z;
        }
    }
    m
}

/// Simulate a panel from the DGP: F1 is a Gaussian random walk started at
/// zero with standard-normal innovations, vec(F0_t) ~ N(0, sigma0 I),
/// loadings are uniform draws, and E_t has iid N(0, noise_std^2) entries.
/// Deterministic given the seed.
pub fn simulate(config: &DgpConfig) -> Result<(MatrixPanel, TrueModel)> {
    config.validate()?;
    let DgpConfig {
        p1,
        p2,
        t_len,
        ranks,
        a0,
        a1,
        sigma0,
        noise_std,
        seed,
        loadings_seed,
    } = config.clone();
    let lseed = loadings_seed.unwrap_or(seed);

    let r1 = Loadings::new(draw_uniform(
        &mut stream_rng(lseed, streams::LOADINGS_R1),
        p1,
        ranks.h_r1,
        a1,
    ))?;
    let c1 = Loadings::new(draw_uniform(
        &mut stream_rng(lseed, streams::LOADINGS_C1),
        p2,
        ranks.h_c1,
        a1,
    ))?;
    let r0 = Loadings::new(draw_uniform(
        &mut stream_rng(lseed, streams::LOADINGS_R0),
        p1,
        ranks.h_r0,
        a0,
    ))?;
    let c0 = Loadings::new(draw_uniform(
        &mut stream_rng(lseed, streams::LOADINGS_C0),
        p2,
        ranks.h_c0,
        a0,
    ))?;

    let f1 = if ranks.has_trend() {
        let mut rng = stream_rng(seed, streams::TREND_INNOVATIONS);
        let mut level = DMatrix::zeros(ranks.h_r1, ranks.h_c1);
        let mut path = Vec::with_capacity(t_len);
        for _ in 0..t_len {
            level += draw_normal(&mut rng, ranks.h_r1, ranks.h_c1, 1.0);
            path.push(level.clone());
        }
        FactorPath::new(ranks.h_r1, ranks.h_c1, path)?
    } else {
        FactorPath::empty(t_len)
    };

    let f0 = if ranks.has_stationary() {
        let mut rng = stream_rng(seed, streams::STATIONARY_FACTORS);
        let std = sigma0.sqrt();
        let path = (0..t_len)
            .map(|_| draw_normal(&mut rng, ranks.h_r0, ranks.h_c0, std))
            .collect();
        FactorPath::new(ranks.h_r0, ranks.h_c0, path)?
    } else {
        FactorPath::empty(t_len)
    };

    let e = {
        let mut rng = stream_rng(seed, streams::NOISE);
        let slices = (0..t_len)
            .map(|_| draw_normal(&mut rng, p1, p2, noise_std))
            .collect();
        MatrixPanel::new(slices)?
    };

    let model = TrueModel {
        r1,
        c1,
        r0,
        c0,
        f1,
        f0,
        e,
    };
    let panel = assemble_panel(&model)?;
    Ok((panel, model))
}

/// Assemble X_t = R1 F1_t C1' + R0 F0_t C0' + E_t. Empty factor blocks
/// contribute exact zeros.
pub fn assemble_panel(model: &TrueModel) -> Result<MatrixPanel> {
    let t_len = model.e.len();
    if model.f1.len() != t_len || model.f0.len() != t_len {
        return Err(Error::ShapeError(format!(
            "factor paths (T={}, T={}) do not match noise panel (T={t_len})",
            model.f1.len(),
            model.f0.len()
        )));
    }
    let (p1, p2) = (model.e.p1(), model.e.p2());
    if model.r1.p() != p1
        || model.c1.p() != p2
        || model.r0.p() != p1
        || model.c0.p() != p2
        || model.r1.h() != model.f1.h_r()
        || model.c1.h() != model.f1.h_c()
        || model.r0.h() != model.f0.h_r()
        || model.c0.h() != model.f0.h_c()
    {
        return Err(Error::ShapeError(
            "loadings and factor paths are not conformable".into(),
        ));
    }

    let mut slices = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut x = model.e.slice(t).clone();
        if !model.f1.is_absent() {
            x += model.r1.as_matrix() * model.f1.slice(t) * model.c1.as_matrix().transpose();
        }
        if !model.f0.is_absent() {
            x += model.r0.as_matrix() * model.f0.slice(t) * model.c0.as_matrix().transpose();
        }
        slices.push(x);
    }
    MatrixPanel::new(slices)
}

/// First difference of a panel: output has length T - 1 with X_t - X_{t-1}.
pub fn difference_panel(panel: &MatrixPanel) -> Result<MatrixPanel> {
    if panel.len() < 2 {
        return Err(Error::InvalidInput(
            "difference needs a panel with T >= 2".into(),
        ));
    }
    let slices = (1..panel.len())
        .map(|t| panel.slice(t) - panel.slice(t - 1))
        .collect();
    MatrixPanel::new(slices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(ranks: Ranks, seed: u64) -> DgpConfig {
        DgpConfig::new(6, 5, 30, ranks, seed).unwrap()
    }

    #[test]
    fn deterministic_given_seed() {
        let c = cfg(Ranks::new(1, 1, 1, 1).unwrap(), 99);
        let (a, _) = simulate(&c).unwrap();
        let (b, _) = simulate(&c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sigma0_zero_kills_stationary_component() {
        let mut c = cfg(Ranks::new(1, 1, 1, 1).unwrap(), 3);
        c.sigma0 = 0.0;
        let (_, model) = simulate(&c).unwrap();
        for t in 0..model.f0.len() {
            assert!(model.f0.slice(t).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn random_walk_variance_matches_time_index() {
        // Var(F1_t entry) = t over replications; Monte Carlo oracle, 2000
        // replications, relative error within 10% at t in {10, 50}.
        let reps = 2000;
        for &t_check in &[10usize, 50] {
            let mut sum_sq = 0.0;
            for rep in 0..reps {
                let c = DgpConfig::new(1, 1, 50, Ranks::new(1, 1, 0, 0).unwrap(), 10_000 + rep)
                    .unwrap();
                let (_, model) = simulate(&c).unwrap();
                let v = model.f1.slice(t_check - 1)[(0, 0)];
                sum_sq += v * v;
            }
            let var = sum_sq / reps as f64;
            let rel = (var - t_check as f64).abs() / t_check as f64;
            assert!(rel <= 0.10, "t={t_check}: var={var}, rel err {rel}");
        }
    }

    #[test]
    fn ranks_pairing_enforced() {
        assert!(Ranks::new(0, 1, 0, 0).is_err());
        assert!(Ranks::new(1, 1, 0, 1).is_err());
        assert!(Ranks::new(0, 0, 2, 1).is_ok());
    }

    #[test]
    fn empty_blocks_give_noise_only_panel() {
        let c = cfg(Ranks::new(0, 0, 0, 0).unwrap(), 17);
        let (panel, model) = simulate(&c).unwrap();
        for t in 0..panel.len() {
            assert_eq!(panel.slice(t), model.e.slice(t));
        }
    }

    #[test]
    fn assemble_hand_computed_rank_one() {
        // E = 0, F0 absent, 2x2 panel with rank-1 trend block.
        let r1 = Loadings::new(DMatrix::from_column_slice(2, 1, &[1.0, 2.0])).unwrap();
        let c1 = Loadings::new(DMatrix::from_column_slice(2, 1, &[3.0, -1.0])).unwrap();
        let f1 = FactorPath::new(1, 1, vec![DMatrix::from_element(1, 1, 2.0)]).unwrap();
        let model = TrueModel {
            r1,
            c1,
            r0: Loadings::empty(2),
            c0: Loadings::empty(2),
            f1,
            f0: FactorPath::empty(1),
            e: MatrixPanel::new(vec![DMatrix::zeros(2, 2)]).unwrap(),
        };
        let panel = assemble_panel(&model).unwrap();
        // X = 2 * [1,2]' [3,-1] = [[6,-2],[12,-4]]
        let x = panel.slice(0);
        assert_eq!(x[(0, 0)], 6.0);
        assert_eq!(x[(0, 1)], -2.0);
        assert_eq!(x[(1, 0)], 12.0);
        assert_eq!(x[(1, 1)], -4.0);
    }

    #[test]
    fn assemble_round_trips_simulation() {
        let c = cfg(Ranks::new(1, 1, 1, 1).unwrap(), 5);
        let (panel, model) = simulate(&c).unwrap();
        let rebuilt = assemble_panel(&model).unwrap();
        assert_eq!(panel, rebuilt);
    }

    #[test]
    fn assembly_is_linear_in_noise() {
        let c = cfg(Ranks::new(1, 1, 1, 1).unwrap(), 21);
        let (_, model) = simulate(&c).unwrap();
        let doubled = TrueModel {
            e: MatrixPanel::new(model.e.slices().iter().map(|m| m * 2.0).collect()).unwrap(),
            ..model.clone()
        };
        let base = assemble_panel(&model).unwrap();
        let double_noise = assemble_panel(&doubled).unwrap();
        for t in 0..base.len() {
            let expected = base.slice(t) + model.e.slice(t);
            let got = double_noise.slice(t);
            assert!((got - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_std_does_not_perturb_loadings() {
        let mut c1 = cfg(Ranks::new(1, 1, 1, 1).unwrap(), 8);
        let mut c2 = c1.clone();
        c1.noise_std = 1.0;
        c2.noise_std = 4.0;
        let (_, m1) = simulate(&c1).unwrap();
        let (_, m2) = simulate(&c2).unwrap();
        assert_eq!(m1.r1, m2.r1);
        assert_eq!(m1.c1, m2.c1);
        assert_eq!(m1.r0, m2.r0);
        assert_eq!(m1.c0, m2.c0);
        assert_eq!(m1.f1, m2.f1);
    }

    #[test]
    fn loadings_seed_fixes_loadings_only() {
        let mut c1 = cfg(Ranks::new(1, 1, 1, 1).unwrap(), 100);
        c1.loadings_seed = Some(7);
        let mut c2 = c1.clone();
        c2.seed = 101;
        let (_, m1) = simulate(&c1).unwrap();
        let (_, m2) = simulate(&c2).unwrap();
        assert_eq!(m1.r1, m2.r1);
        assert_eq!(m1.c0, m2.c0);
        assert_ne!(m1.f1, m2.f1);
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(DgpConfig::new(0, 5, 10, Ranks::new(1, 1, 0, 0).unwrap(), 1).is_err());
        assert!(DgpConfig::new(5, 5, 0, Ranks::new(1, 1, 0, 0).unwrap(), 1).is_err());
    }

    #[test]
    fn difference_of_constant_panel_is_zero() {
        let m = DMatrix::from_element(2, 2, 3.5);
        let panel = MatrixPanel::new(vec![m.clone(), m.clone(), m]).unwrap();
        let d = difference_panel(&panel).unwrap();
        assert_eq!(d.len(), 2);
        for t in 0..2 {
            assert!(d.slice(t).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn difference_of_linear_panel_is_ones() {
        let slices: Vec<_> = (1..=4)
            .map(|t| DMatrix::from_element(2, 3, t as f64))
            .collect();
        let panel = MatrixPanel::new(slices).unwrap();
        let d = difference_panel(&panel).unwrap();
        for t in 0..3 {
            assert!(d.slice(t).iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn difference_matches_subtraction_oracle() {
        let c = cfg(Ranks::new(1, 1, 1, 1).unwrap(), 55);
        let (panel, _) = simulate(&c).unwrap();
        let d = difference_panel(&panel).unwrap();
        for t in 1..panel.len() {
            let expected = panel.slice(t) - panel.slice(t - 1);
            assert_eq!(d.slice(t - 1), &expected);
        }
    }

    #[test]
    fn difference_requires_two_slices() {
        let panel = MatrixPanel::new(vec![DMatrix::zeros(2, 2)]).unwrap();
        assert!(matches!(
            difference_panel(&panel),
            Err(Error::InvalidInput(_))
        ));
    }
}
