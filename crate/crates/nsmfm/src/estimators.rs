//! Estimation stages for the matrix factor model with common stochastic
//! trends: flattened benchmark estimators, the projection ("dagger")
//! variant, anti-projection estimation of the stationary structure,
//! projection refinement of the trend structure on filtered data, and a
//! second-round refinement of the stationary factors.
//!
//! The pipeline runs, in order:
//! 1. flattened eigenvector estimators of the trend loadings,
//! 2. anti-projection onto the orthogonal complement of those loadings to
//!    estimate the stationary loadings and factors,
//! 3. projection-based re-estimation of the trend structure on the data with
//!    the estimated stationary component removed,
//! 4. a second anti-projection round built from the refined trend loadings.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{
    loadings_from_spectrum, orth_projector_complement, sym_eig_desc, Loadings, Projector,
    Spectrum, SymmetricMatrix,
};
use crate::model::{FactorPath, MatrixPanel, Ranks};
use crate::util::pairwise_matrix_sum;

/// Output of the flattened (stage one) estimators.
#[derive(Debug, Clone)]
pub struct StageOneEstimate {
    pub r1_hat: Loadings,
    pub c1_hat: Loadings,
    pub spec_r: Spectrum,
    pub spec_c: Spectrum,
    pub f1_hat: FactorPath,
}

/// Output of an anti-projection round: stationary loadings, factors, and the
/// spectra of the anti-projected covariance matrices.
#[derive(Debug, Clone)]
pub struct StationaryEstimate {
    pub r0_hat: Loadings,
    pub c0_hat: Loadings,
    pub f0_hat: FactorPath,
    pub spec_r_perp: Spectrum,
    pub spec_c_perp: Spectrum,
}

/// Output of the projection refinement on filtered data.
#[derive(Debug, Clone)]
pub struct RefinedEstimate {
    pub r1_tilde: Loadings,
    pub c1_tilde: Loadings,
    pub f1_tilde: FactorPath,
    pub spec_r_diamond: Spectrum,
    pub spec_c_diamond: Spectrum,
}

/// All stage outputs of the estimation pipeline.
#[derive(Debug, Clone)]
pub struct EstimationOutput {
    pub stage1: StageOneEstimate,
    pub stationary: StationaryEstimate,
    pub refined: RefinedEstimate,
    pub second_round: StationaryEstimate,
    pub ranks_used: Ranks,
}

fn covariance_from_terms(mut terms: Vec<DMatrix<f64>>, norm: f64) -> Result<SymmetricMatrix> {
    let sum = pairwise_matrix_sum(&mut terms)
        .ok_or_else(|| Error::InvalidInput("empty panel".into()))?;
    SymmetricMatrix::new(sum * norm)
}

/// Flattened sample covariance matrices:
/// M_R1 = (p1 p2 T^2)^-1 sum X_t X_t'  and  M_C1 = (p1 p2 T^2)^-1 sum X_t' X_t.
/// Both are symmetric positive semi-definite and share the same trace.
pub fn flattened_covariances(panel: &MatrixPanel) -> Result<(SymmetricMatrix, SymmetricMatrix)> {
    let (p1, p2, t_len) = (panel.p1(), panel.p2(), panel.len());
    let norm = 1.0 / (p1 as f64 * p2 as f64 * (t_len as f64).powi(2));
    let row_terms: Vec<DMatrix<f64>> = panel.slices().iter().map(|x| x * x.transpose()).collect();
    let col_terms: Vec<DMatrix<f64>> = panel.slices().iter().map(|x| x.transpose() * x).collect();
    Ok((
        covariance_from_terms(row_terms, norm)?,
        covariance_from_terms(col_terms, norm)?,
    ))
}

/// Stage one: sqrt(p)-scaled top eigenvectors of the flattened covariances,
/// and the least-squares trend factor estimate
/// F1_t = (p1 p2)^-1 R1' X_t C1. With hR1 = 0 the loadings and factor path
/// are empty; the spectra are still computed.
pub fn stage_one(panel: &MatrixPanel, ranks: &Ranks) -> Result<StageOneEstimate> {
    ranks.validate_against(panel.p1(), panel.p2())?;
    let (m_r, m_c) = flattened_covariances(panel)?;
    let spec_r = sym_eig_desc(&m_r)?;
    let spec_c = sym_eig_desc(&m_c)?;
    let r1_hat = loadings_from_spectrum(&spec_r, ranks.h_r1, panel.p1())?;
    let c1_hat = loadings_from_spectrum(&spec_c, ranks.h_c1, panel.p2())?;
    let f1_hat = trend_factors(panel, &r1_hat, &c1_hat)?;
    Ok(StageOneEstimate {
        r1_hat,
        c1_hat,
        spec_r,
        spec_c,
        f1_hat,
    })
}

fn trend_factors(panel: &MatrixPanel, r: &Loadings, c: &Loadings) -> Result<FactorPath> {
    if r.is_empty() || c.is_empty() {
        return Ok(FactorPath::empty(panel.len()));
    }
    let norm = 1.0 / (panel.p1() as f64 * panel.p2() as f64);
    let slices = panel
        .slices()
        .iter()
        .map(|x| r.as_matrix().transpose() * x * c.as_matrix() * norm)
        .collect();
    FactorPath::new(r.h(), c.h(), slices)
}

/// Projection-based ("dagger") estimators of the trend loadings, built by
/// projecting the data onto the other side's stage-one loadings:
/// M_R1^dag = (p1 p2^2 T^2)^-1 sum X_t C1 C1' X_t', column analogue with the
/// roles of R and C swapped. Provided to replicate empirically that the
/// projection alone does not improve on the flattened estimator.
pub fn dagger_estimate(
    panel: &MatrixPanel,
    stage1: &StageOneEstimate,
    ranks: &Ranks,
) -> Result<StageOneEstimate> {
    ranks.validate_against(panel.p1(), panel.p2())?;
    let (p1, p2, t_len) = (panel.p1() as f64, panel.p2() as f64, panel.len() as f64);
    let c = stage1.c1_hat.as_matrix();
    let r = stage1.r1_hat.as_matrix();

    let row_terms: Vec<DMatrix<f64>> = panel
        .slices()
        .iter()
        .map(|x| {
            let xc = x * c;
            &xc * xc.transpose()
        })
        .collect();
    let col_terms: Vec<DMatrix<f64>> = panel
        .slices()
        .iter()
        .map(|x| {
            let xr = x.transpose() * r;
            &xr * xr.transpose()
        })
        .collect();
    let m_r = covariance_from_terms(row_terms, 1.0 / (p1 * p2 * p2 * t_len * t_len))?;
    let m_c = covariance_from_terms(col_terms, 1.0 / (p1 * p1 * p2 * t_len * t_len))?;

    let spec_r = sym_eig_desc(&m_r)?;
    let spec_c = sym_eig_desc(&m_c)?;
    let r1_dag = loadings_from_spectrum(&spec_r, ranks.h_r1, panel.p1())?;
    let c1_dag = loadings_from_spectrum(&spec_c, ranks.h_c1, panel.p2())?;
    let f1_dag = trend_factors(panel, &r1_dag, &c1_dag)?;
    Ok(StageOneEstimate {
        r1_hat: r1_dag,
        c1_hat: c1_dag,
        spec_r,
        spec_c,
        f1_hat: f1_dag,
    })
}

/// Anti-projected covariance matrices
/// M_{R1,perp} = (p1 p2^2 T)^-1 sum (X_t C_perp)(X_t C_perp)'  and
/// M_{C1,perp} = (p1^2 p2 T)^-1 sum (X_t' R_perp)(X_t' R_perp)',
/// where the projectors annihilate the given trend loadings. With empty
/// trend loadings the projectors are identities.
pub fn antiprojected_covariances(
    panel: &MatrixPanel,
    r1: &Loadings,
    c1: &Loadings,
) -> Result<(SymmetricMatrix, SymmetricMatrix)> {
    let c_perp = orth_projector_complement(c1)?;
    let r_perp = orth_projector_complement(r1)?;
    antiprojected_covariances_with(panel, &r_perp, &c_perp)
}

pub(crate) fn antiprojected_covariances_with(
    panel: &MatrixPanel,
    r_perp: &Projector,
    c_perp: &Projector,
) -> Result<(SymmetricMatrix, SymmetricMatrix)> {
    let (p1, p2, t_len) = (panel.p1() as f64, panel.p2() as f64, panel.len() as f64);
    let row_terms: Vec<DMatrix<f64>> = panel
        .slices()
        .iter()
        .map(|x| {
            let xc = x * c_perp.as_matrix();
            &xc * xc.transpose()
        })
        .collect();
    let col_terms: Vec<DMatrix<f64>> = panel
        .slices()
        .iter()
        .map(|x| {
            let xr = x.transpose() * r_perp.as_matrix();
            &xr * xr.transpose()
        })
        .collect();
    Ok((
        covariance_from_terms(row_terms, 1.0 / (p1 * p2 * p2 * t_len))?,
        covariance_from_terms(col_terms, 1.0 / (p1 * p1 * p2 * t_len))?,
    ))
}

/// Exact least-squares factor path for the model X_t ~ B_r F_t B_c' with
/// projected regressors A_r = P_r B_r and A_c = P_c B_c: solves the two
/// small Gram systems
/// F_t = (A_r' A_r)^-1 A_r' X_t A_c (A_c' A_c)^-1
/// without ever materializing the Kronecker regressor. A singular Gram block
/// signals that anti-projection annihilated the stationary loadings too; in
/// that case the data must also be exactly zero for a (zero) solution to be
/// returned.
pub(crate) fn antiprojected_factor_path(
    panel: &MatrixPanel,
    a_r: &DMatrix<f64>,
    a_c: &DMatrix<f64>,
    stage: &'static str,
) -> Result<FactorPath> {
    let (h_r, h_c) = (a_r.ncols(), a_c.ncols());
    if h_r == 0 || h_c == 0 {
        return Ok(FactorPath::empty(panel.len()));
    }
    let gram_r = SymmetricMatrix::new(a_r.transpose() * a_r)?;
    let gram_c = SymmetricMatrix::new(a_c.transpose() * a_c)?;
    let inv_r = invert_gram(&gram_r);
    let inv_c = invert_gram(&gram_c);

    let mid: Vec<DMatrix<f64>> = panel
        .slices()
        .iter()
        .map(|x| a_r.transpose() * x * a_c)
        .collect();

    match (inv_r, inv_c) {
        (Some(ir), Some(ic)) => {
            let slices = mid.iter().map(|m| &ir * m * &ic).collect();
            FactorPath::new(h_r, h_c, slices)
        }
        _ => {
            // Degenerate anti-projection. A zero right-hand side still has the
            // all-zero path as its minimum-norm least-squares solution.
            if mid.iter().all(|m| m.iter().all(|&v| v == 0.0)) {
                FactorPath::new(h_r, h_c, vec![DMatrix::zeros(h_r, h_c); panel.len()])
            } else {
                Err(Error::DegenerateAntiProjection {
                    stage,
                    detail: "projected loadings Gram block is singular".into(),
                })
            }
        }
    }
}

/// Symmetric inverse via the eigendecomposition; None when singular.
fn invert_gram(gram: &SymmetricMatrix) -> Option<DMatrix<f64>> {
    let spec = sym_eig_desc(gram).ok()?;
    let n = gram.dim();
    let lam_max = spec.eigenvalue(0);
    let lam_min = spec.eigenvalue(n - 1);
    if lam_max <= 0.0 || lam_min <= lam_max * 1e-12 {
        return None;
    }
    let v = spec.eigenvectors();
    let mut scaled = v.clone();
    for j in 0..n {
        let inv = 1.0 / spec.eigenvalue(j);
        for i in 0..n {
            scaled[(i, j)] *= inv;
        }
    }
    Some(&scaled * v.transpose())
}

/// First anti-projection round: estimates the stationary loadings from the
/// anti-projected covariances and the stationary factors by exact least
/// squares on the anti-projected data.
pub fn antiproject_stationary(
    panel: &MatrixPanel,
    stage1: &StageOneEstimate,
    ranks: &Ranks,
) -> Result<StationaryEstimate> {
    ranks.validate_against(panel.p1(), panel.p2())?;
    let c_perp = orth_projector_complement(&stage1.c1_hat)?;
    let r_perp = orth_projector_complement(&stage1.r1_hat)?;
    let (m_r_perp, m_c_perp) = antiprojected_covariances_with(panel, &r_perp, &c_perp)?;
    let spec_r_perp = sym_eig_desc(&m_r_perp)?;
    let spec_c_perp = sym_eig_desc(&m_c_perp)?;
    let r0_hat = loadings_from_spectrum(&spec_r_perp, ranks.h_r0, panel.p1())?;
    let c0_hat = loadings_from_spectrum(&spec_c_perp, ranks.h_c0, panel.p2())?;

    let f0_hat = if ranks.has_stationary() {
        let a_r = r_perp.as_matrix() * r0_hat.as_matrix();
        let a_c = c_perp.as_matrix() * c0_hat.as_matrix();
        antiprojected_factor_path(panel, &a_r, &a_c, "antiproject_stationary")?
    } else {
        FactorPath::empty(panel.len())
    };

    Ok(StationaryEstimate {
        r0_hat,
        c0_hat,
        f0_hat,
        spec_r_perp,
        spec_c_perp,
    })
}

/// Data with the estimated stationary common component removed:
/// X_t - R0 F0_t C0'. With an absent stationary block this is the data
/// itself.
pub fn filtered_panel(panel: &MatrixPanel, stationary: &StationaryEstimate) -> Result<MatrixPanel> {
    if stationary.f0_hat.is_absent() {
        return Ok(panel.clone());
    }
    let r0 = stationary.r0_hat.as_matrix();
    let c0t = stationary.c0_hat.as_matrix().transpose();
    let slices = panel
        .slices()
        .iter()
        .enumerate()
        .map(|(t, x)| x - r0 * stationary.f0_hat.slice(t) * &c0t)
        .collect();
    MatrixPanel::new(slices)
}

/// Projected covariance matrices of the filtered data:
/// M_R1^diamond = (p1 p2^2 T^2)^-1 sum (X_t^f C1)(X_t^f C1)'  and the column
/// analogue with normalization (p1^2 p2 T^2)^-1, using the stage-one trend
/// loadings as projection targets.
pub fn filtered_covariances(
    panel: &MatrixPanel,
    stage1: &StageOneEstimate,
    stationary: &StationaryEstimate,
) -> Result<(SymmetricMatrix, SymmetricMatrix)> {
    filtered_covariances_with(panel, &stage1.r1_hat, &stage1.c1_hat, stationary)
}

pub(crate) fn filtered_covariances_with(
    panel: &MatrixPanel,
    r1: &Loadings,
    c1: &Loadings,
    stationary: &StationaryEstimate,
) -> Result<(SymmetricMatrix, SymmetricMatrix)> {
    let filtered = filtered_panel(panel, stationary)?;
    let (p1, p2, t_len) = (panel.p1() as f64, panel.p2() as f64, panel.len() as f64);
    let c = c1.as_matrix();
    let r = r1.as_matrix();

    let row_terms: Vec<DMatrix<f64>> = filtered
        .slices()
        .iter()
        .map(|x| {
            let xc = x * c;
            &xc * xc.transpose()
        })
        .collect();
    let col_terms: Vec<DMatrix<f64>> = filtered
        .slices()
        .iter()
        .map(|x| {
            let xr = x.transpose() * r;
            &xr * xr.transpose()
        })
        .collect();
    Ok((
        covariance_from_terms(row_terms, 1.0 / (p1 * p2 * p2 * t_len * t_len))?,
        covariance_from_terms(col_terms, 1.0 / (p1 * p1 * p2 * t_len * t_len))?,
    ))
}

/// Projection refinement of the trend structure on the filtered data, with
/// F1_t re-estimated as (p1 p2)^-1 R1~' X_t^f C1~.
pub fn filtered_projection(
    panel: &MatrixPanel,
    stage1: &StageOneEstimate,
    stationary: &StationaryEstimate,
    ranks: &Ranks,
) -> Result<RefinedEstimate> {
    ranks.validate_against(panel.p1(), panel.p2())?;
    let (m_r_d, m_c_d) = filtered_covariances(panel, stage1, stationary)?;
    let spec_r_diamond = sym_eig_desc(&m_r_d)?;
    let spec_c_diamond = sym_eig_desc(&m_c_d)?;
    let r1_tilde = loadings_from_spectrum(&spec_r_diamond, ranks.h_r1, panel.p1())?;
    let c1_tilde = loadings_from_spectrum(&spec_c_diamond, ranks.h_c1, panel.p2())?;
    let filtered = filtered_panel(panel, stationary)?;
    let f1_tilde = trend_factors(&filtered, &r1_tilde, &c1_tilde)?;
    Ok(RefinedEstimate {
        r1_tilde,
        c1_tilde,
        f1_tilde,
        spec_r_diamond,
        spec_c_diamond,
    })
}

/// Second anti-projection round: rebuilds the orthogonal-complement
/// projectors from the refined trend loadings, re-estimates the stationary
/// loadings from the resulting covariances, and re-estimates F0_t with the
/// refined projectors while keeping the first-round stationary loadings in
/// the least-squares system.
pub fn second_round_stationary(
    panel: &MatrixPanel,
    refined: &RefinedEstimate,
    stationary: &StationaryEstimate,
    ranks: &Ranks,
) -> Result<StationaryEstimate> {
    ranks.validate_against(panel.p1(), panel.p2())?;
    let c_perp = orth_projector_complement(&refined.c1_tilde)?;
    let r_perp = orth_projector_complement(&refined.r1_tilde)?;
    let (m_r_perp, m_c_perp) = antiprojected_covariances_with(panel, &r_perp, &c_perp)?;
    let spec_r_perp = sym_eig_desc(&m_r_perp)?;
    let spec_c_perp = sym_eig_desc(&m_c_perp)?;
    let r0_tilde = loadings_from_spectrum(&spec_r_perp, ranks.h_r0, panel.p1())?;
    let c0_tilde = loadings_from_spectrum(&spec_c_perp, ranks.h_c0, panel.p2())?;

    // F0 reuses the first-round loadings; only the projectors are refined.
    let f0_tilde = if ranks.has_stationary() {
        let a_r = r_perp.as_matrix() * stationary.r0_hat.as_matrix();
        let a_c = c_perp.as_matrix() * stationary.c0_hat.as_matrix();
        antiprojected_factor_path(panel, &a_r, &a_c, "second_round_stationary")?
    } else {
        FactorPath::empty(panel.len())
    };

    Ok(StationaryEstimate {
        r0_hat: r0_tilde,
        c0_hat: c0_tilde,
        f0_hat: f0_tilde,
        spec_r_perp,
        spec_c_perp,
    })
}

/// Run the full three-step pipeline with known ranks.
pub fn estimate_pipeline(panel: &MatrixPanel, ranks: &Ranks) -> Result<EstimationOutput> {
    let stage1 = stage_one(panel, ranks).map_err(|e| e.in_stage("stage_one"))?;
    let stationary = antiproject_stationary(panel, &stage1, ranks)
        .map_err(|e| e.in_stage("antiproject_stationary"))?;
    let refined = filtered_projection(panel, &stage1, &stationary, ranks)
        .map_err(|e| e.in_stage("filtered_projection"))?;
    let second_round = second_round_stationary(panel, &refined, &stationary, ranks)
        .map_err(|e| e.in_stage("second_round_stationary"))?;
    Ok(EstimationOutput {
        stage1,
        stationary,
        refined,
        second_round,
        ranks_used: *ranks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthonormalize, subspace_distance, subspace_distance_loadings};
    use crate::model::{assemble_panel, simulate, DgpConfig, TrueModel};
    use nalgebra::DVector;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Noiseless model whose trend and stationary loadings have mutually
    /// orthogonal column spaces.
    fn orthogonal_blocks_model(
        p1: usize,
        p2: usize,
        t_len: usize,
        h1: usize,
        h0: usize,
        seed: u64,
    ) -> (MatrixPanel, TrueModel) {
        let mut rng = StdRng::seed_from_u64(seed);
        let qr = orthonormalize(&random_matrix(&mut rng, p1, h1 + h0)).unwrap();
        let qc = orthonormalize(&random_matrix(&mut rng, p2, h1 + h0)).unwrap();
        let r1 = Loadings::new(qr.columns(0, h1).into_owned() * 2.0).unwrap();
        let r0 = Loadings::new(qr.columns(h1, h0).into_owned() * 1.5).unwrap();
        let c1 = Loadings::new(qc.columns(0, h1).into_owned() * 2.5).unwrap();
        let c0 = Loadings::new(qc.columns(h1, h0).into_owned() * 1.2).unwrap();

        let mut level = DMatrix::zeros(h1, h1);
        let mut f1 = Vec::new();
        let mut f0 = Vec::new();
        for _ in 0..t_len {
            level += random_matrix(&mut rng, h1, h1);
            f1.push(level.clone());
            f0.push(random_matrix(&mut rng, h0, h0));
        }
        let model = TrueModel {
            r1,
            c1,
            r0,
            c0,
            f1: FactorPath::new(h1, h1, f1).unwrap(),
            f0: FactorPath::new(h0, h0, f0).unwrap(),
            e: MatrixPanel::new(vec![DMatrix::zeros(p1, p2); t_len]).unwrap(),
        };
        let panel = assemble_panel(&model).unwrap();
        (panel, model)
    }

    #[test]
    fn flattened_zero_panel() {
        let panel = MatrixPanel::new(vec![DMatrix::zeros(3, 2); 4]).unwrap();
        let (m_r, m_c) = flattened_covariances(&panel).unwrap();
        assert!(m_r.as_matrix().iter().all(|&v| v == 0.0));
        assert!(m_c.as_matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flattened_single_entry_hand_value() {
        // p1 = p2 = 1, X_t = t for t = 1, 2: M = (1 + 4) / (1*1*4) = 1.25.
        let panel = MatrixPanel::new(vec![
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 2.0),
        ])
        .unwrap();
        let (m_r, m_c) = flattened_covariances(&panel).unwrap();
        assert!((m_r.as_matrix()[(0, 0)] - 1.25).abs() < 1e-15);
        assert!((m_c.as_matrix()[(0, 0)] - 1.25).abs() < 1e-15);
    }

    #[test]
    fn flattened_matches_triple_loop_oracle() {
        let mut rng = StdRng::seed_from_u64(12);
        let slices: Vec<DMatrix<f64>> = (0..5).map(|_| random_matrix(&mut rng, 3, 2)).collect();
        let panel = MatrixPanel::new(slices.clone()).unwrap();
        let (m_r, _) = flattened_covariances(&panel).unwrap();

        let norm = 1.0 / (3.0 * 2.0 * 25.0);
        let mut oracle = DMatrix::zeros(3, 3);
        for x in &slices {
            for i in 0..3 {
                for k in 0..3 {
                    for j in 0..2 {
                        oracle[(i, k)] += x[(i, j)] * x[(k, j)] * norm;
                    }
                }
            }
        }
        assert!((m_r.as_matrix() - oracle).norm() < 1e-12);
    }

    #[test]
    fn flattened_traces_agree() {
        let cfg = DgpConfig::new(5, 4, 20, Ranks::new(1, 1, 1, 1).unwrap(), 3).unwrap();
        let (panel, _) = simulate(&cfg).unwrap();
        let (m_r, m_c) = flattened_covariances(&panel).unwrap();
        assert!((m_r.trace() - m_c.trace()).abs() < 1e-12);
    }

    #[test]
    fn stage_one_noiseless_rank_one_recovery() {
        let mut cfg = DgpConfig::new(6, 5, 40, Ranks::new(1, 1, 0, 0).unwrap(), 2).unwrap();
        cfg.noise_std = 0.0;
        let (panel, model) = simulate(&cfg).unwrap();
        let est = stage_one(&panel, &cfg.ranks).unwrap();
        assert!(subspace_distance_loadings(&est.r1_hat, &model.r1).unwrap() <= 1e-8);
        assert!(subspace_distance_loadings(&est.c1_hat, &model.c1).unwrap() <= 1e-8);
        assert!(est.r1_hat.normalization_error() <= 1e-8);
    }

    #[test]
    fn stage_one_empty_trend_block() {
        let cfg = DgpConfig::new(4, 4, 10, Ranks::new(0, 0, 1, 1).unwrap(), 9).unwrap();
        let (panel, _) = simulate(&cfg).unwrap();
        let est = stage_one(&panel, &cfg.ranks).unwrap();
        assert!(est.r1_hat.is_empty());
        assert!(est.f1_hat.is_absent());
        assert_eq!(est.spec_r.dim(), 4);
    }

    #[test]
    fn dagger_noiseless_recovery_and_normalization() {
        let mut cfg = DgpConfig::new(6, 5, 40, Ranks::new(1, 1, 0, 0).unwrap(), 4).unwrap();
        cfg.noise_std = 0.0;
        let (panel, model) = simulate(&cfg).unwrap();
        let s1 = stage_one(&panel, &cfg.ranks).unwrap();
        let dag = dagger_estimate(&panel, &s1, &cfg.ranks).unwrap();
        assert!(subspace_distance_loadings(&dag.r1_hat, &model.r1).unwrap() <= 1e-8);
        assert!(dag.r1_hat.normalization_error() <= 1e-8);
        assert!(dag.c1_hat.normalization_error() <= 1e-8);
    }

    #[test]
    fn antiprojection_no_trend_reduces_to_flattened_stationary() {
        // Without a trend block the projectors are identities, so the
        // stationary estimator must match the plain eigenvector estimator of
        // the pure-I(0) model (the covariances differ only by normalization).
        let cfg = DgpConfig::new(6, 5, 30, Ranks::new(0, 0, 1, 1).unwrap(), 13).unwrap();
        let (panel, _) = simulate(&cfg).unwrap();
        let s1 = stage_one(&panel, &cfg.ranks).unwrap();
        let st = antiproject_stationary(&panel, &s1, &cfg.ranks).unwrap();

        let (m_r, _) = flattened_covariances(&panel).unwrap();
        let spec = sym_eig_desc(&m_r).unwrap();
        let flat = loadings_from_spectrum(&spec, 1, 6).unwrap();
        assert!(subspace_distance_loadings(&st.r0_hat, &flat).unwrap() <= 1e-10);
    }

    #[test]
    fn antiprojection_orthogonal_blocks_exact() {
        let (panel, model) = orthogonal_blocks_model(8, 6, 60, 1, 1, 31);
        let ranks = Ranks::new(1, 1, 1, 1).unwrap();
        let s1 = stage_one(&panel, &ranks).unwrap();
        let st = antiproject_stationary(&panel, &s1, &ranks).unwrap();
        assert!(subspace_distance_loadings(&st.r0_hat, &model.r0).unwrap() <= 1e-8);
        assert!(subspace_distance_loadings(&st.c0_hat, &model.c0).unwrap() <= 1e-8);
    }

    /// Brute-force least squares of vec(X_anti) on the Kronecker regressor.
    fn kron_ls_oracle(
        panel: &MatrixPanel,
        a_r: &DMatrix<f64>,
        a_c: &DMatrix<f64>,
        r_perp: &DMatrix<f64>,
        c_perp: &DMatrix<f64>,
    ) -> Vec<DVector<f64>> {
        let k = a_c.kronecker(a_r);
        let ktk = k.transpose() * &k;
        let inv = ktk.try_inverse().unwrap();
        panel
            .slices()
            .iter()
            .map(|x| {
                let anti = r_perp * x * c_perp;
                let vec_x = DVector::from_column_slice(anti.as_slice());
                &inv * (k.transpose() * vec_x)
            })
            .collect()
    }

    #[test]
    fn stationary_factors_match_normal_equations_oracle() {
        let cfg = DgpConfig::new(4, 3, 12, Ranks::new(1, 1, 1, 1).unwrap(), 77).unwrap();
        let (panel, _) = simulate(&cfg).unwrap();
        let ranks = cfg.ranks;
        let s1 = stage_one(&panel, &ranks).unwrap();
        let st = antiproject_stationary(&panel, &s1, &ranks).unwrap();

        let c_perp = orth_projector_complement(&s1.c1_hat).unwrap();
        let r_perp = orth_projector_complement(&s1.r1_hat).unwrap();
        let a_r = r_perp.as_matrix() * st.r0_hat.as_matrix();
        let a_c = c_perp.as_matrix() * st.c0_hat.as_matrix();
        let oracle = kron_ls_oracle(&panel, &a_r, &a_c, r_perp.as_matrix(), c_perp.as_matrix());

        for (t, want) in oracle.iter().enumerate() {
            let got = DVector::from_column_slice(st.f0_hat.slice(t).as_slice());
            assert!((got - want).norm() <= 1e-8);
        }
    }

    #[test]
    fn second_round_factors_match_oracle() {
        let cfg = DgpConfig::new(4, 3, 12, Ranks::new(1, 1, 1, 1).unwrap(), 78).unwrap();
        let (panel, _) = simulate(&cfg).unwrap();
        let out = estimate_pipeline(&panel, &cfg.ranks).unwrap();

        let c_perp = orth_projector_complement(&out.refined.c1_tilde).unwrap();
        let r_perp = orth_projector_complement(&out.refined.r1_tilde).unwrap();
        let a_r = r_perp.as_matrix() * out.stationary.r0_hat.as_matrix();
        let a_c = c_perp.as_matrix() * out.stationary.c0_hat.as_matrix();
        let oracle = kron_ls_oracle(&panel, &a_r, &a_c, r_perp.as_matrix(), c_perp.as_matrix());

        for (t, want) in oracle.iter().enumerate() {
            let got = DVector::from_column_slice(out.second_round.f0_hat.slice(t).as_slice());
            assert!((got - want).norm() <= 1e-8);
        }
    }

    #[test]
    fn filtered_projection_equals_dagger_when_no_stationary_block() {
        let ranks = Ranks::new(1, 1, 0, 0).unwrap();
        let cfg = DgpConfig::new(6, 5, 30, ranks, 41).unwrap();
        let (panel, _) = simulate(&cfg).unwrap();
        let s1 = stage_one(&panel, &ranks).unwrap();
        let st = antiproject_stationary(&panel, &s1, &ranks).unwrap();
        let refined = filtered_projection(&panel, &s1, &st, &ranks).unwrap();
        let dag = dagger_estimate(&panel, &s1, &ranks).unwrap();
        assert!(
            subspace_distance_loadings(&refined.r1_tilde, &dag.r1_hat).unwrap() <= 1e-6,
            "filtering an absent block must not move the projected estimator"
        );
        assert!(refined.r1_tilde.normalization_error() <= 1e-8);
    }

    #[test]
    fn second_round_zero_panel_gives_zero_paths() {
        let panel = MatrixPanel::new(vec![DMatrix::zeros(4, 3); 8]).unwrap();
        let ranks = Ranks::new(1, 1, 1, 1).unwrap();
        let out = estimate_pipeline(&panel, &ranks).unwrap();
        for t in 0..panel.len() {
            assert!(out.stationary.f0_hat.slice(t).iter().all(|&v| v == 0.0));
            assert!(out.second_round.f0_hat.slice(t).iter().all(|&v| v == 0.0));
            assert!(out.stage1.f1_hat.slice(t).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn pipeline_noiseless_orthogonal_recovers_all_subspaces() {
        let (panel, model) = orthogonal_blocks_model(8, 6, 80, 1, 1, 5);
        let ranks = Ranks::new(1, 1, 1, 1).unwrap();
        let out = estimate_pipeline(&panel, &ranks).unwrap();
        assert!(subspace_distance_loadings(&out.stage1.r1_hat, &model.r1).unwrap() <= 1e-8);
        assert!(subspace_distance_loadings(&out.stage1.c1_hat, &model.c1).unwrap() <= 1e-8);
        assert!(subspace_distance_loadings(&out.stationary.r0_hat, &model.r0).unwrap() <= 1e-8);
        assert!(subspace_distance_loadings(&out.stationary.c0_hat, &model.c0).unwrap() <= 1e-8);
        assert!(subspace_distance_loadings(&out.refined.r1_tilde, &model.r1).unwrap() <= 1e-8);
        assert!(subspace_distance_loadings(&out.refined.c1_tilde, &model.c1).unwrap() <= 1e-8);
        assert!(subspace_distance_loadings(&out.second_round.r0_hat, &model.r0).unwrap() <= 1e-8);
        assert!(subspace_distance_loadings(&out.second_round.c0_hat, &model.c0).unwrap() <= 1e-8);
    }

    #[test]
    fn pipeline_stationary_only_ranks() {
        let cfg = DgpConfig::new(5, 4, 20, Ranks::new(0, 0, 1, 1).unwrap(), 6).unwrap();
        let (panel, _) = simulate(&cfg).unwrap();
        let out = estimate_pipeline(&panel, &cfg.ranks).unwrap();
        assert!(out.stage1.r1_hat.is_empty());
        assert!(out.refined.r1_tilde.is_empty());
        assert_eq!(out.stationary.r0_hat.h(), 1);
        assert_eq!(out.second_round.c0_hat.h(), 1);
    }

    #[test]
    fn pipeline_deterministic() {
        let cfg = DgpConfig::new(5, 4, 25, Ranks::new(1, 1, 1, 1).unwrap(), 314).unwrap();
        let (panel, _) = simulate(&cfg).unwrap();
        let a = estimate_pipeline(&panel, &cfg.ranks).unwrap();
        let b = estimate_pipeline(&panel, &cfg.ranks).unwrap();
        assert_eq!(a.stage1.r1_hat, b.stage1.r1_hat);
        assert_eq!(a.refined.c1_tilde, b.refined.c1_tilde);
        assert_eq!(a.second_round.f0_hat, b.second_round.f0_hat);
    }

    #[test]
    fn covariances_are_psd() {
        let cfg = DgpConfig::new(6, 5, 25, Ranks::new(1, 1, 1, 1).unwrap(), 23).unwrap();
        let (panel, _) = simulate(&cfg).unwrap();
        let ranks = cfg.ranks;
        let s1 = stage_one(&panel, &ranks).unwrap();
        let (m_r, m_c) = flattened_covariances(&panel).unwrap();
        let (m_rp, m_cp) = antiprojected_covariances(&panel, &s1.r1_hat, &s1.c1_hat).unwrap();
        for m in [&m_r, &m_c, &m_rp, &m_cp] {
            let spec = sym_eig_desc(m).unwrap();
            let lam_min = spec.eigenvalue(spec.dim() - 1);
            let lam_max = spec.eigenvalue(0);
            assert!(lam_min >= -1e-10 * lam_max.max(1e-300));
        }
    }

    #[test]
    fn scale_equivariance() {
        let cfg = DgpConfig::new(5, 4, 30, Ranks::new(1, 1, 1, 1).unwrap(), 61).unwrap();
        let (panel, _) = simulate(&cfg).unwrap();
        let kappa = 3.7;
        let scaled = panel.scale(kappa);
        let a = estimate_pipeline(&panel, &cfg.ranks).unwrap();
        let b = estimate_pipeline(&scaled, &cfg.ranks).unwrap();
        assert!(subspace_distance_loadings(&a.stage1.r1_hat, &b.stage1.r1_hat).unwrap() <= 1e-8);
        assert!(
            subspace_distance_loadings(&a.refined.c1_tilde, &b.refined.c1_tilde).unwrap() <= 1e-8
        );
        assert!(
            subspace_distance_loadings(&a.second_round.r0_hat, &b.second_round.r0_hat).unwrap()
                <= 1e-8
        );
        for t in 0..panel.len() {
            let want = a.stage1.f1_hat.slice(t) * kappa;
            assert!((b.stage1.f1_hat.slice(t) - &want).norm() <= 1e-8 * (1.0 + want.norm()));
            let want0 = a.stationary.f0_hat.slice(t) * kappa;
            assert!((b.stationary.f0_hat.slice(t) - &want0).norm() <= 1e-8 * (1.0 + want0.norm()));
        }
    }

    #[test]
    fn rotation_invariance_of_estimated_subspaces() {
        // Re-parametrizing the DGP by invertible G_R, G_C (absorbed into the
        // factors) leaves the panel, hence every estimated subspace, unchanged.
        let cfg = DgpConfig::new(5, 4, 25, Ranks::new(2, 2, 1, 1).unwrap(), 88).unwrap();
        let (_, model) = simulate(&cfg).unwrap();
        let mut rng = StdRng::seed_from_u64(1);
        let g_r = random_matrix(&mut rng, 2, 2) + DMatrix::identity(2, 2) * 2.0;
        let g_c = random_matrix(&mut rng, 2, 2) + DMatrix::identity(2, 2) * 2.0;
        let g_r_inv = g_r.clone().try_inverse().unwrap();
        let g_c_inv = g_c.clone().try_inverse().unwrap();

        let rotated = TrueModel {
            r1: Loadings::new(model.r1.as_matrix() * &g_r).unwrap(),
            c1: Loadings::new(model.c1.as_matrix() * &g_c).unwrap(),
            f1: FactorPath::new(
                2,
                2,
                model
                    .f1
                    .slices()
                    .iter()
                    .map(|f| &g_r_inv * f * g_c_inv.transpose())
                    .collect(),
            )
            .unwrap(),
            ..model.clone()
        };
        let panel_a = assemble_panel(&model).unwrap();
        let panel_b = assemble_panel(&rotated).unwrap();
        let a = estimate_pipeline(&panel_a, &cfg.ranks).unwrap();
        let b = estimate_pipeline(&panel_b, &cfg.ranks).unwrap();
        assert!(subspace_distance_loadings(&a.stage1.r1_hat, &b.stage1.r1_hat).unwrap() <= 1e-8);
        assert!(
            subspace_distance_loadings(&a.refined.r1_tilde, &b.refined.r1_tilde).unwrap() <= 1e-8
        );
        assert!(
            subspace_distance_loadings(&a.stationary.r0_hat, &b.stationary.r0_hat).unwrap() <= 1e-8
        );
    }

    #[test]
    fn normalization_holds_on_noisy_data_for_all_stages() {
        let cfg = DgpConfig::new(7, 6, 40, Ranks::new(1, 1, 1, 1).unwrap(), 19).unwrap();
        let (panel, _) = simulate(&cfg).unwrap();
        let out = estimate_pipeline(&panel, &cfg.ranks).unwrap();
        for l in [
            &out.stage1.r1_hat,
            &out.stage1.c1_hat,
            &out.stationary.r0_hat,
            &out.stationary.c0_hat,
            &out.refined.r1_tilde,
            &out.refined.c1_tilde,
            &out.second_round.r0_hat,
            &out.second_round.c0_hat,
        ] {
            assert!(l.normalization_error() <= 1e-8);
        }
    }

    #[test]
    fn subspace_distance_rejects_empty_blocks() {
        let a = DMatrix::<f64>::zeros(4, 0);
        let b = DMatrix::<f64>::from_element(4, 1, 1.0);
        assert!(subspace_distance(&a, &b).is_err());
    }
}
