//! Dense symmetric eigendecomposition, orthogonal projectors, loading
//! normalization and the subspace distance metric.
//!
//! Everything here is deterministic: the eigensolver output is sorted with
//! eigenvalues non-increasing, ties keep solver order, and each eigenvector
//! is sign-fixed so that its entry of largest absolute value is positive
//! (lowest index wins on ties). Loadings produced by the estimators carry
//! the normalization (1/p) L'L = I.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for structural identities (symmetry, idempotency).
pub const STRUCT_TOL: f64 = 1e-10;
/// Relative tolerance for residual-type checks (eigen residuals, normalization).
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Condition number above which a Gram matrix is treated as singular.
pub const GRAM_COND_LIMIT: f64 = 1e12;

const EIG_MAX_ITER: usize = 100_000;

/// Dense real symmetric matrix. Construction symmetrizes via (S + S')/2 and
/// rejects non-finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    mat: DMatrix<f64>,
}

impl SymmetricMatrix {
    pub fn new(raw: DMatrix<f64>) -> Result<Self> {
        if raw.nrows() != raw.ncols() {
            return Err(Error::ShapeError(format!(
                "symmetric matrix must be square, got {}x{}",
                raw.nrows(),
                raw.ncols()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "symmetric matrix has non-finite entries".into(),
            ));
        }
        let sym = (&raw + raw.transpose()) * 0.5;
        Ok(SymmetricMatrix { mat: sym })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    /// Mean eigenvalue, trace / dim. Zero for the empty matrix.
    pub fn mean_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            0.0
        } else {
            self.trace() / self.dim() as f64
        }
    }
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues non-increasing,
/// eigenvector columns orthonormal and aligned with the eigenvalues.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// j-th eigenvalue (0-indexed, descending order).
    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.eigenvalues[j]
    }
}

/// A p x h loadings matrix. Estimators return loadings scaled so that
/// (1/p) L'L = I_h.
#[derive(Debug, Clone, PartialEq)]
pub struct Loadings {
    p: usize,
    h: usize,
    mat: DMatrix<f64>,
}

impl Loadings {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("loadings have non-finite entries".into()));
        }
        let (p, h) = (mat.nrows(), mat.ncols());
        if h > p {
            return Err(Error::ShapeError(format!(
                "loadings must have h <= p, got p={p}, h={h}"
            )));
        }
        Ok(Loadings { p, h, mat })
    }

    /// An empty loadings block (h = 0) for an absent factor structure.
    pub fn empty(p: usize) -> Self {
        Loadings {
            p,
            h: 0,
            mat: DMatrix::zeros(p, 0),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn is_empty(&self) -> bool {
        self.h == 0
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// Max deviation of (1/p) L'L from the identity.
    pub fn normalization_error(&self) -> f64 {
        if self.h == 0 {
            return 0.0;
        }
        let gram = self.mat.transpose() * &self.mat / self.p as f64;
        let mut err: f64 = 0.0;
        for i in 0..self.h {
            for j in 0..self.h {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((gram[(i, j)] - target).abs());
            }
        }
        err
    }
}

/// Orthogonal projector onto the complement of a loadings column space:
/// symmetric, idempotent, annihilates the loadings it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    mat: DMatrix<f64>,
}

impl Projector {
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn identity(dim: usize) -> Self {
        Projector {
            mat: DMatrix::identity(dim, dim),
        }
    }

    pub fn symmetry_error(&self) -> f64 {
        (&self.mat - self.mat.transpose()).norm()
    }

    pub fn idempotency_error(&self) -> f64 {
        (&self.mat * &self.mat - &self.mat).norm()
    }
}

/// Full symmetric eigendecomposition, eigenvalues sorted non-increasing.
///
/// Sign convention: each eigenvector's entry of largest absolute value is
/// made positive, ties broken by lowest index, so identical inputs produce
/// identical output.
pub fn sym_eig_desc(s: &SymmetricMatrix) -> Result<Spectrum> {
    let n = s.dim();
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = s
        .mat
        .clone()
        .try_symmetric_eigen(f64::EPSILON, EIG_MAX_ITER)
        .ok_or(Error::NumericalFailure {
            iterations: EIG_MAX_ITER,
        })?;

    // Stable sort keeps the solver's order on exact ties.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });

    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let col = eig.eigenvectors.column(src);
        let mut best = 0;
        for i in 1..n {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        let flip = if col[best] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, dst)] = flip * col[i];
        }
    }
    Ok(Spectrum {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// Top-k eigenvectors of `s`, each scaled by sqrt(p), so the result satisfies
/// (1/p) L'L = I_k. `p` is the normalization constant (the panel dimension).
pub fn top_k_loadings(s: &SymmetricMatrix, k: usize, p: usize) -> Result<Loadings> {
    if k > s.dim() {
        return Err(Error::RankTooLarge {
            requested: k,
            limit: s.dim(),
        });
    }
    if k == 0 {
        return Ok(Loadings::empty(s.dim()));
    }
    let spec = sym_eig_desc(s)?;
    let scale = (p as f64).sqrt();
    let mat = spec.eigenvectors.columns(0, k).into_owned() * scale;
    Loadings::new(mat)
}

/// Loadings restricted to the top-k columns of an already computed spectrum.
pub(crate) fn loadings_from_spectrum(spec: &Spectrum, k: usize, p: usize) -> Result<Loadings> {
    if k > spec.dim() {
        return Err(Error::RankTooLarge {
            requested: k,
            limit: spec.dim(),
        });
    }
    if k == 0 {
        return Ok(Loadings::empty(spec.dim()));
    }
    let scale = (p as f64).sqrt();
    Loadings::new(spec.eigenvectors.columns(0, k).into_owned() * scale)
}

/// Orthonormal basis of the column space of `l`, or an error if the Gram
/// matrix is ill-conditioned. Empty loadings give an empty basis.
fn orthonormal_basis(l: &Loadings) -> Result<DMatrix<f64>> {
    if l.h == 0 {
        return Ok(DMatrix::zeros(l.p, 0));
    }
    let gram = SymmetricMatrix::new(l.mat.transpose() * &l.mat)?;
    let spec = sym_eig_desc(&gram)?;
    let lam_max = spec.eigenvalue(0);
    let lam_min = spec.eigenvalue(l.h - 1);
    if lam_max <= 0.0 || lam_min <= 0.0 || lam_max / lam_min > GRAM_COND_LIMIT {
        let cond = if lam_min > 0.0 {
            lam_max / lam_min
        } else {
            f64::INFINITY
        };
        return Err(Error::SingularGram { cond });
    }
    // L V diag(1/sqrt(lambda)) is orthonormal and spans the same space.
    let mut scaled = spec.eigenvectors().clone();
    for j in 0..l.h {
        let inv_sqrt = 1.0 / spec.eigenvalue(j).sqrt();
        for i in 0..l.h {
            scaled[(i, j)] *= inv_sqrt;
        }
    }
    Ok(&l.mat * scaled)
}

/// Projector onto the orthogonal complement of the columns of `l`:
/// P = I - L (L'L)^-1 L'. For empty loadings this is the identity.
pub fn orth_projector_complement(l: &Loadings) -> Result<Projector> {
    if l.h == 0 {
        return Ok(Projector::identity(l.p));
    }
    let basis = orthonormal_basis(l)?;
    // I - B B' with B orthonormal is symmetric and idempotent by construction.
    let mut p = DMatrix::identity(l.p, l.p);
    p -= &basis * basis.transpose();
    let p = (&p + p.transpose()) * 0.5;
    Ok(Projector { mat: p })
}

/// Orthonormalize the columns of `m` (QR-based), preserving the column space.
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return Ok(DMatrix::zeros(rows, 0));
    }
    if cols > rows {
        return Err(Error::SingularInput(format!(
            "cannot orthonormalize {rows}x{cols} matrix with more columns than rows"
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite entries".into()));
    }
    let qr = m.clone().qr();
    let r = qr.r();
    let norm = m.norm();
    let tol = norm * (rows.max(cols) as f64) * f64::EPSILON * 16.0;
    for j in 0..cols {
        if r[(j, j)].abs() <= tol {
            return Err(Error::SingularInput(format!(
                "column space has rank below {cols}"
            )));
        }
    }
    Ok(qr.q())
}

/// Distance between the column spaces of `a` and `b`:
/// D = (1 - tr(Q_a Q_a' Q_b Q_b') / max(q1, q2))^(1/2), in [0, 1].
///
/// Inputs are orthonormalized internally, so sqrt(p)-scaled loadings can be
/// passed directly. 0 means equal column spaces, 1 means orthogonal.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeError(format!(
            "subspace distance needs equal row counts, got {} and {}",
            a.nrows(),
            b.nrows()
        )));
    }
    if a.ncols() == 0 || b.ncols() == 0 {
        return Err(Error::SingularInput(
            "subspace distance undefined for empty matrices".into(),
        ));
    }
    let qa = orthonormalize(a)?;
    let qb = orthonormalize(b)?;
    // 1 - tr(Qa Qa' Qb Qb') / qmax equals ||(I - P_small) Q_big||_F^2 / qmax
    // with P_small the projector onto the lower-dimensional space; the
    // residual form avoids the cancellation of the trace form near zero.
    let (big, small) = if qb.ncols() >= qa.ncols() {
        (&qb, &qa)
    } else {
        (&qa, &qb)
    };
    let resid = big - small * (small.transpose() * big);
    let denom = big.ncols() as f64;
    Ok((resid.norm_squared() / denom).min(1.0).sqrt())
}

/// Convenience overload for loadings.
pub fn subspace_distance_loadings(a: &Loadings, b: &Loadings) -> Result<f64> {
    subspace_distance(a.as_matrix(), b.as_matrix())
}
