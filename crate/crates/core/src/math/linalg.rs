//! Small dense helpers: symmetrization, PSD projection, jittered Cholesky.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{NiocError, Result};

/// Relative jitter ladder: 0, then 1e-9·tr/d escalated ×10 up to 1e-3·tr/d.
const JITTER_START: f64 = 1e-9;
const JITTER_MAX: f64 = 1e-3;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Clamp the eigenvalues of a symmetric matrix from below at `floor`.
///
/// Matrices whose spectrum already satisfies the floor are returned unchanged
/// (after symmetrization), so exact quadratics pass through bit for bit.
pub fn project_psd(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = symmetrize(m);
    if sym.nrows() == 0 {
        return sym;
    }
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&clamped) * v.transpose()))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Cholesky factorization with escalating diagonal jitter.
///
/// A plain factorization is attempted first; on failure `ε·tr/d·I` is added
/// with ε = 1e-9, 1e-8, …, 1e-3. Returns the factor and the jitter added.
pub fn cholesky_jittered(m: &DMatrix<f64>, context: &str) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let d = m.nrows();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(NiocError::non_finite(context));
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        if c.l_dirty().diagonal().iter().all(|&v| v > 0.0) {
            return Ok((c, 0.0));
        }
    }
    let scale = if d == 0 { 0.0 } else { m.trace() / d as f64 };
    if scale > 0.0 {
        let mut eps = JITTER_START;
        while eps <= JITTER_MAX * (1.0 + 1e-12) {
            let jitter = eps * scale;
            let mut jm = m.clone();
            for i in 0..d {
                jm[(i, i)] += jitter;
            }
            if let Some(c) = Cholesky::new(jm) {
                return Ok((c, jitter));
            }
            eps *= 10.0;
        }
    }
    Err(NiocError::SingularCovariance {
        context: context.to_string(),
    })
}

/// A factor `F` with `F·Fᵀ = m` for symmetric PSD `m`.
///
/// Uses the Cholesky factor when it exists and a clamped eigendecomposition
/// otherwise, so singular covariances (such as a known initial state) work.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(m);
    if sym.nrows() == 0 {
        return sym;
    }
    if let Some(c) = Cholesky::new(sym.clone()) {
        return c.l();
    }
    let eig = SymmetricEigen::new(sym);
    let sq = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sq)
}

/// Inverse of a symmetric positive-definite matrix via jittered Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let (c, _) = cholesky_jittered(m, context)?;
    Ok(symmetrize(&c.inverse()))
}

/// Solve `m · X = rhs` for symmetric positive-definite `m`.
pub fn spd_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let (c, _) = cholesky_jittered(m, context)?;
    Ok(c.solve(rhs))
}
