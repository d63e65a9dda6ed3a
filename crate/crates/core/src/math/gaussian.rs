//! Multivariate normal distributions and the block operations used for
//! belief tracking: marginalization, conditioning, affine transformation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::linalg::{cholesky_jittered, min_eigenvalue, symmetrize};
use crate::error::{NiocError, Result};

/// Tolerance for the PSD check, relative to the trace.
const PSD_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    /// Builds a Gaussian, symmetrizing `cov` and rejecting indefinite input.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let g = Self::new_symmetrized(mean, cov)?;
        let trace = g.cov.trace().abs();
        let lmin = min_eigenvalue(&g.cov);
        if lmin < -PSD_REL_TOL * trace.max(f64::MIN_POSITIVE) {
            return Err(NiocError::NotPositiveSemidefinite {
                min_eigenvalue: lmin,
            });
        }
        Ok(g)
    }

    /// Symmetrizes `cov` without the eigenvalue check.
    pub fn new_symmetrized(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(NiocError::DimensionMismatch(format!(
                "mean has length {d}, covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(Self {
            mean,
            cov: symmetrize(&cov),
        })
    }

    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Self {
        let d = mean.len();
        Self {
            mean,
            cov: DMatrix::identity(d, d) * variance,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Exact log density via Cholesky factorization.
    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(NiocError::DimensionMismatch(format!(
                "point has length {}, Gaussian has dimension {d}",
                x.len()
            )));
        }
        if d == 0 {
            return Ok(0.0);
        }
        let (chol, _) = cholesky_jittered(&self.cov, "log_pdf")?;
        let diff = x - &self.mean;
        let z = chol
            .l_dirty()
            .lower_triangle()
            .solve_lower_triangular(&diff)
            .ok_or_else(|| NiocError::SingularCovariance {
                context: "log_pdf triangular solve".into(),
            })?;
        let half_logdet: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        let value = -0.5 * z.norm_squared() - half_logdet - 0.5 * d as f64 * (2.0 * PI).ln();
        if value.is_finite() {
            Ok(value)
        } else {
            Err(NiocError::non_finite("log_pdf"))
        }
    }

    /// Distribution of `a·x + b` (plus independent `extra_cov`, if any).
    pub fn linear_transform(
        &self,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        extra_cov: Option<&DMatrix<f64>>,
    ) -> Result<Gaussian> {
        let mut cov = a * &self.cov * a.transpose();
        if let Some(e) = extra_cov {
            cov += e;
        }
        Gaussian::new_symmetrized(a * &self.mean + b, cov)
    }

    /// Draws one sample using the (jittered) Cholesky factor.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let d = self.dim();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        if self.cov.iter().all(|&v| v == 0.0) {
            return Ok(self.mean.clone());
        }
        let (chol, _) = cholesky_jittered(&self.cov, "sample")?;
        Ok(&self.mean + chol.l() * z)
    }
}

/// Which block of a [`GaussianJoint`] to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    X,
    B,
}

/// Joint Gaussian over a state block `x` and a belief block `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianJoint {
    pub mean_x: DVector<f64>,
    pub mean_b: DVector<f64>,
    pub cov_xx: DMatrix<f64>,
    pub cov_xb: DMatrix<f64>,
    pub cov_bb: DMatrix<f64>,
}

impl GaussianJoint {
    /// Splits a full Gaussian into the first `nx` coordinates and the rest.
    pub fn from_gaussian(g: &Gaussian, nx: usize) -> Self {
        let d = g.dim();
        let nb = d - nx;
        Self {
            mean_x: g.mean.rows(0, nx).into_owned(),
            mean_b: g.mean.rows(nx, nb).into_owned(),
            cov_xx: g.cov.view((0, 0), (nx, nx)).into_owned(),
            cov_xb: g.cov.view((0, nx), (nx, nb)).into_owned(),
            cov_bb: g.cov.view((nx, nx), (nb, nb)).into_owned(),
        }
    }

    pub fn to_gaussian(&self) -> Gaussian {
        let nx = self.mean_x.len();
        let nb = self.mean_b.len();
        let d = nx + nb;
        let mut mean = DVector::zeros(d);
        mean.rows_mut(0, nx).copy_from(&self.mean_x);
        mean.rows_mut(nx, nb).copy_from(&self.mean_b);
        let mut cov = DMatrix::zeros(d, d);
        cov.view_mut((0, 0), (nx, nx)).copy_from(&self.cov_xx);
        cov.view_mut((0, nx), (nx, nb)).copy_from(&self.cov_xb);
        cov.view_mut((nx, 0), (nb, nx)).copy_from(&self.cov_xb.transpose());
        cov.view_mut((nx, nx), (nb, nb)).copy_from(&self.cov_bb);
        Gaussian {
            mean,
            cov: symmetrize(&cov),
        }
    }

    /// Marginal of one block: plain block selection.
    pub fn marginal(&self, which: Block) -> Gaussian {
        match which {
            Block::X => Gaussian {
                mean: self.mean_x.clone(),
                cov: symmetrize(&self.cov_xx),
            },
            Block::B => Gaussian {
                mean: self.mean_b.clone(),
                cov: symmetrize(&self.cov_bb),
            },
        }
    }

    /// `p(b | x = observed_x)` via the Schur complement.
    pub fn condition(&self, observed_x: &DVector<f64>) -> Result<Gaussian> {
        if observed_x.len() != self.mean_x.len() {
            return Err(NiocError::DimensionMismatch(format!(
                "conditioning value has length {}, x block has {}",
                observed_x.len(),
                self.mean_x.len()
            )));
        }
        if self.mean_x.is_empty() {
            return Ok(self.marginal(Block::B));
        }
        let (chol, _) = cholesky_jittered(&self.cov_xx, "condition")?;
        // gain = cov_bx · cov_xx⁻¹
        let gain = chol.solve(&self.cov_xb).transpose();
        let mean = &self.mean_b + &gain * (observed_x - &self.mean_x);
        let cov = &self.cov_bb - &gain * &self.cov_xb;
        Ok(Gaussian {
            mean,
            cov: symmetrize(&cov),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(d, d) * 0.5
    }

    fn diag_joint() -> GaussianJoint {
        GaussianJoint {
            mean_x: DVector::from_element(1, 1.0),
            mean_b: DVector::from_element(1, 2.0),
            cov_xx: DMatrix::from_element(1, 1, 4.0),
            cov_xb: DMatrix::zeros(1, 1),
            cov_bb: DMatrix::from_element(1, 1, 9.0),
        }
    }

    #[test]
    fn marginal_is_block_selection() {
        let j = diag_joint();
        let gx = j.marginal(Block::X);
        assert_eq!(gx.mean[0], 1.0);
        assert_eq!(gx.cov[(0, 0)], 4.0);
        let gb = j.marginal(Block::B);
        assert_eq!(gb.mean[0], 2.0);
        assert_eq!(gb.cov[(0, 0)], 9.0);
    }

    #[test]
    fn independent_blocks_condition_to_marginal() {
        let j = diag_joint();
        let post = j.condition(&DVector::from_element(1, -3.0)).unwrap();
        assert_eq!(post, j.marginal(Block::B));
    }

    #[test]
    fn perfect_correlation_pins_belief() {
        let j = GaussianJoint {
            mean_x: DVector::zeros(1),
            mean_b: DVector::zeros(1),
            cov_xx: DMatrix::from_element(1, 1, 1.0),
            cov_xb: DMatrix::from_element(1, 1, 1.0),
            cov_bb: DMatrix::from_element(1, 1, 1.0),
        };
        let post = j.condition(&DVector::from_element(1, 2.0)).unwrap();
        assert!((post.mean[0] - 2.0).abs() < 1e-15);
        assert!(post.cov[(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn standard_normal_log_density() {
        let g = Gaussian::isotropic(DVector::zeros(1), 1.0);
        let v = g.log_pdf(&DVector::zeros(1)).unwrap();
        assert!((v + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        let g2 = Gaussian::isotropic(DVector::zeros(2), 1.0);
        let v2 = g2.log_pdf(&DVector::from_element(2, 1.0)).unwrap();
        assert!((v2 - (-(2.0 * PI).ln() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn condition_matches_precision_form() {
        // p(b|x) ∝ p(x, b): with joint precision Λ, the posterior precision is
        // Λ_bb and the mean is μ_b − Λ_bb⁻¹ Λ_bx (x − μ_x).
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let cov = random_spd(8, &mut rng);
            let mean = DVector::from_fn(8, |_, _| rng.gen_range(-2.0..2.0));
            let g = Gaussian::new(mean.clone(), cov.clone()).unwrap();
            let j = GaussianJoint::from_gaussian(&g, 4);
            let x = DVector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
            let post = j.condition(&x).unwrap();

            let prec = cov.try_inverse().unwrap();
            let l_bb = prec.view((4, 4), (4, 4)).into_owned();
            let l_bx = prec.view((4, 0), (4, 4)).into_owned();
            let l_bb_inv = l_bb.try_inverse().unwrap();
            let m = mean.rows(4, 4) - &l_bb_inv * l_bx * (&x - mean.rows(0, 4));
            assert!((post.mean - m).amax() < 1e-9);
            assert!((post.cov - l_bb_inv).amax() < 1e-9);
        }
    }

    #[test]
    fn marginal_log_density_matches_precision_oracle() {
        // log ∫ N(x, b) db via the Schur complement of the joint precision.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let cov = random_spd(6, &mut rng);
            let mean = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
            let j = GaussianJoint::from_gaussian(&Gaussian::new(mean.clone(), cov.clone()).unwrap(), 3);
            let x = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let got = j.marginal(Block::X).log_pdf(&x).unwrap();

            let prec = cov.try_inverse().unwrap();
            let l_xx = prec.view((0, 0), (3, 3)).into_owned();
            let l_xb = prec.view((0, 3), (3, 3)).into_owned();
            let l_bb = prec.view((3, 3), (3, 3)).into_owned();
            let marg_prec = &l_xx - &l_xb * l_bb.try_inverse().unwrap() * l_xb.transpose();
            let d = &x - mean.rows(0, 3);
            let quad = (d.transpose() * &marg_prec * &d)[(0, 0)];
            let expect = -0.5 * quad + 0.5 * marg_prec.determinant().ln() - 1.5 * (2.0 * PI).ln();
            assert!((got - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn log_density_integrates_to_one_on_grid() {
        // Quadrature oracle on a 2-D slice: midpoint rule over ±8σ.
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0]);
        let g = Gaussian::new(DVector::from_row_slice(&[0.3, -0.2]), cov).unwrap();
        let n = 400;
        let (lo, hi) = (-12.0, 12.0);
        let h = (hi - lo) / n as f64;
        let mut mass = 0.0;
        for i in 0..n {
            for k in 0..n {
                let p = DVector::from_row_slice(&[lo + (i as f64 + 0.5) * h, lo + (k as f64 + 0.5) * h]);
                mass += g.log_pdf(&p).unwrap().exp() * h * h;
            }
        }
        assert!((mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn log_density_matches_eigen_formula_5d() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cov = random_spd(5, &mut rng);
        let mean = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let g = Gaussian::new(mean.clone(), cov.clone()).unwrap();
        let x = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let eig = nalgebra::SymmetricEigen::new(cov);
        let d = eig.eigenvectors.transpose() * (&x - &mean);
        let mut expect = -2.5 * (2.0 * PI).ln();
        for i in 0..5 {
            expect -= 0.5 * (eig.eigenvalues[i].ln() + d[i] * d[i] / eig.eigenvalues[i]);
        }
        assert!((g.log_pdf(&x).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn monte_carlo_marginal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cov = random_spd(6, &mut rng);
        let mean = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let g = Gaussian::new(mean, cov).unwrap();
        let j = GaussianJoint::from_gaussian(&g, 3);
        let mx = j.marginal(Block::X);
        let n = 1_000_000;
        let mut s1 = DVector::<f64>::zeros(3);
        let mut s2 = DVector::<f64>::zeros(3);
        for _ in 0..n {
            let z = g.sample(&mut rng).unwrap();
            let x = z.rows(0, 3);
            s1 += &x;
            s2 += x.component_mul(&x);
        }
        for i in 0..3 {
            let m = s1[i] / n as f64;
            let var = s2[i] / n as f64 - m * m;
            let se_m = (mx.cov[(i, i)] / n as f64).sqrt();
            let se_v = mx.cov[(i, i)] * (2.0 / n as f64).sqrt();
            assert!((m - mx.mean[i]).abs() < 3.0 * se_m, "mean {i}");
            assert!((var - mx.cov[(i, i)]).abs() < 3.0 * se_v, "var {i}");
        }
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            Gaussian::new(DVector::zeros(2), cov),
            Err(NiocError::NotPositiveSemidefinite { .. })
        ));
    }
}
