//! Time-invariant linear-Gaussian systems with quadratic costs.
//!
//! Not one of the benchmark tasks; these are the models on which the
//! controller, filter and likelihood are exactly solvable, and they serve as
//! reference problems in tests and small fits.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{NiocError, Result};
use crate::math::real::Real;
use crate::model::{Dims, ModelFactory, ParamSpec, ParamVector, PomdpModel, System, Variant};

/// x' = A x + B u + F v, y = H x + G w, cost ½xᵀQx + ½uᵀRu per step and
/// ½xᵀQ_f x at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussian {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q_final: DMatrix<f64>,
}

fn affine<R: Real>(m: &DMatrix<f64>, x: &[R], out: &mut [R]) {
    for (i, o) in out.iter_mut().enumerate() {
        for (j, &xj) in x.iter().enumerate() {
            let mij = m[(i, j)];
            if mij != 0.0 {
                *o = *o + xj * mij;
            }
        }
    }
}

fn quad<R: Real>(m: &DMatrix<f64>, x: &[R]) -> R {
    let mut acc = R::zero();
    for i in 0..x.len() {
        for j in 0..x.len() {
            let mij = m[(i, j)];
            if mij != 0.0 {
                acc = acc + x[i] * x[j] * mij;
            }
        }
    }
    acc * 0.5
}

fn gaussian_matrix<G: Rng + ?Sized>(rng: &mut G, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn random_spd<G: Rng + ?Sized>(rng: &mut G, n: usize, floor: f64) -> DMatrix<f64> {
    let m = gaussian_matrix(rng, n, n, 1.0);
    &m * m.transpose() / n as f64 + DMatrix::identity(n, n) * floor
}

impl LinearGaussian {
    /// Random instance with the given dimensions (noise dimensions equal
    /// state and observation dimensions). Dynamics are scaled to a spectral
    /// radius around one and all cost matrices are positive definite.
    pub fn random<G: Rng + ?Sized>(rng: &mut G, n: usize, nu: usize, m: usize) -> Self {
        let raw = gaussian_matrix(rng, n, n, 1.0);
        let radius = raw
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
            .max(1e-3);
        let target = rng.gen_range(0.7..1.1);
        Self {
            a: raw * (target / radius),
            b: gaussian_matrix(rng, n, nu, 1.0),
            f: gaussian_matrix(rng, n, n, 0.3),
            h: gaussian_matrix(rng, m, n, 1.0),
            g: gaussian_matrix(rng, m, m, 0.3) + DMatrix::identity(m, m) * 0.2,
            q: random_spd(rng, n, 0.1),
            r: random_spd(rng, nu, 0.5),
            q_final: random_spd(rng, n, 0.5),
        }
    }

    fn check(&self) -> Result<()> {
        let n = self.a.nrows();
        let nu = self.b.ncols();
        let ok = self.a.is_square()
            && self.b.nrows() == n
            && self.f.nrows() == n
            && self.h.ncols() == n
            && self.g.nrows() == self.h.nrows()
            && self.q.shape() == (n, n)
            && self.r.shape() == (nu, nu)
            && self.q_final.shape() == (n, n);
        if ok {
            Ok(())
        } else {
            Err(NiocError::DimensionMismatch("inconsistent linear-Gaussian matrices".into()))
        }
    }
}

impl System for LinearGaussian {
    fn dims(&self) -> Dims {
        Dims {
            n: self.a.nrows(),
            nu: self.b.ncols(),
            m: self.h.nrows(),
            nv: self.f.ncols(),
            nw: self.g.ncols(),
        }
    }

    fn dynamics<R: Real>(&self, x: &[R], u: &[R], v: &[R]) -> Vec<R> {
        let mut out = vec![R::zero(); x.len()];
        affine(&self.a, x, &mut out);
        affine(&self.b, u, &mut out);
        affine(&self.f, v, &mut out);
        out
    }

    fn observe<R: Real>(&self, x: &[R], w: &[R]) -> Vec<R> {
        let mut out = vec![R::zero(); self.h.nrows()];
        affine(&self.h, x, &mut out);
        affine(&self.g, w, &mut out);
        out
    }

    fn running_cost<R: Real>(&self, x: &[R], u: &[R], _t: usize) -> R {
        quad(&self.q, x) + quad(&self.r, u)
    }

    fn final_cost<R: Real>(&self, x: &[R]) -> R {
        quad(&self.q_final, x)
    }
}

/// Family of linear-Gaussian models with control cost `c_a·R₀`, process noise
/// `sigma_m·F₀` and observation noise `sigma_o·G₀`.
#[derive(Debug, Clone)]
pub struct LinearFactory {
    pub base: LinearGaussian,
    pub variant: Variant,
    pub horizon: usize,
    pub x1: DVector<f64>,
    pub alpha: f64,
    pub belief_cov: Option<DMatrix<f64>>,
}

impl ModelFactory for LinearFactory {
    type Sys = LinearGaussian;

    fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = vec![
            ParamSpec::positive("c_a", 1.0, (0.1, 10.0)),
            ParamSpec::positive("sigma_m", 1.0, (0.1, 10.0)),
        ];
        if self.variant.is_partial() {
            specs.push(ParamSpec::positive("sigma_o", 1.0, (0.1, 10.0)));
        }
        specs
    }

    fn build(&self, theta: &ParamVector) -> Result<PomdpModel<LinearGaussian>> {
        self.base.check()?;
        let mut sys = self.base.clone();
        sys.r *= theta.get("c_a")?;
        sys.f *= theta.get("sigma_m")?;
        if self.variant.is_partial() {
            sys.g *= theta.get("sigma_o")?;
        }
        let mut model = PomdpModel::new(sys, self.variant, self.horizon, self.x1.clone(), self.alpha);
        if let Some(cov) = &self.belief_cov {
            model.belief_cov = cov.clone();
        }
        Ok(model)
    }

    fn mean_dynamics_depend_on_theta(&self) -> bool {
        false
    }
}
