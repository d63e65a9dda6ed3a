//! Central finite differences for Jacobians and cost quadratization.
//!
//! The solvers differentiate model functions with forward-mode dual numbers;
//! these routines work on plain `f64` closures and serve external callers and
//! cross-checks.

use nalgebra::{DMatrix, DVector};

use super::linalg::{project_psd, symmetrize};
use crate::error::{NiocError, Result};

/// Eigenvalue floor applied to quadratized Hessians.
pub const HESSIAN_FLOOR: f64 = 1e-8;

/// Partial derivatives of a vector function, one block per argument group.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianSet {
    pub value: DVector<f64>,
    pub blocks: Vec<DMatrix<f64>>,
}

impl JacobianSet {
    /// All blocks concatenated column-wise.
    pub fn full(&self) -> DMatrix<f64> {
        let rows = self.value.len();
        let cols: usize = self.blocks.iter().map(|b| b.ncols()).sum();
        let mut out = DMatrix::zeros(rows, cols);
        let mut c = 0;
        for b in &self.blocks {
            out.view_mut((0, c), (rows, b.ncols())).copy_from(b);
            c += b.ncols();
        }
        out
    }
}

fn jac_step(x: f64) -> f64 {
    (1e-6 * x.abs()).max(1e-6)
}

fn hess_step(x: f64) -> f64 {
    (1e-4 * x.abs()).max(1e-4)
}

fn eval_checked<F>(f: &F, x: &DVector<f64>) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let y = f(x);
    if y.iter().all(|v| v.is_finite()) {
        Ok(y)
    } else {
        Err(NiocError::non_finite("finite-difference probe"))
    }
}

/// Central-difference Jacobian of `f` at `point`, split into column groups.
pub fn jacobian<F>(f: F, point: &DVector<f64>, group_sizes: &[usize]) -> Result<JacobianSet>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let k = point.len();
    if group_sizes.iter().sum::<usize>() != k {
        return Err(NiocError::DimensionMismatch(format!(
            "group sizes sum to {}, point has length {k}",
            group_sizes.iter().sum::<usize>()
        )));
    }
    let value = eval_checked(&f, point)?;
    let mut full = DMatrix::zeros(value.len(), k);
    let mut probe = point.clone();
    for j in 0..k {
        let h = jac_step(point[j]);
        let (xp, xm) = (point[j] + h, point[j] - h);
        probe[j] = xp;
        let plus = eval_checked(&f, &probe)?;
        probe[j] = xm;
        let minus = eval_checked(&f, &probe)?;
        probe[j] = point[j];
        // divide by the step actually taken in floating point
        full.set_column(j, &((plus - minus) / (xp - xm)));
    }
    let mut blocks = Vec::with_capacity(group_sizes.len());
    let mut c = 0;
    for &g in group_sizes {
        blocks.push(full.columns(c, g).into_owned());
        c += g;
    }
    Ok(JacobianSet { value, blocks })
}

/// Value, gradient and PSD-projected Hessian of a scalar cost by central
/// differences.
pub fn hessian_quadratize<F>(f: F, point: &DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let k = point.len();
    let eval = |x: &DVector<f64>| -> Result<f64> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(NiocError::non_finite("finite-difference probe"))
        }
    };
    let f0 = eval(point)?;
    let steps: Vec<f64> = point.iter().map(|&x| hess_step(x)).collect();
    let mut grad = DVector::zeros(k);
    let mut hess = DMatrix::zeros(k, k);
    let mut p = point.clone();
    for i in 0..k {
        let hi = steps[i];
        p[i] = point[i] + hi;
        let fp = eval(&p)?;
        p[i] = point[i] - hi;
        let fm = eval(&p)?;
        p[i] = point[i];
        grad[i] = (fp - fm) / (2.0 * hi);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                p[i] = point[i] + si * hi;
                p[j] = point[j] + sj * hj;
                let v = eval(&p);
                p[i] = point[i];
                p[j] = point[j];
                v
            };
            let fpp = corner(1.0, 1.0)?;
            let fpm = corner(1.0, -1.0)?;
            let fmp = corner(-1.0, 1.0)?;
            let fmm = corner(-1.0, -1.0)?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok((f0, grad, project_psd(&symmetrize(&hess), HESSIAN_FLOOR)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::linalg::min_eigenvalue;
    use proptest::prelude::*;

    #[test]
    fn jacobian_of_sin_and_product() {
        let f = |x: &DVector<f64>| DVector::from_row_slice(&[x[0].sin(), x[0] * x[1]]);
        let j = jacobian(f, &DVector::from_row_slice(&[0.0, 1.0]), &[2]).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        assert!((j.full() - expect).amax() < 1e-6);
    }

    #[test]
    fn jacobian_of_constant_is_zero() {
        let f = |_: &DVector<f64>| DVector::from_row_slice(&[3.0, -1.0]);
        let j = jacobian(f, &DVector::from_row_slice(&[0.5, 2.0, 9.0]), &[1, 2]).unwrap();
        assert_eq!(j.blocks[0].shape(), (2, 1));
        assert_eq!(j.blocks[1].shape(), (2, 2));
        assert!(j.full().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jacobian_reports_non_finite_probe() {
        let f = |x: &DVector<f64>| DVector::from_element(1, (x[0] - 1e-7).ln());
        assert!(matches!(
            jacobian(f, &DVector::from_element(1, 0.0), &[1]),
            Err(NiocError::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn quadratic_cost_hessian_is_twice_q() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let qc = q.clone();
        let f = move |x: &DVector<f64>| (x.transpose() * &qc * x)[(0, 0)];
        let (_, _, h) = hessian_quadratize(f, &DVector::from_row_slice(&[0.4, -1.2])).unwrap();
        assert!((h - q * 2.0).amax() < 1e-5);
    }

    #[test]
    fn cosine_hessian_is_clamped() {
        let (v, g, h) = hessian_quadratize(|x: &DVector<f64>| x[0].cos(), &DVector::zeros(1)).unwrap();
        assert_eq!(v, 1.0);
        assert!(g[0].abs() < 1e-10);
        assert!((h[(0, 0)] - HESSIAN_FLOOR).abs() < 1e-15);
    }

    #[test]
    fn quartic_gradient_and_hessian() {
        let (_, g, h) =
            hessian_quadratize(|x: &DVector<f64>| x[0].powi(4), &DVector::from_element(1, 1.0)).unwrap();
        assert!((g[0] - 4.0).abs() < 1e-4);
        assert!((h[(0, 0)] - 12.0).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn jacobian_recovers_linear_map(entries in proptest::collection::vec(-10.0f64..10.0, 12),
                                        point in proptest::collection::vec(-1.0f64..1.0, 4)) {
            let a = DMatrix::from_row_slice(3, 4, &entries);
            let ac = a.clone();
            let f = move |x: &DVector<f64>| &ac * x;
            let j = jacobian(f, &DVector::from_vec(point), &[4]).unwrap();
            prop_assert!((j.full() - a).amax() < 1e-8);
        }

        #[test]
        fn quadratized_hessian_is_symmetric_psd(c in proptest::collection::vec(-3.0f64..3.0, 6),
                                                point in proptest::collection::vec(-2.0f64..2.0, 2)) {
            let f = move |x: &DVector<f64>| {
                c[0] * x[0].sin() * x[1] + c[1] * x[0] * x[0] + c[2] * (x[1] * c[3]).cos()
                    + c[4] * x[0].powi(3) + c[5] * x[1] * x[1]
            };
            let (_, _, h) = hessian_quadratize(f, &DVector::from_vec(point)).unwrap();
            prop_assert_eq!(h.clone(), h.transpose());
            prop_assert!(min_eigenvalue(&h) >= HESSIAN_FLOOR * (1.0 - 1e-6));
        }
    }
}
