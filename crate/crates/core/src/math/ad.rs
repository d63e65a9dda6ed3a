//! Forward-mode derivative drivers built on [`Dual`] and [`HyperDual`].

use nalgebra::{DMatrix, DVector};

use super::real::{Dual, HyperDual};

/// Value and Jacobian of a vector function, one dual pass per input coordinate.
pub fn jacobian<F>(f: F, point: &[f64]) -> (DVector<f64>, DMatrix<f64>)
where
    F: Fn(&[Dual]) -> Vec<Dual>,
{
    let k = point.len();
    let mut args: Vec<Dual> = point.iter().map(|&p| Dual::new(p, 0.0)).collect();
    if k == 0 {
        let out = f(&args);
        let value = DVector::from_iterator(out.len(), out.iter().map(|d| d.re));
        return (value, DMatrix::zeros(out.len(), 0));
    }
    let mut value = DVector::zeros(0);
    let mut jac = DMatrix::zeros(0, 0);
    for j in 0..k {
        args[j].eps = 1.0;
        let out = f(&args);
        args[j].eps = 0.0;
        if j == 0 {
            value = DVector::from_iterator(out.len(), out.iter().map(|d| d.re));
            jac = DMatrix::zeros(out.len(), k);
        }
        for (i, d) in out.iter().enumerate() {
            jac[(i, j)] = d.eps;
        }
    }
    (value, jac)
}

/// Value, gradient and exact Hessian of a scalar function.
///
/// Runs `k(k+1)/2` hyper-dual passes for a `k`-dimensional input.
pub fn gradient_hessian<F>(f: F, point: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>)
where
    F: Fn(&[HyperDual]) -> HyperDual,
{
    let k = point.len();
    let mut args: Vec<HyperDual> = point.iter().map(|&p| HyperDual::cst_at(p)).collect();
    let mut grad = DVector::zeros(k);
    let mut hess = DMatrix::zeros(k, k);
    if k == 0 {
        return (f(&args).re, grad, hess);
    }
    let mut value = 0.0;
    for i in 0..k {
        for j in i..k {
            args[i].e1 = 1.0;
            args[j].e2 = 1.0;
            let out = f(&args);
            args[i].e1 = 0.0;
            args[j].e2 = 0.0;
            if i == j {
                grad[i] = out.e1;
                value = out.re;
            }
            hess[(i, j)] = out.e12;
            hess[(j, i)] = out.e12;
        }
    }
    (value, grad, hess)
}

impl HyperDual {
    fn cst_at(v: f64) -> Self {
        HyperDual::new(v, 0.0, 0.0, 0.0)
    }
}
