//! Projected limited-memory BFGS for box-constrained minimization.

use nalgebra::DVector;

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsSettings {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the projected gradient's max-norm falls below this.
    pub grad_tol: f64,
    /// Stop when an accepted step improves f by less than `f_tol·(1+|f|)`.
    pub f_tol: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iter: 100,
            grad_tol: 1e-5,
            f_tol: 1e-9,
            max_backtracks: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    Stalled,
    NoProgress,
    MaxIter,
    /// f was not finite at the starting point.
    InfeasibleStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub f: f64,
    pub f_start: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn project(x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len(), (0..x.len()).map(|i| x[i].clamp(lo[i], hi[i])))
}

fn projected_gradient(x: &DVector<f64>, g: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    x - project(&(x - g), lo, hi)
}

/// Minimize `f` over the box `[lo, hi]` from `x0`. `fg` returns the value
/// and gradient; a non-finite value rejects the trial point.
pub fn minimize<F>(mut fg: F, x0: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>, settings: &LbfgsSettings) -> Minimum
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut x = project(x0, lo, hi);
    let (mut f, mut g) = fg(&x);
    let f_start = f;
    if !f.is_finite() {
        return Minimum {
            x,
            f,
            f_start,
            iterations: 0,
            termination: Termination::InfeasibleStart,
        };
    }
    let mut s_hist: Vec<DVector<f64>> = Vec::new();
    let mut y_hist: Vec<DVector<f64>> = Vec::new();
    let mut termination = Termination::MaxIter;
    let mut iterations = 0;
    for it in 0..settings.max_iter {
        iterations = it;
        if projected_gradient(&x, &g, lo, hi).amax() < settings.grad_tol {
            termination = Termination::Gradient;
            break;
        }
        // coordinates pinned at a bound with the gradient pushing outward
        let active: Vec<bool> = (0..x.len())
            .map(|i| (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0))
            .collect();
        let mut d = -two_loop(&g, &s_hist, &y_hist);
        for (i, &a) in active.iter().enumerate() {
            if a {
                d[i] = 0.0;
            }
        }
        if d.dot(&g) >= 0.0 {
            d = -&g;
            for (i, &a) in active.iter().enumerate() {
                if a {
                    d[i] = 0.0;
                }
            }
            s_hist.clear();
            y_hist.clear();
        }
        let mut step = if s_hist.is_empty() { 1.0 / d.amax().max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..settings.max_backtracks {
            let trial = project(&(&x + &d * step), lo, hi);
            let moved = &trial - &x;
            if moved.amax() == 0.0 {
                break;
            }
            let (ft, gt) = fg(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * g.dot(&moved) {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            termination = Termination::Stalled;
            break;
        };
        let s = &x_new - &x;
        let y = &g_new - &g;
        if s.dot(&y) > 1e-12 * s.norm() * y.norm() {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > settings.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let improvement = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        iterations = it + 1;
        if improvement < settings.f_tol * (1.0 + f.abs()) {
            termination = Termination::NoProgress;
            break;
        }
    }
    Minimum {
        x,
        f,
        f_start,
        iterations,
        termination,
    }
}

fn two_loop(g: &DVector<f64>, s_hist: &[DVector<f64>], y_hist: &[DVector<f64>]) -> DVector<f64> {
    let mut q = g.clone();
    let k = s_hist.len();
    let mut alphas = vec![0.0; k];
    for i in (0..k).rev() {
        let rho = 1.0 / y_hist[i].dot(&s_hist[i]);
        alphas[i] = rho * s_hist[i].dot(&q);
        q -= &y_hist[i] * alphas[i];
    }
    if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
        q *= s.dot(y) / y.dot(y);
    }
    for i in 0..k {
        let rho = 1.0 / y_hist[i].dot(&s_hist[i]);
        let beta = rho * y_hist[i].dot(&q);
        q += &s_hist[i] * (alphas[i] - beta);
    }
    q
}
