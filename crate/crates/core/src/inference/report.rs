use serde::Serialize;

use crate::error::{NiocError, Result};
use crate::model::{Constraint, ParamVector};

use super::Method;

/// Error of one estimated parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeError {
    pub name: String,
    pub theta_true: f64,
    pub theta_hat: f64,
    pub abs_rel_err: f64,
    /// Unconstrained parameters use |θ − θ̂| / max(|θ|, 1) and are flagged.
    pub flagged: bool,
}

/// Per-parameter |(θ − θ̂)/θ| in natural space.
pub fn relative_errors(theta_true: &ParamVector, theta_hat: &ParamVector) -> Result<Vec<RelativeError>> {
    if theta_true.names() != theta_hat.names() {
        return Err(NiocError::InvalidInput(format!(
            "parameter names differ: {:?} vs {:?}",
            theta_true.names(),
            theta_hat.names()
        )));
    }
    theta_true
        .entries()
        .iter()
        .zip(theta_hat.entries())
        .map(|(t, h)| {
            let (abs_rel_err, flagged) = match t.constraint {
                Constraint::Positive => {
                    if t.value == 0.0 {
                        return Err(NiocError::DivisionByZero(t.name.clone()));
                    }
                    (((t.value - h.value) / t.value).abs(), false)
                }
                Constraint::Unconstrained => ((t.value - h.value).abs() / t.value.abs().max(1.0), true),
            };
            Ok(RelativeError {
                name: t.name.clone(),
                theta_true: t.value,
                theta_hat: h.value,
                abs_rel_err,
                flagged,
            })
        })
        .collect()
}

/// Median of the finite values; `None` when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub task: String,
    pub variant: String,
    pub method: Method,
    pub dataset_id: usize,
    pub param_name: String,
    pub theta_true: f64,
    pub theta_hat: f64,
    pub abs_rel_err: f64,
    pub loglik: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkFailure {
    pub dataset_id: usize,
    pub method: Option<Method>,
    pub message: String,
}

/// Per-parameter errors of a benchmark run.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub failures: Vec<BenchmarkFailure>,
}

pub const CSV_HEADER: &str = "task,variant,method,dataset_id,param_name,theta_true,theta_hat,abs_rel_err,loglik,wall_time_s";

impl EvalReport {
    /// Median over all (dataset × parameter) errors of one method.
    pub fn pooled_median(&self, method: Method) -> Option<f64> {
        median(self.rows.iter().filter(|r| r.method == method).map(|r| r.abs_rel_err))
    }

    /// Median over parameters within each dataset, by dataset id.
    pub fn dataset_medians(&self, method: Method) -> Vec<(usize, f64)> {
        let mut ids: Vec<usize> = self.rows.iter().filter(|r| r.method == method).map(|r| r.dataset_id).collect();
        ids.dedup();
        ids.into_iter()
            .filter_map(|id| {
                median(
                    self.rows
                        .iter()
                        .filter(|r| r.method == method && r.dataset_id == id)
                        .map(|r| r.abs_rel_err),
                )
                .map(|m| (id, m))
            })
            .collect()
    }

    /// Median of the per-dataset medians.
    pub fn median_of_dataset_medians(&self, method: Method) -> Option<f64> {
        median(self.dataset_medians(method).into_iter().map(|(_, m)| m))
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method);
            }
        }
        out
    }

    /// CSV with one row per (dataset, method, parameter). Wall times are
    /// written only when `with_times` is set, leaving `NA` otherwise so that
    /// repeated runs produce identical files.
    pub fn to_csv(&self, with_times: bool) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let time = if with_times { format!("{}", r.wall_time_s) } else { "NA".into() };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.task, r.variant, r.method, r.dataset_id, r.param_name, r.theta_true, r.theta_hat, r.abs_rel_err, r.loglik, time
            ));
        }
        out
    }
}
