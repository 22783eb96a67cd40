use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::config::{KernelForm, Mode};
use super::em::RegistrationResult;

/// Summary statistics of one displacement-weight column and of the
/// displacement it induces at the basis points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightStats {
    pub axis: usize,
    pub l2: f64,
    pub max_abs: f64,
    pub max_abs_displacement: f64,
}

/// Serializable report of a registration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub mode: Mode,
    pub kernel: KernelForm,
    pub w: f64,
    pub beta: f64,
    pub lambda: f64,
    pub max_iter: usize,
    pub sigma_tol: f64,
    pub sigma_floor: f64,
    pub rigid_axis: usize,
    pub s: f64,
    pub t: f64,
    /// Translation on the flexible axis (rigid mode only, 0 otherwise).
    pub flexible_shift: f64,
    pub weights: Vec<WeightStats>,
    pub iterations: usize,
    pub converged: bool,
    pub sigma2: f64,
    pub objective: f64,
    pub reference_points: usize,
    pub target_points: usize,
    pub sigma2_trajectory: Vec<f64>,
    pub objective_trajectory: Vec<f64>,
}

impl RegistrationReport {
    pub fn from_result<T: Scalar>(r: &RegistrationResult<T>) -> Self {
        let tr = &r.transform;
        let cfg = &r.config;
        let weights = match &tr.basis {
            None => Vec::new(),
            Some(_) => {
                let axes: Vec<usize> = match tr.mode {
                    Mode::Nonrigid => vec![0, 1],
                    _ => vec![tr.flexible_axis()],
                };
                axes.into_iter()
                    .map(|a| {
                        let col: Vec<f64> = tr.weights.iter().map(|w| w[a].as_f64()).collect();
                        let disp = (0..tr.weights.len())
                            .map(|m| tr.basis_displacement(m)[a].as_f64().abs())
                            .fold(0.0, f64::max);
                        WeightStats {
                            axis: a,
                            l2: col.iter().map(|v| v * v).sum::<f64>().sqrt(),
                            max_abs: col.iter().fold(0.0, |m, v| m.max(v.abs())),
                            max_abs_displacement: disp,
                        }
                    })
                    .collect()
            }
        };
        RegistrationReport {
            mode: tr.mode,
            kernel: cfg.kernel,
            w: cfg.w.as_f64(),
            beta: cfg.beta.as_f64(),
            lambda: cfg.lambda.as_f64(),
            max_iter: cfg.max_iter,
            sigma_tol: cfg.sigma_tol.map_or(0.0, |v| v.as_f64()),
            sigma_floor: cfg.sigma_floor.map_or(0.0, |v| v.as_f64()),
            rigid_axis: tr.rigid_axis,
            s: tr.s().as_f64(),
            t: tr.t().as_f64(),
            flexible_shift: tr.shift[tr.flexible_axis()].as_f64(),
            weights,
            iterations: r.iterations,
            converged: r.converged,
            sigma2: r.sigma2().as_f64(),
            objective: r.final_objective().as_f64(),
            reference_points: r.posterior.rows(),
            target_points: r.posterior.cols(),
            sigma2_trajectory: r.sigma2_trajectory.iter().map(|v| v.as_f64()).collect(),
            objective_trajectory: r.objective_trajectory.iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
