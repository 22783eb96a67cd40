//! Point-cloud registration by EM on a Gaussian mixture with a uniform noise
//! component.

mod config;
mod em;
mod kernel;
mod linalg;
mod report;
mod transform;

pub use config::{KernelForm, Mode, RegistrationConfig};
pub use em::{
    data_range, e_step, e_step_moved, initial_sigma2, initialize, m_step_axis1, m_step_axis2,
    m_step_displacement, m_step_similarity, m_step_translation, negative_log_likelihood_moved,
    objective, register, register_observed, resolved_thresholds, scan_noise_weight, update_sigma,
    update_sigma_moved, IterationView, NoiseScanEntry, Normalization, Posterior,
    RegistrationResult, SimilarityFit,
};
pub use kernel::{build_kernel, kernel_value, KernelBasis};
pub use linalg::solve_guarded;
pub use report::{RegistrationReport, WeightStats};
pub use transform::{Transform, TransformFile, TRANSFORM_MAGIC, TRANSFORM_VERSION};
