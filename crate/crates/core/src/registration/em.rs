//! Expectation-maximisation for the Gaussian mixture + uniform noise model.
//!
//! The reference cloud `Y` (M points) supplies the mixture centres `T(Y_m)`,
//! the target cloud `X` (N points) the observations. The density of an
//! observation is
//!
//! ```text
//! p(X_n) = w / N + (1 - w) / (2 pi M sigma2) * sum_m exp(-|X_n - T(Y_m)|^2 / (2 sigma2))
//! ```
//!
//! and the minimised objective is `E = -sum_n log p(X_n) + lambda/2 * tr(W^T G W)`.
//! Each M-step block (similarity, displacement weights, variance) exactly
//! minimises the EM upper bound in its own variables, so `E` never increases.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scalar::Scalar;

use super::config::{Mode, RegistrationConfig};
use super::kernel::{build_kernel, KernelBasis};
use super::linalg::solve_guarded;
use super::transform::Transform;

/// Soft correspondences. Stored column-major: the `M` responsibilities of
/// target point `n` are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior<T: Scalar> {
    m: usize,
    n: usize,
    p: Vec<T>,
    noise: Vec<T>,
}

impl<T: Scalar> Posterior<T> {
    /// Number of reference points (rows).
    pub fn rows(&self) -> usize {
        self.m
    }

    /// Number of target points (columns).
    pub fn cols(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> T {
        self.p[n * self.m + m]
    }

    pub fn column(&self, n: usize) -> &[T] {
        &self.p[n * self.m..(n + 1) * self.m]
    }

    pub fn noise_mass(&self) -> &[T] {
        &self.noise
    }

    /// `P 1`: total responsibility of each reference point.
    pub fn row_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.m];
        for n in 0..self.n {
            for (o, &v) in out.iter_mut().zip(self.column(n)) {
                *o = *o + v;
            }
        }
        out
    }

    /// `P^T 1`: explained (non-noise) mass of each target point.
    pub fn col_sums(&self) -> Vec<T> {
        (0..self.n)
            .map(|n| self.column(n).iter().copied().sum())
            .collect()
    }

    /// `N_P = 1^T P 1`.
    pub fn total(&self) -> T {
        self.col_sums().into_iter().sum()
    }

    /// `P X[.., axis]`: responsibility-weighted target coordinate per reference point.
    fn weighted_targets(&self, x: &[Point<T>], axis: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.m];
        for (n, xn) in x.iter().enumerate() {
            let v = xn[axis];
            for (o, &p) in out.iter_mut().zip(self.column(n)) {
                *o = *o + p * v;
            }
        }
        out
    }

    /// Largest `|sum_m P_mn + noise_n - 1|` over columns.
    pub fn max_column_defect(&self) -> T {
        (0..self.n)
            .map(|n| (self.column(n).iter().copied().sum::<T>() + self.noise[n] - T::one()).abs())
            .fold(T::zero(), T::max)
    }

    /// Builds a posterior from explicit entries (column-major by target point).
    pub fn from_columns(m: usize, n: usize, p: Vec<T>, noise: Vec<T>) -> Result<Self> {
        if p.len() != m * n || noise.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "posterior needs {m}x{n} entries and {n} noise terms"
            )));
        }
        Ok(Posterior { m, n, p, noise })
    }
}

fn two_pi<T: Scalar>() -> T {
    T::lit(std::f64::consts::TAU)
}

/// Largest coordinate extent of the union of both clouds; 1 when degenerate.
pub fn data_range<T: Scalar>(x: &[Point<T>], y: &[Point<T>]) -> T {
    let mut lo = [T::infinity(); 2];
    let mut hi = [T::neg_infinity(); 2];
    for p in x.iter().chain(y) {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let r = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if r > T::zero() && r.is_finite() {
        r
    } else {
        T::one()
    }
}

/// `sigma_floor` and `sigma_tol` with data-relative defaults applied.
pub fn resolved_thresholds<T: Scalar>(
    x: &[Point<T>],
    y: &[Point<T>],
    cfg: &RegistrationConfig<T>,
) -> (T, T) {
    let r2 = {
        let r = data_range(x, y);
        r * r
    };
    (
        cfg.sigma_floor.unwrap_or(T::lit(1e-8) * r2),
        cfg.sigma_tol.unwrap_or(T::lit(1e-10) * r2),
    )
}

fn check_cloud<T: Scalar>(pts: &[Point<T>], what: &'static str) -> Result<()> {
    if pts.is_empty() {
        return Err(Error::EmptyPointSet(what));
    }
    if pts.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

#[inline]
fn dist2<T: Scalar>(a: Point<T>, b: Point<T>) -> T {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    d0 * d0 + d1 * d1
}

/// Initial variance: mean squared pairwise distance over `D = 2` dimensions,
/// clamped to `sigma_floor`. The transform starts at identity.
pub fn initialize<T: Scalar>(
    x: &[Point<T>],
    y: &[Point<T>],
    cfg: &RegistrationConfig<T>,
) -> Result<(Transform<T>, T)> {
    check_cloud(x, "target cloud")?;
    check_cloud(y, "reference cloud")?;
    cfg.validate()?;
    let basis = match cfg.mode {
        Mode::Rigid => None,
        _ => Some(build_kernel(y, cfg.beta, cfg.kernel)?),
    };
    let transform = Transform::identity(cfg.mode, cfg.rigid_axis(), basis)?;
    let (floor, _) = resolved_thresholds(x, y, cfg);
    Ok((transform, initial_sigma2(x, y).max(floor)))
}

/// `sum_{m,n} |X_n - Y_m|^2 / (2 N M)`, unclamped.
pub fn initial_sigma2<T: Scalar>(x: &[Point<T>], y: &[Point<T>]) -> T {
    let total: T = x
        .iter()
        .map(|&xn| y.iter().map(|&ym| dist2(xn, ym)).sum::<T>())
        .sum();
    total / (T::lit(2.0) * T::from_usize_lossy(x.len() * y.len()))
}

/// Noise constant `c = w/(1-w) * M/N * 2 pi sigma2`, which makes the noise
/// term the complement of the mixture in the posterior.
fn noise_constant<T: Scalar>(w: T, m: usize, n: usize, sigma2: T) -> T {
    if w == T::zero() {
        return T::zero();
    }
    w / (T::one() - w) * T::from_usize_lossy(m) / T::from_usize_lossy(n) * two_pi::<T>() * sigma2
}

/// E-step against already transformed reference points `T(Y)`.
///
/// Exponents are shifted by their column maximum, so columns never underflow
/// to `0/0` even when `w = 0`.
pub fn e_step_moved<T: Scalar>(
    x: &[Point<T>],
    moved: &[Point<T>],
    sigma2: T,
    w: T,
) -> Result<Posterior<T>> {
    if !(sigma2 > T::zero() && sigma2.is_finite()) {
        return Err(Error::NumericUnderflow(format!(
            "sigma2 must be positive and finite, got {sigma2}"
        )));
    }
    if !(w >= T::zero() && w < T::one()) {
        return Err(Error::InvalidParameter(format!(
            "w must lie in [0, 1), got {w}"
        )));
    }
    if moved.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("transformed reference points"));
    }
    let (m, n) = (moved.len(), x.len());
    let c = noise_constant(w, m, n, sigma2);
    let inv = T::one() / (T::lit(2.0) * sigma2);
    let mut p = vec![T::zero(); m * n];
    let mut noise = vec![T::zero(); n];
    p.par_chunks_mut(m)
        .zip(noise.par_iter_mut())
        .zip(x.par_iter())
        .for_each(|((col, noise_n), &xn)| {
            let mut amax = T::neg_infinity();
            for (slot, &ym) in col.iter_mut().zip(moved) {
                let a = -dist2(xn, ym) * inv;
                *slot = a;
                amax = amax.max(a);
            }
            let scaled_c = if c == T::zero() {
                T::zero()
            } else {
                c * (-amax).exp()
            };
            if scaled_c.is_infinite() {
                col.iter_mut().for_each(|v| *v = T::zero());
                *noise_n = T::one();
                return;
            }
            let mut s = T::zero();
            for v in col.iter_mut() {
                *v = (*v - amax).exp();
                s = s + *v;
            }
            let denom = s + scaled_c;
            col.iter_mut().for_each(|v| *v = *v / denom);
            *noise_n = scaled_c / denom;
        });
    Ok(Posterior { m, n, p, noise })
}

/// E-step: posterior responsibilities of every reference component for every
/// target point, given the current transform.
pub fn e_step<T: Scalar>(
    x: &[Point<T>],
    y: &[Point<T>],
    transform: &Transform<T>,
    sigma2: T,
    w: T,
) -> Result<Posterior<T>> {
    if !transform.is_finite() {
        return Err(Error::NonFinite("transform parameters"));
    }
    e_step_moved(x, &transform.moved_reference(y), sigma2, w)
}

/// Outcome of the weighted similarity fit on one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityFit<T> {
    pub scale: T,
    pub shift: T,
    /// Reference coordinates had no spread under `P`; fell back to a pure shift.
    pub degenerate: bool,
}

/// Weighted least squares `min_{s,t} sum P_mn (X_n[a] - s Y_m[a] - t)^2`.
pub fn m_step_similarity<T: Scalar>(
    x: &[Point<T>],
    y: &[Point<T>],
    post: &Posterior<T>,
    axis: usize,
) -> Result<SimilarityFit<T>> {
    let p1 = post.row_sums();
    let pt1 = post.col_sums();
    let np: T = pt1.iter().copied().sum();
    if !(np > T::zero()) {
        return Err(Error::NumericUnderflow(
            "total responsibility is zero".into(),
        ));
    }
    let mean_x = x.iter().zip(&pt1).map(|(p, &w)| w * p[axis]).sum::<T>() / np;
    let mean_y = y.iter().zip(&p1).map(|(p, &w)| w * p[axis]).sum::<T>() / np;
    let px: Vec<T> = {
        // P (X - mean_x) along the axis
        let centred: Vec<Point<T>> = x.iter().map(|p| [p[axis] - mean_x, T::zero()]).collect();
        post.weighted_targets(&centred, 0)
    };
    let mut cov = T::zero();
    let mut var = T::zero();
    for (m, ym) in y.iter().enumerate() {
        let dy = ym[axis] - mean_y;
        cov = cov + dy * px[m];
        var = var + p1[m] * dy * dy;
    }
    let ymax = y.iter().fold(T::zero(), |acc, p| acc.max(p[axis].abs()));
    let resolution = T::lit(16.0) * T::epsilon() * ymax.max(T::min_positive_value());
    if !(var / np > resolution * resolution) {
        return Ok(SimilarityFit {
            scale: T::one(),
            shift: mean_x - mean_y,
            degenerate: true,
        });
    }
    let scale = cov / var;
    Ok(SimilarityFit {
        scale,
        shift: mean_x - scale * mean_y,
        degenerate: false,
    })
}

/// `(s, t)` on axis 1.
pub fn m_step_axis1<T: Scalar>(
    x: &[Point<T>],
    y: &[Point<T>],
    post: &Posterior<T>,
) -> Result<(T, T)> {
    let fit = m_step_similarity(x, y, post, 0)?;
    Ok((fit.scale, fit.shift))
}

/// Weighted mean translation `sum P_mn (X_n[a] - Y_m[a]) / N_P`.
pub fn m_step_translation<T: Scalar>(
    x: &[Point<T>],
    y: &[Point<T>],
    post: &Posterior<T>,
    axis: usize,
) -> Result<T> {
    let p1 = post.row_sums();
    let pt1 = post.col_sums();
    let np: T = pt1.iter().copied().sum();
    if !(np > T::zero()) {
        return Err(Error::NumericUnderflow(
            "total responsibility is zero".into(),
        ));
    }
    let sx = x.iter().zip(&pt1).map(|(p, &w)| w * p[axis]).sum::<T>();
    let sy = y.iter().zip(&p1).map(|(p, &w)| w * p[axis]).sum::<T>();
    Ok((sx - sy) / np)
}

/// Displacement weights for the given axes.
///
/// Solves `(d(P1) G + lambda sigma2 I) W_a = P X_a - d(P1) Y_a`, the
/// stationarity condition of `Q + lambda/2 tr(W^T G W)` in `W`, for each axis
/// `a` in `axes`. All axes share one factorisation.
pub fn m_step_displacement<T: Scalar>(
    x: &[Point<T>],
    y: &[Point<T>],
    post: &Posterior<T>,
    basis: &KernelBasis<T>,
    lambda: T,
    sigma2: T,
    axes: &[usize],
) -> Result<Vec<Vec<T>>> {
    let m = basis.len();
    if y.len() != m || post.rows() != m || post.cols() != x.len() {
        return Err(Error::ShapeMismatch(
            "posterior, reference cloud and kernel basis disagree".into(),
        ));
    }
    let p1 = post.row_sums();
    let mut a = Vec::with_capacity(m * m);
    let ridge = lambda * sigma2;
    for i in 0..m {
        for j in 0..m {
            let mut v = p1[i] * basis.g(i, j);
            if i == j {
                v = v + ridge;
            }
            a.push(v);
        }
    }
    let rhs: Vec<Vec<T>> = axes
        .iter()
        .map(|&ax| {
            let mut out = vec![T::zero(); m];
            for (n, xn) in x.iter().enumerate() {
                for ((o, &p), ym) in out.iter_mut().zip(post.column(n)).zip(y) {
                    *o = *o + p * (xn[ax] - ym[ax]);
                }
            }
            out
        })
        .collect();
    solve_guarded(&a, m, &rhs)
}

/// Displacement weights `W` on axis 2.
pub fn m_step_axis2<T: Scalar>(
    x: &[Point<T>],
    y: &[Point<T>],
    post: &Posterior<T>,
    basis: &KernelBasis<T>,
    lambda: T,
    sigma2: T,
) -> Result<Vec<T>> {
    Ok(m_step_displacement(x, y, post, basis, lambda, sigma2, &[1])?.remove(0))
}

/// `sigma2 = sum P_mn |X_n - T(Y_m)|^2 / (2 N_P)`, clamped to `floor`.
pub fn update_sigma_moved<T: Scalar>(
    x: &[Point<T>],
    moved: &[Point<T>],
    post: &Posterior<T>,
    floor: T,
) -> Result<T> {
    let np = post.total();
    if !(np > T::zero()) {
        return Err(Error::NumericUnderflow(
            "total responsibility is zero".into(),
        ));
    }
    let total: T = x
        .iter()
        .enumerate()
        .map(|(n, &xn)| {
            post.column(n)
                .iter()
                .zip(moved)
                .map(|(&p, &ym)| p * dist2(xn, ym))
                .sum::<T>()
        })
        .sum();
    Ok((total / (T::lit(2.0) * np)).max(floor))
}

pub fn update_sigma<T: Scalar>(
    x: &[Point<T>],
    y: &[Point<T>],
    transform: &Transform<T>,
    post: &Posterior<T>,
    floor: T,
) -> Result<T> {
    update_sigma_moved(x, &transform.moved_reference(y), post, floor)
}

/// Negative log-likelihood of the targets under the mixture, evaluated
/// with a per-point log-sum-exp.
pub fn negative_log_likelihood_moved<T: Scalar>(
    x: &[Point<T>],
    moved: &[Point<T>],
    sigma2: T,
    w: T,
) -> Result<T> {
    let (m, n) = (moved.len(), x.len());
    let log_k = ((T::one() - w) / (two_pi::<T>() * T::from_usize_lossy(m) * sigma2)).ln();
    let c = noise_constant(w, m, n, sigma2);
    let inv = T::one() / (T::lit(2.0) * sigma2);
    let mut total = T::zero();
    for &xn in x {
        let amax = moved
            .iter()
            .map(|&ym| -dist2(xn, ym) * inv)
            .fold(T::neg_infinity(), T::max);
        let s: T = moved
            .iter()
            .map(|&ym| (-dist2(xn, ym) * inv - amax).exp())
            .sum();
        let scaled_c = c * (-amax).exp();
        let log_p = if scaled_c.is_infinite() {
            // mixture negligible next to the noise floor
            let wn = w / T::from_usize_lossy(n);
            wn.ln() + (log_k.exp() / wn * amax.exp() * s).ln_1p()
        } else {
            log_k + amax + (s + scaled_c).ln()
        };
        total = total - log_p;
    }
    if !total.is_finite() {
        return Err(Error::NumericUnderflow("likelihood is not finite".into()));
    }
    Ok(total)
}

/// Penalised objective `E = E1 + lambda/2 * tr(W^T G W)`.
pub fn objective<T: Scalar>(
    x: &[Point<T>],
    y: &[Point<T>],
    transform: &Transform<T>,
    sigma2: T,
    w: T,
    lambda: T,
) -> Result<T> {
    let e1 = negative_log_likelihood_moved(x, &transform.moved_reference(y), sigma2, w)?;
    Ok(e1 + lambda / T::lit(2.0) * transform.roughness())
}

/// Common centring and scaling applied to both clouds before EM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Normalization<T: Scalar> {
    pub centre: Point<T>,
    pub scale: T,
}

impl<T: Scalar> Normalization<T> {
    pub fn identity() -> Self {
        Normalization {
            centre: [T::zero(); 2],
            scale: T::one(),
        }
    }

    /// Joint centroid and joint RMS distance to it; scale 1 when degenerate.
    pub fn of(x: &[Point<T>], y: &[Point<T>]) -> Self {
        let n = T::from_usize_lossy(x.len() + y.len());
        let all = || x.iter().chain(y);
        let centre = [
            all().map(|p| p[0]).sum::<T>() / n,
            all().map(|p| p[1]).sum::<T>() / n,
        ];
        let ms = all().map(|&p| dist2(p, centre)).sum::<T>() / n;
        let scale = ms.sqrt();
        Normalization {
            centre,
            scale: if scale > T::zero() && scale.is_finite() {
                scale
            } else {
                T::one()
            },
        }
    }

    pub fn apply(&self, pts: &[Point<T>]) -> Vec<Point<T>> {
        pts.iter()
            .map(|p| {
                [
                    (p[0] - self.centre[0]) / self.scale,
                    (p[1] - self.centre[1]) / self.scale,
                ]
            })
            .collect()
    }

    /// Expresses a transform fitted on normalised clouds in original units:
    /// `T(p) = c + L * T_hat((p - c) / L)`. The kernel width becomes
    /// `beta * L` and the weights `L * W_hat`; basis points are `reference`.
    pub fn denormalize(&self, t: &Transform<T>, reference: &[Point<T>]) -> Result<Transform<T>> {
        let (c, l) = (self.centre, self.scale);
        let r = t.rigid_axis;
        let f = t.flexible_axis();
        let mut out = t.clone();
        out.shift[r] = c[r] + l * t.shift[r] - t.scale * c[r];
        out.shift[f] = l * t.shift[f];
        for w in &mut out.weights {
            *w = [l * w[0], l * w[1]];
        }
        if let Some(b) = &t.basis {
            out.basis = Some(build_kernel(reference, b.beta() * l, b.form())?);
        }
        Ok(out)
    }
}

/// Everything an observer may inspect after one EM iteration. Clouds and
/// transforms are in the coordinates EM runs in (normalised unless the
/// configuration disables it).
pub struct IterationView<'a, T: Scalar> {
    pub iteration: usize,
    pub x: &'a [Point<T>],
    pub y: &'a [Point<T>],
    /// Variance used by this iteration's E-step and M-step.
    pub sigma2: T,
    pub posterior: &'a Posterior<T>,
    pub before: &'a Transform<T>,
    pub after: &'a Transform<T>,
    pub sigma2_next: T,
    pub objective: T,
}

/// Converged registration state and its trajectories.
#[derive(Debug, Clone)]
pub struct RegistrationResult<T: Scalar> {
    /// Fitted transform in original units.
    pub transform: Transform<T>,
    /// Posterior at the final transform and variance.
    pub posterior: Posterior<T>,
    /// Initial variance followed by one entry per iteration, original units.
    pub sigma2_trajectory: Vec<T>,
    /// Objective at the initial state followed by one entry per iteration,
    /// evaluated in the coordinates EM runs in.
    pub objective_trajectory: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Configuration with data-relative thresholds resolved.
    pub config: RegistrationConfig<T>,
    pub normalization: Normalization<T>,
}

impl<T: Scalar> RegistrationResult<T> {
    pub fn sigma2(&self) -> T {
        *self
            .sigma2_trajectory
            .last()
            .expect("trajectory is never empty")
    }

    pub fn final_objective(&self) -> T {
        *self
            .objective_trajectory
            .last()
            .expect("trajectory is never empty")
    }
}

/// Registers reference cloud `y` onto target cloud `x`.
pub fn register<T: Scalar>(
    x: &[Point<T>],
    y: &[Point<T>],
    cfg: &RegistrationConfig<T>,
) -> Result<RegistrationResult<T>> {
    register_observed(x, y, cfg, |_| {})
}

/// [`register`] with a callback after every iteration.
pub fn register_observed<T: Scalar>(
    x: &[Point<T>],
    y: &[Point<T>],
    cfg: &RegistrationConfig<T>,
    mut observe: impl FnMut(&IterationView<'_, T>),
) -> Result<RegistrationResult<T>> {
    if cfg.mode != Mode::Rigid && y.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "{} registration needs at least 2 reference points",
            cfg.mode
        )));
    }
    check_cloud(x, "target cloud")?;
    check_cloud(y, "reference cloud")?;
    cfg.validate()?;
    let (floor, tol) = resolved_thresholds(x, y, cfg);
    let resolved = RegistrationConfig {
        sigma_floor: Some(floor),
        sigma_tol: Some(tol),
        ..*cfg
    };
    let norm = if cfg.normalize {
        Normalization::of(x, y)
    } else {
        Normalization::identity()
    };
    let l2 = norm.scale * norm.scale;
    let y_raw = y;
    let (xs, ys) = (norm.apply(x), norm.apply(y));
    let (x, y) = (&xs[..], &ys[..]);
    let inner = RegistrationConfig {
        sigma_floor: Some(floor / l2),
        sigma_tol: Some(tol / l2),
        ..*cfg
    };
    let (floor, tol) = (floor / l2, tol / l2);

    let (mut transform, mut sigma2) = initialize(x, y, &inner)?;
    let rigid = transform.rigid_axis;
    let flex = transform.flexible_axis();

    let mut sigma_traj = vec![sigma2];
    let mut obj_traj = vec![objective(x, y, &transform, sigma2, cfg.w, cfg.lambda)?];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        let post = e_step(x, y, &transform, sigma2, cfg.w)?;
        let mut next = transform.clone();
        match cfg.mode {
            Mode::Hybrid => {
                let fit = m_step_similarity(x, y, &post, rigid)?;
                next.scale = fit.scale;
                next.shift[rigid] = fit.shift;
                let basis = next.basis.as_ref().expect("hybrid transform has a basis");
                let w = m_step_displacement(x, y, &post, basis, cfg.lambda, sigma2, &[flex])?;
                for (slot, v) in next.weights.iter_mut().zip(&w[0]) {
                    slot[flex] = *v;
                }
            }
            Mode::Rigid => {
                let fit = m_step_similarity(x, y, &post, rigid)?;
                next.scale = fit.scale;
                next.shift[rigid] = fit.shift;
                next.shift[flex] = m_step_translation(x, y, &post, flex)?;
            }
            Mode::Nonrigid => {
                let basis = next.basis.as_ref().expect("nonrigid transform has a basis");
                let w = m_step_displacement(x, y, &post, basis, cfg.lambda, sigma2, &[0, 1])?;
                for (m, slot) in next.weights.iter_mut().enumerate() {
                    *slot = [w[0][m], w[1][m]];
                }
            }
        }
        if !next.is_finite() {
            return Err(Error::NonFinite("transform after M-step"));
        }
        let sigma2_next = update_sigma(x, y, &next, &post, floor)?;
        let e = objective(x, y, &next, sigma2_next, cfg.w, cfg.lambda)?;
        iterations += 1;
        observe(&IterationView {
            iteration: iterations,
            x,
            y,
            sigma2,
            posterior: &post,
            before: &transform,
            after: &next,
            sigma2_next,
            objective: e,
        });
        sigma_traj.push(sigma2_next);
        obj_traj.push(e);
        let delta = (sigma2_next - sigma2).abs();
        transform = next;
        sigma2 = sigma2_next;
        if delta < tol {
            converged = true;
            break;
        }
    }

    let posterior = e_step(x, y, &transform, sigma2, cfg.w)?;
    let transform = if cfg.normalize {
        norm.denormalize(&transform, y_raw)?
    } else {
        transform
    };
    Ok(RegistrationResult {
        transform,
        posterior,
        sigma2_trajectory: sigma_traj.into_iter().map(|v| v * l2).collect(),
        objective_trajectory: obj_traj,
        iterations,
        converged,
        config: resolved,
        normalization: norm,
    })
}

/// Final objective of one run in a noise-weight scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseScanEntry {
    pub w: f64,
    pub objective: f64,
    pub sigma2: f64,
    pub iterations: usize,
    pub converged: bool,
    pub scale: f64,
    pub shift: f64,
}

/// Runs the registration for `w = 0, 0.1, ..., 0.9` and reports the final
/// objective of each run. Selection is left to the analyst.
pub fn scan_noise_weight<T: Scalar>(
    x: &[Point<T>],
    y: &[Point<T>],
    cfg: &RegistrationConfig<T>,
) -> Result<Vec<NoiseScanEntry>> {
    (0..10)
        .map(|k| {
            let w = T::lit(k as f64 / 10.0);
            let r = register(x, y, &cfg.with_w(w))?;
            Ok(NoiseScanEntry {
                w: w.as_f64(),
                objective: r.final_objective().as_f64(),
                sigma2: r.sigma2().as_f64(),
                iterations: r.iterations,
                converged: r.converged,
                scale: r.transform.s().as_f64(),
                shift: r.transform.t().as_f64(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::config::KernelForm;

    fn cfg() -> RegistrationConfig<f64> {
        RegistrationConfig::default()
    }

    #[test]
    fn coincident_single_points_clamp_sigma() {
        let p = [[3.0, 4.0]];
        let c = RegistrationConfig {
            mode: Mode::Rigid,
            ..cfg()
        };
        let (t, s2) = initialize(&p, &p, &c).unwrap();
        assert_eq!(s2, 1e-8);
        assert_eq!(t.s(), 1.0);
        assert_eq!(t.t(), 0.0);
    }

    #[test]
    fn single_pair_initial_sigma() {
        assert_eq!(initial_sigma2(&[[0.0, 0.0]], &[[2.0, 0.0]]), 2.0);
        let (_, s2) = initialize(
            &[[0.0, 0.0]],
            &[[2.0, 0.0]],
            &RegistrationConfig {
                mode: Mode::Rigid,
                ..cfg()
            },
        )
        .unwrap();
        assert_eq!(s2, 2.0);
    }

    #[test]
    fn empty_clouds_rejected() {
        assert!(matches!(
            initialize::<f64>(&[], &[[0.0, 0.0]], &cfg()),
            Err(Error::EmptyPointSet(_))
        ));
        assert!(register::<f64>(&[[0.0, 0.0]], &[[0.0, 0.0]], &cfg()).is_err());
    }

    #[test]
    fn e_step_single_component_no_noise() {
        let p = e_step_moved(&[[1.0, 1.0]], &[[1.0, 1.0]], 0.5, 0.0).unwrap();
        assert_eq!(p.get(0, 0), 1.0);
        assert_eq!(p.noise_mass()[0], 0.0);
    }

    #[test]
    fn e_step_symmetric_split() {
        let p = e_step_moved(&[[0.0, 0.0]], &[[1.0, 0.0], [-1.0, 0.0]], 0.7, 0.0).unwrap();
        assert_eq!(p.get(0, 0), 0.5);
        assert_eq!(p.get(1, 0), 0.5);
    }

    #[test]
    fn e_step_noise_limit() {
        let x = [[0.0, 0.0], [5.0, 1.0]];
        let y = [[0.5, 0.0], [4.0, 1.0]];
        let p = e_step_moved(&x, &y, 1.0f64, 1.0 - 1e-15).unwrap();
        for n in 0..2 {
            for m in 0..2 {
                assert!(p.get(m, n) < 1e-12);
            }
            assert!((p.noise_mass()[n] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn e_step_far_points_do_not_underflow() {
        // w = 0 and all exponents far below the f64 range
        let p = e_step_moved(&[[0.0, 0.0]], &[[1e3, 0.0], [2e3, 0.0]], 1e-6, 0.0).unwrap();
        assert_eq!(p.get(0, 0), 1.0);
        assert!(p.max_column_defect() <= 1e-12);
        // with noise the far column is pure noise
        let p = e_step_moved(&[[0.0, 0.0]], &[[1e3, 0.0]], 1e-6, 0.2).unwrap();
        assert_eq!(p.noise_mass()[0], 1.0);
    }

    #[test]
    fn e_step_rejects_bad_inputs() {
        assert!(e_step_moved(&[[0.0, 0.0]], &[[0.0, 0.0]], 0.0, 0.0).is_err());
        assert!(e_step_moved(&[[0.0, 0.0]], &[[0.0, 0.0]], 1.0, 1.0).is_err());
        assert!(e_step_moved(&[[0.0, 0.0]], &[[f64::NAN, 0.0]], 1.0, 0.0).is_err());
    }

    fn identity_matching(n: usize) -> Posterior<f64> {
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            p[i * n + i] = 1.0;
        }
        Posterior::from_columns(n, n, p, vec![0.0; n]).unwrap()
    }

    #[test]
    fn exact_regression_recovered() {
        let y: Vec<[f64; 2]> = (0..6).map(|i| [i as f64 * 1.5, (i * i) as f64]).collect();
        let x: Vec<[f64; 2]> = y.iter().map(|p| [2.0 * p[0] + 1.0, p[1]]).collect();
        let (s, t) = m_step_axis1(&x, &y, &identity_matching(6)).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && (t - 1.0).abs() < 1e-12);
        let (s, t) = m_step_axis1(&y, &y, &identity_matching(6)).unwrap();
        assert!((s - 1.0).abs() < 1e-12 && t.abs() < 1e-12);
    }

    #[test]
    fn degenerate_axis_falls_back_to_shift() {
        let y = vec![[2.0, 0.0], [2.0, 1.0], [2.0, 2.0]];
        let x: Vec<[f64; 2]> = y.iter().map(|p| [p[0] + 0.75, p[1]]).collect();
        let fit = m_step_similarity(&x, &y, &identity_matching(3), 0).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.scale, 1.0);
        assert!((fit.shift - 0.75).abs() < 1e-12);
    }

    #[test]
    fn no_displacement_needed() {
        let y: Vec<[f64; 2]> = (0..5).map(|i| [i as f64, (i as f64).sin()]).collect();
        let basis = build_kernel(&y, 2.0, KernelForm::AsPrinted).unwrap();
        let w = m_step_axis2(&y, &y, &identity_matching(5), &basis, 2.0, 0.1).unwrap();
        assert!(w.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn huge_lambda_kills_weights() {
        let y: Vec<[f64; 2]> = (0..5).map(|i| [i as f64, 0.0]).collect();
        let x: Vec<[f64; 2]> = y.iter().map(|p| [p[0], p[0].cos()]).collect();
        let basis = build_kernel(&y, 2.0, KernelForm::AsPrinted).unwrap();
        let w = m_step_axis2(&x, &y, &identity_matching(5), &basis, 1e12, 0.5).unwrap();
        assert!(w.iter().all(|v| v.abs() < 1e-11));
    }

    #[test]
    fn sigma_update_closed_forms() {
        let post = identity_matching(1);
        let s2 = update_sigma_moved(&[[0.0, 0.0]], &[[3.0, 4.0]], &post, 1e-9).unwrap();
        assert_eq!(s2, 12.5);
        let s2 = update_sigma_moved(&[[1.0, 1.0]], &[[1.0, 1.0]], &post, 1e-9).unwrap();
        assert_eq!(s2, 1e-9);
    }

    #[test]
    fn unit_density_gives_zero_loss() {
        let s2 = 1.0 / std::f64::consts::TAU;
        let e = negative_log_likelihood_moved(&[[2.0, 2.0]], &[[2.0, 2.0]], s2, 0.0).unwrap();
        assert!(e.abs() < 1e-15);
    }

    #[test]
    fn zero_weights_have_no_penalty() {
        let y: Vec<[f64; 2]> = (0..4).map(|i| [i as f64, 1.0]).collect();
        let (t, s2) = initialize(&y, &y, &cfg()).unwrap();
        let e = objective(&y, &y, &t, s2, 0.1, 2.0).unwrap();
        let e1 = negative_log_likelihood_moved(&y, &y, s2, 0.1).unwrap();
        assert_eq!(e, e1);
    }
}
