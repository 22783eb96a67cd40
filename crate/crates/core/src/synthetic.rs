//! Seeded synthetic peak clouds, chromatograms and masks with known
//! ground-truth deformations.
//!
//! Every generator takes an explicit seed and uses ChaCha8, so outputs are
//! reproducible across platforms.

use std::f64::consts::TAU;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon};
use crate::grid::{AxisCalibration, Grid};
use crate::io::{AreaOfInterest, Blob, TemplateMask};
use crate::peaks::Peaks;
use crate::registration::Transform;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(sd: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sd).map_err(|e| Error::InvalidParameter(format!("normal sd {sd}: {e}")))
}

/// Axis-aligned retention-time box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Point<f64>,
    pub hi: Point<f64>,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            lo: [0.0, 0.0],
            hi: [100.0, 100.0],
        }
    }
}

impl Bounds {
    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    fn validate(&self) -> Result<()> {
        if !(self.width(0) > 0.0 && self.width(1) > 0.0) {
            return Err(Error::InvalidParameter(
                "bounds must have positive extent".into(),
            ));
        }
        Ok(())
    }

    fn uniform(&self, rng: &mut ChaCha8Rng) -> Point<f64> {
        [
            rng.random_range(self.lo[0]..self.hi[0]),
            rng.random_range(self.lo[1]..self.hi[1]),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakGenOptions {
    /// Minimum Euclidean distance between generated points; 0 disables.
    pub min_separation: f64,
    pub intensity: (f64, f64),
}

impl Default for PeakGenOptions {
    fn default() -> Self {
        PeakGenOptions {
            min_separation: 0.0,
            intensity: (50.0, 250.0),
        }
    }
}

/// `n` uniform points in `bounds` with uniform intensities.
pub fn gen_peaks(seed: u64, n: usize, bounds: Bounds) -> Result<Peaks<f64>> {
    gen_peaks_with(seed, n, bounds, &PeakGenOptions::default())
}

pub fn gen_peaks_with(
    seed: u64,
    n: usize,
    bounds: Bounds,
    opts: &PeakGenOptions,
) -> Result<Peaks<f64>> {
    bounds.validate()?;
    let (ilo, ihi) = opts.intensity;
    if !(ilo > 0.0 && ihi >= ilo) {
        return Err(Error::InvalidParameter(
            "intensity range must be positive".into(),
        ));
    }
    let mut rng = rng(seed);
    let sep2 = opts.min_separation * opts.min_separation;
    let mut points: Vec<Point<f64>> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while points.len() < n {
        attempts += 1;
        if attempts > 1000 * n.max(1) {
            return Err(Error::InvalidParameter(format!(
                "cannot place {n} points with separation {}",
                opts.min_separation
            )));
        }
        let p = bounds.uniform(&mut rng);
        let clear = points.iter().all(|q| {
            let (d0, d1) = (p[0] - q[0], p[1] - q[1]);
            d0 * d0 + d1 * d1 >= sep2
        });
        if clear {
            points.push(p);
        }
    }
    let intensities = (0..n)
        .map(|_| {
            if ihi > ilo {
                rng.random_range(ilo..ihi)
            } else {
                ilo
            }
        })
        .collect();
    Ok(Peaks {
        points,
        intensities,
        source_indices: vec![(0, 0); n],
    })
}

/// Output geometry of a rendered chromatogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSpec {
    pub rows: usize,
    pub cols: usize,
    pub axes: AxisCalibration<f64>,
    /// Gaussian standard deviation of a peak along each axis (retention units).
    pub widths: [f64; 2],
    pub noise_sd: f64,
    pub baseline: f64,
    /// Adds a hyperbolic column-bleeding trace.
    pub bleeding: bool,
}

impl RenderSpec {
    /// Grid covering `bounds` with `rows x cols` pixel centres.
    pub fn covering(bounds: Bounds, rows: usize, cols: usize) -> Self {
        RenderSpec {
            rows,
            cols,
            axes: AxisCalibration {
                axis1_origin: bounds.lo[0],
                axis1_step: bounds.width(0) / (cols - 1) as f64,
                axis2_origin: bounds.lo[1],
                axis2_step: bounds.width(1) / (rows - 1) as f64,
            },
            widths: [0.6, 0.8],
            noise_sd: 0.0,
            baseline: 0.0,
            bleeding: false,
        }
    }
}

/// Axis-2 position of the bleeding trace at a given axis-1 position: a
/// hyperbola rising towards the top of the second dimension.
pub fn bleeding_curve(spec: &RenderSpec, axis1: f64) -> f64 {
    let a = spec.axes;
    let x0 = a.axis1_origin;
    let x_span = a.axis1_step * (spec.cols - 1) as f64;
    let y0 = a.axis2_origin;
    let y_span = a.axis2_step * (spec.rows - 1) as f64;
    let u = (axis1 - x0) / x_span;
    y0 + y_span * (0.55 + 0.1 / (1.15 - u))
}

/// Sum of Gaussian bumps (amplitude = peak intensity) plus baseline and
/// clipped Gaussian noise.
pub fn gen_grid_from_peaks(peaks: &Peaks<f64>, spec: &RenderSpec, seed: u64) -> Result<Grid<f64>> {
    spec.axes.validate()?;
    if !(spec.widths[0] > 0.0 && spec.widths[1] > 0.0) {
        return Err(Error::InvalidParameter(
            "peak widths must be positive".into(),
        ));
    }
    if !(spec.noise_sd >= 0.0 && spec.baseline >= 0.0) {
        return Err(Error::InvalidParameter(
            "noise and baseline must be non-negative".into(),
        ));
    }
    let mut values = vec![spec.baseline; spec.rows * spec.cols];
    let [w0, w1] = spec.widths;
    let a = spec.axes;
    for (p, &amp) in peaks.points.iter().zip(&peaks.intensities) {
        let c_lo = ((p[0] - 5.0 * w0 - a.axis1_origin) / a.axis1_step)
            .floor()
            .max(0.0) as usize;
        let c_hi = ((p[0] + 5.0 * w0 - a.axis1_origin) / a.axis1_step).ceil();
        let r_lo = ((p[1] - 5.0 * w1 - a.axis2_origin) / a.axis2_step)
            .floor()
            .max(0.0) as usize;
        let r_hi = ((p[1] + 5.0 * w1 - a.axis2_origin) / a.axis2_step).ceil();
        if c_hi < 0.0 || r_hi < 0.0 {
            continue;
        }
        let c_hi = (c_hi as usize).min(spec.cols - 1);
        let r_hi = (r_hi as usize).min(spec.rows - 1);
        for r in r_lo..=r_hi {
            for c in c_lo..=c_hi {
                let q = a.to_retention(r as f64, c as f64);
                let z0 = (q[0] - p[0]) / w0;
                let z1 = (q[1] - p[1]) / w1;
                values[r * spec.cols + c] += amp * (-0.5 * (z0 * z0 + z1 * z1)).exp();
            }
        }
    }
    if spec.bleeding {
        let amp = peaks.intensities.iter().copied().fold(0.0, f64::max) * 0.5;
        for r in 0..spec.rows {
            for c in 0..spec.cols {
                let q = a.to_retention(r as f64, c as f64);
                let z = (q[1] - bleeding_curve(spec, q[0])) / w1;
                values[r * spec.cols + c] += amp * (-0.5 * z * z).exp();
            }
        }
    }
    if spec.noise_sd > 0.0 {
        let mut rng = rng(seed);
        let dist = normal(spec.noise_sd)?;
        for v in &mut values {
            *v = (*v + dist.sample(&mut rng)).max(0.0);
        }
    }
    Grid::new(spec.rows, spec.cols, values, spec.axes)
}

/// One term `amplitude * sin(2 pi (f1 u1 + f2 u2) + phase)` of the axis-2
/// field, with `u` the position normalised to `[0, 1]` over the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: [f64; 2],
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSpec {
    pub s: f64,
    pub t: f64,
    pub field: Vec<Sinusoid>,
    pub jitter_sd: f64,
    pub outlier_fraction: f64,
    /// Normalisation box for the field and sampling box for outliers.
    pub bounds: Bounds,
}

impl GroundTruthSpec {
    /// Identity similarity, no field, no jitter, no outliers.
    pub fn identity() -> Self {
        GroundTruthSpec {
            s: 1.0,
            t: 0.0,
            field: Vec::new(),
            jitter_sd: 0.0,
            outlier_fraction: 0.0,
            bounds: Bounds::default(),
        }
    }

    /// Noise-free image of a reference point.
    pub fn map_point(&self, p: Point<f64>) -> Point<f64> {
        let u = [
            (p[0] - self.bounds.lo[0]) / self.bounds.width(0),
            (p[1] - self.bounds.lo[1]) / self.bounds.width(1),
        ];
        let d: f64 = self
            .field
            .iter()
            .map(|s| {
                s.amplitude
                    * (TAU * (s.frequency[0] * u[0] + s.frequency[1] * u[1]) + s.phase).sin()
            })
            .sum();
        [self.s * p[0] + self.t, p[1] + d]
    }
}

/// Deformed copy of a reference cloud with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: GroundTruthSpec,
    pub seed: u64,
    /// Noise-free images of every reference point (including those later
    /// replaced by outliers).
    pub mapped: Vec<Point<f64>>,
    /// Indices replaced by uniform outliers, ascending.
    pub outliers: Vec<usize>,
}

impl GroundTruth {
    pub fn is_inlier(&self, i: usize) -> bool {
        self.outliers.binary_search(&i).is_err()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes") + "\n"
    }
}

/// Maps every point through the similarity + field, adds isotropic jitter
/// and replaces exactly `round(outlier_fraction * N)` points by uniform
/// draws inside the bounds. Index `i` of the output corresponds to index `i`
/// of the input.
pub fn apply_ground_truth(
    peaks: &Peaks<f64>,
    spec: &GroundTruthSpec,
    seed: u64,
) -> Result<(Peaks<f64>, GroundTruth)> {
    if !(0.0..1.0).contains(&spec.outlier_fraction) {
        return Err(Error::InvalidParameter(format!(
            "outlier_fraction must lie in [0, 1), got {}",
            spec.outlier_fraction
        )));
    }
    if !(spec.jitter_sd >= 0.0 && spec.s.is_finite() && spec.t.is_finite()) {
        return Err(Error::InvalidParameter(
            "invalid ground-truth parameters".into(),
        ));
    }
    spec.bounds.validate()?;
    let mut rng = rng(seed);
    let mapped: Vec<Point<f64>> = peaks.points.iter().map(|&p| spec.map_point(p)).collect();
    let mut points = mapped.clone();
    if spec.jitter_sd > 0.0 {
        let dist = normal(spec.jitter_sd)?;
        for p in &mut points {
            p[0] += dist.sample(&mut rng);
            p[1] += dist.sample(&mut rng);
        }
    }
    let n = points.len();
    let k = (spec.outlier_fraction * n as f64).round() as usize;
    let mut outliers = sample(&mut rng, n, k).into_vec();
    outliers.sort_unstable();
    for &i in &outliers {
        points[i] = spec.bounds.uniform(&mut rng);
    }
    let out = Peaks {
        points,
        intensities: peaks.intensities.clone(),
        source_indices: vec![(0, 0); n],
    };
    Ok((
        out,
        GroundTruth {
            spec: spec.clone(),
            seed,
            mapped,
            outliers,
        },
    ))
}

/// Mean distance between the transformed reference points and their
/// ground-truth partners in the target, over inliers only.
pub fn inlier_residual(
    transform: &Transform<f64>,
    reference: &[Point<f64>],
    target: &[Point<f64>],
    truth: &GroundTruth,
) -> f64 {
    let moved = transform.transform_points(reference);
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, (m, x)) in moved.iter().zip(target).enumerate() {
        if truth.is_inlier(i) {
            sum += ((m[0] - x[0]).powi(2) + (m[1] - x[1]).powi(2)).sqrt();
            n += 1;
        }
    }
    sum / n.max(1) as f64
}

/// One hexagonal blob per peak, families assigned cyclically.
pub fn gen_mask(
    peaks: &Peaks<f64>,
    radius: [f64; 2],
    families: &[&str],
) -> Result<TemplateMask<f64>> {
    if families.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one family is required".into(),
        ));
    }
    let blobs = peaks
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let verts = (0..6)
                .map(|k| {
                    let a = TAU * k as f64 / 6.0;
                    [p[0] + radius[0] * a.cos(), p[1] + radius[1] * a.sin()]
                })
                .collect();
            Ok(Blob {
                name: format!("blob{i:03}"),
                family: families[i % families.len()].to_string(),
                polygon: Polygon::new(verts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TemplateMask::new(blobs)
}

/// Closed "brush stroke" around the centre: `n` vertices on a wobbly ellipse.
pub fn gen_brush_polygon(
    seed: u64,
    n: usize,
    centre: Point<f64>,
    radius: [f64; 2],
) -> Result<Polygon<f64>> {
    let mut rng = rng(seed);
    let verts = (0..n)
        .map(|k| {
            let a = TAU * k as f64 / n as f64;
            let wobble = 1.0 + rng.random_range(-0.05..0.05);
            [
                centre[0] + radius[0] * wobble * a.cos(),
                centre[1] + radius[1] * wobble * a.sin(),
            ]
        })
        .collect();
    Polygon::new(verts)
}

/// Settings for a complete reference/target chromatogram pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSpec {
    pub n_peaks: usize,
    pub bounds: Bounds,
    pub min_separation: f64,
    pub rows: usize,
    pub cols: usize,
    pub widths: [f64; 2],
    pub noise_sd: f64,
    pub bleeding: bool,
    pub truth: GroundTruthSpec,
    pub families: Vec<String>,
}

impl Default for PairSpec {
    fn default() -> Self {
        PairSpec {
            n_peaks: 200,
            bounds: Bounds::default(),
            min_separation: 3.0,
            rows: 201,
            cols: 401,
            widths: [0.6, 0.8],
            noise_sd: 0.5,
            bleeding: false,
            truth: paper_like_truth(),
            families: [
                "n-paraffins",
                "i-paraffins",
                "naphthenes",
                "monoaromatics",
                "diaromatics",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

/// `s = 1.05`, `t = 3`, a two-term axis-2 field of total amplitude 2 (2 % of
/// the 100-unit range), jitter 0.2 and 10 % outliers.
pub fn paper_like_truth() -> GroundTruthSpec {
    GroundTruthSpec {
        s: 1.05,
        t: 3.0,
        field: vec![
            Sinusoid {
                amplitude: 1.5,
                frequency: [1.0, 0.0],
                phase: 0.3,
            },
            Sinusoid {
                amplitude: 0.5,
                frequency: [0.5, 0.5],
                phase: 1.1,
            },
        ],
        jitter_sd: 0.2,
        outlier_fraction: 0.1,
        bounds: Bounds::default(),
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub reference_peaks: Peaks<f64>,
    pub target_peaks: Peaks<f64>,
    pub reference: Grid<f64>,
    pub target: Grid<f64>,
    pub mask: TemplateMask<f64>,
    pub aoi: AreaOfInterest<f64>,
    pub truth: GroundTruth,
}

/// Reference peaks, their deformed copy, both rendered chromatograms, a
/// hexagon-per-peak mask drawn on the reference and a whole-domain AOI.
pub fn synthetic_pair(seed: u64, spec: &PairSpec) -> Result<SyntheticPair> {
    let reference_peaks = gen_peaks_with(
        seed,
        spec.n_peaks,
        spec.bounds,
        &PeakGenOptions {
            min_separation: spec.min_separation,
            ..PeakGenOptions::default()
        },
    )?;
    let (target_peaks, truth) =
        apply_ground_truth(&reference_peaks, &spec.truth, seed.wrapping_add(1))?;
    let mut render = RenderSpec::covering(spec.bounds, spec.rows, spec.cols);
    render.widths = spec.widths;
    render.noise_sd = spec.noise_sd;
    render.bleeding = spec.bleeding;
    let reference = gen_grid_from_peaks(&reference_peaks, &render, seed.wrapping_add(2))?;
    let target = gen_grid_from_peaks(&target_peaks, &render, seed.wrapping_add(3))?;
    let fams: Vec<&str> = spec.families.iter().map(String::as_str).collect();
    let r = spec.min_separation * 0.45;
    let mask = gen_mask(&reference_peaks, [r, r], &fams)?;
    let aoi = AreaOfInterest::new(
        Polygon::rectangle(spec.bounds.lo, spec.bounds.hi)?,
        "whole domain",
    );
    Ok(SyntheticPair {
        reference_peaks,
        target_peaks,
        reference,
        target,
        mask,
        aoi,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_determinism() {
        let a = gen_peaks(7, 30, Bounds::default()).unwrap();
        let b = gen_peaks(7, 30, Bounds::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_peaks(8, 30, Bounds::default()).unwrap());
        assert!(a
            .points
            .iter()
            .all(|p| (0.0..100.0).contains(&p[0]) && (0.0..100.0).contains(&p[1])));
    }

    #[test]
    fn min_separation_holds() {
        let opts = PeakGenOptions {
            min_separation: 4.0,
            ..PeakGenOptions::default()
        };
        let p = gen_peaks_with(1, 150, Bounds::default(), &opts).unwrap();
        for i in 0..p.len() {
            for j in 0..i {
                let d = ((p.points[i][0] - p.points[j][0]).powi(2)
                    + (p.points[i][1] - p.points[j][1]).powi(2))
                .sqrt();
                assert!(d >= 4.0);
            }
        }
    }

    #[test]
    fn pure_similarity_copy() {
        let y = gen_peaks(3, 40, Bounds::default()).unwrap();
        let spec = GroundTruthSpec {
            s: 1.2,
            t: -2.0,
            ..GroundTruthSpec::identity()
        };
        let (x, truth) = apply_ground_truth(&y, &spec, 9).unwrap();
        assert!(truth.outliers.is_empty());
        for (a, b) in y.points.iter().zip(&x.points) {
            assert_eq!(b[0], 1.2 * a[0] - 2.0);
            assert_eq!(b[1], a[1]);
        }
    }

    #[test]
    fn exact_outlier_count() {
        let y = gen_peaks(3, 200, Bounds::default()).unwrap();
        let spec = GroundTruthSpec {
            outlier_fraction: 0.1,
            ..GroundTruthSpec::identity()
        };
        let (x, truth) = apply_ground_truth(&y, &spec, 5).unwrap();
        assert_eq!(truth.outliers.len(), 20);
        let changed = y
            .points
            .iter()
            .zip(&x.points)
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 20);
        let bad = GroundTruthSpec {
            outlier_fraction: 1.0,
            ..GroundTruthSpec::identity()
        };
        assert!(apply_ground_truth(&y, &bad, 5).is_err());
    }

    #[test]
    fn rendered_bump_peaks_at_its_centre() {
        let peaks = Peaks {
            points: vec![[50.0, 50.0]],
            intensities: vec![100.0],
            source_indices: vec![(0, 0)],
        };
        let spec = RenderSpec::covering(Bounds::default(), 101, 101);
        let g = gen_grid_from_peaks(&peaks, &spec, 0).unwrap();
        assert_eq!(g.get(50, 50), 100.0);
        assert_eq!(g.max_value(), 100.0);
        assert_eq!(g.get(0, 0), 0.0);
    }

    #[test]
    fn mask_has_one_blob_per_peak() {
        let y = gen_peaks(11, 280, Bounds::default()).unwrap();
        let m = gen_mask(&y, [0.3, 0.3], &["a", "b"]).unwrap();
        assert_eq!(m.len(), 280);
        assert_eq!(m.families(), vec!["a", "b"]);
    }
}
