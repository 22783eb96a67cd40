//! Alignment scores between two chromatograms over an area of interest.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::AreaOfInterest;
use crate::scalar::Scalar;

/// Which pixels take part in a score: centres inside the AOI, or all of them.
pub fn aoi_pixel_mask<T: Scalar>(grid: &Grid<T>, aoi: Option<&AreaOfInterest<T>>) -> Vec<bool> {
    let (rows, cols) = grid.shape();
    match aoi {
        None => vec![true; rows * cols],
        Some(a) => (0..rows * cols)
            .map(|i| a.contains(grid.retention_of(i / cols, i % cols)))
            .collect(),
    }
}

fn check_pair<T: Scalar>(a: &Grid<T>, b: &Grid<T>) -> Result<()> {
    if !a.same_shape(b) || a.axes() != b.axes() {
        return Err(Error::ShapeMismatch(
            "scored grids must share shape and axis calibration".into(),
        ));
    }
    Ok(())
}

/// Pearson correlation of paired intensities at AOI pixel centres.
pub fn correlation_coefficient<T: Scalar>(
    a: &Grid<T>,
    b: &Grid<T>,
    aoi: Option<&AreaOfInterest<T>>,
) -> Result<T> {
    check_pair(a, b)?;
    let inside = aoi_pixel_mask(a, aoi);
    correlation_over(a, b, &inside)
}

fn correlation_over<T: Scalar>(a: &Grid<T>, b: &Grid<T>, inside: &[bool]) -> Result<T> {
    let pairs: Vec<(T, T)> = a
        .values()
        .iter()
        .zip(b.values())
        .zip(inside)
        .filter(|(_, &keep)| keep)
        .map(|((&x, &y), _)| (x, y))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::AoiTooSmall(format!(
            "{} pixel(s) inside the area of interest, need 2",
            pairs.len()
        )));
    }
    let n = T::from_usize_lossy(pairs.len());
    let ma = pairs.iter().map(|p| p.0).sum::<T>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for &(x, y) in &pairs {
        let (dx, dy) = (x - ma, y - mb);
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    if saa == T::zero() || sbb == T::zero() {
        return Err(Error::UndefinedCorrelation(
            "an image is constant over the area of interest".into(),
        ));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt()))
        .max(-T::one())
        .min(T::one()))
}

/// SSIM settings: square uniform window and stabilisation constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams<T> {
    pub window: usize,
    pub k1: T,
    pub k2: T,
    /// Dynamic range `L`. `None`: max minus min over both images (1 if flat).
    pub dynamic_range: Option<T>,
}

impl<T: Scalar> Default for SsimParams<T> {
    fn default() -> Self {
        SsimParams {
            window: 8,
            k1: T::lit(0.01),
            k2: T::lit(0.03),
            dynamic_range: None,
        }
    }
}

/// Mean local SSIM over every `window x window` block (stride 1) whose pixel
/// centres all lie inside the AOI. Window statistics use population variance.
pub fn ssim<T: Scalar>(
    a: &Grid<T>,
    b: &Grid<T>,
    aoi: Option<&AreaOfInterest<T>>,
    params: &SsimParams<T>,
) -> Result<T> {
    check_pair(a, b)?;
    let inside = aoi_pixel_mask(a, aoi);
    ssim_over(a, b, &inside, params).map(|(v, _)| v)
}

/// Top-left corners of windows fully inside `inside`, via a summed-area table.
fn window_origins(inside: &[bool], rows: usize, cols: usize, k: usize) -> Vec<(usize, usize)> {
    if k == 0 || k > rows || k > cols {
        return Vec::new();
    }
    let mut sat = vec![0usize; (rows + 1) * (cols + 1)];
    for r in 0..rows {
        for c in 0..cols {
            sat[(r + 1) * (cols + 1) + c + 1] = usize::from(inside[r * cols + c])
                + sat[r * (cols + 1) + c + 1]
                + sat[(r + 1) * (cols + 1) + c]
                - sat[r * (cols + 1) + c];
        }
    }
    let at = |r: usize, c: usize| sat[r * (cols + 1) + c];
    let mut out = Vec::new();
    for r in 0..=rows - k {
        for c in 0..=cols - k {
            if at(r + k, c + k) + at(r, c) - at(r, c + k) - at(r + k, c) == k * k {
                out.push((r, c));
            }
        }
    }
    out
}

fn ssim_over<T: Scalar>(
    a: &Grid<T>,
    b: &Grid<T>,
    inside: &[bool],
    params: &SsimParams<T>,
) -> Result<(T, usize)> {
    let k = params.window;
    if k == 0 {
        return Err(Error::InvalidParameter(
            "SSIM window must be at least 1".into(),
        ));
    }
    let (rows, cols) = a.shape();
    let origins = window_origins(inside, rows, cols, k);
    if origins.is_empty() {
        return Err(Error::AoiTooSmall(format!(
            "no {k}x{k} window fits inside the area of interest"
        )));
    }
    let l = params.dynamic_range.unwrap_or_else(|| {
        let hi = a.max_value().max(b.max_value());
        let lo = a.min_value().min(b.min_value());
        if hi > lo {
            hi - lo
        } else {
            T::one()
        }
    });
    let c1 = (params.k1 * l) * (params.k1 * l);
    let c2 = (params.k2 * l) * (params.k2 * l);
    let n = T::from_usize_lossy(k * k);
    let two = T::lit(2.0);
    let local: Vec<T> = origins
        .par_iter()
        .map(|&(r0, c0)| {
            let (mut sa, mut sb) = (T::zero(), T::zero());
            for r in r0..r0 + k {
                for c in c0..c0 + k {
                    sa = sa + a.get(r, c);
                    sb = sb + b.get(r, c);
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let (mut vaa, mut vbb, mut vab) = (T::zero(), T::zero(), T::zero());
            for r in r0..r0 + k {
                for c in c0..c0 + k {
                    let da = a.get(r, c) - ma;
                    let db = b.get(r, c) - mb;
                    vaa = vaa + da * da;
                    vbb = vbb + db * db;
                    vab = vab + da * db;
                }
            }
            let (vaa, vbb, vab) = (vaa / n, vbb / n, vab / n);
            ((two * ma * mb + c1) * (two * vab + c2))
                / ((ma * ma + mb * mb + c1) * (vaa + vbb + c2))
        })
        .collect();
    let count = local.len();
    Ok((
        local.into_iter().sum::<T>() / T::from_usize_lossy(count),
        count,
    ))
}

/// Both indices over the same AOI pixel set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlignmentScore {
    pub cc: f64,
    pub ssim: f64,
    pub pixel_count: usize,
    pub ssim_windows: usize,
}

pub fn score<T: Scalar>(
    a: &Grid<T>,
    b: &Grid<T>,
    aoi: Option<&AreaOfInterest<T>>,
    params: &SsimParams<T>,
) -> Result<AlignmentScore> {
    check_pair(a, b)?;
    let inside = aoi_pixel_mask(a, aoi);
    let cc = correlation_over(a, b, &inside)?;
    let (s, windows) = ssim_over(a, b, &inside, params)?;
    Ok(AlignmentScore {
        cc: cc.as_f64(),
        ssim: s.as_f64(),
        pixel_count: inside.iter().filter(|&&v| v).count(),
        ssim_windows: windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use crate::grid::AxisCalibration;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Grid<f64> {
        Grid::from_fn(rows, cols, AxisCalibration::pixel_units(), |_, _| {
            rng.random_range(0.0..100.0)
        })
        .unwrap()
    }

    #[test]
    fn cc_self_and_negated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_grid(&mut rng, 12, 10);
        assert!((correlation_coefficient(&a, &a, None).unwrap() - 1.0).abs() <= 1e-12);
        let b = a.map(|v| 200.0 - v);
        assert!((correlation_coefficient(&a, &b, None).unwrap() + 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cc_constant_is_undefined() {
        let a = Grid::from_fn(4, 4, AxisCalibration::pixel_units(), |r, c| (r + c) as f64).unwrap();
        let b = a.filled_like(3.0);
        assert!(matches!(
            correlation_coefficient(&a, &b, None),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn cc_respects_aoi() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_grid(&mut rng, 10, 10);
        let mut b = a.clone();
        for r in 0..10 {
            for c in 5..10 {
                b.set(r, c, rng.random_range(0.0..100.0));
            }
        }
        let left = AreaOfInterest::new(Polygon::rectangle([0.0, 0.0], [4.0, 9.0]).unwrap(), "l");
        assert!((correlation_coefficient(&a, &b, Some(&left)).unwrap() - 1.0).abs() < 1e-12);
        assert!(correlation_coefficient(&a, &b, None).unwrap() < 0.99);
    }

    #[test]
    fn ssim_identity_is_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_grid(&mut rng, 20, 17);
        assert_eq!(ssim(&a, &a, None, &SsimParams::default()).unwrap(), 1.0);
    }

    #[test]
    fn ssim_penalises_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_grid(&mut rng, 16, 16);
        let p = SsimParams {
            dynamic_range: Some(100.0),
            ..SsimParams::default()
        };
        let b = a.map(|v| v + 100.0);
        assert!(ssim(&a, &b, None, &p).unwrap() < 1.0);
    }

    #[test]
    fn ssim_window_count_and_small_aoi() {
        let g = Grid::from_fn(10, 12, AxisCalibration::pixel_units(), |r, c| {
            (r * c) as f64
        })
        .unwrap();
        let s = score(&g, &g, None, &SsimParams::default()).unwrap();
        assert_eq!(s.ssim_windows, 3 * 5);
        assert_eq!(s.pixel_count, 120);
        let tiny = AreaOfInterest::new(Polygon::rectangle([0.0, 0.0], [5.0, 5.0]).unwrap(), "t");
        assert!(matches!(
            ssim(&g, &g, Some(&tiny), &SsimParams::default()),
            Err(Error::AoiTooSmall(_))
        ));
    }
}
