//! Pushing the fitted transform through points, template masks and images.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::{Point, Polygon};
use crate::grid::{AxisCalibration, Grid};
use crate::io::{Blob, TemplateMask};
use crate::registration::Transform;
use crate::scalar::Scalar;

pub fn transform_points<T: Scalar>(transform: &Transform<T>, pts: &[Point<T>]) -> Vec<Point<T>> {
    transform.transform_points(pts)
}

/// Non-fatal problem found while warping a mask.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WarpWarning {
    pub blob: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpedMask<T: Scalar> {
    pub mask: TemplateMask<T>,
    pub warnings: Vec<WarpWarning>,
}

/// Maps every blob vertex through `transform`. Names, families and order are
/// kept; blobs that fold onto themselves are emitted anyway and flagged.
pub fn warp_mask<T: Scalar>(
    transform: &Transform<T>,
    mask: &TemplateMask<T>,
) -> Result<WarpedMask<T>> {
    let mut warnings = Vec::new();
    let mut blobs = Vec::with_capacity(mask.len());
    for blob in mask.blobs() {
        let verts = transform.transform_points(blob.polygon.vertices());
        let polygon = Polygon::new_unchecked_simplicity(verts)?;
        if let Some((i, j)) = polygon.first_self_intersection() {
            warnings.push(WarpWarning {
                blob: blob.name.clone(),
                message: format!("warped outline self-intersects (edges {i} and {j})"),
            });
        }
        blobs.push(Blob {
            name: blob.name.clone(),
            family: blob.family.clone(),
            polygon,
        });
    }
    Ok(WarpedMask {
        mask: TemplateMask::new(blobs)?,
        warnings,
    })
}

/// Output shape and calibration of a warped image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry<T: Scalar> {
    pub rows: usize,
    pub cols: usize,
    pub axes: AxisCalibration<T>,
}

impl<T: Scalar> GridGeometry<T> {
    pub fn of(grid: &Grid<T>) -> Self {
        GridGeometry {
            rows: grid.rows(),
            cols: grid.cols(),
            axes: *grid.axes(),
        }
    }
}

const SNAP: f64 = 1e-9;

#[inline]
fn snap<T: Scalar>(v: T) -> T {
    let r = v.round();
    if (v - r).abs() <= T::lit(SNAP) {
        r
    } else {
        v
    }
}

/// Bilinear interpolation at retention coordinate `p`.
///
/// Positions within `1e-9` pixel of a pixel centre read that pixel exactly.
/// Points outside the pixel-centre hull return 0.
pub fn bilinear_sample<T: Scalar>(grid: &Grid<T>, p: Point<T>) -> T {
    let (r, c) = grid.axes().to_pixel(p);
    bilinear_at_pixel(grid, snap(r), snap(c))
}

fn bilinear_at_pixel<T: Scalar>(grid: &Grid<T>, r: T, c: T) -> T {
    let max_r = T::from_usize_lossy(grid.rows() - 1);
    let max_c = T::from_usize_lossy(grid.cols() - 1);
    if !(r >= T::zero() && c >= T::zero() && r <= max_r && c <= max_c) {
        return T::zero();
    }
    let r0 = r.floor();
    let c0 = c.floor();
    let fr = r - r0;
    let fc = c - c0;
    let (ri, ci) = (r0.to_usize().unwrap(), c0.to_usize().unwrap());
    let along = |row: usize| {
        let v0 = grid.get(row, ci);
        if fc == T::zero() {
            v0
        } else {
            (T::one() - fc) * v0 + fc * grid.get(row, ci + 1)
        }
    };
    let top = along(ri);
    if fr == T::zero() {
        top
    } else {
        (T::one() - fr) * top + fr * along(ri + 1)
    }
}

/// Resamples `target` onto the reference geometry: each reference pixel
/// centre `u` receives `target(T(u))`.
pub fn warp_image<T: Scalar>(
    transform: &Transform<T>,
    target: &Grid<T>,
    geometry: &GridGeometry<T>,
) -> Result<Grid<T>> {
    let cols = geometry.cols;
    let mut values = vec![T::zero(); geometry.rows * cols];
    values
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(r, row)| {
            for (c, out) in row.iter_mut().enumerate() {
                let u = geometry
                    .axes
                    .to_retention(T::from_usize_lossy(r), T::from_usize_lossy(c));
                *out = bilinear_sample(target, transform.apply(u));
            }
        });
    Grid::new(geometry.rows, cols, values, geometry.axes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::{build_kernel, KernelForm, Mode};

    fn ramp() -> Grid<f64> {
        Grid::from_fn(6, 9, AxisCalibration::pixel_units(), |r, c| {
            (r * 10 + c) as f64
        })
        .unwrap()
    }

    fn rigid(s: f64, t: f64) -> Transform<f64> {
        let mut tr = Transform::identity(Mode::Rigid, 0, None).unwrap();
        tr.scale = s;
        tr.shift[0] = t;
        tr
    }

    #[test]
    fn sample_at_centres_and_midpoints() {
        let g = ramp();
        assert_eq!(bilinear_sample(&g, [3.0, 2.0]), 23.0);
        let two = Grid::from_rows(
            &[vec![0.0, 10.0], vec![0.0, 10.0]],
            AxisCalibration::pixel_units(),
        )
        .unwrap();
        assert_eq!(bilinear_sample(&two, [0.5, 0.0]), 5.0);
        assert_eq!(bilinear_sample(&two, [1.5, 0.0]), 0.0);
        assert_eq!(bilinear_sample(&two, [-0.1, 0.0]), 0.0);
    }

    #[test]
    fn last_pixel_is_in_bounds() {
        let g = ramp();
        assert_eq!(bilinear_sample(&g, [8.0, 5.0]), 58.0);
    }

    #[test]
    fn identity_warp_is_exact() {
        let axes = AxisCalibration {
            axis1_origin: 3.7,
            axis1_step: 0.0333,
            axis2_origin: 0.1,
            axis2_step: 0.0125,
        };
        let g = ramp().with_axes(axes).unwrap();
        let t = rigid(1.0, 0.0);
        assert_eq!(warp_image(&t, &g, &GridGeometry::of(&g)).unwrap(), g);
    }

    #[test]
    fn integer_shift_matches_direct_shift() {
        let g = ramp();
        let out = warp_image(&rigid(1.0, 5.0), &g, &GridGeometry::of(&g)).unwrap();
        for r in 0..6 {
            for c in 0..9 {
                let want = if c + 5 < 9 { g.get(r, c + 5) } else { 0.0 };
                assert_eq!(out.get(r, c), want);
            }
        }
    }

    #[test]
    fn mask_scale_doubles_axis1() {
        let blob = Blob {
            name: "a".into(),
            family: "f".into(),
            polygon: Polygon::new(vec![[1.0, 1.0], [2.0, 1.0], [1.5, 2.0]]).unwrap(),
        };
        let mask = TemplateMask::new(vec![blob]).unwrap();
        let w = warp_mask(&rigid(2.0, 0.0), &mask).unwrap();
        assert!(w.warnings.is_empty());
        let v = w.mask.blobs()[0].polygon.vertices();
        assert_eq!(v, &[[2.0, 1.0], [4.0, 1.0], [3.0, 2.0]]);
        assert_eq!(warp_mask(&rigid(1.0, 0.0), &mask).unwrap().mask, mask);
    }

    #[test]
    fn folding_is_flagged() {
        // top corners pulled past each other, bottom corners untouched
        let basis = build_kernel(&[[0.0, 0.5], [1.0, 0.5]], 0.3, KernelForm::Squared).unwrap();
        let mut t = Transform::identity(Mode::Nonrigid, 0, Some(basis)).unwrap();
        t.weights[0] = [30.0, 0.0];
        t.weights[1] = [-30.0, 0.0];
        let square = Polygon::rectangle([0.0, -0.5], [1.0, 0.5]).unwrap();
        let mask = TemplateMask::new(vec![Blob {
            name: "sq".into(),
            family: "f".into(),
            polygon: square,
        }])
        .unwrap();
        let w = warp_mask(&t, &mask).unwrap();
        assert_eq!(w.warnings.len(), 1);
        assert_eq!(w.mask.len(), 1);
    }
}
