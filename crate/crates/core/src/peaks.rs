//! Peak centroid extraction from h-maxima regions.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::grid::Grid;
use crate::io::AreaOfInterest;
use crate::morphology::{h_maxima_regions, neighbours, BinaryGrid, Connectivity};
use crate::scalar::Scalar;

/// Minimum dynamic a maximum must exceed to be kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HParameter<T: Scalar>(T);

impl<T: Scalar> HParameter<T> {
    pub fn new(h: T) -> Result<Self> {
        if h > T::zero() && h.is_finite() {
            Ok(HParameter(h))
        } else {
            Err(Error::InvalidParameter(format!(
                "h must be positive, got {h}"
            )))
        }
    }

    pub fn get(self) -> T {
        self.0
    }
}

/// Peak centroids in retention units with their apex intensities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Peaks<T: Scalar> {
    pub points: Vec<Point<T>>,
    pub intensities: Vec<T>,
    /// `(row, col)` of each region's apex in the source grid.
    pub source_indices: Vec<(usize, usize)>,
}

impl<T: Scalar> Peaks<T> {
    /// Point cloud without intensity or grid provenance.
    pub fn from_points(points: Vec<Point<T>>) -> Self {
        let n = points.len();
        Peaks {
            points,
            intensities: vec![T::zero(); n],
            source_indices: vec![(0, 0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    /// Keeps the peaks for which `keep` returns true.
    pub fn retain(&mut self, mut keep: impl FnMut(Point<T>) -> bool) {
        let mask: Vec<bool> = self.points.iter().map(|&p| keep(p)).collect();
        let mut it = mask.iter();
        self.points.retain(|_| *it.next().unwrap());
        let mut it = mask.iter();
        self.intensities.retain(|_| *it.next().unwrap());
        let mut it = mask.iter();
        self.source_indices.retain(|_| *it.next().unwrap());
    }

    /// CSV with header `axis1,axis2,intensity,row,col`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis1,axis2,intensity,row,col\n");
        for i in 0..self.len() {
            let p = self.points[i];
            let (r, c) = self.source_indices[i];
            out.push_str(&format!(
                "{},{},{},{r},{c}\n",
                p[0], p[1], self.intensities[i]
            ));
        }
        out
    }

    /// Parses [`Peaks::to_csv`] output. `row,col` columns are optional.
    pub fn from_csv(text: &str) -> Result<Self> {
        const WHAT: &str = "peak csv";
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim().starts_with("axis1,axis2") => {}
            _ => return Err(Error::parse(WHAT, 1, "missing header 'axis1,axis2,...'")),
        }
        let mut peaks = Peaks::default();
        for (i, line) in lines {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 && f.len() != 5 {
                return Err(Error::parse(WHAT, i + 1, "expected 3 or 5 fields"));
            }
            let num = |s: &str| {
                s.parse::<T>()
                    .map_err(|_| Error::parse(WHAT, i + 1, format!("bad number {s:?}")))
            };
            let idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::parse(WHAT, i + 1, format!("bad index {s:?}")))
            };
            let p = [num(f[0])?, num(f[1])?];
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::NonFinite("peak coordinates"));
            }
            peaks.points.push(p);
            peaks.intensities.push(num(f[2])?);
            peaks.source_indices.push(if f.len() == 5 {
                (idx(f[3])?, idx(f[4])?)
            } else {
                (0, 0)
            });
        }
        Ok(peaks)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// One connected region of a binary raster.
#[derive(Debug, Clone)]
pub struct Region {
    pub pixels: Vec<usize>,
}

/// Connected components of the set pixels, in raster order of first pixel.
pub fn connected_regions(mask: &BinaryGrid, connectivity: Connectivity) -> Vec<Region> {
    let (rows, cols) = (mask.rows(), mask.cols());
    let data = mask.data();
    let mut seen = vec![false; data.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..data.len() {
        if !data[start] || seen[start] {
            continue;
        }
        let mut pixels = Vec::new();
        seen[start] = true;
        stack.push(start);
        while let Some(p) = stack.pop() {
            pixels.push(p);
            for q in neighbours(p, rows, cols, connectivity.offsets()) {
                if data[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        pixels.sort_unstable();
        out.push(Region { pixels });
    }
    out
}

/// Intensity-weighted centroid `(row, col)` of a region; geometric mean when
/// every member is zero.
fn weighted_centroid<T: Scalar>(grid: &Grid<T>, region: &Region) -> (T, T) {
    let cols = grid.cols();
    let (mut sw, mut sr, mut sc) = (T::zero(), T::zero(), T::zero());
    for &p in &region.pixels {
        let w = grid.values()[p];
        sw = sw + w;
        sr = sr + w * T::from_usize_lossy(p / cols);
        sc = sc + w * T::from_usize_lossy(p % cols);
    }
    if sw > T::zero() {
        return (sr / sw, sc / sw);
    }
    let n = T::from_usize_lossy(region.pixels.len());
    let (r, c) = region
        .pixels
        .iter()
        .fold((T::zero(), T::zero()), |(r, c), &p| {
            (
                r + T::from_usize_lossy(p / cols),
                c + T::from_usize_lossy(p % cols),
            )
        });
    (r / n, c / n)
}

/// Extracts one centroid per h-maximum region, with 8-connectivity.
pub fn extract_peaks<T: Scalar>(
    grid: &Grid<T>,
    h: HParameter<T>,
    aoi: Option<&AreaOfInterest<T>>,
) -> Result<Peaks<T>> {
    extract_peaks_with(grid, h, aoi, Connectivity::Eight)
}

/// Labels the h-maxima regions of `grid`, reduces each to its weighted
/// centroid and drops centroids outside the area of interest.
pub fn extract_peaks_with<T: Scalar>(
    grid: &Grid<T>,
    h: HParameter<T>,
    aoi: Option<&AreaOfInterest<T>>,
    connectivity: Connectivity,
) -> Result<Peaks<T>> {
    if let Some(aoi) = aoi {
        let (glo, ghi) = grid.retention_bounds();
        let (alo, ahi) = aoi.polygon.bounds();
        if alo[0] > ghi[0] || ahi[0] < glo[0] || alo[1] > ghi[1] || ahi[1] < glo[1] {
            return Err(Error::InvalidPolygon(
                "area of interest does not intersect the grid".into(),
            ));
        }
    }
    let regions = h_maxima_regions(grid, h.get(), connectivity)?;
    let cols = grid.cols();
    let mut peaks = Peaks::default();
    for region in connected_regions(&regions, connectivity) {
        let (r, c) = weighted_centroid(grid, &region);
        let p = grid.axes().to_retention(r, c);
        if aoi.is_some_and(|a| !a.contains(p)) {
            continue;
        }
        let apex = region
            .pixels
            .iter()
            .copied()
            .fold(region.pixels[0], |best, q| {
                if grid.values()[q] > grid.values()[best] {
                    q
                } else {
                    best
                }
            });
        peaks.points.push(p);
        peaks.intensities.push(grid.values()[apex]);
        peaks.source_indices.push((apex / cols, apex % cols));
    }
    if peaks.is_empty() {
        return Err(Error::EmptyPeaks {
            h: h.get().as_f64(),
        });
    }
    Ok(peaks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use crate::grid::AxisCalibration;

    fn two_bumps() -> Grid<f64> {
        Grid::from_fn(20, 40, AxisCalibration::default(), |r, c| {
            let b = |r0: f64, c0: f64, a: f64| {
                let d2 = (r as f64 - r0).powi(2) + (c as f64 - c0).powi(2);
                a * (-d2 / 4.0).exp()
            };
            5.0 + b(10.0, 10.0, 200.0) + b(8.0, 30.0, 150.0)
        })
        .unwrap()
    }

    #[test]
    fn two_bumps_two_peaks() {
        let g = two_bumps();
        let p = extract_peaks(&g, HParameter::new(50.0).unwrap(), None).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.source_indices, vec![(8, 30), (10, 10)]);
        assert!((p.points[1][0] - 10.0).abs() < 1e-9);
        assert!((p.points[1][1] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn aoi_keeps_one_bump() {
        let g = two_bumps();
        let aoi = AreaOfInterest::new(
            Polygon::rectangle([0.0, 0.0], [20.0, 19.0]).unwrap(),
            "left",
        );
        let p = extract_peaks(&g, HParameter::new(50.0).unwrap(), Some(&aoi)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.source_indices[0], (10, 10));
    }

    #[test]
    fn aoi_outside_grid_is_error() {
        let g = two_bumps();
        let aoi = AreaOfInterest::new(
            Polygon::rectangle([100.0, 100.0], [120.0, 119.0]).unwrap(),
            "away",
        );
        assert!(matches!(
            extract_peaks(&g, HParameter::new(50.0).unwrap(), Some(&aoi)),
            Err(Error::InvalidPolygon(_))
        ));
    }

    #[test]
    fn empty_result_is_distinct_error() {
        let g = two_bumps();
        assert!(matches!(
            extract_peaks(&g, HParameter::new(500.0).unwrap(), None),
            Err(Error::EmptyPeaks { .. })
        ));
    }

    #[test]
    fn plateau_centroid_is_barycenter() {
        // L-shaped plateau of 5 equal pixels
        let cells = [(2, 2), (2, 3), (2, 4), (3, 2), (4, 2)];
        let g = Grid::from_fn(8, 8, AxisCalibration::default(), |r, c| {
            if cells.contains(&(r, c)) {
                9.0
            } else {
                1.0
            }
        })
        .unwrap();
        let p = extract_peaks(&g, HParameter::new(2.0).unwrap(), None).unwrap();
        assert_eq!(p.len(), 1);
        // brute-force mean of the member coordinates
        let (sr, sc) = cells
            .iter()
            .fold((0.0, 0.0), |(a, b), &(r, c)| (a + r as f64, b + c as f64));
        let expect = [sc / 5.0, sr / 5.0];
        assert!((p.points[0][0] - expect[0]).abs() < 1e-12);
        assert!((p.points[0][1] - expect[1]).abs() < 1e-12);
        assert_eq!(p.intensities[0], 9.0);
    }

    #[test]
    fn calibrated_coordinates() {
        let axes = AxisCalibration {
            axis1_origin: 10.0,
            axis1_step: 0.5,
            axis2_origin: 1.0,
            axis2_step: 0.02,
        };
        let g = two_bumps().with_axes(axes).unwrap();
        let p = extract_peaks(&g, HParameter::new(50.0).unwrap(), None).unwrap();
        assert!((p.points[1][0] - 15.0).abs() < 1e-9);
        assert!((p.points[1][1] - 1.2).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let g = two_bumps();
        let p = extract_peaks(&g, HParameter::new(50.0).unwrap(), None).unwrap();
        assert_eq!(Peaks::<f64>::from_csv(&p.to_csv()).unwrap(), p);
        assert!(Peaks::<f64>::from_csv("x,y\n1,2,3\n").is_err());
        assert!(Peaks::<f64>::from_csv("axis1,axis2,intensity\n1,2\n").is_err());
    }

    #[test]
    fn h_must_be_positive() {
        assert!(HParameter::new(0.0f64).is_err());
        assert!(HParameter::new(-1.0f64).is_err());
        assert!(HParameter::new(f64::INFINITY).is_err());
    }
}
