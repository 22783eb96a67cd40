//! Grey-level reconstruction by dilation and h-maxima detection.
//!
//! Reconstruction uses the hybrid raster / anti-raster scan followed by FIFO
//! propagation (L. Vincent, 1993), which reaches the same fixed point as
//! iterating elementary geodesic dilations until stability.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Scalar;

/// Pixel adjacency used for dilations and region labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl std::str::FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4" | "four" => Ok(Connectivity::Four),
            "8" | "eight" => Ok(Connectivity::Eight),
            _ => Err(Error::InvalidParameter(format!(
                "connectivity must be 4 or 8, got {s:?}"
            ))),
        }
    }
}

const N4: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
const N8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

impl Connectivity {
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &N4,
            Connectivity::Eight => &N8,
        }
    }

    /// Neighbours that precede a pixel in raster order.
    fn forward(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &N4[..2],
            Connectivity::Eight => &N8[..4],
        }
    }

    /// Neighbours that follow a pixel in raster order.
    fn backward(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &N4[2..],
            Connectivity::Eight => &N8[4..],
        }
    }
}

/// Iterates the in-bounds neighbours of `idx` in a `rows x cols` raster.
#[inline]
pub(crate) fn neighbours(
    idx: usize,
    rows: usize,
    cols: usize,
    offsets: &'static [(isize, isize)],
) -> impl Iterator<Item = usize> {
    let r = (idx / cols) as isize;
    let c = (idx % cols) as isize;
    offsets.iter().filter_map(move |&(dr, dc)| {
        let (nr, nc) = (r + dr, c + dc);
        (nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols)
            .then(|| nr as usize * cols + nc as usize)
    })
}

/// Boolean raster with the same shape as its source grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryGrid {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl BinaryGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), rows * cols, "binary grid size mismatch");
        BinaryGrid { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.cols + col]
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }
}

/// Morphological reconstruction by dilation of `marker` under `mask`.
///
/// Returns the supremum of iterated geodesic dilations of `marker`
/// constrained by `mask`. Requires `marker <= mask` pointwise.
pub fn reconstruct_by_dilation<T: Scalar>(
    marker: &Grid<T>,
    mask: &Grid<T>,
    connectivity: Connectivity,
) -> Result<Grid<T>> {
    if !marker.same_shape(mask) {
        return Err(Error::ShapeMismatch(format!(
            "marker {:?} vs mask {:?}",
            marker.shape(),
            mask.shape()
        )));
    }
    let (rows, cols) = mask.shape();
    let m = mask.values();
    if let Some(i) = marker.values().iter().zip(m).position(|(a, b)| a > b) {
        return Err(Error::MarkerAboveMask {
            row: i / cols,
            col: i % cols,
        });
    }
    let mut j = marker.values().to_vec();

    // Forward raster scan.
    for idx in 0..j.len() {
        let mut v = j[idx];
        for q in neighbours(idx, rows, cols, connectivity.forward()) {
            v = v.max(j[q]);
        }
        j[idx] = v.min(m[idx]);
    }

    // Backward scan; seed the queue with pixels that can still propagate.
    let mut queue = VecDeque::new();
    for idx in (0..j.len()).rev() {
        let mut v = j[idx];
        for q in neighbours(idx, rows, cols, connectivity.backward()) {
            v = v.max(j[q]);
        }
        j[idx] = v.min(m[idx]);
        let jp = j[idx];
        if neighbours(idx, rows, cols, connectivity.backward()).any(|q| j[q] < jp && j[q] < m[q]) {
            queue.push_back(idx);
        }
    }

    // FIFO propagation.
    while let Some(p) = queue.pop_front() {
        let jp = j[p];
        for q in neighbours(p, rows, cols, connectivity.offsets()) {
            if j[q] < jp && m[q] != j[q] {
                j[q] = jp.min(m[q]);
                queue.push_back(q);
            }
        }
    }

    Ok(Grid::from_parts(rows, cols, j, *mask.axes()))
}

/// Flat zones that are regional maxima: connected plateaus with no strictly
/// higher neighbour. Returns one label per pixel (`0` = not a maximum) and the
/// number of plateaus found.
pub fn label_regional_maxima<T: Scalar>(
    grid: &Grid<T>,
    connectivity: Connectivity,
) -> (Vec<usize>, usize) {
    let (rows, cols) = grid.shape();
    let v = grid.values();
    let mut labels = vec![0usize; v.len()];
    let mut visited = vec![false; v.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    let mut members = Vec::new();
    for start in 0..v.len() {
        if visited[start] {
            continue;
        }
        let level = v[start];
        let mut is_max = true;
        members.clear();
        stack.push(start);
        visited[start] = true;
        while let Some(p) = stack.pop() {
            members.push(p);
            for q in neighbours(p, rows, cols, connectivity.offsets()) {
                if v[q] > level {
                    is_max = false;
                } else if v[q] == level && !visited[q] {
                    visited[q] = true;
                    stack.push(q);
                }
            }
        }
        if is_max {
            next += 1;
            for &p in &members {
                labels[p] = next;
            }
        }
    }
    (labels, next)
}

/// Regional maxima of `grid` as a binary raster.
pub fn regional_maxima<T: Scalar>(grid: &Grid<T>, connectivity: Connectivity) -> BinaryGrid {
    let (labels, _) = label_regional_maxima(grid, connectivity);
    BinaryGrid::new(
        grid.rows(),
        grid.cols(),
        labels.into_iter().map(|l| l != 0).collect(),
    )
}

/// Regions of the maxima of `grid` whose dynamic is strictly greater than `h`.
///
/// These are the regional maxima of the reconstruction of `grid - h` under
/// `grid`. A reconstruction that is flat everywhere (every maximum has a
/// dynamic of at most `h`) yields no region.
pub fn h_maxima_regions<T: Scalar>(
    grid: &Grid<T>,
    h: T,
    connectivity: Connectivity,
) -> Result<BinaryGrid> {
    if !(h > T::zero() && h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "h must be positive, got {h}"
        )));
    }
    let marker = grid.map(|v| v - h);
    let rec = reconstruct_by_dilation(&marker, grid, connectivity)?;
    let (labels, _) = label_regional_maxima(&rec, connectivity);
    let floor = grid.min_value();
    let data = labels
        .iter()
        .zip(rec.values())
        .map(|(&l, &level)| l != 0 && level > floor)
        .collect();
    Ok(BinaryGrid::new(grid.rows(), grid.cols(), data))
}
