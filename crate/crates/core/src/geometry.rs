//! Simple polygons in retention-time coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// 2D point `[axis1, axis2]`.
pub type Point<T> = [T; 2];

/// Implicitly closed, simple polygon with at least three vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Polygon<T: Scalar> {
    vertices: Vec<Point<T>>,
}

impl<T: Scalar> Polygon<T> {
    /// Validates vertex count, finiteness and simplicity.
    pub fn new(vertices: Vec<Point<T>>) -> Result<Self> {
        let poly = Polygon { vertices };
        poly.check_basic()?;
        if let Some((i, j)) = poly.first_self_intersection() {
            return Err(Error::InvalidPolygon(format!(
                "edges {i} and {j} intersect; polygon is not simple"
            )));
        }
        Ok(poly)
    }

    /// Builds a polygon without the simplicity check. Used for warped
    /// outlines, which may fold and are flagged rather than rejected.
    pub fn new_unchecked_simplicity(vertices: Vec<Point<T>>) -> Result<Self> {
        let poly = Polygon { vertices };
        poly.check_basic()?;
        Ok(poly)
    }

    /// Axis-aligned rectangle `[lo, hi]`, vertices counter-clockwise.
    pub fn rectangle(lo: Point<T>, hi: Point<T>) -> Result<Self> {
        Polygon::new(vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]])
    }

    fn check_basic(&self) -> Result<()> {
        if self.vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "need at least 3 vertices, got {}",
                self.vertices.len()
            )));
        }
        if self.vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("polygon vertices"));
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point<T>] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_simple(&self) -> bool {
        self.first_self_intersection().is_none()
    }

    fn edge(&self, i: usize) -> (Point<T>, Point<T>) {
        let n = self.vertices.len();
        (self.vertices[i], self.vertices[(i + 1) % n])
    }

    /// First pair of edges `(i, j)` that violate simplicity, if any.
    ///
    /// Non-adjacent edges may not touch at all; adjacent edges may only share
    /// their common vertex. Zero-length edges count as violations.
    pub fn first_self_intersection(&self) -> Option<(usize, usize)> {
        let n = self.vertices.len();
        for i in 0..n {
            let (a, b) = self.edge(i);
            if a == b {
                return Some((i, i));
            }
        }
        for i in 0..n {
            let (a, b) = self.edge(i);
            for j in (i + 1)..n {
                let (c, d) = self.edge(j);
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // Shared vertex is allowed; collinear back-tracking is not.
                    let (shared, p, q) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                    if cross(shared, p, q) == T::zero() && dot(shared, p, q) > T::zero() {
                        return Some((i, j));
                    }
                } else if segments_intersect(a, b, c, d) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Bounding box `([min1, min2], [max1, max2])`.
    pub fn bounds(&self) -> (Point<T>, Point<T>) {
        let mut lo = [T::infinity(); 2];
        let mut hi = [T::neg_infinity(); 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Even-odd containment; points on the boundary count as inside.
    pub fn contains(&self, p: Point<T>) -> bool {
        point_in_polygon(p, self)
    }

    pub fn map_vertices(&self, f: impl Fn(Point<T>) -> Point<T>) -> Vec<Point<T>> {
        self.vertices.iter().map(|&v| f(v)).collect()
    }
}

/// Orientation of `q` relative to the ray `o -> p` (twice the signed area).
#[inline]
fn cross<T: Scalar>(o: Point<T>, p: Point<T>, q: Point<T>) -> T {
    (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])
}

#[inline]
fn dot<T: Scalar>(o: Point<T>, p: Point<T>, q: Point<T>) -> T {
    (p[0] - o[0]) * (q[0] - o[0]) + (p[1] - o[1]) * (q[1] - o[1])
}

#[inline]
fn on_segment<T: Scalar>(a: Point<T>, b: Point<T>, p: Point<T>) -> bool {
    p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

/// Closed-segment intersection test, including touching and collinear overlap.
pub(crate) fn segments_intersect<T: Scalar>(
    a: Point<T>,
    b: Point<T>,
    c: Point<T>,
    d: Point<T>,
) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    let z = T::zero();
    if ((d1 > z && d2 < z) || (d1 < z && d2 > z)) && ((d3 > z && d4 < z) || (d3 < z && d4 > z)) {
        return true;
    }
    (d1 == z && on_segment(c, d, a))
        || (d2 == z && on_segment(c, d, b))
        || (d3 == z && on_segment(a, b, c))
        || (d4 == z && on_segment(a, b, d))
}

/// Even-odd rule containment test. Boundary points are inside.
pub fn point_in_polygon<T: Scalar>(p: Point<T>, poly: &Polygon<T>) -> bool {
    let v = poly.vertices();
    let n = v.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (v[j], v[i]);
        if cross(a, b, p) == T::zero() && on_segment(a, b, p) {
            return true;
        }
        if (b[1] > p[1]) != (a[1] > p[1]) {
            let x = b[0] + (p[1] - b[1]) * (a[0] - b[0]) / (a[1] - b[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square() -> Polygon<f64> {
        Polygon::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap()
    }

    #[test]
    fn unit_square_containment() {
        let sq = unit_square();
        assert!(point_in_polygon([0.5, 0.5], &sq));
        assert!(!point_in_polygon([2.0, 2.0], &sq));
        // boundary and corners
        assert!(point_in_polygon([0.0, 0.5], &sq));
        assert!(point_in_polygon([1.0, 1.0], &sq));
        assert!(point_in_polygon([0.5, 0.0], &sq));
        assert!(!point_in_polygon([1.0 + 1e-12, 0.5], &sq));
    }

    #[test]
    fn bow_tie_is_not_simple() {
        let err = Polygon::new(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(err, Err(Error::InvalidPolygon(_))));
    }

    #[test]
    fn degenerate_polygons_rejected() {
        assert!(Polygon::new(vec![[0.0, 0.0], [1.0, 1.0]]).is_err());
        assert!(Polygon::new(vec![[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]).is_err());
        // collinear spike folding back on itself
        assert!(Polygon::new(vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.0]]).is_err());
        assert!(Polygon::new(vec![[0.0, 0.0], [f64::NAN, 0.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn concave_polygon_even_odd() {
        // U shape
        let u = Polygon::new(vec![
            [0.0, 0.0],
            [3.0, 0.0],
            [3.0, 3.0],
            [2.0, 3.0],
            [2.0, 1.0],
            [1.0, 1.0],
            [1.0, 3.0],
            [0.0, 3.0],
        ])
        .unwrap();
        assert!(u.contains([0.5, 2.0]));
        assert!(!u.contains([1.5, 2.0]));
        assert!(u.contains([1.5, 0.5]));
        assert!(u.contains([1.5, 1.0]));
    }

    fn convex_polygon(n: usize, center: (f64, f64), radius: f64, phase: f64) -> Vec<[f64; 2]> {
        (0..n)
            .map(|k| {
                let a = phase + std::f64::consts::TAU * k as f64 / n as f64;
                [center.0 + radius * a.cos(), center.1 + radius * a.sin()]
            })
            .collect()
    }

    proptest! {
        // Convex containment oracle: inside iff on the left of (or on) every edge.
        #[test]
        fn convex_polygon_matches_half_plane_oracle(
            n in 3usize..12,
            cx in -5.0f64..5.0,
            cy in -5.0f64..5.0,
            r in 0.5f64..4.0,
            phase in 0.0f64..std::f64::consts::TAU,
            px in -10.0f64..10.0,
            py in -10.0f64..10.0,
        ) {
            let verts = convex_polygon(n, (cx, cy), r, phase);
            let poly = Polygon::new(verts.clone()).unwrap();
            let oracle = (0..n).all(|i| {
                let a = verts[i];
                let b = verts[(i + 1) % n];
                (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]) >= 0.0
            });
            prop_assert_eq!(point_in_polygon([px, py], &poly), oracle);
        }
    }
}
