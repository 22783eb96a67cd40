//! Fitted transform mapping reference coordinates onto target coordinates.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scalar::Scalar;

use super::config::{KernelForm, Mode};
use super::kernel::{build_kernel, KernelBasis};

/// `T(p)[a] = scale_a * p[a] + shift[a] + sum_m k(p, Y_m) * weights[m][a]`
/// where `scale_a` is `scale` on the rigid axis and 1 elsewhere.
///
/// * hybrid: `scale`, `shift[rigid]` and the flexible-axis weight column.
/// * rigid: `scale`, `shift[rigid]` and `shift[flexible]`; no weights.
/// * nonrigid: both weight columns; `scale = 1`, `shift = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform<T: Scalar> {
    pub mode: Mode,
    pub rigid_axis: usize,
    pub scale: T,
    pub shift: [T; 2],
    /// One `[axis1, axis2]` weight pair per basis point; empty in rigid mode.
    pub weights: Vec<[T; 2]>,
    pub basis: Option<KernelBasis<T>>,
}

impl<T: Scalar> Transform<T> {
    /// Identity transform for the given mode; `basis` is required unless rigid.
    pub fn identity(mode: Mode, rigid_axis: usize, basis: Option<KernelBasis<T>>) -> Result<Self> {
        if rigid_axis > 1 {
            return Err(Error::InvalidParameter("rigid axis must be 0 or 1".into()));
        }
        let weights = match (&basis, mode) {
            (_, Mode::Rigid) => Vec::new(),
            (Some(b), _) => vec![[T::zero(); 2]; b.len()],
            (None, _) => {
                return Err(Error::InvalidParameter(format!(
                    "{mode} transform needs a kernel basis"
                )))
            }
        };
        Ok(Transform {
            mode,
            rigid_axis,
            scale: T::one(),
            shift: [T::zero(); 2],
            weights,
            basis: if mode == Mode::Rigid { None } else { basis },
        })
    }

    pub fn flexible_axis(&self) -> usize {
        1 - self.rigid_axis
    }

    /// Scale on the rigid axis.
    pub fn s(&self) -> T {
        self.scale
    }

    /// Translation on the rigid axis.
    pub fn t(&self) -> T {
        self.shift[self.rigid_axis]
    }

    #[inline]
    fn affine(&self, p: Point<T>) -> Point<T> {
        let mut out = [p[0] + self.shift[0], p[1] + self.shift[1]];
        let r = self.rigid_axis;
        out[r] = self.scale * p[r] + self.shift[r];
        out
    }

    /// Transforms an arbitrary point (out-of-sample kernel extension).
    pub fn apply(&self, p: Point<T>) -> Point<T> {
        let mut out = self.affine(p);
        if let Some(basis) = &self.basis {
            let (mut d0, mut d1) = (T::zero(), T::zero());
            for (m, w) in self.weights.iter().enumerate() {
                let k = basis.eval(p, m);
                d0 = d0 + k * w[0];
                d1 = d1 + k * w[1];
            }
            out[0] = out[0] + d0;
            out[1] = out[1] + d1;
        }
        out
    }

    pub fn transform_points(&self, pts: &[Point<T>]) -> Vec<Point<T>> {
        pts.iter().map(|&p| self.apply(p)).collect()
    }

    /// Displacement field `G W` at basis point `m`, per axis.
    pub fn basis_displacement(&self, m: usize) -> Point<T> {
        match &self.basis {
            Some(b) => [
                b.gram_row_dot(m, |j| self.weights[j][0]),
                b.gram_row_dot(m, |j| self.weights[j][1]),
            ],
            None => [T::zero(); 2],
        }
    }

    /// `T(Y_m)` for every basis point, using the Gram matrix rows.
    ///
    /// In rigid mode there is no basis; `reference` supplies the points.
    pub fn moved_reference(&self, reference: &[Point<T>]) -> Vec<Point<T>> {
        reference
            .iter()
            .enumerate()
            .map(|(m, &y)| {
                let a = self.affine(y);
                let d = self.basis_displacement(m);
                [a[0] + d[0], a[1] + d[1]]
            })
            .collect()
    }

    /// `sum_a W_a^T G W_a` over both weight columns.
    pub fn roughness(&self) -> T {
        let Some(b) = &self.basis else {
            return T::zero();
        };
        let mut acc = T::zero();
        for a in 0..2 {
            for (i, w) in self.weights.iter().enumerate() {
                if w[a] != T::zero() {
                    acc = acc + w[a] * b.gram_row_dot(i, |j| self.weights[j][a]);
                }
            }
        }
        acc
    }

    pub fn is_finite(&self) -> bool {
        self.scale.is_finite()
            && self.shift.iter().all(|v| v.is_finite())
            && self.weights.iter().flatten().all(|v| v.is_finite())
    }

    pub fn to_file(&self) -> TransformFile<T> {
        TransformFile {
            format: TRANSFORM_MAGIC.to_string(),
            version: TRANSFORM_VERSION,
            mode: self.mode,
            rigid_axis: self.rigid_axis,
            scale: self.scale,
            shift: self.shift,
            kernel: self.basis.as_ref().map(|b| b.form()),
            beta: self.basis.as_ref().map(|b| b.beta()),
            basis_points: self
                .basis
                .as_ref()
                .map(|b| b.points().to_vec())
                .unwrap_or_default(),
            weights: self.weights.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("transform serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TransformFile<T> = serde_json::from_str(text)?;
        file.into_transform()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

pub const TRANSFORM_MAGIC: &str = "gcxgc-transform";
pub const TRANSFORM_VERSION: u32 = 1;

/// Self-contained transform document; the Gram matrix is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TransformFile<T: Scalar> {
    pub format: String,
    pub version: u32,
    pub mode: Mode,
    pub rigid_axis: usize,
    pub scale: T,
    pub shift: [T; 2],
    pub kernel: Option<KernelForm>,
    pub beta: Option<T>,
    pub basis_points: Vec<Point<T>>,
    pub weights: Vec<[T; 2]>,
}

impl<T: Scalar> TransformFile<T> {
    pub fn into_transform(self) -> Result<Transform<T>> {
        let bad = |m: &str| Err(Error::parse("transform", 1, m));
        if self.format != TRANSFORM_MAGIC {
            return bad("not a transform document");
        }
        if self.version != TRANSFORM_VERSION {
            return bad("unsupported transform version");
        }
        if self.rigid_axis > 1 {
            return bad("rigid_axis must be 0 or 1");
        }
        let basis = match self.mode {
            Mode::Rigid => {
                if !self.weights.is_empty() {
                    return bad("rigid transform carries no weights");
                }
                None
            }
            _ => {
                let (Some(form), Some(beta)) = (self.kernel, self.beta) else {
                    return bad("kernel and beta required");
                };
                if self.weights.len() != self.basis_points.len() {
                    return bad("weights and basis points differ in length");
                }
                Some(build_kernel(&self.basis_points, beta, form)?)
            }
        };
        let t = Transform {
            mode: self.mode,
            rigid_axis: self.rigid_axis,
            scale: self.scale,
            shift: self.shift,
            weights: self.weights,
            basis,
        };
        if !t.is_finite() {
            return Err(Error::NonFinite("transform parameters"));
        }
        Ok(t)
    }
}
