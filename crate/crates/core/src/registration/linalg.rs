//! Dense LU solve for the displacement-weight system.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const RIDGE: f64 = 1e-12;

/// LU factorisation with partial pivoting of a row-major square matrix.
struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    /// `None` when a pivot is negligible relative to the matrix scale.
    fn factor(mut a: Vec<T>, n: usize) -> Option<Self> {
        let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if scale == T::zero() {
            return None;
        }
        let tiny = scale * T::epsilon() * T::from_usize_lossy(n);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n).map(|i| (i, a[i * n + k].abs())).fold(
                (k, T::neg_infinity()),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
            if !(pmax > tiny) {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in (k + 1)..n {
                let f = a[i * n + k] / pivot;
                a[i * n + k] = f;
                if f != T::zero() {
                    let (upper, lower) = a.split_at_mut(i * n);
                    let krow = &upper[k * n + k + 1..k * n + n];
                    let irow = &mut lower[k + 1..n];
                    for (x, &y) in irow.iter_mut().zip(krow) {
                        *x = *x - f * y;
                    }
                }
            }
        }
        Some(Lu { n, lu: a, perm })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s = row
                .iter()
                .zip(&x[..i])
                .fold(T::zero(), |acc, (&l, &v)| acc + l * v);
            x[i] = x[i] - s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s = row
                .iter()
                .zip(&x[i + 1..])
                .fold(T::zero(), |acc, (&u, &v)| acc + u * v);
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }
}

fn mat_vec<T: Scalar>(a: &[T], n: usize, x: &[T]) -> Vec<T> {
    (0..n)
        .map(|i| {
            a[i * n..(i + 1) * n]
                .iter()
                .zip(x)
                .fold(T::zero(), |acc, (&aij, &xj)| acc + aij * xj)
        })
        .collect()
}

/// Solves `A X = B` for several right-hand sides with one factorisation and
/// one step of iterative refinement. If `A` is numerically singular a ridge
/// of `1e-12 * max|A_ii|` is added to the diagonal; if that still fails the
/// system is reported singular.
pub fn solve_guarded<T: Scalar>(a: &[T], n: usize, rhs: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    debug_assert_eq!(a.len(), n * n);
    if a.iter().any(|v| !v.is_finite()) || rhs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear system"));
    }
    let (mat, lu) = match Lu::factor(a.to_vec(), n) {
        Some(lu) => (a.to_vec(), lu),
        None => {
            let diag = (0..n).fold(T::zero(), |m, i| m.max(a[i * n + i].abs()));
            let ridge = T::lit(RIDGE) * if diag > T::zero() { diag } else { T::one() };
            let mut guarded = a.to_vec();
            for i in 0..n {
                guarded[i * n + i] = guarded[i * n + i] + ridge;
            }
            let lu = Lu::factor(guarded.clone(), n).ok_or(Error::SingularSystem { size: n })?;
            (guarded, lu)
        }
    };
    let out = rhs
        .iter()
        .map(|b| {
            let mut x = lu.solve(b);
            let ax = mat_vec(&mat, n, &x);
            let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
            let dx = lu.solve(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi = *xi + d;
            }
            x
        })
        .collect::<Vec<_>>();
    if out.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem { size: n });
    }
    Ok(out)
}
