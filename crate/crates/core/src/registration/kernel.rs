use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scalar::Scalar;

use super::config::KernelForm;

/// Gaussian kernel over the reference points, with its Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBasis<T: Scalar> {
    points: Vec<Point<T>>,
    beta: T,
    form: KernelForm,
    /// Row-major `M x M`.
    gram: Vec<T>,
}

impl<T: Scalar> KernelBasis<T> {
    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn form(&self) -> KernelForm {
        self.form
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn gram(&self) -> &[T] {
        &self.gram
    }

    #[inline]
    pub fn g(&self, i: usize, j: usize) -> T {
        self.gram[i * self.points.len() + j]
    }

    /// Kernel value between an arbitrary point and a basis point.
    #[inline]
    pub fn eval(&self, p: Point<T>, basis_index: usize) -> T {
        kernel_value(self.form, self.beta, p, self.points[basis_index])
    }

    /// `(G v)_i` for a basis index `i`.
    #[inline]
    pub fn gram_row_dot(&self, i: usize, v: impl Fn(usize) -> T) -> T {
        let m = self.points.len();
        let row = &self.gram[i * m..(i + 1) * m];
        row.iter()
            .enumerate()
            .fold(T::zero(), |acc, (j, &g)| acc + g * v(j))
    }
}

/// Kernel between two points for the given form and width.
#[inline]
pub fn kernel_value<T: Scalar>(form: KernelForm, beta: T, a: Point<T>, b: Point<T>) -> T {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = d0 * d0 + d1 * d1;
    let two = T::lit(2.0);
    match form {
        KernelForm::AsPrinted => (-d2.sqrt() / (two * beta)).exp(),
        KernelForm::Squared => (-d2 / (two * beta * beta)).exp(),
    }
}

/// Builds the symmetric Gram matrix `G_ij = k(Y_i, Y_j)` over the reference points.
pub fn build_kernel<T: Scalar>(
    points: &[Point<T>],
    beta: T,
    form: KernelForm,
) -> Result<KernelBasis<T>> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet("kernel basis"));
    }
    if !(beta > T::zero() && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "beta must be positive, got {beta}"
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel basis points"));
    }
    let m = points.len();
    let mut gram = vec![T::zero(); m * m];
    for i in 0..m {
        gram[i * m + i] = T::one();
        for j in (i + 1)..m {
            let g = kernel_value(form, beta, points[i], points[j]);
            gram[i * m + j] = g;
            gram[j * m + i] = g;
        }
    }
    Ok(KernelBasis {
        points: points.to_vec(),
        beta,
        form,
        gram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn distance_four_beta_two() {
        let b = build_kernel(&[[0.0, 0.0], [4.0, 0.0]], 2.0, KernelForm::AsPrinted).unwrap();
        assert_eq!(b.g(0, 0), 1.0);
        assert!((b.g(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((b.g(0, 1) - 0.367879).abs() < 1e-6);
        let sq = build_kernel(&[[0.0, 0.0], [4.0, 0.0]], 2.0, KernelForm::Squared).unwrap();
        assert!((sq.g(1, 0) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn random_sets_match_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let pts: Vec<[f64; 2]> = (0..20)
                .map(|_| [rng.random_range(0.0..50.0), rng.random_range(0.0..8.0)])
                .collect();
            let beta = rng.random_range(0.5..5.0);
            let b = build_kernel(&pts, beta, KernelForm::AsPrinted).unwrap();
            for i in 0..20 {
                assert_eq!(b.g(i, i), 1.0);
                for j in 0..20 {
                    let dist =
                        ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
                    let oracle = (-dist / (2.0 * beta)).exp();
                    assert!((b.g(i, j) - oracle).abs() < 1e-15);
                    assert!((b.g(i, j) - b.g(j, i)).abs() <= 1e-15);
                    assert!(b.g(i, j) > 0.0 && b.g(i, j) <= 1.0);
                }
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(build_kernel::<f64>(&[], 2.0, KernelForm::AsPrinted).is_err());
        assert!(build_kernel(&[[0.0, f64::NAN]], 2.0, KernelForm::AsPrinted).is_err());
        assert!(build_kernel(&[[0.0, 0.0]], 0.0, KernelForm::AsPrinted).is_err());
    }
}
