//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

/// Thin SVD with singular values in descending order.
pub struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

pub fn svd(m: &DMatrix<f64>) -> Svd {
    let s = SVD::new(m.clone(), true, true);
    Svd {
        u: s.u.expect("u requested"),
        sigma: s.singular_values,
        v_t: s.v_t.expect("v_t requested"),
    }
}

impl Svd {
    pub fn compose(&self, sigma: &DVector<f64>) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= sigma[j];
        }
        us * &self.v_t
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    SVD::new(m.clone(), false, false).singular_values
}

pub fn max_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    // eigenvalues of the smaller Gram matrix
    let gram = if m.nrows() >= m.ncols() {
        m.tr_mul(m)
    } else {
        m * m.transpose()
    };
    let eig = SymmetricEigen::new(gram);
    eig.eigenvalues.max().max(0.0).sqrt()
}

/// Entrywise `sign(x) max(|x| - t, 0)`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_singular_value_matches_svd() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, 1.0]);
        let s = singular_values(&m);
        assert!((max_singular_value(&m) - s[0]).abs() < 1e-12);
        assert!((max_singular_value(&m.transpose()) - s[0]).abs() < 1e-12);
    }

    #[test]
    fn svd_composes_back() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, -1.0, 0.5, 3.0, 1.0]);
        let s = svd(&m);
        assert!((s.compose(&s.sigma) - &m).amax() < 1e-12);
        assert!(s.sigma[0] >= s.sigma[1]);
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(2.0, 1.0), 1.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }
}
