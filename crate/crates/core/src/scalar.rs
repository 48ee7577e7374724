//! Scalar abstraction shared by every numerical module.
//!
//! All geometry is written against [`Real`], which is satisfied by `f32` and
//! `f64`. Tolerances are stored as `f64` and lifted with [`Real::c`].

use std::fmt;

use nalgebra::{DMatrix, DVector, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the integrators and concavity routines.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + fmt::Display + fmt::LowerExp + Send + Sync
{
    /// Lifts an `f64` literal into the scalar type.
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Lossy conversion used for reporting and CSV output.
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn nan() -> Self {
        Self::c(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Absolute value without the `Signed`/`ComplexField` method ambiguity.
#[inline]
pub fn abs<T: Real>(x: T) -> T {
    if x < T::zero() {
        -x
    } else {
        x
    }
}

/// Largest absolute entry of a matrix (zero for an empty matrix).
pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, &x| acc.max(abs(x)))
}

pub fn max_abs_vec<T: Real>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc.max(abs(x)))
}

/// Singular values sorted in descending order together with the matching
/// right singular vectors (as columns).
pub fn sorted_svd<T: Real>(m: &DMatrix<T>) -> (Vec<T>, DMatrix<T>, DMatrix<T>) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    // descending singular value, ties by index
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let sv: Vec<T> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v_sorted = DMatrix::from_fn(v_t.ncols(), order.len(), |r, c| v_t[(order[c], r)]);
    (sv, u_sorted, v_sorted)
}

/// Orthonormal basis (columns) of the null space of `m`: right singular
/// vectors whose singular value is below `threshold`. Wide matrices are padded
/// with zero rows so that the full right basis is available.
pub fn null_space<T: Real>(m: &DMatrix<T>, threshold: T) -> DMatrix<T> {
    let n = m.ncols();
    let padded = if m.nrows() >= n {
        m.clone()
    } else {
        let mut p = DMatrix::zeros(n, n);
        p.rows_mut(0, m.nrows()).copy_from(m);
        p
    };
    let (sv, _, v) = sorted_svd(&padded);
    let cols: Vec<usize> = (0..n).filter(|&i| sv[i] < threshold).collect();
    DMatrix::from_fn(n, cols.len(), |r, c| v[(r, cols[c])])
}

/// Orthonormal basis of the column space of `m` (left singular vectors with
/// singular value at least `threshold`).
pub fn range_space<T: Real>(m: &DMatrix<T>, threshold: T) -> DMatrix<T> {
    let (sv, u, _) = sorted_svd(m);
    let cols: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] >= threshold).collect();
    DMatrix::from_fn(m.nrows(), cols.len(), |r, c| u[(r, cols[c])])
}

/// Orthonormal completion: basis of the orthogonal complement of the span of
/// the (orthonormal) columns of `q` in ℝⁿ.
pub fn complement<T: Real>(q: &DMatrix<T>, n: usize) -> DMatrix<T> {
    if q.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    let proj = DMatrix::<T>::identity(n, n) - q * q.transpose();
    range_space(&proj, T::c(0.5))
}
