//! Matrix Jacobi equation `A'' + R A = 0`, its Riccati operator, Lagrange
//! checks, base-point normalization and singular-point location.

use std::io::{self, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::models::CurvatureField;
use crate::scalar::{abs, complement, max_abs, null_space, range_space, sorted_svd, Real};

/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Relative singular-value threshold separating kernel directions from noise.
pub const KERNEL_TOL: f64 = 1e-7;
/// Linear solves refuse condition numbers above this cap.
pub const CONDITION_CAP: f64 = 1e12;
/// Bisection/golden refinement width for singular points.
const REFINE_WIDTH: f64 = 1e-10;

/// Sampled solution `(A_t, A'_t)` of the matrix Jacobi equation.
#[derive(Clone, Debug)]
pub struct JacobiTensorPath<T: Real> {
    field: CurvatureField<T>,
    grid: Vec<T>,
    a: Vec<DMatrix<T>>,
    ap: Vec<DMatrix<T>>,
    base_point: T,
    step: T,
}

/// One classical RK4 step of `(A, A')' = (A', −R A)`.
pub fn rk4_step<T: Real>(
    field: &CurvatureField<T>,
    t: T,
    a: &DMatrix<T>,
    ap: &DMatrix<T>,
    h: T,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let half = h * T::c(0.5);
    let r0 = field.at(t)?;
    let rm = field.at(t + half)?;
    let r1 = field.at(t + h)?;
    let k1a = ap.clone();
    let k1p = -(&r0 * a);
    let k2a = ap + &k1p * half;
    let k2p = -(&rm * (a + &k1a * half));
    let k3a = ap + &k2p * half;
    let k3p = -(&rm * (a + &k2a * half));
    let k4a = ap + &k3p * h;
    let k4p = -(&r1 * (a + &k3a * h));
    let sixth = h / T::c(6.0);
    let two = T::c(2.0);
    let a_next = a + (k1a + k2a * two + k3a * two + k4a) * sixth;
    let ap_next = ap + (k1p + k2p * two + k3p * two + k4p) * sixth;
    if a_next.iter().chain(ap_next.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("non-finite RK4 state near t = {}", t)));
    }
    Ok((a_next, ap_next))
}

/// Scale of the stacked matrix `[A; A']`; non-zero for non-degenerate data.
fn stacked_scale<T: Real>(a: &DMatrix<T>, ap: &DMatrix<T>) -> T {
    let n = a.ncols();
    let mut s = DMatrix::zeros(2 * a.nrows(), n);
    s.rows_mut(0, a.nrows()).copy_from(a);
    s.rows_mut(a.nrows(), ap.nrows()).copy_from(ap);
    let (sv, _, _) = sorted_svd(&s);
    sv[0]
}

/// `ker A0 ∩ ker A0' = 0`, tested on the smallest singular value of `[A0; A0']`.
pub fn is_nondegenerate<T: Real>(a0: &DMatrix<T>, a0p: &DMatrix<T>) -> bool {
    let n = a0.ncols();
    let mut s = DMatrix::zeros(2 * n, n);
    s.rows_mut(0, n).copy_from(a0);
    s.rows_mut(n, n).copy_from(a0p);
    let (sv, _, _) = sorted_svd(&s);
    sv[0] > T::zero() && sv[n - 1] > T::c(1e-12) * sv[0]
}

/// `(t, A_t, A'_t)`.
type Sample<T> = (T, DMatrix<T>, DMatrix<T>);

/// Integrates `A'' + R A = 0` with fixed-step RK4 outward from `t0` in both
/// directions over `[lo, hi]`. Each side uses the largest uniform step not
/// exceeding `h` that lands exactly on the interval end.
pub fn integrate_jacobi<T: Real>(
    field: &CurvatureField<T>,
    t0: T,
    a0: &DMatrix<T>,
    a0p: &DMatrix<T>,
    interval: (T, T),
    h: T,
) -> Result<JacobiTensorPath<T>> {
    let n = field.dimension();
    let (lo, hi) = interval;
    if a0.shape() != (n, n) || a0p.shape() != (n, n) {
        return Err(Error::Precondition(format!("initial data must be {n}x{n}")));
    }
    if !(h > T::zero()) || !h.is_finite() {
        return Err(Error::Precondition("step must be positive".into()));
    }
    if !(lo <= t0 && t0 <= hi) || !(lo < hi) {
        return Err(Error::Precondition(format!(
            "base point {} must lie in a non-degenerate interval [{}, {}]",
            t0, lo, hi
        )));
    }
    if !is_nondegenerate(a0, a0p) {
        return Err(Error::Precondition("degenerate initial data: ker A0 ∩ ker A0' ≠ 0".into()));
    }

    let steps = |span: T| -> usize {
        if span <= T::zero() {
            0
        } else {
            (span / h - T::c(1e-9)).ceil().to_usize().unwrap_or(0).max(1)
        }
    };
    let march = |span: T, dir: T| -> Result<Vec<Sample<T>>> {
        let count = steps(span);
        let mut out = Vec::with_capacity(count);
        if count == 0 {
            return Ok(out);
        }
        let dt = span / T::from_usize(count).unwrap() * dir;
        let (mut a, mut ap) = (a0.clone(), a0p.clone());
        for k in 0..count {
            let t = t0 + dt * T::from_usize(k).unwrap();
            let (na, nap) = rk4_step(field, t, &a, &ap, dt)?;
            a = na;
            ap = nap;
            let t_next = if k + 1 == count {
                if dir > T::zero() { hi } else { lo }
            } else {
                t0 + dt * T::from_usize(k + 1).unwrap()
            };
            out.push((t_next, a.clone(), ap.clone()));
        }
        Ok(out)
    };

    let left = march(t0 - lo, -T::one())?;
    let right = march(hi - t0, T::one())?;
    let total = left.len() + 1 + right.len();
    let mut grid = Vec::with_capacity(total);
    let mut a_s = Vec::with_capacity(total);
    let mut ap_s = Vec::with_capacity(total);
    for (t, a, ap) in left.into_iter().rev() {
        grid.push(t);
        a_s.push(a);
        ap_s.push(ap);
    }
    grid.push(t0);
    a_s.push(a0.clone());
    ap_s.push(a0p.clone());
    for (t, a, ap) in right {
        grid.push(t);
        a_s.push(a);
        ap_s.push(ap);
    }
    Ok(JacobiTensorPath { field: field.clone(), grid, a: a_s, ap: ap_s, base_point: t0, step: h })
}

impl<T: Real> JacobiTensorPath<T> {
    /// Builds a path from precomputed samples (e.g. a closed-form oracle).
    pub fn from_samples(
        field: CurvatureField<T>,
        grid: Vec<T>,
        a: Vec<DMatrix<T>>,
        ap: Vec<DMatrix<T>>,
        base_point: T,
    ) -> Result<Self> {
        if grid.len() < 2 || grid.len() != a.len() || grid.len() != ap.len() {
            return Err(Error::Precondition("grid and samples must have equal length >= 2".into()));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Precondition("grid must be strictly increasing".into()));
        }
        let step = grid.windows(2).fold(T::zero(), |m, w| m.max(w[1] - w[0]));
        Ok(Self { field, grid, a, ap, base_point, step })
    }

    pub fn field(&self) -> &CurvatureField<T> {
        &self.field
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.field.dimension()
    }

    pub fn a(&self, i: usize) -> &DMatrix<T> {
        &self.a[i]
    }

    pub fn ap(&self, i: usize) -> &DMatrix<T> {
        &self.ap[i]
    }

    pub fn base_point(&self) -> T {
        self.base_point
    }

    pub fn step(&self) -> T {
        self.step
    }

    pub fn range(&self) -> (T, T) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    pub fn det(&self, i: usize) -> T {
        self.a[i].determinant()
    }

    /// Index of the grid point closest to `t` (clamped to the grid).
    pub fn nearest_index(&self, t: T) -> usize {
        let idx = self.grid.partition_point(|&g| g < t);
        if idx == 0 {
            0
        } else if idx >= self.grid.len() {
            self.grid.len() - 1
        } else if t - self.grid[idx - 1] <= self.grid[idx] - t {
            idx - 1
        } else {
            idx
        }
    }

    /// `(A_t, A'_t)` at an arbitrary `t` in the grid range: the stored sample
    /// when `t` is a grid point, otherwise one exact RK4 step from the nearest
    /// grid point.
    pub fn state_at(&self, t: T) -> Result<(DMatrix<T>, DMatrix<T>)> {
        let (lo, hi) = self.range();
        if t < lo || t > hi {
            return Err(Error::Domain { t: t.f64(), lo: lo.f64(), hi: hi.f64() });
        }
        let i = self.nearest_index(t);
        let dt = t - self.grid[i];
        if dt == T::zero() {
            return Ok((self.a[i].clone(), self.ap[i].clone()));
        }
        rk4_step(&self.field, self.grid[i], &self.a[i], &self.ap[i], dt)
    }

    /// The equivalent Lagrange tensor `A ∘ F` with the same grid.
    pub fn compose(&self, f: &DMatrix<T>, base_point: T) -> Self {
        Self {
            field: self.field.clone(),
            grid: self.grid.clone(),
            a: self.a.iter().map(|a| a * f).collect(),
            ap: self.ap.iter().map(|ap| ap * f).collect(),
            base_point,
            step: self.step,
        }
    }

    /// Relative smallest singular value `σ_min(A) / σ_max([A; A'])`.
    pub fn relative_smin(&self, a: &DMatrix<T>, ap: &DMatrix<T>) -> T {
        let (sv, _, _) = sorted_svd(a);
        sv[sv.len() - 1] / stacked_scale(a, ap)
    }

    /// Writes the path as CSV: `t, A_00..A_nn, Ap_00..Ap_nn, detA`, row-major,
    /// 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.dimension();
        let mut header = vec!["t".to_string()];
        for prefix in ["A", "Ap"] {
            for i in 0..n {
                for j in 0..n {
                    header.push(format!("{prefix}_{i}{j}"));
                }
            }
        }
        header.push("detA".into());
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![fmt17(self.grid[k])];
            for m in [&self.a[k], &self.ap[k]] {
                for i in 0..n {
                    for j in 0..n {
                        row.push(fmt17(m[(i, j)]));
                    }
                }
            }
            row.push(fmt17(self.det(k)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Formats a scalar with 17 significant digits (NaN as `NaN`).
pub fn fmt17<T: Real>(x: T) -> String {
    let v = x.f64();
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{:.16e}", v)
    }
}

/// Solves for `S = A' A⁻¹`, refusing ill-conditioned `A`.
pub fn riccati_from<T: Real>(a: &DMatrix<T>, ap: &DMatrix<T>, t: T) -> Result<DMatrix<T>> {
    let (sv, _, _) = sorted_svd(a);
    let smin = sv[sv.len() - 1];
    if smin == T::zero() || sv[0] / smin > T::c(CONDITION_CAP) {
        return Err(Error::SingularPoint { t: t.f64() });
    }
    let x = a
        .transpose()
        .lu()
        .solve(&ap.transpose())
        .ok_or(Error::SingularPoint { t: t.f64() })?;
    Ok(x.transpose())
}

/// Riccati operator `S_t = A'_t A_t⁻¹`.
pub fn riccati_at<T: Real>(path: &JacobiTensorPath<T>, t: T) -> Result<DMatrix<T>> {
    let (a, ap) = path.state_at(t)?;
    if path.relative_smin(&a, &ap) < T::c(KERNEL_TOL) {
        return Err(Error::SingularPoint { t: t.f64() });
    }
    riccati_from(&a, &ap, t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LagrangeReport<T> {
    pub max_asymmetry: T,
    pub nondegenerate: bool,
    pub pass: bool,
}

/// Self-adjointness `AᵀA' = A'ᵀA` along the grid plus non-degeneracy at the base.
pub fn is_lagrange<T: Real>(path: &JacobiTensorPath<T>, tol: T) -> LagrangeReport<T> {
    let max_asymmetry = (0..path.len())
        .map(|i| {
            let w = path.a(i).transpose() * path.ap(i) - path.ap(i).transpose() * path.a(i);
            max_abs(&w)
        })
        .fold(T::zero(), |m, x| m.max(x));
    let i0 = path.nearest_index(path.base_point());
    let nondegenerate = is_nondegenerate(path.a(i0), path.ap(i0));
    LagrangeReport { max_asymmetry, nondegenerate, pass: nondegenerate && max_asymmetry <= tol }
}

/// The Wronskian matrix `AᵀA' − A'ᵀA` at grid index `i` (constant along a path).
pub fn wronskian<T: Real>(path: &JacobiTensorPath<T>, i: usize) -> DMatrix<T> {
    path.a(i).transpose() * path.ap(i) - path.ap(i).transpose() * path.a(i)
}

/// Orthogonal splitting `E_{t0} = V1 ⊕ V2` at a base point and the block of
/// `A'_{t0}` on `V1`.
#[derive(Clone, Debug)]
pub struct BasePointDecomposition<T: Real> {
    pub t0: T,
    /// Orthonormal basis of `V1 = {X(t0)}` as columns.
    pub v1_basis: DMatrix<T>,
    /// Orthonormal basis of `V2 = {X'(t0) : X(t0) = 0}` as columns.
    pub v2_basis: DMatrix<T>,
    /// Symmetric block of `A'_{t0}` on `V1`, in the `v1_basis` coordinates.
    pub b_block: DMatrix<T>,
    /// The isomorphism `F` with normalized path `A ∘ F`.
    pub transform: DMatrix<T>,
}

fn lstsq<T: Real>(m: &DMatrix<T>, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
    let svd = m.clone().svd(true, true);
    let eps = svd.singular_values.iter().fold(T::zero(), |a, &b| a.max(b)) * T::c(1e-12);
    svd.solve(rhs, eps).map_err(|e| Error::Numeric(e.to_string()))
}

/// Re-expresses the family at base point `t0` so that `A_{t0} = diag(Id, 0)`
/// and `A'_{t0} = diag(B, Id)` with respect to `V1 ⊕ V2`.
pub fn normalize_at_base<T: Real>(
    path: &JacobiTensorPath<T>,
    t0: T,
) -> Result<(JacobiTensorPath<T>, BasePointDecomposition<T>)> {
    let n = path.dimension();
    let (a0, a0p) = path.state_at(t0)?;
    let threshold = stacked_scale(&a0, &a0p) * T::c(KERNEL_TOL);
    let q1 = range_space(&a0, threshold);
    let q2 = complement(&q1, n);
    let kernel = null_space(&a0, threshold);
    if kernel.ncols() != q2.ncols() {
        return Err(Error::Numeric("kernel and V2 dimensions disagree".into()));
    }
    let apk = &a0p * &kernel;

    let mut u = DMatrix::zeros(n, n);
    // V1 directions: X(t0) = v with X'(t0) ∈ V1
    if q1.ncols() > 0 {
        let u1 = lstsq(&a0, &q1)?;
        let mut cols = u1.clone();
        if kernel.ncols() > 0 {
            let w2 = &q2 * q2.transpose() * (&a0p * &u1);
            let c = lstsq(&apk, &w2)?;
            cols -= &kernel * c;
        }
        u.columns_mut(0, q1.ncols()).copy_from(&cols);
    }
    // V2 directions: X(t0) = 0, X'(t0) = v
    if kernel.ncols() > 0 {
        let c = lstsq(&apk, &q2)?;
        u.columns_mut(q1.ncols(), q2.ncols()).copy_from(&(&kernel * c));
    }
    let mut q = DMatrix::zeros(n, n);
    q.columns_mut(0, q1.ncols()).copy_from(&q1);
    q.columns_mut(q1.ncols(), q2.ncols()).copy_from(&q2);
    let f = &u * q.transpose();
    let normalized = path.compose(&f, t0);
    let b_block = q1.transpose() * (&a0p * &f) * &q1;
    Ok((
        normalized,
        BasePointDecomposition { t0, v1_basis: q1, v2_basis: q2, b_block, transform: f },
    ))
}

/// A zero of `det A_t` with its kernel.
#[derive(Clone, Debug)]
pub struct SingularPointRecord<T: Real> {
    pub t_star: T,
    /// Orthonormal kernel basis of `A_{t*}` (columns).
    pub kernel_basis: DMatrix<T>,
    pub kernel_dim: usize,
    /// Leading coefficient `a` of `det A_t ≈ a (t − t*)^k`, right-sided fit
    /// when available, otherwise left-sided.
    pub adjugate_scale: T,
    pub adjugate_scale_right: Option<T>,
    pub adjugate_scale_left: Option<T>,
    /// Located at the first or last grid point and left unrefined.
    pub at_boundary: bool,
}

impl<T: Real> SingularPointRecord<T> {
    /// Largest `|⟨v, k⟩|` over the kernel basis, for unit-normalized `v`.
    pub fn kernel_overlap(&self, v: &nalgebra::DVector<T>) -> T {
        let norm = v.norm();
        (0..self.kernel_dim)
            .map(|j| abs(self.kernel_basis.column(j).dot(v)) / norm)
            .fold(T::zero(), |m, x| m.max(x))
    }
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
fn golden_min<T: Real>(mut a: T, mut b: T, width: T, f: impl Fn(T) -> Result<T>) -> Result<T> {
    let inv_phi = T::c(0.618_033_988_749_894_9);
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > width {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d)?;
        }
    }
    Ok((a + b) * T::c(0.5))
}

/// Locates the zeros of `det A_t` on the grid range.
///
/// Candidates are sign changes of `det A` and local minima of the relative
/// smallest singular value (which also catches even-order zeros); each is
/// refined by golden-section search on `σ_min(A_t)` re-integrating locally,
/// and accepted when the refined relative singular value is below `tol`.
pub fn find_singular_points<T: Real>(
    path: &JacobiTensorPath<T>,
    tol: T,
) -> Result<Vec<SingularPointRecord<T>>> {
    let len = path.len();
    let s: Vec<T> = (0..len).map(|i| path.relative_smin(path.a(i), path.ap(i))).collect();
    let dets: Vec<T> = (0..len).map(|i| path.det(i)).collect();
    let screen = (path.step() * T::c(2.0)).max(tol);

    let mut candidates: Vec<usize> = Vec::new();
    for i in 0..len {
        let left_ok = i == 0 || s[i] <= s[i - 1];
        let right_ok = i + 1 == len || s[i] <= s[i + 1];
        let sign_change = i + 1 < len && dets[i] * dets[i + 1] < T::zero();
        if (left_ok && right_ok && s[i] < screen) || sign_change {
            let pick = if sign_change && i + 1 < len && s[i + 1] < s[i] { i + 1 } else { i };
            if candidates.last().is_none_or(|&last| pick > last + 1) {
                candidates.push(pick);
            }
        }
    }

    let (lo, hi) = path.range();
    let rel = |t: T| -> Result<T> {
        let (a, ap) = path.state_at(t)?;
        Ok(path.relative_smin(&a, &ap))
    };
    let mut out: Vec<SingularPointRecord<T>> = Vec::new();
    for i in candidates {
        let boundary = i == 0 || i + 1 == len;
        let t_star = if boundary {
            if s[i] >= tol {
                continue;
            }
            path.grid()[i]
        } else {
            let t = golden_min(path.grid()[i - 1], path.grid()[i + 1], T::c(REFINE_WIDTH), rel)?;
            if rel(t)? >= tol {
                continue;
            }
            t
        };
        if out.iter().any(|r| abs(r.t_star - t_star) < T::c(1e-8)) {
            continue;
        }
        let (a, ap) = path.state_at(t_star)?;
        let threshold = stacked_scale(&a, &ap) * tol;
        let mut kernel = null_space(&a, threshold);
        if kernel.ncols() == 0 {
            let (_, _, v) = sorted_svd(&a);
            kernel = v.columns(a.ncols() - 1, 1).into_owned();
        }
        let k = kernel.ncols();
        let delta = T::c(1e-3);
        let fit = |sign: T| -> Result<Option<T>> {
            let t1 = t_star + sign * delta;
            let t2 = t_star + sign * delta * T::c(2.0);
            if t2 < lo || t2 > hi {
                return Ok(None);
            }
            let d1 = path.state_at(t1)?.0.determinant() / (sign * delta).powi(k as i32);
            let d2 = path.state_at(t2)?.0.determinant() / (sign * delta * T::c(2.0)).powi(k as i32);
            Ok(Some(d1 * T::c(2.0) - d2))
        };
        let right = fit(T::one())?;
        let left = fit(-T::one())?;
        let adjugate_scale = right.or(left).unwrap_or_else(T::nan);
        out.push(SingularPointRecord {
            t_star,
            kernel_basis: kernel,
            kernel_dim: k,
            adjugate_scale,
            adjugate_scale_right: right,
            adjugate_scale_left: left,
            at_boundary: boundary,
        });
    }
    out.sort_by(|x, y| x.t_star.partial_cmp(&y.t_star).unwrap_or(std::cmp::Ordering::Equal));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelGeometry;
    use nalgebra::DVector;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    fn sphere_path(n: usize, lo: f64, hi: f64) -> JacobiTensorPath<f64> {
        let field = CurvatureField::constant(n, 1.0).unwrap();
        integrate_jacobi(&field, 0.0, &DMatrix::zeros(n, n), &DMatrix::identity(n, n), (lo, hi), 1e-3).unwrap()
    }

    /// Hopf family path started from exact data at the left end.
    fn hopf_path(lo: f64, hi: f64) -> JacobiTensorPath<f64> {
        let m = ModelGeometry::s3_hopf();
        let (t0, a0, a0p) = m.family_data().unwrap();
        let (a, ap) = m.exact_jacobi(t0, &a0, &a0p, lo).unwrap();
        integrate_jacobi(&m.field().unwrap(), lo, &a, &ap, (lo, hi), 1e-3).unwrap()
    }

    #[test]
    fn sphere_integration_matches_sine() {
        let p = sphere_path(3, 0.0, PI);
        assert_eq!(p.grid()[0], 0.0);
        assert_eq!(*p.grid().last().unwrap(), PI);
        for i in 0..p.len() {
            let t = p.grid()[i];
            assert!((p.a(i) - DMatrix::identity(3, 3) * t.sin()).amax() < 1e-9);
            assert!((p.ap(i) - DMatrix::identity(3, 3) * t.cos()).amax() < 1e-9);
        }
    }

    #[test]
    fn flat_parallel_family_is_exactly_constant() {
        let field = CurvatureField::constant(2, 0.0).unwrap();
        let id = DMatrix::identity(2, 2);
        let p = integrate_jacobi(&field, 0.0, &id, &DMatrix::zeros(2, 2), (-3.0, 5.0), 1e-3).unwrap();
        for i in 0..p.len() {
            assert_eq!(p.a(i), &id);
            assert_eq!(p.ap(i), &DMatrix::zeros(2, 2));
        }
    }

    #[test]
    fn product_model_matches_closed_form() {
        let m = ModelGeometry::diagonal_profile(vec![1.0, 0.0]).unwrap();
        let p = integrate_jacobi(&m.field().unwrap(), 0.0, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2), (0.0, 1.0), 1e-3)
            .unwrap();
        for i in 0..p.len() {
            let t: f64 = p.grid()[i];
            assert!((p.a(i) - diag(&[t.cos(), 1.0])).amax() < 1e-9);
        }
    }

    #[test]
    fn degenerate_data_rejected() {
        let field = CurvatureField::constant(2, 1.0).unwrap();
        let a0 = diag(&[1.0, 0.0]);
        let a0p = diag(&[1.0, 0.0]);
        let e = integrate_jacobi(&field, 0.0, &a0, &a0p, (0.0, 1.0), 1e-3);
        assert!(matches!(e, Err(Error::Precondition(_))));
        let e = integrate_jacobi(&field, 0.0, &DMatrix::identity(2, 2), &a0p, (0.0, 1.0), 0.0);
        assert!(matches!(e, Err(Error::Precondition(_))));
    }

    #[test]
    fn non_finite_field_is_numeric_error() {
        let field = CurvatureField::new(1, (-10.0, 10.0), |t: f64| DMatrix::from_element(1, 1, 1.0 / (t - 0.5))).unwrap();
        let e = integrate_jacobi(&field, 0.0, &DMatrix::identity(1, 1), &DMatrix::zeros(1, 1), (0.0, 1.0), 0.25);
        assert!(matches!(e, Err(Error::Numeric(_))));
    }

    #[test]
    fn rk4_is_fourth_order() {
        let m = ModelGeometry::constant_curvature(1.0, 2).unwrap();
        let a0 = DMatrix::identity(2, 2);
        let a0p = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 1.0]);
        let err = |h: f64| {
            let p = integrate_jacobi(&m.field().unwrap(), 0.0, &a0, &a0p, (0.0, 3.0), h).unwrap();
            (0..p.len())
                .map(|i| (p.a(i) - m.exact_jacobi(0.0, &a0, &a0p, p.grid()[i]).unwrap().0).amax())
                .fold(0.0, f64::max)
        };
        let ratio = err(0.02) / err(0.01);
        assert!(ratio >= 12.0, "ratio {ratio}");
    }

    #[test]
    fn riccati_examples() {
        let p = sphere_path(2, 0.0, PI);
        let s = riccati_at(&p, FRAC_PI_4).unwrap();
        assert!((s - DMatrix::identity(2, 2)).amax() < 1e-9);
        assert!(matches!(riccati_at(&p, 0.0), Err(Error::SingularPoint { .. })));

        let field = CurvatureField::constant(2, 0.0).unwrap();
        let b = [0.5, -0.25];
        let p = integrate_jacobi(&field, 0.0, &DMatrix::identity(2, 2), &diag(&b), (0.0, 2.0), 1e-3).unwrap();
        let t = 1.3;
        let s = riccati_at(&p, t).unwrap();
        assert!((s - diag(&[b[0] / (1.0 + b[0] * t), b[1] / (1.0 + b[1] * t)])).amax() < 1e-12);
        let p0 = integrate_jacobi(&field, 0.0, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2), (0.0, 2.0), 1e-3).unwrap();
        assert_eq!(riccati_at(&p0, 1.0).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn lagrange_checks() {
        let r = is_lagrange(&sphere_path(2, 0.0, 1.0), 1e-10);
        assert!(r.pass && r.max_asymmetry < 1e-10);
        let field = CurvatureField::constant(2, 0.0).unwrap();
        let a0p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let p = integrate_jacobi(&field, 0.0, &DMatrix::identity(2, 2), &a0p, (0.0, 1.0), 1e-3).unwrap();
        assert!(!is_lagrange(&p, 1e-10).pass);
        assert!(is_lagrange(&hopf_path(0.0, PI), 1e-10).pass);
    }

    #[test]
    fn wronskian_is_a_first_integral() {
        let m = ModelGeometry::diagonal_profile(vec![2.0, 0.5, 0.0]).unwrap();
        let a0 = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.0, 1.0, 0.3, 0.1, 0.0, 1.0]);
        let a0p = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 2.0, 0.5, 0.0, 0.0, 0.0, -1.0]);
        let p = integrate_jacobi(&m.field().unwrap(), 0.0, &a0, &a0p, (-2.0, 2.0), 1e-3).unwrap();
        let w0 = wronskian(&p, p.nearest_index(0.0));
        for i in 0..p.len() {
            assert!((wronskian(&p, i) - &w0).amax() < 1e-8);
        }
    }

    #[test]
    fn riccati_symmetric_and_satisfies_riccati_equation() {
        let p = hopf_path(0.0, PI);
        let h = 1e-5;
        for k in 1..60 {
            let t = 0.05 * k as f64;
            if t <= 0.05 || (t - FRAC_PI_2).abs() <= 0.05 || (t - PI).abs() <= 0.05 {
                continue;
            }
            let s = riccati_at(&p, t).unwrap();
            assert!((&s - s.transpose()).amax() <= 1e-6);
            let ds = (riccati_at(&p, t + h).unwrap() - riccati_at(&p, t - h).unwrap()) / (2.0 * h);
            let res = ds + &s * &s + DMatrix::identity(2, 2);
            assert!(res.amax() <= 1e-4, "t = {t}: {}", res.amax());
        }
    }

    #[test]
    fn normalization_at_regular_base_point() {
        let p = hopf_path(0.0, PI);
        let t0 = FRAC_PI_4;
        let (q, dec) = normalize_at_base(&p, t0).unwrap();
        let (a, _) = q.state_at(t0).unwrap();
        assert!((a - DMatrix::identity(2, 2)).amax() < 1e-10);
        assert_eq!(dec.v2_basis.ncols(), 0);
        assert!(is_lagrange(&q, 1e-9).pass);
    }

    #[test]
    fn normalization_at_full_kernel_base_point() {
        let p = sphere_path(2, 0.0, 1.0);
        let (q, dec) = normalize_at_base(&p, 0.0).unwrap();
        assert_eq!(dec.v1_basis.ncols(), 0);
        assert_eq!(dec.v2_basis.ncols(), 2);
        assert!(q.a(0).amax() < 1e-15);
        assert!((q.ap(0) - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn normalization_at_hopf_singular_point() {
        let p = hopf_path(0.0, 4.0);
        let (q, dec) = normalize_at_base(&p, PI).unwrap();
        assert_eq!(dec.v1_basis.ncols(), 1);
        assert_eq!(dec.v2_basis.ncols(), 1);
        assert!((dec.v1_basis.column(0).dot(&dec.v2_basis.column(0))).abs() < 1e-10);
        // J₁(π) = −e₁ spans V1
        assert!((dec.v1_basis[(0, 0)].abs() - 1.0).abs() < 1e-9);
        let (a, ap) = q.state_at(PI).unwrap();
        let p1 = &dec.v1_basis * dec.v1_basis.transpose();
        let p2 = &dec.v2_basis * dec.v2_basis.transpose();
        assert!((&a - &p1).amax() < 1e-9);
        assert!((&ap * &p2 - &p2).amax() < 1e-9);
        assert!((&p2 * &ap * &p1).amax() < 1e-9);
        assert!((&dec.b_block - dec.b_block.transpose()).amax() < 1e-12);
    }

    #[test]
    fn sphere_singular_points() {
        for n in [1, 2, 3] {
            let p = sphere_path(n, -0.5, 3.5);
            let sps = find_singular_points(&p, KERNEL_TOL).unwrap();
            assert_eq!(sps.len(), 2, "n = {n}");
            assert!(sps[0].t_star.abs() < 1e-9);
            assert!((sps[1].t_star - PI).abs() < 1e-9);
            for sp in &sps {
                assert_eq!(sp.kernel_dim, n);
                assert!(!sp.at_boundary);
                // det(sin t·Id) ≈ ±(t − t*)^n
                assert!((sp.adjugate_scale.abs() - 1.0).abs() < 1e-5, "{}", sp.adjugate_scale);
            }
        }
    }

    #[test]
    fn sphere_singular_points_at_interval_ends() {
        let p = sphere_path(2, 0.0, PI);
        let sps = find_singular_points(&p, KERNEL_TOL).unwrap();
        assert_eq!(sps.len(), 2);
        assert!(sps[0].t_star.abs() < 1e-9 && sps[0].at_boundary);
        assert!((sps[1].t_star - PI).abs() < 1e-9 && sps[1].at_boundary);
    }

    #[test]
    fn flat_path_has_no_singular_points() {
        let field = CurvatureField::constant(3, 0.0).unwrap();
        let p = integrate_jacobi(&field, 0.0, &DMatrix::identity(3, 3), &DMatrix::zeros(3, 3), (-2.0, 2.0), 1e-3).unwrap();
        assert!(find_singular_points(&p, KERNEL_TOL).unwrap().is_empty());
    }

    #[test]
    fn hopf_singular_points_and_kernels() {
        let p = hopf_path(0.1, 3.2);
        let sps = find_singular_points(&p, KERNEL_TOL).unwrap();
        assert_eq!(sps.len(), 2);
        assert!((sps[0].t_star - FRAC_PI_2).abs() < 1e-9);
        assert!((sps[1].t_star - PI).abs() < 1e-9);
        // J₁ − J₂ vanishes at π/2, J₂ at π
        let k0 = sps[0].kernel_basis.column(0);
        assert!((k0[0] + k0[1]).abs() < 1e-8);
        let k1 = sps[1].kernel_basis.column(0);
        assert!(k1[0].abs() < 1e-8);
        for sp in &sps {
            assert_eq!(sp.kernel_dim, 1);
            assert!(sp.adjugate_scale.abs() > 1e-3);
            let l = sp.adjugate_scale_left.unwrap();
            let r = sp.adjugate_scale_right.unwrap();
            assert!((l - r).abs() < 1e-4 * r.abs().max(1.0));
        }
    }

    #[test]
    fn csv_dump_has_expected_shape() {
        let p = sphere_path(2, 0.0, 0.01);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,A_00,A_01,A_10,A_11,Ap_00,Ap_01,Ap_10,Ap_11,detA");
        assert_eq!(text.lines().count(), p.len() + 1);
        assert!(text.lines().nth(1).unwrap().starts_with("0.0000000000000000e0,"));
    }

    #[test]
    fn single_precision_integration() {
        let field = CurvatureField::<f32>::constant(2, 1.0).unwrap();
        let p = integrate_jacobi(&field, 0.0f32, &DMatrix::zeros(2, 2), &DMatrix::identity(2, 2), (0.0, 3.0), 1e-2).unwrap();
        let i = p.nearest_index(1.0);
        assert!((p.a(i)[(0, 0)] - p.grid()[i].sin()).abs() < 1e-4);
    }
}
