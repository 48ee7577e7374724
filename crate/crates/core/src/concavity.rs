//! The concave functions `g_v`, `g_W` attached to a Lagrange tensor and the
//! checks of their differential equations and inequalities.
//!
//! For `v ∈ E_{t0}` the virtual Jacobi field is `Z_t = A_t^{-*} v`, with
//! `f_v = ‖Z_t‖²` and `g_v = ‖v‖² / ‖Z_t‖`. At regular points
//! `g_v'' + r g_v = 0` where, for `z = Z/‖Z‖`,
//! `r = ⟨Rz, z⟩ + 3(‖Sz‖² − ⟨Sz, z⟩²)`.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jacobi::{
    find_singular_points, fmt17, riccati_from, JacobiTensorPath, SingularPointRecord, CONDITION_CAP,
    KERNEL_TOL,
};
use crate::scalar::{abs, max_abs, null_space, sorted_svd, Real};

/// Kernel-orthogonality tolerance deciding smooth extension at singular points.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;
/// Minimum distance from the singular set for ODE residual maxima.
pub const RESIDUAL_EXCLUSION: f64 = 0.05;

/// Samples of `g_v` and its companions along a grid.
#[derive(Clone, Debug)]
pub struct ConcavityProfile<T: Real> {
    pub v: DVector<T>,
    pub grid: Vec<T>,
    pub g: Vec<T>,
    /// `‖A^{-*}v‖²`; infinite where `g` vanishes.
    pub f: Vec<T>,
    /// Virtual Jacobi field (absent for Gram-based profiles and at zeros of `g`).
    pub z: Vec<Option<DVector<T>>>,
    /// `r(t)`; NaN where undefined.
    pub r: Vec<T>,
    /// `g'' + r g` with `g''` from local finite differences; NaN where undefined.
    pub residual: Vec<T>,
    pub is_singular: Vec<bool>,
    /// Largest `|⟨v/‖v‖, k⟩|` over the kernel at singular samples, NaN elsewhere.
    pub dist_to_kernel: Vec<T>,
    /// Parameters of the singular set found on the grid range.
    pub singular_times: Vec<T>,
    pub singular_points: Vec<SingularPointRecord<T>>,
}

impl<T: Real> ConcavityProfile<T> {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Distance from `t` to the nearest singular parameter (infinite if none).
    pub fn distance_to_singular(&self, t: T) -> T {
        self.singular_times
            .iter()
            .fold(T::c(f64::INFINITY), |m, &s| m.min(abs(t - s)))
    }

    pub fn nearest_index(&self, t: T) -> usize {
        let mut best = 0;
        for (i, &g) in self.grid.iter().enumerate() {
            if abs(g - t) < abs(self.grid[best] - t) {
                best = i;
            }
        }
        best
    }

    /// Non-uniform centered second difference of `g` at interior index `i`.
    pub fn second_difference(&self, i: usize) -> Option<T> {
        if i == 0 || i + 1 >= self.len() {
            return None;
        }
        Some(second_difference(&self.grid, &self.g, i))
    }

    /// CSV with header `t,g,f,r,residual,is_singular,dist_to_kernel`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,g,f,r,residual,is_singular,dist_to_kernel")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt17(self.grid[i]),
                fmt17(self.g[i]),
                fmt_inf(self.f[i]),
                fmt17(self.r[i]),
                fmt17(self.residual[i]),
                u8::from(self.is_singular[i]),
                fmt17(self.dist_to_kernel[i]),
            )?;
        }
        Ok(())
    }
}

fn fmt_inf<T: Real>(x: T) -> String {
    let v = x.f64();
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        fmt17(x)
    }
}

/// Three-point second difference on a possibly non-uniform grid.
pub fn second_difference<T: Real>(grid: &[T], y: &[T], i: usize) -> T {
    let hm = grid[i] - grid[i - 1];
    let hp = grid[i + 1] - grid[i];
    let two = T::c(2.0);
    two * ((y[i + 1] - y[i]) / hp - (y[i] - y[i - 1]) / hm) / (hm + hp)
}

/// Quadratic extrapolation to offset zero from samples at offsets 1, 2, 3.
fn extrapolate3<T: Real>(y1: T, y2: T, y3: T) -> T {
    T::c(3.0) * y1 - T::c(3.0) * y2 + y3
}

/// Step for the local second derivatives used in ODE residuals.
pub const LOCAL_FD_STEP: f64 = 2e-4;

/// Second derivative of `t ↦ F(A_t)` at grid index `i`, from single RK4
/// steps of `±ε, ±2ε` off the stored state and Richardson extrapolation of
/// the two central differences. `None` when a sample is unavailable.
fn local_second_derivative<T: Real, F>(path: &JacobiTensorPath<T>, i: usize, map: F) -> Result<Option<T>>
where
    F: Fn(&DMatrix<T>) -> Option<T>,
{
    let eps = T::c(LOCAL_FD_STEP);
    let t = path.grid()[i];
    let (lo, hi) = path.range();
    if t - eps * T::c(2.0) < lo || t + eps * T::c(2.0) > hi {
        return Ok(None);
    }
    let (a0, ap0) = (path.a(i), path.ap(i));
    let mut y = [T::zero(); 4];
    for (k, m) in [1.0, -1.0, 2.0, -2.0].into_iter().enumerate() {
        let (a, _) = crate::jacobi::rk4_step(path.field(), t, a0, ap0, eps * T::c(m))?;
        match map(&a) {
            Some(val) => y[k] = val,
            None => return Ok(None),
        }
    }
    let Some(y0) = map(a0) else { return Ok(None) };
    let two = T::c(2.0);
    let d_h = (y[0] - two * y0 + y[1]) / (eps * eps);
    let d_2h = (y[2] - two * y0 + y[3]) / (eps * eps * T::c(4.0));
    Ok(Some((T::c(4.0) * d_h - d_2h) / T::c(3.0)))
}

/// `A^{-*} v` with a condition-number guard.
fn inverse_adjoint_apply<T: Real>(a: &DMatrix<T>, v: &DVector<T>) -> Option<DVector<T>> {
    let (sv, _, _) = sorted_svd(a);
    let smin = sv[sv.len() - 1];
    if smin == T::zero() || sv[0] / smin > T::c(CONDITION_CAP) {
        return None;
    }
    a.transpose().lu().solve(v)
}

/// One-sided limit of `t ↦ F(A_t, A'_t)` at `t*`, extrapolated from offsets
/// `m·δ`, `m = 1, 2, 3` on whichever side fits into the path.
fn one_sided_limit<T: Real, F>(path: &JacobiTensorPath<T>, t_star: T, map: F) -> Result<Option<DVector<T>>>
where
    F: Fn(&DMatrix<T>, &DMatrix<T>) -> Option<DVector<T>>,
{
    let (lo, hi) = path.range();
    let delta = path.step();
    for side in [T::one(), -T::one()] {
        let t3 = t_star + side * delta * T::c(3.0);
        if t3 < lo || t3 > hi {
            continue;
        }
        let mut vals = Vec::with_capacity(3);
        for m in 1..=3 {
            let (a, ap) = path.state_at(t_star + side * delta * T::c(m as f64))?;
            match map(&a, &ap) {
                Some(x) => vals.push(x),
                None => break,
            }
        }
        if vals.len() == 3 {
            let lim = &vals[0] * T::c(3.0) - &vals[1] * T::c(3.0) + &vals[2];
            return Ok(Some(lim));
        }
    }
    Ok(None)
}

/// Cofactor matrix `C_ij = (−1)^{i+j} det(minor_ij)`.
pub fn cofactor_matrix<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    let n = a.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, T::one());
    }
    DMatrix::from_fn(n, n, |i, j| {
        let minor = a.clone().remove_row(i).remove_column(j);
        let sign = if (i + j) % 2 == 0 { T::one() } else { -T::one() };
        sign * minor.determinant()
    })
}

/// Direct adjugate-formula limit of `A_t^{-*} v` at a simple (`k = 1`)
/// singular point: `A^{-*} = cof(A) / det A`, so by l'Hôpital the limit is
/// `(cof(A) v)' / (det A)'` at `t*` whenever `v ⟂ ker A_{t*}`.
pub fn adjugate_limit<T: Real>(
    path: &JacobiTensorPath<T>,
    record: &SingularPointRecord<T>,
    v: &DVector<T>,
) -> Result<DVector<T>> {
    if record.kernel_dim != 1 {
        return Err(Error::Precondition("adjugate limit implemented for one-dimensional kernels".into()));
    }
    if record.kernel_overlap(v) >= T::c(ORTHOGONALITY_TOL) {
        return Err(Error::Precondition("v is not orthogonal to the kernel".into()));
    }
    let eps = T::c(1e-5);
    let (lo, hi) = path.range();
    let (tm, tp) = (
        (record.t_star - eps).max(lo),
        (record.t_star + eps).min(hi),
    );
    let (am, _) = path.state_at(tm)?;
    let (ap_, _) = path.state_at(tp)?;
    let dt = tp - tm;
    let num = (cofactor_matrix(&ap_) * v - cofactor_matrix(&am) * v) / dt;
    let den = (ap_.determinant() - am.determinant()) / dt;
    Ok(num / den)
}

/// Computes the profile of `g_v` along a Lagrange path.
pub fn g_profile<T: Real>(path: &JacobiTensorPath<T>, v: &DVector<T>) -> Result<ConcavityProfile<T>> {
    let n = path.dimension();
    if v.len() != n {
        return Err(Error::Precondition(format!("vector must have dimension {n}")));
    }
    let v2 = v.norm_squared();
    if v2 == T::zero() {
        return Err(Error::Precondition("v must be non-zero".into()));
    }
    let singular = find_singular_points(path, T::c(KERNEL_TOL))?;
    let len = path.len();
    let mut g = vec![T::zero(); len];
    let mut f = vec![T::c(f64::INFINITY); len];
    let mut z = vec![None; len];
    let mut r = vec![T::nan(); len];
    let mut is_singular = vec![false; len];
    let mut dist = vec![T::nan(); len];

    for i in 0..len {
        let t = path.grid()[i];
        let (a, ap) = (path.a(i), path.ap(i));
        let on_singular = singular.iter().find(|s| abs(s.t_star - t) < T::c(1e-9));
        let zi = if on_singular.is_none() { inverse_adjoint_apply(a, v) } else { None };
        match zi {
            Some(zv) => {
                let fz = zv.norm_squared();
                g[i] = v2 / fz.sqrt();
                f[i] = fz;
                if let Ok(s) = riccati_from(a, ap, t) {
                    let rmat = path.field().at(t)?;
                    r[i] = r_from(&rmat, &s, &zv);
                }
                z[i] = Some(zv);
            }
            None => {
                is_singular[i] = true;
                let overlap = match on_singular {
                    Some(rec) => rec.kernel_overlap(v),
                    None => {
                        let (sv, _, _) = sorted_svd(a);
                        let kernel = null_space(a, sv[0] * T::c(KERNEL_TOL));
                        (0..kernel.ncols())
                            .map(|j| abs(kernel.column(j).dot(v)) / v2.sqrt())
                            .fold(T::zero(), |m, x| m.max(x))
                    }
                };
                dist[i] = overlap;
                if overlap < T::c(ORTHOGONALITY_TOL) {
                    let lim = one_sided_limit(path, t, |a, _| inverse_adjoint_apply(a, v))?;
                    if let Some(zl) = lim {
                        let fz = zl.norm_squared();
                        g[i] = v2 / fz.sqrt();
                        f[i] = fz;
                        z[i] = Some(zl);
                    }
                }
            }
        }
    }

    let mut profile = ConcavityProfile {
        v: v.clone(),
        grid: path.grid().to_vec(),
        g,
        f,
        z,
        r,
        residual: vec![T::nan(); len],
        is_singular,
        dist_to_kernel: dist,
        singular_times: singular.iter().map(|s| s.t_star).collect(),
        singular_points: singular,
    };
    for i in 0..len {
        if !profile.is_singular[i] && profile.r[i].is_finite() {
            let gpp = local_second_derivative(path, i, |a| inverse_adjoint_apply(a, v).map(|zv| v2 / zv.norm()))?;
            if let Some(gpp) = gpp {
                profile.residual[i] = gpp + profile.r[i] * profile.g[i];
            }
        }
    }
    Ok(profile)
}

fn r_from<T: Real>(rmat: &DMatrix<T>, s: &DMatrix<T>, zv: &DVector<T>) -> T {
    let zn = zv / zv.norm();
    let sz = s * &zn;
    let szz = sz.dot(&zn);
    (rmat * &zn).dot(&zn) + T::c(3.0) * (sz.norm_squared() - szz * szz)
}

/// The coefficient `r(t)` of `g_v'' + r g_v = 0` at a regular point.
pub fn r_coefficient<T: Real>(path: &JacobiTensorPath<T>, v: &DVector<T>, t: T) -> Result<T> {
    let (a, ap) = path.state_at(t)?;
    if path.relative_smin(&a, &ap) < T::c(KERNEL_TOL) {
        return Err(Error::SingularPoint { t: t.f64() });
    }
    let s = riccati_from(&a, &ap, t)?;
    let zv = inverse_adjoint_apply(&a, v).ok_or(Error::SingularPoint { t: t.f64() })?;
    Ok(r_from(&path.field().at(t)?, &s, &zv))
}

/// Exact `g_v'(t) = ‖v‖² ⟨S Z, Z⟩ / ‖Z‖³` at a regular point.
pub fn g_derivative<T: Real>(path: &JacobiTensorPath<T>, v: &DVector<T>, t: T) -> Result<T> {
    let (a, ap) = path.state_at(t)?;
    let s = riccati_from(&a, &ap, t)?;
    let zv = inverse_adjoint_apply(&a, v).ok_or(Error::SingularPoint { t: t.f64() })?;
    let nz = zv.norm();
    Ok(v.norm_squared() * (&s * &zv).dot(&zv) / (nz * nz * nz))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OdeReport<T> {
    pub max_residual: T,
    pub checked_points: usize,
}

/// Largest `|g'' + r g|` over interior regular samples farther than
/// [`RESIDUAL_EXCLUSION`] from the singular set.
pub fn verify_g_ode<T: Real>(profile: &ConcavityProfile<T>) -> OdeReport<T> {
    let mut max_residual = T::zero();
    let mut checked = 0;
    for i in 0..profile.len() {
        let res = profile.residual[i];
        if res.is_finite() && profile.distance_to_singular(profile.grid[i]) > T::c(RESIDUAL_EXCLUSION) {
            max_residual = max_residual.max(abs(res));
            checked += 1;
        }
    }
    if checked < 5 {
        max_residual = T::nan();
    }
    OdeReport { max_residual, checked_points: checked }
}

/// Largest residual of `(A^{-*})'' = (2S² + R) A^{-*}` over grid points away
/// from the singular set. The second derivative is a Richardson-extrapolated
/// central difference built from local RK4 steps off each grid point.
pub fn verify_inverse_adjoint_ode<T: Real>(path: &JacobiTensorPath<T>, eps: T) -> Result<OdeReport<T>> {
    let singular = find_singular_points(path, T::c(KERNEL_TOL))?;
    let (lo, hi) = path.range();
    let inv_t = |a: &DMatrix<T>| -> Option<DMatrix<T>> {
        let (sv, _, _) = sorted_svd(a);
        let smin = sv[sv.len() - 1];
        if smin == T::zero() || sv[0] / smin > T::c(CONDITION_CAP) {
            return None;
        }
        a.clone().try_inverse().map(|x| x.transpose())
    };
    let mut max_residual = T::zero();
    let mut checked = 0;
    for i in 0..path.len() {
        let t = path.grid()[i];
        let dist = singular.iter().fold(T::c(f64::INFINITY), |m, s| m.min(abs(s.t_star - t)));
        if dist <= T::c(RESIDUAL_EXCLUSION) || t - eps * T::c(2.0) < lo || t + eps * T::c(2.0) > hi {
            continue;
        }
        let (a0, ap0) = (path.a(i), path.ap(i));
        let at = |d: T| -> Result<Option<DMatrix<T>>> {
            let (a, _) = crate::jacobi::rk4_step(path.field(), t, a0, ap0, d)?;
            Ok(inv_t(&a))
        };
        let (Some(p0), Some(p1), Some(m1), Some(p2), Some(m2)) =
            (inv_t(a0), at(eps)?, at(-eps)?, at(eps * T::c(2.0))?, at(-eps * T::c(2.0))?)
        else {
            continue;
        };
        let d_h = (&p1 - &p0 * T::c(2.0) + &m1) / (eps * eps);
        let d_2h = (&p2 - &p0 * T::c(2.0) + &m2) / (eps * eps * T::c(4.0));
        let second = (d_h * T::c(4.0) - d_2h) / T::c(3.0);
        let s = riccati_from(a0, ap0, t)?;
        let rmat = path.field().at(t)?;
        let rhs = (&s * &s * T::c(2.0) + rmat) * &p0;
        max_residual = max_residual.max(max_abs(&(second - rhs)));
        checked += 1;
    }
    Ok(OdeReport { max_residual, checked_points: checked })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LowerBoundReport<T> {
    pub max_violation: T,
    pub pass: bool,
}

/// `g_v ≤ ‖A_t v‖` along the grid.
pub fn check_lower_bound<T: Real>(profile: &ConcavityProfile<T>, path: &JacobiTensorPath<T>) -> LowerBoundReport<T> {
    let mut worst = T::c(f64::NEG_INFINITY);
    for i in 0..profile.len() {
        let norm = (path.a(i) * &profile.v).norm();
        worst = worst.max(profile.g[i] - norm);
    }
    LowerBoundReport { max_violation: worst, pass: worst <= T::c(1e-10) }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryReport<T> {
    pub g: T,
    pub g_prime: T,
    pub g_second: T,
    pub norm: T,
    pub norm_prime: T,
    pub norm_second: T,
    /// `4(‖A'v‖² − ⟨A'v, v⟩²)`.
    pub correction: T,
    pub value_error: T,
    pub first_error: T,
    pub second_error: T,
    pub pass: bool,
}

/// Value and derivatives of `g_v` at the base point of a normalized path,
/// compared with those of `‖A_t v‖`.
pub fn boundary_derivative_check<T: Real>(
    path: &JacobiTensorPath<T>,
    v: &DVector<T>,
    tol: T,
) -> Result<BoundaryReport<T>> {
    let t0 = path.base_point();
    if abs(v.norm() - T::one()) > T::c(1e-12) {
        return Err(Error::Precondition("v must be a unit vector".into()));
    }
    let (a0, a0p) = path.state_at(t0)?;
    let (sv, _, _) = sorted_svd(&a0);
    let kernel = null_space(&a0, sv[0].max(T::one()) * T::c(KERNEL_TOL));
    let overlap = (0..kernel.ncols())
        .map(|j| abs(kernel.column(j).dot(v)))
        .fold(T::zero(), |m, x| m.max(x));
    if overlap >= T::c(ORTHOGONALITY_TOL) {
        return Err(Error::Precondition("v is not orthogonal to ker A_{t0}".into()));
    }

    let h = path.step();
    let (lo, hi) = path.range();
    let g_regular = |t: T| -> Result<T> {
        let (a, _) = path.state_at(t)?;
        let zv = inverse_adjoint_apply(&a, v).ok_or(Error::SingularPoint { t: t.f64() })?;
        Ok(T::one() / zv.norm())
    };
    let g0 = match inverse_adjoint_apply(&a0, v) {
        Some(zv) if kernel.ncols() == 0 => T::one() / zv.norm(),
        _ => {
            let side = if t0 + h * T::c(3.0) <= hi { T::one() } else { -T::one() };
            extrapolate3(g_regular(t0 + side * h)?, g_regular(t0 + side * h * T::c(2.0))?, g_regular(t0 + side * h * T::c(3.0))?)
        }
    };
    let (g1, g2) = if t0 - h * T::c(2.0) >= lo && t0 + h * T::c(2.0) <= hi {
        let gp = g_regular(t0 + h)?;
        let gm = g_regular(t0 - h)?;
        ((gp - gm) / (h * T::c(2.0)), (gp - g0 * T::c(2.0) + gm) / (h * h))
    } else {
        let side = if t0 + h * T::c(3.0) <= hi { T::one() } else { -T::one() };
        let s = |m: f64| g_regular(t0 + side * h * T::c(m));
        let (y1, y2, y3) = (s(1.0)?, s(2.0)?, s(3.0)?);
        let d1 = (-T::c(3.0) * g0 + T::c(4.0) * y1 - y2) / (h * T::c(2.0)) * side;
        let d2 = (T::c(2.0) * g0 - T::c(5.0) * y1 + T::c(4.0) * y2 - y3) / (h * h);
        (d1, d2)
    };

    let av = &a0 * v;
    let apv = &a0p * v;
    let rmat = path.field().at(t0)?;
    let norm = av.norm();
    let dot = apv.dot(&av);
    let norm1 = dot / norm;
    let norm2 = (-(&rmat * &av).dot(&av) * norm * norm + apv.norm_squared() * norm * norm - dot * dot)
        / (norm * norm * norm);
    let apv_v = apv.dot(v);
    let correction = T::c(4.0) * (apv.norm_squared() - apv_v * apv_v);

    let value_error = abs(g0 - norm);
    let first_error = abs(g1 - norm1);
    let second_error = abs(g2 - (norm2 - correction));
    Ok(BoundaryReport {
        g: g0,
        g_prime: g1,
        g_second: g2,
        norm,
        norm_prime: norm1,
        norm_second: norm2,
        correction,
        value_error,
        first_error,
        second_error,
        pass: value_error <= tol && first_error <= tol && second_error <= tol,
    })
}

/// Samples of `g_W = (det M_t)^{-1/2p}` for a `p`-dimensional subspace `W`.
#[derive(Clone, Debug)]
pub struct VolumeProfile<T: Real> {
    /// Orthonormal basis of `W` as columns.
    pub w_basis: DMatrix<T>,
    pub grid: Vec<T>,
    pub m: Vec<Option<DMatrix<T>>>,
    pub g: Vec<T>,
    /// Tangential block of `S` on `W_t = A^{-*}W` (in an orthonormal basis of `W_t`).
    pub s1: Vec<Option<DMatrix<T>>>,
    /// Normal block `W_t → W_t^⊥` as an `n × p` matrix.
    pub s2: Vec<Option<DMatrix<T>>>,
    /// `Σ ⟨R w_i, w_i⟩` over an orthonormal basis of `W_t`.
    pub curvature_sum: Vec<T>,
    /// `p g''/g − [(1/p)(tr S₁)² − tr S₁² − 3 tr S₂ᵀS₂ − Σ⟨Rw_i, w_i⟩]`.
    pub residual: Vec<T>,
    pub is_singular: Vec<bool>,
    pub singular_times: Vec<T>,
}

impl<T: Real> VolumeProfile<T> {
    pub fn dim(&self) -> usize {
        self.w_basis.ncols()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,gW,detM,residual,is_singular")?;
        for i in 0..self.grid.len() {
            let det = self.m[i].as_ref().map(|m| m.determinant()).unwrap_or_else(T::nan);
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt17(self.grid[i]),
                fmt17(self.g[i]),
                fmt17(det),
                fmt17(self.residual[i]),
                u8::from(self.is_singular[i])
            )?;
        }
        Ok(())
    }
}

/// Computes `g_W` along a Lagrange path.
#[allow(clippy::needless_range_loop)]
pub fn volume_profile<T: Real>(path: &JacobiTensorPath<T>, w_basis: &DMatrix<T>) -> Result<VolumeProfile<T>> {
    let n = path.dimension();
    let p = w_basis.ncols();
    if w_basis.nrows() != n || p == 0 || p > n {
        return Err(Error::Precondition(format!("W basis must be {n} x p with 1 <= p <= {n}")));
    }
    let gram = w_basis.transpose() * w_basis;
    if max_abs(&(gram - DMatrix::identity(p, p))) > T::c(1e-10) {
        return Err(Error::Precondition("W basis is not orthonormal".into()));
    }
    let singular = find_singular_points(path, T::c(KERNEL_TOL))?;
    let len = path.len();
    let inv_pow = -T::one() / T::c(2.0 * p as f64);

    let solve_w = |a: &DMatrix<T>| -> Option<DMatrix<T>> {
        let (sv, _, _) = sorted_svd(a);
        let smin = sv[sv.len() - 1];
        if smin == T::zero() || sv[0] / smin > T::c(CONDITION_CAP) {
            return None;
        }
        a.transpose().lu().solve(w_basis)
    };

    let mut out = VolumeProfile {
        w_basis: w_basis.clone(),
        grid: path.grid().to_vec(),
        m: vec![None; len],
        g: vec![T::zero(); len],
        s1: vec![None; len],
        s2: vec![None; len],
        curvature_sum: vec![T::nan(); len],
        residual: vec![T::nan(); len],
        is_singular: vec![false; len],
        singular_times: singular.iter().map(|s| s.t_star).collect(),
    };
    let mut rhs = vec![T::nan(); len];

    for i in 0..len {
        let t = path.grid()[i];
        let on_singular = singular.iter().find(|s| abs(s.t_star - t) < T::c(1e-9));
        let wt = if on_singular.is_none() { solve_w(path.a(i)) } else { None };
        match wt {
            Some(wt) => {
                let m = wt.transpose() * &wt;
                out.g[i] = m.determinant().powf(inv_pow);
                out.m[i] = Some(m);
                if let Ok(s) = riccati_from(path.a(i), path.ap(i), t) {
                    let q = wt.clone().qr().q();
                    let s1 = q.transpose() * &s * &q;
                    let s2 = (DMatrix::identity(n, n) - &q * q.transpose()) * &s * &q;
                    let rmat = path.field().at(t)?;
                    let curv = (q.transpose() * rmat * &q).trace();
                    let tr = s1.trace();
                    let pp = T::c(p as f64);
                    rhs[i] = tr * tr / pp - (&s1 * &s1).trace() - T::c(3.0) * s2.norm_squared() - curv;
                    out.curvature_sum[i] = curv;
                    out.s1[i] = Some(s1);
                    out.s2[i] = Some(s2);
                }
            }
            None => {
                out.is_singular[i] = true;
                let kernel = match on_singular {
                    Some(rec) => rec.kernel_basis.clone(),
                    None => {
                        let (sv, _, _) = sorted_svd(path.a(i));
                        null_space(path.a(i), sv[0] * T::c(KERNEL_TOL))
                    }
                };
                let overlap = max_abs(&(w_basis.transpose() * kernel));
                if overlap < T::c(ORTHOGONALITY_TOL) {
                    let lim = one_sided_limit(path, t, |a, _| {
                        solve_w(a).map(|wt| {
                            let d = (wt.transpose() * &wt).determinant().powf(inv_pow);
                            DVector::from_element(1, d)
                        })
                    })?;
                    if let Some(l) = lim {
                        out.g[i] = l[0];
                    }
                }
            }
        }
    }
    for i in 0..len {
        if rhs[i].is_finite() && out.g[i] > T::zero() {
            let gpp = local_second_derivative(path, i, |a| {
                solve_w(a).map(|wt| (wt.transpose() * &wt).determinant().powf(inv_pow))
            })?;
            if let Some(gpp) = gpp {
                out.residual[i] = T::c(p as f64) * gpp / out.g[i] - rhs[i];
            }
        }
    }
    Ok(out)
}

/// Largest `|residual|` of the `g_W` equation away from the singular set.
pub fn verify_volume_ode<T: Real>(vp: &VolumeProfile<T>) -> OdeReport<T> {
    let mut max_residual = T::zero();
    let mut checked = 0;
    for i in 0..vp.grid.len() {
        let t = vp.grid[i];
        let dist = vp.singular_times.iter().fold(T::c(f64::INFINITY), |m, &s| m.min(abs(t - s)));
        if vp.residual[i].is_finite() && dist > T::c(RESIDUAL_EXCLUSION) {
            max_residual = max_residual.max(abs(vp.residual[i]));
            checked += 1;
        }
    }
    if checked < 5 {
        max_residual = T::nan();
    }
    OdeReport { max_residual, checked_points: checked }
}

/// Fundamental solutions of `y'' + δ y = 0` at offset `τ`: `(c, s)` with
/// `c(0) = 1, c'(0) = 0`, `s(0) = 0, s'(0) = 1`.
pub fn comparison_pair<T: Real>(delta: T, tau: T) -> (T, T) {
    if delta > T::zero() {
        let w = delta.sqrt();
        ((w * tau).cos(), (w * tau).sin() / w)
    } else if delta < T::zero() {
        let w = (-delta).sqrt();
        ((w * tau).cosh(), (w * tau).sinh() / w)
    } else {
        (T::one(), tau)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SturmReport<T> {
    pub holds: bool,
    /// Largest `g − f_δ` over the checked range.
    pub max_excess: T,
    /// Last parameter checked (first zero of `g` or the interval end).
    pub checked_until: T,
}

/// Sturm comparison `g_v ≤ f_δ` on `[t0, t1]` up to the first zero of `g_v`,
/// where `f_δ'' + δ f_δ = 0` matches `g_v` to first order at the regular
/// point `t0`.
pub fn sturm_upper_bound<T: Real>(
    profile: &ConcavityProfile<T>,
    path: &JacobiTensorPath<T>,
    delta: T,
    t0: T,
    t1: T,
) -> Result<SturmReport<T>> {
    let r_tol = T::c(1e-6);
    for i in 0..profile.len() {
        let t = profile.grid[i];
        if t >= t0 && t <= t1 && profile.r[i].is_finite() && profile.r[i] < delta - r_tol {
            return Err(Error::Precondition(format!("r = {} < delta = {} at t = {}", profile.r[i], delta, t)));
        }
    }
    let (a, _) = path.state_at(t0)?;
    let zv = inverse_adjoint_apply(&a, &profile.v).ok_or(Error::SingularPoint { t: t0.f64() })?;
    let g0 = profile.v.norm_squared() / zv.norm();
    let g0p = g_derivative(path, &profile.v, t0)?;
    // first zero: a singular point whose kernel meets v, or a vanishing sample
    let first_zero = profile
        .singular_points
        .iter()
        .filter(|s| s.t_star > t0 && s.kernel_overlap(&profile.v) >= T::c(ORTHOGONALITY_TOL))
        .fold(t1, |m, s| m.min(s.t_star));
    let mut max_excess = T::c(f64::NEG_INFINITY);
    let mut checked_until = t0;
    for i in 0..profile.len() {
        let t = profile.grid[i];
        if t < t0 || t > first_zero {
            continue;
        }
        let (c, s) = comparison_pair(delta, t - t0);
        let fd = g0 * c + g0p * s;
        max_excess = max_excess.max(profile.g[i] - fd);
        checked_until = t;
        if profile.g[i] <= T::zero() {
            break;
        }
    }
    Ok(SturmReport { holds: max_excess <= T::c(1e-10), max_excess, checked_until })
}

/// Uniform grid on `[lo, hi]` with spacing at most `h`, hitting both ends.
pub fn uniform_grid<T: Real>(lo: T, hi: T, h: T) -> Result<Vec<T>> {
    if !(lo < hi) || !(h > T::zero()) {
        return Err(Error::Precondition("grid needs lo < hi and h > 0".into()));
    }
    let count = ((hi - lo) / h - T::c(1e-9)).ceil().to_usize().unwrap_or(1).max(1);
    let dt = (hi - lo) / T::from_usize(count).unwrap();
    Ok((0..=count)
        .map(|k| if k == count { hi } else { lo + dt * T::from_usize(k).unwrap() })
        .collect())
}

/// Profile of `g_v` for a family spanned by fields with Gram matrix `N(t)`,
/// normalized at the regular point `t0` (`A_{t0} = Id`) and `v = Σ a_i K_i(t0)`.
///
/// With `J(t)` the frame matrix of the fields, `A_t = J(t) J(t0)⁻¹` and
/// `A_t^{-*} v = J(t)^{-T} N(t0) a`, hence `f_v = aᵀ N(t0) N(t)⁻¹ N(t0) a`
/// and `‖v‖² = aᵀ N(t0) a`.
pub fn gram_g_profile<T: Real, G>(gram: G, a: &DVector<T>, t0: T, grid: &[T]) -> Result<ConcavityProfile<T>>
where
    G: Fn(T) -> Result<DMatrix<T>>,
{
    let n0 = gram(t0)?;
    let n = n0.nrows();
    if a.len() != n {
        return Err(Error::Precondition(format!("coefficient vector must have dimension {n}")));
    }
    if a.norm() == T::zero() {
        return Err(Error::Precondition("coefficient vector must be non-zero".into()));
    }
    let spd = |m: &DMatrix<T>| -> Result<(Vec<T>, DMatrix<T>)> {
        if max_abs(&(m - m.transpose())) > T::c(1e-10) * max_abs(m).max(T::one()) {
            return Err(Error::Data("Gram matrix is not symmetric".into()));
        }
        let eig = m.clone().symmetric_eigen();
        let vals: Vec<T> = eig.eigenvalues.iter().copied().collect();
        let lmax = vals.iter().fold(T::zero(), |x, &y| x.max(abs(y)));
        if vals.iter().any(|&l| l < -T::c(1e-9) * lmax.max(T::one())) {
            return Err(Error::Data("Gram matrix is not positive semidefinite".into()));
        }
        Ok((vals, eig.eigenvectors))
    };
    let (vals0, _) = spd(&n0)?;
    let lmax0 = vals0.iter().fold(T::zero(), |x, &y| x.max(y));
    let lmin0 = vals0.iter().fold(T::c(f64::INFINITY), |x, &y| x.min(y));
    if !(lmin0 > lmax0 * T::c(1.0 / CONDITION_CAP)) {
        return Err(Error::Precondition(format!("base point {} is singular for the family", t0)));
    }
    let b = &n0 * a;
    let v2 = a.dot(&b);
    let len = grid.len();
    let step = if len > 1 { grid[1] - grid[0] } else { T::c(1e-3) };

    let f_regular = |m: &DMatrix<T>| -> Option<T> {
        let chol = m.clone().cholesky()?;
        let x = chol.solve(&b);
        let fz = b.dot(&x);
        (fz > T::zero()).then_some(fz)
    };

    let mut out = ConcavityProfile {
        v: b.clone(),
        grid: grid.to_vec(),
        g: vec![T::zero(); len],
        f: vec![T::c(f64::INFINITY); len],
        z: vec![None; len],
        r: vec![T::nan(); len],
        residual: vec![T::nan(); len],
        is_singular: vec![false; len],
        dist_to_kernel: vec![T::nan(); len],
        singular_times: Vec::new(),
        singular_points: Vec::new(),
    };
    for (i, &t) in grid.iter().enumerate() {
        let m = gram(t)?;
        let (vals, vecs) = spd(&m)?;
        let lmax = vals.iter().fold(T::zero(), |x, &y| x.max(y));
        let lmin = vals.iter().fold(T::c(f64::INFINITY), |x, &y| x.min(y));
        if lmin > lmax * T::c(1.0 / CONDITION_CAP) {
            if let Some(fz) = f_regular(&m) {
                out.f[i] = fz;
                out.g[i] = v2 / fz.sqrt();
                continue;
            }
        }
        out.is_singular[i] = true;
        out.singular_times.push(t);
        let kernel_threshold = lmax * T::c(KERNEL_TOL);
        let overlap = (0..vals.len())
            .filter(|&j| vals[j] < kernel_threshold)
            .map(|j| abs(vecs.column(j).dot(&b)) / b.norm())
            .fold(T::zero(), |x, y| x.max(y));
        out.dist_to_kernel[i] = overlap;
        if overlap < T::c(ORTHOGONALITY_TOL) {
            let side = if i + 3 < len || i < 3 { T::one() } else { -T::one() };
            let mut gs = Vec::with_capacity(3);
            for k in 1..=3 {
                let mk = gram(t + side * step * T::c(k as f64))?;
                if let Some(fz) = f_regular(&mk) {
                    gs.push(v2 / fz.sqrt());
                }
            }
            if gs.len() == 3 {
                out.g[i] = extrapolate3(gs[0], gs[1], gs[2]);
                out.f[i] = (v2 / out.g[i]).powi(2);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jacobi::{integrate_jacobi, normalize_at_base};
    use crate::models::ModelGeometry;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn exact_path(m: &ModelGeometry<f64>, t0: f64, a0: &DMatrix<f64>, a0p: &DMatrix<f64>, lo: f64, hi: f64) -> JacobiTensorPath<f64> {
        let (a, ap) = m.exact_jacobi(t0, a0, a0p, lo).unwrap();
        integrate_jacobi(&m.field().unwrap(), lo, &a, &ap, (lo, hi), 1e-3).unwrap()
    }

    fn sphere_path(n: usize, lo: f64, hi: f64) -> JacobiTensorPath<f64> {
        let m = ModelGeometry::constant_curvature(1.0, n).unwrap();
        exact_path(&m, 0.0, &DMatrix::zeros(n, n), &DMatrix::identity(n, n), lo, hi)
    }

    fn hopf_normalized(lo: f64, hi: f64, t0: f64) -> JacobiTensorPath<f64> {
        let m = ModelGeometry::s3_hopf();
        let (tb, a0, a0p) = m.family_data().unwrap();
        let p = exact_path(&m, tb, &a0, &a0p, lo, hi);
        normalize_at_base(&p, t0).unwrap().0
    }

    fn hopf_v() -> DVector<f64> {
        DVector::from_vec(vec![FRAC_PI_4.cos(), FRAC_PI_4.sin()])
    }

    #[test]
    fn sphere_profile_is_sine() {
        let p = sphere_path(3, 0.0, PI);
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let prof = g_profile(&p, &v).unwrap();
        for i in 0..prof.len() {
            assert!((prof.g[i] - prof.grid[i].sin()).abs() < 1e-9, "t = {}", prof.grid[i]);
        }
        assert_eq!(prof.g[0], 0.0);
        assert_eq!(*prof.g.last().unwrap(), 0.0);
        assert!(prof.is_singular[0] && *prof.is_singular.last().unwrap());
        assert!(verify_g_ode(&prof).max_residual < 1e-5);
        let i = prof.nearest_index(1.0);
        assert!((prof.r[i] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn flat_profile_is_constant() {
        let m = ModelGeometry::constant_curvature(0.0, 2).unwrap();
        let p = exact_path(&m, 0.0, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2), -1.0, 1.0);
        let v = DVector::from_vec(vec![0.6, -0.8]);
        let prof = g_profile(&p, &v).unwrap();
        assert!(prof.g.iter().all(|g| (g - 1.0).abs() < 1e-12));
        assert!(prof.r.iter().all(|r| r.abs() < 1e-12));
        assert!(prof.singular_times.is_empty());
    }

    #[test]
    fn hyperbolic_profile_is_convex() {
        let m = ModelGeometry::constant_curvature(-1.0, 2).unwrap();
        let p = exact_path(&m, 0.0, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2), -1.0, 1.0);
        let prof = g_profile(&p, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        for i in 0..prof.len() {
            assert!((prof.g[i] - prof.grid[i].cosh()).abs() < 1e-9);
            assert!((prof.r[i] + 1.0).abs() < 1e-9);
        }
        for i in 1..prof.len() - 1 {
            assert!(prof.second_difference(i).unwrap() > 0.0);
        }
    }

    #[test]
    fn hopf_profile_is_abs_sin_2t() {
        let p = hopf_normalized(0.1, 3.0, FRAC_PI_4);
        let prof = g_profile(&p, &hopf_v()).unwrap();
        for i in 0..prof.len() {
            let t = prof.grid[i];
            assert!((prof.g[i] - (2.0 * t).sin().abs()).abs() < 1e-7, "t = {t}: {}", prof.g[i]);
        }
        assert!((r_coefficient(&p, &hopf_v(), FRAC_PI_4).unwrap() - 4.0).abs() < 1e-8);
        let rep = verify_g_ode(&prof);
        assert!(rep.max_residual < 1e-5, "{rep:?}");
        assert!(rep.checked_points > 100);
        assert!(prof.singular_times.iter().any(|s| (s - FRAC_PI_2).abs() < 1e-6));
        assert!(check_lower_bound(&prof, &p).pass);
    }

    #[test]
    fn gram_route_matches_closed_form() {
        let m = ModelGeometry::<f64>::s3_hopf();
        let grid = uniform_grid(0.0, PI, 1e-3).unwrap();
        let mut grid = grid;
        grid.push(FRAC_PI_2);
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let prof = gram_g_profile(|t| m.gram_at(t), &DVector::from_vec(vec![1.0, 0.0]), FRAC_PI_4, &grid).unwrap();
        for i in 0..prof.len() {
            let t = prof.grid[i];
            assert!((prof.g[i] - (2.0 * t).sin().abs()).abs() < 1e-9, "t = {t}");
        }
        let i = prof.nearest_index(FRAC_PI_2);
        assert!(prof.is_singular[i] && prof.g[i] == 0.0);
        assert!(prof.is_singular[0] && prof.g[0] == 0.0);
    }

    #[test]
    fn gram_route_rejects_singular_base() {
        let m = ModelGeometry::<f64>::s3_hopf();
        let grid = uniform_grid(0.0, 1.0, 1e-2).unwrap();
        let err = gram_g_profile(|t| m.gram_at(t), &DVector::from_vec(vec![1.0, 0.0]), 0.0, &grid);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn gram_smooth_extension_through_singular_point() {
        // N(t) = diag(1, sin²t): the field e1 never meets the kernel
        let m = ModelGeometry::<f64>::s1_x_s2();
        let grid = uniform_grid(0.5, 4.0, 1e-3).unwrap();
        let mut grid = grid;
        grid.push(PI);
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let prof = gram_g_profile(|t| m.gram_at(t), &DVector::from_vec(vec![1.0, 0.0]), 1.0, &grid).unwrap();
        let i = prof.nearest_index(PI);
        assert!(prof.is_singular[i]);
        assert!((prof.g[i] - 1.0).abs() < 1e-9);
        assert!(prof.dist_to_kernel[i] < 1e-12);
    }

    #[test]
    fn inverse_adjoint_equation_holds() {
        let tol = 1e-4;
        let sphere = sphere_path(2, 0.0, PI);
        assert!(verify_inverse_adjoint_ode(&sphere, 2e-4).unwrap().max_residual < tol);
        let hopf = hopf_normalized(0.1, 3.0, FRAC_PI_4);
        let rep = verify_inverse_adjoint_ode(&hopf, 2e-4).unwrap();
        assert!(rep.max_residual < tol, "{rep:?}");
        let m = ModelGeometry::diagonal_profile(vec![1.0, 0.25, 0.0]).unwrap();
        let b = DMatrix::from_row_slice(3, 3, &[0.2, 0.1, 0.0, 0.1, -0.3, 0.4, 0.0, 0.4, 0.1]);
        let diag = exact_path(&m, 0.0, &DMatrix::identity(3, 3), &b, -2.0, 2.0);
        assert!(verify_inverse_adjoint_ode(&diag, 2e-4).unwrap().max_residual < tol);
    }

    #[test]
    fn boundary_identities_at_regular_points() {
        let m = ModelGeometry::constant_curvature(0.0, 3).unwrap();
        let b = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, 0.0, 0.2, -0.4, 0.3, 0.0, 0.3, 0.1]);
        let p = integrate_jacobi(&m.field().unwrap(), 0.0, &DMatrix::identity(3, 3), &b, (-1.0, 1.0), 1e-3).unwrap();
        let v = DVector::from_vec(vec![1.0, 2.0, -2.0]) / 3.0;
        let rep = boundary_derivative_check(&p, &v, 1e-4).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.correction > 0.1);
        assert!(rep.g_second <= rep.norm_second);

        let s = sphere_path(3, 0.0, PI);
        let (ns, _) = normalize_at_base(&s, 1.0).unwrap();
        let rep = boundary_derivative_check(&ns, &DVector::from_vec(vec![0.0, 1.0, 0.0]), 1e-4).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn boundary_identities_at_singular_base() {
        let m = ModelGeometry::s3_hopf();
        let (tb, a0, a0p) = m.family_data().unwrap();
        let p = exact_path(&m, tb, &a0, &a0p, 2.5, 3.5);
        let (np, dec) = normalize_at_base(&p, PI).unwrap();
        assert_eq!(dec.v1_basis.ncols(), 1);
        let v = dec.v1_basis.column(0).into_owned();
        let rep = boundary_derivative_check(&np, &v, 1e-4).unwrap();
        assert!(rep.pass, "{rep:?}");
        let w = dec.v2_basis.column(0).into_owned();
        assert!(matches!(boundary_derivative_check(&np, &w, 1e-4), Err(Error::Precondition(_))));
    }

    #[test]
    fn volume_full_space_is_det_root() {
        let p = sphere_path(3, 0.0, PI);
        let vp = volume_profile(&p, &DMatrix::identity(3, 3)).unwrap();
        for i in 0..vp.grid.len() {
            let expect = p.det(i).abs().powf(1.0 / 3.0);
            assert!((vp.g[i] - expect).abs() < 1e-9);
        }
        assert!(verify_volume_ode(&vp).max_residual < 1e-5);
    }

    #[test]
    fn volume_diag_profile_is_root_cosine() {
        let m = ModelGeometry::diagonal_profile(vec![1.0, 0.0]).unwrap();
        let p = exact_path(&m, 0.0, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2), 0.0, PI);
        let vp = volume_profile(&p, &DMatrix::identity(2, 2)).unwrap();
        for i in 0..vp.grid.len() {
            // cos(π/2) rounds to 6e-17 in floating point
            let expect = if (vp.grid[i] - FRAC_PI_2).abs() < 1e-12 { 0.0 } else { vp.grid[i].cos().abs().sqrt() };
            assert!((vp.g[i] - expect).abs() < 1e-10, "t = {}", vp.grid[i]);
        }
        let rep = verify_volume_ode(&vp);
        assert!(rep.max_residual < 1e-5, "{rep:?}");
    }

    #[test]
    fn volume_line_matches_g_profile() {
        let p = hopf_normalized(0.1, 3.0, FRAC_PI_4);
        let v = hopf_v();
        let w = DMatrix::from_column_slice(2, 1, v.as_slice());
        let vp = volume_profile(&p, &w).unwrap();
        let prof = g_profile(&p, &v).unwrap();
        for i in 0..vp.grid.len() {
            assert!((vp.g[i] - prof.g[i]).abs() < 1e-9);
        }
        assert!(verify_volume_ode(&vp).max_residual < 1e-5);
        let full = volume_profile(&p, &DMatrix::identity(2, 2)).unwrap();
        let rep = verify_volume_ode(&full);
        assert!(rep.max_residual < 1e-5, "{rep:?}");
    }

    #[test]
    fn volume_rejects_non_orthonormal_basis() {
        let p = sphere_path(2, 0.0, 1.0);
        let w = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert!(matches!(volume_profile(&p, &w), Err(Error::Precondition(_))));
    }

    #[test]
    fn sturm_comparison() {
        let p = hopf_normalized(0.1, 3.0, FRAC_PI_4);
        let prof = g_profile(&p, &hopf_v()).unwrap();
        let rep = sturm_upper_bound(&prof, &p, 1.0, FRAC_PI_4, 3.0).unwrap();
        assert!(rep.holds, "{rep:?}");
        assert!((rep.checked_until - FRAC_PI_2).abs() < 2e-3);
        let tight = sturm_upper_bound(&prof, &p, 4.0, FRAC_PI_4, 3.0).unwrap();
        assert!(tight.holds && tight.max_excess.abs() < 1e-7);
        assert!(matches!(sturm_upper_bound(&prof, &p, 5.0, FRAC_PI_4, 3.0), Err(Error::Precondition(_))));

        let s = sphere_path(2, 0.0, PI);
        let sp = g_profile(&s, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let i = sp.nearest_index(1.0);
        assert!(sturm_upper_bound(&sp, &s, 1.0, sp.grid[i], PI).unwrap().holds);
    }

    #[test]
    fn adjugate_limit_agrees_with_extrapolation() {
        let p = hopf_normalized(0.1, 3.0, FRAC_PI_4);
        let rec = find_singular_points(&p, KERNEL_TOL)
            .unwrap()
            .into_iter()
            .find(|s| (s.t_star - FRAC_PI_2).abs() < 1e-6)
            .unwrap();
        assert_eq!(rec.kernel_dim, 1);
        let k = rec.kernel_basis.column(0);
        let v = DVector::from_vec(vec![-k[1], k[0]]);
        let direct = adjugate_limit(&p, &rec, &v).unwrap();
        let extrapolated = one_sided_limit(&p, rec.t_star, |a, _| inverse_adjoint_apply(a, &v)).unwrap().unwrap();
        assert!((&direct - &extrapolated).amax() < 1e-5, "{direct} vs {extrapolated}");
        let k0 = k.into_owned();
        assert!(adjugate_limit(&p, &rec, &k0).is_err());
    }

    #[test]
    fn cofactor_matches_inverse() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let cof = cofactor_matrix(&a);
        let expect = a.clone().try_inverse().unwrap().transpose() * a.determinant();
        assert!((cof - expect).amax() < 1e-12);
    }

    #[test]
    fn profile_csv_header() {
        let p = sphere_path(1, 0.0, 1.0);
        let prof = g_profile(&p, &DVector::from_vec(vec![1.0])).unwrap();
        let mut buf = Vec::new();
        prof.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,g,f,r,residual,is_singular,dist_to_kernel");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 7);
        assert_eq!(first[2], "inf");
        assert_eq!(first[5], "1");
    }

    #[test]
    fn zero_vector_rejected() {
        let p = sphere_path(2, 0.0, 1.0);
        assert!(g_profile(&p, &DVector::zeros(2)).is_err());
        assert!(g_profile(&p, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn single_precision_profile() {
        let m = ModelGeometry::<f32>::constant_curvature(1.0, 2).unwrap();
        let (a, ap) = m.exact_jacobi(0.0, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2), 0.0).unwrap();
        let p = integrate_jacobi(&m.field().unwrap(), 0.0f32, &a, &ap, (0.0, 1.0), 1e-2).unwrap();
        let prof = g_profile(&p, &DVector::from_vec(vec![1.0f32, 0.0])).unwrap();
        assert!((prof.g.last().unwrap() - 1.0f32.cos()).abs() < 1e-4);
    }

    fn diag_path() -> JacobiTensorPath<f64> {
        let m = ModelGeometry::diagonal_profile(vec![1.0, 0.3, 0.0]).unwrap();
        exact_path(&m, 0.0, &DMatrix::identity(3, 3), &DMatrix::zeros(3, 3), 0.0, 2.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn g_is_homogeneous(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64, lambda in 0.1..10.0f64) {
            let v = DVector::from_vec(vec![x, y, z]);
            prop_assume!(v.norm() > 0.1);
            let p = diag_path();
            let g1 = g_profile(&p, &v).unwrap();
            let g2 = g_profile(&p, &(&v * lambda)).unwrap();
            for i in (0..g1.len()).step_by(50) {
                prop_assert!((g2.g[i] - lambda * g1.g[i]).abs() < 1e-9 * lambda.max(1.0));
            }
        }

        #[test]
        fn g_is_concave_under_nonnegative_curvature(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64) {
            let v = DVector::from_vec(vec![x, y, z]);
            prop_assume!(v.norm() > 0.1);
            let p = diag_path();
            let prof = g_profile(&p, &v).unwrap();
            for i in 1..prof.len() - 1 {
                if prof.g[i] > 0.0 && prof.distance_to_singular(prof.grid[i]) > RESIDUAL_EXCLUSION {
                    prop_assert!(prof.second_difference(i).unwrap() <= 1e-8);
                    prop_assert!(prof.r[i] >= -1e-12);
                }
            }
            prop_assert!(check_lower_bound(&prof, &p).pass);
        }

        #[test]
        fn extension_iff_orthogonal_to_kernel(x in -1.0..1.0f64, y in -1.0..1.0f64, e in prop::sample::select(vec![0.0, 1e-3, 0.5])) {
            // A_t = diag(cos t, 1) vanishes along e1 at t = π/2
            let m = ModelGeometry::diagonal_profile(vec![1.0, 0.0]).unwrap();
            let p = exact_path(&m, 0.0, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2), 0.0, PI);
            let mut v = DVector::from_vec(vec![e, y + x]);
            prop_assume!(v.norm() > 0.1);
            v /= v.norm();
            let prof = g_profile(&p, &v).unwrap();
            let i = prof.nearest_index(FRAC_PI_2);
            if (prof.grid[i] - FRAC_PI_2).abs() < 1e-9 {
                prop_assert!(prof.is_singular[i]);
                if e == 0.0 {
                    prop_assert!((prof.g[i] - 1.0).abs() < 1e-8);
                } else {
                    prop_assert_eq!(prof.g[i], 0.0);
                }
            }
        }
    }
}
