//! Detectors for parallel Jacobi fields and the orthogonal splitting into
//! vanishing and parallel directions.
//!
//! A family of Jacobi fields is given by a Lagrange path: the field with
//! coefficient vector `y` is `Y(t) = A_t y`, and since the frame is parallel
//! its covariant derivative is `A'_t y`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::concavity::{g_derivative, g_profile, ORTHOGONALITY_TOL};
use crate::error::{Error, Result};
use crate::jacobi::{
    find_singular_points, fmt17, is_lagrange, normalize_at_base, riccati_from, JacobiTensorPath, KERNEL_TOL,
};
use crate::scalar::{abs, complement, max_abs, range_space, Real};

/// Tolerance on `‖X‖'` at the endpoints and on `g_v'`.
pub const ENDPOINT_TOL: f64 = 1e-6;
/// Threshold on the derivative of a field for it to count as parallel.
pub const PARALLEL_TOL: f64 = 1e-6;
/// Tolerance on inner products in conditions (b) to (d).
pub const INNER_PRODUCT_TOL: f64 = 1e-8;
/// Self-adjointness tolerance required of a family.
pub const LAGRANGE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Condition {
    A,
    B,
    /// Condition (b) with the roles of the endpoints exchanged.
    BReverse,
    C,
    D,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::A => "a",
            Condition::B => "b",
            Condition::BReverse => "b_reverse",
            Condition::C => "c",
            Condition::D => "d",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Holds,
    Fails,
    NotApplicable,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Holds => "holds",
            Status::Fails => "fails",
            Status::NotApplicable => "not_applicable",
        })
    }
}

/// A field `Y = A y` violating (or, for certificates, witnessing) a condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness<T: Real> {
    pub t: Option<T>,
    pub y: DVector<T>,
    pub value: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionResult<T: Real> {
    pub status: Status,
    /// Measured quantities as `name=value` pairs.
    pub values: Vec<(String, T)>,
    pub witness: Option<Witness<T>>,
}

impl<T: Real> ConditionResult<T> {
    fn new(status: Status) -> Self {
        Self { status, values: Vec::new(), witness: None }
    }

    fn with(mut self, name: &str, value: T) -> Self {
        self.values.push((name.to_string(), value));
        self
    }

    fn witness(mut self, w: Option<Witness<T>>) -> Self {
        self.witness = w;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Conclusion {
    ParallelOnInterval,
    NotParallelCertified,
    Inconclusive,
}

impl fmt::Display for Conclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Conclusion::ParallelOnInterval => "parallel_on_interval",
            Conclusion::NotParallelCertified => "not_parallel_certified",
            Conclusion::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RigidityReport<T: Real> {
    pub conditions: BTreeMap<Condition, ConditionResult<T>>,
    pub conclusion: Conclusion,
    pub parallel_defect: T,
    /// Vanishing field certifying non-parallelism.
    pub certificate: Option<Witness<T>>,
}

impl<T: Real> RigidityReport<T> {
    pub fn status(&self, c: Condition) -> Option<Status> {
        self.conditions.get(&c).map(|r| r.status)
    }

    fn forward_conditions_hold(&self) -> bool {
        [Condition::A, Condition::B, Condition::C, Condition::D]
            .iter()
            .all(|c| matches!(self.status(*c), Some(Status::Holds) | Some(Status::NotApplicable) | None))
    }

    /// Line-oriented text: one line per condition, then the defect and the
    /// `CONCLUSION: <tag>` line.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (c, r) in &self.conditions {
            write!(out, "{}: {}", c.label(), r.status)?;
            for (name, v) in &r.values {
                write!(out, " {}={}", name, fmt17(*v))?;
            }
            if let Some(w) = &r.witness {
                write_witness(&mut out, w)?;
            }
            writeln!(out)?;
        }
        writeln!(out, "parallel_defect: {}", fmt17(self.parallel_defect))?;
        if let Some(w) = &self.certificate {
            write!(out, "certificate:")?;
            write_witness(&mut out, w)?;
            writeln!(out)?;
        }
        writeln!(out, "CONCLUSION: {}", self.conclusion)
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("report is UTF-8")
    }
}

fn write_witness<T: Real, W: Write>(out: &mut W, w: &Witness<T>) -> io::Result<()> {
    if let Some(t) = w.t {
        write!(out, " t*={}", fmt17(t))?;
    }
    let ys: Vec<String> = w.y.iter().map(|x| fmt17(*x)).collect();
    write!(out, " y=[{}] value={}", ys.join(";"), fmt17(w.value))
}

fn check_interval<T: Real>(path: &JacobiTensorPath<T>, t0: T, t1: T) -> Result<()> {
    let (lo, hi) = path.range();
    if !(t0 < t1) || t0 < lo || t1 > hi {
        return Err(Error::Domain { t: if t0 < lo { t0.f64() } else { t1.f64() }, lo: lo.f64(), hi: hi.f64() });
    }
    Ok(())
}

/// Decides whether the virtual Jacobi field `Z_t = A_t^{-*} v` is parallel on
/// `[t0, t1]` from the vanishing of `g_v'` at both ends and the smoothness of
/// `g_v` across interior singular points. Non-negative curvature is assumed.
pub fn detect_parallel<T: Real>(
    path: &JacobiTensorPath<T>,
    v: &DVector<T>,
    t0: T,
    t1: T,
    tol: T,
) -> Result<RigidityReport<T>> {
    check_interval(path, t0, t1)?;
    let profile = g_profile(path, v)?;
    let h = path.step();
    let endpoint_derivative = |t: T, side: T| -> Result<T> {
        match g_derivative(path, v, t) {
            Ok(d) => Ok(d),
            Err(Error::SingularPoint { .. }) => {
                // one-sided difference of the extended profile
                let i = profile.nearest_index(t);
                let j = if side > T::zero() { i + 1 } else { i.saturating_sub(1) };
                let k = if side > T::zero() { i + 2 } else { i.saturating_sub(2) };
                if k >= profile.len() || i < 2 && side < T::zero() {
                    return Ok(T::nan());
                }
                let (g0, g1, g2) = (profile.g[i], profile.g[j], profile.g[k]);
                Ok((-T::c(3.0) * g0 + T::c(4.0) * g1 - g2) / (T::c(2.0) * h) * side)
            }
            Err(e) => Err(e),
        }
    };
    let d0 = endpoint_derivative(t0, T::one())?;
    let d1 = endpoint_derivative(t1, -T::one())?;
    let a_ok = abs(d0) < T::c(ENDPOINT_TOL) && abs(d1) < T::c(ENDPOINT_TOL);
    let cond_a = ConditionResult::new(if a_ok { Status::Holds } else { Status::Fails })
        .with("g'(t0)", d0)
        .with("g'(t1)", d1);

    let mut worst: Option<(T, T, DVector<T>)> = None;
    for s in &profile.singular_points {
        if s.t_star < t0 - T::c(1e-9) || s.t_star > t1 + T::c(1e-9) {
            continue;
        }
        let ov = s.kernel_overlap(v);
        if worst.as_ref().is_none_or(|w| ov > w.1) {
            let k = &s.kernel_basis;
            let proj = k * (k.transpose() * v);
            worst = Some((s.t_star, ov, proj));
        }
    }
    let cond_b = match &worst {
        Some((t, ov, y)) if *ov >= T::c(ORTHOGONALITY_TOL) => ConditionResult::new(Status::Fails)
            .witness(Some(Witness { t: Some(*t), y: y.clone(), value: *ov })),
        Some((_, ov, _)) => ConditionResult::new(Status::Holds).with("max_kernel_overlap", *ov),
        None => ConditionResult::new(Status::Holds).with("max_kernel_overlap", T::zero()),
    };

    let mut defect = T::zero();
    for i in 0..profile.len() {
        let t = profile.grid[i];
        if t < t0 || t > t1 || profile.is_singular[i] {
            continue;
        }
        if let (Some(zv), Ok(s)) = (&profile.z[i], riccati_from(path.a(i), path.ap(i), t)) {
            defect = defect.max((s * zv).norm());
        }
    }
    let mut conditions = BTreeMap::new();
    conditions.insert(Condition::A, cond_a);
    conditions.insert(Condition::B, cond_b);
    let mut report = RigidityReport {
        conditions,
        conclusion: Conclusion::Inconclusive,
        parallel_defect: defect,
        certificate: None,
    };
    if report.forward_conditions_hold() && defect < tol {
        report.conclusion = Conclusion::ParallelOnInterval;
    }
    Ok(report)
}

/// Condition (b) oriented from `t_from` (where orthogonality is assumed) to
/// `t_to` (where it is tested), over the coefficient hyperplane orthogonal to
/// `A_{t_from}ᵀ A_{t_from} x`.
fn hyperplane_condition<T: Real>(
    a_from: &DMatrix<T>,
    a_to: &DMatrix<T>,
    x: &DVector<T>,
) -> ConditionResult<T> {
    let n = x.len();
    let u = a_from.transpose() * (a_from * x);
    if u.norm() == T::zero() {
        return ConditionResult::new(Status::NotApplicable);
    }
    let un = DMatrix::from_column_slice(n, 1, (&u / u.norm()).as_slice());
    let basis = complement(&un, n);
    let x_to = a_to * x;
    let mut best: Option<Witness<T>> = None;
    for j in 0..basis.ncols() {
        let y = basis.column(j).into_owned();
        let value = x_to.dot(&(a_to * &y));
        if best.as_ref().is_none_or(|w| abs(value) > abs(w.value)) {
            best = Some(Witness { t: None, y, value });
        }
    }
    match best {
        Some(w) if abs(w.value) > T::c(INNER_PRODUCT_TOL) => ConditionResult::new(Status::Fails).witness(Some(w)),
        Some(w) => ConditionResult::new(Status::Holds).with("max_inner_product", abs(w.value)),
        None => ConditionResult::new(Status::Holds).with("max_inner_product", T::zero()),
    }
}

/// Evaluates the four conditions under which a field `X = A x` of a
/// self-adjoint family with non-negative curvature is parallel on `[t0, t1]`.
///
/// Condition (b) is reported in both orientations; the conclusion uses the
/// forward one, as do (c) and (d).
pub fn check_conditions_abcd<T: Real>(
    path: &JacobiTensorPath<T>,
    x: &DVector<T>,
    t0: T,
    t1: T,
) -> Result<RigidityReport<T>> {
    check_interval(path, t0, t1)?;
    let n = path.dimension();
    if x.len() != n {
        return Err(Error::Precondition(format!("coefficient vector must have dimension {n}")));
    }
    let lag = is_lagrange(path, T::c(LAGRANGE_TOL));
    if !lag.pass {
        return Err(Error::Precondition(format!(
            "family is not self-adjoint (asymmetry {})",
            lag.max_asymmetry
        )));
    }
    let (a0, a0p) = path.state_at(t0)?;
    let (a1, a1p) = path.state_at(t1)?;

    // (a)
    let norm_and_derivative = |a: &DMatrix<T>, ap: &DMatrix<T>| -> (T, T) {
        let xv = a * x;
        let norm = xv.norm();
        let d = if norm > T::zero() { (ap * x).dot(&xv) / norm } else { T::nan() };
        (norm, d)
    };
    let (n0, d0) = norm_and_derivative(&a0, &a0p);
    let (n1, d1) = norm_and_derivative(&a1, &a1p);
    let scale = stacked_norm(&a0, &a0p);
    let nonzero = n0 > scale * T::c(KERNEL_TOL) && n1 > scale * T::c(KERNEL_TOL);
    let a_ok = nonzero && abs(d0) < T::c(ENDPOINT_TOL) && abs(d1) < T::c(ENDPOINT_TOL);
    let cond_a = ConditionResult::new(if a_ok { Status::Holds } else { Status::Fails })
        .with("|X|(t0)", n0)
        .with("|X|'(t0)", d0)
        .with("|X|(t1)", n1)
        .with("|X|'(t1)", d1);

    // (b), both orientations
    let cond_b = hyperplane_condition(&a1, &a0, x);
    let cond_b_rev = hyperplane_condition(&a0, &a1, x);

    // (c)
    let singular = find_singular_points(path, T::c(KERNEL_TOL))?;
    let x0 = &a0 * x;
    let mut worst_c: Option<Witness<T>> = None;
    let margin = T::c(1e-9);
    for s in singular.iter().filter(|s| s.t_star > t0 + margin && s.t_star < t1 - margin) {
        if let Some(w) = kernel_witness(&a0, &x0, s.t_star, &s.kernel_basis) {
            if worst_c.as_ref().is_none_or(|b| abs(w.value) > abs(b.value)) {
                worst_c = Some(w);
            }
        }
    }
    let cond_c = match worst_c {
        Some(w) if abs(w.value) > T::c(INNER_PRODUCT_TOL) => ConditionResult::new(Status::Fails).witness(Some(w)),
        Some(w) => ConditionResult::new(Status::Holds).with("max_inner_product", abs(w.value)),
        None => ConditionResult::new(Status::Holds).with("max_inner_product", T::zero()),
    };

    // (d)
    let kernel0 = crate::scalar::null_space(&a0, scale * T::c(KERNEL_TOL));
    let xp0 = &a0p * x;
    let mut worst_d: Option<Witness<T>> = None;
    for j in 0..kernel0.ncols() {
        let y = kernel0.column(j).into_owned();
        let value = xp0.dot(&(&a0p * &y));
        if worst_d.as_ref().is_none_or(|b| abs(value) > abs(b.value)) {
            worst_d = Some(Witness { t: Some(t0), y, value });
        }
    }
    let cond_d = match worst_d {
        Some(w) if abs(w.value) > T::c(INNER_PRODUCT_TOL) => ConditionResult::new(Status::Fails).witness(Some(w)),
        Some(w) => ConditionResult::new(Status::Holds).with("max_inner_product", abs(w.value)),
        None => ConditionResult::new(Status::Holds).with("max_inner_product", T::zero()),
    };

    let mut defect = T::zero();
    for i in 0..path.len() {
        let t = path.grid()[i];
        if t >= t0 && t <= t1 {
            defect = defect.max((path.ap(i) * x).norm());
        }
    }

    let mut conditions = BTreeMap::new();
    conditions.insert(Condition::A, cond_a);
    conditions.insert(Condition::B, cond_b);
    conditions.insert(Condition::BReverse, cond_b_rev);
    conditions.insert(Condition::C, cond_c);
    conditions.insert(Condition::D, cond_d);
    let mut report = RigidityReport {
        conditions,
        conclusion: Conclusion::Inconclusive,
        parallel_defect: defect,
        certificate: None,
    };
    let all_hold = [Condition::A, Condition::B, Condition::C, Condition::D]
        .iter()
        .all(|c| report.status(*c) == Some(Status::Holds));
    if all_hold && defect < T::c(PARALLEL_TOL) {
        report.conclusion = Conclusion::ParallelOnInterval;
    }
    Ok(report)
}

fn stacked_norm<T: Real>(a: &DMatrix<T>, ap: &DMatrix<T>) -> T {
    let (m, n) = (a.nrows(), a.ncols());
    let mut stacked = DMatrix::zeros(2 * m, n);
    stacked.rows_mut(0, m).copy_from(a);
    stacked.rows_mut(m, m).copy_from(ap);
    crate::scalar::sorted_svd(&stacked).0[0]
}

/// The element `y` of the kernel at `t*` maximizing `|⟨X(t0), Y(t0)⟩|`.
fn kernel_witness<T: Real>(a0: &DMatrix<T>, x0: &DVector<T>, t_star: T, kernel: &DMatrix<T>) -> Option<Witness<T>> {
    if kernel.ncols() == 0 {
        return None;
    }
    // ⟨X(t0), A_{t0} K c⟩ = cᵀ (Kᵀ A_{t0}ᵀ X(t0)); maximized along that vector
    let coeffs = kernel.transpose() * (a0.transpose() * x0);
    let y = if coeffs.norm() > T::zero() { kernel * (&coeffs / coeffs.norm()) } else { kernel.column(0).into_owned() };
    let value = x0.dot(&(a0 * &y));
    Some(Witness { t: Some(t_star), y, value })
}

/// Certifies that `X = A x` is not parallel on `[t0, t2]` from a field `Y` of
/// the family vanishing at some `t* ∈ (t1, t2]` with `⟨X(t0), Y(t0)⟩ ≠ 0`:
/// a parallel `X` would keep `⟨X, Y⟩` constant, and it vanishes at `t*`.
///
/// The conditions on `[t0, t1]` are evaluated and reported alongside.
pub fn certify_nonparallel<T: Real>(
    path: &JacobiTensorPath<T>,
    x: &DVector<T>,
    t0: T,
    t1: T,
    t2: T,
    tol: T,
) -> Result<RigidityReport<T>> {
    check_interval(path, t0, t2)?;
    if !(t1 > t0 && t1 <= t2) {
        return Err(Error::Precondition("need t0 < t1 <= t2".into()));
    }
    let mut report = check_conditions_abcd(path, x, t0, t1)?;
    report.conclusion = Conclusion::Inconclusive;
    let (a0, _) = path.state_at(t0)?;
    let x0 = &a0 * x;
    let singular = find_singular_points(path, T::c(KERNEL_TOL))?;
    let mut best: Option<Witness<T>> = None;
    for s in singular.iter().filter(|s| s.t_star > t1 && s.t_star <= t2 + T::c(1e-9)) {
        if let Some(w) = kernel_witness(&a0, &x0, s.t_star, &s.kernel_basis) {
            if best.as_ref().is_none_or(|b| abs(w.value) > abs(b.value)) {
                best = Some(w);
            }
        }
    }
    if let Some(w) = best {
        if abs(w.value) > tol {
            report.conclusion = Conclusion::NotParallelCertified;
            report.certificate = Some(w);
        }
    }
    Ok(report)
}

/// Splitting of `E_{t0}` into directions whose fields vanish somewhere and
/// directions whose fields are parallel.
#[derive(Clone, Debug)]
pub struct WilkingSplitting<T: Real> {
    /// Orthonormal basis (columns) of the span of all kernels.
    pub vanishing_span: DMatrix<T>,
    /// Orthonormal basis (columns) of `{v : A'_t v = 0 for all t}`.
    pub parallel_span: DMatrix<T>,
    /// `max |⟨e, f⟩|` over the two bases.
    pub orthogonality_defect: T,
    /// Largest distance of a coordinate vector from the sum of both spans.
    pub completeness_defect: T,
}

impl<T: Real> WilkingSplitting<T> {
    pub fn dimensions(&self) -> (usize, usize) {
        (self.vanishing_span.ncols(), self.parallel_span.ncols())
    }
}

/// Computes the vanishing/parallel splitting of a path, normalizing it at
/// its base point first.
pub fn wilking_splitting<T: Real>(path: &JacobiTensorPath<T>, tol: T) -> Result<WilkingSplitting<T>> {
    let n = path.dimension();
    let t0 = path.base_point();
    let (a0, a0p) = path.state_at(t0)?;
    if path.relative_smin(&a0, &a0p) < T::c(KERNEL_TOL) {
        return Err(Error::Precondition(format!("base point {} is singular", t0)));
    }
    let normalized = if max_abs(&(&a0 - DMatrix::identity(n, n))) > T::c(1e-12) {
        normalize_at_base(path, t0)?.0
    } else {
        path.clone()
    };

    let singular = find_singular_points(&normalized, T::c(KERNEL_TOL))?;
    let total: usize = singular.iter().map(|s| s.kernel_dim).sum();
    let mut stacked = DMatrix::zeros(n, total.max(1));
    let mut col = 0;
    for s in &singular {
        stacked.columns_mut(col, s.kernel_dim).copy_from(&s.kernel_basis);
        col += s.kernel_dim;
    }
    let vanishing = if total == 0 { DMatrix::zeros(n, 0) } else { range_space(&stacked, T::c(1e-8)) };

    let mut gram = DMatrix::zeros(n, n);
    for i in 0..normalized.len() {
        let ap = normalized.ap(i);
        gram += ap.transpose() * ap;
    }
    gram /= T::from_usize(normalized.len()).unwrap();
    let eig = gram.symmetric_eigen();
    let cols: Vec<DVector<T>> = (0..n)
        .filter(|&j| eig.eigenvalues[j] < tol * tol)
        .map(|j| eig.eigenvectors.column(j).into_owned())
        .filter(|v| (0..normalized.len()).all(|i| (normalized.ap(i) * v).norm() < tol))
        .collect();
    let parallel = if cols.is_empty() { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&cols) };

    let orthogonality_defect = if vanishing.ncols() > 0 && parallel.ncols() > 0 {
        max_abs(&(vanishing.transpose() * &parallel))
    } else {
        T::zero()
    };
    let k = vanishing.ncols() + parallel.ncols();
    let completeness_defect = if k == 0 {
        T::one()
    } else {
        let mut both = DMatrix::zeros(n, k);
        both.columns_mut(0, vanishing.ncols()).copy_from(&vanishing);
        both.columns_mut(vanishing.ncols(), parallel.ncols()).copy_from(&parallel);
        let q = range_space(&both, T::c(1e-8));
        let residual = DMatrix::identity(n, n) - &q * q.transpose();
        (0..n).map(|i| residual.column(i).norm()).fold(T::zero(), |m, x| m.max(x))
    };
    Ok(WilkingSplitting { vanishing_span: vanishing, parallel_span: parallel, orthogonality_defect, completeness_defect })
}
