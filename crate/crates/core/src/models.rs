//! Built-in geometries along a fixed unit-speed geodesic.
//!
//! Every model supplies its curvature endomorphism `R(t)` already written in
//! a parallel orthonormal frame of the normal bundle, so covariant and
//! coordinate derivatives agree. Models with closed-form Jacobi tensors or
//! Killing-field Gram matrices double as oracles for the numerical modules.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

type MatrixFn<T> = Arc<dyn Fn(T) -> DMatrix<T> + Send + Sync>;

/// Symmetric curvature endomorphism `R(t) = R(·, ċ)ċ` on the normal space.
#[derive(Clone)]
pub struct CurvatureField<T: Real> {
    dimension: usize,
    evaluator: MatrixFn<T>,
    interval: (T, T),
}

impl<T: Real> CurvatureField<T> {
    pub fn new(
        dimension: usize,
        interval: (T, T),
        evaluator: impl Fn(T) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Precondition("curvature field dimension must be >= 1".into()));
        }
        if !(interval.0 < interval.1) {
            return Err(Error::Precondition("empty smoothness interval".into()));
        }
        Ok(Self { dimension, evaluator: Arc::new(evaluator), interval })
    }

    /// `R ≡ κ·Id` on the whole line.
    pub fn constant(dimension: usize, kappa: T) -> Result<Self> {
        Self::new(dimension, whole_line(), move |_| DMatrix::identity(dimension, dimension) * kappa)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn interval(&self) -> (T, T) {
        self.interval
    }

    pub fn at(&self, t: T) -> Result<DMatrix<T>> {
        let (lo, hi) = self.interval;
        if t < lo || t > hi {
            return Err(Error::Domain { t: t.f64(), lo: lo.f64(), hi: hi.f64() });
        }
        let r = (self.evaluator)(t);
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite curvature at t = {}", t)));
        }
        Ok(r)
    }
}

impl<T: Real> fmt::Debug for CurvatureField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CurvatureField")
            .field("dimension", &self.dimension)
            .field("interval", &self.interval)
            .finish()
    }
}

fn whole_line<T: Real>() -> (T, T) {
    (T::c(f64::NEG_INFINITY), T::c(f64::INFINITY))
}

/// Which geometry a [`ModelGeometry`] describes.
#[derive(Clone)]
pub enum ModelKind<T: Real> {
    /// Space form: `R = κ·Id` on an `n`-dimensional normal space.
    ConstantCurvature { kappa: T, n: usize },
    /// Product-like model with constant diagonal curvature `diag(κ_1, …, κ_n)`.
    DiagonalProfile { kappas: Vec<T> },
    /// Round `S³ ⊂ ℂ²` along `c(t) = (cos t, sin t)` with the Hopf family
    /// `J₁ = i·c(t)`, `J₂ = (0, i sin t)`.
    S3Hopf,
    /// `S¹ × S²` along `(1, γ(t))`, `γ` a great circle through the poles, with
    /// the family `Z₁ = (1, 0)`, `Z₂ = (0, sin t)`.
    S1xS2,
    /// Gram matrix of a family of Killing fields, supplied as a function.
    KillingGram {
        n: usize,
        gram: MatrixFn<T>,
        singular_params: Vec<T>,
        label: String,
    },
}

/// A geometry along a fixed geodesic: curvature data plus optional oracles.
#[derive(Clone)]
pub struct ModelGeometry<T: Real> {
    kind: ModelKind<T>,
}

impl<T: Real> fmt::Debug for ModelGeometry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModelGeometry({})", self.name())
    }
}

impl<T: Real> ModelGeometry<T> {
    pub fn constant_curvature(kappa: T, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Precondition("dimension must be >= 1".into()));
        }
        Ok(Self { kind: ModelKind::ConstantCurvature { kappa, n } })
    }

    pub fn diagonal_profile(kappas: Vec<T>) -> Result<Self> {
        if kappas.is_empty() {
            return Err(Error::Precondition("diagonal profile needs at least one entry".into()));
        }
        Ok(Self { kind: ModelKind::DiagonalProfile { kappas } })
    }

    pub fn s3_hopf() -> Self {
        Self { kind: ModelKind::S3Hopf }
    }

    pub fn s1_x_s2() -> Self {
        Self { kind: ModelKind::S1xS2 }
    }

    pub fn killing_gram(
        n: usize,
        label: impl Into<String>,
        singular_params: Vec<T>,
        gram: impl Fn(T) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            kind: ModelKind::KillingGram {
                n,
                gram: Arc::new(gram),
                singular_params,
                label: label.into(),
            },
        }
    }

    pub fn kind(&self) -> &ModelKind<T> {
        &self.kind
    }

    pub fn name(&self) -> String {
        match &self.kind {
            ModelKind::ConstantCurvature { kappa, n } => format!("constant_curvature(kappa={kappa}, n={n})"),
            ModelKind::DiagonalProfile { kappas } => {
                let ks: Vec<String> = kappas.iter().map(|k| k.to_string()).collect();
                format!("diagonal_profile({})", ks.join(","))
            }
            ModelKind::S3Hopf => "s3_hopf".into(),
            ModelKind::S1xS2 => "s1_x_s2".into(),
            ModelKind::KillingGram { label, .. } => format!("killing_gram({label})"),
        }
    }

    pub fn dimension(&self) -> usize {
        match &self.kind {
            ModelKind::ConstantCurvature { n, .. } => *n,
            ModelKind::DiagonalProfile { kappas } => kappas.len(),
            ModelKind::S3Hopf | ModelKind::S1xS2 => 2,
            ModelKind::KillingGram { n, .. } => *n,
        }
    }

    /// Constant diagonal of `R` for the models that have one.
    fn diagonal(&self) -> Option<Vec<T>> {
        match &self.kind {
            ModelKind::ConstantCurvature { kappa, n } => Some(vec![*kappa; *n]),
            ModelKind::DiagonalProfile { kappas } => Some(kappas.clone()),
            ModelKind::S3Hopf => Some(vec![T::one(), T::one()]),
            ModelKind::S1xS2 => Some(vec![T::zero(), T::one()]),
            ModelKind::KillingGram { .. } => None,
        }
    }

    /// Whether `R(t)` is positive semidefinite for all `t`.
    pub fn is_nonnegatively_curved(&self) -> bool {
        self.diagonal().is_some_and(|d| d.iter().all(|&k| k >= T::zero()))
    }

    /// The curvature field of the model (unavailable for pure Gram models).
    pub fn field(&self) -> Result<CurvatureField<T>> {
        let diag = self
            .diagonal()
            .ok_or_else(|| Error::UnsupportedModel(format!("{} carries no curvature field", self.name())))?;
        let n = diag.len();
        CurvatureField::new(n, whole_line(), move |_| DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag.clone())))
    }

    pub fn curvature_at(&self, t: T) -> Result<DMatrix<T>> {
        self.field()?.at(t)
    }

    /// Closed-form solution of `A'' + R A = 0` with data `(A0, A0p)` at `t0`.
    pub fn exact_jacobi(
        &self,
        t0: T,
        a0: &DMatrix<T>,
        a0p: &DMatrix<T>,
        t: T,
    ) -> Result<(DMatrix<T>, DMatrix<T>)> {
        let diag = self
            .diagonal()
            .ok_or_else(|| Error::UnsupportedModel(format!("{} has no exact Jacobi solution", self.name())))?;
        let n = diag.len();
        if a0.shape() != (n, n) || a0p.shape() != (n, n) {
            return Err(Error::Precondition(format!("initial data must be {n}x{n}")));
        }
        let tau = t - t0;
        let mut a = DMatrix::zeros(n, n);
        let mut ap = DMatrix::zeros(n, n);
        for (i, &kappa) in diag.iter().enumerate() {
            let (c, s, cp, sp) = trig_pair(kappa, tau);
            for j in 0..n {
                a[(i, j)] = c * a0[(i, j)] + s * a0p[(i, j)];
                ap[(i, j)] = cp * a0[(i, j)] + sp * a0p[(i, j)];
            }
        }
        Ok((a, ap))
    }

    /// Gram matrix `G_ij = ⟨K_i(t), K_j(t)⟩` of the model's distinguished fields.
    pub fn gram_at(&self, t: T) -> Result<DMatrix<T>> {
        match &self.kind {
            ModelKind::S3Hopf => {
                let s2 = t.sin() * t.sin();
                Ok(DMatrix::from_row_slice(2, 2, &[T::one(), s2, s2, s2]))
            }
            ModelKind::S1xS2 => {
                let s2 = t.sin() * t.sin();
                Ok(DMatrix::from_row_slice(2, 2, &[T::one(), T::zero(), T::zero(), s2]))
            }
            ModelKind::KillingGram { gram, .. } => Ok(gram(t)),
            _ => Err(Error::UnsupportedModel(format!("{} has no Gram oracle", self.name()))),
        }
    }

    /// Parameters in `[lo, hi]` where the model's Gram matrix degenerates.
    pub fn singular_params(&self, lo: T, hi: T) -> Vec<T> {
        let multiples_of = |period: T| {
            let start = (lo / period).ceil();
            let mut out = Vec::new();
            let mut k = start;
            while k * period <= hi {
                out.push(k * period);
                k += T::one();
            }
            out
        };
        match &self.kind {
            ModelKind::S3Hopf => multiples_of(T::frac_pi_2()),
            ModelKind::S1xS2 => multiples_of(T::pi()),
            ModelKind::KillingGram { singular_params, .. } => {
                singular_params.iter().copied().filter(|&t| t >= lo && t <= hi).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Initial data `(t0, A, A')` whose columns are the model's distinguished
    /// fields, for the models that define such a family.
    pub fn family_data(&self) -> Option<(T, DMatrix<T>, DMatrix<T>)> {
        let (o, z) = (T::one(), T::zero());
        match &self.kind {
            // J₁(0) = e₁, J₁'(0) = e₂, J₂(0) = 0, J₂'(0) = e₂
            ModelKind::S3Hopf => Some((
                z,
                DMatrix::from_row_slice(2, 2, &[o, z, z, z]),
                DMatrix::from_row_slice(2, 2, &[z, z, o, o]),
            )),
            // Z₁ constant e₁, Z₂ = sin t·e₂
            ModelKind::S1xS2 => Some((
                z,
                DMatrix::from_row_slice(2, 2, &[o, z, z, z]),
                DMatrix::from_row_slice(2, 2, &[z, z, z, o]),
            )),
            _ => None,
        }
    }
}

/// Fundamental solutions of `y'' + κ y = 0`: `(c, s, c', s')` at `τ` with
/// `c(0) = 1, c'(0) = 0, s(0) = 0, s'(0) = 1`.
fn trig_pair<T: Real>(kappa: T, tau: T) -> (T, T, T, T) {
    if kappa > T::zero() {
        let w = kappa.sqrt();
        let (sn, cs) = (w * tau).sin_cos();
        (cs, sn / w, -w * sn, cs)
    } else if kappa < T::zero() {
        let w = (-kappa).sqrt();
        let (sh, ch) = ((w * tau).sinh(), (w * tau).cosh());
        (ch, sh / w, w * sh, ch)
    } else {
        (T::one(), tau, T::zero(), T::one())
    }
}
