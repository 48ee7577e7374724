//! Group diagrams of cohomogeneity one actions of `S³ × S³` with finite
//! principal isotropy, and the obstructions to invariant analytic metrics of
//! non-negative curvature.
//!
//! Three families are handled:
//! - `P`: `H = ΔQ` (the diagonal quaternion group), circles `(e^{ip₋t}, e^{iq₋t})`
//!   and `(e^{jp₊t}, e^{jq₊t})`, all four slopes `≡ 1 mod 4`.
//! - `Q`: `H = {(±1, ±1), (±i, ±i)}`, same circles, `p₋, q₋, p₊ ≡ 1 mod 4`, `q₊` even.
//! - `N`: `H = {e}`, `K₋ = ΔS³`, `K₊ = (e^{ipt}, e^{iqt})`.
//!
//! Killing fields are written in the basis `(X₁, X₂, X₃, Y₁, Y₂, Y₃)`, where
//! `X_a` and `Y_a` are the quaternion units `i, j, k` in the first and second
//! factor. All slope arithmetic is exact.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::concavity::{gram_g_profile, ConcavityProfile};
use crate::error::{Error, Result};

pub type Slope = (i64, i64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    P,
    Q,
    N,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::P => "P",
            Family::Q => "Q",
            Family::N => "N",
        })
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "P" | "p" => Ok(Family::P),
            "Q" | "q" => Ok(Family::Q),
            "N" | "n" => Ok(Family::N),
            other => Err(Error::InvalidDiagram(format!("unknown family {other:?}"))),
        }
    }
}

/// Slopes of the two singular isotropy circles, `(p₋, q₋, p₊, q₊)`.
pub type SlopeTuple = [i64; 4];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidityFlags {
    pub gcd_ok: bool,
    /// Some equivalent representative satisfies the congruence and parity rules.
    pub congruence_ok: bool,
}

/// A group diagram as entered and, when valid, its canonical representative.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupDiagram {
    pub family: Family,
    /// `[p₋, q₋, p₊, q₊]` for `P`, `Q`; `[p, q]` for `N`.
    pub raw: Vec<i64>,
    /// Lexicographically least valid representative under the family's moves.
    pub canonical: Option<SlopeTuple>,
    pub flags: ValidityFlags,
}

impl GroupDiagram {
    pub fn is_valid(&self) -> bool {
        self.flags.gcd_ok && self.flags.congruence_ok
    }

    /// Slopes used by the case analysis: the input when it already satisfies
    /// the congruence rules, the canonical form otherwise. `N` repeats `(p, q)`.
    pub fn slopes(&self) -> Option<SlopeTuple> {
        if !self.is_valid() {
            return None;
        }
        match self.family {
            Family::N => Some([self.raw[0], self.raw[1], self.raw[0], self.raw[1]]),
            family => {
                let raw = [self.raw[0], self.raw[1], self.raw[2], self.raw[3]];
                if satisfies_rules(family, &raw) {
                    Some(raw)
                } else {
                    self.canonical
                }
            }
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    a.gcd(&b)
}

fn is_one_mod4(x: i64) -> bool {
    x.rem_euclid(4) == 1
}

fn satisfies_rules(family: Family, s: &SlopeTuple) -> bool {
    let [a, b, c, d] = *s;
    match family {
        Family::P => [a, b, c, d].iter().all(|&x| is_one_mod4(x)),
        Family::Q => is_one_mod4(a) && is_one_mod4(b) && is_one_mod4(c) && d % 2 == 0,
        Family::N => true,
    }
}

/// Moves generating diagram equivalence: factor swap and circle orientation
/// for both families; interchange of the singular points for `P`; sign
/// changes of `q₋` and `q₊` (conjugation by `(1, j)` and `(1, i)`) for `Q`.
fn moves(family: Family, s: &SlopeTuple) -> Vec<SlopeTuple> {
    let [a, b, c, d] = *s;
    let mut out = vec![[b, a, d, c], [-a, -b, c, d], [a, b, -c, -d]];
    match family {
        Family::P => out.push([c, d, a, b]),
        Family::Q => {
            out.push([a, -b, c, d]);
            out.push([a, b, c, -d]);
        }
        Family::N => {}
    }
    out
}

/// All diagrams reachable from `s` by the family's moves.
pub fn equivalence_class(family: Family, s: SlopeTuple) -> BTreeSet<SlopeTuple> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([s]);
    seen.insert(s);
    while let Some(cur) = queue.pop_front() {
        for m in moves(family, &cur) {
            if seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    seen
}

/// Least valid representative in the equivalence class, if any.
pub fn canonical_form(family: Family, s: SlopeTuple) -> Option<SlopeTuple> {
    equivalence_class(family, s).into_iter().find(|r| satisfies_rules(family, r))
}

/// Checks the gcd and congruence rules, accepting any input equivalent to a
/// diagram in normal form.
pub fn validate_diagram(family: Family, slopes: &[i64]) -> GroupDiagram {
    let raw = slopes.to_vec();
    match family {
        Family::N => {
            let gcd_ok = raw.len() == 2 && gcd(raw[0], raw[1]) == 1;
            GroupDiagram { family, raw, canonical: None, flags: ValidityFlags { gcd_ok, congruence_ok: gcd_ok } }
        }
        _ => {
            if raw.len() != 4 {
                return GroupDiagram {
                    family,
                    raw,
                    canonical: None,
                    flags: ValidityFlags { gcd_ok: false, congruence_ok: false },
                };
            }
            let s = [raw[0], raw[1], raw[2], raw[3]];
            let gcd_ok = gcd(s[0], s[1]) == 1 && gcd(s[2], s[3]) == 1;
            let canonical = if gcd_ok { canonical_form(family, s) } else { None };
            GroupDiagram { family, raw, canonical, flags: ValidityFlags { gcd_ok, congruence_ok: canonical.is_some() } }
        }
    }
}

/// A quaternion axis with sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SignedAxis {
    pub sign: i8,
    /// 1, 2, 3 for `i`, `j`, `k`.
    pub axis: u8,
}

impl fmt::Display for SignedAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = ["i", "j", "k"][(self.axis - 1) as usize];
        if self.sign < 0 {
            write!(f, "-{name}")
        } else {
            f.write_str(name)
        }
    }
}

const fn ax(sign: i8, axis: u8) -> SignedAxis {
    SignedAxis { sign, axis }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SingularPoint {
    Minus,
    Plus,
}

/// Identity component of the isotropy group at `c(rL)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IsotropyCircle {
    /// `(e^{u p t}, e^{v q t})` for signed axes `u`, `v` and slope `(p, q)`.
    Circle { axes: (SignedAxis, SignedAxis), slope: Slope, point: SingularPoint },
    /// The diagonal `ΔS³`.
    Diagonal,
}

impl IsotropyCircle {
    /// The Killing field vanishing at this point (only for circles).
    pub fn vanishing_field(&self) -> Option<[i64; 6]> {
        match *self {
            IsotropyCircle::Circle { axes: (u, v), slope: (p, q), .. } => {
                let mut z = [0; 6];
                z[(u.axis - 1) as usize] = u.sign as i64 * p;
                z[(v.axis + 2) as usize] = v.sign as i64 * q;
                Some(z)
            }
            IsotropyCircle::Diagonal => None,
        }
    }
}

impl fmt::Display for IsotropyCircle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IsotropyCircle::Circle { axes: (u, v), slope: (p, q), .. } => write!(f, "({u},{v}) slope ({p},{q})"),
            IsotropyCircle::Diagonal => f.write_str("diagonal"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeylData {
    pub weyl_order: u32,
    /// The closed normal geodesic has length `geodesic_length_multiple · L`.
    pub geodesic_length_multiple: u32,
    /// Isotropy at `c(rL)` for `r = 0 .. multiple − 1`.
    pub isotropy_chain: Vec<IsotropyCircle>,
}

impl WeylData {
    pub fn at(&self, r: i64) -> &IsotropyCircle {
        let n = self.isotropy_chain.len() as i64;
        &self.isotropy_chain[r.rem_euclid(n) as usize]
    }
}

/// Weyl group order and the isotropy groups along the normal geodesic.
pub fn weyl_data(diagram: &GroupDiagram) -> Result<WeylData> {
    let s = diagram
        .slopes()
        .ok_or_else(|| Error::InvalidDiagram(format!("{} diagram {:?} is invalid", diagram.family, diagram.raw)))?;
    let minus = (s[0], s[1]);
    let plus = (s[2], s[3]);
    let circle = |u: SignedAxis, v: SignedAxis, point: SingularPoint| IsotropyCircle::Circle {
        axes: (u, v),
        slope: if point == SingularPoint::Minus { minus } else { plus },
        point,
    };
    use SingularPoint::{Minus as M, Plus as Pl};
    Ok(match diagram.family {
        Family::P => {
            let six = [
                circle(ax(1, 1), ax(1, 1), M),
                circle(ax(1, 2), ax(1, 2), Pl),
                circle(ax(1, 3), ax(1, 3), M),
                circle(ax(1, 1), ax(1, 1), Pl),
                circle(ax(1, 2), ax(1, 2), M),
                circle(ax(1, 3), ax(1, 3), Pl),
            ];
            let chain = six.iter().chain(six.iter()).copied().collect();
            WeylData { weyl_order: 12, geodesic_length_multiple: 12, isotropy_chain: chain }
        }
        Family::Q => WeylData {
            weyl_order: 8,
            geodesic_length_multiple: 8,
            isotropy_chain: vec![
                circle(ax(1, 1), ax(1, 1), M),
                circle(ax(1, 2), ax(1, 2), Pl),
                circle(ax(-1, 1), ax(1, 1), M),
                circle(ax(-1, 3), ax(1, 3), Pl),
                circle(ax(1, 1), ax(1, 1), M),
                circle(ax(-1, 2), ax(1, 2), Pl),
                circle(ax(-1, 1), ax(1, 1), M),
                circle(ax(1, 3), ax(1, 3), Pl),
            ],
        },
        Family::N => {
            let c = circle(ax(1, 1), ax(1, 1), Pl);
            WeylData {
                weyl_order: 4,
                geodesic_length_multiple: 4,
                isotropy_chain: vec![IsotropyCircle::Diagonal, c, IsotropyCircle::Diagonal, c],
            }
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Block {
    S2W0,
    S2W1,
    S2W2,
    W1W2,
    W0W1,
    W0W2,
}

impl Block {
    pub const ALL: [Block; 6] = [Block::S2W0, Block::S2W1, Block::S2W2, Block::W1W2, Block::W0W1, Block::W0W2];

    pub fn label(self) -> &'static str {
        match self {
            Block::S2W0 => "S2W0",
            Block::S2W1 => "S2W1",
            Block::S2W2 => "S2W2",
            Block::W1W2 => "W1xW2",
            Block::W0W1 => "W0xW1",
            Block::W0W2 => "W0xW2",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockWeight {
    pub block: Block,
    /// One weight, or two (`2p ± 2q`) for `W₁ ⊗ W₂`.
    pub weights: Vec<i64>,
    /// The second fundamental form is forced to vanish on this block.
    pub vanishes: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightTable {
    pub r: i64,
    pub slope: Slope,
    /// Weight of the slice representation, `|H ∩ K°|`.
    pub slice_weight: i64,
    /// Weights on `W₀`, `W₁`, `W₂`.
    pub module_weights: [i64; 3],
    pub blocks: Vec<BlockWeight>,
}

impl WeightTable {
    pub fn block(&self, b: Block) -> &BlockWeight {
        self.blocks.iter().find(|x| x.block == b).expect("all blocks present")
    }

    /// `‖X‖' = 0` at this point for `X` in `W₁` (resp. `W₂`) when `S²W₁`
    /// (resp. `S²W₂`) carries no second fundamental form.
    pub fn totally_geodesic(&self) -> bool {
        self.blocks.iter().all(|b| b.vanishes)
    }
}

/// Isotropy weights at the singular point `c(rL)`.
pub fn weight_table(diagram: &GroupDiagram, r: i64) -> Result<WeightTable> {
    let wd = weyl_data(diagram)?;
    let entry = *wd.at(r);
    let IsotropyCircle::Circle { slope: (p, q), .. } = entry else {
        return Err(Error::Precondition(format!("c({r}L) has isotropy ΔS³, not a circle")));
    };
    let k = match diagram.family {
        Family::P => 4,
        Family::Q => {
            if r.rem_euclid(2) == 0 {
                4
            } else {
                2
            }
        }
        Family::N => 1,
    };
    let weights = |b: Block| -> Vec<i64> {
        match b {
            Block::S2W0 => vec![0],
            Block::S2W1 => vec![4 * p],
            Block::S2W2 => vec![4 * q],
            Block::W1W2 => vec![2 * p + 2 * q, 2 * p - 2 * q],
            Block::W0W1 => vec![2 * p],
            Block::W0W2 => vec![2 * q],
        }
    };
    let blocks = Block::ALL
        .iter()
        .map(|&b| {
            let w = weights(b);
            let vanishes = w.iter().all(|x| x.abs() != k);
            BlockWeight { block: b, weights: w, vanishes }
        })
        .collect();
    Ok(WeightTable { r, slope: (p, q), slice_weight: k, module_weights: [0, 2 * p, 2 * q], blocks })
}

/// A Killing field `Σ xᵢ Xᵢ + yᵢ Yᵢ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldCombination {
    pub label: String,
    /// Coefficients on `(X₁, X₂, X₃, Y₁, Y₂, Y₃)`.
    pub coefficients: [i64; 6],
}

impl FieldCombination {
    fn new(label: impl Into<String>, coefficients: [i64; 6]) -> Self {
        Self { label: label.into(), coefficients }
    }

    fn unit(idx: usize) -> Self {
        let names = ["X1*", "X2*", "X3*", "Y1*", "Y2*", "Y3*"];
        let mut c = [0; 6];
        c[idx] = 1;
        Self::new(names[idx], c)
    }

    pub fn pretty(&self) -> String {
        let names = ["X1", "X2", "X3", "Y1", "Y2", "Y3"];
        let mut parts = Vec::new();
        for (c, n) in self.coefficients.iter().zip(names) {
            match *c {
                0 => {}
                1 => parts.push(n.to_string()),
                -1 => parts.push(format!("-{n}")),
                c => parts.push(format!("{c}{n}")),
            }
        }
        if parts.is_empty() {
            "0".into()
        } else {
            parts.join("+").replace("+-", "-")
        }
    }
}

/// A field parallel on `[r₀L, r₁L]` and, when found, a field of the family
/// vanishing at `r L` with non-zero inner product against it at `r₀L`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessField {
    pub field: FieldCombination,
    pub parallel_on: (i64, i64),
    pub vanishing: Option<(i64, FieldCombination)>,
}

impl WitnessField {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} = {} parallel on [{}L;{}L]",
            self.field.label,
            self.field.pretty(),
            self.parallel_on.0,
            self.parallel_on.1
        );
        if let Some((r, z)) = &self.vanishing {
            s.push_str(&format!(" not parallel on [{}L;{}L] since {} vanishes at {}L", self.parallel_on.0, r, z.pretty(), r));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub step: String,
    pub detail: String,
    pub witness: Option<WitnessField>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Classification {
    CandidatePk(u64),
    CandidateQk(u64),
    ExceptionalR7,
    ExceptionalP1qP1,
    Q0Special,
    ProductP1111,
    ObstructedNoAnalyticNonneg,
    InvalidDiagram,
    /// `N` family: 2-positive curvature is always excluded.
    NFamily { w_dim: usize, three_positive_excluded: bool },
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::CandidatePk(k) => write!(f, "candidate_P_k({k})"),
            Classification::CandidateQk(k) => write!(f, "candidate_Q_k({k})"),
            Classification::ExceptionalR7 => f.write_str("exceptional_R7"),
            Classification::ExceptionalP1qP1 => f.write_str("exceptional_P_1q_p1"),
            Classification::Q0Special => f.write_str("Q0_special"),
            Classification::ProductP1111 => f.write_str("product_P1111"),
            Classification::ObstructedNoAnalyticNonneg => f.write_str("obstructed_no_analytic_nonneg"),
            Classification::InvalidDiagram => f.write_str("invalid_diagram"),
            Classification::NFamily { w_dim, three_positive_excluded } => write!(
                f,
                "n_family(w_dim={w_dim};2-positive=excluded;3-positive={})",
                if *three_positive_excluded { "excluded" } else { "not_decided" }
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub diagram: GroupDiagram,
    pub classification: Classification,
    pub trace: Vec<TraceStep>,
    /// Known identifications and remarks (e.g. `S7`, `berger_space`).
    pub annotations: Vec<String>,
}

impl Verdict {
    /// The first witness field in the trace.
    pub fn witness(&self) -> Option<&WitnessField> {
        self.trace.iter().find_map(|s| s.witness.as_ref())
    }

    /// Verdict line followed by one line per trace step.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {:?}: {}", self.diagram.family, self.diagram.raw, self.classification);
        if let Some(c) = self.diagram.canonical {
            out.push_str(&format!(" canonical=({},{}),({},{})", c[0], c[1], c[2], c[3]));
        }
        if !self.annotations.is_empty() {
            out.push_str(&format!(" [{}]", self.annotations.join("; ")));
        }
        out.push('\n');
        for (i, s) in self.trace.iter().enumerate() {
            out.push_str(&format!("  {}. {}: {}", i + 1, s.step, s.detail));
            if let Some(w) = &s.witness {
                out.push_str(&format!(" | {}", w.summary()));
            }
            out.push('\n');
        }
        out
    }
}

fn dot6(a: &[i64; 6], b: &[i64; 6]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// First `r > r1` (within one period) whose vanishing field pairs non-trivially
/// with `x`, treating `X₁ … Y₃` as orthonormal at the base point.
fn find_certificate(wd: &WeylData, x: &[i64; 6], r1: i64) -> Option<(i64, FieldCombination)> {
    let period = wd.isotropy_chain.len() as i64;
    (r1 + 1..=r1 + period).find_map(|r| {
        let z = wd.at(r).vanishing_field()?;
        (dot6(x, &z) != 0).then(|| (r, FieldCombination::new("Z", z)))
    })
}

fn witness(wd: &WeylData, field: FieldCombination, r0: i64, r1: i64) -> WitnessField {
    let vanishing = find_certificate(wd, &field.coefficients, r1);
    WitnessField { field, parallel_on: (r0, r1), vanishing }
}

fn step(step: &str, detail: impl Into<String>, witness: Option<WitnessField>) -> TraceStep {
    TraceStep { step: step.into(), detail: detail.into(), witness }
}

fn fmt_slopes(s: &SlopeTuple) -> String {
    format!("({},{}),({},{})", s[0], s[1], s[2], s[3])
}

/// Canonical forms of the named diagrams.
fn named(family: Family, s: SlopeTuple) -> SlopeTuple {
    canonical_form(family, s).expect("named diagrams are valid")
}

/// Runs the obstruction case analysis on a diagram.
pub fn classify(diagram: &GroupDiagram) -> Verdict {
    let mut verdict = Verdict {
        diagram: diagram.clone(),
        classification: Classification::InvalidDiagram,
        trace: Vec::new(),
        annotations: Vec::new(),
    };
    if !diagram.is_valid() {
        let why = if !diagram.flags.gcd_ok {
            "slopes are not coprime (or have the wrong arity)"
        } else {
            "no equivalent diagram satisfies the congruence rules"
        };
        verdict.trace.push(step("validation", why, None));
        return verdict;
    }
    match diagram.family {
        Family::P => classify_p(diagram, &mut verdict),
        Family::Q => classify_q(diagram, &mut verdict),
        Family::N => {
            let n = n_family_verdict(diagram.raw[0], diagram.raw[1]).expect("validated");
            verdict.classification = Classification::NFamily {
                w_dim: n.w_dim,
                three_positive_excluded: n.three_positive_excluded,
            };
            verdict.trace = n.trace;
        }
    }
    verdict
}

fn classify_p(diagram: &GroupDiagram, v: &mut Verdict) {
    let s = diagram.slopes().expect("valid");
    let canonical = diagram.canonical.expect("valid");
    let wd = weyl_data(diagram).expect("valid");
    let [a, b, c, d] = s;
    v.trace.push(step(
        "normalization",
        format!("working slopes {}, canonical {}", fmt_slopes(&s), fmt_slopes(&canonical)),
        None,
    ));

    if a != 1 && c != 1 {
        v.classification = Classification::ObstructedNoAnalyticNonneg;
        v.trace.push(step(
            "segment_obstruction",
            format!("p- = {a} and p+ = {c} differ from 1: slice weight 4 at every singular point and S2W1 weights {} and {}", 4 * a, 4 * c),
            Some(witness(&wd, FieldCombination::unit(2), 0, 1)),
        ));
        return;
    }
    if b != 1 && d != 1 {
        v.classification = Classification::ObstructedNoAnalyticNonneg;
        v.trace.push(step(
            "segment_obstruction",
            format!("q- = {b} and q+ = {d} differ from 1: S2W2 weights {} and {}", 4 * b, 4 * d),
            Some(witness(&wd, FieldCombination::unit(5), 0, 1)),
        ));
        return;
    }
    if (a == 1 && d == 1) || (c == 1 && b == 1) {
        if canonical == [1, 1, 1, 1] {
            v.classification = Classification::ProductP1111;
            v.annotations.push("S3xS4 with the product of round metrics".into());
            let probes = (0..3)
                .map(|i| WitnessField { field: FieldCombination::unit(i), parallel_on: (0, 12), vanishing: None })
                .collect::<Vec<_>>();
            v.trace.push(step("recognition", "product diagram; the first-factor fields are probes for flat directions", None));
            for p in probes {
                v.trace.push(step("probe", "parallel for all t under the product metric", Some(p)));
            }
            return;
        }
        v.classification = Classification::ExceptionalP1qP1;
        v.trace.push(step("recognition", "slopes of the form (1,q),(p,1): no obstruction applies", None));
        if canonical == named(Family::P, [1, 1, -3, 1]) {
            v.annotations.push("S7".into());
            v.annotations.push("also P_1".into());
        } else if canonical == named(Family::P, [1, -3, -3, 1]) {
            v.annotations.push("berger_space (positive curvature)".into());
        } else {
            v.annotations.push("unknown".into());
        }
        return;
    }
    // one slope is (1,1); (p,q) is the other with p, q ≠ 1
    let (p, q, r0) = if a == 1 && b == 1 { (c, d, 1) } else { (a, b, 0) };
    if p + q != 2 && p + q != -2 {
        v.classification = Classification::ObstructedNoAnalyticNonneg;
        // X = aX_u + bY_u with ⟨X, pX_u + qY_u⟩ = 0, u the axis at c((r0+2)L)
        let axis = match wd.at(r0 + 2) {
            IsotropyCircle::Circle { axes: (u, _), .. } => u.axis as usize - 1,
            IsotropyCircle::Diagonal => unreachable!("P chains are circles"),
        };
        let mut coeffs = [0; 6];
        coeffs[axis] = q;
        coeffs[axis + 3] = -p;
        let names = ["X1", "X2", "X3"];
        let label = format!("a{}+b{} (a;b)=({q};{})", names[axis], names[axis].replace('X', "Y"), -p);
        v.trace.push(step(
            "slope_sum_obstruction",
            format!("slope ({p},{q}) with p+q = {} ≠ ±2 and the other slope (1,1)", p + q),
            Some(witness(&wd, FieldCombination::new(label, coeffs), r0, r0 + 2)),
        ));
        return;
    }
    let k = if p + q == 2 { (p - 1) / 2 } else { (-p - 1) / 2 };
    v.classification = Classification::CandidatePk(k.unsigned_abs());
    v.trace.push(step("recognition", format!("(1,1),({p},{q}) with p+q = ±2: P_k with k = {}", k.abs()), None));
}

fn classify_q(diagram: &GroupDiagram, v: &mut Verdict) {
    let s = diagram.slopes().expect("valid");
    let canonical = diagram.canonical.expect("valid");
    let wd = weyl_data(diagram).expect("valid");
    let [a, b, c, d] = s;
    v.trace.push(step(
        "normalization",
        format!("working slopes {}, canonical {}", fmt_slopes(&s), fmt_slopes(&canonical)),
        None,
    ));
    let r7 = canonical == named(Family::Q, [-3, 1, 1, 2]);

    if a != 1 || b != 1 {
        v.classification = if r7 { Classification::ExceptionalR7 } else { Classification::ObstructedNoAnalyticNonneg };
        let (field, which) = if a != 1 { (FieldCombination::unit(2), "p-") } else { (FieldCombination::unit(5), "q-") };
        let w = witness(&wd, field, 0, 1);
        let mut detail = format!("{which} = {} ≠ 1; slice weight 2 at c(L) makes the far end totally geodesic for the witness", if a != 1 { a } else { b });
        if w.vanishing.is_none() {
            detail.push_str("; q+ = 0 leaves no vanishing field pairing with the witness, the verdict rests on the general statement");
        }
        v.trace.push(step("minus_slope_obstruction", detail, Some(w)));
        if r7 {
            v.annotations.push("R7: no invariant metric of positive curvature".into());
        }
        return;
    }
    if (c + d).abs() != 1 && (c - d).abs() != 1 {
        v.classification = Classification::ObstructedNoAnalyticNonneg;
        // ⟨aX3 + bY3, −p₊X3 + q₊Y3⟩ = 0 at c(L)
        let label = format!("aX3+bY3 (a;b)=({d};{c})");
        let field = FieldCombination::new(label, [0, 0, d, 0, 0, c]);
        v.trace.push(step(
            "plus_slope_obstruction",
            format!("(p-,q-) = (1,1) and p+ ± q+ = {}, {} avoid ±1", c + d, c - d),
            Some(witness(&wd, field, 1, 3)),
        ));
        return;
    }
    let k = c.abs().min(d.abs()) as u64;
    if k == 0 {
        v.classification = Classification::Q0Special;
        v.trace.push(step(
            "recognition",
            "Q_0: combinations of Y2 and Y3 are orthogonal to all kernels, no field is parallel on a proper interval only",
            None,
        ));
        return;
    }
    v.classification = Classification::CandidateQk(k);
    v.trace.push(step("recognition", format!("(1,1),({c},{d}) with |p+| and |q+| adjacent: Q_k with k = {k}"), None));
    if k == 1 {
        v.annotations.push("Aloff-Wallach space (positive curvature)".into());
    }
}

/// Exact kernels of the Lagrange tensor of the `N` family at the two
/// singular points, in coordinates `(X₁, X₂, X₃, Y₁, Y₂, Y₃)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NFamilyKernels {
    pub ker0: Vec<Vec<BigRational>>,
    pub ker_l: Vec<Vec<BigRational>>,
    /// Dimension of the subspace orthogonal to both kernels.
    pub w_dim: usize,
    pub ker_l_in_ker0: bool,
}

fn rat(x: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

/// Rank of a list of rational vectors by fraction-exact elimination.
pub fn rational_rank(rows: &[Vec<BigRational>]) -> usize {
    let mut m: Vec<Vec<BigRational>> = rows.to_vec();
    let cols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..m.len()).find(|&r| !m[r][col].is_zero()) else { continue };
        m.swap(rank, pivot);
        let pivot_row = m[rank].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != rank && !row[col].is_zero() {
                let factor = &row[col] / &pivot_row[col];
                for (x, y) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= &factor * y;
                }
            }
        }
        rank += 1;
    }
    rank
}

pub fn n_family_kernels(p: i64, q: i64) -> Result<NFamilyKernels> {
    if gcd(p, q) != 1 {
        return Err(Error::Precondition(format!("gcd({p}, {q}) ≠ 1")));
    }
    let unit = |i: usize, j: usize| -> Vec<BigRational> {
        (0..6).map(|c| if c == i || c == j { BigRational::one() } else { BigRational::zero() }).collect()
    };
    let ker0 = vec![unit(0, 3), unit(1, 4), unit(2, 5)];
    let mut kl = vec![BigRational::zero(); 6];
    kl[0] = rat(p);
    kl[3] = rat(q);
    let ker_l = vec![kl];
    let mut all = ker0.clone();
    all.extend(ker_l.iter().cloned());
    let rank = rational_rank(&all);
    let ker_l_in_ker0 = rank == rational_rank(&ker0);
    Ok(NFamilyKernels { ker0, ker_l, w_dim: 6 - rank, ker_l_in_ker0 })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NFamilyVerdict {
    pub p: i64,
    pub q: i64,
    pub w_dim: usize,
    pub two_positive_excluded: bool,
    pub three_positive_excluded: bool,
    pub trace: Vec<TraceStep>,
}

/// Curvature positivity excluded on the `N` family: the subspace `W`
/// orthogonal to both kernels has `g_W` concave on the whole line, hence
/// constant, so `R` vanishes on a `dim W`-dimensional space.
pub fn n_family_verdict(p: i64, q: i64) -> Result<NFamilyVerdict> {
    let k = n_family_kernels(p, q)?;
    let trace = vec![
        step(
            "kernels",
            format!(
                "ker A_0 = span{{X1+Y1, X2+Y2, X3+Y3}}, ker A_L = span{{{}}}{}",
                FieldCombination::new("", [p, 0, 0, q, 0, 0]).pretty(),
                if k.ker_l_in_ker0 { " (contained in ker A_0)" } else { "" }
            ),
            None,
        ),
        step(
            "volume_function",
            format!("W orthogonal to both kernels has dimension {}; g_W is concave for all t and therefore constant", k.w_dim),
            None,
        ),
        step("conclusion", format!("R vanishes on a {}-dimensional subspace", k.w_dim), None),
    ];
    Ok(NFamilyVerdict {
        p,
        q,
        w_dim: k.w_dim,
        two_positive_excluded: k.w_dim >= 2,
        three_positive_excluded: k.w_dim >= 3,
        trace,
    })
}

/// Gram matrices of the six Killing fields sampled along the normal geodesic.
#[derive(Clone, Debug)]
pub struct GramSamples {
    pub t: Vec<f64>,
    pub gram: Vec<DMatrix<f64>>,
}

impl GramSamples {
    pub fn from_fn(t: Vec<f64>, f: impl Fn(f64) -> DMatrix<f64>) -> Self {
        let gram = t.iter().map(|&s| f(s)).collect();
        Self { t, gram }
    }

    /// Checks increasing times, square symmetric positive-semidefinite samples.
    pub fn validate(&self) -> Result<()> {
        if self.t.len() != self.gram.len() || self.t.len() < 4 {
            return Err(Error::Data("need at least four Gram samples with matching times".into()));
        }
        if self.t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("sample times must increase".into()));
        }
        let n = self.gram[0].nrows();
        for (t, g) in self.t.iter().zip(&self.gram) {
            if g.nrows() != n || g.ncols() != n {
                return Err(Error::Data(format!("Gram sample at t = {t} is not {n}x{n}")));
            }
            let scale = g.amax().max(1.0);
            if (g - g.transpose()).amax() > 1e-10 * scale {
                return Err(Error::Data(format!("Gram sample at t = {t} is not symmetric")));
            }
            let min_eig = g.clone().symmetric_eigen().eigenvalues.min();
            if min_eig < -1e-9 * scale {
                return Err(Error::Data(format!("Gram sample at t = {t} is not positive semidefinite")));
            }
        }
        Ok(())
    }

    /// Piecewise-linear interpolation, clamped to the sampled range.
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let n = self.t.len();
        if t <= self.t[0] {
            return self.gram[0].clone();
        }
        if t >= self.t[n - 1] {
            return self.gram[n - 1].clone();
        }
        let i = self.t.partition_point(|&s| s <= t) - 1;
        let w = (t - self.t[i]) / (self.t[i + 1] - self.t[i]);
        &self.gram[i] * (1.0 - w) + &self.gram[i + 1] * w
    }
}

/// Evidence for one field on one interval of the normal geodesic.
#[derive(Clone, Debug)]
pub struct FieldCheck {
    pub label: String,
    pub interval: (f64, f64),
    pub profile: ConcavityProfile<f64>,
    pub g_min: f64,
    pub g_max: f64,
    pub constant: bool,
    pub derivative_start: f64,
    pub derivative_end: f64,
    /// Largest kernel overlap over singular samples in the interval.
    pub max_kernel_distance: f64,
    /// A non-constant `g` where the argument forces a parallel field: such
    /// data cannot come from a metric of non-negative curvature.
    pub contradicts_nonnegative_curvature: bool,
}

#[derive(Clone, Debug)]
pub struct CrossCheckReport {
    pub checks: Vec<FieldCheck>,
}

impl CrossCheckReport {
    pub fn all_constant(&self) -> bool {
        self.checks.iter().all(|c| c.constant)
    }
}

/// Tolerance on `max g − min g` for a profile to count as constant.
pub const CONSTANCY_TOL: f64 = 1e-6;

/// Profiles of `g` for the given fields on their intervals, based at the
/// interval midpoint.
pub fn cross_check_fields(
    samples: &GramSamples,
    fields: &[(String, Vec<f64>, (f64, f64))],
) -> Result<CrossCheckReport> {
    samples.validate()?;
    let n = samples.gram[0].nrows();
    let mut checks = Vec::new();
    for (label, coeffs, (lo, hi)) in fields {
        if coeffs.len() != n {
            return Err(Error::Data(format!("field {label} has {} coefficients for {n} fields", coeffs.len())));
        }
        let grid: Vec<f64> = samples.t.iter().copied().filter(|t| *t >= *lo - 1e-12 && *t <= *hi + 1e-12).collect();
        if grid.len() < 4 {
            return Err(Error::Data(format!("fewer than four samples on [{lo}, {hi}]")));
        }
        let regular = |t: f64| samples.at(t).symmetric_eigen().eigenvalues.min() > 1e-6 * samples.at(t).amax().max(1.0);
        let mid = grid.len() / 2;
        let base = (0..grid.len())
            .flat_map(|o| [mid + o, mid.wrapping_sub(o)])
            .filter(|&i| i < grid.len())
            .map(|i| grid[i])
            .find(|&t| regular(t))
            .ok_or_else(|| Error::Data(format!("no regular sample on [{lo}, {hi}]")))?;
        let a = DVector::from_vec(coeffs.clone());
        let profile = gram_g_profile(|t| Ok(samples.at(t)), &a, base, &grid)?;
        let g_min = profile.g.iter().copied().fold(f64::INFINITY, f64::min);
        let g_max = profile.g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let m = profile.len();
        let d_start = (profile.g[1] - profile.g[0]) / (profile.grid[1] - profile.grid[0]);
        let d_end = (profile.g[m - 1] - profile.g[m - 2]) / (profile.grid[m - 1] - profile.grid[m - 2]);
        let max_kernel_distance = profile
            .dist_to_kernel
            .iter()
            .copied()
            .filter(|x| x.is_finite())
            .fold(0.0, f64::max);
        let constant = g_max - g_min < CONSTANCY_TOL;
        checks.push(FieldCheck {
            label: label.clone(),
            interval: (*lo, *hi),
            profile,
            g_min,
            g_max,
            constant,
            derivative_start: d_start,
            derivative_end: d_end,
            max_kernel_distance,
            contradicts_nonnegative_curvature: !constant,
        });
    }
    Ok(CrossCheckReport { checks })
}

/// Runs [`cross_check_fields`] on the witness fields of a verdict, with
/// singular points `c(rL)` at multiples of `l`.
pub fn hopf_cross_check(verdict: &Verdict, samples: &GramSamples, l: f64) -> Result<CrossCheckReport> {
    let fields: Vec<(String, Vec<f64>, (f64, f64))> = verdict
        .trace
        .iter()
        .filter_map(|s| s.witness.as_ref())
        .map(|w| {
            let coeffs = w.field.coefficients.iter().map(|&c| c as f64).collect();
            let (r0, r1) = w.parallel_on;
            (w.field.label.clone(), coeffs, (r0 as f64 * l, r1 as f64 * l))
        })
        .collect();
    if fields.is_empty() {
        return Err(Error::Precondition("verdict names no witness fields".into()));
    }
    cross_check_fields(samples, &fields)
}

/// Gram matrix of `(X₁, X₂, X₃, Y₁, Y₂, Y₃)` for the product of round metrics
/// on `S³ × S⁴` along a normal geodesic of the `S⁴` factor, where the second
/// factor acts on `S⁴` (unit traceless symmetric 3×3 matrices) by conjugation.
/// Singular points sit at multiples of `π/3`.
pub fn product_s3_s4_gram(t: f64) -> DMatrix<f64> {
    let (s6, s2) = (6f64.sqrt(), 2f64.sqrt());
    let lambda = [2.0 * t.cos() / s6, -t.cos() / s6 + t.sin() / s2, -t.cos() / s6 - t.sin() / s2];
    let mut g = DMatrix::zeros(6, 6);
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[(i, i)] = 1.0;
        g[(i, i + 3)] = -1.0;
        g[(i + 3, i)] = -1.0;
        g[(i + 3, i + 3)] = 1.0 + 8.0 * (lambda[j] - lambda[k]).powi(2);
    }
    g
}
