//! Independent checks of the diagram classifier: direct application of the
//! obstruction rules over explicitly enumerated equivalent diagrams, and slice
//! weights counted from the isotropy groups themselves.

use jacobi_concavity::cohomone::{
    classify, n_family_kernels, validate_diagram, weight_table, weyl_data, Block, Classification, Family,
    IsotropyCircle,
};
use proptest::prelude::*;

mod common;

use common::{gcd, oracle, S};

fn dot(a: &[i64; 6], b: &[i64; 6]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn classifier_agrees_with_rule_oracle_on_grid() {
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    for family in [Family::P, Family::Q] {
        for a in -9..=9 {
            for b in -9..=9 {
                for c in -9..=9 {
                    for d in -9..=9 {
                        let s = [a, b, c, d];
                        let v = classify(&validate_diagram(family, &s));
                        let expected = oracle(family, s);
                        assert_eq!(v.classification.to_string(), expected, "{family} {s:?}");
                        *counts.entry(format!("{family} {expected}")).or_default() += 1;
                        if let Some(w) = v.witness().filter(|_| v.classification != Classification::ProductP1111) {
                            let wd = weyl_data(&v.diagram).unwrap();
                            let far = wd.at(w.parallel_on.1).vanishing_field().unwrap();
                            assert_eq!(dot(&w.field.coefficients, &far), 0, "{family} {s:?}");
                            if let Some((r, z)) = &w.vanishing {
                                assert_eq!(wd.at(*r).vanishing_field().unwrap(), z.coefficients);
                                assert_ne!(dot(&w.field.coefficients, &z.coefficients), 0);
                            }
                        }
                    }
                }
            }
        }
    }
    for name in ["P candidate_P_k(2)", "P candidate_P_k(4)", "P exceptional_P_1q_p1", "Q candidate_Q_k(4)", "Q exceptional_R7", "Q Q0_special"] {
        assert!(counts.get(name).copied().unwrap_or(0) > 0, "{name} never reached");
    }
}

#[test]
fn missing_certificates_only_when_q_plus_vanishes() {
    for a in -9..=9 {
        for b in -9..=9 {
            for c in -9..=9 {
                for d in -9..=9 {
                    for family in [Family::P, Family::Q] {
                        let v = classify(&validate_diagram(family, &[a, b, c, d]));
                        if let Some(w) = v.witness() {
                            if w.vanishing.is_none() && v.classification != Classification::ProductP1111 {
                                let s = v.diagram.slopes().unwrap();
                                assert_eq!((family, s[3]), (Family::Q, 0), "{family} {:?}", [a, b, c, d]);
                            }
                        }
                    }
                }
            }
        }
    }
}

type Quat = [f64; 4];

fn mul(a: Quat, b: Quat) -> Quat {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn unit(axis: usize, sign: f64) -> Quat {
    let mut q = [0.0; 4];
    q[axis] = sign;
    q
}

fn exp(axis: usize, sign: f64, theta: f64) -> Quat {
    let mut q = [theta.cos(), 0.0, 0.0, 0.0];
    q[axis] = sign * theta.sin();
    q
}

fn close(a: Quat, b: Quat) -> bool {
    a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9)
}

fn principal_isotropy(family: Family) -> Vec<(Quat, Quat)> {
    let mut h = Vec::new();
    let one = [1.0, 0.0, 0.0, 0.0];
    match family {
        Family::P => {
            for axis in 0..4 {
                for s in [1.0, -1.0] {
                    let q = if axis == 0 { [s, 0.0, 0.0, 0.0] } else { unit(axis, s) };
                    h.push((q, q));
                }
            }
        }
        Family::Q => {
            for s1 in [1.0, -1.0] {
                for s2 in [1.0, -1.0] {
                    h.push(([s1, 0.0, 0.0, 0.0], [s2, 0.0, 0.0, 0.0]));
                    h.push((unit(1, s1), unit(1, s2)));
                }
            }
        }
        Family::N => h.push((one, one)),
    }
    assert!(h.iter().all(|(a, b)| close(mul(*a, [a[0], -a[1], -a[2], -a[3]]), one) && close(mul(*b, [b[0], -b[1], -b[2], -b[3]]), one)));
    h
}

/// `|H ∩ K°|` by walking the circle through the points where both factors
/// are fourth roots of unity.
fn slice_weight(family: Family, circle: &IsotropyCircle) -> i64 {
    let IsotropyCircle::Circle { axes: (u, v), slope: (p, q), .. } = circle else { unreachable!() };
    let m = 4 * p.abs().max(1) * q.abs().max(1);
    let h = principal_isotropy(family);
    (0..m)
        .filter(|&i| {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
            let x = exp(u.axis as usize, u.sign as f64, *p as f64 * theta);
            let y = exp(v.axis as usize, v.sign as f64, *q as f64 * theta);
            h.iter().any(|(a, b)| close(*a, x) && close(*b, y))
        })
        .count() as i64
}

#[test]
fn slice_weights_match_isotropy_count() {
    let diagrams = [
        (Family::P, vec![1, 1, 5, -3]),
        (Family::P, vec![5, 1, 5, -3]),
        (Family::P, vec![1, -3, -3, 1]),
        (Family::Q, vec![1, 1, 3, 4]),
        (Family::Q, vec![1, 1, 1, 0]),
        (Family::Q, vec![-3, 1, 1, 2]),
        (Family::N, vec![2, 3]),
        (Family::N, vec![1, 1]),
    ];
    for (family, s) in diagrams {
        let d = validate_diagram(family, &s);
        let wd = weyl_data(&d).unwrap();
        for r in 0..wd.isotropy_chain.len() as i64 {
            let entry = wd.at(r);
            if *entry == IsotropyCircle::Diagonal {
                assert!(weight_table(&d, r).is_err());
                continue;
            }
            let table = weight_table(&d, r).unwrap();
            let k = slice_weight(family, entry);
            assert_eq!(table.slice_weight, k, "{family} {s:?} r={r}");
            let (p, q) = table.slope;
            assert_eq!(table.block(Block::S2W1).vanishes, 4 * p.abs() != k);
            assert_eq!(table.block(Block::S2W2).vanishes, 4 * q.abs() != k);
            assert_eq!(table.block(Block::W0W1).vanishes, 2 * p.abs() != k);
            assert_eq!(table.block(Block::W1W2).vanishes, 2 * (p + q).abs() != k && 2 * (p - q).abs() != k);
            assert!(table.block(Block::S2W0).vanishes);
        }
    }
}

#[test]
fn n_family_w_dimension_over_grid() {
    for p in -9i64..=9 {
        for q in -9i64..=9 {
            if gcd(p, q) != 1 {
                assert!(n_family_kernels(p, q).is_err());
                continue;
            }
            let expected = if (p, q) == (1, 1) || (p, q) == (-1, -1) { 3 } else { 2 };
            assert_eq!(n_family_kernels(p, q).unwrap().w_dim, expected, "({p},{q})");
        }
    }
}

fn apply_move(family: Family, s: S, m: u8) -> S {
    let [a, b, c, d] = s;
    match (family, m % 5) {
        (_, 0) => [b, a, d, c],
        (_, 1) => [-a, -b, c, d],
        (_, 2) => [a, b, -c, -d],
        (Family::P, _) => [c, d, a, b],
        (_, 3) => [a, -b, c, d],
        (_, _) => [a, b, c, -d],
    }
}

proptest! {
    #[test]
    fn classification_is_invariant_under_moves(
        s in prop::array::uniform4(-15i64..=15),
        path in prop::collection::vec(0u8..5, 0..8),
        q in any::<bool>(),
    ) {
        let family = if q { Family::Q } else { Family::P };
        let moved = path.iter().fold(s, |acc, &m| apply_move(family, acc, m));
        let d1 = validate_diagram(family, &s);
        let d2 = validate_diagram(family, &moved);
        prop_assert_eq!(d1.canonical, d2.canonical);
        prop_assert_eq!(d1.is_valid(), d2.is_valid());
        prop_assert_eq!(classify(&d1).classification, classify(&d2).classification);
    }
}
