//! Rule oracle for the diagram classifier, written directly from the
//! obstruction rules and independent of the library's move closure.

use jacobi_concavity::cohomone::Family;

pub type S = [i64; 4];

pub fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn one_mod4(x: i64) -> bool {
    x.rem_euclid(4) == 1
}

/// Every diagram equivalent to `s`, listed explicitly.
pub fn class(family: Family, s: S) -> Vec<S> {
    let mut out = Vec::new();
    let signs = [1, -1];
    for swap in [false, true] {
        let base = if swap { [s[1], s[0], s[3], s[2]] } else { s };
        match family {
            Family::P => {
                for inter in [false, true] {
                    let b = if inter { [base[2], base[3], base[0], base[1]] } else { base };
                    for e1 in signs {
                        for e2 in signs {
                            out.push([e1 * b[0], e1 * b[1], e2 * b[2], e2 * b[3]]);
                        }
                    }
                }
            }
            _ => {
                for e in 0..16 {
                    let sg = |i: usize| if e >> i & 1 == 1 { -1 } else { 1 };
                    out.push([sg(0) * base[0], sg(1) * base[1], sg(2) * base[2], sg(3) * base[3]]);
                }
            }
        }
    }
    out
}

pub fn rules(family: Family, s: &S) -> bool {
    match family {
        Family::P => s.iter().all(|&x| one_mod4(x)),
        _ => one_mod4(s[0]) && one_mod4(s[1]) && one_mod4(s[2]) && s[3] % 2 == 0,
    }
}

pub fn oracle(family: Family, s: S) -> String {
    if gcd(s[0], s[1]) != 1 || gcd(s[2], s[3]) != 1 {
        return "invalid_diagram".into();
    }
    let cls = class(family, s);
    let valid: Vec<S> = cls.iter().copied().filter(|r| rules(family, r)).collect();
    if valid.is_empty() {
        return "invalid_diagram".into();
    }
    match family {
        Family::P => {
            let obstructed = valid.iter().any(|&[a, b, c, d]| {
                let segment = (a != 1 && c != 1) || (b != 1 && d != 1);
                let slope_sum = c == 1 && d == 1 && a != 1 && b != 1 && a + b != 2 && a + b != -2;
                segment || slope_sum
            });
            if obstructed {
                return "obstructed_no_analytic_nonneg".into();
            }
            if cls.contains(&[1, 1, 1, 1]) {
                return "product_P1111".into();
            }
            if valid.iter().any(|r| r[0] == 1 && r[3] == 1) {
                return "exceptional_P_1q_p1".into();
            }
            for k in 1..=9 {
                if cls.contains(&[1, 1, 1 + 2 * k, 1 - 2 * k]) {
                    return format!("candidate_P_k({k})");
                }
            }
            panic!("P {s:?} escapes the case analysis");
        }
        _ => {
            if cls.contains(&[-3, 1, 1, 2]) {
                return "exceptional_R7".into();
            }
            let obstructed = valid.iter().any(|&[a, b, c, d]| {
                a != 1 || b != 1 || ((c + d).abs() != 1 && (c - d).abs() != 1)
            });
            if obstructed {
                return "obstructed_no_analytic_nonneg".into();
            }
            for k in 0..=9 {
                if cls.contains(&[1, 1, k, k + 1]) {
                    return if k == 0 { "Q0_special".into() } else { format!("candidate_Q_k({k})") };
                }
            }
            panic!("Q {s:?} escapes the case analysis");
        }
    }
}
