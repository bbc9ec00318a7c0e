//! Polynomials in `c = cos θ` and `s = sin θ` with real coefficients, reduced
//! modulo `s² = 1 − c²`. Used to evaluate determinants of rotation-type
//! differentials symbolically, so that identities like `c² + s² = 1` come out
//! exact instead of within rounding.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct TrigPoly {
    // (power of c, power of s) -> coefficient; zero coefficients are never stored
    terms: BTreeMap<(u32, u32), f64>,
}

impl TrigPoly {
    pub fn constant(v: f64) -> Self {
        let mut p = TrigPoly::default();
        p.push((0, 0), v);
        p
    }

    pub fn cos() -> Self {
        let mut p = TrigPoly::default();
        p.push((1, 0), 1.0);
        p
    }

    pub fn sin() -> Self {
        let mut p = TrigPoly::default();
        p.push((0, 1), 1.0);
        p
    }

    fn push(&mut self, key: (u32, u32), v: f64) {
        if v == 0.0 {
            return;
        }
        let e = self.terms.entry(key).or_insert(0.0);
        *e += v;
        if *e == 0.0 {
            self.terms.remove(&key);
        }
    }

    /// Rewrites every `s^k` with `k ≥ 2` using `s² = 1 − c²`.
    pub fn reduce(&self) -> Self {
        let mut out = TrigPoly::default();
        let mut stack: Vec<((u32, u32), f64)> = self.terms.iter().map(|(k, v)| (*k, *v)).collect();
        while let Some(((i, j), v)) = stack.pop() {
            if j >= 2 {
                stack.push(((i, j - 2), v));
                stack.push(((i + 2, j - 2), -v));
            } else {
                out.push((i, j), v);
            }
        }
        out
    }

    /// The constant value, if the polynomial has no trigonometric terms.
    pub fn as_constant(&self) -> Option<f64> {
        match self.terms.len() {
            0 => Some(0.0),
            1 => self.terms.get(&(0, 0)).copied(),
            _ => None,
        }
    }
}

impl Add for &TrigPoly {
    type Output = TrigPoly;
    fn add(self, rhs: &TrigPoly) -> TrigPoly {
        let mut out = self.clone();
        for (k, v) in &rhs.terms {
            out.push(*k, *v);
        }
        out
    }
}

impl Sub for &TrigPoly {
    type Output = TrigPoly;
    fn sub(self, rhs: &TrigPoly) -> TrigPoly {
        self + &(-rhs)
    }
}

impl Neg for &TrigPoly {
    type Output = TrigPoly;
    fn neg(self) -> TrigPoly {
        TrigPoly {
            terms: self.terms.iter().map(|(k, v)| (*k, -v)).collect(),
        }
    }
}

impl Mul for &TrigPoly {
    type Output = TrigPoly;
    fn mul(self, rhs: &TrigPoly) -> TrigPoly {
        let mut out = TrigPoly::default();
        for ((i1, j1), a) in &self.terms {
            for ((i2, j2), b) in &rhs.terms {
                out.push((i1 + i2, j1 + j2), a * b);
            }
        }
        out
    }
}

/// Cofactor expansion along the first row.
pub(crate) fn det3(m: &[[TrigPoly; 3]; 3]) -> TrigPoly {
    let minor = |a: &TrigPoly, b: &TrigPoly, c: &TrigPoly, d: &TrigPoly| &(a * d) - &(b * c);
    let t0 = &m[0][0] * &minor(&m[1][1], &m[1][2], &m[2][1], &m[2][2]);
    let t1 = &m[0][1] * &minor(&m[1][0], &m[1][2], &m[2][0], &m[2][2]);
    let t2 = &m[0][2] * &minor(&m[1][0], &m[1][1], &m[2][0], &m[2][1]);
    &(&t0 - &t1) + &t2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pythagorean_identity_reduces_to_one() {
        let c = TrigPoly::cos();
        let s = TrigPoly::sin();
        let p = &(&c * &c) + &(&s * &s);
        assert_eq!(p.reduce().as_constant(), Some(1.0));
    }

    #[test]
    fn higher_sine_powers_reduce() {
        // s^4 + 2 s^2 c^2 + c^4 = 1
        let c = TrigPoly::cos();
        let s = TrigPoly::sin();
        let s2 = &s * &s;
        let c2 = &c * &c;
        let p = &(&(&s2 * &s2) + &(&(&s2 * &c2) * &TrigPoly::constant(2.0))) + &(&c2 * &c2);
        assert_eq!(p.reduce().as_constant(), Some(1.0));
    }

    #[test]
    fn lone_cosine_is_not_constant() {
        assert_eq!(TrigPoly::cos().reduce().as_constant(), None);
    }
}
