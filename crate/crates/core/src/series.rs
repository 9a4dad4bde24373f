//! Truncated Laurent series in the variable `s = 1 - ζ`.
//!
//! All correction coefficients are read off expansions about `ζ = 1`, so the
//! natural variable is `s`. A series carries an explicit truncation order:
//! coefficients at or beyond it are *unknown*, not zero, and reading one is an
//! error. Exact (finite) series have no truncation order.

use std::cmp::{max, min};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::{BdfOrder, Error, Field, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LaurentSeries<F> {
    lowest: i64,
    coeffs: Vec<F>,
    order: Option<i64>,
}

impl<F: Field> LaurentSeries<F> {
    pub fn zero() -> Self {
        LaurentSeries {
            lowest: 0,
            coeffs: Vec::new(),
            order: None,
        }
    }

    pub fn one() -> Self {
        Self::monomial(F::one(), 0)
    }

    /// `c · s^exponent`.
    pub fn monomial(c: F, exponent: i64) -> Self {
        Self::from_coeffs(exponent, vec![c])
    }

    /// Exact series `Σ_i coeffs[i] · s^(lowest + i)`.
    pub fn from_coeffs(lowest: i64, coeffs: Vec<F>) -> Self {
        LaurentSeries {
            lowest,
            coeffs,
            order: None,
        }
        .normalized()
    }

    /// Series known only below `s^order`.
    pub fn truncated(lowest: i64, coeffs: Vec<F>, order: i64) -> Self {
        LaurentSeries {
            lowest,
            coeffs,
            order: Some(order),
        }
        .normalized()
    }

    fn normalized(mut self) -> Self {
        if let Some(m) = self.order {
            let keep = (m - self.lowest).clamp(0, self.coeffs.len() as i64) as usize;
            self.coeffs.truncate(keep);
        }
        while self.coeffs.last().is_some_and(|c| c.is_zero()) {
            self.coeffs.pop();
        }
        let lead = self.coeffs.iter().take_while(|c| c.is_zero()).count();
        if lead > 0 {
            self.coeffs.drain(..lead);
            self.lowest += lead as i64;
        }
        if self.coeffs.is_empty() {
            self.lowest = 0;
        }
        self
    }

    /// True when every known coefficient vanishes.
    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.order.is_none()
    }

    /// Exponent of the leading nonzero coefficient.
    pub fn lowest_exponent(&self) -> Option<i64> {
        (!self.is_zero()).then_some(self.lowest)
    }

    /// Exponent of the last stored nonzero coefficient.
    pub fn highest_exponent(&self) -> Option<i64> {
        (!self.is_zero()).then(|| self.lowest + self.coeffs.len() as i64 - 1)
    }

    /// First exponent whose coefficient is unknown; `None` for exact series.
    pub fn truncation_order(&self) -> Option<i64> {
        self.order
    }

    pub fn coefficient(&self, exponent: i64) -> Result<F> {
        if let Some(m) = self.order {
            if exponent >= m {
                return Err(Error::UnknownCoefficient {
                    exponent,
                    valid_below: m,
                });
            }
        }
        let idx = exponent - self.lowest;
        if self.is_zero() || idx < 0 || idx >= self.coeffs.len() as i64 {
            Ok(F::zero())
        } else {
            Ok(self.coeffs[idx as usize].clone())
        }
    }

    /// Nonzero terms as `(exponent, coefficient)` pairs.
    pub fn terms(&self) -> impl Iterator<Item = (i64, &F)> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(move |(i, c)| (self.lowest + i as i64, c))
    }

    /// Forget everything at or beyond `s^order`.
    pub fn truncate(&self, order: i64) -> Self {
        let order = self.order.map_or(order, |m| min(m, order));
        LaurentSeries {
            order: Some(order),
            ..self.clone()
        }
        .normalized()
    }

    /// The exact polynomial made of the known coefficients below `s^below`.
    pub fn polynomial_part(&self, below: i64) -> Result<Self> {
        if let Some(m) = self.order {
            if below > m {
                return Err(Error::UnknownCoefficient {
                    exponent: below - 1,
                    valid_below: m,
                });
            }
        }
        let mut p = self.truncate(below);
        p.order = None;
        Ok(p)
    }

    pub fn scale(&self, c: &F) -> Self {
        LaurentSeries {
            lowest: self.lowest,
            coeffs: self.coeffs.iter().map(|x| x.clone() * c.clone()).collect(),
            order: self.order,
        }
        .normalized()
    }

    /// Multiply by `s^p`.
    pub fn shift(&self, p: i64) -> Self {
        LaurentSeries {
            lowest: self.lowest + p,
            coeffs: self.coeffs.clone(),
            order: self.order.map(|m| m + p),
        }
    }

    /// `d/ds`.
    pub fn derivative(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c.clone() * F::int(self.lowest + i as i64))
            .collect();
        LaurentSeries {
            lowest: self.lowest - 1,
            coeffs,
            order: self.order.map(|m| m - 1),
        }
        .normalized()
    }

    /// First exponent at which the series may be nonzero; `None` for the
    /// exact zero series.
    fn effective_lowest(&self) -> Option<i64> {
        if self.is_zero() {
            self.order
        } else {
            Some(self.lowest)
        }
    }

    fn combine(&self, other: &Self, sign: F) -> Self {
        let order = match (self.order, other.order) {
            (Some(a), Some(b)) => Some(min(a, b)),
            (a, b) => a.or(b),
        };
        if self.is_zero() && other.is_zero() {
            return LaurentSeries {
                order,
                ..Self::zero()
            };
        }
        let lo = match (self.is_zero(), other.is_zero()) {
            (true, _) => other.lowest,
            (_, true) => self.lowest,
            _ => min(self.lowest, other.lowest),
        };
        let hi = max(
            self.highest_exponent().unwrap_or(lo),
            other.highest_exponent().unwrap_or(lo),
        );
        let mut coeffs = vec![F::zero(); (hi - lo + 1) as usize];
        for (e, c) in self.terms() {
            coeffs[(e - lo) as usize] = c.clone();
        }
        for (e, c) in other.terms() {
            let slot = &mut coeffs[(e - lo) as usize];
            *slot = slot.clone() + sign.clone() * c.clone();
        }
        LaurentSeries {
            lowest: lo,
            coeffs,
            order,
        }
        .normalized()
    }

    fn product(&self, other: &Self) -> Self {
        let bound = |m: Option<i64>, low: Option<i64>| match (m, low) {
            (Some(m), Some(l)) => Some(m + l),
            _ => None,
        };
        // exact zero annihilates regardless of the other operand's truncation
        if (self.is_zero() && self.is_exact()) || (other.is_zero() && other.is_exact()) {
            return Self::zero();
        }
        let order = match (
            bound(self.order, other.effective_lowest()),
            bound(other.order, self.effective_lowest()),
        ) {
            (Some(a), Some(b)) => Some(min(a, b)),
            (a, b) => a.or(b),
        };
        if self.is_zero() || other.is_zero() {
            return LaurentSeries {
                order,
                ..Self::zero()
            };
        }
        let mut coeffs = vec![F::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] = coeffs[i + j].clone() + a.clone() * b.clone();
            }
        }
        LaurentSeries {
            lowest: self.lowest + other.lowest,
            coeffs,
            order,
        }
        .normalized()
    }

    /// Multiplicative inverse, valid below `s^order` (or less, if the
    /// operand's own truncation does not support that many terms).
    pub fn invert(&self, order: i64) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let p = self.lowest;
        let order = match self.order {
            Some(m) => min(order, m - 2 * p),
            None => order,
        };
        let n_terms = max(order + p, 0) as usize;
        let a0_inv = F::one() / self.coeffs[0].clone();
        let mut out: Vec<F> = Vec::with_capacity(n_terms);
        for n in 0..n_terms {
            if n == 0 {
                out.push(a0_inv.clone());
                continue;
            }
            let mut acc = F::zero();
            for i in 1..=min(n, self.coeffs.len() - 1) {
                acc = acc + self.coeffs[i].clone() * out[n - i].clone();
            }
            out.push(-(acc * a0_inv.clone()));
        }
        Ok(LaurentSeries::truncated(-p, out, order))
    }

    /// Non-negative integer power.
    pub fn powi(&self, n: u32) -> Self {
        (0..n).fold(Self::one(), |acc, _| &acc * self)
    }

    /// Re-express an exact polynomial in `s` in powers of `ζ = 1 - s`.
    ///
    /// Entry `i` of the result is the coefficient of `ζ^i`.
    pub fn substitute_zeta(&self) -> Result<Vec<F>> {
        if !self.is_exact() || (!self.is_zero() && self.lowest < 0) {
            return Err(Error::NotAPolynomial {
                lowest: self.lowest,
                truncated: !self.is_exact(),
            });
        }
        let Some(deg) = self.highest_exponent() else {
            return Ok(Vec::new());
        };
        let mut dense = vec![F::zero(); deg as usize + 1];
        for (e, c) in self.terms() {
            dense[e as usize] = c.clone();
        }
        Ok(binomial_flip(&dense))
    }

    /// Inverse of [`substitute_zeta`](Self::substitute_zeta): the polynomial
    /// `Σ zeta[i] ζ^i` as an exact series in `s`.
    pub fn from_zeta(zeta: &[F]) -> Self {
        Self::from_coeffs(0, binomial_flip(zeta))
    }
}

/// `Σ c_e x^e ↦ Σ c_e (1 - x)^e`, an involution on coefficient vectors.
fn binomial_flip<F: Field>(c: &[F]) -> Vec<F> {
    let mut out = vec![F::zero(); c.len()];
    for (e, ce) in c.iter().enumerate() {
        if ce.is_zero() {
            continue;
        }
        let mut binom = F::one();
        for i in 0..=e {
            let term = if i % 2 == 0 {
                binom.clone()
            } else {
                -binom.clone()
            };
            out[i] = out[i].clone() + ce.clone() * term;
            binom = binom * F::int((e - i) as i64) / F::int(i as i64 + 1);
        }
    }
    out
}

/// `δ(ζ) = Σ_{j=1}^k (1-ζ)^j / j` as the exact polynomial `Σ s^j / j`.
pub fn poly_in_s_from_bdf<F: Field>(k: BdfOrder) -> LaurentSeries<F> {
    let coeffs = (1..=k.get() as i64).map(|j| F::ratio(1, j)).collect();
    LaurentSeries::from_coeffs(1, coeffs)
}

/// `γ_ℓ(ζ) = (ζ d/dζ)^ℓ (1-ζ)^{-1}` as an exact Laurent polynomial in `s`.
///
/// With `ζ = 1 - s` the operator `ζ d/dζ` becomes `(s - 1) d/ds`.
pub fn gamma_ell<F: Field>(ell: usize) -> LaurentSeries<F> {
    let s_minus_one = LaurentSeries::from_coeffs(0, vec![-F::one(), F::one()]);
    (0..ell).fold(LaurentSeries::monomial(F::one(), -1), |g, _| {
        &s_minus_one * &g.derivative()
    })
}

/// `ℓ!` in the field.
pub fn factorial<F: Field>(n: usize) -> F {
    (1..=n as i64).fold(F::one(), |acc, i| acc * F::int(i))
}

impl<'a, F: Field> Add<&'a LaurentSeries<F>> for &'a LaurentSeries<F> {
    type Output = LaurentSeries<F>;
    fn add(self, rhs: Self) -> LaurentSeries<F> {
        self.combine(rhs, F::one())
    }
}

impl<'a, F: Field> Sub<&'a LaurentSeries<F>> for &'a LaurentSeries<F> {
    type Output = LaurentSeries<F>;
    fn sub(self, rhs: Self) -> LaurentSeries<F> {
        self.combine(rhs, -F::one())
    }
}

impl<'a, F: Field> Mul<&'a LaurentSeries<F>> for &'a LaurentSeries<F> {
    type Output = LaurentSeries<F>;
    fn mul(self, rhs: Self) -> LaurentSeries<F> {
        self.product(rhs)
    }
}

impl<F: Field> Add for LaurentSeries<F> {
    type Output = LaurentSeries<F>;
    fn add(self, rhs: Self) -> Self {
        &self + &rhs
    }
}

impl<F: Field> Sub for LaurentSeries<F> {
    type Output = LaurentSeries<F>;
    fn sub(self, rhs: Self) -> Self {
        &self - &rhs
    }
}

impl<F: Field> Mul for LaurentSeries<F> {
    type Output = LaurentSeries<F>;
    fn mul(self, rhs: Self) -> Self {
        &self * &rhs
    }
}

impl<F: Field> Neg for LaurentSeries<F> {
    type Output = LaurentSeries<F>;
    fn neg(self) -> Self {
        self.scale(&-F::one())
    }
}

impl<F: Field + fmt::Display> fmt::Display for LaurentSeries<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (e, c) in self.terms() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match e {
                0 => write!(f, "{c}")?,
                1 => write!(f, "({c})·s")?,
                _ => write!(f, "({c})·s^{e}")?,
            }
        }
        if first {
            write!(f, "0")?;
        }
        if let Some(m) = self.order {
            write!(f, " + O(s^{m})")?;
        }
        Ok(())
    }
}
