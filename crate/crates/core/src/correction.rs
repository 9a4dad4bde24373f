//! Starting-step correction coefficients.
//!
//! Every coefficient is *derived* from its order condition by exact series
//! expansion about `ζ = 1` and then *certified*: the full residual of each
//! order condition is expanded again and the required coefficient range is
//! checked to be exactly zero.
//!
//! Notation follows the generating-function form of the schemes:
//!
//! * `μ(ζ) = δ(ζ) (ζ/(1-ζ) + Σ_j a_j ζ^j)` must satisfy `μ - 1 = O(s^k)`,
//! * subdiffusion: `γ_ℓ/ℓ! + Σ_j b_{ℓ,j} ζ^j - δ^{-(ℓ+1)} = O(s^{k-ℓ-1})`,
//! * diffusion-wave: `γ_1 + Σ_j c_j ζ^j - δ^{-2} = O(s^{k-2})` and
//!   `δ γ_ℓ/ℓ! + Σ_j b_{ℓ,j} ζ^j - δ^{-ℓ} = O(s^{k-ℓ})`.

use std::fmt;

use serde::Serialize;

use crate::series::{factorial, gamma_ell, poly_in_s_from_bdf, LaurentSeries};
use crate::{BdfOrder, Error, Field, Result};

/// Residuals are expanded this far beyond `k` so the leading error constant
/// is always visible.
const DIAGNOSTIC_EXTRA: i64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Subdiffusion,
    DiffusionWave,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Subdiffusion => "subdiffusion",
            Regime::DiffusionWave => "diffusion_wave",
        })
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subdiffusion" | "sub" => Ok(Regime::Subdiffusion),
            "diffusion_wave" | "diffusion-wave" | "wave" => Ok(Regime::DiffusionWave),
            other => Err(Error::Config(format!("unknown regime '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Criterion {
    #[serde(rename = "crit:mu")]
    Mu,
    #[serde(rename = "crit:b")]
    B,
    #[serde(rename = "crit:mu-dw")]
    MuWave,
    #[serde(rename = "crit:c-dw")]
    CWave,
    #[serde(rename = "crit:b-dw")]
    BWave,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Mu => "crit:mu",
            Criterion::B => "crit:b",
            Criterion::MuWave => "crit:mu-dw",
            Criterion::CWave => "crit:c-dw",
            Criterion::BWave => "crit:b-dw",
        })
    }
}

/// Intermediate quantities kept for audit.
#[derive(Clone, Debug, PartialEq)]
pub struct Intermediates<F> {
    /// `c_0 .. c_{k-2}` with `Σ a_j ζ^j = ζ Σ c_j s^j`.
    pub a_basis: Vec<F>,
    /// `g_{ℓ,j}`, one row per `ℓ = 1 ..= k-2`.
    pub g: Vec<Vec<F>>,
    /// `d_{ℓ,j}`, one row per `ℓ = 1 ..= k-2`, length `k-1`.
    pub d: Vec<Vec<F>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionSet<F> {
    pub k: BdfOrder,
    pub regime: Regime,
    /// `a_1 .. a_{k-1}`.
    pub a: Vec<F>,
    /// `b[ℓ-1][j-1] = b_{ℓ,j}` for `ℓ = 1 ..= k-2`, `j = 1 ..= k-1`.
    pub b: Vec<Vec<F>>,
    /// `c_1 .. c_{k-1}`; empty for subdiffusion.
    pub c: Vec<F>,
    pub intermediates: Intermediates<F>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualCertificate<F> {
    pub criterion: Criterion,
    pub ell: Option<usize>,
    /// Inclusive exponent range of `s` proven to carry zero coefficients.
    pub verified_zero_range: (i64, i64),
    /// Leading nonzero coefficient beyond the verified range, if any was
    /// found within the diagnostic expansion.
    pub first_nonzero: Option<(i64, F)>,
}

/// `δ^{-p}` known below `s^below`.
fn delta_inverse_power<F: Field>(delta: &LaurentSeries<F>, p: u32, below: i64) -> Result<LaurentSeries<F>> {
    if p == 0 {
        return Ok(LaurentSeries::one());
    }
    let inv = delta.invert(below + p as i64 - 1)?;
    Ok(inv.powi(p).truncate(below))
}

/// `ζ Σ_j d_j s^j` in powers of `ζ`, returned as the coefficients of
/// `ζ^1 .. ζ^{k-1}`.
fn zeta_times<F: Field>(d: &[F], k: usize) -> Result<Vec<F>> {
    let z = LaurentSeries::from_coeffs(0, d.to_vec()).substitute_zeta()?;
    let mut out = vec![F::zero(); k.saturating_sub(1)];
    for (i, c) in z.into_iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let slot = out.get_mut(i).ok_or_else(|| {
            Error::Inconsistency(format!("correction polynomial has degree {} > k-1 = {}", i + 1, k - 1))
        })?;
        *slot = c;
    }
    Ok(out)
}

/// Solve the lower-triangular system for the basis coefficients `c_ℓ`.
fn a_basis<F: Field>(k: usize) -> Vec<F> {
    // row j (1-based): Σ_{ℓ<j} c_ℓ/(j-ℓ) = 1/(j(j+1)) + Σ_{1≤ℓ<j} c_{ℓ-1}/(j-ℓ);
    // the unknown c_{j-1} enters with coefficient 1.
    let mut c: Vec<F> = Vec::with_capacity(k.saturating_sub(1));
    for j in 1..k as i64 {
        let mut rhs = F::ratio(1, j * (j + 1));
        for l in 1..j {
            rhs = rhs + c[(l - 1) as usize].clone() * F::ratio(1, j - l);
        }
        for l in 0..j - 1 {
            rhs = rhs - c[l as usize].clone() * F::ratio(1, j - l);
        }
        c.push(rhs);
    }
    c
}

/// `a_1 .. a_{k-1}`.
pub fn derive_a<F: Field>(k: BdfOrder) -> Result<Vec<F>> {
    let basis = a_basis::<F>(k.get());
    zeta_times(&basis, k.get())
}

/// Expansion target and residual order for row `ℓ` of the `b` matrix.
fn b_target<F: Field>(k: BdfOrder, regime: Regime, ell: usize, below: i64) -> Result<LaurentSeries<F>> {
    let delta = poly_in_s_from_bdf::<F>(k);
    let g = gamma_ell::<F>(ell).scale(&(F::one() / factorial::<F>(ell)));
    Ok(match regime {
        Regime::Subdiffusion => &g - &delta_inverse_power(&delta, ell as u32 + 1, below)?,
        Regime::DiffusionWave => &(&delta * &g) - &delta_inverse_power(&delta, ell as u32, below)?,
    }
    .truncate(below))
}

fn b_residual_order(k: usize, regime: Regime, ell: usize) -> i64 {
    match regime {
        Regime::Subdiffusion => k as i64 - ell as i64 - 1,
        Regime::DiffusionWave => k as i64 - ell as i64,
    }
}

/// One row `b_{ℓ,1..k-1}` together with its `g` and `d` intermediates.
fn derive_b_row<F: Field>(k: BdfOrder, regime: Regime, ell: usize) -> Result<(Vec<F>, Vec<F>, Vec<F>)> {
    let kk = k.get();
    let m = b_residual_order(kk, regime, ell);
    let target = b_target::<F>(k, regime, ell, m)?;
    if let Some(lo) = target.lowest_exponent() {
        if lo < 0 {
            return Err(Error::Inconsistency(format!(
                "pole of order {} survives in the {regime} expansion for k={kk}, ell={ell}",
                -lo
            )));
        }
    }
    let g: Vec<F> = (0..m).map(|j| target.coefficient(j)).collect::<Result<_>>()?;
    let mut d = vec![F::zero(); kk - 1];
    let mut prev = F::zero();
    for (j, gj) in g.iter().enumerate() {
        prev = prev - gj.clone();
        d[j] = prev.clone();
    }
    let b = zeta_times(&d, kk)?;
    Ok((b, g, d))
}

fn derive_b_all<F: Field>(k: BdfOrder, regime: Regime) -> Result<(Vec<Vec<F>>, Vec<Vec<F>>, Vec<Vec<F>>)> {
    let mut b = Vec::new();
    let mut g = Vec::new();
    let mut d = Vec::new();
    for ell in 1..k.get().saturating_sub(1) {
        let (br, gr, dr) = derive_b_row(k, regime, ell)?;
        b.push(br);
        g.push(gr);
        d.push(dr);
    }
    Ok((b, g, d))
}

/// Subdiffusion `b_{ℓ,j}`, rows `ℓ = 1 ..= k-2`.
pub fn derive_b_subdiffusion<F: Field>(k: BdfOrder) -> Result<Vec<Vec<F>>> {
    Ok(derive_b_all(k, Regime::Subdiffusion)?.0)
}

/// Diffusion-wave `b_{ℓ,j}`, rows `ℓ = 1 ..= k-2`.
pub fn derive_b_diffusion_wave<F: Field>(k: BdfOrder) -> Result<Vec<Vec<F>>> {
    Ok(derive_b_all(k, Regime::DiffusionWave)?.0)
}

/// Gaussian elimination over the field; `None` when singular.
fn solve_dense<F: Field>(mut a: Vec<Vec<F>>, mut rhs: Vec<F>) -> Option<Vec<F>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].clone() / a[col][col].clone();
            for c in col..n {
                a[r][c] = a[r][c].clone() - factor.clone() * a[col][c].clone();
            }
            rhs[r] = rhs[r].clone() - factor * rhs[col].clone();
        }
    }
    let mut x = vec![F::zero(); n];
    for r in (0..n).rev() {
        let mut acc = rhs[r].clone();
        for c in r + 1..n {
            acc = acc - a[r][c].clone() * x[c].clone();
        }
        x[r] = acc / a[r][r].clone();
    }
    Some(x)
}

/// `c_j` straight from its own order condition: the coefficients of
/// `s^0 .. s^{k-3}` in `γ_1 - δ^{-2} + Σ_{j=1}^{k-2} c_j ζ^j` must vanish,
/// a square system in the `ζ`-basis.
fn derive_c_direct<F: Field>(k: BdfOrder) -> Result<Vec<F>> {
    let kk = k.get();
    let mut c = vec![F::zero(); kk.saturating_sub(1)];
    if kk < 3 {
        return Ok(c);
    }
    let n = kk - 2;
    let delta = poly_in_s_from_bdf::<F>(k);
    let target = &gamma_ell::<F>(1) - &delta_inverse_power(&delta, 2, n as i64)?;
    let mut rows = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    for e in 0..n {
        // [s^e] ζ^j = (-1)^e C(j, e)
        let row: Vec<F> = (1..=n)
            .map(|j| {
                let binom = binomial::<F>(j, e);
                if e % 2 == 0 {
                    binom
                } else {
                    -binom
                }
            })
            .collect();
        rows.push(row);
        rhs.push(-target.coefficient(e as i64)?);
    }
    let sol = solve_dense(rows, rhs)
        .ok_or_else(|| Error::Inconsistency(format!("singular c-system for k={kk}")))?;
    c[..n].clone_from_slice(&sol);
    Ok(c)
}

fn binomial<F: Field>(n: usize, r: usize) -> F {
    if r > n {
        return F::zero();
    }
    (0..r).fold(F::one(), |acc, i| acc * F::int((n - i) as i64) / F::int(i as i64 + 1))
}

/// `c_1 .. c_{k-1}` for the diffusion-wave scheme. Returned from the
/// subdiffusion `ℓ = 1` row and cross-checked against a direct solve of the
/// `c` order condition.
pub fn derive_c<F: Field>(k: BdfOrder) -> Result<Vec<F>> {
    let via_b = derive_b_subdiffusion::<F>(k)?
        .into_iter()
        .next()
        .unwrap_or_else(|| vec![F::zero(); k.get() - 1]);
    let direct = derive_c_direct::<F>(k)?;
    if via_b != direct {
        return Err(Error::Inconsistency(format!(
            "c coefficients for k={k}: b-row route {via_b:?} disagrees with direct solve {direct:?}"
        )));
    }
    Ok(via_b)
}

impl<F: Field> CorrectionSet<F> {
    pub fn derive(k: BdfOrder, regime: Regime) -> Result<Self> {
        let a_basis = a_basis::<F>(k.get());
        let a = zeta_times(&a_basis, k.get())?;
        let (b, g, d) = derive_b_all::<F>(k, regime)?;
        let c = match regime {
            Regime::Subdiffusion => Vec::new(),
            Regime::DiffusionWave => derive_c::<F>(k)?,
        };
        Ok(CorrectionSet {
            k,
            regime,
            a,
            b,
            c,
            intermediates: Intermediates { a_basis, g, d },
        })
    }

    /// `a_n`, zero outside `1 ..= k-1`.
    pub fn a_at(&self, n: usize) -> F {
        n.checked_sub(1)
            .and_then(|i| self.a.get(i))
            .cloned()
            .unwrap_or_else(F::zero)
    }

    /// `b_{ℓ,n}`, zero outside the tabulated range.
    pub fn b_at(&self, ell: usize, n: usize) -> F {
        ell.checked_sub(1)
            .and_then(|l| self.b.get(l))
            .and_then(|row| n.checked_sub(1).and_then(|j| row.get(j)))
            .cloned()
            .unwrap_or_else(F::zero)
    }

    /// `c_n`, zero outside the tabulated range.
    pub fn c_at(&self, n: usize) -> F {
        n.checked_sub(1)
            .and_then(|i| self.c.get(i))
            .cloned()
            .unwrap_or_else(F::zero)
    }

    fn mu(&self) -> LaurentSeries<F> {
        let delta = poly_in_s_from_bdf::<F>(self.k);
        // ζ/(1-ζ) = 1/s - 1
        let geometric = LaurentSeries::from_coeffs(-1, vec![F::one(), -F::one()]);
        let mut zeta_poly = vec![F::zero()];
        zeta_poly.extend(self.a.iter().cloned());
        let a_series = LaurentSeries::from_zeta(&zeta_poly);
        &delta * &(&geometric + &a_series)
    }

    fn zeta_series(row: &[F]) -> LaurentSeries<F> {
        let mut zeta_poly = vec![F::zero()];
        zeta_poly.extend(row.iter().cloned());
        LaurentSeries::from_zeta(&zeta_poly)
    }

    /// Residual series of every order condition attached to this set.
    pub fn residuals(&self) -> Result<Vec<(Criterion, Option<usize>, LaurentSeries<F>, i64)>> {
        let k = self.k.get();
        let kk = k as i64;
        let below = kk + DIAGNOSTIC_EXTRA;
        let delta = poly_in_s_from_bdf::<F>(self.k);
        let mut out = Vec::new();

        let mu_residual = &self.mu() - &LaurentSeries::one();
        let mu_id = match self.regime {
            Regime::Subdiffusion => Criterion::Mu,
            Regime::DiffusionWave => Criterion::MuWave,
        };
        out.push((mu_id, None, mu_residual.truncate(below), kk));

        if self.regime == Regime::DiffusionWave && k >= 2 {
            let res = &(&gamma_ell::<F>(1) + &Self::zeta_series(&self.c))
                - &delta_inverse_power(&delta, 2, below)?;
            out.push((Criterion::CWave, None, res, kk - 2));
        }

        for (l0, row) in self.b.iter().enumerate() {
            let ell = l0 + 1;
            let g = gamma_ell::<F>(ell).scale(&(F::one() / factorial::<F>(ell)));
            let corr = Self::zeta_series(row);
            let (id, res) = match self.regime {
                Regime::Subdiffusion => (
                    Criterion::B,
                    &(&g + &corr) - &delta_inverse_power(&delta, ell as u32 + 1, below)?,
                ),
                Regime::DiffusionWave => (
                    Criterion::BWave,
                    &(&(&delta * &g) + &corr) - &delta_inverse_power(&delta, ell as u32, below)?,
                ),
            };
            out.push((id, Some(ell), res, b_residual_order(k, self.regime, ell)));
        }
        Ok(out)
    }

    /// Check every order condition; the first violated coefficient aborts.
    pub fn certify(&self) -> Result<Vec<ResidualCertificate<F>>> {
        let k = self.k.get();
        let mut certs = Vec::new();
        for (criterion, ell, residual, required) in self.residuals()? {
            let pole = ell.map_or(-2, |l| -(l as i64) - 2);
            let start = residual.lowest_exponent().map_or(pole, |lo| lo.min(pole));
            for e in start..required {
                let value = residual.coefficient(e)?;
                if !value.is_zero() {
                    return Err(Error::CertificationFailed {
                        criterion: criterion.to_string(),
                        k,
                        ell,
                        exponent: e,
                        value: format!("{value:?}"),
                    });
                }
            }
            let limit = residual.truncation_order().unwrap_or(k as i64 + DIAGNOSTIC_EXTRA);
            let first_nonzero = (required..limit).find_map(|e| {
                let v = residual.coefficient(e).ok()?;
                (!v.is_zero()).then_some((e, v))
            });
            certs.push(ResidualCertificate {
                criterion,
                ell,
                verified_zero_range: (start, required - 1),
                first_nonzero,
            });
        }
        Ok(certs)
    }
}
