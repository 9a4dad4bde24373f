//! Convolution-quadrature weights of `δ(ζ)^α`.
//!
//! Weights are stored τ-free: the quadrature reads
//! `τ^{-α} Σ_j b_j φ^{n-j}` and the caller applies the `τ^{-α}` factor.

use num_complex::Complex;
use num_traits::ToPrimitive;
use rustfft::FftPlanner;
use statrs::function::gamma::gamma;
use twofloat::TwoFloat;

use crate::series::{poly_in_s_from_bdf, LaurentSeries};
use crate::{BdfOrder, Error, Rational, Real, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct WeightTable<T> {
    pub alpha: T,
    pub k: BdfOrder,
    pub weights: Vec<T>,
}

impl<T: Real> WeightTable<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `τ^{-α}`, the factor the stepper multiplies the stored weights with.
    pub fn scale(&self, tau: T) -> T {
        tau.powf(-self.alpha)
    }
}

/// Coefficients `p_0 .. p_k` of `δ(ζ)` in powers of `ζ`.
#[derive(Clone, Debug, PartialEq)]
pub struct BdfDifferenceWeights<T> {
    pub k: BdfOrder,
    pub p: Vec<T>,
}

fn exact_zeta_coefficients(k: BdfOrder) -> Vec<Rational> {
    poly_in_s_from_bdf::<Rational>(k)
        .substitute_zeta()
        .expect("δ is a polynomial in s")
}

pub fn bdf_difference_weights<T: Real>(k: BdfOrder) -> BdfDifferenceWeights<T> {
    BdfDifferenceWeights {
        k,
        p: exact_zeta_coefficients(k).iter().map(T::from_exact).collect(),
    }
}

fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha < T::lit(2.0) {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange {
            alpha: alpha.as_f64(),
            lo: 0.0,
            hi: 2.0,
        })
    }
}

/// First `count` Taylor coefficients of `δ(ζ)^α`, by the power-of-a-polynomial
/// recurrence `n p_0 q_n = Σ_{i=1}^{min(n,k)} ((α+1) i - n) p_i q_{n-i}`.
pub fn cq_weights<T: Real>(alpha: T, k: BdfOrder, count: usize) -> Result<WeightTable<T>> {
    check_alpha(alpha)?;
    let (q0, ratios) = weight_ratios(alpha, k, count);
    Ok(WeightTable {
        alpha,
        k,
        weights: scale_ratios(q0, &ratios),
    })
}

/// Partial sums `σ_m = Σ_{j=0}^{m} b_j`, the coefficients of
/// `δ(ζ)^α / (1 - ζ)`.
///
/// The sums decay like `m^{-α}` while the weights they add up start at
/// `O(1)`, so they are accumulated before rounding to `T`.
pub fn cq_partial_sums<T: Real>(alpha: T, k: BdfOrder, count: usize) -> Result<Vec<T>> {
    check_alpha(alpha)?;
    let (q0, mut ratios) = weight_ratios(alpha, k, count);
    for j in 1..ratios.len() {
        let prev = ratios[j - 1];
        ratios[j] += prev;
    }
    Ok(scale_ratios(q0, &ratios))
}

/// `(q_0, q_n / q_0)`. The recurrence is homogeneous, so it runs on the
/// ratios and the irrational factor `p_0^α` is applied once at the end. For
/// `k ≥ 3` its rounding errors grow linearly in `n`, which in double
/// precision would reach `1e-12` relative by `n ≈ 10^4`; the ratios are
/// therefore carried in double-double arithmetic. Division is only by `f64`
/// operands: `TwoFloat / TwoFloat` is accurate to double precision alone.
fn weight_ratios<T: Real>(alpha: T, k: BdfOrder, count: usize) -> (T, Vec<TwoFloat>) {
    let exact = exact_zeta_coefficients(k);
    let p: Vec<TwoFloat> = exact.iter().map(two_float).collect();
    let p0_num = exact[0].numer().to_f64().expect("small numerator");
    let p0_den = exact[0].denom().to_f64().expect("small denominator");
    let q0 = T::from_exact(&exact[0]).powf(alpha);
    let ap1 = TwoFloat::from(alpha.as_f64()) + 1.0;
    let mut ratio: Vec<TwoFloat> = Vec::with_capacity(count);
    if count > 0 {
        ratio.push(TwoFloat::from(1.0));
    }
    for n in 1..count {
        let nf = n as f64;
        let mut acc = TwoFloat::from(0.0);
        for i in 1..=n.min(k.get()) {
            acc += (ap1 * i as f64 - nf) * p[i] * ratio[n - i];
        }
        ratio.push(acc * p0_den / p0_num / nf);
    }
    (q0, ratio)
}

fn scale_ratios<T: Real>(q0: T, ratios: &[TwoFloat]) -> Vec<T> {
    let q0_wide = TwoFloat::from(q0.as_f64());
    ratios
        .iter()
        .map(|r| T::lit(f64::from(q0_wide * *r)))
        .collect()
}

fn two_float(r: &Rational) -> TwoFloat {
    let num = r.numer().to_f64().expect("small numerator");
    let den = r.denom().to_f64().expect("small denominator");
    TwoFloat::from(num) / den
}

/// Independent route to the same weights: sample `δ(ζ)^α` on a circle of
/// radius `ρ < 1` and invert with an FFT.
///
/// `δ^α` has a branch point at `ζ = 1`, so sampling on the unit circle would
/// alias algebraically. On radius `ρ` with `ρ^L = 1e-10` the aliased tail is
/// damped by that factor while the rescaling `ρ^{-j}` for `j < L/4` stays
/// below `10^{2.5}`.
pub fn cq_weights_fft_oracle<T: Real>(alpha: T, k: BdfOrder, count: usize) -> Result<WeightTable<T>> {
    check_alpha(alpha)?;
    let len = (4 * count.max(1)).next_power_of_two();
    let rho = T::lit(10.0).powf(T::lit(-10.0) / T::from_usize_lossy(len));
    let two_pi = T::PI() + T::PI();
    let mut samples: Vec<Complex<T>> = (0..len)
        .map(|m| {
            let theta = two_pi * T::from_usize_lossy(m) / T::from_usize_lossy(len);
            let zeta = Complex::from_polar(rho, theta);
            let s = Complex::new(T::one(), T::zero()) - zeta;
            // δ = Σ_{j=1}^k s^j / j, Horner in s
            let mut acc = Complex::new(T::zero(), T::zero());
            for j in (1..=k.get()).rev() {
                acc = acc * s + Complex::new(T::one() / T::from_usize_lossy(j), T::zero());
            }
            (acc * s).powf(alpha)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut samples);
    let inv_len = T::one() / T::from_usize_lossy(len);
    let mut rescale = T::one();
    let weights = samples
        .iter()
        .take(count)
        .map(|c| {
            let w = c.re * inv_len * rescale;
            rescale /= rho;
            w
        })
        .collect();
    Ok(WeightTable {
        alpha,
        k,
        weights,
    })
}

/// Weights of the L1 discretisation of the Caputo derivative, in the same
/// τ-free convolution form: `β_0 = 1/Γ(2-α)`,
/// `β_j = ((j+1)^{1-α} - 2 j^{1-α} + (j-1)^{1-α}) / Γ(2-α)` for `j ≥ 1`
/// (valid when the history starts from zero).
pub fn l1_weights<T: Real>(alpha: T, count: usize) -> Result<Vec<T>> {
    let sums = l1_partial_sums(alpha, count)?;
    Ok((0..count)
        .map(|j| if j == 0 { sums[0] } else { sums[j] - sums[j - 1] })
        .collect())
}

/// Partial sums of the L1 weights, `((m+1)^{1-α} - m^{1-α}) / Γ(2-α)`,
/// evaluated as `m^{1-α} expm1((1-α) ln1p(1/m))` to avoid cancellation.
pub fn l1_partial_sums<T: Real>(alpha: T, count: usize) -> Result<Vec<T>> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::AlphaOutOfRange {
            alpha: alpha.as_f64(),
            lo: 0.0,
            hi: 1.0,
        });
    }
    let g = T::lit(gamma((T::lit(2.0) - alpha).as_f64()));
    let e = T::one() - alpha;
    Ok((0..count)
        .map(|m| {
            if m == 0 {
                return T::one() / g;
            }
            let mf = T::from_usize_lossy(m);
            mf.powf(e) * (e * (T::one() / mf).ln_1p()).exp_m1() / g
        })
        .collect())
}

/// Exact `δ` as a series, re-exported for callers that need both forms.
pub fn bdf_generator(k: BdfOrder) -> LaurentSeries<Rational> {
    poly_in_s_from_bdf(k)
}
