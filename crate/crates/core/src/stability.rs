//! Stability of BDF-k convolution quadrature for `1 < α < 2`.
//!
//! The scheme is unconditionally stable below the critical order
//! `α*(k) = π / (π - ϑ_k)`, where `ϑ_k` is the A(ϑ) angle of BDF-k. Above it
//! the step must satisfy `τ^α r(A) < c(α, k)`, with `c` the distance from
//! the origin to the nearest point where `{δ(ζ)^α : |ζ| = 1}` meets the
//! negative real axis.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::BdfOrder;

/// A(ϑ)-stability angles of BDF-1 .. BDF-6, in degrees.
pub const STABILITY_ANGLES_DEG: [f64; 6] = [90.0, 90.0, 86.03, 73.35, 51.84, 17.84];

/// Default number of θ samples on `(0, π]` used to bracket crossings.
pub const DEFAULT_GRID: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityRegime {
    Unconditional,
    Conditional,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub k: BdfOrder,
    pub alpha: f64,
    pub regime: StabilityRegime,
    pub alpha_star: f64,
    pub cfl_constant: Option<f64>,
    pub tau_threshold: Option<f64>,
}

/// A point where the boundary curve meets the negative real axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub theta: f64,
    pub value: Complex64,
}

fn delta(k: BdfOrder, theta: f64) -> Complex64 {
    let s = Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -theta);
    let mut acc = Complex64::new(0.0, 0.0);
    for j in (1..=k.get()).rev() {
        acc = acc * s + 1.0 / j as f64;
    }
    acc * s
}

/// `α*(k)` from the tabulated A(ϑ) angle.
pub fn alpha_star(k: BdfOrder) -> f64 {
    let theta = STABILITY_ANGLES_DEG[k.get() - 1].to_radians();
    PI / (PI - theta)
}

/// The A(ϑ) angle recomputed as `π - max_θ arg δ(e^{-iθ})`, in degrees.
pub fn stability_angle_numeric(k: BdfOrder) -> f64 {
    let n = 200_000;
    let arg = |t: f64| delta(k, t).arg();
    let (mut best, mut at) = (f64::NEG_INFINITY, 0.0);
    for i in 1..=n {
        let t = PI * i as f64 / n as f64;
        let a = arg(t);
        if a > best {
            best = a;
            at = t;
        }
    }
    // golden-section polish on the bracketing cell
    let h = PI / n as f64;
    let (mut lo, mut hi) = ((at - h).max(1e-12), (at + h).min(PI));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if arg(a) > arg(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let peak = arg(0.5 * (lo + hi)).max(best);
    // the curve starts at arg = π/2; the angle saturates at 90°
    (PI - peak.max(PI / 2.0)).to_degrees()
}

/// Unwound `arg δ(e^{-iθ})` on the grid, continuous from `π/2` at `θ → 0⁺`.
fn unwound_arguments(k: BdfOrder, thetas: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(thetas.len());
    let mut prev = PI / 2.0;
    for &t in thetas {
        let raw = delta(k, t).arg();
        let turns = ((prev - raw) / (2.0 * PI)).round();
        let a = raw + turns * 2.0 * PI;
        out.push(a);
        prev = a;
    }
    out
}

/// All crossings of `δ(e^{-iθ})^α` with the negative real axis for
/// `θ ∈ (0, π]`, located on a grid of `grid` points and refined by
/// bisection.
pub fn crossings(alpha: f64, k: BdfOrder, grid: usize) -> Vec<Crossing> {
    let thetas: Vec<f64> = (1..=grid).map(|i| PI * i as f64 / grid as f64).collect();
    let args = unwound_arguments(k, &thetas);
    let mut out = Vec::new();
    for w in 0..grid - 1 {
        let (a0, a1) = (alpha * args[w], alpha * args[w + 1]);
        let lo_m = ((a0.min(a1) / PI - 1.0) / 2.0).ceil() as i64;
        let hi_m = ((a0.max(a1) / PI - 1.0) / 2.0).floor() as i64;
        for m in lo_m..=hi_m {
            let target = (2 * m + 1) as f64 * PI;
            if (a0 - target) * (a1 - target) > 0.0 {
                continue;
            }
            out.push(bisect(alpha, k, thetas[w], thetas[w + 1], args[w], target));
        }
    }
    out
}

fn bisect(alpha: f64, k: BdfOrder, mut lo: f64, mut hi: f64, anchor: f64, target: f64) -> Crossing {
    let phase = |t: f64| {
        let raw = delta(k, t).arg();
        let turns = ((anchor - raw) / (2.0 * PI)).round();
        alpha * (raw + turns * 2.0 * PI) - target
    };
    let f_lo = phase(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = phase(mid);
        if f_mid == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    let d = delta(k, theta);
    let value = Complex64::from_polar(d.norm().powf(alpha), phase(theta) + target);
    Crossing { theta, value }
}

/// `c(α, k)`: the smallest `|Re δ^α|` over negative-real-axis crossings,
/// or `None` when the boundary curve never reaches the axis.
pub fn cfl_constant_with_grid(alpha: f64, k: BdfOrder, grid: usize) -> Option<f64> {
    crossings(alpha, k, grid)
        .into_iter()
        .map(|c| c.value.re.abs())
        .min_by(|a, b| a.partial_cmp(b).unwrap())
}

pub fn cfl_constant(alpha: f64, k: BdfOrder) -> Option<f64> {
    cfl_constant_with_grid(alpha, k, DEFAULT_GRID)
}

/// `τ₀ = (c(α, k) / r(A))^{1/α}`, or `None` in the unconditional regime.
pub fn tau_threshold(alpha: f64, k: BdfOrder, r_a: f64) -> Option<f64> {
    if alpha < alpha_star(k) {
        return None;
    }
    cfl_constant(alpha, k).map(|c| (c / r_a).powf(1.0 / alpha))
}

/// Whether a step `τ` is admissible: always below `α*`, otherwise
/// `τ < safety · τ₀`. A crossing-free curve above the tabulated `α*`
/// (possible only within rounding of the tabulated angle) counts as
/// unconditional.
pub fn check_condition(alpha: f64, k: BdfOrder, tau: f64, r_a: f64, safety: f64) -> (bool, StabilityReport) {
    let a_star = alpha_star(k);
    let cfl = if alpha >= a_star {
        cfl_constant(alpha, k)
    } else {
        None
    };
    let tau0 = cfl.map(|c| (c / r_a).powf(1.0 / alpha));
    let report = StabilityReport {
        k,
        alpha,
        regime: if cfl.is_some() {
            StabilityRegime::Conditional
        } else {
            StabilityRegime::Unconditional
        },
        alpha_star: a_star,
        cfl_constant: cfl,
        tau_threshold: tau0,
    };
    let ok = tau0.map_or(true, |t0| tau < safety * t0);
    (ok, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(n: usize) -> BdfOrder {
        BdfOrder::new(n).unwrap()
    }

    #[test]
    fn critical_orders() {
        assert_eq!(alpha_star(k(2)), 2.0);
        let got: Vec<f64> = (3..=6).map(|n| alpha_star(k(n))).collect();
        for (g, e) in got.iter().zip([1.9155, 1.6878, 1.4045, 1.1100]) {
            assert!((g - e).abs() < 5e-4, "{g} vs {e}");
        }
    }

    #[test]
    fn tabulated_angles_agree_with_numeric_ones() {
        for n in 1..=6 {
            let num = stability_angle_numeric(k(n));
            assert!((num - STABILITY_ANGLES_DEG[n - 1]).abs() < 0.01, "k={n}: {num}");
        }
    }

    #[test]
    fn cfl_constant_anchor_point() {
        let c = cfl_constant(1.5, k(5)).unwrap();
        assert!((c - 1.58).abs() < 0.01, "{c}");
    }

    #[test]
    fn no_crossing_below_critical_order() {
        for n in 3..=6 {
            assert_eq!(cfl_constant(alpha_star(k(n)) - 0.01, k(n)), None);
        }
        assert_eq!(cfl_constant(1.99, k(2)), None);
    }

    #[test]
    fn crossings_lie_on_negative_axis() {
        for n in 3..=6 {
            for alpha in [1.2, 1.5, 1.7, 1.95] {
                for c in crossings(alpha, k(n), DEFAULT_GRID) {
                    assert!(c.value.re < 0.0);
                    assert!(c.value.im.abs() <= 1e-10, "k={n} α={alpha}: {:?}", c.value);
                }
            }
        }
    }

    #[test]
    fn conjugate_branch_has_same_modulus() {
        for theta in [0.3, 1.1, 2.7] {
            let a = delta(k(5), theta);
            let b = delta(k(5), -theta);
            assert!((a - b.conj()).norm() < 1e-15);
        }
    }

    #[test]
    fn grid_refinement_is_stable() {
        for (alpha, n) in [(1.5, 5), (1.95, 3), (1.8, 4), (1.3, 6)] {
            let a = cfl_constant_with_grid(alpha, k(n), DEFAULT_GRID).unwrap();
            let b = cfl_constant_with_grid(alpha, k(n), 2 * DEFAULT_GRID).unwrap();
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn qualitative_shape() {
        assert!(cfl_constant(1.99, k(6)).unwrap() > 0.01);
        let some_alpha_favours_bdf4 = (0..=40)
            .map(|i| 1.7 + 0.0075 * i as f64)
            .any(|a| match (cfl_constant(a, k(4)), cfl_constant(a, k(3))) {
                (Some(c4), Some(c3)) => c4 > c3,
                (Some(_), None) => false,
                _ => false,
            });
        assert!(some_alpha_favours_bdf4);
    }

    #[test]
    fn continuity_in_alpha() {
        for n in 3..=6 {
            let lo = alpha_star(k(n)) + 0.02;
            let mut prev: Option<f64> = None;
            for i in 0..50 {
                let a = lo + (1.99 - lo) * i as f64 / 49.0;
                let c = cfl_constant(a, k(n)).unwrap();
                if let Some(p) = prev {
                    assert!((c - p).abs() < 0.5, "k={n} α={a}");
                }
                prev = Some(c);
            }
        }
    }

    #[test]
    fn threshold_scaling() {
        let t1 = tau_threshold(1.5, k(5), 1.2e5).unwrap();
        let t2 = tau_threshold(1.5, k(5), 2.4e5).unwrap();
        assert!((t2 / t1 - 2f64.powf(-1.0 / 1.5)).abs() < 1e-12);
        assert!(tau_threshold(1.5, k(5), 0.0).unwrap().is_infinite());
        assert_eq!(tau_threshold(1.25, k(3), 1.2e5), None);
    }

    #[test]
    fn condition_examples() {
        assert!(check_condition(1.25, k(3), 10.0, 1e9, 1.0).0);
        let r_a = crate::fem1d::SpatialSystem::<f64>::assemble(100).unwrap().numerical_radius();
        let (ok, rep) = check_condition(1.5, k(5), 1.0 / 1700.0, r_a, 1.0);
        assert!(!ok);
        assert_eq!(rep.regime, StabilityRegime::Conditional);
        assert!(check_condition(1.5, k(5), 1.0 / 1800.0, r_a, 1.0).0);
    }
}
