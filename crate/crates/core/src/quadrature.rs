//! Adaptive Gauss–Kronrod (7, 15) quadrature for vector-valued integrands.

use crate::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5 and the centre
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_depth: u32,
    /// Cap on the number of panels evaluated, whatever the depth.
    pub max_panels: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-13,
            rel: 1e-13,
            max_depth: 40,
            max_panels: 2000,
        }
    }
}

fn gk15<T: Real>(f: &impl Fn(T) -> Vec<T>, a: T, b: T) -> (Vec<T>, T) {
    let half = T::lit(0.5);
    let c = half * (a + b);
    let r = half * (b - a);
    let fc = f(c);
    let mut kron: Vec<T> = fc.iter().map(|v| *v * T::lit(WGK[7])).collect();
    let mut gauss: Vec<T> = fc.iter().map(|v| *v * T::lit(WG[3])).collect();
    for i in 0..7 {
        let dx = r * T::lit(XGK[i]);
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        for j in 0..kron.len() {
            let s = f1[j] + f2[j];
            kron[j] += T::lit(WGK[i]) * s;
            if i % 2 == 1 {
                gauss[j] += T::lit(WG[i / 2]) * s;
            }
        }
    }
    let mut err = T::zero();
    for j in 0..kron.len() {
        kron[j] *= r;
        err = err.max((kron[j] - gauss[j] * r).abs());
    }
    (kron, err)
}

/// `∫_a^b f(t) dt` componentwise, bisecting until the Kronrod–Gauss
/// difference of every panel is below its share of the tolerance.
pub fn integrate<T: Real>(f: impl Fn(T) -> Vec<T>, a: T, b: T, tol: Tolerance) -> Vec<T> {
    let (whole, err) = gk15(&f, a, b);
    let scale = whole.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    // below a few ulps of the result the error estimate is rounding noise
    let floor = T::lit(16.0) * T::epsilon() * scale;
    let target = T::lit(tol.abs).max(T::lit(tol.rel) * scale).max(floor);
    if err <= target {
        return whole;
    }
    let mut acc = vec![T::zero(); whole.len()];
    let mut budget = tol.max_panels;
    refine(&f, a, b, target, b - a, tol.max_depth, &mut budget, &mut acc);
    acc
}

fn refine<T: Real>(
    f: &impl Fn(T) -> Vec<T>,
    a: T,
    b: T,
    target: T,
    total: T,
    depth: u32,
    budget: &mut usize,
    acc: &mut [T],
) {
    let (val, err) = gk15(f, a, b);
    *budget = budget.saturating_sub(1);
    if depth == 0 || *budget == 0 || err <= target * (b - a) / total {
        acc.iter_mut().zip(val).for_each(|(s, v)| *s += v);
        return;
    }
    let mid = T::lit(0.5) * (a + b);
    refine(f, a, mid, target, total, depth - 1, budget, acc);
    refine(f, mid, b, target, total, depth - 1, budget, acc);
}
