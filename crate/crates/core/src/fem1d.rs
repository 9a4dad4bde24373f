//! Piecewise-linear Galerkin discretisation of `-d²/dx²` on `(0, 1)` with
//! homogeneous Dirichlet conditions on a uniform mesh.
//!
//! Unknowns live at the interior nodes `x_i = i h`, `i = 1 .. M-1`. The
//! discrete operator `A = Δ_h` satisfies `mass · A = -stiffness`.

use crate::{Error, Real, Result};

/// Symmetric tridiagonal matrix: `diag` has `n` entries, `off` has `n - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTridiagonal<T> {
    pub diag: Vec<T>,
    pub off: Vec<T>,
}

impl<T: Real> SymTridiagonal<T> {
    pub fn constant(n: usize, diag: T, off: T) -> Self {
        SymTridiagonal {
            diag: vec![diag; n],
            off: vec![off; n.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `out = self · x`.
    pub fn apply_into(&self, x: &[T], out: &mut [T]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            out[i] = acc;
        }
    }

    /// `out += c · self · x`.
    pub fn apply_add(&self, c: T, x: &[T], out: &mut [T]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            out[i] += c * acc;
        }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.apply_into(x, &mut out);
        out
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.dim();
        let mut d = vec![vec![T::zero(); n]; n];
        for i in 0..n {
            d[i][i] = self.diag[i];
            if i + 1 < n {
                d[i][i + 1] = self.off[i];
                d[i + 1][i] = self.off[i];
            }
        }
        d
    }
}

/// Nodal values at the interior nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<T>(pub Vec<T>);

impl<T: Real> GridFunction<T> {
    pub fn zeros(n: usize) -> Self {
        GridFunction(vec![T::zero(); n])
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_norm(&self) -> T {
        self.0.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialSystem<T> {
    pub m: usize,
    pub h: T,
    pub mass: SymTridiagonal<T>,
    pub stiffness: SymTridiagonal<T>,
}

/// `LDLᵀ` factor of `σ · mass + stiffness`.
#[derive(Clone, Debug)]
pub struct ShiftedFactor<T> {
    pub sigma: T,
    lower: Vec<T>,
    pivots: Vec<T>,
}

impl<T: Real> ShiftedFactor<T> {
    pub fn solve_in_place(&self, rhs: &mut [T]) {
        let n = self.pivots.len();
        for i in 1..n {
            let prev = rhs[i - 1];
            rhs[i] -= self.lower[i - 1] * prev;
        }
        for i in 0..n {
            rhs[i] /= self.pivots[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            let next = rhs[i + 1];
            rhs[i] -= self.lower[i] * next;
        }
    }
}

const GAUSS3_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS3_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

impl<T: Real> SpatialSystem<T> {
    pub fn assemble(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidMesh(m));
        }
        let n = m - 1;
        let h = T::one() / T::from_usize_lossy(m);
        let six = T::lit(6.0);
        let mass = SymTridiagonal::constant(n, T::lit(4.0) * h / six, h / six);
        let stiffness = SymTridiagonal::constant(n, T::lit(2.0) / h, -T::one() / h);
        Ok(SpatialSystem {
            m,
            h,
            mass,
            stiffness,
        })
    }

    /// Number of unknowns, `M - 1`.
    pub fn dim(&self) -> usize {
        self.m - 1
    }

    pub fn nodes(&self) -> Vec<T> {
        (1..self.m)
            .map(|i| T::from_usize_lossy(i) * self.h)
            .collect()
    }

    /// Eigenvalues of `Δ_h` in increasing magnitude:
    /// `λ_j = λ̄_j / (1 + h² λ̄_j / 6)`, `λ̄_j = -(4/h²) sin²(π j / (2M))`.
    pub fn eigenvalues(&self) -> Vec<T> {
        let h2 = self.h * self.h;
        let two_m = T::from_usize_lossy(2 * self.m);
        (1..self.m)
            .map(|j| {
                let s = (T::PI() * T::from_usize_lossy(j) / two_m).sin();
                let bar = -T::lit(4.0) / h2 * s * s;
                bar / (T::one() + h2 * bar / T::lit(6.0))
            })
            .collect()
    }

    /// Euclidean size of the coefficients `c_j = (2/M) Σ_i u_i sin(π j i / M)`
    /// for `j ≥ first`. The sines are the exact eigenvectors of `Δ_h` on a
    /// uniform mesh, so this isolates the oscillatory end of the spectrum.
    pub fn high_mode_amplitude(&self, u: &[T], first: usize) -> T {
        let two_m = 2 * self.m;
        let table: Vec<T> = (0..two_m)
            .map(|r| (T::PI() * T::from_usize_lossy(r) / T::from_usize_lossy(self.m)).sin())
            .collect();
        let scale = T::lit(2.0) / T::from_usize_lossy(self.m);
        let mut sum = T::zero();
        for j in first.max(1)..self.m {
            let c = u
                .iter()
                .enumerate()
                .fold(T::zero(), |acc, (i, &x)| acc + x * table[(j * (i + 1)) % two_m]);
            sum += (c * scale) * (c * scale);
        }
        sum.sqrt()
    }

    /// `r(A) = max_j |λ_j|`.
    pub fn numerical_radius(&self) -> T {
        self.eigenvalues()
            .into_iter()
            .fold(T::zero(), |m, l| m.max(l.abs()))
    }

    /// Factor `σ · mass + stiffness` once for repeated solves.
    pub fn factor_shifted(&self, sigma: T) -> ShiftedFactor<T> {
        let n = self.dim();
        let mut pivots = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n.saturating_sub(1));
        pivots.push(sigma * self.mass.diag[0] + self.stiffness.diag[0]);
        for i in 1..n {
            let e = sigma * self.mass.off[i - 1] + self.stiffness.off[i - 1];
            let l = e / pivots[i - 1];
            lower.push(l);
            pivots.push(sigma * self.mass.diag[i] + self.stiffness.diag[i] - l * e);
        }
        ShiftedFactor {
            sigma,
            lower,
            pivots,
        }
    }

    /// `stiffness · x` in flux form, `((x_i - x_{i-1}) - (x_{i+1} - x_i)) / h`
    /// with zero boundary values.
    ///
    /// On smooth `x` the rows of the assembled matrix cancel from entries of
    /// size `2/h` down to `O(h)`; differencing neighbours first keeps the
    /// relative accuracy of the result instead.
    pub fn apply_stiffness_into(&self, x: &[T], out: &mut [T]) {
        let n = x.len();
        let inv_h = T::one() / self.h;
        for i in 0..n {
            let left = if i > 0 { x[i] - x[i - 1] } else { x[i] };
            let right = if i + 1 < n { x[i] - x[i + 1] } else { x[i] };
            out[i] = (left + right) * inv_h;
        }
    }

    pub fn apply_stiffness(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); x.len()];
        self.apply_stiffness_into(x, &mut out);
        out
    }

    /// Solve `(σ · mass + stiffness) u = rhs` in place with two sweeps of
    /// iterative refinement, residuals taken with the flux-form stiffness.
    ///
    /// The factor carries entries of size `2/h` rounded to working
    /// precision, which perturbs the smooth part of the solution by about
    /// `ε / h²`; refinement removes that.
    pub fn solve_refined(&self, factor: &ShiftedFactor<T>, rhs: &mut [T], scratch: &mut [T]) {
        let n = rhs.len();
        let target = scratch;
        target.copy_from_slice(rhs);
        factor.solve_in_place(rhs);
        let mut residual = vec![T::zero(); n];
        for _ in 0..2 {
            self.apply_stiffness_into(rhs, &mut residual);
            self.mass.apply_add(factor.sigma, rhs, &mut residual);
            for (r, b) in residual.iter_mut().zip(target.iter()) {
                *r = *b - *r;
            }
            factor.solve_in_place(&mut residual);
            for (x, d) in rhs.iter_mut().zip(&residual) {
                *x += *d;
            }
        }
    }

    /// Solve `(σ · mass + stiffness) u = rhs`.
    pub fn solve_shifted(&self, sigma: T, rhs: &[T]) -> Result<GridFunction<T>> {
        self.check_len(rhs.len())?;
        let mut u = rhs.to_vec();
        self.factor_shifted(sigma).solve_in_place(&mut u);
        Ok(GridFunction(u))
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            })
        }
    }

    /// `sqrt(uᵀ · mass · u)`.
    pub fn l2_norm(&self, u: &[T]) -> T {
        let mu = self.mass.apply(u);
        u.iter().zip(&mu).map(|(a, b)| *a * *b).sum::<T>().sqrt()
    }

    pub fn interpolate(&self, f: impl Fn(T) -> T) -> GridFunction<T> {
        GridFunction(self.nodes().into_iter().map(f).collect())
    }

    /// Load vector `∫ f φ_i dx` by three-point Gauss quadrature on each
    /// element, splitting elements at the given interior breakpoints of `f`.
    pub fn project_load(&self, f: impl Fn(T) -> T, breakpoints: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut load = vec![T::zero(); n];
        let nodes: Vec<T> = GAUSS3_NODES.iter().map(|x| T::lit(*x)).collect();
        let weights: Vec<T> = GAUSS3_WEIGHTS.iter().map(|x| T::lit(*x)).collect();
        let half = T::lit(0.5);
        for e in 0..self.m {
            let xl = T::from_usize_lossy(e) * self.h;
            let xr = T::from_usize_lossy(e + 1) * self.h;
            let mut cuts = vec![xl];
            cuts.extend(breakpoints.iter().copied().filter(|b| *b > xl && *b < xr));
            cuts.push(xr);
            let (mut left, mut right) = (T::zero(), T::zero());
            for seg in cuts.windows(2) {
                let (a, b) = (seg[0], seg[1]);
                let mid = half * (a + b);
                let rad = half * (b - a);
                for (q, w) in nodes.iter().zip(&weights) {
                    let x = mid + rad * *q;
                    let fx = f(x) * *w * rad;
                    let phi_r = (x - xl) / self.h;
                    left += fx * (T::one() - phi_r);
                    right += fx * phi_r;
                }
            }
            // element e spans nodes e and e+1; interior index is node - 1
            if e >= 1 {
                load[e - 1] += left;
            }
            if e + 1 < self.m {
                load[e] += right;
            }
        }
        load
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn dense(t: &SymTridiagonal<f64>) -> DMatrix<f64> {
        let d = t.to_dense();
        DMatrix::from_fn(t.dim(), t.dim(), |i, j| d[i][j])
    }

    /// Generalised eigenvalues of `(-stiffness, mass)` via `L⁻¹ S L⁻ᵀ`.
    fn dense_eigenvalues(sys: &SpatialSystem<f64>) -> Vec<f64> {
        let chol = dense(&sys.mass).cholesky().unwrap();
        let l = chol.l();
        let linv = l.clone().try_inverse().unwrap();
        let sym = &linv * dense(&sys.stiffness) * linv.transpose();
        let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().map(|x| -x).collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev
    }

    #[test]
    fn assembly_small_meshes() {
        let s = SpatialSystem::<f64>::assemble(2).unwrap();
        assert_eq!(s.h, 0.5);
        assert_relative_eq!(s.mass.diag[0], 1.0 / 3.0);
        assert_eq!(s.stiffness.diag, vec![4.0]);
        let s = SpatialSystem::<f64>::assemble(4).unwrap();
        assert_eq!(s.stiffness.diag, vec![8.0; 3]);
        assert_eq!(s.stiffness.off, vec![-4.0; 2]);
        assert!(matches!(SpatialSystem::<f64>::assemble(1), Err(Error::InvalidMesh(1))));
        assert!(matches!(SpatialSystem::<f64>::assemble(0), Err(Error::InvalidMesh(0))));
    }

    #[test]
    fn symmetric_with_vanishing_stiffness_row_sums() {
        let s = SpatialSystem::<f64>::assemble(10).unwrap();
        for t in [&s.mass, &s.stiffness] {
            let d = dense(t);
            assert_eq!(d, d.transpose());
        }
        let ones = vec![1.0; s.dim()];
        let sr = s.stiffness.apply(&ones);
        let mr = s.mass.apply(&ones);
        for i in 1..s.dim() - 1 {
            assert!(sr[i].abs() <= 1e-14);
            assert_relative_eq!(mr[i], s.h, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_interior_node_eigenvalue() {
        let s = SpatialSystem::<f64>::assemble(2).unwrap();
        let ev = s.eigenvalues();
        // direct: -stiffness / mass = -4 / (1/3)
        assert_relative_eq!(ev[0], -12.0, epsilon = 1e-13);
        assert_relative_eq!(s.numerical_radius(), 12.0, epsilon = 1e-13);
    }

    #[test]
    fn closed_form_eigenvalues_match_dense_oracle() {
        for m in 2..=16 {
            let s = SpatialSystem::<f64>::assemble(m).unwrap();
            let mut ev = s.eigenvalues();
            ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let oracle = dense_eigenvalues(&s);
            for (a, b) in ev.iter().zip(&oracle) {
                assert!(((a - b) / b).abs() <= 1e-10, "M={m}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn eigenvalues_negative_and_monotone() {
        let s = SpatialSystem::<f64>::assemble(100).unwrap();
        let ev = s.eigenvalues();
        assert!(ev.iter().all(|l| *l < 0.0));
        assert!(ev.windows(2).all(|w| w[1] < w[0]));
        let r = s.numerical_radius();
        assert!((1.1e5..1.3e5).contains(&r), "{r}");
    }

    #[test]
    fn numerical_radius_scales_like_twelve_over_h_squared() {
        let mut prev = f64::INFINITY;
        for m in [100, 1000, 10000] {
            let s = SpatialSystem::<f64>::assemble(m).unwrap();
            let gap = (s.numerical_radius() * s.h * s.h - 12.0).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn shifted_solve_matches_dense_lu() {
        let s = SpatialSystem::<f64>::assemble(8).unwrap();
        let sigma = 3.7;
        let rhs: Vec<f64> = (0..s.dim()).map(|i| (i as f64 * 0.7).sin() + 0.3).collect();
        let u = s.solve_shifted(sigma, &rhs).unwrap();
        let a = dense(&s.mass) * sigma + dense(&s.stiffness);
        let oracle = a.lu().solve(&DVector::from_vec(rhs)).unwrap();
        for (x, y) in u.values().iter().zip(oracle.iter()) {
            assert!((x - y).abs() <= 1e-13 * y.abs().max(1.0));
        }
    }

    #[test]
    fn shifted_solve_trivial_and_mass_dominated() {
        let s = SpatialSystem::<f64>::assemble(100).unwrap();
        assert_eq!(s.solve_shifted(1.0, &vec![0.0; 99]).unwrap().0, vec![0.0; 99]);
        let sigma = 1e10;
        let rhs = s.project_load(|x| (std::f64::consts::PI * x).sin(), &[]);
        let u = s.solve_shifted(sigma, &rhs).unwrap();
        for i in 2..s.dim() - 2 {
            assert_relative_eq!(u.0[i], rhs[i] / (sigma * s.h), max_relative = 1e-3);
        }
        assert!(matches!(
            s.solve_shifted(1.0, &[1.0]),
            Err(Error::DimensionMismatch { expected: 99, got: 1 })
        ));
    }

    #[test]
    fn l2_norm_of_sine_interpolant() {
        let s = SpatialSystem::<f64>::assemble(100).unwrap();
        let u = s.interpolate(|x| (std::f64::consts::PI * x).sin());
        assert!((s.l2_norm(u.values()) - 0.5f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn load_of_constant_and_indicator() {
        let s = SpatialSystem::<f64>::assemble(10).unwrap();
        for v in s.project_load(|_| 1.0, &[]) {
            assert_relative_eq!(v, s.h, epsilon = 1e-15);
        }
        // χ on (0, 1/2): node 5 sits on the jump and sees half its hat
        let chi = |x: f64| if x < 0.5 { 1.0 } else { 0.0 };
        let load = s.project_load(chi, &[0.5]);
        for (i, v) in load.iter().enumerate() {
            let expect = match i + 1 {
                1..=4 => s.h,
                5 => s.h / 2.0,
                _ => 0.0,
            };
            assert_relative_eq!(*v, expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn load_splits_elements_at_breakpoints() {
        // odd M: x = 1/2 is the midpoint of element 4 on M = 9
        let s = SpatialSystem::<f64>::assemble(9).unwrap();
        let h = s.h;
        let chi = |x: f64| if x < 0.5 { 1.0 } else { 0.0 };
        let load = s.project_load(chi, &[0.5]);
        // node 4 (x = 4h): full left half-hat plus ∫_{4h}^{1/2} (1 - (x-4h)/h)
        let d = 0.5 - 4.0 * h;
        assert_relative_eq!(load[3], h / 2.0 + d - d * d / (2.0 * h), epsilon = 1e-15);
        // node 5 (x = 5h): ∫_{4h}^{1/2} (x-4h)/h
        assert_relative_eq!(load[4], d * d / (2.0 * h), epsilon = 1e-15);
        assert_relative_eq!(load[5], 0.0);
    }

    #[test]
    fn load_is_exact_for_quadratics() {
        let s = SpatialSystem::<f64>::assemble(6).unwrap();
        let h = s.h;
        let load = s.project_load(|x| x * x, &[]);
        for (i, v) in load.iter().enumerate() {
            let xi = (i + 1) as f64 * h;
            // ∫ x² φ_i = h (xi² + h²/6)
            assert_relative_eq!(*v, h * (xi * xi + h * h / 6.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn single_precision_assembly() {
        let s = SpatialSystem::<f32>::assemble(8).unwrap();
        let u = s.solve_shifted(2.0, &[1.0; 7]).unwrap();
        let r = {
            let mut a = s.mass.apply(u.values());
            a.iter_mut().for_each(|x| *x *= 2.0);
            s.stiffness.apply_add(1.0, u.values(), &mut a);
            a
        };
        assert!(r.iter().all(|x| (x - 1.0).abs() < 1e-5));
    }

    proptest! {
        #[test]
        fn manufactured_solutions_are_recovered(
            m in 2usize..40,
            sigma in 1e-3f64..1e6,
            seed in proptest::collection::vec(-1.0f64..1.0, 40),
        ) {
            let s = SpatialSystem::<f64>::assemble(m).unwrap();
            let u: Vec<f64> = seed[..s.dim()].to_vec();
            let mut rhs = s.mass.apply(&u);
            rhs.iter_mut().for_each(|x| *x *= sigma);
            s.stiffness.apply_add(1.0, &u, &mut rhs);
            let got = s.solve_shifted(sigma, &rhs).unwrap();
            let mut res = s.mass.apply(got.values());
            res.iter_mut().for_each(|x| *x *= sigma);
            s.stiffness.apply_add(1.0, got.values(), &mut res);
            let scale = rhs.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
            for (a, b) in res.iter().zip(&rhs) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn high_mode_amplitude_isolates_sine_modes() {
        let sys = SpatialSystem::<f64>::assemble(10).unwrap();
        let mode = |j: f64| -> Vec<f64> {
            (1..10).map(|i| (std::f64::consts::PI * j * i as f64 / 10.0).sin()).collect()
        };
        let u: Vec<f64> = mode(7.0).iter().zip(mode(2.0)).map(|(a, b)| 0.5 * a + 3.0 * b).collect();
        assert_relative_eq!(sys.high_mode_amplitude(&u, 5), 0.5, epsilon = 1e-14);
        assert_relative_eq!(sys.high_mode_amplitude(&u, 1), (0.25f64 + 9.0).sqrt(), epsilon = 1e-14);
        assert!(sys.high_mode_amplitude(&u, 8) < 1e-14);
    }
}
