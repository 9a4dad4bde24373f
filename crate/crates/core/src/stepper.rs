//! Time stepping for `∂_t^α (u - v [- t b]) - A u = f` on the FEM space.
//!
//! Every engine works with the shifted unknown `W = U - v` (subdiffusion)
//! or `W = U - v - t b` (diffusion-wave), so `W^0 = 0` and the history
//! convolution needs no starting term. Data enter in weak form:
//! `A v` becomes `-stiffness · v_h` and sources become load vectors.

use std::sync::Arc;

use serde::Serialize;

use crate::correction::{CorrectionSet, Regime};
use crate::cq_weights::{bdf_difference_weights, cq_partial_sums, cq_weights, l1_partial_sums, l1_weights};
use crate::fem1d::{GridFunction, ShiftedFactor, SpatialSystem};
use crate::quadrature::{self, Tolerance};
use crate::stability::{check_condition, StabilityReport};
use crate::{BdfOrder, Error, Field, Rational, Real, Result};

/// `x ↦ value`.
pub type SpaceFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;
/// `(x, t) ↦ value`.
pub type SpaceTimeFn<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

#[derive(Clone)]
pub struct ProblemSpec<T> {
    pub regime: Regime,
    pub alpha: T,
    pub final_time: T,
    pub v: SpaceFn<T>,
    /// Initial velocity; diffusion-wave only.
    pub b_init: Option<SpaceFn<T>>,
    /// Source; `None` means `f ≡ 0`.
    pub f: Option<SpaceTimeFn<T>>,
    /// `g = ∫_0^t f`, diffusion-wave only; computed by quadrature if absent.
    pub g: Option<SpaceTimeFn<T>>,
    /// `f_time_derivs[i] = ∂_t^{i+1} f(·, 0)`.
    pub f_time_derivs: Vec<SpaceFn<T>>,
    /// Points in `(0, 1)` where the data jump.
    pub breakpoints: Vec<T>,
}

impl<T: Real> ProblemSpec<T> {
    /// Zero data in the given regime.
    pub fn zero(regime: Regime, alpha: T) -> Self {
        ProblemSpec {
            regime,
            alpha,
            final_time: T::one(),
            v: Arc::new(|_| T::zero()),
            b_init: None,
            f: None,
            g: None,
            f_time_derivs: Vec::new(),
            breakpoints: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = match self.regime {
            Regime::Subdiffusion => (0.0, 1.0),
            Regime::DiffusionWave => (1.0, 2.0),
        };
        let a = self.alpha.as_f64();
        if !(a > lo && a < hi) {
            return Err(Error::AlphaOutOfRange { alpha: a, lo, hi });
        }
        if !(self.final_time > T::zero()) {
            return Err(Error::Config("final time must be positive".into()));
        }
        if self.regime == Regime::Subdiffusion && (self.b_init.is_some() || self.g.is_some()) {
            return Err(Error::Config(
                "initial velocity and antiderivative g apply to the diffusion-wave regime only".into(),
            ));
        }
        if let Some(g) = &self.g {
            let probe = [T::lit(0.1), T::lit(0.5), T::lit(0.9)];
            if probe.iter().any(|x| g(*x, T::zero()) != T::zero()) {
                return Err(Error::Config("g(·, 0) must vanish".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Corrected,
    Uncorrected,
    L1,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Corrected => "corrected",
            Scheme::Uncorrected => "uncorrected",
            Scheme::L1 => "l1",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "corrected" => Ok(Scheme::Corrected),
            "uncorrected" => Ok(Scheme::Uncorrected),
            "l1" => Ok(Scheme::L1),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub k: BdfOrder,
    pub steps: usize,
    pub scheme: Scheme,
    /// Replace missing `∂_t^ℓ f(0)` by one-sided differences.
    pub fd_fallback: bool,
    pub override_stability: bool,
    pub stability_safety: f64,
    /// Keep `U^n` whenever `n` is a multiple of this stride.
    pub snapshot_every: Option<usize>,
    /// A run is flagged unstable once `‖U^n‖_∞` exceeds this multiple of
    /// the data scale.
    pub blowup_factor: f64,
    /// A run is also flagged unstable once the share of the top quarter of
    /// the discrete spectrum, relative to `‖U^n‖_∞`, grows by this factor
    /// over its largest value during the first `k` steps. Near the step-size
    /// threshold the unstable band grows too slowly to move the max norm by
    /// `t = 1`.
    pub growth_factor: f64,
}

impl SolverOptions {
    pub fn new(k: BdfOrder, steps: usize) -> Self {
        SolverOptions {
            k,
            steps,
            scheme: Scheme::Corrected,
            fd_fallback: false,
            override_stability: false,
            stability_safety: 1.0,
            snapshot_every: None,
            blowup_factor: 1e3,
            growth_factor: 1e3,
        }
    }

    pub fn scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }
}

/// Starting-step correction coefficients in working precision.
/// `b[ℓ-1][n-1] = b_{ℓ,n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct StartCorrection<T> {
    pub a: Vec<T>,
    pub b: Vec<Vec<T>>,
    pub c: Vec<T>,
}

impl<T: Real> StartCorrection<T> {
    pub fn from_exact<F: Field>(set: &CorrectionSet<F>) -> Self {
        let conv = |v: &[F]| v.iter().map(T::from_exact).collect::<Vec<T>>();
        StartCorrection {
            a: conv(&set.a),
            b: set.b.iter().map(|r| conv(r)).collect(),
            c: conv(&set.c),
        }
    }

    pub fn none() -> Self {
        StartCorrection {
            a: Vec::new(),
            b: Vec::new(),
            c: Vec::new(),
        }
    }

    /// Same shape with every entry zero.
    pub fn zeroed(&self) -> Self {
        let z = |v: &[T]| vec![T::zero(); v.len()];
        StartCorrection {
            a: z(&self.a),
            b: self.b.iter().map(|r| z(r)).collect(),
            c: z(&self.c),
        }
    }

    fn a_at(&self, n: usize) -> T {
        self.a.get(n.wrapping_sub(1)).copied().unwrap_or_else(T::zero)
    }

    fn c_at(&self, n: usize) -> T {
        self.c.get(n.wrapping_sub(1)).copied().unwrap_or_else(T::zero)
    }

    fn b_at(&self, ell: usize, n: usize) -> T {
        self.b
            .get(ell.wrapping_sub(1))
            .and_then(|r| r.get(n.wrapping_sub(1)))
            .copied()
            .unwrap_or_else(T::zero)
    }
}

/// Weights `w_0 .. w_order-1` with `Σ_i w_i φ(i τ) ≈ τ^ℓ φ^{(ℓ)}(0)` exact
/// for polynomials of degree `< nodes`, using nodes `0, 1, .., nodes-1`.
pub fn forward_difference_weights<F: Field>(ell: usize, nodes: usize) -> Vec<F> {
    // Fornberg's recursion at x0 = 0 on the nodes 0, 1, .., nodes-1
    let mut c = vec![vec![F::zero(); ell + 1]; nodes];
    c[0][0] = F::one();
    let mut c1 = F::one();
    for i in 1..nodes {
        let mn = i.min(ell);
        let mut c2 = F::one();
        let c4 = F::int(i as i64);
        let c5 = F::int(i as i64 - 1);
        for j in 0..i {
            let c3 = F::int((i - j) as i64);
            c2 = c2 * c3.clone();
            if j == i - 1 {
                for m in (1..=mn).rev() {
                    c[i][m] = c1.clone()
                        * (F::int(m as i64) * c[i - 1][m - 1].clone() - c5.clone() * c[i - 1][m].clone())
                        / c2.clone();
                }
                c[i][0] = -(c1.clone() * c5.clone() * c[i - 1][0].clone()) / c2.clone();
            }
            for m in (1..=mn).rev() {
                c[j][m] = (c4.clone() * c[j][m].clone() - F::int(m as i64) * c[j][m - 1].clone()) / c3.clone();
            }
            c[j][0] = c4.clone() * c[j][0].clone() / c3.clone();
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[ell].clone()).collect()
}

/// `∂_t^ℓ f(·, 0)` as a load vector from samples at `t_0 .. t_{k-2}`,
/// accurate to order `k - ℓ - 1`.
pub fn finite_difference_f_derivs<T: Real>(samples: &[Vec<T>], ell: usize, k: BdfOrder, tau: T) -> Result<Vec<T>> {
    let nodes = k.get().saturating_sub(1).max(ell + 1);
    if samples.len() < nodes {
        return Err(Error::DimensionMismatch {
            expected: nodes,
            got: samples.len(),
        });
    }
    let w: Vec<T> = forward_difference_weights::<Rational>(ell, nodes)
        .iter()
        .map(T::from_exact)
        .collect();
    let scale = tau.powi(-(ell as i32));
    let dim = samples[0].len();
    Ok((0..dim)
        .map(|i| scale * w.iter().zip(samples).map(|(wj, s)| *wj * s[i]).sum::<T>())
        .collect())
}

#[derive(Clone, Debug)]
pub struct RunOutcome<T> {
    pub steps: usize,
    pub tau: T,
    pub final_solution: GridFunction<T>,
    /// `(n, U^n)` at the requested stride, `n = 0` included.
    pub snapshots: Vec<(usize, GridFunction<T>)>,
    pub max_norm: T,
    /// First step at which the blow-up threshold was exceeded.
    pub blowup_step: Option<usize>,
    /// First checked step at which the high-frequency growth threshold was
    /// exceeded.
    pub growth_step: Option<usize>,
    pub stability: Option<StabilityReport>,
}

impl<T: Real> RunOutcome<T> {
    pub fn is_stable(&self) -> bool {
        self.blowup_step.is_none()
            && self.growth_step.is_none()
            && self.final_solution.0.iter().all(|x| x.is_finite())
    }
}

pub struct SolverRun<'a, T: Real> {
    spec: &'a ProblemSpec<T>,
    sys: &'a SpatialSystem<T>,
    opts: SolverOptions,
    tau: T,
    /// τ-free convolution weights.
    weights: Vec<T>,
    /// `partial_sums[m] = Σ_{j≤m} weights[j]`, the kernel acting on increments.
    partial_sums: Vec<T>,
    /// `τ^{-α}`.
    scale: T,
    factor: ShiftedFactor<T>,
    corrections: StartCorrection<T>,
    v_h: Vec<T>,
    b_h: Vec<T>,
    stiff_v: Vec<T>,
    stiff_b: Vec<T>,
    load_f0: Vec<T>,
    /// `deriv_loads[j]` is the load of `∂_t^{j} f(·, 0)`, `j ≥ 1`; index 0
    /// holds `f(·, 0)` itself.
    deriv_loads: Vec<Vec<T>>,
    /// `g_increments[m]` is the load of `g(·, t_m) - g(·, t_{m-1})`.
    g_increments: Vec<Vec<T>>,
    /// Partial sums of the BDF difference weights, `P_r = Σ_{j≤r} p_j`.
    bdf_partial: Vec<T>,
    /// `W^m` rounded, for inspection.
    history: Vec<T>,
    /// `D^m = W^m - W^{m-1}` for `m ≥ 1`; the memory term is evaluated on
    /// these because rounding a stored state of size `|W|` acts, for
    /// `α > 1`, like a velocity kick of size `ε|W|/τ`.
    increments: Vec<T>,
    /// `W^n` as an unevaluated sum `w_hi + w_lo`.
    w_hi: Vec<T>,
    w_lo: Vec<T>,
    n: usize,
    data_scale: T,
    max_norm: T,
    blowup_step: Option<usize>,
    /// Largest high-mode share over steps `0..=k`.
    high_mode_ref: T,
    growth_step: Option<usize>,
    stability: Option<StabilityReport>,
    snapshots: Vec<(usize, GridFunction<T>)>,
    conv: Vec<T>,
    scratch: Vec<T>,
    rhs: Vec<T>,
}

impl<'a, T: Real> SolverRun<'a, T> {
    pub fn new(spec: &'a ProblemSpec<T>, sys: &'a SpatialSystem<T>, opts: SolverOptions) -> Result<Self> {
        spec.validate()?;
        if opts.steps == 0 {
            return Err(Error::Config("number of time steps must be positive".into()));
        }
        let k = opts.k;
        let tau = spec.final_time / T::from_usize_lossy(opts.steps);
        let alpha = spec.alpha;
        let count = opts.steps + 1;
        let (weights, partial_sums) = match opts.scheme {
            Scheme::L1 => {
                if spec.regime == Regime::DiffusionWave {
                    return Err(Error::UnsupportedScheme(
                        "the L1 scheme covers the subdiffusion regime only".into(),
                    ));
                }
                (l1_weights(alpha, count)?, l1_partial_sums(alpha, count)?)
            }
            _ => (cq_weights(alpha, k, count)?.weights, cq_partial_sums(alpha, k, count)?),
        };
        let mut stability = None;
        if spec.regime == Regime::DiffusionWave {
            let r_a = sys.numerical_radius().as_f64();
            let (ok, report) = check_condition(alpha.as_f64(), k, tau.as_f64(), r_a, opts.stability_safety);
            if !ok && !opts.override_stability {
                return Err(Error::StabilityRefused {
                    tau: tau.as_f64(),
                    tau0: report.tau_threshold.unwrap_or(f64::NAN),
                });
            }
            stability = Some(report);
        }
        let corrections = match opts.scheme {
            Scheme::Corrected => StartCorrection::from_exact(&CorrectionSet::<Rational>::derive(k, spec.regime)?),
            _ => StartCorrection::none(),
        };
        let scale = tau.powf(-alpha);
        let factor = sys.factor_shifted(weights[0] * scale);
        let dim = sys.dim();
        let v_h = sys.interpolate(|x| (spec.v)(x)).0;
        let b_h = match &spec.b_init {
            Some(b) => sys.interpolate(|x| b(x)).0,
            None => vec![T::zero(); dim],
        };
        let stiff_v = sys.apply_stiffness(&v_h);
        let stiff_b = sys.apply_stiffness(&b_h);
        let load_at = |t: T| -> Vec<T> {
            match &spec.f {
                Some(f) => sys.project_load(|x| f(x, t), &spec.breakpoints),
                None => vec![T::zero(); dim],
            }
        };
        let load_f0 = load_at(T::zero());

        let needed = match (opts.scheme, spec.regime) {
            (Scheme::Corrected, Regime::Subdiffusion) => k.get().saturating_sub(2),
            (Scheme::Corrected, Regime::DiffusionWave) => k.get().saturating_sub(3),
            _ => 0,
        };
        let mut deriv_loads = vec![load_f0.clone()];
        for ell in 1..=needed {
            let load = if spec.f.is_none() {
                vec![T::zero(); dim]
            } else if let Some(d) = spec.f_time_derivs.get(ell - 1) {
                sys.project_load(|x| d(x), &spec.breakpoints)
            } else if opts.fd_fallback {
                let nodes = k.get().saturating_sub(1).max(ell + 1);
                let samples: Vec<Vec<T>> = (0..nodes)
                    .map(|i| load_at(T::from_usize_lossy(i) * tau))
                    .collect();
                finite_difference_f_derivs(&samples, ell, k, tau)?
            } else {
                return Err(Error::Config(format!(
                    "time derivative of order {ell} of f at t = 0 is required for k = {k}; \
                     supply it or enable the finite-difference fallback"
                )));
            };
            deriv_loads.push(load);
        }

        let bdf_partial: Vec<T> = bdf_difference_weights::<T>(k)
            .p
            .iter()
            .scan(T::zero(), |acc, p| {
                *acc += *p;
                Some(*acc)
            })
            .collect();
        let data_scale = [&v_h, &b_h]
            .iter()
            .flat_map(|v| v.iter())
            .fold(T::zero(), |m, x| m.max(x.abs()));
        let opts_steps_dim = opts.steps * dim;
        let mut history = Vec::with_capacity(count * dim);
        history.extend(std::iter::repeat(T::zero()).take(dim));
        let mut run = SolverRun {
            spec,
            sys,
            opts,
            tau,
            weights,
            partial_sums,
            scale,
            factor,
            corrections,
            v_h,
            b_h,
            stiff_v,
            stiff_b,
            load_f0,
            deriv_loads,
            g_increments: vec![vec![T::zero(); dim]],
            bdf_partial,
            history,
            increments: Vec::with_capacity(opts_steps_dim),
            w_hi: vec![T::zero(); dim],
            w_lo: vec![T::zero(); dim],
            n: 0,
            data_scale,
            max_norm: T::zero(),
            blowup_step: None,
            high_mode_ref: T::zero(),
            growth_step: None,
            stability,
            snapshots: Vec::new(),
            conv: vec![T::zero(); dim],
            scratch: vec![T::zero(); dim],
            rhs: vec![T::zero(); dim],
        };
        run.max_norm = run.current_solution().max_norm();
        run.high_mode_ref = run.high_mode_share(&run.current_solution());
        if run.opts.snapshot_every.is_some() {
            run.snapshots.push((0, run.current_solution()));
        }
        Ok(run)
    }

    /// Replace the starting corrections (same shape expected).
    pub fn with_corrections(mut self, corrections: StartCorrection<T>) -> Self {
        self.corrections = corrections;
        self
    }

    pub fn corrections(&self) -> &StartCorrection<T> {
        &self.corrections
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn step_index(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `σ_m = Σ_{j≤m} b_j`.
    pub fn partial_sums(&self) -> &[T] {
        &self.partial_sums
    }

    pub fn stability(&self) -> Option<&StabilityReport> {
        self.stability.as_ref()
    }

    /// `D^m = W^m - W^{m-1}` for `1 ≤ m ≤ n`, as solved for.
    pub fn increment(&self, m: usize) -> &[T] {
        let d = self.sys.dim();
        &self.increments[(m - 1) * d..m * d]
    }

    /// The memory sum `Σ_{j=1}^{n-1} σ_j D^{n-j}` entering step `n`.
    pub fn memory_convolution(&mut self, n: usize) -> &[T] {
        self.history_convolution(n);
        &self.conv
    }

    /// `W^m` for `m ≤ n`.
    pub fn shifted_state(&self, m: usize) -> &[T] {
        let d = self.sys.dim();
        &self.history[m * d..(m + 1) * d]
    }

    fn time(&self, m: usize) -> T {
        T::from_usize_lossy(m) * self.tau
    }

    /// `U^n` recovered from the shifted unknown.
    pub fn current_solution(&self) -> GridFunction<T> {
        let t = self.time(self.n);
        GridFunction(
            (0..self.w_hi.len())
                .map(|i| (self.w_hi[i] + self.v_h[i] + t * self.b_h[i]) + self.w_lo[i])
                .collect(),
        )
    }

    /// `conv = Σ_{j=1}^{n-1} σ_j D^{n-j}`, so that
    /// `Σ_{j=0}^{n} b_j W^{n-j} = σ_0 D^n + conv` by summation by parts.
    fn history_convolution(&mut self, n: usize) {
        let d = self.sys.dim();
        self.conv.iter_mut().for_each(|c| *c = T::zero());
        for j in 1..n {
            let sj = self.partial_sums[j];
            let row = &self.increments[(n - j - 1) * d..(n - j) * d];
            for (c, x) in self.conv.iter_mut().zip(row) {
                *c += sj * *x;
            }
        }
    }

    /// `rhs = -τ^{-α} · mass · conv - stiffness · W^{n-1}`.
    fn memory_term(&mut self) {
        self.sys.mass.apply_into(&self.conv, &mut self.rhs);
        let s = -self.scale;
        self.rhs.iter_mut().for_each(|r| *r *= s);
        self.sys.apply_stiffness_into(&self.w_hi, &mut self.scratch);
        for (r, x) in self.rhs.iter_mut().zip(&self.scratch) {
            *r -= *x;
        }
        self.sys.apply_stiffness_into(&self.w_lo, &mut self.scratch);
        for (r, x) in self.rhs.iter_mut().zip(&self.scratch) {
            *r -= *x;
        }
    }

    fn source_load(&self, t: T) -> Vec<T> {
        match &self.spec.f {
            Some(f) => self.sys.project_load(|x| f(x, t), &self.spec.breakpoints),
            None => vec![T::zero(); self.sys.dim()],
        }
    }

    fn finish_step(&mut self, n: usize) -> GridFunction<T> {
        let mut inc = std::mem::take(&mut self.rhs);
        self.sys.solve_refined(&self.factor, &mut inc, &mut self.scratch);
        self.increments.extend_from_slice(&inc);
        for i in 0..inc.len() {
            let (hi, lo) = two_sum(self.w_hi[i], inc[i]);
            let (hi, lo) = fast_two_sum(hi, lo + self.w_lo[i]);
            self.w_hi[i] = hi;
            self.w_lo[i] = lo;
            self.history.push(hi + lo);
        }
        self.rhs = inc;
        self.n = n;
        let u = self.current_solution();
        let norm = u.max_norm();
        if n == 1 {
            self.data_scale = self.data_scale.max(norm);
            if self.data_scale == T::zero() {
                self.data_scale = T::one();
            }
        }
        self.max_norm = self.max_norm.max(norm);
        let limit = T::lit(self.opts.blowup_factor) * self.data_scale;
        if self.blowup_step.is_none() && (norm > limit || !norm.is_finite()) {
            self.blowup_step = Some(n);
        }
        self.watch_high_modes(n, &u);
        if let Some(every) = self.opts.snapshot_every {
            if n % every == 0 || n == self.opts.steps {
                self.snapshots.push((n, u.clone()));
            }
        }
        u
    }

    /// High-mode amplitude over `‖U‖_∞`; zero for a zero state.
    fn high_mode_share(&self, u: &GridFunction<T>) -> T {
        let norm = u.max_norm();
        if norm == T::zero() {
            return T::zero();
        }
        self.sys.high_mode_amplitude(&u.0, (3 * self.sys.m).div_ceil(4)) / norm
    }

    /// The reference share is taken over the first `k` steps and floored at
    /// `1e-10`, so rounding-level content in smooth data cannot trigger;
    /// afterwards the share is sampled about 256 times per run.
    fn watch_high_modes(&mut self, n: usize, u: &GridFunction<T>) {
        if self.growth_step.is_some() {
            return;
        }
        let k = self.opts.k.get();
        if n <= k {
            self.high_mode_ref = self.high_mode_ref.max(self.high_mode_share(u));
            return;
        }
        let stride = (self.opts.steps / 256).max(1);
        if n % stride != 0 && n != self.opts.steps {
            return;
        }
        let limit = T::lit(self.opts.growth_factor) * self.high_mode_ref.max(T::lit(1e-10));
        let share = self.high_mode_share(u);
        if share > limit || !share.is_finite() {
            self.growth_step = Some(n);
        }
    }

    fn check_next(&self, regime: Regime) -> Result<usize> {
        if self.spec.regime != regime {
            return Err(Error::UnsupportedScheme(format!(
                "{} step requested for a {} problem",
                regime, self.spec.regime
            )));
        }
        if self.n >= self.opts.steps {
            return Err(Error::Config(format!("all {} steps already taken", self.opts.steps)));
        }
        Ok(self.n + 1)
    }

    /// One step of the corrected (or, with empty corrections, plain) BDF-k
    /// subdiffusion scheme.
    pub fn step_subdiffusion(&mut self) -> Result<GridFunction<T>> {
        let n = self.check_next(Regime::Subdiffusion)?;
        if self.opts.scheme == Scheme::L1 {
            return Err(Error::UnsupportedScheme("use step_l1 for the L1 scheme".into()));
        }
        self.subdiffusion_rhs(n);
        Ok(self.finish_step(n))
    }

    /// One step of the L1 scheme; shares the subdiffusion right-hand side
    /// without corrections.
    pub fn step_l1(&mut self) -> Result<GridFunction<T>> {
        if self.spec.regime == Regime::DiffusionWave || self.opts.scheme != Scheme::L1 {
            return Err(Error::UnsupportedScheme(
                "the L1 step needs a subdiffusion problem set up with the L1 scheme".into(),
            ));
        }
        let n = self.check_next(Regime::Subdiffusion)?;
        self.subdiffusion_rhs(n);
        Ok(self.finish_step(n))
    }

    fn subdiffusion_rhs(&mut self, n: usize) {
        self.history_convolution(n);
        self.memory_term();
        let a = self.corrections.a_at(n);
        let f_n = self.source_load(self.time(n));
        let tau = self.tau;
        for i in 0..self.rhs.len() {
            self.rhs[i] += f_n[i] - (T::one() + a) * self.stiff_v[i] + a * self.load_f0[i];
        }
        for ell in 1..self.deriv_loads.len() {
            let b = self.corrections.b_at(ell, n);
            if b == T::zero() {
                continue;
            }
            let c = b * tau.powi(ell as i32);
            for (r, l) in self.rhs.iter_mut().zip(&self.deriv_loads[ell]) {
                *r += c * *l;
            }
        }
    }

    /// Load of `g(·, t_m) - g(·, t_{m-1})`.
    ///
    /// The scheme only needs a BDF difference of `g`, which divides by `τ`;
    /// differencing rounded values of `g` would amplify their rounding by
    /// `1/τ`, so increments are formed directly: by quadrature of `f` over
    /// the step, or from the closed form when no source is given.
    fn g_increment(&mut self, m: usize) -> &[T] {
        while self.g_increments.len() <= m {
            let j = self.g_increments.len();
            let (t0, t1) = (self.time(j - 1), self.time(j));
            let next = match (&self.spec.f, &self.spec.g) {
                (Some(f), _) => {
                    let (sys, bp) = (self.sys, &self.spec.breakpoints);
                    quadrature::integrate(|s: T| sys.project_load(|x| f(x, s), bp), t0, t1, Tolerance::default())
                }
                (None, Some(g)) => {
                    let bp = &self.spec.breakpoints;
                    self.sys.project_load(|x| g(x, t1) - g(x, t0), bp)
                }
                (None, None) => vec![T::zero(); self.sys.dim()],
            };
            self.g_increments.push(next);
        }
        &self.g_increments[m]
    }

    /// One step of the corrected diffusion-wave scheme.
    pub fn step_diffusion_wave(&mut self) -> Result<GridFunction<T>> {
        let n = self.check_next(Regime::DiffusionWave)?;
        self.history_convolution(n);
        self.memory_term();
        let t_n = self.time(n);
        let tau = self.tau;
        let a = self.corrections.a_at(n);
        let c = self.corrections.c_at(n);
        for i in 0..self.rhs.len() {
            self.rhs[i] -= (T::one() + a) * self.stiff_v[i] + (t_n + c * tau) * self.stiff_b[i];
        }
        let kk = self.opts.k.get();
        let inv_tau = T::one() / tau;
        // Σ_{j≤min(n,k)} p_j G^{n-j} = Σ_{r<min(n,k)} P_r (G^{n-r} - G^{n-r-1})
        // since G^0 = 0 and P_k = 0
        for r in 0..n.min(kk) {
            let coef = self.bdf_partial[r] * inv_tau;
            self.g_increment(n - r);
            for (out, l) in self.rhs.iter_mut().zip(&self.g_increments[n - r]) {
                *out += coef * *l;
            }
        }
        // Σ_ℓ b_{ℓ,n} τ^{ℓ-1} ∂_t^{ℓ-1} f(0)
        for ell in 1..=kk.saturating_sub(2) {
            let b = self.corrections.b_at(ell, n);
            if b == T::zero() || ell > self.deriv_loads.len() {
                continue;
            }
            let coef = b * tau.powi(ell as i32 - 1);
            for (r, l) in self.rhs.iter_mut().zip(&self.deriv_loads[ell - 1]) {
                *r += coef * *l;
            }
        }
        Ok(self.finish_step(n))
    }

    /// Advance one step with the engine matching the problem and scheme.
    pub fn step(&mut self) -> Result<GridFunction<T>> {
        match (self.spec.regime, self.opts.scheme) {
            (Regime::Subdiffusion, Scheme::L1) => self.step_l1(),
            (Regime::Subdiffusion, _) => self.step_subdiffusion(),
            (Regime::DiffusionWave, _) => self.step_diffusion_wave(),
        }
    }

    pub fn run(mut self) -> Result<RunOutcome<T>> {
        while self.n < self.opts.steps {
            self.step()?;
        }
        Ok(RunOutcome {
            steps: self.opts.steps,
            tau: self.tau,
            final_solution: self.current_solution(),
            snapshots: std::mem::take(&mut self.snapshots),
            max_norm: self.max_norm,
            blowup_step: self.blowup_step,
            growth_step: self.growth_step,
            stability: self.stability.take(),
        })
    }
}

/// `a + b = s + e` exactly.
fn two_sum<T: Real>(a: T, b: T) -> (T, T) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `two_sum` for `|a| ≥ |b|`.
fn fast_two_sum<T: Real>(a: T, b: T) -> (T, T) {
    let s = a + b;
    (s, b - (s - a))
}

/// Solve to the final time and return the outcome.
pub fn solve<T: Real>(spec: &ProblemSpec<T>, sys: &SpatialSystem<T>, opts: SolverOptions) -> Result<RunOutcome<T>> {
    SolverRun::new(spec, sys, opts)?.run()
}
