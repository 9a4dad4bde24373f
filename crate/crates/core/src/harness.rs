//! Convergence studies, stability-flip runs and data dumps.
//!
//! Errors are measured at the final time against a reference computed on
//! the same mesh with a step `ref_factor` times smaller, so they isolate
//! the temporal discretisation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correction::{CorrectionSet, Regime};
use crate::cq_weights::cq_weights;
use crate::fem1d::SpatialSystem;
use crate::stability::{alpha_star, cfl_constant, tau_threshold};
use crate::stepper::{solve, ProblemSpec, RunOutcome, Scheme, SolverOptions};
use crate::{BdfOrder, Error, Rational, Result};

/// Benchmark problems on `(0, 1)`; `χ` is the indicator of `(0, 1/2)`.
///
/// * `a`: `v = x(1-x)`, `f = 0` (subdiffusion)
/// * `b`: `v = 0`, `f = cos t (1 + χ)` (subdiffusion)
/// * `c`: `v = x(1-x)`, `b = sin 2πx`, `f = e^t (1 + χ)` (diffusion-wave)
/// * `custom`: zero data in whichever regime `α` selects
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    A,
    B,
    C,
    Custom,
}

impl FromStr for Case {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Case::A),
            "b" => Ok(Case::B),
            "c" => Ok(Case::C),
            "custom" => Ok(Case::Custom),
            other => Err(Error::Config(format!("unknown case '{other}'"))),
        }
    }
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Case::A => "a",
            Case::B => "b",
            Case::C => "c",
            Case::Custom => "custom",
        })
    }
}

fn chi(x: f64) -> f64 {
    if x > 0.0 && x < 0.5 {
        1.0
    } else {
        0.0
    }
}

impl Case {
    pub fn regime(self, alpha: f64) -> Regime {
        match self {
            Case::A | Case::B => Regime::Subdiffusion,
            Case::C => Regime::DiffusionWave,
            Case::Custom if alpha > 1.0 => Regime::DiffusionWave,
            Case::Custom => Regime::Subdiffusion,
        }
    }

    pub fn problem(self, alpha: f64, final_time: f64) -> ProblemSpec<f64> {
        let base = ProblemSpec {
            final_time,
            ..ProblemSpec::zero(self.regime(alpha), alpha)
        };
        match self {
            Case::A => ProblemSpec {
                v: Arc::new(|x| x * (1.0 - x)),
                ..base
            },
            Case::B => ProblemSpec {
                f: Some(Arc::new(|x, t: f64| t.cos() * (1.0 + chi(x)))),
                // ∂_t^ℓ cos at 0 cycles through 0, -1, 0, 1
                f_time_derivs: (1..=5)
                    .map(|ell| {
                        let c = [1.0, 0.0, -1.0, 0.0][ell % 4];
                        Arc::new(move |x| c * (1.0 + chi(x))) as Arc<dyn Fn(f64) -> f64 + Send + Sync>
                    })
                    .collect(),
                breakpoints: vec![0.5],
                ..base
            },
            Case::C => ProblemSpec {
                v: Arc::new(|x| x * (1.0 - x)),
                b_init: Some(Arc::new(|x| (2.0 * std::f64::consts::PI * x).sin())),
                f: Some(Arc::new(|x, t: f64| t.exp() * (1.0 + chi(x)))),
                g: Some(Arc::new(|x, t: f64| (t.exp() - 1.0) * (1.0 + chi(x)))),
                f_time_derivs: vec![Arc::new(|x| 1.0 + chi(x)); 5],
                breakpoints: vec![0.5],
                ..base
            },
            Case::Custom => base,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format '{other}'"))),
        }
    }
}

/// Declarative description of a convergence study; every field can be
/// given in a TOML file and overridden on the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: Case,
    pub alpha: Vec<f64>,
    pub k: Vec<usize>,
    #[serde(rename = "N")]
    pub steps: Vec<usize>,
    #[serde(rename = "M")]
    pub mesh: usize,
    pub schemes: Vec<Scheme>,
    pub ref_factor: usize,
    /// Also compute a reference with twice the refinement and flag rows
    /// where the two differ by more than 1% of the measured error.
    pub ref_check: bool,
    pub final_time: f64,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub override_stability: bool,
    pub fd_fallback: bool,
    pub trace: bool,
    /// Write the convolution weights of every `(alpha, k)` in the sweep here.
    pub dump_weights: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            case: Case::A,
            alpha: vec![0.5],
            k: vec![2],
            steps: vec![50, 100, 200, 400, 800],
            mesh: 100,
            schemes: vec![Scheme::Corrected],
            ref_factor: 16,
            ref_check: false,
            final_time: 1.0,
            format: Format::Csv,
            out: None,
            override_stability: false,
            fd_fallback: false,
            trace: false,
            dump_weights: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.alpha.is_empty() || self.k.is_empty() || self.steps.is_empty() || self.schemes.is_empty() {
            return bad("alpha, k, N and schemes must be non-empty".into());
        }
        if self.steps.windows(2).any(|w| w[1] <= w[0]) || self.steps[0] == 0 {
            return bad(format!("N list must be positive and strictly increasing: {:?}", self.steps));
        }
        for &k in &self.k {
            BdfOrder::new(k).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.mesh < 2 {
            return bad(format!("M must be at least 2, got {}", self.mesh));
        }
        if self.ref_factor < 2 {
            return bad(format!("ref_factor must be at least 2, got {}", self.ref_factor));
        }
        if !(self.final_time > 0.0) {
            return bad("final_time must be positive".into());
        }
        for &a in &self.alpha {
            let (lo, hi) = match self.case.regime(a) {
                Regime::Subdiffusion => (0.0, 1.0),
                Regime::DiffusionWave => (1.0, 2.0),
            };
            if !(a > lo && a < hi) {
                return bad(format!("alpha = {a} does not fit case {} (needs {lo} < alpha < {hi})", self.case));
            }
            if self.case.regime(a) == Regime::DiffusionWave && self.schemes.contains(&Scheme::L1) {
                return bad("the L1 scheme is available for subdiffusion only".into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub alpha: f64,
    /// `None` for the L1 scheme.
    pub k: Option<usize>,
    pub scheme: Scheme,
    pub steps: Vec<usize>,
    pub errors: Vec<f64>,
    /// `rates[i]` compares `steps[i]` with `steps[i + 1]`.
    pub rates: Vec<Option<f64>>,
    pub headline_rate: Option<f64>,
    pub theoretical_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub t: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorTrace {
    pub alpha: f64,
    pub k: Option<usize>,
    pub scheme: Scheme,
    pub steps: usize,
    pub points: Vec<TracePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorReport {
    pub case: Case,
    pub mesh: usize,
    pub h: f64,
    pub final_time: f64,
    pub ref_factor: usize,
    pub rows: Vec<ErrorRow>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<ErrorTrace>,
    pub wall_time_seconds: f64,
}

/// `log(e_i / e_{i+1}) / log(N_{i+1} / N_i)`, undefined when either error
/// vanishes.
pub fn observed_rates(steps: &[usize], errors: &[f64]) -> Vec<Option<f64>> {
    steps
        .windows(2)
        .zip(errors.windows(2))
        .map(|(n, e)| {
            (e[0] > 0.0 && e[1] > 0.0).then(|| (e[0] / e[1]).ln() / (n[1] as f64 / n[0] as f64).ln())
        })
        .collect()
}

/// Relative `M`-norm distance, zero when both sides coincide.
pub fn normalized_error(sys: &SpatialSystem<f64>, reference: &[f64], approx: &[f64]) -> f64 {
    let diff: Vec<f64> = reference.iter().zip(approx).map(|(a, b)| a - b).collect();
    let num = sys.l2_norm(&diff);
    if num == 0.0 {
        0.0
    } else {
        num / sys.l2_norm(reference)
    }
}

/// Order of the corrected scheme used as reference for a row: baselines
/// converge at first order, so their reference comes from a corrected
/// scheme of order at least three.
fn reference_order(scheme: Scheme, k: Option<usize>) -> usize {
    match (scheme, k) {
        (Scheme::Corrected, Some(k)) => k,
        (_, k) => k.unwrap_or(3).max(3),
    }
}

fn bdf(k: usize) -> BdfOrder {
    BdfOrder::new(k).expect("validated order")
}

struct RowPlan {
    alpha: f64,
    k: Option<usize>,
    scheme: Scheme,
    reference: (u64, usize),
}

fn plan_rows(cfg: &ExperimentConfig) -> Vec<RowPlan> {
    let mut rows = Vec::new();
    for &alpha in &cfg.alpha {
        for &scheme in &cfg.schemes {
            let ks: Vec<Option<usize>> = match scheme {
                Scheme::L1 => vec![None],
                _ => cfg.k.iter().map(|k| Some(*k)).collect(),
            };
            for k in ks {
                rows.push(RowPlan {
                    alpha,
                    k,
                    scheme,
                    reference: (alpha.to_bits(), reference_order(scheme, k)),
                });
            }
        }
    }
    rows
}

fn run_case(
    cfg: &ExperimentConfig,
    sys: &SpatialSystem<f64>,
    alpha: f64,
    k: usize,
    scheme: Scheme,
    steps: usize,
    snapshot_every: Option<usize>,
) -> Result<RunOutcome<f64>> {
    let spec = cfg.case.problem(alpha, cfg.final_time);
    let mut opts = SolverOptions::new(bdf(k), steps).scheme(scheme);
    opts.override_stability = cfg.override_stability;
    opts.fd_fallback = cfg.fd_fallback;
    opts.snapshot_every = snapshot_every;
    solve(&spec, sys, opts)
}

pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    cfg.validate()?;
    let started = Instant::now();
    let sys = SpatialSystem::<f64>::assemble(cfg.mesh)?;
    let n_max = *cfg.steps.last().expect("validated");
    let rows = plan_rows(cfg);

    let mut ref_keys: Vec<(u64, usize)> = rows.iter().map(|r| r.reference).collect();
    ref_keys.sort_unstable();
    ref_keys.dedup();
    let ref_steps = cfg.ref_factor * n_max;
    let trace_stride = cfg.trace.then_some(cfg.ref_factor);
    let references: BTreeMap<(u64, usize), RunOutcome<f64>> = ref_keys
        .par_iter()
        .map(|&(bits, k)| {
            let out = run_case(cfg, &sys, f64::from_bits(bits), k, Scheme::Corrected, ref_steps, trace_stride)?;
            Ok(((bits, k), out))
        })
        .collect::<Result<_>>()?;
    let finer: BTreeMap<(u64, usize), RunOutcome<f64>> = if cfg.ref_check {
        ref_keys
            .par_iter()
            .map(|&(bits, k)| {
                let out = run_case(cfg, &sys, f64::from_bits(bits), k, Scheme::Corrected, 2 * ref_steps, None)?;
                Ok(((bits, k), out))
            })
            .collect::<Result<_>>()?
    } else {
        BTreeMap::new()
    };

    let jobs: Vec<(usize, usize)> = (0..rows.len())
        .flat_map(|r| (0..cfg.steps.len()).map(move |i| (r, i)))
        .collect();
    let outcomes: Vec<RunOutcome<f64>> = jobs
        .par_iter()
        .map(|&(r, i)| {
            let row = &rows[r];
            let n = cfg.steps[i];
            let snap = (cfg.trace && n == n_max).then_some(1);
            run_case(cfg, &sys, row.alpha, row.k.unwrap_or(1), row.scheme, n, snap)
        })
        .collect::<Result<_>>()?;

    let mut report_rows = Vec::new();
    let mut warnings = Vec::new();
    let mut traces = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        let reference = &references[&row.reference];
        let ref_u = reference.final_solution.values();
        let mut errors = Vec::new();
        for (i, _) in cfg.steps.iter().enumerate() {
            let out = &outcomes[r * cfg.steps.len() + i];
            errors.push(normalized_error(&sys, ref_u, out.final_solution.values()));
        }
        if let Some(fine) = finer.get(&row.reference) {
            let drift = normalized_error(&sys, fine.final_solution.values(), ref_u);
            let smallest = errors.iter().copied().filter(|e| *e > 0.0).fold(f64::INFINITY, f64::min);
            if smallest.is_finite() && drift > 0.01 * smallest {
                warnings.push(format!(
                    "alpha={} k={:?} {}: reference moves by {drift:.2e} under further refinement, \
                     more than 1% of the smallest error {smallest:.2e}",
                    row.alpha, row.k, row.scheme
                ));
            }
        }
        if cfg.trace {
            let out = &outcomes[r * cfg.steps.len() + cfg.steps.len() - 1];
            let points = out
                .snapshots
                .iter()
                .zip(&reference.snapshots)
                .map(|((n, u), (_, uref))| TracePoint {
                    t: cfg.final_time * *n as f64 / n_max as f64,
                    error: normalized_error(&sys, uref.values(), u.values()),
                })
                .collect();
            traces.push(ErrorTrace {
                alpha: row.alpha,
                k: row.k,
                scheme: row.scheme,
                steps: n_max,
                points,
            });
        }
        let rates = observed_rates(&cfg.steps, &errors);
        report_rows.push(ErrorRow {
            alpha: row.alpha,
            k: row.k,
            scheme: row.scheme,
            steps: cfg.steps.clone(),
            headline_rate: rates.last().copied().flatten(),
            rates,
            errors,
            theoretical_rate: match row.scheme {
                Scheme::Corrected => row.k.unwrap_or(1) as f64,
                _ => 1.0,
            },
        });
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ErrorReport {
        case: cfg.case,
        mesh: cfg.mesh,
        h: sys.h,
        final_time: cfg.final_time,
        ref_factor: cfg.ref_factor,
        rows: report_rows,
        warnings,
        traces,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Three significant digits, scientific.
pub fn fmt_error(e: f64) -> String {
    format!("{e:.2e}")
}

pub fn fmt_rate(r: Option<f64>) -> String {
    r.map(|r| format!("{r:.2}")).unwrap_or_default()
}

impl ErrorReport {
    /// One line per `(alpha, k, N)`; the rate column compares with the
    /// previous `N` of the same row and is empty on the first.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("case,scheme,alpha,k,N,error,rate,theoretical_rate\n");
        for row in &self.rows {
            for (i, (n, e)) in row.steps.iter().zip(&row.errors).enumerate() {
                let rate = if i == 0 { String::new() } else { fmt_rate(row.rates[i - 1]) };
                let k = row.k.map(|k| k.to_string()).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{:.2}",
                    self.case,
                    row.scheme,
                    row.alpha,
                    k,
                    n,
                    fmt_error(*e),
                    rate,
                    row.theoretical_rate
                );
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("scheme,alpha,k,N,t,error\n");
        for tr in &self.traces {
            let k = tr.k.map(|k| k.to_string()).unwrap_or_default();
            for p in &tr.points {
                let _ = writeln!(s, "{},{},{},{},{:.6},{:.6e}", tr.scheme, tr.alpha, k, tr.steps, p.t, p.error);
            }
        }
        s
    }

    /// Fixed-width error table for terminals: one row per scheme, one column per `N`.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:>6} {:>12} {:>4} |", "alpha", "scheme", "k");
        if let Some(r) = self.rows.first() {
            for n in &r.steps {
                let _ = write!(s, " {n:>9}");
            }
        }
        s.push_str(" | rate\n");
        for row in &self.rows {
            let k = row.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into());
            let _ = write!(s, "{:>6} {:>12} {:>4} |", row.alpha, row.scheme.to_string(), k);
            for e in &row.errors {
                let _ = write!(s, " {:>9}", fmt_error(*e));
            }
            let _ = writeln!(s, " | {} ({:.2})", fmt_rate(row.headline_rate), row.theoretical_rate);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlipVerdict {
    pub steps: usize,
    pub tau: f64,
    pub predicted_stable: bool,
    pub observed_stable: bool,
    pub max_norm: f64,
    pub blowup_step: Option<usize>,
    pub growth_step: Option<usize>,
    /// `(x, u(x, T))` including the boundary nodes.
    pub final_profile: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlipReport {
    pub alpha: f64,
    pub k: usize,
    pub mesh: usize,
    pub numerical_radius: f64,
    pub cfl_constant: Option<f64>,
    pub tau_threshold: Option<f64>,
    pub verdicts: Vec<FlipVerdict>,
}

/// Run the diffusion-wave benchmark with the stability check overridden and
/// compare the blow-up detector with the predicted threshold.
pub fn run_stability_flip(alpha: f64, k: usize, mesh: usize, steps: &[usize], final_time: f64) -> Result<FlipReport> {
    let order = BdfOrder::new(k)?;
    let sys = SpatialSystem::<f64>::assemble(mesh)?;
    let r_a = sys.numerical_radius();
    let tau0 = tau_threshold(alpha, order, r_a);
    let spec = Case::C.problem(alpha, final_time);
    let verdicts = steps
        .par_iter()
        .map(|&n| {
            let mut opts = SolverOptions::new(order, n);
            opts.override_stability = true;
            let out = solve(&spec, &sys, opts)?;
            let tau = final_time / n as f64;
            let mut profile = vec![(0.0, 0.0)];
            profile.extend(sys.nodes().into_iter().zip(out.final_solution.0.iter().copied()));
            profile.push((1.0, 0.0));
            Ok(FlipVerdict {
                steps: n,
                tau,
                predicted_stable: tau0.is_none_or(|t0| tau < t0),
                observed_stable: out.is_stable(),
                max_norm: out.max_norm,
                blowup_step: out.blowup_step,
                growth_step: out.growth_step,
                final_profile: profile,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FlipReport {
        alpha,
        k,
        mesh,
        numerical_radius: r_a,
        cfl_constant: cfl_constant(alpha, order),
        tau_threshold: tau0,
        verdicts,
    })
}

impl FlipReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,k,M,N,tau,tau0,predicted,observed,max_norm,blowup_step,growth_step\n");
        let tau0 = self.tau_threshold.map(|t| format!("{t:.6e}")).unwrap_or_default();
        let word = |b: bool| if b { "stable" } else { "unstable" };
        for v in &self.verdicts {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6e},{},{},{},{:.6e},{},{}",
                self.alpha,
                self.k,
                self.mesh,
                v.steps,
                v.tau,
                tau0,
                word(v.predicted_stable),
                word(v.observed_stable),
                v.max_norm,
                v.blowup_step.map(|n| n.to_string()).unwrap_or_default(),
                v.growth_step.map(|n| n.to_string()).unwrap_or_default()
            );
        }
        s
    }

    pub fn profile_csv(&self) -> String {
        let mut s = String::from("N,x,u\n");
        for v in &self.verdicts {
            for (x, u) in &v.final_profile {
                let _ = writeln!(s, "{},{:.6},{:.9e}", v.steps, x, u);
            }
        }
        s
    }
}

#[derive(Clone, Debug, Serialize)]
struct CertificateDump {
    criterion: String,
    ell: Option<usize>,
    verified_zero_range: (i64, i64),
    first_nonzero: Option<(i64, String)>,
}

#[derive(Clone, Debug, Serialize)]
struct CoefficientDump {
    k: usize,
    regime: Regime,
    a: Vec<String>,
    b: Vec<Vec<String>>,
    c: Vec<String>,
    certificates: Vec<CertificateDump>,
}

fn exact(r: &Rational) -> String {
    if r.is_integer() {
        format!("{}/1", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn decimal(r: &Rational) -> String {
    use num_traits::ToPrimitive;
    format!("{:.17e}", r.to_f64().unwrap_or(f64::NAN))
}

/// Correction coefficients and their certificates. JSON stores exact
/// `num/den` strings; CSV adds a decimal column.
pub fn dump_coeffs(k: usize, regime: Regime, format: Format) -> Result<String> {
    let set = CorrectionSet::<Rational>::derive(BdfOrder::new(k)?, regime)?;
    let certs = set.certify()?;
    match format {
        Format::Json => {
            let dump = CoefficientDump {
                k,
                regime,
                a: set.a.iter().map(exact).collect(),
                b: set.b.iter().map(|r| r.iter().map(exact).collect()).collect(),
                c: set.c.iter().map(exact).collect(),
                certificates: certs
                    .iter()
                    .map(|c| CertificateDump {
                        criterion: c.criterion.to_string(),
                        ell: c.ell,
                        verified_zero_range: c.verified_zero_range,
                        first_nonzero: c.first_nonzero.as_ref().map(|(e, v)| (*e, exact(v))),
                    })
                    .collect(),
            };
            Ok(serde_json::to_string_pretty(&dump)?)
        }
        Format::Csv => {
            let mut s = String::from("k,regime,coefficient,ell,j,exact,decimal\n");
            let mut line = |name: &str, ell: String, j: usize, v: &Rational| {
                let _ = writeln!(s, "{k},{regime},{name},{ell},{j},{},{}", exact(v), decimal(v));
            };
            for (j, v) in set.a.iter().enumerate() {
                line("a", String::new(), j + 1, v);
            }
            for (l, row) in set.b.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    line("b", (l + 1).to_string(), j + 1, v);
                }
            }
            for (j, v) in set.c.iter().enumerate() {
                line("c", String::new(), j + 1, v);
            }
            Ok(s)
        }
    }
}

/// `c(α, k)` on a grid, empty where the curve never meets the negative axis.
pub fn dump_cfl_sweep(ks: &[usize], alphas: &[f64]) -> Result<String> {
    let mut s = String::from("alpha,k,alpha_star,cfl_constant\n");
    for &k in ks {
        let order = BdfOrder::new(k)?;
        let a_star = alpha_star(order);
        for &a in alphas {
            let c = cfl_constant(a, order).map(|c| format!("{c:.6}")).unwrap_or_default();
            let _ = writeln!(s, "{a},{k},{a_star:.6},{c}");
        }
    }
    Ok(s)
}

/// Convolution weights `b_0 .. b_{count-1}` of `δ(ζ)^α`.
pub fn dump_weights(alpha: f64, k: usize, count: usize) -> Result<String> {
    let table = cq_weights(alpha, BdfOrder::new(k)?, count)?;
    let mut s = String::from("j,weight\n");
    for (j, w) in table.weights.iter().enumerate() {
        let _ = writeln!(s, "{j},{w:e}");
    }
    Ok(s)
}

/// Weight tables for every `(alpha, k)` of a sweep, long enough for its
/// largest `N`, as CSV with columns `alpha,k,j,weight`.
pub fn dump_sweep_weights(cfg: &ExperimentConfig) -> Result<String> {
    let count = cfg.steps.iter().copied().max().unwrap_or(0) + 1;
    let mut s = String::from("alpha,k,j,weight\n");
    for &alpha in &cfg.alpha {
        for &k in &cfg.k {
            let table = cq_weights(alpha, BdfOrder::new(k)?, count)?;
            for (j, w) in table.weights.iter().enumerate() {
                let _ = writeln!(s, "{alpha},{k},{j},{w:e}");
            }
        }
    }
    Ok(s)
}

/// Write `contents` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, contents).map_err(|e| Error::io(p, e)),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_between_consecutive_steps() {
        let r = observed_rates(&[50, 100, 200], &[4.0, 1.0, 0.25]);
        assert_eq!(r, vec![Some(2.0), Some(2.0)]);
        let r = observed_rates(&[10, 30], &[9.0, 1.0]);
        assert!((r[0].unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(observed_rates(&[1, 2], &[0.0, 0.0]), vec![None]);
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = ExperimentConfig::from_toml_str(
            "case = \"b\"\nalpha = [0.25, 0.5]\nk = [2, 3]\nN = [10, 20]\nM = 20\nschemes = [\"corrected\", \"l1\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.case, Case::B);
        assert_eq!(cfg.steps, vec![10, 20]);
        assert_eq!(cfg.ref_factor, 16);
        cfg.validate().unwrap();
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        let bad = ExperimentConfig {
            steps: vec![20, 10],
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            case: Case::C,
            alpha: vec![0.5],
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_data_has_zero_errors_and_no_rates() {
        let cfg = ExperimentConfig {
            case: Case::Custom,
            alpha: vec![0.5, 1.5],
            k: vec![3],
            steps: vec![10, 20],
            mesh: 10,
            ref_factor: 2,
            ..ExperimentConfig::default()
        };
        let rep = run_convergence(&cfg).unwrap();
        for row in &rep.rows {
            assert_eq!(row.errors, vec![0.0, 0.0]);
            assert_eq!(row.rates, vec![None]);
            assert_eq!(row.headline_rate, None);
        }
    }

    #[test]
    fn weight_dump_for_integer_power() {
        let s = dump_weights(1.0, 2, 5).unwrap();
        let vals: Vec<f64> = s.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert_eq!(vals, vec![1.5, -2.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn coefficient_dump_is_exact() {
        let s = dump_coeffs(4, Regime::Subdiffusion, Format::Csv).unwrap();
        assert!(s.contains("31/24"));
        let j = dump_coeffs(4, Regime::Subdiffusion, Format::Json).unwrap();
        assert!(j.contains("\"31/24\""));
        let v: serde_json::Value = serde_json::from_str(&j).unwrap();
        assert_eq!(v["a"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn cfl_sweep_contains_anchor() {
        let s = dump_cfl_sweep(&[5], &[1.5]).unwrap();
        let line = s.lines().nth(1).unwrap();
        let c: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((c - 1.58).abs() < 0.01);
        let s = dump_cfl_sweep(&[3], &[1.2]).unwrap();
        assert!(s.lines().nth(1).unwrap().ends_with(','));
    }
}
