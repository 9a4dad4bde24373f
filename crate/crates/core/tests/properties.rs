use std::sync::Arc;

use approx::assert_relative_eq;
use fracbdf::correction::Regime;
use fracbdf::cq_weights::cq_weights;
use fracbdf::fem1d::SpatialSystem;
use fracbdf::harness::{dump_weights, fmt_error, fmt_rate, run_convergence, Case, ExperimentConfig};
use fracbdf::stepper::{solve, ProblemSpec, Scheme, SolverOptions};
use fracbdf::BdfOrder;
use statrs::function::gamma::gamma;

/// `τ^{-α} Σ_j b_j φ(t_{n-j})` at `t_n = 1` for `φ(t) = t^m`.
fn cq_derivative_of_power(alpha: f64, k: usize, m: i32, steps: usize) -> f64 {
    let table = cq_weights(alpha, BdfOrder::new(k).unwrap(), steps + 1).unwrap();
    let tau = 1.0 / steps as f64;
    let sum: f64 = (0..=steps)
        .map(|j| table.weights[j] * ((steps - j) as f64 * tau).powi(m))
        .sum();
    sum * tau.powf(-alpha)
}

fn fitted_slope(steps: &[usize], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| -e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

#[test]
fn quadrature_is_consistent_of_order_k_on_powers() {
    for alpha in [0.25, 0.5, 0.75, 1.25, 1.5, 1.75] {
        for k in 1..=6usize {
            let m = k as i32;
            let exact = gamma(m as f64 + 1.0) / gamma(m as f64 + 1.0 - alpha);
            // for k >= 5 the finest step would reach the roundoff floor
            // tau^{-alpha} eps sum |b_j|, near 1e-11 at N = 160
            let steps: Vec<usize> = if k >= 5 { vec![10, 20, 40, 80] } else { vec![20, 40, 80, 160] };
            let errors: Vec<f64> = steps
                .iter()
                .map(|&n| (cq_derivative_of_power(alpha, k, m, n) - exact).abs())
                .collect();
            let slope = fitted_slope(&steps, &errors);
            assert!(slope >= k as f64 - 0.2, "alpha={alpha} k={k}: slope {slope}");
        }
    }
}

#[test]
fn weight_dump_of_the_first_derivative() {
    let csv = dump_weights(1.0, 2, 5).unwrap();
    let weights: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(weights, [1.5, -2.0, 0.5, 0.0, 0.0]);
}

fn small_study(case: Case, alpha: f64, schemes: Vec<Scheme>) -> ExperimentConfig {
    ExperimentConfig {
        case,
        alpha: vec![alpha],
        k: vec![2, 3],
        steps: vec![10, 20, 40],
        mesh: 10,
        schemes,
        ref_factor: 4,
        ..ExperimentConfig::default()
    }
}

#[test]
fn csv_output_is_byte_deterministic() {
    let cfg = small_study(Case::B, 0.5, vec![Scheme::Corrected, Scheme::L1]);
    let first = run_convergence(&cfg).unwrap().to_csv();
    let second = run_convergence(&cfg).unwrap().to_csv();
    assert_eq!(first, second);
}

#[test]
fn json_and_csv_agree_value_for_value() {
    let cfg = small_study(Case::C, 1.5, vec![Scheme::Corrected, Scheme::Uncorrected]);
    let report = run_convergence(&cfg).unwrap();
    let json: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    let csv = report.to_csv();
    let mut lines = csv.lines().skip(1);
    for row in json["rows"].as_array().unwrap() {
        let steps = row["steps"].as_array().unwrap();
        for (i, n) in steps.iter().enumerate() {
            let cells: Vec<&str> = lines.next().unwrap().split(',').collect();
            assert_eq!(cells[0], "c");
            assert_eq!(cells[1], row["scheme"].as_str().unwrap());
            assert_eq!(cells[2].parse::<f64>().unwrap(), row["alpha"].as_f64().unwrap());
            assert_eq!(cells[3], row["k"].as_u64().map(|k| k.to_string()).unwrap_or_default());
            assert_eq!(cells[4].parse::<u64>().unwrap(), n.as_u64().unwrap());
            assert_eq!(cells[5], fmt_error(row["errors"][i].as_f64().unwrap()));
            if i > 0 {
                assert_eq!(cells[6], fmt_rate(row["rates"][i - 1].as_f64()));
            }
            assert_relative_eq!(
                cells[7].parse::<f64>().unwrap(),
                row["theoretical_rate"].as_f64().unwrap(),
                epsilon = 5e-3
            );
        }
    }
    assert!(lines.next().is_none());
}

#[test]
fn rows_carry_observed_and_theoretical_rates() {
    let cfg = small_study(Case::A, 0.5, vec![Scheme::Corrected, Scheme::Uncorrected, Scheme::L1]);
    let report = run_convergence(&cfg).unwrap();
    assert_eq!(report.rows.len(), 5);
    for row in &report.rows {
        assert_eq!(row.rates.len(), row.errors.len() - 1);
        assert_eq!(row.headline_rate, *row.rates.last().unwrap());
        let expected = match (row.scheme, row.k) {
            (Scheme::Corrected, Some(k)) => k as f64,
            _ => 1.0,
        };
        assert_eq!(row.theoretical_rate, expected);
    }
}

#[test]
fn supplied_and_quadrature_antiderivatives_agree_without_source() {
    let sys = SpatialSystem::<f64>::assemble(20).unwrap();
    let base = ProblemSpec {
        v: Arc::new(|x: f64| x * (1.0 - x)),
        b_init: Some(Arc::new(|x: f64| (2.0 * std::f64::consts::PI * x).sin())),
        ..ProblemSpec::zero(Regime::DiffusionWave, 1.5)
    };
    let supplied = ProblemSpec {
        g: Some(Arc::new(|_, _| 0.0)),
        ..base.clone()
    };
    let mut opts = SolverOptions::new(BdfOrder::new(4).unwrap(), 60);
    opts.snapshot_every = Some(1);
    let a = solve(&supplied, &sys, opts.clone()).unwrap();
    let b = solve(&base, &sys, opts).unwrap();
    assert_eq!(a.snapshots.len(), b.snapshots.len());
    for ((_, x), (_, y)) in a.snapshots.iter().zip(&b.snapshots) {
        for (p, q) in x.0.iter().zip(&y.0) {
            assert!((p - q).abs() <= 1e-13, "{p} vs {q}");
        }
    }
}
