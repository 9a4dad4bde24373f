use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fracbdf::correction::Regime;
use fracbdf::harness::{
    dump_cfl_sweep, dump_coeffs, dump_sweep_weights, dump_weights, emit, run_convergence, run_stability_flip, Case, ExperimentConfig,
    Format,
};
use fracbdf::stepper::Scheme;
use fracbdf::Error;

/// Corrected BDF convolution quadrature for fractional evolution equations.
#[derive(Parser, Debug)]
#[command(name = "fracbdf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Temporal convergence study against a refined reference.
    Converge(ConvergeArgs),
    /// Run the diffusion-wave benchmark across the predicted stability threshold.
    Flip(FlipArgs),
    /// Exact starting-correction coefficients with certificates.
    Coeffs(CoeffsArgs),
    /// Step-size constant `c(alpha, k)` over a grid of orders.
    Cfl(CflArgs),
    /// Convolution weights of `delta(z)^alpha`.
    Weights(WeightsArgs),
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    /// TOML file; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<Case>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long = "N", value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    #[arg(long = "M")]
    mesh: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    scheme: Option<Vec<Scheme>>,
    #[arg(long)]
    ref_factor: Option<usize>,
    #[arg(long)]
    ref_check: bool,
    #[arg(long)]
    final_time: Option<f64>,
    #[arg(long)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    override_stability: bool,
    /// Replace missing time derivatives of the source by finite differences.
    #[arg(long)]
    fd_fallback: bool,
    /// Also emit the error history of the finest run.
    #[arg(long)]
    trace: bool,
    /// Print a human-readable table to stderr.
    #[arg(long)]
    table: bool,
    /// Write the convolution weights used by the sweep as CSV.
    #[arg(long)]
    dump_weights: Option<PathBuf>,
    /// Exit with status 4 unless every row reaches its theoretical rate within this margin.
    #[arg(long)]
    check: Option<f64>,
}

#[derive(Args, Debug)]
struct FlipArgs {
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long = "M", default_value_t = 100)]
    mesh: usize,
    #[arg(long = "N", value_delimiter = ',', default_values_t = [1700, 1800])]
    steps: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    final_time: f64,
    #[arg(long, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the final profiles as CSV.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Exit with status 4 when an observed verdict contradicts the prediction.
    #[arg(long)]
    check: bool,
}

#[derive(Args, Debug)]
struct CoeffsArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3, 4, 5, 6])]
    k: Vec<usize>,
    #[arg(long, default_value = "sub")]
    regime: Regime,
    #[arg(long, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CflArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 4, 5, 6])]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct WeightsArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 16)]
    count: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn converge(args: ConvergeArgs) -> Result<bool, Error> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.case {
        cfg.case = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.k {
        cfg.k = v;
    }
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.mesh {
        cfg.mesh = v;
    }
    if let Some(v) = args.scheme {
        cfg.schemes = v;
    }
    if let Some(v) = args.ref_factor {
        cfg.ref_factor = v;
    }
    if let Some(v) = args.final_time {
        cfg.final_time = v;
    }
    if let Some(v) = args.format {
        cfg.format = v;
    }
    if args.out.is_some() {
        cfg.out = args.out;
    }
    cfg.ref_check |= args.ref_check;
    cfg.override_stability |= args.override_stability;
    cfg.fd_fallback |= args.fd_fallback;
    cfg.trace |= args.trace;
    if args.dump_weights.is_some() {
        cfg.dump_weights = args.dump_weights;
    }
    if let Some(p) = &cfg.dump_weights {
        emit(Some(p), &dump_sweep_weights(&cfg)?)?;
    }

    let report = run_convergence(&cfg)?;
    let body = match cfg.format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json()?,
    };
    emit(cfg.out.as_deref(), &body)?;
    if cfg.trace && cfg.format == Format::Csv {
        let path = cfg.out.as_deref().map(|p| p.with_extension("trace.csv"));
        match path {
            Some(p) => emit(Some(&p), &report.trace_csv())?,
            None => emit(None, &format!("\n{}", report.trace_csv()))?,
        }
    }
    if args.table {
        eprint!("{}", report.to_table());
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(match args.check {
        Some(margin) => report.rows.iter().all(|r| {
            r.headline_rate
                .is_some_and(|rate| (rate - r.theoretical_rate).abs() <= margin)
        }),
        None => true,
    })
}

fn flip(args: FlipArgs) -> Result<bool, Error> {
    let report = run_stability_flip(args.alpha, args.k, args.mesh, &args.steps, args.final_time)?;
    let body = match args.format {
        Format::Csv => report.to_csv(),
        Format::Json => serde_json::to_string_pretty(&report)?,
    };
    emit(args.out.as_deref(), &body)?;
    if let Some(p) = &args.profile {
        emit(Some(p), &report.profile_csv())?;
    }
    Ok(!args.check || report.verdicts.iter().all(|v| v.predicted_stable == v.observed_stable))
}

fn coeffs(args: CoeffsArgs) -> Result<bool, Error> {
    let mut body = String::new();
    match args.format {
        Format::Json => {
            let parts: Vec<serde_json::Value> = args
                .k
                .iter()
                .map(|&k| Ok(serde_json::from_str(&dump_coeffs(k, args.regime, Format::Json)?)?))
                .collect::<Result<_, Error>>()?;
            body = serde_json::to_string_pretty(&parts)?;
        }
        Format::Csv => {
            for (i, &k) in args.k.iter().enumerate() {
                let csv = dump_coeffs(k, args.regime, Format::Csv)?;
                let skip = if i == 0 { 0 } else { 1 };
                for line in csv.lines().skip(skip) {
                    body.push_str(line);
                    body.push('\n');
                }
            }
        }
    }
    emit(args.out.as_deref(), &body)?;
    Ok(true)
}

fn cfl(args: CflArgs) -> Result<bool, Error> {
    let alphas = args
        .alpha
        .unwrap_or_else(|| (0..=99).map(|i| 1.0 + 0.01 * i as f64).collect());
    emit(args.out.as_deref(), &dump_cfl_sweep(&args.k, &alphas)?)?;
    Ok(true)
}

fn weights(args: WeightsArgs) -> Result<bool, Error> {
    emit(args.out.as_deref(), &dump_weights(args.alpha, args.k, args.count)?)?;
    Ok(true)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidOrder { .. }
        | Error::AlphaOutOfRange { .. }
        | Error::InvalidMesh(_)
        | Error::UnsupportedScheme(_) => 2,
        Error::StabilityRefused { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Converge(a) => converge(a),
        Command::Flip(a) => flip(a),
        Command::Coeffs(a) => coeffs(a),
        Command::Cfl(a) => cfl(a),
        Command::Weights(a) => weights(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("check failed");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
