//! `decayscope`: decay rates of vectorial damped waves on the circle.
//!
//! Exit status: 0 on success, 2 on usage or configuration errors, 3 on
//! numerical failure.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use decayscope::asymptotics::{default_schedule, slope_infinity, FactorChain, SlopeReport};
use decayscope::catalog;
use decayscope::cocycle::{c_infinity, Direction, NormConvention, DEFAULT_STEP};
use decayscope::damping::{DampingProfile, ProfileConfig};
use decayscope::search::{hunt, HuntConfig, Property};
use decayscope::spectrum::{assemble, decay_report, default_zero_tol, spectrum, DEFAULT_CUTOFF};
use decayscope::wave_sim::{
    energy_trace, generic_initial, gaussian_beam_initial, least_damped_beam, max_step, BeamSpec, EvolveOptions,
};
use decayscope::{Error, HermitianMatrix};

const THREADS_VAR: &str = "DECAYSCOPE_THREADS";

#[derive(Parser, Debug)]
#[command(name = "decayscope", version, about = "Energy decay rates of damped waves on the circle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Convention {
    /// Rate of `||G_t||` (the decay rate is twice the smaller branch).
    #[value(alias = "sec1")]
    Norm,
    /// Rate of `||G_t||^2`, twice the `norm` value.
    #[value(alias = "sec4")]
    SquaredNorm,
}

impl From<Convention> for NormConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Norm => NormConvention::Norm,
            Convention::SquaredNorm => NormConvention::SquaredNorm,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Reference {
    SuperhomogeneousTriple,
    DecreasingTriple,
    SubadditiveA,
    SubadditiveB,
    SubadditiveSum,
    SuperadditiveA,
    SuperadditiveB,
    SuperadditiveSum,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decay rate `alpha = 2 min(-D0, C_inf)` with both branches.
    Alpha {
        profile: PathBuf,
        #[arg(long = "K", default_value_t = DEFAULT_CUTOFF)]
        cutoff: usize,
        #[arg(long, value_enum, default_value = "norm")]
        convention: Convention,
        /// Add per-stage wall-clock milliseconds (makes output run-dependent).
        #[arg(long)]
        timings: bool,
    },
    /// High-frequency rate `C_inf` from the period map.
    Cinf {
        profile: PathBuf,
        #[arg(long, value_enum, default_value = "norm")]
        convention: Convention,
    },
    /// Eigenvalues of the truncated generator as `re,im` CSV.
    Spectrum {
        profile: PathBuf,
        #[arg(long = "K", default_value_t = DEFAULT_CUTOFF)]
        cutoff: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// `C_inf(lambda a)` over a uniform lambda grid as CSV.
    Scan {
        profile: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        lambda_min: f64,
        #[arg(long)]
        lambda_max: f64,
        #[arg(long)]
        points: usize,
        #[arg(long, value_enum, default_value = "norm")]
        convention: Convention,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Limits of `C_inf(lambda a) / lambda` at zero and infinity.
    Slopes { profile: PathBuf },
    /// Time-domain energy trace as `t,E,logE` CSV with a fitted decay rate.
    Simulate {
        profile: PathBuf,
        #[arg(long = "T")]
        duration: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long = "K", default_value_t = 32)]
        cutoff: usize,
        /// Launch a Gaussian beam of this frequency instead of random data.
        #[arg(long)]
        beam: Option<u32>,
        /// Beam centre.
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        record_every: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random search for non-homogeneous or non-additive `C_inf`.
    Hunt {
        #[arg(long)]
        property: Property,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Evaluate the matching reference witness as trial 0.
        #[arg(long)]
        include_reference: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a reference profile configuration.
    Reference {
        #[arg(value_enum)]
        name: Reference,
    },
}

#[derive(Serialize)]
struct AlphaOutput {
    convention: NormConvention,
    #[serde(rename = "K")]
    cutoff: usize,
    /// In the requested convention.
    c_infinity: f64,
    c_infinity_norm: f64,
    c_infinity_squared_norm: f64,
    d0: f64,
    alpha: f64,
    gcc: bool,
    gcc_lambda_min: f64,
    weak_stab: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings_ms: Option<Timings>,
}

#[derive(Serialize)]
struct Timings {
    assemble: f64,
    spectrum: f64,
    cocycle: f64,
}

#[derive(Serialize)]
struct CinfOutput {
    convention: NormConvention,
    /// No Fourier truncation is involved.
    #[serde(rename = "K")]
    cutoff: Option<usize>,
    c_infinity: f64,
    c_infinity_norm: f64,
    c_infinity_squared_norm: f64,
}

#[derive(Serialize)]
struct SlopesOutput {
    #[serde(rename = "K")]
    cutoff: Option<usize>,
    #[serde(flatten)]
    report: SlopeReport,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericalFailure { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| run(cli.command));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_VAR} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn load_profile(path: &Path) -> CliResult<DampingProfile> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(ProfileConfig::from_json(&text)?.to_profile()?)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports are plain data");
    s.push('\n');
    s
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Alpha { profile, cutoff, convention, timings } => {
            let p = load_profile(&profile)?;
            let t0 = Instant::now();
            let op = assemble(&p, cutoff)?;
            let t_assemble = ms(t0);
            let t1 = Instant::now();
            let spec = spectrum(&op, default_zero_tol(&op))?;
            let t_spectrum = ms(t1);
            let t2 = Instant::now();
            let r = decay_report(&p, &spec)?;
            let t_cocycle = ms(t2);
            let conv = NormConvention::from(convention);
            let out = AlphaOutput {
                convention: conv,
                cutoff: r.cutoff,
                c_infinity: conv.factor() * r.c_infinity,
                c_infinity_norm: r.c_infinity,
                c_infinity_squared_norm: r.c_infinity_squared_norm,
                d0: r.d0,
                alpha: r.alpha,
                gcc: r.gcc,
                gcc_lambda_min: r.gcc_lambda_min,
                weak_stab: r.weak_stab,
                timings_ms: timings.then_some(Timings {
                    assemble: t_assemble,
                    spectrum: t_spectrum,
                    cocycle: t_cocycle,
                }),
            };
            emit(None, &json(&out))
        }
        Command::Cinf { profile, convention } => {
            let p = load_profile(&profile)?;
            let c = c_infinity(&p, NormConvention::Norm, DEFAULT_STEP)?;
            let conv = NormConvention::from(convention);
            emit(
                None,
                &json(&CinfOutput {
                    convention: conv,
                    cutoff: None,
                    c_infinity: conv.factor() * c,
                    c_infinity_norm: c,
                    c_infinity_squared_norm: 2.0 * c,
                }),
            )
        }
        Command::Spectrum { profile, cutoff, out } => {
            let p = load_profile(&profile)?;
            let op = assemble(&p, cutoff)?;
            let report = spectrum(&op, default_zero_tol(&op))?;
            let mut csv = format!("# K={} zero_tol={:?}\nre,im\n", report.cutoff, report.zero_tol);
            for z in &report.eigenvalues {
                let _ = writeln!(csv, "{:?},{:?}", z.re, z.im);
            }
            emit(out.as_deref(), &csv)
        }
        Command::Scan { profile, lambda_min, lambda_max, points, convention, out } => {
            let p = load_profile(&profile)?;
            let csv = scan(&p, lambda_min, lambda_max, points, convention.into())?;
            emit(out.as_deref(), &csv)
        }
        Command::Slopes { profile } => {
            let p = load_profile(&profile)?;
            let chain = FactorChain::from_profile(&p)?;
            let report = slope_infinity(&chain, &default_schedule())?;
            emit(None, &json(&SlopesOutput { cutoff: None, report }))
        }
        Command::Simulate { profile, duration, dt, cutoff, beam, x0, seed, record_every, out } => {
            let p = load_profile(&profile)?;
            let csv = simulate(&p, duration, dt, cutoff, beam, x0, seed, record_every)?;
            emit(out.as_deref(), &csv)
        }
        Command::Hunt { property, trials, seed, n, include_reference, out } => {
            let mut config = HuntConfig::new(property, trials, seed, n);
            if include_reference {
                if n != 2 {
                    return Err(Failure::Usage("reference witnesses are 2x2; use --n 2".into()));
                }
                config = config.with_injected(reference_witness(property)?);
            }
            let findings = hunt(&config)?;
            let mut lines = String::new();
            for f in &findings {
                lines.push_str(&f.to_json_line());
                lines.push('\n');
            }
            log::info!("{} findings", findings.len());
            emit(out.as_deref(), &lines)
        }
        Command::Reference { name } => {
            let p = reference_profile(name)?;
            let cfg = p
                .to_config()
                .ok_or_else(|| Failure::Usage("profile has no configuration form".into()))?;
            emit(None, &(cfg.to_json() + "\n"))
        }
    }
}

fn scan(p: &DampingProfile, lo: f64, hi: f64, points: usize, conv: NormConvention) -> CliResult<String> {
    if points < 2 || !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(Failure::Usage("need 0 <= lambda-min < lambda-max and at least 2 points".into()));
    }
    let chain = FactorChain::from_profile(p).ok();
    let lambdas: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let values: Vec<f64> = lambdas
        .par_iter()
        .map(|&l| match &chain {
            Some(c) => c.c_infinity(l, conv),
            None => c_infinity(&p.scale(l)?, conv, DEFAULT_STEP),
        })
        .collect::<Result<_, _>>()?;
    // C_inf(lambda a) / lambda tends to lambda_min of the average of a.
    let slope_at_zero = conv.factor() * p.gcc_check(0.0)?.lambda_min;
    let mut csv = format!("# convention={} K=none\nlambda,cinf,cinf_over_lambda\n", convention_name(conv));
    for (l, c) in lambdas.iter().zip(&values) {
        let ratio = if *l == 0.0 { slope_at_zero } else { c / l };
        let _ = writeln!(csv, "{l:?},{c:?},{ratio:?}");
    }
    Ok(csv)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    p: &DampingProfile,
    duration: f64,
    dt: f64,
    cutoff: usize,
    beam: Option<u32>,
    x0: f64,
    seed: u64,
    record_every: usize,
) -> CliResult<String> {
    let (state, predicted) = match beam {
        Some(k) => {
            let seed_spec = BeamSpec::new(k, x0, Direction::Forward, vec![Default::default(); p.dim()]);
            let (spec, predicted) = least_damped_beam(p, &seed_spec, duration)?;
            (gaussian_beam_initial(p, &spec)?, Some(predicted))
        }
        None => (generic_initial(cutoff, p.dim(), seed), None),
    };
    let op = assemble(p, state.cutoff)?;
    if dt > max_step(op.cutoff) {
        return Err(Failure::Usage(format!("dt must not exceed {:?} for K = {}", max_step(op.cutoff), op.cutoff)));
    }
    let opts = EvolveOptions { record_every, ..Default::default() };
    let mut trace = energy_trace(&op, &state, duration, dt, opts, None)?;
    let window = (0.5 * duration, duration);
    let fitted = match decayscope::wave_sim::fit_decay_rate(&trace, window) {
        Ok(fit) => {
            trace.fitted_rate = Some(fit.rate);
            trace.fit_window = Some(window);
            format!("{:?}", fit.rate)
        }
        Err(e) => {
            log::warn!("no decay fit: {e}");
            "none".into()
        }
    };
    let mut head = format!("# K={} dt={dt:?} fit_window=[{:?},{:?}] fitted_rate={fitted}", op.cutoff, window.0, window.1);
    if let Some(g) = predicted {
        let _ = write!(head, " cocycle_energy_ratio={g:?}");
    }
    head.push('\n');
    Ok(head + &trace.to_csv())
}

fn convention_name(c: NormConvention) -> &'static str {
    match c {
        NormConvention::Norm => "norm",
        NormConvention::SquaredNorm => "squared_norm",
    }
}

fn reference_witness(property: Property) -> CliResult<Vec<HermitianMatrix>> {
    let raw: Vec<HermitianMatrix> = match property {
        Property::ScalingSuper => catalog::superhomogeneous_triple().into(),
        Property::ScalingSub => catalog::decreasing_triple().into(),
        Property::AdditivitySub => {
            let (a, b) = catalog::subadditive_pair();
            a.into_iter().chain(b).collect()
        }
        Property::AdditivitySuper => {
            let (a, b) = catalog::superadditive_pair();
            a.into_iter().chain(b).collect()
        }
    };
    Ok(catalog::clamped(&raw)?)
}

fn reference_profile(name: Reference) -> CliResult<DampingProfile> {
    let pair = |(a, b): ([HermitianMatrix; 2], [HermitianMatrix; 2])| catalog::interleaved_profiles(&a, &b);
    Ok(match name {
        Reference::SuperhomogeneousTriple => catalog::product_profile(&catalog::superhomogeneous_triple())?,
        Reference::DecreasingTriple => catalog::product_profile(&catalog::decreasing_triple())?,
        Reference::SubadditiveA => pair(catalog::subadditive_pair())?.0,
        Reference::SubadditiveB => pair(catalog::subadditive_pair())?.1,
        Reference::SubadditiveSum => {
            let (a, b) = pair(catalog::subadditive_pair())?;
            a.add(&b)?
        }
        Reference::SuperadditiveA => pair(catalog::superadditive_pair())?.0,
        Reference::SuperadditiveB => pair(catalog::superadditive_pair())?.1,
        Reference::SuperadditiveSum => {
            let (a, b) = pair(catalog::superadditive_pair())?;
            a.add(&b)?
        }
    })
}
