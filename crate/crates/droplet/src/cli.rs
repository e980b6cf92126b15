//! Command-line orchestration: configuration, pipeline drive, artifacts.
//!
//! Artifacts are deterministic byte for byte at a fixed configuration:
//! floats print in shortest round-trip form, JSON keys are either fixed
//! (summary header) or sorted (diagnostics), CSV rows follow the grid
//! order, and the sweep reassembles worker results by index.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expansion::{compute_expansion, EpsMode};
use crate::ode::{Dopri5, IntegrationEnd, OdeSystem, StepFlow};
use crate::params::Params;
use crate::reconstruct::physical_profile;
use crate::shooter::{
    find_critical_b, mass_map, solve_mass_condition, MassPoint, ProfileSample, SolveOptions,
    Tolerances,
};

/// Resolved run configuration; defaults overridden by a config file,
/// overridden in turn by flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n: f64,
    pub mass: f64,
    pub cutoff: u32,
    pub eps_mode: EpsMode,
    pub tol: Tolerances,
    pub profile_csv: PathBuf,
    pub physical_csv: PathBuf,
    pub summary_json: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            n: 2.0,
            mass: 1.0,
            cutoff: 12,
            eps_mode: EpsMode::Auto,
            tol: Tolerances::default(),
            profile_csv: PathBuf::from("profile.csv"),
            physical_csv: PathBuf::from("physical.csv"),
            summary_json: PathBuf::from("summary.json"),
            seed: 0,
        }
    }
}

impl RunConfig {
    /// The solver needs at least the quadratic shells (cutoff 2); the bare
    /// coefficient dump is meaningful from cutoff 1.
    fn validate(&self, min_cutoff: u32) -> Result<()> {
        if self.cutoff < min_cutoff {
            return Err(Error::Domain(format!(
                "cutoff must be at least {min_cutoff}, got {}",
                self.cutoff
            )));
        }
        let t = &self.tol;
        for (name, v) in [
            ("shoot_tol", t.shoot_tol),
            ("mass_tol", t.mass_tol),
            ("ode_rtol", t.ode_rtol),
            ("ode_atol", t.ode_atol),
            ("resonance_tol", t.resonance_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Parser)]
#[command(
    name = "droplet",
    version,
    about = "Self-similar droplet profiles for the thin-film equation with gravity"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Key=value configuration file; flags override its entries.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Mobility exponent, in the open interval (1.5, 3).
    #[arg(long)]
    n: Option<f64>,
    /// Prescribed droplet mass.
    #[arg(long)]
    mass: Option<f64>,
    /// Total degree kept in the contact-line series (at least 2).
    #[arg(long)]
    cutoff: Option<u32>,
    /// Series trust threshold: "auto" or a fixed value in (0, 1).
    #[arg(long)]
    eps: Option<String>,
    /// Acceptable |H'(1)| at the converged slope amplitude.
    #[arg(long)]
    shoot_tol: Option<f64>,
    /// Acceptable relative mass mismatch.
    #[arg(long)]
    mass_tol: Option<f64>,
    /// Relative step-error tolerance of the integrator.
    #[arg(long)]
    ode_rtol: Option<f64>,
    /// Absolute step-error tolerance of the integrator.
    #[arg(long)]
    ode_atol: Option<f64>,
    /// Smallest symbol magnitude the series inversion divides by.
    #[arg(long)]
    resonance_tol: Option<f64>,
    /// Seed for the randomized self-test checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Rescaled profile table output path.
    #[arg(long, value_name = "PATH")]
    profile_csv: Option<PathBuf>,
    /// Physical droplet table output path.
    #[arg(long, value_name = "PATH")]
    physical_csv: Option<PathBuf>,
    /// Run summary output path.
    #[arg(long, value_name = "PATH")]
    summary_json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the droplet profile and write CSV/JSON artifacts.
    Solve(ConfigArgs),
    /// Tabulate the achieved-mass map on a geometric grid of gravity strengths.
    Sweep {
        #[command(flatten)]
        common: ConfigArgs,
        /// Smallest gravity strength (positive).
        #[arg(long)]
        mu_min: f64,
        /// Largest gravity strength (greater than mu-min).
        #[arg(long)]
        mu_max: f64,
        /// Number of geometric grid points (at least 2).
        #[arg(long)]
        count: usize,
        /// Output CSV path; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Print the contact-line series coefficients as "k l m value" rows.
    Expand(ConfigArgs),
    /// Run seeded spot checks of the numerical kernels.
    Selftest(ConfigArgs),
}

/// Entry point for the binary; errors become JSON on stderr.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Solve(args) => resolve(&args, 2).and_then(cmd_solve),
        Cmd::Sweep {
            common,
            mu_min,
            mu_max,
            count,
            out,
        } => resolve(&common, 2)
            .and_then(|cfg| cmd_sweep(cfg, mu_min, mu_max, count, out.as_deref())),
        Cmd::Expand(args) => resolve(&args, 1).and_then(cmd_expand),
        Cmd::Selftest(args) => resolve(&args, 2).and_then(cmd_selftest),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({
                "kind": e.kind(),
                "message": e.to_string(),
            });
            eprintln!("{report}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(3))
        }
    }
}

fn parse_key_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::Domain(format!("{key}: expected a number, got {value:?}")))
}

fn parse_eps(value: &str) -> Result<EpsMode> {
    if value.eq_ignore_ascii_case("auto") {
        return Ok(EpsMode::Auto);
    }
    Ok(EpsMode::Fixed(parse_key_f64("eps", value)?))
}

fn apply_config_file(cfg: &mut RunConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Domain(format!("config line {}: expected key=value", idx + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "n" => cfg.n = parse_key_f64(key, value)?,
            "mass" => cfg.mass = parse_key_f64(key, value)?,
            "cutoff" => {
                cfg.cutoff = value
                    .parse()
                    .map_err(|_| Error::Domain(format!("cutoff: expected an integer, got {value:?}")))?
            }
            "eps" => cfg.eps_mode = parse_eps(value)?,
            "shoot_tol" => cfg.tol.shoot_tol = parse_key_f64(key, value)?,
            "mass_tol" => cfg.tol.mass_tol = parse_key_f64(key, value)?,
            "ode_rtol" => cfg.tol.ode_rtol = parse_key_f64(key, value)?,
            "ode_atol" => cfg.tol.ode_atol = parse_key_f64(key, value)?,
            "resonance_tol" => cfg.tol.resonance_tol = parse_key_f64(key, value)?,
            "seed" => {
                cfg.seed = value
                    .parse()
                    .map_err(|_| Error::Domain(format!("seed: expected an integer, got {value:?}")))?
            }
            "profile_csv" => cfg.profile_csv = PathBuf::from(value),
            "physical_csv" => cfg.physical_csv = PathBuf::from(value),
            "summary_json" => cfg.summary_json = PathBuf::from(value),
            _ => return Err(Error::Domain(format!("config: unknown key {key:?}"))),
        }
    }
    Ok(())
}

fn resolve(args: &ConfigArgs, min_cutoff: u32) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        apply_config_file(&mut cfg, path)?;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.mass {
        cfg.mass = v;
    }
    if let Some(v) = args.cutoff {
        cfg.cutoff = v;
    }
    if let Some(v) = &args.eps {
        cfg.eps_mode = parse_eps(v)?;
    }
    if let Some(v) = args.shoot_tol {
        cfg.tol.shoot_tol = v;
    }
    if let Some(v) = args.mass_tol {
        cfg.tol.mass_tol = v;
    }
    if let Some(v) = args.ode_rtol {
        cfg.tol.ode_rtol = v;
    }
    if let Some(v) = args.ode_atol {
        cfg.tol.ode_atol = v;
    }
    if let Some(v) = args.resonance_tol {
        cfg.tol.resonance_tol = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.profile_csv {
        cfg.profile_csv = v.clone();
    }
    if let Some(v) = &args.physical_csv {
        cfg.physical_csv = v.clone();
    }
    if let Some(v) = &args.summary_json {
        cfg.summary_json = v.clone();
    }
    cfg.validate(min_cutoff)?;
    Ok(cfg)
}

/// Fixed-order summary header; diagnostics live in their own namespace.
#[derive(Serialize)]
struct Summary {
    n: f64,
    nu: f64,
    #[serde(rename = "A")]
    big_a: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    eps: f64,
    x_hat: f64,
    b_bar: f64,
    mu_bar: f64,
    a: f64,
    /// Reconstructed droplet mass (table quadrature), not the target.
    mass: f64,
    hp_at_one: f64,
    residual_max: f64,
    cutoff: u32,
    iterations: u32,
    diagnostics: BTreeMap<String, serde_json::Value>,
}

fn cmd_solve(cfg: RunConfig) -> Result<()> {
    let params = Params::new(cfg.n, cfg.mass)?;
    let expansion = compute_expansion(&params, cfg.cutoff, cfg.tol.resonance_tol)?;
    let opts = SolveOptions {
        eps_mode: cfg.eps_mode,
        tol: cfg.tol,
    };
    let shoot = solve_mass_condition(&params, &expansion, &opts)?;
    let physical = physical_profile(&params, &shoot)?;

    write_profile_csv(&cfg.profile_csv, &shoot.profile)?;
    write_physical_csv(&cfg.physical_csv, &physical.samples)?;

    let iterations = shoot
        .diagnostics
        .get("mu_evaluations")
        .map_or(0, |v| *v as u32);
    let mut diagnostics: BTreeMap<String, serde_json::Value> = shoot
        .diagnostics
        .iter()
        .map(|(k, v)| (k.clone(), serde_json::json!(v)))
        .collect();
    diagnostics.insert("mass_target".into(), serde_json::json!(cfg.mass));
    diagnostics.insert("mass_integral".into(), serde_json::json!(shoot.mass_integral));
    diagnostics.insert("shoot_tol".into(), serde_json::json!(cfg.tol.shoot_tol));
    diagnostics.insert("mass_tol".into(), serde_json::json!(cfg.tol.mass_tol));
    diagnostics.insert("ode_rtol".into(), serde_json::json!(cfg.tol.ode_rtol));
    diagnostics.insert("ode_atol".into(), serde_json::json!(cfg.tol.ode_atol));
    diagnostics.insert(
        "resonance_tol".into(),
        serde_json::json!(cfg.tol.resonance_tol),
    );
    let eps_mode = match cfg.eps_mode {
        EpsMode::Auto => "auto".to_string(),
        EpsMode::Fixed(v) => format!("{v}"),
    };
    diagnostics.insert("eps_mode".into(), serde_json::json!(eps_mode));
    diagnostics.insert("seed".into(), serde_json::json!(cfg.seed));
    diagnostics.insert("series_sweeps".into(), serde_json::json!(expansion.sweeps));
    diagnostics.insert(
        "series_terms".into(),
        serde_json::json!(expansion.series.len()),
    );
    diagnostics.insert(
        "profile_points".into(),
        serde_json::json!(shoot.profile.len()),
    );

    let summary = Summary {
        n: params.n,
        nu: params.nu,
        big_a: params.big_a,
        alpha: params.alpha,
        beta: params.beta,
        gamma: params.gamma,
        eps: shoot.eps,
        x_hat: shoot.x_hat,
        b_bar: shoot.b,
        mu_bar: shoot.mu,
        a: physical.a,
        mass: physical.mass_check,
        hp_at_one: shoot.hp_at_one,
        residual_max: expansion.residual_norm,
        cutoff: cfg.cutoff,
        iterations,
        diagnostics,
    };
    let mut text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    text.push('\n');
    std::fs::write(&cfg.summary_json, &text)?;
    print!("{text}");
    Ok(())
}

fn write_profile_csv(path: &Path, rows: &[ProfileSample]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 96 + 32);
    text.push_str("x,H,Hp,Hpp,Hppp,mass_cum\n");
    for r in rows {
        let _ = writeln!(text, "{},{},{},{},{},{}", r.x, r.h, r.h1, r.h2, r.h3, r.mass);
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn write_physical_csv(path: &Path, samples: &[(f64, f64)]) -> Result<()> {
    let mut text = String::with_capacity(samples.len() * 48 + 16);
    text.push_str("y,Hcal\n");
    for (y, h) in samples {
        let _ = writeln!(text, "{y},{h}");
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_sweep(
    cfg: RunConfig,
    mu_min: f64,
    mu_max: f64,
    count: usize,
    out: Option<&Path>,
) -> Result<()> {
    if !(mu_min > 0.0) || !mu_min.is_finite() || !(mu_max > mu_min) || !mu_max.is_finite() {
        return Err(Error::Domain(format!(
            "sweep needs 0 < mu_min < mu_max, got [{mu_min}, {mu_max}]"
        )));
    }
    if count < 2 {
        return Err(Error::Domain(format!(
            "sweep needs at least 2 grid points, got {count}"
        )));
    }
    let params = Params::new(cfg.n, cfg.mass)?;
    let expansion = compute_expansion(&params, cfg.cutoff, cfg.tol.resonance_tol)?;
    let opts = SolveOptions {
        eps_mode: cfg.eps_mode,
        tol: cfg.tol,
    };
    let ratio = mu_max / mu_min;
    let mus: Vec<f64> = (0..count)
        .map(|i| mu_min * ratio.powf(i as f64 / (count - 1) as f64))
        .collect();

    // Workers pick grid points round-robin; rows reassemble by index, so
    // the output order is independent of scheduling.
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(mus.len());
    let mut results: Vec<(usize, Result<MassPoint>)> = std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(workers);
        for w in 0..workers {
            let mus = &mus;
            let params = &params;
            let expansion = &expansion;
            let opts = &opts;
            handles.push(scope.spawn(move || {
                (w..mus.len())
                    .step_by(workers)
                    .map(|i| (i, mass_map(params, expansion, mus[i], opts)))
                    .collect::<Vec<_>>()
            }));
        }
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    results.sort_by_key(|(i, _)| *i);

    let mut failures = 0usize;
    let mut text = String::from("mu,b_bar,mass_integral,M_of_mu,error\n");
    for (i, outcome) in results {
        match outcome {
            Ok(p) => {
                let _ = writeln!(text, "{},{},{},{},", mus[i], p.b, p.integral, p.value);
            }
            Err(e) => {
                failures += 1;
                let _ = writeln!(text, "{},,,,{}", mus[i], e.kind());
            }
        }
    }
    match out {
        Some(path) => std::fs::write(path, &text)?,
        None => print!("{text}"),
    }
    if failures * 2 > count {
        return Err(Error::Convergence(format!(
            "{failures} of {count} sweep points failed"
        )));
    }
    Ok(())
}

fn cmd_expand(cfg: RunConfig) -> Result<()> {
    let params = Params::new(cfg.n, cfg.mass)?;
    let expansion = compute_expansion(&params, cfg.cutoff, cfg.tol.resonance_tol)?;
    let header = serde_json::json!({
        "n": params.n,
        "cutoff": cfg.cutoff,
        "residual_norm": expansion.residual_norm,
    });
    println!("{header}");
    print!("{}", expansion.series.dump());
    Ok(())
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_draw(state: &mut u64) -> f64 {
    (splitmix64(state) >> 11) as f64 / (1u64 << 53) as f64
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        println!("selftest {what}: ok");
        Ok(())
    } else {
        Err(Error::Convergence(format!("selftest {what} failed")))
    }
}

struct Exponential;

impl OdeSystem<1> for Exponential {
    fn rhs(&self, _x: f64, y: &[f64; 1], dydx: &mut [f64; 1]) {
        dydx[0] = y[0];
    }
}

fn cmd_selftest(cfg: RunConfig) -> Result<()> {
    let mut state = cfg.seed;

    // Indicial symbols at randomized exponents: the two cubic routes agree
    // and the distinguished root identities hold.
    let mut symbols_ok = true;
    for _ in 0..16 {
        let n = 1.501 + 1.498 * unit_draw(&mut state);
        let p = Params::new(n, 1.0).map_err(|e| Error::Convergence(e.to_string()))?;
        for _ in 0..8 {
            let xi = -3.0 + 9.0 * unit_draw(&mut state);
            let scale = 1.0 + xi.abs().powi(3);
            if (p.p(xi) - p.p_expanded(xi)).abs() > 1e-10 * scale {
                symbols_ok = false;
            }
        }
        if p.q(0.0) != -p.big_a || p.p(p.beta) != 0.0 {
            symbols_ok = false;
        }
        if (p.q(p.beta) - (n - 1.0) * p.big_a).abs() > 1e-12 * p.big_a.max(1.0) {
            symbols_ok = false;
        }
    }
    check(symbols_ok, "symbol-identities")?;

    // Series head coefficients against their closed forms.
    let n = 1.6 + 1.2 * unit_draw(&mut state);
    let params = Params::new(n, 1.0)?;
    let expansion = compute_expansion(&params, 3, cfg.tol.resonance_tol)?;
    let c1 = expansion.series.coeff(crate::triseries::MultiIndex::new(1, 0, 0));
    let c2 = expansion.series.coeff(crate::triseries::MultiIndex::new(0, 1, 0));
    let c3 = expansion.series.coeff(crate::triseries::MultiIndex::new(0, 0, 1));
    let a = params.big_a;
    let head_ok = (c1 - a / params.p(1.0)).abs() <= 1e-12
        && c2 == -1.0
        && (c3 - params.nu * a.powf(-2.0 * params.nu / 3.0) / params.p(params.gamma)).abs()
            <= 1e-12;
    check(head_ok, "series-head")?;

    // Integrator accuracy on the exponential.
    let solver = Dopri5::new(1e-10, 1e-12);
    let end = solver.integrate(&Exponential, 0.0, [1.0], 1.0, |_, _| StepFlow::Continue)?;
    let integrator_ok = match end {
        IntegrationEnd::Reached { y } => (y[0] - std::f64::consts::E).abs() < 1e-8,
        _ => false,
    };
    check(integrator_ok, "integrator")?;

    // One full inner shoot: the slope condition is met at the threshold.
    let params = Params::new(2.0, 1.0)?;
    let expansion = compute_expansion(&params, 8, cfg.tol.resonance_tol)?;
    let opts = SolveOptions {
        eps_mode: cfg.eps_mode,
        tol: cfg.tol,
    };
    let critical = find_critical_b(&params, &expansion, 1.0, &opts)?;
    check(
        critical.outcome.state.h1.abs() <= cfg.tol.shoot_tol && critical.b > 0.0,
        "shoot",
    )?;

    println!("selftest: 4 checks passed");
    Ok(())
}

pub use run as main_entry;
