//! Batch verification runner.
//!
//! Subcommands: `algebra-check`, `lattice-verify`, `eval`, `legendre`,
//! `trace-verify`. Reports are JSON on stdout (or `--out`); progress goes to
//! stderr. Exit codes: 0 success, 1 property violation, 2 invalid
//! input/singularity, 3 internal assertion failure.

use std::fmt::Display;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use cdell_core::algebra::identity::{identity_suite, IdentityKind, IdentityReport};
use cdell_core::algebra::CDElement;
use cdell_core::cm_trace::{fi_estimates, relative_gap, verify_trace, TraceContext, TraceError};
use cdell_core::config::{parse_element, LatticeConfig};
use cdell_core::elliptic::{
    wp_n_eval, wp_tau_eval, zeta_eval, zeta_ladder, EvalContext, SeriesError, SeriesParams,
};
use cdell_core::kernels::MultiIndex;
use cdell_core::lattice::{brandt_check, BrandtMode, Lattice};
use cdell_core::number_field::MQElement;
use cdell_core::report::{exact_coords, float_coords, rat_coords, TOOL_VERSION};
use cdell_core::scalar::Scalar;

#[derive(Parser)]
#[command(name = "cdell", version, about = "Cayley-Dickson CM-lattice and elliptic function verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Cap the parallel shell workers.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Args, Clone)]
struct LatticeArgs {
    /// Lattice config file (JSON).
    #[arg(long)]
    lattice: Option<PathBuf>,
    /// Standard integer lattice at this level when no config is given.
    #[arg(long)]
    level: Option<u32>,
}

impl LatticeArgs {
    fn build(&self) -> Result<(LatticeConfig, Lattice), CliError> {
        let cfg = match (&self.lattice, self.level) {
            (Some(path), _) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::input(format!("reading {}: {e}", path.display())))?;
                LatticeConfig::from_json(&text).map_err(CliError::from_display)?
            }
            (None, Some(level)) => LatticeConfig::standard(level),
            (None, None) => {
                return Err(CliError::input("need --lattice <file> or --level <k>"))
            }
        };
        let lattice = cfg.build().map_err(CliError::from_display)?;
        Ok((cfg, lattice))
    }
}

#[derive(Args, Clone)]
struct SeriesArgs {
    /// Truncation radius (max-norm bound on coefficient vectors).
    #[arg(long, default_value_t = 4)]
    radius: u32,
    /// Sum omega and -omega jointly.
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    pairing: Toggle,
    /// Embedding precision in bits (2..=53).
    #[arg(long, default_value_t = 53)]
    precision: u32,
    /// Singularity exclusion radius; default 1e-6 * shortest generator.
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

impl SeriesArgs {
    fn params(&self, progress: bool) -> SeriesParams {
        SeriesParams {
            radius: self.radius,
            eps: self.eps,
            pairing: self.pairing == Toggle::On,
            precision: self.precision,
            progress,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the randomized algebra identity suite at one level.
    AlgebraCheck {
        #[arg(long, default_value_t = 3)]
        level: u32,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Closure, Brandt and adjugate checks; optional CM-multiplier matrix.
    LatticeVerify {
        #[command(flatten)]
        lattice: LatticeArgs,
        /// Left multiplicator coordinate string, e.g. "1+e1" or "sqrt(2)*e1".
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<String>,
        /// Right multiplicator coordinate string.
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<String>,
    },
    /// Evaluate one of the lattice series at a point.
    Eval {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[command(flatten)]
        series: SeriesArgs,
        #[arg(long, value_enum)]
        function: Function,
        /// Evaluation point coordinate string.
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        /// Derivative coordinate for wp-tau.
        #[arg(long, default_value_t = 1)]
        i: usize,
        /// Multi-index for wp-n, comma-separated exponents over x_1..x_(2^k-1).
        #[arg(long)]
        n: Option<String>,
    },
    /// Legendre constants eta_h = 2 zeta(omega_h / 2).
    Legendre {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[command(flatten)]
        series: SeriesArgs,
        /// Cross-check the quasi-period defect at this many random points.
        #[arg(long, default_value_t = 2)]
        check_points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Verify the division-value trace formula over a radius ladder.
    TraceVerify {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[command(flatten)]
        series: SeriesArgs,
        #[arg(long, allow_hyphen_values = true)]
        lambda: String,
        #[arg(long, default_value = "1", allow_hyphen_values = true)]
        mu: String,
        /// Comma-separated radius ladder, e.g. "3,4,5".
        #[arg(long)]
        radius_ladder: Option<String>,
        /// Maximum accepted relative gap at the largest radius.
        #[arg(long, default_value_t = 0.1)]
        tolerance: f64,
        /// Components with |rhs| below this floor are exempt from the gap gate.
        #[arg(long, default_value_t = 1e-6)]
        rhs_floor: f64,
        /// Estimate the constants C_i empirically at this many probe points.
        #[arg(long, default_value_t = 0)]
        fi_probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Function {
    Zeta,
    WpTau,
    WpN,
}

struct CliError {
    message: String,
    exit: u8,
}

impl CliError {
    fn input(msg: impl Into<String>) -> Self {
        CliError {
            message: msg.into(),
            exit: 2,
        }
    }

    fn internal(msg: impl Into<String>) -> Self {
        CliError {
            message: msg.into(),
            exit: 3,
        }
    }

    fn from_display(e: impl Display) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<SeriesError> for CliError {
    fn from(e: SeriesError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match &e {
            TraceError::CardinalityMismatch { .. } | TraceError::NormCountMismatch(..) => {
                CliError::internal(e.to_string())
            }
            _ => CliError::input(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    let progress = !cli.quiet;
    let result = match &cli.command {
        Command::AlgebraCheck { level, trials, seed } => cmd_algebra_check(*level, *trials, *seed),
        Command::LatticeVerify { lattice, lambda, mu } => {
            cmd_lattice_verify(lattice, lambda.as_deref(), mu.as_deref())
        }
        Command::Eval {
            lattice,
            series,
            function,
            point,
            i,
            n,
        } => cmd_eval(lattice, series, *function, point, *i, n.as_deref(), progress),
        Command::Legendre {
            lattice,
            series,
            check_points,
            seed,
        } => cmd_legendre(lattice, series, *check_points, *seed, progress),
        Command::TraceVerify {
            lattice,
            series,
            lambda,
            mu,
            radius_ladder,
            tolerance,
            rhs_floor,
            fi_probes,
            seed,
        } => cmd_trace_verify(
            lattice,
            series,
            lambda,
            mu,
            radius_ladder.as_deref(),
            *tolerance,
            *rhs_floor,
            *fi_probes,
            *seed,
            progress,
        ),
    };
    match result {
        Ok((report, exit)) => {
            let text = serde_json::to_string_pretty(&report).expect("serializable report");
            match &cli.out {
                Some(path) => {
                    if let Err(e) = fs::write(path, text) {
                        eprintln!("error: writing {}: {e}", path.display());
                        return ExitCode::from(2);
                    }
                }
                None => println!("{text}"),
            }
            ExitCode::from(exit)
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.exit)
        }
    }
}

fn identity_json(report: &IdentityReport) -> Value {
    let mut identities = serde_json::Map::new();
    for kind in IdentityKind::ALL {
        let c = report.check(kind);
        identities.insert(
            kind.name().to_string(),
            json!({
                "holds": c.holds,
                "expected_to_hold": kind.expected_to_hold(report.level),
                "max_residual": c.max_residual,
                "witness": c.witness.as_ref().map(|w| {
                    w.iter().map(rat_coords).collect::<Vec<_>>()
                }),
            }),
        );
    }
    json!({
        "tool_version": TOOL_VERSION,
        "level": report.level,
        "trials": report.trials,
        "seed": report.seed,
        "identities": Value::Object(identities),
        "matches_expectations": report.matches_expectations(),
    })
}

fn cmd_algebra_check(level: u32, trials: u64, seed: u64) -> Result<(Value, u8), CliError> {
    if trials == 0 {
        return Err(CliError::input("trials must be >= 1"));
    }
    if level > 6 {
        return Err(CliError::input("level too large for the identity suite"));
    }
    let report = identity_suite(level, trials, seed);
    let ok = report.matches_expectations();
    Ok((identity_json(&report), if ok { 0 } else { 1 }))
}

fn cmd_lattice_verify(
    largs: &LatticeArgs,
    lambda: Option<&str>,
    mu: Option<&str>,
) -> Result<(Value, u8), CliError> {
    let (cfg, lattice) = largs.build()?;
    let field = lattice.field().clone();
    let level = lattice.level();
    let dim = lattice.dim();

    let closed = lattice.is_closed_under_multiplication();
    let mut brandt_rational = true;
    let mut brandt_integral = true;
    for a in lattice.generators() {
        for b in lattice.generators() {
            brandt_rational &= brandt_check(a, b, BrandtMode::Rational);
            brandt_integral &= brandt_check(a, b, BrandtMode::Integral);
        }
    }
    // adjugate identity, exact
    let mut adjugate_ok = true;
    for i in 0..dim {
        for l in 0..dim {
            let mut acc = <MQElement as Scalar>::zero();
            for h in 0..dim {
                acc = acc.add(&lattice.w().entry(h, i).mul(lattice.theta().entry(h, l)));
            }
            let expect = if i == l {
                lattice.det_w().clone()
            } else {
                <MQElement as Scalar>::zero()
            };
            adjugate_ok &= acc == expect;
        }
    }

    let mut ok = closed && brandt_rational && adjugate_ok;
    let mut multiplier = Value::Null;
    if lambda.is_some() || mu.is_some() {
        let one = CDElement::<MQElement>::one(level);
        let lam = match lambda {
            Some(s) => parse_element(&field, level, s).map_err(CliError::from_display)?,
            None => one.clone(),
        };
        let m = match mu {
            Some(s) => parse_element(&field, level, s).map_err(CliError::from_display)?,
            None => one,
        };
        match lattice.cm_multiplier_matrix(&lam, &m) {
            Ok(cm) => {
                multiplier = json!({
                    "lambda": exact_coords(&cm.lambda),
                    "mu": exact_coords(&cm.mu),
                    "n": cm.n,
                });
            }
            Err(e) => {
                ok = false;
                multiplier = json!({ "error": e.to_string() });
            }
        }
    }

    let report = json!({
        "tool_version": TOOL_VERSION,
        "config": {
            "level": level,
            "radicands": cfg.radicands,
            "det_w": lattice.det_w().to_string(),
        },
        "closed_under_multiplication": closed,
        "brandt_rational": brandt_rational,
        "brandt_integral": brandt_integral,
        "adjugate_identity": adjugate_ok,
        "generators": lattice.generators().iter().map(exact_coords).collect::<Vec<_>>(),
        "cm_multiplier": multiplier,
    });
    Ok((report, if ok { 0 } else { 1 }))
}

fn params_json(params: &SeriesParams, ctx: &EvalContext) -> Value {
    json!({
        "radius": params.radius,
        "pairing": params.pairing,
        "precision": params.precision,
        "eps": params.eps.unwrap_or(1e-6 * ctx.shortest_generator()),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    largs: &LatticeArgs,
    series: &SeriesArgs,
    function: Function,
    point: &str,
    i: usize,
    n: Option<&str>,
    progress: bool,
) -> Result<(Value, u8), CliError> {
    let (_, lattice) = largs.build()?;
    let field = lattice.field().clone();
    let level = lattice.level();
    let params = series.params(progress && series.radius >= 4);
    let ctx = EvalContext::new(&lattice, params.precision)?;
    let exact_point = parse_element(&field, level, point).map_err(CliError::from_display)?;
    let zf = embed_point(&lattice, &exact_point, params.precision)?;

    let (name, sv) = match function {
        Function::Zeta => ("zeta", zeta_eval(&zf, &ctx, &params)?),
        Function::WpTau => {
            if i == 0 || i >= lattice.dim() {
                return Err(CliError::input(format!("--i must lie in 1..{}", lattice.dim() - 1)));
            }
            ("wp_tau", wp_tau_eval(i, &zf, &ctx, &params)?)
        }
        Function::WpN => {
            let text = n.ok_or_else(|| CliError::input("wp-n needs --n"))?;
            let exps: Result<Vec<u16>, _> = text.split(',').map(|p| p.trim().parse()).collect();
            let exps = exps.map_err(|_| CliError::input(format!("bad multi-index {text:?}")))?;
            let mi = MultiIndex::from_exps(level, exps).map_err(CliError::from_display)?;
            ("wp_n", wp_n_eval(&mi, &zf, &ctx, &params)?)
        }
    };
    let report = json!({
        "tool_version": TOOL_VERSION,
        "function": name,
        "point": float_coords(&zf),
        "i": i,
        "n": n,
        "params": params_json(&params, &ctx),
        "value": float_coords(&sv.value),
        "tail_estimate": sv.tail_estimate,
    });
    Ok((report, 0))
}

fn embed_point(
    lattice: &Lattice,
    z: &CDElement<MQElement>,
    precision: u32,
) -> Result<CDElement<f64>, CliError> {
    let coords: Result<Vec<f64>, _> = lattice
        .basis()
        .coords_of(z)
        .iter()
        .map(|c| c.embed(precision))
        .collect();
    Ok(lattice
        .basis()
        .from_coords(&coords.map_err(CliError::from_display)?))
}

fn cmd_legendre(
    largs: &LatticeArgs,
    series: &SeriesArgs,
    check_points: usize,
    seed: u64,
    progress: bool,
) -> Result<(Value, u8), CliError> {
    let (_, lattice) = largs.build()?;
    let params = series.params(progress && series.radius >= 4);
    let ctx = EvalContext::new(&lattice, params.precision)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zs: Vec<CDElement<f64>> = (0..check_points)
        .map(|_| random_cell_point(&ctx, &mut rng))
        .collect();
    // One traversal: eta from the half-generator arguments, residuals from
    // the probe points and their shifts.
    let dim = ctx.dim();
    let gens: Vec<CDElement<f64>> = (0..dim).map(|h| ctx.generator(h)).collect();
    let mut args: Vec<CDElement<f64>> = gens.iter().map(|g| g.scale(&0.5)).collect();
    for z in &zs {
        args.push(z.clone());
        for g in &gens {
            args.push(z.add(g));
        }
    }
    let vals = zeta_ladder(&ctx, &params, &[params.radius], &args)?.remove(0);
    let eta: Vec<CDElement<f64>> = vals[..dim].iter().map(|sv| sv.value.scale(&2.0)).collect();
    let residuals: Vec<Vec<f64>> = (0..zs.len())
        .map(|zi| {
            let base = &vals[dim + zi * (dim + 1)].value;
            (0..dim)
                .map(|h| {
                    let shifted = &vals[dim + zi * (dim + 1) + 1 + h].value;
                    shifted.sub(base).sub(&eta[h]).magnitude_f64()
                })
                .collect()
        })
        .collect();
    let report = json!({
        "tool_version": TOOL_VERSION,
        "params": params_json(&params, &ctx),
        "eta": eta.iter().map(float_coords).collect::<Vec<_>>(),
        "quasi_periodicity_residuals": residuals,
    });
    Ok((report, 0))
}

fn random_cell_point(ctx: &EvalContext, rng: &mut ChaCha8Rng) -> CDElement<f64> {
    let dim = ctx.dim();
    let mut z = CDElement::<f64>::zero(ctx.level());
    for h in 0..dim {
        let u: f64 = rng.gen_range(0.15..0.45);
        z = z.add(&ctx.generator(h).scale(&u));
    }
    z
}

#[allow(clippy::too_many_arguments)]
fn cmd_trace_verify(
    largs: &LatticeArgs,
    series: &SeriesArgs,
    lambda: &str,
    mu: &str,
    radius_ladder: Option<&str>,
    tolerance: f64,
    rhs_floor: f64,
    fi_probes: usize,
    seed: u64,
    progress: bool,
) -> Result<(Value, u8), CliError> {
    let (_, lattice) = largs.build()?;
    let field = lattice.field().clone();
    let level = lattice.level();
    let lam = parse_element(&field, level, lambda).map_err(CliError::from_display)?;
    let m = parse_element(&field, level, mu).map_err(CliError::from_display)?;
    let radii: Vec<u32> = match radius_ladder {
        Some(s) => {
            let parsed: Result<Vec<u32>, _> = s.split(',').map(|p| p.trim().parse()).collect();
            parsed.map_err(|_| CliError::input(format!("bad radius ladder {s:?}")))?
        }
        None => vec![series.radius],
    };
    if radii.is_empty() {
        return Err(CliError::input("empty radius ladder"));
    }
    let params = series.params(progress && *radii.iter().max().unwrap() >= 4);
    let (ds, outcome) = verify_trace(&lattice, &lam, &m, &params, &radii)?;

    // gates: gap at the largest radius, trend with 20% jitter, exact
    // rhs = -(N lambda N mu)^3 C_i identity
    let last = outcome.rows.last().expect("nonempty ladder");
    let norm3 = ds.norm_cubed();
    let mut gates_ok = true;
    let mut identity_max = 0.0f64;
    for c in &last.components {
        let neg = c.c_i.scale(&-norm3);
        let resid = relative_gap(&c.rhs, &neg);
        identity_max = identity_max.max(resid);
        if resid > 1e-12 {
            gates_ok = false;
        }
    }
    let mut qualifying = Vec::new();
    for c in &last.components {
        if c.rhs.magnitude_f64() > rhs_floor {
            qualifying.push(c.i);
            if c.relative_gap > tolerance {
                gates_ok = false;
            }
        }
    }
    // trend per qualifying component
    for &i in &qualifying {
        let gaps: Vec<f64> = outcome
            .rows
            .iter()
            .map(|row| row.components[i - 1].relative_gap)
            .collect();
        for w in gaps.windows(2) {
            if w[1] > w[0] * 1.2 {
                gates_ok = false;
            }
        }
    }

    let mut fi_json = Value::Null;
    if fi_probes > 0 {
        let tc = TraceContext::new(&lattice, &ds, params.precision).map_err(CliError::from)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ctx = EvalContext::new(&lattice, params.precision)?;
        let zs: Vec<CDElement<f64>> = (0..fi_probes)
            .map(|_| random_cell_point(&ctx, &mut rng))
            .collect();
        let estimates = fi_estimates(&tc, &ds, &params, &zs).map_err(CliError::from)?;
        fi_json = json!(estimates
            .iter()
            .map(|e| {
                json!({
                    "z": float_coords(&e.z),
                    "f": e.f.iter().map(float_coords).collect::<Vec<_>>(),
                    "tail_estimate": e.tail_estimate,
                })
            })
            .collect::<Vec<_>>());
    }

    let ctx = EvalContext::new(&lattice, params.precision)?;
    let report = json!({
        "tool_version": TOOL_VERSION,
        "params": {
            "series": params_json(&params, &ctx),
            "radius_ladder": radii,
            "tolerance": tolerance,
            "rhs_floor": rhs_floor,
            "lambda": exact_coords(&ds.lambda),
            "mu": exact_coords(&ds.mu),
            "seed": seed,
        },
        "division_count": ds.len(),
        "norm_lambda": ds.norm_lambda.to_string(),
        "norm_mu": ds.norm_mu.to_string(),
        "cm_matrix": ds.cm.n,
        "trend": outcome.rows.iter().map(|row| {
            json!({
                "radius": row.radius,
                "components": row.components.iter().map(|c| {
                    json!({
                        "i": c.i,
                        "lhs": float_coords(&c.lhs),
                        "rhs": float_coords(&c.rhs),
                        "c_i": float_coords(&c.c_i),
                        "relative_gap": c.relative_gap,
                    })
                }).collect::<Vec<_>>(),
                "eta": row.eta.iter().map(float_coords).collect::<Vec<_>>(),
                "zeta_trace": float_coords(&row.zeta_trace),
                "c_constant": float_coords(&row.c_constant),
            })
        }).collect::<Vec<_>>(),
        "identity_residual_max": identity_max,
        "qualifying_components": qualifying,
        "gates_passed": gates_ok,
        "fi_estimates": fi_json,
    });
    Ok((report, if gates_ok { 0 } else { 1 }))
}
