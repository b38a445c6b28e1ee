//! `gct`: batch front end for simulation, formula evaluation and verification.
//!
//! Exit codes: 0 success, 1 verification failed, 2 usage or validation
//! error, 3 numerical error (including the explosion guard).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gct_core::{
    b_curve, g_formula_mc_detailed, g_formula_quadrature, no_explosion_mass, poisson_tail, simulate_batch,
    tv_distance, verify, GctError, Plan, ScenarioModel, SimMode, VerifyParams, VerifyReport,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "gct", version, about = "Continuous-time g-computation: simulate, evaluate, verify")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, env = "GCT_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate factual or counterfactual worlds as JSON lines.
    Simulate(SimulateArgs),
    /// Evaluate the g-computation formula.
    Gformula(GformulaArgs),
    /// Compare oracle, Monte Carlo and quadrature estimates.
    Verify(VerifyArgs),
    /// Formula mass with the outcome law replaced by 1.
    Mass(MassArgs),
    /// The b(sigma) diagnostic curve.
    Bcurve(BcurveArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Plan JSON file (default: never act).
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Factual,
    Counterfactual,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    Quad,
    Mc,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = Mode::Factual)]
    mode: Mode,
    /// Number of samples.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct GformulaArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = Engine::Quad)]
    engine: Engine,
    /// Grid cells (quadrature).
    #[arg(long, default_value_t = 200)]
    m: usize,
    /// Longitudinal event budget (quadrature).
    #[arg(long, default_value_t = 4)]
    nmax: usize,
    /// Samples (Monte Carlo).
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    /// Seed (required for Monte Carlo).
    #[arg(long, required_if_eq("engine", "mc"))]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Samples for both the oracle and the Monte Carlo evaluator.
    #[arg(long, default_value_t = 200_000)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    m: usize,
    #[arg(long, default_value_t = 4)]
    nmax: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct MassArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 40)]
    m: usize,
    #[arg(long, default_value_t = 8)]
    nmax: usize,
}

#[derive(Args)]
struct BcurveArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated increasing times in (0, tau].
    #[arg(long, value_delimiter = ',', required = true)]
    sigmas: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    m: usize,
    #[arg(long, default_value_t = 4)]
    nmax: usize,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<GctError> for Failure {
    fn from(e: GctError) -> Self {
        let code = match e {
            GctError::Domain(_) | GctError::Validation(_) | GctError::PlanState(_) => 2,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure {
        code: 2,
        message: format!("cannot write {}: {e}", path.display()),
    }
}

type Outcome = Result<u8, Failure>;

fn load(common: &Common) -> Result<(ScenarioModel, Plan), Failure> {
    let model = ScenarioModel::load(&common.scenario)?;
    let plan = match &common.plan {
        Some(p) => Plan::load(p)?,
        None => Plan::Never,
    };
    Ok((model, plan))
}

fn emit(common: &Common, text: &str) -> Result<(), Failure> {
    match &common.out {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path).map_err(|e| io_failure(path, e))?);
            f.write_all(text.as_bytes()).map_err(|e| io_failure(path, e))?;
            f.flush().map_err(|e| io_failure(path, e))
        }
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_failure(Path::new("<stdout>"), e)),
    }
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn dist_csv(rows: impl IntoIterator<Item = (String, Vec<f64>, Vec<f64>, f64)>) -> String {
    let mut s = String::from("label,y,prob,leftover\n");
    for (label, support, probs, leftover) in rows {
        for (y, p) in support.iter().zip(&probs) {
            s.push_str(&format!("{label},{y},{p},{leftover}\n"));
        }
    }
    s
}

fn cmd_simulate(a: &SimulateArgs) -> Outcome {
    let (model, plan) = load(&a.common)?;
    let mode = match a.mode {
        Mode::Factual => SimMode::Factual,
        Mode::Counterfactual => SimMode::Counterfactual,
    };
    let samples = simulate_batch(&model, mode, &plan, a.n, a.seed)?;
    let mut text = String::new();
    match a.common.format {
        Format::Json => {
            for s in &samples {
                text.push_str(&s.to_json_line());
                text.push('\n');
            }
        }
        Format::Csv => {
            text.push_str("sample,u,y,n_a,n_l\n");
            for (i, s) in samples.iter().enumerate() {
                let (na, nl) = s.traj.counts();
                text.push_str(&format!("{i},{},{},{na},{nl}\n", s.u, s.y));
            }
        }
    }
    emit(&a.common, &text)?;
    let (na, nl) = samples.iter().fold((0, 0), |(x, y), s| {
        let (a, l) = s.traj.counts();
        (x + a, y + l)
    });
    eprintln!("{} samples: {na} action events, {nl} longitudinal events", samples.len());
    Ok(0)
}

fn cmd_gformula(a: &GformulaArgs) -> Outcome {
    let (model, plan) = load(&a.common)?;
    let (value, support, probs, leftover) = match a.engine {
        Engine::Quad => {
            let r = g_formula_quadrature(&model, &plan, a.m, a.nmax)?;
            (r.to_json_value(), r.dist.support.clone(), r.dist.probs.clone(), r.leftover_mass)
        }
        Engine::Mc => {
            let seed = a.seed.expect("clap enforces --seed for mc");
            let r = g_formula_mc_detailed(&model, &plan, a.n, seed)?;
            let mut v = r.to_json_value();
            v["params"]["seed"] = json!(seed);
            (v, r.dist.support.clone(), r.dist.probs.clone(), 0.0)
        }
    };
    let text = match a.common.format {
        Format::Json => pretty(&value),
        Format::Csv => dist_csv([("gformula".to_string(), support, probs, leftover)]),
    };
    emit(&a.common, &text)?;
    Ok(0)
}

fn cmd_verify(a: &VerifyArgs) -> Outcome {
    let (model, plan) = load(&a.common)?;
    let params = VerifyParams {
        oracle_n: a.n,
        mc_n: a.n,
        m: a.m,
        n_max: a.nmax,
        seed: a.seed,
    };
    let report: VerifyReport = verify(&model, &plan, params);
    let text = match a.common.format {
        Format::Json => report.to_json() + "\n",
        Format::Csv => report.to_csv(),
    };
    emit(&a.common, &text)?;
    eprintln!(
        "tv(oracle,quad) = {:.5}  tv(oracle,mc) = {:.5}  tv(mc,quad) = {:.5}  nuc = {}  pass = {}",
        report.tv_oracle_quad, report.tv_oracle_mc, report.tv_mc_quad, report.nuc_flag, report.pass
    );
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
    }
    Ok(if report.pass { 0 } else { 1 })
}

fn cmd_mass(a: &MassArgs) -> Outcome {
    let (model, plan) = load(&a.common)?;
    let (mass, leftover) = no_explosion_mass(&model, &plan, a.m, a.nmax)?;
    let bound = poisson_tail(model.max_rate_l() * model.tau(), a.nmax);
    let text = match a.common.format {
        Format::Json => pretty(&json!({
            "mass": mass,
            "leftover": leftover,
            "params": { "m": a.m, "n_max": a.nmax, "poisson_tail_bound": bound },
        })),
        Format::Csv => format!("mass,leftover,m,n_max,poisson_tail_bound\n{mass},{leftover},{},{},{bound}\n", a.m, a.nmax),
    };
    emit(&a.common, &text)?;
    eprintln!("mass = {mass:.6}  leftover = {leftover:.3e}  poisson tail bound = {bound:.3e}");
    Ok(0)
}

fn cmd_bcurve(a: &BcurveArgs) -> Outcome {
    let (model, plan) = load(&a.common)?;
    let curve = b_curve(&model, &plan, &a.sigmas, a.m, a.nmax)?;
    let last = &curve.last().expect("sigmas nonempty").dist;
    let mut points = Vec::new();
    for (s, r) in a.sigmas.iter().zip(&curve) {
        points.push(json!({
            "sigma": s,
            "dist": r.dist,
            "leftover": r.leftover_mass,
            "tv_to_last": tv_distance(&r.dist, last)?,
        }));
    }
    let text = match a.common.format {
        Format::Json => pretty(&json!({
            "curve": points,
            "params": { "m": a.m, "n_max": a.nmax },
        })),
        Format::Csv => dist_csv(a.sigmas.iter().zip(&curve).map(|(s, r)| {
            (s.to_string(), r.dist.support.clone(), r.dist.probs.clone(), r.leftover_mass)
        })),
    };
    emit(&a.common, &text)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Gformula(a) => cmd_gformula(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Mass(a) => cmd_mass(a),
        Command::Bcurve(a) => cmd_bcurve(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
