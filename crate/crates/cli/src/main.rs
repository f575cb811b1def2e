use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use osculate::enveloping_calculus::{FilteredDiffOp, OperatorSpec};
use osculate::expansion_parametrix::heisenberg::{heisenberg_demo, tabulate, FundamentalSolution, TabulationGrid};
use osculate::expansion_parametrix::{extract_expansion, hypoellipticity_demo, parametrix};
use osculate::filtered_patch::{catalog, FilteredPatch};
use osculate::graded_nilpotent::GradedLieAlgebra;
use osculate::kernel_zoom::families::{FamilySpec, Grid};
use osculate::kernel_zoom::io::write_f64;
use osculate::kernel_zoom::kernel::log_kernel_cocycle;
use osculate::kernel_zoom::reports::{
    decay_estimates, default_lambdas, essential_homogeneity_test, shell_table_csv, SlopeFit,
};
use osculate::kernel_zoom::{SymbolFamily, C64};
use osculate::Error;

#[derive(Parser)]
#[command(name = "osculate", version, about = "Checks for the filtered-manifold pseudodifferential calculus")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Flags {
    /// JSON run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    grid_x: Option<usize>,
    #[arg(long, global = true)]
    grid_eta: Option<usize>,
    /// Dyadic t-levels below 1.
    #[arg(long, global = true)]
    t_levels: Option<u32>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Neumann steps for `parametrix`, term count for `expand`.
    #[arg(long, global = true)]
    k: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Jacobi, grading and antisymmetry, plus a seeded BCH sweep.
    ValidateAlgebra { file: PathBuf },
    CheckFiltration { file: PathBuf },
    /// Normal form, H-order, principal cosymbol and kernel family.
    Cosymbol { file: PathBuf },
    Compose { left: PathBuf, right: PathBuf },
    /// Homogeneity and decay estimates of a symbol family.
    ZoomTest { file: PathBuf },
    Expand { file: PathBuf },
    Parametrix { file: PathBuf },
    DemoHeisenberg {
        #[arg(long, default_value_t = 8)]
        n: i64,
        #[arg(long, default_value_t = 0.25)]
        radius: f64,
    },
    DemoLogKernel,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ValidateAlgebra { .. } => "validate-algebra",
            Command::CheckFiltration { .. } => "check-filtration",
            Command::Cosymbol { .. } => "cosymbol",
            Command::Compose { .. } => "compose",
            Command::ZoomTest { .. } => "zoom-test",
            Command::Expand { .. } => "expand",
            Command::Parametrix { .. } => "parametrix",
            Command::DemoHeisenberg { .. } => "demo-heisenberg",
            Command::DemoLogKernel => "demo-log-kernel",
        }
    }

    fn inputs(&self) -> Vec<String> {
        match self {
            Command::ValidateAlgebra { file }
            | Command::CheckFiltration { file }
            | Command::Cosymbol { file }
            | Command::ZoomTest { file }
            | Command::Expand { file }
            | Command::Parametrix { file } => vec![file.display().to_string()],
            Command::Compose { left, right } => vec![left.display().to_string(), right.display().to_string()],
            Command::DemoHeisenberg { .. } | Command::DemoLogKernel => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    grid_x: usize,
    grid_eta: usize,
    t_levels: u32,
    tol: f64,
    out: PathBuf,
    seed: u64,
    k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { grid_x: 256, grid_eta: 256, t_levels: 12, tol: 1e-6, out: PathBuf::from("out"), seed: 0, k: 3 }
    }
}

impl RunConfig {
    fn resolve(flags: &Flags) -> Result<Self, Failure> {
        let mut cfg = match &flags.config {
            Some(p) => serde_json::from_str(&read(p)?).map_err(|e| Failure::parse(p, e))?,
            None => RunConfig::default(),
        };
        cfg.grid_x = flags.grid_x.unwrap_or(cfg.grid_x);
        cfg.grid_eta = flags.grid_eta.unwrap_or(cfg.grid_eta);
        cfg.t_levels = flags.t_levels.unwrap_or(cfg.t_levels);
        cfg.tol = flags.tol.unwrap_or(cfg.tol);
        cfg.out = flags.out.clone().unwrap_or(cfg.out);
        cfg.seed = flags.seed.unwrap_or(cfg.seed);
        cfg.k = flags.k.unwrap_or(cfg.k);
        if !cfg.grid_x.is_power_of_two() || !cfg.grid_eta.is_power_of_two() || cfg.grid_eta < 4 {
            return Err(Failure::Parse(format!(
                "grid sizes must be powers of two (η at least 4), got x {} and η {}",
                cfg.grid_x, cfg.grid_eta
            )));
        }
        if !(cfg.tol > 0.0) {
            return Err(Failure::Parse(format!("tolerance must be positive, got {}", cfg.tol)));
        }
        Ok(cfg)
    }

    fn grid(&self) -> Grid {
        Grid { gx: self.grid_x, geta: self.grid_eta, t_levels: self.t_levels }
    }
}

enum Failure {
    /// Unreadable or malformed input; exit code 2.
    Parse(String),
    /// A numerical routine refused the input; exit code 1.
    Numeric(String),
}

impl Failure {
    fn parse(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure::Parse(format!("{}: {e}", path.display()))
    }

    fn from_error(path: Option<&Path>, e: Error) -> Self {
        let at = path.map(|p| format!("{}: ", p.display())).unwrap_or_default();
        match e {
            Error::Malformed(_) | Error::Parse { .. } | Error::Io(_) => Failure::Parse(format!("{at}{e}")),
            _ => Failure::Numeric(format!("{at}{e}")),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::parse(path, e))
}

/// Result of one command: overall verdict, metrics and named CSV tables.
struct Outcome {
    pass: bool,
    metrics: Value,
    tables: Vec<(String, String)>,
}

impl Outcome {
    fn new(pass: bool, metrics: Value) -> Self {
        Outcome { pass, metrics, tables: Vec::new() }
    }

    fn table(mut self, name: &str, csv: String) -> Self {
        self.tables.push((name.to_string(), csv));
        self
    }
}

/// Patch references are catalog names or paths relative to the spec file.
fn resolve_patch(reference: &str, spec_path: &Path) -> Result<FilteredPatch, Failure> {
    if let Some(p) = catalog::by_name(reference) {
        return Ok(p);
    }
    let path = spec_path.parent().unwrap_or(Path::new(".")).join(reference);
    FilteredPatch::from_json(&read(&path)?).map_err(|e| Failure::from_error(Some(&path), e))
}

fn load_operator(path: &Path) -> Result<FilteredDiffOp, Failure> {
    let spec: OperatorSpec = serde_json::from_str(&read(path)?).map_err(|e| Failure::parse(path, e))?;
    let patch = resolve_patch(&spec.patch_ref, path)?;
    FilteredDiffOp::from_spec(&spec, Arc::new(patch)).map_err(|e| Failure::from_error(Some(path), e))
}

/// A family spec, or a bare operator spec read as its differential family.
fn load_family(path: &Path, grid: &Grid) -> Result<SymbolFamily, Failure> {
    let src = read(path)?;
    let spec: FamilySpec = match serde_json::from_str(&src) {
        Ok(s) => s,
        Err(family_err) => match serde_json::from_str::<OperatorSpec>(&src) {
            Ok(operator) => FamilySpec::Operator { operator },
            Err(_) => return Err(Failure::parse(path, family_err)),
        },
    };
    spec.build(grid).map_err(|e| Failure::from_error(Some(path), e))
}

fn fit_json(fit: &SlopeFit) -> Value {
    json!({ "slope": fit.slope, "tail_slope": fit.tail_slope, "tail_negligible": fit.tail_negligible })
}

fn random_rational(rng: &mut ChaCha8Rng) -> BigRational {
    BigRational::new(BigInt::from(rng.gen_range(-20i64..=20)), BigInt::from(rng.gen_range(1i64..=9)))
}

fn validate_algebra(path: &Path, cfg: &RunConfig) -> Result<Outcome, Failure> {
    let g = GradedLieAlgebra::from_json(&read(path)?).map_err(|e| Failure::from_error(Some(path), e))?;
    let violation = g.validate().err().map(|v| format!("{v:?}"));
    let (mut assoc, mut auto) = (0usize, 0usize);
    let triples = if violation.is_none() { 200 } else { 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = g.dim();
    let bch = |a: &[BigRational], b: &[BigRational]| g.bch_multiply(a, b).expect("dimensions match");
    for _ in 0..triples {
        let [a, b, c]: [Vec<BigRational>; 3] = std::array::from_fn(|_| (0..n).map(|_| random_rational(&mut rng)).collect());
        let lam = BigRational::new(BigInt::from(rng.gen_range(1i64..=12)), BigInt::from(rng.gen_range(1i64..=7)));
        assoc += usize::from(bch(&bch(&a, &b), &c) != bch(&a, &bch(&b, &c)));
        let d = |v: &[BigRational]| g.dilate_exact(&lam, v).expect("positive dilation");
        auto += usize::from(d(&bch(&a, &b)) != bch(&d(&a), &d(&b)));
    }
    let pass = violation.is_none() && assoc == 0 && auto == 0;
    Ok(Outcome::new(
        pass,
        json!({
            "dim": n,
            "weights": g.weights(),
            "step": g.step(),
            "homogeneous_dimension": g.homogeneous_dimension(),
            "violation": violation,
            "random_triples": triples,
            "associativity_failures": assoc,
            "automorphism_failures": auto,
        }),
    ))
}

fn check_filtration(path: &Path) -> Result<Outcome, Failure> {
    let patch = FilteredPatch::from_json(&read(path)?).map_err(|e| Failure::from_error(Some(path), e))?;
    let verdict = patch.check_filtration().map_err(|e| Failure::from_error(Some(path), e))?;
    let mut metrics = json!({
        "dim": patch.dim(),
        "depth": patch.depth(),
        "orders": patch.orders(),
        "periodic": patch.periodic(),
        "homogeneous_dimension": patch.homogeneous_dimension(),
        "violation": verdict.as_ref().err(),
    });
    if verdict.is_ok() {
        let constants = patch.osculating_constant_exprs().map_err(|e| Failure::from_error(Some(path), e))?;
        let mut rows = Vec::new();
        for (i, row) in constants.iter().enumerate() {
            for (j, col) in row.iter().enumerate().skip(i + 1) {
                for (k, c) in col.iter().enumerate() {
                    if !c.is_zero() {
                        rows.push(json!({ "i": i, "j": j, "k": k, "constant": c.to_string() }));
                    }
                }
            }
        }
        metrics["osculating_constants"] = Value::Array(rows);
    }
    Ok(Outcome::new(verdict.is_ok(), metrics))
}

fn cosymbol(path: &Path) -> Result<Outcome, Failure> {
    let op = load_operator(path)?;
    let m = op.h_order();
    let principal = op.principal_cosymbol().map_err(|e| Failure::from_error(Some(path), e))?;
    let family = op.kernel_family();
    let on_nose = family.is_homogeneous_on_nose(m.unwrap_or(0) as i64);
    Ok(Outcome::new(
        on_nose,
        json!({
            "normal_form": op.to_string(),
            "h_order": m,
            "principal_cosymbol": principal.to_string(),
            "kernel_family": family.to_string(),
            "homogeneous_on_nose": on_nose,
        }),
    ))
}

fn compose(left: &Path, right: &Path) -> Result<Outcome, Failure> {
    let a = load_operator(left)?;
    let b = load_operator(right)?;
    let ab = a.compose(&b).map_err(|e| Failure::from_error(None, e))?;
    let (Some(ma), Some(mb)) = (a.h_order(), b.h_order()) else {
        return Err(Failure::Numeric("composition with the zero operator has no principal part".into()));
    };
    let top = ab.cosymbol_at_weight(ma + mb);
    let sa = a.principal_cosymbol().map_err(|e| Failure::from_error(Some(left), e))?;
    let sb = b.principal_cosymbol().map_err(|e| Failure::from_error(Some(right), e))?;
    let expected = sa.compose(&sb).map_err(|e| Failure::from_error(None, e))?;
    let morphism = top == expected;
    let cancelled = expected.is_zero();
    let drop_ok = !cancelled || ab.h_order().is_none_or(|h| h < ma + mb);
    Ok(Outcome::new(
        morphism && drop_ok,
        json!({
            "product": ab.to_string(),
            "h_order": ab.h_order(),
            "expected_order": ma + mb,
            "top_cosymbol": top.to_string(),
            "product_of_cosymbols": expected.to_string(),
            "morphism_holds": morphism,
            "top_order_cancelled": cancelled,
        }),
    ))
}

fn decay_csv(r: &osculate::kernel_zoom::reports::DecayReport) -> String {
    let mut out = String::from("a,b,k,bound,exponent,pass\n");
    for e in &r.entries {
        let idx = |v: &[u32]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        out.push_str(&format!("{},{},{},{},{},{}\n", idx(&e.a), idx(&e.b), e.k, e.bound, e.exponent, e.pass));
    }
    out
}

fn zoom_test(path: &Path, cfg: &RunConfig) -> Result<Outcome, Failure> {
    let s = load_family(path, &cfg.grid())?;
    let m = s.weight();
    let homogeneity =
        essential_homogeneity_test(&s, m, &default_lambdas()).map_err(|e| Failure::from_error(None, e))?;
    let decay = decay_estimates(&s, 2, 2, 2, 0.1);
    let mut pass = homogeneity.pass && decay.pass;
    let worst = decay.entries.iter().map(|e| e.exponent - e.bound).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let mut metrics = json!({
        "weight": m,
        "homogeneity": homogeneity,
        "decay_pass": decay.pass,
        "decay_worst_excess": if worst.is_finite() { json!(worst) } else { Value::Null },
    });
    let src = read(path)?;
    if matches!(serde_json::from_str::<FamilySpec>(&src), Ok(FamilySpec::LogKernel)) {
        let mut rows = Vec::new();
        for lambda in [2.0, 4.0, 8.0] {
            let c = log_kernel_cocycle(lambda, cfg.grid_eta).map_err(|e| Failure::from_error(None, e))?;
            pass &= c.relative_error <= cfg.tol;
            rows.push(c);
        }
        metrics["kernel_cocycle"] = json!(rows);
    }
    Ok(Outcome::new(pass, metrics).table("decay", decay_csv(&decay)))
}

fn expand(path: &Path, cfg: &RunConfig) -> Result<Outcome, Failure> {
    let s = load_family(path, &cfg.grid())?;
    let exp = extract_expansion(&s, cfg.k, cfg.tol).map_err(|e| Failure::from_error(None, e))?;
    let report = exp.report(&s).map_err(|e| Failure::from_error(None, e))?;
    let m = s.weight();
    let orders_ok: Vec<bool> = report
        .remainders
        .iter()
        .enumerate()
        .map(|(k, f)| f.tail_negligible || f.slope <= m - (k + 1) as f64 + 0.1)
        .collect();
    let mut csv = String::new();
    for (k, f) in report.remainders.iter().enumerate() {
        csv.push_str(&format!("# remainder after {} terms\n", k + 1));
        csv.push_str(&shell_table_csv(f));
    }
    let pass = orders_ok.iter().all(|v| *v);
    Ok(Outcome::new(pass, json!({ "report": report, "remainder_orders_ok": orders_ok })).table("remainders", csv))
}

fn run_parametrix(path: &Path, cfg: &RunConfig) -> Result<Outcome, Failure> {
    let s = load_family(path, &cfg.grid())?;
    let k = cfg.k;
    let st = parametrix(&s, k).map_err(|e| Failure::from_error(None, e))?;
    let bound = -((k + 1) as f64) + 0.2;
    let mut pass = st.report.order_at_most(bound);
    let mut metrics = json!({
        "weight": st.weight,
        "k": k,
        "order_bound": bound,
        "steps": st.report.steps.iter().map(fit_json).collect::<Vec<_>>(),
        "right_residual": fit_json(&st.report.right),
        "left_residual": fit_json(&st.report.left),
    });
    if s.lattice().dim() == 1 {
        let g = s.lattice().geta[0];
        let f: Vec<C64> =
            (0..g).map(|j| C64::new((std::f64::consts::TAU * j as f64 / g as f64).cos().exp(), 0.0)).collect();
        let h = hypoellipticity_demo(&s, k, &f, 6).map_err(|e| Failure::from_error(None, e))?;
        pass &= h.residual_beyond < 1e-6;
        metrics["hypoellipticity"] = json!({
            "rhs": "exp(cos x)",
            "solution_error": h.solution_error,
            "beyond_shell": h.beyond_shell,
            "residual_beyond": h.residual_beyond,
            "error_beyond": h.error_beyond,
        });
    }
    Ok(Outcome::new(pass, metrics)
        .table("right_residual", shell_table_csv(&st.report.right))
        .table("left_residual", shell_table_csv(&st.report.left)))
}

fn demo_heisenberg(n: i64, radius: f64, cfg: &RunConfig) -> Result<Outcome, Failure> {
    if n < 2 || !(radius > 0.0) {
        return Err(Failure::Parse(format!("need n ≥ 2 and a positive radius, got {n} and {radius}")));
    }
    let r = heisenberg_demo(n, radius);
    let grid = TabulationGrid { n };
    let gamma = FundamentalSolution { kappa: r.kappa, constant: r.constant };
    fs::create_dir_all(&cfg.out).map_err(|e| Failure::parse(&cfg.out, e))?;
    let stem = cfg.out.join("heisenberg_gamma");
    write_f64(&stem, &grid.shape(), &tabulate(&grid, &gamma)).map_err(|e| Failure::from_error(Some(&stem), e))?;
    Ok(Outcome::new(r.pass, json!({ "report": r, "table": stem.with_extension("bin").display().to_string() })))
}

fn demo_log_kernel(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let mut rows = Vec::new();
    let mut pass = true;
    for lambda in [2.0, 4.0, 8.0] {
        let c = log_kernel_cocycle(lambda, cfg.grid_eta).map_err(|e| Failure::from_error(None, e))?;
        pass &= c.relative_error <= cfg.tol;
        rows.push(c);
    }
    Ok(Outcome::new(pass, json!({ "grid": cfg.grid_eta, "cocycles": rows })))
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<Outcome, Failure> {
    match command {
        Command::ValidateAlgebra { file } => validate_algebra(file, cfg),
        Command::CheckFiltration { file } => check_filtration(file),
        Command::Cosymbol { file } => cosymbol(file),
        Command::Compose { left, right } => compose(left, right),
        Command::ZoomTest { file } => zoom_test(file, cfg),
        Command::Expand { file } => expand(file, cfg),
        Command::Parametrix { file } => run_parametrix(file, cfg),
        Command::DemoHeisenberg { n, radius } => demo_heisenberg(*n, *radius, cfg),
        Command::DemoLogKernel => demo_log_kernel(cfg),
    }
}

fn write_artifacts(name: &str, cfg: &RunConfig, summary: &Value, tables: &[(String, String)]) -> std::io::Result<PathBuf> {
    fs::create_dir_all(&cfg.out)?;
    let report = cfg.out.join(format!("{name}.json"));
    fs::write(&report, serde_json::to_string_pretty(summary)? + "\n")?;
    for (table, csv) in tables {
        fs::write(cfg.out.join(format!("{name}_{table}.csv")), csv)?;
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("OSCULATE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().ok();
    }
    let name = cli.command.name();
    let cfg = match RunConfig::resolve(&cli.flags) {
        Ok(c) => c,
        Err(Failure::Parse(msg) | Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let outcome = match dispatch(&cli.command, &cfg) {
        Ok(o) => o,
        Err(Failure::Parse(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
        Err(Failure::Numeric(msg)) => Outcome::new(false, json!({ "error": msg })),
    };
    let summary = json!({
        "command": name,
        "inputs": cli.command.inputs(),
        "config": cfg,
        "pass": outcome.pass,
        "metrics": outcome.metrics,
        "tables": outcome.tables.iter().map(|(t, _)| format!("{name}_{t}.csv")).collect::<Vec<_>>(),
    });
    let report = match write_artifacts(name, &cfg, &summary, &outcome.tables) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot write artifacts to {}: {e}", cfg.out.display());
            return ExitCode::from(2);
        }
    };
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    if outcome.pass {
        ExitCode::SUCCESS
    } else {
        eprintln!("check failed; report at {}", report.display());
        ExitCode::from(1)
    }
}
