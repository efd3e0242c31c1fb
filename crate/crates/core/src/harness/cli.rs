use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::charlier::CharlierBasis;
use crate::closure::{ClosureOrder, MatchFlag};
use crate::error::{Error, Result};
use crate::solve::{simulate_paths, solve_closure, solve_galerkin, solve_reference, ClosureOptions, ReferenceOptions};

use super::config::{ExperimentConfig, ReferenceKind};
use super::figures::run_figures;
use super::table::{run_table, sci};
use super::validate;

#[derive(Debug, Parser)]
#[command(name = "charlier", version, about = "Poisson-Charlier moment dynamics of birth-death processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Truncated master equation.
    SolveReference(RunArgs),
    /// Galerkin projection at order N.
    SolveGalerkin(RunArgs),
    /// Zeroth or first order moment closure.
    SolveClosure(RunArgs),
    /// Thinning simulation of sample paths.
    Simulate(RunArgs),
    /// Relative-error table over the configured orders.
    Table(RunArgs),
    /// Mean, variance and delay probability series.
    Figures(RunArgs),
    /// Run the built-in oracle suites.
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Reference,
    Galerkin,
    Closure,
    Simulate,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Closure order: 0 (zeroth) or 1 (first).
    #[arg(long, value_parser = parse_order)]
    order: Option<ClosureOrder>,
    /// Ground truth for `table`.
    #[arg(long, value_enum)]
    solver: Option<Solver>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "Xmax")]
    x_max: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<f64>,
}

fn parse_order(s: &str) -> std::result::Result<ClosureOrder, String> {
    match s {
        "0" | "zeroth" => Ok(ClosureOrder::Zeroth),
        "1" | "first" => Ok(ClosureOrder::First),
        _ => Err(format!("expected 0 or 1, got {s:?}")),
    }
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Json(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other),
        }
    }
}

fn load(args: &RunArgs) -> std::result::Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(t) = args.horizon {
        cfg.horizon = t;
    }
    if let Some(x) = args.x_max {
        cfg.x_max = Some(x);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text)?;
            log::info!("wrote {}", path.display());
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn header(cfg: &ExperimentConfig, solver: &str) -> String {
    format!("# charlier-core {} {solver}\n# config_sha256 {}\n", env!("CARGO_PKG_VERSION"), cfg.hash())
}

fn solve_reference_cmd(args: &RunArgs) -> std::result::Result<String, Failure> {
    let cfg = load(args)?;
    let x_max = cfg.reference_x_max()?;
    let p0 = cfg.initial.pmf(x_max)?;
    let opts = ReferenceOptions { delay_threshold: cfg.delay_threshold(), ..cfg.reference_options() };
    let sol = solve_reference(&cfg.model()?, &p0, &cfg.grid()?, &opts)?;
    let m = &sol.trajectory.meta;
    let mut s = header(&cfg, "solve-reference");
    let _ = writeln!(s, "# x_max {x_max} max_mass_drift {} max_boundary_mass {}", sci(m.max_mass_drift), sci(m.max_boundary_mass));
    s.push_str(if sol.delay.is_some() { "t,mean,variance,cum3,cum4,delay\n" } else { "t,mean,variance,cum3,cum4\n" });
    for (i, (t, v)) in sol.trajectory.times.iter().zip(&sol.trajectory.values).enumerate() {
        let _ = write!(s, "{t},{},{},{},{}", sci(v.mean), sci(v.variance), sci(v.cum3), sci(v.cum4));
        if let Some(d) = &sol.delay {
            let _ = write!(s, ",{}", sci(d[i]));
        }
        s.push('\n');
    }
    Ok(s)
}

fn solve_galerkin_cmd(args: &RunArgs) -> std::result::Result<String, Failure> {
    let cfg = load(args)?;
    let n = args.n.unwrap_or(*cfg.orders.last().expect("validated nonempty"));
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    let p0 = cfg.initial.pmf(cfg.reference_x_max()?)?;
    let a = cfg.basis.policy.resolve(&model, &p0, &grid)?;
    let opts = crate::solve::GalerkinOptions { delay_threshold: cfg.delay_threshold(), ..cfg.galerkin_options() };
    let sol = solve_galerkin(&model, &p0, CharlierBasis::new(a, n)?, &grid, &opts)?;
    let mut s = header(&cfg, "solve-galerkin");
    let _ = writeln!(s, "# N {n} basis_a {} max_c0_drift {}", sci(a), sci(sol.max_c0_drift));
    s.push_str(if sol.delay.is_some() { "t,mean,variance,cum3,cum4,delay\n" } else { "t,mean,variance,cum3,cum4\n" });
    for (i, (t, v)) in sol.trajectory.times.iter().zip(&sol.trajectory.values).enumerate() {
        let _ = write!(s, "{t},{},{},{},{}", sci(v.mean), sci(v.variance), sci(v.cum3), sci(v.cum4));
        if let Some(d) = &sol.delay {
            let _ = write!(s, ",{}", sci(d[i]));
        }
        s.push('\n');
    }
    Ok(s)
}

fn solve_closure_cmd(args: &RunArgs) -> std::result::Result<String, Failure> {
    let cfg = load(args)?;
    let order = args.order.unwrap_or(ClosureOrder::First);
    let p0 = cfg.initial.pmf(cfg.reference_x_max()?)?;
    let opts = ClosureOptions { integrator: cfg.integrator, root: cfg.closure_root };
    let traj = solve_closure(&cfg.model()?, order, &p0.moments(), &cfg.grid()?, &opts)?;
    let mut s = header(&cfg, "solve-closure");
    let _ = writeln!(s, "# order {} flag_fraction {}", order.index(), sci(traj.meta.flag_fraction));
    s.push_str("t,mean,variance,delay,flag,flag_fraction\n");
    let mut flagged = 0usize;
    for (i, (t, r)) in traj.times.iter().zip(&traj.values).enumerate() {
        let flag = r.flag != MatchFlag::Exact;
        flagged += usize::from(flag);
        let delay = r.delay.map(sci).unwrap_or_default();
        let _ = writeln!(
            s,
            "{t},{},{},{delay},{},{}",
            sci(r.moments.mean),
            sci(r.moments.variance),
            u8::from(flag),
            sci(flagged as f64 / (i + 1) as f64)
        );
    }
    Ok(s)
}

fn simulate_cmd(args: &RunArgs) -> std::result::Result<String, Failure> {
    let cfg = load(args)?;
    let p0 = cfg.initial.pmf(cfg.reference_x_max()?)?;
    let sum = simulate_paths(&cfg.model()?, &p0, &cfg.checkpoints(), &cfg.simulation_options())?;
    let mut s = header(&cfg, "simulate");
    let _ = writeln!(s, "# paths {} seed {} events {} rejections {}", sum.n_paths, cfg.seed, sum.events, sum.rejections);
    s.push_str("t,mean,mean_se,variance,variance_se,cum3,cum3_se,cum4,cum4_se\n");
    for ((t, e), se) in sum.times.iter().zip(&sum.estimates).zip(&sum.std_errors) {
        let _ = writeln!(
            s,
            "{t},{},{},{},{},{},{},{},{}",
            sci(e.mean),
            sci(se.mean),
            sci(e.variance),
            sci(se.variance),
            sci(e.cum3),
            sci(se.cum3),
            sci(e.cum4),
            sci(se.cum4)
        );
    }
    Ok(s)
}

fn table_cmd(args: &RunArgs) -> std::result::Result<(String, Option<PathBuf>), Failure> {
    let mut cfg = load(args)?;
    if let Some(n) = args.n {
        cfg.orders = vec![n];
    }
    match args.solver {
        None | Some(Solver::Reference) => {}
        Some(Solver::Galerkin) => {
            let top = *cfg.orders.last().expect("validated nonempty");
            cfg.reference = ReferenceKind::Galerkin { order: 2 * top.max(1) };
        }
        Some(other) => return Err(Failure::Usage(format!("{other:?} cannot serve as a table reference"))),
    }
    let table = run_table(&cfg)?;
    if let Some(path) = &cfg.output.json {
        emit(&serde_json::to_string_pretty(&table).map_err(Error::from)?, Some(path))?;
    }
    Ok((table.to_csv(), cfg.output.table.clone()))
}

fn figures_cmd(args: &RunArgs) -> std::result::Result<(String, Option<PathBuf>), Failure> {
    let cfg = load(args)?;
    let bundle = run_figures(&cfg)?;
    Ok((bundle.to_csv(), cfg.output.figures.clone()))
}

fn validate_cmd() -> std::result::Result<bool, Failure> {
    let mut ok = true;
    for r in validate::run_all()? {
        println!("{r}");
        ok &= r.passed;
    }
    Ok(ok)
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Validate => validate_cmd().map(|ok| if ok { 0 } else { 1 }),
        Command::SolveReference(a) => solve_reference_cmd(a).and_then(|s| Ok(emit(&s, a.out.as_deref())?)).map(|_| 0),
        Command::SolveGalerkin(a) => solve_galerkin_cmd(a).and_then(|s| Ok(emit(&s, a.out.as_deref())?)).map(|_| 0),
        Command::SolveClosure(a) => solve_closure_cmd(a).and_then(|s| Ok(emit(&s, a.out.as_deref())?)).map(|_| 0),
        Command::Simulate(a) => simulate_cmd(a).and_then(|s| Ok(emit(&s, a.out.as_deref())?)).map(|_| 0),
        Command::Table(a) => table_cmd(a)
            .and_then(|(s, p)| Ok(emit(&s, a.out.as_deref().or(p.as_deref()))?))
            .map(|_| 0),
        Command::Figures(a) => figures_cmd(a)
            .and_then(|(s, p)| Ok(emit(&s, a.out.as_deref().or(p.as_deref()))?))
            .map(|_| 0),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}
