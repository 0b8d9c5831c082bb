//! `hypokernel` command-line front-end.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 parse error,
//! 3 validation error, 4 numerical or IO failure.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use hypokernel::report::{Format, Table};
use hypokernel::scenario::ScenarioKind;
use hypokernel::{
    admissible_q_range, convolve_with, emit_report, mc_transition_moments, sobolev_conjugates, Check, Error,
    ExponentPlan, FundamentalSolution, GeometryConfig, GroupGeometry, Scenario, SdeOracle, VerificationReport,
};

#[derive(Parser, Debug)]
#[command(name = "hypokernel", version, about = "Kolmogorov-group kernels, convolutions and embedding checks")]
struct Cli {
    /// Output directory for reports.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated output formats (json is always written).
    #[arg(long, global = true, default_value = "json")]
    formats: String,
    /// Worker threads for the data-parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Geometry summaries.
    Geometry {
        #[command(subcommand)]
        action: GeometryAction,
    },
    /// Fundamental solution evaluation and checks.
    Gamma {
        #[command(subcommand)]
        action: GammaAction,
    },
    /// Convolves the scenario's function with its kernel; writes the result as CSV.
    Convolve {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Embedding verifiers.
    Verify {
        what: VerifyKind,
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Sobolev conjugates and the admissible q-interval.
    Exponents {
        #[arg(long)]
        dim: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: Option<f64>,
    },
    /// Cauchy problem solver.
    Solve {
        #[command(subcommand)]
        action: SolveAction,
    },
    /// Monte Carlo check of the transition moments.
    McValidate {
        #[arg(long)]
        geometry: String,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        /// Comma-separated starting point (defaults to the origin).
        #[arg(long)]
        x0: Option<String>,
    },
    /// Runs any scenario file.
    Run {
        path: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum GeometryAction {
    Info {
        #[arg(long)]
        geometry: String,
    },
}

#[derive(Subcommand, Debug)]
enum GammaAction {
    Eval {
        #[arg(long)]
        geometry: String,
        /// Comma-separated `x1,…,xN,t`.
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
    Check {
        #[arg(long)]
        geometry: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
}

#[derive(Subcommand, Debug)]
enum SolveAction {
    Cauchy {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VerifyKind {
    Sobolev,
    Compactness,
    Morrey,
    Split,
}

impl VerifyKind {
    fn kind(self) -> ScenarioKind {
        match self {
            VerifyKind::Sobolev => ScenarioKind::Sobolev,
            VerifyKind::Compactness => ScenarioKind::Compactness,
            VerifyKind::Morrey => ScenarioKind::Morrey,
            VerifyKind::Split => ScenarioKind::Split,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_) => 2,
        Error::InvalidGeometry(_) | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::Inadmissible(_) => 3,
        Error::Numerical(_) | Error::Io(_) => 4,
    }
}

fn parse_formats(s: &str) -> Result<BTreeSet<Format>, Error> {
    let mut set: BTreeSet<Format> = s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<_, _>>()
        .map_err(|e: Error| Error::Parse(e.to_string()))?;
    set.insert(Format::Json);
    Ok(set)
}

fn parse_list(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad number `{p}`: {e}"))))
        .collect()
}

/// Inline JSON when it starts with `{`, otherwise a path to a JSON file.
fn geometry_arg(s: &str) -> Result<GroupGeometry, Error> {
    let text = if s.trim_start().starts_with('{') { s.to_string() } else { std::fs::read_to_string(s)? };
    let cfg: GeometryConfig = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    cfg.build()
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, Error> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

struct Ctx {
    out: PathBuf,
    formats: BTreeSet<Format>,
}

impl Ctx {
    fn finish(&self, report: &VerificationReport) -> Result<u8, Error> {
        let paths = emit_report(report, &self.out, &self.formats)?;
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        println!("{} [{}]: {}", report.scenario_id, report.kind, if report.pass { "PASS" } else { "FAIL" });
        for name in &failed {
            println!("  failed: {name}");
        }
        for p in paths {
            println!("  wrote {}", p.display());
        }
        Ok(if report.pass { 0 } else { 1 })
    }
}

fn run_kind(ctx: &Ctx, path: &Path, seed: Option<u64>, allowed: &[ScenarioKind]) -> Result<u8, Error> {
    let s = load(path, seed)?;
    if !allowed.is_empty() && !allowed.contains(&s.kind) {
        return Err(Error::InvalidArgument(format!("scenario kind `{}` does not fit this command", s.kind.name())));
    }
    let report = s.run()?;
    ctx.finish(&report)
}

fn dispatch(cli: Cli) -> Result<u8, Error> {
    let ctx = Ctx { out: cli.out.clone(), formats: parse_formats(&cli.formats)? };
    match cli.command {
        Command::Geometry { action: GeometryAction::Info { geometry } } => {
            let g = geometry_arg(&geometry)?;
            println!("{}", serde_json::to_string_pretty(&g.summary()).expect("summary serialises"));
            Ok(0)
        }
        Command::Gamma { action: GammaAction::Eval { geometry, point } } => {
            let g = Arc::new(geometry_arg(&geometry)?);
            let z = g.point(parse_list(&point)?)?;
            let fs = FundamentalSolution::new(g)?;
            println!("{}", fs.gamma(&z)?);
            Ok(0)
        }
        Command::Gamma { action: GammaAction::Check { geometry, samples } } => {
            let text = if geometry.trim_start().starts_with('{') { geometry } else { std::fs::read_to_string(&geometry)? };
            let cfg: GeometryConfig = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
            let scenario = Scenario::from_json(
                &serde_json::json!({
                    "id": "gamma_check",
                    "kind": "gamma_checks",
                    "seed": cli.seed.unwrap_or(0),
                    "geometry": cfg,
                    "samples": samples,
                })
                .to_string(),
            )?;
            ctx.finish(&scenario.run()?)
        }
        Command::Convolve { scenario } => {
            let s = load(&scenario, cli.seed)?;
            let g = Arc::new(s.geometry.build()?);
            let k = s.kernel.as_ref().ok_or_else(|| Error::InvalidArgument("convolve needs a `kernel` block".into()))?.build(g.clone())?;
            let grid = s.grid.as_ref().ok_or_else(|| Error::InvalidArgument("convolve needs a `grid` block".into()))?;
            let f = s
                .function
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("convolve needs a `function` block".into()))?
                .sample(grid, g.clone())?;
            let u = convolve_with(&k, &f, None, s.quadrature)?;
            let d = grid.dim();
            let mut cols: Vec<String> = (0..d).map(|i| format!("z{i}")).collect();
            cols.push("value".into());
            let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
            let mut table = Table::new("convolution", &col_refs);
            for i in 0..grid.len() {
                let mut row = grid.node(i);
                row.push(u.values()[i]);
                table.push(row);
            }
            let mut report = VerificationReport::new(&s.id, "convolve", s.seed, Some(g.summary()));
            report.check(Check::flag("finite", u.values().iter().all(|v| v.is_finite())));
            report.tables.push(table);
            let mut formats = ctx.formats.clone();
            formats.insert(Format::Csv);
            let ctx = Ctx { out: ctx.out.clone(), formats };
            ctx.finish(&report)
        }
        Command::Verify { what, scenario } => run_kind(&ctx, &scenario, cli.seed, &[what.kind()]),
        Command::Exponents { dim, alpha, p, q } => {
            let conj = sobolev_conjugates(p, dim)?;
            let range = admissible_q_range(alpha, p, dim)?;
            let plan = q.map(|q| ExponentPlan::new(p, q, alpha, dim)).transpose()?;
            let out = serde_json::json!({
                "dim": dim,
                "alpha": alpha,
                "p": p,
                "conjugates": conj,
                "case": range.case.label(),
                "q_interval": range.interval,
                "plan": plan,
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("serialises"));
            Ok(0)
        }
        Command::Solve { action: SolveAction::Cauchy { scenario } } => {
            run_kind(&ctx, &scenario, cli.seed, &[ScenarioKind::Cauchy, ScenarioKind::Semigroup])
        }
        Command::McValidate { geometry, t, paths, steps, x0 } => {
            let g = geometry_arg(&geometry)?;
            let x0 = match x0 {
                Some(s) => parse_list(&s)?,
                None => vec![0.0; g.spatial_dim()],
            };
            let seed = cli.seed.unwrap_or(0);
            let m = mc_transition_moments(&SdeOracle { seed, paths, steps }, &g, &x0, t, Default::default())?;
            let mut report = VerificationReport::new("mc_validate", "mc", seed, Some(g.summary()));
            let n = x0.len();
            for i in 0..n {
                report.check(Check::within(format!("mean_{i}"), m.mean[i], m.theory_mean[i], 3.0 * m.mean_std_error[i]));
                for j in i..n {
                    let k = i * n + j;
                    report.check(Check::within(
                        format!("cov_{i}_{j}"),
                        m.covariance[k],
                        m.theory_covariance[k],
                        3.0 * m.covariance_std_error[k],
                    ));
                }
            }
            if m.step_warning {
                report.note("step count below √paths: Euler–Maruyama bias may not be dominated by sampling error");
            }
            report.set_details(&m)?;
            println!("{}", report.to_json()?);
            ctx.finish(&report)
        }
        Command::Run { path, scenario } => {
            let path = path.or(scenario).ok_or_else(|| Error::Parse("run needs a scenario path".into()))?;
            run_kind(&ctx, &path, cli.seed, &[])
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot configure {k} threads: {e}");
            return ExitCode::from(3);
        }
    }
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
