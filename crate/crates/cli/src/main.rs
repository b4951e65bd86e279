//! `bgrisk`: solve, sweep, simulate and verify portfolio/insurance models.

mod output;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use bgrisk_core::config::{load_problem, ModelFile, Reproduce};
use bgrisk_core::hamiltonian::{eval_objective, Certificate};
use bgrisk_core::solvers::{mutual_fund_combine, threshold_etas, ReportSummary, RootLog};
use bgrisk_core::sweep::linear_grid;
use bgrisk_core::{
    grid_maximize, simulate_terminal_utility, solve, sweep, value_function, DVector, Error, GridSpec, Policy, Problem,
    SimConfig, SweepParam, SweepResult,
};

use output::{text, Cell, Format, RunManifest, Sink, Table};

/// Relative MC standard error above which the closed-form check is
/// inconclusive rather than failed.
const MC_POWER_GUARD: f64 = 0.01;
const MUTUAL_FUND_TOL: f64 = 1e-5;

#[derive(Parser, Debug)]
#[command(name = "bgrisk", version, about = "Optimal portfolio and insurance under jump background risk")]
struct Cli {
    /// Model file (JSON).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Seed for Monte Carlo runs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent. A manifest is written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Overrides {
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Any sweepable parameter, e.g. `--set R=0.05 --set mu:2=0.1`.
    #[arg(long = "set", value_name = "NAME=VALUE", allow_hyphen_values = true)]
    set: Vec<String>,
}

#[derive(Args, Debug, Clone)]
struct PlotArgs {
    /// SVG line chart of the sweep.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Columns to plot.
    #[arg(long, value_delimiter = ',', default_value = "pi_sum,kappa")]
    y: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal policy with its certificate.
    Solve {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// One solve per value of a parameter.
    Sweep {
        #[arg(long)]
        param: String,
        #[arg(long, allow_negative_numbers = true)]
        from: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        to: Option<f64>,
        /// Number of intervals; the grid has `steps + 1` points.
        #[arg(long)]
        steps: Option<usize>,
        /// Explicit grid instead of from/to/steps.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
        #[command(flatten)]
        plot: PlotArgs,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Monte Carlo estimate of expected terminal utility.
    Simulate {
        #[arg(long, default_value_t = 1_000_000)]
        paths: usize,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1.0)]
        wealth: f64,
        #[arg(long)]
        antithetic: bool,
        /// Policy weights; the certified optimum when absent.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pi: Option<Vec<f64>>,
        #[arg(long)]
        kappa: Option<f64>,
        /// Per-path CSV dump.
        #[arg(long)]
        dump_paths: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Certificate, grid oracle and Monte Carlo cross-checks.
    Verify {
        #[arg(long, default_value_t = 200_000)]
        mc_paths: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Combine the optimal funds at two risk aversions.
    MutualFund {
        #[arg(long)]
        eta1: f64,
        #[arg(long)]
        eta2: f64,
        #[arg(long = "eta-bar")]
        eta_bar: f64,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Brute-force grid maximisation compared with the solver.
    Oracle {
        #[arg(long, default_value_t = 401)]
        coarse: usize,
        #[arg(long, default_value_t = 2001)]
        refine: usize,
        #[arg(long, default_value_t = 2)]
        rounds: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the `reproduce` block of the model file.
    Reproduce {
        #[command(flatten)]
        plot: PlotArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::Sweep { .. } => "sweep",
            Command::Simulate { .. } => "simulate",
            Command::Verify { .. } => "verify",
            Command::MutualFund { .. } => "mutual-fund",
            Command::Oracle { .. } => "oracle",
            Command::Reproduce { .. } => "reproduce",
        }
    }
}

/// Exit 1 for bad input, 2 for a failed check or certificate.
enum Failure {
    Input(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invalid(_) | Error::Config(_) | Error::Domain(_) | Error::Unsupported(_) => {
                Failure::Input(e.to_string())
            }
            _ => Failure::Check(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(format!("I/O error: {e}"))
    }
}

type Outcome = Result<(), Failure>;

impl Overrides {
    fn apply(&self, problem: Problem) -> Result<Problem, Failure> {
        let mut p = problem;
        let named = [
            (SweepParam::Eta, self.eta),
            (SweepParam::Rho, self.rho),
            (SweepParam::Lambda, self.lambda),
            (SweepParam::Q, self.q),
        ];
        for (param, value) in named {
            if let Some(v) = value {
                p = param.apply(&p, v)?;
            }
        }
        for item in &self.set {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| Failure::Input(format!("--set expects NAME=VALUE, got '{item}'")))?;
            let param: SweepParam = name.trim().parse()?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Failure::Input(format!("--set {name}: '{value}' is not a number")))?;
            p = param.apply(&p, v)?;
        }
        Ok(p)
    }
}

struct Context {
    format: Format,
    seed: u64,
    model_path: PathBuf,
    file: ModelFile,
    problem: Problem,
    sink: Sink,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Input(format!("thread pool: {e}")))?;
    }
    let model_path = cli
        .model
        .clone()
        .ok_or_else(|| Failure::Input("--model FILE is required".into()))?;
    let (file, problem) = load_problem(&model_path)?;
    let input = std::fs::read(&model_path)?;
    let mut ctx = Context {
        format: cli.format,
        seed: cli.seed,
        model_path: model_path.clone(),
        file,
        problem,
        sink: Sink::new(cli.out.clone()),
    };
    let result = dispatch(&cli.command, &mut ctx);
    // Outputs written before a failed check still get a manifest.
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        args: std::env::args().skip(1).collect(),
        input_file: Some(model_path.display().to_string()),
        input_sha256: Some(output::sha256_hex(&input)),
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: cli.seed,
        wall_time_seconds: 0.0,
        outputs: Vec::new(),
    };
    let Context { sink, .. } = ctx;
    if !sink.written.is_empty() || result.is_ok() {
        sink.finish(manifest)?;
    }
    result
}

fn dispatch(command: &Command, ctx: &mut Context) -> Outcome {
    match command {
        Command::Solve { overrides } => cmd_solve(ctx, overrides),
        Command::Sweep {
            param,
            from,
            to,
            steps,
            values,
            plot,
            overrides,
        } => {
            let grid = match (values, from, to, steps) {
                (Some(v), ..) => v.clone(),
                (None, Some(a), Some(b), Some(n)) => {
                    if *n == 0 {
                        return Err(Failure::Input("--steps must be at least 1".into()));
                    }
                    linear_grid(*a, *b, n + 1)?
                }
                _ => return Err(Failure::Input("sweep needs --values or --from, --to and --steps".into())),
            };
            let param: SweepParam = param.parse()?;
            let base = overrides.apply(ctx.problem.clone())?;
            cmd_sweep(ctx, &base, param, &grid, plot)
        }
        Command::Simulate {
            paths,
            horizon,
            wealth,
            antithetic,
            pi,
            kappa,
            dump_paths,
            overrides,
        } => {
            let config = SimConfig {
                horizon: *horizon,
                initial_wealth: *wealth,
                paths: *paths,
                seed: ctx.seed,
                antithetic: *antithetic,
                record_paths: dump_paths.is_some(),
            };
            cmd_simulate(ctx, overrides, config, pi.as_deref(), *kappa, dump_paths.as_deref())
        }
        Command::Verify { mc_paths, overrides } => cmd_verify(ctx, overrides, *mc_paths),
        Command::MutualFund {
            eta1,
            eta2,
            eta_bar,
            overrides,
        } => cmd_mutual_fund(ctx, overrides, *eta1, *eta2, *eta_bar),
        Command::Oracle {
            coarse,
            refine,
            rounds,
            overrides,
        } => {
            let spec = GridSpec {
                coarse: *coarse,
                refine: *refine,
                rounds: *rounds,
                ..GridSpec::default()
            };
            cmd_oracle(ctx, overrides, &spec)
        }
        Command::Reproduce { plot } => cmd_reproduce(ctx, plot),
    }
}

fn pi_headers(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("pi_{i}")).collect()
}

fn pi_cells(pi: &DVector<f64>) -> Vec<Cell> {
    pi.iter().map(|v| Cell::Num(*v)).collect()
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    model: Option<&'a str>,
    #[serde(flatten)]
    summary: ReportSummary,
    certificate: Certificate,
    roots: &'a [RootLog],
    oracle_gap: Option<f64>,
}

fn cmd_solve(ctx: &mut Context, overrides: &Overrides) -> Outcome {
    let problem = overrides.apply(ctx.problem.clone())?;
    let rep = solve(&problem)?;
    let s = rep.summary();
    let body = match ctx.format {
        Format::Json => output::to_json(&SolveOutput {
            model: ctx.file.name.as_deref(),
            summary: s.clone(),
            certificate: rep.certificate,
            roots: &rep.roots,
            oracle_gap: rep.oracle_gap,
        }),
        Format::Csv => {
            let mut header = pi_headers(problem.dim());
            header.extend(
                ["pi_sum", "kappa", "case_label", "xi_star", "objective", "cert_residual", "certified"].map(String::from),
            );
            let mut t = Table::new(&header);
            let mut row = pi_cells(&rep.policy.pi);
            row.extend([
                Cell::Num(s.pi_sum),
                Cell::Num(s.kappa),
                text(&s.case_label),
                Cell::Opt(s.xi_star),
                Cell::Num(s.objective),
                Cell::Num(s.cert_residual),
                text(s.certified.to_string()),
            ]);
            t.row(&row);
            t.into_string()
        }
    };
    ctx.sink.primary(&body)?;
    if !rep.certificate.passed {
        return Err(Failure::Check(format!("certificate residual {:e} exceeds tolerance", rep.certificate.residual)));
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepJsonRow<'a> {
    param_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<&'a ReportSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct SweepJson<'a> {
    param: String,
    rows: Vec<SweepJsonRow<'a>>,
}

fn render_sweep(result: &SweepResult, format: Format) -> String {
    match format {
        Format::Csv => result.to_csv(),
        Format::Json => output::to_json(&SweepJson {
            param: result.param.to_string(),
            rows: result
                .rows
                .iter()
                .map(|r| SweepJsonRow {
                    param_value: r.value,
                    result: r.outcome.as_ref().ok(),
                    error: r.outcome.as_ref().err().map(String::as_str),
                })
                .collect(),
        }),
    }
}

fn column(result: &SweepResult, name: &str) -> Vec<Option<f64>> {
    let pick = |s: &ReportSummary| -> Option<Option<f64>> {
        Some(match name {
            "pi_sum" => Some(s.pi_sum),
            "kappa" => Some(s.kappa),
            "xi_star" => s.xi_star,
            "objective" => Some(s.objective),
            "cert_residual" => Some(s.cert_residual),
            _ => {
                let k: usize = name.strip_prefix("pi_")?.parse().ok()?;
                Some(*s.pi.get(k.checked_sub(1)?)?)
            }
        })
    };
    result
        .rows
        .iter()
        .map(|r| r.outcome.as_ref().ok().and_then(pick).flatten())
        .collect()
}

fn write_plot(ctx: &mut Context, result: &SweepResult, plot: &PlotArgs) -> Outcome {
    let Some(path) = &plot.plot else {
        return Ok(());
    };
    let series: Vec<plot::Series> = plot
        .y
        .iter()
        .map(|name| plot::Series {
            name: name.clone(),
            y: column(result, name),
        })
        .collect();
    let x: Vec<f64> = result.rows.iter().map(|r| r.value).collect();
    let title = ctx.file.name.clone().unwrap_or_else(|| ctx.model_path.display().to_string());
    let svg = plot::line_chart(&title, &result.param.to_string(), &x, &series);
    ctx.sink.file(path, svg.as_bytes())?;
    Ok(())
}

fn cmd_sweep(ctx: &mut Context, base: &Problem, param: SweepParam, grid: &[f64], plot: &PlotArgs) -> Outcome {
    // Validate plot columns before the work.
    for name in &plot.y {
        if plot.plot.is_some() && !is_plot_column(name, base.dim()) {
            return Err(Failure::Input(format!("unknown plot column '{name}'")));
        }
    }
    let result = sweep(base, param, grid)?;
    for row in &result.rows {
        if let Err(e) = &row.outcome {
            eprintln!("warning: {param} = {}: {e}", row.value);
        }
    }
    ctx.sink.primary(&render_sweep(&result, ctx.format))?;
    write_plot(ctx, &result, plot)
}

fn is_plot_column(name: &str, dim: usize) -> bool {
    matches!(name, "pi_sum" | "kappa" | "xi_star" | "objective" | "cert_residual")
        || name
            .strip_prefix("pi_")
            .and_then(|k| k.parse::<usize>().ok())
            .is_some_and(|k| (1..=dim).contains(&k))
}

fn chosen_policy(problem: &Problem, pi: Option<&[f64]>, kappa: Option<f64>) -> Result<Policy, Failure> {
    if pi.is_none() && kappa.is_none() {
        return Ok(solve(problem)?.policy);
    }
    let base = match (pi, kappa) {
        (Some(_), Some(_)) => None,
        _ => Some(solve(problem)?.policy),
    };
    let pi = match pi {
        Some(w) if w.len() == problem.dim() => DVector::from_column_slice(w),
        Some(w) => {
            return Err(Failure::Input(format!("--pi has {} weights, model has {} assets", w.len(), problem.dim())))
        }
        None => base.as_ref().expect("solved").pi.clone(),
    };
    let kappa = kappa.unwrap_or_else(|| base.as_ref().expect("solved").kappa);
    let policy = Policy::new(pi, kappa);
    if !policy.is_valid() {
        return Err(Failure::Input(format!("invalid policy {policy:?}")));
    }
    Ok(policy)
}

#[derive(Serialize)]
struct SimOutput {
    pi: Vec<f64>,
    kappa: f64,
    mean: f64,
    std_error: f64,
    paths: usize,
    floor_fraction: f64,
    mean_wealth: f64,
    wealth_std_error: f64,
    closed_form: f64,
    z_score: f64,
}

fn cmd_simulate(
    ctx: &mut Context,
    overrides: &Overrides,
    config: SimConfig,
    pi: Option<&[f64]>,
    kappa: Option<f64>,
    dump: Option<&Path>,
) -> Outcome {
    let problem = overrides.apply(ctx.problem.clone())?;
    let policy = chosen_policy(&problem, pi, kappa)?;
    let est = simulate_terminal_utility(&problem, &policy, &config)?;
    let closed = value_function(
        0.0,
        config.initial_wealth,
        config.horizon,
        &eval_objective(&problem, &policy)?,
        &problem,
    )?;
    let out = SimOutput {
        pi: policy.pi.iter().copied().collect(),
        kappa: policy.kappa,
        mean: est.mean,
        std_error: est.std_error,
        paths: est.paths,
        floor_fraction: est.floor_fraction,
        mean_wealth: est.mean_wealth,
        wealth_std_error: est.wealth_std_error,
        closed_form: closed,
        z_score: (est.mean - closed) / est.std_error,
    };
    let body = match ctx.format {
        Format::Json => output::to_json(&out),
        Format::Csv => {
            let mut header = pi_headers(problem.dim());
            header.extend(
                [
                    "kappa",
                    "mean",
                    "std_error",
                    "paths",
                    "floor_fraction",
                    "mean_wealth",
                    "wealth_std_error",
                    "closed_form",
                    "z_score",
                ]
                .map(String::from),
            );
            let mut t = Table::new(&header);
            let mut row = pi_cells(&policy.pi);
            row.extend([
                Cell::Num(out.kappa),
                Cell::Num(out.mean),
                Cell::Num(out.std_error),
                text(out.paths.to_string()),
                Cell::Num(out.floor_fraction),
                Cell::Num(out.mean_wealth),
                Cell::Num(out.wealth_std_error),
                Cell::Num(out.closed_form),
                Cell::Num(out.z_score),
            ]);
            t.row(&row);
            t.into_string()
        }
    };
    ctx.sink.primary(&body)?;
    if let Some(path) = dump {
        let mut t = Table::new(&["path_id", "N_T", "G", "V_T", "utility"]);
        for r in &est.records {
            t.row(&[
                text(r.path_id.to_string()),
                text(r.jumps.to_string()),
                Cell::Num(r.gaussian),
                Cell::Num(r.wealth),
                Cell::Num(r.utility),
            ]);
        }
        ctx.sink.file(path, t.into_string().as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum Status {
    Pass,
    Fail,
    Inconclusive,
    Skipped,
}

#[derive(Serialize)]
struct CheckRow {
    check: &'static str,
    status: Status,
    value: Option<f64>,
    limit: Option<f64>,
    detail: String,
}

fn cmd_verify(ctx: &mut Context, overrides: &Overrides, mc_paths: usize) -> Outcome {
    let problem = overrides.apply(ctx.problem.clone())?;
    let rep = solve(&problem)?;
    let mut checks = Vec::new();
    let c = &rep.certificate;
    checks.push(CheckRow {
        check: "certificate",
        status: if c.passed { Status::Pass } else { Status::Fail },
        value: Some(c.residual),
        limit: Some(c.tol),
        detail: format!("{:?} method, in domain {}", c.method, c.in_domain).to_lowercase(),
    });

    if problem.dim() <= 2 {
        let oracle = grid_maximize(&problem, &GridSpec::default())?;
        let gap = oracle.value - rep.objective.value;
        checks.push(CheckRow {
            check: "oracle_gap",
            status: if gap <= oracle.resolution_bound { Status::Pass } else { Status::Fail },
            value: Some(gap),
            limit: Some(oracle.resolution_bound),
            detail: format!("{} grid evaluations", oracle.evaluations),
        });
    } else {
        checks.push(CheckRow {
            check: "oracle_gap",
            status: Status::Skipped,
            value: None,
            limit: None,
            detail: "grid oracle supports at most two assets".into(),
        });
    }

    let config = SimConfig {
        paths: mc_paths,
        seed: ctx.seed,
        ..SimConfig::default()
    };
    let est = simulate_terminal_utility(&problem, &rep.policy, &config)?;
    let closed = value_function(0.0, 1.0, 1.0, &rep.objective, &problem)?;
    let z = (est.mean - closed) / est.std_error;
    let too_wide = !(est.std_error <= MC_POWER_GUARD * closed.abs());
    checks.push(CheckRow {
        check: "mc_z_score",
        status: match (too_wide, z.abs() <= 3.0) {
            (true, _) => Status::Inconclusive,
            (false, true) => Status::Pass,
            (false, false) => Status::Fail,
        },
        value: Some(z),
        limit: Some(3.0),
        detail: format!(
            "{} paths, mean {} +- {}, closed form {}",
            est.paths,
            bgrisk_core::sweep::format_sig(est.mean),
            bgrisk_core::sweep::format_sig(est.std_error),
            bgrisk_core::sweep::format_sig(closed)
        ),
    });

    let body = match ctx.format {
        Format::Json => output::to_json(&checks),
        Format::Csv => {
            let mut t = Table::new(&["check", "status", "value", "limit", "detail"]);
            for row in &checks {
                let status = serde_json::to_value(row.status).expect("status serialises");
                t.row(&[
                    text(row.check),
                    text(status.as_str().unwrap_or_default()),
                    Cell::Opt(row.value),
                    Cell::Opt(row.limit),
                    text(&row.detail),
                ]);
            }
            t.into_string()
        }
    };
    ctx.sink.primary(&body)?;
    let failed: Vec<&str> = checks.iter().filter(|c| c.status == Status::Fail).map(|c| c.check).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failed.join(", ")))
    }
}

fn cmd_mutual_fund(ctx: &mut Context, overrides: &Overrides, eta1: f64, eta2: f64, eta_bar: f64) -> Outcome {
    if !(eta1 < eta_bar && eta_bar < eta2) {
        return Err(Failure::Input(format!("need eta1 < eta-bar < eta2, got {eta1}, {eta_bar}, {eta2}")));
    }
    let problem = overrides.apply(ctx.problem.clone())?;
    let mf = mutual_fund_combine(&problem, eta1, eta2, eta_bar)?;
    let direct = solve(&problem.with_eta(eta_bar)?)?;
    let gap = mf.policy.max_distance(&direct.policy);
    let rows = [
        ("fund_1", eta1, &mf.endpoints[0].policy, mf.endpoints[0].case.to_string()),
        ("fund_2", eta2, &mf.endpoints[1].policy, mf.endpoints[1].case.to_string()),
        ("combined", eta_bar, &mf.policy, format!("{:?}", mf.family)),
        ("direct", eta_bar, &direct.policy, direct.case.to_string()),
    ];
    let body = match ctx.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Row<'a> {
                row: &'a str,
                eta: f64,
                pi: Vec<f64>,
                kappa: f64,
                case: &'a str,
            }
            #[derive(Serialize)]
            struct Out<'a> {
                delta: f64,
                discrepancy: f64,
                tolerance: f64,
                rows: Vec<Row<'a>>,
            }
            output::to_json(&Out {
                delta: mf.delta,
                discrepancy: gap,
                tolerance: MUTUAL_FUND_TOL,
                rows: rows
                    .iter()
                    .map(|(row, eta, p, case)| Row {
                        row,
                        eta: *eta,
                        pi: p.pi.iter().copied().collect(),
                        kappa: p.kappa,
                        case,
                    })
                    .collect(),
            })
        }
        Format::Csv => {
            let mut header = vec!["row".to_string(), "eta".to_string()];
            header.extend(pi_headers(problem.dim()));
            header.extend(["kappa", "case_label", "delta", "discrepancy"].map(String::from));
            let mut t = Table::new(&header);
            for (row, eta, p, case) in &rows {
                let mut cells = vec![text(*row), Cell::Num(*eta)];
                cells.extend(pi_cells(&p.pi));
                cells.push(Cell::Num(p.kappa));
                cells.push(text(case.as_str()));
                let combined = *row == "combined";
                cells.push(Cell::Opt(combined.then_some(mf.delta)));
                cells.push(Cell::Opt(combined.then_some(gap)));
                t.row(&cells);
            }
            t.into_string()
        }
    };
    ctx.sink.primary(&body)?;
    if gap <= MUTUAL_FUND_TOL {
        Ok(())
    } else {
        Err(Failure::Check(format!("discrepancy {gap:e} exceeds {MUTUAL_FUND_TOL:e}")))
    }
}

fn cmd_oracle(ctx: &mut Context, overrides: &Overrides, spec: &GridSpec) -> Outcome {
    let problem = overrides.apply(ctx.problem.clone())?;
    let oracle = grid_maximize(&problem, spec)?;
    let rep = solve(&problem)?;
    let gap = oracle.value - rep.objective.value;
    let body = match ctx.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Out {
                oracle_pi: Vec<f64>,
                oracle_kappa: f64,
                oracle_value: f64,
                resolution_bound: f64,
                evaluations: usize,
                solver_pi: Vec<f64>,
                solver_kappa: f64,
                solver_value: f64,
                gap: f64,
            }
            output::to_json(&Out {
                oracle_pi: oracle.policy.pi.iter().copied().collect(),
                oracle_kappa: oracle.policy.kappa,
                oracle_value: oracle.value,
                resolution_bound: oracle.resolution_bound,
                evaluations: oracle.evaluations,
                solver_pi: rep.policy.pi.iter().copied().collect(),
                solver_kappa: rep.policy.kappa,
                solver_value: rep.objective.value,
                gap,
            })
        }
        Format::Csv => {
            let mut header = vec!["source".to_string()];
            header.extend(pi_headers(problem.dim()));
            header.extend(["kappa", "value", "resolution_bound", "gap"].map(String::from));
            let mut t = Table::new(&header);
            let mut o = vec![text("oracle")];
            o.extend(pi_cells(&oracle.policy.pi));
            o.extend([
                Cell::Num(oracle.policy.kappa),
                Cell::Num(oracle.value),
                Cell::Num(oracle.resolution_bound),
                Cell::Opt(None),
            ]);
            t.row(&o);
            let mut s = vec![text("solver")];
            s.extend(pi_cells(&rep.policy.pi));
            s.extend([
                Cell::Num(rep.policy.kappa),
                Cell::Num(rep.objective.value),
                Cell::Opt(None),
                Cell::Num(gap),
            ]);
            t.row(&s);
            t.into_string()
        }
    };
    ctx.sink.primary(&body)?;
    if gap <= oracle.resolution_bound {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "oracle beats solver by {gap:e}, bound {:e}",
            oracle.resolution_bound
        )))
    }
}

fn cmd_reproduce(ctx: &mut Context, plot: &PlotArgs) -> Outcome {
    let spec = ctx
        .file
        .reproduce
        .clone()
        .ok_or_else(|| Failure::Input(format!("{} has no reproduce block", ctx.model_path.display())))?;
    let param = spec.param()?;
    let grid = spec.grid()?;
    match spec {
        Reproduce::Sweep { .. } => {
            let base = ctx.problem.clone();
            cmd_sweep(ctx, &base, param, &grid, plot)
        }
        Reproduce::Thresholds { .. } => {
            let rows: Vec<(f64, Result<(f64, f64), String>)> = grid
                .iter()
                .map(|&v| {
                    let r = param
                        .apply(&ctx.problem, v)
                        .and_then(|p| threshold_etas(&p))
                        .map_err(|e| e.to_string());
                    (v, r)
                })
                .collect();
            let body = match ctx.format {
                Format::Json => {
                    #[derive(Serialize)]
                    struct Row<'a> {
                        param_value: f64,
                        eta_big_r: Option<f64>,
                        eta_r: Option<f64>,
                        error: Option<&'a str>,
                    }
                    output::to_json(
                        &rows
                            .iter()
                            .map(|(v, r)| Row {
                                param_value: *v,
                                eta_big_r: r.as_ref().ok().map(|t| t.0),
                                eta_r: r.as_ref().ok().map(|t| t.1),
                                error: r.as_ref().err().map(String::as_str),
                            })
                            .collect::<Vec<_>>(),
                    )
                }
                Format::Csv => {
                    let mut t = Table::new(&["param_value", "eta_R", "eta_r", "error"]);
                    for (v, r) in &rows {
                        match r {
                            Ok((a, b)) => t.row(&[Cell::Num(*v), Cell::Num(*a), Cell::Num(*b), text("")]),
                            Err(e) => t.row(&[Cell::Num(*v), Cell::Opt(None), Cell::Opt(None), text(e.as_str())]),
                        }
                    }
                    t.into_string()
                }
            };
            ctx.sink.primary(&body)?;
            Ok(())
        }
    }
}
