//! `equilib`: batch front end for constrained weighted-energy problems.
//!
//! Exit codes: 0 success, 1 invalid input, 2 solver did not converge,
//! 3 verification failed.

mod output;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use equilib::builtin::{
    build_example1, build_example2, example2_constrained, run_example1, run_example2, Example1Config,
    Example2Config,
};
use equilib::convergence::{default_beta_schedule, run_compact_exhaustion, run_decreasing_family, FamilyRun};
use equilib::solver::{Algorithm, SolutionRecord};
use equilib::verifier::{capacitary_distribution, check_variational_default};
use equilib::{solve, Error, SolverOptions};
use serde::Serialize;

use crate::output::{write_json, write_measure, write_profile};
use crate::scenario::{Built, ConvergeSpec, Scenario};

#[derive(Parser)]
#[command(name = "equilib", version, about = "Constrained equilibrium measures with external fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scenario and write the measure and potential profile.
    Solve(CommonArgs),
    /// Solve, then check the variational inequalities.
    Verify(CommonArgs),
    /// Capacitary distribution and capacity of a subset.
    Capacity(CommonArgs),
    /// Solve along a decreasing family or a compact exhaustion.
    Converge(CommonArgs),
    /// Run a built-in scenario and check its structural claims.
    Example {
        name: ExampleName,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario JSON (for `example`, optional overrides of the built-in configuration).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    gap_tol: Option<f64>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    /// Level used to split the variational inequalities (defaults to the midpoint of [ℓ, L]).
    #[arg(long)]
    w: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Cg,
    Pg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExampleName {
    Example1,
    Example2,
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::NotConverged(_) => 2,
            Failure::Verification(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::StageNotConverged { .. } => Failure::NotConverged(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

impl CommonArgs {
    fn options(&self, base: SolverOptions) -> SolverOptions {
        let mut opts = base;
        if let Some(t) = self.gap_tol {
            opts.gap_tol = t;
        }
        match self.algorithm {
            Some(AlgorithmArg::Cg) => opts.algorithm = Algorithm::ConditionalGradient,
            Some(AlgorithmArg::Pg) => opts.algorithm = Algorithm::ProjectedGradient,
            None => {}
        }
        opts
    }

    fn load(&self) -> std::result::Result<(Scenario, Built), Failure> {
        let path = self
            .scenario
            .as_ref()
            .ok_or_else(|| Failure::Invalid("--scenario is required".into()))?;
        let (scenario, base) = Scenario::load(path)?;
        let built = scenario.build(&base)?;
        Ok((scenario, built))
    }

    fn out_dir(&self) -> std::result::Result<&Path, Failure> {
        std::fs::create_dir_all(&self.out).map_err(|e| Failure::Invalid(format!("{}: {e}", self.out.display())))?;
        Ok(&self.out)
    }
}

fn cmd_solve(args: &CommonArgs, verify: bool) -> Outcome {
    let (scenario, built) = args.load()?;
    let out = args.out_dir()?;
    let opts = args.options(scenario.solver);
    let p = &built.problem;
    let sol = solve(p, &opts)?;
    println!(
        "value={:.17e} gap={:e} iterations={} ell={} L={} converged={}",
        sol.value, sol.gap, sol.iterations, sol.ell, sol.big_l, sol.converged
    );
    write_measure(out, "lambda.csv", &sol.lambda)?;
    write_profile(out, built.cloud.as_ref(), p, &sol.lambda)?;
    let record = SolutionRecord::new(p, &opts, sol);
    write_json(out, "solution.json", &record)?;
    let sol = record.solution;

    let mut verdict = Ok(());
    if verify {
        let w = args.w.or(scenario.w).unwrap_or(0.5 * (sol.ell + sol.big_l));
        let report = check_variational_default(p, &sol.lambda, w)?;
        write_json(out, "report.json", &report)?;
        std::fs::write(out.join("report.txt"), report.render_text()).map_err(Error::from)?;
        print!("{}", report.render_text());
        if !report.passed {
            verdict = Err(Failure::Verification(format!(
                "{} + {} inequality violations at w = {w}",
                report.ineq1_violations.len(),
                report.ineq2_violations.len()
            )));
        }
    }
    if !sol.converged {
        return Err(Failure::NotConverged(format!(
            "gap {:e} after {} iterations",
            sol.gap, sol.iterations
        )));
    }
    verdict
}

#[derive(Serialize)]
struct CapacityRecord {
    capacity: f64,
    cap_surrogate: f64,
    subset: Vec<usize>,
}

fn cmd_capacity(args: &CommonArgs) -> Outcome {
    let (scenario, built) = args.load()?;
    let out = args.out_dir()?;
    let subset = match scenario.capacity.and_then(|c| c.subset) {
        Some(set) => built.indices(&set)?,
        None => (0..built.problem.n()).collect(),
    };
    let cd = capacitary_distribution(built.problem.matrix_arc(), &subset)?;
    println!("capacity={:.17e} points={}", cd.capacity, subset.len());
    write_measure(out, "theta.csv", &cd.theta)?;
    write_json(
        out,
        "capacity.json",
        &CapacityRecord {
            capacity: cd.capacity,
            cap_surrogate: cd.cap_surrogate,
            subset,
        },
    )?;
    Ok(())
}

fn cmd_converge(args: &CommonArgs) -> Outcome {
    let (scenario, built) = args.load()?;
    let out = args.out_dir()?;
    let opts = args.options(scenario.solver);
    let spec = scenario
        .converge
        .ok_or_else(|| Failure::Invalid("scenario has no converge block".into()))?;
    let p = &built.problem;
    let run: FamilyRun = match &spec {
        ConvergeSpec::Decreasing { stages, sigma_factors } => {
            let family = built.decreasing_family(stages)?;
            if sigma_factors.len() != family.len() {
                return Err(Failure::Invalid("one sigma factor per stage is required".into()));
            }
            let schedule = sigma_factors
                .iter()
                .map(|&k| p.sigma().scaled(k))
                .collect::<equilib::Result<Vec<_>>>()?;
            let last = family.len() - 1;
            let limit = p.with_sigma(schedule[last].trace(&family.mask(last)))?;
            run_decreasing_family(&limit, &family, &schedule, &opts)?
        }
        ConvergeSpec::Exhaustion { fractions, betas } => {
            let family = built.exhaustion_family(fractions)?;
            let betas = betas.clone().unwrap_or_else(|| default_beta_schedule(&family));
            run_compact_exhaustion(p, &family, &betas, &opts)?
        }
    };
    let mut table = Vec::new();
    run.write_csv(&mut table).map_err(Failure::from)?;
    std::fs::write(out.join("family.csv"), &table).map_err(Error::from)?;
    write_json(out, "family.json", &run)?;
    print!("{}", String::from_utf8_lossy(&table));
    println!(
        "monotone={} convex_bound_holds={} final_distance={:?}",
        run.monotone,
        run.convex_bound_holds,
        run.final_distance()
    );
    if !(run.monotone && run.convex_bound_holds) {
        return Err(Failure::Verification("family violates the expected monotonicity or energy bound".into()));
    }
    Ok(())
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&PathBuf>) -> std::result::Result<T, Failure> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Invalid(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", p.display())))
        }
    }
}

fn cmd_example(name: ExampleName, args: &CommonArgs) -> Outcome {
    let out = args.out_dir()?;
    match name {
        ExampleName::Example1 => {
            let cfg: Example1Config = read_config(args.scenario.as_ref())?;
            let opts = args.options(SolverOptions::default());
            let ex = build_example1(&cfg)?;
            let outcome = run_example1(&ex, &opts)?;
            let sol = &outcome.solution;
            write_measure(out, "lambda.csv", &sol.lambda)?;
            write_profile(out, Some(&ex.cloud), &ex.problem, &sol.lambda)?;
            write_json(out, "solution.json", &SolutionRecord::new(&ex.problem, &opts, sol.clone()))?;
            write_json(out, "report.json", &outcome.report)?;
            write_json(out, "example.json", &outcome)?;
            println!(
                "max|lambda - sigma| on outer = {:e}, max lambda on inner = {:e}, ell = {}, L = {}",
                outcome.max_outer_deviation, outcome.max_inner_weight, sol.ell, sol.big_l
            );
            if !sol.converged {
                return Err(Failure::NotConverged(format!("gap {:e}", sol.gap)));
            }
            if !(outcome.passes(1e-4, 1e-6) && outcome.report.passed) {
                return Err(Failure::Verification("example1 structure not reproduced".into()));
            }
        }
        ExampleName::Example2 => {
            let cfg: Example2Config = read_config(args.scenario.as_ref())?;
            let opts = args.options(SolverOptions::default().with_tolerances(1e-12, 1e-10));
            let ex = build_example2(&cfg)?;
            let outcome = run_example2(&ex, &cfg, &opts)?;
            let (constrained, _) = example2_constrained(&ex, &cfg, &outcome.unconstrained)?;
            let sol = &outcome.constrained;
            write_measure(out, "lambda.csv", &sol.lambda)?;
            write_measure(out, "lambda_unconstrained.csv", &outcome.unconstrained.lambda)?;
            write_profile(out, Some(&ex.cloud), &constrained, &sol.lambda)?;
            write_json(out, "solution.json", &SolutionRecord::new(&constrained, &opts, sol.clone()))?;
            write_json(out, "report.json", &outcome.report)?;
            write_json(out, "example.json", &outcome)?;
            println!(
                "q = {}, |U| = {}, distance = {:e}, ell = {}, L = {}, spread = {:e}",
                outcome.q,
                outcome.neighbourhood.len(),
                outcome.distance,
                sol.ell,
                sol.big_l,
                outcome.relative_spread
            );
            if !(outcome.unconstrained.converged && sol.converged) {
                return Err(Failure::NotConverged(format!("gap {:e}", sol.gap)));
            }
            if !(outcome.passes(1e-4, 0.01) && outcome.report.passed) {
                return Err(Failure::Verification("example2 structure not reproduced".into()));
            }
        }
    }
    Ok(())
}

fn configure_threads() -> Outcome {
    if let Ok(v) = std::env::var("EQUILIB_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Failure::Invalid(format!("EQUILIB_THREADS={v} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Invalid(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Solve(a) => cmd_solve(a, false),
        Command::Verify(a) => cmd_solve(a, true),
        Command::Capacity(a) => cmd_capacity(a),
        Command::Converge(a) => cmd_converge(a),
        Command::Example { name, common } => cmd_example(*name, common),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
