//! Acceptance criteria. Runs as a plain binary so every criterion prints a
//! PASS/FAIL line even when `cargo test` captures output.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use equilib::builtin::{build_example1, build_example2, run_example1, run_example2, Example1Config, Example2Config};
use equilib::convergence::{run_compact_exhaustion, run_decreasing_family};
use equilib::energy::{radial_field, strong_distance, weighted_energy, weighted_potential};
use equilib::geometry::{make_sphere, nested_exhaustion, union, Monotonicity};
use equilib::kernels::assemble;
use equilib::solver::{certificate_gap, solve_from, Algorithm};
use equilib::verifier::{capacitary_distribution, capacity, check_variational_default, default_eps_ineq};
use equilib::{solve, DiscreteMeasure, FieldSpec, KernelSpec, PointCloud, Problem, SolverOptions, SubsetFamily};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_force, random_feasible, random_instance, random_pd_matrix, sphere_potential};

type Outcome = Result<String, String>;

fn tight() -> SolverOptions {
    SolverOptions::default().with_tolerances(1e-14, 1e-12)
}

fn example1() -> Outcome {
    let start = Instant::now();
    let ex = build_example1(&Example1Config::default()).map_err(|e| e.to_string())?;
    let out = run_example1(&ex, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let cfg = Example1Config::default();
    let oracle = sphere_potential(3.0 - cfg.alpha, 1.0);
    let rel = (out.solution.ell - oracle).abs() / oracle;
    let detail = format!(
        "N={} outer_dev={:.2e} inner_max={:.2e} ell={:.6} L={:.6} oracle={:.6} rel={:.2e} time={:.1}s",
        ex.cloud.len(),
        out.max_outer_deviation,
        out.max_inner_weight,
        out.solution.ell,
        out.solution.big_l,
        oracle,
        rel,
        elapsed
    );
    if out.solution.converged && out.passes(1e-4, 1e-6) && rel <= 0.01 && elapsed <= 60.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn example2() -> Outcome {
    let cfg = Example2Config::default();
    let ex = build_example2(&cfg).map_err(|e| e.to_string())?;
    let opts = SolverOptions::default().with_tolerances(1e-12, 1e-10);
    let out = run_example2(&ex, &cfg, &opts).map_err(|e| e.to_string())?;
    let detail = format!(
        "distance={:.2e} q={:.6} ell={:.6} L={:.6} |U|={} spread={:.2e}",
        out.distance,
        out.q,
        out.constrained.ell,
        out.constrained.big_l,
        out.neighbourhood.len(),
        out.relative_spread
    );
    if out.unconstrained.converged && out.constrained.converged && out.passes(1e-4, 0.01) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn suite_instances() -> Vec<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    (0..50).map(|k| random_instance(&mut rng, 2 + k % 7)).collect()
}

fn equivalence() -> Outcome {
    let mut failures = Vec::new();
    let mut worst_value = 0.0f64;
    let mut worst_gap_ratio = 0.0f64;
    for (k, p) in suite_instances().iter().enumerate() {
        let n = p.n();
        let sol = solve(p, &tight()).map_err(|e| e.to_string())?;
        if !(sol.converged && sol.ell.is_finite() && sol.big_l.is_finite() && sol.ell <= sol.big_l + 1e-8) {
            failures.push(format!("#{k}(a)"));
        }
        for w in [sol.ell, 0.5 * (sol.ell + sol.big_l), sol.big_l] {
            let report = check_variational_default(p, &sol.lambda, w).map_err(|e| e.to_string())?;
            if !report.passed {
                failures.push(format!("#{k}(b) w={w}"));
                continue;
            }
            let wp = weighted_potential(p, &sol.lambda).map_err(|e| e.to_string())?;
            let bound = n as f64 * default_eps_ineq(p, &wp) * p.g().iter().copied().fold(0.0, f64::max);
            let gap = certificate_gap(p, &sol.lambda).map_err(|e| e.to_string())?;
            worst_gap_ratio = worst_gap_ratio.max(gap / bound);
            if gap > bound {
                failures.push(format!("#{k}(c) gap={gap:e} bound={bound:e}"));
            }
        }
        let (oracle, _) = brute_force(p);
        let diff = (sol.value - oracle).abs();
        worst_value = worst_value.max(diff);
        if diff > 1e-6 {
            failures.push(format!("#{k}(d) {} vs {}", sol.value, oracle));
        }
    }
    let detail = format!(
        "50 instances, worst |G - brute force|={worst_value:.2e}, worst gap/bound={worst_gap_ratio:.2e}"
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; failures: {}", failures.join(", ")))
    }
}

fn quad(p: &Problem, d: &[f64]) -> f64 {
    let m = p.matrix();
    let n = d.len();
    (0..n)
        .map(|i| (0..n).map(|j| d[i] * m.get(i, j) * d[j]).sum::<f64>())
        .sum()
}

fn identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_mainin = 0.0f64;
    for t in 0..1000 {
        let n = rng.gen_range(2..=20);
        let p = random_instance(&mut rng, n);
        let nu = random_feasible(&mut rng, &p);
        let mu = random_feasible(&mut rng, &p);
        let h = [0.25, 0.5, 1.0][t % 3];
        let mix: Vec<f64> = nu.weights().iter().zip(mu.weights()).map(|(a, b)| h * a + (1.0 - h) * b).collect();
        let mix = DiscreteMeasure::new(mix).map_err(|e| e.to_string())?;
        let g_mix = weighted_energy(&p, &mix).map_err(|e| e.to_string())?;
        let g_mu = weighted_energy(&p, &mu).map_err(|e| e.to_string())?;
        let w_mu = weighted_potential(&p, &mu).map_err(|e| e.to_string())?;
        let d: Vec<f64> = nu.weights().iter().zip(mu.weights()).map(|(a, b)| a - b).collect();
        let lin: f64 = w_mu.iter().zip(&d).map(|(w, x)| w * x).sum();
        let rhs = 2.0 * h * lin + h * h * quad(&p, &d);
        let scale = g_mix.abs().max(g_mu.abs()).max(rhs.abs()).max(f64::MIN_POSITIVE);
        worst_mainin = worst_mainin.max(((g_mix - g_mu) - rhs).abs() / scale);
    }

    let mut worst_repres = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(2..=20);
        let m = Arc::new(random_pd_matrix(&mut rng, n));
        let zp: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let zm: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let field = FieldSpec::CaseII {
            zeta_plus: DiscreteMeasure::new(zp.clone()).unwrap(),
            zeta_minus: DiscreteMeasure::new(zm.clone()).unwrap(),
        };
        let p = Problem::new(m, vec![1.0; n], field, DiscreteMeasure::new(vec![1.0; n]).unwrap())
            .map_err(|e| e.to_string())?;
        let nu = random_feasible(&mut rng, &p);
        let zeta: Vec<f64> = zp.iter().zip(&zm).map(|(a, b)| a - b).collect();
        let shifted: Vec<f64> = nu.weights().iter().zip(&zeta).map(|(a, b)| a + b).collect();
        let (a, b) = (quad(&p, &shifted), quad(&p, &zeta));
        let lhs = weighted_energy(&p, &nu).map_err(|e| e.to_string())?;
        let scale = a.abs().max(b.abs()).max(lhs.abs());
        worst_repres = worst_repres.max((lhs - (a - b)).abs() / scale);
    }

    let mut worst_pairing = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(2..=20);
        let p = random_instance(&mut rng, n);
        let nu = random_feasible(&mut rng, &p);
        let w = weighted_potential(&p, &nu).map_err(|e| e.to_string())?;
        let pairing: f64 = (0..p.n())
            .filter(|&i| nu.weights()[i] != 0.0)
            .map(|i| (w[i] + p.f()[i]) * nu.weights()[i])
            .sum();
        let value = weighted_energy(&p, &nu).map_err(|e| e.to_string())?;
        worst_pairing = worst_pairing.max((value - pairing).abs() / value.abs().max(pairing.abs()));
    }

    let detail = format!(
        "mainin worst rel={worst_mainin:.2e} (1000), repres worst rel={worst_repres:.2e} (200), G=<W+f,nu> worst rel={worst_pairing:.2e}"
    );
    if worst_mainin <= 1e-10 && worst_repres <= 1e-10 && worst_pairing <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform_problem(spec: &KernelSpec, cloud: &PointCloud, f: Vec<f64>, sigma: Vec<f64>) -> Problem {
    let m = Arc::new(assemble(spec, cloud).unwrap());
    let n = cloud.len();
    Problem::new(m, vec![1.0; n], FieldSpec::CaseI { values: f }, DiscreteMeasure::new(sigma).unwrap()).unwrap()
}

fn decreasing_scenarios() -> Vec<(&'static str, Problem, SubsetFamily, Vec<DiscreteMeasure>)> {
    let mut out = Vec::new();

    // shrinking constraint on a fixed sphere
    let cloud = make_sphere(3, 1.0, 150).unwrap();
    let n = cloud.len();
    let base = vec![1.2 / n as f64; n];
    let f = radial_field(&cloud, &[0.0, 0.0, 1.3], -1.0).unwrap().iter().map(|v| -v).collect();
    let p = uniform_problem(&KernelSpec::riesz(3, 1.0).unwrap(), &cloud, f, base.clone());
    let schedule: Vec<DiscreteMeasure> = [2.0, 1.0, 0.5, 0.2, 0.0]
        .iter()
        .map(|e| DiscreteMeasure::new(base.iter().map(|s| s * (1.0 + e)).collect()).unwrap())
        .collect();
    let all: Vec<usize> = (0..n).collect();
    let family = SubsetFamily::new(n, Monotonicity::Decreasing, vec![all; schedule.len()]).unwrap();
    out.push(("riesz sphere, shrinking sigma", p, family, schedule));

    // two circles in the unit disk, inner circle removed step by step
    let outer = make_sphere(2, 0.6, 80).unwrap().with_region("outer");
    let inner = make_sphere(2, 0.3, 40).unwrap().with_region("inner");
    let cloud = union(&outer, &inner).unwrap();
    let n = cloud.len();
    let mut sigma = vec![1.5 / 80.0; 80];
    sigma.extend(vec![0.0; 40]);
    let f: Vec<f64> = cloud.points().map(|x| x[0]).collect();
    let p = uniform_problem(&KernelSpec::log_disk(), &cloud, f, sigma.clone());
    let with_inner = |m: f64| {
        let mut s = sigma.clone();
        for v in &mut s[80..] {
            *v = m / 40.0;
        }
        DiscreteMeasure::new(s).unwrap()
    };
    let schedule = vec![with_inner(1.0), with_inner(0.5), with_inner(0.5), with_inner(0.0)];
    let stages = vec![(0..120).collect(), (0..100).collect(), (0..90).collect(), (0..80).collect()];
    let family = SubsetFamily::new(n, Monotonicity::Decreasing, stages).unwrap();
    out.push(("log kernel, two circles", p, family, schedule));

    // Green kernel of the unit ball, cap of the sphere cut away
    let cloud = make_sphere(3, 0.5, 120).unwrap();
    let n = cloud.len();
    let f: Vec<f64> = cloud.points().map(|x| -3.0 * x[0]).collect();
    let z: Vec<f64> = cloud.points().map(|x| x[2]).collect();
    let keep = |t: f64| (0..n).filter(|&i| z[i] <= t).collect::<Vec<_>>();
    let limit_set = keep(0.1);
    let mut sigma = vec![0.0; n];
    for &i in &limit_set {
        sigma[i] = 1.1 / limit_set.len() as f64;
    }
    let p = uniform_problem(&KernelSpec::green_ball(3, 1.0).unwrap(), &cloud, f, sigma.clone());
    let schedule: Vec<DiscreteMeasure> = [3.0, 2.0, 1.5, 1.0]
        .iter()
        .map(|k| DiscreteMeasure::new(sigma.iter().map(|s| s * k).collect()).unwrap())
        .collect();
    let stages = vec![keep(1.0), keep(0.4), keep(0.25), limit_set];
    let family = SubsetFamily::new(n, Monotonicity::Decreasing, stages).unwrap();
    out.push(("green ball, shrinking cap", p, family, schedule));
    out
}

fn decreasing_families() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, p, family, schedule) in decreasing_scenarios() {
        let run = run_decreasing_family(&p, &family, &schedule, &tight()).map_err(|e| format!("{name}: {e}"))?;
        // independent limit solve along a different path
        let cold = solve(&p, &SolverOptions { algorithm: Algorithm::ProjectedGradient, ..tight() })
            .map_err(|e| format!("{name}: {e}"))?;
        let last = run.stages.last().and_then(|s| s.lambda.as_ref()).ok_or("no stages")?;
        let d_cold = strong_distance(p.matrix(), last, &cold.lambda).map_err(|e| e.to_string())?;
        let d = run.final_distance().unwrap_or(f64::INFINITY).max(d_cold);
        let pass = cold.converged && run.monotone && run.convex_bound_holds && d <= 1e-6;
        ok &= pass;
        let values: Vec<f64> = run.stages.iter().filter_map(|s| s.value).collect();
        lines.push(format!(
            "[{name}: G {:.6}..{:.6} monotone={} final_dist={d:.1e} convex_margin={:.1e}]",
            values[0],
            values[values.len() - 1],
            run.monotone,
            run.worst_convex_margin.unwrap_or(0.0)
        ));
    }
    let detail = lines.join(" ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn exhaustion() -> Outcome {
    let ex = build_example1(&Example1Config::default()).map_err(|e| e.to_string())?;
    let family = nested_exhaustion(&ex.cloud, &[0.5, 0.75, 1.0]).map_err(|e| e.to_string())?;
    let run = run_compact_exhaustion(&ex.problem, &family, &[1.2, 1.05, 1.0], &SolverOptions::default())
        .map_err(|e| e.to_string())?;
    let value = run.final_value().ok_or("no stage solved")?;
    let last = run.stages.last().and_then(|s| s.lambda.as_ref()).ok_or("no stage solved")?;
    // independent full solve from a random feasible start
    let start = random_feasible(&mut ChaCha8Rng::seed_from_u64(6), &ex.problem);
    let full = solve_from(&ex.problem, &SolverOptions::default().with_tolerances(1e-12, 1e-10), &start)
        .map_err(|e| e.to_string())?;
    let dv = (value - run.limit_value).abs().max((value - full.value).abs());
    let d_full = strong_distance(ex.problem.matrix(), last, &full.lambda).map_err(|e| e.to_string())?;
    let d = run.final_distance().unwrap_or(f64::INFINITY).max(d_full);
    let skipped = run.stages.iter().filter(|s| s.skipped).count();
    let detail = format!(
        "final |G - G_full|={dv:.2e} distance={d:.2e} skipped stages={skipped} (independent solve: {} iterations)",
        full.iterations
    );
    if full.converged && dv <= 1e-6 && d <= 1e-5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn capacities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let matrices = [
        Arc::new(assemble(&KernelSpec::riesz(3, 1.0).unwrap(), &make_sphere(3, 1.0, 200).unwrap()).unwrap()),
        Arc::new(assemble(&KernelSpec::newtonian(3).unwrap(), &make_sphere(3, 0.7, 150).unwrap()).unwrap()),
        Arc::new(random_pd_matrix(&mut rng, 40)),
    ];
    let mut worst_identity = 0.0f64;
    let mut worst_potential = f64::INFINITY;
    for k in 0..20 {
        let m = &matrices[k % matrices.len()];
        let size = rng.gen_range(5..=m.n().min(60));
        let mut idx: Vec<usize> = (0..m.n()).collect();
        idx.shuffle(&mut rng);
        let subset = &idx[..size];
        let cd = capacitary_distribution(m, subset).map_err(|e| e.to_string())?;
        let theta = cd.theta.weights();
        let norm = m.bilinear(theta, theta);
        worst_identity = worst_identity.max((cd.capacity - norm).abs() / cd.capacity);
        let pot = m.matvec(theta);
        worst_potential = worst_potential.min(subset.iter().map(|&i| pot[i]).fold(f64::INFINITY, f64::min));
    }
    let mut monotone_failures = 0;
    for k in 0..20 {
        let m = &matrices[k % matrices.len()];
        let mut idx: Vec<usize> = (0..m.n()).collect();
        idx.shuffle(&mut rng);
        let big = rng.gen_range(4..=m.n().min(60));
        let small = rng.gen_range(1..big);
        let ca = capacity(m, &idx[..small]).map_err(|e| e.to_string())?;
        let cb = capacity(m, &idx[..big]).map_err(|e| e.to_string())?;
        if ca > cb * (1.0 + 1e-9) {
            monotone_failures += 1;
        }
    }
    let detail = format!(
        "worst |C - |theta|^2|/C={worst_identity:.2e}, min M theta={worst_potential:.10}, monotonicity failures={monotone_failures}/20"
    );
    if worst_identity <= 1e-8 && worst_potential >= 1.0 - 1e-6 && monotone_failures == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniqueness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for (k, p) in suite_instances().iter().enumerate() {
        let a = solve(p, &tight()).map_err(|e| e.to_string())?;
        let start = random_feasible(&mut rng, p);
        let b = solve_from(p, &tight(), &start).map_err(|e| e.to_string())?;
        let d = strong_distance(p.matrix(), &a.lambda, &b.lambda).map_err(|e| e.to_string())?;
        if !(a.converged && b.converged) {
            return Err(format!("instance {k} did not converge"));
        }
        worst = worst.max(d);
    }
    let detail = format!("50 instances, worst distance between starts={worst:.2e}");
    if worst <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 example1 structure", example1),
        ("2 example2 structure", example2),
        ("3 equivalence suite", equivalence),
        ("4 identity suite", identities),
        ("5 decreasing families", decreasing_families),
        ("6 compact exhaustion", exhaustion),
        ("7 capacitary distribution", capacities),
        ("8 uniqueness", uniqueness),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name} ({secs:.1}s): {detail}");
            }
        }
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
