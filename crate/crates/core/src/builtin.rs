//! Built-in scenarios on spheres in ℝ³.
//!
//! `example1`: Riesz kernel with `2 < α < n`, `f = 0`, `Σ` the union of the
//! unit sphere and a concentric inner sphere, `σ` the uniform probability
//! measure on the outer sphere plus some mass on the inner one. The
//! equilibrium measure is `σ` restricted to the outer sphere and `L > ℓ`.
//!
//! `example2`: Riesz kernel with `α ≤ 2` and the field `|x − a|^{α−n}` of a
//! unit charge at a point `a` of the unit sphere. The unconstrained
//! minimizer `λ*` has constant weighted potential `q` on its support. Using
//! `σ = λ*` there plus mass on `U = {W > 2q}` as the constraint gives back
//! `λ*` with `ℓ = q < 2q ≤ L`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::{radial_field, strong_distance, weighted_potential, DiscreteMeasure, FieldSpec, Problem};
use crate::error::{Error, Result};
use crate::geometry::{make_sphere, union, PointCloud};
use crate::kernels::{assemble, KernelSpec};
use crate::solver::{solve, Solution, SolverOptions};
use crate::verifier::{self, default_eps_ineq, default_eps_supp, VariationalReport};

/// Stand-in for an absent upper constraint, relative to the uniform unit mass.
pub const UNCONSTRAINED_CAP_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Example1Config {
    pub alpha: f64,
    pub outer_radius: f64,
    pub inner_radius: f64,
    pub outer_count: usize,
    pub inner_count: usize,
    /// Total σ-mass spread uniformly over the inner sphere.
    pub inner_mass: f64,
}

impl Default for Example1Config {
    fn default() -> Self {
        Example1Config {
            alpha: 2.5,
            outer_radius: 1.0,
            inner_radius: 0.5,
            outer_count: 800,
            inner_count: 400,
            inner_mass: 0.5,
        }
    }
}

pub struct Example1 {
    pub cloud: PointCloud,
    pub problem: Problem,
    pub outer: Vec<usize>,
    pub inner: Vec<usize>,
}

pub const OUTER: &str = "outer";
pub const INNER: &str = "inner";

pub fn build_example1(cfg: &Example1Config) -> Result<Example1> {
    if !(cfg.inner_radius < cfg.outer_radius) {
        return Err(Error::InvalidParameter("inner radius must be below outer radius".into()));
    }
    let outer = make_sphere(3, cfg.outer_radius, cfg.outer_count)?.with_region(OUTER);
    let inner = make_sphere(3, cfg.inner_radius, cfg.inner_count)?.with_region(INNER);
    let cloud = union(&outer, &inner)?;
    let matrix = Arc::new(assemble(&KernelSpec::riesz(3, cfg.alpha)?, &cloud)?);
    let mut sigma = vec![1.0 / cfg.outer_count as f64; cfg.outer_count];
    sigma.extend(std::iter::repeat_n(cfg.inner_mass / cfg.inner_count as f64, cfg.inner_count));
    let n = cloud.len();
    let problem = Problem::new(matrix, vec![1.0; n], FieldSpec::zero(n), DiscreteMeasure::new(sigma)?)?;
    Ok(Example1 {
        outer: cloud.region_indices(OUTER),
        inner: cloud.region_indices(INNER),
        cloud,
        problem,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Example1Outcome {
    pub solution: Solution,
    /// `max |λ_i − σ_i|` over the outer sphere.
    pub max_outer_deviation: f64,
    /// `max λ_i` over the inner sphere.
    pub max_inner_weight: f64,
    pub report: VariationalReport,
}

impl Example1Outcome {
    /// Structural claims: `λ = σ` on the outer sphere, nothing inside, `L > ℓ`.
    pub fn passes(&self, outer_tol: f64, inner_tol: f64) -> bool {
        self.max_outer_deviation <= outer_tol
            && self.max_inner_weight <= inner_tol
            && self.solution.big_l - self.solution.ell > 0.0
    }
}

pub fn run_example1(ex: &Example1, opts: &SolverOptions) -> Result<Example1Outcome> {
    let sol = solve(&ex.problem, opts)?;
    let lam = sol.lambda.weights();
    let sigma = ex.problem.sigma().weights();
    let max_outer_deviation = ex.outer.iter().map(|&i| (lam[i] - sigma[i]).abs()).fold(0.0, f64::max);
    let max_inner_weight = ex.inner.iter().map(|&i| lam[i]).fold(0.0, f64::max);
    let report = verifier::check_variational_default(
        &ex.problem,
        &sol.lambda,
        0.5 * (sol.ell + sol.big_l),
    )?;
    Ok(Example1Outcome {
        solution: sol,
        max_outer_deviation,
        max_inner_weight,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Example2Config {
    pub alpha: f64,
    pub count: usize,
    /// Location of the unit charge; defaults to the north pole.
    pub pole: Option<Vec<f64>>,
    /// Per-point σ weight on the neighbourhood `U`.
    pub u_weight: Option<f64>,
}

impl Default for Example2Config {
    fn default() -> Self {
        Example2Config {
            alpha: 2.0,
            count: 1000,
            pole: None,
            u_weight: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Example2Outcome {
    pub unconstrained: Solution,
    /// Level `q` of the weighted potential on the unconstrained support.
    pub q: f64,
    pub support: Vec<usize>,
    /// Points where the unconstrained weighted potential exceeds `2q`.
    pub neighbourhood: Vec<usize>,
    pub constrained: Solution,
    /// `‖λ_constrained − λ*‖`.
    pub distance: f64,
    /// `(max − min)/|mean|` of `W/g` over the thresholded unconstrained support.
    pub relative_spread: f64,
    pub eps_ineq: f64,
    pub report: VariationalReport,
}

impl Example2Outcome {
    pub fn passes(&self, distance_tol: f64, spread_tol: f64) -> bool {
        self.distance <= distance_tol
            && self.constrained.big_l >= 2.0 * self.constrained.ell - self.eps_ineq
            && self.relative_spread <= spread_tol
    }
}

pub struct Example2 {
    pub cloud: PointCloud,
    /// Unconstrained problem on the whole sphere.
    pub problem: Problem,
}

pub fn build_example2(cfg: &Example2Config) -> Result<Example2> {
    let n = cfg.count;
    let cloud = make_sphere(3, 1.0, n)?.with_region("sphere");
    let spec = KernelSpec::riesz(3, cfg.alpha)?;
    if cfg.alpha > 2.0 {
        return Err(Error::InvalidParameter("example2 needs alpha <= 2".into()));
    }
    let pole = cfg.pole.clone().unwrap_or_else(|| vec![0.0, 0.0, 1.0]);
    let f = radial_field(&cloud, &pole, cfg.alpha - 3.0)?;
    let matrix = Arc::new(assemble(&spec, &cloud)?);
    let cap = UNCONSTRAINED_CAP_FACTOR / n as f64;
    let problem = Problem::new(
        matrix,
        vec![1.0; n],
        FieldSpec::CaseI { values: f },
        DiscreteMeasure::new(vec![cap; n])?,
    )?;
    Ok(Example2 { cloud, problem })
}

/// Second phase of example2: `σ = λ*` plus `u_weight` on `U = {W > 2q}`.
/// Returns the constrained problem and `U`.
pub fn example2_constrained(ex: &Example2, cfg: &Example2Config, free: &Solution) -> Result<(Problem, Vec<usize>)> {
    let p = &ex.problem;
    let n = p.n();
    let w = weighted_potential(p, &free.lambda)?;
    let q = free.ell;
    let neighbourhood: Vec<usize> = (0..n).filter(|&i| w[i] > 2.0 * q).collect();
    if neighbourhood.is_empty() {
        return Err(Error::InvalidParameter(
            "no point has weighted potential above 2q; refine the cloud".into(),
        ));
    }
    let u_weight = cfg.u_weight.unwrap_or(1.0 / n as f64);
    let mut sigma = free.lambda.weights().to_vec();
    for &i in &neighbourhood {
        sigma[i] += u_weight;
    }
    Ok((p.with_sigma(DiscreteMeasure::new(sigma)?)?, neighbourhood))
}

pub fn run_example2(ex: &Example2, cfg: &Example2Config, opts: &SolverOptions) -> Result<Example2Outcome> {
    let p = &ex.problem;
    let n = p.n();
    let free = solve(p, opts)?;
    let w = weighted_potential(p, &free.lambda)?;
    let q = free.ell;
    let lam = free.lambda.weights();
    let support: Vec<usize> = (0..n).filter(|&i| lam[i] > 0.0).collect();
    let (constrained_problem, neighbourhood) = example2_constrained(ex, cfg, &free)?;
    let constrained = solve(&constrained_problem, opts)?;
    let distance = strong_distance(p.matrix(), &constrained.lambda, &free.lambda)?;

    let eps_supp = default_eps_supp(p);
    let on_support: Vec<f64> = (0..n).filter(|&i| lam[i] > eps_supp).map(|i| w[i] / p.g()[i]).collect();
    let max = on_support.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = on_support.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = on_support.iter().sum::<f64>() / on_support.len() as f64;
    let relative_spread = (max - min) / mean.abs();

    let wc = weighted_potential(&constrained_problem, &constrained.lambda)?;
    let eps_ineq = default_eps_ineq(&constrained_problem, &wc);
    let report = verifier::check_variational(
        &constrained_problem,
        &constrained.lambda,
        constrained.ell,
        eps_ineq,
        default_eps_supp(&constrained_problem),
    )?;
    Ok(Example2Outcome {
        unconstrained: free,
        q,
        support,
        neighbourhood,
        constrained,
        distance,
        relative_spread,
        eps_ineq,
        report,
    })
}
