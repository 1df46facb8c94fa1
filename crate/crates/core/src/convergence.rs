//! Equilibrium measures along monotone families of sets and constraints.
//!
//! Two runs are supported:
//!
//! * a decreasing chain `(Σ_s, σ_s)` shrinking to a limit problem, along which
//!   the values are nondecreasing and consecutive solutions obey
//!   `‖λ_d − λ_s‖² ≤ G_d − G_s`;
//! * an increasing exhaustion by subsets `K` with inflated constraints
//!   `β_K σ_K`, `β_K ↓ 1`, whose values approach the full problem's value.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::energy::{strong_distance, DiscreteMeasure, Problem};
use crate::error::{Error, Result};
use crate::geometry::{Monotonicity, SubsetFamily};
use crate::solver::{feasible_point, solve_from, Solution, SolverOptions};

/// Slack on value monotonicity along a chain.
pub const MONOTONE_SLACK: f64 = 1e-9;
/// Slack on the `‖λ_d − λ_s‖² ≤ G_d − G_s` bound.
pub const CONVEX_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: usize,
    /// Number of points in the stage's index set.
    pub size: usize,
    /// Constraint inflation factor (1 for decreasing families).
    pub beta: f64,
    /// `None` when the stage problem was infeasible and skipped.
    pub value: Option<f64>,
    pub gap: Option<f64>,
    pub converged: bool,
    pub skipped: bool,
    pub lambda: Option<DiscreteMeasure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRun {
    pub stages: Vec<StageResult>,
    /// Value of the limit (or full) problem.
    pub limit_value: f64,
    pub limit_lambda: DiscreteMeasure,
    /// `‖λ_stage − λ_limit‖`, `None` for skipped stages.
    pub distances: Vec<Option<f64>>,
    /// Stage values are monotone in the direction the theory predicts.
    pub monotone: bool,
    /// The consecutive-pair energy bound holds (always true for exhaustions).
    pub convex_bound_holds: bool,
    /// Worst slack `G_d − G_s − ‖λ_d − λ_s‖²` over consecutive pairs.
    pub worst_convex_margin: Option<f64>,
}

impl FamilyRun {
    fn solved(&self) -> impl Iterator<Item = (usize, &StageResult)> {
        self.stages.iter().enumerate().filter(|(_, s)| !s.skipped)
    }

    /// Distance of the last solved stage to the limit solution.
    pub fn final_distance(&self) -> Option<f64> {
        self.solved().last().and_then(|(k, _)| self.distances[k])
    }

    pub fn final_value(&self) -> Option<f64> {
        self.solved().last().and_then(|(_, s)| s.value)
    }

    /// Writes `stage,size,beta,G,gap,distance_to_final`; skipped stages leave blanks.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "stage,size,beta,G,gap,distance_to_final")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        for (s, d) in self.stages.iter().zip(&self.distances) {
            writeln!(
                out,
                "{},{},{:.16e},{},{},{}",
                s.stage,
                s.size,
                s.beta,
                opt(s.value),
                opt(s.gap),
                opt(*d)
            )?;
        }
        Ok(())
    }
}

/// Solves from the warm start when it is feasible for `p`, otherwise from
/// the greedy feasible point.
fn solve_warm(p: &Problem, opts: &SolverOptions, warm: Option<&DiscreteMeasure>) -> Result<Solution> {
    match warm {
        Some(w) if p.check_feasible(w, 1e-10).is_ok() => solve_from(p, opts, w),
        _ => solve_from(p, opts, &feasible_point(p)?),
    }
}

fn require_converged(stage: usize, sol: &Solution) -> Result<()> {
    if !sol.converged {
        return Err(Error::StageNotConverged {
            stage,
            gap: sol.gap,
        });
    }
    Ok(())
}

/// Solves along a decreasing chain of sets and constraints ending at `p_limit`.
///
/// Stage `k` is `p_limit` with constraint `sigma_schedule[k]` restricted to
/// `family.stages()[k]`.
pub fn run_decreasing_family(
    p_limit: &Problem,
    family: &SubsetFamily,
    sigma_schedule: &[DiscreteMeasure],
    opts: &SolverOptions,
) -> Result<FamilyRun> {
    let n = p_limit.n();
    if family.direction() != Monotonicity::Decreasing {
        return Err(Error::InvalidParameter("family must be decreasing".into()));
    }
    if family.base_len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: family.base_len(),
        });
    }
    if sigma_schedule.len() != family.len() {
        return Err(Error::SizeMismatch {
            expected: family.len(),
            found: sigma_schedule.len(),
        });
    }
    let limit_sigma = p_limit.sigma().weights();
    let limit_support: Vec<usize> = (0..n).filter(|&i| limit_sigma[i] > 0.0).collect();
    for (k, sigma) in sigma_schedule.iter().enumerate() {
        if sigma.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                found: sigma.len(),
            });
        }
        let mask = family.mask(k);
        if limit_support.iter().any(|&i| !mask[i]) {
            return Err(Error::InvalidParameter(format!(
                "stage {k} does not contain the support of the limit constraint"
            )));
        }
        if sigma.weights().iter().zip(limit_sigma).any(|(s, l)| s < l) {
            return Err(Error::InvalidParameter(format!(
                "sigma at stage {k} is below the limit constraint"
            )));
        }
        if k > 0 {
            let prev = sigma_schedule[k - 1].weights();
            if sigma.weights().iter().zip(prev).any(|(s, p)| s > p) {
                return Err(Error::InvalidParameter(format!(
                    "sigma schedule increases at stage {k}"
                )));
            }
        }
    }

    let mut stages = Vec::with_capacity(family.len());
    let mut solutions: Vec<Solution> = Vec::with_capacity(family.len());
    for (k, sigma) in sigma_schedule.iter().enumerate() {
        let stage_problem = p_limit.with_sigma(sigma.trace(&family.mask(k)))?;
        let sol = solve_warm(&stage_problem, opts, solutions.last().map(|s| &s.lambda))?;
        require_converged(k, &sol)?;
        stages.push(StageResult {
            stage: k,
            size: family.stages()[k].len(),
            beta: 1.0,
            value: Some(sol.value),
            gap: Some(sol.gap),
            converged: sol.converged,
            skipped: false,
            lambda: Some(sol.lambda.clone()),
        });
        solutions.push(sol);
    }

    let limit = solve_warm(p_limit, opts, solutions.last().map(|s| &s.lambda))?;
    require_converged(family.len(), &limit)?;

    let m = p_limit.matrix();
    let distances = solutions
        .iter()
        .map(|s| strong_distance(m, &s.lambda, &limit.lambda).map(Some))
        .collect::<Result<Vec<_>>>()?;
    let monotone = solutions
        .windows(2)
        .all(|w| w[1].value >= w[0].value - MONOTONE_SLACK);
    let mut worst: Option<f64> = None;
    for w in solutions.windows(2) {
        let d = strong_distance(m, &w[1].lambda, &w[0].lambda)?;
        let margin = w[1].value - w[0].value - d * d;
        worst = Some(worst.map_or(margin, |x: f64| x.min(margin)));
    }
    let convex_bound_holds = worst.is_none_or(|x| x >= -CONVEX_SLACK);

    Ok(FamilyRun {
        stages,
        limit_value: limit.value,
        limit_lambda: limit.lambda,
        distances,
        monotone,
        convex_bound_holds,
        worst_convex_margin: worst,
    })
}

/// `β_K = 1 + 0.2 (1 − |K|/N)` for each stage of an exhaustion.
pub fn default_beta_schedule(family: &SubsetFamily) -> Vec<f64> {
    let n = family.base_len() as f64;
    family
        .stages()
        .iter()
        .map(|s| 1.0 + 0.2 * (1.0 - s.len() as f64 / n))
        .collect()
}

/// Solves along an increasing exhaustion with constraints `β_K σ` on `K`.
/// Infeasible stages are recorded as skipped.
pub fn run_compact_exhaustion(
    p: &Problem,
    family: &SubsetFamily,
    beta_schedule: &[f64],
    opts: &SolverOptions,
) -> Result<FamilyRun> {
    let n = p.n();
    if family.direction() != Monotonicity::Increasing {
        return Err(Error::InvalidParameter("family must be increasing".into()));
    }
    if family.base_len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: family.base_len(),
        });
    }
    if family.stages().last().map(Vec::len) != Some(n) {
        return Err(Error::InvalidParameter(
            "exhaustion must end at the full index set".into(),
        ));
    }
    if beta_schedule.len() != family.len() {
        return Err(Error::SizeMismatch {
            expected: family.len(),
            found: beta_schedule.len(),
        });
    }
    if beta_schedule.iter().any(|&b| !(b >= 1.0 && b.is_finite())) {
        return Err(Error::InvalidParameter("beta values must be >= 1".into()));
    }
    if beta_schedule.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameter("beta schedule must be nonincreasing".into()));
    }
    if (beta_schedule.last().unwrap() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParameter("beta schedule must end at 1".into()));
    }

    let full = solve_warm(p, opts, None)?;
    require_converged(family.len(), &full)?;

    let mut stages = Vec::with_capacity(family.len());
    let mut warm: Option<DiscreteMeasure> = None;
    for (k, &beta) in beta_schedule.iter().enumerate() {
        let size = family.stages()[k].len();
        let sigma = p.sigma().trace(&family.mask(k)).scaled(beta)?;
        let stage_problem = match p.with_sigma(sigma) {
            Ok(sp) => sp,
            Err(Error::Infeasible { available, .. }) => {
                log::info!("exhaustion stage {k} infeasible (g-mass {available}); skipped");
                stages.push(StageResult {
                    stage: k,
                    size,
                    beta,
                    value: None,
                    gap: None,
                    converged: false,
                    skipped: true,
                    lambda: None,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let sol = solve_warm(&stage_problem, opts, warm.as_ref())?;
        require_converged(k, &sol)?;
        warm = Some(sol.lambda.clone());
        stages.push(StageResult {
            stage: k,
            size,
            beta,
            value: Some(sol.value),
            gap: Some(sol.gap),
            converged: true,
            skipped: false,
            lambda: Some(sol.lambda),
        });
    }

    let m = p.matrix();
    let distances = stages
        .iter()
        .map(|s| match &s.lambda {
            Some(l) => strong_distance(m, l, &full.lambda).map(Some),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = stages.iter().filter_map(|s| s.value).collect();
    // enlarging K lowers the value while shrinking β raises it, so no
    // monotonicity is implied; report whether the values approach the limit
    let monotone = values
        .windows(2)
        .all(|w| (w[1] - full.value).abs() <= (w[0] - full.value).abs() + MONOTONE_SLACK);

    Ok(FamilyRun {
        stages,
        limit_value: full.value,
        limit_lambda: full.lambda,
        distances,
        monotone,
        convex_bound_holds: true,
        worst_convex_margin: None,
    })
}
