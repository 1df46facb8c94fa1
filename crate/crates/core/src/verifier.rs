//! Characterization of the equilibrium measure through its weighted potential.
//!
//! For a feasible `λ` with weighted potential `W`, the extreme ratios
//!
//! ```text
//! ℓ = max_{S_λ} W/g,   L = min_{S_{σ−λ}} W/g
//! ```
//!
//! satisfy `ℓ ≤ L` exactly when `λ` is the equilibrium measure, and then
//! every `w ∈ [ℓ, L]` splits the two inequalities `W ≥ w g` on `S_{σ−λ}`
//! and `W ≤ w g` on `S_λ`. Capacity-zero exceptional sets have no discrete
//! counterpart, so all checks run at every thresholded support point with
//! explicit tolerances, and the worst margins are always reported.
//!
//! This module also computes capacitary distributions `θ_B` with
//! `θ_B(X) = ‖θ_B‖² = C(B)` and `κ_{θ_B} ≥ 1` on `B`.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::{weighted_potential, DiscreteMeasure, FieldSpec, Problem};
use crate::error::{Error, Result};
use crate::ext_real;
use crate::kernels::KernelMatrix;
use crate::solver::{solve, SolverOptions};

/// Factor on the uniform unit-mass weight used as the stand-in for `σ = +∞`.
pub const CAPACITY_CAP_FACTOR: f64 = 1e6;

const REPORTED_MARGINS: usize = 10;

/// Support threshold `1e−8 · max σ`.
pub fn default_eps_supp(p: &Problem) -> f64 {
    1e-8 * p.cap().iter().copied().fold(0.0, f64::max)
}

/// Inequality slack `1e−6 · max |W|` over the points that can carry mass.
pub fn default_eps_ineq(p: &Problem, w: &[f64]) -> f64 {
    let scale = w
        .iter()
        .zip(p.cap())
        .filter(|(v, &c)| c > 0.0 && v.is_finite())
        .map(|(v, _)| v.abs())
        .fold(0.0, f64::max);
    1e-6 * if scale > 0.0 { scale } else { 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSets {
    /// Points with `λ > eps_supp`.
    pub s_lambda: Vec<usize>,
    /// Points with `σ − λ > eps_supp`.
    pub s_residual: Vec<usize>,
    pub eps_supp: f64,
}

pub fn supports(p: &Problem, lam: &DiscreteMeasure, eps_supp: f64) -> SupportSets {
    let cap = p.cap();
    let l = lam.weights();
    SupportSets {
        s_lambda: (0..l.len()).filter(|&i| l[i] > eps_supp).collect(),
        s_residual: (0..l.len()).filter(|&i| cap[i] - l[i] > eps_supp).collect(),
        eps_supp,
    }
}

fn ratios(p: &Problem, w: &[f64]) -> Vec<f64> {
    w.iter().zip(p.g()).map(|(a, b)| a / b).collect()
}

/// `(ℓ, L)`; an empty support gives `ℓ = −∞` or `L = +∞`.
pub fn ell_l(p: &Problem, lam: &DiscreteMeasure, eps_supp: f64) -> Result<(f64, f64)> {
    let w = weighted_potential(p, lam)?;
    Ok(ell_l_from(p, lam, &w, eps_supp))
}

fn ell_l_from(p: &Problem, lam: &DiscreteMeasure, w: &[f64], eps_supp: f64) -> (f64, f64) {
    let sets = supports(p, lam, eps_supp);
    let r = ratios(p, w);
    let ell = sets.s_lambda.iter().map(|&i| r[i]).fold(f64::NEG_INFINITY, f64::max);
    let big_l = sets.s_residual.iter().map(|&i| r[i]).fold(f64::INFINITY, f64::min);
    if sets.s_lambda.is_empty() {
        log::warn!("S_lambda is empty at threshold {eps_supp:e}; ell = -inf");
    }
    if sets.s_residual.is_empty() {
        log::warn!("S_(sigma-lambda) is empty at threshold {eps_supp:e}; L = +inf");
    }
    (ell, big_l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub index: usize,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// `W ≥ w g` on `S_{σ−λ}`.
    Lower,
    /// `W ≤ w g` on `S_λ`.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedMargin {
    pub inequality: Inequality,
    pub index: usize,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalReport {
    #[serde(with = "ext_real")]
    pub ell: f64,
    #[serde(rename = "L", with = "ext_real")]
    pub big_l: f64,
    #[serde(with = "ext_real::vec")]
    pub w_interval: Vec<f64>,
    pub w: f64,
    pub eps_ineq: f64,
    pub eps_supp: f64,
    pub ineq1_violations: Vec<Margin>,
    pub ineq2_violations: Vec<Margin>,
    /// Smallest margins over both inequalities, worst first.
    pub worst_margins: Vec<RankedMargin>,
    pub passed: bool,
}

impl VariationalReport {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ell        = {}", fmt_ext(self.ell));
        let _ = writeln!(s, "L          = {}", fmt_ext(self.big_l));
        let _ = writeln!(
            s,
            "w interval = [{}, {}]",
            fmt_ext(self.w_interval[0]),
            fmt_ext(self.w_interval[1])
        );
        let _ = writeln!(s, "w          = {:.17e}", self.w);
        let _ = writeln!(s, "eps_ineq   = {:e}, eps_supp = {:e}", self.eps_ineq, self.eps_supp);
        let _ = writeln!(
            s,
            "violations = {} (lower), {} (upper)",
            self.ineq1_violations.len(),
            self.ineq2_violations.len()
        );
        let _ = writeln!(s, "passed     = {}", self.passed);
        let _ = writeln!(s, "worst margins:");
        for m in &self.worst_margins {
            let tag = match m.inequality {
                Inequality::Lower => "W >= w g",
                Inequality::Upper => "W <= w g",
            };
            let _ = writeln!(s, "  {:>6}  {:<9} {:+.6e}", m.index, tag, m.margin);
        }
        s
    }
}

fn fmt_ext(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.17e}")
    } else {
        format!("{v}")
    }
}

/// Checks both variational inequalities for a given `w`.
pub fn check_variational(
    p: &Problem,
    lam: &DiscreteMeasure,
    w_level: f64,
    eps_ineq: f64,
    eps_supp: f64,
) -> Result<VariationalReport> {
    let w = weighted_potential(p, lam)?;
    let (ell, big_l) = ell_l_from(p, lam, &w, eps_supp);
    let sets = supports(p, lam, eps_supp);
    let g = p.g();

    let lower: Vec<Margin> = sets
        .s_residual
        .iter()
        .map(|&i| Margin {
            index: i,
            margin: w[i] - w_level * g[i],
        })
        .collect();
    let upper: Vec<Margin> = sets
        .s_lambda
        .iter()
        .map(|&i| Margin {
            index: i,
            margin: w_level * g[i] - w[i],
        })
        .collect();

    let violators = |ms: &[Margin]| {
        let mut v: Vec<Margin> = ms.iter().copied().filter(|m| !(m.margin >= -eps_ineq)).collect();
        v.sort_by(|a, b| a.margin.total_cmp(&b.margin).then(a.index.cmp(&b.index)));
        v
    };
    let ineq1_violations = violators(&lower);
    let ineq2_violations = violators(&upper);

    let mut worst: Vec<RankedMargin> = lower
        .iter()
        .map(|m| RankedMargin {
            inequality: Inequality::Lower,
            index: m.index,
            margin: m.margin,
        })
        .chain(upper.iter().map(|m| RankedMargin {
            inequality: Inequality::Upper,
            index: m.index,
            margin: m.margin,
        }))
        .collect();
    worst.sort_by(|a, b| a.margin.total_cmp(&b.margin).then(a.index.cmp(&b.index)));
    worst.truncate(REPORTED_MARGINS);

    let passed = ineq1_violations.is_empty() && ineq2_violations.is_empty();
    Ok(VariationalReport {
        ell,
        big_l,
        w_interval: vec![ell, big_l],
        w: w_level,
        eps_ineq,
        eps_supp,
        ineq1_violations,
        ineq2_violations,
        worst_margins: worst,
        passed,
    })
}

/// `check_variational` with the default tolerances.
pub fn check_variational_default(
    p: &Problem,
    lam: &DiscreteMeasure,
    w_level: f64,
) -> Result<VariationalReport> {
    let w = weighted_potential(p, lam)?;
    check_variational(p, lam, w_level, default_eps_ineq(p, &w), default_eps_supp(p))
}

/// `(E⁺(w), E⁻(w))`: points where `W/g > w` and where `W/g < w`.
pub fn violation_sets(p: &Problem, lam: &DiscreteMeasure, w_level: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    let r = ratios(p, &weighted_potential(p, lam)?);
    let plus = (0..r.len()).filter(|&i| r[i] > w_level).collect();
    let minus = (0..r.len()).filter(|&i| r[i] < w_level).collect();
    Ok((plus, minus))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitaryDistribution {
    pub theta: DiscreteMeasure,
    pub capacity: f64,
    /// Per-point bound that stood in for `σ = +∞`.
    pub cap_surrogate: f64,
}

/// Capacitary distribution of an index set.
///
/// Minimizes `‖ν‖²` over probability measures on the subset; then
/// `θ = ν / ‖ν‖²` and `C = θ(X) = 1/‖ν‖²`.
pub fn capacitary_distribution(m: &Arc<KernelMatrix>, subset: &[usize]) -> Result<CapacitaryDistribution> {
    let n = m.n();
    if subset.is_empty() {
        return Err(Error::InvalidParameter("capacity of an empty subset".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidParameter(format!("index {bad} out of range")));
    }
    let mut members = subset.to_vec();
    members.sort_unstable();
    members.dedup();
    let cap_surrogate = CAPACITY_CAP_FACTOR / members.len() as f64;
    let mut sigma = vec![0.0; n];
    for &i in &members {
        sigma[i] = cap_surrogate;
    }
    let p = Problem::new(
        m.clone(),
        vec![1.0; n],
        FieldSpec::zero(n),
        DiscreteMeasure::new(sigma)?,
    )?;
    let scale = members.iter().map(|&i| m.diag(i)).fold(0.0, f64::max);
    let opts = SolverOptions::default().with_tolerances(1e-12 * scale, 1e-10 * scale);
    let sol = solve(&p, &opts)?;
    let energy = sol.value;
    let theta = sol.lambda.scaled(1.0 / energy)?;
    let capacity = theta.total_mass();
    Ok(CapacitaryDistribution {
        theta,
        capacity,
        cap_surrogate,
    })
}

/// `C(subset)`; zero for the empty set.
pub fn capacity(m: &Arc<KernelMatrix>, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Ok(0.0);
    }
    Ok(capacitary_distribution(m, subset)?.capacity)
}
