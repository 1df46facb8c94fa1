//! Solver for the constrained minimal weighted-energy problem.
//!
//! The default method is a conditional-gradient iteration. Every iteration
//! calls the linear oracle on the current weighted potential, which also
//! yields the optimality certificate
//! `gap(λ) = ⟨W, λ⟩ − min_{ν feasible} ⟨W, ν⟩`, zero exactly at the
//! equilibrium measure. Two descent directions are compared per step:
//!
//! * the classical direction `s − λ` towards the oracle vertex `s`;
//! * a pairwise direction that moves g-mass from the support point with the
//!   largest `W/g` to an unsaturated point with the smallest `W/g`.
//!
//! Both use the closed-form exact line search on the quadratic objective and
//! the step with the larger decrease is taken. The pairwise steps land
//! exactly on the bounds `0` and `σ`, which gives finite identification of
//! the active set where the classical iteration would only zig-zag.

use serde::{Deserialize, Serialize};

use crate::energy::{pairing, pairing_diff, weighted_energy, DiscreteMeasure, Problem, MASS_TOL};
use crate::error::{Error, Result};
use crate::ext_real;
use crate::kernels::dot;
use crate::verifier;

/// Iterations between full recomputations of `M λ`.
const REFRESH_EVERY: usize = 512;

/// Above this many oracle-vertex nonzeros the classical direction is only
/// evaluated every `FW_STRIDE` iterations, since it costs one column of `M`
/// per nonzero.
const FW_DENSE_SUPPORT: usize = 64;
const FW_STRIDE: usize = 16;
/// Relative slack below which an entry counts as sitting on a bound when
/// choosing pairs; rounding leaves `λ` a few ulps away from `0` or `σ`.
const ROOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    ExactLineSearch,
    FixedDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    ConditionalGradient,
    ProjectedGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Absolute tolerance on the certificate gap.
    pub gap_tol: f64,
    /// Tolerance on `ℓ − L` (in units of `W/g`) over the thresholded supports.
    pub kkt_tol: f64,
    pub step_rule: StepRule,
    pub algorithm: Algorithm,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 100_000,
            gap_tol: 1e-9,
            kkt_tol: 1e-9,
            step_rule: StepRule::ExactLineSearch,
            algorithm: Algorithm::ConditionalGradient,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap_tol > 0.0) {
            return Err(Error::InvalidParameter("gap_tol must be positive".into()));
        }
        if !(self.kkt_tol > 0.0) {
            return Err(Error::InvalidParameter("kkt_tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_tolerances(mut self, gap_tol: f64, kkt_tol: f64) -> Self {
        self.gap_tol = gap_tol;
        self.kkt_tol = kkt_tol;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub lambda: DiscreteMeasure,
    /// `G_f(λ)`.
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
    #[serde(with = "ext_real")]
    pub ell: f64,
    #[serde(rename = "L", with = "ext_real")]
    pub big_l: f64,
    pub converged: bool,
}

/// A solution together with what produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionRecord {
    #[serde(flatten)]
    pub solution: Solution,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub options: SolverOptions,
    pub problem_hash: String,
    pub eps_supp: f64,
}

impl SolutionRecord {
    pub fn new(p: &Problem, opts: &SolverOptions, solution: Solution) -> Self {
        SolutionRecord {
            solution,
            provenance: Provenance {
                options: *opts,
                problem_hash: p.content_hash(),
                eps_supp: verifier::default_eps_supp(p),
            },
        }
    }
}

/// Greedy fill of the cheapest `c/g` ratios up to g-mass one; skips indices
/// with zero bound or infinite cost. Ties go to the lower index.
fn lp_fill(c: &[f64], g: &[f64], cap: &[f64]) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..c.len())
        .filter(|&i| cap[i] > 0.0 && c[i] < f64::INFINITY)
        .collect();
    order.sort_by(|&a, &b| (c[a] / g[a]).total_cmp(&(c[b] / g[b])).then(a.cmp(&b)));
    let mut out = vec![0.0; c.len()];
    let mut remaining = 1.0;
    for &i in &order {
        let full = g[i] * cap[i];
        if full < remaining {
            out[i] = cap[i];
            remaining -= full;
        } else {
            out[i] = remaining / g[i];
            remaining = 0.0;
            break;
        }
    }
    if remaining > MASS_TOL {
        return Err(Error::Infeasible {
            available: 1.0 - remaining,
            required: 1.0,
        });
    }
    Ok(out)
}

/// Minimizer of `⟨c, ν⟩` over the feasible set, excluding points with `c = +∞`.
pub fn lp_oracle(c: &[f64], p: &Problem) -> Result<DiscreteMeasure> {
    if c.len() != p.n() {
        return Err(Error::SizeMismatch {
            expected: p.n(),
            found: c.len(),
        });
    }
    if c.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
        return Err(Error::InvalidParameter("linear cost must be > -inf".into()));
    }
    lp_fill(c, p.g(), p.cap()).map(DiscreteMeasure::from_clamped)
}

/// Feasible measure with finite weighted energy: σ-mass accumulated in
/// increasing `f/g` order until the g-mass reaches one.
pub fn feasible_point(p: &Problem) -> Result<DiscreteMeasure> {
    lp_oracle(p.f(), p)
}

/// `⟨W, λ⟩ − min_ν ⟨W, ν⟩` for the weighted potential `W` of `λ`.
pub fn certificate_gap(p: &Problem, lam: &DiscreteMeasure) -> Result<f64> {
    p.check_feasible(lam, 1e-10)?;
    let w = crate::energy::weighted_potential(p, lam)?;
    gap_from(&w, lam.weights(), p)
}

fn gap_from(w: &[f64], lam: &[f64], p: &Problem) -> Result<f64> {
    let s = lp_fill(w, p.g(), p.cap())?;
    Ok(pairing_diff(w, lam, &s))
}

/// Euclidean projection onto `{0 ≤ ν ≤ σ, ⟨g,ν⟩ = 1}`.
///
/// The projection has the form `ν_i(t) = clip(v_i − t g_i, 0, σ_i)`; the
/// multiplier `t` is bracketed and bisected on the monotone map
/// `t ↦ ⟨g, ν(t)⟩`, then snapped by solving for it on the free set.
pub fn project_box_hyperplane(v: &[f64], p: &Problem) -> Result<DiscreteMeasure> {
    if v.len() != p.n() {
        return Err(Error::SizeMismatch {
            expected: p.n(),
            found: v.len(),
        });
    }
    let g = p.g();
    let cap = p.cap();
    let active: Vec<usize> = (0..v.len()).filter(|&i| cap[i] > 0.0).collect();
    if let Some(&i) = active.iter().find(|&&i| !v[i].is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite entry at {i}")));
    }
    let available = p.available_mass();
    if available < 1.0 - MASS_TOL {
        return Err(Error::Infeasible {
            available,
            required: 1.0,
        });
    }
    let at = |t: f64, i: usize| (v[i] - t * g[i]).clamp(0.0, cap[i]);
    let mass = |t: f64| active.iter().map(|&i| g[i] * at(t, i)).sum::<f64>();

    let mut lo = active
        .iter()
        .map(|&i| (v[i] - cap[i]) / g[i])
        .fold(f64::INFINITY, f64::min);
    let mut hi = active
        .iter()
        .map(|&i| v[i] / g[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        t = 0.5 * (lo + hi);
        let m = mass(t);
        if (m - 1.0).abs() <= 1e-12 || hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()) {
            break;
        }
        if m > 1.0 {
            lo = t;
        } else {
            hi = t;
        }
    }

    // closed-form multiplier on the free set identified by bisection
    let (mut num, mut den) = (-1.0, 0.0);
    for &i in &active {
        let x = v[i] - t * g[i];
        if x >= cap[i] {
            num += g[i] * cap[i];
        } else if x > 0.0 {
            num += g[i] * v[i];
            den += g[i] * g[i];
        }
    }
    if den > 0.0 {
        let snapped = num / den;
        if ((mass(snapped) - 1.0).abs()) <= (mass(t) - 1.0).abs() {
            t = snapped;
        }
    }

    let mut out = vec![0.0; v.len()];
    for &i in &active {
        out[i] = at(t, i);
    }
    Ok(DiscreteMeasure::from_clamped(out))
}

/// Solves from [`feasible_point`].
pub fn solve(p: &Problem, opts: &SolverOptions) -> Result<Solution> {
    let start = feasible_point(p)?;
    solve_from(p, opts, &start)
}

/// Solves starting from a given feasible measure.
pub fn solve_from(p: &Problem, opts: &SolverOptions, start: &DiscreteMeasure) -> Result<Solution> {
    opts.validate()?;
    let pd = p.matrix().pd_check();
    if !pd.positive_definite {
        return Err(Error::NotPositiveDefinite {
            min_pivot: pd.min_pivot,
            row: pd.row,
        });
    }
    p.check_feasible(start, 1e-10)?;

    let mut state = State::new(p, start.weights().to_vec());
    let eps_supp = verifier::default_eps_supp(p);
    let mut iterations = 0;
    let mut converged = false;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let tracks_best = opts.step_rule == StepRule::FixedDecay;

    loop {
        if iterations % REFRESH_EVERY == 0 {
            state.refresh();
        }
        let w = state.weighted_potential();
        let s = lp_fill(&w, p.g(), p.cap())?;
        let gap = pairing_diff(&w, &state.lam, &s);
        let kkt = state.kkt_violation(&w, eps_supp);
        if gap <= opts.gap_tol && kkt <= opts.kkt_tol {
            // confirm against a fresh potential before accepting
            state.refresh();
            let w = state.weighted_potential();
            let gap = gap_from(&w, &state.lam, p)?;
            if gap <= opts.gap_tol && state.kkt_violation(&w, eps_supp) <= opts.kkt_tol {
                converged = true;
                break;
            }
            continue;
        }
        if iterations >= opts.max_iters {
            break;
        }
        if tracks_best {
            let value = state.value();
            if best.as_ref().is_none_or(|(b, _)| value < *b) {
                best = Some((value, state.lam.clone()));
            }
        }
        let before = if cfg!(debug_assertions) && !tracks_best {
            Some(state.value())
        } else {
            None
        };

        let moved = match (opts.algorithm, opts.step_rule) {
            (Algorithm::ConditionalGradient, StepRule::ExactLineSearch) => {
                state.conditional_gradient_step(&w, &s, gap, iterations)
            }
            (Algorithm::ConditionalGradient, StepRule::FixedDecay) => {
                let h = 2.0 / (iterations as f64 + 2.0);
                state.move_towards(&s, h);
                true
            }
            (Algorithm::ProjectedGradient, rule) => state.projected_step(&w, rule)?,
        };
        iterations += 1;

        if let Some(before) = before {
            let after = state.value();
            debug_assert!(
                after <= before + 1e-12 * before.abs().max(1.0),
                "objective increased from {before} to {after}"
            );
        }
        if !moved {
            log::debug!("solver stalled at iteration {iterations} with gap {gap:e}");
            break;
        }
    }

    state.refresh();
    let mut lam = state.lam;
    if tracks_best && !converged {
        if let Some((b, l)) = best {
            let mut candidate = State::new(p, lam.clone());
            candidate.refresh();
            if b < candidate.value() {
                lam = l;
            }
        }
    }
    let lambda = DiscreteMeasure::from_clamped(lam);
    finish(p, lambda, iterations, converged, eps_supp)
}

fn finish(
    p: &Problem,
    lambda: DiscreteMeasure,
    iterations: usize,
    converged: bool,
    eps_supp: f64,
) -> Result<Solution> {
    let value = weighted_energy(p, &lambda)?;
    let gap = certificate_gap(p, &lambda)?;
    let (ell, big_l) = verifier::ell_l(p, &lambda, eps_supp)?;
    debug_assert!(
        value >= p.value_lower_bound() - 1e-9 * value.abs().max(1.0),
        "value {value} below the lower bound {}",
        p.value_lower_bound()
    );
    Ok(Solution {
        lambda,
        value,
        gap,
        iterations,
        ell,
        big_l,
        converged,
    })
}

struct State<'a> {
    p: &'a Problem,
    lam: Vec<f64>,
    /// `M λ`, maintained incrementally.
    mlam: Vec<f64>,
    step_size: Option<f64>,
}

impl<'a> State<'a> {
    fn new(p: &'a Problem, lam: Vec<f64>) -> Self {
        let n = lam.len();
        State {
            p,
            lam,
            mlam: vec![0.0; n],
            step_size: None,
        }
    }

    fn refresh(&mut self) {
        self.mlam = self.p.matrix().matvec(&self.lam);
    }

    fn weighted_potential(&self) -> Vec<f64> {
        self.mlam.iter().zip(self.p.f()).map(|(a, b)| a + b).collect()
    }

    fn value(&self) -> f64 {
        pairing(&self.mlam, &self.lam) + 2.0 * pairing(self.p.f(), &self.lam)
    }

    /// `ℓ − L` over supports thresholded at `eps_supp`.
    fn kkt_violation(&self, w: &[f64], eps_supp: f64) -> f64 {
        let g = self.p.g();
        let cap = self.p.cap();
        let mut ell = f64::NEG_INFINITY;
        let mut big_l = f64::INFINITY;
        for i in 0..w.len() {
            let r = w[i] / g[i];
            if self.lam[i] > eps_supp {
                ell = ell.max(r);
            }
            if cap[i] - self.lam[i] > eps_supp {
                big_l = big_l.min(r);
            }
        }
        if ell == f64::NEG_INFINITY || big_l == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            ell - big_l
        }
    }

    /// Convex combination `λ ← λ + h (s − λ)`, kept inside the box.
    fn move_towards(&mut self, s: &[f64], h: f64) {
        let ms = self.p.matrix().sparse_matvec(s);
        self.combine(s, &ms, h);
    }

    fn combine(&mut self, s: &[f64], ms: &[f64], h: f64) {
        let cap = self.p.cap();
        if h >= 1.0 {
            self.lam.copy_from_slice(s);
            self.mlam.copy_from_slice(ms);
            return;
        }
        for i in 0..self.lam.len() {
            self.lam[i] = ((1.0 - h) * self.lam[i] + h * s[i]).clamp(0.0, cap[i]);
            self.mlam[i] = (1.0 - h) * self.mlam[i] + h * ms[i];
        }
    }

    /// Best pair `(i, j, t, decrease)`: move `t` units of g-mass from `j` to `i`.
    fn pairwise_candidate(&self, w: &[f64]) -> Option<(usize, usize, f64, f64)> {
        let g = self.p.g();
        let cap = self.p.cap();
        let m = self.p.matrix();
        let n = w.len();
        let mut i_best = None;
        let mut r_min = f64::INFINITY;
        for k in 0..n {
            if cap[k] - self.lam[k] > ROOM_TOL * cap[k] {
                let r = w[k] / g[k];
                if r < r_min {
                    r_min = r;
                    i_best = Some(k);
                }
            }
        }
        let i = i_best?;
        let row_i = m.row(i);
        let (mii, gi) = (row_i[i], g[i]);
        let mut choice: Option<(usize, f64, f64, f64)> = None;
        for j in 0..n {
            if self.lam[j] <= ROOM_TOL * cap[j] || j == i {
                continue;
            }
            let b = w[j] / g[j] - r_min;
            if !(b > 0.0) {
                continue;
            }
            let a = (mii / (gi * gi) + m.diag(j) / (g[j] * g[j]) - 2.0 * row_i[j] / (gi * g[j]))
                .max(f64::MIN_POSITIVE);
            let score = b * b / a;
            if choice.is_none_or(|(_, _, _, s)| score > s) {
                choice = Some((j, a, b, score));
            }
        }
        let (j, a, b, _) = choice?;
        let t_max = ((cap[i] - self.lam[i]) * gi).min(self.lam[j] * g[j]);
        let t = (b / a).min(t_max);
        if !(t > 0.0) {
            return None;
        }
        Some((i, j, t, 2.0 * b * t - a * t * t))
    }

    fn apply_pair(&mut self, i: usize, j: usize, t: f64) {
        let g = self.p.g();
        let cap = self.p.cap();
        let di = t / g[i];
        let dj = t / g[j];
        let t_cap_i = (cap[i] - self.lam[i]) * g[i];
        let t_cap_j = self.lam[j] * g[j];
        // land exactly on whichever bound limited the step
        let new_i = if t >= t_cap_i { cap[i] } else { (self.lam[i] + di).min(cap[i]) };
        let new_j = if t >= t_cap_j { 0.0 } else { (self.lam[j] - dj).max(0.0) };
        let (di, dj) = (new_i - self.lam[i], self.lam[j] - new_j);
        self.lam[i] = new_i;
        self.lam[j] = new_j;
        let m = self.p.matrix();
        let (ri, rj) = (m.row(i), m.row(j));
        for k in 0..self.mlam.len() {
            self.mlam[k] += di * ri[k] - dj * rj[k];
        }
    }

    fn conditional_gradient_step(&mut self, w: &[f64], s: &[f64], gap: f64, iteration: usize) -> bool {
        let pair = self.pairwise_candidate(w);
        let nnz = s.iter().filter(|&&x| x != 0.0).count();
        let try_fw = nnz <= FW_DENSE_SUPPORT || iteration.is_multiple_of(FW_STRIDE) || pair.is_none();
        let fw = if try_fw && gap > 0.0 {
            let ms = self.p.matrix().sparse_matvec(s);
            let curvature: f64 = (0..s.len())
                .filter(|&k| s[k] != self.lam[k])
                .map(|k| (s[k] - self.lam[k]) * (ms[k] - self.mlam[k]))
                .sum();
            if curvature > 0.0 {
                let h = (gap / curvature).min(1.0);
                Some((h, 2.0 * h * gap - h * h * curvature, ms))
            } else {
                None
            }
        } else {
            None
        };
        match (pair, fw) {
            (Some((i, j, t, dp)), Some((h, df, ms))) => {
                if df > dp {
                    self.combine(s, &ms, h);
                } else {
                    self.apply_pair(i, j, t);
                }
                true
            }
            (Some((i, j, t, _)), None) => {
                self.apply_pair(i, j, t);
                true
            }
            (None, Some((h, _, ms))) => {
                self.combine(s, &ms, h);
                true
            }
            (None, None) => false,
        }
    }

    fn projected_step(&mut self, w: &[f64], rule: StepRule) -> Result<bool> {
        let cap = self.p.cap();
        let eta = *self
            .step_size
            .get_or_insert_with(|| 1.0 / self.p.matrix().gershgorin_bound());
        let v: Vec<f64> = (0..w.len())
            .map(|i| if cap[i] > 0.0 { self.lam[i] - eta * w[i] } else { 0.0 })
            .collect();
        let q = project_box_hyperplane(&v, self.p)?;
        let q = q.weights();
        if q == self.lam.as_slice() {
            return Ok(false);
        }
        let mq = self.p.matrix().matvec(q);
        let h = match rule {
            StepRule::FixedDecay => 1.0,
            StepRule::ExactLineSearch => {
                let d: Vec<f64> = q.iter().zip(&self.lam).map(|(a, b)| a - b).collect();
                // ⟨g, d⟩ = 0, so shifting W by a multiple of g leaves the slope
                // unchanged while removing cancellation near the optimum
                let g = self.p.g();
                let (num, den) = d
                    .iter()
                    .enumerate()
                    .filter(|(_, di)| **di != 0.0)
                    .fold((0.0, 0.0), |(a, b), (i, di)| (a + di.abs() * w[i], b + di.abs() * g[i]));
                let shift = if den > 0.0 { num / den } else { 0.0 };
                let slope: f64 = d
                    .iter()
                    .enumerate()
                    .filter(|(_, di)| **di != 0.0)
                    .map(|(i, di)| (w[i] - shift * g[i]) * di)
                    .sum();
                let curvature = dot(&d, &mq) - dot(&d, &self.mlam);
                if curvature > 0.0 {
                    (-slope / curvature).clamp(0.0, 1.0)
                } else {
                    1.0
                }
            }
        };
        if h == 0.0 {
            return Ok(false);
        }
        self.combine(q, &mq, h);
        Ok(true)
    }
}
