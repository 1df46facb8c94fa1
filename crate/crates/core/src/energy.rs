//! Discrete measures, energies, potentials and external fields.
//!
//! A measure is a nonnegative weight vector aligned with the rows of a
//! [`KernelMatrix`]; pairings `⟨φ, ν⟩` are plain weighted sums. The external
//! field is either given pointwise (Case I, `+∞` allowed) or as the
//! potential of a signed charge `ζ = ζ⁺ − ζ⁻` (Case II).

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ext_real;
use crate::geometry::{distance, PointCloud};
use crate::kernels::{dot, KernelMatrix};

/// Slack allowed on the total g-mass when deciding feasibility.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
}

impl TryFrom<Vec<f64>> for DiscreteMeasure {
    type Error = Error;
    fn try_from(w: Vec<f64>) -> Result<Self> {
        DiscreteMeasure::new(w)
    }
}

impl From<DiscreteMeasure> for Vec<f64> {
    fn from(m: DiscreteMeasure) -> Vec<f64> {
        m.weights
    }
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "measure weight {i} is {} (must be finite and nonnegative)",
                weights[i]
            )));
        }
        Ok(DiscreteMeasure { weights })
    }

    pub fn zeros(n: usize) -> Self {
        DiscreteMeasure { weights: vec![0.0; n] }
    }

    /// Point mass of the given weight at one index.
    pub fn dirac(n: usize, index: usize, weight: f64) -> Result<Self> {
        let mut w = vec![0.0; n];
        w[index] = weight;
        Self::new(w)
    }

    /// Clamps tiny negative rounding residue to zero.
    pub(crate) fn from_clamped(mut weights: Vec<f64>) -> Self {
        for w in &mut weights {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        DiscreteMeasure { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// The trace of the measure on an index set, given as a mask.
    pub fn trace(&self, mask: &[bool]) -> Self {
        DiscreteMeasure {
            weights: self
                .weights
                .iter()
                .zip(mask)
                .map(|(&w, &keep)| if keep { w } else { 0.0 })
                .collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.weights.iter().map(|w| w * factor).collect())
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    /// Writes `index,weight` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,weight")?;
        for (i, w) in self.weights.iter().enumerate() {
            writeln!(out, "{i},{w:.16e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty measure CSV".into()))??;
        if header.trim() != "index,weight" {
            return Err(Error::Parse(format!("bad measure header: {header}")));
        }
        let mut weights = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (idx, w) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad measure row: {line}")))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("bad index {idx}: {e}")))?;
            if idx != weights.len() {
                return Err(Error::Parse(format!("measure rows out of order at index {idx}")));
            }
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("bad weight {w}: {e}")))?;
            weights.push(w);
        }
        Self::new(weights)
    }
}

/// External field: pointwise values (Case I) or the potential of a signed charge (Case II).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case")]
pub enum FieldSpec {
    #[serde(rename = "I")]
    CaseI {
        #[serde(with = "ext_real::vec")]
        values: Vec<f64>,
    },
    #[serde(rename = "II")]
    CaseII {
        zeta_plus: DiscreteMeasure,
        zeta_minus: DiscreteMeasure,
    },
}

impl FieldSpec {
    pub fn zero(n: usize) -> Self {
        FieldSpec::CaseI { values: vec![0.0; n] }
    }

    /// Signed charge `ζ⁺ − ζ⁻` for Case II, `None` for Case I.
    pub fn charge(&self) -> Option<Vec<f64>> {
        match self {
            FieldSpec::CaseI { .. } => None,
            FieldSpec::CaseII {
                zeta_plus,
                zeta_minus,
            } => Some(
                zeta_plus
                    .weights()
                    .iter()
                    .zip(zeta_minus.weights())
                    .map(|(p, m)| p - m)
                    .collect(),
            ),
        }
    }
}

/// `|x − a|^{exponent}` at every cloud point (`+∞` at the pole for negative exponents).
pub fn radial_field(cloud: &PointCloud, pole: &[f64], exponent: f64) -> Result<Vec<f64>> {
    if pole.len() != cloud.dim() {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim(),
            found: pole.len(),
        });
    }
    Ok(cloud
        .points()
        .map(|x| {
            let r = distance(x, pole);
            if r == 0.0 && exponent < 0.0 {
                f64::INFINITY
            } else {
                r.powf(exponent)
            }
        })
        .collect())
}

/// Pointwise field values on the matrix's points.
pub fn resolve_field(m: &KernelMatrix, field: &FieldSpec) -> Result<Vec<f64>> {
    match field {
        FieldSpec::CaseI { values } => {
            check_len(m.n(), values.len())?;
            if values.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
                return Err(Error::InvalidParameter(
                    "Case I field values must be > -inf".into(),
                ));
            }
            Ok(values.clone())
        }
        FieldSpec::CaseII {
            zeta_plus,
            zeta_minus,
        } => {
            check_len(m.n(), zeta_plus.len())?;
            check_len(m.n(), zeta_minus.len())?;
            for part in [zeta_plus, zeta_minus] {
                if !m.bilinear(part.weights(), part.weights()).is_finite() {
                    return Err(Error::InfiniteFieldEnergy);
                }
            }
            let charge = field.charge().expect("case II");
            Ok(m.matvec(&charge))
        }
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::SizeMismatch { expected, found });
    }
    Ok(())
}

/// `⟨φ, ν⟩`, skipping points where ν vanishes so that `φ = +∞` there is harmless.
pub fn pairing(phi: &[f64], nu: &[f64]) -> f64 {
    phi.iter()
        .zip(nu)
        .filter(|(_, &w)| w != 0.0)
        .map(|(p, w)| p * w)
        .sum()
}

/// `⟨φ, a − b⟩`, summed only where `a` and `b` differ.
pub fn pairing_diff(phi: &[f64], a: &[f64], b: &[f64]) -> f64 {
    phi.iter()
        .zip(a.iter().zip(b))
        .filter(|(_, (x, y))| x != y)
        .map(|(p, (x, y))| p * (x - y))
        .sum()
}

/// `ν^T M ν`.
pub fn energy(m: &KernelMatrix, nu: &DiscreteMeasure) -> Result<f64> {
    check_len(m.n(), nu.len())?;
    Ok(m.bilinear(nu.weights(), nu.weights()))
}

/// `ν^T M μ`.
pub fn mutual_energy(m: &KernelMatrix, nu: &DiscreteMeasure, mu: &DiscreteMeasure) -> Result<f64> {
    check_len(m.n(), nu.len())?;
    check_len(m.n(), mu.len())?;
    Ok(m.bilinear(nu.weights(), mu.weights()))
}

/// `M ν` at every point.
pub fn potential(m: &KernelMatrix, nu: &DiscreteMeasure) -> Result<Vec<f64>> {
    check_len(m.n(), nu.len())?;
    Ok(m.matvec(nu.weights()))
}

/// Energy-norm distance `‖ν − μ‖`.
pub fn strong_distance(m: &KernelMatrix, nu: &DiscreteMeasure, mu: &DiscreteMeasure) -> Result<f64> {
    check_len(m.n(), nu.len())?;
    check_len(m.n(), mu.len())?;
    let d: Vec<f64> = nu
        .weights()
        .iter()
        .zip(mu.weights())
        .map(|(a, b)| a - b)
        .collect();
    let sq = m.bilinear(&d, &d);
    if sq < -1e-12 {
        return Err(Error::NotPositiveDefinite {
            min_pivot: sq,
            row: 0,
        });
    }
    Ok(sq.max(0.0).sqrt())
}

/// One instance of the constrained weighted-energy problem:
/// minimize `‖ν‖² + 2⟨f,ν⟩` over `0 ≤ ν ≤ σ`, `⟨g,ν⟩ = 1`.
#[derive(Debug, Clone)]
pub struct Problem {
    matrix: Arc<KernelMatrix>,
    g: Vec<f64>,
    field: FieldSpec,
    f: Vec<f64>,
    sigma: DiscreteMeasure,
    cap: Vec<f64>,
}

impl Problem {
    pub fn new(
        matrix: Arc<KernelMatrix>,
        g: Vec<f64>,
        field: FieldSpec,
        sigma: DiscreteMeasure,
    ) -> Result<Self> {
        let f = resolve_field(&matrix, &field)?;
        Self::with_resolved(matrix, g, field, f, sigma)
    }

    fn with_resolved(
        matrix: Arc<KernelMatrix>,
        g: Vec<f64>,
        field: FieldSpec,
        f: Vec<f64>,
        sigma: DiscreteMeasure,
    ) -> Result<Self> {
        let n = matrix.n();
        check_len(n, g.len())?;
        check_len(n, sigma.len())?;
        if let Some(i) = g.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(format!("g[{i}] = {} is not positive", g[i])));
        }
        let cap: Vec<f64> = sigma
            .weights()
            .iter()
            .zip(&f)
            .map(|(&s, &fi)| if fi < f64::INFINITY { s } else { 0.0 })
            .collect();
        let p = Problem {
            matrix,
            g,
            field,
            f,
            sigma,
            cap,
        };
        let available = p.available_mass();
        if available < 1.0 - MASS_TOL {
            return Err(Error::Infeasible {
                available,
                required: 1.0,
            });
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn matrix(&self) -> &KernelMatrix {
        &self.matrix
    }

    pub fn matrix_arc(&self) -> &Arc<KernelMatrix> {
        &self.matrix
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn sigma(&self) -> &DiscreteMeasure {
        &self.sigma
    }

    /// Upper bounds actually usable by feasible measures: σ, zeroed where f = +∞.
    pub fn cap(&self) -> &[f64] {
        &self.cap
    }

    /// `Σ_{f<∞} g·σ`.
    pub fn available_mass(&self) -> f64 {
        dot(&self.g, &self.cap)
    }

    /// `⟨g, σ⟩ > 1` on the finite-field part of the set.
    pub fn is_strictly_feasible(&self) -> bool {
        self.available_mass() > 1.0 + MASS_TOL
    }

    /// Same kernel, g and field with a different constraint.
    pub fn with_sigma(&self, sigma: DiscreteMeasure) -> Result<Self> {
        Self::with_resolved(
            self.matrix.clone(),
            self.g.clone(),
            self.field.clone(),
            self.f.clone(),
            sigma,
        )
    }

    /// Restricts the problem to an index set by zeroing σ outside it.
    pub fn restricted(&self, mask: &[bool]) -> Result<Self> {
        check_len(self.n(), mask.len())?;
        self.with_sigma(self.sigma.trace(mask))
    }

    /// Lower bound on the attainable value of `G_f` over the feasible set.
    pub fn value_lower_bound(&self) -> f64 {
        if let Some(zeta) = self.field.charge() {
            return -self.matrix.bilinear(&zeta, &zeta);
        }
        let min_f = self
            .f
            .iter()
            .zip(&self.cap)
            .filter(|(_, &c)| c > 0.0)
            .map(|(&f, _)| f)
            .fold(f64::INFINITY, f64::min);
        let min_g = self.g.iter().copied().fold(f64::INFINITY, f64::min);
        2.0 * min_f.min(0.0) / min_g
    }

    /// Checks `0 ≤ ν ≤ σ`, no mass where f = +∞, and `|⟨g,ν⟩ − 1| ≤ mass_tol`.
    pub fn check_feasible(&self, nu: &DiscreteMeasure, mass_tol: f64) -> Result<()> {
        check_len(self.n(), nu.len())?;
        for (i, (&w, &c)) in nu.weights().iter().zip(&self.cap).enumerate() {
            if w > c * (1.0 + 1e-12) + f64::MIN_POSITIVE {
                return Err(Error::NotFeasible(format!(
                    "weight {w:e} exceeds bound {c:e} at index {i}"
                )));
            }
        }
        let mass = dot(&self.g, nu.weights());
        if (mass - 1.0).abs() > mass_tol {
            return Err(Error::NotFeasible(format!("g-mass is {mass}, expected 1")));
        }
        Ok(())
    }

    /// SHA-256 over the matrix, g, f and σ, as lowercase hex.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        for v in self
            .matrix
            .entries()
            .iter()
            .chain(&self.g)
            .chain(&self.f)
            .chain(self.sigma.weights())
        {
            h.update(v.to_le_bytes());
        }
        h.finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// `W^f_ν = M ν + f`, entrywise with `finite + ∞ = ∞`.
pub fn weighted_potential(p: &Problem, nu: &DiscreteMeasure) -> Result<Vec<f64>> {
    let mut w = potential(p.matrix(), nu)?;
    for (wi, fi) in w.iter_mut().zip(p.f()) {
        *wi += fi;
    }
    Ok(w)
}

/// `G_f(ν) = ‖ν‖² + 2⟨f,ν⟩`; `+∞` if ν charges a point where f = +∞.
pub fn weighted_energy(p: &Problem, nu: &DiscreteMeasure) -> Result<f64> {
    let e = energy(p.matrix(), nu)?;
    Ok(e + 2.0 * pairing(p.f(), nu.weights()))
}
