//! Perfect kernels in ℝⁿ and their assembled kernel matrices.
//!
//! Three kernels are offered: Riesz `|x−y|^{α−n}` with `0 < α < n`, the
//! logarithmic kernel restricted to the open unit disk, and the Green kernel
//! of a ball (disk in the plane, Newtonian Green function for `n ≥ 3`).

use std::io::Write;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, norm, PointCloud};

/// Row count above which dense products are split across threads.
const PAR_THRESHOLD: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    Riesz { alpha: f64 },
    LogDisk,
    GreenBall { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub dim: usize,
    #[serde(flatten)]
    pub kind: KernelKind,
}

impl KernelSpec {
    pub fn riesz(dim: usize, alpha: f64) -> Result<Self> {
        Self::new(dim, KernelKind::Riesz { alpha })
    }

    /// Riesz kernel with `α = 2`, i.e. `|x−y|^{2−n}`.
    pub fn newtonian(dim: usize) -> Result<Self> {
        if dim < 3 {
            return Err(Error::UnsupportedDimension(dim));
        }
        Self::riesz(dim, 2.0)
    }

    pub fn log_disk() -> Self {
        KernelSpec {
            dim: 2,
            kind: KernelKind::LogDisk,
        }
    }

    pub fn green_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::new(dim, KernelKind::GreenBall { radius })
    }

    pub fn new(dim: usize, kind: KernelKind) -> Result<Self> {
        let spec = KernelSpec { dim, kind };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            KernelKind::Riesz { alpha } => {
                if self.dim == 0 {
                    return Err(Error::UnsupportedDimension(0));
                }
                if !(alpha > 0.0 && alpha < self.dim as f64) {
                    return Err(Error::InvalidParameter(format!(
                        "Riesz kernel needs 0 < alpha < {}, got {alpha}",
                        self.dim
                    )));
                }
            }
            KernelKind::LogDisk => {
                if self.dim != 2 {
                    return Err(Error::UnsupportedDimension(self.dim));
                }
            }
            KernelKind::GreenBall { radius } => {
                if self.dim < 2 {
                    return Err(Error::UnsupportedDimension(self.dim));
                }
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "Green ball radius must be positive, got {radius}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks that a point lies in the region where the kernel is defined.
    pub fn admissible(&self, x: &[f64]) -> std::result::Result<(), String> {
        if x.len() != self.dim {
            return Err(format!("point has dimension {}, kernel {}", x.len(), self.dim));
        }
        match self.kind {
            KernelKind::Riesz { .. } => Ok(()),
            KernelKind::LogDisk => {
                if norm(x) < 1.0 {
                    Ok(())
                } else {
                    Err("logarithmic kernel requires |x| < 1".into())
                }
            }
            KernelKind::GreenBall { radius } => {
                if norm(x) < radius {
                    Ok(())
                } else {
                    Err(format!("Green kernel requires |x| < {radius}"))
                }
            }
        }
    }

    /// Kernel as a function of distance alone, for translation-invariant kernels.
    fn radial(&self, r: f64) -> f64 {
        match self.kind {
            KernelKind::Riesz { alpha } => r.powf(alpha - self.dim as f64),
            KernelKind::LogDisk => -r.ln(),
            KernelKind::GreenBall { .. } => newtonian_like(self.dim, r),
        }
    }

    /// Value at an effective self-distance `h` next to the point `x`.
    ///
    /// For the Green kernel this is the free-space singular part at `h`
    /// minus the regular (reflected) part evaluated on the diagonal.
    pub fn self_value(&self, x: &[f64], h: f64) -> f64 {
        match self.kind {
            KernelKind::GreenBall { radius } => {
                let r2 = radius * radius;
                let x2: f64 = x.iter().map(|c| c * c).sum();
                if self.dim == 2 {
                    -h.ln() + ((r2 - x2) / radius).ln()
                } else {
                    let p = self.dim as f64 - 2.0;
                    h.powf(-p) - radius.powf(p) * (r2 - x2).powf(-p)
                }
            }
            _ => self.radial(h),
        }
    }
}

/// `−log r` in the plane, `r^{2−n}` otherwise.
fn newtonian_like(dim: usize, r: f64) -> f64 {
    if dim == 2 {
        -r.ln()
    } else {
        r.powf(2.0 - dim as f64)
    }
}

/// Kernel value between two admissible points; `+∞` on the diagonal.
pub fn kernel_value(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.validate()?;
    for p in [x, y] {
        spec.admissible(p).map_err(|reason| Error::NotAdmissible { index: 0, reason })?;
    }
    Ok(kernel_value_unchecked(spec, x, y))
}

fn kernel_value_unchecked(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    let r = distance(x, y);
    if r == 0.0 {
        return f64::INFINITY;
    }
    match spec.kind {
        KernelKind::GreenBall { radius } => green_ball(spec.dim, radius, x, y, r),
        _ => spec.radial(r),
    }
}

/// Green function of the ball `|x| < radius` via Kelvin reflection `y* = R²y/|y|²`.
fn green_ball(dim: usize, radius: f64, x: &[f64], y: &[f64], r: f64) -> f64 {
    // reflect whichever point is farther from the centre; the formula is symmetric
    let (x, y) = if norm(y) >= norm(x) { (x, y) } else { (y, x) };
    let ny = norm(y);
    if ny == 0.0 {
        // both at the centre is excluded by r > 0
        let nx = norm(x);
        return if dim == 2 {
            (radius / nx).ln()
        } else {
            let p = dim as f64 - 2.0;
            nx.powf(-p) - radius.powf(-p)
        };
    }
    let scale = radius * radius / (ny * ny);
    let reflected: Vec<f64> = y.iter().map(|c| c * scale).collect();
    let r_star = distance(x, &reflected);
    if dim == 2 {
        (r_star * ny / (radius * r)).ln()
    } else {
        let p = dim as f64 - 2.0;
        r.powf(-p) - (radius / ny).powf(p) * r_star.powf(-p)
    }
}

/// Outcome of a Cholesky-type positive-definiteness check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdCheck {
    pub positive_definite: bool,
    /// Smallest pivot seen before the factorization finished or broke down.
    pub min_pivot: f64,
    /// Row holding the smallest (or first non-positive) pivot.
    pub row: usize,
}

/// How the matrix entries were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DiagPolicy {
    /// Diagonal evaluated at half the nearest-neighbour distance.
    HalfNearestNeighbor { self_distance: Vec<f64> },
    /// Entries supplied directly.
    Explicit,
}

/// Dense symmetric kernel matrix, stored row-major.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    spec: Option<KernelSpec>,
    n: usize,
    entries: Vec<f64>,
    diag_policy: DiagPolicy,
    pd: OnceLock<PdCheck>,
}

impl KernelMatrix {
    /// Wraps an explicit symmetric matrix. Positive definiteness is checked
    /// lazily through [`KernelMatrix::pd_check`].
    pub fn from_dense(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::SizeMismatch {
                expected: n * n,
                found: entries.len(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if entries[i * n + j] != entries[j * n + i] {
                    return Err(Error::InvalidParameter(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(KernelMatrix {
            spec: None,
            n,
            entries,
            diag_policy: DiagPolicy::Explicit,
            pd: OnceLock::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    found: r.len(),
                });
            }
            entries.extend_from_slice(r);
        }
        Self::from_dense(n, entries)
    }

    pub fn spec(&self) -> Option<&KernelSpec> {
        self.spec.as_ref()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn diag_policy(&self) -> &DiagPolicy {
        &self.diag_policy
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.get(i, i)
    }

    /// `M v` for an arbitrary (possibly signed) vector.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "matvec size mismatch");
        let row_dot = |i: usize| dot(self.row(i), v);
        if self.n >= PAR_THRESHOLD {
            (0..self.n).into_par_iter().map(row_dot).collect()
        } else {
            (0..self.n).map(row_dot).collect()
        }
    }

    /// `uᵀ M v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        assert_eq!(u.len(), self.n, "bilinear size mismatch");
        dot(u, &self.matvec(v))
    }

    /// `M s` for a vector with few nonzeros, using symmetry (columns = rows).
    pub fn sparse_matvec(&self, s: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (j, &w) in s.iter().enumerate() {
            if w != 0.0 {
                for (o, m) in out.iter_mut().zip(self.row(j)) {
                    *o += w * m;
                }
            }
        }
        out
    }

    /// Result of the positive-definiteness check, computed once.
    pub fn pd_check(&self) -> PdCheck {
        *self.pd.get_or_init(|| cholesky_check(self.n, &self.entries))
    }

    /// Largest absolute row sum, an upper bound on the spectral radius.
    pub fn gershgorin_bound(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Debug dump of all entries as CSV, one matrix row per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for i in 0..self.n {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Assembles the kernel matrix on a cloud and rejects it if it is not
/// positive definite.
pub fn assemble(spec: &KernelSpec, cloud: &PointCloud) -> Result<KernelMatrix> {
    spec.validate()?;
    if cloud.dim() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            found: cloud.dim(),
        });
    }
    let n = cloud.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "kernel assembly needs at least two points".into(),
        ));
    }
    for (index, p) in cloud.points().enumerate() {
        spec.admissible(p)
            .map_err(|reason| Error::NotAdmissible { index, reason })?;
    }
    let self_distance: Vec<f64> = cloud
        .nearest_neighbor_distances()
        .into_iter()
        .map(|d| 0.5 * d)
        .collect();

    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| kernel_value_unchecked(spec, cloud.point(i), cloud.point(j)))
                .collect()
        })
        .collect();

    let mut entries = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let j = i + 1 + k;
            if !v.is_finite() {
                return Err(Error::CoincidentPoints(i, j));
            }
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
        let d = spec.self_value(cloud.point(i), self_distance[i]);
        if !d.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite self-energy at point {i}")));
        }
        entries[i * n + i] = d;
    }

    let m = KernelMatrix {
        spec: Some(*spec),
        n,
        entries,
        diag_policy: DiagPolicy::HalfNearestNeighbor { self_distance },
        pd: OnceLock::new(),
    };
    let check = m.pd_check();
    if !check.positive_definite {
        return Err(Error::NotPositiveDefinite {
            min_pivot: check.min_pivot,
            row: check.row,
        });
    }
    Ok(m)
}

/// Positive-definiteness check of a kernel matrix.
pub fn check_pd(m: &KernelMatrix) -> PdCheck {
    m.pd_check()
}

/// Lower-triangular Cholesky factorization in a scratch buffer; reports the
/// smallest pivot `a_ii − Σ_k l_ik²` and stops at the first non-positive one.
pub fn cholesky_check(n: usize, a: &[f64]) -> PdCheck {
    let mut l = vec![0.0; n * n];
    let mut min_pivot = f64::INFINITY;
    let mut min_row = 0;
    for i in 0..n {
        for j in 0..i {
            let s = a[i * n + j] - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            l[i * n + j] = s / l[j * n + j];
        }
        let pivot = a[i * n + i] - dot(&l[i * n..i * n + i], &l[i * n..i * n + i]);
        if pivot < min_pivot || pivot.is_nan() {
            min_pivot = pivot;
            min_row = i;
        }
        if !(pivot > 0.0) {
            return PdCheck {
                positive_definite: false,
                min_pivot: pivot,
                row: i,
            };
        }
        l[i * n + i] = pivot.sqrt();
    }
    PdCheck {
        positive_definite: true,
        min_pivot,
        row: min_row,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_sphere, union};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng, dim: usize, max_norm: f64) -> Vec<f64> {
        loop {
            let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-max_norm..max_norm)).collect();
            if norm(&p) < max_norm {
                return p;
            }
        }
    }

    #[test]
    fn riesz_value() {
        let k = KernelSpec::riesz(3, 2.0).unwrap();
        let v = kernel_value(&k, &[0.0, 0.0, 0.0], &[2.0, 0.0, 0.0]).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(kernel_value(&k, &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn log_value() {
        let k = KernelSpec::log_disk();
        let v = kernel_value(&k, &[0.5, 0.0], &[-0.5, 0.0]).unwrap();
        assert_eq!(v, 0.0);
        assert!(kernel_value(&k, &[1.5, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn green_disk_at_centre() {
        let k = KernelSpec::green_ball(2, 1.0).unwrap();
        let v = kernel_value(&k, &[0.5, 0.0], &[0.0, 0.0]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        let v = kernel_value(&k, &[0.0, 0.0], &[0.0, 0.5]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn green_ball_3d_at_centre() {
        let k = KernelSpec::green_ball(3, 2.0).unwrap();
        let v = kernel_value(&k, &[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]).unwrap();
        assert!((v - (1.0 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn invalid_specs() {
        assert!(KernelSpec::riesz(3, 3.0).is_err());
        assert!(KernelSpec::riesz(3, 0.0).is_err());
        assert!(KernelSpec::new(3, KernelKind::LogDisk).is_err());
        assert!(KernelSpec::green_ball(3, 0.0).is_err());
        assert!(KernelSpec::newtonian(2).is_err());
    }

    #[test]
    fn riesz_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(dim, alpha) in &[(3usize, 2.5f64), (3, 1.0), (2, 0.7)] {
            let k = KernelSpec::riesz(dim, alpha).unwrap();
            for _ in 0..50 {
                let x = random_point(&mut rng, dim, 2.0);
                let y = random_point(&mut rng, dim, 2.0);
                let base = kernel_value(&k, &x, &y).unwrap();
                for s in [0.5, 2.0] {
                    let xs: Vec<f64> = x.iter().map(|c| c * s).collect();
                    let ys: Vec<f64> = y.iter().map(|c| c * s).collect();
                    let scaled = kernel_value(&k, &xs, &ys).unwrap();
                    let expect = base * s.powf(alpha - dim as f64);
                    assert!((scaled - expect).abs() <= 1e-12 * expect.abs());
                }
            }
        }
    }

    #[test]
    fn green_symmetry_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(dim, radius) in &[(2usize, 1.0f64), (2, 3.0), (3, 1.0), (4, 2.0)] {
            let k = KernelSpec::green_ball(dim, radius).unwrap();
            for _ in 0..200 {
                let x = random_point(&mut rng, dim, radius);
                let y = random_point(&mut rng, dim, radius);
                let a = kernel_value(&k, &x, &y).unwrap();
                let b = kernel_value(&k, &y, &x).unwrap();
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
                assert!(a > 0.0);
            }
        }
    }

    #[test]
    fn assemble_two_points() {
        let cloud = PointCloud::from_points(
            3,
            &[vec![0.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]],
            vec!["a".into(), "a".into()],
        )
        .unwrap();
        let m = assemble(&KernelSpec::riesz(3, 2.0).unwrap(), &cloud).unwrap();
        assert_eq!(m.get(0, 1), 0.5);
        assert_eq!(m.get(1, 0), 0.5);
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(1, 1), 1.0);
        match m.diag_policy() {
            DiagPolicy::HalfNearestNeighbor { self_distance } => assert_eq!(self_distance, &vec![1.0, 1.0]),
            _ => panic!("wrong policy"),
        }
    }

    #[test]
    fn assembled_matrix_is_symmetric() {
        let cloud = make_sphere(3, 1.0, 100).unwrap();
        let m = assemble(&KernelSpec::riesz(3, 2.5).unwrap(), &cloud).unwrap();
        for i in 0..100 {
            for j in 0..100 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
    }

    #[test]
    fn log_kernel_on_scaled_circle_is_pd() {
        let cloud = make_sphere(2, 0.5, 200).unwrap();
        let m = assemble(&KernelSpec::log_disk(), &cloud).unwrap();
        assert!(check_pd(&m).positive_definite);
    }

    #[test]
    fn riesz_on_500_point_sphere_is_pd() {
        let cloud = make_sphere(3, 1.0, 500).unwrap();
        let m = assemble(&KernelSpec::riesz(3, 2.5).unwrap(), &cloud).unwrap();
        let c = check_pd(&m);
        assert!(c.positive_definite);
        assert!(c.min_pivot > 0.0);
    }

    #[test]
    fn green_kernels_on_interior_clouds_are_pd() {
        let a = make_sphere(2, 0.6, 60).unwrap();
        let b = make_sphere(2, 0.3, 30).unwrap();
        let cloud = union(&a, &b).unwrap();
        assemble(&KernelSpec::green_ball(2, 1.0).unwrap(), &cloud).unwrap();
        let cloud = make_sphere(3, 0.7, 150).unwrap();
        assemble(&KernelSpec::green_ball(3, 1.0).unwrap(), &cloud).unwrap();
    }

    #[test]
    fn assemble_rejects_outside_points() {
        let cloud = make_sphere(2, 1.0, 10).unwrap();
        let err = assemble(&KernelSpec::log_disk(), &cloud).unwrap_err();
        assert!(matches!(err, Error::NotAdmissible { .. }));
    }

    #[test]
    fn pd_check_small_cases() {
        let m = KernelMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(check_pd(&m).positive_definite);
        let m = KernelMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let c = check_pd(&m);
        assert!(!c.positive_definite);
        assert_eq!(c.row, 1);
        assert!((c.min_pivot + 3.0).abs() < 1e-15);
    }

    #[test]
    fn from_dense_rejects_asymmetry() {
        assert!(KernelMatrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
    }

    #[test]
    fn quadratic_form_positive_on_random_vectors() {
        let cloud = make_sphere(3, 1.0, 120).unwrap();
        let m = assemble(&KernelSpec::riesz(3, 1.5).unwrap(), &cloud).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let v: Vec<f64> = (0..120).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!(m.bilinear(&v, &v) > 0.0);
        }
    }
}
