//! Finite point-cloud discretizations of closed sets in ℝⁿ.
//!
//! A [`PointCloud`] stores coordinates row-major together with a region
//! label per point. Constructors reject coincident points, since kernel
//! matrices on such clouds would carry infinite off-diagonal entries.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    regions: Vec<String>,
}

impl PointCloud {
    pub fn empty(dim: usize) -> Self {
        PointCloud {
            dim,
            coords: Vec::new(),
            regions: Vec::new(),
        }
    }

    /// Builds a cloud from explicit points, checking dimensions and distinctness.
    pub fn from_points(dim: usize, points: &[Vec<f64>], regions: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::UnsupportedDimension(0));
        }
        if regions.len() != points.len() {
            return Err(Error::SizeMismatch {
                expected: points.len(),
                found: regions.len(),
            });
        }
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter("non-finite coordinate".into()));
            }
            coords.extend_from_slice(p);
        }
        let cloud = PointCloud {
            dim,
            coords,
            regions,
        };
        cloud.check_distinct()?;
        Ok(cloud)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim.max(1))
    }

    pub fn region(&self, i: usize) -> &str {
        &self.regions[i]
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    /// Region names in order of first appearance.
    pub fn region_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.regions {
            if !names.contains(&r.as_str()) {
                names.push(r);
            }
        }
        names
    }

    /// Indices of all points carrying the given region label.
    pub fn region_indices(&self, name: &str) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.regions[i] == name).collect()
    }

    /// Replaces every region label with `name`.
    pub fn with_region(mut self, name: &str) -> Self {
        for r in &mut self.regions {
            *r = name.to_string();
        }
        self
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance(self.point(i), self.point(j))
    }

    /// Distance from each point to its nearest neighbour (`inf` for a single point).
    pub fn nearest_neighbor_distances(&self) -> Vec<f64> {
        let n = self.len();
        let mut nn = vec![f64::INFINITY; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = self.distance(i, j);
                if d < nn[i] {
                    nn[i] = d;
                }
                if d < nn[j] {
                    nn[j] = d;
                }
            }
        }
        nn
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        self.nearest_neighbor_distances()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    fn check_distinct(&self) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.distance(i, j) <= 0.0 {
                    return Err(Error::CoincidentPoints(i, j));
                }
            }
        }
        Ok(())
    }

    /// Writes the cloud as CSV with header `x0,...,x{dim-1},region`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = String::new();
        for k in 0..self.dim {
            let _ = write!(header, "x{k},");
        }
        header.push_str("region");
        writeln!(out, "{header}")?;
        for i in 0..self.len() {
            let mut line = String::new();
            for c in self.point(i) {
                let _ = write!(line, "{c:.16e},");
            }
            line.push_str(&self.regions[i]);
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty point cloud CSV".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 2 || cols.last() != Some(&"region") {
            return Err(Error::Parse(format!("bad point cloud header: {header}")));
        }
        let dim = cols.len() - 1;
        for (k, c) in cols[..dim].iter().enumerate() {
            if *c != format!("x{k}") {
                return Err(Error::Parse(format!("bad point cloud header: {header}")));
            }
        }
        let mut points = Vec::new();
        let mut regions = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.splitn(dim + 1, ',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::Parse(format!("line {}: expected {} fields", lineno + 2, dim + 1)));
            }
            let p = fields[..dim]
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))
                })
                .collect::<Result<Vec<f64>>>()?;
            points.push(p);
            regions.push(fields[dim].to_string());
        }
        PointCloud::from_points(dim, &points, regions)
    }
}

pub(crate) fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `count` points on the sphere of the given radius centred at the origin.
///
/// In the plane the points sit at equally spaced angles starting on the
/// positive first axis. In ℝ³ a Fibonacci spiral gives an equal-area layout:
/// heights are spaced uniformly in `z` and longitudes advance by the golden angle.
pub fn make_sphere(dim: usize, radius: f64, count: usize) -> Result<PointCloud> {
    if !(2..=3).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    if count < 4 {
        return Err(Error::InvalidParameter(format!(
            "sphere needs at least 4 points, got {count}"
        )));
    }
    let mut coords = Vec::with_capacity(dim * count);
    if dim == 2 {
        for k in 0..count {
            let t = 2.0 * PI * k as f64 / count as f64;
            coords.push(radius * t.cos());
            coords.push(radius * t.sin());
        }
    } else {
        let golden = PI * (3.0 - 5f64.sqrt());
        for k in 0..count {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * k as f64;
            coords.push(radius * rho * phi.cos());
            coords.push(radius * rho * phi.sin());
            coords.push(radius * z);
        }
    }
    let cloud = PointCloud {
        dim,
        coords,
        regions: vec![format!("sphere_r{radius}"); count],
    };
    cloud.check_distinct()?;
    Ok(cloud)
}

/// Uniformly spaced points on `[a, b]` along the first coordinate axis, endpoints included.
pub fn make_interval(a: f64, b: f64, count: usize, dim: usize) -> Result<PointCloud> {
    if dim == 0 {
        return Err(Error::UnsupportedDimension(dim));
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParameter(format!("interval needs a < b, got [{a}, {b}]")));
    }
    if count < 2 {
        return Err(Error::InvalidParameter(format!(
            "interval needs at least 2 points, got {count}"
        )));
    }
    let step = (b - a) / (count - 1) as f64;
    let mut coords = vec![0.0; dim * count];
    for k in 0..count {
        coords[k * dim] = if k + 1 == count { b } else { a + step * k as f64 };
    }
    let cloud = PointCloud {
        dim,
        coords,
        regions: vec![format!("interval_{a}_{b}"); count],
    };
    cloud.check_distinct()?;
    Ok(cloud)
}

/// Concatenation of two clouds: the points of `a` followed by those of `b`.
pub fn union(a: &PointCloud, b: &PointCloud) -> Result<PointCloud> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            found: b.dim,
        });
    }
    for i in 0..a.len() {
        for j in 0..b.len() {
            if distance(a.point(i), b.point(j)) <= 0.0 {
                return Err(Error::CoincidentPoints(i, a.len() + j));
            }
        }
    }
    let mut coords = a.coords.clone();
    coords.extend_from_slice(&b.coords);
    let mut regions = a.regions.clone();
    regions.extend(b.regions.iter().cloned());
    Ok(PointCloud {
        dim: a.dim,
        coords,
        regions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
}

/// An ordered chain of index sets over a base cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetFamily {
    base_len: usize,
    direction: Monotonicity,
    stages: Vec<Vec<usize>>,
}

impl SubsetFamily {
    /// Validates index ranges and nesting; indices within each stage are sorted.
    pub fn new(base_len: usize, direction: Monotonicity, stages: Vec<Vec<usize>>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidParameter("subset family has no stages".into()));
        }
        let mut sorted = Vec::with_capacity(stages.len());
        for stage in stages {
            let mut s = stage;
            s.sort_unstable();
            s.dedup();
            if let Some(&bad) = s.iter().find(|&&i| i >= base_len) {
                return Err(Error::InvalidParameter(format!(
                    "index {bad} out of range for cloud of {base_len} points"
                )));
            }
            sorted.push(s);
        }
        let family = SubsetFamily {
            base_len,
            direction,
            stages: sorted,
        };
        if !family.is_monotone() {
            return Err(Error::InvalidParameter(format!(
                "stages are not {:?}",
                family.direction
            )));
        }
        Ok(family)
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn direction(&self) -> Monotonicity {
        self.direction
    }

    pub fn stages(&self) -> &[Vec<usize>] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Membership mask of one stage.
    pub fn mask(&self, stage: usize) -> Vec<bool> {
        let mut m = vec![false; self.base_len];
        for &i in &self.stages[stage] {
            m[i] = true;
        }
        m
    }

    pub fn is_monotone(&self) -> bool {
        self.stages.windows(2).all(|w| match self.direction {
            Monotonicity::Increasing => is_subset(&w[0], &w[1]),
            Monotonicity::Decreasing => is_subset(&w[1], &w[0]),
        })
    }
}

/// Both slices sorted ascending.
fn is_subset(small: &[usize], big: &[usize]) -> bool {
    let mut it = big.iter();
    small.iter().all(|x| it.any(|y| y == x))
}

/// Increasing chain whose k-th stage holds the first `⌈fractions[k]·N⌉` indices,
/// ordered by region (first appearance) and then by construction order.
pub fn nested_exhaustion(cloud: &PointCloud, fractions: &[f64]) -> Result<SubsetFamily> {
    if fractions.is_empty() {
        return Err(Error::InvalidParameter("no exhaustion fractions".into()));
    }
    if fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::InvalidParameter("fractions must lie in (0, 1]".into()));
    }
    if fractions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("fractions must be strictly increasing".into()));
    }
    if *fractions.last().unwrap() != 1.0 {
        return Err(Error::InvalidParameter("last fraction must be 1".into()));
    }
    let n = cloud.len();
    let rank: HashMap<&str, usize> = cloud
        .region_names()
        .into_iter()
        .enumerate()
        .map(|(k, name)| (name, k))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (rank[cloud.region(i)], i));
    let stages = fractions
        .iter()
        .map(|&f| {
            let size = ((f * n as f64).ceil() as usize).min(n);
            order[..size].to_vec()
        })
        .collect();
    SubsetFamily::new(n, Monotonicity::Increasing, stages)
}
