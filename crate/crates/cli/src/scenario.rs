//! Scenario files: one JSON document describing the point set, kernel,
//! weight, field, constraint and command-specific settings.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use equilib::energy::radial_field;
use equilib::geometry::{make_interval, make_sphere, nested_exhaustion, union, Monotonicity};
use equilib::kernels::assemble;
use equilib::{
    DiscreteMeasure, Error, FieldSpec, KernelMatrix, KernelSpec, PointCloud, Problem, Result, SolverOptions,
    SubsetFamily,
};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub geometry: Option<GeometrySpec>,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    /// Explicit symmetric matrix, used instead of geometry + kernel.
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub g: GSpec,
    #[serde(default)]
    pub field: FieldSource,
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub w: Option<f64>,
    #[serde(default)]
    pub converge: Option<ConvergeSpec>,
    #[serde(default)]
    pub capacity: Option<CapacitySpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    Sphere {
        dim: usize,
        #[serde(default = "one")]
        radius: f64,
        count: usize,
        #[serde(default)]
        region: Option<String>,
    },
    Interval {
        a: f64,
        b: f64,
        count: usize,
        #[serde(default = "one_usize")]
        dim: usize,
        #[serde(default)]
        region: Option<String>,
    },
    Points {
        points: Vec<Vec<f64>>,
        #[serde(default)]
        regions: Option<Vec<String>>,
    },
    Csv {
        path: PathBuf,
    },
    Union {
        parts: Vec<GeometrySpec>,
    },
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GSpec {
    Constant(f64),
    Values(Vec<f64>),
    Csv { csv: PathBuf },
}

impl Default for GSpec {
    fn default() -> Self {
        GSpec::Constant(1.0)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MeasureSource {
    Values(Vec<f64>),
    Csv { csv: PathBuf },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    #[default]
    Zero,
    Values {
        #[serde(with = "equilib::ext_real::vec")]
        values: Vec<f64>,
    },
    Csv {
        path: PathBuf,
    },
    /// `|x − a|^{α − n}`, the potential of a unit charge at `a`.
    Radial {
        pole: Vec<f64>,
        alpha: f64,
    },
    Charge {
        zeta_plus: MeasureSource,
        zeta_minus: MeasureSource,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSpec {
    /// Total mass per region, spread uniformly over the region's points.
    RegionMass { masses: BTreeMap<String, f64> },
    Values { values: Vec<f64> },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum IndexSet {
    Regions { regions: Vec<String> },
    Indices { indices: Vec<usize> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvergeSpec {
    /// Stage `k` uses `sigma_factors[k] · σ` on `stages[k]`; the last stage is the limit.
    Decreasing {
        stages: Vec<IndexSet>,
        sigma_factors: Vec<f64>,
    },
    /// Nested prefixes of the cloud with constraints `β_K σ`.
    Exhaustion {
        fractions: Vec<f64>,
        #[serde(default)]
        betas: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySpec {
    #[serde(default)]
    pub subset: Option<IndexSet>,
}

pub struct Built {
    pub cloud: Option<PointCloud>,
    pub problem: Problem,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<(Scenario, PathBuf)> {
        let text = std::fs::read_to_string(path)?;
        let scenario: Scenario =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((scenario, base))
    }

    pub fn build(&self, base: &Path) -> Result<Built> {
        let (cloud, matrix) = match (&self.geometry, &self.kernel, &self.matrix) {
            (Some(geo), Some(kernel), None) => {
                let cloud = build_geometry(geo, base)?;
                let m = assemble(kernel, &cloud)?;
                (Some(cloud), m)
            }
            (None, None, Some(rows)) => (None, KernelMatrix::from_rows(rows)?),
            _ => {
                return Err(Error::InvalidParameter(
                    "scenario needs either geometry + kernel or an explicit matrix".into(),
                ))
            }
        };
        let n = matrix.n();
        let g = match &self.g {
            GSpec::Constant(c) => vec![*c; n],
            GSpec::Values(v) => v.clone(),
            GSpec::Csv { csv } => read_values(&base.join(csv))?,
        };
        let field = match &self.field {
            FieldSource::Zero => FieldSpec::zero(n),
            FieldSource::Values { values } => FieldSpec::CaseI { values: values.clone() },
            FieldSource::Csv { path } => FieldSpec::CaseI {
                values: read_values(&base.join(path))?,
            },
            FieldSource::Radial { pole, alpha } => {
                let cloud = cloud
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParameter("radial field needs geometry".into()))?;
                FieldSpec::CaseI {
                    values: radial_field(cloud, pole, alpha - cloud.dim() as f64)?,
                }
            }
            FieldSource::Charge { zeta_plus, zeta_minus } => FieldSpec::CaseII {
                zeta_plus: read_measure(zeta_plus, base)?,
                zeta_minus: read_measure(zeta_minus, base)?,
            },
        };
        let sigma = match &self.sigma {
            SigmaSpec::RegionMass { masses } => {
                let cloud = cloud
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParameter("region masses need geometry".into()))?;
                let mut sigma = vec![0.0; n];
                for (region, mass) in masses {
                    let idx = cloud.region_indices(region);
                    if idx.is_empty() {
                        return Err(Error::InvalidParameter(format!("unknown region {region}")));
                    }
                    for &i in &idx {
                        sigma[i] = mass / idx.len() as f64;
                    }
                }
                DiscreteMeasure::new(sigma)?
            }
            SigmaSpec::Values { values } => DiscreteMeasure::new(values.clone())?,
            SigmaSpec::Csv { path } => DiscreteMeasure::read_csv(open(&base.join(path))?)?,
        };
        let problem = Problem::new(Arc::new(matrix), g, field, sigma)?;
        Ok(Built { cloud, problem })
    }
}

impl Built {
    pub fn indices(&self, set: &IndexSet) -> Result<Vec<usize>> {
        let n = self.problem.n();
        match set {
            IndexSet::Indices { indices } => {
                if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
                    return Err(Error::InvalidParameter(format!("index {bad} out of range")));
                }
                Ok(indices.clone())
            }
            IndexSet::Regions { regions } => {
                let cloud = self
                    .cloud
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParameter("region selection needs geometry".into()))?;
                let mut out = Vec::new();
                for r in regions {
                    let idx = cloud.region_indices(r);
                    if idx.is_empty() {
                        return Err(Error::InvalidParameter(format!("unknown region {r}")));
                    }
                    out.extend(idx);
                }
                out.sort_unstable();
                out.dedup();
                Ok(out)
            }
        }
    }

    pub fn decreasing_family(&self, stages: &[IndexSet]) -> Result<SubsetFamily> {
        let sets = stages.iter().map(|s| self.indices(s)).collect::<Result<Vec<_>>>()?;
        SubsetFamily::new(self.problem.n(), Monotonicity::Decreasing, sets)
    }

    /// Nested prefixes by fraction; region order when a cloud is present, index order otherwise.
    pub fn exhaustion_family(&self, fractions: &[f64]) -> Result<SubsetFamily> {
        match &self.cloud {
            Some(cloud) => nested_exhaustion(cloud, fractions),
            None => {
                let n = self.problem.n();
                let sets = fractions
                    .iter()
                    .map(|f| (0..((f * n as f64).ceil() as usize).min(n)).collect())
                    .collect();
                SubsetFamily::new(n, Monotonicity::Increasing, sets)
            }
        }
    }
}

fn build_geometry(spec: &GeometrySpec, base: &Path) -> Result<PointCloud> {
    let labelled = |cloud: PointCloud, region: &Option<String>| match region {
        Some(r) => cloud.with_region(r),
        None => cloud,
    };
    match spec {
        GeometrySpec::Sphere {
            dim,
            radius,
            count,
            region,
        } => Ok(labelled(make_sphere(*dim, *radius, *count)?, region)),
        GeometrySpec::Interval {
            a,
            b,
            count,
            dim,
            region,
        } => Ok(labelled(make_interval(*a, *b, *count, *dim)?, region)),
        GeometrySpec::Points { points, regions } => {
            let dim = points.first().map(Vec::len).unwrap_or(0);
            let regions = regions.clone().unwrap_or_else(|| vec!["points".into(); points.len()]);
            PointCloud::from_points(dim, points, regions)
        }
        GeometrySpec::Csv { path } => PointCloud::read_csv(open(&base.join(path))?),
        GeometrySpec::Union { parts } => {
            let mut iter = parts.iter();
            let first = iter
                .next()
                .ok_or_else(|| Error::InvalidParameter("empty union".into()))?;
            let mut cloud = build_geometry(first, base)?;
            for part in iter {
                cloud = union(&cloud, &build_geometry(part, base)?)?;
            }
            Ok(cloud)
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn read_measure(src: &MeasureSource, base: &Path) -> Result<DiscreteMeasure> {
    match src {
        MeasureSource::Values(v) => DiscreteMeasure::new(v.clone()),
        MeasureSource::Csv { csv } => DiscreteMeasure::read_csv(open(&base.join(csv))?),
    }
}

/// Reads the last column of a headed two-column `index,value` CSV.
/// `inf` is accepted for field values.
fn read_values(path: &Path) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (k, line) in open(path)?.lines().enumerate().skip(1) {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value = line.rsplit(',').next().unwrap_or(line).trim();
        out.push(
            value
                .parse()
                .map_err(|e| Error::Parse(format!("{}:{}: {value}: {e}", path.display(), k + 1)))?,
        );
    }
    Ok(out)
}
