use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use equilib::energy::weighted_potential;
use equilib::{DiscreteMeasure, PointCloud, Problem, Result};
use serde::Serialize;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut out = create(dir, name)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| equilib::Error::Parse(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn write_measure(dir: &Path, name: &str, nu: &DiscreteMeasure) -> Result<()> {
    let mut out = create(dir, name)?;
    nu.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// One row per point: coordinates (when known), λ, σ, W and W/g.
pub fn write_profile(dir: &Path, cloud: Option<&PointCloud>, p: &Problem, lambda: &DiscreteMeasure) -> Result<()> {
    let w = weighted_potential(p, lambda)?;
    let mut out = create(dir, "profile.csv")?;
    let mut header = vec!["index".to_string()];
    if let Some(c) = cloud {
        header.extend((0..c.dim()).map(|k| format!("x{k}")));
        header.push("region".into());
    }
    header.extend(["lambda", "sigma", "W", "W_over_g"].map(String::from));
    writeln!(out, "{}", header.join(","))?;
    for i in 0..p.n() {
        let mut row = vec![i.to_string()];
        if let Some(c) = cloud {
            row.extend(c.point(i).iter().map(|&x| num(x)));
            row.push(c.region(i).to_string());
        }
        row.push(num(lambda.weights()[i]));
        row.push(num(p.sigma().weights()[i]));
        row.push(num(w[i]));
        row.push(num(w[i] / p.g()[i]));
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}
