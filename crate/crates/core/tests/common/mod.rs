#![allow(dead_code)]

use std::sync::Arc;

use equilib::solver::project_box_hyperplane;
use equilib::{DiscreteMeasure, FieldSpec, KernelMatrix, Problem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_pd_matrix(rng: &mut ChaCha8Rng, n: usize) -> KernelMatrix {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let m = a.transpose() * &a + DMatrix::identity(n, n);
    let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect();
    KernelMatrix::from_rows(&rows).unwrap()
}

/// Random strictly feasible Case I instance with `M = AᵀA + I`.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> Problem {
    let m = Arc::new(random_pd_matrix(rng, n));
    let g: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let mass: f64 = raw.iter().zip(&g).map(|(s, g)| s * g).sum();
    let target = rng.gen_range(1.3..3.0);
    let sigma: Vec<f64> = raw.iter().map(|s| s * target / mass).collect();
    let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Problem::new(m, g, FieldSpec::CaseI { values: f }, DiscreteMeasure::new(sigma).unwrap()).unwrap()
}

/// A random feasible measure: a random vector projected onto the feasible polytope.
pub fn random_feasible(rng: &mut ChaCha8Rng, p: &Problem) -> DiscreteMeasure {
    let v: Vec<f64> = (0..p.n()).map(|_| rng.gen_range(-1.0..2.0)).collect();
    let nu = project_box_hyperplane(&v, p).unwrap();
    p.check_feasible(&nu, 1e-10).unwrap();
    nu
}

fn objective(p: &Problem, nu: &[f64]) -> f64 {
    let m = p.matrix();
    let n = nu.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += nu[i] * m.get(i, j) * nu[j];
        }
    }
    let lin: f64 = nu.iter().zip(p.f()).filter(|(x, _)| **x != 0.0).map(|(x, f)| x * f).sum();
    quad + 2.0 * lin
}

/// Exact minimizer by enumerating every face of the box.
///
/// Each index is pinned at 0, pinned at its cap, or free; on the free set the
/// KKT system of the equality-constrained quadratic is solved directly and the
/// candidate is kept if it lies in the box.
pub fn brute_force(p: &Problem) -> (f64, Vec<f64>) {
    let n = p.n();
    let cap = p.cap();
    let g = p.g();
    let f = p.f();
    let m = p.matrix();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut state = vec![0u8; n];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        if (0..n).any(|i| cap[i] == 0.0 && state[i] != 0) {
            continue;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let upper: Vec<usize> = (0..n).filter(|&i| state[i] == 1).collect();
        let mut nu = vec![0.0; n];
        for &i in &upper {
            nu[i] = cap[i];
        }
        let fixed_mass: f64 = upper.iter().map(|&i| g[i] * cap[i]).sum();
        if free.is_empty() {
            if (fixed_mass - 1.0).abs() > 1e-12 {
                continue;
            }
        } else {
            let k = free.len();
            let mut a = DMatrix::zeros(k + 1, k + 1);
            let mut b = DVector::zeros(k + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[(r, s)] = m.get(i, j);
                }
                a[(r, k)] = -g[i];
                a[(k, r)] = g[i];
                b[r] = -f[i] - upper.iter().map(|&j| m.get(i, j) * cap[j]).sum::<f64>();
            }
            b[k] = 1.0 - fixed_mass;
            let Some(x) = a.lu().solve(&b) else { continue };
            if free.iter().enumerate().any(|(r, &i)| x[r] < -1e-12 || x[r] > cap[i] + 1e-12) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                nu[i] = x[r].clamp(0.0, cap[i]);
            }
        }
        let value = objective(p, &nu);
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, nu));
        }
    }
    best.expect("feasible instance has a vertex")
}

fn simpson(h: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = h(lm);
    let frm = h(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson(h, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson(h, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

pub fn adaptive_simpson(h: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (h(a), h(0.5 * (a + b)), h(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(h, a, b, fa, fm, fb, whole, tol, 50)
}

/// Potential of the uniform probability measure on the unit sphere in ℝ³ for
/// the kernel `|x − y|^{−s}`, at distance `r` from the centre.
///
/// The sphere is sliced into rings of polar angle `θ` about the axis through
/// the evaluation point; ring `θ` carries mass `½ sin θ dθ` at distance
/// `√(1 + r² − 2 r cos θ)`.
pub fn sphere_potential(s: f64, r: f64) -> f64 {
    let ring = |t: f64| {
        let d2 = 1.0 + r * r - 2.0 * r * t.cos();
        if d2 <= 0.0 {
            0.0
        } else {
            0.5 * t.sin() * d2.powf(-0.5 * s)
        }
    };
    adaptive_simpson(&ring, 0.0, std::f64::consts::PI, 1e-12)
}
