//! Finite-box Monte Carlo reference values.
//!
//! The operator is restricted to a centred box with Dirichlet truncation.
//! Every sample draws its potential from its own ChaCha stream, indexed by
//! the sample number, and sample statistics are reduced in index order, so
//! estimates do not depend on how many threads run the samples.

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::expansion::{LocalOperator, ModelParams};
use crate::walks::{LatticeSite, MAX_DIM};

/// Relative residual every solve must reach.
pub const RESIDUAL_TOL: f64 = 1e-10;
const PIVOT_FLOOR: f64 = 1e-300;

/// A box of odd side `L` centred at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxSpec {
    d: usize,
    side: usize,
}

impl BoxSpec {
    pub fn new(d: usize, side: usize) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::InvalidInput(format!(
                "box dimension {d} outside 1..={MAX_DIM}"
            )));
        }
        if side < 3 || side.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "box side {side} must be odd and at least 3"
            )));
        }
        if side.checked_pow(d as u32).is_none_or(|n| n > 1 << 28) {
            return Err(Error::Capacity(format!("box {side}^{d} is too large")));
        }
        Ok(Self { d, side })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn sites(&self) -> usize {
        self.side.pow(self.d as u32)
    }

    fn half(&self) -> i32 {
        (self.side / 2) as i32
    }

    /// Linear index of `site` (first axis fastest), if it lies in the box.
    pub fn index(&self, site: &[i32]) -> Option<usize> {
        let half = self.half();
        let mut index = 0;
        let mut stride = 1;
        for &x in site {
            if x.abs() > half {
                return None;
            }
            index += (x + half) as usize * stride;
            stride *= self.side;
        }
        Some(index)
    }

    pub fn coords(&self, mut index: usize) -> Vec<i32> {
        let half = self.half();
        (0..self.d)
            .map(|_| {
                let x = (index % self.side) as i32 - half;
                index /= self.side;
                x
            })
            .collect()
    }

    pub fn center(&self) -> usize {
        self.index(&vec![0; self.d]).expect("origin is inside")
    }
}

/// One potential per box site, drawn from stream `stream` of `seed`.
pub fn sample_potential_stream(
    spec: &BoxSpec,
    dist: &Distribution,
    seed: u64,
    stream: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..spec.sites())
        .map(|_| dist.quantile(rng.random::<f64>()))
        .collect()
}

pub fn sample_potential(spec: &BoxSpec, dist: &Distribution, seed: u64) -> Result<Vec<f64>> {
    sample_potential_stream(spec, dist, seed, 0)
}

/// `(H_Γ - z) x` for the box operator with potential `v` and hopping `h`.
fn apply_shifted(spec: &BoxSpec, v: &[f64], h: f64, z: Complex64, x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let side = spec.side;
    let mut out: Vec<Complex64> = v.iter().zip(x).map(|(vi, xi)| (vi - z) * xi).collect();
    let mut stride = 1;
    for _ in 0..spec.d {
        for i in 0..n {
            let pos = (i / stride) % side;
            if pos + 1 < side {
                let j = i + stride;
                out[i] += h * x[j];
                out[j] += h * x[i];
            }
        }
        stride *= side;
    }
    out
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn relative_residual(
    spec: &BoxSpec,
    v: &[f64],
    h: f64,
    z: Complex64,
    x: &[Complex64],
    b: &[Complex64],
) -> f64 {
    let ax = apply_shifted(spec, v, h, z, x);
    let r: Vec<Complex64> = ax.iter().zip(b).map(|(a, b)| a - b).collect();
    norm(&r) / norm(b).max(f64::MIN_POSITIVE)
}

/// Tridiagonal elimination for `d = 1`.
fn solve_tridiagonal(v: &[f64], h: f64, z: Complex64, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = v.len();
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    let mut pivot = v[0] - z;
    for i in 0..n {
        if i > 0 {
            pivot = v[i] - z - h * c[i - 1];
        }
        if pivot.norm() == 0.0 {
            return Err(Error::Solver {
                sample: None,
                residual: f64::INFINITY,
            });
        }
        c[i] = h / pivot;
        y[i] = (b[i] - if i > 0 { h * y[i - 1] } else { Complex64::new(0.0, 0.0) }) / pivot;
    }
    for i in (0..n - 1).rev() {
        let next = y[i + 1];
        y[i] -= c[i] * next;
    }
    Ok(y)
}

/// Conjugate orthogonal conjugate gradients with a Jacobi preconditioner;
/// `H_Γ - z` is complex symmetric.
fn solve_cocg(
    spec: &BoxSpec,
    v: &[f64],
    h: f64,
    z: Complex64,
    b: &[Complex64],
) -> Result<Vec<Complex64>> {
    let n = b.len();
    let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let inv_diag: Vec<Complex64> = v.iter().map(|vi| 1.0 / (vi - z)).collect();
    let b_norm = norm(b);
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut r = b.to_vec();
    let mut s: Vec<Complex64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = s.clone();
    let mut rho = dot(&r, &s);
    for _ in 0..10 * n + 100 {
        let q = apply_shifted(spec, v, h, z, &p);
        let pq = dot(&p, &q);
        if pq.norm() == 0.0 {
            break;
        }
        let alpha = rho / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if norm(&r) <= 1e-3 * RESIDUAL_TOL * b_norm {
            break;
        }
        for i in 0..n {
            s[i] = r[i] * inv_diag[i];
        }
        let next = dot(&r, &s);
        if rho.norm() == 0.0 {
            break;
        }
        let beta = next / rho;
        rho = next;
        for i in 0..n {
            p[i] = s[i] + beta * p[i];
        }
    }
    Ok(x)
}

/// Solves `(H_Γ - z) u = b` and checks the relative residual.
pub fn box_solve(
    spec: &BoxSpec,
    potential: &[f64],
    h: f64,
    z: Complex64,
    b: &[Complex64],
) -> Result<Vec<Complex64>> {
    if potential.len() != spec.sites() || b.len() != spec.sites() {
        return Err(Error::InvalidInput(format!(
            "box has {} sites but got {} potentials and {} right-hand entries",
            spec.sites(),
            potential.len(),
            b.len()
        )));
    }
    if z.im == 0.0 {
        return Err(Error::Domain(format!("box resolvent needs Im z != 0, got {z}")));
    }
    let u = if spec.d == 1 {
        solve_tridiagonal(potential, h, z, b)?
    } else {
        solve_cocg(spec, potential, h, z, b)?
    };
    let residual = relative_residual(spec, potential, h, z, &u, b);
    if !(residual < RESIDUAL_TOL) {
        return Err(Error::Solver {
            sample: None,
            residual,
        });
    }
    Ok(u)
}

fn unit(spec: &BoxSpec, index: usize) -> Vec<Complex64> {
    let mut e = vec![Complex64::new(0.0, 0.0); spec.sites()];
    e[index] = Complex64::new(1.0, 0.0);
    e
}

/// `(H_Γ - z)^{-1}(site, site)`.
pub fn box_resolvent_element(
    spec: &BoxSpec,
    potential: &[f64],
    h: f64,
    z: Complex64,
    site: &LatticeSite,
) -> Result<Complex64> {
    let index = spec
        .index(site.coords())
        .ok_or_else(|| Error::InvalidInput(format!("site {site} is outside the box")))?;
    Ok(box_solve(spec, potential, h, z, &unit(spec, index))?[index])
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: Complex64,
    /// Larger of the real and imaginary standard errors.
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_samples(values: &[Complex64], seed: u64) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<Complex64>() / n as f64;
        let stderr = if n < 2 {
            f64::INFINITY
        } else {
            let (sr, si) = values.iter().fold((0.0, 0.0), |(sr, si), v| {
                let e = v - mean;
                (sr + e.re * e.re, si + e.im * e.im)
            });
            let denom = (n - 1) as f64;
            ((sr / denom).sqrt().max((si / denom).sqrt())) / (n as f64).sqrt()
        };
        Self {
            mean,
            stderr,
            samples: n,
            seed,
        }
    }
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples, got {samples}")));
    }
    Ok(())
}

/// Runs `per_sample` on each stream in parallel and reduces in order.
fn run_streams<F>(streams: &[u64], seed: u64, per_sample: F) -> Result<McEstimate>
where
    F: Fn(u64) -> Result<Complex64> + Sync,
{
    let values: Vec<Result<Complex64>> = streams.par_iter().map(|&s| per_sample(s)).collect();
    let values = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.map_err(|e| match e {
                Error::Solver { residual, .. } => Error::Solver {
                    sample: Some(i),
                    residual,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(McEstimate::from_samples(&values, seed))
}

fn check_box(spec: &BoxSpec, params: &ModelParams) -> Result<()> {
    if spec.d != params.d() {
        return Err(Error::InvalidInput(format!(
            "box dimension {} differs from model dimension {}",
            spec.d,
            params.d()
        )));
    }
    Ok(())
}

/// `E[(H_Γ - z)^{-1}(0, 0)]` over `samples` draws.
pub fn mc_resolvent(
    spec: &BoxSpec,
    params: &ModelParams,
    z: Complex64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_samples(samples)?;
    let streams: Vec<u64> = (0..samples as u64).collect();
    mc_resolvent_with_streams(spec, params, z, seed, &streams)
}

/// As [`mc_resolvent`] with explicit per-sample streams.
pub fn mc_resolvent_with_streams(
    spec: &BoxSpec,
    params: &ModelParams,
    z: Complex64,
    seed: u64,
    streams: &[u64],
) -> Result<McEstimate> {
    check_box(spec, params)?;
    check_samples(streams.len())?;
    let origin = LatticeSite::origin(spec.d)?;
    run_streams(streams, seed, |stream| {
        let v = sample_potential_stream(spec, params.dist(), seed, stream)?;
        box_resolvent_element(spec, &v, params.h(), z, &origin)
    })
}

/// `(A x)(i) = Σ_j A(i, j) x(j)` restricted to the box.
fn apply_operator(spec: &BoxSpec, op: &LocalOperator, x: &[Complex64]) -> Vec<Complex64> {
    let r = op.radius() as i32;
    let window = LatticeSite::origin(spec.d)
        .expect("valid dimension")
        .box_around(r as u32);
    (0..spec.sites())
        .map(|i| {
            let xi = spec.coords(i);
            window
                .iter()
                .filter_map(|offset| {
                    let yj: Vec<i32> = xi.iter().zip(offset.coords()).map(|(a, b)| a + b).collect();
                    let j = spec.index(&yj)?;
                    let a = op.entry(&xi, &yj);
                    (a != Complex64::new(0.0, 0.0)).then(|| a * x[j])
                })
                .sum()
        })
        .collect()
}

/// `E[((H_Γ - z₁)^{-1} A₁ (H_Γ - z₂)^{-1} A₂)(0, 0)]`.
#[allow(clippy::too_many_arguments)]
pub fn mc_correlation(
    spec: &BoxSpec,
    params: &ModelParams,
    a1: &LocalOperator,
    a2: &LocalOperator,
    z1: Complex64,
    z2: Complex64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_box(spec, params)?;
    check_samples(samples)?;
    let center = spec.center();
    let e0 = unit(spec, center);
    // Column A₂(·, 0) is the same for every sample.
    let a2_col = {
        let origin = spec.coords(center);
        (0..spec.sites())
            .map(|i| a2.entry(&spec.coords(i), &origin))
            .collect::<Vec<_>>()
    };
    let streams: Vec<u64> = (0..samples as u64).collect();
    run_streams(&streams, seed, |stream| {
        if a2_col.iter().all(|c| c.norm() == 0.0) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let v = sample_potential_stream(spec, params.dist(), seed, stream)?;
        // (H - z₁)^{-1} is symmetric, so its row at 0 is its column at 0.
        let row = box_solve(spec, &v, params.h(), z1, &e0)?;
        let u = box_solve(spec, &v, params.h(), z2, &a2_col)?;
        let w = apply_operator(spec, a1, &u);
        Ok(row.iter().zip(&w).map(|(a, b)| a * b).sum())
    })
}

/// Number of eigenvalues `≤ e` of the tridiagonal box operator, by the
/// signs of the `LDLᵀ` pivots of `H - e`.
pub fn sturm_count(potential: &[f64], h: f64, e: f64) -> usize {
    let mut count = 0;
    let mut pivot = 0.0;
    for (i, &v) in potential.iter().enumerate() {
        pivot = if i == 0 { v - e } else { v - e - h * h / pivot };
        if pivot.abs() < PIVOT_FLOOR {
            pivot = -PIVOT_FLOOR;
        }
        if pivot < 0.0 {
            count += 1;
        }
    }
    count
}

fn check_sturm(spec: &BoxSpec, params: &ModelParams) -> Result<()> {
    check_box(spec, params)?;
    if spec.d != 1 {
        return Err(Error::InvalidInput(
            "eigenvalue counting needs a one-dimensional box".into(),
        ));
    }
    Ok(())
}

/// Integrated density of states `N(E)` from eigenvalue counts. The
/// estimate is real; its imaginary part is zero.
pub fn sturm_ids(
    spec: &BoxSpec,
    params: &ModelParams,
    e: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_sturm(spec, params)?;
    check_samples(samples)?;
    let streams: Vec<u64> = (0..samples as u64).collect();
    let l = spec.sites() as f64;
    run_streams(&streams, seed, |stream| {
        let v = sample_potential_stream(spec, params.dist(), seed, stream)?;
        Ok(Complex64::new(sturm_count(&v, params.h(), e) as f64 / l, 0.0))
    })
}

/// Histogram estimate of `n(λ)` with a bin-halving bias estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SturmDos {
    pub lambda: f64,
    pub width: f64,
    pub estimate: McEstimate,
    pub half_bin: McEstimate,
    /// `|estimate - half_bin|`.
    pub bias: f64,
}

/// Counts eigenvalues in `[λ - w/2, λ + w/2]` and `[λ - w/4, λ + w/4]` on
/// the same samples.
pub fn sturm_dos(
    spec: &BoxSpec,
    params: &ModelParams,
    lambda: f64,
    width: f64,
    samples: usize,
    seed: u64,
) -> Result<SturmDos> {
    check_sturm(spec, params)?;
    check_samples(samples)?;
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidInput(format!("bin width {width} must be > 0")));
    }
    let l = spec.sites() as f64;
    let h = params.h();
    let per_sample: Vec<Result<(f64, f64)>> = (0..samples as u64)
        .into_par_iter()
        .map(|stream| {
            let v = sample_potential_stream(spec, params.dist(), seed, stream)?;
            let bin = |w: f64| {
                (sturm_count(&v, h, lambda + 0.5 * w) as f64
                    - sturm_count(&v, h, lambda - 0.5 * w) as f64)
                    / (l * w)
            };
            Ok((bin(width), bin(0.5 * width)))
        })
        .collect();
    let per_sample = per_sample.into_iter().collect::<Result<Vec<_>>>()?;
    let full: Vec<Complex64> = per_sample.iter().map(|p| Complex64::new(p.0, 0.0)).collect();
    let half: Vec<Complex64> = per_sample.iter().map(|p| Complex64::new(p.1, 0.0)).collect();
    let estimate = McEstimate::from_samples(&full, seed);
    let half_bin = McEstimate::from_samples(&half, seed);
    Ok(SturmDos {
        lambda,
        width,
        estimate,
        half_bin,
        bias: (estimate.mean.re - half_bin.mean.re).abs(),
    })
}
