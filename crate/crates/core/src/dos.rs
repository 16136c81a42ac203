//! Density of states on real grids and the validity-regime report.
//!
//! `n(λ) = Im E[(H - λ)^{-1}(0, 0)] / π`, with the boundary value taken by
//! evaluating the continued series directly at real `λ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::DistributionSpec;
use crate::error::{Error, Result};
use crate::expansion::{convergence_ratio, resolvent_element, ModelParams, SeriesOptions};
use crate::moments::ContinuationWindow;
use crate::walks::LatticeSite;

/// Ratios above this are refused for curves: the required order grows like
/// `log(tol)/log(ρ)` and quickly exceeds the enumeration caps.
pub const DEFAULT_MAX_RATIO: f64 = 0.6;

/// Energies at which a curve is evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum GridSpec {
    Points { points: Vec<f64> },
    Range { start: f64, stop: f64, step: f64 },
}

impl GridSpec {
    /// Materializes the grid; it must be strictly increasing.
    pub fn points(&self) -> Result<Vec<f64>> {
        let grid = match self {
            GridSpec::Points { points } => points.clone(),
            GridSpec::Range { start, stop, step } => {
                if !(step.is_finite() && *step > 0.0 && start.is_finite() && stop.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "grid range needs finite bounds and step > 0, got {start}..{stop} by {step}"
                    )));
                }
                if stop < start {
                    return Ok(Vec::new());
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=n)
                    .map(|i| if i == n && (start + n as f64 * step - stop).abs() < 1e-9 * step {
                        *stop
                    } else {
                        start + i as f64 * step
                    })
                    .collect()
            }
        };
        if let Some(i) = grid.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput(format!(
                "grid is not strictly increasing at index {}",
                i + 1
            )));
        }
        if grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("grid contains non-finite energies".into()));
        }
        Ok(grid)
    }
}

/// `n(λ)` at one energy with its certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DosPoint {
    pub lambda: f64,
    pub value: f64,
    pub tail_bound: f64,
    pub k_used: usize,
}

/// What a curve was computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DosMeta {
    pub d: usize,
    pub h: f64,
    pub distribution: DistributionSpec,
    pub interval: (f64, f64),
    pub delta: f64,
    pub delta_prime: f64,
    pub bound_constant: f64,
    pub ratio: f64,
    pub options: SeriesOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DosCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub tails: Vec<f64>,
    pub k_used: Vec<usize>,
    pub meta: DosMeta,
}

impl DosCurve {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn point(&self, i: usize) -> DosPoint {
        DosPoint {
            lambda: self.grid[i],
            value: self.values[i],
            tail_bound: self.tails[i],
            k_used: self.k_used[i],
        }
    }

    /// Index pairs `(i, j)` with `λ_j = -λ_i` whose values differ by more
    /// than both certificates allow. Meaningful for even densities.
    pub fn symmetry_violations(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            let mirror = -self.grid[i];
            let Some(j) = self
                .grid
                .iter()
                .position(|x| (x - mirror).abs() <= 1e-12 * (1.0 + mirror.abs()))
            else {
                continue;
            };
            if j < i {
                continue;
            }
            let slack = self.tails[i] + self.tails[j] + 1e-10;
            if (self.values[i] - self.values[j]).abs() > slack {
                out.push((i, j));
            }
        }
        out
    }
}

fn check_energy(win: &ContinuationWindow, lambda: f64) -> Result<()> {
    let (a, b) = win.interval();
    let reach = win.delta_prime();
    if !(lambda.is_finite() && lambda >= a - reach && lambda <= b + reach) {
        return Err(Error::Geometry(format!(
            "energy {lambda} lies outside the window ({a}, {b}) widened by δ' = {reach}"
        )));
    }
    Ok(())
}

/// `n(λ)` with tail `(series tail)/π`.
pub fn dos_at(
    params: &ModelParams,
    win: &ContinuationWindow,
    lambda: f64,
    opts: &SeriesOptions,
) -> Result<DosPoint> {
    check_energy(win, lambda)?;
    let origin = LatticeSite::origin(params.d())?;
    let series = resolvent_element(
        params,
        win,
        &origin,
        &origin,
        Complex64::new(lambda, 0.0),
        opts,
    )?;
    Ok(DosPoint {
        lambda,
        value: series.value.im / PI,
        tail_bound: series.tail_bound / PI,
        k_used: series.k_used,
    })
}

/// Evaluates [`dos_at`] on every grid point. Any failure discards the curve.
pub fn dos_sweep(
    params: &ModelParams,
    win: &ContinuationWindow,
    grid: &[f64],
    opts: &SeriesOptions,
) -> Result<DosCurve> {
    let points: Vec<Result<DosPoint>> = grid
        .par_iter()
        .map(|&lambda| dos_at(params, win, lambda, opts))
        .collect();
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DosCurve {
        grid: grid.to_vec(),
        values: points.iter().map(|p| p.value).collect(),
        tails: points.iter().map(|p| p.tail_bound).collect(),
        k_used: points.iter().map(|p| p.k_used).collect(),
        meta: DosMeta {
            d: params.d(),
            h: params.h(),
            distribution: params.dist().spec().clone(),
            interval: win.interval(),
            delta: win.delta(),
            delta_prime: win.delta_prime(),
            bound_constant: win.bound_constant(),
            ratio: convergence_ratio(params, win),
            options: *opts,
        },
    })
}

/// `2d(log(2d) + π)`: uniform half-widths above this (at `h = 1`) put the
/// band centre in the sharp analyticity regime.
pub fn sharp_threshold(d: usize) -> f64 {
    let two_d = 2.0 * d as f64;
    two_d * (two_d.ln() + PI)
}

/// Largest `δ ∈ [1, a]` with `δ(log δ + π) ≤ a`, or `None` when even
/// `δ = 1` fails.
pub fn best_uniform_delta(a: f64) -> Option<f64> {
    let f = |x: f64| x * (x.ln() + PI);
    if !(a >= PI) {
        return None;
    }
    if f(a) <= a {
        return Some(a);
    }
    let (mut lo, mut hi) = (1.0, a);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= a {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Some(lo)
}

/// The sharp uniform regime, evaluated for the rescaled operator `H/h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpRegime {
    /// `a/h`.
    pub scaled_half_width: f64,
    pub threshold: f64,
    pub eligible: bool,
    /// `(-a + 2dh, a - 2dh)` when eligible.
    pub analytic_interval: Option<(f64, f64)>,
    pub best_delta: Option<f64>,
    /// `2d/δ` for the best `δ`: the series ratio with `|B_ℓ| ≤ δ^{-ℓ}`.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub d: usize,
    pub h: f64,
    pub ratio: f64,
    /// `(δ - δ')/(2dC)`.
    pub h_threshold: f64,
    pub bound_constant: f64,
    /// Present for uniform laws with `h > 0`.
    pub sharp: Option<SharpRegime>,
}

pub fn sharp_regime(d: usize, a: f64, h: f64) -> Option<SharpRegime> {
    if !(h > 0.0) {
        return None;
    }
    let scaled = a / h;
    let threshold = sharp_threshold(d);
    let eligible = scaled > threshold;
    let best_delta = best_uniform_delta(scaled);
    let two_d = 2.0 * d as f64;
    Some(SharpRegime {
        scaled_half_width: scaled,
        threshold,
        eligible,
        analytic_interval: eligible.then(|| (-a + two_d * h, a - two_d * h)),
        best_delta,
        ratio: best_delta.map(|delta| two_d / delta),
    })
}

pub fn regime_report(params: &ModelParams, win: &ContinuationWindow) -> RegimeReport {
    let d = params.d();
    RegimeReport {
        d,
        h: params.h(),
        ratio: convergence_ratio(params, win),
        h_threshold: win.gap() / (2.0 * d as f64 * win.bound_constant()),
        bound_constant: win.bound_constant(),
        sharp: params
            .dist()
            .uniform_half_width()
            .and_then(|a| sharp_regime(d, a, params.h())),
    }
}

/// Refuses runs that cannot produce a certified curve at desk scale.
///
/// `ρ ≥ 1` is a divergence unless the sharp uniform regime certifies
/// convergence, in which case the refusal is a capacity limit. Ratios above
/// `max_ratio`, or a required order beyond the enumeration cap, are capacity
/// limits too.
pub fn check_feasible(
    params: &ModelParams,
    win: &ContinuationWindow,
    opts: &SeriesOptions,
    max_ratio: f64,
) -> Result<()> {
    let report = regime_report(params, win);
    let ratio = report.ratio;
    if ratio >= 1.0 {
        if let Some(SharpRegime {
            ratio: Some(sharp), ..
        }) = report.sharp
        {
            if sharp < 1.0 {
                return Err(Error::Capacity(format!(
                    "the window ratio is {ratio:.4} but the sharp uniform bound gives \
                     {sharp:.4} < 1; the series converges there only at orders far beyond \
                     the enumeration caps"
                )));
            }
        }
        return Err(Error::Divergence { ratio });
    }
    if ratio > max_ratio {
        return Err(Error::Capacity(format!(
            "ratio {ratio:.4} exceeds the curve limit {max_ratio}"
        )));
    }
    let prefactor = win.bound_constant() / win.gap();
    let cap = opts.limits.max_len(params.d());
    let needed = (0..=cap).find(|&k| {
        ratio == 0.0 || prefactor * ratio.powi(k as i32 + 1) / (1.0 - ratio) <= opts.tol
    });
    if needed.is_none() {
        return Err(Error::Capacity(format!(
            "tolerance {:.1e} needs walks longer than the cap {cap} at ratio {ratio:.4}",
            opts.tol
        )));
    }
    opts.limits.check(params.d(), opts.k_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::Distribution;
    use approx::assert_abs_diff_eq;

    fn uniform(h: f64) -> (ModelParams, ContinuationWindow) {
        let dist = Distribution::uniform(1.0).unwrap();
        let win = ContinuationWindow::new(&dist, (-0.2, 0.2), 0.8, 0.4).unwrap();
        (ModelParams::new(1, h, dist).unwrap(), win)
    }

    #[test]
    fn grid_construction() {
        let g = GridSpec::Range {
            start: -0.2,
            stop: 0.2,
            step: 0.02,
        };
        let pts = g.points().unwrap();
        assert_eq!(pts.len(), 21);
        assert_eq!(pts[0], -0.2);
        assert_eq!(pts[20], 0.2);
        assert!(GridSpec::Points { points: vec![] }.points().unwrap().is_empty());
        assert!(GridSpec::Points {
            points: vec![0.1, 0.1]
        }
        .points()
        .is_err());
    }

    #[test]
    fn zero_hopping_reproduces_density() {
        let (p, w) = uniform(0.0);
        let pt = dos_at(&p, &w, 0.1, &SeriesOptions::new(1e-10, 10)).unwrap();
        assert_abs_diff_eq!(pt.value, 0.5, epsilon = 1e-10);
        assert_eq!(pt.tail_bound, 0.0);

        let dist = Distribution::polynomial([-1.0, 1.0], vec![0.75, 0.0, -0.75]).unwrap();
        let win = ContinuationWindow::new(&dist, (-0.2, 0.2), 0.7, 0.35).unwrap();
        let p = ModelParams::new(1, 0.0, dist).unwrap();
        let pt = dos_at(&p, &win, 0.0, &SeriesOptions::new(1e-10, 10)).unwrap();
        assert_abs_diff_eq!(pt.value, 0.75, epsilon = 1e-10);
    }

    #[test]
    fn energies_outside_the_window_are_rejected() {
        let (p, w) = uniform(0.0);
        let r = dos_at(&p, &w, 0.7, &SeriesOptions::new(1e-10, 10));
        assert!(matches!(r, Err(Error::Geometry(_))));
        assert!(dos_at(&p, &w, 0.6, &SeriesOptions::new(1e-10, 10)).is_ok());
    }

    #[test]
    fn empty_sweep() {
        let (p, w) = uniform(0.02);
        let c = dos_sweep(&p, &w, &[], &SeriesOptions::new(1e-8, 14)).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn sharp_regime_examples() {
        assert_abs_diff_eq!(sharp_threshold(1), 7.669, epsilon = 5e-4);
        assert_abs_diff_eq!(sharp_threshold(2), 18.112, epsilon = 5e-4);
        let r = sharp_regime(1, 8.0, 1.0).unwrap();
        assert!(r.eligible);
        assert_eq!(r.analytic_interval, Some((-6.0, 6.0)));
        assert!(r.best_delta.unwrap() > 2.0 && r.ratio.unwrap() < 1.0);
        assert!(!sharp_regime(1, 7.0, 1.0).unwrap().eligible);
        let r = sharp_regime(2, 30.0, 1.0).unwrap();
        assert!(r.eligible);
        assert_eq!(r.analytic_interval, Some((-26.0, 26.0)));
        assert!(best_uniform_delta(1.0).is_none());
        assert!(sharp_regime(1, 8.0, 0.0).is_none());
    }

    #[test]
    fn best_delta_is_the_boundary() {
        let delta = best_uniform_delta(8.0).unwrap();
        assert!(crate::moments::uniform_bound_check(8.0, delta));
        assert!(!crate::moments::uniform_bound_check(8.0, delta * (1.0 + 1e-9)));
    }

    #[test]
    fn refusals() {
        let opts = SeriesOptions::new(1e-8, 14);
        let (p, w) = uniform(0.02);
        assert!(check_feasible(&p, &w, &opts, DEFAULT_MAX_RATIO).is_ok());
        let (p, w) = uniform(0.07);
        assert!(matches!(
            check_feasible(&p, &w, &opts, DEFAULT_MAX_RATIO),
            Err(Error::Capacity(_))
        ));
        let (p, w) = uniform(0.2);
        assert!(matches!(
            check_feasible(&p, &w, &opts, DEFAULT_MAX_RATIO),
            Err(Error::Divergence { .. })
        ));

        let dist = Distribution::uniform(8.0).unwrap();
        let win = ContinuationWindow::new(&dist, (-6.0, 6.0), 1.9, 0.95).unwrap();
        let p = ModelParams::new(1, 1.0, dist).unwrap();
        assert!(matches!(
            check_feasible(&p, &win, &opts, DEFAULT_MAX_RATIO),
            Err(Error::Capacity(_))
        ));
    }
}
