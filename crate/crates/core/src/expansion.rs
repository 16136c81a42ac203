//! Truncated random-walk expansions with certified geometric tails.
//!
//! The averaged resolvent is
//!
//! ```text
//! E[(H - z)^{-1}(n, m)] = Σ_k (-h)^k Σ_{γ ∈ Γ_k(n,m)} Π_α B_{#(γ,α)}(z)
//! ```
//!
//! where the product runs over the sites visited by `γ` (all `k + 1`
//! indices counted). With `|B_ℓ| ≤ C g^{-ℓ}` on the window and
//! `#Γ_k ≤ (2d)^k`, order `k` is bounded by `(C/g)·ρ^k`, `ρ = 2dCh/g`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::moments::{ContinuationWindow, MixedContour, MixedMomentTable, MomentTable, Sheet};
use crate::walks::{fold_correlation_paths, fold_paths, CorrelationPath, LatticeSite, WalkLimits};

/// Relative slack on per-term bounds, absorbing quadrature rounding.
const TERM_SLACK: f64 = 1e-8;

/// The Anderson operator `h·(adjacency on Z^d) + V_ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    d: usize,
    h: f64,
    dist: Distribution,
}

impl ModelParams {
    pub fn new(d: usize, h: f64, dist: Distribution) -> Result<Self> {
        if d == 0 || d > crate::walks::MAX_DIM {
            return Err(Error::InvalidInput(format!(
                "dimension {d} outside 1..={}",
                crate::walks::MAX_DIM
            )));
        }
        if !(h.is_finite() && h >= 0.0) {
            return Err(Error::InvalidInput(format!("hopping {h} must be >= 0")));
        }
        Ok(Self { d, h, dist })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dist(&self) -> &Distribution {
        &self.dist
    }

    pub fn with_hopping(&self, h: f64) -> Result<Self> {
        Self::new(self.d, h, self.dist.clone())
    }
}

/// Truncation controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    /// Target for the certified tail.
    pub tol: f64,
    /// Highest order summed.
    pub k_max: usize,
    pub limits: WalkLimits,
}

impl SeriesOptions {
    pub fn new(tol: f64, k_max: usize) -> Self {
        Self {
            tol,
            k_max,
            limits: WalkLimits::default(),
        }
    }
}

/// One summed order and its a priori bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub k: usize,
    pub l: usize,
    pub value: Complex64,
    pub bound: f64,
}

/// Truncated series value with its tail certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesResult {
    pub value: Complex64,
    /// Bound on the modulus of everything not summed.
    pub tail_bound: f64,
    /// Highest order summed (for correlations, the highest `k + ℓ`).
    pub k_used: usize,
    pub ratio: f64,
    pub terms: Vec<SeriesTerm>,
}

impl SeriesResult {
    /// `false` when the cap on the order stopped summation before the tail
    /// reached the requested tolerance.
    pub fn reached(&self, tol: f64) -> bool {
        self.tail_bound <= tol
    }
}

/// `ρ = 2dCh/(δ - δ')`.
pub fn convergence_ratio(params: &ModelParams, win: &ContinuationWindow) -> f64 {
    2.0 * params.d as f64 * win.bound_constant() * params.h / win.gap()
}

/// Tail after order `k` of a series whose order-`j` bound is `prefactor·ρ^j`.
fn geometric_tail(prefactor: f64, ratio: f64, k: usize) -> f64 {
    if ratio == 0.0 {
        return 0.0;
    }
    prefactor * ratio.powi(k as i32 + 1) / (1.0 - ratio)
}

/// Smallest order whose tail is at most `tol`, capped at `k_max`.
fn truncation_order<F: Fn(usize) -> f64>(tail: F, tol: f64, k_max: usize) -> usize {
    (0..=k_max).find(|&k| tail(k) <= tol).unwrap_or(k_max)
}

fn check_options(params: &ModelParams, opts: &SeriesOptions) -> Result<()> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {} must be > 0", opts.tol)));
    }
    opts.limits.check(params.d, opts.k_max)
}

fn check_term(k: usize, value: Complex64, bound: f64) -> Result<()> {
    if value.norm() > bound * (1.0 + TERM_SLACK) + f64::MIN_POSITIVE {
        return Err(Error::Certificate {
            order: k,
            magnitude: value.norm(),
            bound,
        });
    }
    Ok(())
}

/// `E[(H - z)^{-1}(n, m)]` on the upper sheet.
pub fn resolvent_element(
    params: &ModelParams,
    win: &ContinuationWindow,
    n: &LatticeSite,
    m: &LatticeSite,
    z: Complex64,
    opts: &SeriesOptions,
) -> Result<SeriesResult> {
    resolvent_element_on(params, win, n, m, z, Sheet::Upper, opts)
}

/// `E[(H - z)^{-1}(n, m)]` continued from the given half-plane.
pub fn resolvent_element_on(
    params: &ModelParams,
    win: &ContinuationWindow,
    n: &LatticeSite,
    m: &LatticeSite,
    z: Complex64,
    sheet: Sheet,
    opts: &SeriesOptions,
) -> Result<SeriesResult> {
    check_options(params, opts)?;
    let ratio = convergence_ratio(params, win);
    if ratio >= 1.0 {
        return Err(Error::Divergence { ratio });
    }
    let prefactor = win.bound_constant() / win.gap();
    let k_used = truncation_order(|k| geometric_tail(prefactor, ratio, k), opts.tol, opts.k_max);
    let table = MomentTable::build(&params.dist, win, z, sheet, k_used as u32 + 1)?;

    let weight = |profile: &crate::walks::VisitProfile| {
        profile
            .multiplicities()
            .fold(Complex64::new(1.0, 0.0), |acc, c| acc * table.get(c))
    };
    let mut value = Complex64::new(0.0, 0.0);
    let mut terms = Vec::with_capacity(k_used + 1);
    for k in 0..=k_used {
        let sum = fold_paths(params.d, k, n, m, &opts.limits, weight)?;
        let term = sum * (-params.h).powi(k as i32);
        let bound = prefactor * ratio.powi(k as i32);
        check_term(k, term, bound)?;
        value += term;
        terms.push(SeriesTerm {
            k,
            l: 0,
            value: term,
            bound,
        });
    }
    Ok(SeriesResult {
        value,
        tail_bound: geometric_tail(prefactor, ratio, k_used),
        k_used,
        ratio,
        terms,
    })
}

/// Entry pattern of a [`LocalOperator`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorEntries {
    /// Translation invariant: `A(x, x + offset) = value`.
    Translation(Vec<(Vec<i32>, Complex64)>),
    /// Finitely many explicit entries `A(x, y) = value`.
    Explicit(Vec<(Vec<i32>, Vec<i32>, Complex64)>),
}

/// A banded operator: `A(x, y) = 0` when `|x - y|_∞ > R`, `|A(x, y)| ≤ M`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    d: usize,
    radius: u32,
    bound: f64,
    entries: OperatorEntries,
}

impl LocalOperator {
    /// Validates the band and derives `R` and `M` from the entries.
    pub fn new(d: usize, entries: OperatorEntries) -> Result<Self> {
        let check = |v: &[i32]| -> Result<()> {
            if v.len() != d {
                return Err(Error::InvalidInput(format!(
                    "operator entry index {v:?} does not have dimension {d}"
                )));
            }
            Ok(())
        };
        let (mut radius, mut bound) = (0u32, 0f64);
        match &entries {
            OperatorEntries::Translation(list) => {
                for (offset, value) in list {
                    check(offset)?;
                    let r = offset.iter().map(|o| o.unsigned_abs()).max().unwrap_or(0);
                    radius = radius.max(r);
                    bound = bound.max(value.norm());
                }
            }
            OperatorEntries::Explicit(list) => {
                for (x, y, value) in list {
                    check(x)?;
                    check(y)?;
                    let r = x
                        .iter()
                        .zip(y)
                        .map(|(a, b)| (a - b).unsigned_abs())
                        .max()
                        .unwrap_or(0);
                    radius = radius.max(r);
                    bound = bound.max(value.norm());
                }
            }
        }
        Ok(Self {
            d,
            radius,
            bound,
            entries,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(
            d,
            OperatorEntries::Translation(vec![(vec![0; d], Complex64::new(1.0, 0.0))]),
        )
        .expect("identity is well formed")
    }

    pub fn zero(d: usize) -> Self {
        Self::new(d, OperatorEntries::Translation(Vec::new())).expect("zero is well formed")
    }

    /// `A(x, x + step·e_axis) = 1`.
    pub fn shift(d: usize, axis: usize, step: i32) -> Result<Self> {
        if axis >= d {
            return Err(Error::InvalidInput(format!("axis {axis} >= dimension {d}")));
        }
        let mut offset = vec![0; d];
        offset[axis] = step;
        Self::new(
            d,
            OperatorEntries::Translation(vec![(offset, Complex64::new(1.0, 0.0))]),
        )
    }

    /// Current-type operator `i(S - S*)` along `axis`.
    pub fn current(d: usize, axis: usize) -> Result<Self> {
        if axis >= d {
            return Err(Error::InvalidInput(format!("axis {axis} >= dimension {d}")));
        }
        let mut fwd = vec![0; d];
        fwd[axis] = 1;
        let back: Vec<i32> = fwd.iter().map(|o| -o).collect();
        Self::new(
            d,
            OperatorEntries::Translation(vec![
                (fwd, Complex64::new(0.0, 1.0)),
                (back, Complex64::new(0.0, -1.0)),
            ]),
        )
    }

    /// `A*(x, y) = conj A(y, x)`.
    pub fn adjoint(&self) -> Self {
        let entries = match &self.entries {
            OperatorEntries::Translation(list) => OperatorEntries::Translation(
                list.iter()
                    .map(|(o, v)| (o.iter().map(|x| -x).collect(), v.conj()))
                    .collect(),
            ),
            OperatorEntries::Explicit(list) => OperatorEntries::Explicit(
                list.iter()
                    .map(|(x, y, v)| (y.clone(), x.clone(), v.conj()))
                    .collect(),
            ),
        };
        Self {
            entries,
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn entries(&self) -> &OperatorEntries {
        &self.entries
    }

    /// `A(x, y)`.
    pub fn entry(&self, x: &[i32], y: &[i32]) -> Complex64 {
        let zero = Complex64::new(0.0, 0.0);
        match &self.entries {
            OperatorEntries::Translation(list) => list
                .iter()
                .filter(|(o, _)| o.iter().zip(x).zip(y).all(|((o, a), b)| a + o == *b))
                .fold(zero, |acc, (_, v)| acc + v),
            OperatorEntries::Explicit(list) => list
                .iter()
                .filter(|(a, b, _)| a.as_slice() == x && b.as_slice() == y)
                .fold(zero, |acc, (_, _, v)| acc + v),
        }
    }
}

/// `E[((H - z₁)^{-1} A₁ (H - z₂)^{-1} A₂)(0, 0)]`, with each argument on the
/// sheet and window recorded in `contour`.
#[allow(clippy::too_many_arguments)]
pub fn correlation_element(
    params: &ModelParams,
    contour: &MixedContour,
    a1: &LocalOperator,
    a2: &LocalOperator,
    z1: Complex64,
    z2: Complex64,
    opts: &SeriesOptions,
) -> Result<SeriesResult> {
    check_options(params, opts)?;
    let d = params.d;
    if a1.dim() != d || a2.dim() != d {
        return Err(Error::InvalidInput(format!(
            "operator dimensions ({}, {}) differ from the lattice dimension {d}",
            a1.dim(),
            a2.dim()
        )));
    }
    let gap = contour.certified_gap(z1, z2)?;
    let c = contour.bound_constant();
    let ratio = 2.0 * d as f64 * c * params.h / gap;
    if ratio >= 1.0 {
        return Err(Error::Divergence { ratio });
    }
    let radius = a1.radius().max(a2.radius());
    // Γ_{k,ℓ} has at most (2R+1)^d (2d)^{k+ℓ} elements, and each carries
    // k + ℓ + 2 resolvent factors.
    let prefactor = f64::from(2 * radius + 1).powi(d as i32)
        * a1.bound()
        * a2.bound()
        * (c / gap).powi(2);
    // Orders are summed by total length k + ℓ ≤ N; the n + 1 pairs of
    // total n each carry prefactor·ρ^n.
    let tail = |n: usize| {
        if ratio == 0.0 {
            return 0.0;
        }
        let m = n as f64 + 1.0;
        prefactor * ratio.powi(n as i32 + 1) * ((m + 1.0) - m * ratio) / (1.0 - ratio).powi(2)
    };
    let k_used = truncation_order(tail, opts.tol, opts.k_max);
    let order = k_used as u32 + 1;
    let table = MixedMomentTable::build(&params.dist, contour, order, order, z1, z2)?;

    let origin = LatticeSite::origin(d)?;
    let weight = |p: &CorrelationPath<'_>| {
        let junctions = a1.entry(p.first_end.coords(), p.second_start.coords())
            * a2.entry(p.second_end.coords(), p.terminal.coords());
        if junctions == Complex64::new(0.0, 0.0) {
            return junctions;
        }
        let mut product = junctions;
        for (site, n1) in p.first_leg.iter() {
            product *= table.get(n1, p.second_leg.count(&site));
        }
        for (site, n2) in p.second_leg.iter() {
            if p.first_leg.count(&site) == 0 {
                product *= table.get(0, n2);
            }
        }
        product
    };

    let mut value = Complex64::new(0.0, 0.0);
    let mut terms = Vec::with_capacity((k_used + 1) * (k_used + 2) / 2);
    for n in 0..=k_used {
        for k in 0..=n {
            let l = n - k;
            let sum = fold_correlation_paths(
                d,
                k,
                l,
                radius,
                &origin,
                &origin,
                &opts.limits,
                weight,
            )?;
            let term = sum * (-params.h).powi((k + l) as i32);
            let bound = prefactor * ratio.powi((k + l) as i32);
            check_term(k + l, term, bound)?;
            value += term;
            terms.push(SeriesTerm {
                k,
                l,
                value: term,
                bound,
            });
        }
    }
    Ok(SeriesResult {
        value,
        tail_bound: tail(k_used),
        k_used,
        ratio,
        terms,
    })
}

/// `8dCh`: real energies farther apart than this lie in the certified
/// analyticity region of the correlation kernel (with `δ' = δ/2`).
pub fn diagonal_exclusion_width(params: &ModelParams, bound_constant: f64) -> f64 {
    8.0 * params.d as f64 * bound_constant * params.h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{moment_uniform_closed, Branch};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn setup(h: f64) -> (ModelParams, ContinuationWindow) {
        let dist = Distribution::uniform(1.0).unwrap();
        let win = ContinuationWindow::new(&dist, (-0.2, 0.2), 0.8, 0.4).unwrap();
        (ModelParams::new(1, h, dist).unwrap(), win)
    }

    #[test]
    fn ratio_examples() {
        let (p, w) = setup(0.02);
        let rho = convergence_ratio(&p, &w);
        assert_abs_diff_eq!(rho, 2.0 * w.bound_constant() * 0.02 / 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(rho, 0.2457, epsilon = 1e-4);
        let (p0, _) = setup(0.0);
        assert_eq!(convergence_ratio(&p0, &w), 0.0);
        let edge = setup(w.gap() / (2.0 * w.bound_constant())).0;
        assert_abs_diff_eq!(convergence_ratio(&edge, &w), 1.0, epsilon = 1e-15);
        let o = LatticeSite::origin(1).unwrap();
        let err = resolvent_element(&edge, &w, &o, &o, Complex64::i(), &SeriesOptions::new(1e-8, 10));
        assert!(matches!(err, Err(Error::Divergence { .. })));
    }

    #[test]
    fn zero_hopping_is_first_moment() {
        let (p, w) = setup(0.0);
        let o = LatticeSite::origin(1).unwrap();
        let r = resolvent_element(&p, &w, &o, &o, Complex64::i(), &SeriesOptions::new(1e-8, 14))
            .unwrap();
        assert_eq!(r.k_used, 0);
        assert_eq!(r.tail_bound, 0.0);
        assert!((r.value - Complex64::new(0.0, PI / 4.0)).norm() < 1e-12);
    }

    #[test]
    fn odd_orders_vanish_on_the_diagonal() {
        let (p, w) = setup(0.02);
        let o = LatticeSite::origin(1).unwrap();
        let r = resolvent_element(
            &p,
            &w,
            &o,
            &o,
            Complex64::new(0.1, 0.5),
            &SeriesOptions::new(1e-8, 14),
        )
        .unwrap();
        for t in r.terms.iter().filter(|t| t.k % 2 == 1) {
            assert_eq!(t.value, Complex64::new(0.0, 0.0));
        }
        assert!(r.k_used <= 14);
        assert!(r.tail_bound <= 1e-8);
    }

    #[test]
    fn capacity_and_options() {
        let (p, w) = setup(0.02);
        let o = LatticeSite::origin(1).unwrap();
        let r = resolvent_element(&p, &w, &o, &o, Complex64::i(), &SeriesOptions::new(1e-8, 25));
        assert!(matches!(r, Err(Error::Capacity(_))));
        let r = resolvent_element(&p, &w, &o, &o, Complex64::i(), &SeriesOptions::new(0.0, 5));
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn exclusion_width_examples() {
        let (p, _) = setup(0.02);
        assert_abs_diff_eq!(diagonal_exclusion_width(&p, 2.4566), 0.393, epsilon = 1e-3);
        let (p0, _) = setup(0.0);
        assert_eq!(diagonal_exclusion_width(&p0, 2.4566), 0.0);
        let p2 = ModelParams::new(2, 0.1, Distribution::uniform(1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(diagonal_exclusion_width(&p2, 2.0), 3.2, epsilon = 1e-12);
    }

    #[test]
    fn operator_construction() {
        let s = LocalOperator::shift(1, 0, 1).unwrap();
        assert_eq!(s.radius(), 1);
        assert_eq!(s.bound(), 1.0);
        assert_eq!(s.entry(&[3], &[4]), Complex64::new(1.0, 0.0));
        assert_eq!(s.entry(&[4], &[3]), Complex64::new(0.0, 0.0));
        let t = s.adjoint();
        assert_eq!(t.entry(&[4], &[3]), Complex64::new(1.0, 0.0));
        let id = LocalOperator::identity(2);
        assert_eq!(id.radius(), 0);
        assert_eq!(id.entry(&[1, 1], &[1, 1]), Complex64::new(1.0, 0.0));
        assert!(LocalOperator::shift(1, 1, 1).is_err());
        let j = LocalOperator::current(1, 0).unwrap();
        assert_eq!(j.entry(&[0], &[1]), Complex64::new(0.0, 1.0));
        assert_eq!(j.adjoint(), LocalOperator::new(1, j.adjoint().entries().clone()).unwrap());
        let e = LocalOperator::new(
            1,
            OperatorEntries::Explicit(vec![(vec![0], vec![2], Complex64::new(0.5, 0.0))]),
        )
        .unwrap();
        assert_eq!(e.radius(), 2);
        assert_eq!(e.entry(&[0], &[2]).re, 0.5);
    }

    #[test]
    fn correlation_at_zero_hopping() {
        let dist = Distribution::uniform(1.0).unwrap();
        let p = ModelParams::new(1, 0.0, dist.clone()).unwrap();
        let opts = SeriesOptions::new(1e-10, 8);
        let (z1, z2) = (Complex64::new(0.2, 0.5), Complex64::new(-0.3, 0.8));
        let contour = MixedContour::new(&dist, Branch::upper(None), Branch::upper(None)).unwrap();
        let id = LocalOperator::identity(1);
        let r = correlation_element(&p, &contour, &id, &id, z1, z2, &opts).unwrap();
        let b1 = |z| moment_uniform_closed(1.0, 1, z).unwrap();
        assert!((r.value - (b1(z1) - b1(z2)) / (z1 - z2)).norm() < 1e-10);
        assert_eq!(r.tail_bound, 0.0);

        // Shift and its adjoint couple two distinct sites.
        let s = LocalOperator::shift(1, 0, 1).unwrap();
        let r = correlation_element(&p, &contour, &s, &s.adjoint(), z1, z2, &opts).unwrap();
        assert!((r.value - b1(z1) * b1(z2)).norm() < 1e-10);

        let zero = LocalOperator::zero(1);
        let r = correlation_element(&p, &contour, &zero, &id, z1, z2, &opts).unwrap();
        assert_eq!(r.value, Complex64::new(0.0, 0.0));
    }
}
