//! Moments `B_ℓ(z) = ∫ dμ(λ) (λ - z)^{-ℓ}` of the single-site law and the
//! mixed moments `B_{k,ℓ}(z₁, z₂) = ∫ dμ(λ) (λ - z₁)^{-k} (λ - z₂)^{-ℓ}`.
//!
//! Values at points that need continuation across the support are always
//! computed from a contour representation: the support interval is
//! deformed below the real axis around the continuation window, so the
//! integral stays analytic as `z` moves down from the upper half-plane.
//! The uniform closed forms are only used in the upper half-plane and as a
//! cross-check.

use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::contour::{DeformedLine, Detour, QuadratureRule, Side};
use crate::distribution::Distribution;
use crate::error::{Error, Result};

/// Sample count per contour piece for sup-norm estimates of the density.
const SUP_SAMPLES: usize = 256;

/// Relative slack granted to a priori bounds against quadrature rounding.
const BOUND_SLACK: f64 = 1e-9;

/// Half-plane a function value is continued from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sheet {
    /// Primary values in `C₊`, continued downward through the window.
    #[default]
    Upper,
    /// Primary values in `C₋`, continued upward through the window.
    Lower,
}

/// How a tabulated moment was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    /// `B₀ = 1`.
    Exact,
    ClosedForm,
    Contour,
}

impl MomentMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            MomentMethod::Exact => "exact",
            MomentMethod::ClosedForm => "closed-form",
            MomentMethod::Contour => "contour",
        }
    }
}

/// Closed-form moment of the uniform law on `[-a, a]` for `Im z > 0`.
///
/// For `ℓ ≥ 2` this uses the antiderivative `-(λ-z)^{1-ℓ}/(ℓ-1)`.
pub fn moment_uniform_closed(a: f64, ell: u32, z: Complex64) -> Result<Complex64> {
    if !(a > 0.0) {
        return Err(Error::InvalidInput(format!("half-width {a} must be positive")));
    }
    if !(z.im > 0.0) {
        return Err(Error::Domain(format!(
            "closed form needs Im z > 0, got z = {z}; use the contour route"
        )));
    }
    let right = Complex64::new(a, 0.0) - z;
    let left = Complex64::new(-a, 0.0) - z;
    Ok(match ell {
        0 => Complex64::new(1.0, 0.0),
        1 => (right.ln() - left.ln()) / (2.0 * a),
        _ => {
            let p = (ell - 1) as i32;
            -(right.powi(-p) - left.powi(-p)) / (2.0 * a * f64::from(ell - 1))
        }
    })
}

/// `δ(log δ + π) ≤ a` and `1 ≤ δ ≤ a`: the sufficient condition for
/// `|B_ℓ(z)| ≤ δ^{-ℓ}` of the uniform law on `[-a, a]` at unit hopping.
pub fn uniform_bound_check(a: f64, delta: f64) -> bool {
    a > 0.0 && (1.0..=a).contains(&delta) && delta * (delta.ln() + std::f64::consts::PI) <= a
}

fn sup_on(dist: &Distribution, points: &[Complex64]) -> f64 {
    points
        .iter()
        .map(|w| dist.density_ext(*w).norm())
        .fold(0.0, f64::max)
}

fn bound_constant_for(dist: &Distribution, line: &DeformedLine) -> f64 {
    let mut c = 1.0;
    for detour in line.detours() {
        c += detour.length() * sup_on(dist, &detour.samples(SUP_SAMPLES));
    }
    c
}

fn window_line(dist: &Distribution, interval: (f64, f64), delta: f64) -> Result<DeformedLine> {
    let (lo, hi) = dist.support();
    let (a, b) = interval;
    DeformedLine::new(
        lo,
        hi,
        vec![Detour {
            left: a,
            right: b,
            radius: delta,
            side: Side::Below,
        }],
    )
    .map_err(|e| match e {
        Error::Geometry(msg) => Error::InvalidInput(format!(
            "window [{a} - {delta}, {b} + {delta}] must lie inside the support [{lo}, {hi}]: {msg}"
        )),
        other => other,
    })
}

/// `1 + (b - a + πδ)·sup_η |g|`, with the sup taken over dense samples of
/// the lower stadium boundary `η` of radius `δ` around `[a, b]`.
pub fn bound_constant(dist: &Distribution, interval: (f64, f64), delta: f64) -> Result<f64> {
    let (a, b) = interval;
    if !(a < b) || !(delta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need a < b and δ > 0, got ({a}, {b}) and {delta}"
        )));
    }
    Ok(bound_constant_for(dist, &window_line(dist, interval, delta)?))
}

/// An interval `I = (a, b)` with radii `0 < δ' < δ` and its bound constant.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuationWindow {
    interval: (f64, f64),
    delta: f64,
    delta_prime: f64,
    bound_constant: f64,
    line: DeformedLine,
}

impl ContinuationWindow {
    pub fn new(
        dist: &Distribution,
        interval: (f64, f64),
        delta: f64,
        delta_prime: f64,
    ) -> Result<Self> {
        let (a, b) = interval;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidInput(format!(
                "window interval ({a}, {b}) must satisfy a < b"
            )));
        }
        if !(delta_prime > 0.0 && delta_prime < delta) {
            return Err(Error::InvalidInput(format!(
                "radii must satisfy 0 < delta_prime < delta, got delta = {delta}, delta_prime = {delta_prime}"
            )));
        }
        let line = window_line(dist, interval, delta)?;
        let bound_constant = bound_constant_for(dist, &line);
        Ok(Self {
            interval,
            delta,
            delta_prime,
            bound_constant,
            line,
        })
    }

    /// `δ = 0.9 × dist(I, support edge)` and `δ' = δ/2`.
    pub fn default_for(dist: &Distribution, interval: (f64, f64)) -> Result<Self> {
        let (lo, hi) = dist.support();
        let room = (interval.0 - lo).min(hi - interval.1);
        if !(room > 0.0) {
            return Err(Error::InvalidInput(format!(
                "interval ({}, {}) is not inside the support interior",
                interval.0, interval.1
            )));
        }
        let delta = 0.9 * room;
        Self::new(dist, interval, delta, 0.5 * delta)
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn delta_prime(&self) -> f64 {
        self.delta_prime
    }

    pub fn bound_constant(&self) -> f64 {
        self.bound_constant
    }

    /// `δ - δ'`, the guaranteed distance from `O_{δ'}` to the contour.
    pub fn gap(&self) -> f64 {
        self.delta - self.delta_prime
    }

    pub fn contour(&self) -> &DeformedLine {
        &self.line
    }

    /// Distance from `z` to the closed interval `[a, b]`.
    pub fn distance_to_interval(&self, z: Complex64) -> f64 {
        let (a, b) = self.interval;
        let dx = if z.re < a {
            a - z.re
        } else if z.re > b {
            z.re - b
        } else {
            0.0
        };
        dx.hypot(z.im)
    }

    /// `z ∈ O_{δ'}`.
    pub fn contains(&self, z: Complex64) -> bool {
        self.distance_to_interval(z) < self.delta_prime
    }

    /// Checks that `z` lies above the contour at distance at least `δ - δ'`,
    /// where the continued moments obey the window bound.
    pub fn check_point(&self, z: Complex64) -> Result<()> {
        if self.line.side_of(z) != Some(Side::Above) {
            return Err(Error::Geometry(format!(
                "z = {z} is not reachable from the upper half-plane through the window"
            )));
        }
        let dist = self.line.distance(z);
        if dist < self.gap() {
            return Err(Error::Geometry(format!(
                "z = {z} is {dist:.3e} from the contour, closer than δ - δ' = {:.3e}",
                self.gap()
            )));
        }
        Ok(())
    }

    /// Window bound `C (δ - δ')^{-ℓ}`.
    pub fn moment_bound(&self, ell: u32) -> f64 {
        self.bound_constant * self.gap().powi(-(ell as i32))
    }
}

/// `B_0..=B_{max_ell}` at `z` by quadrature along the window contour.
pub fn moments_contour(
    dist: &Distribution,
    win: &ContinuationWindow,
    max_ell: u32,
    z: Complex64,
) -> Result<Vec<Complex64>> {
    win.check_point(z)?;
    let dim = max_ell as usize + 1;
    let f = |w: Complex64, out: &mut [Complex64]| {
        let inv = 1.0 / (w - z);
        let mut acc = dist.density_ext(w);
        for slot in out.iter_mut() {
            *slot = acc;
            acc *= inv;
        }
    };
    win.line
        .integrate(dim, &f, &QuadratureRule::default(), &[z])
}

/// Continued `B_ℓ(z)` for `z` in `O_{δ'} ∪ C₊`.
pub fn moment_contour(
    dist: &Distribution,
    win: &ContinuationWindow,
    ell: u32,
    z: Complex64,
) -> Result<Complex64> {
    Ok(moments_contour(dist, win, ell, z)?[ell as usize])
}

/// Moments `B_0..=B_L` at one complex energy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentTable {
    pub z: Complex64,
    pub sheet: Sheet,
    pub values: Vec<Complex64>,
    pub methods: Vec<MomentMethod>,
}

impl MomentTable {
    /// Builds the table on `sheet`. Lower-sheet values are the conjugates of
    /// upper-sheet values at `conj z` (the density is real).
    pub fn build(
        dist: &Distribution,
        win: &ContinuationWindow,
        z: Complex64,
        sheet: Sheet,
        max_ell: u32,
    ) -> Result<Self> {
        let upper_z = match sheet {
            Sheet::Upper => z,
            Sheet::Lower => z.conj(),
        };
        win.check_point(upper_z)?;
        let (mut values, method) = match dist.uniform_half_width() {
            Some(a) if upper_z.im > 0.0 => (
                (0..=max_ell)
                    .map(|ell| moment_uniform_closed(a, ell, upper_z))
                    .collect::<Result<Vec<_>>>()?,
                MomentMethod::ClosedForm,
            ),
            _ => (moments_contour(dist, win, max_ell, upper_z)?, MomentMethod::Contour),
        };
        values[0] = Complex64::new(1.0, 0.0);
        let mut methods = vec![method; values.len()];
        methods[0] = MomentMethod::Exact;

        if win.contains(upper_z) {
            for (ell, v) in values.iter().enumerate() {
                let bound = win.moment_bound(ell as u32);
                if v.norm() > bound * (1.0 + BOUND_SLACK) {
                    return Err(Error::Certificate {
                        order: ell,
                        magnitude: v.norm(),
                        bound,
                    });
                }
            }
        }
        if sheet == Sheet::Lower {
            values.iter_mut().for_each(|v| *v = v.conj());
        }
        Ok(Self {
            z,
            sheet,
            values,
            methods,
        })
    }

    #[inline]
    pub fn get(&self, ell: u32) -> Complex64 {
        self.values[ell as usize]
    }

    pub fn max_order(&self) -> u32 {
        (self.values.len() - 1) as u32
    }
}

/// A disk window `O_δ(E)` with inner radius `δ'`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskWindow {
    pub center: f64,
    pub delta: f64,
    pub delta_prime: f64,
}

impl DiskWindow {
    pub fn new(center: f64, delta: f64, delta_prime: f64) -> Result<Self> {
        if !center.is_finite() || !(delta_prime > 0.0 && delta_prime < delta) {
            return Err(Error::InvalidInput(format!(
                "disk window needs finite center and 0 < δ' < δ, got E = {center}, δ = {delta}, δ' = {delta_prime}"
            )));
        }
        Ok(Self {
            center,
            delta,
            delta_prime,
        })
    }

    /// Window with `δ' = δ/2`.
    pub fn halved(center: f64, delta: f64) -> Result<Self> {
        Self::new(center, delta, 0.5 * delta)
    }

    pub fn gap(&self) -> f64 {
        self.delta - self.delta_prime
    }
}

/// Which half-plane one argument of a mixed moment comes from, and the
/// disk through which it is continued, if any.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub sheet: Sheet,
    pub window: Option<DiskWindow>,
}

impl Branch {
    pub fn upper(window: Option<DiskWindow>) -> Self {
        Self {
            sheet: Sheet::Upper,
            window,
        }
    }

    pub fn lower(window: Option<DiskWindow>) -> Self {
        Self {
            sheet: Sheet::Lower,
            window,
        }
    }

    fn required_side(&self) -> Side {
        match self.sheet {
            Sheet::Upper => Side::Above,
            Sheet::Lower => Side::Below,
        }
    }
}

/// The support line with a dip below each upper-sheet window and a bump
/// above each lower-sheet window.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedContour {
    line: DeformedLine,
    branches: [Branch; 2],
    bound_constant: f64,
}

impl MixedContour {
    pub fn new(dist: &Distribution, first: Branch, second: Branch) -> Result<Self> {
        let mut detours = Vec::new();
        for branch in [first, second] {
            if let Some(w) = branch.window {
                detours.push(Detour {
                    left: w.center,
                    right: w.center,
                    radius: w.delta,
                    side: match branch.sheet {
                        Sheet::Upper => Side::Below,
                        Sheet::Lower => Side::Above,
                    },
                });
            }
        }
        let (lo, hi) = dist.support();
        let line = DeformedLine::new(lo, hi, detours).map_err(|e| match e {
            Error::Geometry(msg) => Error::Geometry(format!(
                "disk windows must be disjoint and inside the support: {msg}"
            )),
            other => other,
        })?;
        let bound_constant = bound_constant_for(dist, &line);
        Ok(Self {
            line,
            branches: [first, second],
            bound_constant,
        })
    }

    pub fn bound_constant(&self) -> f64 {
        self.bound_constant
    }

    pub fn branches(&self) -> [Branch; 2] {
        self.branches
    }

    pub fn line(&self) -> &DeformedLine {
        &self.line
    }

    fn check_side(&self, index: usize, z: Complex64) -> Result<f64> {
        let branch = &self.branches[index];
        if self.line.side_of(z) != Some(branch.required_side()) {
            return Err(Error::Geometry(format!(
                "z{} = {z} is on the wrong side of the contour for its {:?} sheet",
                index + 1,
                branch.sheet
            )));
        }
        Ok(self.line.distance(z))
    }

    /// Geometry check for evaluation: each point on its side of the
    /// contour, windowed points at least `(δ - δ')/2` away.
    pub fn check(&self, z1: Complex64, z2: Complex64) -> Result<()> {
        for (i, z) in [z1, z2].into_iter().enumerate() {
            let dist = self.check_side(i, z)?;
            if let Some(w) = self.branches[i].window {
                if dist < 0.5 * w.gap() {
                    return Err(Error::Geometry(format!(
                        "z{} = {z} is {dist:.3e} from the contour, closer than (δ - δ')/2",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Distance `g` for the bound `|B_{k,ℓ}| ≤ C g^{-k-ℓ}`: `δ - δ'` for a
    /// windowed argument (which must then lie that far from the contour),
    /// the actual distance to the contour otherwise.
    pub fn certified_gap(&self, z1: Complex64, z2: Complex64) -> Result<f64> {
        let mut gap = f64::INFINITY;
        for (i, z) in [z1, z2].into_iter().enumerate() {
            let dist = self.check_side(i, z)?;
            match self.branches[i].window {
                Some(w) => {
                    if dist < w.gap() {
                        return Err(Error::Geometry(format!(
                            "z{} = {z} is {dist:.3e} from the contour, closer than δ - δ' = {:.3e}",
                            i + 1,
                            w.gap()
                        )));
                    }
                    gap = gap.min(w.gap());
                }
                None => gap = gap.min(dist),
            }
        }
        Ok(gap)
    }
}

/// Mixed moments `B_{k,ℓ}` for `k ≤ K`, `ℓ ≤ L` at one pair of energies.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedMomentTable {
    pub z1: Complex64,
    pub z2: Complex64,
    max_l: usize,
    values: Vec<Complex64>,
}

impl MixedMomentTable {
    pub fn build(
        dist: &Distribution,
        contour: &MixedContour,
        max_k: u32,
        max_l: u32,
        z1: Complex64,
        z2: Complex64,
    ) -> Result<Self> {
        contour.check(z1, z2)?;
        let (nk, nl) = (max_k as usize + 1, max_l as usize + 1);
        let f = |w: Complex64, out: &mut [Complex64]| {
            let u = 1.0 / (w - z1);
            let v = 1.0 / (w - z2);
            let mut row = dist.density_ext(w);
            for k in 0..nk {
                let mut acc = row;
                for slot in &mut out[k * nl..(k + 1) * nl] {
                    *slot = acc;
                    acc *= v;
                }
                row *= u;
            }
        };
        let mut values =
            contour
                .line
                .integrate(nk * nl, &f, &QuadratureRule::default(), &[z1, z2])?;
        values[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            z1,
            z2,
            max_l: max_l as usize,
            values,
        })
    }

    #[inline]
    pub fn get(&self, k: u32, l: u32) -> Complex64 {
        self.values[k as usize * (self.max_l + 1) + l as usize]
    }
}

/// Continued `B_{k,ℓ}(z₁, z₂)`.
pub fn mixed_moment(
    dist: &Distribution,
    contour: &MixedContour,
    k: u32,
    l: u32,
    z1: Complex64,
    z2: Complex64,
) -> Result<Complex64> {
    Ok(MixedMomentTable::build(dist, contour, k, l, z1, z2)?.get(k, l))
}
