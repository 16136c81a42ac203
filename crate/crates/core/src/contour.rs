//! Integration contours made of segments and circular arcs, and adaptive
//! Gauss–Legendre quadrature along them.
//!
//! The contours used by the moment engine are deformations of a real
//! interval `[lo, hi]` (the support of the single-site law): the line is
//! pushed below or above the real axis around chosen sub-intervals. Each
//! push is a stadium boundary of radius `r` around `[left, right]`: a
//! quarter arc, a horizontal segment at height `∓r`, and a second quarter
//! arc. A point interval gives a semicircle.

use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;

use crate::error::{Error, Result};

const GL_ORDER: usize = 20;

fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let rule = GaussLegendre::new(NonZeroUsize::new(GL_ORDER).unwrap());
        let mut pairs: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs
    })
}

/// One smooth piece of a contour.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Piece {
    Segment { from: Complex64, to: Complex64 },
    /// `center + radius·e^{iθ}` for `θ` running from `from_angle` to `to_angle`.
    Arc {
        center: Complex64,
        radius: f64,
        from_angle: f64,
        to_angle: f64,
    },
}

impl Piece {
    pub fn length(&self) -> f64 {
        match *self {
            Piece::Segment { from, to } => (to - from).norm(),
            Piece::Arc {
                radius,
                from_angle,
                to_angle,
                ..
            } => radius * (to_angle - from_angle).abs(),
        }
    }

    /// Point and derivative at parameter `t ∈ [0, 1]`.
    #[inline]
    pub fn eval(&self, t: f64) -> (Complex64, Complex64) {
        match *self {
            Piece::Segment { from, to } => (from + (to - from) * t, to - from),
            Piece::Arc {
                center,
                radius,
                from_angle,
                to_angle,
            } => {
                let span = to_angle - from_angle;
                let e = Complex64::from_polar(radius, from_angle + span * t);
                (center + e, Complex64::i() * e * span)
            }
        }
    }

    pub fn start(&self) -> Complex64 {
        self.eval(0.0).0
    }

    pub fn end(&self) -> Complex64 {
        self.eval(1.0).0
    }

    pub fn distance(&self, z: Complex64) -> f64 {
        match *self {
            Piece::Segment { from, to } => {
                let dir = to - from;
                let len2 = dir.norm_sqr();
                if len2 == 0.0 {
                    return (z - from).norm();
                }
                let t = ((z - from) * dir.conj()).re / len2;
                let t = t.clamp(0.0, 1.0);
                (z - (from + dir * t)).norm()
            }
            Piece::Arc {
                center,
                radius,
                from_angle,
                to_angle,
            } => {
                let rel = z - center;
                let (lo, hi) = if from_angle <= to_angle {
                    (from_angle, to_angle)
                } else {
                    (to_angle, from_angle)
                };
                let mut theta = rel.arg();
                while theta < lo {
                    theta += 2.0 * PI;
                }
                while theta > lo + 2.0 * PI {
                    theta -= 2.0 * PI;
                }
                if theta <= hi {
                    (rel.norm() - radius).abs()
                } else {
                    (z - self.start()).norm().min((z - self.end()).norm())
                }
            }
        }
    }

    /// Parameter of the point of the piece nearest to `z`, if it is interior.
    fn nearest_parameter(&self, z: Complex64) -> Option<f64> {
        match *self {
            Piece::Segment { from, to } => {
                let dir = to - from;
                let len2 = dir.norm_sqr();
                if len2 == 0.0 {
                    return None;
                }
                let t = ((z - from) * dir.conj()).re / len2;
                (t > 0.0 && t < 1.0).then_some(t)
            }
            Piece::Arc {
                center,
                from_angle,
                to_angle,
                ..
            } => {
                let theta = (z - center).arg();
                let span = to_angle - from_angle;
                [-2.0 * PI, 0.0, 2.0 * PI]
                    .into_iter()
                    .map(|shift| (theta + shift - from_angle) / span)
                    .find(|t| *t > 0.0 && *t < 1.0)
            }
        }
    }
}

/// Convergence controls for piecewise adaptive quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureRule {
    /// Absolute change below which refinement stops.
    pub abs_tol: f64,
    /// Change relative to `∫|f||dw|` below which refinement stops.
    pub rel_tol: f64,
    /// Node budget per piece.
    pub max_nodes: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self {
            abs_tol: 1e-11,
            rel_tol: 1e-14,
            max_nodes: 1 << 14,
        }
    }
}

/// Sum of a vector-valued integrand over the panels `[bps[i], bps[i+1]]`,
/// each split into `split` equal sub-panels. Returns values and `∫|f|`.
fn panel_sum<F>(
    piece: &Piece,
    breakpoints: &[f64],
    split: usize,
    dim: usize,
    f: &F,
    scratch: &mut [Complex64],
) -> (Vec<Complex64>, Vec<f64>)
where
    F: Fn(Complex64, &mut [Complex64]),
{
    let rule = gauss_legendre();
    let mut total = vec![Complex64::new(0.0, 0.0); dim];
    let mut mass = vec![0.0; dim];
    for pair in breakpoints.windows(2) {
        let width = (pair[1] - pair[0]) / split as f64;
        for s in 0..split {
            let a = pair[0] + width * s as f64;
            let half = 0.5 * width;
            let mid = a + half;
            for &(x, w) in rule {
                let (point, deriv) = piece.eval(mid + half * x);
                f(point, scratch);
                let jac = deriv * (w * half);
                for c in 0..dim {
                    let term = scratch[c] * jac;
                    total[c] += term;
                    mass[c] += term.norm();
                }
            }
        }
    }
    (total, mass)
}

/// Integrates `f` (writing `dim` components into its buffer) along one
/// piece, doubling the panel count until every component is stable.
/// `hints` are points whose nearest location on the piece becomes a panel
/// breakpoint.
pub fn integrate_piece<F>(
    piece: &Piece,
    dim: usize,
    f: &F,
    rule: &QuadratureRule,
    hints: &[Complex64],
) -> Result<Vec<Complex64>>
where
    F: Fn(Complex64, &mut [Complex64]),
{
    let mut breakpoints = vec![0.0, 1.0];
    for h in hints {
        if let Some(t) = piece.nearest_parameter(*h) {
            breakpoints.push(t);
        }
    }
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut scratch = vec![Complex64::new(0.0, 0.0); dim];
    let panels = breakpoints.len() - 1;
    let mut split = 2;
    let (mut previous, _) = panel_sum(piece, &breakpoints, split, dim, f, &mut scratch);
    loop {
        split *= 2;
        let nodes = split * panels * GL_ORDER;
        let (current, mass) = panel_sum(piece, &breakpoints, split, dim, f, &mut scratch);
        let mut worst: f64 = 0.0;
        let mut converged = true;
        for c in 0..dim {
            let change = (current[c] - previous[c]).norm();
            worst = worst.max(change);
            if change > rule.abs_tol.max(rule.rel_tol * mass[c]) {
                converged = false;
            }
        }
        if converged {
            return Ok(current);
        }
        if 2 * nodes > rule.max_nodes {
            return Err(Error::Quadrature {
                nodes,
                change: worst,
            });
        }
        previous = current;
    }
}

/// Direction of a detour off the real axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

/// A stadium-shaped push of the real line around `[left, right]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detour {
    pub left: f64,
    pub right: f64,
    pub radius: f64,
    pub side: Side,
}

impl Detour {
    pub fn length(&self) -> f64 {
        (self.right - self.left) + PI * self.radius
    }

    /// Points on the detour, `per_piece` per smooth piece, endpoints included.
    pub fn samples(&self, per_piece: usize) -> Vec<Complex64> {
        let n = per_piece.max(2);
        self.pieces()
            .iter()
            .flat_map(|p| (0..n).map(move |i| p.eval(i as f64 / (n - 1) as f64).0))
            .collect()
    }

    fn pieces(&self) -> Vec<Piece> {
        let (left, right, r) = (self.left, self.right, self.radius);
        let (start, turn, finish, height) = match self.side {
            Side::Below => (PI, 1.5 * PI, 2.0 * PI, -r),
            Side::Above => (PI, 0.5 * PI, 0.0, r),
        };
        let mut out = vec![Piece::Arc {
            center: Complex64::new(left, 0.0),
            radius: r,
            from_angle: start,
            to_angle: turn,
        }];
        if right > left {
            out.push(Piece::Segment {
                from: Complex64::new(left, height),
                to: Complex64::new(right, height),
            });
        }
        out.push(Piece::Arc {
            center: Complex64::new(right, 0.0),
            radius: r,
            from_angle: turn,
            to_angle: finish,
        });
        out
    }

    fn height(&self, x: f64) -> Option<f64> {
        let r = self.radius;
        let sign = match self.side {
            Side::Below => -1.0,
            Side::Above => 1.0,
        };
        if x < self.left - r || x > self.right + r {
            None
        } else if x < self.left {
            Some(sign * (r * r - (x - self.left).powi(2)).max(0.0).sqrt())
        } else if x > self.right {
            Some(sign * (r * r - (x - self.right).powi(2)).max(0.0).sqrt())
        } else {
            Some(sign * r)
        }
    }
}

/// The support interval `[lo, hi]` with disjoint detours, traversed left to
/// right.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformedLine {
    lo: f64,
    hi: f64,
    detours: Vec<Detour>,
    pieces: Vec<Piece>,
}

impl DeformedLine {
    pub fn new(lo: f64, hi: f64, mut detours: Vec<Detour>) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Geometry(format!("empty support [{lo}, {hi}]")));
        }
        detours.sort_by(|a, b| a.left.total_cmp(&b.left));
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        let mut cursor = lo;
        let mut pieces = Vec::new();
        for d in &detours {
            if !(d.radius > 0.0) || d.right < d.left {
                return Err(Error::Geometry(format!("degenerate detour {d:?}")));
            }
            let (from, to) = (d.left - d.radius, d.right + d.radius);
            if from < cursor - slack {
                return Err(Error::Geometry(format!(
                    "detour around [{}, {}] with radius {} leaves the support or overlaps another",
                    d.left, d.right, d.radius
                )));
            }
            if from > cursor {
                pieces.push(Piece::Segment {
                    from: Complex64::new(cursor, 0.0),
                    to: Complex64::new(from, 0.0),
                });
            }
            pieces.extend(d.pieces());
            cursor = to;
        }
        if cursor > hi + slack {
            return Err(Error::Geometry(format!(
                "detour reaches {cursor}, beyond the support edge {hi}"
            )));
        }
        if hi > cursor {
            pieces.push(Piece::Segment {
                from: Complex64::new(cursor, 0.0),
                to: Complex64::new(hi, 0.0),
            });
        }
        Ok(Self {
            lo,
            hi,
            detours,
            pieces,
        })
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn detours(&self) -> &[Detour] {
        &self.detours
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Height of the contour above `x` (zero on undeformed stretches and
    /// outside the support).
    pub fn height(&self, x: f64) -> f64 {
        self.detours
            .iter()
            .find_map(|d| d.height(x))
            .unwrap_or(0.0)
    }

    /// `Some(Side)` telling which side of the contour `z` lies on; `None`
    /// for points on the contour or on the real axis outside the support.
    pub fn side_of(&self, z: Complex64) -> Option<Side> {
        let c = self.height(z.re);
        if z.im > c {
            Some(Side::Above)
        } else if z.im < c {
            Some(Side::Below)
        } else {
            None
        }
    }

    pub fn distance(&self, z: Complex64) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.distance(z))
            .fold(f64::INFINITY, f64::min)
    }

    /// Integrates a vector-valued `f` over the whole contour.
    pub fn integrate<F>(
        &self,
        dim: usize,
        f: &F,
        rule: &QuadratureRule,
        hints: &[Complex64],
    ) -> Result<Vec<Complex64>>
    where
        F: Fn(Complex64, &mut [Complex64]),
    {
        let mut total = vec![Complex64::new(0.0, 0.0); dim];
        for piece in &self.pieces {
            let part = integrate_piece(piece, dim, f, rule, hints)?;
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        }
        Ok(total)
    }
}
