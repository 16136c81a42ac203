//! Nearest-neighbour walks on `Z^d`.
//!
//! Walks are enumerated depth-first in lexicographic order of step
//! directions (`+e_0, -e_0, +e_1, -e_1, ...`). Two prunes keep the search
//! exact: a parity check at the root and a distance check at every node
//! (a branch dies when the remaining steps cannot reach the endpoint).
//! Visit profiles are maintained incrementally along the search.
//!
//! Parallel folds partition the walk set by a prefix of fixed depth that
//! depends only on the dimension. Each partition is summed privately and
//! the partials are combined in prefix order, so the result does not
//! depend on the number of worker threads.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest lattice dimension supported.
pub const MAX_DIM: usize = 4;

/// Minimum number of prefix partitions a parallel fold aims for.
const TARGET_PARTITIONS: usize = 64;

/// A point of `Z^d`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticeSite {
    coords: [i32; MAX_DIM],
    dim: u8,
}

impl LatticeSite {
    pub fn new(coords: &[i32]) -> Result<Self> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(Error::InvalidInput(format!(
                "site dimension {} outside 1..={MAX_DIM}",
                coords.len()
            )));
        }
        let mut packed = [0; MAX_DIM];
        packed[..coords.len()].copy_from_slice(coords);
        Ok(Self {
            coords: packed,
            dim: coords.len() as u8,
        })
    }

    pub fn origin(dim: usize) -> Result<Self> {
        Self::new(&vec![0; dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim()]
    }

    /// Neighbour in direction `dir`, where `dir = 2 * axis` is the positive
    /// step along `axis` and `dir = 2 * axis + 1` the negative one.
    #[inline]
    pub fn step(&self, dir: usize) -> Self {
        let mut next = *self;
        next.coords[dir / 2] += if dir.is_multiple_of(2) { 1 } else { -1 };
        next
    }

    pub fn l1_distance(&self, other: &Self) -> u64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (i64::from(*a) - i64::from(*b)).unsigned_abs())
            .sum()
    }

    pub fn sup_distance(&self, other: &Self) -> u64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (i64::from(*a) - i64::from(*b)).unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    /// Number of nearest-neighbour steps needed to enter the sup-norm box of
    /// radius `radius` around `center`.
    pub fn steps_to_box(&self, center: &Self, radius: u64) -> u64 {
        self.coords()
            .iter()
            .zip(center.coords())
            .map(|(a, b)| {
                (i64::from(*a) - i64::from(*b))
                    .unsigned_abs()
                    .saturating_sub(radius)
            })
            .sum()
    }

    /// All sites of the sup-norm box of radius `radius` around `self`, in
    /// lexicographic coordinate order.
    pub fn box_around(&self, radius: u32) -> Vec<LatticeSite> {
        let d = self.dim();
        let r = radius as i32;
        let mut out = Vec::new();
        let mut offset = vec![-r; d];
        loop {
            let mut site = *self;
            for (axis, o) in offset.iter().enumerate() {
                site.coords[axis] += o;
            }
            out.push(site);
            let mut axis = d;
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                if offset[axis] < r {
                    offset[axis] += 1;
                    offset[axis + 1..].iter_mut().for_each(|o| *o = -r);
                    break;
                }
            }
        }
    }

    fn check_dim(&self, d: usize, what: &str) -> Result<()> {
        if self.dim() != d {
            return Err(Error::InvalidInput(format!(
                "{what} has dimension {}, expected {d}",
                self.dim()
            )));
        }
        Ok(())
    }
}

impl fmt::Debug for LatticeSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for LatticeSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for LatticeSite {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LatticeSite {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let coords = Vec::<i32>::deserialize(d)?;
        LatticeSite::new(&coords).map_err(serde::de::Error::custom)
    }
}

/// A nearest-neighbour walk `(n_0, ..., n_k)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkPath {
    sites: Vec<LatticeSite>,
}

impl WalkPath {
    pub fn new(sites: Vec<LatticeSite>) -> Result<Self> {
        let Some(first) = sites.first() else {
            return Err(Error::InvalidInput("a walk visits at least one site".into()));
        };
        let d = first.dim();
        for pair in sites.windows(2) {
            pair[1].check_dim(d, "walk site")?;
            if pair[0].l1_distance(&pair[1]) != 1 {
                return Err(Error::InvalidInput(format!(
                    "{} -> {} is not a nearest-neighbour step",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(Self { sites })
    }

    /// Number of steps `k`.
    pub fn len(&self) -> usize {
        self.sites.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sites(&self) -> &[LatticeSite] {
        &self.sites
    }

    pub fn start(&self) -> LatticeSite {
        self.sites[0]
    }

    pub fn end(&self) -> LatticeSite {
        self.sites[self.sites.len() - 1]
    }
}

/// Per-site visit counts of a walk, in order of first visit.
///
/// Every index `j = 0..=k` is counted, so a walk of length `k` has
/// `total() == k + 1`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VisitProfile {
    entries: Vec<(LatticeSite, u32)>,
    total: u32,
}

impl VisitProfile {
    pub fn from_sites(sites: &[LatticeSite]) -> Self {
        let mut profile = Self::default();
        for site in sites {
            profile.enter(*site);
        }
        profile
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    /// Number of distinct sites visited.
    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    pub fn count(&self, site: &LatticeSite) -> u32 {
        self.entries
            .iter()
            .find(|(s, _)| s == site)
            .map_or(0, |(_, c)| *c)
    }

    pub fn iter(&self) -> impl Iterator<Item = (LatticeSite, u32)> + '_ {
        self.entries.iter().copied()
    }

    /// Visit counts without their sites.
    pub fn multiplicities(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|(_, c)| *c)
    }

    #[inline]
    fn enter(&mut self, site: LatticeSite) {
        self.total += 1;
        match self.entries.iter_mut().find(|(s, _)| *s == site) {
            Some((_, c)) => *c += 1,
            None => self.entries.push((site, 1)),
        }
    }

    // Walks are unwound in LIFO order, so an entry whose count drops to zero
    // is always the most recently added one.
    #[inline]
    fn leave(&mut self, site: LatticeSite) {
        self.total -= 1;
        let pos = self
            .entries
            .iter()
            .rposition(|(s, _)| *s == site)
            .expect("leaving a site that was never entered");
        self.entries[pos].1 -= 1;
        if self.entries[pos].1 == 0 {
            debug_assert_eq!(pos, self.entries.len() - 1);
            self.entries.pop();
        }
    }
}

pub fn visit_profile(path: &WalkPath) -> VisitProfile {
    VisitProfile::from_sites(path.sites())
}

/// Hard caps on walk length per dimension; enumeration beyond them fails
/// with [`Error::Capacity`] instead of running for hours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkLimits {
    pub max_len: [usize; MAX_DIM],
}

impl Default for WalkLimits {
    fn default() -> Self {
        Self {
            max_len: [24, 14, 10, 8],
        }
    }
}

impl WalkLimits {
    pub fn max_len(&self, d: usize) -> usize {
        self.max_len[d - 1]
    }

    pub fn check(&self, d: usize, k: usize) -> Result<()> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::Capacity(format!(
                "dimension {d} outside supported range 1..={MAX_DIM}"
            )));
        }
        if k > self.max_len(d) {
            return Err(Error::Capacity(format!(
                "walk length {k} exceeds the cap {} for d = {d}",
                self.max_len(d)
            )));
        }
        Ok(())
    }
}

fn prefix_depth(d: usize, k: usize) -> usize {
    let mut depth = 0;
    let mut partitions = 1;
    while partitions < TARGET_PARTITIONS {
        partitions *= 2 * d;
        depth += 1;
    }
    depth.min(k)
}

/// Search state shared by the enumerators: the current walk and its profile.
#[derive(Clone)]
struct Cursor {
    path: Vec<LatticeSite>,
    profile: VisitProfile,
}

impl Cursor {
    fn new(start: LatticeSite, capacity: usize) -> Self {
        let mut path = Vec::with_capacity(capacity);
        path.push(start);
        let mut profile = VisitProfile::default();
        profile.enter(start);
        Self { path, profile }
    }

    fn from_prefix(prefix: &[LatticeSite], capacity: usize) -> Self {
        let mut path = Vec::with_capacity(capacity);
        path.extend_from_slice(prefix);
        Self {
            path,
            profile: VisitProfile::from_sites(prefix),
        }
    }

    #[inline]
    fn head(&self) -> LatticeSite {
        self.path[self.path.len() - 1]
    }

    #[inline]
    fn push(&mut self, site: LatticeSite) {
        self.path.push(site);
        self.profile.enter(site);
    }

    #[inline]
    fn pop(&mut self) {
        let site = self.path.pop().expect("pop on empty walk");
        self.profile.leave(site);
    }
}

/// Depth-first walk from the cursor head to `end` in exactly `remaining`
/// steps; `leaf` sees every completed walk.
fn descend<F>(cursor: &mut Cursor, end: &LatticeSite, remaining: usize, leaf: &mut F)
where
    F: FnMut(&[LatticeSite], &VisitProfile),
{
    let head = cursor.head();
    if remaining == 0 {
        if head == *end {
            leaf(&cursor.path, &cursor.profile);
        }
        return;
    }
    let reach = (remaining - 1) as u64;
    for dir in 0..2 * head.dim() {
        let next = head.step(dir);
        if next.l1_distance(end) > reach {
            continue;
        }
        cursor.push(next);
        descend(cursor, end, remaining - 1, leaf);
        cursor.pop();
    }
}

fn validate_endpoints(
    d: usize,
    k: usize,
    start: &LatticeSite,
    end: &LatticeSite,
    limits: &WalkLimits,
) -> Result<()> {
    limits.check(d, k)?;
    start.check_dim(d, "start")?;
    end.check_dim(d, "end")?;
    let reach = k as i64 + 1;
    for c in start.coords().iter().chain(end.coords()) {
        if i64::from(c.unsigned_abs()) + reach >= i64::from(i32::MAX) {
            return Err(Error::Capacity(format!("coordinate {c} too large")));
        }
    }
    Ok(())
}

/// `true` when no walk of length `k` joins the endpoints.
fn unreachable(k: usize, start: &LatticeSite, end: &LatticeSite) -> bool {
    let dist = start.l1_distance(end);
    dist > k as u64 || (dist + k as u64) % 2 == 1
}

/// Calls `visitor(path, profile)` once for every walk in `Γ_k(start, end)`,
/// in lexicographic order of step directions.
pub fn enumerate_paths<F>(
    d: usize,
    k: usize,
    start: &LatticeSite,
    end: &LatticeSite,
    limits: &WalkLimits,
    mut visitor: F,
) -> Result<()>
where
    F: FnMut(&[LatticeSite], &VisitProfile),
{
    validate_endpoints(d, k, start, end, limits)?;
    if unreachable(k, start, end) {
        return Ok(());
    }
    let mut cursor = Cursor::new(*start, k + 1);
    descend(&mut cursor, end, k, &mut visitor);
    Ok(())
}

/// All walk prefixes of `depth` steps from `start` that can still reach
/// `end` within `k` total steps, in enumeration order.
fn prefixes(start: &LatticeSite, end: &LatticeSite, k: usize, depth: usize) -> Vec<Vec<LatticeSite>> {
    fn grow(
        cursor: &mut Cursor,
        end: &LatticeSite,
        left_after: usize,
        depth: usize,
        out: &mut Vec<Vec<LatticeSite>>,
    ) {
        if depth == 0 {
            out.push(cursor.path.clone());
            return;
        }
        let head = cursor.head();
        for dir in 0..2 * head.dim() {
            let next = head.step(dir);
            if next.l1_distance(end) > (left_after + depth - 1) as u64 {
                continue;
            }
            cursor.push(next);
            grow(cursor, end, left_after, depth - 1, out);
            cursor.pop();
        }
    }
    let mut out = Vec::new();
    let mut cursor = Cursor::new(*start, depth + 1);
    grow(&mut cursor, end, k - depth, depth, &mut out);
    out
}

/// Parallel fold over `Γ_k(start, end)` with a fixed, worker-independent
/// partition. `leaf` accumulates into a per-partition value; partials are
/// merged left to right with `merge`.
fn partitioned_fold<A, L, M>(
    d: usize,
    k: usize,
    start: &LatticeSite,
    end: &LatticeSite,
    leaf: L,
    merge: M,
) -> A
where
    A: Default + Send,
    L: Fn(&mut A, &[LatticeSite], &VisitProfile) + Sync,
    M: Fn(A, A) -> A,
{
    let depth = prefix_depth(d, k);
    let parts = prefixes(start, end, k, depth);
    let partials: Vec<A> = parts
        .par_iter()
        .map(|prefix| {
            let mut acc = A::default();
            let mut cursor = Cursor::from_prefix(prefix, k + 1);
            descend(&mut cursor, end, k - depth, &mut |path, profile| {
                leaf(&mut acc, path, profile)
            });
            acc
        })
        .collect();
    partials.into_iter().fold(A::default(), merge)
}

/// `Σ_{γ ∈ Γ_k(start, end)} weight(profile(γ))`.
pub fn fold_paths<W>(
    d: usize,
    k: usize,
    start: &LatticeSite,
    end: &LatticeSite,
    limits: &WalkLimits,
    weight: W,
) -> Result<Complex64>
where
    W: Fn(&VisitProfile) -> Complex64 + Sync,
{
    validate_endpoints(d, k, start, end, limits)?;
    if unreachable(k, start, end) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(partitioned_fold(
        d,
        k,
        start,
        end,
        |acc: &mut Complex64, _, profile| *acc += weight(profile),
        |a, b| a + b,
    ))
}

/// `#Γ_k(start, end)`.
pub fn count_paths(
    d: usize,
    k: usize,
    start: &LatticeSite,
    end: &LatticeSite,
    limits: &WalkLimits,
) -> Result<u64> {
    validate_endpoints(d, k, start, end, limits)?;
    if unreachable(k, start, end) {
        return Ok(0);
    }
    Ok(partitioned_fold(
        d,
        k,
        start,
        end,
        |acc: &mut u64, _, _| *acc += 1,
        |a, b| a + b,
    ))
}

/// One element of `Γ_{k,ℓ}(n, m)` as seen by a correlation weight: the two
/// leg profiles and the four junction sites `n_k, m_0, m_ℓ, m_{ℓ+1}`.
#[derive(Clone, Copy, Debug)]
pub struct CorrelationPath<'a> {
    pub first_leg: &'a VisitProfile,
    pub second_leg: &'a VisitProfile,
    pub first_end: LatticeSite,
    pub second_start: LatticeSite,
    pub second_end: LatticeSite,
    pub terminal: LatticeSite,
}

struct CorrelationSearch<'a, W> {
    end: LatticeSite,
    second_len: usize,
    radius: u32,
    weight: &'a W,
}

impl<W> CorrelationSearch<'_, W>
where
    W: Fn(&CorrelationPath<'_>) -> Complex64,
{
    /// Can a walk at `site` with `first_left` first-leg steps still finish?
    fn feasible(&self, site: &LatticeSite, first_left: usize) -> bool {
        let budget = (first_left + self.second_len) as u64;
        let needed = site.steps_to_box(&self.end, 2 * u64::from(self.radius));
        if needed > budget {
            return false;
        }
        // Without jumps the total step count fixes the parity.
        self.radius > 0 || (site.l1_distance(&self.end) + budget).is_multiple_of(2)
    }

    fn first_leg(&self, leg: &mut Cursor, first_left: usize, acc: &mut Complex64) {
        if first_left == 0 {
            self.junction(leg, acc);
            return;
        }
        let head = leg.head();
        for dir in 0..2 * head.dim() {
            let next = head.step(dir);
            if !self.feasible(&next, first_left - 1) {
                continue;
            }
            leg.push(next);
            self.first_leg(leg, first_left - 1, acc);
            leg.pop();
        }
    }

    fn junction(&self, leg: &Cursor, acc: &mut Complex64) {
        let first_end = leg.head();
        let radius = u64::from(self.radius);
        for second_start in first_end.box_around(self.radius) {
            if second_start.steps_to_box(&self.end, radius) > self.second_len as u64 {
                continue;
            }
            let mut second = Cursor::new(second_start, self.second_len + 1);
            self.second_leg(leg, &mut second, self.second_len, first_end, second_start, acc);
        }
    }

    fn second_leg(
        &self,
        first: &Cursor,
        second: &mut Cursor,
        left: usize,
        first_end: LatticeSite,
        second_start: LatticeSite,
        acc: &mut Complex64,
    ) {
        let head = second.head();
        let radius = u64::from(self.radius);
        if left == 0 {
            if head.sup_distance(&self.end) <= radius {
                *acc += (self.weight)(&CorrelationPath {
                    first_leg: &first.profile,
                    second_leg: &second.profile,
                    first_end,
                    second_start,
                    second_end: head,
                    terminal: self.end,
                });
            }
            return;
        }
        for dir in 0..2 * head.dim() {
            let next = head.step(dir);
            if next.steps_to_box(&self.end, radius) > (left - 1) as u64 {
                continue;
            }
            second.push(next);
            self.second_leg(first, second, left - 1, first_end, second_start, acc);
            second.pop();
        }
    }
}

/// `Σ_{γ ∈ Γ_{k,ℓ}(start, end)} weight(γ)`, where the first leg is a walk of
/// `k` steps from `start`, the second a walk of `ℓ` steps, and both
/// junctions are jumps of sup-norm length at most `radius`.
#[allow(clippy::too_many_arguments)]
pub fn fold_correlation_paths<W>(
    d: usize,
    k: usize,
    l: usize,
    radius: u32,
    start: &LatticeSite,
    end: &LatticeSite,
    limits: &WalkLimits,
    weight: W,
) -> Result<Complex64>
where
    W: Fn(&CorrelationPath<'_>) -> Complex64 + Sync,
{
    validate_endpoints(d, k, start, end, limits)?;
    validate_endpoints(d, l, start, end, limits)?;
    let search = CorrelationSearch {
        end: *end,
        second_len: l,
        radius,
        weight: &weight,
    };
    if !search.feasible(start, k) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let depth = prefix_depth(d, k);
    let mut parts = Vec::new();
    collect_feasible_prefixes(&search, &mut Cursor::new(*start, depth + 1), k, depth, &mut parts);
    let partials: Vec<Complex64> = parts
        .par_iter()
        .map(|prefix| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut leg = Cursor::from_prefix(prefix, k + 1);
            search.first_leg(&mut leg, k - depth, &mut acc);
            acc
        })
        .collect();
    Ok(partials.into_iter().fold(Complex64::new(0.0, 0.0), |a, b| a + b))
}

fn collect_feasible_prefixes<W>(
    search: &CorrelationSearch<'_, W>,
    cursor: &mut Cursor,
    first_left: usize,
    depth: usize,
    out: &mut Vec<Vec<LatticeSite>>,
) where
    W: Fn(&CorrelationPath<'_>) -> Complex64,
{
    if depth == 0 {
        out.push(cursor.path.clone());
        return;
    }
    let head = cursor.head();
    for dir in 0..2 * head.dim() {
        let next = head.step(dir);
        if !search.feasible(&next, first_left - 1) {
            continue;
        }
        cursor.push(next);
        collect_feasible_prefixes(search, cursor, first_left - 1, depth - 1, out);
        cursor.pop();
    }
}
