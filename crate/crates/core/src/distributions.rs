//! Exact finitely-supported distributions and the checks built on them.
//!
//! Masses are integer counts over a shared denominator, so enumeration,
//! binning and every comparison below are exact. The output law of a sampler
//! driven by an `N`-value generator is obtained by pushing all `N^q` generator
//! tuples through the sampler ([`pushforward`]).

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::OnceLock;

use num_integer::Integer;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{distance, NormKind, Point, Region};
use crate::numrep::{Mass, UniformGeneratorModel};

/// Default cap on the number of enumerated generator tuples.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 26;

/// Environment variable overriding [`DEFAULT_ENUMERATION_CAP`].
pub const ENUMERATION_CAP_ENV: &str = "FPDP_ENUMERATION_CAP";

pub fn enumeration_cap() -> u128 {
    static CAP: OnceLock<u128> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var(ENUMERATION_CAP_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_ENUMERATION_CAP)
    })
}

/// Index of a rounding cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    dim: u8,
    idx: [i64; 2],
}

impl Cell {
    pub fn new1(i: i64) -> Self {
        Self {
            dim: 1,
            idx: [i, 0],
        }
    }

    pub fn new2(i: i64, j: i64) -> Self {
        Self {
            dim: 2,
            idx: [i, j],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn index(&self) -> &[i64] {
        &self.idx[..self.dim as usize]
    }
}

impl Serialize for Cell {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        self.index().serialize(serializer)
    }
}

/// Where an atom sits: a point, a rounding cell, or one of the exception
/// values reported by truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Location {
    Point(Point),
    Cell(Cell),
    /// The unsigned exception value `∞`.
    Exception,
    NegInfinity,
    PosInfinity,
}

impl Location {
    pub fn is_exception(&self) -> bool {
        matches!(
            self,
            Location::Exception | Location::NegInfinity | Location::PosInfinity
        )
    }
}

impl Serialize for Location {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            Location::Point(p) => p.serialize(serializer),
            Location::Cell(c) => {
                let mut m = serializer.serialize_map(Some(1))?;
                m.serialize_entry("cell", c)?;
                m.end()
            }
            Location::Exception => serializer.serialize_str("exception"),
            Location::NegInfinity => serializer.serialize_str("-inf"),
            Location::PosInfinity => serializer.serialize_str("+inf"),
        }
    }
}

/// Finitely supported probability distribution with exact rational masses.
///
/// Atoms are sorted by location, distinct, and carry positive counts that sum
/// to the denominator exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiscreteDistribution {
    atoms: Vec<(Location, u64)>,
    denominator: u64,
}

impl DiscreteDistribution {
    /// Aggregates repeated locations and drops zero counts.
    pub fn from_counts(
        counts: impl IntoIterator<Item = (Location, u64)>,
        denominator: u64,
    ) -> Result<Self> {
        let mut map: BTreeMap<Location, u64> = BTreeMap::new();
        for (loc, c) in counts {
            if c > 0 {
                *map.entry(loc).or_insert(0) += c;
            }
        }
        Self::from_map(map, denominator)
    }

    fn from_map(map: BTreeMap<Location, u64>, denominator: u64) -> Result<Self> {
        let total: u128 = map.values().map(|&c| c as u128).sum();
        if denominator == 0 || total != denominator as u128 {
            return Err(Error::InvalidParameter(format!(
                "counts sum to {total}, expected denominator {denominator}"
            )));
        }
        Ok(Self {
            atoms: map.into_iter().collect(),
            denominator,
        })
    }

    pub fn point_mass(loc: Location) -> Self {
        Self {
            atoms: vec![(loc, 1)],
            denominator: 1,
        }
    }

    /// Uniform over the given locations (repeats add up).
    pub fn uniform(locs: impl IntoIterator<Item = Location>) -> Result<Self> {
        let locs: Vec<_> = locs.into_iter().collect();
        let n = locs.len() as u64;
        Self::from_counts(locs.into_iter().map(|l| (l, 1)), n)
    }

    pub fn atoms(&self) -> &[(Location, u64)] {
        &self.atoms
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn count_of(&self, loc: &Location) -> u64 {
        self.atoms
            .binary_search_by(|(l, _)| l.cmp(loc))
            .map(|i| self.atoms[i].1)
            .unwrap_or(0)
    }

    pub fn mass_of(&self, loc: &Location) -> Mass {
        Mass {
            num: self.count_of(loc),
            den: self.denominator,
        }
    }

    /// Exact mass of the atoms matching `pred`.
    pub fn measure(&self, pred: impl Fn(&Location) -> bool) -> Mass {
        Mass {
            num: self
                .atoms
                .iter()
                .filter(|(l, _)| pred(l))
                .map(|(_, c)| c)
                .sum(),
            den: self.denominator,
        }
    }

    /// Mass of the point atoms inside `region` (closed).
    pub fn measure_region(&self, region: &Region) -> Mass {
        self.measure(|l| matches!(l, Location::Point(p) if region.contains(p)))
    }

    /// Image under `f`, aggregated.
    pub fn map(&self, f: impl Fn(&Location) -> Location) -> Self {
        let mut map: BTreeMap<Location, u64> = BTreeMap::new();
        for (l, c) in &self.atoms {
            *map.entry(f(l)).or_insert(0) += c;
        }
        Self {
            atoms: map.into_iter().collect(),
            denominator: self.denominator,
        }
    }

    /// The locations with positive mass.
    pub fn support(&self) -> impl Iterator<Item = &Location> {
        self.atoms.iter().map(|(l, _)| l)
    }
}

/// Exact law of `f(U_1, .., U_q)` for `q` independent draws of the model.
///
/// `f` receives the `q` returned values. Aggregation is by integer counts, so
/// the parallel reduction gives the same result as a sequential pass.
pub fn pushforward<F>(model: &UniformGeneratorModel, q: u32, f: F) -> Result<DiscreteDistribution>
where
    F: Fn(&[f64]) -> Location + Sync,
{
    pushforward_indexed(model.size(), q, |idx| {
        let mut vals = [0.0f64; 8];
        for (v, &i) in vals.iter_mut().zip(idx) {
            *v = model.value(i);
        }
        f(&vals[..idx.len()])
    })
}

/// Like [`pushforward`], but `f` receives the grid indices `1..=N` instead of
/// values. Useful when the sampler output is tabulated ahead of time.
pub fn pushforward_indexed<F>(n: u64, q: u32, f: F) -> Result<DiscreteDistribution>
where
    F: Fn(&[u64]) -> Location + Sync,
{
    if !(1..=8).contains(&q) {
        return Err(Error::InvalidParameter(format!(
            "tuple arity q must be in 1..=8, got {q}"
        )));
    }
    let total = (n as u128).checked_pow(q).unwrap_or(u128::MAX);
    let cap = enumeration_cap();
    if total > cap {
        return Err(Error::EnumerationBudget {
            requested: total,
            cap,
        });
    }
    let total = total as u64;
    let q = q as usize;
    let counts = (0..total)
        .into_par_iter()
        .fold(HashMap::<Location, u64>::new, |mut acc, t| {
            let mut idx = [0u64; 8];
            let mut rest = t;
            for slot in idx.iter_mut().take(q) {
                *slot = rest % n + 1;
                rest /= n;
            }
            *acc.entry(f(&idx[..q])).or_insert(0) += 1;
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            if a.len() < b.len() {
                return merge_counts(b, a);
            }
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    DiscreteDistribution::from_map(counts.into_iter().collect(), total)
}

fn merge_counts(
    mut a: HashMap<Location, u64>,
    b: HashMap<Location, u64>,
) -> HashMap<Location, u64> {
    for (k, v) in b {
        *a.entry(k).or_insert(0) += v;
    }
    a
}

/// Grid of cubes of side `side` anchored at `origin`.
///
/// Two partitions derive from it: binning cells `[o + kL, o + (k+1)L)` and
/// rounding cells `[o + kL - L/2, o + kL + L/2)` around the grid points
/// `o + kL`. Both are half-open, so a boundary point goes to the cell on its
/// right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundingGrid {
    origin: Point,
    side: f64,
}

impl RoundingGrid {
    pub fn new(origin: Point, side: f64) -> Result<Self> {
        if !(side > 0.0 && side.is_finite()) || !origin.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid side must be finite and > 0, got {side}"
            )));
        }
        Ok(Self { origin, side })
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.origin.dim()
    }

    // Positions within a few ulps below a boundary count as on it, so that
    // decimal boundaries such as 0.15 on a 0.1 grid still go right.
    fn cell_with(&self, p: &Point, offset: f64) -> Cell {
        let o = self.origin.coords();
        let idx = |k: usize| {
            let t = (p.coords()[k] - o[k]) / self.side + offset;
            let f = t.floor();
            let snap = 8.0 * f64::EPSILON * t.abs().max(1.0);
            (if t - f >= 1.0 - snap { f + 1.0 } else { f }) as i64
        };
        if self.dim() == 1 {
            Cell::new1(idx(0))
        } else {
            Cell::new2(idx(0), idx(1))
        }
    }

    /// Binning cell `[o + kL, o + (k+1)L)` containing `p`.
    pub fn bin_cell(&self, p: &Point) -> Cell {
        self.cell_with(p, 0.0)
    }

    /// Index of the nearest grid point, ties to the right.
    pub fn round_cell(&self, p: &Point) -> Cell {
        self.cell_with(p, 0.5)
    }

    pub fn grid_point(&self, c: &Cell) -> Point {
        let o = self.origin.coords();
        let v = |k: usize| o[k] + c.index()[k] as f64 * self.side;
        if self.dim() == 1 {
            Point::new1(v(0))
        } else {
            Point::new2(v(0), v(1))
        }
    }

    /// Nearest grid point.
    pub fn round(&self, p: &Point) -> Point {
        self.grid_point(&self.round_cell(p))
    }
}

/// The σ-algebra generated by the binning cells plus the exception cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundingAlgebra {
    pub grid: RoundingGrid,
}

impl RoundingAlgebra {
    pub fn new(grid: RoundingGrid) -> Self {
        Self { grid }
    }

    pub fn cell_of(&self, loc: &Location) -> Location {
        match loc {
            Location::Point(p) => Location::Cell(self.grid.bin_cell(p)),
            other => *other,
        }
    }
}

/// Aggregates atom masses by cell. Exception atoms keep their own cells.
pub fn bin(dist: &DiscreteDistribution, algebra: &RoundingAlgebra) -> DiscreteDistribution {
    dist.map(|l| algebra.cell_of(l))
}

/// `max_C |ln(p1(C) / p2(C))|` over the cells charged by either side;
/// `+∞` when exactly one side charges some cell.
pub fn empirical_epsilon_cells(p1: &DiscreteDistribution, p2: &DiscreteDistribution) -> f64 {
    empirical_epsilon_detail(p1, p2).value
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalEpsilon {
    #[serde(serialize_with = "crate::ser::extended_f64")]
    pub value: f64,
    /// Cell attaining the maximum.
    pub worst_cell: Option<Location>,
}

pub fn empirical_epsilon_detail(
    p1: &DiscreteDistribution,
    p2: &DiscreteDistribution,
) -> EmpiricalEpsilon {
    let ln_ratio_den = (p2.denominator as f64).ln() - (p1.denominator as f64).ln();
    let mut best = EmpiricalEpsilon {
        value: 0.0,
        worst_cell: None,
    };
    for (loc, c1, c2) in merge_atoms(p1, p2) {
        let r = match (c1, c2) {
            (0, 0) => continue,
            (0, _) | (_, 0) => f64::INFINITY,
            (a, b) if p1.denominator == p2.denominator => ((a as f64) / (b as f64)).ln().abs(),
            (a, b) => ((a as f64).ln() - (b as f64).ln() + ln_ratio_den).abs(),
        };
        if r > best.value || best.worst_cell.is_none() {
            best = EmpiricalEpsilon {
                value: r,
                worst_cell: Some(loc),
            };
        }
    }
    best
}

/// ε̂ of two distributions observed through the cells of `algebra`.
pub fn empirical_epsilon(
    p1: &DiscreteDistribution,
    p2: &DiscreteDistribution,
    algebra: &RoundingAlgebra,
) -> f64 {
    empirical_epsilon_cells(&bin(p1, algebra), &bin(p2, algebra))
}

/// Success probability of the optimal guess between the two secrets under a
/// uniform prior: `Σ_C max(p1(C), p2(C)) / 2`.
pub fn bayes_success(p1: &DiscreteDistribution, p2: &DiscreteDistribution) -> f64 {
    let (d1, d2) = (p1.denominator as u128, p2.denominator as u128);
    let lcm = d1.lcm(&d2);
    let (s1, s2) = (lcm / d1, lcm / d2);
    let num: u128 = merge_atoms(p1, p2)
        .map(|(_, a, b)| (a as u128 * s1).max(b as u128 * s2))
        .sum();
    num as f64 / (2.0 * lcm as f64)
}

/// Walks both sorted atom lists in lockstep.
fn merge_atoms<'a>(
    p1: &'a DiscreteDistribution,
    p2: &'a DiscreteDistribution,
) -> impl Iterator<Item = (Location, u64, u64)> + 'a {
    let (a, b) = (&p1.atoms, &p2.atoms);
    let (mut i, mut j) = (0, 0);
    std::iter::from_fn(move || {
        let next = match (a.get(i), b.get(j)) {
            (None, None) => return None,
            (Some(x), None) => (x.0, x.1, 0),
            (None, Some(y)) => (y.0, 0, y.1),
            (Some(x), Some(y)) => match x.0.cmp(&y.0) {
                Ordering::Less => (x.0, x.1, 0),
                Ordering::Greater => (y.0, 0, y.1),
                Ordering::Equal => (x.0, x.1, y.1),
            },
        };
        if next.1 > 0 || (i < a.len() && a[i].0 == next.0) {
            i += 1;
        }
        if next.2 > 0 || (j < b.len() && b[j].0 == next.0) {
            j += 1;
        }
        Some(next)
    })
}

/// ∞-Wasserstein distance between two finitely supported distributions.
///
/// Exception atoms must carry the same mass on both sides and are coupled to
/// themselves. For the point atoms, the answer is the smallest pairwise
/// distance `t` at which a coupling supported on `{d(x, y) <= t}` exists; the
/// candidates are searched by bisection and each is tested for feasibility
/// with a max-flow (a greedy monotone sweep in one dimension).
pub fn wasserstein_inf(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    kind: NormKind,
) -> Result<f64> {
    let (dm, dn) = (mu.denominator as u128, nu.denominator as u128);
    let lcm = dm.lcm(&dn);
    let (sm, sn) = (lcm / dm, lcm / dn);

    let mut xs: Vec<(Point, u128)> = Vec::new();
    let mut ys: Vec<(Point, u128)> = Vec::new();
    for (loc, a, b) in merge_atoms(mu, nu) {
        match loc {
            Location::Point(p) => {
                if a > 0 {
                    xs.push((p, a as u128 * sm));
                }
                if b > 0 {
                    ys.push((p, b as u128 * sn));
                }
            }
            Location::Cell(_) => {
                return Err(Error::UnsupportedLocation(
                    "rounding cells carry no metric; use grid points instead".into(),
                ))
            }
            _ => {
                if a as u128 * sm != b as u128 * sn {
                    return Err(Error::ExceptionMassMismatch {
                        mu: a as f64 / dm as f64,
                        nu: b as f64 / dn as f64,
                    });
                }
            }
        }
    }
    if xs.is_empty() {
        return Ok(0.0);
    }
    let dim = xs[0].0.dim();
    if xs.iter().chain(&ys).any(|(p, _)| p.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: if dim == 1 { 2 } else { 1 },
        });
    }

    let mut cands: Vec<f64> = Vec::with_capacity(xs.len() * ys.len());
    for (x, _) in &xs {
        for (y, _) in &ys {
            cands.push(distance(x, y, kind)?);
        }
    }
    cands.sort_by(f64::total_cmp);
    cands.dedup();

    let feasible = |t: f64| -> bool {
        if dim == 1 {
            monotone_feasible(&xs, &ys, t)
        } else {
            flow_feasible(&xs, &ys, t, kind)
        }
    };
    // the largest candidate is always feasible
    let (mut lo, mut hi) = (0usize, cands.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(cands[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(cands[lo])
}

// On the line the monotone (quantile) coupling minimizes the largest
// displacement, so feasibility at `t` reduces to checking that coupling.
fn monotone_feasible(xs: &[(Point, u128)], ys: &[(Point, u128)], t: f64) -> bool {
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (xs[0].1, ys[0].1);
    loop {
        if (xs[i].0.x() - ys[j].0.x()).abs() > t {
            return false;
        }
        let m = ra.min(rb);
        ra -= m;
        rb -= m;
        if ra == 0 {
            i += 1;
            if i == xs.len() {
                return true;
            }
            ra = xs[i].1;
        }
        if rb == 0 {
            j += 1;
            if j == ys.len() {
                return true;
            }
            rb = ys[j].1;
        }
    }
}

fn flow_feasible(xs: &[(Point, u128)], ys: &[(Point, u128)], t: f64, kind: NormKind) -> bool {
    let (n, m) = (xs.len(), ys.len());
    let (src, sink) = (n + m, n + m + 1);
    let mut g = FlowGraph::new(n + m + 2);
    let total: u128 = xs.iter().map(|x| x.1).sum();
    for (i, (x, a)) in xs.iter().enumerate() {
        g.add_edge(src, i, *a);
        for (j, (y, _)) in ys.iter().enumerate() {
            if distance(x, y, kind).map(|d| d <= t).unwrap_or(false) {
                g.add_edge(i, n + j, *a);
            }
        }
    }
    for (j, (_, b)) in ys.iter().enumerate() {
        g.add_edge(n + j, sink, *b);
    }
    g.max_flow(src, sink) == total
}

/// Dinic's max-flow on integer capacities.
struct FlowGraph {
    to: Vec<usize>,
    cap: Vec<u128>,
    head: Vec<Vec<usize>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl FlowGraph {
    fn new(n: usize) -> Self {
        Self {
            to: Vec::new(),
            cap: Vec::new(),
            head: vec![Vec::new(); n],
            level: vec![0; n],
            iter: vec![0; n],
        }
    }

    fn add_edge(&mut self, u: usize, v: usize, c: u128) {
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(c);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(0);
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > 0 && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, f: u128) -> u128 {
        if u == t {
            return f;
        }
        while self.iter[u] < self.head[u].len() {
            let e = self.head[u][self.iter[u]];
            let v = self.to[e];
            if self.cap[e] > 0 && self.level[v] == self.level[u] + 1 {
                let d = self.dfs(v, t, f.min(self.cap[e]));
                if d > 0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            self.iter[u] += 1;
        }
        0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> u128 {
        let mut flow = 0;
        while self.bfs(s, t) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, u128::MAX);
                if f == 0 {
                    break;
                }
                flow += f;
            }
        }
        flow
    }
}

/// Measured sides of `ν(S^{-ε}) <= μ(S) <= ν(S^{+ε})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub nu_eroded: f64,
    pub mu_region: f64,
    pub nu_dilated: f64,
    pub holds: bool,
}

/// Evaluates both inequalities exactly by summing atom masses in the eroded,
/// original and dilated region.
pub fn check_sandwich(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    eps: f64,
    region: &Region,
    kind: NormKind,
) -> Result<SandwichReport> {
    let lower = nu.measure_region(&region.neighbor_minus(eps, kind)?);
    let mid = mu.measure_region(region);
    let upper = nu.measure_region(&region.neighbor_plus(eps, kind)?);
    let le = |a: Mass, b: Mass| a.num as u128 * b.den as u128 <= b.num as u128 * a.den as u128;
    Ok(SandwichReport {
        nu_eroded: lower.to_f64(),
        mu_region: mid.to_f64(),
        nu_dilated: upper.to_f64(),
        holds: le(lower, mid) && le(mid, upper),
    })
}
