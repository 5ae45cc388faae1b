//! Noise samplers in exact semantics and the mechanisms built from them.
//!
//! Everything is parameterized by the rate `ε / Δf′`. A reported answer goes
//! through three stages: add noise, truncate to `M_r`, round to the grid.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distributions::{pushforward_indexed, DiscreteDistribution, Location, RoundingGrid};
use crate::error::{Error, Result};
use crate::geometry::{Point, Region};
use crate::numrep::UniformGeneratorModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrivacyParams {
    eps: f64,
    sensitivity: f64,
}

impl PrivacyParams {
    pub fn new(eps: f64, sensitivity: f64) -> Result<Self> {
        for (name, v) in [("eps", eps), ("sensitivity", sensitivity)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(Self { eps, sensitivity })
    }

    /// From a Laplace scale `b = Δf′/ε`.
    pub fn from_scale(eps: f64, scale: f64) -> Result<Self> {
        Self::new(eps, eps * scale)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn rate(&self) -> f64 {
        self.eps / self.sensitivity
    }

    pub fn scale(&self) -> f64 {
        self.sensitivity / self.eps
    }
}

/// Inverse CDF of the centered Laplace law, `-(1/rate) sgn(u-½) ln(1-2|u-½|)`.
pub fn laplace_inv_cdf(u: f64, params: &PrivacyParams) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain {
            what: "laplace_inv_cdf",
            value: u,
        });
    }
    let c = u - 0.5;
    Ok(-c.signum() * (-2.0 * c.abs()).ln_1p() / params.rate())
}

pub fn laplace_cdf(x: f64, params: &PrivacyParams) -> f64 {
    let b = params.rate();
    if x < 0.0 {
        0.5 * (b * x).exp()
    } else {
        1.0 - 0.5 * (-b * x).exp()
    }
}

pub fn laplace_density(x: f64, params: &PrivacyParams) -> f64 {
    let b = params.rate();
    0.5 * b * (-b * x.abs()).exp()
}

/// `C(r) = 1 - (1 + εr) e^{-εr}`, the radius CDF of the planar Laplace law.
pub fn planar_radius_cdf(r: f64, eps: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let s = eps * r;
    // -expm1(-s) - s e^{-s} keeps precision near 0
    -(-s).exp_m1() - s * (-s).exp()
}

/// `C′(r) = ε² r e^{-εr}`.
pub fn planar_radius_density(r: f64, eps: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    eps * eps * r * (-eps * r).exp()
}

const RADIUS_MAX_ITER: usize = 200;

/// Solves `C(r) = u` by safeguarded Newton: each step is kept inside a
/// shrinking bracket and replaced by bisection when it would leave it.
pub fn planar_radius_inv(u: f64, eps: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::Domain {
            what: "planar_radius_inv",
            value: u,
        });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "eps must be finite and > 0, got {eps}"
        )));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    // work in s = εr, where C(s) = 1 - (1+s)e^{-s}
    let c = |s: f64| planar_radius_cdf(s, 1.0);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while c(hi) < u {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::NonConvergence {
                what: "planar_radius_inv bracket",
                iterations: 0,
            });
        }
    }
    // C(s) ~ s²/2 near 0
    let mut s = (2.0 * u).sqrt().clamp(lo, hi);
    for _ in 0..RADIUS_MAX_ITER {
        let g = c(s) - u;
        if g.abs() <= 1e-15 {
            return Ok(s / eps);
        }
        if g > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        if hi - lo <= f64::EPSILON * hi {
            return Ok(s / eps);
        }
        let d = s * (-s).exp();
        let next = s - g / d;
        s = if d > 0.0 && next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NonConvergence {
        what: "planar_radius_inv",
        iterations: RADIUS_MAX_ITER,
    })
}

/// Polar sampler: `θ = -π + 2π u_θ`, `r = C^{-1}(u_r)`.
pub fn planar_sample(u_r: f64, u_theta: f64, eps: f64) -> Result<Point> {
    let r = planar_radius_inv(u_r, eps)?;
    Ok(polar(r, -PI + 2.0 * PI * u_theta))
}

fn polar(r: f64, theta: f64) -> Point {
    let (s, c) = theta.sin_cos();
    Point::new2(r * c, r * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Sign {
    Negative,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ReportedAnswer {
    Value(Point),
    /// `∞`: the noisy answer left `M_r`.
    Exception,
    /// `-∞` / `+∞` in one dimension.
    SignedException(Sign),
}

impl From<ReportedAnswer> for Location {
    fn from(a: ReportedAnswer) -> Self {
        match a {
            ReportedAnswer::Value(p) => Location::Point(p),
            ReportedAnswer::Exception => Location::Exception,
            ReportedAnswer::SignedException(Sign::Negative) => Location::NegInfinity,
            ReportedAnswer::SignedException(Sign::Positive) => Location::PosInfinity,
        }
    }
}

/// What truncation reports for an answer outside `M_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncationMode {
    #[default]
    Exception,
    /// `-∞` below the interval, `+∞` above it.
    Signed,
    /// Signed, then `-∞ ↦ m` and `+∞ ↦ M`.
    Remap,
}

/// Signed modes only apply to intervals; elsewhere they fall back to the
/// plain exception.
pub fn truncate(y: &Point, region: &Region, mode: TruncationMode) -> ReportedAnswer {
    if y.is_finite() && region.contains(y) {
        return ReportedAnswer::Value(*y);
    }
    let Region::Interval { lo, hi } = *region else {
        return ReportedAnswer::Exception;
    };
    let x = y.x();
    let sign = if x < lo {
        Sign::Negative
    } else if x > hi {
        Sign::Positive
    } else {
        return ReportedAnswer::Exception;
    };
    match (mode, sign) {
        (TruncationMode::Exception, _) => ReportedAnswer::Exception,
        (TruncationMode::Signed, s) => ReportedAnswer::SignedException(s),
        (TruncationMode::Remap, Sign::Negative) => ReportedAnswer::Value(Point::new1(lo)),
        (TruncationMode::Remap, Sign::Positive) => ReportedAnswer::Value(Point::new1(hi)),
    }
}

/// Snaps a value to its nearest grid point; exceptions pass through.
pub fn round_answer(ans: ReportedAnswer, grid: &RoundingGrid) -> ReportedAnswer {
    match ans {
        ReportedAnswer::Value(p) => ReportedAnswer::Value(grid.round(&p)),
        other => other,
    }
}

pub fn inflated_sensitivity(delta_f: f64, delta_impl: f64) -> f64 {
    delta_f + 2.0 * delta_impl
}

/// A query with its declared sensitivity `Δf` and implementation error `δf`.
#[derive(Clone)]
pub struct Query<R> {
    pub name: String,
    evaluator: Arc<dyn Fn(&[R]) -> Point + Send + Sync>,
    pub delta_f: f64,
    pub delta_impl: f64,
}

impl<R> Query<R> {
    pub fn new(
        name: impl Into<String>,
        delta_f: f64,
        delta_impl: f64,
        evaluator: impl Fn(&[R]) -> Point + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(delta_f >= 0.0 && delta_impl >= 0.0) {
            return Err(Error::InvalidParameter(
                "query sensitivities must be >= 0".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            evaluator: Arc::new(evaluator),
            delta_f,
            delta_impl,
        })
    }

    /// Counting query, `Δf = 1`, computed exactly.
    pub fn count(
        name: impl Into<String>,
        predicate: impl Fn(&R) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self::new(name, 1.0, 0.0, move |rs: &[R]| {
            count_query_eval(rs, &predicate)
        })
        .expect("constant sensitivities are valid")
    }

    pub fn evaluate(&self, records: &[R]) -> Point {
        (self.evaluator)(records)
    }

    /// `Δf′ = Δf + 2δf`.
    pub fn sensitivity(&self) -> f64 {
        inflated_sensitivity(self.delta_f, self.delta_impl)
    }
}

impl<R> fmt::Debug for Query<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Query")
            .field("name", &self.name)
            .field("delta_f", &self.delta_f)
            .field("delta_impl", &self.delta_impl)
            .finish_non_exhaustive()
    }
}

pub fn count_query_eval<R>(records: &[R], predicate: impl Fn(&R) -> bool) -> Point {
    Point::new1(records.iter().filter(|r| predicate(r)).count() as f64)
}

/// Implemented noise map `n′`: takes the `q` generator values and returns the
/// noise, or `None` when no finite noise exists for them.
pub type NoiseFn = Arc<dyn Fn(&[f64]) -> Option<Point> + Send + Sync>;

#[derive(Clone)]
pub enum NoiseKind {
    /// One draw through the Laplace inverse CDF; `u ∉ ]0,1[` has no finite
    /// image.
    Laplace,
    /// Two draws `(u_r, u_θ)`. `u_r >= 1` has no finite image; a negative
    /// `u_r` (only reachable through bias) is read as radius 0.
    Planar,
    Custom {
        arity: u32,
        dim: usize,
        noise: NoiseFn,
    },
}

impl fmt::Debug for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::Laplace => write!(f, "Laplace"),
            NoiseKind::Planar => write!(f, "Planar"),
            NoiseKind::Custom { arity, dim, .. } => {
                write!(f, "Custom {{ arity: {arity}, dim: {dim} }}")
            }
        }
    }
}

impl NoiseKind {
    pub fn arity(&self) -> u32 {
        match self {
            NoiseKind::Laplace => 1,
            NoiseKind::Planar => 2,
            NoiseKind::Custom { arity, .. } => *arity,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseKind::Laplace => 1,
            NoiseKind::Planar => 2,
            NoiseKind::Custom { dim, .. } => *dim,
        }
    }

    pub fn sample(&self, u: &[f64], params: &PrivacyParams) -> Option<Point> {
        match self {
            NoiseKind::Laplace => laplace_inv_cdf(u[0], params).ok().map(Point::new1),
            NoiseKind::Planar => planar_noise(u[0], u[1], params.rate()),
            NoiseKind::Custom { noise, .. } => noise(u),
        }
    }
}

fn planar_noise(u_r: f64, u_theta: f64, rate: f64) -> Option<Point> {
    let r = planar_radius_inv(u_r.max(0.0), rate).ok()?;
    Some(polar(r, -PI + 2.0 * PI * u_theta))
}

/// Additive mechanism followed by truncation and rounding.
#[derive(Debug, Clone)]
pub struct Mechanism {
    pub params: PrivacyParams,
    pub noise: NoiseKind,
    pub region: Region,
    pub grid: RoundingGrid,
    pub truncation: TruncationMode,
}

impl Mechanism {
    pub fn new(
        params: PrivacyParams,
        noise: NoiseKind,
        region: Region,
        grid: RoundingGrid,
        truncation: TruncationMode,
    ) -> Result<Self> {
        let dim = noise.dim();
        for got in [region.dim().unwrap_or(dim), grid.dim()] {
            if got != dim {
                return Err(Error::DimensionMismatch { expected: dim, got });
            }
        }
        Ok(Self {
            params,
            noise,
            region,
            grid,
            truncation,
        })
    }

    /// Reported answer for `answer + noise`; `None` noise is out of range.
    pub fn report(&self, answer: &Point, noise: Option<Point>) -> ReportedAnswer {
        match noise {
            Some(x) => round_answer(
                truncate(&(*answer + x), &self.region, self.truncation),
                &self.grid,
            ),
            None => ReportedAnswer::Exception,
        }
    }

    pub fn run(&self, answer: &Point, u: &[f64]) -> Result<ReportedAnswer> {
        if u.len() != self.noise.arity() as usize {
            return Err(Error::DimensionMismatch {
                expected: self.noise.arity() as usize,
                got: u.len(),
            });
        }
        if answer.dim() != self.noise.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.noise.dim(),
                got: answer.dim(),
            });
        }
        Ok(self.report(answer, self.noise.sample(u, &self.params)))
    }

    /// Noise for every generator tuple, tabulated once so that many answers
    /// can be pushed through the same source cheaply.
    pub fn noise_table(&self, model: &UniformGeneratorModel) -> Result<NoiseTable> {
        let n = model.size();
        let vals: Vec<f64> = (1..=n).map(|i| model.value(i)).collect();
        match &self.noise {
            NoiseKind::Laplace => Ok(NoiseTable::Single(
                vals.iter()
                    .map(|&u| self.noise.sample(&[u], &self.params))
                    .collect(),
            )),
            NoiseKind::Planar => {
                let rate = self.params.rate();
                let radii = vals
                    .iter()
                    .map(|&u| planar_radius_inv(u.max(0.0), rate).ok())
                    .collect();
                let angles = vals
                    .iter()
                    .map(|&u| (-PI + 2.0 * PI * u).sin_cos())
                    .collect();
                Ok(NoiseTable::Polar { radii, angles })
            }
            NoiseKind::Custom {
                arity: 1, noise, ..
            } => Ok(NoiseTable::Single(
                vals.iter().map(|&u| noise(&[u])).collect(),
            )),
            NoiseKind::Custom {
                arity: 2, noise, ..
            } => {
                let mut out = Vec::with_capacity((n * n) as usize);
                for j in 0..n as usize {
                    for i in 0..n as usize {
                        out.push(noise(&[vals[i], vals[j]]));
                    }
                }
                Ok(NoiseTable::Pairs {
                    n: n as usize,
                    noise: out,
                })
            }
            NoiseKind::Custom { arity, .. } => Err(Error::InvalidParameter(format!(
                "tabulation supports arity 1 or 2, got {arity}"
            ))),
        }
    }

    /// Exact law of the reported answer for `answer` under `model`.
    pub fn output_distribution(
        &self,
        answer: &Point,
        model: &UniformGeneratorModel,
    ) -> Result<DiscreteDistribution> {
        let table = self.noise_table(model)?;
        self.output_distribution_with(answer, &table)
    }

    pub fn output_distribution_with(
        &self,
        answer: &Point,
        table: &NoiseTable,
    ) -> Result<DiscreteDistribution> {
        if answer.dim() != self.noise.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.noise.dim(),
                got: answer.dim(),
            });
        }
        let n = table.size() as u64;
        pushforward_indexed(n, self.noise.arity(), |idx| {
            let i = (idx[0] - 1) as usize;
            let j = idx.get(1).map(|&j| (j - 1) as usize).unwrap_or(0);
            self.report(answer, table.get(i, j)).into()
        })
    }
}

/// Tabulated noise over the generator grid. Indices are 0-based.
#[derive(Debug, Clone)]
pub enum NoiseTable {
    Single(Vec<Option<Point>>),
    /// Separable planar noise: radius from the first draw, angle from the
    /// second.
    Polar {
        radii: Vec<Option<f64>>,
        angles: Vec<(f64, f64)>,
    },
    Pairs {
        n: usize,
        noise: Vec<Option<Point>>,
    },
}

impl NoiseTable {
    pub fn size(&self) -> usize {
        match self {
            NoiseTable::Single(v) => v.len(),
            NoiseTable::Polar { radii, .. } => radii.len(),
            NoiseTable::Pairs { n, .. } => *n,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<Point> {
        match self {
            NoiseTable::Single(v) => v[i],
            NoiseTable::Polar { radii, angles } => {
                let r = radii[i]?;
                let (s, c) = angles[j];
                Some(Point::new2(r * c, r * s))
            }
            NoiseTable::Pairs { n, noise } => noise[j * n + i],
        }
    }
}

/// Single-shot convenience: `round(truncate(answer + n(u)))`.
pub fn run_mechanism(answer: &Point, mechanism: &Mechanism, u: &[f64]) -> Result<ReportedAnswer> {
    mechanism.run(answer, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> PrivacyParams {
        PrivacyParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(PrivacyParams::new(0.0, 1.0).is_err());
        assert!(PrivacyParams::new(1.0, -1.0).is_err());
        let p = PrivacyParams::from_scale(2f64.ln(), 4.0).unwrap();
        assert!((p.rate() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn laplace_inv_cdf_examples() {
        let p = unit();
        assert_eq!(laplace_inv_cdf(0.5, &p).unwrap(), 0.0);
        assert!((laplace_inv_cdf(0.75, &p).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((laplace_inv_cdf(0.25, &p).unwrap() + 2f64.ln()).abs() < 1e-15);
        assert!(laplace_inv_cdf(0.0, &p).is_err());
        assert!(laplace_inv_cdf(1.0, &p).is_err());
        // forward oracle
        assert!((laplace_cdf(2f64.ln(), &p) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn laplace_density_examples() {
        let p = unit();
        assert_eq!(laplace_density(0.0, &p), 0.5);
        assert!((laplace_density(2f64.ln(), &p) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn planar_cdf_examples() {
        assert_eq!(planar_radius_cdf(0.0, 1.0), 0.0);
        let v = 1.0 - 2.0 / std::f64::consts::E;
        assert!((planar_radius_cdf(1.0, 1.0) - v).abs() < 1e-15);
        assert!((planar_radius_cdf(80.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn planar_inv_examples() {
        assert_eq!(planar_radius_inv(0.0, 1.0).unwrap(), 0.0);
        let v = 1.0 - 2.0 / std::f64::consts::E;
        assert!((planar_radius_inv(v, 1.0).unwrap() - 1.0).abs() < 1e-9);
        assert!(planar_radius_inv(1.0, 1.0).is_err());
        assert!(planar_radius_inv(-0.1, 1.0).is_err());
        // deep tail stays within tolerance
        let u = 1.0 - 1e-15;
        let r = planar_radius_inv(u, 0.5).unwrap();
        assert!((planar_radius_cdf(r, 0.5) - u).abs() <= 1e-12);
    }

    #[test]
    fn planar_sample_examples() {
        let v = 1.0 - 2.0 / std::f64::consts::E;
        assert_eq!(planar_sample(0.0, 0.3, 1.0).unwrap(), Point::new2(0.0, 0.0));
        let p = planar_sample(v, 0.25, 1.0).unwrap();
        assert!(p.x().abs() < 1e-9 && (p.y() + 1.0).abs() < 1e-9);
        let p = planar_sample(v, 0.5, 1.0).unwrap();
        assert!((p.x() - 1.0).abs() < 1e-9 && p.y().abs() < 1e-9);
    }

    #[test]
    fn truncate_examples() {
        let s = Region::interval(0.0, 1.0).unwrap();
        let t = |x, m| truncate(&Point::new1(x), &s, m);
        assert_eq!(
            t(0.5, TruncationMode::Exception),
            ReportedAnswer::Value(Point::new1(0.5))
        );
        assert_eq!(t(2.0, TruncationMode::Exception), ReportedAnswer::Exception);
        assert_eq!(
            t(2.0, TruncationMode::Remap),
            ReportedAnswer::Value(Point::new1(1.0))
        );
        assert_eq!(
            t(-2.0, TruncationMode::Remap),
            ReportedAnswer::Value(Point::new1(0.0))
        );
        assert_eq!(
            t(-2.0, TruncationMode::Signed),
            ReportedAnswer::SignedException(Sign::Negative)
        );
        assert_eq!(
            t(f64::NAN, TruncationMode::Exception),
            ReportedAnswer::Exception
        );
        let d = Region::disc(Point::new2(0.0, 0.0), 1.0).unwrap();
        assert_eq!(
            truncate(&Point::new2(1.0, 1.0), &d, TruncationMode::Remap),
            ReportedAnswer::Exception
        );
    }

    #[test]
    fn round_examples() {
        let g = RoundingGrid::new(Point::new1(0.0), 0.1).unwrap();
        let r = |x| round_answer(ReportedAnswer::Value(Point::new1(x)), &g);
        assert_eq!(r(0.13), ReportedAnswer::Value(Point::new1(0.1)));
        assert_eq!(r(0.15), ReportedAnswer::Value(Point::new1(0.2)));
        assert_eq!(
            round_answer(ReportedAnswer::Exception, &g),
            ReportedAnswer::Exception
        );
    }

    #[test]
    fn sensitivity_examples() {
        assert_eq!(inflated_sensitivity(1.0, 0.0), 1.0);
        assert!((inflated_sensitivity(1.0, 0.01) - 1.02).abs() < 1e-15);
        assert_eq!(inflated_sensitivity(0.5, 0.25), 1.0);
    }

    #[test]
    fn count_query_examples() {
        let q: Query<&str> = Query::count("all", |_| true);
        assert_eq!(q.evaluate(&[]), Point::new1(0.0));
        assert_eq!(q.evaluate(&["a", "b", "c"]), Point::new1(3.0));
        assert_eq!(q.sensitivity(), 1.0);
        let starts_a: Query<&str> = Query::count("a*", |r: &&str| r.starts_with('a'));
        let d1 = ["ab", "ac", "b"];
        assert_eq!(starts_a.evaluate(&d1).x(), 2.0);
        assert!((starts_a.evaluate(&d1[..2]).x() - starts_a.evaluate(&d1).x()).abs() <= 1.0);
    }

    fn mech_1d(region: Region, side: f64) -> Mechanism {
        Mechanism::new(
            unit(),
            NoiseKind::Laplace,
            region,
            RoundingGrid::new(Point::new1(0.0), side).unwrap(),
            TruncationMode::Exception,
        )
        .unwrap()
    }

    #[test]
    fn run_mechanism_examples() {
        let zero = NoiseKind::Custom {
            arity: 1,
            dim: 1,
            noise: Arc::new(|_| Some(Point::new1(0.0))),
        };
        let mut m = mech_1d(Region::interval(0.0, 1.0).unwrap(), 0.1);
        m.noise = zero;
        let a = run_mechanism(&Point::new1(0.5), &m, &[0.3]).unwrap();
        assert_eq!(a, ReportedAnswer::Value(Point::new1(0.5)));

        let m = mech_1d(Region::interval(-10.0, 10.0).unwrap(), 0.1);
        assert_eq!(
            run_mechanism(&Point::new1(0.0), &m, &[1.0 - 1e-12]).unwrap(),
            ReportedAnswer::Exception
        );
        assert_eq!(
            run_mechanism(&Point::new1(0.0), &m, &[1.0]).unwrap(),
            ReportedAnswer::Exception
        );
        assert!(run_mechanism(&Point::new2(0.0, 0.0), &m, &[0.5]).is_err());
    }

    #[test]
    fn output_distribution_counts_every_draw() {
        let m = mech_1d(Region::interval(-3.0, 3.0).unwrap(), 0.5);
        let model = UniformGeneratorModel::exact(64).unwrap();
        let d = m.output_distribution(&Point::new1(0.0), &model).unwrap();
        assert_eq!(d.denominator(), 64);
        // u = 1 is always an exception
        assert!(d.count_of(&Location::Exception) >= 1);
        let planar = Mechanism::new(
            unit(),
            NoiseKind::Planar,
            Region::disc(Point::new2(0.0, 0.0), 4.0).unwrap(),
            RoundingGrid::new(Point::new2(0.0, 0.0), 1.0).unwrap(),
            TruncationMode::Exception,
        )
        .unwrap();
        let model = UniformGeneratorModel::exact(16).unwrap();
        let d = planar
            .output_distribution(&Point::new2(0.0, 0.0), &model)
            .unwrap();
        assert_eq!(d.denominator(), 256);
        // the u_r = 1 row: 16 exceptions at least
        assert!(d.count_of(&Location::Exception) >= 16);
        // tabulated and direct evaluation agree
        for (i, j) in [(1u64, 1u64), (5, 9), (15, 2)] {
            let u = [model.value(i), model.value(j)];
            let direct: Location = planar.run(&Point::new2(0.0, 0.0), &u).unwrap().into();
            assert!(d.count_of(&direct) > 0);
        }
    }

    proptest! {
        #[test]
        fn inv_cdf_is_odd_and_monotone(u in 0.001f64..0.999, v in 0.001f64..0.999) {
            let p = unit();
            let a = laplace_inv_cdf(u, &p).unwrap();
            let b = laplace_inv_cdf(1.0 - u, &p).unwrap();
            prop_assert!((a + b).abs() <= 1e-12 * a.abs().max(1.0));
            if u < v {
                prop_assert!(a < laplace_inv_cdf(v, &p).unwrap());
            }
        }

        #[test]
        fn inv_cdf_round_trip(u in 1e-9f64..(1.0 - 1e-9), rate in 0.1f64..5.0) {
            let p = PrivacyParams::new(rate, 1.0).unwrap();
            let x = laplace_inv_cdf(u, &p).unwrap();
            prop_assert!((laplace_cdf(x, &p) - u).abs() <= 1e-12);
        }

        #[test]
        fn density_ratio_bound(x in -20f64..20.0, d in 0f64..3.0, rate in 0.1f64..3.0) {
            let p = PrivacyParams::new(rate, 1.0).unwrap();
            let ratio = laplace_density(x, &p) / laplace_density(x + d, &p);
            prop_assert!(ratio <= (rate * d).exp() * (1.0 + 1e-12));
        }

        #[test]
        fn planar_round_trip(u in 0f64..0.999999, eps in 0.1f64..4.0) {
            let r = planar_radius_inv(u, eps).unwrap();
            prop_assert!((planar_radius_cdf(r, eps) - u).abs() <= 1e-12);
        }

        #[test]
        fn rounding_is_idempotent_and_close(x in -100f64..100.0, y in -100f64..100.0, side in 0.01f64..5.0) {
            let g = RoundingGrid::new(Point::new2(0.3, -0.7), side).unwrap();
            let once = round_answer(ReportedAnswer::Value(Point::new2(x, y)), &g);
            prop_assert_eq!(round_answer(once, &g), once);
            let ReportedAnswer::Value(q) = once else { unreachable!() };
            prop_assert!((q.x() - x).abs() <= side / 2.0 + 1e-9);
            prop_assert!((q.y() - y).abs() <= side / 2.0 + 1e-9);
        }
    }
}
