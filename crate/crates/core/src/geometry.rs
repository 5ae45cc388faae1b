//! Points, norms and the three region shapes (interval, box, disc) used for
//! truncation domains and rounding cells, with their `±ε` neighborhoods.

use std::cmp::Ordering;
use std::hash::{Hash, Hasher};
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of `R^1` or `R^2`.
///
/// Equality, hashing and ordering go through the bit pattern (with `-0.0`
/// folded into `0.0`) so points can key exact aggregation maps.
#[derive(Debug, Clone, Copy)]
pub struct Point {
    dim: u8,
    c: [f64; 2],
}

impl Point {
    pub fn new1(x: f64) -> Self {
        Self {
            dim: 1,
            c: [x + 0.0, 0.0],
        }
    }

    pub fn new2(x: f64, y: f64) -> Self {
        Self {
            dim: 2,
            c: [x + 0.0, y + 0.0],
        }
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        if coords.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("point coordinate is NaN".into()));
        }
        match coords {
            [x] => Ok(Self::new1(*x)),
            [x, y] => Ok(Self::new2(*x, *y)),
            _ => Err(Error::DimensionMismatch {
                expected: 2,
                got: coords.len(),
            }),
        }
    }

    pub fn origin(dim: usize) -> Self {
        if dim == 1 {
            Self::new1(0.0)
        } else {
            Self::new2(0.0, 0.0)
        }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.c[..self.dim as usize]
    }

    pub fn x(&self) -> f64 {
        self.c[0]
    }

    pub fn y(&self) -> f64 {
        self.c[1]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dim: self.dim,
            c: [
                f(self.c[0]) + 0.0,
                if self.dim == 2 {
                    f(self.c[1]) + 0.0
                } else {
                    0.0
                },
            ],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().all(|v| v.is_finite())
    }

    fn key(&self) -> (u8, u64, u64) {
        (self.dim, self.c[0].to_bits(), self.c[1].to_bits())
    }

    fn check_dim(&self, other: &Point) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }
}

impl PartialEq for Point {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Point {}

impl Hash for Point {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

impl PartialOrd for Point {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Point {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dim
            .cmp(&other.dim)
            .then_with(|| self.c[0].total_cmp(&other.c[0]))
            .then_with(|| self.c[1].total_cmp(&other.c[1]))
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        Point {
            dim: self.dim,
            c: [self.c[0] + rhs.c[0] + 0.0, self.c[1] + rhs.c[1] + 0.0],
        }
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        Point {
            dim: self.dim,
            c: [self.c[0] - rhs.c[0] + 0.0, self.c[1] - rhs.c[1] + 0.0],
        }
    }
}

impl Serialize for Point {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(deserializer)?;
        Point::from_slice(&v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L1,
    #[default]
    L2,
    #[serde(alias = "inf")]
    LInf,
}

pub fn norm(p: &Point, kind: NormKind) -> f64 {
    let c = p.coords();
    match kind {
        NormKind::L1 => c.iter().map(|v| v.abs()).sum(),
        NormKind::L2 => {
            if c.len() == 1 {
                c[0].abs()
            } else {
                c[0].hypot(c[1])
            }
        }
        NormKind::LInf => c.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

pub fn distance(a: &Point, b: &Point, kind: NormKind) -> Result<f64> {
    a.check_dim(b)?;
    Ok(norm(&(*a - *b), kind))
}

/// Compact region of `R^m`, or the empty set produced by over-erosion.
///
/// User-facing constructors require strict bounds (`lo < hi`, `radius > 0`);
/// erosion may return degenerate single-point regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionSpec", into = "RegionSpec")]
pub enum Region {
    Interval { lo: f64, hi: f64 },
    Box { lower: Point, upper: Point },
    Disc { center: Point, radius: f64 },
    Empty,
}

/// Config/JSON shape of a region.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RegionSpec {
    Interval([f64; 2]),
    Box([Vec<f64>; 2]),
    Disc { center: Vec<f64>, radius: f64 },
    Empty,
}

impl TryFrom<RegionSpec> for Region {
    type Error = Error;

    fn try_from(spec: RegionSpec) -> Result<Region> {
        match spec {
            RegionSpec::Interval([lo, hi]) => Region::interval(lo, hi),
            RegionSpec::Box([lo, hi]) => {
                Region::boxed(Point::from_slice(&lo)?, Point::from_slice(&hi)?)
            }
            RegionSpec::Disc { center, radius } => {
                Region::disc(Point::from_slice(&center)?, radius)
            }
            RegionSpec::Empty => Ok(Region::Empty),
        }
    }
}

impl From<Region> for RegionSpec {
    fn from(r: Region) -> RegionSpec {
        match r {
            Region::Interval { lo, hi } => RegionSpec::Interval([lo, hi]),
            Region::Box { lower, upper } => {
                RegionSpec::Box([lower.coords().to_vec(), upper.coords().to_vec()])
            }
            Region::Disc { center, radius } => RegionSpec::Disc {
                center: center.coords().to_vec(),
                radius,
            },
            Region::Empty => RegionSpec::Empty,
        }
    }
}

impl Region {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "interval needs finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Region::Interval { lo, hi })
    }

    pub fn boxed(lower: Point, upper: Point) -> Result<Self> {
        lower.check_dim(&upper)?;
        let ok = lower
            .coords()
            .iter()
            .zip(upper.coords())
            .all(|(l, u)| l.is_finite() && u.is_finite() && l < u);
        if !ok {
            return Err(Error::InvalidParameter(
                "box needs finite lower < upper in every coordinate".into(),
            ));
        }
        Ok(Region::Box { lower, upper })
    }

    pub fn disc(center: Point, radius: f64) -> Result<Self> {
        if !(center.is_finite() && radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "disc needs a finite center and radius > 0, got {radius}"
            )));
        }
        Ok(Region::Disc { center, radius })
    }

    /// Ambient dimension; `None` for the empty region.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Region::Interval { .. } => Some(1),
            Region::Box { lower, .. } => Some(lower.dim()),
            Region::Disc { center, .. } => Some(center.dim()),
            Region::Empty => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Region::Empty)
    }

    /// Closed membership.
    pub fn contains(&self, p: &Point) -> bool {
        match self {
            Region::Interval { lo, hi } => p.dim() == 1 && *lo <= p.x() && p.x() <= *hi,
            Region::Box { lower, upper } => {
                p.dim() == lower.dim()
                    && p.coords()
                        .iter()
                        .zip(lower.coords().iter().zip(upper.coords()))
                        .all(|(v, (l, u))| l <= v && v <= u)
            }
            Region::Disc { center, radius } => {
                p.dim() == center.dim() && norm(&(*p - *center), NormKind::L2) <= *radius
            }
            Region::Empty => false,
        }
    }

    pub fn diameter(&self, kind: NormKind) -> f64 {
        match self {
            Region::Interval { lo, hi } => hi - lo,
            Region::Box { lower, upper } => norm(&(*upper - *lower), kind),
            Region::Disc { center, radius } => {
                if center.dim() == 2 && kind == NormKind::L1 {
                    2.0 * std::f64::consts::SQRT_2 * radius
                } else {
                    2.0 * radius
                }
            }
            Region::Empty => 0.0,
        }
    }

    /// Lebesgue measure.
    pub fn volume(&self) -> f64 {
        match self {
            Region::Interval { lo, hi } => hi - lo,
            Region::Box { lower, upper } => (*upper - *lower).coords().iter().product(),
            Region::Disc { center, radius } => {
                if center.dim() == 1 {
                    2.0 * radius
                } else {
                    std::f64::consts::PI * radius * radius
                }
            }
            Region::Empty => 0.0,
        }
    }

    /// `S^{+ε}`: points within `eps` of the region.
    ///
    /// Boxes stay boxes only under L∞ (or in one dimension) and discs only
    /// under L2; other combinations leave the family and are rejected.
    pub fn neighbor_plus(&self, eps: f64, kind: NormKind) -> Result<Region> {
        check_eps(eps)?;
        match self {
            Region::Interval { lo, hi } => Ok(Region::Interval {
                lo: lo - eps,
                hi: hi + eps,
            }),
            Region::Box { lower, upper } => {
                if lower.dim() > 1 && kind != NormKind::LInf {
                    return Err(Error::NormMismatch(format!(
                        "dilation of a box under {kind:?}"
                    )));
                }
                Ok(Region::Box {
                    lower: lower.map(|v| v - eps),
                    upper: upper.map(|v| v + eps),
                })
            }
            Region::Disc { center, radius } => {
                if center.dim() > 1 && kind != NormKind::L2 {
                    return Err(Error::NormMismatch(format!(
                        "dilation of a disc under {kind:?}"
                    )));
                }
                Ok(Region::Disc {
                    center: *center,
                    radius: radius + eps,
                })
            }
            Region::Empty => Ok(Region::Empty),
        }
    }

    /// `S^{-ε} = ((S^c)^{+ε})^c`: points whose closed `eps`-ball lies in the
    /// region. Box erosion is the same under every Lp norm.
    pub fn neighbor_minus(&self, eps: f64, kind: NormKind) -> Result<Region> {
        check_eps(eps)?;
        match self {
            Region::Interval { lo, hi } => {
                let (lo, hi) = (lo + eps, hi - eps);
                Ok(if lo <= hi {
                    Region::Interval { lo, hi }
                } else {
                    Region::Empty
                })
            }
            Region::Box { lower, upper } => {
                let lower = lower.map(|v| v + eps);
                let upper = upper.map(|v| v - eps);
                let ok = lower
                    .coords()
                    .iter()
                    .zip(upper.coords())
                    .all(|(l, u)| l <= u);
                Ok(if ok {
                    Region::Box { lower, upper }
                } else {
                    Region::Empty
                })
            }
            Region::Disc { center, radius } => {
                if center.dim() > 1 && kind != NormKind::L2 {
                    return Err(Error::NormMismatch(format!(
                        "erosion of a disc under {kind:?}"
                    )));
                }
                let r = radius - eps;
                Ok(if r >= 0.0 {
                    Region::Disc {
                        center: *center,
                        radius: r,
                    }
                } else {
                    Region::Empty
                })
            }
            Region::Empty => Ok(Region::Empty),
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "neighborhood radius must be >= 0, got {eps}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        let d = distance(&Point::new1(0.0), &Point::new1(0.0), NormKind::L2).unwrap();
        assert_eq!(d, 0.0);
        let d = distance(&Point::new2(0.0, 0.0), &Point::new2(3.0, 4.0), NormKind::L2).unwrap();
        assert_eq!(d, 5.0);
        let d = distance(&Point::new1(1.0), &Point::new1(-2.0), NormKind::L1).unwrap();
        assert_eq!(d, 3.0);
        assert!(distance(&Point::new1(0.0), &Point::new2(0.0, 0.0), NormKind::L2).is_err());
        let d = distance(
            &Point::new2(0.0, 0.0),
            &Point::new2(3.0, -4.0),
            NormKind::LInf,
        )
        .unwrap();
        assert_eq!(d, 4.0);
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(
            Region::interval(0.0, 1.0).unwrap().diameter(NormKind::L2),
            1.0
        );
        let disc = Region::disc(Point::new2(7.0, -3.0), 3.0).unwrap();
        assert_eq!(disc.diameter(NormKind::L2), 6.0);
        let b = Region::boxed(Point::new2(0.0, 0.0), Point::new2(1.0, 2.0)).unwrap();
        // corner-to-corner oracle
        let corners = [(0.0, 0.0), (1.0, 0.0), (0.0, 2.0), (1.0, 2.0)];
        let mut best: f64 = 0.0;
        for a in corners {
            for c in corners {
                best = best.max(((a.0 - c.0) as f64).hypot(a.1 - c.1));
            }
        }
        assert_eq!(b.diameter(NormKind::L2), best);
        assert!((best - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn plus_examples() {
        let s = Region::interval(0.0, 1.0).unwrap();
        assert_eq!(
            s.neighbor_plus(0.1, NormKind::L2).unwrap(),
            Region::Interval { lo: -0.1, hi: 1.1 }
        );
        let c = Point::new2(2.0, 2.0);
        let d = Region::disc(c, 1.0).unwrap();
        assert_eq!(
            d.neighbor_plus(0.5, NormKind::L2).unwrap(),
            Region::Disc {
                center: c,
                radius: 1.5
            }
        );
        assert_eq!(s.neighbor_plus(0.0, NormKind::L2).unwrap(), s);
        assert!(d.neighbor_plus(0.5, NormKind::L1).is_err());
        let b = Region::boxed(Point::new2(0.0, 0.0), Point::new2(1.0, 1.0)).unwrap();
        assert!(b.neighbor_plus(0.1, NormKind::L2).is_err());
        assert!(s.neighbor_plus(-0.1, NormKind::L2).is_err());
    }

    #[test]
    fn minus_examples() {
        let s = Region::interval(0.0, 1.0).unwrap();
        match s.neighbor_minus(0.1, NormKind::L2).unwrap() {
            Region::Interval { lo, hi } => {
                assert!((lo - 0.1).abs() < 1e-15 && (hi - 0.9).abs() < 1e-15)
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(s.neighbor_minus(0.6, NormKind::L2).unwrap(), Region::Empty);
        // square of side L eroded by δt is a square of side L - 2δt
        let (l, dt) = (1.0, 0.125);
        let sq = Region::boxed(Point::new2(0.0, 0.0), Point::new2(l, l)).unwrap();
        let er = sq.neighbor_minus(dt, NormKind::L2).unwrap();
        assert_eq!(er.volume(), (l - 2.0 * dt) * (l - 2.0 * dt));
        assert_eq!(
            er,
            Region::Box {
                lower: Point::new2(dt, dt),
                upper: Point::new2(l - dt, l - dt)
            }
        );
    }

    #[test]
    fn region_json_shapes() {
        let r: Region = serde_json::from_str(r#"{"interval":[-10,10]}"#).unwrap();
        assert_eq!(
            r,
            Region::Interval {
                lo: -10.0,
                hi: 10.0
            }
        );
        let r: Region = serde_json::from_str(r#"{"box":[[0,0],[1,2]]}"#).unwrap();
        assert_eq!(r.diameter(NormKind::LInf), 2.0);
        let r: Region = serde_json::from_str(r#"{"disc":{"center":[0,0],"radius":2}}"#).unwrap();
        assert_eq!(r.volume(), 4.0 * std::f64::consts::PI);
        assert!(serde_json::from_str::<Region>(r#"{"interval":[1,0]}"#).is_err());
        assert!(
            serde_json::from_str::<Region>(r#"{"disc":{"center":[0,0],"radius":-1}}"#).is_err()
        );
        let back = serde_json::to_string(&r).unwrap();
        assert_eq!(back, r#"{"disc":{"center":[0.0,0.0],"radius":2.0}}"#);
    }

    #[test]
    fn negative_zero_points_are_equal() {
        assert_eq!(Point::new1(-0.0), Point::new1(0.0));
        assert_eq!(Point::new1(1.0) - Point::new1(1.0), Point::new1(0.0));
    }

    fn arb_box() -> impl Strategy<Value = Region> {
        (-5.0f64..5.0, -5.0f64..5.0, 0.01f64..4.0, 0.01f64..4.0).prop_map(|(x, y, w, h)| {
            Region::boxed(Point::new2(x, y), Point::new2(x + w, y + h)).unwrap()
        })
    }

    // Oracle for S^{-ε} on boxes: the closed ball (under L∞) around p stays in S.
    fn ball_inside(b: &Region, p: &Point, eps: f64) -> bool {
        let Region::Box { lower, upper } = b else {
            unreachable!()
        };
        p.coords()
            .iter()
            .zip(lower.coords().iter().zip(upper.coords()))
            .all(|(v, (l, u))| v - eps >= *l && v + eps <= *u)
    }

    proptest! {
        #[test]
        fn erosion_is_complement_of_dilated_complement(
            b in arb_box(), eps in 0.0f64..2.0, px in -8.0f64..8.0, py in -8.0f64..8.0
        ) {
            let p = Point::new2(px, py);
            let eroded = b.neighbor_minus(eps, NormKind::LInf).unwrap();
            prop_assert_eq!(eroded.contains(&p), ball_inside(&b, &p, eps));
        }

        #[test]
        fn neighborhoods_are_monotone(
            b in arb_box(), e1 in 0.0f64..2.0, de in 0.0f64..2.0, px in -8.0f64..8.0, py in -8.0f64..8.0
        ) {
            let e2 = e1 + de;
            let p = Point::new2(px, py);
            let plus1 = b.neighbor_plus(e1, NormKind::LInf).unwrap();
            let plus2 = b.neighbor_plus(e2, NormKind::LInf).unwrap();
            prop_assert!(!plus1.contains(&p) || plus2.contains(&p));
            let minus1 = b.neighbor_minus(e1, NormKind::LInf).unwrap();
            let minus2 = b.neighbor_minus(e2, NormKind::LInf).unwrap();
            prop_assert!(!minus2.contains(&p) || minus1.contains(&p));
            prop_assert!(!b.contains(&p) || plus1.contains(&p));
            prop_assert!(!minus1.contains(&p) || b.contains(&p));
        }

        #[test]
        fn erode_after_dilate_covers_convex_region(
            lo in -5.0f64..5.0, w in 0.01f64..5.0, eps in 0.0f64..3.0, x in -10.0f64..10.0,
            cx in -3.0f64..3.0, cy in -3.0f64..3.0, r in 0.1f64..3.0, px in -8.0f64..8.0, py in -8.0f64..8.0
        ) {
            let s = Region::interval(lo, lo + w).unwrap();
            let back = s.neighbor_plus(eps, NormKind::L2).unwrap().neighbor_minus(eps, NormKind::L2).unwrap();
            let p = Point::new1(x);
            prop_assert!(!s.contains(&p) || back.contains(&p));
            let d = Region::disc(Point::new2(cx, cy), r).unwrap();
            let back = d.neighbor_plus(eps, NormKind::L2).unwrap().neighbor_minus(eps, NormKind::L2).unwrap();
            let q = Point::new2(px, py);
            prop_assert!(!d.contains(&q) || back.contains(&q));
        }
    }
}
