//! Leaks of the uncorrected mechanism, computed by exact enumeration.
//!
//! Two effects are reproduced. Scaling fixed-point noise by `2^n` zeroes its
//! low `n` bits, so the reported value keeps the low bits of the secret.
//! Driving the inverse CDF by an `N`-value generator turns the output law
//! into a step function whose per-cell ratios exceed the theoretical one.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::distributions::{
    bayes_success, bin, empirical_epsilon_cells, empirical_epsilon_detail, pushforward_indexed,
    Cell, DiscreteDistribution, Location, RoundingAlgebra, RoundingGrid,
};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mechanisms::{laplace_inv_cdf, PrivacyParams};
use crate::numrep::{
    fx_add, fx_encode, fx_low_bits, fx_mul_pow2, FixedPointFormat, FixedPointValue,
};

/// Cell width of the fixed-point format used by the attack.
pub const ATTACK_TOTAL_BITS: u32 = 32;

#[derive(Debug, Clone, Serialize)]
pub struct AttackReport {
    pub n_exp: u32,
    pub b: u64,
    pub d: u32,
    #[serde(rename = "N")]
    pub n: u64,
    pub r1: f64,
    pub r2: f64,
    pub z1: FixedPointValue,
    pub z2: FixedPointValue,
    /// Number of distinct reported values.
    pub support_r1: usize,
    pub support_r2: usize,
    pub overlap: usize,
    /// Low-`n`-bit patterns of the reported values, most significant first.
    pub fingerprint_r1: Vec<String>,
    pub fingerprint_r2: Vec<String>,
    /// ε̂ over the cells keyed by the low-bit pattern.
    #[serde(serialize_with = "crate::ser::extended_f64")]
    pub empirical_eps: f64,
    /// ε̂ over individual reported values.
    #[serde(serialize_with = "crate::ser::extended_f64")]
    pub empirical_eps_values: f64,
    /// Bayes success of the best guess between `r1` and `r2` from the value.
    pub distinguish_prob: f64,
    #[serde(skip)]
    pub dist_r1: DiscreteDistribution,
    #[serde(skip)]
    pub dist_r2: DiscreteDistribution,
}

/// Law of `encode(r) + 2^n · encode(X)` where `X` is the unit-scale Laplace
/// primitive evaluated on the `N`-grid.
///
/// The draw `u = 1` has no finite image and is redrawn, so each of the other
/// `N - 1` values carries mass `1/(N-1)`.
pub fn fixedpoint_output(
    n_exp: u32,
    secret: FixedPointValue,
    n: u64,
) -> Result<DiscreteDistribution> {
    let noise = machine_laplacian(secret.format(), n)?;
    let mut atoms = Vec::with_capacity(noise.len());
    for x in noise {
        let v = fx_add(secret, fx_mul_pow2(x, n_exp)?)?;
        atoms.push((Location::Point(Point::new1(v.decode())), 1));
    }
    DiscreteDistribution::from_counts(atoms, n - 1)
}

fn machine_laplacian(format: FixedPointFormat, n: u64) -> Result<Vec<FixedPointValue>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "the attack needs N >= 2, got {n}"
        )));
    }
    let unit = PrivacyParams::new(1.0, 1.0)?;
    (1..n)
        .map(|i| fx_encode(laplace_inv_cdf(i as f64 / n as f64, &unit)?, format))
        .collect()
}

pub fn fixedpoint_attack(n_exp: u32, d: u32, r1: f64, r2: f64, n: u64) -> Result<AttackReport> {
    let format = FixedPointFormat::new(ATTACK_TOTAL_BITS, d)?;
    if n_exp == 0 || n_exp >= ATTACK_TOTAL_BITS {
        return Err(Error::InvalidParameter(format!(
            "n_exp must be in 1..{ATTACK_TOTAL_BITS}, got {n_exp}"
        )));
    }
    let (z1, z2) = (fx_encode(r1, format)?, fx_encode(r2, format)?);
    let (p1, p2) = (
        fixedpoint_output(n_exp, z1, n)?,
        fixedpoint_output(n_exp, z2, n)?,
    );

    let fingerprint = |dist: &DiscreteDistribution| -> Result<Vec<String>> {
        let mut set = BTreeSet::new();
        for loc in dist.support() {
            if let Location::Point(p) = loc {
                set.insert(fx_low_bits(fx_encode(p.x(), format)?, n_exp)?);
            }
        }
        Ok(set.into_iter().collect())
    };
    let by_low_bits = |dist: &DiscreteDistribution| {
        let mask = (1i64 << n_exp) - 1;
        dist.map(|l| match l {
            Location::Point(p) => {
                let z = (p.x() * (1u64 << d) as f64) as i64;
                Location::Cell(Cell::new1(z & mask))
            }
            other => *other,
        })
    };
    let s1: BTreeSet<_> = p1.support().collect();
    let overlap = p2.support().filter(|l| s1.contains(l)).count();

    Ok(AttackReport {
        n_exp,
        b: 1 << n_exp,
        d,
        n,
        r1,
        r2,
        z1,
        z2,
        support_r1: p1.len(),
        support_r2: p2.len(),
        overlap,
        fingerprint_r1: fingerprint(&p1)?,
        fingerprint_r2: fingerprint(&p2)?,
        empirical_eps: empirical_epsilon_cells(&by_low_bits(&p1), &by_low_bits(&p2)),
        empirical_eps_values: empirical_epsilon_cells(&p1, &p2),
        distinguish_prob: bayes_success(&p1, &p2),
        dist_r1: p1,
        dist_r2: p2,
    })
}

/// `(2^n k + h) / 2^d`, a difference of secrets that the low bits expose.
pub fn vulnerable_difference(n_exp: u32, k: i64, h: i64, d: u32) -> Result<f64> {
    let b = 1i64
        .checked_shl(n_exp)
        .filter(|_| n_exp < 62)
        .ok_or_else(|| Error::InvalidParameter(format!("n_exp too large: {n_exp}")))?;
    if !(1..b).contains(&h) {
        return Err(Error::InvalidParameter(format!(
            "h must be in 1..={}, got {h}",
            b - 1
        )));
    }
    Ok((b * k + h) as f64 / 2f64.powi(d as i32))
}

/// Per-cell comparison of the two step-function output laws.
#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    #[serde(rename = "N")]
    pub n: u64,
    pub eps: f64,
    pub sensitivity: f64,
    pub r1: f64,
    pub r2: f64,
    #[serde(rename = "L")]
    pub side: f64,
    /// `e^{rate |r1 - r2|}`.
    pub theoretical_ratio: f64,
    /// Largest `max(p1/p2, p2/p1)` over cells charged by both laws.
    #[serde(serialize_with = "crate::ser::extended_f64")]
    pub max_ratio: f64,
    /// `max_ratio / theoretical_ratio - 1`.
    #[serde(serialize_with = "crate::ser::extended_f64")]
    pub max_excess: f64,
    pub worst_cell: Option<i64>,
    /// Largest excess among cells within `window` of the midpoint of `r1, r2`.
    #[serde(serialize_with = "crate::ser::extended_f64")]
    pub max_excess_central: f64,
    pub window: f64,
    /// Cells charged by exactly one law (ratio `+∞`).
    pub one_sided_cells: usize,
    pub inflated_cells: usize,
    #[serde(serialize_with = "crate::ser::extended_f64")]
    pub empirical_eps: f64,
    #[serde(skip)]
    pub cells: Vec<StepCell>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepCell {
    pub index: i64,
    pub lower: f64,
    pub p1: f64,
    pub p2: f64,
    #[serde(serialize_with = "crate::ser::extended_f64")]
    pub ratio: f64,
}

/// Output law of `r + n(i/N)` binned by the grid, `i = 1..N-1`.
pub fn step_output(
    n: u64,
    params: &PrivacyParams,
    r: f64,
    grid: &RoundingGrid,
) -> Result<DiscreteDistribution> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "the attack needs N >= 2, got {n}"
        )));
    }
    let noise: Vec<f64> = (1..n)
        .map(|i| laplace_inv_cdf(i as f64 / n as f64, params))
        .collect::<Result<_>>()?;
    let raw = pushforward_indexed(n - 1, 1, |idx| {
        Location::Point(Point::new1(r + noise[(idx[0] - 1) as usize]))
    })?;
    Ok(bin(&raw, &RoundingAlgebra::new(*grid)))
}

pub fn step_distribution_attack(
    n: u64,
    params: &PrivacyParams,
    r1: f64,
    r2: f64,
    grid: &RoundingGrid,
    window: f64,
) -> Result<StepReport> {
    if grid.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: grid.dim(),
        });
    }
    let p1 = step_output(n, params, r1, grid)?;
    let p2 = step_output(n, params, r2, grid)?;
    let theoretical = (params.rate() * (r1 - r2).abs()).exp();
    let mid = 0.5 * (r1 + r2);
    let den = p1.denominator() as f64;

    let mut cells: BTreeSet<i64> = BTreeSet::new();
    for loc in p1.support().chain(p2.support()) {
        if let Location::Cell(c) = loc {
            cells.insert(c.index()[0]);
        }
    }
    let mut report = StepReport {
        n,
        eps: params.eps(),
        sensitivity: params.sensitivity(),
        r1,
        r2,
        side: grid.side(),
        theoretical_ratio: theoretical,
        max_ratio: 1.0,
        max_excess: 0.0,
        worst_cell: None,
        max_excess_central: 0.0,
        window,
        one_sided_cells: 0,
        inflated_cells: 0,
        empirical_eps: empirical_epsilon_detail(&p1, &p2).value,
        cells: Vec::with_capacity(cells.len()),
    };
    for idx in cells {
        let loc = Location::Cell(Cell::new1(idx));
        let (a, b) = (p1.count_of(&loc), p2.count_of(&loc));
        let lower = grid.origin().x() + idx as f64 * grid.side();
        let ratio = if a == 0 || b == 0 {
            report.one_sided_cells += 1;
            f64::INFINITY
        } else {
            let r = a.max(b) as f64 / a.min(b) as f64;
            let excess = r / theoretical - 1.0;
            if r > report.max_ratio {
                report.max_ratio = r;
                report.max_excess = excess;
                report.worst_cell = Some(idx);
            }
            let center = lower + 0.5 * grid.side();
            if (center - mid).abs() <= window {
                report.max_excess_central = report.max_excess_central.max(excess);
            }
            if excess > 0.0 {
                report.inflated_cells += 1;
            }
            r
        };
        report.cells.push(StepCell {
            index: idx,
            lower,
            p1: a as f64 / den,
            p2: b as f64 / den,
            ratio,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_one() {
        let r = fixedpoint_attack(2, 6, 0.0, 1.0 + 2f64.powi(-5), 1 << 12).unwrap();
        assert_eq!(r.z2.z(), 66);
        assert_eq!(r.fingerprint_r1, vec!["00"]);
        assert_eq!(r.fingerprint_r2, vec!["10"]);
        assert_eq!(r.overlap, 0);
        assert_eq!(r.empirical_eps, f64::INFINITY);
        assert_eq!(r.distinguish_prob, 1.0);
    }

    #[test]
    fn vulnerable_pair_at_n_two() {
        let r2 = vulnerable_difference(2, 3, 2, 6).unwrap();
        assert_eq!(r2, 0.21875);
        let r = fixedpoint_attack(2, 6, 0.0, r2, 1 << 12).unwrap();
        assert_eq!(r.overlap, 0);
        assert_eq!(r.empirical_eps, f64::INFINITY);
    }

    #[test]
    fn aligned_difference_is_not_exposed() {
        let r = fixedpoint_attack(2, 6, 0.0, 2f64.powi(-4), 1 << 12).unwrap();
        assert!(r.overlap > 0);
        assert_eq!(r.fingerprint_r1, r.fingerprint_r2);
        assert!(r.empirical_eps.is_finite());
        assert!(r.distinguish_prob < 1.0);
    }

    #[test]
    fn fingerprint_is_the_secret_low_bits() {
        let format = FixedPointFormat::new(ATTACK_TOTAL_BITS, 6).unwrap();
        let secret = fx_encode(0.21875, format).unwrap();
        let want = fx_low_bits(secret, 2).unwrap();
        for x in machine_laplacian(format, 1 << 10).unwrap() {
            let scaled = fx_mul_pow2(x, 2).unwrap();
            assert_eq!(fx_low_bits(scaled, 2).unwrap(), "00");
            assert_eq!(
                fx_low_bits(fx_add(secret, scaled).unwrap(), 2).unwrap(),
                want
            );
        }
    }

    #[test]
    fn vulnerable_difference_examples() {
        assert_eq!(vulnerable_difference(2, 0, 1, 6).unwrap(), 1.0 / 64.0);
        assert!(vulnerable_difference(2, 0, 4, 6).is_err());
        assert!(vulnerable_difference(2, 0, 0, 6).is_err());
    }

    #[test]
    fn step_attack_identical_answers() {
        let p = PrivacyParams::new((4.0f64 / 3.0).ln(), 1.0).unwrap();
        let g = RoundingGrid::new(Point::new1(0.0), 0.25).unwrap();
        let r = step_distribution_attack(1 << 8, &p, 0.5, 0.5, &g, 4.0).unwrap();
        assert_eq!(r.max_ratio, 1.0);
        assert_eq!(r.one_sided_cells, 0);
        assert!(r.cells.iter().all(|c| c.ratio == 1.0));
        assert_eq!(r.empirical_eps, 0.0);
    }

    #[test]
    fn step_attack_inflates_ratio_at_small_n() {
        let p = PrivacyParams::new((4.0f64 / 3.0).ln(), 1.0).unwrap();
        let g = RoundingGrid::new(Point::new1(0.0), 0.25).unwrap();
        let r = step_distribution_attack(1 << 8, &p, 0.0, 1.0, &g, 4.0).unwrap();
        assert!((r.theoretical_ratio - 4.0 / 3.0).abs() < 1e-12);
        assert!(r.max_excess >= 0.33, "{}", r.max_excess);
        let total: f64 = r.cells.iter().map(|c| c.p1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
