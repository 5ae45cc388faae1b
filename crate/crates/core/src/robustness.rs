//! From implementation-error bounds to a certified privacy level.
//!
//! The chain is: a Lipschitz constant `k` of the exact noise map on the safe
//! region `U_r`, the total shift `δt = kδ0 + δn`, the rounding ratio `R`, and
//! finally `ε′ = ε + ln(1 + R e^{ε(L+δt)/Δf′})`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::distributions::{empirical_epsilon_detail, DiscreteDistribution, Location};
use crate::error::{Error, Result};
use crate::geometry::{distance, norm, NormKind, Point, Region};
use crate::mechanisms::{planar_radius_density, Mechanism, PrivacyParams};
use crate::numrep::UniformGeneratorModel;

/// `(2Δ/ε) e^{ε diam/Δ}`: the largest slope of the 1D Laplace inverse CDF
/// over the draws whose noise has magnitude at most `diam`.
pub fn lipschitz_bound_1d(eps: f64, sensitivity: f64, diam: f64) -> f64 {
    2.0 * sensitivity / eps * (eps * diam / sensitivity).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanarLipschitz {
    pub k_c: f64,
    pub k: f64,
}

/// Closed-form planar constants `K_C = e^{ε diam}/(2ε + rε²)` and
/// `k = √(K_C² + 2π diam)`, with `r = diam` unless overridden.
///
/// `K_C` does not bound the slope of `C^{-1}` near the origin, where it is
/// unbounded; see [`planar_closeness_bound`] for a bound that is sound.
pub fn lipschitz_bound_2d(eps: f64, diam: f64, r_override: Option<f64>) -> PlanarLipschitz {
    let r = r_override.unwrap_or(diam);
    let k_c = (eps * diam).exp() / (2.0 * eps + r * eps * eps);
    PlanarLipschitz {
        k_c,
        k: (k_c * k_c + 2.0 * PI * diam).sqrt(),
    }
}

/// Closeness constants for the polar sampler that hold on all of
/// `{u : r(u) <= rho}` when each draw is off by at most `delta0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanarBound {
    /// Slope of `C^{-1}` on `[r0, rho]`.
    pub k_r: f64,
    /// `k_r + 2π rho`.
    pub k: f64,
    /// Radius below which the slope is not charged; it is paid for as an
    /// additive error instead.
    pub r0: f64,
}

/// `C^{-1}` has slope `1/C′(r) = e^{εr}/(ε² r)`, unbounded at 0. Splitting at
/// `r0` gives `|r(u) - r(v)| <= k_r |u - v| + r0` with `k_r` the larger slope
/// at `r0` and `rho`. The angle contributes at most `2π rho |Δu_θ|`. `r0` is
/// chosen to minimize the resulting shift `k δ0 + r0`.
pub fn planar_closeness_bound(rate: f64, rho: f64, delta0: f64) -> Result<PlanarBound> {
    if !(rate > 0.0 && rho > 0.0 && delta0 >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "planar bound needs rate > 0, rho > 0, delta0 >= 0 (got {rate}, {rho}, {delta0})"
        )));
    }
    let slope = |r: f64| 1.0 / planar_radius_density(r, rate);
    let at = |r0: f64| {
        let k_r = slope(r0).max(slope(rho));
        let k = k_r + 2.0 * PI * rho;
        (k * delta0 + r0, PlanarBound { k_r, k, r0 })
    };
    if delta0 == 0.0 {
        // without draw error r0 is pure cost; keep it negligible
        return Ok(at(rho * 1e-12).1);
    }
    // scan log-spaced r0 in (0, rho], then refine around the best point
    let (lo, hi) = ((rho * 1e-15).ln(), rho.ln());
    let steps = 400;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=steps {
        let x = lo + (hi - lo) * i as f64 / steps as f64;
        let (cost, _) = at(x.exp());
        if cost < best.0 {
            best = (cost, x);
        }
    }
    let h = (hi - lo) / steps as f64;
    let (mut a, mut b) = (best.1 - h, (best.1 + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if at(c.exp()).0 <= at(d.exp()).0 {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(at((0.5 * (a + b)).exp()).1)
}

pub fn delta_t(k: f64, delta0: f64, delta_n: f64) -> f64 {
    k * delta0 + delta_n
}

fn check_grid(side: f64, delta_t: f64) -> Result<()> {
    if !(side > 2.0 * delta_t) || !side.is_finite() {
        return Err(Error::DegenerateGrid {
            side,
            twice_delta_t: 2.0 * delta_t,
        });
    }
    Ok(())
}

fn check_dimension(dim: usize) -> Result<()> {
    if !(1..=2).contains(&dim) {
        return Err(Error::InvalidParameter(format!(
            "dimension must be 1 or 2, got {dim}"
        )));
    }
    Ok(())
}

/// `((L + 2δt)/(L - 2δt))^m`.
pub fn rounding_ratio(side: f64, delta_t: f64, dim: usize) -> Result<f64> {
    check_grid(side, delta_t)?;
    check_dimension(dim)?;
    Ok(((side + 2.0 * delta_t) / (side - 2.0 * delta_t)).powi(dim as i32))
}

/// `λ(S^{+δt} \ S^{-δt}) / λ(S^{-δt})` for a cube `S` of side `L`, with the
/// dilation taken as the enclosing cube of side `L + 2δt`.
pub fn rounding_ratio_volume(side: f64, delta_t: f64, dim: usize) -> Result<f64> {
    check_grid(side, delta_t)?;
    check_dimension(dim)?;
    let m = dim as i32;
    let inner = (side - 2.0 * delta_t).powi(m);
    Ok(((side + 2.0 * delta_t).powi(m) - inner) / inner)
}

/// `ε + ln(1 + R e^{ε(L + δt)/Δf′})`.
pub fn epsilon_prime(eps: f64, ratio: f64, cell_diam: f64, delta_t: f64, sensitivity: f64) -> f64 {
    eps + (ratio * (eps * (cell_diam + delta_t) / sensitivity).exp()).ln_1p()
}

/// Outcome of a `(k, δ)`-closeness check on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    /// `d(n(u), n′(v)) > k d(u, v) + δ`.
    Fails {
        u: f64,
        v: f64,
        gap: f64,
        bound: f64,
    },
    /// `d(n(u), n(v)) > k d(u, v) + 2δ`: no implementation can be close.
    Impossible {
        u: f64,
        v: f64,
        gap: f64,
        bound: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosenessCertificate {
    pub k: f64,
    pub delta: f64,
    pub grid_points: usize,
    pub window: usize,
    #[serde(flatten)]
    pub verdict: Verdict,
}

impl ClosenessCertificate {
    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}

/// Checks `d(n(u), n′(v)) <= k |u - v| + δ` on a sorted 1D grid.
///
/// The diagonal and all pairs at most `window` grid steps apart are checked
/// directly. Farther pairs follow from the diagonal once every consecutive
/// slope of `n` is at most `k`, by the triangle inequality; a steeper slope is
/// reported as [`Error::GridTooCoarse`] unless it already witnesses
/// impossibility.
pub fn closeness_check(
    n: impl Fn(f64) -> Point,
    n_impl: impl Fn(f64) -> Point,
    grid: &[f64],
    k: f64,
    delta: f64,
    window: usize,
    kind: NormKind,
) -> Result<ClosenessCertificate> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(
            "closeness grid must be strictly increasing".into(),
        ));
    }
    let exact: Vec<Point> = grid.iter().map(|&u| n(u)).collect();
    let implemented: Vec<Point> = grid.iter().map(|&u| n_impl(u)).collect();
    let cert = |verdict| ClosenessCertificate {
        k,
        delta,
        grid_points: grid.len(),
        window,
        verdict,
    };
    let w = window.max(1);

    for i in 0..grid.len() {
        for j in i + 1..(i + w + 1).min(grid.len()) {
            let gap = distance(&exact[i], &exact[j], kind)?;
            let bound = k * (grid[j] - grid[i]) + 2.0 * delta;
            if gap > bound {
                return Ok(cert(Verdict::Impossible {
                    u: grid[i],
                    v: grid[j],
                    gap,
                    bound,
                }));
            }
        }
    }
    for i in 1..grid.len() {
        let slope = distance(&exact[i], &exact[i - 1], kind)? / (grid[i] - grid[i - 1]);
        if slope > k {
            return Err(Error::GridTooCoarse {
                u: grid[i - 1],
                v: grid[i],
                slope,
                k,
            });
        }
    }
    for i in 0..grid.len() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(grid.len());
        for j in lo..hi {
            let gap = distance(&exact[i], &implemented[j], kind)?;
            let bound = k * (grid[i] - grid[j]).abs() + delta;
            if gap > bound {
                return Ok(cert(Verdict::Fails {
                    u: grid[i],
                    v: grid[j],
                    gap,
                    bound,
                }));
            }
        }
    }
    Ok(cert(Verdict::Holds))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub holds: bool,
    /// Indices `(x, y)` with `‖g(x)‖ <= ‖g(y)‖` but `‖g′(x)‖ > ‖g′(y)‖`.
    pub witness: Option<(usize, usize)>,
}

/// Checks that `‖g(x)‖ <= ‖g(y)‖` implies `‖g′(x)‖ <= ‖g′(y)‖` on every pair
/// of domain points.
pub fn monotonicity_check<T>(
    domain: &[T],
    g: impl Fn(&T) -> Point,
    g_impl: impl Fn(&T) -> Point,
    kind: NormKind,
) -> MonotonicityReport {
    let mut v: Vec<(f64, f64, usize)> = domain
        .iter()
        .enumerate()
        .map(|(i, x)| (norm(&g(x), kind), norm(&g_impl(x), kind), i))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // Walking in order of ‖g‖, every ‖g′‖ must dominate the largest ‖g′‖ seen
    // so far. Within a tie group of ‖g‖ the implication runs both ways, so
    // the group must also be constant in ‖g′‖.
    let mut prev_max: Option<(f64, usize)> = None;
    let mut start = 0;
    while start < v.len() {
        let mut end = start + 1;
        while end < v.len() && v[end].0 == v[start].0 {
            end += 1;
        }
        let group = &v[start..end];
        let (lo, hi) = (group[0], group[group.len() - 1]);
        if lo.1 != hi.1 {
            return MonotonicityReport {
                holds: false,
                witness: Some((hi.2, lo.2)),
            };
        }
        if let Some((m, idx)) = prev_max {
            if lo.1 < m {
                return MonotonicityReport {
                    holds: false,
                    witness: Some((idx, lo.2)),
                };
            }
        }
        if prev_max.map_or(true, |(m, _)| hi.1 >= m) {
            prev_max = Some((hi.1, hi.2));
        }
        start = end;
    }
    MonotonicityReport {
        holds: true,
        witness: None,
    }
}

/// Result of the dilation fixpoint that fixes `U_r`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixpointResult {
    /// `U_r = {u : ‖n(u)‖ <= ur_radius}`.
    pub ur_radius: f64,
    pub k: f64,
    pub delta_n: f64,
    pub delta_t: f64,
    pub iterations: usize,
    /// Draws outside `U_r` have noise beyond `diam(M_r) + δt`, so their
    /// answer cannot land in `M_r^{+δt}`.
    pub tail_excluded: bool,
}

pub const FIXPOINT_MAX_ITER: usize = 100;
pub const FIXPOINT_TOL: f64 = 1e-9;

/// Iterates `(k, δn) = oracle(cap)` with `cap = diam(M_r^{+t}) + δr` and
/// `t = kδ0 + δn` until `t` is stable.
///
/// The first call uses `M_r` itself. Fails with [`Error::Divergence`] after
/// [`FIXPOINT_MAX_ITER`] updates or as soon as `t` is not finite.
pub fn ur_fixpoint(
    region: &Region,
    delta_r: f64,
    delta0: f64,
    kind: NormKind,
    mut oracle: impl FnMut(f64) -> Result<(f64, f64)>,
) -> Result<FixpointResult> {
    if !(delta_r >= 0.0 && delta0 >= 0.0) {
        return Err(Error::InvalidParameter(
            "delta_r and delta0 must be >= 0".into(),
        ));
    }
    let diam = region.diameter(kind);
    let cap_for = |t: f64| diam + 2.0 * t + delta_r;
    let mut cap = cap_for(0.0);
    let (mut k, mut dn) = oracle(cap)?;
    let mut t = delta_t(k, delta0, dn);
    for it in 1..=FIXPOINT_MAX_ITER {
        if !t.is_finite() {
            return Err(Error::Divergence {
                iterations: it,
                last_shift: t,
            });
        }
        cap = cap_for(t);
        (k, dn) = oracle(cap)?;
        let next = delta_t(k, delta0, dn);
        if !next.is_finite() {
            return Err(Error::Divergence {
                iterations: it,
                last_shift: next,
            });
        }
        if (next - t).abs() <= FIXPOINT_TOL * next.max(1.0) {
            return Ok(FixpointResult {
                ur_radius: cap,
                k,
                delta_n: dn,
                delta_t: next,
                iterations: it,
                tail_excluded: cap >= diam + next,
            });
        }
        t = next;
    }
    Err(Error::Divergence {
        iterations: FIXPOINT_MAX_ITER,
        last_shift: t,
    })
}

/// Largest `‖f(x_{i+1}) - f(x_i)‖ / (x_{i+1} - x_i)` over a sorted grid.
pub fn max_finite_difference_slope(f: impl Fn(f64) -> f64, grid: &[f64]) -> f64 {
    grid.windows(2)
        .map(|w| (f(w[1]) - f(w[0])).abs() / (w[1] - w[0]))
        .fold(0.0, f64::max)
}

/// How `k` is obtained for a budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LipschitzMode {
    /// Iterate the dilation fixpoint with the sound bound of the sampler.
    #[default]
    Fixpoint,
    /// Closed forms evaluated at `diam(M_r)`.
    ClosedForm,
}

/// Inputs of a robustness analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetInputs {
    pub params: PrivacyParams,
    pub region: Region,
    pub side: f64,
    /// Per-draw deviation of the generator from a continuous uniform draw.
    pub delta0: f64,
    pub delta_n: f64,
    pub delta_r: f64,
    pub mode: LipschitzMode,
}

/// Every quantity entering `ε′`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessBudget {
    pub eps: f64,
    pub sensitivity: f64,
    pub dimension: usize,
    pub diam_mr: f64,
    pub delta_r: f64,
    pub lipschitz: LipschitzMode,
    pub k: f64,
    pub delta0: f64,
    /// Implementation error of the noise map as supplied.
    pub delta_n: f64,
    /// Additive error charged by the planar bound near the origin; 0 in 1D.
    pub delta_extra: f64,
    pub delta_t: f64,
    #[serde(rename = "L")]
    pub side: f64,
    /// Largest diameter of a rounding cell, `L √m`.
    pub cell_diam: f64,
    #[serde(rename = "R")]
    pub ratio: f64,
    #[serde(rename = "R_volume")]
    pub ratio_volume: f64,
    pub eps_prime: f64,
    pub ur_radius: f64,
    pub fixpoint_iterations: Option<usize>,
    pub tail_excluded: bool,
    /// Closed-form constants for reference: `dn_max` in 1D, `(K_C, k)` in 2D.
    pub closed_form: ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedForm {
    pub k: f64,
    pub k_c: Option<f64>,
    pub delta_t: f64,
    pub eps_prime: Option<f64>,
}

/// Derives the full budget for the Laplace (1D) or planar (2D) sampler.
pub fn analyze(inputs: &BudgetInputs) -> Result<RobustnessBudget> {
    let BudgetInputs {
        params,
        region,
        side,
        delta0,
        delta_n,
        delta_r,
        mode,
    } = inputs;
    let dim = region
        .dim()
        .ok_or_else(|| Error::InvalidParameter("M_r must not be empty".into()))?;
    check_dimension(dim)?;
    for (name, v) in [
        ("delta0", *delta0),
        ("delta_n", *delta_n),
        ("delta_r", *delta_r),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be finite and >= 0, got {v}"
            )));
        }
    }
    let kind = NormKind::L2;
    let diam = region.diameter(kind);
    let (eps, sens, rate) = (params.eps(), params.sensitivity(), params.rate());

    let closed = if dim == 1 {
        let k = lipschitz_bound_1d(eps, sens, diam);
        (k, None, delta_t(k, *delta0, *delta_n))
    } else {
        let pl = lipschitz_bound_2d(rate, diam, None);
        (pl.k, Some(pl.k_c), delta_t(pl.k, *delta0, *delta_n))
    };

    // (k, additive error) of the sound bound at a noise radius cap
    let sound = |cap: f64| -> Result<(f64, f64)> {
        if dim == 1 {
            Ok((lipschitz_bound_1d(eps, sens, cap), *delta_n))
        } else {
            let b = planar_closeness_bound(rate, cap, *delta0)?;
            Ok((b.k, delta_n + b.r0))
        }
    };

    let (k, dn_total, ur_radius, iterations, tail_excluded) = match mode {
        LipschitzMode::Fixpoint => {
            let fp = ur_fixpoint(region, *delta_r, *delta0, kind, sound)?;
            (
                fp.k,
                fp.delta_n,
                fp.ur_radius,
                Some(fp.iterations),
                fp.tail_excluded,
            )
        }
        LipschitzMode::ClosedForm => {
            let (k, dn) = if dim == 1 {
                (closed.0, *delta_n)
            } else {
                sound(diam + delta_r)?
            };
            let t = delta_t(k, *delta0, dn);
            let cap = diam + delta_r;
            (k, dn, cap, None, cap >= diam + t)
        }
    };
    let dt = delta_t(k, *delta0, dn_total);
    let ratio = rounding_ratio(*side, dt, dim)?;
    let ratio_volume = rounding_ratio_volume(*side, dt, dim)?;
    let cell_diam = side * (dim as f64).sqrt();
    let eps_prime = epsilon_prime(eps, ratio, cell_diam, dt, sens);
    let closed_eps_prime = rounding_ratio(*side, closed.2, dim)
        .ok()
        .map(|r| epsilon_prime(eps, r, cell_diam, closed.2, sens));

    Ok(RobustnessBudget {
        eps,
        sensitivity: sens,
        dimension: dim,
        diam_mr: diam,
        delta_r: *delta_r,
        lipschitz: *mode,
        k,
        delta0: *delta0,
        delta_n: *delta_n,
        delta_extra: dn_total - delta_n,
        delta_t: dt,
        side: *side,
        cell_diam,
        ratio,
        ratio_volume,
        eps_prime,
        ur_radius,
        fixpoint_iterations: iterations,
        tail_excluded,
        closed_form: ClosedForm {
            k: closed.0,
            k_c: closed.1,
            delta_t: closed.2,
            eps_prime: closed_eps_prime,
        },
    })
}

/// Outcome of the exhaustive privacy check on one pair of answers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCheck {
    pub r1: Point,
    pub r2: Point,
    pub distance: f64,
    #[serde(serialize_with = "crate::ser::extended_f64")]
    pub eps_hat: f64,
    pub worst_cell: Option<Location>,
    pub holds: bool,
}

/// Enumerates the output law of `mech` under `model` for every answer in
/// `pairs` and compares `ε̂` of each pair with `eps_prime`.
///
/// Each distinct answer is pushed forward once.
pub fn verify_pairs(
    mech: &Mechanism,
    model: &UniformGeneratorModel,
    pairs: &[(Point, Point)],
    eps_prime: f64,
) -> Result<Vec<PairCheck>> {
    let table = mech.noise_table(model)?;
    let mut cache: std::collections::HashMap<Point, DiscreteDistribution> = Default::default();
    let mut out = Vec::with_capacity(pairs.len());
    for (r1, r2) in pairs {
        for r in [r1, r2] {
            if !cache.contains_key(r) {
                let d = mech.output_distribution_with(r, &table)?;
                cache.insert(*r, d);
            }
        }
        let e = empirical_epsilon_detail(&cache[r1], &cache[r2]);
        out.push(PairCheck {
            r1: *r1,
            r2: *r2,
            distance: distance(r1, r2, NormKind::L2)?,
            eps_hat: e.value,
            worst_cell: e.worst_cell,
            holds: e.value <= eps_prime,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{laplace_inv_cdf, planar_radius_inv};
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn lipschitz_1d_examples() {
        assert!(rel(lipschitz_bound_1d(1.0, 1.0, 2.0), 14.778112197861300454) < 1e-14);
        assert_eq!(lipschitz_bound_1d(1.0, 1.0, 0.0), 2.0);
    }

    #[test]
    fn lipschitz_1d_dominates_slopes() {
        let p = PrivacyParams::new(1.0, 1.0).unwrap();
        let diam: f64 = 2.0;
        // U_r = {u : |n(u)| <= diam} = [e^{-2}/2, 1 - e^{-2}/2]
        let a = 0.5 * (-diam).exp();
        let grid: Vec<f64> = (0..=10_000)
            .map(|i| a + (1.0 - 2.0 * a) * i as f64 / 10_000.0)
            .collect();
        let slope = max_finite_difference_slope(|u| laplace_inv_cdf(u, &p).unwrap(), &grid);
        assert!(slope <= lipschitz_bound_1d(1.0, 1.0, diam));
    }

    #[test]
    fn lipschitz_2d_examples() {
        let pl = lipschitz_bound_2d(1.0, 1.0, None);
        assert!(rel(pl.k_c, 0.90609394281968174512) < 1e-14);
        assert!(rel(pl.k, 2.6653689313853163410) < 1e-14);
        let over = lipschitz_bound_2d(1.0, 1.0, Some(0.0));
        assert!(rel(over.k_c, std::f64::consts::E / 2.0) < 1e-14);
    }

    #[test]
    fn planar_bound_is_sound_on_a_grid() {
        let (rate, rho, d0) = (1.0, 3.0, 1e-4);
        let b = planar_closeness_bound(rate, rho, d0).unwrap();
        let top = crate::mechanisms::planar_radius_cdf(rho, rate);
        let m = 20_000;
        let grid: Vec<f64> = (0..=m).map(|i| top * i as f64 / m as f64).collect();
        let r: Vec<f64> = grid
            .iter()
            .map(|&u| planar_radius_inv(u, rate).unwrap())
            .collect();
        for i in 0..grid.len() {
            for j in i + 1..(i + 40).min(grid.len()) {
                assert!(r[j] - r[i] <= b.k_r * (grid[j] - grid[i]) + b.r0 + 1e-12);
            }
        }
        assert!(b.k > b.k_r && b.r0 > 0.0);
    }

    #[test]
    fn delta_t_examples() {
        assert_eq!(delta_t(5.0, 0.0, 0.0), 0.0);
        assert!(
            rel(
                delta_t(14.7781, 2f64.powi(-32), 1e-9),
                4.440794534981250763e-9
            ) < 1e-12
        );
        assert_eq!(delta_t(0.0, 0.1, 0.2), 0.2);
    }

    #[test]
    fn rounding_ratio_examples() {
        assert_eq!(rounding_ratio(0.5, 0.0, 1).unwrap(), 1.0);
        assert!((rounding_ratio(1.0, 0.1, 1).unwrap() - 1.5).abs() < 1e-15);
        assert!((rounding_ratio(1.0, 0.1, 2).unwrap() - 2.25).abs() < 1e-14);
        assert!(matches!(
            rounding_ratio(0.2, 0.1, 1),
            Err(Error::DegenerateGrid { .. })
        ));
        assert!((rounding_ratio_volume(1.0, 0.1, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((rounding_ratio_volume(1.0, 0.1, 2).unwrap() - 1.25).abs() < 1e-14);
    }

    #[test]
    fn epsilon_prime_examples() {
        let ln2 = 2f64.ln();
        assert!((epsilon_prime(ln2, 1.0, 0.0, 0.0, 1.0) - 2.0 * ln2).abs() < 1e-15);
        let e = epsilon_prime(ln2, 1.5, 0.01, 0.001, 1.0);
        assert!(rel(e, 1.6140196564426605467) < 1e-14);
        assert!(epsilon_prime(ln2, 2.0, 0.01, 0.001, 1.0) > e);
    }

    #[test]
    fn closeness_examples() {
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let id = |u: f64| Point::new1(u);
        let c = closeness_check(id, id, &grid, 1.0, 0.0, 3, NormKind::L2).unwrap();
        assert!(c.holds());
        let shifted = |u: f64| Point::new1(u + 0.01);
        assert!(
            closeness_check(id, shifted, &grid, 1.0, 0.01 + 1e-12, 3, NormKind::L2)
                .unwrap()
                .holds()
        );
        let c = closeness_check(id, shifted, &grid, 1.0, 0.005, 3, NormKind::L2).unwrap();
        assert!(matches!(c.verdict, Verdict::Fails { .. }));
    }

    #[test]
    fn closeness_detects_impossibility() {
        let p = PrivacyParams::new(1.0, 1.0).unwrap();
        let n = |u: f64| Point::new1(laplace_inv_cdf(u, &p).unwrap());
        let mut grid: Vec<f64> = (1..=15).map(|j| 10f64.powi(-j)).collect();
        grid.extend((1..=15).map(|j| 1.0 - 10f64.powi(-j)));
        grid.push(0.5);
        grid.sort_by(f64::total_cmp);
        for (k, d) in [(1.0, 0.0), (1e6, 0.1), (1e9, 0.5)] {
            let c = closeness_check(n, n, &grid, k, d, 2, NormKind::L2).unwrap();
            assert!(matches!(c.verdict, Verdict::Impossible { .. }), "k={k}");
        }
    }

    #[test]
    fn closeness_grid_guard() {
        let grid = [0.0, 0.5, 1.0];
        let steep = |u: f64| Point::new1(3.0 * u);
        // slope 3 > k = 2 but within the impossibility slack 2δ
        let err = closeness_check(steep, steep, &grid, 2.0, 1.0, 1, NormKind::L2).unwrap_err();
        assert!(matches!(err, Error::GridTooCoarse { .. }));
    }

    #[test]
    fn monotonicity_examples() {
        let dom: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        let p = PrivacyParams::new(1.0, 1.0).unwrap();
        let n = |u: &f64| Point::new1(laplace_inv_cdf(*u, &p).unwrap());
        assert!(monotonicity_check(&dom, n, n, NormKind::L2).holds);
        let wobble =
            |u: &f64| Point::new1(laplace_inv_cdf(*u, &p).unwrap() + 0.3 * (40.0 * u).sin());
        assert!(!monotonicity_check(&dom, n, wobble, NormKind::L2).holds);
    }

    #[test]
    fn fixpoint_examples() {
        let s = Region::interval(-1.0, 1.0).unwrap();
        let r = ur_fixpoint(&s, 0.0, 0.0, NormKind::L2, |_| Ok((3.0, 1e-6))).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.delta_t, 1e-6);
        assert!(r.tail_excluded);

        let mut calls = 0;
        let err = ur_fixpoint(&s, 0.0, 1e-3, NormKind::L2, |_| {
            calls += 1;
            Ok((2f64.powi(calls), 0.0))
        })
        .unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));

        let (eps, d0) = (2f64.ln(), 2f64.powi(-32));
        let mut ks = Vec::new();
        let r = ur_fixpoint(&s, 0.0, d0, NormKind::L2, |cap| {
            let k = lipschitz_bound_1d(eps, 1.0, cap);
            ks.push(k);
            Ok((k, 1e-9))
        })
        .unwrap();
        assert!(ks.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.k > lipschitz_bound_1d(eps, 1.0, 2.0));
    }

    #[test]
    fn analyze_1d_closed_form() {
        let inputs = BudgetInputs {
            params: PrivacyParams::new(2f64.ln(), 1.0).unwrap(),
            region: Region::interval(-1.0, 1.0).unwrap(),
            side: 0.01,
            delta0: 2f64.powi(-32),
            delta_n: 1e-9,
            delta_r: 0.0,
            mode: LipschitzMode::ClosedForm,
        };
        let b = analyze(&inputs).unwrap();
        assert!(rel(b.k, 11.541560327111707259) < 1e-14);
        assert!(rel(b.delta_t, 3.6872289197313849e-9) < 1e-12);
        assert!(rel(b.ratio, 1.0000014748926555) < 1e-12);
        assert!(rel(b.eps_prime, 1.3897668439575056) < 1e-12);
        let fp = analyze(&BudgetInputs {
            mode: LipschitzMode::Fixpoint,
            ..inputs.clone()
        })
        .unwrap();
        assert!(fp.eps_prime >= b.eps_prime);
        let err = analyze(&BudgetInputs {
            side: 1e-9,
            ..inputs
        })
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateGrid { .. }));
    }

    #[test]
    fn analyze_2d_reports_both_bounds() {
        let b = analyze(&BudgetInputs {
            params: PrivacyParams::new(1.0, 1.0).unwrap(),
            region: Region::disc(Point::new2(0.0, 0.0), 2.0).unwrap(),
            side: 1.0,
            delta0: 2.0 / 1024.0,
            delta_n: 0.0,
            delta_r: 0.0,
            mode: LipschitzMode::Fixpoint,
        })
        .unwrap();
        assert_eq!(b.dimension, 2);
        assert!(b.closed_form.k_c.is_some());
        assert!(b.delta_extra > 0.0);
        assert!((b.cell_diam - 2f64.sqrt()).abs() < 1e-15);
        assert!(b.eps_prime > b.eps && b.ratio >= 1.0);
    }

    proptest! {
        #[test]
        fn formulas_are_monotone(
            k in 0f64..100.0, d0 in 0f64..1e-3, dn in 0f64..1e-3,
            side in 0.5f64..4.0, bump in 0f64..1e-3, r in 1f64..3.0,
        ) {
            prop_assert!(delta_t(k + 1.0, d0, dn) >= delta_t(k, d0, dn));
            prop_assert!(delta_t(k, d0 + bump, dn) >= delta_t(k, d0, dn));
            prop_assert!(delta_t(k, d0, dn + bump) >= delta_t(k, d0, dn));
            let t = delta_t(k, d0, dn);
            for dim in [1, 2] {
                let a = rounding_ratio(side, t, dim).unwrap();
                prop_assert!(a >= 1.0);
                prop_assert!(rounding_ratio(side, t + bump, dim).unwrap() >= a);
                prop_assert!(rounding_ratio_volume(side, t, dim).unwrap() <= a);
            }
            let e = epsilon_prime(1.0, r, side, t, 1.0);
            prop_assert!(e > 1.0);
            prop_assert!(epsilon_prime(1.0, r + bump, side, t, 1.0) >= e);
            prop_assert!(epsilon_prime(1.0, r, side + bump, t, 1.0) >= e);
            prop_assert!(epsilon_prime(1.0, r, side, t + bump, 1.0) >= e);
        }

        #[test]
        fn closeness_agrees_with_all_pairs(
            shift in -0.05f64..0.05, k in 0.5f64..3.0, delta in 0f64..0.08, m in 5usize..60,
        ) {
            let grid: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
            let n = |u: f64| Point::new1(0.5 * u + 0.2 * (3.0 * u).sin());
            let n_impl = move |u: f64| Point::new1(0.5 * u + 0.2 * (3.0 * u).sin() + shift * u);
            let Ok(c) = closeness_check(n, n_impl, &grid, k, delta, 2, NormKind::L2) else {
                return Ok(());
            };
            let brute = grid.iter().all(|&u| grid.iter().all(|&v| {
                (n(u).x() - n_impl(v).x()).abs() <= k * (u - v).abs() + delta
            }));
            if !matches!(c.verdict, Verdict::Impossible { .. }) {
                prop_assert_eq!(c.holds(), brute);
            }
        }
    }

    #[test]
    fn verify_pairs_same_answer_is_zero() {
        use crate::distributions::RoundingGrid;
        use crate::mechanisms::{NoiseKind, TruncationMode};
        let params = PrivacyParams::new(2f64.ln(), 1.0).unwrap();
        let mech = Mechanism::new(
            params,
            NoiseKind::Laplace,
            Region::interval(-2.0, 2.0).unwrap(),
            RoundingGrid::new(Point::new1(0.0), 0.25).unwrap(),
            TruncationMode::Exception,
        )
        .unwrap();
        let model = UniformGeneratorModel::exact(1 << 10).unwrap();
        let a = Point::new1(0.5);
        let b = Point::new1(1.5);
        let checks = verify_pairs(&mech, &model, &[(a, a), (a, b)], 10.0).unwrap();
        assert_eq!(checks[0].eps_hat, 0.0);
        assert!(checks[0].holds);
        assert!(checks[1].eps_hat > 0.0 && checks[1].eps_hat.is_finite());
        assert_eq!(checks[1].distance, 1.0);
    }
}
