//! Finite-precision number models.
//!
//! Two things live here: a bit-exact fixed-point representation (a cell
//! holding the integer `z` denotes the real `z * 2^-d`) and the discretized
//! uniform generator that every sampler in this crate is driven by.
//!
//! The generator returns one of `N` grid values `i/N`, `i = 1..=N`, each with
//! probability exactly `1/N`, optionally perturbed by a bias map whose
//! sup-distance to the identity is bounded by `delta0`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported cell width. Every `z` of a 53-bit cell is exactly
/// representable as an `f64`, so decoding never rounds.
pub const MAX_TOTAL_BITS: u32 = 53;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedPointFormat {
    total_bits: u32,
    frac_bits: u32,
}

impl FixedPointFormat {
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        if total_bits == 0 || total_bits > MAX_TOTAL_BITS {
            return Err(Error::InvalidParameter(format!(
                "total_bits must be in 1..={MAX_TOTAL_BITS}, got {total_bits}"
            )));
        }
        if frac_bits > total_bits {
            return Err(Error::InvalidParameter(format!(
                "frac_bits ({frac_bits}) exceeds total_bits ({total_bits})"
            )));
        }
        Ok(Self {
            total_bits,
            frac_bits,
        })
    }

    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Two's complement range of the stored integer.
    pub fn z_min(&self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    pub fn z_max(&self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    /// Spacing between consecutive representable values, `2^-d`.
    pub fn resolution(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    fn contains_z(&self, z: i64) -> bool {
        (self.z_min()..=self.z_max()).contains(&z)
    }
}

/// A stored cell `z` together with its format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedPointValue {
    z: i64,
    format: FixedPointFormat,
}

impl FixedPointValue {
    pub fn from_raw(z: i64, format: FixedPointFormat) -> Result<Self> {
        if !format.contains_z(z) {
            return Err(Error::RangeOverflow {
                value: z as f64 * format.resolution(),
                total_bits: format.total_bits,
                frac_bits: format.frac_bits,
            });
        }
        Ok(Self { z, format })
    }

    pub fn z(&self) -> i64 {
        self.z
    }

    pub fn format(&self) -> FixedPointFormat {
        self.format
    }

    /// Exact real value `z * 2^-d`.
    pub fn decode(&self) -> f64 {
        self.z as f64 * self.format.resolution()
    }
}

// Wire form is {"z": .., "d": ..}; the cell width is not part of it.
impl Serialize for FixedPointValue {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("FixedPointValue", 2)?;
        s.serialize_field("z", &self.z)?;
        s.serialize_field("d", &self.format.frac_bits)?;
        s.end()
    }
}

/// Nearest representable value, ties to even `z`.
pub fn fx_encode(x: f64, format: FixedPointFormat) -> Result<FixedPointValue> {
    let overflow = || Error::RangeOverflow {
        value: x,
        total_bits: format.total_bits,
        frac_bits: format.frac_bits,
    };
    if !x.is_finite() {
        return Err(overflow());
    }
    // scaling by a power of two is exact
    let scaled = x * (format.frac_bits as f64).exp2();
    let z = scaled.round_ties_even();
    if z < format.z_min() as f64 || z > format.z_max() as f64 {
        return Err(overflow());
    }
    Ok(FixedPointValue {
        z: z as i64,
        format,
    })
}

pub fn fx_decode(v: FixedPointValue) -> f64 {
    v.decode()
}

/// Multiplication by `2^n`: a left shift of the stored integer.
pub fn fx_mul_pow2(v: FixedPointValue, n: u32) -> Result<FixedPointValue> {
    let factor = 1i64.checked_shl(n).filter(|_| n < 63);
    let z = factor.and_then(|f| v.z.checked_mul(f));
    match z {
        Some(z) if v.format.contains_z(z) => Ok(FixedPointValue {
            z,
            format: v.format,
        }),
        _ => Err(Error::RangeOverflow {
            value: v.decode() * (n as f64).exp2(),
            total_bits: v.format.total_bits,
            frac_bits: v.format.frac_bits,
        }),
    }
}

pub fn fx_add(a: FixedPointValue, b: FixedPointValue) -> Result<FixedPointValue> {
    if a.format != b.format {
        return Err(Error::InvalidParameter(
            "cannot add fixed-point values of different formats".into(),
        ));
    }
    match a.z.checked_add(b.z) {
        Some(z) if a.format.contains_z(z) => Ok(FixedPointValue {
            z,
            format: a.format,
        }),
        _ => Err(Error::RangeOverflow {
            value: a.decode() + b.decode(),
            total_bits: a.format.total_bits,
            frac_bits: a.format.frac_bits,
        }),
    }
}

/// The `n` least significant bits of `z` in two's complement, most
/// significant first.
pub fn fx_low_bits(v: FixedPointValue, n: u32) -> Result<String> {
    if n == 0 || n > v.format.total_bits {
        return Err(Error::InvalidParameter(format!(
            "bit count {n} outside 1..={}",
            v.format.total_bits
        )));
    }
    let bits = v.z as u64;
    Ok((0..n)
        .rev()
        .map(|i| if (bits >> i) & 1 == 1 { '1' } else { '0' })
        .collect())
}

/// Exact probability `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Mass {
    pub num: u64,
    pub den: u64,
}

impl Mass {
    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Perturbation applied to each grid value of the generator.
#[derive(Clone)]
pub enum Bias {
    Identity,
    /// Adds a constant.
    Shift(f64),
    /// Arbitrary map from grid value to returned value.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Bias {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Bias::Custom(Arc::new(f))
    }

    pub fn apply(&self, u: f64) -> f64 {
        match self {
            Bias::Identity => u,
            Bias::Shift(s) => u + s,
            Bias::Custom(f) => f(u),
        }
    }
}

impl fmt::Debug for Bias {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bias::Identity => write!(f, "Identity"),
            Bias::Shift(s) => write!(f, "Shift({s})"),
            Bias::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// The `N`-value uniform source with a bias bounded by `delta0`.
#[derive(Debug, Clone)]
pub struct UniformGeneratorModel {
    n: u64,
    delta0: f64,
    bias: Bias,
}

impl UniformGeneratorModel {
    /// Unbiased generator.
    pub fn exact(n: u64) -> Result<Self> {
        Self::new(n, 0.0, Bias::Identity)
    }

    /// Validates `|bias(i/N) - i/N| <= delta0` at every grid point. A few
    /// ulps of slack absorb the rounding of `u + shift` itself.
    pub fn new(n: u64, delta0: f64, bias: Bias) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "generator size N must be >= 1".into(),
            ));
        }
        if !(delta0 >= 0.0 && delta0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta0 must be finite and >= 0, got {delta0}"
            )));
        }
        let model = Self { n, delta0, bias };
        if !matches!(model.bias, Bias::Identity) {
            for i in 1..=n {
                let u = model.grid_value(i);
                let dev = (model.bias.apply(u) - u).abs();
                let slack = 4.0 * f64::EPSILON * u.abs().max(1.0);
                if !(dev <= delta0 + slack) {
                    return Err(Error::BiasOutOfBounds {
                        index: i,
                        deviation: dev,
                        delta0,
                    });
                }
            }
        }
        Ok(model)
    }

    pub fn size(&self) -> u64 {
        self.n
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    pub fn bias(&self) -> &Bias {
        &self.bias
    }

    /// Unbiased grid point `i/N`, `1 <= i <= N`.
    pub fn grid_value(&self, i: u64) -> f64 {
        i as f64 / self.n as f64
    }

    /// Value actually returned for index `i`.
    pub fn value(&self, i: u64) -> f64 {
        self.bias.apply(self.grid_value(i))
    }

    /// Worst-case distance between a continuous uniform draw on `]0,1]` and
    /// the value this model returns for it: one grid step plus the bias.
    pub fn total_deviation(&self) -> f64 {
        1.0 / self.n as f64 + self.delta0
    }
}

/// Every value the generator can return together with its exact mass.
pub fn uniform_enumerate(model: &UniformGeneratorModel) -> Vec<(f64, Mass)> {
    (1..=model.n)
        .map(|i| {
            (
                model.value(i),
                Mass {
                    num: 1,
                    den: model.n,
                },
            )
        })
        .collect()
}
