//! Run configuration: one TOML file with sections, plus `--set` overrides.

use std::path::{Path, PathBuf};

use fpdp_core::distributions::RoundingGrid;
use fpdp_core::geometry::{Point, Region};
use fpdp_core::mechanisms::{Mechanism, NoiseKind, PrivacyParams, TruncationMode};
use fpdp_core::numrep::{Bias, UniformGeneratorModel};
use fpdp_core::robustness::{BudgetInputs, LipschitzMode};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mechanism: MechanismSection,
    pub model: ModelSection,
    pub attack: AttackSection,
    pub verify: VerifySection,
    pub query: QuerySection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseName {
    #[default]
    Laplace,
    Planar,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanismSection {
    pub noise: NoiseName,
    pub eps: f64,
    /// Declared sensitivity `Δf`.
    pub sensitivity: f64,
    /// Implementation error of the query `δf`; `Δf′ = Δf + 2δf`.
    pub delta_impl: f64,
    /// Truncation region `M_r`.
    pub region: Region,
    /// Domain of interest, used for diagnostics only.
    pub domain: Option<Region>,
    /// Rounding cell side `L`.
    pub side: f64,
    pub origin: Option<Vec<f64>>,
    pub truncation: TruncationMode,
    pub lipschitz: LipschitzMode,
    pub delta_r: f64,
}

impl Default for MechanismSection {
    fn default() -> Self {
        Self {
            noise: NoiseName::Laplace,
            eps: std::f64::consts::LN_2,
            sensitivity: 1.0,
            delta_impl: 0.0,
            region: Region::Interval { lo: -2.0, hi: 2.0 },
            domain: None,
            side: 0.0078125,
            origin: None,
            truncation: TruncationMode::Exception,
            lipschitz: LipschitzMode::Fixpoint,
            delta_r: 0.0,
        }
    }
}

/// Generator bias relative to the grid `i/N`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum BiasSpec {
    #[default]
    Identity,
    Shift(f64),
    /// `+a` on even grid indices, `-a` on odd ones.
    Alternate(f64),
    Sine {
        amplitude: f64,
        frequency: f64,
    },
}

impl BiasSpec {
    pub fn bound(&self) -> f64 {
        match *self {
            BiasSpec::Identity => 0.0,
            BiasSpec::Shift(a) | BiasSpec::Alternate(a) => a.abs(),
            BiasSpec::Sine { amplitude, .. } => amplitude.abs(),
        }
    }

    pub fn to_bias(self, n: u64) -> Bias {
        match self {
            BiasSpec::Identity => Bias::Identity,
            BiasSpec::Shift(a) => Bias::Shift(a),
            BiasSpec::Alternate(a) => {
                let nf = n as f64;
                Bias::custom(move |u| {
                    if (u * nf).round() as i64 % 2 == 0 {
                        u + a
                    } else {
                        u - a
                    }
                })
            }
            BiasSpec::Sine {
                amplitude,
                frequency,
            } => {
                Bias::custom(move |u| u + amplitude * (std::f64::consts::TAU * frequency * u).sin())
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Number of generator values `N` per coordinate.
    pub n: u64,
    /// Per-draw deviation `δ0` charged by the budget; defaults to
    /// `1/N + bias bound`.
    pub delta0: Option<f64>,
    pub delta_n: f64,
    pub bias: BiasSpec,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            n: 1 << 16,
            delta0: None,
            delta_n: 0.0,
            bias: BiasSpec::Identity,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub fixed_point: FixedPointSection,
    pub step: StepSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointSection {
    pub n_exp: u32,
    pub d: u32,
    pub r1: f64,
    pub r2: f64,
    pub n: u64,
}

impl Default for FixedPointSection {
    fn default() -> Self {
        Self {
            n_exp: 2,
            d: 6,
            r1: 0.0,
            r2: 3.0 / 16.0 + 1.0 / 32.0,
            n: 1 << 16,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSection {
    pub eps: f64,
    pub sensitivity: f64,
    pub r1: f64,
    pub r2: f64,
    pub side: f64,
    pub origin: f64,
    pub n: u64,
    /// Half-width around the midpoint of the secrets for the central excess.
    pub window: f64,
}

impl Default for StepSection {
    fn default() -> Self {
        Self {
            eps: (4.0f64 / 3.0).ln(),
            sensitivity: 1.0,
            r1: 0.0,
            r2: 1.0,
            side: 0.25,
            origin: 0.0,
            n: 1 << 8,
            window: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyTarget {
    /// Truncated and rounded mechanism against `ε′`.
    #[default]
    Corrected,
    /// Uncorrected fixed-point mechanism against the pair's exact `ε`.
    FixedPoint,
}

/// A point written as a bare number (1D) or a coordinate array.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Scalar(f64),
    Coords(Vec<f64>),
}

impl PointSpec {
    pub fn to_point(&self) -> Result<Point, CliError> {
        match self {
            PointSpec::Scalar(x) => Ok(Point::new1(*x)),
            PointSpec::Coords(c) => Point::from_slice(c).map_err(CliError::config),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub target: VerifyTarget,
    /// Explicit answer pairs; when empty a random walk of `walk` steps of
    /// length at most `Δf′` is used.
    pub pairs: Vec<(PointSpec, PointSpec)>,
    pub walk: usize,
    pub seed: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            target: VerifyTarget::Corrected,
            pairs: Vec::new(),
            walk: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    #[default]
    Count,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareOp {
    #[default]
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

/// Right-hand side of a predicate: compared numerically when both sides
/// parse as numbers, otherwise as text.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum QueryValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuerySection {
    pub kind: QueryKind,
    /// Column read by the predicate (count) or summed (sum).
    pub column: Option<String>,
    pub op: CompareOp,
    pub value: Option<QueryValue>,
    /// Clamp range of summed values; fixes `Δf = max(|lower|, |upper|)`.
    pub lower: f64,
    pub upper: f64,
    pub delta_impl: f64,
}

impl Default for QuerySection {
    fn default() -> Self {
        Self {
            kind: QueryKind::Count,
            column: None,
            op: CompareOp::Eq,
            value: None,
            lower: 0.0,
            upper: 1.0,
            delta_impl: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// JSON report path; stdout when absent.
    pub json: Option<PathBuf>,
    /// CSV plot data path.
    pub csv: Option<PathBuf>,
}

impl RunConfig {
    /// Reads `path` (or starts from defaults) and applies `section.key=value`
    /// overrides, each value parsed as a TOML value or else taken as a string.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let m = &self.mechanism;
        self.params()?;
        if !(m.side.is_finite() && m.side > 0.0) {
            return Err(CliError::Config(format!(
                "mechanism.side must be > 0, got {}",
                m.side
            )));
        }
        if !(m.delta_r >= 0.0 && self.model.delta_n >= 0.0) {
            return Err(CliError::Config(
                "mechanism.delta_r and model.delta_n must be >= 0".into(),
            ));
        }
        if let Some(d0) = self.model.delta0 {
            if !(d0 >= 0.0) {
                return Err(CliError::Config(format!(
                    "model.delta0 must be >= 0, got {d0}"
                )));
            }
        }
        if self.model.n < 2 {
            return Err(CliError::Config("model.n must be >= 2".into()));
        }
        let dim = self.dim();
        if m.region.dim() != Some(dim) {
            return Err(CliError::Config(format!(
                "mechanism.region must be {dim}-dimensional for {:?} noise",
                m.noise
            )));
        }
        if let Some(d) = &m.domain {
            if d.dim() != Some(dim) {
                return Err(CliError::Config(format!(
                    "mechanism.domain must be {dim}-dimensional"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self.mechanism.noise {
            NoiseName::Laplace => 1,
            NoiseName::Planar => 2,
        }
    }

    /// `(ε, Δf′)`.
    pub fn params(&self) -> Result<PrivacyParams, CliError> {
        let m = &self.mechanism;
        let sens = fpdp_core::mechanisms::inflated_sensitivity(m.sensitivity, m.delta_impl);
        PrivacyParams::new(m.eps, sens).map_err(CliError::config)
    }

    pub fn grid(&self) -> Result<RoundingGrid, CliError> {
        let origin = match &self.mechanism.origin {
            Some(c) => Point::from_slice(c).map_err(CliError::config)?,
            None => Point::origin(self.dim()),
        };
        if origin.dim() != self.dim() {
            return Err(CliError::Config(format!(
                "mechanism.origin must have {} coordinates",
                self.dim()
            )));
        }
        RoundingGrid::new(origin, self.mechanism.side).map_err(CliError::config)
    }

    pub fn mechanism(&self) -> Result<Mechanism, CliError> {
        self.mechanism_with(self.params()?)
    }

    pub fn mechanism_with(&self, params: PrivacyParams) -> Result<Mechanism, CliError> {
        let noise = match self.mechanism.noise {
            NoiseName::Laplace => NoiseKind::Laplace,
            NoiseName::Planar => NoiseKind::Planar,
        };
        Mechanism::new(
            params,
            noise,
            self.mechanism.region.clone(),
            self.grid()?,
            self.mechanism.truncation,
        )
        .map_err(CliError::config)
    }

    pub fn model(&self) -> Result<UniformGeneratorModel, CliError> {
        let n = self.model.n;
        let bias = self.model.bias;
        UniformGeneratorModel::new(n, bias.bound(), bias.to_bias(n)).map_err(CliError::config)
    }

    /// Deviation of the enumerated generator from a continuous draw.
    pub fn model_deviation(&self) -> f64 {
        1.0 / self.model.n as f64 + self.model.bias.bound()
    }

    /// `δ0` for `analyze`: the configured value, else the model deviation.
    pub fn analysis_delta0(&self) -> f64 {
        self.model.delta0.unwrap_or_else(|| self.model_deviation())
    }

    /// `δ0` for `verify`, never less than the model deviation so that the
    /// enumerated generator is covered by the budget.
    pub fn verify_delta0(&self) -> f64 {
        self.analysis_delta0().max(self.model_deviation())
    }

    pub fn budget_inputs(&self, delta0: f64) -> Result<BudgetInputs, CliError> {
        Ok(BudgetInputs {
            params: self.params()?,
            region: self.mechanism.region.clone(),
            side: self.mechanism.side,
            delta0,
            delta_n: self.model.delta_n,
            delta_r: self.mechanism.delta_r,
            mode: self.mechanism.lipschitz,
        })
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.dim() == 2 && self.mechanism.domain.as_ref() == Some(&self.mechanism.region) {
            out.push(
                "the domain of interest equals M_r; choose M_r strictly larger so that \
                 answers near its border are not truncated most of the time"
                    .into(),
            );
        }
        out
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {item:?} is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("bad override key {path:?}")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = keys.split_last().expect("non-empty");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{path}: {k} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
