//! Run configuration: one TOML document describing a suite.

use serde::{Deserialize, Serialize};

use crate::entropy::EntropyOrder;
use crate::error::{Error, Result};
use crate::lab::BinWidths;
use crate::measurement::{AcceptanceProfile, ProfileKind};
use crate::states::{GaussianSpec, RandomSuperpositionSpec};
use crate::transforms::DEFAULT_LEAKAGE_CAP;

pub const SCHEMA_VERSION: u32 = 1;

const BUNDLED: &str = include_str!("../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    pub betas: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_leakage_cap")]
    pub leakage_cap: f64,
    #[serde(default)]
    pub grid: GridConfig,
    pub states: Vec<StateFamily>,
    pub profiles: ProfileConfig,
    pub orders: Vec<OrderPair>,
    pub bins: Vec<BinWidths>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_tolerance() -> f64 {
    crate::bounds::DEFAULT_TOL
}

fn default_leakage_cap() -> f64 {
    DEFAULT_LEAKAGE_CAP
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_q_nodes")]
    pub q_nodes: usize,
    #[serde(default = "default_refine")]
    pub refine: usize,
}

fn default_q_nodes() -> usize {
    crate::states::DEFAULT_Q_NODES
}

fn default_refine() -> usize {
    1
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            q_nodes: default_q_nodes(),
            refine: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFamily {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: StateKind,
}

impl StateFamily {
    /// Configured name, or the kind followed by the family's position.
    pub fn label(&self, index: usize) -> String {
        self.name.clone().unwrap_or_else(|| format!("{}{index}", self.kind.name()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateKind {
    Gaussian(GaussianParams),
    Superposition(RandomSuperpositionSpec),
    Mixture { components: Vec<MixtureComponent> },
    /// Flat `|phi(q)|^2` over the band; needs `beta > 0`.
    Uniform {},
}

impl StateKind {
    pub fn name(&self) -> &'static str {
        match self {
            StateKind::Gaussian(_) => "gaussian",
            StateKind::Superposition(_) => "superposition",
            StateKind::Mixture { .. } => "mixture",
            StateKind::Uniform {} => "uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianParams {
    pub width_x: f64,
    #[serde(default)]
    pub center_x: f64,
    #[serde(default)]
    pub center_q: f64,
}

impl GaussianParams {
    pub fn spec(&self) -> GaussianSpec {
        GaussianSpec {
            center_q: self.center_q,
            width_q: 0.5 / self.width_x,
            center_x: self.center_x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub width_x: f64,
    #[serde(default)]
    pub center_x: f64,
    #[serde(default)]
    pub center_q: f64,
}

impl MixtureComponent {
    pub fn params(&self) -> GaussianParams {
        GaussianParams {
            width_x: self.width_x,
            center_x: self.center_x,
            center_q: self.center_q,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    #[serde(default = "gaussian_kind")]
    pub f_kind: ProfileKind,
    #[serde(default = "gaussian_kind")]
    pub g_kind: ProfileKind,
    #[serde(default)]
    pub f_offset: f64,
    #[serde(default)]
    pub g_offset: f64,
    pub widths: Vec<WidthPair>,
}

fn gaussian_kind() -> ProfileKind {
    ProfileKind::Gaussian
}

impl ProfileConfig {
    pub fn f(&self, i: usize) -> Result<AcceptanceProfile> {
        AcceptanceProfile::new(self.f_kind, self.widths[i].f, self.f_offset)
    }

    pub fn g(&self, i: usize) -> Result<AcceptanceProfile> {
        AcceptanceProfile::new(self.g_kind, self.widths[i].g, self.g_offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WidthPair {
    pub f: f64,
    pub g: f64,
}

/// `gamma` defaults to the conjugate of `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderPair {
    pub alpha: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
}

impl OrderPair {
    pub fn order(&self) -> Result<EntropyOrder> {
        match self.gamma {
            Some(g) => EntropyOrder::new(self.alpha, g),
            None => EntropyOrder::conjugate(self.alpha),
        }
    }
}

fn field_error(field: String, msg: impl std::fmt::Display) -> Error {
    Error::ConfigError(format!("{field}: {msg}"))
}

fn positive(field: String, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field_error(field, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::ConfigError(e.message().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The desk suite shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED).expect("bundled config is valid")
    }

    pub fn bundled_text() -> &'static str {
        BUNDLED
    }

    pub fn entropy_orders(&self) -> Result<Vec<EntropyOrder>> {
        self.orders.iter().map(OrderPair::order).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(field_error(
                "schema".into(),
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema),
            ));
        }
        for (i, b) in self.betas.iter().enumerate() {
            if !(*b >= 0.0 && b.is_finite()) {
                return Err(field_error(format!("betas[{i}]"), format!("must be >= 0, got {b}")));
            }
        }
        positive("tolerance".into(), self.tolerance)?;
        if !(self.leakage_cap > 0.0 && self.leakage_cap < 1.0) {
            return Err(field_error(
                "leakage_cap".into(),
                format!("must lie in (0, 1), got {}", self.leakage_cap),
            ));
        }
        if self.grid.q_nodes < 64 {
            return Err(field_error(
                "grid.q_nodes".into(),
                format!("need at least 64, got {}", self.grid.q_nodes),
            ));
        }
        if self.grid.refine == 0 {
            return Err(field_error("grid.refine".into(), "must be at least 1"));
        }
        if self.states.is_empty() {
            return Err(field_error("states".into(), "at least one state family is required"));
        }
        for (i, s) in self.states.iter().enumerate() {
            self.validate_state(i, &s.kind)?;
        }
        if self.profiles.widths.is_empty() {
            return Err(field_error("profiles.widths".into(), "at least one width pair is required"));
        }
        for (field, v) in [("profiles.f_offset", self.profiles.f_offset), ("profiles.g_offset", self.profiles.g_offset)] {
            if !v.is_finite() {
                return Err(field_error(field.into(), "must be finite"));
            }
        }
        for (i, w) in self.profiles.widths.iter().enumerate() {
            positive(format!("profiles.widths[{i}].f"), w.f)?;
            positive(format!("profiles.widths[{i}].g"), w.g)?;
        }
        if self.orders.is_empty() {
            return Err(field_error("orders".into(), "at least one (alpha, gamma) pair is required"));
        }
        for (i, o) in self.orders.iter().enumerate() {
            o.order().map_err(|e| field_error(format!("orders[{i}]"), e))?;
        }
        if self.bins.is_empty() {
            return Err(field_error("bins".into(), "at least one bin-width pair is required"));
        }
        for (i, b) in self.bins.iter().enumerate() {
            positive(format!("bins[{i}].dzeta"), b.dzeta)?;
            positive(format!("bins[{i}].dxi"), b.dxi)?;
        }
        Ok(())
    }

    fn validate_state(&self, i: usize, kind: &StateKind) -> Result<()> {
        let field = |s: &str| format!("states[{i}].{s}");
        match kind {
            StateKind::Gaussian(p) => positive(field("width_x"), p.width_x),
            StateKind::Superposition(s) => {
                if s.terms == 0 {
                    return Err(field_error(field("terms"), "must be at least 1"));
                }
                if !(s.width_q.0 > 0.0 && s.width_q.1 >= s.width_q.0) {
                    return Err(field_error(field("width_q"), "needs 0 < lo <= hi"));
                }
                for (name, r) in [("center_q", s.center_q), ("center_x", s.center_x)] {
                    if !(r.0.is_finite() && r.1.is_finite() && r.1 >= r.0) {
                        return Err(field_error(field(name), "needs finite lo <= hi"));
                    }
                }
                Ok(())
            }
            StateKind::Mixture { components } => {
                if components.is_empty() {
                    return Err(field_error(field("components"), "must not be empty"));
                }
                for (j, c) in components.iter().enumerate() {
                    positive(field(&format!("components[{j}].weight")), c.weight)?;
                    positive(field(&format!("components[{j}].width_x")), c.width_x)?;
                }
                Ok(())
            }
            StateKind::Uniform {} => {
                if self.betas.contains(&0.0) {
                    return Err(field_error(field("kind"), "uniform states need every beta > 0"));
                }
                Ok(())
            }
        }
    }
}
