//! Lower-bound ingredients and the relation checker.
//!
//! Every inequality is certified as `margin = lhs - rhs >= -tol`.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::entropy::{alpha_log, EntropyOrder, CONJUGACY_TOL, SHANNON_THRESHOLD};
use crate::error::{Error, Result};
use crate::grid::{supremum_1d, trapezoid, Supremum};
use crate::lab::{BinWidths, Lab, LabOptions};
use crate::measurement::{position_moments, AcceptanceProfile};
use crate::states::{Deformation, MixedState};

/// Default certification tolerance (natural-log units).
pub const DEFAULT_TOL: f64 = 1e-4;

const SF_SCAN_NODES: usize = 257;

/// `<ln(1 + beta k^2)>` evaluated in q-space, where it reads
/// `integral v(q) (-2 ln|cos(sqrt(beta) q)|) dq`.
pub fn correction_term(rho: &MixedState, beta: Deformation) -> f64 {
    if !beta.is_deformed() {
        return 0.0;
    }
    rho.expect_q(|q| beta.log_factor(q))
}

/// `sup_zeta integral |f(zeta - k)|^2 / (1 + beta k^2) dk`; exactly one at
/// `beta = 0`.
pub fn sf_compute(f: &AcceptanceProfile, beta: Deformation) -> Result<Supremum> {
    let c = f.center_offset();
    if !beta.is_deformed() {
        return Ok(Supremum {
            location: c,
            value: 1.0,
        });
    }
    let b = beta.beta();
    let grid = *f.grid();
    let sq = f.sq_modulus();
    let norm = f.norm();
    let ts = grid.nodes();
    let h = |zeta: f64| {
        let vals: Vec<f64> = sq
            .iter()
            .zip(&ts)
            .map(|(s, t)| {
                let k = zeta - t;
                s / (1.0 + b * k * k)
            })
            .collect();
        trapezoid(&grid, &vals) / norm
    };
    let half = 8.0 * f.width() + f.reach();
    supremum_1d(h, c - half, c + half, SF_SCAN_NODES)
}

/// `kappa = sqrt(alpha^(1/(alpha-1)) gamma^(1/(gamma-1)))` for
/// `1/alpha + 1/gamma = 2`.
pub fn kappa(alpha: f64, gamma: f64) -> Result<f64> {
    if !(alpha > 0.0 && gamma > 0.0) || (1.0 / alpha + 1.0 / gamma - 2.0).abs() > CONJUGACY_TOL {
        return Err(Error::ConjugacyError { alpha, gamma });
    }
    if (alpha - 1.0).abs() < SHANNON_THRESHOLD {
        return Ok(E);
    }
    let term = |a: f64| a.ln() / (a - 1.0);
    Ok((0.5 * (term(alpha) + term(gamma))).exp())
}

/// `ln(e pi)`.
pub fn beckner_bound() -> f64 {
    1.0 + PI.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationId {
    #[serde(rename = "ROBERTSON")]
    Robertson,
    #[serde(rename = "PREP_SHANNON")]
    PrepShannon,
    #[serde(rename = "S1_MP_SHANNON")]
    S1MpShannon,
    #[serde(rename = "S1_PM_SHANNON")]
    S1PmShannon,
    #[serde(rename = "S2_MP_SHANNON")]
    S2MpShannon,
    #[serde(rename = "S2_PM_SHANNON")]
    S2PmShannon,
    #[serde(rename = "PREP_SHANNON_BIN")]
    PrepShannonBin,
    #[serde(rename = "S1_MP_BIN")]
    S1MpBin,
    #[serde(rename = "S1_PM_BIN")]
    S1PmBin,
    #[serde(rename = "S2_MP_BIN")]
    S2MpBin,
    #[serde(rename = "S2_PM_BIN")]
    S2PmBin,
    #[serde(rename = "PREP_RENYI")]
    PrepRenyi,
    #[serde(rename = "PREP_RENYI_BIN")]
    PrepRenyiBin,
    #[serde(rename = "PREP_TSALLIS_BIN")]
    PrepTsallisBin,
    #[serde(rename = "S1_RENYI")]
    S1Renyi,
    #[serde(rename = "S1_RENYI_BIN")]
    S1RenyiBin,
    #[serde(rename = "S1_TSALLIS_BIN")]
    S1TsallisBin,
    #[serde(rename = "S2_RENYI")]
    S2Renyi,
    #[serde(rename = "S2_RENYI_BIN")]
    S2RenyiBin,
    #[serde(rename = "S2_TSALLIS_BIN")]
    S2TsallisBin,
}

/// Which state each entropy is taken on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Preparation,
    /// Non-selective: the second measurement sees the averaged state.
    Averaged,
    /// Selective: entropies of each conditional state, outcome-averaged.
    Selective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    /// Shannon entropies with the state-dependent correction term.
    Shannon,
    Renyi,
    Tsallis,
}

impl RelationId {
    pub const ALL: [RelationId; 20] = [
        RelationId::Robertson,
        RelationId::PrepShannon,
        RelationId::S1MpShannon,
        RelationId::S1PmShannon,
        RelationId::S2MpShannon,
        RelationId::S2PmShannon,
        RelationId::PrepShannonBin,
        RelationId::S1MpBin,
        RelationId::S1PmBin,
        RelationId::S2MpBin,
        RelationId::S2PmBin,
        RelationId::PrepRenyi,
        RelationId::PrepRenyiBin,
        RelationId::PrepTsallisBin,
        RelationId::S1Renyi,
        RelationId::S1RenyiBin,
        RelationId::S1TsallisBin,
        RelationId::S2Renyi,
        RelationId::S2RenyiBin,
        RelationId::S2TsallisBin,
    ];

    pub fn name(&self) -> &'static str {
        use RelationId::*;
        match self {
            Robertson => "ROBERTSON",
            PrepShannon => "PREP_SHANNON",
            S1MpShannon => "S1_MP_SHANNON",
            S1PmShannon => "S1_PM_SHANNON",
            S2MpShannon => "S2_MP_SHANNON",
            S2PmShannon => "S2_PM_SHANNON",
            PrepShannonBin => "PREP_SHANNON_BIN",
            S1MpBin => "S1_MP_BIN",
            S1PmBin => "S1_PM_BIN",
            S2MpBin => "S2_MP_BIN",
            S2PmBin => "S2_PM_BIN",
            PrepRenyi => "PREP_RENYI",
            PrepRenyiBin => "PREP_RENYI_BIN",
            PrepTsallisBin => "PREP_TSALLIS_BIN",
            S1Renyi => "S1_RENYI",
            S1RenyiBin => "S1_RENYI_BIN",
            S1TsallisBin => "S1_TSALLIS_BIN",
            S2Renyi => "S2_RENYI",
            S2RenyiBin => "S2_RENYI_BIN",
            S2TsallisBin => "S2_TSALLIS_BIN",
        }
    }

    /// Measurement orders the relation is checked in.
    pub fn orders(&self) -> &'static [MeasurementOrder] {
        use MeasurementOrder::*;
        use RelationId::*;
        match self {
            Robertson | PrepShannon | PrepShannonBin | PrepRenyi | PrepRenyiBin
            | PrepTsallisBin => &[Preparation],
            S1MpShannon | S2MpShannon | S1MpBin | S2MpBin => &[MomentumFirst],
            S1PmShannon | S2PmShannon | S1PmBin | S2PmBin => &[PositionFirst],
            S1Renyi | S1RenyiBin | S1TsallisBin | S2Renyi | S2RenyiBin | S2TsallisBin => {
                &[MomentumFirst, PositionFirst]
            }
        }
    }

    pub fn scenario(&self) -> Scenario {
        use RelationId::*;
        match self {
            Robertson | PrepShannon | PrepShannonBin | PrepRenyi | PrepRenyiBin
            | PrepTsallisBin => Scenario::Preparation,
            S1MpShannon | S1PmShannon | S1MpBin | S1PmBin | S1Renyi | S1RenyiBin
            | S1TsallisBin => Scenario::Averaged,
            S2MpShannon | S2PmShannon | S2MpBin | S2PmBin | S2Renyi | S2RenyiBin
            | S2TsallisBin => Scenario::Selective,
        }
    }

    /// `None` for the variance relation.
    pub fn functional(&self) -> Option<Functional> {
        use RelationId::*;
        match self {
            Robertson => None,
            PrepShannon | S1MpShannon | S1PmShannon | S2MpShannon | S2PmShannon
            | PrepShannonBin | S1MpBin | S1PmBin | S2MpBin | S2PmBin => Some(Functional::Shannon),
            PrepRenyi | PrepRenyiBin | S1Renyi | S1RenyiBin | S2Renyi | S2RenyiBin => {
                Some(Functional::Renyi)
            }
            PrepTsallisBin | S1TsallisBin | S2TsallisBin => Some(Functional::Tsallis),
        }
    }

    pub fn is_binned(&self) -> bool {
        use RelationId::*;
        matches!(
            self,
            PrepShannonBin
                | S1MpBin
                | S1PmBin
                | S2MpBin
                | S2PmBin
                | PrepRenyiBin
                | PrepTsallisBin
                | S1RenyiBin
                | S1TsallisBin
                | S2RenyiBin
                | S2TsallisBin
        )
    }

    /// Shannon relations use `alpha = gamma = 1` only.
    pub fn takes_orders(&self) -> bool {
        matches!(self.functional(), Some(Functional::Renyi | Functional::Tsallis))
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        RelationId::ALL
            .iter()
            .find(|id| id.name().eq_ignore_ascii_case(t))
            .copied()
            .ok_or_else(|| Error::ConfigError(format!("unknown relation id `{t}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementOrder {
    MomentumFirst,
    PositionFirst,
    Preparation,
}

impl MeasurementOrder {
    pub fn name(&self) -> &'static str {
        match self {
            MeasurementOrder::MomentumFirst => "momentum_first",
            MeasurementOrder::PositionFirst => "position_first",
            MeasurementOrder::Preparation => "preparation",
        }
    }
}

impl fmt::Display for MeasurementOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasurementOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "momentum_first" => Ok(MeasurementOrder::MomentumFirst),
            "position_first" => Ok(MeasurementOrder::PositionFirst),
            "preparation" => Ok(MeasurementOrder::Preparation),
            other => Err(Error::ConfigError(format!("unknown measurement order `{other}`"))),
        }
    }
}

/// Labels identifying the suite cell a report belongs to.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Cell {
    pub family: String,
    pub f_kind: String,
    pub f_width: f64,
    pub g_kind: String,
    pub g_width: f64,
    pub dzeta: f64,
    pub dxi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationReport {
    pub id: RelationId,
    pub order: MeasurementOrder,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub beta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    pub tol: f64,
    /// `ok`, `violated`, or `error:<kind>`.
    pub status: String,
    pub message: Option<String>,
    pub cell: Cell,
    pub diagnostics: BTreeMap<String, f64>,
}

impl RelationReport {
    #[allow(clippy::too_many_arguments)]
    pub fn evaluated(
        id: RelationId,
        order: MeasurementOrder,
        orders: Option<EntropyOrder>,
        beta: f64,
        lhs: f64,
        rhs: f64,
        tol: f64,
        cell: Cell,
        diagnostics: BTreeMap<String, f64>,
    ) -> Self {
        let margin = lhs - rhs;
        let pass = margin >= -tol;
        Self {
            id,
            order,
            alpha: orders.map(|o| o.alpha),
            gamma: orders.map(|o| o.gamma),
            beta,
            lhs,
            rhs,
            margin,
            pass,
            tol,
            status: if pass { "ok" } else { "violated" }.to_string(),
            message: None,
            cell,
            diagnostics,
        }
    }

    pub fn failed(
        id: RelationId,
        order: MeasurementOrder,
        orders: Option<EntropyOrder>,
        beta: f64,
        tol: f64,
        cell: Cell,
        error: &Error,
    ) -> Self {
        Self {
            id,
            order,
            alpha: orders.map(|o| o.alpha),
            gamma: orders.map(|o| o.gamma),
            beta,
            lhs: f64::NAN,
            rhs: f64::NAN,
            margin: f64::NAN,
            pass: false,
            tol,
            status: format!("error:{}", error.kind()),
            message: Some(error.to_string()),
            cell,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.status.starts_with("error")
    }

    pub fn diagnostic(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).copied()
    }
}

/// Right-hand side of a Rényi/Tsallis relation; binned forms subtract
/// `ln(dzeta dxi)` from the continuum form.
pub fn renyi_rhs(kappa: f64, sf: f64, bins: Option<BinWidths>) -> f64 {
    let base = (kappa * PI / sf).ln();
    match bins {
        Some(b) => base - (b.dzeta * b.dxi).ln(),
        None => base,
    }
}

/// `ln_nu(kappa pi / (S_f dzeta dxi))`.
pub fn tsallis_rhs(kappa: f64, sf: f64, bins: BinWidths, nu: f64) -> Result<f64> {
    alpha_log(kappa * PI / (sf * bins.dzeta * bins.dxi), nu)
}

/// `ln(e pi) + corr`, minus `ln(dzeta dxi)` when binned.
pub fn shannon_rhs(corr: f64, bins: Option<BinWidths>) -> f64 {
    let base = beckner_bound() + corr;
    match bins {
        Some(b) => base - (b.dzeta * b.dxi).ln(),
        None => base,
    }
}

/// Variance relation `dx dk >= (1 + beta <k^2>) / 2 >= (1 + beta dk^2) / 2`,
/// with all moments taken from the q-amplitudes.
pub fn robertson_check(rho: &MixedState, beta: Deformation, tol: f64) -> RelationReport {
    let (lhs, rhs, d) = robertson_moments(rho, beta);
    RelationReport::evaluated(
        RelationId::Robertson,
        MeasurementOrder::Preparation,
        None,
        beta.beta(),
        lhs,
        rhs,
        tol,
        Cell::default(),
        d,
    )
}

/// `(dx dk, (1 + beta <k^2>) / 2, diagnostics)`.
pub fn robertson_moments(rho: &MixedState, beta: Deformation) -> (f64, f64, BTreeMap<String, f64>) {
    let (mut x1, mut x2) = (0.0, 0.0);
    for (c, s) in rho.components() {
        let (m, sd) = position_moments(s);
        x1 += c * m;
        x2 += c * (sd * sd + m * m);
    }
    let dx = (x2 - x1 * x1).max(0.0).sqrt();
    let k1 = rho.expect_q(|q| beta.k_of_q(q));
    let k2 = rho.expect_q(|q| {
        let k = beta.k_of_q(q);
        k * k
    });
    let dk = (k2 - k1 * k1).max(0.0).sqrt();
    let b = beta.beta();
    let rhs = 0.5 * (1.0 + b * k2);
    let inner = 0.5 * (1.0 + b * dk * dk);
    let mut d = BTreeMap::new();
    d.insert("dx".into(), dx);
    d.insert("dk".into(), dk);
    d.insert("k2".into(), k2);
    d.insert("chain_rhs".into(), inner);
    d.insert("chain_margin".into(), rhs - inner);
    d.insert("min_length_margin".into(), dx - beta.min_length());
    (dx * dk, rhs, d)
}

/// One relation on one state, with its own freshly planned grids.
#[allow(clippy::too_many_arguments)]
pub fn check_relation(
    id: RelationId,
    order: MeasurementOrder,
    rho: &MixedState,
    f: &AcceptanceProfile,
    g: &AcceptanceProfile,
    orders: Option<EntropyOrder>,
    bins: Option<BinWidths>,
    tol: f64,
) -> RelationReport {
    let beta = rho.beta();
    let fail = |e: Error| RelationReport::failed(id, order, orders, beta.beta(), tol, Cell::default(), &e);
    if id.is_binned() && bins.is_none() {
        return fail(Error::ConfigError(format!("{id} needs bin widths")));
    }
    if id.takes_orders() && orders.is_none() {
        return fail(Error::ConfigError(format!("{id} needs entropic orders")));
    }
    let options = LabOptions {
        bins: bins.unwrap_or_default(),
        ..LabOptions::default()
    };
    match Lab::new(rho.clone(), f.clone(), g.clone(), options) {
        Ok(lab) => lab.evaluate(id, order, orders.unwrap_or_else(EntropyOrder::shannon), tol, Cell::default()),
        Err(e) => fail(e),
    }
}
