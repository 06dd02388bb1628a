//! Finite-resolution momentum and position measurements.
//!
//! A momentum measurement with acceptance function `f` has outcome density
//! `U(zeta) = integral |f(zeta - k)|^2 u(k) dk` and post-state amplitude
//! `f(zeta - k(q)) phi(q)`; a position measurement with `g` gives
//! `W(xi) = integral |g(xi - x)|^2 w(x) dx` and `g(xi - x) psi(x)`. Because
//! `dk = (1 + beta k^2) dq`, the momentum integrals are evaluated in q-space
//! where every state lives, which avoids resolving the heavy k-tails.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::grid::{trapezoid, ConvolutionKernel, Grid, SampledFunction};
use crate::states::{MixedState, PureState, QAxis};
use crate::transforms::{Axis, Density, FourierPair, DEFAULT_LEAKAGE_CAP, X_CAPTURE};

/// Outcomes whose density does not exceed this are dropped.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Mass an outcome grid must capture.
pub const OUTCOME_CAPTURE: f64 = 1.0 - 1e-5;

const PROFILE_NODES: usize = 4097;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Gaussian,
    RaisedCosine,
    TopHatSmoothed,
}

impl ProfileKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProfileKind::Gaussian => "gaussian",
            ProfileKind::RaisedCosine => "raised_cosine",
            ProfileKind::TopHatSmoothed => "top_hat_smoothed",
        }
    }
}

/// `|f|^2` (or `|g|^2`): a unit-mass profile whose standard deviation is
/// `width`, shifted by `center_offset`. The amplitude is the nonnegative
/// square root.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptanceProfile {
    kind: ProfileKind,
    width: f64,
    center_offset: f64,
    /// Shape parameter: std for gaussian, half support for raised cosine,
    /// plateau half width for the smoothed top hat.
    scale: f64,
    grid: Grid,
    sq_modulus: Vec<f64>,
    norm: f64,
    kick: f64,
}

/// Edge smoothing of the top hat relative to its half width.
const TOP_HAT_SOFTNESS: f64 = 0.25;

impl AcceptanceProfile {
    pub fn new(kind: ProfileKind, width: f64, center_offset: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::DomainError(format!("profile width must be positive, got {width}")));
        }
        if !center_offset.is_finite() {
            return Err(Error::DomainError("profile offset must be finite".into()));
        }
        let scale = match kind {
            ProfileKind::Gaussian => width,
            ProfileKind::RaisedCosine => width / (1.0 / 3.0 - 2.0 / (PI * PI)).sqrt(),
            ProfileKind::TopHatSmoothed => {
                width / (1.0 / 3.0 + TOP_HAT_SOFTNESS * TOP_HAT_SOFTNESS).sqrt()
            }
        };
        let mut p = Self {
            kind,
            width,
            center_offset,
            scale,
            grid: Grid::new(0.0, 1.0, 8)?,
            sq_modulus: Vec::new(),
            norm: 0.0,
            kick: 0.0,
        };
        let r = p.reach();
        p.grid = Grid::new(center_offset - r, center_offset + r, PROFILE_NODES)?;
        p.sq_modulus = p.grid.nodes().into_iter().map(|t| p.sq(t)).collect();
        p.norm = trapezoid(&p.grid, &p.sq_modulus);
        p.kick = p.compute_kick();
        Ok(p)
    }

    pub fn gaussian(width: f64) -> Result<Self> {
        Self::new(ProfileKind::Gaussian, width, 0.0)
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn center_offset(&self) -> f64 {
        self.center_offset
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn sq_modulus(&self) -> &[f64] {
        &self.sq_modulus
    }

    /// Quadrature of the sampled `|f|^2`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Half length of the support around `center_offset` (numerically
    /// negligible beyond it).
    pub fn reach(&self) -> f64 {
        let s = self.scale;
        match self.kind {
            ProfileKind::Gaussian => 13.0 * s,
            ProfileKind::RaisedCosine => s,
            ProfileKind::TopHatSmoothed => s * (1.0 + 13.0 * TOP_HAT_SOFTNESS),
        }
    }

    /// `sqrt(integral |f'|^2)`: the spread the profile imprints on the
    /// conjugate variable.
    pub fn kick(&self) -> f64 {
        self.kick
    }

    pub fn sq(&self, t: f64) -> f64 {
        let t = (t - self.center_offset).abs();
        let s = self.scale;
        match self.kind {
            ProfileKind::Gaussian => {
                (-0.5 * (t / s) * (t / s)).exp() / (s * (2.0 * PI).sqrt())
            }
            ProfileKind::RaisedCosine => {
                if t >= s {
                    0.0
                } else {
                    (1.0 + (PI * t / s).cos()) / (2.0 * s)
                }
            }
            ProfileKind::TopHatSmoothed => {
                let soft = SQRT_2 * TOP_HAT_SOFTNESS * s;
                (erfc((t - s) / soft) - erfc((t + s) / soft)) / (4.0 * s)
            }
        }
    }

    pub fn amp(&self, t: f64) -> f64 {
        match self.kind {
            ProfileKind::Gaussian => {
                let d = (t - self.center_offset) / self.scale;
                (-0.25 * d * d).exp() / (self.scale * (2.0 * PI).sqrt()).sqrt()
            }
            _ => self.sq(t).sqrt(),
        }
    }

    fn compute_kick(&self) -> f64 {
        let h = self.grid.spacing();
        let amps: Vec<f64> = self.grid.nodes().into_iter().map(|t| self.amp(t)).collect();
        let d2: Vec<f64> = (0..amps.len())
            .map(|i| {
                let a = if i == 0 { 0.0 } else { amps[i - 1] };
                let b = amps.get(i + 1).copied().unwrap_or(0.0);
                let d = (b - a) / (2.0 * h);
                d * d
            })
            .collect();
        trapezoid(&self.grid, &d2).sqrt()
    }
}

fn check_outcome_capture(captured: f64) -> Result<()> {
    if captured < OUTCOME_CAPTURE {
        return Err(Error::WindowTooSmall {
            captured,
            required: OUTCOME_CAPTURE,
        });
    }
    Ok(())
}

/// Momentum measurement with profile `f` on a fixed q-axis and zeta-grid.
#[derive(Debug)]
pub struct MomentumInstrument {
    f: AcceptanceProfile,
    axis: QAxis,
    zeta: Grid,
    k_nodes: Vec<f64>,
    kernel: ConvolutionKernel,
}

impl MomentumInstrument {
    pub fn new(f: &AcceptanceProfile, axis: &QAxis, zeta: Grid) -> Self {
        let beta = axis.beta();
        let (c, r) = (f.center_offset(), f.reach());
        let kernel = ConvolutionKernel::with_support(
            *axis.grid(),
            zeta,
            |z, q| f.sq(z - beta.k_of_q(q)),
            |z| (beta.q_of_k(z - c - r), beta.q_of_k(z - c + r)),
        );
        Self {
            f: f.clone(),
            axis: *axis,
            zeta,
            k_nodes: axis.k_nodes(),
            kernel,
        }
    }

    pub fn zeta_grid(&self) -> &Grid {
        &self.zeta
    }

    pub fn profile(&self) -> &AcceptanceProfile {
        &self.f
    }

    /// Unnormalized `U` for a q-density `v` sampled on the instrument's axis.
    pub fn raw_density(&self, v: &[f64]) -> Vec<f64> {
        self.kernel.apply(v)
    }

    /// `U_rho` on the zeta-grid, checked for capture and renormalized.
    pub fn density(&self, rho: &MixedState) -> Result<Density> {
        check_axis(rho, &self.axis)?;
        normalized_outcome(Axis::Zeta, self.zeta, self.raw_density(&rho.density_values()))
    }

    /// `f(zeta_j - k(q)) phi(q)` (unnormalized) and its squared norm.
    pub fn post_amplitudes(&self, j: usize, state: &PureState) -> (Vec<Complex64>, f64) {
        let z = self.zeta.node(j);
        let (start, row) = self.kernel.row(j);
        let amps = state.amplitudes();
        let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
        let mut p = 0.0;
        for (off, w) in row.iter().enumerate() {
            let i = start + off;
            out[i] = amps[i] * self.f.amp(z - self.k_nodes[i]);
            p += w * amps[i].norm_sqr();
        }
        (out, p)
    }

    /// Normalized post-measurement state for outcome `j`.
    pub fn post_state(&self, j: usize, rho: &MixedState) -> Result<MixedState> {
        let mut parts = Vec::with_capacity(rho.components().len());
        for (w, s) in rho.components() {
            let (amps, p) = self.post_amplitudes(j, s);
            if w * p > 0.0 {
                parts.push((w * p, PureState::from_amplitudes(self.axis, amps)?));
            }
        }
        MixedState::normalized(parts)
    }
}

fn check_axis(rho: &MixedState, axis: &QAxis) -> Result<()> {
    if rho.axis() != axis {
        return Err(Error::MismatchedGrids("state is not on the instrument's q-axis".into()));
    }
    Ok(())
}

fn normalized_outcome(axis: Axis, grid: Grid, raw: Vec<f64>) -> Result<Density> {
    let d = Density::new(axis, grid, raw)?;
    let m = d.mass();
    check_outcome_capture(m)?;
    Ok(d.renormalized(m))
}

/// Position measurement with profile `g`; position wave functions live on
/// `x`, outcomes on `xi`.
#[derive(Debug)]
pub struct PositionInstrument {
    g: AcceptanceProfile,
    axis: QAxis,
    xi: Grid,
    pair: FourierPair,
    kernel: ConvolutionKernel,
    leakage_cap: f64,
}

impl PositionInstrument {
    pub fn new(g: &AcceptanceProfile, axis: &QAxis, x: Grid, xi: Grid, leakage_cap: f64) -> Self {
        let kernel = ConvolutionKernel::new(x, xi, |t| g.sq(t), g.center_offset(), g.reach());
        Self {
            g: g.clone(),
            axis: *axis,
            xi,
            pair: FourierPair::new(*axis.grid(), x),
            kernel,
            leakage_cap,
        }
    }

    pub fn xi_grid(&self) -> &Grid {
        &self.xi
    }

    pub fn x_grid(&self) -> &Grid {
        self.pair.x_grid()
    }

    pub fn pair(&self) -> &FourierPair {
        &self.pair
    }

    pub fn profile(&self) -> &AcceptanceProfile {
        &self.g
    }

    /// Raw `psi` on the x-grid (no capture check).
    pub fn psi(&self, state: &PureState) -> Vec<Complex64> {
        self.pair.to_x(state.amplitudes())
    }

    /// Unnormalized `|psi|^2` summed over the ensemble.
    pub fn raw_x_density(&self, rho: &MixedState) -> Vec<f64> {
        let mut out = vec![0.0; self.x_grid().len()];
        for (w, s) in rho.components() {
            for (o, p) in out.iter_mut().zip(self.psi(s)) {
                *o += w * p.norm_sqr();
            }
        }
        out
    }

    /// `w_rho(x)`, which must be captured to [`X_CAPTURE`].
    pub fn x_density(&self, rho: &MixedState) -> Result<Density> {
        check_axis(rho, &self.axis)?;
        let d = Density::new(Axis::X, *self.x_grid(), self.raw_x_density(rho))?;
        let captured = d.mass();
        if captured < X_CAPTURE {
            return Err(Error::WindowTooSmall {
                captured,
                required: X_CAPTURE,
            });
        }
        Ok(d)
    }

    pub fn raw_density(&self, w: &[f64]) -> Vec<f64> {
        self.kernel.apply(w)
    }

    /// `W_rho` on the xi-grid, checked for capture and renormalized.
    pub fn density(&self, rho: &MixedState) -> Result<Density> {
        let w = self.x_density(rho)?;
        normalized_outcome(Axis::Xi, self.xi, self.raw_density(w.values()))
    }

    /// Band projection of `g(xi_j - x) psi(x)` for one component whose
    /// position wave function is `psi`.
    pub fn post_component(&self, j: usize, psi: &[Complex64]) -> Result<PositionPost> {
        let post = self.project_component(j, psi)?;
        self.check_leakage(j, post.leakage)?;
        Ok(post)
    }

    fn project_component(&self, j: usize, psi: &[Complex64]) -> Result<PositionPost> {
        let xi = self.xi.node(j);
        let (start, row) = self.kernel.row(j);
        let mut chi = vec![Complex64::new(0.0, 0.0); psi.len()];
        for off in 0..row.len() {
            let m = start + off;
            chi[m] = psi[m] * self.g.amp(xi - self.x_grid().node(m));
        }
        let chi = SampledFunction::new(*self.x_grid(), chi)?;
        let proj = self.pair.project(&chi, &self.axis, 1.0)?;
        Ok(PositionPost {
            state: proj.state,
            probability: proj.norm_sq,
            leakage: proj.leakage,
        })
    }

    fn check_leakage(&self, j: usize, leakage: f64) -> Result<()> {
        if leakage > self.leakage_cap {
            return Err(Error::BandLimitViolation {
                leakage,
                cap: self.leakage_cap,
                outcome: Some(self.xi.node(j)),
            });
        }
        Ok(())
    }

    /// Normalized post-measurement state for outcome `j` and its leakage.
    pub fn post_state(&self, j: usize, rho: &MixedState) -> Result<(MixedState, f64)> {
        let psis: Vec<Vec<Complex64>> = rho.components().iter().map(|(_, s)| self.psi(s)).collect();
        self.post_state_with(j, rho, &psis)
    }

    /// As [`post_state`](Self::post_state) with the components' position
    /// wave functions precomputed. The leakage of a mixture is the
    /// probability-weighted leakage of its components.
    pub fn post_state_with(
        &self,
        j: usize,
        rho: &MixedState,
        psis: &[Vec<Complex64>],
    ) -> Result<(MixedState, f64)> {
        let mut parts = Vec::with_capacity(rho.components().len());
        let (mut leaked, mut total) = (0.0, 0.0);
        for ((w, _), psi) in rho.components().iter().zip(psis) {
            let post = match self.project_component(j, psi) {
                Err(Error::DegenerateState) => continue,
                other => other?,
            };
            let p = post.probability;
            leaked += w * p * post.leakage;
            total += w * p;
            parts.push((w * post.probability, post.state));
        }
        let leak = if total > 0.0 { leaked / total } else { 0.0 };
        self.check_leakage(j, leak)?;
        Ok((MixedState::normalized(parts)?, leak))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionPost {
    pub state: PureState,
    /// `integral |g(xi_j - x) psi(x)|^2 dx`.
    pub probability: f64,
    pub leakage: f64,
}

/// q half-extent holding all but `tail` of the ensemble's q-mass.
pub fn q_extent(rho: &MixedState, tail: f64) -> Result<f64> {
    let (lo, hi) = rho.q_density()?.quantile_window(tail);
    Ok(lo.abs().max(hi.abs()))
}

/// Position mean and spread of one pure state from its q-amplitudes
/// (`x` acts as `i d/dq`).
pub fn position_moments(state: &PureState) -> (f64, f64) {
    let g = state.grid();
    let h = g.spacing();
    let a = state.amplitudes();
    let n = a.len();
    let zero = Complex64::new(0.0, 0.0);
    let at = |i: isize| {
        if i < 0 || i >= n as isize {
            zero
        } else {
            a[i as usize]
        }
    };
    // fourth-order central differences; amplitudes vanish beyond the ends
    let d: Vec<Complex64> = (0..n as isize)
        .map(|i| (at(i - 2) - at(i - 1) * 8.0 + at(i + 1) * 8.0 - at(i + 2)) / (12.0 * h))
        .collect();
    let mean_terms: Vec<f64> = a
        .iter()
        .zip(&d)
        .map(|(p, dp)| (p.conj() * Complex64::i() * dp).re)
        .collect();
    let mean = trapezoid(g, &mean_terms);
    let second = trapezoid(g, &d.iter().map(|v| v.norm_sqr()).collect::<Vec<_>>());
    (mean, (second - mean * mean).max(0.0).sqrt())
}

/// x-interval holding all but `tail` of `w_rho` on each side, found on a
/// probe grid of `spread` standard deviations around each component.
pub fn x_window(rho: &MixedState, tail: f64, spread: f64) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, s) in rho.components() {
        let (m, sd) = position_moments(s);
        lo = lo.min(m - spread * sd);
        hi = hi.max(m + spread * sd);
    }
    let q = q_extent(rho, 1e-14)?.max(1e-3);
    let probe = Grid::with_spacing(lo, hi, PI / (4.0 * q))?;
    let pair = FourierPair::new(*rho.axis().grid(), probe);
    let mut w = vec![0.0; probe.len()];
    for (c, s) in rho.components() {
        for (o, p) in w.iter_mut().zip(pair.to_x(s.amplitudes())) {
            *o += c * p.norm_sqr();
        }
    }
    let d = Density::new(Axis::X, probe, w)?;
    let captured = d.mass();
    if captured < 1.0 - 10.0 * tail {
        return Err(Error::WindowTooSmall {
            captured,
            required: 1.0 - 10.0 * tail,
        });
    }
    Ok(d.quantile_window(tail))
}

/// x-grid for a position measurement onto `xi_grid`: it spans the xi-grid
/// widened by the profile support and resolves both the profile and the
/// state's spectrum broadened by the profile.
pub fn default_x_grid(rho: &MixedState, g: &AcceptanceProfile, xi_grid: &Grid) -> Result<Grid> {
    let lo = xi_grid.lo() - g.center_offset() - g.reach();
    let hi = xi_grid.hi() - g.center_offset() + g.reach();
    Grid::with_spacing(lo, hi, x_spacing(rho, g)?.min(xi_grid.spacing()))
}

/// Largest x-spacing whose trapezoid sums reproduce the in-band spectrum of
/// `g(xi - x) psi(x)` without aliasing, capped at a quarter profile width.
pub fn x_spacing(rho: &MixedState, g: &AcceptanceProfile) -> Result<f64> {
    let spectrum = q_extent(rho, 1e-14)? + 10.0 * g.kick();
    let band = rho.axis().half_width();
    Ok((0.9 * 2.0 * PI / (band + spectrum)).min(g.width() / 4.0))
}

pub fn momentum_outcome_density(
    rho: &MixedState,
    f: &AcceptanceProfile,
    zeta_grid: &Grid,
) -> Result<Density> {
    MomentumInstrument::new(f, rho.axis(), *zeta_grid).density(rho)
}

pub fn position_outcome_density(
    rho: &MixedState,
    g: &AcceptanceProfile,
    xi_grid: &Grid,
) -> Result<Density> {
    let x = default_x_grid(rho, g, xi_grid)?;
    PositionInstrument::new(g, rho.axis(), x, *xi_grid, DEFAULT_LEAKAGE_CAP).density(rho)
}

/// Retained outcomes of a first measurement with their normalized
/// post-measurement states.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeEnsemble {
    pub axis: Axis,
    pub outcome_grid: Grid,
    /// Grid indices of the retained outcomes.
    pub outcomes: Vec<usize>,
    pub weights: Vec<f64>,
    pub post_states: Vec<MixedState>,
    /// Per-outcome band leakage (zero for momentum measurements).
    pub leakage: Vec<f64>,
    /// `sum_j U(zeta_j) d zeta` over all nodes before renormalization.
    pub raw_weight_sum: f64,
    /// Part of `raw_weight_sum` carried by dropped outcomes.
    pub dropped_mass: f64,
}

impl OutcomeEnsemble {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn outcome(&self, i: usize) -> f64 {
        self.outcome_grid.node(self.outcomes[i])
    }

    pub fn max_leakage(&self) -> f64 {
        self.leakage.iter().cloned().fold(0.0, f64::max)
    }

    pub fn mean_leakage(&self) -> f64 {
        self.weights.iter().zip(&self.leakage).map(|(w, l)| w * l).sum()
    }
}

/// Trapezoid outcome weights `U(zeta_j) d zeta tau_j`, the retained
/// indices, and the raw and dropped sums.
pub fn outcome_weights(grid: &Grid, raw: &[f64]) -> Result<(Vec<usize>, Vec<f64>, f64, f64)> {
    let tw = grid.trapezoid_weights();
    let all: Vec<f64> = raw.iter().zip(&tw).map(|(u, t)| u * t).collect();
    let total: f64 = all.iter().sum();
    let mut kept = Vec::new();
    let mut weights = Vec::new();
    let mut dropped = 0.0;
    for (j, (u, w)) in raw.iter().zip(&all).enumerate() {
        if *u > WEIGHT_FLOOR {
            kept.push(j);
            weights.push(*w);
        } else {
            dropped += w;
        }
    }
    let kept_sum: f64 = weights.iter().sum();
    if kept.is_empty() || !(kept_sum > 0.0) {
        return Err(Error::DegenerateMeasurement);
    }
    for w in &mut weights {
        *w /= kept_sum;
    }
    Ok((kept, weights, total, dropped))
}

pub fn collapse_momentum(
    rho: &MixedState,
    f: &AcceptanceProfile,
    zeta_grid: &Grid,
) -> Result<OutcomeEnsemble> {
    let inst = MomentumInstrument::new(f, rho.axis(), *zeta_grid);
    let raw = inst.raw_density(&rho.density_values());
    let (outcomes, weights, raw_weight_sum, dropped_mass) = outcome_weights(zeta_grid, &raw)?;
    let post_states = outcomes
        .par_iter()
        .map(|&j| inst.post_state(j, rho))
        .collect::<Result<Vec<_>>>()?;
    Ok(OutcomeEnsemble {
        axis: Axis::Zeta,
        outcome_grid: *zeta_grid,
        leakage: vec![0.0; outcomes.len()],
        outcomes,
        weights,
        post_states,
        raw_weight_sum,
        dropped_mass,
    })
}

pub fn collapse_position(
    rho: &MixedState,
    g: &AcceptanceProfile,
    xi_grid: &Grid,
) -> Result<OutcomeEnsemble> {
    let x = default_x_grid(rho, g, xi_grid)?;
    let inst = PositionInstrument::new(g, rho.axis(), x, *xi_grid, DEFAULT_LEAKAGE_CAP);
    collapse_position_with(&inst, rho)
}

pub fn collapse_position_with(inst: &PositionInstrument, rho: &MixedState) -> Result<OutcomeEnsemble> {
    let w = inst.x_density(rho)?;
    let raw = inst.raw_density(w.values());
    let xi_grid = *inst.xi_grid();
    let (outcomes, weights, raw_weight_sum, dropped_mass) = outcome_weights(&xi_grid, &raw)?;
    let psis: Vec<Vec<Complex64>> = rho.components().iter().map(|(_, s)| inst.psi(s)).collect();
    let posts = outcomes
        .par_iter()
        .map(|&j| inst.post_state_with(j, rho, &psis))
        .collect::<Result<Vec<_>>>()?;
    let (post_states, leakage) = posts.into_iter().unzip();
    Ok(OutcomeEnsemble {
        axis: Axis::Xi,
        outcome_grid: xi_grid,
        outcomes,
        weights,
        post_states,
        leakage,
        raw_weight_sum,
        dropped_mass,
    })
}

/// Non-selective mixture `sum_j weight_j * post_state_j`.
pub fn scenario1_post_state(ensemble: &OutcomeEnsemble) -> Result<MixedState> {
    let mut parts = Vec::new();
    for (w, s) in ensemble.weights.iter().zip(&ensemble.post_states) {
        for (c, p) in s.components() {
            if w * c > 0.0 {
                parts.push((w * c, p.clone()));
            }
        }
    }
    MixedState::normalized(parts)
}
