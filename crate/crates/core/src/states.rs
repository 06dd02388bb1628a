//! Band-limited states in the auxiliary q-representation.
//!
//! A state lives on the open band `(-q0, q0)`, `q0 = pi / (2 sqrt(beta))`;
//! the two end nodes of its grid sit on the band edges and always carry a
//! zero amplitude. With `beta = 0` the band is replaced by a finite cutoff
//! window `[-Q, Q]`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::grid::{trapezoid, Grid};
use crate::transforms::{Axis, Density};

/// Default number of q-nodes.
pub const DEFAULT_Q_NODES: usize = 4096;

/// Largest tolerated fraction of Gaussian mass cut by the band edges.
pub const MAX_TRUNCATION: f64 = 0.1;

/// Number of tapered nodes at each edge of the uniform family.
pub const UNIFORM_TAPER_NODES: usize = 2;

/// The minimal-length parameter `beta` (units of length squared).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Deformation(f64);

impl Deformation {
    pub fn new(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::DomainError(format!("beta must be finite and >= 0, got {beta}")));
        }
        Ok(Self(beta))
    }

    pub fn none() -> Self {
        Self(0.0)
    }

    pub fn beta(&self) -> f64 {
        self.0
    }

    pub fn is_deformed(&self) -> bool {
        self.0 > 0.0
    }

    /// Band edge `q0`; `None` for ordinary quantum mechanics.
    pub fn q0(&self) -> Option<f64> {
        self.is_deformed().then(|| FRAC_PI_2 / self.0.sqrt())
    }

    /// Smallest admissible position spread, `sqrt(beta)`.
    pub fn min_length(&self) -> f64 {
        self.0.sqrt()
    }

    /// Physical wavenumber `k(q) = tan(sqrt(beta) q) / sqrt(beta)`.
    pub fn k_of_q(&self, q: f64) -> f64 {
        if self.is_deformed() {
            let s = self.0.sqrt();
            (s * q).tan() / s
        } else {
            q
        }
    }

    pub fn q_of_k(&self, k: f64) -> f64 {
        if self.is_deformed() {
            let s = self.0.sqrt();
            (s * k).atan() / s
        } else {
            k
        }
    }

    /// `ln(1 + beta k^2)` evaluated at `k = k(q)`, i.e. `-2 ln|cos(sqrt(beta) q)|`.
    pub fn log_factor(&self, q: f64) -> f64 {
        if self.is_deformed() {
            -2.0 * (self.0.sqrt() * q).cos().abs().ln()
        } else {
            0.0
        }
    }

    /// `dk/dq = 1 + beta k^2`.
    pub fn jacobian_at_k(&self, k: f64) -> f64 {
        1.0 + self.0 * k * k
    }
}

/// The q-grid shared by every state of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QAxis {
    beta: Deformation,
    grid: Grid,
}

impl QAxis {
    /// Band grid for `beta > 0`; for `beta = 0` a `cutoff` must be given.
    pub fn new(beta: Deformation, n: usize, cutoff: Option<f64>) -> Result<Self> {
        let half = match (beta.q0(), cutoff) {
            (Some(q0), _) => q0,
            (None, Some(c)) if c > 0.0 && c.is_finite() => c,
            (None, _) => {
                return Err(Error::ConfigError(
                    "beta = 0 needs a positive finite q cutoff".into(),
                ))
            }
        };
        Ok(Self {
            beta,
            grid: Grid::symmetric(half, n)?,
        })
    }

    pub fn beta(&self) -> Deformation {
        self.beta
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Half width of the band (or of the cutoff window).
    pub fn half_width(&self) -> f64 {
        self.grid.hi()
    }

    pub fn k_nodes(&self) -> Vec<f64> {
        self.grid.nodes().into_iter().map(|q| self.beta.k_of_q(q)).collect()
    }

    /// Same band with `factor` times finer spacing.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            beta: self.beta,
            grid: self.grid.refined(factor),
        }
    }
}

/// A normalized pure state `phi(q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    axis: QAxis,
    amps: Vec<Complex64>,
}

impl PureState {
    /// Zeroes the band-edge nodes and normalizes.
    pub fn from_amplitudes(axis: QAxis, mut amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != axis.len() {
            return Err(Error::MismatchedGrids(format!(
                "{} amplitudes for {} q-nodes",
                amps.len(),
                axis.len()
            )));
        }
        if let Some(index) = amps.iter().position(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(Error::InvalidSample { index });
        }
        let last = amps.len() - 1;
        amps[0] = Complex64::new(0.0, 0.0);
        amps[last] = Complex64::new(0.0, 0.0);
        let dens: Vec<f64> = amps.iter().map(|a| a.norm_sqr()).collect();
        let norm = trapezoid(axis.grid(), &dens);
        if !(norm > 0.0) {
            return Err(Error::DegenerateState);
        }
        let s = norm.sqrt().recip();
        for a in &mut amps {
            *a *= s;
        }
        Ok(Self { axis, amps })
    }

    pub fn axis(&self) -> &QAxis {
        &self.axis
    }

    pub fn grid(&self) -> &Grid {
        self.axis.grid()
    }

    pub fn beta(&self) -> Deformation {
        self.axis.beta()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// `v(q) = |phi(q)|^2` at the nodes.
    pub fn density_values(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn norm_sq(&self) -> f64 {
        trapezoid(self.grid(), &self.density_values())
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> Complex64 {
        let prod: Vec<Complex64> = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .collect();
        trapezoid(self.grid(), &prod)
    }

    pub fn endpoint_amplitude(&self) -> f64 {
        self.amps[0].norm().max(self.amps[self.amps.len() - 1].norm())
    }

    pub fn q_density(&self) -> Result<Density> {
        Density::new(Axis::Q, *self.grid(), self.density_values())
    }

    /// `<f(q)>` with respect to `|phi|^2`.
    pub fn expect_q(&self, f: impl Fn(f64) -> f64) -> f64 {
        let grid = self.grid();
        let vals: Vec<f64> = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let d = a.norm_sqr();
                if d == 0.0 {
                    0.0
                } else {
                    d * f(grid.node(i))
                }
            })
            .collect();
        trapezoid(grid, &vals)
    }
}

/// Finite ensemble `sum_i w_i |phi_i><phi_i|`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedState {
    components: Vec<(f64, PureState)>,
}

impl MixedState {
    pub fn new(components: Vec<(f64, PureState)>) -> Result<Self> {
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::DomainError(format!("mixture weights sum to {total}")));
        }
        Self::normalized(components)
    }

    /// Rescales positive weights to sum to one.
    pub fn normalized(components: Vec<(f64, PureState)>) -> Result<Self> {
        let first = components.first().ok_or(Error::DegenerateState)?;
        let axis = *first.1.axis();
        if components.iter().any(|(w, _)| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::DomainError("mixture weights must be positive".into()));
        }
        if components.iter().any(|(_, s)| *s.axis() != axis) {
            return Err(Error::MismatchedGrids("mixture components on different q-grids".into()));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        let components = components.into_iter().map(|(w, s)| (w / total, s)).collect();
        Ok(Self { components })
    }

    pub fn pure(state: PureState) -> Self {
        Self {
            components: vec![(1.0, state)],
        }
    }

    pub fn components(&self) -> &[(f64, PureState)] {
        &self.components
    }

    pub fn axis(&self) -> &QAxis {
        self.components[0].1.axis()
    }

    pub fn beta(&self) -> Deformation {
        self.axis().beta()
    }

    pub fn density_values(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.axis().len()];
        for (w, s) in &self.components {
            for (o, a) in out.iter_mut().zip(s.amplitudes()) {
                *o += w * a.norm_sqr();
            }
        }
        out
    }

    pub fn q_density(&self) -> Result<Density> {
        Density::new(Axis::Q, *self.axis().grid(), self.density_values())
    }

    pub fn expect_q(&self, f: impl Fn(f64) -> f64 + Copy) -> f64 {
        self.components.iter().map(|(w, s)| w * s.expect_q(f)).sum()
    }
}

/// Gaussian family: `|phi(q)|^2` is normal with mean `center_q` and standard
/// deviation `width_q`; `center_x` shifts the position wave function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub center_q: f64,
    pub width_q: f64,
    #[serde(default)]
    pub center_x: f64,
}

impl GaussianSpec {
    pub fn centered(width_q: f64) -> Self {
        Self {
            center_q: 0.0,
            width_q,
            center_x: 0.0,
        }
    }

    /// Gaussian with position spread `width_x` centred at `center_x`.
    pub fn from_position_width(width_x: f64, center_x: f64) -> Self {
        Self {
            center_q: 0.0,
            width_q: 0.5 / width_x,
            center_x,
        }
    }

    /// Cutoff used when the band is unbounded.
    pub fn default_cutoff(&self) -> f64 {
        self.center_q.abs() + 8.0 * self.width_q
    }
}

fn normal_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

pub fn gaussian(axis: &QAxis, spec: GaussianSpec) -> Result<PureState> {
    if !(spec.width_q > 0.0) {
        return Err(Error::DomainError(format!("width_q must be positive, got {}", spec.width_q)));
    }
    let half = axis.half_width();
    let truncated = normal_tail((half - spec.center_q) / spec.width_q)
        + normal_tail((half + spec.center_q) / spec.width_q);
    if truncated > MAX_TRUNCATION {
        return Err(Error::ExcessTruncation { fraction: truncated });
    }
    let amps = axis
        .grid()
        .nodes()
        .into_iter()
        .map(|q| {
            let d = q - spec.center_q;
            let mag = (-d * d / (4.0 * spec.width_q * spec.width_q)).exp();
            Complex64::from_polar(mag, -q * spec.center_x)
        })
        .collect();
    PureState::from_amplitudes(*axis, amps)
}

/// Centred-or-offset Gaussian on its own grid; the `beta = 0` cutoff is
/// `|center_q| + 8 width_q`.
pub fn make_gaussian_q(
    beta: Deformation,
    center_q: f64,
    width_q: f64,
    grid_n: usize,
) -> Result<PureState> {
    let spec = GaussianSpec {
        center_q,
        width_q,
        center_x: 0.0,
    };
    if !(width_q > 0.0) {
        return Err(Error::DomainError(format!("width_q must be positive, got {width_q}")));
    }
    let axis = QAxis::new(beta, grid_n, Some(spec.default_cutoff()))?;
    gaussian(&axis, spec)
}

/// Flat amplitude over the whole band with a raised-cosine taper on the
/// outermost [`UNIFORM_TAPER_NODES`] nodes of each edge.
pub fn make_uniform_q(beta: Deformation, grid_n: usize) -> Result<PureState> {
    if !beta.is_deformed() {
        return Err(Error::DomainError("the uniform family needs beta > 0".into()));
    }
    let axis = QAxis::new(beta, grid_n, None)?;
    uniform(&axis, UNIFORM_TAPER_NODES)
}

pub fn uniform(axis: &QAxis, taper: usize) -> Result<PureState> {
    let n = axis.len();
    let mut amps = vec![Complex64::new(1.0, 0.0); n];
    for i in 1..=taper.min(n / 2 - 1) {
        let s = 0.5 * (1.0 - (PI * i as f64 / (taper + 1) as f64).cos());
        amps[i] *= s;
        amps[n - 1 - i] *= s;
    }
    PureState::from_amplitudes(*axis, amps)
}

/// Normalized `sum_i c_i phi_i`.
pub fn make_superposition(states: &[PureState], coeffs: &[Complex64]) -> Result<PureState> {
    let first = states.first().ok_or(Error::DegenerateState)?;
    if states.len() != coeffs.len() {
        return Err(Error::DomainError(format!(
            "{} states but {} coefficients",
            states.len(),
            coeffs.len()
        )));
    }
    let axis = *first.axis();
    if states.iter().any(|s| *s.axis() != axis) {
        return Err(Error::MismatchedGrids("superposed states on different q-grids".into()));
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); axis.len()];
    for (s, c) in states.iter().zip(coeffs) {
        for (o, a) in amps.iter_mut().zip(s.amplitudes()) {
            *o += c * a;
        }
    }
    PureState::from_amplitudes(axis, amps)
}

/// Ranges for randomly drawn Gaussian superpositions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSuperpositionSpec {
    pub terms: usize,
    pub width_q: (f64, f64),
    pub center_q: (f64, f64),
    pub center_x: (f64, f64),
}

impl Default for RandomSuperpositionSpec {
    fn default() -> Self {
        Self {
            terms: 3,
            width_q: (0.35, 0.6),
            center_q: (-0.5, 0.5),
            center_x: (-1.0, 1.0),
        }
    }
}

impl RandomSuperpositionSpec {
    /// Largest q-extent any drawn term can reach, in units of one width.
    pub fn q_extent(&self, widths: f64) -> f64 {
        self.center_q.0.abs().max(self.center_q.1.abs()) + widths * self.width_q.1
    }
}

fn draw(rng: &mut impl Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.gen_range(range.0..range.1)
    } else {
        range.0
    }
}

pub fn random_superposition(
    axis: &QAxis,
    spec: &RandomSuperpositionSpec,
    rng: &mut impl Rng,
) -> Result<PureState> {
    let mut states = Vec::with_capacity(spec.terms);
    let mut coeffs = Vec::with_capacity(spec.terms);
    for _ in 0..spec.terms.max(1) {
        let g = GaussianSpec {
            center_q: draw(rng, spec.center_q),
            width_q: draw(rng, spec.width_q),
            center_x: draw(rng, spec.center_x),
        };
        states.push(gaussian(axis, g)?);
        coeffs.push(Complex64::from_polar(rng.gen_range(0.2..1.0), rng.gen_range(0.0..2.0 * PI)));
    }
    make_superposition(&states, &coeffs)
}
