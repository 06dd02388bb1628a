//! The q-, x- and k-representations of a state and the density maps
//! between them.
//!
//! `psi(x) = (2 pi)^(-1/2) * integral_{-q0}^{q0} exp(i q x) phi(q) dq`, and the
//! physical wavenumber density is `u(k) = v(q(k)) / (1 + beta k^2)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::ChirpZ;
use crate::grid::{trapezoid, Grid, SampledFunction};
use crate::states::{Deformation, PureState, QAxis};

/// Mass an x-window must capture for [`q_to_x`].
pub const X_CAPTURE: f64 = 1.0 - 1e-6;

/// Mass a k-window must capture for [`q_to_k_density`].
pub const K_CAPTURE: f64 = 1.0 - 1e-6;

/// Default cap on the out-of-band fraction in [`x_to_q`].
pub const DEFAULT_LEAKAGE_CAP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Q,
    X,
    K,
    Zeta,
    Xi,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Q => "q",
            Axis::X => "x",
            Axis::K => "k",
            Axis::Zeta => "zeta",
            Axis::Xi => "xi",
        }
    }
}

/// A sampled probability density on a named axis.
///
/// Construction only checks shape and sign; unit mass is the caller's
/// business (see [`Density::normalized`]).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Density {
    axis: Axis,
    grid: Grid,
    values: Vec<f64>,
}

impl Density {
    /// Negative round-off below `1e-300` in magnitude is clamped to zero.
    pub fn new(axis: Axis, grid: Grid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::MismatchedGrids(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        for (index, v) in values.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidSample { index });
            }
            if *v < 0.0 {
                if *v < -1e-300 {
                    return Err(Error::DomainError(format!(
                        "negative density {v} at index {index}"
                    )));
                }
                *v = 0.0;
            }
        }
        Ok(Self { axis, grid, values })
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }

    /// Divides by `mass` (no checks).
    pub fn renormalized(mut self, mass: f64) -> Self {
        let s = mass.recip();
        for v in &mut self.values {
            *v *= s;
        }
        self
    }

    pub fn normalized(self) -> Result<Self> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(Error::DegenerateState);
        }
        Ok(self.renormalized(m))
    }

    pub fn relabeled(mut self, axis: Axis) -> Self {
        self.axis = axis;
        self
    }

    pub fn moment(&self, f: impl Fn(f64) -> f64) -> f64 {
        let vals: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| if *v == 0.0 { 0.0 } else { v * f(self.grid.node(i)) })
            .collect();
        trapezoid(&self.grid, &vals)
    }

    pub fn mean(&self) -> f64 {
        self.moment(|x| x) / self.mass()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.moment(|x| (x - m) * (x - m)) / self.mass()
    }

    /// Running integral at every node, exact for the piecewise-linear
    /// interpolant of the samples.
    pub fn cumulative(&self) -> Vec<f64> {
        let h = self.grid.spacing();
        let mut out = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in self.values.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            out.push(acc);
        }
        out
    }

    /// Running integral with the Euler-Maclaurin end correction
    /// `-h^2/12 (w'(x_i) - w'(x_0))`, fourth-order at every node.
    pub fn corrected_cumulative(&self) -> Vec<f64> {
        let h = self.grid.spacing();
        let v = &self.values;
        let n = v.len();
        let slope = |i: usize| {
            if i == 0 {
                (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * h)
            }
        };
        let s0 = slope(0);
        self.cumulative()
            .into_iter()
            .enumerate()
            .map(|(i, c)| c - h * h / 12.0 * (slope(i) - s0))
            .collect()
    }

    /// Integral from `lo` to `x` of the piecewise-linear interpolant.
    pub fn cdf_with(&self, cumulative: &[f64], x: f64) -> f64 {
        let last = self.grid.len() - 1;
        if x <= self.grid.lo() {
            return 0.0;
        }
        if x >= self.grid.hi() {
            return cumulative[last];
        }
        let (i, t) = self.grid.locate(x).expect("x inside the grid");
        let (a, b) = (self.values[i], self.values[i + 1]);
        cumulative[i] + self.grid.spacing() * (a * t + 0.5 * (b - a) * t * t)
    }

    /// Smallest node interval `[lo, hi]` leaving at most `tail` of the mass
    /// on each side.
    pub fn quantile_window(&self, tail: f64) -> (f64, f64) {
        let cum = self.cumulative();
        let total = cum[cum.len() - 1];
        let lo_idx = cum.iter().position(|c| *c > tail * total).unwrap_or(0);
        let hi_idx = cum
            .iter()
            .rposition(|c| total - *c > tail * total)
            .map(|i| i + 1)
            .unwrap_or(cum.len() - 1)
            .min(cum.len() - 1);
        (
            self.grid.node(lo_idx.saturating_sub(1)),
            self.grid.node(hi_idx),
        )
    }

    /// Linear interpolation, zero outside the grid.
    pub fn value_at(&self, x: f64) -> f64 {
        match self.grid.locate(x) {
            Some((i, t)) => self.values[i] * (1.0 - t) + self.values[i + 1] * t,
            None => 0.0,
        }
    }
}

/// `integral_a^b d`, with linear partial cells at the interval ends.
pub fn interval_probability(d: &Density, a: f64, b: f64) -> Result<f64> {
    let g = d.grid();
    let slack = 1e-12 * g.span();
    if a < g.lo() - slack || b > g.hi() + slack || !(a < b) {
        return Err(Error::OutOfRange {
            a,
            b,
            lo: g.lo(),
            hi: g.hi(),
        });
    }
    let cum = d.cumulative();
    Ok(d.cdf_with(&cum, b) - d.cdf_with(&cum, a))
}

fn inv_sqrt_2pi() -> f64 {
    (2.0 * PI).sqrt().recip()
}

fn check_capture(captured: f64, required: f64) -> Result<()> {
    if captured < required {
        return Err(Error::WindowTooSmall { captured, required });
    }
    Ok(())
}

/// `psi(x)` on `xgrid` by direct quadrature over the q-grid.
pub fn q_to_x(state: &PureState, xgrid: &Grid) -> Result<SampledFunction<Complex64>> {
    let q = state.grid();
    let weights = q.trapezoid_weights();
    let c = inv_sqrt_2pi();
    let a: Vec<Complex64> = state
        .amplitudes()
        .iter()
        .zip(&weights)
        .map(|(p, w)| p * (w * c))
        .collect();
    let q_nodes = q.nodes();
    let psi: Vec<Complex64> = (0..xgrid.len())
        .into_par_iter()
        .map(|m| {
            let x = xgrid.node(m);
            let mut acc = Complex64::new(0.0, 0.0);
            for (aj, qj) in a.iter().zip(&q_nodes) {
                acc += aj * Complex64::from_polar(1.0, qj * x);
            }
            acc
        })
        .collect();
    finish_q_to_x(psi, xgrid)
}

fn finish_q_to_x(psi: Vec<Complex64>, xgrid: &Grid) -> Result<SampledFunction<Complex64>> {
    let mass = trapezoid(xgrid, &psi.iter().map(|p| p.norm_sqr()).collect::<Vec<_>>());
    check_capture(mass, X_CAPTURE)?;
    SampledFunction::new(*xgrid, psi)
}

/// Result of mapping a position wave function back onto the band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandProjection {
    pub state: PureState,
    /// Fraction of `integral |psi|^2 dx` lying outside the band.
    pub leakage: f64,
    /// `integral |psi|^2 dx` before projection.
    pub norm_sq: f64,
}

/// `phi(q) = (2 pi)^(-1/2) integral exp(-i q x) psi(x) dx` on the band,
/// renormalized; the out-of-band fraction is measured through Parseval.
pub fn x_to_q(psi: &SampledFunction<Complex64>, axis: &QAxis, cap: f64) -> Result<BandProjection> {
    let x = psi.grid();
    let weights = x.trapezoid_weights();
    let c = inv_sqrt_2pi();
    let a: Vec<Complex64> = psi
        .values()
        .iter()
        .zip(&weights)
        .map(|(p, w)| p * (w * c))
        .collect();
    let x_nodes = x.nodes();
    let q = axis.grid();
    let phi: Vec<Complex64> = (0..q.len())
        .into_par_iter()
        .map(|j| {
            let qj = q.node(j);
            let mut acc = Complex64::new(0.0, 0.0);
            for (am, xm) in a.iter().zip(&x_nodes) {
                acc += am * Complex64::from_polar(1.0, -qj * xm);
            }
            acc
        })
        .collect();
    finish_x_to_q(psi, phi, axis, cap)
}

fn finish_x_to_q(
    psi: &SampledFunction<Complex64>,
    phi: Vec<Complex64>,
    axis: &QAxis,
    cap: f64,
) -> Result<BandProjection> {
    let norm_sq = trapezoid(
        psi.grid(),
        &psi.values().iter().map(|p| p.norm_sqr()).collect::<Vec<_>>(),
    );
    if !(norm_sq > 0.0) {
        return Err(Error::DegenerateState);
    }
    let in_band = trapezoid(axis.grid(), &phi.iter().map(|p| p.norm_sqr()).collect::<Vec<_>>());
    let leakage = (1.0 - in_band / norm_sq).max(0.0);
    if leakage > cap {
        return Err(Error::BandLimitViolation {
            leakage,
            cap,
            outcome: None,
        });
    }
    Ok(BandProjection {
        state: PureState::from_amplitudes(*axis, phi)?,
        leakage,
        norm_sq,
    })
}

/// Fast q <-> x transforms between two fixed uniform grids (chirp-z).
#[derive(Debug)]
pub struct FourierPair {
    q: Grid,
    x: Grid,
    to_x: ChirpZ,
    to_q: ChirpZ,
    q_weights: Vec<f64>,
    x_weights: Vec<f64>,
    x_phase: Vec<Complex64>,
    q_phase: Vec<Complex64>,
    x_pre: Vec<Complex64>,
    q_pre: Vec<Complex64>,
}

impl FourierPair {
    pub fn new(q: Grid, x: Grid) -> Self {
        let (hq, hx) = (q.spacing(), x.spacing());
        let (q0, x0) = (q.lo(), x.lo());
        // q_j x_m = q0 x0 + j hq x0 + m hx q0 + j m hq hx
        let c = inv_sqrt_2pi();
        let x_pre = (0..q.len())
            .map(|j| Complex64::from_polar(1.0, j as f64 * hq * x0))
            .collect();
        let x_phase = (0..x.len())
            .map(|m| Complex64::from_polar(c, q0 * x0 + m as f64 * hx * q0))
            .collect();
        let q_pre = (0..x.len())
            .map(|m| Complex64::from_polar(1.0, -(m as f64) * hx * q0))
            .collect();
        let q_phase = (0..q.len())
            .map(|j| Complex64::from_polar(c, -(q0 * x0 + j as f64 * hq * x0)))
            .collect();
        Self {
            q,
            x,
            to_x: ChirpZ::new(q.len(), x.len(), hq * hx),
            to_q: ChirpZ::new(x.len(), q.len(), -hq * hx),
            q_weights: q.trapezoid_weights(),
            x_weights: x.trapezoid_weights(),
            x_phase,
            q_phase,
            x_pre,
            q_pre,
        }
    }

    pub fn q_grid(&self) -> &Grid {
        &self.q
    }

    pub fn x_grid(&self) -> &Grid {
        &self.x
    }

    /// Raw `psi` values for amplitudes on the q-grid.
    pub fn to_x(&self, phi: &[Complex64]) -> Vec<Complex64> {
        let a: Vec<Complex64> = phi
            .iter()
            .zip(&self.q_weights)
            .zip(&self.x_pre)
            .map(|((p, w), e)| p * e * *w)
            .collect();
        let mut out = self.to_x.apply(&a);
        for (o, e) in out.iter_mut().zip(&self.x_phase) {
            *o *= e;
        }
        out
    }

    /// Raw `phi` values (not projected or normalized) for `psi` on the x-grid.
    pub fn to_q(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let a: Vec<Complex64> = psi
            .iter()
            .zip(&self.x_weights)
            .zip(&self.q_pre)
            .map(|((p, w), e)| p * e * *w)
            .collect();
        let mut out = self.to_q.apply(&a);
        for (o, e) in out.iter_mut().zip(&self.q_phase) {
            *o *= e;
        }
        out
    }

    /// Checked `psi(x)`, as [`q_to_x`].
    pub fn state_to_x(&self, state: &PureState) -> Result<SampledFunction<Complex64>> {
        if *state.grid() != self.q {
            return Err(Error::MismatchedGrids("state is not on this pair's q-grid".into()));
        }
        finish_q_to_x(self.to_x(state.amplitudes()), &self.x)
    }

    /// Checked projection, as [`x_to_q`].
    pub fn project(
        &self,
        psi: &SampledFunction<Complex64>,
        axis: &QAxis,
        cap: f64,
    ) -> Result<BandProjection> {
        if *psi.grid() != self.x || *axis.grid() != self.q {
            return Err(Error::MismatchedGrids("wave function is not on this pair's grids".into()));
        }
        finish_x_to_q(psi, self.to_q(psi.values()), axis, cap)
    }
}

/// Monotone piecewise-cubic (Fritsch-Carlson) interpolant on a uniform grid.
#[derive(Debug, Clone)]
pub struct Pchip {
    grid: Grid,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    pub fn new(grid: Grid, values: Vec<f64>) -> Self {
        let h = grid.spacing();
        let n = values.len();
        let delta: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let mut slopes = vec![0.0; n];
        for i in 1..n - 1 {
            let (a, b) = (delta[i - 1], delta[i]);
            if a * b > 0.0 {
                slopes[i] = 2.0 * a * b / (a + b);
            }
        }
        slopes[0] = end_slope(delta[0], delta[1]);
        slopes[n - 1] = end_slope(delta[n - 2], delta[n - 3]);
        Self {
            grid,
            values,
            slopes,
        }
    }

    /// Zero outside the grid.
    pub fn eval(&self, x: f64) -> f64 {
        let Some((i, t)) = self.grid.locate(x) else {
            return 0.0;
        };
        let h = self.grid.spacing();
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }
}

fn end_slope(d0: f64, d1: f64) -> f64 {
    let m = 1.5 * d0 - 0.5 * d1;
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// `u(k)` sampled on `kgrid` together with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct KDensity {
    pub density: Density,
    pub captured: f64,
    /// Mass removed by clamping negative interpolants.
    pub clamped: f64,
}

/// `u(k) = v(q(k)) / (1 + beta k^2)` on `kgrid`; `kgrid` must capture
/// [`K_CAPTURE`] of the mass.
pub fn q_to_k_density(v: &Density, beta: Deformation, kgrid: &Grid) -> Result<Density> {
    Ok(q_to_k_density_capturing(v, beta, kgrid, K_CAPTURE)?.density)
}

pub fn q_to_k_density_capturing(
    v: &Density,
    beta: Deformation,
    kgrid: &Grid,
    required: f64,
) -> Result<KDensity> {
    if v.axis() != Axis::Q {
        return Err(Error::DomainError(format!("expected a q density, got {}", v.axis().name())));
    }
    if !beta.is_deformed() && kgrid == v.grid() {
        let density = v.clone().relabeled(Axis::K);
        let captured = density.mass();
        check_capture(captured, required)?;
        return Ok(KDensity {
            density,
            captured,
            clamped: 0.0,
        });
    }
    let interp = Pchip::new(*v.grid(), v.values().to_vec());
    let raw: Vec<f64> = kgrid
        .nodes()
        .into_par_iter()
        .map(|k| interp.eval(beta.q_of_k(k)) / beta.jacobian_at_k(k))
        .collect();
    let negative: Vec<f64> = raw.iter().map(|u| (-u).max(0.0)).collect();
    let clamped = trapezoid(kgrid, &negative);
    let values = raw.into_iter().map(|u| u.max(0.0)).collect();
    let density = Density::new(Axis::K, *kgrid, values)?;
    let captured = density.mass();
    check_capture(captured, required)?;
    Ok(KDensity {
        density,
        captured,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{gaussian, make_gaussian_q, make_uniform_q, GaussianSpec};
    use approx::assert_abs_diff_eq;

    fn beta(b: f64) -> Deformation {
        Deformation::new(b).unwrap()
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn gaussian_fourier_pair() {
        // |phi|^2 ~ N(0, s^2)  =>  |psi|^2 ~ N(0, 1/(4 s^2)), psi real and even
        let s = 0.5;
        let state = make_gaussian_q(beta(0.01), 0.0, s, 4096).unwrap();
        let x = Grid::symmetric(12.0, 801).unwrap();
        let psi = q_to_x(&state, &x).unwrap();
        let sx = 1.0 / (2.0 * s);
        // exact transform of the untruncated amplitude
        let norm = (2.0 * PI * sx * sx).powf(-0.25);
        let mut err: f64 = 0.0;
        for (i, p) in psi.values().iter().enumerate() {
            let xv = x.node(i);
            let exact = norm * (-xv * xv / (4.0 * sx * sx)).exp();
            err = err.max((p.re - exact).abs());
            assert!(p.im.abs() < 1e-10);
            assert!((p - psi.values()[x.len() - 1 - i]).norm() < 1e-10);
        }
        assert!(err < 1e-6, "{err}");
        let mass = trapezoid(&x, &psi.values().iter().map(|p| p.norm_sqr()).collect::<Vec<_>>());
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn window_too_small() {
        let state = make_gaussian_q(beta(0.01), 0.0, 0.5, 1024).unwrap();
        let x = Grid::symmetric(1.0, 101).unwrap();
        assert!(matches!(q_to_x(&state, &x), Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn round_trip() {
        let b = beta(0.1);
        let axis = QAxis::new(b, 1024, None).unwrap();
        let state = gaussian(
            &axis,
            GaussianSpec {
                center_q: 0.7,
                width_q: 0.4,
                center_x: -1.5,
            },
        )
        .unwrap();
        let q0 = b.q0().unwrap();
        let x = Grid::with_spacing(-40.0, 40.0, 0.5 * PI / q0).unwrap();
        let psi = q_to_x(&state, &x).unwrap();
        let back = x_to_q(&psi, &axis, DEFAULT_LEAKAGE_CAP).unwrap();
        assert!(back.leakage < 1e-10, "{}", back.leakage);
        assert!(max_diff(back.state.amplitudes(), state.amplitudes()) < 1e-8);
        assert_abs_diff_eq!(back.state.norm_sq(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn fast_path_matches_direct() {
        let b = beta(0.1);
        let axis = QAxis::new(b, 512, None).unwrap();
        let state = gaussian(
            &axis,
            GaussianSpec {
                center_q: -0.4,
                width_q: 0.5,
                center_x: 2.0,
            },
        )
        .unwrap();
        let x = Grid::new(-25.0, 31.0, 700).unwrap();
        let pair = FourierPair::new(*axis.grid(), x);
        let direct = q_to_x(&state, &x).unwrap();
        let fast = pair.state_to_x(&state).unwrap();
        assert!(max_diff(direct.values(), fast.values()) < 1e-9);

        let g: Vec<Complex64> = direct
            .values()
            .iter()
            .zip(x.nodes())
            .map(|(p, xv)| p * (-(xv - 1.0) * (xv - 1.0) / 0.5).exp())
            .collect();
        let chi = SampledFunction::new(x, g).unwrap();
        let d = x_to_q(&chi, &axis, 1.0).unwrap();
        let f = pair.project(&chi, &axis, 1.0).unwrap();
        assert!(max_diff(d.state.amplitudes(), f.state.amplitudes()) < 1e-9);
        assert!((d.leakage - f.leakage).abs() < 1e-9);
    }

    #[test]
    fn leakage_matches_extended_band() {
        let b = beta(0.1);
        let q0 = b.q0().unwrap();
        let axis = QAxis::new(b, 2048, None).unwrap();
        let state = gaussian(&axis, GaussianSpec::centered(1.0)).unwrap();
        let x = Grid::with_spacing(-30.0, 30.0, 0.25 * PI / q0).unwrap();
        let psi = q_to_x(&state, &x).unwrap();
        let narrow: Vec<Complex64> = psi
            .values()
            .iter()
            .zip(x.nodes())
            .map(|(p, xv)| p * (-xv * xv / (4.0 * 0.15 * 0.15)).exp())
            .collect();
        let chi = SampledFunction::new(x, narrow).unwrap();
        let proj = x_to_q(&chi, &axis, 1.0).unwrap();
        assert!(proj.leakage > 1e-3);

        // out-of-band spectrum integrated on an extended q-grid
        let wide = Grid::new(-3.0 * q0, 3.0 * q0, 6 * 2048 + 1).unwrap();
        let pair = FourierPair::new(wide, x);
        let spec: Vec<f64> = pair.to_q(chi.values()).iter().map(|p| p.norm_sqr()).collect();
        let outside: Vec<f64> = spec
            .iter()
            .zip(wide.nodes())
            .map(|(s, q)| if q.abs() > q0 { *s } else { 0.0 })
            .collect();
        let oracle = trapezoid(&wide, &outside) / proj.norm_sq;
        assert!((proj.leakage - oracle).abs() < 1e-3 * oracle, "{} vs {oracle}", proj.leakage);
    }

    #[test]
    fn uniform_v_maps_to_lorentzian() {
        let b = beta(0.5);
        let s = b.min_length();
        let state = make_uniform_q(b, 4096).unwrap();
        let v = state.q_density().unwrap();
        let k = Grid::symmetric(40.0 / s, 8001).unwrap();
        let u = q_to_k_density_capturing(&v, b, &k, 0.9).unwrap();
        for (kv, uv) in k.nodes().into_iter().zip(u.density.values()) {
            let exact = s / (PI * (1.0 + b.beta() * kv * kv));
            assert!((uv - exact).abs() < 1e-3 * exact, "k={kv}");
        }
        assert!(matches!(
            q_to_k_density(&v, b, &k),
            Err(Error::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn k_density_preserves_mass() {
        let b = beta(0.1);
        let state = make_gaussian_q(b, 0.3, 0.5, 4096).unwrap();
        let v = state.q_density().unwrap();
        let k = Grid::symmetric(12.0, 12001).unwrap();
        let u = q_to_k_density(&v, b, &k).unwrap();
        assert_abs_diff_eq!(u.mass(), 1.0, epsilon = 1e-5);
        for (q1, q2) in [(-0.5, 0.2), (0.0, 1.0), (0.4, 2.0), (-2.0, -0.1)] {
            let pv = interval_probability(&v, q1, q2).unwrap();
            let pu = interval_probability(&u, b.k_of_q(q1), b.k_of_q(q2)).unwrap();
            assert!((pv - pu).abs() < 1e-5, "({q1},{q2}): {pv} vs {pu}");
        }
    }

    #[test]
    fn k_density_identity_at_zero_beta() {
        let state = make_gaussian_q(Deformation::none(), 0.0, 0.5, 1024).unwrap();
        let v = state.q_density().unwrap();
        let u = q_to_k_density(&v, Deformation::none(), v.grid()).unwrap();
        assert_eq!(u.values(), v.values());
        assert_eq!(u.axis(), Axis::K);
    }

    #[test]
    fn interval_probabilities() {
        let state = make_gaussian_q(beta(0.05), 0.0, 0.7, 2048).unwrap();
        let v = state.q_density().unwrap();
        let g = *v.grid();
        assert_abs_diff_eq!(interval_probability(&v, g.lo(), g.hi()).unwrap(), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(interval_probability(&v, 0.0, g.hi()).unwrap(), 0.5, epsilon = 1e-6);
        assert!(matches!(
            interval_probability(&v, g.lo() - 1.0, 0.0),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn uniform_interval_bijection() {
        let b = beta(1.0);
        let state = make_uniform_q(b, 4096).unwrap();
        let v = state.q_density().unwrap();
        let k = Grid::symmetric(60.0, 120_001).unwrap();
        let u = q_to_k_density_capturing(&v, b, &k, 0.9).unwrap().density;
        for (q1, q2) in [(-1.0, 0.5), (0.1, 1.2), (-1.4, -0.3)] {
            let pv = interval_probability(&v, q1, q2).unwrap();
            let pu = interval_probability(&u, b.k_of_q(q1), b.k_of_q(q2)).unwrap();
            assert!((pv - pu).abs() < 1e-5, "({q1},{q2}): {pv} vs {pu}");
        }
    }

    #[test]
    fn pchip_is_monotone_and_exact_on_nodes() {
        let g = Grid::new(0.0, 1.0, 11).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|x| if *x < 0.5 { 0.0 } else { 1.0 }).collect();
        let p = Pchip::new(g, vals.clone());
        for (i, v) in vals.iter().enumerate() {
            assert_eq!(p.eval(g.node(i)), *v);
        }
        let mut prev = -1.0;
        for i in 0..=1000 {
            let y = p.eval(i as f64 / 1000.0);
            assert!(y >= prev - 1e-15 && (0.0..=1.0).contains(&y));
            prev = y;
        }
    }
}
