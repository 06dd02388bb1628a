//! Uniform grids, composite trapezoid quadrature, density convolution and a
//! scan-plus-golden-section supremum search.
//!
//! Every reduction in this module runs sequentially in index order so that
//! results do not depend on how many worker threads produced the summands.

use std::ops::{Add, Mul};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::AcceptanceProfile;
use crate::transforms::{Axis, Density};

/// Smallest admissible number of nodes.
pub const MIN_NODES: usize = 8;

/// Allowed drift of a convolved density before it counts as under-resolved.
pub const CONVOLUTION_DRIFT_LIMIT: f64 = 1e-6;

/// A uniform grid `lo, lo + h, ..., hi` with `n` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    lo: f64,
    hi: f64,
    n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidGrid(format!("non-finite bounds [{lo}, {hi}]")));
        }
        if lo >= hi {
            return Err(Error::InvalidGrid(format!("lo {lo} must be below hi {hi}")));
        }
        if n < MIN_NODES {
            return Err(Error::InvalidGrid(format!("{n} nodes, need at least {MIN_NODES}")));
        }
        Ok(Self { lo, hi, n })
    }

    /// Symmetric grid on `[-half, half]`.
    pub fn symmetric(half: f64, n: usize) -> Result<Self> {
        Self::new(-half, half, n)
    }

    /// Grid starting at `lo` with exact spacing `h` that reaches at least `hi`.
    pub fn with_spacing(lo: f64, hi: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing {h} must be positive")));
        }
        let cells = ((hi - lo) / h - 1e-9).ceil().max((MIN_NODES - 1) as f64) as usize;
        Self::new(lo, lo + cells as f64 * h, cells + 1)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Same span with the spacing divided by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            lo: self.lo,
            hi: self.hi,
            n: (self.n - 1) * factor.max(1) + 1,
        }
    }

    /// Trapezoid weights `h * tau_i` (half weight on the two end nodes).
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n];
        w[0] *= 0.5;
        w[self.n - 1] *= 0.5;
        w
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Cell index `i` and fractional position `t` in `[0, 1]` with
    /// `x = node(i) + t h`; `None` outside the grid.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if !self.contains(x) {
            return None;
        }
        let h = self.spacing();
        let s = (x - self.lo) / h;
        let i = (s.floor() as usize).min(self.n - 2);
        Some((i, (s - i as f64).clamp(0.0, 1.0)))
    }

    /// Index range of nodes inside `[a, b]`.
    pub fn index_range(&self, a: f64, b: f64) -> std::ops::Range<usize> {
        let h = self.spacing();
        let start = ((a - self.lo) / h).ceil().max(0.0) as usize;
        let end = (((b - self.lo) / h).floor() + 1.0).clamp(0.0, self.n as f64) as usize;
        start.min(end)..end
    }
}

/// Values that the trapezoid rule can sum.
pub trait Sample: Copy + Send + Sync + Add<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn finite(&self) -> bool;
}

impl Sample for f64 {
    fn zero() -> Self {
        0.0
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

impl Sample for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Samples of a real or complex function on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction<T> {
    grid: Grid,
    values: Vec<T>,
}

impl<T: Sample> SampledFunction<T> {
    pub fn new(grid: Grid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::MismatchedGrids(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.finite()) {
            return Err(Error::InvalidSample { index });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> T) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

/// Composite trapezoid sum over raw values; no validation.
pub fn trapezoid<T: Sample>(grid: &Grid, values: &[T]) -> T {
    debug_assert_eq!(values.len(), grid.len());
    let n = values.len();
    let mut interior = T::zero();
    for v in &values[1..n - 1] {
        interior = interior + *v;
    }
    let ends = (values[0] + values[n - 1]) * 0.5;
    (interior + ends) * grid.spacing()
}

/// Composite trapezoid value of the integral over `[grid.lo, grid.hi]`.
pub fn integrate<T: Sample>(f: &SampledFunction<T>) -> Result<T> {
    if let Some(index) = f.values.iter().position(|v| !v.finite()) {
        return Err(Error::InvalidSample { index });
    }
    Ok(trapezoid(&f.grid, &f.values))
}

/// Trapezoid estimate together with a halved-spacing rerun used as its
/// error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub refined: f64,
}

impl Quadrature {
    pub fn error_estimate(&self) -> f64 {
        (self.value - self.refined).abs()
    }
}

/// Integrates `f` on `grid` and on the grid with halved spacing.
pub fn integrate_with_estimate(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Quadrature> {
    let coarse = SampledFunction::from_fn(*grid, &f)?;
    let fine = SampledFunction::from_fn(grid.refined(2), &f)?;
    Ok(Quadrature {
        value: integrate(&coarse)?,
        refined: integrate(&fine)?,
    })
}

/// Linear kernel operator `out_j = sum_m K(out_j - in_m) * w_m * h_m`, stored
/// as one band of nonzero entries per output node.
#[derive(Debug, Clone)]
pub struct ConvolutionKernel {
    input: Grid,
    output: Grid,
    rows: Vec<(usize, Vec<f64>)>,
}

impl ConvolutionKernel {
    /// `kernel(t)` must vanish (below double precision relevance) for
    /// `|t - center| > reach`.
    pub fn new(
        input: Grid,
        output: Grid,
        kernel: impl Fn(f64) -> f64 + Sync,
        center: f64,
        reach: f64,
    ) -> Self {
        Self::with_support(
            input,
            output,
            |y, x| kernel(y - x),
            |y| (y - center - reach, y - center + reach),
        )
    }

    /// General kernel `K(y, x)` that vanishes for `x` outside `support(y)`.
    pub fn with_support(
        input: Grid,
        output: Grid,
        kernel: impl Fn(f64, f64) -> f64 + Sync,
        support: impl Fn(f64) -> (f64, f64) + Sync,
    ) -> Self {
        let weights = input.trapezoid_weights();
        let rows = (0..output.len())
            .into_par_iter()
            .map(|j| {
                let y = output.node(j);
                let (a, b) = support(y);
                let range = input.index_range(a, b);
                let start = range.start;
                let vals = range
                    .map(|m| kernel(y, input.node(m)) * weights[m])
                    .collect::<Vec<_>>();
                (start, vals)
            })
            .collect();
        Self { input, output, rows }
    }

    /// First input index and quadrature-weighted entries of row `j`.
    pub fn row(&self, j: usize) -> (usize, &[f64]) {
        let (start, vals) = &self.rows[j];
        (*start, vals)
    }

    pub fn input(&self) -> &Grid {
        &self.input
    }

    pub fn output(&self) -> &Grid {
        &self.output
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.input.len());
        self.rows
            .iter()
            .map(|(start, row)| {
                let mut acc = 0.0;
                for (k, w) in row.iter().enumerate() {
                    acc += w * values[start + k];
                }
                acc
            })
            .collect()
    }
}

fn output_axis(axis: Axis) -> Axis {
    match axis {
        Axis::X => Axis::Xi,
        Axis::K => Axis::Zeta,
        other => other,
    }
}

fn check_unit_mass(mass: f64) -> Result<()> {
    let drift = (mass - 1.0).abs();
    if drift >= CONVOLUTION_DRIFT_LIMIT {
        return Err(Error::NormalizationError {
            drift,
            limit: CONVOLUTION_DRIFT_LIMIT,
        });
    }
    Ok(())
}

/// `xi -> integral |g(xi - x)|^2 w(x) dx` on `out_grid` by direct double-sum
/// quadrature. The output is renormalized when its drift is below
/// [`CONVOLUTION_DRIFT_LIMIT`].
pub fn convolve_density(
    w: &Density,
    profile: &AcceptanceProfile,
    out_grid: &Grid,
) -> Result<Density> {
    check_unit_mass(w.mass())?;
    check_unit_mass(profile.norm())?;
    let kernel = ConvolutionKernel::new(
        *w.grid(),
        *out_grid,
        |t| profile.sq(t),
        profile.center_offset(),
        profile.reach(),
    );
    finish_convolution(w.axis(), *out_grid, kernel.apply(w.values()))
}

/// FFT route of [`convolve_density`] for an output grid equal to the input
/// grid. Must agree with the direct route to 1e-9.
pub fn convolve_density_fft(w: &Density, profile: &AcceptanceProfile) -> Result<Density> {
    check_unit_mass(w.mass())?;
    check_unit_mass(profile.norm())?;
    let grid = *w.grid();
    let n = grid.len();
    let h = grid.spacing();
    let weights = grid.trapezoid_weights();
    // out_j = sum_m K((j - m) h) a_m with lags in -(n-1)..=(n-1)
    let len = (2 * n - 1).next_power_of_two();
    let mut a = vec![Complex64::new(0.0, 0.0); len];
    for m in 0..n {
        a[m] = Complex64::new(w.values()[m] * weights[m], 0.0);
    }
    let mut kern = vec![Complex64::new(0.0, 0.0); len];
    for lag in -(n as i64 - 1)..=(n as i64 - 1) {
        let idx = lag.rem_euclid(len as i64) as usize;
        kern[idx] = Complex64::new(profile.sq(lag as f64 * h), 0.0);
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    fwd.process(&mut a);
    fwd.process(&mut kern);
    for (x, k) in a.iter_mut().zip(&kern) {
        *x *= *k;
    }
    inv.process(&mut a);
    let scale = 1.0 / len as f64;
    let values = a[..n].iter().map(|c| (c.re * scale).max(0.0)).collect();
    finish_convolution(w.axis(), grid, values)
}

fn finish_convolution(axis: Axis, grid: Grid, values: Vec<f64>) -> Result<Density> {
    let raw = Density::new(output_axis(axis), grid, values)?;
    let mass = raw.mass();
    check_unit_mass(mass)?;
    Ok(raw.renormalized(mass))
}

/// Location and value of a numerically located supremum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Supremum {
    pub location: f64,
    pub value: f64,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Coarse scan over `scan_n` nodes followed by golden-section refinement
/// around the best node. A maximum on the first or last scan node is an
/// error rather than a silent under-estimate.
pub fn supremum_1d(
    h: impl Fn(f64) -> f64 + Sync,
    scan_lo: f64,
    scan_hi: f64,
    scan_n: usize,
) -> Result<Supremum> {
    if scan_n < 64 {
        return Err(Error::InvalidGrid(format!("scan needs at least 64 nodes, got {scan_n}")));
    }
    let grid = Grid::new(scan_lo, scan_hi, scan_n)?;
    let samples: Vec<f64> = (0..scan_n).into_par_iter().map(|i| h(grid.node(i))).collect();
    if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidSample { index });
    }
    let best_value = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // ties resolve toward the middle of the scan
    let mid = (scan_n - 1) as f64 / 2.0;
    let best = (0..scan_n)
        .filter(|&i| samples[i] == best_value)
        .min_by(|&a, &b| {
            let da = (a as f64 - mid).abs();
            let db = (b as f64 - mid).abs();
            da.partial_cmp(&db).unwrap()
        })
        .unwrap();
    if best == 0 || best == scan_n - 1 {
        return Err(Error::BoundaryMaximum {
            location: grid.node(best),
        });
    }

    let mut a = grid.node(best - 1);
    let mut b = grid.node(best + 1);
    let tol = 1e-10 * (scan_hi - scan_lo);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = h(x1);
    let mut f2 = h(x2);
    while b - a > tol {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = h(x1);
        } else if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = h(x2);
        } else {
            // equal values: the maximizer lies between the probes
            a = x1;
            b = x2;
            x1 = b - INV_PHI * (b - a);
            x2 = a + INV_PHI * (b - a);
            f1 = h(x1);
            f2 = h(x2);
        }
    }
    let centre = 0.5 * (a + b);
    let candidates = [
        (centre, h(centre)),
        (x1, f1),
        (x2, f2),
        (grid.node(best), best_value),
    ];
    let (location, value) = candidates
        .into_iter()
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
    Ok(Supremum { location, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gaussian(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(Grid::new(1.0, 0.0, 10).is_err());
        assert!(Grid::new(0.0, 1.0, 7).is_err());
        assert!(Grid::new(0.0, f64::INFINITY, 10).is_err());
    }

    #[test]
    fn last_node_is_hi() {
        let g = Grid::new(-0.3, 0.7, 1001).unwrap();
        assert_eq!(g.node(1000), 0.7);
        assert!((g.node(999) + g.spacing() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn constant_integrates_exactly() {
        let f = SampledFunction::from_fn(Grid::new(0.0, 1.0, 101).unwrap(), |_| 1.0).unwrap();
        assert_abs_diff_eq!(integrate(&f).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn linear_is_exact() {
        let f = SampledFunction::from_fn(Grid::new(0.0, 1.0, 101).unwrap(), |x| x).unwrap();
        assert_abs_diff_eq!(integrate(&f).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_against_halved_spacing() {
        let grid = Grid::new(-8.0, 8.0, 4096).unwrap();
        let q = integrate_with_estimate(&grid, gaussian).unwrap();
        assert!((q.value - q.refined).abs() < 1e-12);
        assert_abs_diff_eq!(q.value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn second_order_convergence() {
        // non-periodic smooth integrand so the O(h^2) term is visible
        let exact = std::f64::consts::E - 1.0;
        let err = |n| {
            let f = SampledFunction::from_fn(Grid::new(0.0, 1.0, n).unwrap(), f64::exp).unwrap();
            (integrate(&f).unwrap() - exact).abs()
        };
        let ratio = err(65) / err(129);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn non_finite_rejected() {
        let g = Grid::new(0.0, 1.0, 8).unwrap();
        let mut v = vec![1.0; 8];
        v[3] = f64::NAN;
        assert_eq!(SampledFunction::new(g, v).unwrap_err(), Error::InvalidSample { index: 3 });
    }

    #[test]
    fn supremum_examples() {
        let s = supremum_1d(|z| 1.0 / (1.0 + z * z), -10.0, 10.0, 201).unwrap();
        assert_abs_diff_eq!(s.location, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.value, 1.0, epsilon = 1e-8);

        let s = supremum_1d(|z| -(z - 2.0) * (z - 2.0), -10.0, 10.0, 128).unwrap();
        assert_abs_diff_eq!(s.location, 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.value, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn supremum_two_bumps_against_dense_scan() {
        let h = |z: f64| (-(z - 1.0) * (z - 1.0)).exp() + 0.5 * (-(z + 3.0) * (z + 3.0)).exp();
        // oracle: 10^6-node scan
        let g = Grid::new(-10.0, 10.0, 1_000_001).unwrap();
        let (mut bx, mut bv) = (0.0, f64::NEG_INFINITY);
        for i in 0..g.len() {
            let v = h(g.node(i));
            if v > bv {
                bv = v;
                bx = g.node(i);
            }
        }
        let s = supremum_1d(h, -10.0, 10.0, 256).unwrap();
        assert_abs_diff_eq!(s.location, bx, epsilon = 1e-5);
        assert_abs_diff_eq!(s.location, 1.0, epsilon = 1e-6);
        assert!(s.value >= bv);
        assert_abs_diff_eq!(s.value, bv, epsilon = 1e-9);
    }

    #[test]
    fn supremum_boundary_is_error() {
        let e = supremum_1d(|z| z, 0.0, 1.0, 64).unwrap_err();
        assert!(matches!(e, Error::BoundaryMaximum { .. }));
        assert!(supremum_1d(|z| z, 0.0, 1.0, 63).is_err());
    }

    #[test]
    fn kernel_matches_naive_sum() {
        let input = Grid::new(-3.0, 3.0, 61).unwrap();
        let output = Grid::new(-2.0, 2.5, 17).unwrap();
        let k = ConvolutionKernel::new(input, output, |t| (-t * t).exp(), 0.0, 50.0);
        let w: Vec<f64> = input.nodes().iter().map(|x| 1.0 + x.sin()).collect();
        let got = k.apply(&w);
        let tw = input.trapezoid_weights();
        for (j, g) in got.iter().enumerate() {
            let y = output.node(j);
            let naive: f64 = (0..input.len())
                .map(|m| (-(y - input.node(m)).powi(2)).exp() * w[m] * tw[m])
                .sum();
            assert_abs_diff_eq!(*g, naive, epsilon = 1e-13);
        }
    }

    proptest::proptest! {
        #[test]
        fn integrate_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, c in 0.1f64..3.0) {
            let grid = Grid::new(-2.0, 3.0, 257).unwrap();
            let f = |x: f64| (c * x).sin();
            let g = |x: f64| x * x - c;
            let lhs = integrate(&SampledFunction::from_fn(grid, |x| a * f(x) + b * g(x)).unwrap()).unwrap();
            let rhs = a * integrate(&SampledFunction::from_fn(grid, f).unwrap()).unwrap()
                + b * integrate(&SampledFunction::from_fn(grid, g).unwrap()).unwrap();
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(rhs.abs())));
        }

        #[test]
        fn supremum_dominates_scan(c in -3.0f64..3.0, w in 0.3f64..2.0) {
            let h = |z: f64| (-(z - c) * (z - c) / w).exp() + 0.1 * (z / 7.0).cos();
            let s = supremum_1d(h, -8.0, 8.0, 97).unwrap();
            let grid = Grid::new(-8.0, 8.0, 97).unwrap();
            for i in 0..97 {
                proptest::prop_assert!(s.value >= h(grid.node(i)));
            }
        }
    }
}
