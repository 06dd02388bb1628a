//! One state measured by one pair of instruments: grid layout, the
//! preparation densities, and both measurement sequences, computed once
//! and shared by every relation checked on the cell.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    correction_term, kappa, renyi_rhs, robertson_moments, sf_compute, shannon_rhs, tsallis_rhs,
    Cell, Functional, MeasurementOrder, RelationId, RelationReport, Scenario as Kind,
};
use crate::entropy::{
    aligned_edges, bin_density, renyi_differential, renyi_discrete, tsallis_discrete, EntropyOrder,
};
use crate::error::{Error, Result};
use crate::grid::{trapezoid, Grid, Supremum};
use crate::measurement::{
    outcome_weights, x_spacing, x_window, AcceptanceProfile, MomentumInstrument,
    PositionInstrument,
};
use crate::states::{Deformation, MixedState};
use crate::transforms::{Axis, Density, DEFAULT_LEAKAGE_CAP};

/// Tail mass left outside the planned windows on each side.
pub const WINDOW_TAIL: f64 = 5e-8;

/// Profile spreads (in units of the profile width or kick) added to the
/// windows.
pub const SPREAD_SIGMAS: f64 = 5.5;

/// Largest outcome-weighted mass the post-measurement densities may lose.
pub const POST_MISSING_LIMIT: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinWidths {
    pub dzeta: f64,
    pub dxi: f64,
}

impl Default for BinWidths {
    fn default() -> Self {
        Self {
            dzeta: 0.25,
            dxi: 0.25,
        }
    }
}

impl BinWidths {
    pub fn new(dzeta: f64, dxi: f64) -> Result<Self> {
        for (name, v) in [("dzeta", dzeta), ("dxi", dxi)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::ConfigError(format!("bin width {name} must be positive, got {v}")));
            }
        }
        Ok(Self { dzeta, dxi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabOptions {
    pub bins: BinWidths,
    /// Node-density multiplier on the zeta, x and xi grids.
    pub refine: usize,
    pub leakage_cap: f64,
}

impl Default for LabOptions {
    fn default() -> Self {
        Self {
            bins: BinWidths::default(),
            refine: 1,
            leakage_cap: DEFAULT_LEAKAGE_CAP,
        }
    }
}

/// Outcome and position grids. Outcome grids end on multiples of the bin
/// widths so that bin edges fall on nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub zeta: Grid,
    pub x: Grid,
    pub xi: Grid,
}

impl Layout {
    pub fn plan(
        rho: &MixedState,
        f: &AcceptanceProfile,
        g: &AcceptanceProfile,
        bins: BinWidths,
        refine: usize,
    ) -> Result<Self> {
        let beta = rho.beta();
        let refine = refine.max(1);
        let v = rho.q_density()?;

        // position measurements kick q by about kick_g
        let (qlo, qhi) = v.quantile_window(WINDOW_TAIL);
        let (qlo, qhi) = broaden(qlo, qhi, SPREAD_SIGMAS * g.kick());
        let (qlo, qhi) = match beta.q0() {
            Some(q0) => (qlo.max(-0.98 * q0), qhi.min(0.98 * q0)),
            None => (qlo, qhi),
        };
        let reach_f = f.reach().min(SPREAD_SIGMAS * f.width());
        let zlo = beta.k_of_q(qlo) + f.center_offset() - reach_f;
        let zhi = beta.k_of_q(qhi) + f.center_offset() + reach_f;
        let zeta = aligned_grid(zlo, zhi, bins.dzeta, f.width() / 4.0, refine)?;

        // momentum measurements kick x by kick_f dx/dk
        let (klo, khi) = v.quantile_window(1e-3);
        let k3 = beta.k_of_q(klo).abs().max(beta.k_of_q(khi).abs());
        let (xlo, xhi) = x_window(rho, WINDOW_TAIL, 14.0)?;
        let kick_x = SPREAD_SIGMAS * f.kick() * (1.0 + beta.beta() * k3 * k3);
        let (xlo, xhi) = broaden(xlo, xhi, kick_x);
        let h = x_spacing(rho, g)? / refine as f64;
        let x = Grid::new(
            (xlo / h).floor() * h,
            (xhi / h).ceil() * h,
            ((xhi / h).ceil() - (xlo / h).floor()) as usize + 1,
        )?;

        let reach_g = g.reach().min(SPREAD_SIGMAS * g.width());
        let xi = aligned_grid(
            x.lo() + g.center_offset() - reach_g,
            x.hi() + g.center_offset() + reach_g,
            bins.dxi,
            g.width() / 4.0,
            refine,
        )?;
        Ok(Self { zeta, x, xi })
    }
}

/// Widens `[lo, hi]` about its midpoint, adding `spread` to the
/// half-width in quadrature.
fn broaden(lo: f64, hi: f64, spread: f64) -> (f64, f64) {
    let mid = 0.5 * (lo + hi);
    let half = (0.25 * (hi - lo) * (hi - lo) + spread * spread).sqrt();
    (mid - half, mid + half)
}

/// Grid from a multiple of `delta` below `lo` to one above `hi`, with a
/// whole number of cells per `delta` and spacing at most `h_max`.
fn aligned_grid(lo: f64, hi: f64, delta: f64, h_max: f64, refine: usize) -> Result<Grid> {
    let per_bin = (delta / h_max).ceil().max(1.0) as usize * refine;
    let first = (lo / delta).floor();
    let last = (hi / delta).ceil().max(first + 1.0);
    let cells = (last - first) as usize * per_bin;
    Grid::new(first * delta, last * delta, cells + 1)
}

/// Cutoff for an undeformed q-axis: nine spreads beyond the farthest
/// component centre, where the spread combines the state width with the
/// kick of the position profile.
pub fn undeformed_cutoff(centres: &[f64], widths: &[f64], kick_g: f64) -> f64 {
    let c = centres.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let w = widths.iter().fold(0.0f64, |m, w| m.max(*w));
    c + 9.0 * (w * w + kick_g * kick_g).sqrt()
}

/// Densities of the unmeasured state.
#[derive(Debug, Clone)]
pub struct Prep {
    pub u: Density,
    pub w: Density,
    pub x_density: Density,
    pub corr: f64,
    /// `H(u) + H(w)` with `H(u) = H(v) + corr`.
    pub ideal_entropy: f64,
}

/// Outcome and position densities of one normalized post-measurement state.
#[derive(Debug, Clone)]
pub struct PostSummary {
    pub u: Density,
    pub w: Density,
    pub corr: f64,
    pub leakage: f64,
    pub capture_u: f64,
    pub capture_w: f64,
}

/// One measurement sequence: the first measurement's outcome ensemble and
/// the densities the second measurement sees.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub order: MeasurementOrder,
    pub weights: Vec<f64>,
    pub outcomes: Vec<f64>,
    pub posts: Vec<PostSummary>,
    /// Densities of the averaged state `Phi(rho)`.
    pub u_phi: Density,
    pub w_phi: Density,
    pub corr_phi: f64,
    pub raw_weight_sum: f64,
    pub dropped_mass: f64,
    pub max_leakage: f64,
    pub mean_leakage: f64,
    /// Outcome-weighted mass the post densities lose off their grids.
    pub post_missing: f64,
}

#[derive(Debug)]
pub struct Lab {
    beta: Deformation,
    rho: MixedState,
    f: AcceptanceProfile,
    g: AcceptanceProfile,
    bins: BinWidths,
    layout: Layout,
    momentum: MomentumInstrument,
    position: PositionInstrument,
    prep: OnceLock<Result<Prep>>,
    mp: OnceLock<Result<Scenario>>,
    pm: OnceLock<Result<Scenario>>,
    sf: OnceLock<Result<Supremum>>,
}

impl Lab {
    pub fn new(
        rho: MixedState,
        f: AcceptanceProfile,
        g: AcceptanceProfile,
        options: LabOptions,
    ) -> Result<Self> {
        let layout = Layout::plan(&rho, &f, &g, options.bins, options.refine)?;
        let momentum = MomentumInstrument::new(&f, rho.axis(), layout.zeta);
        let position =
            PositionInstrument::new(&g, rho.axis(), layout.x, layout.xi, options.leakage_cap);
        Ok(Self {
            beta: rho.beta(),
            rho,
            f,
            g,
            bins: options.bins,
            layout,
            momentum,
            position,
            prep: OnceLock::new(),
            mp: OnceLock::new(),
            pm: OnceLock::new(),
            sf: OnceLock::new(),
        })
    }

    pub fn beta(&self) -> Deformation {
        self.beta
    }

    pub fn rho(&self) -> &MixedState {
        &self.rho
    }

    pub fn f(&self) -> &AcceptanceProfile {
        &self.f
    }

    pub fn g(&self) -> &AcceptanceProfile {
        &self.g
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn bins(&self) -> BinWidths {
        self.bins
    }

    pub fn momentum(&self) -> &MomentumInstrument {
        &self.momentum
    }

    pub fn position(&self) -> &PositionInstrument {
        &self.position
    }

    pub fn sf(&self) -> Result<Supremum> {
        self.sf.get_or_init(|| sf_compute(&self.f, self.beta)).clone()
    }

    pub fn prep(&self) -> Result<&Prep> {
        self.prep
            .get_or_init(|| self.compute_prep())
            .as_ref()
            .map_err(Clone::clone)
    }

    /// The sequence whose first measurement is `order`.
    pub fn scenario(&self, order: MeasurementOrder) -> Result<&Scenario> {
        let cell = match order {
            MeasurementOrder::MomentumFirst => &self.mp,
            MeasurementOrder::PositionFirst => &self.pm,
            MeasurementOrder::Preparation => {
                return Err(Error::ConfigError("preparation has no measurement sequence".into()))
            }
        };
        cell.get_or_init(|| self.compute_scenario(order))
            .as_ref()
            .map_err(Clone::clone)
    }

    fn compute_prep(&self) -> Result<Prep> {
        let u = self.momentum.density(&self.rho)?;
        let x_density = self.position.x_density(&self.rho)?;
        let w = self.position.density(&self.rho)?;
        let corr = correction_term(&self.rho, self.beta);
        let hv = renyi_differential(&self.rho.q_density()?, 1.0)?.value;
        let hw = renyi_differential(&x_density.clone().normalized()?, 1.0)?.value;
        Ok(Prep {
            u,
            w,
            x_density,
            corr,
            ideal_entropy: hv + corr + hw,
        })
    }

    fn summarize(&self, state: &MixedState, leakage: f64) -> Result<PostSummary> {
        let raw_u = self.momentum.raw_density(&state.density_values());
        let raw_x = self.position.raw_x_density(state);
        let raw_w = self.position.raw_density(&raw_x);
        let u = Density::new(Axis::Zeta, self.layout.zeta, raw_u)?;
        let w = Density::new(Axis::Xi, self.layout.xi, raw_w)?;
        let (capture_u, capture_w) = (u.mass(), w.mass());
        if !(capture_u > 0.0 && capture_w > 0.0) {
            return Err(Error::DegenerateState);
        }
        Ok(PostSummary {
            u: u.renormalized(capture_u),
            w: w.renormalized(capture_w),
            corr: correction_term(state, self.beta),
            leakage,
            capture_u,
            capture_w,
        })
    }

    fn compute_scenario(&self, order: MeasurementOrder) -> Result<Scenario> {
        let rho = &self.rho;
        let (grid, raw) = match order {
            MeasurementOrder::MomentumFirst => (
                self.layout.zeta,
                self.momentum.raw_density(&rho.density_values()),
            ),
            _ => {
                let w = self.position.x_density(rho)?;
                (self.layout.xi, self.position.raw_density(w.values()))
            }
        };
        let (idx, weights, raw_weight_sum, dropped_mass) = outcome_weights(&grid, &raw)?;
        let posts: Vec<PostSummary> = match order {
            MeasurementOrder::MomentumFirst => idx
                .par_iter()
                .map(|&j| self.summarize(&self.momentum.post_state(j, rho)?, 0.0))
                .collect::<Result<_>>()?,
            _ => {
                let psis: Vec<_> = rho.components().iter().map(|(_, s)| self.position.psi(s)).collect();
                idx.par_iter()
                    .map(|&j| {
                        let (s, leak) = self.position.post_state_with(j, rho, &psis)?;
                        self.summarize(&s, leak)
                    })
                    .collect::<Result<_>>()?
            }
        };

        let mut u_phi = vec![0.0; self.layout.zeta.len()];
        let mut w_phi = vec![0.0; self.layout.xi.len()];
        let (mut corr_phi, mut missing, mut max_leak, mut mean_leak) = (0.0, 0.0, 0.0f64, 0.0);
        for (c, p) in weights.iter().zip(&posts) {
            for (o, v) in u_phi.iter_mut().zip(p.u.values()) {
                *o += c * v;
            }
            for (o, v) in w_phi.iter_mut().zip(p.w.values()) {
                *o += c * v;
            }
            corr_phi += c * p.corr;
            missing += c * ((1.0 - p.capture_u).max(0.0) + (1.0 - p.capture_w).max(0.0));
            max_leak = max_leak.max(p.leakage);
            mean_leak += c * p.leakage;
        }
        if missing > POST_MISSING_LIMIT {
            return Err(Error::WindowTooSmall {
                captured: 1.0 - missing,
                required: 1.0 - POST_MISSING_LIMIT,
            });
        }
        Ok(Scenario {
            order,
            outcomes: idx.iter().map(|&j| grid.node(j)).collect(),
            weights,
            posts,
            u_phi: Density::new(Axis::Zeta, self.layout.zeta, u_phi)?,
            w_phi: Density::new(Axis::Xi, self.layout.xi, w_phi)?,
            corr_phi,
            raw_weight_sum,
            dropped_mass,
            max_leakage: max_leak,
            mean_leakage: mean_leak,
            post_missing: missing,
        })
    }

    /// Certifies one relation on this cell; failures become error reports.
    pub fn evaluate(
        &self,
        id: RelationId,
        order: MeasurementOrder,
        orders: EntropyOrder,
        tol: f64,
        cell: Cell,
    ) -> RelationReport {
        let orders = if id.takes_orders() {
            Some(orders)
        } else if id == RelationId::Robertson {
            None
        } else {
            Some(EntropyOrder::shannon())
        };
        let b = self.beta.beta();
        match self.assemble(id, order, orders) {
            Ok((lhs, rhs, d)) => RelationReport::evaluated(id, order, orders, b, lhs, rhs, tol, cell, d),
            Err(e) => RelationReport::failed(id, order, orders, b, tol, cell, &e),
        }
    }

    fn assemble(
        &self,
        id: RelationId,
        order: MeasurementOrder,
        orders: Option<EntropyOrder>,
    ) -> Result<(f64, f64, BTreeMap<String, f64>)> {
        if !id.orders().contains(&order) {
            return Err(Error::ConfigError(format!("{id} is not defined for order {order}")));
        }
        let mut d = BTreeMap::new();
        d.insert("beta".to_string(), self.beta.beta());
        d.insert("n_q".into(), self.rho.axis().len() as f64);
        d.insert("n_zeta".into(), self.layout.zeta.len() as f64);
        d.insert("n_x".into(), self.layout.x.len() as f64);
        d.insert("n_xi".into(), self.layout.xi.len() as f64);
        d.insert("q_half_width".into(), self.rho.axis().half_width());
        let Some(functional) = id.functional() else {
            let (lhs, rhs, extra) = robertson_moments(&self.rho, self.beta);
            d.extend(extra);
            return Ok((lhs, rhs, d));
        };
        let o = orders.unwrap_or_else(EntropyOrder::shannon);
        let bins = id.is_binned().then_some(self.bins);
        d.insert("alpha".into(), o.alpha);
        d.insert("gamma".into(), o.gamma);
        if let Some(b) = bins {
            d.insert("dzeta".into(), b.dzeta);
            d.insert("dxi".into(), b.dxi);
        }

        let prep = self.prep()?;
        d.insert("corr_rho".into(), prep.corr);
        d.insert("ideal_lhs".into(), prep.ideal_entropy);
        d.insert("capture_x".into(), prep.x_density.mass());
        let mut tails = Tails::default();
        let ent = |dens: &Density, a: f64, delta: Option<f64>, t: &mut Tails| {
            entropy_of(dens, a, functional, delta, t)
        };
        let (dz, dx) = (bins.map(|b| b.dzeta), bins.map(|b| b.dxi));

        let (first, second, corr) = match (id.scenario(), order) {
            (Kind::Preparation, _) => (
                ent(&prep.u, o.alpha, dz, &mut tails)?,
                ent(&prep.w, o.gamma, dx, &mut tails)?,
                prep.corr,
            ),
            (kind, order) => {
                let s = self.scenario(order)?;
                d.insert("raw_weight_sum".into(), s.raw_weight_sum);
                d.insert("dropped_mass".into(), s.dropped_mass);
                d.insert("leakage_max".into(), s.max_leakage);
                d.insert("leakage_mean".into(), s.mean_leakage);
                d.insert("post_missing".into(), s.post_missing);
                d.insert("outcomes".into(), s.weights.len() as f64);
                d.insert("corr_phi".into(), s.corr_phi);
                if order == MeasurementOrder::MomentumFirst {
                    let rep = prep
                        .u
                        .values()
                        .iter()
                        .zip(s.u_phi.values())
                        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    d.insert("repeatability".into(), rep);
                }
                match kind {
                    Kind::Averaged => match order {
                        MeasurementOrder::MomentumFirst => (
                            ent(&prep.u, o.alpha, dz, &mut tails)?,
                            ent(&s.w_phi, o.gamma, dx, &mut tails)?,
                            prep.corr,
                        ),
                        _ => (
                            ent(&s.u_phi, o.alpha, dz, &mut tails)?,
                            ent(&prep.w, o.gamma, dx, &mut tails)?,
                            s.corr_phi,
                        ),
                    },
                    _ => {
                        let (mut a, mut b) = (0.0, 0.0);
                        for (c, p) in s.weights.iter().zip(&s.posts) {
                            a += c * ent(&p.u, o.alpha, dz, &mut tails)?;
                            b += c * ent(&p.w, o.gamma, dx, &mut tails)?;
                        }
                        d.insert("corr_avg".into(), s.corr_phi);
                        let corr = match order {
                            MeasurementOrder::MomentumFirst => prep.corr,
                            _ => s.corr_phi,
                        };
                        (a, b, corr)
                    }
                }
            }
        };
        d.insert("lhs_first".into(), first);
        d.insert("lhs_second".into(), second);
        d.insert("tail_mass_max".into(), tails.max);
        d.insert("tail_flags".into(), tails.flags as f64);

        let rhs = match functional {
            Functional::Shannon => {
                d.insert("corr_used".into(), corr);
                d.insert("rhs_continuum".into(), shannon_rhs(corr, None));
                shannon_rhs(corr, bins)
            }
            Functional::Renyi | Functional::Tsallis => {
                let sf = self.sf()?;
                let k = kappa(o.alpha, o.gamma)?;
                d.insert("s_f".into(), sf.value);
                d.insert("s_f_location".into(), sf.location);
                d.insert("kappa".into(), k);
                d.insert("rhs_continuum".into(), renyi_rhs(k, sf.value, None));
                match (functional, bins) {
                    (Functional::Tsallis, Some(b)) => tsallis_rhs(k, sf.value, b, o.nu())?,
                    _ => renyi_rhs(k, sf.value, bins),
                }
            }
        };
        Ok((first + second, rhs, d))
    }
}

#[derive(Debug, Default)]
struct Tails {
    max: f64,
    flags: usize,
}

/// Entropy of an outcome density: differential, or discrete over bins of
/// width `delta` aligned with the grid.
fn entropy_of(
    w: &Density,
    alpha: f64,
    functional: Functional,
    delta: Option<f64>,
    tails: &mut Tails,
) -> Result<f64> {
    match delta {
        None => {
            let h = renyi_differential(w, alpha)?;
            tails.max = tails.max.max(h.tail_mass);
            tails.flags += h.truncated as usize;
            Ok(h.value)
        }
        Some(delta) => {
            let p = bin_density(w, &aligned_edges(w.grid(), delta)?)?;
            Ok(match functional {
                Functional::Tsallis => tsallis_discrete(&p, alpha),
                _ => renyi_discrete(&p, alpha),
            })
        }
    }
}

/// `integral |a(x) - b(x)| dx` over a shared grid.
pub fn l1_distance(a: &Density, b: &Density) -> f64 {
    let diff: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).collect();
    trapezoid(a.grid(), &diff)
}
