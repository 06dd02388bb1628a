//! Cartesian sweep over deformations, state families, profile widths and
//! bin widths; every applicable relation is checked in every cell.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bounds::{Cell, MeasurementOrder, RelationId, RelationReport};
use crate::config::{RunConfig, StateKind};
use crate::entropy::EntropyOrder;
use crate::error::{Error, Result};
use crate::lab::{undeformed_cutoff, Lab, LabOptions};
use crate::states::{
    gaussian, random_superposition, uniform, Deformation, MixedState, QAxis, UNIFORM_TAPER_NODES,
};

/// Restricts which relations and measurement orders are run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Filter {
    pub relations: Option<Vec<RelationId>>,
    pub orders: Option<Vec<MeasurementOrder>>,
}

impl Filter {
    pub fn admits(&self, id: RelationId, order: MeasurementOrder) -> bool {
        self.relations.as_ref().is_none_or(|r| r.contains(&id))
            && self.orders.as_ref().is_none_or(|o| o.contains(&order))
    }
}

/// Indices of one suite cell into the config's lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellIndex {
    pub beta: usize,
    pub family: usize,
    pub profile: usize,
    pub bins: usize,
}

/// Cells in sweep order: beta, then family, then profile widths, then bins.
pub fn cells(cfg: &RunConfig) -> Vec<CellIndex> {
    let mut out = Vec::new();
    for beta in 0..cfg.betas.len() {
        for family in 0..cfg.states.len() {
            for profile in 0..cfg.profiles.widths.len() {
                for bins in 0..cfg.bins.len() {
                    out.push(CellIndex {
                        beta,
                        family,
                        profile,
                        bins,
                    });
                }
            }
        }
    }
    out
}

/// q-nodes after refinement: each cell is split `refine` times.
pub fn q_nodes(cfg: &RunConfig) -> usize {
    (cfg.grid.q_nodes - 1) * cfg.grid.refine + 1
}

/// Largest q-kick any configured position profile imparts.
fn max_position_kick(cfg: &RunConfig) -> Result<f64> {
    let mut k: f64 = 0.0;
    for i in 0..cfg.profiles.widths.len() {
        k = k.max(cfg.profiles.g(i)?.kick());
    }
    Ok(k)
}

/// The family's state at one deformation. Random families draw the same
/// parameters at every deformation.
pub fn build_state(cfg: &RunConfig, family: usize, beta: f64) -> Result<MixedState> {
    let beta = Deformation::new(beta)?;
    let kind = &cfg.states[family].kind;
    let n = q_nodes(cfg);
    let axis = |centres: &[f64], widths: &[f64]| -> Result<QAxis> {
        let cutoff = if beta.is_deformed() {
            None
        } else {
            Some(undeformed_cutoff(centres, widths, max_position_kick(cfg)?))
        };
        QAxis::new(beta, n, cutoff)
    };
    match kind {
        StateKind::Gaussian(p) => {
            let s = p.spec();
            let axis = axis(&[s.center_q], &[s.width_q])?;
            Ok(MixedState::pure(gaussian(&axis, s)?))
        }
        StateKind::Superposition(spec) => {
            let reach = spec.center_q.0.abs().max(spec.center_q.1.abs());
            let axis = axis(&[reach], &[spec.width_q.1])?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(family as u64));
            Ok(MixedState::pure(random_superposition(&axis, spec, &mut rng)?))
        }
        StateKind::Mixture { components } => {
            let specs: Vec<_> = components.iter().map(|c| c.params().spec()).collect();
            let centres: Vec<f64> = specs.iter().map(|s| s.center_q).collect();
            let widths: Vec<f64> = specs.iter().map(|s| s.width_q).collect();
            let axis = axis(&centres, &widths)?;
            let parts = components
                .iter()
                .zip(&specs)
                .map(|(c, s)| Ok((c.weight, gaussian(&axis, *s)?)))
                .collect::<Result<Vec<_>>>()?;
            MixedState::normalized(parts)
        }
        StateKind::Uniform {} => {
            if !beta.is_deformed() {
                return Err(Error::DomainError("uniform states need beta > 0".into()));
            }
            let axis = QAxis::new(beta, n, None)?;
            Ok(MixedState::pure(uniform(&axis, UNIFORM_TAPER_NODES)?))
        }
    }
}

pub fn cell_label(cfg: &RunConfig, c: CellIndex) -> Cell {
    let w = cfg.profiles.widths[c.profile];
    let b = cfg.bins[c.bins];
    Cell {
        family: cfg.states[c.family].label(c.family),
        f_kind: cfg.profiles.f_kind.name().to_string(),
        f_width: w.f,
        g_kind: cfg.profiles.g_kind.name().to_string(),
        g_width: w.g,
        dzeta: b.dzeta,
        dxi: b.dxi,
    }
}

pub fn build_lab(cfg: &RunConfig, c: CellIndex) -> Result<Lab> {
    let rho = build_state(cfg, c.family, cfg.betas[c.beta])?;
    let options = LabOptions {
        bins: cfg.bins[c.bins],
        refine: cfg.grid.refine,
        leakage_cap: cfg.leakage_cap,
    };
    Lab::new(rho, cfg.profiles.f(c.profile)?, cfg.profiles.g(c.profile)?, options)
}

/// `(id, order, entropic orders)` in report order. Shannon relations run
/// once at `alpha = gamma = 1`.
pub fn checks(orders: &[EntropyOrder], filter: &Filter) -> Vec<(RelationId, MeasurementOrder, EntropyOrder)> {
    let mut out = Vec::new();
    for id in RelationId::ALL {
        for &order in id.orders() {
            if !filter.admits(id, order) {
                continue;
            }
            if id.takes_orders() {
                out.extend(orders.iter().map(|o| (id, order, *o)));
            } else {
                out.push((id, order, EntropyOrder::shannon()));
            }
        }
    }
    out
}

pub fn run_cell(cfg: &RunConfig, filter: &Filter, c: CellIndex) -> Vec<RelationReport> {
    let label = cell_label(cfg, c);
    let tol = cfg.tolerance;
    let beta = cfg.betas[c.beta];
    let checks = match cfg.entropy_orders() {
        Ok(o) => checks(&o, filter),
        Err(e) => return vec![RelationReport::failed(
            RelationId::Robertson,
            MeasurementOrder::Preparation,
            None,
            beta,
            tol,
            label,
            &e,
        )],
    };
    match build_lab(cfg, c) {
        Ok(lab) => checks
            .into_iter()
            .map(|(id, order, o)| lab.evaluate(id, order, o, tol, label.clone()))
            .collect(),
        Err(e) => checks
            .into_iter()
            .map(|(id, order, o)| {
                let o = (id != RelationId::Robertson).then_some(o);
                RelationReport::failed(id, order, o, beta, tol, label.clone(), &e)
            })
            .collect(),
    }
}

/// Every cell of the sweep; cells run in parallel and reports come back in
/// sweep order.
pub fn run_suite(cfg: &RunConfig, filter: &Filter) -> Vec<RelationReport> {
    let per_cell: Vec<Vec<RelationReport>> = cells(cfg)
        .into_par_iter()
        .map(|c| run_cell(cfg, filter, c))
        .collect();
    per_cell.into_iter().flatten().collect()
}

/// Counts and extremes over a report list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub checked: usize,
    pub passed: usize,
    pub violated: usize,
    pub errors: usize,
    pub min_margin: f64,
}

impl Summary {
    pub fn of(reports: &[RelationReport]) -> Self {
        let mut s = Summary {
            checked: reports.len(),
            passed: 0,
            violated: 0,
            errors: 0,
            min_margin: f64::INFINITY,
        };
        for r in reports {
            if r.pass {
                s.passed += 1;
            } else if r.is_error() {
                s.errors += 1;
            } else {
                s.violated += 1;
            }
            if r.margin.is_finite() {
                s.min_margin = s.min_margin.min(r.margin);
            }
        }
        s
    }

    pub fn hard_failures(&self) -> usize {
        self.violated + self.errors
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::RelationId;

    #[test]
    fn empty_beta_list_gives_no_reports() {
        let mut cfg = RunConfig::bundled();
        cfg.betas.clear();
        assert!(run_suite(&cfg, &Filter::default()).is_empty());
    }

    #[test]
    fn bundled_suite_shape() {
        let cfg = RunConfig::bundled();
        assert_eq!(cells(&cfg).len(), 18);
        let per_cell = checks(&cfg.entropy_orders().unwrap(), &Filter::default()).len();
        assert_eq!(per_cell, 11 + 15 * 4);
    }

    #[test]
    fn filter_restricts_ids_and_orders() {
        let cfg = RunConfig::bundled();
        let o = cfg.entropy_orders().unwrap();
        let f = Filter {
            relations: Some(vec![RelationId::S1Renyi]),
            orders: Some(vec![MeasurementOrder::PositionFirst]),
        };
        let c = checks(&o, &f);
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|(id, ord, _)| *id == RelationId::S1Renyi && *ord == MeasurementOrder::PositionFirst));
    }

    #[test]
    fn random_family_is_shared_across_betas() {
        let cfg = RunConfig::bundled();
        let a = build_state(&cfg, 1, 0.01).unwrap();
        let b = build_state(&cfg, 1, 0.01).unwrap();
        assert_eq!(a, b);
        let mix = build_state(&cfg, 2, 0.1).unwrap();
        assert_eq!(mix.components().len(), 2);
    }

    #[test]
    fn uniform_needs_deformation() {
        let mut cfg = RunConfig::bundled();
        cfg.states[0].kind = StateKind::Uniform {};
        assert!(matches!(build_state(&cfg, 0, 0.0), Err(Error::DomainError(_))));
        assert!(build_state(&cfg, 0, 1.0).is_ok());
    }
}
