//! Closed-path equilibrium for order-invariant auctions: every type bids the
//! break-even contract of its imitated fixed cost, the conditional mean of
//! losing rivals' pseudotypes on its own marginal-cost line.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::breakeven::{breakeven_contract, Projector};
use crate::classifier::{classify, ClassifyOptions};
use crate::dist::Moment;
use crate::error::{Error, Result};
use crate::scoring::ScoringRule;
use crate::types::{Contract, CostParams, SellerType};
use crate::TypeDistribution;

use super::pushforward::breakeven_score_field;
use super::{EquilibriumStrategy, ScoreDistribution, SolveMode, SolverOutcome};

/// Pseudotypes within this distance of the conditioning threshold count as
/// losing ties (break-even scores are compared through the projection, so
/// this mirrors the score tie tolerance).
pub(crate) const PSEUDOTYPE_TIE_EPS: f64 = 1e-9;

/// Conditioning mass below this is treated as an empty losing set.
const DEGENERATE_MASS: f64 = 1e-12;

/// Conditional mean of losing rivals' pseudotypes for one type.
#[derive(Debug, Clone, Copy)]
pub struct F2Value {
    /// The imitated fixed cost (own fixed cost when degenerate).
    pub value: f64,
    /// Probability mass of the losing set (the interim win probability).
    pub win_mass: f64,
    /// True when the conditioning set was empty.
    pub degenerate: bool,
}

/// Shared tables for the closed path on a fixed type lattice: break-even
/// scores per cell and per-line projection tables.
pub struct InvariantContext {
    rule: ScoringRule,
    eta: f64,
    params: CostParams,
    m_nodes: Vec<f64>,
    f_nodes: Vec<f64>,
    field: Vec<f64>,
    projectors: Mutex<HashMap<u64, Arc<Projector>>>,
}

impl InvariantContext {
    /// Build the tables on the lattice of `grid` (the density values of
    /// `grid` itself are not retained).
    pub fn new(rule: &ScoringRule, grid: &TypeDistribution, eta: f64) -> Self {
        InvariantContext {
            rule: rule.clone(),
            eta,
            params: grid.params(eta),
            m_nodes: grid.m_nodes().to_vec(),
            f_nodes: grid.f_nodes().to_vec(),
            field: breakeven_score_field(rule, grid, eta),
            projectors: Mutex::new(HashMap::new()),
        }
    }

    pub fn rule(&self) -> &ScoringRule {
        &self.rule
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn projector(&self, m_ref: f64) -> Arc<Projector> {
        {
            let cache = self.projectors.lock().unwrap();
            if let Some(p) = cache.get(&m_ref.to_bits()) {
                return Arc::clone(p);
            }
        }
        let p = Arc::new(Projector::new(&self.rule, &self.params, m_ref));
        let mut cache = self.projectors.lock().unwrap();
        Arc::clone(cache.entry(m_ref.to_bits()).or_insert(p))
    }

    /// Pseudotype of every lattice cell on the line `m = m_ref`, row-major.
    pub(crate) fn pseudotypes_on_line(&self, m_ref: f64) -> Result<Vec<f64>> {
        let projector = self.projector(m_ref);
        self.field
            .iter()
            .map(|&s| projector.project_score(s))
            .collect()
    }

    fn check_density(&self, g: &TypeDistribution) -> Result<()> {
        let ok = g.nm() == self.m_nodes.len()
            && g.nf() == self.f_nodes.len()
            && g
                .m_nodes()
                .iter()
                .zip(&self.m_nodes)
                .all(|(a, b)| (a - b).abs() < 1e-12)
            && g
                .f_nodes()
                .iter()
                .zip(&self.f_nodes)
                .all(|(a, b)| (a - b).abs() < 1e-12);
        if ok {
            Ok(())
        } else {
            Err(Error::GridMismatch("density lattice differs from the context lattice".into()))
        }
    }

    /// The two strategy moments of a type: the losing-set indicator weighted
    /// by the rival's pseudotype, and the bare losing-set indicator.
    pub fn moments_for(&self, t: SellerType) -> Result<(Moment, Moment)> {
        let z = self.pseudotypes_on_line(t.m)?;
        let nf = self.f_nodes.len();
        let mut weighted = vec![0.0; z.len()];
        let mut indicator = vec![0.0; z.len()];
        for (k, &zk) in z.iter().enumerate() {
            if zk >= t.f - PSEUDOTYPE_TIE_EPS {
                weighted[k] = zk;
                indicator[k] = 1.0;
            }
        }
        let label = |kind: &str| format!("{kind}@(m={:.6},f={:.6})", t.m, t.f);
        Ok((
            Moment::from_grid(label("pseudotype*loses"), self.m_nodes.len(), nf, weighted)?,
            Moment::from_grid(label("loses"), self.m_nodes.len(), nf, indicator)?,
        ))
    }

    fn f2_from_line(&self, z: &[f64], g: &TypeDistribution, f_thr: f64) -> F2Value {
        let mut acc_num = 0.0f64;
        let mut acc_den = 0.0f64;
        for (zk, d) in z.iter().zip(g.values()) {
            if *zk >= f_thr - PSEUDOTYPE_TIE_EPS {
                acc_num += zk * d;
                acc_den += d;
            }
        }
        let num = acc_num * g.cell_area();
        let den = acc_den * g.cell_area();
        if den <= DEGENERATE_MASS {
            F2Value { value: f_thr, win_mass: den, degenerate: true }
        } else {
            F2Value { value: num / den, win_mass: den, degenerate: false }
        }
    }

    /// Conditional mean of losing rivals' pseudotypes at `t` under `g`.
    pub fn imitated_fixed_cost(&self, g: &TypeDistribution, t: SellerType) -> Result<F2Value> {
        self.check_density(g)?;
        let z = self.pseudotypes_on_line(t.m)?;
        Ok(self.f2_from_line(&z, g, t.f))
    }

    /// Solve the auction at `g` on the context lattice.
    pub fn solve(&self, g: &TypeDistribution) -> Result<SolverOutcome> {
        self.check_density(g)?;
        let nf = self.f_nodes.len();
        let lines: Vec<Result<Vec<(Contract, f64, f64)>>> = self
            .m_nodes
            .par_iter()
            .map(|&m| {
                let z = self.pseudotypes_on_line(m)?;
                let mut row = Vec::with_capacity(nf);
                for &f in &self.f_nodes {
                    let f2 = self.f2_from_line(&z, g, f);
                    let be = breakeven_contract(&self.rule, SellerType::new(m, f2.value), self.eta);
                    row.push((be.contract, be.score, f2.value));
                }
                Ok(row)
            })
            .collect();
        let mut contracts = Vec::with_capacity(self.m_nodes.len() * nf);
        let mut scores = Vec::with_capacity(contracts.capacity());
        let mut imitated = Vec::with_capacity(contracts.capacity());
        for line in lines {
            for (c, s, f2) in line? {
                contracts.push(c);
                scores.push(s);
                imitated.push(f2);
            }
        }
        let strategy = EquilibriumStrategy::new(
            self.m_nodes.clone(),
            self.f_nodes.clone(),
            contracts,
            scores,
            SolveMode::InvariantClosedPath,
            Some(imitated),
        );
        let score_distribution = ScoreDistribution::from_profile(&strategy, g, 1024)?;
        Ok(SolverOutcome {
            strategy,
            score_distribution,
            converged: true,
            iterations: 0,
            sup_change: 0.0,
        })
    }
}

/// Conditional mean of losing rivals' pseudotypes (one-off convenience; batch
/// callers should hold an [`InvariantContext`]).
pub fn imitated_fixed_cost(
    rule: &ScoringRule,
    g: &TypeDistribution,
    t: SellerType,
    eta: f64,
) -> Result<F2Value> {
    InvariantContext::new(rule, g, eta).imitated_fixed_cost(g, t)
}

/// The two moments whose realizations pin down a type's equilibrium bid.
/// Grid moments on the lattice of `grid`.
pub fn strategy_moments_for_type(
    rule: &ScoringRule,
    grid: &TypeDistribution,
    t: SellerType,
    eta: f64,
) -> Result<(Moment, Moment)> {
    InvariantContext::new(rule, grid, eta).moments_for(t)
}

/// The two-moment combiner: bid the break-even contract of the imitated fixed
/// cost implied by the two realizations.
pub fn strategy_from_moments(
    rule: &ScoringRule,
    t: SellerType,
    eta: f64,
    realizations: (f64, f64),
) -> Result<Contract> {
    let (num, den) = realizations;
    if den <= DEGENERATE_MASS {
        return Err(Error::DegenerateType);
    }
    Ok(breakeven_contract(rule, SellerType::new(t.m, num / den), eta).contract)
}

/// Equilibrium of an order-invariant first-score auction. Refuses rules that
/// do not admit a coarse-beliefs equilibrium.
pub fn solve_invariant(rule: &ScoringRule, g: &TypeDistribution, eta: f64) -> Result<SolverOutcome> {
    let verdict = classify(rule, &g.params(eta), &ClassifyOptions::default())?;
    if !verdict.admits_cbe {
        return Err(Error::NotInvariant);
    }
    InvariantContext::new(rule, g, eta).solve(g)
}


impl InvariantContext {
    /// Test-support accessor for the per-line pseudotype field.
    pub fn pseudotypes_on_line_pub(&self, m_ref: f64) -> Result<Vec<f64>> {
        self.pseudotypes_on_line(m_ref)
    }
}
