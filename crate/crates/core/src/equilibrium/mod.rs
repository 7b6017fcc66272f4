//! Equilibrium solvers for first-score auctions: the closed path for
//! order-invariant rules, a one-dimensional first-price reduction, a damped
//! best-response fixed point for everything else, and residual diagnostics.

mod best_response;
mod invariant;
mod oned;
mod pushforward;
mod residual;

pub use best_response::{solve_best_response, BestResponseOptions};
pub use invariant::{
    imitated_fixed_cost, solve_invariant, strategy_from_moments, strategy_moments_for_type,
    F2Value, InvariantContext,
};
pub use oned::{solve_first_price_1d, FirstPrice1d};
pub use pushforward::{pushforward_density, rival_min_density, DEFAULT_PUSHFORWARD_NODES};
pub use residual::{foc_residual, max_interior_residual};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{Contract, SellerType};
use crate::TypeDistribution;

/// A one-dimensional density over the extended fixed-cost range: uniform
/// piecewise-constant cells plus optional atoms.
#[derive(Debug, Clone)]
pub struct Density1D {
    lo: f64,
    step: f64,
    values: Vec<f64>,
    atoms: Vec<(f64, f64)>,
}

impl Density1D {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>, atoms: Vec<(f64, f64)>) -> Result<Self> {
        if !(hi > lo) || values.is_empty() {
            return Err(Error::InvalidParameter("empty 1d support".into()));
        }
        if values.iter().any(|v| *v < 0.0) || atoms.iter().any(|(_, m)| *m < 0.0) {
            return Err(Error::InvalidParameter("1d density must be nonnegative".into()));
        }
        let d = Density1D {
            lo,
            step: (hi - lo) / values.len() as f64,
            values,
            atoms,
        };
        let mass = d.total_mass();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::Unnormalizable(format!("1d mass {mass}")));
        }
        Ok(d)
    }

    pub fn uniform(lo: f64, hi: f64, cells: usize) -> Self {
        let v = 1.0 / (hi - lo);
        Density1D {
            lo,
            step: (hi - lo) / cells as f64,
            values: vec![v; cells],
            atoms: Vec::new(),
        }
    }

    pub fn point_mass(z: f64) -> Self {
        Density1D {
            lo: z - 0.5,
            step: 1.0,
            values: vec![0.0],
            atoms: vec![(z, 1.0)],
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.step * self.values.len() as f64
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let lo = self.lo;
        let step = self.step;
        (0..self.values.len()).map(move |k| lo + (k as f64 + 0.5) * step)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.step + self.atoms.iter().map(|(_, m)| m).sum::<f64>()
    }

    /// Density value at a point (atoms excluded).
    pub fn value_at(&self, x: f64) -> f64 {
        if x < self.lo || x >= self.hi() {
            return 0.0;
        }
        let k = ((x - self.lo) / self.step) as usize;
        self.values[k.min(self.values.len() - 1)]
    }

    /// Exact `P[Z >= x]` under the piecewise-constant-plus-atoms measure.
    pub fn suffix_mass(&self, x: f64) -> f64 {
        let mut acc: f64 = self.atoms.iter().filter(|(z, _)| *z >= x).map(|(_, m)| m).sum();
        let n = self.values.len();
        for k in 0..n {
            let l = self.lo + k as f64 * self.step;
            let r = l + self.step;
            if r <= x {
                continue;
            }
            let from = l.max(x);
            acc += self.values[k] * (r - from);
        }
        acc
    }

    /// Exact `E[Z * 1(Z >= x)]`.
    pub fn suffix_first_moment(&self, x: f64) -> f64 {
        let mut acc: f64 = self
            .atoms
            .iter()
            .filter(|(z, _)| *z >= x)
            .map(|(z, m)| z * m)
            .sum();
        let n = self.values.len();
        for k in 0..n {
            let l = self.lo + k as f64 * self.step;
            let r = l + self.step;
            if r <= x {
                continue;
            }
            let from = l.max(x);
            acc += self.values[k] * 0.5 * (r * r - from * from);
        }
        acc
    }

    /// `E[Z | Z >= x]` together with the conditioning mass; `x` itself when
    /// the conditioning set is empty.
    pub fn conditional_mean_above(&self, x: f64) -> (f64, f64) {
        let s0 = self.suffix_mass(x);
        if s0 <= 1e-12 {
            return (x, s0);
        }
        (self.suffix_first_moment(x) / s0, s0)
    }
}

/// Distribution of scores bid under a strategy profile: mass-weighted counting
/// on a score grid with linear splitting, cdf by accumulation, pdf by centered
/// differences with a 3-node smoothing window.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreDistribution {
    pub nodes: Vec<f64>,
    pub cdf: Vec<f64>,
    pub pdf: Vec<f64>,
}

impl ScoreDistribution {
    pub fn from_profile(strategy: &EquilibriumStrategy, g: &TypeDistribution, grid: usize) -> Result<Self> {
        strategy.check_lattice(g)?;
        let (lo, hi) = strategy
            .scores
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
        let pad = 1e-9 + 1e-6 * (hi - lo).abs();
        let lo = lo - pad;
        let hi = hi + pad;
        let grid = grid.max(8);
        let step = (hi - lo) / (grid - 1) as f64;
        let nodes: Vec<f64> = (0..grid).map(|k| lo + k as f64 * step).collect();
        let mut mass = vec![0.0; grid];
        for i in 0..strategy.nm() {
            for j in 0..strategy.nf() {
                let s = strategy.score(i, j);
                let w = g.cell_mass(i, j);
                let pos = (s - lo) / step;
                let k = (pos.floor() as usize).min(grid - 2);
                let frac = (pos - k as f64).clamp(0.0, 1.0);
                mass[k] += w * (1.0 - frac);
                mass[k + 1] += w * frac;
            }
        }
        let total: f64 = mass.iter().sum();
        let mut cdf = Vec::with_capacity(grid);
        let mut acc = 0.0;
        for m in &mass {
            acc += m / total;
            cdf.push(acc);
        }
        let mut raw = vec![0.0; grid];
        for k in 1..grid - 1 {
            raw[k] = (cdf[k + 1] - cdf[k - 1]) / (2.0 * step);
        }
        raw[0] = (cdf[1] - cdf[0]) / step;
        raw[grid - 1] = (cdf[grid - 1] - cdf[grid - 2]) / step;
        let mut pdf = vec![0.0; grid];
        for k in 0..grid {
            let a = raw[k.saturating_sub(1)];
            let b = raw[k];
            let c = raw[(k + 1).min(grid - 1)];
            pdf[k] = (a + b + c) / 3.0;
        }
        Ok(ScoreDistribution { nodes, cdf, pdf })
    }

    /// Linear interpolation of the cdf.
    pub fn cdf_at(&self, s: f64) -> f64 {
        let n = self.nodes.len();
        if s <= self.nodes[0] {
            return 0.0;
        }
        if s >= self.nodes[n - 1] {
            return 1.0;
        }
        let step = self.nodes[1] - self.nodes[0];
        let pos = (s - self.nodes[0]) / step;
        let k = (pos.floor() as usize).min(n - 2);
        let frac = pos - k as f64;
        self.cdf[k] + frac * (self.cdf[k + 1] - self.cdf[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    InvariantClosedPath,
    BestResponseFixedPoint,
}

/// A per-node bidding strategy on a type lattice.
#[derive(Debug, Clone)]
pub struct EquilibriumStrategy {
    m_nodes: Vec<f64>,
    f_nodes: Vec<f64>,
    contracts: Vec<Contract>,
    scores: Vec<f64>,
    pub mode: SolveMode,
    /// Fixed cost whose break-even contract each node plays (the two-moment
    /// combiner realization); present on the invariant closed path.
    pub imitated_f: Option<Vec<f64>>,
}

impl EquilibriumStrategy {
    pub(crate) fn new(
        m_nodes: Vec<f64>,
        f_nodes: Vec<f64>,
        contracts: Vec<Contract>,
        scores: Vec<f64>,
        mode: SolveMode,
        imitated_f: Option<Vec<f64>>,
    ) -> Self {
        assert_eq!(contracts.len(), m_nodes.len() * f_nodes.len());
        assert_eq!(scores.len(), contracts.len());
        EquilibriumStrategy { m_nodes, f_nodes, contracts, scores, mode, imitated_f }
    }

    pub fn nm(&self) -> usize {
        self.m_nodes.len()
    }

    pub fn nf(&self) -> usize {
        self.f_nodes.len()
    }

    pub fn m_nodes(&self) -> &[f64] {
        &self.m_nodes
    }

    pub fn f_nodes(&self) -> &[f64] {
        &self.f_nodes
    }

    pub fn node(&self, i: usize, j: usize) -> SellerType {
        SellerType::new(self.m_nodes[i], self.f_nodes[j])
    }

    pub fn score(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.nf() + j]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn contract(&self, i: usize, j: usize) -> Contract {
        self.contracts[i * self.nf() + j]
    }

    /// The strategy lattice must match the distribution lattice.
    pub fn check_lattice(&self, g: &TypeDistribution) -> Result<()> {
        let ok = self.nm() == g.nm()
            && self.nf() == g.nf()
            && self
                .m_nodes
                .iter()
                .zip(g.m_nodes())
                .all(|(a, b)| (a - b).abs() < 1e-12)
            && self
                .f_nodes
                .iter()
                .zip(g.f_nodes())
                .all(|(a, b)| (a - b).abs() < 1e-12);
        if ok {
            Ok(())
        } else {
            Err(Error::GridMismatch("strategy lattice differs from the density lattice".into()))
        }
    }

    /// Bilinear interpolation of the score field, clamped at the edges.
    pub fn score_at(&self, t: SellerType) -> f64 {
        let interp = |nodes: &[f64], x: f64| -> (usize, f64) {
            let n = nodes.len();
            if x <= nodes[0] {
                return (0, 0.0);
            }
            if x >= nodes[n - 1] {
                return (n - 2, 1.0);
            }
            let mut k = match nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
                Ok(i) => i,
                Err(i) => i - 1,
            };
            k = k.min(n - 2);
            ((k), (x - nodes[k]) / (nodes[k + 1] - nodes[k]))
        };
        let (i, a) = interp(&self.m_nodes, t.m);
        let (j, b) = interp(&self.f_nodes, t.f);
        let s00 = self.score(i, j);
        let s01 = self.score(i, j + 1);
        let s10 = self.score(i + 1, j);
        let s11 = self.score(i + 1, j + 1);
        (1.0 - a) * ((1.0 - b) * s00 + b * s01) + a * ((1.0 - b) * s10 + b * s11)
    }

    /// Sup-norm distance between two score fields on the same lattice.
    pub fn max_score_distance(&self, other: &EquilibriumStrategy) -> f64 {
        self.scores
            .iter()
            .zip(&other.scores)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// Strategy table as CSV (m,f,p,q,score rows).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,f,p,q,score\n");
        for i in 0..self.nm() {
            for j in 0..self.nf() {
                let c = self.contract(i, j);
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    self.m_nodes[i],
                    self.f_nodes[j],
                    c.p,
                    c.q,
                    self.score(i, j)
                ));
            }
        }
        out
    }
}

/// Solver output: the strategy, the implied score distribution, and the
/// iteration record.
#[derive(Debug, Clone)]
pub struct SolverOutcome {
    pub strategy: EquilibriumStrategy,
    pub score_distribution: ScoreDistribution,
    pub converged: bool,
    pub iterations: usize,
    pub sup_change: f64,
}
