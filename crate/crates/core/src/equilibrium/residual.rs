//! First-order-condition diagnostics: how far a strategy profile is from
//! best-responding to the score distribution it induces.
//!
//! The optimality condition `H(s) u_s + h(s) u = 0` is evaluated in the
//! fixed-cost parametrization of each marginal-cost line: with `b` the margin
//! field (`u = b - f`), the condition reads `G b' = ghat (b - f)`, `G` the
//! losing-set mass and `ghat = -dG/df`. `G` and the conditional first moment
//! are sliced from the rival pseudotype field with cell-width window
//! averaging: integrating the suffix step functions over one lattice period
//! suppresses the half-cell phase noise that pointwise counting leaves in
//! any density estimate on a finite lattice.
//!
//! For the invariant closed path the pseudotype field comes from the
//! projection tables (crisp class clusters). General profiles derive a
//! margin-equivalent field from per-line fulfillment tables, which is
//! noisier but ample for spotting non-equilibria.

use rayon::prelude::*;

use crate::breakeven::breakeven_contract;
use crate::error::Result;
use crate::numeric::Pchip;
use crate::scoring::{fulfillment_scan, ScoringRule};
use crate::TypeDistribution;

use super::invariant::InvariantContext;
use super::{EquilibriumStrategy, SolveMode};

/// Window-averaged suffix sums over a z-field: `mean over x in [t-W/2, t+W/2]`
/// of mass and first moment above `x`, computed exactly from sorted prefix
/// sums.
struct WindowedSums {
    z: Vec<f64>,
    suf_w: Vec<f64>,
    suf_zw: Vec<f64>,
    suf_zzw: Vec<f64>,
    window: f64,
}

impl WindowedSums {
    fn new(mut pairs: Vec<(f64, f64)>, window: f64) -> Self {
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let n = pairs.len();
        let mut suf_w = vec![0.0; n + 1];
        let mut suf_zw = vec![0.0; n + 1];
        let mut suf_zzw = vec![0.0; n + 1];
        for t in (0..n).rev() {
            let (z, w) = pairs[t];
            suf_w[t] = suf_w[t + 1] + w;
            suf_zw[t] = suf_zw[t + 1] + z * w;
            suf_zzw[t] = suf_zzw[t + 1] + z * z * w;
        }
        WindowedSums {
            z: pairs.into_iter().map(|p| p.0).collect(),
            suf_w,
            suf_zw,
            suf_zzw,
            window,
        }
    }

    /// `(mass, first moment)` of the z-field above the threshold, averaged
    /// over thresholds spanning one window.
    fn above(&self, tau: f64) -> (f64, f64) {
        let lo = tau - 0.5 * self.window;
        let hi = tau + 0.5 * self.window;
        let i_hi = self.z.partition_point(|&v| v < hi);
        let i_lo = self.z.partition_point(|&v| v < lo);
        let zone_w = self.suf_w[i_lo] - self.suf_w[i_hi];
        let zone_zw = self.suf_zw[i_lo] - self.suf_zw[i_hi];
        let zone_zzw = self.suf_zzw[i_lo] - self.suf_zzw[i_hi];
        let d = self.suf_w[i_hi] + (zone_zw - lo * zone_w) / self.window;
        let n = self.suf_zw[i_hi] + (zone_zzw - lo * zone_zw) / self.window;
        (d, n)
    }
}

fn residual_from_line(
    sums: &WindowedSums,
    margins: &[f64],
    f_nodes: &[f64],
    df: f64,
) -> Vec<f64> {
    let nf = f_nodes.len();
    let mut out = vec![f64::NAN; nf];
    for j in 1..nf.saturating_sub(1) {
        let f_k = f_nodes[j];
        let (d_lo, n_lo) = sums.above(f_k - df);
        let (d_hi, n_hi) = sums.above(f_k + df);
        if d_lo <= 1e-12 || d_hi <= 1e-12 {
            continue;
        }
        let b_lo = n_lo / d_lo;
        let b_hi = n_hi / d_hi;
        let g_mid = 0.5 * (d_lo + d_hi);
        let b_prime = (b_hi - b_lo) / (2.0 * df);
        let g_hat = (d_lo - d_hi) / (2.0 * df);
        let u = 0.5 * (margins[j - 1] + margins[j + 1]) - f_k;
        let a = g_mid * b_prime;
        let b = g_hat * u;
        out[j] = (a - b).abs() / (a.abs() + b.abs() + 1e-300);
    }
    out
}

/// Normalized first-order-condition residual per node. The weakest boundary
/// carries degenerate conditioning and is only meaningful through
/// [`max_interior_residual`].
pub fn foc_residual(
    rule: &ScoringRule,
    strategy: &EquilibriumStrategy,
    g: &TypeDistribution,
    eta: f64,
) -> Result<Vec<f64>> {
    strategy.check_lattice(g)?;
    let nm = g.nm();
    let nf = g.nf();
    let df = g.df();

    if strategy.mode == SolveMode::InvariantClosedPath {
        if let Some(imit) = &strategy.imitated_f {
            let ctx = InvariantContext::new(rule, g, eta);
            let rows: Vec<Result<Vec<f64>>> = (0..nm)
                .into_par_iter()
                .map(|i| {
                    let z = ctx.pseudotypes_on_line(g.m_nodes()[i])?;
                    let pairs: Vec<(f64, f64)> = z
                        .iter()
                        .enumerate()
                        .map(|(idx, &zc)| (zc, g.cell_mass(idx / nf, idx % nf)))
                        .collect();
                    let sums = WindowedSums::new(pairs, df);
                    let margins: Vec<f64> = (0..nf).map(|j| imit[i * nf + j]).collect();
                    Ok(residual_from_line(&sums, &margins, g.f_nodes(), df))
                })
                .collect();
            let mut out = Vec::with_capacity(nm * nf);
            for row in rows {
                out.extend(row?);
            }
            return Ok(out);
        }
    }

    // general profile: margin-equivalent field via per-line fulfillment tables
    let (s_min, s_max) = strategy
        .scores()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    let pad = 1e-9 + 1e-6 * (s_max - s_min);
    let table_n = 1024;
    let rows: Vec<Vec<f64>> = (0..nm)
        .into_par_iter()
        .map(|i| {
            let m = g.m_nodes()[i];
            let mut xs = Vec::with_capacity(table_n);
            let mut ys = Vec::with_capacity(table_n);
            for k in 0..table_n {
                let s = (s_min - pad) + (s_max + pad - (s_min - pad)) * k as f64 / (table_n - 1) as f64;
                if let Ok((_, v)) = fulfillment_scan(rule, s, m, eta, 128) {
                    xs.push(s);
                    ys.push(v);
                }
            }
            let table = Pchip::new(xs, ys);
            let pairs: Vec<(f64, f64)> = strategy
                .scores()
                .iter()
                .enumerate()
                .map(|(idx, &s)| (table.eval(s), g.cell_mass(idx / nf, idx % nf)))
                .collect();
            let sums = WindowedSums::new(pairs, df);
            let margins: Vec<f64> = (0..nf).map(|j| table.eval(strategy.score(i, j))).collect();
            residual_from_line(&sums, &margins, g.f_nodes(), df)
        })
        .collect();
    let mut out = Vec::with_capacity(nm * nf);
    for row in rows {
        out.extend(row);
    }
    Ok(out)
}

/// Max residual over interior lattice nodes (boundary rows and columns carry
/// the degenerate-conditioning convention and are excluded).
pub fn max_interior_residual(residuals: &[f64], nm: usize, nf: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 1..nm.saturating_sub(1) {
        for j in 1..nf.saturating_sub(1) {
            let r = residuals[i * nf + j];
            if r.is_finite() {
                worst = worst.max(r);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{make_distribution, DistributionSpec};
    use crate::equilibrium::solve_invariant;
    use crate::types::CostParams;

    fn uniform(eta: f64, nm: usize, nf: usize) -> TypeDistribution {
        let p = CostParams::new(eta, 1.0, 2.0, 0.5, 1.5).unwrap();
        make_distribution(&DistributionSpec::Uniform, &p, nm, nf).unwrap()
    }

    #[test]
    fn invariant_solution_has_small_probe_residual() {
        let g = uniform(2.0, 48, 48);
        let rule = ScoringRule::pqr();
        let out = solve_invariant(&rule, &g, 2.0).unwrap();
        let res = foc_residual(&rule, &out.strategy, &g, 2.0).unwrap();
        let mut worst = 0.0f64;
        for a in 1..=7usize {
            for b in 1..=7usize {
                let (i, j) = (a * 48 / 8, b * 48 / 8);
                let r = res[i * 48 + j];
                assert!(r.is_finite());
                worst = worst.max(r);
            }
        }
        assert!(worst < 5e-3, "worst probe residual {worst}");
    }

    #[test]
    fn break_even_profile_is_not_an_equilibrium() {
        let g = uniform(2.0, 20, 20);
        let rule = ScoringRule::pqr();
        let mut contracts = Vec::new();
        let mut scores = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                let be = breakeven_contract(&rule, g.node(i, j), 2.0);
                contracts.push(be.contract);
                scores.push(be.score);
            }
        }
        let profile = EquilibriumStrategy::new(
            g.m_nodes().to_vec(),
            g.f_nodes().to_vec(),
            contracts,
            scores,
            SolveMode::BestResponseFixedPoint,
            None,
        );
        let res = foc_residual(&rule, &profile, &g, 2.0).unwrap();
        let worst = max_interior_residual(&res, 20, 20);
        // everyone bidding zero-profit leaves money on the table
        assert!(worst > 0.5, "break-even profile residual {worst}");
    }
}
