//! Damped best-response fixed point on a score grid: each node maximizes its
//! win probability times fulfillment margin against the rival score
//! distribution implied by the current profile.

use rayon::prelude::*;

use crate::error::Result;
use crate::numeric::{parabola_peak, Pchip};
use crate::scoring::{fulfillment_scan, optimal_quality_given_score, price_for_score, ScoringRule};
use crate::types::Contract;
use crate::TypeDistribution;

use super::pushforward::breakeven_score_field;
use super::{EquilibriumStrategy, ScoreDistribution, SolveMode, SolverOutcome};

#[derive(Debug, Clone, Copy)]
pub struct BestResponseOptions {
    pub damping: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub score_grid: usize,
}

impl Default for BestResponseOptions {
    fn default() -> Self {
        BestResponseOptions { damping: 0.5, max_iter: 500, tol: 1e-5, score_grid: 1024 }
    }
}

/// Win-probability curve on the score grid from the per-line continuum model
/// of the profile: monotone-cubic score maps over each marginal-cost line and
/// exact piecewise-constant marginal masses.
///
/// Counting score atoms directly leaves the curve kinked at atom clusters;
/// mass then freezes into self-sustaining ties (with full tie counting) or
/// cycles (with split ties), and the iteration cannot meet its convergence
/// contract. The interval-image model keeps the best-response map continuous.
fn win_probability(
    scores: &[f64],
    g: &TypeDistribution,
    lo: f64,
    step: f64,
    grid: usize,
) -> Vec<f64> {
    let nm = g.nm();
    let nf = g.nf();
    let df = g.df();
    let (_, _, f_lo_edge, f_hi_edge) = {
        let (a, b, c, d) = g.rect();
        (a, b, c, d)
    };
    let mut h = vec![0.0; grid];
    for i in 0..nm {
        // strictly decreasing scores in f (guards solver wobble)
        let mut sane: Vec<f64> = (0..nf).map(|j| scores[i * nf + j]).collect();
        for j in 1..nf {
            if sane[j] >= sane[j - 1] {
                sane[j] = sane[j - 1] - 1e-12;
            }
        }
        let s_asc: Vec<f64> = sane.iter().rev().copied().collect();
        let f_desc: Vec<f64> = g.f_nodes().iter().rev().copied().collect();
        let inv = Pchip::new(s_asc, f_desc);
        let mut suffix = vec![0.0; nf + 1];
        for j in (0..nf).rev() {
            suffix[j] = suffix[j + 1] + g.cell_mass(i, j);
        }
        let line_mass_below = |s: f64| -> f64 {
            let f_star = inv.eval(s).clamp(f_lo_edge, f_hi_edge);
            let pos = (f_star - f_lo_edge) / df;
            let j = (pos.floor() as usize).min(nf - 1);
            let frac = (pos - j as f64).clamp(0.0, 1.0);
            suffix[j + 1] + g.cell_mass(i, j) * (1.0 - frac)
        };
        for k in 0..grid {
            h[k] += line_mass_below(lo + k as f64 * step);
        }
    }
    h
}

fn interp(values: &[f64], lo: f64, step: f64, s: f64) -> f64 {
    let n = values.len();
    let pos = (s - lo) / step;
    if pos <= 0.0 {
        return values[0];
    }
    if pos >= (n - 1) as f64 {
        return values[n - 1];
    }
    let k = pos.floor() as usize;
    let frac = pos - k as f64;
    values[k] + frac * (values[k + 1] - values[k])
}

/// Iterate damped best responses from the break-even profile until the score
/// field stops moving. Non-convergence is reported in the outcome, not as an
/// error.
pub fn solve_best_response(
    rule: &ScoringRule,
    g: &TypeDistribution,
    eta: f64,
    opts: &BestResponseOptions,
) -> Result<SolverOutcome> {
    assert!(opts.damping > 0.0 && opts.damping <= 1.0, "damping must lie in (0, 1]");
    assert!(g.nm() >= 10 && g.nf() >= 10, "best-response solver needs at least a 10x10 grid");
    let nm = g.nm();
    let nf = g.nf();
    let be_field = breakeven_score_field(rule, g, eta);
    let be_lo = be_field.iter().cloned().fold(f64::INFINITY, f64::min);
    let be_hi = be_field.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // margin below the weakest break-even score; equilibrium bids never go
    // further down, it only cushions the grid edge
    let margin = 2e-3 * (be_hi - be_lo).max(1e-6);
    let lo = be_lo - margin;
    let grid = opts.score_grid.max(64);
    let step = (be_hi - lo) / (grid - 1) as f64;

    // fulfillment margin tables per marginal-cost line
    let util: Vec<Vec<f64>> = g
        .m_nodes()
        .par_iter()
        .map(|&m| {
            (0..grid)
                .map(|k| {
                    let s = lo + k as f64 * step;
                    match fulfillment_scan(rule, s, m, eta, 128) {
                        Ok((_, margin)) => margin,
                        Err(_) => f64::NEG_INFINITY,
                    }
                })
                .collect()
        })
        .collect();

    let mut scores = be_field.clone();
    let mut converged = false;
    let mut iterations = 0;
    let mut sup_change = f64::INFINITY;

    while iterations < opts.max_iter {
        iterations += 1;
        let h = win_probability(&scores, g, lo, step, grid);
        let new_scores: Vec<f64> = (0..nm)
            .into_par_iter()
            .flat_map_iter(|i| {
                let h = &h;
                let util_row = &util[i];
                let scores = &scores;
                let be_field = &be_field;
                (0..nf).map(move |j| {
                    let idx = i * nf + j;
                    let f = g.f_nodes()[j];
                    let own_be = be_field[idx];
                    let k_max = (((own_be - lo) / step).floor() as usize).min(grid - 1);
                    let obj_at = |k: usize| {
                        let u = util_row[k];
                        if u.is_finite() {
                            h[k] * (u - f)
                        } else {
                            f64::NEG_INFINITY
                        }
                    };
                    let mut best_v = f64::NEG_INFINITY;
                    for k in 0..=k_max {
                        let v = obj_at(k);
                        if v > best_v {
                            best_v = v;
                        }
                    }
                    // no strictly profitable bid: fall back to break-even,
                    // the zero-profit anchor (this is where the weakest type
                    // lands)
                    if !(best_v > 1e-14) {
                        return own_be;
                    }
                    // lowest score among numerically tied grid points; the
                    // tie window must stay at rounding scale or it would
                    // bias every bid downhill
                    let eps = 1e-12 * best_v.abs();
                    let mut k_star = k_max;
                    for k in 0..=k_max {
                        if obj_at(k) >= best_v - eps {
                            k_star = k;
                            break;
                        }
                    }
                    let mut br = lo + k_star as f64 * step;
                    if k_star > 0 && k_star < k_max {
                        let s0 = lo + (k_star - 1) as f64 * step;
                        let s2 = lo + (k_star + 1) as f64 * step;
                        let refined = parabola_peak(
                            s0,
                            br,
                            s2,
                            obj_at(k_star - 1),
                            obj_at(k_star),
                            obj_at(k_star + 1),
                        )
                        .clamp(s0, s2.min(own_be));
                        let u_r = interp(util_row, lo, step, refined);
                        let h_r = interp(h, lo, step, refined);
                        if u_r.is_finite() && h_r * (u_r - f) >= obj_at(k_star) {
                            br = refined;
                        }
                    }
                    (1.0 - opts.damping) * scores[idx] + opts.damping * br
                })
            })
            .collect();
        sup_change = scores
            .iter()
            .zip(&new_scores)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        scores = new_scores;
        if sup_change < opts.tol {
            converged = true;
            break;
        }
    }

    // materialize contracts at the final scores
    let mut contracts = Vec::with_capacity(nm * nf);
    for i in 0..nm {
        for j in 0..nf {
            let s = scores[i * nf + j];
            let m = g.m_nodes()[i];
            let q = optimal_quality_given_score(rule, s, m, eta)?;
            let p = price_for_score(rule, s, q)?;
            contracts.push(Contract { p, q });
        }
    }
    let strategy = EquilibriumStrategy::new(
        g.m_nodes().to_vec(),
        g.f_nodes().to_vec(),
        contracts,
        scores,
        SolveMode::BestResponseFixedPoint,
        None,
    );
    let score_distribution = ScoreDistribution::from_profile(&strategy, g, opts.score_grid)?;
    Ok(SolverOutcome { strategy, score_distribution, converged, iterations, sup_change })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::breakeven::breakeven_contract;
    use crate::dist::{make_distribution, DistributionSpec};
    use crate::equilibrium::solve_invariant;
    use crate::types::CostParams;

    fn uniform(eta: f64, nm: usize, nf: usize) -> TypeDistribution {
        let p = CostParams::new(eta, 1.0, 2.0, 0.5, 1.5).unwrap();
        make_distribution(&DistributionSpec::Uniform, &p, nm, nf).unwrap()
    }

    #[test]
    fn best_response_tracks_the_invariant_solution() {
        let g = uniform(2.0, 30, 30);
        let rule = ScoringRule::pqr();
        let br = solve_best_response(&rule, &g, 2.0, &BestResponseOptions::default()).unwrap();
        assert!(br.converged, "did not converge: sup {}", br.sup_change);
        let inv = solve_invariant(&rule, &g, 2.0).unwrap();
        let dist = br.strategy.max_score_distance(&inv.strategy);
        assert!(dist < 2e-2, "sup score distance {dist}");
    }

    #[test]
    fn weakest_node_converges_to_break_even() {
        let g = uniform(2.0, 16, 16);
        let rule = ScoringRule::pqr();
        let br = solve_best_response(&rule, &g, 2.0, &BestResponseOptions::default()).unwrap();
        let (i, j) = (15, 15);
        let be = breakeven_contract(&rule, g.node(i, j), 2.0).score;
        assert!(
            (br.strategy.score(i, j) - be).abs() < 1e-2,
            "weakest bid {} vs break-even {}",
            br.strategy.score(i, j),
            be
        );
    }

    #[test]
    fn near_point_mass_rivals_pull_bids_toward_their_class() {
        // almost all mass at one strong cell: stronger nodes shade down close
        // to that cell's break-even score
        let p = CostParams::new(2.0, 1.0, 2.0, 0.5, 1.5).unwrap();
        let spec = DistributionSpec::Convex {
            base: Box::new(DistributionSpec::TruncNormal { mu_m: 1.9, mu_f: 1.4, sigma: 0.03 }),
            other: Box::new(DistributionSpec::Uniform),
            lambda: 0.98,
        };
        let g = make_distribution(&spec, &p, 20, 20).unwrap();
        let rule = ScoringRule::pqr();
        let br = solve_best_response(&rule, &g, 2.0, &BestResponseOptions::default()).unwrap();
        let mass_score = breakeven_contract(&rule, crate::types::SellerType::new(1.9, 1.4), 2.0).score;
        // the strongest node still wins against the point mass by bidding
        // just above its break-even score
        let strong = br.strategy.score(0, 0);
        assert!(strong <= mass_score + 0.2, "strong bid {strong} vs mass score {mass_score}");
        assert!(strong >= mass_score - 0.05, "should not overshoot far below");
    }
}
