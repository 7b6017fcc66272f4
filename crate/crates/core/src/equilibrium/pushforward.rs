//! Pushforward of the type density onto a marginal-cost line via the
//! pseudotype projection, and the strongest-rival reduction for N players.

use crate::breakeven::{breakeven_contract, Projector};
use crate::error::Result;
use crate::scoring::ScoringRule;

use crate::TypeDistribution;

use super::Density1D;

pub const DEFAULT_PUSHFORWARD_NODES: usize = 4096;

/// Break-even score of every lattice cell, row-major.
pub(crate) fn breakeven_score_field(rule: &ScoringRule, g: &TypeDistribution, eta: f64) -> Vec<f64> {
    let mut field = Vec::with_capacity(g.nm() * g.nf());
    for i in 0..g.nm() {
        for j in 0..g.nf() {
            field.push(breakeven_contract(rule, g.node(i, j), eta).score);
        }
    }
    field
}

pub(crate) fn pushforward_from_field(
    projector: &Projector,
    g: &TypeDistribution,
    field: &[f64],
    nodes: usize,
) -> Result<Density1D> {
    let (lo, hi) = projector.extended_range();
    let step = (hi - lo) / nodes as f64;
    let mut values = vec![0.0; nodes];
    let node_pos = |k: usize| lo + (k as f64 + 0.5) * step;
    for i in 0..g.nm() {
        for j in 0..g.nf() {
            let z = projector.project_score(field[i * g.nf() + j])?;
            let mass = g.cell_mass(i, j);
            // linear mass splitting between the adjacent nodes (mean-preserving)
            let pos = (z - node_pos(0)) / step;
            if pos <= 0.0 {
                values[0] += mass / step;
            } else if pos >= (nodes - 1) as f64 {
                values[nodes - 1] += mass / step;
            } else {
                let k = pos.floor() as usize;
                let frac = pos - k as f64;
                values[k] += mass * (1.0 - frac) / step;
                values[k + 1] += mass * frac / step;
            }
        }
    }
    Density1D::new(lo, hi, values, Vec::new())
}

/// Push every cell of `g` through the pseudotype projection onto the line
/// `m = m_ref`, accumulating mass on a 1D node grid over the extended range.
pub fn pushforward_density(
    rule: &ScoringRule,
    g: &TypeDistribution,
    m_ref: f64,
    eta: f64,
    nodes: usize,
) -> Result<Density1D> {
    let params = g.params(eta);
    let projector = Projector::new(rule, &params, m_ref);
    let field = breakeven_score_field(rule, g, eta);
    pushforward_from_field(&projector, g, &field, nodes)
}

/// Distribution of the strongest rival's pseudotype among `n_players - 1`
/// independent draws: the minimum, with survivor `S(x)^(n-1)`.
///
/// Cell masses and atom masses are transformed exactly via the survivor
/// function; within a cell the transformed density is re-averaged.
pub fn rival_min_density(gm: &Density1D, n_players: usize) -> Result<Density1D> {
    assert!(n_players >= 2, "need at least two players");
    if n_players == 2 {
        return Ok(gm.clone());
    }
    let k = (n_players - 1) as f64;
    let n = gm.values().len();
    let step = gm.step();
    let lo = gm.lo();
    let pow = |s: f64| s.max(0.0).powf(k);

    let mut atoms = Vec::with_capacity(gm.atoms().len());
    for &(z, mass) in gm.atoms() {
        if mass <= 0.0 {
            continue;
        }
        // survivor just above the atom
        let s_above = gm.suffix_mass(z) - mass;
        let new_mass = pow(s_above + mass) - pow(s_above);
        atoms.push((z, new_mass));
    }

    let mut values = vec![0.0; n];
    for c in 0..n {
        let l = lo + c as f64 * step;
        let r = l + step;
        let mut cell_mass = pow(gm.suffix_mass(l)) - pow(gm.suffix_mass(r));
        // the suffix difference over [l, r) includes atoms in [l, r); those
        // are carried separately
        for &(z, new_mass) in &atoms {
            if z >= l - 1e-15 && z < r - 1e-15 {
                cell_mass -= new_mass;
            }
        }
        values[c] = (cell_mass / step).max(0.0);
    }
    Density1D::new(lo, lo + step * n as f64, values, atoms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SellerType;

    fn project_type(
        rule: &ScoringRule,
        g: &TypeDistribution,
        m_ref: f64,
        eta: f64,
        t: SellerType,
    ) -> Result<f64> {
        let params = g.params(eta);
        let projector = Projector::new(rule, &params, m_ref);
        let s = breakeven_contract(rule, t, eta).score;
        projector.project_score(s)
    }
    use crate::dist::{make_distribution, DistributionSpec};
    use crate::scoring::PhiSpec;
    use crate::types::CostParams;
    use approx::assert_abs_diff_eq;

    fn params() -> CostParams {
        CostParams::new(1.0, 1.0, 2.0, 0.5, 1.5).unwrap()
    }

    #[test]
    fn pushforward_conserves_mass() {
        let p = params();
        let g = make_distribution(&DistributionSpec::Uniform, &p, 20, 20).unwrap();
        let rule = ScoringRule::pqr();
        let d = pushforward_density(&rule, &g, 1.5, 2.0, 2048).unwrap();
        assert_abs_diff_eq!(d.total_mass(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn quasilinear_pushforward_is_a_shift() {
        // s_be(m, f) = K(m) - f, so projecting onto m_ref shifts each line by
        // K(m_ref) - K(m); a uniform density maps to a sum of shifted uniforms
        let p = params();
        let rule = ScoringRule::quasilinear(PhiSpec::Power { a: 2.0, b: 0.5 }).unwrap();
        let g = make_distribution(&DistributionSpec::Uniform, &p, 24, 24).unwrap();
        let m_ref = 1.5;
        let d = pushforward_density(&rule, &g, m_ref, 1.0, 4096).unwrap();

        // analytic K(m) = max_q 2 sqrt(q) - m q = 1/m
        let kk = |m: f64| 1.0 / m;
        let shift_cdf = |x: f64| -> f64 {
            // average over m of the uniform-in-f cdf shifted by K(m_ref)-K(m)
            let nm = 2000;
            let mut acc = 0.0;
            for i in 0..nm {
                let m = 1.0 + (i as f64 + 0.5) / nm as f64;
                let c = ((x - (kk(m_ref) - kk(m)) - 0.5) / 1.0).clamp(0.0, 1.0);
                acc += c;
            }
            acc / nm as f64
        };
        // sup distance between the numeric pushforward cdf and the analytic one
        let mut worst = 0.0f64;
        for k in 0..200 {
            let x = d.lo() + (d.hi() - d.lo()) * k as f64 / 199.0;
            let numeric = 1.0 - d.suffix_mass(x);
            worst = worst.max((numeric - shift_cdf(x)).abs());
        }
        // grid-limited agreement: one 2d cell of mass smearing
        assert!(worst < 0.05, "sup cdf distance {worst}");
    }

    #[test]
    fn concentrated_density_pushes_to_a_point() {
        let p = params();
        let spec = DistributionSpec::TruncNormal { mu_m: 1.4, mu_f: 0.9, sigma: 0.02 };
        let g = make_distribution(&spec, &p, 40, 40).unwrap();
        let rule = ScoringRule::pqr();
        let eta = 2.0;
        let d = pushforward_density(&rule, &g, 2.0, eta, 4096).unwrap();
        let target = project_type(&rule, &g, 2.0, eta, SellerType::new(1.4, 0.9)).unwrap();
        let (mean, mass) = d.conditional_mean_above(d.lo());
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-9);
        assert!((mean - target).abs() < 0.05, "mean {mean} vs {target}");
    }

    #[test]
    fn rival_min_of_two_players_is_identity() {
        let d = Density1D::uniform(0.0, 1.0, 256);
        let r = rival_min_density(&d, 2).unwrap();
        assert_eq!(r.values(), d.values());
    }

    #[test]
    fn rival_min_of_three_uniform_matches_order_statistic() {
        // min of 2 uniforms: density 2(1-z), mean 1/3
        let d = Density1D::uniform(0.0, 1.0, 2048);
        let r = rival_min_density(&d, 3).unwrap();
        assert_abs_diff_eq!(r.total_mass(), 1.0, epsilon = 1e-9);
        let (mean, _) = r.conditional_mean_above(0.0);
        assert_abs_diff_eq!(mean, 1.0 / 3.0, epsilon = 1e-4);
        // spot-check the density shape
        assert_abs_diff_eq!(r.value_at(0.25), 1.5, epsilon = 1e-2);
    }

    #[test]
    fn rival_min_of_point_mass_stays_put() {
        let d = Density1D::point_mass(0.7);
        let r = rival_min_density(&d, 5).unwrap();
        assert_abs_diff_eq!(r.total_mass(), 1.0, epsilon = 1e-12);
        let (mean, mass) = r.conditional_mean_above(0.0);
        assert_abs_diff_eq!(mean, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);
    }
}
