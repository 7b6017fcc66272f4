//! Symmetric first-price auction in one dimension (procurement orientation:
//! a bidder beats rivals with higher pseudotypes). The unique symmetric
//! equilibrium bid is the conditional mean of rival pseudotypes above one's
//! own, which solves the standard first-order differential equation.

use super::Density1D;

/// Equilibrium bid function of the 1D reduction, evaluable anywhere.
#[derive(Debug, Clone)]
pub struct FirstPrice1d {
    gm: Density1D,
    nodes: Vec<f64>,
    bids: Vec<f64>,
}

/// Solve the 1D first-price auction on the node grid of `gm`.
pub fn solve_first_price_1d(gm: &Density1D) -> FirstPrice1d {
    let nodes: Vec<f64> = gm.nodes().collect();
    let bids: Vec<f64> = nodes.iter().map(|&f| gm.conditional_mean_above(f).0).collect();
    FirstPrice1d { gm: gm.clone(), nodes, bids }
}

impl FirstPrice1d {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn bids(&self) -> &[f64] {
        &self.bids
    }

    /// Bid at an arbitrary pseudotype: `E[z | z >= x]` computed exactly from
    /// the underlying density (degenerate tail returns `x`).
    pub fn bid_at(&self, x: f64) -> f64 {
        self.gm.conditional_mean_above(x).0
    }

    /// Residual of `G(f) b'(f) = g(f) (b(f) - f)` at the interior nodes, with
    /// `G` the survivor function and `b'` by central differences.
    pub fn ode_residuals(&self) -> Vec<f64> {
        let n = self.nodes.len();
        let mut out = Vec::with_capacity(n.saturating_sub(2));
        for k in 1..n.saturating_sub(1) {
            let f = self.nodes[k];
            let step = self.nodes[k + 1] - self.nodes[k - 1];
            let b_prime = (self.bids[k + 1] - self.bids[k - 1]) / step;
            let survivor = self.gm.suffix_mass(f);
            let dens = self.gm.value_at(f);
            out.push((survivor * b_prime - dens * (self.bids[k] - f)).abs());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_bid_is_the_tail_midpoint() {
        let gm = Density1D::uniform(0.0, 1.0, 512);
        let fp = solve_first_price_1d(&gm);
        assert_abs_diff_eq!(fp.bid_at(0.0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fp.bid_at(0.5), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn point_mass_bids_the_atom() {
        let gm = Density1D::point_mass(0.8);
        let fp = solve_first_price_1d(&gm);
        assert_abs_diff_eq!(fp.bid_at(0.2), 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(fp.bid_at(0.8), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn ode_residual_is_small_on_interior_nodes() {
        let gm = Density1D::uniform(0.0, 1.0, 512);
        let fp = solve_first_price_1d(&gm);
        let worst = fp.ode_residuals().into_iter().fold(0.0f64, f64::max);
        assert!(worst < 1e-3, "worst residual {worst}");
    }

    #[test]
    fn ode_residual_small_for_nonuniform_density() {
        // triangular-ish density on [0,1]
        let n = 1024;
        let raw: Vec<f64> = (0..n).map(|k| 0.25 + 1.5 * (k as f64 + 0.5) / n as f64).collect();
        let total: f64 = raw.iter().sum::<f64>() / n as f64;
        let vals: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let gm = Density1D::new(0.0, 1.0, vals, Vec::new()).unwrap();
        let fp = solve_first_price_1d(&gm);
        let worst = fp.ode_residuals().into_iter().fold(0.0f64, f64::max);
        assert!(worst < 1e-3, "worst residual {worst}");
    }
}
