//! Grid densities over the type rectangle, generalized moments and
//! mass-preserving perturbation directions.
//!
//! Densities are piecewise-constant on a uniform rectangular grid and all
//! integrals are midpoint quadratures. This keeps every moment linear in the
//! density, which the equilibrium arguments lean on.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CostParams, SellerType};

const MASS_TOL: f64 = 1e-10;

/// Strictly positive piecewise-constant density over the type rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDistribution {
    m_lo: f64,
    m_hi: f64,
    f_lo: f64,
    f_hi: f64,
    m_nodes: Vec<f64>,
    f_nodes: Vec<f64>,
    /// Row-major over (m index, f index).
    density: Vec<f64>,
    cell_area: f64,
}

impl TypeDistribution {
    /// Build from per-cell values, rescaling them to integrate to one.
    pub fn from_values(params: &CostParams, nm: usize, nf: usize, values: Vec<f64>) -> Result<Self> {
        if nm < 2 || nf < 2 {
            return Err(Error::InvalidParameter(format!("grid sizes must be >= 2, got {nm}x{nf}")));
        }
        if values.len() != nm * nf {
            return Err(Error::GridMismatch(format!(
                "expected {} cell values, got {}",
                nm * nf,
                values.len()
            )));
        }
        let dm = (params.m_hi - params.m_lo) / nm as f64;
        let df = (params.f_hi - params.f_lo) / nf as f64;
        let cell_area = dm * df;
        let m_nodes: Vec<f64> = (0..nm).map(|i| params.m_lo + (i as f64 + 0.5) * dm).collect();
        let f_nodes: Vec<f64> = (0..nf).map(|j| params.f_lo + (j as f64 + 0.5) * df).collect();
        for (idx, &v) in values.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveDensity {
                    m: m_nodes[idx / nf],
                    f: f_nodes[idx % nf],
                    value: v,
                });
            }
        }
        let total: f64 = values.iter().sum::<f64>() * cell_area;
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::Unnormalizable(format!("total mass {total}")));
        }
        let density = values.into_iter().map(|v| v / total).collect();
        Ok(TypeDistribution {
            m_lo: params.m_lo,
            m_hi: params.m_hi,
            f_lo: params.f_lo,
            f_hi: params.f_hi,
            m_nodes,
            f_nodes,
            density,
            cell_area,
        })
    }

    /// Like [`from_values`](Self::from_values) but trusts the values to already
    /// integrate to one (used by perturbations, which must not renormalize).
    fn from_normalized(&self, density: Vec<f64>) -> Result<Self> {
        for (idx, &v) in density.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveDensity {
                    m: self.m_nodes[idx / self.nf()],
                    f: self.f_nodes[idx % self.nf()],
                    value: v,
                });
            }
        }
        let mut out = self.clone();
        out.density = density;
        debug_assert!((out.total_mass() - 1.0).abs() < 1e-8);
        Ok(out)
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

    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }

    pub fn dm(&self) -> f64 {
        (self.m_hi - self.m_lo) / self.nm() as f64
    }

    pub fn df(&self) -> f64 {
        (self.f_hi - self.f_lo) / self.nf() as f64
    }

    pub fn rect(&self) -> (f64, f64, f64, f64) {
        (self.m_lo, self.m_hi, self.f_lo, self.f_hi)
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.density[i * self.nf() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.density
    }

    pub fn node(&self, i: usize, j: usize) -> SellerType {
        SellerType::new(self.m_nodes[i], self.f_nodes[j])
    }

    pub fn cell_mass(&self, i: usize, j: usize) -> f64 {
        self.value(i, j) * self.cell_area
    }

    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.cell_area
    }

    /// Cost parameters implied by the rectangle (eta supplied by the caller).
    pub fn params(&self, eta: f64) -> CostParams {
        CostParams {
            eta,
            m_lo: self.m_lo,
            m_hi: self.m_hi,
            f_lo: self.f_lo,
            f_hi: self.f_hi,
        }
    }

    pub fn same_grid(&self, other: &TypeDistribution) -> bool {
        self.nm() == other.nm()
            && self.nf() == other.nf()
            && (self.m_lo - other.m_lo).abs() < 1e-12
            && (self.m_hi - other.m_hi).abs() < 1e-12
            && (self.f_lo - other.f_lo).abs() < 1e-12
            && (self.f_hi - other.f_hi).abs() < 1e-12
    }

    /// Pointwise convex combination `lambda * self + (1 - lambda) * other`.
    pub fn convex_combination(&self, other: &TypeDistribution, lambda: f64) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch("convex combination needs identical grids".into()));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!("lambda must lie in [0,1], got {lambda}")));
        }
        let density = self
            .density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        self.from_normalized(density)
    }
}

/// Axis-aligned sub-rectangle of the type space.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Rect {
    pub m_lo: f64,
    pub m_hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Rect {
    fn contains(&self, t: SellerType) -> bool {
        t.m >= self.m_lo && t.m <= self.m_hi && t.f >= self.f_lo && t.f <= self.f_hi
    }

    fn area(&self) -> f64 {
        (self.m_hi - self.m_lo).max(0.0) * (self.f_hi - self.f_lo).max(0.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub rect: Rect,
    pub weight: f64,
}

/// Serializable recipe for a type distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Uniform,
    TruncNormal { mu_m: f64, mu_f: f64, sigma: f64 },
    Mixture { components: Vec<MixtureComponent> },
    Grid { values: Vec<Vec<f64>> },
    Convex {
        base: Box<DistributionSpec>,
        other: Box<DistributionSpec>,
        lambda: f64,
    },
}

/// Realize a distribution spec as a normalized grid density.
pub fn make_distribution(
    spec: &DistributionSpec,
    params: &CostParams,
    nm: usize,
    nf: usize,
) -> Result<TypeDistribution> {
    match spec {
        DistributionSpec::Uniform => {
            TypeDistribution::from_values(params, nm, nf, vec![1.0; nm * nf])
        }
        DistributionSpec::TruncNormal { mu_m, mu_f, sigma } => {
            if !(*sigma > 0.0) {
                return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
            }
            let mut values = Vec::with_capacity(nm * nf);
            let dm = (params.m_hi - params.m_lo) / nm as f64;
            let df = (params.f_hi - params.f_lo) / nf as f64;
            for i in 0..nm {
                let m = params.m_lo + (i as f64 + 0.5) * dm;
                for j in 0..nf {
                    let f = params.f_lo + (j as f64 + 0.5) * df;
                    let z = ((m - mu_m).powi(2) + (f - mu_f).powi(2)) / (2.0 * sigma * sigma);
                    values.push((-z).exp());
                }
            }
            TypeDistribution::from_values(params, nm, nf, values)
        }
        DistributionSpec::Mixture { components } => {
            if components.is_empty() {
                return Err(Error::Unnormalizable("mixture has no components".into()));
            }
            for c in components {
                if !(c.weight > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "mixture weights must be positive, got {}",
                        c.weight
                    )));
                }
                if c.rect.area() <= 0.0 {
                    return Err(Error::InvalidParameter("mixture component rectangle is empty".into()));
                }
            }
            let total_w: f64 = components.iter().map(|c| c.weight).sum();
            let mut values = Vec::with_capacity(nm * nf);
            let dm = (params.m_hi - params.m_lo) / nm as f64;
            let df = (params.f_hi - params.f_lo) / nf as f64;
            for i in 0..nm {
                let m = params.m_lo + (i as f64 + 0.5) * dm;
                for j in 0..nf {
                    let f = params.f_lo + (j as f64 + 0.5) * df;
                    let t = SellerType::new(m, f);
                    let v: f64 = components
                        .iter()
                        .filter(|c| c.rect.contains(t))
                        .map(|c| c.weight / c.rect.area() / total_w)
                        .sum();
                    values.push(v);
                }
            }
            TypeDistribution::from_values(params, nm, nf, values)
        }
        DistributionSpec::Grid { values } => {
            if values.len() != nm || values.iter().any(|row| row.len() != nf) {
                return Err(Error::GridMismatch(format!(
                    "grid spec must be {nm} rows of {nf} values"
                )));
            }
            let flat: Vec<f64> = values.iter().flatten().copied().collect();
            TypeDistribution::from_values(params, nm, nf, flat)
        }
        DistributionSpec::Convex { base, other, lambda } => {
            let a = make_distribution(base, params, nm, nf)?;
            let b = make_distribution(other, params, nm, nf)?;
            a.convex_combination(&b, *lambda)
        }
    }
}

/// Weight function of a generalized moment.
#[derive(Clone)]
enum MomentWeight {
    Constant(f64),
    MarginalCost,
    FixedCost,
    /// Bounded weight given as a closure over the extended type space.
    Fn(Arc<dyn Fn(SellerType) -> f64 + Send + Sync>),
    /// Values aligned to a specific grid (row-major over m then f).
    Grid { nm: usize, nf: usize, values: Arc<Vec<f64>> },
}

/// A generalized moment: a linear functional `g -> integral of weight * g`.
#[derive(Clone)]
pub struct Moment {
    label: String,
    weight: MomentWeight,
}

impl std::fmt::Debug for Moment {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("Moment").field("label", &self.label).finish()
    }
}

impl Moment {
    pub fn constant(c: f64) -> Self {
        Moment { label: format!("const({c})"), weight: MomentWeight::Constant(c) }
    }

    pub fn marginal_cost() -> Self {
        Moment { label: "m".into(), weight: MomentWeight::MarginalCost }
    }

    pub fn fixed_cost() -> Self {
        Moment { label: "f".into(), weight: MomentWeight::FixedCost }
    }

    pub fn of_fn(label: impl Into<String>, f: Arc<dyn Fn(SellerType) -> f64 + Send + Sync>) -> Self {
        Moment { label: label.into(), weight: MomentWeight::Fn(f) }
    }

    pub fn from_grid(label: impl Into<String>, nm: usize, nf: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nm * nf {
            return Err(Error::GridMismatch(format!(
                "moment grid needs {} values, got {}",
                nm * nf,
                values.len()
            )));
        }
        Ok(Moment {
            label: label.into(),
            weight: MomentWeight::Grid { nm, nf, values: Arc::new(values) },
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Weight at a type; grid weights are looked up on their own lattice.
    pub fn weight_at(&self, t: SellerType, dist: &TypeDistribution) -> Result<f64> {
        match &self.weight {
            MomentWeight::Constant(c) => Ok(*c),
            MomentWeight::MarginalCost => Ok(t.m),
            MomentWeight::FixedCost => Ok(t.f),
            MomentWeight::Fn(f) => Ok(f(t)),
            MomentWeight::Grid { nm, nf, values } => {
                if *nm != dist.nm() || *nf != dist.nf() {
                    return Err(Error::GridMismatch(format!(
                        "grid moment built on {}x{} lattice, evaluated on {}x{}",
                        nm,
                        nf,
                        dist.nm(),
                        dist.nf()
                    )));
                }
                let i = dist
                    .m_nodes()
                    .iter()
                    .position(|&m| (m - t.m).abs() < 1e-12)
                    .ok_or_else(|| Error::GridMismatch("type is not a grid node".into()))?;
                let j = dist
                    .f_nodes()
                    .iter()
                    .position(|&f| (f - t.f).abs() < 1e-12)
                    .ok_or_else(|| Error::GridMismatch("type is not a grid node".into()))?;
                Ok(values[i * nf + j])
            }
        }
    }
}

/// Midpoint quadrature of the moment against the density.
pub fn evaluate_moment(moment: &Moment, g: &TypeDistribution) -> Result<f64> {
    let nf = g.nf();
    let mut acc = 0.0;
    match &moment.weight {
        MomentWeight::Constant(c) => {
            acc = c * g.values().iter().sum::<f64>();
        }
        MomentWeight::MarginalCost => {
            for i in 0..g.nm() {
                let m = g.m_nodes()[i];
                for j in 0..nf {
                    acc += m * g.value(i, j);
                }
            }
        }
        MomentWeight::FixedCost => {
            for i in 0..g.nm() {
                for j in 0..nf {
                    acc += g.f_nodes()[j] * g.value(i, j);
                }
            }
        }
        MomentWeight::Fn(fun) => {
            for i in 0..g.nm() {
                for j in 0..nf {
                    acc += fun(g.node(i, j)) * g.value(i, j);
                }
            }
        }
        MomentWeight::Grid { nm, nf: gnf, values } => {
            if *nm != g.nm() || *gnf != g.nf() {
                return Err(Error::GridMismatch(format!(
                    "grid moment built on {}x{} lattice, evaluated on {}x{}",
                    nm,
                    gnf,
                    g.nm(),
                    g.nf()
                )));
            }
            for (w, d) in values.iter().zip(g.values()) {
                acc += w * d;
            }
        }
    }
    Ok(acc * g.cell_area())
}

/// Zero-integral direction in which a density can be perturbed.
#[derive(Debug, Clone)]
pub struct PerturbationDirection {
    nm: usize,
    nf: usize,
    values: Vec<f64>,
}

impl PerturbationDirection {
    pub fn new(nm: usize, nf: usize, values: Vec<f64>, cell_area: f64) -> Result<Self> {
        if values.len() != nm * nf {
            return Err(Error::GridMismatch(format!(
                "direction needs {} values, got {}",
                nm * nf,
                values.len()
            )));
        }
        let integral: f64 = values.iter().sum::<f64>() * cell_area;
        if integral.abs() > MASS_TOL {
            return Err(Error::InvalidParameter(format!(
                "perturbation direction must integrate to zero, got {integral}"
            )));
        }
        Ok(PerturbationDirection { nm, nf, values })
    }

    /// Direction moving mass `delta` from cell `(from_i, from_j)` to `(to_i, to_j)`.
    pub fn transfer(
        g: &TypeDistribution,
        from: (usize, usize),
        to: (usize, usize),
        delta: f64,
    ) -> Result<Self> {
        let mut values = vec![0.0; g.nm() * g.nf()];
        let per_cell = delta / g.cell_area();
        values[from.0 * g.nf() + from.1] -= per_cell;
        values[to.0 * g.nf() + to.1] += per_cell;
        PerturbationDirection::new(g.nm(), g.nf(), values, g.cell_area())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.nf + j]
    }
}

/// `g + eps * v`, rejected if positivity would be lost. No renormalization is
/// needed: the direction integrates to zero.
pub fn perturb(g: &TypeDistribution, v: &PerturbationDirection, eps: f64) -> Result<TypeDistribution> {
    if v.nm != g.nm() || v.nf != g.nf() {
        return Err(Error::GridMismatch("perturbation grid does not match the density grid".into()));
    }
    let density: Vec<f64> = g
        .values()
        .iter()
        .zip(&v.values)
        .map(|(d, dv)| d + eps * dv)
        .collect();
    if density.iter().any(|&d| !(d > 0.0)) {
        // max admissible magnitude along this signed direction
        let mut bound = f64::INFINITY;
        for (d, dv) in g.values().iter().zip(&v.values) {
            let slope = eps.signum() * dv;
            if slope < 0.0 {
                bound = bound.min(d / (-slope));
            }
        }
        return Err(Error::PerturbationTooLarge { max_eps: bound });
    }
    g.from_normalized(density)
}

/// Deterministic i.i.d. sample from the grid density: inverse-CDF over the
/// flattened cells plus uniform jitter within the chosen cell.
pub fn sample_types(g: &TypeDistribution, n: usize, seed: u64) -> Result<Vec<SellerType>> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cum = Vec::with_capacity(g.values().len());
    let mut acc = 0.0;
    for &d in g.values() {
        acc += d * g.cell_area();
        cum.push(acc);
    }
    let total = acc;
    let dm = g.dm();
    let df = g.df();
    let (m_lo, _, f_lo, _) = g.rect();
    let nf = g.nf();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen::<f64>() * total;
        let idx = cum.partition_point(|&c| c < u).min(cum.len() - 1);
        let i = idx / nf;
        let j = idx % nf;
        let um: f64 = rng.gen();
        let uf: f64 = rng.gen();
        out.push(SellerType::new(
            m_lo + (i as f64 + um) * dm,
            f_lo + (j as f64 + uf) * df,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> CostParams {
        CostParams::new(2.0, 1.0, 2.0, 0.5, 1.5).unwrap()
    }

    #[test]
    fn uniform_grid_is_flat_and_normalized() {
        let g = make_distribution(&DistributionSpec::Uniform, &params(), 10, 10).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert_abs_diff_eq!(g.value(i, j), 1.0, epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(g.total_mass(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn convex_of_identical_uniforms_is_uniform() {
        let spec = DistributionSpec::Convex {
            base: Box::new(DistributionSpec::Uniform),
            other: Box::new(DistributionSpec::Uniform),
            lambda: 0.5,
        };
        let g = make_distribution(&spec, &params(), 8, 8).unwrap();
        for &v in g.values() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn wide_truncated_normal_is_nearly_flat() {
        // Unit square in each direction; sigma large relative to its diagonal.
        let p = CostParams::new(2.0, 1.0, 2.0, 1.0, 2.0).unwrap();
        let sigma = 5.0;
        let spec = DistributionSpec::TruncNormal { mu_m: 1.5, mu_f: 1.5, sigma };
        let g = make_distribution(&spec, &p, 16, 16).unwrap();
        let max = g.values().iter().cloned().fold(f64::MIN, f64::max);
        let min = g.values().iter().cloned().fold(f64::MAX, f64::min);
        // independent oracle: extreme density ratio over cell midpoints; the
        // nearest midpoint to the center sits half a cell away
        let d_far = 0.5 - 0.5 / 16.0f64;
        let d_near = 0.5 / 16.0f64;
        let expected_ratio = ((2.0 * d_far * d_far - 2.0 * d_near * d_near) / (2.0 * sigma * sigma)).exp();
        assert!(max / min < 1.05);
        assert_abs_diff_eq!(max / min, expected_ratio, epsilon = 1e-9);
    }

    #[test]
    fn mixture_outside_support_is_rejected() {
        let spec = DistributionSpec::Mixture {
            components: vec![MixtureComponent {
                rect: Rect { m_lo: 1.0, m_hi: 1.5, f_lo: 0.5, f_hi: 1.0 },
                weight: 1.0,
            }],
        };
        match make_distribution(&spec, &params(), 10, 10) {
            Err(Error::NonPositiveDensity { .. }) => {}
            other => panic!("expected positivity rejection, got {other:?}"),
        }
    }

    #[test]
    fn constant_moment_is_normalization() {
        let g = make_distribution(&DistributionSpec::Uniform, &params(), 12, 7).unwrap();
        let m = evaluate_moment(&Moment::constant(1.0), &g).unwrap();
        assert_abs_diff_eq!(m, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fixed_cost_moment_of_uniform_is_midrange() {
        // f uniform on (0, 1]: mean 0.5
        let p = CostParams::new(2.0, 1.0, 2.0, 1e-12, 1.0).unwrap();
        let g = make_distribution(&DistributionSpec::Uniform, &p, 4, 64).unwrap();
        let m = evaluate_moment(&Moment::fixed_cost(), &g).unwrap();
        assert_abs_diff_eq!(m, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn indicator_moment_matches_analytic_mass() {
        let p = CostParams::new(2.0, 1.0, 2.0, 1e-12, 1.0).unwrap();
        let g = make_distribution(&DistributionSpec::Uniform, &p, 4, 64).unwrap();
        let ind = Moment::of_fn("f<=0.25", Arc::new(|t: SellerType| if t.f <= 0.25 { 1.0 } else { 0.0 }));
        let coarse = evaluate_moment(&ind, &g).unwrap();
        // refined grid cross-check
        let g_fine = make_distribution(&DistributionSpec::Uniform, &p, 4, 1024).unwrap();
        let fine = evaluate_moment(&ind, &g_fine).unwrap();
        assert_abs_diff_eq!(coarse, 0.25, epsilon = 1e-9);
        assert_abs_diff_eq!(fine, 0.25, epsilon = 1e-9);
    }

    #[test]
    fn moment_is_linear_in_the_density() {
        let p = params();
        let g1 = make_distribution(&DistributionSpec::Uniform, &p, 10, 10).unwrap();
        let g2 = make_distribution(
            &DistributionSpec::TruncNormal { mu_m: 1.2, mu_f: 0.8, sigma: 0.4 },
            &p,
            10,
            10,
        )
        .unwrap();
        let mix = g1.convex_combination(&g2, 0.3).unwrap();
        let m = Moment::fixed_cost();
        let lhs = evaluate_moment(&m, &mix).unwrap();
        let rhs = 0.3 * evaluate_moment(&m, &g1).unwrap() + 0.7 * evaluate_moment(&m, &g2).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-13);
    }

    #[test]
    fn perturb_is_exact_to_first_order_in_moments() {
        let p = params();
        let g = make_distribution(&DistributionSpec::Uniform, &p, 10, 10).unwrap();
        let v = PerturbationDirection::transfer(&g, (2, 3), (7, 6), 0.01).unwrap();
        let eps = 0.5;
        let gp = perturb(&g, &v, eps).unwrap();
        let m = Moment::fixed_cost();
        let before = evaluate_moment(&m, &g).unwrap();
        let after = evaluate_moment(&m, &gp).unwrap();
        let mut expected = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                expected += g.f_nodes()[j] * v.value(i, j);
            }
        }
        expected *= eps * g.cell_area();
        assert_abs_diff_eq!(after - before, expected, epsilon = 1e-12);
        // constant weight is untouched by a zero-integral direction
        let c = Moment::constant(3.0);
        assert_abs_diff_eq!(
            evaluate_moment(&c, &gp).unwrap(),
            evaluate_moment(&c, &g).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn perturb_zero_eps_is_identity() {
        let g = make_distribution(&DistributionSpec::Uniform, &params(), 6, 6).unwrap();
        let v = PerturbationDirection::transfer(&g, (0, 0), (5, 5), 0.2).unwrap();
        let gp = perturb(&g, &v, 0.0).unwrap();
        assert_eq!(g.values(), gp.values());
    }

    #[test]
    fn perturb_reports_max_admissible_eps() {
        let g = make_distribution(&DistributionSpec::Uniform, &params(), 6, 6).unwrap();
        let v = PerturbationDirection::transfer(&g, (0, 0), (5, 5), 0.2).unwrap();
        // density 1.0, direction value at the source cell is -0.2/area
        let err = perturb(&g, &v, 1.0).unwrap_err();
        match err {
            Error::PerturbationTooLarge { max_eps } => {
                let area = g.cell_area();
                assert_abs_diff_eq!(max_eps, area / 0.2, epsilon = 1e-12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn sampling_is_deterministic_and_unbiased() {
        let g = make_distribution(&DistributionSpec::Uniform, &params(), 10, 10).unwrap();
        assert!(sample_types(&g, 0, 7).is_err());
        let a = sample_types(&g, 1000, 42).unwrap();
        let b = sample_types(&g, 1000, 42).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.m.to_bits(), y.m.to_bits());
            assert_eq!(x.f.to_bits(), y.f.to_bits());
        }
        let n = 1_000_000usize;
        let s = sample_types(&g, n, 3).unwrap();
        let mean_f: f64 = s.iter().map(|t| t.f).sum::<f64>() / n as f64;
        // CLT bound: sd of uniform on [0.5, 1.5] is 1/sqrt(12)
        let se = (1.0f64 / 12.0).sqrt() / (n as f64).sqrt();
        assert!((mean_f - 1.0).abs() < 3.0 * se, "mean {mean_f} vs 1.0 (se {se})");
    }
}
