//! Scoring-rule families, iso-score price curves, score-conditional optimal
//! contracts and numerical regularity probes.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::grid_golden_max;
use crate::types::{Contract, CostParams, SellerType};

/// Quality floor for the price-quality-ratio rule, which is singular at q = 0.
pub const PQR_Q_MIN: f64 = 1e-9;
/// Default coarse-grid size for scalar maximizations.
pub const SCAN_GRID: usize = 512;
/// Golden-section interval width.
pub const GOLDEN_TOL: f64 = 1e-11;

/// Concave value function of a quasilinear rule, `phi(q) = a * q^b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhiSpec {
    Power { a: f64, b: f64 },
}

impl PhiSpec {
    pub fn eval(&self, q: f64) -> f64 {
        match *self {
            PhiSpec::Power { a, b } => a * q.powf(b),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            PhiSpec::Power { a, b } => {
                if !(a > 0.0) || !(b > 0.0 && b <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "power value function needs a > 0 and 0 < b <= 1, got a={a}, b={b}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Serializable scoring-rule description (the three built-in families).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RuleSpec {
    Quasilinear { phi: PhiSpec },
    Pqr,
    Qd { qbar: f64 },
}

type ScoreFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum RuleKind {
    /// `phi(q) - p`
    Quasilinear(PhiSpec),
    /// `-p / q`
    Pqr,
    /// `-p * (qbar - q)`
    Qd { qbar: f64 },
    /// Arbitrary handle, monotonicity-probed at construction.
    Custom { label: String, score: ScoreFn },
}

/// A buyer's ranking function over (price, quality) contracts: strictly
/// increasing in quality, strictly decreasing in price.
#[derive(Clone)]
pub struct ScoringRule {
    kind: RuleKind,
}

impl std::fmt::Debug for ScoringRule {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(fm, "ScoringRule({})", self.family_name())
    }
}

impl ScoringRule {
    pub fn quasilinear(phi: PhiSpec) -> Result<Self> {
        phi.validate()?;
        Ok(ScoringRule { kind: RuleKind::Quasilinear(phi) })
    }

    pub fn pqr() -> Self {
        ScoringRule { kind: RuleKind::Pqr }
    }

    pub fn qd(qbar: f64) -> Result<Self> {
        if !(qbar > 1.0) {
            return Err(Error::InvalidParameter(format!("quality-discount rule needs qbar > 1, got {qbar}")));
        }
        Ok(ScoringRule { kind: RuleKind::Qd { qbar } })
    }

    /// Wrap a custom score mapping. The handle is probed at 1000 random
    /// contracts for strict monotonicity (up in q, down in p).
    pub fn custom(label: impl Into<String>, score: ScoreFn) -> Result<Self> {
        let label = label.into();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5c0_7e);
        for _ in 0..1000 {
            let p: f64 = rng.gen::<f64>() * 10.0;
            let q: f64 = PQR_Q_MIN + rng.gen::<f64>() * (1.0 - 2.0 * PQR_Q_MIN);
            let dp: f64 = 1e-4 + rng.gen::<f64>() * 0.5;
            let dq: f64 = (1e-4 + rng.gen::<f64>() * 0.5).min(1.0 - q);
            let base = score(p, q);
            if !(score(p + dp, q) < base) {
                return Err(Error::MonotonicityViolation(format!(
                    "score not strictly decreasing in price at (p={p}, q={q})"
                )));
            }
            if dq > 0.0 && !(score(p, q + dq) > base) {
                return Err(Error::MonotonicityViolation(format!(
                    "score not strictly increasing in quality at (p={p}, q={q})"
                )));
            }
        }
        Ok(ScoringRule { kind: RuleKind::Custom { label, score } })
    }

    pub fn from_spec(spec: &RuleSpec) -> Result<Self> {
        match *spec {
            RuleSpec::Quasilinear { phi } => ScoringRule::quasilinear(phi),
            RuleSpec::Pqr => Ok(ScoringRule::pqr()),
            RuleSpec::Qd { qbar } => ScoringRule::qd(qbar),
        }
    }

    pub fn family_name(&self) -> &str {
        match &self.kind {
            RuleKind::Quasilinear(_) => "quasilinear",
            RuleKind::Pqr => "pqr",
            RuleKind::Qd { .. } => "qd",
            RuleKind::Custom { label, .. } => label,
        }
    }

    pub fn is_custom(&self) -> bool {
        matches!(self.kind, RuleKind::Custom { .. })
    }

    pub fn spec(&self) -> Option<RuleSpec> {
        match &self.kind {
            RuleKind::Quasilinear(phi) => Some(RuleSpec::Quasilinear { phi: *phi }),
            RuleKind::Pqr => Some(RuleSpec::Pqr),
            RuleKind::Qd { qbar } => Some(RuleSpec::Qd { qbar: *qbar }),
            RuleKind::Custom { .. } => None,
        }
    }

    /// Lower end of the quality domain (the PQR rule is undefined at 0).
    pub fn q_floor(&self) -> f64 {
        match self.kind {
            RuleKind::Pqr => PQR_Q_MIN,
            _ => 0.0,
        }
    }

    /// Score of a price-quality pair. Assumes `q` is inside the rule's domain.
    pub(crate) fn score_pq(&self, p: f64, q: f64) -> f64 {
        match &self.kind {
            RuleKind::Quasilinear(phi) => phi.eval(q) - p,
            RuleKind::Pqr => -p / q,
            RuleKind::Qd { qbar } => -p * (qbar - q),
            RuleKind::Custom { score, .. } => score(p, q),
        }
    }

    /// Highest attainable score: zero price at full quality.
    pub fn max_score(&self) -> f64 {
        self.score_pq(0.0, 1.0)
    }
}

/// Evaluate the scoring rule on a contract.
pub fn score(rule: &ScoringRule, c: &Contract) -> Result<f64> {
    if matches!(rule.kind, RuleKind::Pqr) && c.q == 0.0 {
        return Err(Error::PqrZeroQuality);
    }
    Ok(rule.score_pq(c.p, c.q))
}

/// Price at which quality `q` attains score `s`: the iso-score curve P(s, q).
pub fn price_for_score(rule: &ScoringRule, s: f64, q: f64) -> Result<f64> {
    let p = match &rule.kind {
        RuleKind::Quasilinear(phi) => phi.eval(q) - s,
        RuleKind::Pqr => {
            if q == 0.0 {
                return Err(Error::PqrZeroQuality);
            }
            -s * q
        }
        RuleKind::Qd { qbar } => -s / (qbar - q),
        RuleKind::Custom { score, .. } => {
            if score(0.0, q) < s - 1e-12 {
                return Err(Error::InfeasibleScore { score: s, quality: q });
            }
            // score is strictly decreasing in price: expand then bisect
            let mut hi = 1.0;
            while score(hi, q) > s && hi < 1e12 {
                hi *= 2.0;
            }
            if score(hi, q) > s {
                return Err(Error::InfeasibleScore { score: s, quality: q });
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if score(mid, q) >= s {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };
    if p < -1e-12 {
        return Err(Error::InfeasibleScore { score: s, quality: q });
    }
    Ok(p.max(0.0))
}

/// Smallest quality at which the score `s` is attainable with a nonnegative
/// price, or an error if it is attainable nowhere.
fn feasible_q_floor(rule: &ScoringRule, s: f64) -> Result<f64> {
    let q_lo = rule.q_floor();
    if rule.score_pq(0.0, q_lo) >= s {
        return Ok(q_lo);
    }
    if rule.max_score() < s {
        return Err(Error::InfeasibleScore { score: s, quality: 1.0 });
    }
    // score at zero price is increasing in q: bisect for the boundary
    let mut lo = q_lo;
    let mut hi = 1.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if rule.score_pq(0.0, mid) >= s {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Best margin `max_q P(s,q) - m q^eta` achievable while delivering score `s`,
/// together with the maximizing quality.
pub fn fulfillment(rule: &ScoringRule, s: f64, m: f64, eta: f64) -> Result<(f64, f64)> {
    fulfillment_scan(rule, s, m, eta, SCAN_GRID)
}

pub(crate) fn fulfillment_scan(
    rule: &ScoringRule,
    s: f64,
    m: f64,
    eta: f64,
    grid: usize,
) -> Result<(f64, f64)> {
    let q_lo = feasible_q_floor(rule, s)?;
    let objective = |q: f64| match price_for_score(rule, s, q) {
        Ok(p) => p - m * q.powf(eta),
        Err(_) => f64::NEG_INFINITY,
    };
    let (q, value) = grid_golden_max(objective, q_lo, 1.0, grid, GOLDEN_TOL);
    if !value.is_finite() {
        return Err(Error::InfeasibleScore { score: s, quality: q });
    }
    Ok((q, value))
}

/// Quality a seller with marginal cost `m` optimally supplies when committed
/// to delivering score `s` (interior or boundary maximizer).
pub fn optimal_quality_given_score(rule: &ScoringRule, s: f64, m: f64, eta: f64) -> Result<f64> {
    fulfillment(rule, s, m, eta).map(|(q, _)| q)
}

/// Indirect utility of bidding score `s`: best margin minus the fixed cost.
/// Additively separable, so the maximizing quality does not depend on `f`.
pub fn indirect_utility(rule: &ScoringRule, s: f64, t: SellerType, eta: f64) -> Result<f64> {
    fulfillment(rule, s, t.m, eta).map(|(_, margin)| margin - t.f)
}

/// Numerical health report for the assumptions behind the equilibrium theory.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    /// The score-conditional objective is single-peaked at every probe.
    pub convexity_ok: bool,
    /// `d/dm (u / u_s)` keeps one strict sign across all probes.
    pub single_crossing_ok: bool,
    /// Maximizer detection is stable under grid refinement at every probe.
    pub boundary_ok: bool,
    pub worst_violation: f64,
    pub probe_locations: Vec<(f64, f64)>,
}

/// Probe the rule on a lattice of scores and types.
///
/// The second-derivative sign conditions behind the theory are not checked
/// symbolically; this verifies their operational content: a unique, stably
/// detected optimal contract per score, and a uniform strict sign of
/// `d/dm (u / u_s)` across the probed region (the sign itself depends on the
/// score orientation, so only its constancy is meaningful numerically).
pub fn check_regularity(rule: &ScoringRule, params: &CostParams, probes: usize) -> RegularityReport {
    let probes = probes.max(4);
    let eta = params.eta;
    // probe the score band actually bid in any auction on this rectangle:
    // between the zero-profit optima of the weakest extended type and the
    // strongest real type (scores above that are never relevant and push the
    // price to its zero boundary, where the envelope changes shape)
    let zero_profit_best = |m: f64, f: f64| {
        grid_golden_max(
            |q: f64| rule.score_pq((m * q.powf(eta) + f).max(0.0), q),
            rule.q_floor(),
            1.0,
            256,
            1e-10,
        )
        .1
    };
    let s_lo = zero_profit_best(params.m_hi, params.extended_f_hi());
    let s_hi = zero_profit_best(params.m_lo, params.f_lo);
    let mut convexity_ok = true;
    let mut boundary_ok = true;
    let mut worst = 0.0f64;
    let mut locations = Vec::new();
    let mut crossing_derivs: Vec<(f64, f64, f64)> = Vec::new();

    for si in 0..probes {
        // stay strictly inside the attainable range
        let s = s_lo + (si as f64 + 0.5) / probes as f64 * (s_hi - s_lo) * 0.999;
        for mi in 0..probes {
            let m = params.m_lo + (mi as f64 + 0.5) / probes as f64 * (params.m_hi - params.m_lo);
            let q_lo = match feasible_q_floor(rule, s) {
                Ok(q) => q,
                Err(_) => continue,
            };
            let obj = |q: f64| match price_for_score(rule, s, q) {
                Ok(p) => p - m * q.powf(eta),
                Err(_) => f64::NEG_INFINITY,
            };
            // curvature of the iso-score price curve P(s, .) must keep one
            // sign over the feasible quality range (flat counts as regular)
            let n = 129;
            let prices: Vec<f64> = (0..n)
                .filter_map(|k| {
                    let q = q_lo + (1.0 - q_lo) * k as f64 / (n - 1) as f64;
                    price_for_score(rule, s, q).ok()
                })
                .collect();
            if prices.len() >= 3 {
                let p_scale = prices.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
                let mut max_pos = 0.0f64;
                let mut max_neg = 0.0f64;
                for w in prices.windows(3) {
                    let d2 = w[2] - 2.0 * w[1] + w[0];
                    max_pos = max_pos.max(d2);
                    max_neg = max_neg.max(-d2);
                }
                let sig = 1e-9 * p_scale;
                if max_pos > sig && max_neg > sig {
                    let violation = max_pos.min(max_neg) / max_pos.max(max_neg);
                    convexity_ok = false;
                    if violation > worst {
                        worst = violation;
                        locations.push((s, m));
                    }
                }
            }

            // maximizer stability under grid refinement
            let (q_a, _) = grid_golden_max(obj, q_lo, 1.0, 256, 1e-10);
            let (q_b, _) = grid_golden_max(obj, q_lo, 1.0, 1024, 1e-10);
            let drift = (q_a - q_b).abs();
            if drift > 1e-6 {
                boundary_ok = false;
                if drift > worst {
                    worst = drift;
                    locations.push((s, m));
                }
            }

            // d/dm (u / u_s) by central differences
            let dm = 1e-4 * (params.m_hi - params.m_lo);
            let ds = 1e-5 * (s_hi - s_lo).abs().max(1e-6);
            let ratio = |mm: f64| -> Option<f64> {
                let (_, u0) = fulfillment(rule, s, mm, eta).ok()?;
                let (_, up) = fulfillment(rule, s + ds, mm, eta).ok()?;
                let (_, un) = fulfillment(rule, s - ds, mm, eta).ok()?;
                let u1 = (up - un) / (2.0 * ds);
                if u1.abs() < 1e-10 {
                    return None;
                }
                let f_mid = 0.5 * (params.f_lo + params.f_hi);
                Some((u0 - f_mid) / u1)
            };
            if let (Some(rp), Some(rn)) = (ratio(m + dm), ratio(m - dm)) {
                crossing_derivs.push((s, m, (rp - rn) / (2.0 * dm)));
            }
        }
    }

    // uniform strict sign across all probes
    let mut single_crossing_ok = !crossing_derivs.is_empty();
    if single_crossing_ok {
        let pos = crossing_derivs.iter().filter(|(_, _, d)| *d > 0.0).count();
        let majority_positive = 2 * pos >= crossing_derivs.len();
        for &(s, m, d) in &crossing_derivs {
            let signed = if majority_positive { d } else { -d };
            if signed < 1e-12 {
                single_crossing_ok = false;
                let violation = (1e-12 - signed).max(0.0);
                if violation > worst {
                    worst = violation;
                    locations.push((s, m));
                }
            }
        }
    }

    RegularityReport {
        convexity_ok,
        single_crossing_ok,
        boundary_ok,
        worst_violation: worst,
        probe_locations: locations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sqrt_rule() -> ScoringRule {
        ScoringRule::quasilinear(PhiSpec::Power { a: 2.0, b: 0.5 }).unwrap()
    }

    #[test]
    fn family_scores_match_definitions() {
        let ql = sqrt_rule();
        assert_abs_diff_eq!(score(&ql, &Contract::new(1.0, 1.0).unwrap()).unwrap(), 1.0);
        let pqr = ScoringRule::pqr();
        assert_abs_diff_eq!(score(&pqr, &Contract::new(2.0, 0.5).unwrap()).unwrap(), -4.0);
        let qd = ScoringRule::qd(2.0).unwrap();
        assert_abs_diff_eq!(score(&qd, &Contract::new(1.0, 0.5).unwrap()).unwrap(), -1.5);
    }

    #[test]
    fn pqr_rejects_zero_quality() {
        let pqr = ScoringRule::pqr();
        assert!(matches!(
            score(&pqr, &Contract::new(1.0, 0.0).unwrap()),
            Err(Error::PqrZeroQuality)
        ));
    }

    #[test]
    fn price_inversions_match_closed_forms() {
        assert_abs_diff_eq!(price_for_score(&sqrt_rule(), 0.0, 1.0).unwrap(), 2.0);
        assert_abs_diff_eq!(price_for_score(&ScoringRule::pqr(), -4.0, 0.5).unwrap(), 2.0);
        assert_abs_diff_eq!(price_for_score(&ScoringRule::qd(2.0).unwrap(), -1.5, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn infeasible_scores_are_rejected() {
        // max quasilinear score at q=0.25 is phi(0.25) = 1
        assert!(price_for_score(&sqrt_rule(), 1.5, 0.25).is_err());
        assert!(price_for_score(&ScoringRule::pqr(), 0.5, 0.5).is_err());
    }

    #[test]
    fn score_price_round_trip() {
        let rules = vec![sqrt_rule(), ScoringRule::pqr(), ScoringRule::qd(2.0).unwrap()];
        for rule in &rules {
            for k in 0..50 {
                let q = 0.02 + 0.019 * k as f64;
                for s in [-3.0, -1.0, -0.25] {
                    if let Ok(p) = price_for_score(rule, s, q) {
                        let c = Contract::new(p, q).unwrap();
                        assert_abs_diff_eq!(score(rule, &c).unwrap(), s, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn sqrt_rule_optimal_quality_is_f_and_score_free() {
        // maximize 2 sqrt(q) - 2 q: the score cancels out of the argmax
        for s in [-1.0, 0.0, 0.5] {
            let q = optimal_quality_given_score(&sqrt_rule(), s, 2.0, 1.0).unwrap();
            assert_abs_diff_eq!(q, 0.25, epsilon = 1e-8);
        }
    }

    #[test]
    fn huge_marginal_cost_pushes_quality_to_zero() {
        let q = optimal_quality_given_score(&sqrt_rule(), -0.5, 1e6, 1.0).unwrap();
        assert!(q < 1e-3, "q = {q}");
    }

    #[test]
    fn indirect_utility_is_separable_in_fixed_cost() {
        let rule = ScoringRule::pqr();
        let u1 = indirect_utility(&rule, -2.5, SellerType::new(1.3, 0.7), 2.0).unwrap();
        let u2 = indirect_utility(&rule, -2.5, SellerType::new(1.3, 1.2), 2.0).unwrap();
        assert_abs_diff_eq!(u1 - u2, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn utility_weakly_increases_as_bid_relaxes() {
        let rule = ScoringRule::qd(2.0).unwrap();
        let t = SellerType::new(1.0, 1.0);
        let mut prev = f64::NEG_INFINITY;
        // lower score = less competitive bid = weakly more profit
        for k in 0..40 {
            let s = -0.05 - 0.1 * k as f64;
            let u = indirect_utility(&rule, s, t, 2.0).unwrap();
            assert!(u >= prev - 1e-9, "utility fell from {prev} to {u} at s={s}");
            prev = u;
        }
    }

    #[test]
    fn monotonicity_probes_pass_for_builtins() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for rule in [sqrt_rule(), ScoringRule::pqr(), ScoringRule::qd(1.5).unwrap()] {
            for _ in 0..1000 {
                let p: f64 = rng.gen::<f64>() * 5.0;
                let q: f64 = 0.01 + rng.gen::<f64>() * 0.98;
                let s0 = rule.score_pq(p, q);
                assert!(rule.score_pq(p + 0.01, q) < s0);
                assert!(rule.score_pq(p, q + 0.005) > s0);
            }
        }
    }

    #[test]
    fn custom_rule_increasing_in_price_is_rejected() {
        let bad = ScoringRule::custom("bad", Arc::new(|p: f64, q: f64| p + q));
        assert!(matches!(bad, Err(Error::MonotonicityViolation(_))));
    }

    #[test]
    fn custom_linear_rule_is_accepted_and_usable() {
        let rule = ScoringRule::custom("q-minus-p", Arc::new(|p: f64, q: f64| q - p)).unwrap();
        let c = Contract::new(0.25, 0.75).unwrap();
        assert_abs_diff_eq!(score(&rule, &c).unwrap(), 0.5);
        let p = price_for_score(&rule, 0.25, 0.75).unwrap();
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn regularity_passes_for_builtin_families() {
        let params = CostParams::new(2.0, 1.0, 2.0, 0.5, 1.5).unwrap();
        for rule in [sqrt_rule(), ScoringRule::pqr(), ScoringRule::qd(2.0).unwrap()] {
            let report = check_regularity(&rule, &params, 8);
            assert!(report.convexity_ok, "{rule:?}: {report:?}");
            assert!(report.boundary_ok, "{rule:?}: {report:?}");
        }
        // single crossing is a property of the coarse-admitting families; the
        // quality-discount objective genuinely loses it at low scores
        for rule in [sqrt_rule(), ScoringRule::pqr()] {
            let report = check_regularity(&rule, &params, 8);
            assert!(report.single_crossing_ok, "{rule:?}: {report:?}");
        }
    }
}
