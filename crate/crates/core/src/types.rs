//! Domain primitives: cost structures, seller types and contracts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cost-model parameters: the convexity exponent and the type rectangle.
///
/// A seller of type `(m, f)` produces quality `q` at cost `m * q^eta + f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub eta: f64,
    pub m_lo: f64,
    pub m_hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl CostParams {
    pub fn new(eta: f64, m_lo: f64, m_hi: f64, f_lo: f64, f_hi: f64) -> Result<Self> {
        let p = CostParams { eta, m_lo, m_hi, f_lo, f_hi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 1.0) {
            return Err(Error::InvalidParameter(format!("eta must be >= 1, got {}", self.eta)));
        }
        if !(self.m_lo > 0.0 && self.m_lo < self.m_hi) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < m_lo < m_hi, got [{}, {}]",
                self.m_lo, self.m_hi
            )));
        }
        if !(self.f_lo > 0.0 && self.f_lo < self.f_hi) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < f_lo < f_hi, got [{}, {}]",
                self.f_lo, self.f_hi
            )));
        }
        Ok(())
    }

    /// Lower end of the extended fixed-cost range.
    ///
    /// Pseudotype representatives of strong rivals projected onto a line with
    /// higher marginal cost can need fixed costs below `f_lo`: matching a
    /// break-even score while paying more per unit of effort requires a
    /// discount of at most `(m_hi - m_lo) * q^eta <= m_hi - m_lo`.
    pub fn extended_f_lo(&self) -> f64 {
        self.f_lo - (self.m_hi - self.m_lo)
    }

    /// Upper end of the extended fixed-cost range. A bid never drops below the
    /// break-even score of the fixed cost `f_hi + m_hi` on the same line.
    pub fn extended_f_hi(&self) -> f64 {
        self.f_hi + self.m_hi
    }

    pub fn contains(&self, t: SellerType) -> bool {
        t.m >= self.m_lo && t.m <= self.m_hi && t.f >= self.f_lo && t.f <= self.f_hi
    }

    pub fn contains_extended(&self, t: SellerType) -> bool {
        t.m >= self.m_lo && t.m <= self.m_hi && t.f >= self.extended_f_lo() && t.f <= self.extended_f_hi()
    }
}

/// A seller's private type: marginal cost per unit of effort and fixed cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SellerType {
    pub m: f64,
    pub f: f64,
}

impl SellerType {
    pub fn new(m: f64, f: f64) -> Self {
        SellerType { m, f }
    }

    /// Production cost of supplying quality `q`.
    pub fn cost(&self, q: f64, eta: f64) -> f64 {
        self.m * q.powf(eta) + self.f
    }
}

/// A proposed contract: asking price and good quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub p: f64,
    pub q: f64,
}

impl Contract {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p >= 0.0) {
            return Err(Error::InvalidParameter(format!("price must be nonnegative, got {p}")));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidParameter(format!("quality must lie in [0,1], got {q}")));
        }
        Ok(Contract { p, q })
    }
}
