//! Numerical toolkit for multidimensional first-score and second-score
//! procurement auctions: break-even bidding, equilibrium computation,
//! coarse-beliefs classification, and Monte Carlo / quadrature simulation.

pub mod breakeven;
pub mod classifier;
pub mod dist;
pub mod equilibrium;
pub mod error;
pub mod numeric;
pub mod scoring;
pub mod types;

pub use breakeven::{breakeven_contract, breakeven_effort, breakeven_order, project_pseudotype, BreakEvenResult, Projector};
pub use classifier::{classify, classify_family, test_linearity, CBEVerdict, ClassifyOptions};
pub use dist::{
    evaluate_moment, make_distribution, perturb, sample_types, DistributionSpec, Moment,
    PerturbationDirection, TypeDistribution,
};
pub use equilibrium::{
    foc_residual, imitated_fixed_cost, max_interior_residual, pushforward_density,
    rival_min_density, solve_best_response, solve_first_price_1d, solve_invariant,
    strategy_from_moments, strategy_moments_for_type, BestResponseOptions, Density1D,
    EquilibriumStrategy, InvariantContext, ScoreDistribution, SolveMode, SolverOutcome,
};
pub use error::{Error, Result};
pub use scoring::{
    check_regularity, indirect_utility, optimal_quality_given_score, price_for_score, score,
    PhiSpec, RegularityReport, RuleSpec, ScoringRule,
};
pub use types::{Contract, CostParams, SellerType};
