//! Two-asset experimental-market engine.
//!
//! Computes closed-form average and equilibrium price dynamics for three
//! agent-based market models (homogeneous noise traders, factor-investing
//! heterogeneity with directional and market-neutral traders, and
//! fundamentalist/speculator heterogeneity) and validates them against a
//! seeded Monte Carlo simulator with batch clearing.
//!
//! Modules:
//! - [`market`]: shared domain types, fundamental value, buyer probability,
//!   noise quotes, the cash endowment bound and the RD misvaluation measure;
//! - [`homogeneous`]: single-asset average/equilibrium price paths and RD
//!   parameter sweeps;
//! - [`factor`]: the two-asset factor model and its equilibrium conditions;
//! - [`hetero`]: the fundamentalist/speculator event machine, its limit
//!   case, and the two-asset identification regimes;
//! - [`mc`]: the Monte Carlo session oracle.

pub mod error;
pub mod factor;
pub mod hetero;
pub mod homogeneous;
pub mod market;
pub mod mc;

pub use error::EngineError;
pub use market::{AssetSpec, EventLabel, InitialPriceRule, MarketSpec, PeriodRecord, PricePath};
