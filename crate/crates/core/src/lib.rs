//! Audit games between a benefits administrator and self-reporting users.
//!
//! Users report a type to claim an allocation; the administrator audits
//! reports at a cost and fines detected misreports. The crate computes
//! equilibria (exactly over rationals or in `f64`), bounds on misreporting,
//! audit-versus-no-audit cost comparisons and brute-force cross-checks.

pub mod bounds;
pub mod casestudy;
pub mod config;
pub mod cost;
pub mod equilibrium;
pub mod error;
pub mod game;
pub mod lp;
pub mod oracle;
pub mod scalar;

pub use config::{parse_config, write_config, ConfigFile, NumericMode};
pub use equilibrium::{
    budget_thresholds, signaling_equilibrium, two_type_closed_form, verify_equilibrium, BudgetAnalysis,
    EquilibriumResult, Provenance, Regime,
};
pub use error::{GameError, NonexistenceError, Result};
pub use game::{AuditPolicy, GameConfig, Strategy, StrategyProfile};
pub use scalar::{Rational, Scalar};
