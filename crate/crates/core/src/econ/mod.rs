//! Fixed-effects estimation, inference and diagnostics.

pub mod absorb;
pub mod bootstrap;
pub mod control;
pub mod diagnostics;
pub mod ols;
pub mod poisson;

pub use absorb::{absorb, AbsorbOptions, Absorber, Factor, FixedEffectSpec, TrendGroup};
pub use bootstrap::{cluster_bootstrap, BootstrapOptions, BootstrapResult};
pub use control::{control_function, ControlFunctionResult, StageData};
pub use diagnostics::{lead_exogeneity_test, twfe_weights, LeadTest, TwfeWeights};
pub use ols::{estimate_fe, semi_elasticity, semi_elasticity_se, Regressor, RegressionResult};
pub use poisson::{poisson_fe, PoissonFEResult, PoissonOptions};
