//! Meta-analysis as a balance of masses.
//!
//! Fixed- and random-effects pooling, Egger regression fitted both by least
//! squares and by G-estimation, summary-data Mendelian randomization, and the
//! balance model (masses, pivot, stand, drilled holes) that a viewer renders.

pub mod api;
pub mod balance;
pub mod dist;
pub mod egger;
pub mod error;
pub mod io;
pub mod mr;
pub mod pooling;
pub mod registry;
pub mod simulate;
pub mod solver;
pub mod study;

pub use balance::{build_balance, leave_one_out, BalanceMass, BalanceState, LooEntry};
pub use dist::{IntervalOptions, Reference};
pub use egger::{asymmetry_correlation, egger_gest, egger_wls, potential_outcome_view, EggerFit};
pub use error::{Error, Result};
pub use mr::{ivw, mr_egger, wald_ratios, MrDataset, MrVariant, PleiotropyEstimate};
pub use pooling::{
    cochran_q, dl_tau2, fixed_effect, multiplicative_fit, pm_fit, Heterogeneity, ModelTag,
    PmConfig, PooledEstimate,
};
pub use registry::{builtin, Estimator, Fit, FitOptions, ModelRegistry};
pub use study::{PrecisionMetric, Study, StudySet};
