//! Competition of free bacteria, attached bacteria and phytoplankton for a
//! single limiting substrate in a chemostat.
//!
//! Free bacteria grow with Monod kinetics, attached bacteria with
//! ratio-dependent Contois kinetics, and phytoplankton with a cell-quota
//! (Droop or Caperon-Meyer) model. The crate predicts the surviving
//! community from subsistence concentrations, enumerates and classifies
//! equilibria, and integrates the dynamics to check the prediction.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibria;
pub mod error;
pub mod linalg;
pub mod mappings;
pub mod ode;
pub mod presets;
pub mod rates;
pub mod roots;
pub mod sampling;
pub mod scenario;
pub mod simulate;
pub mod stability;
pub mod sweep;
pub mod validate;

pub use equilibria::{
    enumerate_equilibria, predict_outcome, EnumerateOptions, Equilibrium, EquilibriumClass, EquilibriumReport,
    Prediction, PredictionReport, StarClass,
};
pub use error::{ModelError, Result};
pub use scenario::{CSpecies, Layout, MSpecies, Normalization, QSpecies, Scenario, SpeciesClass, State};
pub use validate::{validate_scenario, ValidationReport, TOL_DISTINCT};
