//! Named example scenarios.

use crate::scenario::{CSpecies, MSpecies, QSpecies, Scenario};

pub const PRESET_NAMES: &[&str] = &["discussion-figure"];

/// One species of each class at `D = 0.5`, `s_in = 3`:
/// free `M` (`alpha_max = 1`, `K_s = 2`), attached `C` (`beta_max = 1`,
/// `K_s = 1`) and Droop `Q` (`rho_max = 1`, `K_s = 1`, `gamma_bar = 1`,
/// `Q0 = 0.5`).
pub fn discussion_figure() -> Scenario {
    Scenario::new(0.5, 3.0)
        .with_m(MSpecies::new("M", 1.0, 2.0).expect("valid parameters"))
        .with_c(CSpecies::new("C", 1.0, 1.0).expect("valid parameters"))
        .with_q(QSpecies::droop("Q", 1.0, 1.0, 1.0, 0.5).expect("valid parameters"))
}

pub fn preset(name: &str) -> Option<Scenario> {
    match name {
        "discussion-figure" => Some(discussion_figure()),
        _ => None,
    }
}
