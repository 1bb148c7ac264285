//! Calibration and interference correction for ion-selective electrodes.
//!
//! Raw ISE voltages are turned into concentrations with a fitted calibration
//! curve ([`calibration`]). Readings distorted by other ions are corrected by
//! a multiplicative factor μ(TDS) learned by least squares ([`mu`]), where TDS
//! is computed from ionic composition ([`tds`]). [`evaluation`] scores the
//! correction over a train/test split, and [`simulator`] generates synthetic
//! titrations from the Nernst and Nikolsky-Eisenman equations for use as a
//! ground-truth oracle.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod fixtures;
pub mod ions;
pub mod mu;
pub mod par;
pub mod regression;
pub mod simulator;
pub mod stream;
pub mod tds;
pub mod units;

pub use calibration::{
    fit_exp_calibration, fit_linear_calibration, predict_concentration, CalibrationMethod,
    CalibrationModel, CalibrationPoint, CalibrationSet, ExpCalibration, LinearCalibration,
};
pub use dataset::{IonSeries, Source, TitrationDataset};
pub use error::{Error, Result};
pub use evaluation::{
    evaluate, fit_split, percent_error, removal_percent, split_mean_accuracy, EvaluationReport, SplitSpec,
};
pub use ions::{default_registry, ion_from_symbol, Concentration, IonRegistry, IonSpecies, PhysicalConstants};
pub use mu::{
    correct, fit_mu_log, fit_mu_quadratic, mu_targets, predict_mu, LogMuModel, MuModel,
    MuModelSet, MuTrainingPoint,
};
pub use regression::r_squared;
pub use simulator::{
    nernst_voltage, nikolsky_voltage, simulate_titration, ElectrodeSpec, Scenario, SyntheticScenario,
};
pub use tds::{tds_mg_per_l, tds_series, Composition, TdsValue};

/// 17 significant digits; parses back to the identical `f64`.
pub(crate) fn fmt_exact(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses INI text, dropping trailing ` ; comment` / ` # comment` parts of lines.
pub(crate) fn load_ini(text: &str) -> std::result::Result<ini::Ini, ini::ParseError> {
    let stripped: String = text
        .lines()
        .map(|line| {
            let cut = line
                .char_indices()
                .find(|&(i, c)| (c == ';' || c == '#') && i > 0 && line[..i].ends_with(char::is_whitespace))
                .map_or(line.len(), |(i, _)| i);
            let mut l = line[..cut].trim_end().to_string();
            l.push('\n');
            l
        })
        .collect();
    ini::Ini::load_from_str(&stripped)
}

/// `"mu K"` → `"K"` for `kind = "mu"`.
pub(crate) fn section_arg<'a>(name: &'a str, kind: &str) -> Result<&'a str> {
    match name.trim().split_once(char::is_whitespace) {
        Some((k, rest)) if k == kind && !rest.trim().is_empty() => Ok(rest.trim()),
        _ => Err(Error::parse(
            None,
            format!("unexpected section [{name}], expected [{kind} <ion>]"),
        )),
    }
}
