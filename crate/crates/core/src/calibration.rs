//! Voltage → concentration calibration curves.
//!
//! Two models are fitted from buffer measurements:
//!
//! * linear in `exp(volt)`: `C = alpha * exp(V) + beta` (the vendor recipe);
//! * double exponential: `C = alpha' * exp(beta' * exp(V))`, fitted as a line
//!   of `ln C` against `exp(V)`.
//!
//! Buffer concentrations are in mol/L.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;


use crate::error::{Error, Result};
use crate::regression::{self, fit_line, fitted_r_squared};
use crate::units::{csv_reader, line_of, parse_f64, Header};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    /// mol/L
    pub concentration: f64,
    /// V
    pub voltage: f64,
}

impl CalibrationPoint {
    pub fn new(concentration: f64, voltage: f64) -> Result<Self> {
        if !(concentration.is_finite() && concentration > 0.0) {
            return Err(Error::NonPositiveConcentration(concentration));
        }
        if !voltage.is_finite() {
            return Err(Error::parse(None, format!("voltage {voltage} is not finite")));
        }
        Ok(Self {
            concentration,
            voltage,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearCalibration {
    pub alpha: f64,
    pub beta: f64,
    pub r_squared: f64,
}

impl LinearCalibration {
    /// mol/L; may be negative.
    pub fn predict(&self, voltage: f64) -> f64 {
        self.alpha * voltage.exp() + self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpCalibration {
    pub alpha_prime: f64,
    pub beta_prime: f64,
    /// R² of `ln C` against `exp(V)`, the regression's own scale.
    pub r_squared: f64,
    /// R² of the back-transformed prediction on the concentration scale.
    pub r_squared_linear: f64,
}

impl ExpCalibration {
    /// mol/L; always positive.
    pub fn predict(&self, voltage: f64) -> f64 {
        self.alpha_prime * (self.beta_prime * voltage.exp()).exp()
    }
}

fn check_points(points: &[CalibrationPoint]) -> Result<(Vec<f64>, Vec<f64>)> {
    if points.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: points.len(),
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.voltage.exp()).collect();
    if regression::distinct_count(&x) < 2 {
        return Err(Error::DegenerateDesign("all buffer voltages are equal".into()));
    }
    let c: Vec<f64> = points.iter().map(|p| p.concentration).collect();
    Ok((x, c))
}

/// OLS of concentration on `exp(voltage)`.
pub fn fit_linear_calibration(points: &[CalibrationPoint]) -> Result<LinearCalibration> {
    let (x, c) = check_points(points)?;
    let line = fit_line(&x, &c)?;
    let predicted: Vec<f64> = x.iter().map(|&v| line.eval(v)).collect();
    Ok(LinearCalibration {
        alpha: line.slope,
        beta: line.intercept,
        r_squared: fitted_r_squared(&predicted, &c),
    })
}

/// OLS of `ln(concentration)` on `exp(voltage)`; slope is β′, intercept ln α′.
pub fn fit_exp_calibration(points: &[CalibrationPoint]) -> Result<ExpCalibration> {
    if let Some(p) = points.iter().find(|p| !(p.concentration > 0.0)) {
        return Err(Error::NonPositiveConcentration(p.concentration));
    }
    let (x, c) = check_points(points)?;
    let ln_c: Vec<f64> = c.iter().map(|v| v.ln()).collect();
    let line = fit_line(&x, &ln_c)?;
    let ln_pred: Vec<f64> = x.iter().map(|&v| line.eval(v)).collect();
    let pred: Vec<f64> = ln_pred.iter().map(|v| v.exp()).collect();
    Ok(ExpCalibration {
        alpha_prime: line.intercept.exp(),
        beta_prime: line.slope,
        r_squared: fitted_r_squared(&ln_pred, &ln_c),
        r_squared_linear: fitted_r_squared(&pred, &c),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMethod {
    Linear,
    Exp,
}

impl CalibrationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Exp => "exp",
        }
    }
}

impl std::str::FromStr for CalibrationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear),
            "exp" | "exponential" => Ok(Self::Exp),
            other => Err(Error::parse(None, format!("unknown calibration method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationModel {
    Linear(LinearCalibration),
    Exp(ExpCalibration),
}

/// A calibrated reading in mol/L. `negative` is set when a linear model
/// extrapolates below zero; the value is still reported as computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedReading {
    pub mol_per_l: f64,
    pub negative: bool,
}

impl CalibrationModel {
    pub fn fit(method: CalibrationMethod, points: &[CalibrationPoint]) -> Result<Self> {
        Ok(match method {
            CalibrationMethod::Linear => Self::Linear(fit_linear_calibration(points)?),
            CalibrationMethod::Exp => Self::Exp(fit_exp_calibration(points)?),
        })
    }

    pub fn method(&self) -> CalibrationMethod {
        match self {
            Self::Linear(_) => CalibrationMethod::Linear,
            Self::Exp(_) => CalibrationMethod::Exp,
        }
    }

    pub fn r_squared(&self) -> f64 {
        match self {
            Self::Linear(m) => m.r_squared,
            Self::Exp(m) => m.r_squared,
        }
    }
}

pub fn predict_concentration(model: &CalibrationModel, voltage: f64) -> CalibratedReading {
    let mol_per_l = match model {
        CalibrationModel::Linear(m) => m.predict(voltage),
        CalibrationModel::Exp(m) => m.predict(voltage),
    };
    CalibratedReading {
        mol_per_l,
        negative: mol_per_l < 0.0,
    }
}

/// Buffer points grouped per ion, in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationSet {
    pub ions: Vec<(String, Vec<CalibrationPoint>)>,
}

impl CalibrationSet {
    /// Parses `ion,concentration_<unit>,voltage_V` rows.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv_reader(input);
        let headers = reader.headers()?.clone();
        let header = Header::new(&headers);
        let ion_col = header.plain("ion")?;
        let (conc_col, unit) = header.concentration("concentration")?;
        let volt_col = header.with_unit("voltage", &["V"])?;

        let mut set = Self::default();
        for record in reader.records() {
            let record = record?;
            let line = line_of(&record);
            let ion = record.get(ion_col).unwrap_or("").trim();
            if ion.is_empty() {
                return Err(Error::parse(line, "empty ion field"));
            }
            let conc = unit.to_mol_per_l(parse_f64(&record[conc_col], "concentration", line)?);
            let volt = parse_f64(&record[volt_col], "voltage", line)?;
            let point = CalibrationPoint::new(conc, volt).map_err(|e| {
                Error::parse(line, format!("ion {ion}: {e}"))
            })?;
            match set.ions.iter_mut().find(|(s, _)| s == ion) {
                Some((_, pts)) => pts.push(point),
                None => set.ions.push((ion.to_string(), vec![point])),
            }
        }
        if set.ions.is_empty() {
            return Err(Error::parse(None, "calibration file has no data rows"));
        }
        Ok(set)
    }

    pub fn points(&self, ion: &str) -> Option<&[CalibrationPoint]> {
        self.ions
            .iter()
            .find(|(s, _)| s.eq_ignore_ascii_case(ion))
            .map(|(_, p)| p.as_slice())
    }

    /// Collapses repeated readings of the same buffer into their mean voltage.
    pub fn averaged(&self) -> Self {
        let ions = self
            .ions
            .iter()
            .map(|(ion, points)| {
                let mut groups: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
                let mut order = Vec::new();
                for p in points {
                    let key = p.concentration.to_bits();
                    let entry = groups.entry(key).or_insert_with(|| {
                        order.push(key);
                        (p.concentration, 0.0, 0)
                    });
                    entry.1 += p.voltage;
                    entry.2 += 1;
                }
                let averaged = order
                    .into_iter()
                    .map(|k| {
                        let (c, sum, n) = groups[&k];
                        CalibrationPoint {
                            concentration: c,
                            voltage: sum / n as f64,
                        }
                    })
                    .collect();
                (ion.clone(), averaged)
            })
            .collect();
        Self { ions }
    }
}

/// Serialises per-ion calibrations as `[calibration <ion>]` sections.
pub fn write_calibration_models(models: &[(String, CalibrationModel)]) -> String {
    let mut out = String::new();
    for (i, (ion, model)) in models.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "[calibration {ion}]");
        let _ = writeln!(out, "method = {}", model.method().as_str());
        match model {
            CalibrationModel::Linear(m) => {
                let _ = writeln!(out, "alpha = {}", crate::fmt_exact(m.alpha));
                let _ = writeln!(out, "beta = {}", crate::fmt_exact(m.beta));
                let _ = writeln!(out, "r_squared = {}", crate::fmt_exact(m.r_squared));
            }
            CalibrationModel::Exp(m) => {
                let _ = writeln!(out, "alpha = {}", crate::fmt_exact(m.alpha_prime));
                let _ = writeln!(out, "beta = {}", crate::fmt_exact(m.beta_prime));
                let _ = writeln!(out, "r_squared = {}", crate::fmt_exact(m.r_squared));
                let _ = writeln!(out, "r_squared_linear = {}", crate::fmt_exact(m.r_squared_linear));
            }
        }
    }
    out
}

pub fn read_calibration_models(text: &str) -> Result<Vec<(String, CalibrationModel)>> {
    let ini = crate::load_ini(text).map_err(|e| Error::parse(None, e.to_string()))?;
    let mut models = Vec::new();
    for (section, props) in ini.iter() {
        let Some(name) = section else { continue };
        let ion = crate::section_arg(name, "calibration")?;
        let get = |key: &str| -> Result<f64> {
            let v = props
                .get(key)
                .ok_or_else(|| Error::parse(None, format!("[calibration {ion}] missing `{key}`")))?;
            parse_f64(v, key, None)
        };
        let method: CalibrationMethod = props
            .get("method")
            .ok_or_else(|| Error::parse(None, format!("[calibration {ion}] missing `method`")))?
            .parse()?;
        let model = match method {
            CalibrationMethod::Linear => CalibrationModel::Linear(LinearCalibration {
                alpha: get("alpha")?,
                beta: get("beta")?,
                r_squared: get("r_squared")?,
            }),
            CalibrationMethod::Exp => CalibrationModel::Exp(ExpCalibration {
                alpha_prime: get("alpha")?,
                beta_prime: get("beta")?,
                r_squared: get("r_squared")?,
                r_squared_linear: get("r_squared_linear")?,
            }),
        };
        if models.iter().any(|(s, _): &(String, CalibrationModel)| s.eq_ignore_ascii_case(ion)) {
            return Err(Error::parse(None, format!("duplicate section [calibration {ion}]")));
        }
        models.push((ion.to_string(), model));
    }
    Ok(models)
}
