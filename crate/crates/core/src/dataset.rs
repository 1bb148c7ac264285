//! Titration datasets: theoretical vs measured concentration per step and ion.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use crate::error::{Error, Result};
use crate::tds::Composition;
use crate::units::{csv_reader, line_of, parse_f64, Header};

/// One ion's column pair across all titration steps (mmol/L).
#[derive(Debug, Clone, PartialEq)]
pub struct IonSeries {
    pub symbol: String,
    pub theoretical: Vec<f64>,
    pub measured: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Theoretical,
    Measured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TitrationDataset {
    steps: Vec<usize>,
    series: Vec<IonSeries>,
}

impl TitrationDataset {
    /// Validates and canonicalises (ions sorted by symbol).
    pub fn new(steps: Vec<usize>, mut series: Vec<IonSeries>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidDataset("no titration steps".into()));
        }
        if steps.windows(2).any(|w| w[0] >= w[1]) || steps[0] == 0 {
            return Err(Error::InvalidDataset(
                "step indices must be 1-based and strictly increasing".into(),
            ));
        }
        if series.is_empty() {
            return Err(Error::InvalidDataset("no ions".into()));
        }
        series.sort_by(|a, b| a.symbol.cmp(&b.symbol));
        if let Some(w) = series.windows(2).find(|w| w[0].symbol.eq_ignore_ascii_case(&w[1].symbol)) {
            return Err(Error::InvalidDataset(format!("ion {} listed twice", w[0].symbol)));
        }
        for s in &series {
            if s.theoretical.len() != steps.len() || s.measured.len() != steps.len() {
                return Err(Error::InvalidDataset(format!(
                    "ion {} is not present at every step",
                    s.symbol
                )));
            }
            let bad = |v: &f64| !(v.is_finite() && *v >= 0.0);
            if s.theoretical.iter().chain(&s.measured).any(bad) {
                return Err(Error::InvalidDataset(format!(
                    "ion {} has a negative or non-finite concentration",
                    s.symbol
                )));
            }
            if s.theoretical.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidDataset(format!(
                    "theoretical {} must increase strictly across steps",
                    s.symbol
                )));
            }
        }
        Ok(Self { steps, series })
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn series(&self) -> &[IonSeries] {
        &self.series
    }

    pub fn ion(&self, symbol: &str) -> Result<&IonSeries> {
        self.series
            .iter()
            .find(|s| s.symbol.eq_ignore_ascii_case(symbol))
            .ok_or_else(|| Error::MissingIon(symbol.to_string()))
    }

    pub fn ion_symbols(&self) -> impl Iterator<Item = &str> {
        self.series.iter().map(|s| s.symbol.as_str())
    }

    /// Position of a 1-based step index.
    pub fn position(&self, step: usize) -> Option<usize> {
        self.steps.iter().position(|&s| s == step)
    }

    /// Composition at position `i` from the chosen source.
    pub fn composition(&self, i: usize, source: Source) -> Composition {
        let mut comp = Composition::new();
        for s in &self.series {
            let v = match source {
                Source::Theoretical => s.theoretical[i],
                Source::Measured => s.measured[i],
            };
            comp.set(&s.symbol, v);
        }
        comp
    }

    /// Parses `step,ion,theoretical_<unit>,measured_<unit>` rows.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv_reader(input);
        let headers = reader.headers()?.clone();
        let header = Header::new(&headers);
        let step_col = header.plain("step")?;
        let ion_col = header.plain("ion")?;
        let (th_col, th_unit) = header.concentration("theoretical")?;
        let (me_col, me_unit) = header.concentration("measured")?;

        let mut cells: BTreeMap<String, BTreeMap<usize, (f64, f64)>> = BTreeMap::new();
        let mut display: BTreeMap<String, String> = BTreeMap::new();
        for record in reader.records() {
            let record = record?;
            let line = line_of(&record);
            let step: usize = record[step_col]
                .trim()
                .parse()
                .map_err(|_| Error::parse(line, format!("step `{}` is not a positive integer", &record[step_col])))?;
            let ion = record[ion_col].trim();
            if ion.is_empty() {
                return Err(Error::parse(line, "empty ion field"));
            }
            let th = th_unit.to_mmol_per_l(parse_f64(&record[th_col], "theoretical", line)?);
            let me = me_unit.to_mmol_per_l(parse_f64(&record[me_col], "measured", line)?);
            let key = ion.to_ascii_lowercase();
            display.entry(key.clone()).or_insert_with(|| ion.to_string());
            if cells.entry(key).or_default().insert(step, (th, me)).is_some() {
                return Err(Error::parse(line, format!("duplicate row for ion {ion} step {step}")));
            }
        }
        if cells.is_empty() {
            return Err(Error::parse(None, "titration file has no data rows"));
        }
        let steps: Vec<usize> = cells.values().next().map(|m| m.keys().copied().collect()).unwrap_or_default();
        let mut series = Vec::new();
        for (key, per_step) in cells {
            let symbol = display.remove(&key).unwrap_or(key);
            if per_step.keys().ne(steps.iter()) {
                return Err(Error::InvalidDataset(format!("ion {symbol} does not cover the same steps as the other ions")));
            }
            series.push(IonSeries {
                symbol,
                theoretical: per_step.values().map(|v| v.0).collect(),
                measured: per_step.values().map(|v| v.1).collect(),
            });
        }
        Self::new(steps, series)
    }

    /// Writes the canonical titration CSV (step-major rows).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,ion,theoretical_mmol_per_L,measured_mmol_per_L\n");
        for (i, step) in self.steps.iter().enumerate() {
            for s in &self.series {
                let _ = writeln!(out, "{step},{},{},{}", s.symbol, s.theoretical[i], s.measured[i]);
            }
        }
        out
    }
}
