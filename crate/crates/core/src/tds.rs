//! Total dissolved solids as Σ molar mass × molarity.

use std::collections::BTreeMap;

use crate::dataset::{Source, TitrationDataset};
use crate::error::{Error, Result};
use crate::ions::IonRegistry;

/// Ion symbol → concentration in mmol/L.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Composition {
    entries: BTreeMap<String, f64>,
}

impl Composition {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        let mut c = Self::new();
        for (ion, v) in pairs {
            c.set(ion, v);
        }
        c
    }

    pub fn set(&mut self, ion: &str, mmol_per_l: f64) {
        self.entries.insert(ion.to_string(), mmol_per_l);
    }

    pub fn get(&self, ion: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(ion))
            .map(|(_, v)| *v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), v * factor)).collect(),
        }
    }
}

/// TDS in mg/L.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct TdsValue(pub f64);

impl TdsValue {
    pub fn mg_per_l(self) -> f64 {
        self.0
    }
}

/// mmol/L × g/mol = mg/L, summed over the composition.
pub fn tds_mg_per_l(composition: &Composition, registry: &IonRegistry) -> Result<TdsValue> {
    let mut total = 0.0;
    for (ion, c) in composition.iter() {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::NonPositiveConcentration(c));
        }
        total += registry.get(ion)?.molar_mass() * c;
    }
    Ok(TdsValue(total))
}

/// One TDS value per titration step.
pub fn tds_series(
    dataset: &TitrationDataset,
    source: Source,
    registry: &IonRegistry,
) -> Result<Vec<TdsValue>> {
    (0..dataset.len())
        .map(|i| tds_mg_per_l(&dataset.composition(i, source), registry))
        .collect()
}
