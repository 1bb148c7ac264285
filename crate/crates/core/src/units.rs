//! Unit-suffixed CSV headers such as `theoretical_mmol_per_L`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConcentrationUnit {
    MolPerL,
    MmolPerL,
}

impl ConcentrationUnit {
    fn from_suffix(suffix: &str) -> Option<Self> {
        match suffix.to_ascii_lowercase().as_str() {
            "mol_per_l" => Some(Self::MolPerL),
            "mmol_per_l" => Some(Self::MmolPerL),
            _ => None,
        }
    }

    pub fn to_mmol_per_l(self, value: f64) -> f64 {
        match self {
            Self::MolPerL => value * 1000.0,
            Self::MmolPerL => value,
        }
    }

    pub fn to_mol_per_l(self, value: f64) -> f64 {
        match self {
            Self::MolPerL => value,
            Self::MmolPerL => value / 1000.0,
        }
    }
}

/// Column lookup over a CSV header record.
pub(crate) struct Header<'a> {
    names: Vec<&'a str>,
}

impl<'a> Header<'a> {
    pub fn new(record: &'a csv::StringRecord) -> Self {
        Self {
            names: record.iter().map(str::trim).collect(),
        }
    }

    /// Index of a column whose name is exactly `name` (no unit).
    pub fn plain(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::parse(Some(1), format!("missing column `{name}`")))
    }

    /// Index and unit of a concentration column `<base>_<unit>`.
    pub fn concentration(&self, base: &str) -> Result<(usize, ConcentrationUnit)> {
        let (idx, suffix) = self.suffixed(base)?;
        let unit = ConcentrationUnit::from_suffix(suffix).ok_or_else(|| {
            Error::parse(
                Some(1),
                format!("column `{}` has unsupported unit `{suffix}`, expected mol_per_L or mmol_per_L", self.names[idx]),
            )
        })?;
        Ok((idx, unit))
    }

    /// Index of a column `<base>_<unit>` where the unit must be one of `accepted`.
    pub fn with_unit(&self, base: &str, accepted: &[&str]) -> Result<usize> {
        let (idx, suffix) = self.suffixed(base)?;
        if accepted.iter().any(|a| a.eq_ignore_ascii_case(suffix)) {
            Ok(idx)
        } else {
            Err(Error::parse(
                Some(1),
                format!("column `{}` must be declared as {base}_{}", self.names[idx], accepted[0]),
            ))
        }
    }

    fn suffixed(&self, base: &str) -> Result<(usize, &'a str)> {
        let mut found = None;
        for (i, name) in self.names.iter().enumerate() {
            if name.eq_ignore_ascii_case(base) {
                return Err(Error::parse(
                    Some(1),
                    format!("ambiguous units: column `{name}` has no unit suffix"),
                ));
            }
            let Some((head, suffix)) = name.split_at_checked(base.len()) else {
                continue;
            };
            if head.eq_ignore_ascii_case(base) && suffix.starts_with('_') && suffix.len() > 1 {
                if found.is_some() {
                    return Err(Error::parse(
                        Some(1),
                        format!("ambiguous units: more than one `{base}_*` column"),
                    ));
                }
                found = Some((i, &suffix[1..]));
            }
        }
        found.ok_or_else(|| Error::parse(Some(1), format!("missing column `{base}_<unit>`")))
    }
}

pub(crate) fn csv_reader<R: std::io::Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(input)
}

pub(crate) fn parse_f64(field: &str, what: &str, line: Option<u64>) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("{what} `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("{what} `{field}` is not finite")));
    }
    Ok(v)
}

pub(crate) fn line_of(record: &csv::StringRecord) -> Option<u64> {
    record.position().map(|p| p.line())
}
