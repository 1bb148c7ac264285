//! Error, accuracy and interference-removal metrics over a train/test split.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Read;

use crate::dataset::{Source, TitrationDataset};
use crate::error::{Error, Result};
use crate::ions::IonRegistry;
use crate::mu::{fit_mu_log, fit_mu_quadratic, mu_targets, LogMuModel, MuModel, MuModelSet};
use crate::par;
use crate::tds::tds_series;
use crate::units::{csv_reader, line_of, parse_f64, Header};

/// `|c_t - c| / c_t × 100`.
pub fn percent_error(c_t: f64, c: f64) -> Result<f64> {
    if !(c_t > 0.0) {
        return Err(Error::ZeroTheoretical);
    }
    Ok((c_t - c).abs() / c_t * 100.0)
}

/// Partition of a dataset's steps into train and test columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    steps: Vec<usize>,
    test: BTreeSet<usize>,
}

impl SplitSpec {
    /// `steps` are all step indices in dataset order.
    pub fn new(steps: &[usize], test_columns: impl IntoIterator<Item = usize>) -> Result<Self> {
        let test: BTreeSet<usize> = test_columns.into_iter().collect();
        if let Some(bad) = test.iter().find(|t| !steps.contains(t)) {
            return Err(Error::InvalidSplit(format!("test column {bad} is not a dataset step")));
        }
        if test.is_empty() {
            return Err(Error::EmptyPartition("test"));
        }
        if test.len() == steps.len() {
            return Err(Error::EmptyPartition("training"));
        }
        Ok(Self {
            steps: steps.to_vec(),
            test,
        })
    }

    /// Test columns 5, 7 and 9.
    pub fn reference(steps: &[usize]) -> Result<Self> {
        Self::new(steps, [5, 7, 9])
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn is_test(&self, step: usize) -> bool {
        self.test.contains(&step)
    }

    pub fn test_columns(&self) -> &BTreeSet<usize> {
        &self.test
    }

    pub fn train_columns(&self) -> BTreeSet<usize> {
        self.steps.iter().copied().filter(|s| !self.test.contains(s)).collect()
    }

    fn positions(&self, test: bool) -> Vec<usize> {
        self.steps
            .iter()
            .enumerate()
            .filter(|(_, s)| self.test.contains(s) == test)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Mean accuracy (100 − mean |error|) per partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitAccuracy {
    pub train: f64,
    pub test: f64,
}

pub fn split_mean_accuracy(errors: &[f64], split: &SplitSpec) -> Result<SplitAccuracy> {
    if errors.len() != split.steps.len() {
        return Err(Error::LengthMismatch(errors.len(), split.steps.len()));
    }
    let mean = |positions: Vec<usize>, name: &'static str| -> Result<f64> {
        if positions.is_empty() {
            return Err(Error::EmptyPartition(name));
        }
        let n = positions.len() as f64;
        Ok(100.0 - positions.into_iter().map(|i| errors[i].abs()).sum::<f64>() / n)
    };
    Ok(SplitAccuracy {
        train: mean(split.positions(false), "training")?,
        test: mean(split.positions(true), "test")?,
    })
}

/// `100 × mean_c (raw_c − corrected_c) / raw_c` over the chosen step columns.
pub fn removal_percent(
    raw_errors: &[f64],
    corrected_errors: &[f64],
    steps: &[usize],
    columns: &BTreeSet<usize>,
) -> Result<f64> {
    if raw_errors.len() != corrected_errors.len() {
        return Err(Error::LengthMismatch(raw_errors.len(), corrected_errors.len()));
    }
    if raw_errors.len() != steps.len() {
        return Err(Error::LengthMismatch(raw_errors.len(), steps.len()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, step) in steps.iter().enumerate() {
        if !columns.contains(step) {
            continue;
        }
        let raw = raw_errors[i];
        if raw == 0.0 {
            return Err(Error::ZeroRawError(*step));
        }
        sum += (raw - corrected_errors[i]) / raw;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyPartition("removal"));
    }
    Ok(100.0 * sum / n as f64)
}

/// Removal percentages; `None` where a raw error on that partition is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Removal {
    pub train: Option<f64>,
    pub test: Option<f64>,
    pub all: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IonEvaluation {
    pub ion: String,
    pub model: MuModel,
    pub log_model: LogMuModel,
    /// TDS of the theoretical composition, mg/L, per step.
    pub tds: Vec<f64>,
    pub theoretical: Vec<f64>,
    pub raw: Vec<f64>,
    pub corrected: Vec<f64>,
    pub extrapolated: Vec<bool>,
    pub raw_errors: Vec<f64>,
    pub corrected_errors: Vec<f64>,
    pub raw_accuracy: SplitAccuracy,
    pub corrected_accuracy: SplitAccuracy,
    pub removal: Removal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub split: SplitSpec,
    pub ions: Vec<IonEvaluation>,
}

impl EvaluationReport {
    pub fn ion(&self, symbol: &str) -> Option<&IonEvaluation> {
        self.ions.iter().find(|e| e.ion.eq_ignore_ascii_case(symbol))
    }

    pub fn models(&self) -> MuModelSet {
        MuModelSet::new(self.ions.iter().map(|e| e.model.clone()).collect())
    }

    pub fn mean_quadratic_r_squared(&self) -> f64 {
        self.ions.iter().map(|e| e.model.r_squared).sum::<f64>() / self.ions.len() as f64
    }

    pub fn mean_log_r_squared(&self) -> f64 {
        self.ions.iter().map(|e| e.log_model.r_squared).sum::<f64>() / self.ions.len() as f64
    }

    /// Wide per-step error table: `ion,series,<step...>,average`.
    pub fn errors_csv(&self) -> String {
        let mut out = String::from("ion,series");
        for s in self.split.steps() {
            let _ = write!(out, ",{s}");
        }
        out.push_str(",average\n");
        for e in &self.ions {
            for (series, errors) in [("raw", &e.raw_errors), ("corrected", &e.corrected_errors)] {
                let _ = write!(out, "{},{series}", e.ion);
                for v in errors.iter() {
                    let _ = write!(out, ",{}", fmt4(*v));
                }
                let avg = errors.iter().sum::<f64>() / errors.len() as f64;
                let _ = writeln!(out, ",{}", fmt4(avg));
            }
        }
        out
    }

    /// `ion,series,train_accuracy_pct,test_accuracy_pct`
    pub fn accuracy_csv(&self) -> String {
        let mut out = String::from("ion,series,train_accuracy_pct,test_accuracy_pct\n");
        for e in &self.ions {
            for (series, acc) in [("raw", e.raw_accuracy), ("corrected", e.corrected_accuracy)] {
                let _ = writeln!(out, "{},{series},{},{}", e.ion, fmt4(acc.train), fmt4(acc.test));
            }
        }
        out
    }

    /// `ion,train_removal_pct,test_removal_pct,all_removal_pct`; empty cells
    /// where the raw error was zero.
    pub fn removal_csv(&self) -> String {
        let mut out = String::from("ion,train_removal_pct,test_removal_pct,all_removal_pct\n");
        let cell = |v: Option<f64>| v.map(fmt4).unwrap_or_default();
        for e in &self.ions {
            let r = e.removal;
            let _ = writeln!(out, "{},{},{},{}", e.ion, cell(r.train), cell(r.test), cell(r.all));
        }
        out
    }

    /// Per-ion plot data:
    /// `step,split,tds_mg_per_l,theoretical_mmol_per_L,raw_mmol_per_L,corrected_mmol_per_L,extrapolated`.
    pub fn plot_csv(&self, ion: &str) -> Option<String> {
        let e = self.ion(ion)?;
        let mut out = String::from(
            "step,split,tds_mg_per_l,theoretical_mmol_per_L,raw_mmol_per_L,corrected_mmol_per_L,extrapolated\n",
        );
        for (i, step) in self.split.steps().iter().enumerate() {
            let part = if self.split.is_test(*step) { "test" } else { "train" };
            let _ = writeln!(
                out,
                "{step},{part},{},{},{},{},{}",
                e.tds[i],
                e.theoretical[i],
                e.raw[i],
                e.corrected[i],
                u8::from(e.extrapolated[i])
            );
        }
        Some(out)
    }

    /// `ion,A,B,C,quadratic_r_squared,log_slope,log_intercept,log_r_squared`
    pub fn fits_csv(&self) -> String {
        let mut out = String::from("ion,A,B,C,quadratic_r_squared,log_slope,log_intercept,log_r_squared\n");
        for e in &self.ions {
            let (m, l) = (&e.model, &e.log_model);
            let _ = writeln!(
                out,
                "{},{:e},{:e},{},{},{},{},{}",
                e.ion, m.a, m.b, m.c, m.r_squared, l.slope, l.intercept, l.r_squared
            );
        }
        out
    }
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

/// Fits one μ model per ion on the training columns and scores every column.
pub fn evaluate(
    dataset: &TitrationDataset,
    split: &SplitSpec,
    registry: &IonRegistry,
) -> Result<EvaluationReport> {
    if split.steps() != dataset.steps() {
        return Err(Error::InvalidSplit("split does not match the dataset's steps".into()));
    }
    let tds: Vec<f64> = tds_series(dataset, Source::Theoretical, registry)?
        .into_iter()
        .map(|t| t.0)
        .collect();
    let symbols: Vec<&str> = dataset.ion_symbols().collect();
    let ions = par::map(&symbols, |ion| evaluate_ion(dataset, split, registry, ion, &tds))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        split: split.clone(),
        ions,
    })
}

/// Quadratic and log μ models per ion, fitted on the training columns only.
pub fn fit_split(
    dataset: &TitrationDataset,
    split: &SplitSpec,
    registry: &IonRegistry,
) -> Result<Vec<(MuModel, LogMuModel)>> {
    if split.steps() != dataset.steps() {
        return Err(Error::InvalidSplit("split does not match the dataset's steps".into()));
    }
    let symbols: Vec<&str> = dataset.ion_symbols().collect();
    par::map(&symbols, |ion| fit_ion(dataset, split, registry, ion))
        .into_iter()
        .collect()
}

fn fit_ion(
    dataset: &TitrationDataset,
    split: &SplitSpec,
    registry: &IonRegistry,
    ion: &str,
) -> Result<(MuModel, LogMuModel)> {
    let training: Vec<_> = mu_targets(dataset, ion, registry)?
        .into_iter()
        .filter(|p| !split.is_test(p.step_index))
        .collect();
    Ok((fit_mu_quadratic(ion, &training)?, fit_mu_log(&training)?))
}

fn evaluate_ion(
    dataset: &TitrationDataset,
    split: &SplitSpec,
    registry: &IonRegistry,
    ion: &str,
    tds: &[f64],
) -> Result<IonEvaluation> {
    let series = dataset.ion(ion)?;
    let (model, log_model) = fit_ion(dataset, split, registry, ion)?;

    let corrections: Vec<_> = tds
        .iter()
        .zip(&series.measured)
        .map(|(&t, &raw)| model.correct(t, raw))
        .collect();
    let corrected: Vec<f64> = corrections.iter().map(|c| c.value).collect();
    let raw_errors = errors(&series.theoretical, &series.measured)?;
    let corrected_errors = errors(&series.theoretical, &corrected)?;

    let steps = split.steps();
    let removal_over = |cols: &BTreeSet<usize>| match removal_percent(&raw_errors, &corrected_errors, steps, cols) {
        Ok(v) => Ok(Some(v)),
        Err(Error::ZeroRawError(_)) => Ok(None),
        Err(e) => Err(e),
    };
    let all: BTreeSet<usize> = steps.iter().copied().collect();
    let removal = Removal {
        train: removal_over(&split.train_columns())?,
        test: removal_over(split.test_columns())?,
        all: removal_over(&all)?,
    };

    Ok(IonEvaluation {
        ion: series.symbol.clone(),
        raw_accuracy: split_mean_accuracy(&raw_errors, split)?,
        corrected_accuracy: split_mean_accuracy(&corrected_errors, split)?,
        model,
        log_model,
        tds: tds.to_vec(),
        theoretical: series.theoretical.clone(),
        raw: series.measured.clone(),
        corrected,
        extrapolated: corrections.iter().map(|c| c.extrapolated).collect(),
        raw_errors,
        corrected_errors,
        removal,
    })
}

fn errors(theoretical: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    theoretical
        .iter()
        .zip(values)
        .map(|(&t, &v)| percent_error(t, v))
        .collect()
}

/// Previously published per-step error table: raw and corrected percent
/// error for each ion, aligned to `steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub steps: Vec<usize>,
    pub ions: Vec<(String, Vec<f64>, Vec<f64>)>,
}

impl ErrorTable {
    /// Parses `ion,step,raw_error_pct,corrected_error_pct`.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv_reader(input);
        let headers = reader.headers()?.clone();
        let header = Header::new(&headers);
        let ion_col = header.plain("ion")?;
        let step_col = header.plain("step")?;
        let raw_col = header.with_unit("raw_error", &["pct"])?;
        let cor_col = header.with_unit("corrected_error", &["pct"])?;
        let mut rows: Vec<(String, usize, f64, f64)> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = line_of(&record);
            let step = record[step_col]
                .trim()
                .parse()
                .map_err(|_| Error::parse(line, "step is not an integer"))?;
            rows.push((
                record[ion_col].trim().to_string(),
                step,
                parse_f64(&record[raw_col], "raw error", line)?,
                parse_f64(&record[cor_col], "corrected error", line)?,
            ));
        }
        let mut steps: Vec<usize> = rows.iter().map(|r| r.1).collect();
        steps.sort_unstable();
        steps.dedup();
        let mut ions: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
        for (ion, step, raw, cor) in rows {
            let pos = steps.binary_search(&step).unwrap_or_default();
            let idx = match ions.iter().position(|(s, _, _)| *s == ion) {
                Some(i) => i,
                None => {
                    ions.push((ion, vec![f64::NAN; steps.len()], vec![f64::NAN; steps.len()]));
                    ions.len() - 1
                }
            };
            ions[idx].1[pos] = raw;
            ions[idx].2[pos] = cor;
        }
        if ions.iter().any(|(_, r, c)| r.iter().chain(c).any(|v| v.is_nan())) {
            return Err(Error::InvalidDataset("error table is missing cells".into()));
        }
        Ok(Self { steps, ions })
    }

    pub fn ion(&self, symbol: &str) -> Option<(&[f64], &[f64])> {
        self.ions
            .iter()
            .find(|(s, _, _)| s.eq_ignore_ascii_case(symbol))
            .map(|(_, r, c)| (r.as_slice(), c.as_slice()))
    }
}
