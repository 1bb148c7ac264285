//! Record-at-a-time and batch application of μ models.
//!
//! Stream protocol, one record per line:
//! `<epoch_ms>,<ion>,<raw_mmol_per_L>,<tds_mg_per_l>` in, the same fields
//! followed by `,<corrected_mmol_per_L>,<extrapolated:0|1>` out.

use std::fmt::Write as _;
use std::io::{self, BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::mu::{Correction, MuModelSet};
use crate::par;
use crate::units::{line_of, parse_f64, Header};

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub epoch_ms: i64,
    pub ion: String,
    /// mmol/L
    pub raw: f64,
    /// mg/L
    pub tds: f64,
}

/// Parses one stream line (without trailing newline).
pub fn parse_record(line: &str) -> Result<Record> {
    let mut fields = line.split(',');
    let mut next = |what: &str| {
        fields
            .next()
            .map(str::trim)
            .filter(|f| !f.is_empty())
            .ok_or_else(|| Error::parse(None, format!("missing {what}")))
    };
    let epoch = next("epoch_ms")?;
    let ion = next("ion")?;
    let raw = next("raw concentration")?;
    let tds = next("tds")?;
    if fields.next().is_some() {
        return Err(Error::parse(None, "expected 4 fields"));
    }
    let record = Record {
        epoch_ms: epoch
            .parse()
            .map_err(|_| Error::parse(None, format!("epoch_ms `{epoch}` is not an integer")))?,
        ion: ion.to_string(),
        raw: parse_f64(raw, "raw concentration", None)?,
        tds: parse_f64(tds, "tds", None)?,
    };
    validate(&record)?;
    Ok(record)
}

fn validate(r: &Record) -> Result<()> {
    if r.raw < 0.0 {
        return Err(Error::parse(None, format!("raw concentration {} is negative", r.raw)));
    }
    if r.tds < 0.0 {
        return Err(Error::parse(None, format!("tds {} is negative", r.tds)));
    }
    Ok(())
}

pub fn correct_record(models: &MuModelSet, record: &Record) -> Result<Correction> {
    let model = models
        .get(&record.ion)
        .ok_or_else(|| Error::UnknownIon(record.ion.clone()))?;
    Ok(model.correct(record.tds, record.raw))
}

/// Counters from a stream run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub lines: u64,
    pub corrected: u64,
    pub rejected: u64,
}

/// Corrects line-delimited records from `input`, writing one output line per
/// well-formed input line and flushing after each. Malformed lines and
/// unknown ions are reported on `diagnostics` and skipped; blank lines are
/// ignored. Buffers are reused, so memory does not grow with input length.
pub fn correct_stream<R, W, D>(
    models: &MuModelSet,
    mut input: R,
    mut output: W,
    mut diagnostics: D,
) -> io::Result<StreamStats>
where
    R: BufRead,
    W: Write,
    D: Write,
{
    let mut stats = StreamStats::default();
    let mut line = String::new();
    let mut out = String::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        stats.lines += 1;
        let text = line.trim_end_matches(['\n', '\r']);
        if text.trim().is_empty() {
            continue;
        }
        let result = parse_record(text).and_then(|r| correct_record(models, &r));
        match result {
            Ok(c) => {
                out.clear();
                let _ = write!(out, "{},{},{}", text.trim(), c.value, u8::from(c.extrapolated));
                out.push('\n');
                output.write_all(out.as_bytes())?;
                output.flush()?;
                stats.corrected += 1;
            }
            Err(e) => {
                stats.rejected += 1;
                writeln!(diagnostics, "line {}: {e}: `{}`", stats.lines, text.trim())?;
            }
        }
    }
    Ok(stats)
}

/// Batch CSV input: `timestamp_ms,ion,raw_<unit>,tds_mg_per_l`.
/// Returns the well-formed records and one diagnostic per rejected row.
pub fn read_batch<R: Read>(input: R) -> Result<(Vec<Record>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let header = Header::new(&headers);
    let ts_col = header.with_unit("timestamp", &["ms"])?;
    let ion_col = header.plain("ion")?;
    let (raw_col, raw_unit) = header.concentration("raw")?;
    let tds_col = header.with_unit("tds", &["mg_per_l"])?;
    let width = headers.len();

    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                diagnostics.push(e.to_string());
                continue;
            }
        };
        let line = line_of(&row);
        let parsed = (|| -> Result<Record> {
            if row.len() != width {
                return Err(Error::parse(line, format!("expected {width} fields, got {}", row.len())));
            }
            let ts = row[ts_col].trim();
            let record = Record {
                epoch_ms: ts
                    .parse()
                    .map_err(|_| Error::parse(line, format!("timestamp `{ts}` is not an integer")))?,
                ion: row[ion_col].trim().to_string(),
                raw: raw_unit.to_mmol_per_l(parse_f64(&row[raw_col], "raw", line)?),
                tds: parse_f64(&row[tds_col], "tds", line)?,
            };
            if record.ion.is_empty() {
                return Err(Error::parse(line, "empty ion field"));
            }
            validate(&record).map_err(|e| Error::parse(line, e.to_string()))?;
            Ok(record)
        })();
        match parsed {
            Ok(r) => records.push(r),
            Err(e) => diagnostics.push(e.to_string()),
        }
    }
    Ok((records, diagnostics))
}

/// Corrects every record, in parallel when enabled.
pub fn correct_batch(models: &MuModelSet, records: &[Record]) -> Vec<Result<Correction>> {
    par::map(records, |r| correct_record(models, r))
}

/// Sequential counterpart of [`correct_batch`].
pub fn correct_batch_sequential(models: &MuModelSet, records: &[Record]) -> Vec<Result<Correction>> {
    par::map_sequential(records, |r| correct_record(models, r))
}

/// Writes corrected batch output; records whose correction failed are skipped
/// and returned as diagnostics.
pub fn write_batch<W: Write>(
    records: &[Record],
    corrections: &[Result<Correction>],
    mut output: W,
) -> io::Result<Vec<String>> {
    let mut diagnostics = Vec::new();
    writeln!(
        output,
        "timestamp_ms,ion,raw_mmol_per_L,tds_mg_per_l,corrected_mmol_per_L,extrapolated"
    )?;
    for (r, c) in records.iter().zip(corrections) {
        match c {
            Ok(c) => writeln!(
                output,
                "{},{},{},{},{},{}",
                r.epoch_ms,
                r.ion,
                r.raw,
                r.tds,
                c.value,
                u8::from(c.extrapolated)
            )?,
            Err(e) => diagnostics.push(format!("record at {} ms ({}): {e}", r.epoch_ms, r.ion)),
        }
    }
    output.flush()?;
    Ok(diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mu::MuModel;

    fn identity() -> MuModelSet {
        MuModelSet::new(vec![MuModel::identity("K", 0.0, 1e6), MuModel::identity("NO3", 0.0, 1e6)])
    }

    fn run(models: &MuModelSet, input: &str) -> (String, String, StreamStats) {
        let mut out = Vec::new();
        let mut diag = Vec::new();
        let stats = correct_stream(models, input.as_bytes(), &mut out, &mut diag).unwrap();
        (String::from_utf8(out).unwrap(), String::from_utf8(diag).unwrap(), stats)
    }

    #[test]
    fn parse_lines() {
        let r = parse_record("1700000000000,K,17.55282,1784.6").unwrap();
        assert_eq!(r, Record { epoch_ms: 1_700_000_000_000, ion: "K".into(), raw: 17.55282, tds: 1784.6 });
        for bad in ["", "1,K,1", "1,K,1,2,3", "x,K,1,2", "1,K,abc,2", "1,,1,2", "1,K,-1,2", "1,K,1,NaN", "1,K,1,-5"] {
            assert!(parse_record(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn identity_model_echoes_values() {
        let (out, diag, stats) = run(&identity(), "1,K,4.5,900\n2,NO3,12.25,1500\n");
        assert_eq!(out, "1,K,4.5,900,4.5,0\n2,NO3,12.25,1500,12.25,0\n");
        assert!(diag.is_empty());
        assert_eq!(stats, StreamStats { lines: 2, corrected: 2, rejected: 0 });
    }

    #[test]
    fn bad_lines_are_skipped_with_diagnostics() {
        let (out, diag, stats) = run(&identity(), "1,Xx,4.5,900\ngarbage\n\n3,K,1,2e7\r\n");
        assert_eq!(out, "3,K,1,2e7,1,1\n");
        assert_eq!(stats.rejected, 2);
        assert!(diag.contains("line 1: unknown ion `Xx`"), "{diag}");
        assert!(diag.contains("line 2"), "{diag}");
    }

    #[test]
    fn batch_round() {
        let csv = "timestamp_ms,ion,raw_mol_per_L,tds_mg_per_l\n1,K,0.0045,900\n2,Xx,0.001,900\n3,K,oops,900\n4,NO3,0.002,10\n";
        let (records, diags) = read_batch(csv.as_bytes()).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(diags.len(), 1);
        assert_eq!(records[0].raw, 4.5);
        let corrections = correct_batch(&identity(), &records);
        assert_eq!(corrections, correct_batch_sequential(&identity(), &records));
        let mut out = Vec::new();
        let diags = write_batch(&records, &corrections, &mut out).unwrap();
        assert_eq!(diags.len(), 1);
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(1).unwrap().ends_with(",4.5,0"));

        assert!(read_batch("timestamp_ms,ion,raw,tds_mg_per_l\n".as_bytes()).is_err());
    }
}
