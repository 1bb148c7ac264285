//! `ionfix` command-line interface.
//!
//! Exit codes: 0 success, 2 input or parse error, 3 fit or numerical failure.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use ionfix::calibration::write_calibration_models;
use ionfix::stream::{correct_batch, correct_stream, read_batch, write_batch};
use ionfix::{
    evaluate, fit_exp_calibration, fit_linear_calibration, fit_split, CalibrationMethod, CalibrationModel,
    CalibrationSet, Error, IonRegistry, MuModelSet, Scenario, SplitSpec, TitrationDataset,
};
use log::{info, warn};

#[derive(Debug, Parser)]
#[command(name = "ionfix", version, about = "ISE calibration and TDS-keyed interference correction")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    /// INI file with `[ion <symbol>]` sections overriding or extending the ion registry.
    #[arg(long, global = true, value_name = "INI")]
    registry: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit voltage → concentration curves from buffer readings.
    Calibrate {
        /// CSV with `ion,concentration_<unit>,voltage_V`.
        #[arg(long)]
        buffers: PathBuf,
        #[arg(long, default_value = "exp", value_parser = parse_method)]
        method: CalibrationMethod,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
        /// Average repeated readings of the same buffer before fitting.
        #[arg(long)]
        average_repeats: bool,
        /// Only these ions (comma separated).
        #[arg(long, value_delimiter = ',')]
        ion: Vec<String>,
    },
    /// Fit μ(TDS) correction models on the training columns of a titration.
    FitMu {
        /// CSV with `step,ion,theoretical_<unit>,measured_<unit>`.
        #[arg(long)]
        titration: PathBuf,
        /// Steps held out for testing.
        #[arg(long, value_delimiter = ',', default_value = "5,7,9")]
        test: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        ion: Vec<String>,
    },
    /// Apply μ models to raw readings.
    Correct {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "stream")]
        mode: Mode,
        /// Defaults to standard input.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Defaults to standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit, correct and score a titration; write report CSVs.
    Evaluate {
        #[arg(long)]
        titration: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "5,7,9")]
        test: Vec<usize>,
        #[arg(long)]
        report_dir: PathBuf,
        #[arg(long, value_delimiter = ',')]
        ion: Vec<String>,
    },
    /// Generate a synthetic titration from a scenario file.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Batch,
    Stream,
}

fn parse_method(s: &str) -> Result<CalibrationMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn from_error(context: impl std::fmt::Display, e: Error) -> Self {
        let code = if e.is_input_error() || matches!(e, Error::InvalidSplit(_)) { 2 } else { 3 };
        Self { code, message: format!("{context}: {e}") }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let registry = match &cli.registry {
        Some(p) => {
            require_file(p)?;
            IonRegistry::from_override_file(p).map_err(|e| Failure::from_error(p.display(), e))?
        }
        None => IonRegistry::default(),
    };
    match cli.command {
        Command::Calibrate { buffers, method, out, average_repeats, ion } => {
            calibrate(&buffers, method, &out, average_repeats, &ion)
        }
        Command::FitMu { titration, test, out, ion } => fit_mu(&titration, &test, &out, &ion, &registry),
        Command::Correct { model, mode, input, output } => correct(&model, mode, input.as_deref(), output.as_deref()),
        Command::Evaluate { titration, test, report_dir, ion } => {
            evaluate_cmd(&titration, &test, &report_dir, &ion, &registry)
        }
        Command::Simulate { scenario, out } => simulate(&scenario, &out, &registry),
    }
}

fn require_file(path: &Path) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::input(format!("{}: no such file", path.display())))
    }
}

fn require_writable(path: &Path) -> Outcome {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            Err(Failure::input(format!("{}: directory does not exist", dir.display())))
        }
        _ => Ok(()),
    }
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Outcome {
    fs::write(path, contents).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn selected(filter: &[String], ion: &str) -> bool {
    filter.is_empty() || filter.iter().any(|f| f.eq_ignore_ascii_case(ion))
}

fn check_filter<'a>(filter: &[String], available: impl Iterator<Item = &'a str>) -> Outcome {
    let available: Vec<&str> = available.collect();
    for f in filter {
        if !available.iter().any(|a| a.eq_ignore_ascii_case(f)) {
            return Err(Failure::input(format!("ion {f} is not in the input")));
        }
    }
    Ok(())
}

fn calibrate(buffers: &Path, method: CalibrationMethod, out: &Path, average: bool, filter: &[String]) -> Outcome {
    require_file(buffers)?;
    require_writable(out)?;
    let mut set = CalibrationSet::from_csv(open(buffers)?).map_err(|e| Failure::from_error(buffers.display(), e))?;
    if average {
        set = set.averaged();
    }
    check_filter(filter, set.ions.iter().map(|(s, _)| s.as_str()))?;

    let mut models = Vec::new();
    println!("{:<8} {:>4} {:>12} {:>12} {:>16}", "ion", "n", "linear_R2", "exp_R2", "exp_R2_linscale");
    for (ion, points) in set.ions.iter().filter(|(s, _)| selected(filter, s)) {
        let fail = |e| Failure::from_error(format!("ion {ion}"), e);
        let lin = fit_linear_calibration(points).map_err(fail)?;
        let exp = fit_exp_calibration(points).map_err(fail)?;
        println!(
            "{ion:<8} {:>4} {:>12.4} {:>12.4} {:>16.4}",
            points.len(),
            lin.r_squared,
            exp.r_squared,
            exp.r_squared_linear
        );
        let model = match method {
            CalibrationMethod::Linear => CalibrationModel::Linear(lin),
            CalibrationMethod::Exp => CalibrationModel::Exp(exp),
        };
        models.push((ion.clone(), model));
    }
    write_file(out, &write_calibration_models(&models))
}

fn load_titration(path: &Path) -> Result<TitrationDataset, Failure> {
    require_file(path)?;
    TitrationDataset::from_csv(open(path)?).map_err(|e| Failure::from_error(path.display(), e))
}

fn split_for(dataset: &TitrationDataset, test: &[usize]) -> Result<SplitSpec, Failure> {
    SplitSpec::new(dataset.steps(), test.iter().copied()).map_err(|e| Failure::from_error("split", e))
}

fn fit_mu(titration: &Path, test: &[usize], out: &Path, filter: &[String], registry: &IonRegistry) -> Outcome {
    require_writable(out)?;
    let dataset = load_titration(titration)?;
    check_filter(filter, dataset.ion_symbols())?;
    let split = split_for(&dataset, test)?;
    let fits: Vec<_> = fit_split(&dataset, &split, registry)
        .map_err(|e| Failure::from_error("fit", e))?
        .into_iter()
        .filter(|(m, _)| selected(filter, &m.ion))
        .collect();

    println!("{:<8} {:>14} {:>14} {:>14} {:>12} {:>10}", "ion", "A", "B", "C", "quad_R2", "log_R2");
    for (m, l) in &fits {
        println!(
            "{:<8} {:>14.4e} {:>14.4e} {:>14.6} {:>12.4} {:>10.4}",
            m.ion, m.a, m.b, m.c, m.r_squared, l.r_squared
        );
    }
    let n = fits.len() as f64;
    let quad = fits.iter().map(|(m, _)| m.r_squared).sum::<f64>() / n;
    let log = fits.iter().map(|(_, l)| l.r_squared).sum::<f64>() / n;
    println!("mean R2: quadratic {quad:.5}, log {log:.5}");

    let set = MuModelSet::new(fits.into_iter().map(|(m, _)| m).collect());
    write_file(out, &set.to_ini())
}

fn load_models(path: &Path) -> Result<MuModelSet, Failure> {
    require_file(path)?;
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    MuModelSet::from_ini(&text).map_err(|e| Failure::from_error(path.display(), e))
}

fn correct(model: &Path, mode: Mode, input: Option<&Path>, output: Option<&Path>) -> Outcome {
    if let Some(p) = input {
        require_file(p)?;
    }
    if let Some(p) = output {
        require_writable(p)?;
    }
    let models = load_models(model)?;
    let reader: Box<dyn BufRead> = match input {
        Some(p) => Box::new(BufReader::new(open(p)?)),
        None => Box::new(io::stdin().lock()),
    };
    let writer: Box<dyn Write> = match output {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    let io_fail = |e: io::Error| Failure::input(format!("i/o: {e}"));

    let rejected = match mode {
        Mode::Stream => {
            let stats = correct_stream(&models, reader, writer, io::stderr().lock()).map_err(io_fail)?;
            info!("{} lines, {} corrected, {} rejected", stats.lines, stats.corrected, stats.rejected);
            stats.rejected
        }
        Mode::Batch => batch(&models, reader, writer).map_err(|e| match e {
            Error::Io(m) => Failure::input(format!("i/o: {m}")),
            e => Failure::from_error("batch input", e),
        })?,
    };
    if rejected > 0 {
        return Err(Failure::input(format!("{rejected} record(s) skipped")));
    }
    Ok(())
}

fn batch(models: &MuModelSet, reader: impl Read, writer: impl Write) -> ionfix::Result<u64> {
    let (records, mut diagnostics) = read_batch(reader)?;
    let corrections = correct_batch(models, &records);
    diagnostics.extend(write_batch(&records, &corrections, writer)?);
    for d in &diagnostics {
        eprintln!("{d}");
    }
    info!("{} records, {} skipped", records.len(), diagnostics.len());
    Ok(diagnostics.len() as u64)
}

fn evaluate_cmd(
    titration: &Path,
    test: &[usize],
    report_dir: &Path,
    filter: &[String],
    registry: &IonRegistry,
) -> Outcome {
    let dataset = load_titration(titration)?;
    check_filter(filter, dataset.ion_symbols())?;
    let split = split_for(&dataset, test)?;
    let mut report = evaluate(&dataset, &split, registry).map_err(|e| Failure::from_error("evaluate", e))?;
    report.ions.retain(|e| selected(filter, &e.ion));

    fs::create_dir_all(report_dir).map_err(|e| Failure::input(format!("{}: {e}", report_dir.display())))?;
    write_file(&report_dir.join("errors.csv"), &report.errors_csv())?;
    write_file(&report_dir.join("accuracy.csv"), &report.accuracy_csv())?;
    write_file(&report_dir.join("removal.csv"), &report.removal_csv())?;
    write_file(&report_dir.join("fits.csv"), &report.fits_csv())?;
    write_file(&report_dir.join("mu_models.ini"), &report.models().to_ini())?;
    for e in &report.ions {
        if let Some(csv) = report.plot_csv(&e.ion) {
            write_file(&report_dir.join(format!("plot_{}.csv", e.ion)), &csv)?;
        }
    }

    println!("{:<8} {:>10} {:>10} {:>10} {:>10}", "ion", "raw_train", "raw_test", "cor_train", "cor_test");
    for e in &report.ions {
        println!(
            "{:<8} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            e.ion, e.raw_accuracy.train, e.raw_accuracy.test, e.corrected_accuracy.train, e.corrected_accuracy.test
        );
        if e.extrapolated.iter().any(|x| *x) {
            warn!("{}: some steps lie outside the training TDS range", e.ion);
        }
    }
    Ok(())
}

fn simulate(scenario: &Path, out: &Path, registry: &IonRegistry) -> Outcome {
    require_file(scenario)?;
    require_writable(out)?;
    let text = fs::read_to_string(scenario).map_err(|e| Failure::input(format!("{}: {e}", scenario.display())))?;
    let scenario_def = Scenario::from_ini(&text).map_err(|e| Failure::from_error(scenario.display(), e))?;
    let dataset = scenario_def
        .simulate(registry)
        .map_err(|e| Failure::from_error(scenario.display(), e))?;
    write_file(out, &dataset.to_csv())
}
