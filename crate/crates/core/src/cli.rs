//! The `fingermi` command line.
//!
//! Every verb reads an optional config file (see [`crate::config`]); flags
//! override it. Outputs contain no timestamps or paths, so a repeated run with
//! the same inputs and seed writes identical bytes.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::ConfigFile;
use crate::dataio::{read_eegf, read_raw_csv, synth_dataset, synth_recording, write_eegf, write_raw_csv, RecordingSpec};
use crate::error::{Error, Result};
use crate::harness::{
    confusion_csv, evaluate, run_cv, run_sweep, summarize_table, sweep_csv, table, train, wilcoxon_signed_rank,
    CvReport, SweepReport,
};
use crate::model::{init_params, model_spec, ModelSpec};
use crate::signal::{decimate, epoch, notch_filter, select_channels, zscore_epochs, EpochedDataset, CLASS_NAMES};

#[derive(Debug, Parser)]
#[command(name = "fingermi", version, about = "Finger motor-imagery EEG decoding experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// key = value config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `seed` in the config and FINGERMI_SEED
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// eegnet, deepconvnet or fingernet
    #[arg(long)]
    pub model: Option<String>,
    /// EEGF epoch file
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic epoch file, or a continuous raw recording with --recording
    Synth {
        #[command(flatten)]
        common: Common,
        /// separable, noise or biased
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        snr: Option<f64>,
        /// EEGF output, or the raw data CSV with --recording
        #[arg(long)]
        out: PathBuf,
        /// Write a 1000 Hz, 64-channel recording with mains hum instead of epochs
        #[arg(long, requires = "events_out")]
        recording: bool,
        /// Event CSV written alongside --recording
        #[arg(long)]
        events_out: Option<PathBuf>,
        /// Number of task onsets in the recording
        #[arg(long, default_value_t = 125)]
        events: usize,
    },
    /// Notch, decimate, select channels, epoch and optionally z-score a raw recording
    Preprocess {
        #[command(flatten)]
        common: Common,
        /// Raw data CSV: channel names header, one row per sample
        #[arg(long)]
        data: PathBuf,
        /// Event CSV: `sample,label`
        #[arg(long)]
        events: PathBuf,
        /// Sampling rate of the raw data in Hz
        #[arg(long, default_value_t = 1000.0)]
        fs: f64,
        #[arg(long)]
        no_zscore: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one network on a whole epoch file and save its weights
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Held-out epochs to evaluate on; defaults to the training data
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified k-fold cross-validation
    Cv {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        folds: Option<usize>,
        /// Directory for cv.json, folds.csv and confusion.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iterated cross-validation with bias-adjusted class weights
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        rounds: Option<usize>,
        /// Directory for sweep.json, sweep.csv and one confusion CSV per round
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One-sided exact Wilcoxon signed-rank test that A exceeds B
    Stats {
        /// CSV with one value per row (header optional)
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Header name of the column to read; defaults to the first column
        #[arg(long)]
        column: Option<String>,
    },
    /// Render saved cv/sweep reports, or the reference accuracy table, as CSV and JSON
    Report {
        /// cv.json files, one per model
        #[arg(long)]
        cv: Vec<PathBuf>,
        /// sweep.json files
        #[arg(long)]
        sweep: Vec<PathBuf>,
        /// Include the per-subject reference accuracies and their summary
        #[arg(long)]
        table: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `argv` (including the program name) and runs it. Returns the exit
/// code: 0 on success, 2 for usage errors, 1 for runtime failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(msg) => {
            print!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn config(common: &Common) -> Result<ConfigFile> {
    let mut cfg = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(s) = common.seed {
        cfg.set("seed", s.to_string());
    }
    Ok(cfg)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn json(value: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Loads the data and resolves model and training settings, flags first.
fn setup(cfg: &mut ConfigFile, args: &ModelArgs) -> Result<(EpochedDataset, ModelSpec)> {
    if let Some(m) = &args.model {
        cfg.set("model.name", m.clone());
    }
    if let Some(e) = args.epochs {
        cfg.set("train.epochs", e.to_string());
    }
    if let Some(lr) = args.lr {
        cfg.set("train.lr", lr.to_string());
    }
    let data = read_eegf(&args.data)?;
    let kind = cfg.model_kind()?;
    let spec = model_spec(kind, &cfg.model_config(kind, data.n_channels(), data.n_samples)?)?;
    Ok((data, spec))
}

fn execute(command: Command) -> Result<String> {
    match command {
        Command::Synth {
            common,
            preset,
            snr,
            out,
            recording,
            events_out,
            events,
        } => {
            let mut cfg = config(&common)?;
            if let Some(p) = preset {
                cfg.set("synth.preset", p);
            }
            if let Some(s) = snr {
                cfg.set("synth.snr", s.to_string());
            }
            if recording {
                let spec = RecordingSpec {
                    task: cfg.synth_spec()?,
                    ..RecordingSpec::new(events, cfg.seed()?)
                };
                let rec = synth_recording(&spec)?;
                let events_out = events_out.expect("clap enforces --events-out");
                write_raw_csv(&rec, &out, &events_out)?;
                return Ok(format!(
                    "wrote {} channels x {} samples at {} Hz and {} events\n",
                    rec.channel_names.len(),
                    rec.n_samples(),
                    rec.fs,
                    rec.events.len()
                ));
            }
            let ds = synth_dataset(&cfg.synth_spec()?)?;
            write_eegf(&ds, &out)?;
            Ok(summary_line(&ds))
        }
        Command::Preprocess {
            common,
            data,
            events,
            fs,
            no_zscore,
            out,
        } => {
            let mut cfg = config(&common)?;
            if no_zscore {
                cfg.set("preprocess.zscore", "false");
            }
            let p = cfg.preprocess()?;
            let rec = read_raw_csv(&data, &events, fs)?;
            let rec = notch_filter(&rec, p.notch, p.notch_q)?;
            let rec = decimate(&rec, p.factor)?;
            let rec = select_channels(&rec, &p.channels)?;
            let mut ds = epoch(&rec, p.window)?;
            if p.zscore {
                zscore_epochs(&mut ds);
            }
            write_eegf(&ds, &out)?;
            Ok(summary_line(&ds))
        }
        Command::Train {
            common,
            model,
            test,
            out,
        } => {
            let mut cfg = config(&common)?;
            let (data, spec) = setup(&mut cfg, &model)?;
            let tc = cfg.train_config(&data.labels)?;
            tc.validate(spec.n_classes)?;
            let mut net = init_params(&spec, tc.seed)?;
            let loss_history = train(&mut net, &data, &tc)?;
            let eval_data = match &test {
                Some(p) => read_eegf(p)?,
                None => data,
            };
            let eval = evaluate(&net, &eval_data)?;
            let record = TrainRecord {
                model: spec.kind.name(),
                config: &tc,
                loss_history,
                accuracy: eval.accuracy,
                confusion: eval.confusion.rows().map(<[usize]>::to_vec).collect(),
                params: net
                    .params()
                    .iter()
                    .map(|p| SavedParam {
                        name: &p.name,
                        shape: p.value.shape(),
                        data: p.value.data(),
                    })
                    .collect(),
            };
            write(&out, json(&record)?)?;
            Ok(format!("{} accuracy {:.4}\n", spec.kind.name(), eval.accuracy))
        }
        Command::Cv {
            common,
            model,
            folds,
            out,
        } => {
            let mut cfg = config(&common)?;
            let (data, spec) = setup(&mut cfg, &model)?;
            let tc = cfg.train_config(&data.labels)?;
            let k = folds.map_or_else(|| cfg.folds(), Ok)?;
            let report = run_cv(&data, &spec, &tc, k)?;
            if let Some(dir) = out {
                out_dir(&dir)?;
                write(&dir.join("cv.json"), report.to_json()?)?;
                write(&dir.join("folds.csv"), report.folds_csv())?;
                write(&dir.join("confusion.csv"), confusion_csv(&report.confusion, &CLASS_NAMES))?;
            }
            Ok(cv_summary(&report))
        }
        Command::Sweep {
            common,
            model,
            rounds,
            out,
        } => {
            let mut cfg = config(&common)?;
            let (data, spec) = setup(&mut cfg, &model)?;
            let tc = cfg.train_config(&data.labels)?;
            let rounds = rounds.map_or_else(|| cfg.sweep_rounds(), Ok)?;
            if rounds == 0 {
                return Err(Error::invalid("sweep", "rounds must be at least 1"));
            }
            let report = run_sweep(&data, &spec, &tc, cfg.folds()?, rounds, &cfg.schedule()?);
            if let Some(dir) = &out {
                write_sweep(dir, &report)?;
            }
            match &report.aborted {
                Some(reason) => Err(Error::invalid(
                    "sweep",
                    format!("aborted after {} rounds: {reason}", report.rounds.len()),
                )),
                None => Ok(sweep_csv(&report.rounds)),
            }
        }
        Command::Stats { a, b, column } => {
            let xa = read_column(&a, column.as_deref())?;
            let xb = read_column(&b, column.as_deref())?;
            let w = wilcoxon_signed_rank(&xa, &xb)?;
            Ok(format!(
                "n={} W+={} W-={} p={} ({}/{})\n",
                w.n,
                w.w_plus,
                w.w_minus,
                w.p_greater.value(),
                w.p_greater.numerator,
                w.p_greater.denominator
            ))
        }
        Command::Report { cv, sweep, table, out } => {
            if cv.is_empty() && sweep.is_empty() && !table {
                return Err(Error::invalid("report", "nothing to render: pass --cv, --sweep or --table"));
            }
            out_dir(&out)?;
            let mut msg = String::new();
            if !cv.is_empty() {
                let reports = cv
                    .iter()
                    .map(|p| Ok(serde_json::from_str::<CvReport>(&read(p)?)?))
                    .collect::<Result<Vec<_>>>()?;
                write(&out.join("accuracy.csv"), accuracy_table(&reports))?;
                for r in &reports {
                    write(
                        &out.join(format!("confusion_{}.csv", r.model)),
                        confusion_csv(&r.confusion, &CLASS_NAMES),
                    )?;
                    msg.push_str(&cv_summary(r));
                }
            }
            for (i, p) in sweep.iter().enumerate() {
                let report: SweepReport = serde_json::from_str(&read(p)?)?;
                let dir = if sweep.len() == 1 {
                    out.join("sweep")
                } else {
                    out.join(format!("sweep_{}", i + 1))
                };
                write_sweep(&dir, &report)?;
                writeln!(msg, "{} sweep: {} rounds", report.model, report.rounds.len()).unwrap();
            }
            if table {
                let summaries = summarize_table(&table::columns());
                write(&out.join("table.json"), json(&summaries)?)?;
                let mut csv = String::from("model,mean,population_std,sample_std,reported_mean,reported_std\n");
                for s in &summaries {
                    writeln!(
                        csv,
                        "{},{:.5},{:.5},{:.5},{},{}",
                        s.name,
                        s.mean,
                        s.std,
                        s.sample_std,
                        opt(s.reported_mean),
                        opt(s.reported_std)
                    )
                    .unwrap();
                    for note in &s.notes {
                        writeln!(msg, "{note}").unwrap();
                    }
                }
                write(&out.join("table.csv"), &csv)?;
                msg.push_str(&csv);
            }
            Ok(msg)
        }
    }
}

#[derive(Serialize)]
struct SavedParam<'a> {
    name: &'a str,
    shape: &'a [usize],
    data: &'a [f64],
}

#[derive(Serialize)]
struct TrainRecord<'a> {
    model: &'a str,
    config: &'a crate::harness::TrainConfig,
    loss_history: Vec<f64>,
    accuracy: f64,
    confusion: Vec<Vec<usize>>,
    params: Vec<SavedParam<'a>>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn summary_line(ds: &EpochedDataset) -> String {
    format!(
        "{} epochs x {} channels x {} samples at {} Hz, labels {:?}\n",
        ds.n_trials(),
        ds.n_channels(),
        ds.n_samples,
        ds.fs,
        ds.label_histogram(CLASS_NAMES.len())
    )
}

fn cv_summary(r: &CvReport) -> String {
    format!(
        "{} {}-fold accuracy {:.4} +/- {:.4}, predictions {:?}\n",
        r.model, r.k, r.mean_accuracy, r.std_accuracy, r.histogram.counts
    )
}

fn accuracy_table(reports: &[CvReport]) -> String {
    let k = reports.iter().map(|r| r.folds.len()).max().unwrap_or(0);
    let mut out = String::from("model");
    (1..=k).for_each(|i| write!(out, ",fold{i}").unwrap());
    out.push_str(",mean,std\n");
    for r in reports {
        out.push_str(&r.model);
        for i in 0..k {
            match r.folds.get(i) {
                Some(f) => write!(out, ",{}", f.accuracy).unwrap(),
                None => out.push(','),
            }
        }
        writeln!(out, ",{},{}", r.mean_accuracy, r.std_accuracy).unwrap();
    }
    out
}

fn write_sweep(dir: &Path, report: &SweepReport) -> Result<()> {
    out_dir(dir)?;
    write(&dir.join("sweep.json"), json(report)?)?;
    write(&dir.join("sweep.csv"), sweep_csv(&report.rounds))?;
    for r in &report.rounds {
        write(
            &dir.join(format!("confusion_round_{}.csv", r.round)),
            confusion_csv(&r.confusion, &CLASS_NAMES),
        )?;
    }
    Ok(())
}

/// Numeric values of one CSV column. A non-numeric first row is a header.
fn read_column(path: &Path, column: Option<&str>) -> Result<Vec<f64>> {
    let text = read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = reader.records();
    let Some(first) = rows.next().transpose()? else {
        return Err(Error::invalid("stats", format!("{} is empty", path.display())));
    };
    let is_header = first.iter().any(|f| f.parse::<f64>().is_err());
    let index = match (column, is_header) {
        (Some(name), true) => first.iter().position(|h| h == name).ok_or_else(|| {
            Error::invalid("stats", format!("{} has no column {name:?}", path.display()))
        })?,
        (Some(name), false) => {
            return Err(Error::invalid(
                "stats",
                format!("{} has no header to find {name:?} in", path.display()),
            ))
        }
        (None, _) => 0,
    };
    let parse = |record: &csv::StringRecord, line: usize| -> Result<f64> {
        let field = record.get(index).unwrap_or("");
        field.parse().map_err(|_| {
            Error::invalid(
                "stats",
                format!("{} line {line}: {field:?} is not a number", path.display()),
            )
        })
    };
    let mut values = Vec::new();
    if !is_header {
        values.push(parse(&first, 1)?);
    }
    for (i, record) in rows.enumerate() {
        values.push(parse(&record?, i + 2)?);
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["fingermi", "frobnicate"]), 2);
        assert_eq!(run(["fingermi", "cv", "--bogus"]), 2);
        assert_eq!(run(["fingermi", "synth"]), 2);
    }

    #[test]
    fn runtime_errors_exit_1() {
        assert_eq!(run(["fingermi", "stats", "--a", "/nonexistent/a.csv", "--b", "/nonexistent/b.csv"]), 1);
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(run(["fingermi", "--help"]), 0);
    }
}
