//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataset::{apply_scheme, balance_upsample, hash_split, read_matrix, split_report, write_matrix, FeatureMatrix, LabelScheme};
use crate::features::extract_many;
use crate::nbayes::{load_model, save_model};
use crate::pipeline::corpus::{build_features, feature_names, Corpus};
use crate::pipeline::{
    evaluate_model, io_err, model_name, run_model, sha256_hex, train_model, write_run, ClassSelection, HashedItem, ModelConfig,
    PipelineError, StageTiming,
};
use crate::preprocess::{preprocess_recording, read_windows, write_windows};
use crate::signal_io::{
    read_annotations, read_recording, select_montage, synth_recording, write_annotations, write_edf, write_recording,
    MontageSpec, SeizureAnnotation, SeizureType,
};

#[derive(Debug, Parser)]
#[command(name = "pgnbsc", version, about = "EEG seizure-type classification: preprocessing, features, grey wolf feature selection, kernel naive Bayes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ModelConfig, PipelineError> {
        match &self.config {
            Some(p) => ModelConfig::load(p),
            None => Ok(ModelConfig::default()),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic recording and its annotation file, or materialise a
    /// whole corpus manifest as files.
    Synth {
        /// Seizure type code: absz, cpsz, mysz, spsz, tnsz, tcsz.
        #[arg(long, required_unless_present = "corpus_dir")]
        class: Option<SeizureType>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30.0)]
        duration: f64,
        #[arg(long, default_value_t = 250.0)]
        rate: f64,
        /// Output recording; `.edf` writes EDF, anything else toolkit CSV.
        #[arg(long, required_unless_present = "corpus_dir")]
        out: Option<PathBuf>,
        /// Annotation file covering the whole recording.
        #[arg(long)]
        ann: Option<PathBuf>,
        /// Write every recording of a corpus manifest (bundled by default)
        /// plus a manifest pointing at the files into this directory.
        #[arg(long, conflicts_with_all = ["class", "out", "ann"])]
        corpus_dir: Option<PathBuf>,
        #[arg(long, requires = "corpus_dir")]
        corpus: Option<PathBuf>,
    },
    /// Montage selection, resampling, notch, first IMF and windowing.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        ann: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Provenance tag stored on every window; defaults to the file stem.
        #[arg(long)]
        source_id: Option<String>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Per-channel feature vectors from one or more windows files, stacked
    /// in argument order.
    Features {
        #[arg(long = "in", num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Grey wolf feature selection for one class on a training matrix.
    Select {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        target: SeizureType,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Merge the partial types into `fnsz` before selecting.
        #[arg(long)]
        focal: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train a model variant on a feature matrix.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-class masks and selection traces here.
        #[arg(long)]
        masks: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a trained model and write a report directory.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Recordings to report for one model variant.
    RunAll {
        /// 1, 2 or 3.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Corpus manifest; the bundled synthetic corpus if omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output directory; defaults to runs/<model>-seed<seed>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the effective configuration and exit.
        #[arg(long)]
        print_config: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                1
            } else {
                2
            }
        }
    }
}

fn override_cfg(mut cfg: ModelConfig, model: Option<&str>, seed: Option<u64>) -> Result<ModelConfig, PipelineError> {
    if let Some(m) = model {
        cfg.model = model_name(m);
        // scheme and use_bgwo follow the model chosen on the command line
        cfg.scheme = None;
        cfg.use_bgwo = None;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.resolved()
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Synth { class, seed, duration, rate, out, ann, corpus_dir, corpus } => {
            if let Some(dir) = corpus_dir {
                let c = match corpus {
                    Some(p) => Corpus::load(&p)?,
                    None => Corpus::bundled(),
                };
                let manifest = c.materialize(&dir)?;
                println!("wrote {} recordings; manifest {}", c.recordings.len(), manifest.display());
                return Ok(());
            }
            let (class, out) = (class.expect("required by clap"), out.expect("required by clap"));
            let rec = synth_recording(class, duration, rate, seed)?;
            if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("edf")) {
                write_edf(&rec, &out)?;
            } else {
                write_recording(&rec, &out)?;
            }
            if let Some(ann) = ann {
                write_annotations(&[SeizureAnnotation { start_s: 0.0, stop_s: rec.duration_s(), label: class }], &ann)?;
            }
            Ok(())
        }
        Command::Preprocess { input, ann, out, source_id, config } => {
            let cfg = config.load()?.resolved()?;
            let rec = read_recording(&input)?;
            let rec = select_montage(&rec, &MontageSpec::default())?;
            let anns = read_annotations(&ann)?;
            let id = source_id.unwrap_or_else(|| {
                input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            });
            let pre = preprocess_recording(&rec, &anns, &id, &cfg.filter)?;
            write_windows(&pre.windows, &out)?;
            println!("{} windows", pre.windows.len());
            for a in &pre.skipped.skipped {
                println!("skipped {} span {}..{} s (shorter than one window)", a.label, a.start_s, a.stop_s);
            }
            for c in &pre.monotone_channels {
                println!("channel {c}: no extrema, passed through unsifted");
            }
            Ok(())
        }
        Command::Features { input, out, config } => {
            let cfg = config.load()?.resolved()?;
            cfg.features.validate()?;
            let mut windows = Vec::new();
            for p in &input {
                windows.extend(read_windows(p)?);
            }
            let expected: Vec<String> = crate::signal_io::STANDARD_MONTAGE.iter().map(|s| s.to_string()).collect();
            if windows.iter().any(|w| w.channels != expected) {
                return Err(crate::dataset::DatasetError::RegistryMismatch.into());
            }
            let rows = extract_many(&windows, &cfg.features);
            let flagged = rows.iter().filter(|r| !r.flags.is_empty()).count();
            let m = FeatureMatrix::new(feature_names(), rows, LabelScheme::SixClass)?;
            write_matrix(&m, &out)?;
            println!("{} rows x {} features ({} rows with degenerate-input flags)", m.len(), m.width(), flagged);
            Ok(())
        }
        Command::Select { input, target, seed, out, focal, config } => {
            let cfg = override_cfg(config.load()?, None, seed)?;
            let m = read_matrix(&input)?;
            let m = if focal { apply_scheme(&m, LabelScheme::FiveClassFocal) } else { m };
            let balanced = balance_upsample(&m)?;
            let (fit, score) = hash_split(&balanced, cfg.fitness_split_percent);
            let s = crate::bgwo::select_features(&fit, &score, target, &cfg.bgwo, &cfg.density, cfg.seed)?;
            let sel = ClassSelection::new(target, cfg.seed, m.names(), &s);
            write_text(&out, &serde_json::to_string_pretty(&sel).expect("selection serialises"))?;
            println!("{} features selected, fitness {}", sel.selected.len(), sel.fitness);
            Ok(())
        }
        Command::Train { input, model, seed, out, masks, config } => {
            let cfg = override_cfg(config.load()?, model.as_deref(), seed)?;
            let m = read_matrix(&input)?;
            let (file, selections, _) = train_model(&cfg, &m)?;
            save_model(&file, &out)?;
            if let Some(p) = masks {
                write_text(&p, &crate::pipeline::selections_json(&selections))?;
            }
            Ok(())
        }
        Command::Evaluate { model, input, report } => {
            let file = load_model(&model)?;
            let m = read_matrix(&input)?;
            let title = format!("{} on {}", model.display(), input.display());
            let r = evaluate_model(&file, &m, &title)?;
            r.render(&report)?;
            print!("{}", r.summary());
            Ok(())
        }
        Command::RunAll { model, seed, corpus, out, print_config, config } => {
            let cfg = override_cfg(config.load()?, model.as_deref(), seed)?;
            if print_config {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            let c = match &corpus {
                Some(p) => Corpus::load(p)?,
                None => Corpus::bundled(),
            };
            let start = std::time::Instant::now();
            let data = build_features(&c, &cfg.filter, &cfg.features)?;
            let featurise_s = start.elapsed().as_secs_f64();
            let mut run = run_model(&cfg, &data.train, &data.test)?;
            run.manifest.timings.insert(0, StageTiming { stage: "preprocess+features".into(), seconds: featurise_s });
            let corpus_text = match &corpus {
                Some(p) => fs::read(p).map_err(io_err(p))?,
                None => crate::pipeline::corpus::BUNDLED_CORPUS.as_bytes().to_vec(),
            };
            run.manifest.inputs.insert(0, HashedItem { name: "corpus_manifest".into(), sha256: sha256_hex(&corpus_text) });
            let split = split_report(&data.train, &data.test)?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}", cfg.model, cfg.seed)));
            let mut skipped = String::from("recording,start_s,stop_s,label\n");
            for (id, a) in &data.skipped {
                skipped.push_str(&format!("{id},{},{},{}\n", a.start_s, a.stop_s, a.label));
            }
            let extra = [
                ("config.toml", cfg.to_toml()),
                ("train_features.csv", crate::dataset::matrix_to_csv(&data.train)),
                ("test_features.csv", crate::dataset::matrix_to_csv(&data.test)),
                ("split_report.txt", split.to_text()),
                ("split_report.csv", split.to_csv()),
                ("skipped_spans.csv", skipped),
            ];
            let manifest = write_run(&mut run, &out, &extra)?;
            print!("{}", split.to_text());
            println!();
            print!("{}", run.report.summary());
            println!("\nmanifest: {}", manifest.display());
            Ok(())
        }
    }
}
