use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use iar_core::armodel::{load_checkpoint, save_checkpoint, Example, Model, ModelError, Trainer};
use iar_core::canon::{tokenize, CanonicalSequence};
use iar_core::metrics::{evaluate, MetricsError};
use iar_core::molio::{
    parse_xyz, parse_xyz_frames, random_rotation, synth_dataset, write_xyz, ElementTable, Molecule,
};
use iar_core::Vec3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::plot::loss_curve_svg;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "iar", version, about = "Autoregressive 3D molecule generation over canonical token sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the canonical token stream of one XYZ molecule.
    Tokenize {
        input: PathBuf,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit a JSON array of {symbol, x, y, z} objects.
        #[arg(long)]
        json: bool,
    },
    /// Check that tokenization ignores rigid motions and atom order.
    FuzzInvariance {
        input: PathBuf,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Maximum allowed coordinate deviation, Å.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Train a model; writes the checkpoint, a loss CSV and a loss plot.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sample molecules as sample_<seed>_<idx>.xyz files.
    Sample {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to <out_dir>/model.iar.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to <out_dir>/samples.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        num: Option<usize>,
        #[arg(long)]
        class: Option<u32>,
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Evaluate XYZ files (or directories of them).
    Eval {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        target_class: Option<u32>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write jittered template molecules as one multi-frame XYZ file.
    Synth {
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
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
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Tokenize { input, out, json } => cmd_tokenize(&input, out.as_deref(), json),
        Command::FuzzInvariance {
            input,
            trials,
            seed,
            tol,
        } => cmd_fuzz(&input, trials as usize, seed, tol),
        Command::Train { config } => cmd_train(&RunConfig::load(&config)?),
        Command::Sample {
            config,
            checkpoint,
            out,
            num,
            class,
            scale,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(n) = num {
                cfg.num_samples = n;
            }
            if let Some(c) = class {
                if c as usize >= cfg.n_classes {
                    return Err(CliError::Usage(format!(
                        "--class {c} is outside 0..{}",
                        cfg.n_classes
                    )));
                }
                cfg.class_id = Some(c);
            }
            if let Some(s) = scale {
                cfg.guidance_scale = s;
            }
            cfg.validate()?;
            let checkpoint = checkpoint.unwrap_or_else(|| cfg.out_dir.join("model.iar"));
            let out = out.unwrap_or_else(|| cfg.out_dir.join("samples"));
            cmd_sample(&cfg, &checkpoint, &out)
        }
        Command::Eval {
            inputs,
            target_class,
            json,
        } => cmd_eval(&inputs, target_class, json.as_deref()),
        Command::Synth { count, seed, out } => cmd_synth(count, seed, &out),
    }
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| data_err(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| data_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| data_err(path, e))
}

fn read_molecule(path: &Path) -> Result<Molecule, CliError> {
    parse_xyz(&read(path)?).map_err(|e| data_err(path, e))
}

fn symbol(charge: u8) -> &'static str {
    ElementTable::standard()
        .by_charge(charge)
        .map_or("?", |e| e.symbol.as_str())
}

fn fallback_reasons(seq: &CanonicalSequence) -> Vec<&'static str> {
    let f = seq.flags();
    let mut out = Vec::new();
    if f.degenerate {
        out.push("degenerate inertia eigenvalues");
    }
    if f.spherical {
        out.push("spherical top");
    }
    if f.anchor_fallback {
        out.push("no anchor atom off the axis planes");
    }
    out
}

#[derive(Serialize)]
struct TokenRecord<'a> {
    symbol: &'a str,
    x: f64,
    y: f64,
    z: f64,
}

fn cmd_tokenize(input: &Path, out: Option<&Path>, json: bool) -> Result<(), CliError> {
    let seq = tokenize(&read_molecule(input)?);
    let reasons = fallback_reasons(&seq);
    if !reasons.is_empty() {
        eprintln!("warning: pose fallback applied ({})", reasons.join(", "));
    }
    let text = if json {
        let records: Vec<_> = seq
            .tokens
            .iter()
            .map(|t| TokenRecord {
                symbol: symbol(t.charge),
                x: t.coord.x,
                y: t.coord.y,
                z: t.coord.z,
            })
            .collect();
        serde_json::to_string_pretty(&records).expect("tokens serialize") + "\n"
    } else {
        seq.tokens.iter().fold(String::new(), |mut s, t| {
            let _ = writeln!(s, "{} {:.6} {:.6} {:.6}", symbol(t.charge), t.coord.x, t.coord.y, t.coord.z);
            s
        })
    };
    match out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_fuzz(input: &Path, trials: usize, seed: u64, tol: f64) -> Result<(), CliError> {
    let mol = read_molecule(input)?;
    let base = tokenize(&mol);
    let reasons = fallback_reasons(&base);
    if !reasons.is_empty() {
        println!("skipped: {}", reasons.join(", "));
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_dev = 0.0f64;
    let mut mismatches = 0usize;
    for _ in 0..trials {
        let rot = random_rotation(&mut rng);
        let shift = Vec3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        let mut perm: Vec<usize> = (0..mol.len()).collect();
        perm.shuffle(&mut rng);
        let moved = mol.permuted(&perm).transformed(&rot, &shift);
        let seq = tokenize(&moved);
        for (a, b) in seq.tokens.iter().zip(&base.tokens) {
            max_dev = max_dev.max((a.coord - b.coord).amax());
            if a.charge != b.charge {
                mismatches += 1;
            }
        }
        mismatches += seq
            .order
            .iter()
            .zip(&base.order)
            .filter(|(&moved_idx, &orig)| perm[moved_idx] != orig)
            .count();
    }
    println!("trials {trials} max_deviation {max_dev:.3e} order_mismatches {mismatches}");
    if max_dev <= tol && mismatches == 0 {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "invariance violated: max deviation {max_dev:.3e} (tol {tol:.1e}), {mismatches} order mismatches"
        )))
    }
}

/// Training molecules in canonical pose and order, keeping their class labels.
pub fn load_training_set(cfg: &RunConfig) -> Result<Vec<Molecule>, CliError> {
    let raw = match &cfg.dataset {
        Some(path) => parse_xyz_frames(&read(path)?)
            .map_err(|e| data_err(path, e))?
            .into_iter()
            .map(|(_, m)| m)
            .collect(),
        None => synth_dataset(cfg.synth_seed, cfg.synth_count),
    };
    if raw.is_empty() {
        return Err(CliError::Data("training set is empty".into()));
    }
    Ok(raw.iter().map(|m| tokenize(m).to_molecule(m.class_id())).collect())
}

fn model_err(e: ModelError) -> CliError {
    match e {
        ModelError::Diverged { .. } => CliError::Numeric(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let mols = load_training_set(cfg)?;
    let coords: Vec<Vec3> = mols.iter().flat_map(|m| m.coords().iter().copied()).collect();
    let model = Model::new(cfg.model_config(cfg.anchors(&coords)), cfg.seed).map_err(model_err)?;
    let data = mols
        .iter()
        .map(|m| Example::from_molecule(m, model.vocab()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(model_err)?;
    let outcome = Trainer::new(model, cfg.train_config(), data)
        .and_then(Trainer::run)
        .map_err(model_err)?;
    let dir = &cfg.out_dir;
    write(&dir.join("model.iar"), save_checkpoint(&outcome.model))?;
    let mut csv = String::from("step,loss_type,loss_diff\n");
    for s in &outcome.trace {
        let _ = writeln!(csv, "{},{},{}", s.step, s.loss_type, s.loss_diff);
    }
    write(&dir.join("loss.csv"), csv)?;
    loss_curve_svg(&outcome.trace, &dir.join("loss.svg")).map_err(|e| CliError::Data(format!("plot: {e}")))?;
    if let (Some(first), Some(last)) = (outcome.trace.first(), outcome.trace.last()) {
        println!(
            "trained {} steps on {} molecules: loss_type {:.4} -> {:.4}, loss_diff {:.4} -> {:.4}",
            outcome.trace.len(),
            mols.len(),
            first.loss_type,
            last.loss_type,
            first.loss_diff,
            last.loss_diff
        );
    }
    println!("wrote {}", dir.join("model.iar").display());
    Ok(())
}

/// Per-sample seeds derived from the run seed.
pub fn sample_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random()).collect()
}

fn cmd_sample(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<(), CliError> {
    let bytes = fs::read(checkpoint).map_err(|e| data_err(checkpoint, e))?;
    let model = load_checkpoint(&bytes).map_err(|e| data_err(checkpoint, e))?;
    if let Some(c) = cfg.class_id {
        model.vocab().class_token(c).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let seeds = sample_seeds(cfg.seed, cfg.num_samples);
    let results = seeds
        .par_iter()
        .map(|&s| model.sample_molecule(&cfg.sample_options(s)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(model_err)?;
    fs::create_dir_all(out).map_err(|e| data_err(out, e))?;
    let mut truncated = 0;
    for (idx, r) in results.iter().enumerate() {
        truncated += usize::from(r.truncated);
        let path = out.join(format!("sample_{}_{idx}.xyz", cfg.seed));
        write(&path, write_xyz(&r.molecule) + "\n")?;
    }
    if truncated > 0 {
        eprintln!("warning: {truncated} samples hit max_len before EOS");
    }
    println!("wrote {} samples to {}", results.len(), out.display());
    Ok(())
}

fn xyz_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| data_err(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "xyz"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn cmd_eval(inputs: &[PathBuf], target_class: Option<u32>, json: Option<&Path>) -> Result<(), CliError> {
    let mut mols = Vec::new();
    for f in xyz_files(inputs)? {
        let frames = parse_xyz_frames(&read(&f)?).map_err(|e| data_err(&f, e))?;
        mols.extend(frames.into_iter().map(|(_, m)| m));
    }
    let report = evaluate(&mols, target_class).map_err(|e| match e {
        MetricsError::UnknownClass(_) => CliError::Usage(e.to_string()),
        _ => CliError::Data(e.to_string()),
    })?;
    print!("{}", report.to_table());
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match json {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_synth(count: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    let frames: Vec<String> = synth_dataset(seed, count).iter().map(write_xyz).collect();
    write(out, frames.join("\n") + "\n")?;
    println!("wrote {count} molecules to {}", out.display());
    Ok(())
}
