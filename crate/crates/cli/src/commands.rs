use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde_json::json;

use horouf::adversarial::{pgd, AttackConfig, AttackInit};
use horouf::audio::{fan_out, read_wav, trim_silence, write_wav, AugmentRanges, FanOutConfig, TrimConfig};
use horouf::corpus::{decode_label, split_manifest, Manifest, Split, Strictness};
use horouf::embedding::{assemble, load_dataset, save_dataset, write_hrf, EmbeddingDataset, FrameEmbeddingMatrix};
use horouf::eval::{evaluate, sweep as run_sweep, EvalReport, SweepConfig, SweepResult, DEFAULT_EPSILONS};
use horouf::matrix::Matrix;
use horouf::neural::{load_checkpoint, save_checkpoint, train as run_train, AdamConfig, Checkpoint, Mlp, MlpConfig, TrainConfig};
use horouf::oracle::{generate, SyntheticSpec};
use horouf::seed;

use crate::config::{List, Settings, FILE_NAME};
use crate::{CliError, Output};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn make_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(|e| io_err(p, e))
}

/// Loads a manifest and rewrites relative paths as absolute ones, resolved
/// against the manifest's own directory.
fn load_manifest(path: &Path, lenient: bool) -> Result<(Manifest, PathBuf), CliError> {
    let mode = if lenient { Strictness::Lenient } else { Strictness::Strict };
    let mut m = Manifest::read_jsonl(path, mode)?;
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base = absolute(parent)?;
    for e in &mut m.entries {
        for p in [&mut e.audio_path, &mut e.embedding_path].into_iter().flatten() {
            if Path::new(p).is_relative() {
                *p = base.join(&*p).to_string_lossy().into_owned();
            }
        }
    }
    Ok((m, base))
}

fn file_stem_for(index: usize, id: &str) -> String {
    let clean: String = id.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    format!("{index:06}_{clean}")
}

fn class_name(classes: usize, k: usize) -> String {
    if classes == horouf::corpus::CLASS_COUNT {
        decode_label(k as i64).map(|l| l.to_string()).unwrap_or_else(|_| k.to_string())
    } else {
        k.to_string()
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

// ---------------------------------------------------------------- split

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Input manifest (JSON lines).
    #[arg(long)]
    manifest: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Share of each class assigned to training.
    #[arg(long)]
    train: Option<f64>,
    /// Share of each class assigned to validation.
    #[arg(long)]
    val: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ignore unknown manifest fields instead of rejecting them.
    #[arg(long)]
    lenient: bool,
}

pub fn split(a: SplitArgs, cfg: Option<&Path>, out: &Output) -> Result<(), CliError> {
    let mut s = Settings::load(cfg, "split")?;
    let manifest: String = s.required("manifest", a.manifest)?;
    let dir = PathBuf::from(s.required::<String>("out", a.out)?);
    let train = s.get("train", a.train, 0.68)?;
    let val = s.get("val", a.val, 0.12)?;
    let seed = s.seed(a.seed)?;
    let lenient = s.switch("lenient", a.lenient)?;

    let (m, _) = load_manifest(Path::new(&manifest), lenient)?;
    let split = split_manifest(&m, train, val, seed)?;
    make_dir(&dir)?;
    split.write_jsonl(dir.join("manifest.jsonl"))?;
    s.write(&dir.join(FILE_NAME))?;
    let count = |sp| split.in_split(sp).count();
    let (tr, va, te) = (count(Split::Train), count(Split::Val), count(Split::Test));
    out.event(
        "split",
        format!("train {tr}, val {va}, test {te}"),
        json!({ "train": tr, "val": va, "test": te }),
    );
    Ok(())
}

// ---------------------------------------------------------------- trim

#[derive(Debug, Args)]
pub struct TrimArgs {
    #[arg(long)]
    manifest: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Samples per analysis frame.
    #[arg(long)]
    frame_len: Option<usize>,
    /// Mean-square energy below which a frame counts as silence.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    lenient: bool,
}

pub fn trim(a: TrimArgs, cfg: Option<&Path>, out: &Output) -> Result<(), CliError> {
    let mut s = Settings::load(cfg, "trim")?;
    let manifest: String = s.required("manifest", a.manifest)?;
    let dir = absolute(Path::new(&s.required::<String>("out", a.out)?))?;
    let tc = TrimConfig {
        frame_len: s.get("frame_len", a.frame_len, 320)?,
        energy_threshold: s.get("threshold", a.threshold, 1e-4)?,
    };
    let lenient = s.switch("lenient", a.lenient)?;
    if tc.frame_len == 0 || !(tc.energy_threshold >= 0.0) {
        return Err(CliError::Usage("frame length must be positive and threshold >= 0".into()));
    }

    let (mut m, _) = load_manifest(Path::new(&manifest), lenient)?;
    let audio_dir = dir.join("audio");
    make_dir(&audio_dir)?;
    let results: Vec<Result<Option<String>, String>> = m
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let Some(src) = &e.audio_path else { return Ok(None) };
            let rel = format!("audio/{}.wav", file_stem_for(i, &e.id));
            let clip = read_wav(src).map_err(|err| format!("{}: {err}", e.id))?;
            let trimmed = trim_silence(&clip, &tc).map_err(|err| format!("{}: {err}", e.id))?;
            write_wav(&trimmed, dir.join(&rel)).map_err(|err| format!("{}: {err}", e.id))?;
            Ok(Some(rel))
        })
        .collect();
    let mut kept = Vec::with_capacity(m.entries.len());
    let mut dropped = 0usize;
    for (mut e, r) in m.entries.drain(..).zip(results) {
        match r {
            Ok(Some(rel)) => {
                e.audio_path = Some(rel);
                kept.push(e);
            }
            Ok(None) => kept.push(e),
            Err(msg) => {
                log::warn!("dropping {msg}");
                out.event("skip", format!("skipped {msg}"), json!({ "reason": msg }));
                dropped += 1;
            }
        }
    }
    let m = Manifest::new(kept)?;
    m.write_jsonl(dir.join("manifest.jsonl"))?;
    s.write(&dir.join(FILE_NAME))?;
    out.event(
        "trim",
        format!("trimmed {} clips, dropped {dropped}", m.len()),
        json!({ "kept": m.len(), "dropped": dropped }),
    );
    Ok(())
}

// ---------------------------------------------------------------- augment

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Split manifest; only Train originals are augmented.
    #[arg(long)]
    manifest: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Augmented copies per training clip.
    #[arg(long)]
    per_entry: Option<usize>,
    #[arg(long)]
    sigma_min: Option<f64>,
    #[arg(long)]
    sigma_max: Option<f64>,
    #[arg(long)]
    semitones_min: Option<f64>,
    #[arg(long)]
    semitones_max: Option<f64>,
    #[arg(long)]
    rate_min: Option<f64>,
    #[arg(long)]
    rate_max: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lenient: bool,
}

pub fn augment(a: AugmentArgs, cfg: Option<&Path>, out: &Output) -> Result<(), CliError> {
    let mut s = Settings::load(cfg, "augment")?;
    let manifest: String = s.required("manifest", a.manifest)?;
    let dir = absolute(Path::new(&s.required::<String>("out", a.out)?))?;
    let d = AugmentRanges::default();
    let ranges = AugmentRanges {
        sigma: (s.get("sigma_min", a.sigma_min, d.sigma.0)?, s.get("sigma_max", a.sigma_max, d.sigma.1)?),
        semitones: (
            s.get("semitones_min", a.semitones_min, d.semitones.0)?,
            s.get("semitones_max", a.semitones_max, d.semitones.1)?,
        ),
        rate: (s.get("rate_min", a.rate_min, d.rate.0)?, s.get("rate_max", a.rate_max, d.rate.1)?),
    };
    let fc = FanOutConfig {
        specs_per_entry: s.get("per_entry", a.per_entry, 3)?,
        ranges,
        seed: s.seed(a.seed)?,
    };
    let lenient = s.switch("lenient", a.lenient)?;

    let (m, base) = load_manifest(Path::new(&manifest), lenient)?;
    let audio_dir = dir.join("audio");
    make_dir(&audio_dir)?;
    let report = fan_out(&m, &fc, &base, &audio_dir)?;
    for (id, err) in &report.failures {
        out.event("skip", format!("augmentation failed for {id}: {err}"), json!({ "id": id, "reason": err.to_string() }));
    }
    report.manifest.write_jsonl(dir.join("manifest.jsonl"))?;
    s.write(&dir.join(FILE_NAME))?;
    out.event(
        "augment",
        format!("{} entries ({} added)", report.manifest.len(), report.manifest.len() - m.len()),
        json!({ "entries": report.manifest.len(), "added": report.manifest.len() - m.len(), "failures": report.failures.len() }),
    );
    Ok(())
}

// ---------------------------------------------------------------- pool

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Split manifest whose entries carry embedding paths.
    #[arg(long)]
    manifest: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    lenient: bool,
}

pub fn pool(a: PoolArgs, cfg: Option<&Path>, out: &Output) -> Result<(), CliError> {
    let mut s = Settings::load(cfg, "pool")?;
    let manifest: String = s.required("manifest", a.manifest)?;
    let dir = PathBuf::from(s.required::<String>("out", a.out)?);
    let lenient = s.switch("lenient", a.lenient)?;
    let (m, base) = load_manifest(Path::new(&manifest), lenient)?;
    make_dir(&dir)?;
    for (split, name) in [(Split::Train, "train"), (Split::Val, "val"), (Split::Test, "test")] {
        let ds = assemble(&m, split, &base)?;
        save_dataset(&ds, &dir.join(name))?;
        out.event(
            "pool",
            format!("{name}: {} vectors of width {}", ds.len(), ds.dim()),
            json!({ "split": name, "n": ds.len(), "dim": ds.dim() }),
        );
    }
    s.write(&dir.join(FILE_NAME))
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    /// Within-class standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Minimum distance between class means.
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    train: Option<f64>,
    #[arg(long)]
    val: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn synth(a: SynthArgs, cfg: Option<&Path>, out: &Output) -> Result<(), CliError> {
    let mut s = Settings::load(cfg, "synth")?;
    let dir = PathBuf::from(s.required::<String>("out", a.out)?);
    let spec = SyntheticSpec {
        classes: s.get("classes", a.classes, 10)?,
        dim: s.get("dim", a.dim, 64)?,
        n_per_class: s.get("per_class", a.per_class, 200)?,
        sigma: s.get("sigma", a.sigma, 0.8)?,
        margin: s.get("margin", a.margin, 6.0)?,
        seed: s.seed(a.seed)?,
    };
    let train = s.get("train", a.train, 0.7)?;
    let val = s.get("val", a.val, 0.1)?;
    if !(train >= 0.0 && val >= 0.0 && train + val < 1.0) {
        return Err(CliError::Usage(format!("fractions train {train} + val {val} must be < 1")));
    }
    let syn = generate(&spec)?;
    let (tr, va, te) = syn.split(train, val, spec.seed);
    make_dir(&dir)?;
    for (ds, name) in [(&tr, "train"), (&va, "val"), (&te, "test")] {
        save_dataset(ds, &dir.join(name))?;
    }
    let means = syn.means.map(|v| v as f32);
    write_hrf(&FrameEmbeddingMatrix::new(means)?, dir.join("means.hrf"))?;
    s.write(&dir.join(FILE_NAME))?;
    out.event(
        "synth",
        format!("{} classes x {} samples, dim {}: train {}, val {}, test {}", spec.classes, spec.n_per_class, spec.dim, tr.len(), va.len(), te.len()),
        json!({ "train": tr.len(), "val": va.len(), "test": te.len() }),
    );
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset root with train/ and val/ subdirectories.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long)]
    hidden: Option<List<usize>>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train on PGD-perturbed batches.
    #[arg(long)]
    adversarial: bool,
    /// L-infinity budget for adversarial training.
    #[arg(long)]
    epsilon: Option<f64>,
    /// PGD iterations per batch.
    #[arg(long)]
    attack_steps: Option<usize>,
    /// PGD step size (default 2.5 * epsilon / steps).
    #[arg(long)]
    alpha: Option<f64>,
    /// Start PGD from a random point in the ball.
    #[arg(long)]
    random_start: bool,
}

fn attack_settings(
    s: &mut Settings,
    epsilon: Option<f64>,
    default_eps: f64,
    steps: (&str, Option<usize>, usize),
    alpha: Option<f64>,
    random_start: bool,
    seed: u64,
) -> Result<AttackConfig, CliError> {
    let eps = s.get("epsilon", epsilon, default_eps)?;
    let steps = s.get(steps.0, steps.1, steps.2)?;
    let mut cfg = AttackConfig::pgd(eps, steps);
    if let Some(al) = s.opt("alpha", alpha)? {
        cfg.alpha = al;
    }
    if s.switch("random_start", random_start)? {
        cfg.init = AttackInit::RandomUniform {
            seed: seed::hash_str(seed, "attack"),
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_split(root: &Path, name: &str) -> Result<EmbeddingDataset, CliError> {
    Ok(load_dataset(&root.join(name))?)
}

pub fn train(a: TrainArgs, cfg: Option<&Path>, out: &Output) -> Result<(), CliError> {
    let mut s = Settings::load(cfg, "train")?;
    let data = PathBuf::from(s.required::<String>("data", a.data)?);
    let dir = PathBuf::from(s.required::<String>("out", a.out)?);
    let epochs = s.get("epochs", a.epochs, 9)?;
    let batch_size = s.get("batch_size", a.batch_size, 32)?;
    let lr = s.get("lr", a.lr, 1e-3)?;
    let hidden = s.get("hidden", a.hidden, List(vec![256, 128]))?;
    let dropout = s.get("dropout", a.dropout, 0.3)?;
    let seed = s.seed(a.seed)?;
    let adversarial = s.switch("adversarial", a.adversarial)?;
    let attack = if adversarial {
        Some(attack_settings(&mut s, a.epsilon, 0.05, ("attack_steps", a.attack_steps, 10), a.alpha, a.random_start, seed)?)
    } else {
        None
    };

    let tr = load_split(&data, "train")?;
    let va = load_split(&data, "val")?;
    if tr.is_empty() {
        return Err(CliError::Data(format!("{}: empty training set", data.display())));
    }
    let arch = MlpConfig {
        input_dim: tr.dim(),
        hidden: hidden.0,
        classes: tr.classes(),
        dropout,
    };
    arch.validate()?;
    let init_seed = seed::hash_str(seed, "init");
    let model = Mlp::<f32>::new(arch.clone(), init_seed)?;
    let tc = TrainConfig {
        epochs,
        batch_size,
        seed,
        adam: AdamConfig { lr, ..AdamConfig::default() },
        attack,
    };
    let outcome = run_train(model, &tr, Some(&va), &tc, |m| {
        let val = m.val_accuracy.map_or("-".to_string(), pct);
        out.event(
            "epoch",
            format!("epoch {:>3}  loss {:.4}  train {}  val {}", m.epoch, m.train_loss, pct(m.train_accuracy), val),
            serde_json::to_value(m).expect("metrics serialize"),
        );
    })?;

    make_dir(&dir)?;
    let mut csv = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for m in &outcome.metrics {
        writeln!(csv, "{},{},{},{},{}", m.epoch, m.train_loss, m.train_accuracy, opt(m.val_loss), opt(m.val_accuracy)).unwrap();
    }
    write_file(&dir.join("metrics.csv"), &csv)?;
    let meta = Checkpoint {
        train: Some(tc),
        metrics: outcome.metrics,
        ..Checkpoint::new(arch, init_seed)
    };
    save_checkpoint(&outcome.model, &meta, dir.join("model.hrfm"))?;
    s.write(&dir.join(FILE_NAME))?;
    out.event("saved", format!("model written to {}", dir.join("model.hrfm").display()), json!({ "model": dir.join("model.hrfm") }));
    Ok(())
}

// ---------------------------------------------------------------- attack

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    model: Option<String>,
    /// Dataset directory to perturb.
    #[arg(long)]
    data: Option<String>,
    /// Output HRF file holding the perturbed vectors, one row per example.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    random_start: bool,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn attack(a: AttackArgs, cfg: Option<&Path>, out: &Output) -> Result<(), CliError> {
    let mut s = Settings::load(cfg, "attack")?;
    let model_path = PathBuf::from(s.required::<String>("model", a.model)?);
    let data = PathBuf::from(s.required::<String>("data", a.data)?);
    let out_path = PathBuf::from(s.required::<String>("out", a.out)?);
    let seed = s.seed(a.seed)?;
    let atk = attack_settings(&mut s, a.epsilon, 0.05, ("steps", a.steps, 50), a.alpha, a.random_start, seed)?;

    let (model, _) = load_checkpoint(&model_path)?;
    let ds = load_dataset(&data)?;
    if ds.is_empty() {
        return Err(CliError::Data(format!("{}: empty dataset", data.display())));
    }
    let idx: Vec<usize> = (0..ds.len()).collect();
    let parts: Vec<_> = idx
        .chunks(256)
        .collect::<Vec<_>>()
        .par_iter()
        .enumerate()
        .map(|(c, rows)| {
            let x = ds.x().select_rows(rows);
            let y: Vec<usize> = rows.iter().map(|&i| ds.y()[i]).collect();
            pgd(&model, &x, &y, &atk.salted(c as u64)).map(|p| (p.apply(&x), p.fooled))
        })
        .collect::<Result<_, _>>()?;
    let mut perturbed = Matrix::<f32>::zeros(0, 0);
    let mut fooled = 0usize;
    for (x, f) in &parts {
        perturbed.push_rows(x);
        fooled += f.iter().filter(|&&b| b).count();
    }
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        make_dir(parent)?;
    }
    write_hrf(&FrameEmbeddingMatrix::new(perturbed)?, &out_path)?;
    let mut side = out_path.clone().into_os_string();
    side.push(".run.ini");
    s.write(Path::new(&side))?;
    let robust = 1.0 - fooled as f64 / ds.len() as f64;
    out.event(
        "attack",
        format!("robust accuracy {} over {} examples at epsilon {}", pct(robust), ds.len(), atk.epsilon),
        json!({ "n": ds.len(), "robust_accuracy": robust, "epsilon": atk.epsilon }),
    );
    Ok(())
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    model: Option<String>,
    /// Dataset directory.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Number of confusion pairs to list.
    #[arg(long)]
    top_k: Option<usize>,
}

pub fn eval(a: EvalArgs, cfg: Option<&Path>, out: &Output) -> Result<(), CliError> {
    let mut s = Settings::load(cfg, "eval")?;
    let model_path = PathBuf::from(s.required::<String>("model", a.model)?);
    let data = PathBuf::from(s.required::<String>("data", a.data)?);
    let dir = PathBuf::from(s.required::<String>("out", a.out)?);
    let k = s.get("top_k", a.top_k, 10)?;
    let (model, _) = load_checkpoint(&model_path)?;
    let ds = load_dataset(&data)?;
    let report = evaluate(&model, &ds)?;
    make_dir(&dir)?;

    let confusions: Vec<_> = report
        .top_confusions(k)
        .into_iter()
        .map(|(t, p, c)| json!({ "true": t, "predicted": p, "count": c, "true_label": class_name(report.classes, t), "predicted_label": class_name(report.classes, p) }))
        .collect();
    let doc = json!({ "report": report, "top_confusions": confusions });
    write_file(&dir.join("report.json"), &(serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"))?;

    let mut csv = String::from("class_id,label,n,accuracy\n");
    for (kk, acc) in report.per_class_accuracy.iter().enumerate() {
        let n: u64 = report.confusion[kk].iter().sum();
        writeln!(csv, "{kk},{},{n},{}", class_name(report.classes, kk), acc.map_or(String::new(), |v| v.to_string())).unwrap();
    }
    write_file(&dir.join("per_class.csv"), &csv)?;
    s.write(&dir.join(FILE_NAME))?;
    out.event(
        "eval",
        format!("accuracy {}  macro {}  n {}", pct(report.clean_accuracy), pct(report.macro_average), report.n),
        json!({ "accuracy": report.clean_accuracy, "macro_average": report.macro_average, "n": report.n }),
    );
    Ok(())
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Checkpoint of the standard model.
    #[arg(long)]
    standard: Option<String>,
    /// Checkpoint of the adversarially trained model.
    #[arg(long)]
    adversarial: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Strictly increasing budgets, comma separated.
    #[arg(long)]
    epsilons: Option<List<f64>>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    random_start: bool,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn sweep(a: SweepArgs, cfg: Option<&Path>, out: &Output) -> Result<(), CliError> {
    let mut s = Settings::load(cfg, "sweep")?;
    let std_path = PathBuf::from(s.required::<String>("standard", a.standard)?);
    let adv_path = PathBuf::from(s.required::<String>("adversarial", a.adversarial)?);
    let data = PathBuf::from(s.required::<String>("data", a.data)?);
    let dir = PathBuf::from(s.required::<String>("out", a.out)?);
    let eps = s.get("epsilons", a.epsilons, List(DEFAULT_EPSILONS.to_vec()))?;
    let steps = s.get("steps", a.steps, 50)?;
    let seed = s.seed(a.seed)?;
    let init = if s.switch("random_start", a.random_start)? {
        AttackInit::RandomUniform {
            seed: seed::hash_str(seed, "attack"),
        }
    } else {
        AttackInit::Zero
    };
    let (standard, _) = load_checkpoint(&std_path)?;
    let (adversarial, _) = load_checkpoint(&adv_path)?;
    let ds = load_dataset(&data)?;
    let sc = SweepConfig { steps, init, track_best: true };
    let result = run_sweep(&standard, &adversarial, &ds, &eps.0, &sc)?;
    make_dir(&dir)?;
    result.write_csv(dir.join("sweep.csv"))?;
    write_file(&dir.join("sweep.svg"), &result.to_svg())?;
    s.write(&dir.join(FILE_NAME))?;
    for r in &result.rows {
        out.event(
            "sweep",
            format!("epsilon {:<6} standard {}  adversarial {}", r.epsilon, pct(r.acc_standard), pct(r.acc_adversarial)),
            serde_json::to_value(r).expect("row serializes"),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- report

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json written by `eval`.
    #[arg(long)]
    eval: Option<String>,
    /// sweep.csv written by `sweep`.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

pub fn report(a: ReportArgs, cfg: Option<&Path>, out: &Output) -> Result<(), CliError> {
    use horouf::eval::reference as r;
    let mut s = Settings::load(cfg, "report")?;
    let eval_path: Option<String> = s.opt("eval", a.eval)?;
    let sweep_path: Option<String> = s.opt("sweep", a.sweep)?;
    let dir = PathBuf::from(s.required::<String>("out", a.out)?);

    let mut md = String::from("# Evaluation report\n\n");
    if let Some(p) = &eval_path {
        let p = Path::new(p);
        let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| io_err(p, e))?;
        let rep: EvalReport = serde_json::from_value(doc["report"].clone()).map_err(|e| io_err(p, e))?;
        writeln!(md, "## Clean accuracy\n\n| metric | this run | reference |\n|---|---|---|").unwrap();
        writeln!(md, "| accuracy | {} | {} (test) |", pct(rep.clean_accuracy), pct(r::MLP_TEST)).unwrap();
        writeln!(md, "| macro average | {} | {} |", pct(rep.macro_average), pct(r::MLP_MACRO)).unwrap();
        writeln!(md, "| samples | {} | |\n", rep.n).unwrap();
        let top = rep.top_confusions(10);
        if !top.is_empty() {
            writeln!(md, "### Most frequent confusions\n\n| true | predicted | count |\n|---|---|---|").unwrap();
            for (t, p, c) in top {
                writeln!(md, "| {} | {} | {c} |", class_name(rep.classes, t), class_name(rep.classes, p)).unwrap();
            }
            md.push('\n');
        }
    }
    if let Some(p) = &sweep_path {
        let p = Path::new(p);
        let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        let res = SweepResult::from_csv(&text)?;
        writeln!(md, "## Robust accuracy under PGD\n\n| epsilon | standard | adversarial |\n|---|---|---|").unwrap();
        for row in &res.rows {
            writeln!(md, "| {} | {} | {} |", row.epsilon, pct(row.acc_standard), pct(row.acc_adversarial)).unwrap();
        }
        md.push('\n');
    }
    writeln!(md, "## Reference figures (full corpus)\n").unwrap();
    writeln!(md, "| quantity | value |\n|---|---|").unwrap();
    writeln!(md, "| off-the-shelf encoder, letter accuracy | {} (also quoted as {}) |", pct(r::ENCODER_BASELINE), pct(r::ENCODER_BASELINE_ABSTRACT)).unwrap();
    writeln!(md, "| fine-tuned encoder, val / test | {} / {} |", pct(r::ENCODER_FINETUNED_VAL), pct(r::ENCODER_FINETUNED_TEST)).unwrap();
    writeln!(md, "| MLP, val / test | {} / {} |", pct(r::MLP_VAL), pct(r::MLP_TEST)).unwrap();
    writeln!(md, "| MLP, class-averaged | {} |", pct(r::MLP_MACRO)).unwrap();
    writeln!(md, "| adversarially trained MLP, val / test | {} / {} |", pct(r::ADVERSARIAL_VAL), pct(r::ADVERSARIAL_TEST)).unwrap();
    writeln!(
        md,
        "| standard model under attack (epsilon {}) | {} to {} |",
        r::ATTACK_EPSILON,
        pct(r::STANDARD_CLEAN),
        pct(r::STANDARD_ATTACKED)
    )
    .unwrap();
    writeln!(md, "| adversarial model drop under attack | at most {} points |", r::ADVERSARIAL_DROP_POINTS).unwrap();

    make_dir(&dir)?;
    write_file(&dir.join("report.md"), &md)?;
    s.write(&dir.join(FILE_NAME))?;
    out.event("report", format!("report written to {}", dir.join("report.md").display()), json!({ "report": dir.join("report.md") }));
    Ok(())
}
