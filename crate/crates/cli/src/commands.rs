use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use audiotag::arch::{count_params, mac_count, ArchSpec, Complexity, Model, Section};
use audiotag::data::{load_class_map, load_index, ClipRecord, ClipSet};
use audiotag::dsp::{read_wav, resample_linear, FrontEnd};
use audiotag::features::{decode_logmel, write_logmel};
use audiotag::train::{evaluate, write_history_csv, Checkpoint, MetricReport, TrainOutcome, Trainer};
use audiotag::transfer::{apply_strategy, few_shot_subset, FewShotSpec, TransferStrategy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::JobConfig;

pub const CHECKPOINT_FILE: &str = "checkpoint.atck";
pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";

/// Writes one `.lmel` container per input WAV into the output directory.
pub fn extract(cfg: &JobConfig, inputs: &[PathBuf]) -> Result<()> {
    let out = cfg.output_dir()?;
    std::fs::create_dir_all(out)?;
    cfg.echo(out)?;
    let fe = FrontEnd::new(cfg.dsp.clone())?;
    for input in inputs {
        let w = read_wav(input).with_context(|| format!("reading {}", input.display()))?;
        let w = resample_linear(&w, cfg.dsp.sample_rate)?;
        let mel = fe.extract(&w)?;
        let stem = input
            .file_stem()
            .ok_or_else(|| anyhow!("{} has no file name", input.display()))?;
        let dst = out.join(stem).with_extension("lmel");
        write_logmel(&dst, &mel.values)?;
        println!("{} -> {} ({} x {})", input.display(), dst.display(), mel.n_frames(), mel.n_mels());
    }
    Ok(())
}

fn load_set(cfg: &JobConfig, index: &Path, n_classes: usize, sample_rate: u32) -> Result<(Vec<ClipRecord>, ClipSet)> {
    let records = load_index(index, n_classes)?;
    let set = ClipSet::load(&records, sample_rate, cfg.clip_samples(), cfg.execution())?;
    Ok((records, set))
}

fn class_names(cfg: &JobConfig) -> Result<Option<Vec<String>>> {
    cfg.paths.class_map.as_deref().map(load_class_map).transpose().map_err(Into::into)
}

fn write_report(dir: &Path, report: &MetricReport, names: Option<&[String]>) -> Result<()> {
    std::fs::write(dir.join(REPORT_JSON), report.to_json())?;
    let table = report.to_table(names);
    std::fs::write(dir.join(REPORT_TABLE), &table)?;
    print!("{table}");
    Ok(())
}

/// Saves checkpoint, history and the last report of a finished run.
fn finish_run(cfg: &JobConfig, trainer: &Trainer, outcome: &TrainOutcome) -> Result<()> {
    let out = cfg.output_dir()?;
    trainer.checkpoint().save(out.join(CHECKPOINT_FILE))?;
    write_history_csv(&outcome.history, out.join(HISTORY_FILE))?;
    if let Some(r) = &outcome.last_report {
        write_report(out, r, class_names(cfg)?.as_deref())?;
    }
    let last_loss = outcome.history.last().map_or(f64::NAN, |r| r.loss);
    println!(
        "{} iterations (total {}), last loss {last_loss:.5}, checkpoint {}",
        outcome.iterations,
        trainer.iteration,
        out.join(CHECKPOINT_FILE).display()
    );
    if let Some(at) = outcome.reached_target_at {
        println!("target mAP reached at iteration {at}");
    }
    Ok(())
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| anyhow!("{key} is not set"))
}

/// Trains the configured architecture from its seeded initialization.
/// The model is initialized from `ChaCha8Rng::seed_from_u64(train.seed)`.
pub fn train(cfg: &JobConfig) -> Result<()> {
    let out = cfg.output_dir()?;
    cfg.echo(out)?;
    let spec = cfg.arch_spec()?;
    let index = required(&cfg.paths.index, "paths.index")?;
    let (_, train_set) = load_set(cfg, index, spec.n_classes, cfg.dsp.sample_rate)?;
    let eval_set = match &cfg.paths.eval_index {
        Some(p) => Some(load_set(cfg, p, spec.n_classes, cfg.dsp.sample_rate)?.1),
        None => None,
    };
    let model = Model::new(spec, &mut ChaCha8Rng::seed_from_u64(cfg.train.seed))?;
    let mut trainer = Trainer::new(model);
    let outcome = trainer.train(&train_set, eval_set.as_ref(), &cfg.train_config())?;
    finish_run(cfg, &trainer, &outcome)
}

/// Scores file: header `clip_id,<one column per class>`, one row per clip.
fn read_scores(path: &Path, records: &[ClipRecord], k: usize) -> Result<Vec<f32>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut by_id: HashMap<&str, Vec<f32>> = HashMap::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let id = cells.next().unwrap_or_default().trim();
        let row = cells
            .map(|c| c.trim().parse::<f32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| audiotag::Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if row.len() != k {
            return Err(audiotag::Error::Data(format!(
                "{}:{}: expected {k} scores, found {}",
                path.display(),
                n + 1,
                row.len()
            ))
            .into());
        }
        by_id.insert(id, row);
    }
    let mut scores = Vec::with_capacity(records.len() * k);
    for r in records {
        let row = by_id
            .get(r.clip_id.as_str())
            .ok_or_else(|| audiotag::Error::Data(format!("no scores for clip {}", r.clip_id)))?;
        scores.extend_from_slice(row);
    }
    Ok(scores)
}

/// Evaluates a checkpoint, or a precomputed score file, on the eval index.
pub fn eval(cfg: &JobConfig, checkpoint: Option<&Path>, scores: Option<&Path>) -> Result<()> {
    let out = cfg.output_dir()?;
    cfg.echo(out)?;
    let index = match &cfg.paths.eval_index {
        Some(p) => p.as_path(),
        None => required(&cfg.paths.index, "paths.eval_index or paths.index")?,
    };
    let report = match (checkpoint, scores) {
        (Some(_), Some(_)) => bail!("pass either --checkpoint or --scores, not both"),
        (None, None) => bail!("eval needs --checkpoint or --scores"),
        (None, Some(s)) => {
            let k = cfg.arch.n_classes;
            let records = load_index(index, k)?;
            let scores = read_scores(s, &records, k)?;
            let targets: Vec<f32> = records.iter().flat_map(|r| r.target.iter().copied()).collect();
            MetricReport::compute(&scores, &targets, k)?
        }
        (Some(c), None) => {
            let ckpt = Checkpoint::load(c)?;
            let model = ckpt.to_model()?;
            let (_, set) = load_set(cfg, index, model.spec.n_classes, model.spec.frontend.sample_rate)?;
            evaluate(&model, &set, cfg.train.batch_size, cfg.execution())?.0
        }
    };
    write_report(out, &report, class_names(cfg)?.as_deref())?;
    println!(
        "mAP {:.4}  mAUC {:.4}  d' {:.4}",
        report.macro_avg.map, report.macro_avg.mauc, report.macro_avg.d_prime
    );
    Ok(())
}

/// Downstream training from a source checkpoint under `transfer.strategy`.
/// `arch.n_classes` and `arch.output` describe the downstream task; the
/// network itself is the checkpoint's.
pub fn transfer(cfg: &JobConfig, source: &Path) -> Result<()> {
    let out = cfg.output_dir()?;
    cfg.echo(out)?;
    let ckpt = Checkpoint::load(source)?;
    let t = &cfg.transfer;
    let mut strategy = TransferStrategy::new(t.strategy, cfg.arch.n_classes, cfg.arch.output);
    strategy.head_hidden_dim = t.head_hidden_dim;
    let model = apply_strategy(Some(&ckpt), &ckpt.arch, &strategy, cfg.train.seed)?;

    let index = required(&cfg.paths.index, "paths.index")?;
    let records = load_index(index, cfg.arch.n_classes)?;
    let targets: Vec<&[f32]> = records.iter().map(|r| r.target.as_slice()).collect();
    let pick = few_shot_subset(
        &targets,
        &FewShotSpec {
            shots_per_class: t.shots_per_class,
            seed: cfg.train.seed,
        },
    )?;
    if !pick.short_classes.is_empty() {
        log::warn!("classes with fewer clips than requested (kept all): {:?}", pick.short_classes);
    }
    if !pick.empty_classes.is_empty() {
        log::warn!("classes without clips (skipped): {:?}", pick.empty_classes);
    }
    let chosen: Vec<ClipRecord> = pick.indices.iter().map(|&i| records[i].clone()).collect();
    let sr = model.spec.frontend.sample_rate;
    let set = ClipSet::load(&chosen, sr, cfg.clip_samples(), cfg.execution())?;
    let eval_set = match &cfg.paths.eval_index {
        Some(p) => Some(load_set(cfg, p, cfg.arch.n_classes, sr)?.1),
        None => None,
    };
    println!(
        "{:?}: {} clips, frozen sections {:?}",
        t.strategy,
        set.len(),
        model.frozen_sections()
    );
    let mut trainer = Trainer::new(model);
    let outcome = trainer.train(&set, eval_set.as_ref(), &cfg.train_config())?;
    finish_run(cfg, &trainer, &outcome)
}

/// Parameter and multi-add counts for the configured (or a JSON) spec.
pub fn complexity(cfg: &JobConfig, spec_file: Option<&Path>, seconds: Option<f64>, layers: bool) -> Result<()> {
    let spec = match spec_file {
        Some(p) => ArchSpec::from_json(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => cfg.arch_spec()?,
    };
    let secs = seconds.unwrap_or(cfg.arch.clip_seconds);
    let samples = (secs * spec.frontend.sample_rate as f64).round() as usize;
    let c = Complexity::of(&spec, samples)?;
    if layers {
        let p = spec.propagate(samples)?;
        for l in &p.layers {
            println!(
                "{:<9} {:<16} {:<16} {:>14?} -> {:<14?} params {:>10} macs {:>14}",
                l.section.prefix(),
                l.kind,
                l.name.as_deref().unwrap_or("-"),
                l.in_shape,
                l.out_shape,
                l.params,
                l.macs
            );
        }
    }
    println!("arch        {}", spec.name);
    println!("input       {secs} s ({samples} samples)");
    println!("params      {}", count_params(&spec)?);
    println!("multi-adds  {} ({:.4e})", c.multiadds, c.multiadds as f64);
    println!("macs        {}", mac_count(&spec, samples)?);
    Ok(())
}

/// Summarizes a checkpoint or a log-mel container.
pub fn inspect(path: &Path, tensors: bool) -> Result<()> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    match bytes.get(..4) {
        Some(b"LMEL") => {
            let m = decode_logmel(&bytes)?;
            let (lo, hi) = m
                .data
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            println!("log-mel container: {} frames x {} bins, range [{lo}, {hi}] dB", m.rows, m.cols);
        }
        _ => {
            let ck = Checkpoint::decode(&bytes)?;
            let params: usize = ck.model_tensors().map(|t| t.tensor.numel()).sum();
            println!("checkpoint: arch {} ({} classes, {:?} output)", ck.arch.name, ck.arch.n_classes, ck.arch.output);
            println!("iteration {}, frozen {:?}", ck.iteration, ck.frozen);
            println!(
                "{} model tensors ({params} values), {} optimizer tensors",
                ck.model_tensors().count(),
                ck.tensors.len() - ck.model_tensors().count()
            );
            if tensors {
                for t in &ck.tensors {
                    println!("  {:<40} {:?}", t.name, t.tensor.shape());
                }
            }
        }
    }
    Ok(())
}

/// Names of the tensors owned by frozen-able sections.
pub fn is_backbone_tensor(name: &str) -> bool {
    [Section::Logmel, Section::Wavegram, Section::Backbone]
        .iter()
        .any(|s| name.starts_with(&format!("{}.", s.prefix())))
}
