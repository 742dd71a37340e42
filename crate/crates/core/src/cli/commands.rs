use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{AuditArgs, AuditMode, CliConfig, Direction, EvalArgs, Outcome, ReconstructArgs, SynthArgs, TrainArgs};
use crate::autodiff::Selection;
use crate::error::{Error, Result};
use crate::layers::{
    init_model, load_checkpoint, save_checkpoint, CheckpointMeta, InnPar, ModelConfig, PUBLISHED_FLOPS_M,
    PUBLISHED_PARAMS_K,
};
use crate::signal::{
    extract_sbp_dbp, grad_channel, ingest_csv, parse_csv_rows, read_segments, synth_corpus,
    synth_corpus_with_truth, write_segments, CsvLayout, IngestOptions, SegmentSet,
};
use crate::tensor::{Scalar, Tensor3};
use crate::train::{evaluate, fit, gradcheck_model, random_inputs, roundtrip_audit};

type Flags = [(String, String)];

fn with_flag(overrides: &Flags, extra: &[(&str, Option<String>)]) -> Vec<(String, String)> {
    let mut all = overrides.to_vec();
    for (k, v) in extra {
        if let Some(v) = v {
            all.push((k.to_string(), v.clone()));
        }
    }
    all
}

/// `--config` if given, else `config.json` beside `near` if it exists.
fn config_near(explicit: Option<&Path>, near: &Path, overrides: &Flags) -> Result<CliConfig> {
    let sibling = near.parent().map(|d| d.join("config.json")).filter(|p| p.exists());
    CliConfig::load(explicit.or(sibling.as_deref()), overrides)
}

fn load_segments(path: &Path, cfg: &CliConfig, length: usize) -> Result<SegmentSet> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let opts = IngestOptions {
            length,
            sample_rate_hz: cfg.data.sample_rate_hz,
            ..IngestOptions::default()
        };
        ingest_csv(&CsvLayout::Paired(path.to_path_buf()), &opts)
    } else {
        read_segments(path)
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub(super) fn cmd_train<T: Scalar>(a: TrainArgs, overrides: &Flags) -> Result<Outcome> {
    let overrides = with_flag(
        overrides,
        &[
            ("train.seed", a.seed.map(|v| v.to_string())),
            ("train.epochs", a.epochs.map(|v| v.to_string())),
            ("train.batch_size", a.batch_size.map(|v| v.to_string())),
            ("train.lr", a.lr.map(|v| v.to_string())),
        ],
    );
    let cfg = CliConfig::load(a.config.config.as_deref(), &overrides)?;
    let length = cfg.model.signal_length;
    let data = match (a.synth, &a.data) {
        (Some(n), _) => synth_corpus(n, cfg.train.seed, length, cfg.data.sample_rate_hz)?,
        (None, Some(path)) => load_segments(path, &cfg, length)?,
        (None, None) => return Err(Error::Usage("one of --data or --synth is required".into())),
    };
    let (train, val) = data.train_val_split(cfg.data.val_fraction)?;
    let model_config = cfg.train.ablation.model_config(&cfg.model);
    let mut model = init_model::<T>(&model_config, cfg.train.seed)?;

    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("config.json"), &serde_json::to_value(&cfg)?)?;
    println!(
        "training {} on {} segments ({} validation), {} parameters, {}",
        T::NAME,
        train.len(),
        val.len(),
        model.count_params(),
        if a.synth.is_some() { "synthetic data" } else { "file data" }
    );
    let log = fit(&mut model, &train, &val, &cfg.train, Some(&a.out))?;
    for e in &log.epochs {
        println!(
            "epoch {:4}  train {:.6}  val {:.6}  {:.2}s",
            e.epoch, e.train_loss, e.val_loss, e.seconds
        );
    }
    log.write_jsonl(a.out.join("runlog.jsonl"))?;
    let meta = CheckpointMeta::new(cfg.train.epochs, &log.train_losses());
    save_checkpoint(&model, a.out.join("checkpoint.bin"), &meta)?;
    write_segments(a.out.join("val.bin"), &val)?;
    println!("wrote {}", a.out.display());
    Ok(Outcome::Ok)
}

pub(super) fn cmd_eval<T: Scalar>(a: EvalArgs, overrides: &Flags) -> Result<Outcome> {
    let cfg = config_near(a.config.config.as_deref(), &a.checkpoint, overrides)?;
    let (model, _) = load_checkpoint::<T>(&a.checkpoint)?;
    let set = load_segments(&a.data, &cfg, model.config().signal_length)?;
    let r = evaluate(&model, &set, &cfg.train.ablation)?;
    println!(
        "n_segments {}  waveform MAE {:.6}  NRMSE {:.6}  SBP MAE {:.4} mmHg  DBP MAE {:.4} mmHg",
        r.n_segments, r.waveform_mae, r.waveform_nrmse, r.sbp_mae_mmhg, r.dbp_mae_mmhg
    );
    if let Some(path) = &a.report {
        let report = json!({
            "waveform": {
                "mae": r.waveform_mae,
                "nrmse": r.waveform_nrmse,
                "mae_mmhg": r.waveform_mae_mmhg,
            },
            "sbp_mae": r.sbp_mae_mmhg,
            "dbp_mae": r.dbp_mae_mmhg,
            "n_segments": r.n_segments,
            "per_segment": r.per_segment,
            "config": cfg,
        });
        write_json(path, &report)?;
    }
    Ok(Outcome::Ok)
}

fn audit_model<T: Scalar>(checkpoint: Option<&PathBuf>, config: &ModelConfig, seed: u64) -> Result<InnPar<T>> {
    match checkpoint {
        Some(path) => Ok(load_checkpoint::<T>(path)?.0),
        None => init_model::<T>(config, seed),
    }
}

pub(super) fn cmd_audit<T: Scalar>(a: AuditArgs, overrides: &Flags, roundtrip_tol: f64) -> Result<Outcome> {
    let seed = a.seed.unwrap_or(0);
    match a.mode {
        AuditMode::Roundtrip => {
            let cfg = CliConfig::load(a.config.config.as_deref(), overrides)?;
            let model = audit_model::<T>(a.checkpoint.as_ref(), &cfg.model, seed)?;
            let tol = a.tolerance.unwrap_or(roundtrip_tol);
            let inputs = random_inputs(&model, a.inputs, seed.wrapping_add(1));
            let r = roundtrip_audit(&model, &inputs)?;
            let verdict = if r.max_abs_err <= tol { "PASS" } else { "FAIL" };
            println!(
                "roundtrip ({}): max |x - inverse(forward(x))| = {:.3e} over {} inputs, worst input {}, tolerance {tol:.0e}: {verdict}",
                T::NAME, r.max_abs_err, r.inputs, r.worst_input
            );
            if r.max_abs_err <= tol {
                Ok(Outcome::Ok)
            } else {
                Ok(Outcome::AuditFailed(format!(
                    "round-trip error {:.3e} on input {} exceeds {tol:.0e}",
                    r.max_abs_err, r.worst_input
                )))
            }
        }
        AuditMode::Gradcheck => {
            // Fresh audits use the small configuration unless overridden.
            let mut base_overrides = Vec::new();
            if a.config.config.is_none() && a.checkpoint.is_none() {
                let tiny = serde_json::to_value(ModelConfig::tiny())?;
                for (k, v) in tiny.as_object().expect("struct serialises to an object") {
                    base_overrides.push((format!("model.{k}"), v.to_string()));
                }
            }
            base_overrides.extend_from_slice(overrides);
            let cfg = CliConfig::load(a.config.config.as_deref(), &base_overrides)?;
            let mut model = audit_model::<f64>(a.checkpoint.as_ref(), &cfg.model, seed)?;
            let selection = if a.checkpoint.is_some() {
                Selection::Sample { per_param: 8, seed }
            } else {
                Selection::All
            };
            let length = model.config().signal_length;
            let batch = synth_corpus(2, seed, length, cfg.data.sample_rate_hz)?;
            let tol = a.tolerance.unwrap_or(1e-4);
            let r = gradcheck_model(&mut model, &batch, cfg.train.effective_alpha(), 1e-5, selection)?;
            let verdict = if r.passes(tol) { "PASS" } else { "FAIL" };
            println!(
                "gradcheck (f64, h=1e-5): max relative error {:.3e} at {} (analytic {:.6e}, numeric {:.6e}); \
                 {} scalars checked, {} with a widened step, {} at kinks; tolerance {tol:.0e}: {verdict}",
                r.max_rel_err, r.worst_param, r.worst_analytic, r.worst_numeric, r.checked, r.widened, r.kinks
            );
            if r.passes(tol) {
                Ok(Outcome::Ok)
            } else {
                Ok(Outcome::AuditFailed(format!(
                    "relative error {:.3e} at {} exceeds {tol:.0e}",
                    r.max_rel_err, r.worst_param
                )))
            }
        }
        AuditMode::Flops => {
            let cfg = CliConfig::load(a.config.config.as_deref(), overrides)?;
            let model = audit_model::<T>(a.checkpoint.as_ref(), &cfg.model, seed)?;
            let length = model.config().signal_length;
            let cost = model.count_flops(length)?;
            let params_k = cost.params as f64 / 1000.0;
            println!(
                "params {} ({params_k:.1} K; published {PUBLISHED_PARAMS_K} K, {:+.2}%)",
                cost.params,
                100.0 * (params_k - PUBLISHED_PARAMS_K) / PUBLISHED_PARAMS_K
            );
            println!(
                "length {length}: conv MACs {} ({:.3} M), elementwise ops {}, total {} (published FLOPs {PUBLISHED_FLOPS_M} M)",
                cost.conv_macs,
                cost.conv_macs as f64 / 1e6,
                cost.elementwise_ops,
                cost.total_ops()
            );
            Ok(Outcome::Ok)
        }
    }
}

/// Width of the first data row.
fn first_row_width(text: &str) -> Option<usize> {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split(',').count())
}

fn to_t<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::of(x)).collect()
}

fn second_channel<T: Scalar>(x: &[T], duplicate: bool) -> Result<Vec<T>> {
    if duplicate {
        Ok(x.to_vec())
    } else {
        grad_channel(x)
    }
}

fn csv_line<T: Scalar>(out: &mut String, parts: &[&[T]]) {
    let mut first = true;
    for part in parts {
        for v in *part {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
    }
    out.push('\n');
}

pub(super) fn cmd_reconstruct<T: Scalar>(a: ReconstructArgs, overrides: &Flags) -> Result<Outcome> {
    let cfg = config_near(a.config.config.as_deref(), &a.checkpoint, overrides)?;
    let (model, _) = load_checkpoint::<T>(&a.checkpoint)?;
    let l = model.config().signal_length;
    let duplicate = cfg.train.ablation.ae1_duplicate_signal;
    let norm = crate::signal::AbpNorm::default();
    let rate = cfg.data.sample_rate_hz as f64;
    let text = fs::read_to_string(&a.input).map_err(|source| Error::Open {
        path: a.input.clone(),
        source,
    })?;
    let width = match (a.direction, first_row_width(&text)) {
        (_, None) => return Err(Error::Usage(format!("{} has no data rows", a.input.display()))),
        (Direction::Forward, Some(_)) => l,
        (Direction::Inverse, Some(w)) if w == 3 * l => w,
        (Direction::Inverse, Some(_)) => l,
    };
    let rows = parse_csv_rows(&text, width)?;

    let mut csv = String::new();
    let mut bp = Vec::with_capacity(rows.len());
    match a.direction {
        Direction::Forward => {
            csv.push_str(&format!(
                "# per row: {l} ABP mmHg, {l} ABP normalised, {l} ABP gradient normalised\n"
            ));
            for (i, row) in rows.iter().enumerate() {
                let ppg = to_t::<T>(row);
                let x = Tensor3::from_channels(&[&ppg, &second_channel(&ppg, duplicate)?])?;
                let y = model.forward(&x)?;
                let y_hat: Vec<f64> = y.row(0, 0).iter().map(|v| v.as_f64()).collect();
                let mmhg = norm.denormalize(&y_hat);
                let mmhg_t = to_t::<T>(&mmhg);
                csv_line(&mut csv, &[&mmhg_t, y.row(0, 0), y.row(0, 1)]);
                let (sbp, dbp) = extract_sbp_dbp(&mmhg, rate)?;
                bp.push(json!({"row": i + 1, "sbp": sbp, "dbp": dbp}));
            }
        }
        Direction::Inverse => {
            csv.push_str(&format!("# per row: {l} PPG, {l} PPG second channel\n"));
            for (i, row) in rows.iter().enumerate() {
                let (mmhg, y1, y2): (Vec<f64>, Vec<T>, Vec<T>) = if width == 3 * l {
                    (row[..l].to_vec(), to_t(&row[l..2 * l]), to_t(&row[2 * l..]))
                } else {
                    let y1 = to_t::<T>(&norm.normalize(row));
                    let y2 = second_channel(&y1, duplicate)?;
                    (row.clone(), y1, y2)
                };
                let x = model.inverse(&Tensor3::from_channels(&[&y1, &y2])?)?;
                csv_line(&mut csv, &[x.row(0, 0), x.row(0, 1)]);
                let (sbp, dbp) = extract_sbp_dbp(&mmhg, rate)?;
                bp.push(json!({"row": i + 1, "sbp": sbp, "dbp": dbp}));
            }
        }
    }
    fs::write(&a.out, csv)?;
    let sidecar = PathBuf::from(format!("{}.bp.json", a.out.display()));
    let direction = match a.direction {
        Direction::Forward => "forward",
        Direction::Inverse => "inverse",
    };
    write_json(&sidecar, &json!({"direction": direction, "rows": bp, "config": cfg}))?;
    println!("{direction}: {} rows -> {} (+ {})", rows.len(), a.out.display(), sidecar.display());
    Ok(Outcome::Ok)
}

pub(super) fn cmd_synth(a: SynthArgs) -> Result<Outcome> {
    let corpus = synth_corpus_with_truth(a.n, a.seed, a.length, a.rate)?;
    write_segments(&a.out, &corpus.set)?;
    if let Some(path) = &a.csv {
        let norm = corpus.set.norm;
        let mut csv = format!("# per row: {} PPG, {} ABP mmHg\n", a.length, a.length);
        for s in corpus.set.segments() {
            let abp: Vec<f64> = s.abp.iter().map(|&v| v as f64).collect();
            let mmhg: Vec<f32> = norm.denormalize(&abp).into_iter().map(|v| v as f32).collect();
            csv_line(&mut csv, &[&s.ppg, &mmhg]);
        }
        fs::write(path, csv)?;
    }
    println!(
        "wrote {} synthetic segments of {} samples at {} Hz to {}",
        a.n,
        a.length,
        a.rate,
        a.out.display()
    );
    Ok(Outcome::Ok)
}
