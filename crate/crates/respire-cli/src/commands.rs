//! Subcommand implementations.
//!
//! Stages communicate through files in the output directory: feature tables
//! (`features_mNNN.csv`), models (`model_<learner>.json`), selection traces
//! (`sfs_<learner>.json`), reports (`eval_<learner>_<split>.csv`), sweep CSVs,
//! and the append-only `audit.log`. Every artifact embeds the extraction
//! config digest; consuming a mismatched artifact fails loudly.

use std::path::{Path, PathBuf};

use respire::corpus::{
    decode_wav, load_manifest, read_feature_table, validate_clip, write_feature_table,
    FeatureTable, Split,
};
use respire::evaluation::{
    extract_feature_table, slice_table_to_mel, sweep_mel, sweep_sfs, Experiment, MelSweep,
};
use respire::features::STATS_PER_COEFF;
use respire::learners::{load_model, save_model, LearnerKind, LearnerSpec};
use respire::mfcc::MfccExtractor;
use respire::selection::load_trace;

use crate::config::RunConfig;
use crate::AppError;

fn require_artifact(path: &Path) -> Result<(), AppError> {
    if path.exists() {
        Ok(())
    } else {
        Err(AppError::Data(format!(
            "missing artifact: {}",
            path.display()
        )))
    }
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<(), AppError> {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| AppError::Data(format!("{}: {e}", cfg.output_dir.display())))
}

fn manifest_arg(cfg: &RunConfig, flag: &Option<PathBuf>) -> Result<PathBuf, AppError> {
    flag.clone()
        .or_else(|| cfg.manifest.clone())
        .ok_or_else(|| {
            AppError::Usage("a manifest is required (--manifest or config file)".to_string())
        })
}

fn spec_for(cfg: &RunConfig, kind: LearnerKind) -> LearnerSpec {
    match kind {
        LearnerKind::Svm => LearnerSpec::Svm(cfg.svm.clone()),
        LearnerKind::Tree => LearnerSpec::Tree(cfg.tree.clone()),
        LearnerKind::Bagging => LearnerSpec::Bagging(cfg.bagging.clone()),
        LearnerKind::AdaBoostM1 => LearnerSpec::AdaBoostM1(cfg.adaboost.clone()),
    }
}

fn all_specs(cfg: &RunConfig) -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::Svm(cfg.svm.clone()),
        LearnerSpec::Tree(cfg.tree.clone()),
        LearnerSpec::Bagging(cfg.bagging.clone()),
        LearnerSpec::AdaBoostM1(cfg.adaboost.clone()),
    ]
}

/// Experiment wrapper whose MFCC config is adjusted to the table's own
/// coefficient count, so any `features_mNNN.csv` works directly.
fn open_experiment(cfg: &RunConfig, table: &FeatureTable) -> Result<Experiment, AppError> {
    let effective = cfg.mfcc.clone().with_num_coeffs(table.mel_coeff_count);
    Ok(Experiment::new(table, effective, cfg.sample_rate)?)
}

fn append_audit(cfg: &RunConfig, experiment: &Experiment) -> Result<(), AppError> {
    Ok(experiment
        .audit_log()
        .append_to(&cfg.output_dir.join("audit.log"))?)
}

pub fn extract(
    cfg: &RunConfig,
    manifest_flag: &Option<PathBuf>,
    mels: &[usize],
    allow_skips: bool,
) -> Result<(), AppError> {
    ensure_out_dir(cfg)?;
    let manifest_path = manifest_arg(cfg, manifest_flag)?;
    require_artifact(&manifest_path)?;
    let manifest = load_manifest(&manifest_path)?;
    let audio_root = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();

    let max_m = *mels.iter().max().expect("mel list is non-empty");
    let base = cfg.mfcc.clone().with_num_coeffs(max_m);
    let outcome = extract_feature_table(&manifest, &audio_root, &base, cfg.sample_rate)?;

    for &m in mels {
        let sliced = slice_table_to_mel(
            &outcome.table,
            m,
            cfg.mfcc.clone().with_num_coeffs(m).digest(cfg.sample_rate),
        )?;
        let path = cfg.output_dir.join(format!("features_m{m:03}.csv"));
        write_feature_table(&sliced, &path)?;
        println!(
            "wrote {} ({} rows x {} features)",
            path.display(),
            sliced.rows.len(),
            m * STATS_PER_COEFF
        );
    }

    if !outcome.skipped.is_empty() {
        let sidecar = cfg.output_dir.join("extract_errors.txt");
        let lines: String = outcome
            .skipped
            .iter()
            .map(|s| format!("{}: {}\n", s.path.display(), s.reason))
            .collect();
        std::fs::write(&sidecar, lines)
            .map_err(|e| AppError::Data(format!("{}: {e}", sidecar.display())))?;
        let message = format!(
            "{} clips failed extraction; see {}",
            outcome.skipped.len(),
            sidecar.display()
        );
        if allow_skips {
            eprintln!("warning: {message}");
        } else {
            return Err(AppError::Data(message));
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    cfg: &RunConfig,
    features: &Path,
    kind: LearnerKind,
    trace_path: &Option<PathBuf>,
    k: Option<usize>,
    model_out: &Option<PathBuf>,
) -> Result<(), AppError> {
    ensure_out_dir(cfg)?;
    require_artifact(features)?;
    let table = read_feature_table(features)?;
    let mut experiment = open_experiment(cfg, &table)?;

    let selected: Vec<usize> = match trace_path {
        Some(path) => {
            require_artifact(path)?;
            let trace = load_trace(path)?;
            if trace.config_digest != experiment.config_digest() {
                return Err(AppError::Mismatch(format!(
                    "trace {} was produced under config digest {}, features use {}",
                    path.display(),
                    trace.config_digest,
                    experiment.config_digest()
                )));
            }
            trace.selected(k.unwrap_or(trace.best_k))?
        }
        None => {
            if let Some(k) = k {
                return Err(AppError::Usage(format!(
                    "--k {k} requires --trace to define the selection order"
                )));
            }
            (0..table.feature_names.len()).collect()
        }
    };

    let spec = spec_for(cfg, kind);
    let model = experiment.fit_on(Split::Train, &spec, &selected, cfg.seed)?;
    let path = model_out
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join(format!("model_{kind}.json")));
    save_model(&model, &path)?;
    append_audit(cfg, &experiment)?;
    println!(
        "wrote {} ({} selected features, digest {})",
        path.display(),
        model.selected_features.len(),
        &model.config_digest[..12]
    );
    Ok(())
}

pub fn select(
    cfg: &RunConfig,
    features: &Path,
    kind: LearnerKind,
    max_features: usize,
) -> Result<(), AppError> {
    ensure_out_dir(cfg)?;
    require_artifact(features)?;
    let table = read_feature_table(features)?;
    let mut experiment = open_experiment(cfg, &table)?;
    let spec = spec_for(cfg, kind);
    let trace = experiment.select_on(&spec, max_features, cfg.seed)?;
    let path = cfg.output_dir.join(format!("sfs_{kind}.json"));
    respire::selection::save_trace(&trace, &path)?;
    append_audit(cfg, &experiment)?;
    println!(
        "wrote {} (best k={} accuracy={:.4})",
        path.display(),
        trace.best_k,
        trace.best_accuracy
    );
    Ok(())
}

pub fn evaluate(
    cfg: &RunConfig,
    features: &Path,
    model_path: &Path,
    split: Split,
) -> Result<(), AppError> {
    ensure_out_dir(cfg)?;
    require_artifact(features)?;
    require_artifact(model_path)?;
    let table = read_feature_table(features)?;
    let mut experiment = open_experiment(cfg, &table)?;
    let model = load_model(model_path)?;

    let report = if split == Split::Test {
        experiment
            .final_test(&[&model])?
            .pop()
            .expect("one report per model")
    } else {
        experiment.evaluate_on(split, &model)?
    };

    let path = cfg
        .output_dir
        .join(format!("eval_{}_{}.csv", model.kind, split));
    std::fs::write(&path, report.to_csv_string())
        .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    append_audit(cfg, &experiment)?;
    print!("{}", report.to_text_table());
    println!("wrote {}", path.display());
    Ok(())
}

/// Models are self-contained: the file carries the extraction config, the
/// sample rate, the selection, and the standardizer.
pub fn predict(model_path: &Path, wav: &Path) -> Result<(), AppError> {
    require_artifact(model_path)?;
    require_artifact(wav)?;
    let model = load_model(model_path)?;
    let signal = decode_wav(wav)?;
    let validated = validate_clip(signal, model.sample_rate)?;
    let extractor = MfccExtractor::new(model.mel_config.clone(), model.sample_rate)?;
    let matrix = extractor.extract(&validated.signal)?;
    let features = respire::features::feature_vector(&matrix)?;
    let prediction = model.predict_features(&features)?;
    println!("{} {:.6}", prediction.label, prediction.score);
    Ok(())
}

pub fn run_sweep_mel(
    cfg: &RunConfig,
    manifest_flag: &Option<PathBuf>,
    mel_lo: usize,
    mel_hi: usize,
) -> Result<(), AppError> {
    ensure_out_dir(cfg)?;
    let manifest_path = manifest_arg(cfg, manifest_flag)?;
    require_artifact(&manifest_path)?;
    let manifest = load_manifest(&manifest_path)?;
    let audio_root = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();

    let specs = all_specs(cfg);
    let report = sweep_mel(
        &manifest,
        &audio_root,
        &MelSweep {
            base_config: &cfg.mfcc,
            sample_rate: cfg.sample_rate,
            mel_range: (mel_lo, mel_hi),
            specs: &specs,
            seed: cfg.seed,
            cache_dir: Some(&cfg.output_dir),
        },
    )?;
    let path = cfg.output_dir.join("sweep_mel.csv");
    report.write_csv(&path)?;
    for series in &report.series {
        println!(
            "{}: best M={} accuracy={:.4}",
            series.learner, series.chosen_axis, series.chosen_accuracy
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn run_sweep_sfs(cfg: &RunConfig, trace_paths: &[PathBuf]) -> Result<(), AppError> {
    ensure_out_dir(cfg)?;
    let paths: Vec<PathBuf> = if trace_paths.is_empty() {
        // Default to whichever per-learner traces exist in the output dir.
        [
            LearnerKind::Svm,
            LearnerKind::Tree,
            LearnerKind::Bagging,
            LearnerKind::AdaBoostM1,
        ]
        .iter()
        .map(|kind| cfg.output_dir.join(format!("sfs_{kind}.json")))
        .filter(|p| p.exists())
        .collect()
    } else {
        trace_paths.to_vec()
    };
    if paths.is_empty() {
        return Err(AppError::Data(format!(
            "missing artifact: no sfs_<learner>.json traces in {} (run `select` first)",
            cfg.output_dir.display()
        )));
    }
    let mut traces = Vec::with_capacity(paths.len());
    for path in &paths {
        require_artifact(path)?;
        traces.push(load_trace(path)?);
    }
    let report = sweep_sfs(&traces)?;
    let path = cfg.output_dir.join("sweep_sfs.csv");
    report.write_csv(&path)?;
    for series in &report.series {
        println!(
            "{}: best k={} accuracy={:.4}",
            series.learner, series.chosen_axis, series.chosen_accuracy
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

/// `--split` values accepted by `evaluate`.
pub fn parse_split(s: &str) -> Result<Split, String> {
    Split::parse(s).ok_or_else(|| format!("unknown split `{s}` (train, validation or test)"))
}

/// `--learner` values.
pub fn parse_learner(s: &str) -> Result<LearnerKind, String> {
    LearnerKind::parse(s)
        .ok_or_else(|| format!("unknown learner `{s}` (svm, tree, bagging or adaboost_m1)"))
}
