//! Run configuration: TOML file merged with command-line flags.
//!
//! Precedence is flags over `RESPIRE_SEED` over the config file over the
//! built-in defaults. The default seed is fixed (61080) so default runs are
//! reproducible.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use respire::learners::{AdaBoostConfig, BaggingConfig, SvmConfig, TreeConfig};
use respire::mfcc::MfccConfig;

/// Seed used when neither flag, environment, nor config file supplies one.
pub const DEFAULT_SEED: u64 = 61080;
/// Dataset protocol rate; off-rate clips are resampled to this.
pub const DEFAULT_SAMPLE_RATE: u32 = 44100;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    manifest: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    sample_rate: Option<u32>,
    seed: Option<u64>,
    jobs: Option<usize>,
    mfcc: Option<MfccConfig>,
    svm: Option<SvmConfig>,
    tree: Option<TreeConfig>,
    bagging: Option<BaggingConfig>,
    adaboost: Option<AdaBoostConfig>,
}

/// Fully resolved configuration for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub sample_rate: u32,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub mfcc: MfccConfig,
    pub svm: SvmConfig,
    pub tree: TreeConfig,
    pub bagging: BaggingConfig,
    pub adaboost: AdaBoostConfig,
}

/// Flag-level overrides collected by the argument parser.
#[derive(Debug, Default)]
pub struct Overrides {
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

pub fn resolve(overrides: &Overrides) -> Result<RunConfig, String> {
    let file = match &overrides.config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("config {}: {e}", path.display()))?;
            toml::from_str::<FileConfig>(&text)
                .map_err(|e| format!("config {}: {e}", path.display()))?
        }
        None => FileConfig::default(),
    };

    // Paths in the config file resolve relative to the file itself.
    let base = overrides
        .config_path
        .as_deref()
        .and_then(Path::parent)
        .unwrap_or_else(|| Path::new("."));
    let rebase = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };

    Ok(RunConfig {
        manifest: file.manifest.map(rebase),
        output_dir: overrides
            .output_dir
            .clone()
            .or_else(|| file.output_dir.map(rebase))
            .unwrap_or_else(|| PathBuf::from("out")),
        sample_rate: file.sample_rate.unwrap_or(DEFAULT_SAMPLE_RATE),
        seed: overrides.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        jobs: overrides.jobs.or(file.jobs),
        mfcc: file.mfcc.unwrap_or_default(),
        svm: file.svm.unwrap_or_default(),
        tree: file.tree.unwrap_or_default(),
        bagging: file.bagging.unwrap_or_default(),
        adaboost: file.adaboost.unwrap_or_default(),
    })
}

/// Inclusive Mel-coefficient list from `"23"`, `"2..4"`, or `"2..=4"`.
pub fn parse_mel_range(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    let parse_one = |t: &str| -> Result<usize, String> {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("invalid Mel coefficient `{t}`"))
    };
    if let Some((lo, hi)) = s.split_once("..") {
        let hi = hi.strip_prefix('=').unwrap_or(hi);
        let (lo, hi) = (parse_one(lo)?, parse_one(hi)?);
        if lo < 2 || hi < lo {
            return Err(format!(
                "Mel range {lo}..{hi} is invalid (need 2 <= lo <= hi)"
            ));
        }
        Ok((lo..=hi).collect())
    } else {
        let m = parse_one(s)?;
        if m < 2 {
            return Err(format!("Mel coefficient {m} must be at least 2"));
        }
        Ok(vec![m])
    }
}
