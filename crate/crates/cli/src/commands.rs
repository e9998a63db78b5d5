use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use log::{info, warn};
use serde::Serialize;

use neurofeat::evaluation::{
    compare_feature_sets, consistency_filter, load_manifest, run_loso, EvaluationReport, LosoConfig,
};
use neurofeat::features::{Dimension, FeatureMatrix, LayerSelector, Pooling};
use neurofeat::gcu_net::ModelConfig;
use neurofeat::mfcc::MfccConfig;
use neurofeat::pipeline::Extractor;
use neurofeat::regression::write_model_csv;
use neurofeat::stats::{correlation_map, export_heatmap_csv};
use neurofeat::weight_io::{self, encode_weights, read_weights, stored_checksum};

use crate::provenance::{sidecar, RunRecord};
use crate::{CorrelateArgs, EvaluateArgs, ExtractArgs, MfccArgs, SynthWeightsArgs};

#[derive(Serialize)]
struct SynthConfig<'a> {
    model: &'a ModelConfig,
    seed: u64,
}

pub fn synth_weights(args: &SynthWeightsArgs) -> anyhow::Result<()> {
    let cfg: ModelConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ModelConfig::default(),
    };
    cfg.validate()?;
    let weights = weight_io::synth_weights(&cfg, args.seed);
    let bytes = encode_weights(&weights, &cfg)?;
    fs::write(&args.out, &bytes).with_context(|| format!("writing {}", args.out.display()))?;
    let checksum = stored_checksum(&bytes).expect("encoded file carries a checksum");
    println!("{checksum:016x}  {}", args.out.display());
    let inputs: Vec<&Path> = args.config.iter().map(|p| p.as_path()).collect();
    RunRecord::new(
        "synth-weights",
        SynthConfig {
            model: &cfg,
            seed: args.seed,
        },
        &inputs,
        &[&args.out],
    )?
    .write(&sidecar(&args.out))
}

impl MfccArgs {
    fn to_config(&self, n_mfcc: usize) -> MfccConfig {
        MfccConfig {
            sample_rate_hz: self.sample_rate,
            frame_len: self.frame_len,
            hop_len: self.hop_len,
            n_mels: self.n_mels,
            n_mfcc,
            fmin_hz: self.fmin,
            fmax_hz: self.fmax,
            log_floor: self.log_floor,
        }
    }
}

#[derive(Serialize)]
struct ExtractConfig<'a> {
    model: &'a ModelConfig,
    mfcc: &'a MfccConfig,
    pool: Pooling,
}

fn mfcc_summary(cfg: &MfccConfig) -> String {
    format!(
        "sample_rate={} frame_len={} hop_len={} n_mels={} n_mfcc={} fmin={:?} fmax={:?} log_floor={:?} window=hann log=ln",
        cfg.sample_rate_hz, cfg.frame_len, cfg.hop_len, cfg.n_mels, cfg.n_mfcc, cfg.fmin_hz, cfg.fmax(), cfg.log_floor
    )
}

pub fn extract(args: &ExtractArgs) -> anyhow::Result<()> {
    let (model, weights) = read_weights(&args.weights)?;
    let manifest = load_manifest(&args.manifest)?;
    if manifest.is_empty() {
        bail!("manifest {} has no utterances", args.manifest.display());
    }
    let mfcc = args.mfcc.to_config(model.n_mfcc);
    mfcc.validate()?;
    let mut extractor = Extractor::new(model.clone(), weights, mfcc.clone(), args.pool)?;
    if let Some(dir) = &args.mfcc_dump {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        extractor = extractor.with_mfcc_dump(dir);
    }
    info!("extracting {} utterances", manifest.len());
    let mut fm = extractor.extract_manifest(&manifest)?;
    fm.set_attribute("mfcc", mfcc_summary(&mfcc));
    fm.set_attribute(
        "model",
        format!(
            "n_mfcc={} channels={} n_blocks={} layers_per_block={} kernel_size={}",
            model.n_mfcc, model.channels, model.n_blocks, model.layers_per_block, model.kernel_size
        ),
    );
    fm.write_csv(&args.out)?;
    info!(
        "wrote {} rows x {} features to {}",
        fm.n_rows(),
        fm.n_cols(),
        args.out.display()
    );
    let cfg = ExtractConfig {
        model: &model,
        mfcc: &mfcc,
        pool: args.pool,
    };
    RunRecord::new("extract", cfg, &[&args.weights, &args.manifest], &[&args.out])?.write(&sidecar(&args.out))
}

#[derive(Serialize)]
struct CorrelateConfig<'a> {
    speaker: &'a str,
    dim: Dimension,
    degenerate: usize,
}

pub fn correlate(args: &CorrelateArgs) -> anyhow::Result<()> {
    let fm = FeatureMatrix::read_csv(&args.features)?;
    let layout = fm
        .layout()
        .with_context(|| format!("{} carries no layer layout header", args.features.display()))?;
    let speaker = fm.for_speaker(&args.speaker)?;
    let map = correlation_map(&speaker, args.dim, &layout)?;
    if map.degenerate_count > 0 {
        warn!("{} of {} cells had zero variance", map.degenerate_count, layout.dim());
    }
    export_heatmap_csv(&map, &args.out)?;
    let cfg = CorrelateConfig {
        speaker: &args.speaker,
        dim: args.dim,
        degenerate: map.degenerate_count,
    };
    RunRecord::new("correlate", cfg, &[&args.features], &[&args.out])?.write(&sidecar(&args.out))
}

#[derive(Serialize)]
struct EvaluateConfig {
    k: usize,
    layers: Vec<String>,
    baselines: usize,
    consistent_only: bool,
    max_spread: Option<f64>,
    utterances: usize,
    speakers: usize,
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let mut manifest = load_manifest(&args.manifest)?;
    let max_spread = args.consistent_only.then_some(args.max_spread);
    if let Some(spread) = max_spread {
        let before = manifest.len();
        manifest = consistency_filter(&manifest, spread)?;
        info!(
            "consistency filter (spread <= {spread}) kept {} of {before} utterances",
            manifest.len()
        );
    }
    let neural = FeatureMatrix::read_csv(&args.features)?;
    let mut reports: Vec<EvaluationReport> = Vec::new();
    for &selector in &args.layers {
        let cfg = LosoConfig {
            k: args.k,
            layers: selector,
            dims: Dimension::ALL.to_vec(),
            max_spread,
        };
        let mut report = run_loso(&neural, &manifest, &cfg)
            .with_context(|| format!("evaluating {} with layers {selector}", neural.name()))?;
        report.feature_set = format!("{}-{}", neural.name(), selector.label());
        reports.push(report);
    }
    for path in &args.baseline {
        let fm = FeatureMatrix::read_csv(path)?;
        let cfg = LosoConfig {
            k: fm.n_cols(),
            layers: LayerSelector::All,
            dims: Dimension::ALL.to_vec(),
            max_spread,
        };
        reports.push(run_loso(&fm, &manifest, &cfg).with_context(|| format!("evaluating {}", path.display()))?);
    }
    let table = compare_feature_sets(&reports)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut outputs = Vec::new();
    for report in &reports {
        let path = args.out.join(format!("report_{}.csv", file_safe(&report.feature_set)));
        fs::write(&path, report.to_csv())?;
        outputs.push(path);
        if args.dump_models {
            let dir = args.out.join("models");
            fs::create_dir_all(&dir)?;
            for fold in &report.folds {
                for r in &fold.results {
                    let name = format!(
                        "{}_{}_{}.csv",
                        file_safe(&report.feature_set),
                        file_safe(&fold.speaker),
                        r.dim
                    );
                    write_model_csv(&r.model, dir.join(name))?;
                }
            }
        }
    }
    let csv_path = args.out.join("comparison.csv");
    let txt_path = args.out.join("comparison.txt");
    fs::write(&csv_path, table.to_csv())?;
    fs::write(&txt_path, table.to_text())?;
    outputs.extend([csv_path, txt_path]);
    print!("{}", table.to_text());

    let cfg = EvaluateConfig {
        k: args.k,
        layers: args.layers.iter().map(ToString::to_string).collect(),
        baselines: args.baseline.len(),
        consistent_only: args.consistent_only,
        max_spread,
        utterances: manifest.len(),
        speakers: manifest.speakers().len(),
    };
    let mut inputs: Vec<&Path> = vec![&args.features, &args.manifest];
    inputs.extend(args.baseline.iter().map(|p| p.as_path()));
    let outputs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    RunRecord::new("evaluate", cfg, &inputs, &outputs)?.write(&args.out.join("run.json"))
}
