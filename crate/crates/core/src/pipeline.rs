//! Manifest-wide feature extraction: WAV → MFCC → gated activations →
//! pooled feature row.

use std::path::PathBuf;
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;

use crate::audio_io::load_wav;
use crate::error::{Error, Result};
use crate::evaluation::{DatasetManifest, UtteranceRecord};
use crate::features::{pool_with, FeatureLayout, FeatureMatrix, Pooling, RowMeta};
use crate::gcu_net::{forward_collect, ModelConfig, WeightSet};
use crate::mfcc::{write_mfcc_dump, MfccConfig, MfccExtractor};

pub struct Extractor {
    model: ModelConfig,
    weights: WeightSet,
    mfcc: MfccExtractor,
    pooling: Pooling,
    mfcc_dump_dir: Option<PathBuf>,
}

impl Extractor {
    pub fn new(model: ModelConfig, weights: WeightSet, mfcc: MfccConfig, pooling: Pooling) -> Result<Self> {
        model.validate()?;
        weights.check_against(&model)?;
        if mfcc.n_mfcc != model.n_mfcc {
            return Err(Error::ConfigWeightMismatch(format!(
                "frontend produces {} coefficients, model expects {}",
                mfcc.n_mfcc, model.n_mfcc
            )));
        }
        Ok(Extractor {
            model,
            weights,
            mfcc: MfccExtractor::new(mfcc)?,
            pooling,
            mfcc_dump_dir: None,
        })
    }

    /// Also write each utterance's MFCCs to `<dir>/<utterance_id>.mfcc`.
    pub fn with_mfcc_dump(mut self, dir: impl Into<PathBuf>) -> Self {
        self.mfcc_dump_dir = Some(dir.into());
        self
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout::from(&self.model)
    }

    pub fn feature_set_name(&self) -> String {
        format!("neural-{}", self.pooling)
    }

    pub fn extract_one(&self, manifest: &DatasetManifest, record: &UtteranceRecord) -> Result<Vec<f64>> {
        let started = Instant::now();
        let audio = load_wav(manifest.resolve_wav(record))?;
        let mfcc = self.mfcc.compute(&audio, &record.utterance_id)?;
        if let Some(dir) = &self.mfcc_dump_dir {
            write_mfcc_dump(&mfcc, dir.join(format!("{}.mfcc", record.utterance_id)))?;
        }
        let act = forward_collect(&self.model, &self.weights, &mfcc)?;
        let features = pool_with(&act, self.pooling)?;
        debug!(
            "{}: {} frames in {:.1} ms",
            record.utterance_id,
            mfcc.n_frames(),
            started.elapsed().as_secs_f64() * 1e3
        );
        Ok(features.values)
    }

    /// Extracts every record. Rows come out in manifest order regardless of
    /// scheduling. Any failure aborts the whole matrix and lists every
    /// failing utterance.
    pub fn extract_manifest(&self, manifest: &DatasetManifest) -> Result<FeatureMatrix> {
        let started = Instant::now();
        let results: Vec<Result<Vec<f64>>> = manifest
            .records
            .par_iter()
            .map(|r| self.extract_one(manifest, r))
            .collect();
        let failures: Vec<(String, String)> = manifest
            .records
            .iter()
            .zip(&results)
            .filter_map(|(r, res)| res.as_ref().err().map(|e| (r.utterance_id.clone(), e.to_string())))
            .collect();
        if !failures.is_empty() {
            return Err(Error::ExtractionFailed(failures));
        }
        let mut fm = FeatureMatrix::neural(self.feature_set_name(), self.layout());
        fm.set_attribute("pool", self.pooling.to_string());
        for (r, values) in manifest.records.iter().zip(results) {
            let meta = RowMeta {
                utterance_id: r.utterance_id.clone(),
                speaker_id: r.speaker_id.clone(),
                session: r.session,
                valence: r.valence,
                arousal: r.arousal,
            };
            fm.push_row(meta, &values?)?;
        }
        info!(
            "extracted {} utterances x {} features in {:.2} s",
            fm.n_rows(),
            fm.n_cols(),
            started.elapsed().as_secs_f64()
        );
        Ok(fm)
    }
}
