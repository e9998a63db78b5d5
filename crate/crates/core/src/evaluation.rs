//! Dataset manifests, annotator-consistency filtering, leave-one-speaker-out
//! cross-validation and comparison tables.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{check_rating, layer_feature_indices, Dimension, FeatureMatrix, LayerSelector, Matrix};
use crate::regression::{fit_model, mse, predict, RegressionModel};

const RATING_MEAN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub session: u32,
    pub speaker_id: String,
    pub wav_path: PathBuf,
    pub valence: f64,
    pub arousal: f64,
    pub valence_ratings: Option<Vec<f64>>,
    pub arousal_ratings: Option<Vec<f64>>,
}

impl UtteranceRecord {
    pub fn target(&self, dim: Dimension) -> f64 {
        match dim {
            Dimension::Valence => self.valence,
            Dimension::Arousal => self.arousal,
        }
    }

    fn ratings(&self, dim: Dimension) -> Option<&[f64]> {
        match dim {
            Dimension::Valence => self.valence_ratings.as_deref(),
            Dimension::Arousal => self.arousal_ratings.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<UtteranceRecord>,
    /// Directory that relative `wav_path`s resolve against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(records: Vec<UtteranceRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.utterance_id.as_str()) {
                return Err(Error::DuplicateId(r.utterance_id.clone()));
            }
        }
        Ok(DatasetManifest {
            records,
            base_dir: base_dir.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sorted unique speaker ids.
    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.records.iter().map(|r| r.speaker_id.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn resolve_wav(&self, record: &UtteranceRecord) -> PathBuf {
        if record.wav_path.is_absolute() {
            record.wav_path.clone()
        } else {
            self.base_dir.join(&record.wav_path)
        }
    }
}

const REQUIRED_COLUMNS: [&str; 6] = [
    "utterance_id",
    "session",
    "speaker_id",
    "wav_path",
    "valence",
    "arousal",
];

/// Reads `utterance_id,session,speaker_id,wav_path,valence,arousal` with
/// optional `valence_ratings,arousal_ratings` (semicolon-separated).
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let parse_err = |row: usize, detail: String| Error::ParseError {
        path: path.to_path_buf(),
        row,
        detail,
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = col(name).ok_or_else(|| parse_err(1, format!("missing column {name}")))?;
    }
    let [i_id, i_session, i_speaker, i_wav, i_val, i_aro] = idx;
    let (i_vr, i_ar) = (col("valence_ratings"), col("arousal_ratings"));

    let mut records = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let row = n + 1;
        let rec = rec.map_err(|e| parse_err(row, e.to_string()))?;
        let num = |i: usize, name: &str| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| parse_err(row, format!("{name} = {:?} is not a number", &rec[i])))
        };
        let ratings = |i: Option<usize>, name: &str| -> Result<Option<Vec<f64>>> {
            match i.map(|i| &rec[i]) {
                None | Some("") => Ok(None),
                Some(s) => s
                    .split(';')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| parse_err(row, format!("{name}: bad rating {v:?}")))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(Some),
            }
        };
        let record = UtteranceRecord {
            utterance_id: rec[i_id].to_string(),
            session: rec[i_session]
                .parse()
                .map_err(|_| parse_err(row, format!("session {:?} is not an integer", &rec[i_session])))?,
            speaker_id: rec[i_speaker].to_string(),
            wav_path: PathBuf::from(&rec[i_wav]),
            valence: num(i_val, "valence")?,
            arousal: num(i_aro, "arousal")?,
            valence_ratings: ratings(i_vr, "valence_ratings")?,
            arousal_ratings: ratings(i_ar, "arousal_ratings")?,
        };
        if record.utterance_id.is_empty() || record.speaker_id.is_empty() {
            return Err(parse_err(row, "empty utterance or speaker id".into()));
        }
        if record.wav_path.as_os_str().is_empty() {
            return Err(parse_err(row, "empty wav_path".into()));
        }
        check_rating(record.valence, "valence", row)?;
        check_rating(record.arousal, "arousal", row)?;
        for dim in Dimension::ALL {
            if let Some(rs) = record.ratings(dim) {
                for &r in rs {
                    check_rating(
                        r,
                        if dim == Dimension::Valence {
                            "valence_ratings"
                        } else {
                            "arousal_ratings"
                        },
                        row,
                    )?;
                }
                let mean = rs.iter().sum::<f64>() / rs.len() as f64;
                if (mean - record.target(dim)).abs() > RATING_MEAN_TOL {
                    return Err(parse_err(
                        row,
                        format!("{dim} {} differs from its ratings' mean {mean}", record.target(dim)),
                    ));
                }
            }
        }
        records.push(record);
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    DatasetManifest::new(records, base)
}

/// Keeps records whose annotator spread (max - min rating) is within
/// `max_spread` for both dimensions.
pub fn consistency_filter(m: &DatasetManifest, max_spread: f64) -> Result<DatasetManifest> {
    let mut kept = Vec::new();
    for r in &m.records {
        let mut consistent = true;
        for dim in Dimension::ALL {
            let rs = r
                .ratings(dim)
                .filter(|rs| !rs.is_empty())
                .ok_or_else(|| Error::ConsistencyDataMissing(r.utterance_id.clone()))?;
            let hi = rs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = rs.iter().cloned().fold(f64::INFINITY, f64::min);
            consistent &= hi - lo <= max_spread;
        }
        if consistent {
            kept.push(r.clone());
        }
    }
    DatasetManifest::new(kept, m.base_dir.clone())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub speaker: String,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// One fold per speaker, ordered by speaker id.
pub fn loso_folds(m: &DatasetManifest) -> Result<Vec<Fold>> {
    let speakers = m.speakers();
    if speakers.len() < 2 {
        return Err(Error::TooFewSpeakers(speakers.len()));
    }
    Ok(speakers
        .into_iter()
        .map(|speaker| {
            let (test, train): (Vec<&UtteranceRecord>, Vec<&UtteranceRecord>) =
                m.records.iter().partition(|r| r.speaker_id == speaker);
            Fold {
                train_ids: train.into_iter().map(|r| r.utterance_id.clone()).collect(),
                test_ids: test.into_iter().map(|r| r.utterance_id.clone()).collect(),
                speaker,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LosoConfig {
    pub k: usize,
    pub layers: LayerSelector,
    pub dims: Vec<Dimension>,
    /// Echoed only; filtering happens on the manifest beforehand.
    pub max_spread: Option<f64>,
}

impl Default for LosoConfig {
    fn default() -> Self {
        LosoConfig {
            k: 100,
            layers: LayerSelector::All,
            dims: Dimension::ALL.to_vec(),
            max_spread: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimResult {
    pub dim: Dimension,
    pub mse: f64,
    pub model: RegressionModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub speaker: String,
    pub n_train: usize,
    pub n_test: usize,
    pub results: Vec<DimResult>,
}

impl FoldResult {
    pub fn mse(&self, dim: Dimension) -> Option<f64> {
        self.results.iter().find(|r| r.dim == dim).map(|r| r.mse)
    }
}

/// Across-fold statistics. Variance and std are population (divide by fold
/// count).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub dim: Dimension,
    pub mean: f64,
    pub variance: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn from_values(dim: Dimension, values: &[f64]) -> Aggregate {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Aggregate {
            dim,
            mean,
            variance,
            std: variance.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub feature_set: String,
    pub config: LosoConfig,
    pub folds: Vec<FoldResult>,
    pub aggregates: Vec<Aggregate>,
}

impl EvaluationReport {
    pub fn aggregate(&self, dim: Dimension) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.dim == dim)
    }

    /// Per-fold MSE rows followed by mean, variance and std rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# feature_set={}", self.feature_set);
        let _ = writeln!(out, "# k={}", self.config.k);
        let _ = writeln!(out, "# layers={}", self.config.layers);
        let _ = writeln!(
            out,
            "# max_spread={}",
            self.config.max_spread.map_or("none".to_string(), |s| format!("{s:?}"))
        );
        let dims = &self.config.dims;
        let mut header = vec!["fold".to_string(), "speaker".into(), "n_train".into(), "n_test".into()];
        header.extend(dims.iter().map(|d| format!("{d}_mse")));
        let _ = writeln!(out, "{}", header.join(","));
        for (i, f) in self.folds.iter().enumerate() {
            let mut row = vec![
                i.to_string(),
                f.speaker.clone(),
                f.n_train.to_string(),
                f.n_test.to_string(),
            ];
            row.extend(
                dims.iter()
                    .map(|&d| f.mse(d).map_or(String::new(), |v| format!("{v:?}"))),
            );
            let _ = writeln!(out, "{}", row.join(","));
        }
        for (label, pick) in [
            ("mean", (|a: &Aggregate| a.mean) as fn(&Aggregate) -> f64),
            ("variance", |a| a.variance),
            ("std", |a| a.std),
        ] {
            let mut row = vec![label.to_string(), String::new(), String::new(), String::new()];
            row.extend(
                dims.iter()
                    .map(|&d| self.aggregate(d).map_or(String::new(), |a| format!("{:?}", pick(a)))),
            );
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

fn evaluate_fold(
    x: &Matrix,
    targets: &BTreeMap<Dimension, Vec<f64>>,
    train: &[usize],
    test: &[usize],
    candidates: &[usize],
    cfg: &LosoConfig,
) -> Result<Vec<DimResult>> {
    let x_train = x.select_rows(train);
    let x_test = x.select_rows(test);
    cfg.dims
        .iter()
        .map(|&dim| {
            let y = &targets[&dim];
            let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();
            let model = fit_model(&x_train, &y_train, cfg.k, candidates, dim)?;
            let pred = predict(&model, &x_test)?;
            Ok(DimResult {
                dim,
                mse: mse(&pred, &y_test)?,
                model,
            })
        })
        .collect()
}

/// Leave-one-speaker-out evaluation of `fm` over the records of `m`.
///
/// Rows are aligned to the manifest by utterance id and processed in id
/// order, so the result does not depend on the row order of `fm`. Scaling,
/// selection and fitting only ever see training rows.
pub fn run_loso(fm: &FeatureMatrix, m: &DatasetManifest, cfg: &LosoConfig) -> Result<EvaluationReport> {
    if cfg.dims.is_empty() {
        return Err(Error::InvalidConfig("no target dimensions requested".into()));
    }
    let candidates = match (cfg.layers, fm.layout()) {
        (LayerSelector::All, _) => (0..fm.n_cols()).collect(),
        (sel, Some(layout)) => layer_feature_indices(&layout, sel)?,
        (sel, None) => {
            return Err(Error::InvalidConfig(format!(
                "feature set {} has no layer layout; selector {sel} needs one",
                fm.name()
            )))
        }
    };
    if cfg.k > candidates.len() {
        return Err(Error::KTooLarge {
            k: cfg.k,
            available: candidates.len(),
        });
    }

    let mut records: Vec<&UtteranceRecord> = m.records.iter().collect();
    records.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    let mut data = Vec::with_capacity(records.len() * fm.n_cols());
    for r in &records {
        let i = fm.row_index(&r.utterance_id).ok_or_else(|| {
            Error::InvalidFeatureMatrix(format!("{} has no row for utterance {}", fm.name(), r.utterance_id))
        })?;
        data.extend_from_slice(fm.row(i));
    }
    let x = Matrix::new(data, records.len(), fm.n_cols())?;
    let targets: BTreeMap<Dimension, Vec<f64>> = cfg
        .dims
        .iter()
        .map(|&d| (d, records.iter().map(|r| r.target(d)).collect()))
        .collect();

    let speakers = m.speakers();
    if speakers.len() < 2 {
        return Err(Error::TooFewSpeakers(speakers.len()));
    }
    let folds = speakers
        .par_iter()
        .map(|speaker| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..records.len()).partition(|&i| &records[i].speaker_id == speaker);
            let results =
                evaluate_fold(&x, &targets, &train, &test, &candidates, cfg).map_err(|e| Error::FoldFailure {
                    speaker: speaker.clone(),
                    source: Box::new(e),
                })?;
            Ok(FoldResult {
                speaker: speaker.clone(),
                n_train: train.len(),
                n_test: test.len(),
                results,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let aggregates = cfg
        .dims
        .iter()
        .map(|&d| {
            let values: Vec<f64> = folds
                .iter()
                .map(|f| f.mse(d).expect("every fold has every dim"))
                .collect();
            Aggregate::from_values(d, &values)
        })
        .collect();
    Ok(EvaluationReport {
        feature_set: fm.name().to_string(),
        config: cfg.clone(),
        folds,
        aggregates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub feature_set: String,
    pub arousal_mean: Option<f64>,
    pub arousal_variance: Option<f64>,
    pub valence_mean: Option<f64>,
    pub valence_variance: Option<f64>,
}

/// Feature sets × {arousal mean, arousal variance, valence mean, valence
/// variance}, with the lowest mean per dimension flagged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub best_arousal: Option<usize>,
    pub best_valence: Option<usize>,
}

pub const COMPARISON_COLUMNS: [&str; 4] = ["arousal_mean", "arousal_variance", "valence_mean", "valence_variance"];

fn argmin(values: impl Iterator<Item = Option<f64>>) -> Option<usize> {
    values
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

pub fn compare_feature_sets(reports: &[EvaluationReport]) -> Result<ComparisonTable> {
    if let Some(first) = reports.first() {
        let shape = |r: &EvaluationReport| -> Vec<(String, usize)> {
            r.folds.iter().map(|f| (f.speaker.clone(), f.n_test)).collect()
        };
        let reference = shape(first);
        for r in &reports[1..] {
            if shape(r) != reference {
                return Err(Error::FoldStructureMismatch(format!(
                    "{} and {} were evaluated on different folds",
                    first.feature_set, r.feature_set
                )));
            }
        }
    }
    let rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            feature_set: r.feature_set.clone(),
            arousal_mean: r.aggregate(Dimension::Arousal).map(|a| a.mean),
            arousal_variance: r.aggregate(Dimension::Arousal).map(|a| a.variance),
            valence_mean: r.aggregate(Dimension::Valence).map(|a| a.mean),
            valence_variance: r.aggregate(Dimension::Valence).map(|a| a.variance),
        })
        .collect();
    Ok(ComparisonTable {
        best_arousal: argmin(rows.iter().map(|r| r.arousal_mean)),
        best_valence: argmin(rows.iter().map(|r| r.valence_mean)),
        rows,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

impl ComparisonRow {
    fn numbers(&self) -> [Option<f64>; 4] {
        [
            self.arousal_mean,
            self.arousal_variance,
            self.valence_mean,
            self.valence_variance,
        ]
    }
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("feature_set,{}\n", COMPARISON_COLUMNS.join(","));
        for r in &self.rows {
            let nums: Vec<String> = r
                .numbers()
                .iter()
                .map(|v| v.map_or(String::new(), |v| format!("{v:?}")))
                .collect();
            let _ = writeln!(out, "{},{}", r.feature_set, nums.join(","));
        }
        out
    }

    /// Aligned plain-text table; `*` marks the lowest mean per dimension.
    pub fn to_text(&self) -> String {
        let mut cells: Vec<[String; 5]> = vec![[
            String::new(),
            "Arousal mean".into(),
            "Arousal var".into(),
            "Valence mean".into(),
            "Valence var".into(),
        ]];
        for (i, r) in self.rows.iter().enumerate() {
            let [am, av, vm, vv] = r.numbers();
            let star = |best: Option<usize>| if best == Some(i) { "*" } else { "" };
            cells.push([
                r.feature_set.clone(),
                format!("{}{}", cell(am), star(self.best_arousal)),
                cell(av),
                format!("{}{}", cell(vm), star(self.best_valence)),
                cell(vv),
            ]);
        }
        let widths: Vec<usize> = (0..5)
            .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if c == 0 {
                        format!("{s:<w$}", w = widths[c])
                    } else {
                        format!("{s:>w$}", w = widths[c])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}
