//! Time pooling of gated activations into per-utterance feature vectors,
//! and the `N × D` feature matrix shared by analysis and evaluation.
//!
//! Feature index `j` maps to layer `j / C`, channel `j % C`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcu_net::{ActivationTensor, ModelConfig};

/// Layer/channel geometry of a neural feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub layers: usize,
    pub channels: usize,
}

impl FeatureLayout {
    pub fn dim(&self) -> usize {
        self.layers * self.channels
    }

    pub fn index(&self, layer: usize, channel: usize) -> usize {
        layer * self.channels + channel
    }

    pub fn layer_of(&self, j: usize) -> usize {
        j / self.channels
    }

    pub fn channel_of(&self, j: usize) -> usize {
        j % self.channels
    }
}

impl From<&ModelConfig> for FeatureLayout {
    fn from(cfg: &ModelConfig) -> Self {
        FeatureLayout {
            layers: cfg.total_layers(),
            channels: cfg.channels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Max,
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "max" => Ok(Pooling::Max),
            other => Err(Error::InvalidConfig(format!("unknown pooling {other:?} (mean|max)"))),
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Mean => "mean",
            Pooling::Max => "max",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralFeatureVector {
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
    pub utterance_id: String,
}

impl NeuralFeatureVector {
    pub fn layer_of(&self, j: usize) -> usize {
        self.layout.layer_of(j)
    }
}

fn pool(a: &ActivationTensor, reduce: impl Fn(&[f32]) -> f64) -> Result<NeuralFeatureVector> {
    if a.frames() == 0 {
        return Err(Error::EmptyTensor);
    }
    let layout = FeatureLayout {
        layers: a.layers(),
        channels: a.channels(),
    };
    let values = a.values().chunks_exact(a.frames()).map(reduce).collect();
    Ok(NeuralFeatureVector {
        values,
        layout,
        utterance_id: a.utterance_id().to_string(),
    })
}

pub fn mean_pool(a: &ActivationTensor) -> Result<NeuralFeatureVector> {
    let t = a.frames() as f64;
    pool(a, |unit| unit.iter().map(|&v| v as f64).sum::<f64>() / t)
}

pub fn max_pool(a: &ActivationTensor) -> Result<NeuralFeatureVector> {
    pool(a, |unit| unit.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64)
}

pub fn pool_with(a: &ActivationTensor, pooling: Pooling) -> Result<NeuralFeatureVector> {
    match pooling {
        Pooling::Mean => mean_pool(a),
        Pooling::Max => max_pool(a),
    }
}

/// Which layers a feature subset is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSelector {
    First(usize),
    Last(usize),
    All,
}

impl FromStr for LayerSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("bad layer selector {s:?} (first:K|last:K|all)"));
        if s == "all" {
            return Ok(LayerSelector::All);
        }
        let (kind, k) = s.split_once(':').ok_or_else(bad)?;
        let k: usize = k.parse().map_err(|_| bad())?;
        match kind {
            "first" => Ok(LayerSelector::First(k)),
            "last" => Ok(LayerSelector::Last(k)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for LayerSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelector::First(k) => write!(f, "first:{k}"),
            LayerSelector::Last(k) => write!(f, "last:{k}"),
            LayerSelector::All => f.write_str("all"),
        }
    }
}

impl LayerSelector {
    /// Short label used in feature-set names, e.g. `first3`.
    pub fn label(&self) -> String {
        match self {
            LayerSelector::First(k) => format!("first{k}"),
            LayerSelector::Last(k) => format!("last{k}"),
            LayerSelector::All => "all".into(),
        }
    }
}

pub fn layer_feature_indices(layout: &FeatureLayout, selector: LayerSelector) -> Result<Vec<usize>> {
    let c = layout.channels;
    let layers = match selector {
        LayerSelector::All => 0..layout.layers,
        LayerSelector::First(k) | LayerSelector::Last(k) if k > layout.layers => {
            return Err(Error::KOutOfRange { k, max: layout.layers });
        }
        LayerSelector::First(k) => 0..k,
        LayerSelector::Last(k) => layout.layers - k..layout.layers,
    };
    Ok((layers.start * c..layers.end * c).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Arousal,
    Valence,
}

impl Dimension {
    pub const ALL: [Dimension; 2] = [Dimension::Arousal, Dimension::Valence];

    pub fn name(&self) -> &'static str {
        match self {
            Dimension::Arousal => "arousal",
            Dimension::Valence => "valence",
        }
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "valence" => Ok(Dimension::Valence),
            "arousal" => Ok(Dimension::Arousal),
            other => Err(Error::InvalidConfig(format!(
                "unknown dimension {other:?} (valence|arousal)"
            ))),
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {rows} x {cols}",
                data.len()
            )));
        }
        Ok(Matrix { data, rows, cols })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            data,
            rows: rows.len(),
            cols: self.cols,
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for i in 0..self.rows {
            let row = self.row(i);
            data.extend(cols.iter().map(|&j| row[j]));
        }
        Matrix {
            data,
            rows: self.rows,
            cols: cols.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowMeta {
    pub utterance_id: String,
    pub speaker_id: String,
    pub session: u32,
    pub valence: f64,
    pub arousal: f64,
}

impl RowMeta {
    pub fn target(&self, dim: Dimension) -> f64 {
        match dim {
            Dimension::Valence => self.valence,
            Dimension::Arousal => self.arousal,
        }
    }
}

pub(crate) fn check_rating(value: f64, field: &'static str, row: usize) -> Result<()> {
    if (1.0..=5.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::RangeViolation { row, field, value })
    }
}

/// Utterance-by-feature table with per-row metadata and targets.
///
/// Rows are appended by a single writer; lookups by utterance id go through
/// an index kept in sync with the rows.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    name: String,
    columns: Vec<String>,
    layout: Option<FeatureLayout>,
    attributes: BTreeMap<String, String>,
    rows: Vec<RowMeta>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

pub fn neural_column_names(dim: usize) -> Vec<String> {
    (0..dim).map(|j| format!("f{j:04}")).collect()
}

const META_COLUMNS: [&str; 5] = ["utterance_id", "speaker_id", "session", "valence", "arousal"];

impl FeatureMatrix {
    pub fn new(name: impl Into<String>, columns: Vec<String>, layout: Option<FeatureLayout>) -> Result<Self> {
        if let Some(l) = layout {
            if l.dim() != columns.len() {
                return Err(Error::InvalidFeatureMatrix(format!(
                    "layout {}x{} does not match {} columns",
                    l.layers,
                    l.channels,
                    columns.len()
                )));
            }
        }
        Ok(FeatureMatrix {
            name: name.into(),
            columns,
            layout,
            attributes: BTreeMap::new(),
            rows: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn neural(name: impl Into<String>, layout: FeatureLayout) -> Self {
        Self::new(name, neural_column_names(layout.dim()), Some(layout)).expect("layout matches columns")
    }

    pub fn push_row(&mut self, meta: RowMeta, values: &[f64]) -> Result<()> {
        let row = self.rows.len() + 1;
        if values.len() != self.columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "row {} has {} features, matrix has {}",
                meta.utterance_id,
                values.len(),
                self.columns.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFeatureMatrix(format!(
                "non-finite value in column {} of {}",
                self.columns[j], meta.utterance_id
            )));
        }
        check_rating(meta.valence, "valence", row)?;
        check_rating(meta.arousal, "arousal", row)?;
        if self.index.contains_key(&meta.utterance_id) {
            return Err(Error::DuplicateId(meta.utterance_id));
        }
        self.index.insert(meta.utterance_id.clone(), self.rows.len());
        self.rows.push(meta);
        self.data.extend_from_slice(values);
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn layout(&self) -> Option<FeatureLayout> {
        self.layout
    }

    pub fn attributes(&self) -> &BTreeMap<String, String> {
        &self.attributes
    }

    /// Extra `key=value` provenance written as header comments.
    pub fn set_attribute(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.attributes.insert(key.into(), value.into());
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn meta(&self, i: usize) -> &RowMeta {
        &self.rows[i]
    }

    pub fn metas(&self) -> &[RowMeta] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.row(i)[j]).collect()
    }

    pub fn targets(&self, dim: Dimension) -> Vec<f64> {
        self.rows.iter().map(|m| m.target(dim)).collect()
    }

    pub fn row_index(&self, utterance_id: &str) -> Option<usize> {
        self.index.get(utterance_id).copied()
    }

    pub fn matrix(&self) -> Matrix {
        Matrix {
            data: self.data.clone(),
            rows: self.n_rows(),
            cols: self.n_cols(),
        }
    }

    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.rows.iter().map(|m| m.speaker_id.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<FeatureMatrix> {
        let mut out = FeatureMatrix::new(self.name.clone(), self.columns.clone(), self.layout)?;
        out.attributes = self.attributes.clone();
        for &r in rows {
            out.push_row(self.rows[r].clone(), self.row(r))?;
        }
        Ok(out)
    }

    pub fn for_speaker(&self, speaker_id: &str) -> Result<FeatureMatrix> {
        let rows: Vec<usize> = (0..self.n_rows())
            .filter(|&i| self.rows[i].speaker_id == speaker_id)
            .collect();
        if rows.is_empty() {
            return Err(Error::UnknownSpeaker(speaker_id.to_string()));
        }
        self.select_rows(&rows)
    }

    /// CSV with `# key=value` comment lines, then
    /// `utterance_id,speaker_id,session,valence,arousal,<features>`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut header = format!("# feature_set={}\n", self.name);
        if let Some(l) = self.layout {
            header.push_str(&format!(
                "# layout=layer-major layers={} channels={}\n",
                l.layers, l.channels
            ));
        }
        for (k, v) in &self.attributes {
            header.push_str(&format!("# {k}={v}\n"));
        }
        file.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(
            META_COLUMNS
                .iter()
                .copied()
                .chain(self.columns.iter().map(String::as_str)),
        )?;
        for (i, m) in self.rows.iter().enumerate() {
            let mut rec = vec![
                m.utterance_id.clone(),
                m.speaker_id.clone(),
                m.session.to_string(),
                format!("{:?}", m.valence),
                format!("{:?}", m.arousal),
            ];
            rec.extend(self.row(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |row: usize, detail: String| Error::ParseError {
            path: path.to_path_buf(),
            row,
            detail,
        };
        let mut comments = BTreeMap::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some((k, v)) = line.trim_start_matches('#').trim().split_once('=') {
                comments.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let name = comments.remove("feature_set").unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "features".into())
        });
        let layout = match comments.remove("layout") {
            Some(spec) => Some(parse_layout(&spec).ok_or_else(|| parse_err(0, format!("bad layout {spec:?}")))?),
            None => None,
        };
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.len() < META_COLUMNS.len() || headers.iter().zip(META_COLUMNS).any(|(a, b)| a != b) {
            return Err(parse_err(
                1,
                format!("header must start with {}", META_COLUMNS.join(",")),
            ));
        }
        let columns: Vec<String> = headers.iter().skip(META_COLUMNS.len()).map(String::from).collect();
        let mut fm = FeatureMatrix::new(name, columns, layout)?;
        fm.attributes = comments;
        for (i, rec) in reader.records().enumerate() {
            let row = i + 1;
            let rec = rec?;
            let num = |j: usize| -> Result<f64> {
                rec[j]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(row, format!("column {} = {:?} is not a number", &headers[j], &rec[j])))
            };
            let meta = RowMeta {
                utterance_id: rec[0].to_string(),
                speaker_id: rec[1].to_string(),
                session: rec[2]
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(row, format!("session {:?} is not an integer", &rec[2])))?,
                valence: num(3)?,
                arousal: num(4)?,
            };
            let values = (META_COLUMNS.len()..rec.len()).map(num).collect::<Result<Vec<_>>>()?;
            fm.push_row(meta, &values).map_err(|e| match e {
                Error::RangeViolation { field, value, .. } => Error::RangeViolation { row, field, value },
                other => other,
            })?;
        }
        Ok(fm)
    }
}

fn parse_layout(spec: &str) -> Option<FeatureLayout> {
    let mut layers = None;
    let mut channels = None;
    for part in spec.split_whitespace() {
        if let Some(v) = part.strip_prefix("layers=") {
            layers = v.parse().ok();
        } else if let Some(v) = part.strip_prefix("channels=") {
            channels = v.parse().ok();
        }
    }
    Some(FeatureLayout {
        layers: layers?,
        channels: channels?,
    })
}
