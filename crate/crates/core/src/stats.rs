//! Per-speaker Pearson correlation between neural features and a target
//! dimension, laid out as a layer × channel heat map.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{Dimension, FeatureLayout, FeatureMatrix};

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

/// Product-moment correlation, clamped to [-1, 1].
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            found: x.len(),
        });
    }
    if is_constant(x) || is_constant(y) {
        return Err(Error::ZeroVariance);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap {
    /// `layers × channels`, row-major.
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
    pub dimension: Dimension,
    pub speaker_id: String,
    /// Cells whose feature or target had zero variance; stored as 0.
    pub degenerate_count: usize,
}

impl CorrelationMap {
    pub fn get(&self, layer: usize, channel: usize) -> f64 {
        self.values[self.layout.index(layer, channel)]
    }

    pub fn layer_row(&self, layer: usize) -> &[f64] {
        let c = self.layout.channels;
        &self.values[layer * c..(layer + 1) * c]
    }
}

/// Correlation of every feature column with `dim` over the rows of `fm`,
/// which must all belong to one speaker.
pub fn correlation_map(fm: &FeatureMatrix, dim: Dimension, layout: &FeatureLayout) -> Result<CorrelationMap> {
    if fm.n_rows() < 2 {
        return Err(Error::TooFewUtterances {
            needed: 2,
            found: fm.n_rows(),
        });
    }
    if layout.dim() != fm.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "layout {}x{} vs {} feature columns",
            layout.layers,
            layout.channels,
            fm.n_cols()
        )));
    }
    let speakers = fm.speakers();
    if speakers.len() != 1 {
        return Err(Error::InvalidFeatureMatrix(format!(
            "correlation map needs a single speaker, found {}",
            speakers.len()
        )));
    }
    let y = fm.targets(dim);
    let mut degenerate = 0;
    let values = (0..fm.n_cols())
        .map(|j| match pearson(&fm.column(j), &y) {
            Ok(r) => Ok(r),
            Err(Error::ZeroVariance) => {
                degenerate += 1;
                Ok(0.0)
            }
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationMap {
        values,
        layout: *layout,
        dimension: dim,
        speaker_id: speakers.into_iter().next().unwrap(),
        degenerate_count: degenerate,
    })
}

/// One CSV row per layer, one column per channel, nine decimals.
pub fn export_heatmap_csv(m: &CorrelationMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "# speaker={}", m.speaker_id).map_err(io)?;
    writeln!(w, "# dimension={}", m.dimension).map_err(io)?;
    writeln!(w, "# degenerate={}", m.degenerate_count).map_err(io)?;
    for l in 0..m.layout.layers {
        let line: Vec<String> = m.layer_row(l).iter().map(|r| format!("{r:.9}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn import_heatmap_csv(path: impl AsRef<Path>) -> Result<CorrelationMap> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |row: usize, detail: String| Error::ParseError {
        path: path.to_path_buf(),
        row,
        detail,
    };
    let (mut speaker, mut dimension, mut degenerate) = (None, None, 0);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(comment) = line.strip_prefix('#') {
            match comment.trim().split_once('=') {
                Some(("speaker", v)) => speaker = Some(v.to_string()),
                Some(("dimension", v)) => dimension = Some(v.parse()?),
                Some(("degenerate", v)) => {
                    degenerate = v.parse().map_err(|_| parse_err(i + 1, format!("bad count {v:?}")))?
                }
                _ => {}
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(i + 1, format!("bad value {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(parse_err(i + 1, "ragged heat map row".into()));
        }
        rows.push(row);
    }
    let layout = FeatureLayout {
        layers: rows.len(),
        channels: rows.first().map_or(0, Vec::len),
    };
    Ok(CorrelationMap {
        values: rows.concat(),
        layout,
        dimension: dimension.ok_or_else(|| parse_err(0, "missing dimension comment".into()))?,
        speaker_id: speaker.ok_or_else(|| parse_err(0, "missing speaker comment".into()))?,
        degenerate_count: degenerate,
    })
}
