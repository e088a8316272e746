use std::io::Write;

use super::EvalError;
use crate::dataset::{FeatureBank, PairLabel};
use crate::ranknet::{HeadKind, ModelError, RankerModel};

#[derive(Clone, Debug, PartialEq)]
pub struct GapRow {
    /// `burst/better>other`
    pub pair_id: String,
    /// `x_better − x_other`, one entry per latent attribute.
    pub gaps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeGapReport {
    pub attrs: usize,
    pub rows: Vec<GapRow>,
}

/// Per-coordinate counts over shared bin edges.
#[derive(Clone, Debug, PartialEq)]
pub struct GapHistogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    /// `counts[bin][coord]`
    pub counts: Vec<Vec<u64>>,
}

/// Latent attribute gaps `x_A − x_B` for every non-tie pair.
pub fn attribute_gap_report(
    model: &RankerModel,
    pairs: &[PairLabel],
    bank: &FeatureBank,
) -> Result<AttributeGapReport, EvalError> {
    if model.kind() != HeadKind::C {
        return Err(ModelError::WrongHead {
            expected: HeadKind::C,
            found: model.kind(),
        }
        .into());
    }
    let attrs_of = |burst: &str, frame: &str| -> Result<Vec<f64>, EvalError> {
        let map = bank.get(burst, frame).ok_or_else(|| EvalError::MissingFeature {
            burst_id: burst.into(),
            frame_id: frame.into(),
        })?;
        Ok(model.attribute_vector(map)?)
    };
    let mut rows = Vec::new();
    for p in pairs.iter().filter(|p| !p.is_tie()) {
        let xa = attrs_of(&p.burst_id, &p.better)?;
        let xb = attrs_of(&p.burst_id, &p.other)?;
        rows.push(GapRow {
            pair_id: format!("{}/{}>{}", p.burst_id, p.better, p.other),
            gaps: xa.iter().zip(&xb).map(|(a, b)| a - b).collect(),
        });
    }
    Ok(AttributeGapReport {
        attrs: model.attrs(),
        rows,
    })
}

fn csv_err(e: impl std::fmt::Display) -> EvalError {
    EvalError::Io {
        path: "<csv>".into(),
        msg: e.to_string(),
    }
}

fn coord_header(attrs: usize) -> impl Iterator<Item = String> {
    (0..attrs).map(|k| format!("coord_{k}"))
}

impl AttributeGapReport {
    pub fn column(&self, coord: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.gaps[coord]).collect()
    }

    /// `pair_id,coord_0,…`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvalError> {
        let mut out = csv::Writer::from_writer(w);
        let header: Vec<String> = std::iter::once("pair_id".to_string()).chain(coord_header(self.attrs)).collect();
        out.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let rec: Vec<String> = std::iter::once(r.pair_id.clone())
                .chain(r.gaps.iter().map(|g| g.to_string()))
                .collect();
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush().map_err(csv_err)
    }

    /// Equal-width bins over `range`, or over `[-m, m]` with `m` the largest
    /// absolute gap. Values outside the range are clamped into the end bins.
    pub fn histogram(&self, bins: usize, range: Option<(f64, f64)>) -> Result<GapHistogram, EvalError> {
        if bins == 0 {
            return Err(EvalError::Invalid("histogram needs at least one bin".into()));
        }
        let (lo, hi) = match range {
            Some((lo, hi)) if lo < hi => (lo, hi),
            Some(_) => return Err(EvalError::Invalid("histogram range must be increasing".into())),
            None => {
                let m = self
                    .rows
                    .iter()
                    .flat_map(|r| r.gaps.iter())
                    .fold(0.0f64, |m, g| m.max(g.abs()));
                let m = if m > 0.0 { m } else { 1.0 };
                (-m, m)
            }
        };
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![vec![0u64; self.attrs]; bins];
        for r in &self.rows {
            for (k, &g) in r.gaps.iter().enumerate() {
                let b = (((g - lo) / width).floor().max(0.0) as usize).min(bins - 1);
                counts[b][k] += 1;
            }
        }
        Ok(GapHistogram { edges, counts })
    }
}

impl GapHistogram {
    /// `bin_lo,bin_hi,coord_0,…`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvalError> {
        let attrs = self.counts.first().map_or(0, |c| c.len());
        let mut out = csv::Writer::from_writer(w);
        let header: Vec<String> = ["bin_lo".to_string(), "bin_hi".to_string()]
            .into_iter()
            .chain(coord_header(attrs))
            .collect();
        out.write_record(&header).map_err(csv_err)?;
        for (b, row) in self.counts.iter().enumerate() {
            let rec: Vec<String> = [self.edges[b].to_string(), self.edges[b + 1].to_string()]
                .into_iter()
                .chain(row.iter().map(|c| c.to_string()))
                .collect();
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush().map_err(csv_err)
    }
}

/// Pearson correlation; `None` if either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len().min(b.len());
    if n < 2 {
        return None;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (da, db) = (a[i] - ma, b[i] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}
