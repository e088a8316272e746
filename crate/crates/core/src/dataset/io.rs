//! Manifest (JSON) and pairs (CSV) files.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{consolidate_votes, Burst, DatasetError, LabeledDataset, PairLabel, VoteSet};

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    bursts: Vec<Burst>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_bursts(path: &Path) -> Result<Vec<Burst>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let manifest: ManifestFile = serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
        file: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    Ok(manifest.bursts)
}

fn check_refs(ds: &LabeledDataset) -> Result<(), DatasetError> {
    for b in ds.bursts() {
        for f in &b.frames {
            if f.feature_ref.is_empty() {
                return Err(DatasetError::MissingFeature {
                    burst_id: b.burst_id.clone(),
                    frame_id: f.frame_id.clone(),
                    path: String::new(),
                });
            }
            let p = ds.resolve_ref(f);
            if !p.is_file() {
                return Err(DatasetError::MissingFeature {
                    burst_id: b.burst_id.clone(),
                    frame_id: f.frame_id.clone(),
                    path: p.display().to_string(),
                });
            }
        }
    }
    Ok(())
}

/// Loads and validates a manifest with no pair labels. Every feature
/// reference must resolve to an existing file.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<LabeledDataset, DatasetError> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let ds = LabeledDataset::new(parse_bursts(path)?, Vec::new())?.with_base_dir(base);
    check_refs(&ds)?;
    Ok(ds)
}

/// Loads a manifest together with its pairs file.
pub fn load_dataset(manifest: impl AsRef<Path>, pairs: impl AsRef<Path>) -> Result<LabeledDataset, DatasetError> {
    let ds = load_manifest(manifest)?;
    let labels = read_pairs_csv(pairs)?;
    if labels.is_empty() {
        log::warn!("dataset has no labeled pairs");
    }
    let ds = ds.with_pairs(labels)?;
    if let Some(t) = ds.tie_fraction() {
        log::info!(
            "loaded {} bursts, {} pairs, tie fraction {:.3}",
            ds.num_bursts(),
            ds.pairs().len(),
            t
        );
    }
    Ok(ds)
}

pub fn write_manifest(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let manifest = ManifestFile {
        bursts: ds.bursts().cloned().collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| DatasetError::Invalid(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

#[derive(Debug, PartialEq)]
enum PairsFormat {
    Consolidated,
    Raw(usize),
}

fn detect_format(header: &csv::StringRecord, file: &str) -> Result<PairsFormat, DatasetError> {
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let bad = |msg: &str| DatasetError::Parse {
        file: file.to_string(),
        line: 1,
        msg: msg.to_string(),
    };
    if cols.len() < 4 || cols[..3] != ["burst_id", "frame_a", "frame_b"] {
        return Err(bad("header must start with burst_id,frame_a,frame_b"));
    }
    if cols.len() == 4 && cols[3] == "delta_y" {
        return Ok(PairsFormat::Consolidated);
    }
    let votes = &cols[3..];
    if votes.iter().enumerate().all(|(i, c)| *c == format!("v{}", i + 1)) {
        return Ok(PairsFormat::Raw(votes.len()));
    }
    Err(bad("expected a delta_y column or vote columns v1..vN"))
}

/// Reads a pairs CSV in either layout; raw votes are consolidated.
pub fn read_pairs_csv(path: impl AsRef<Path>) -> Result<Vec<PairLabel>, DatasetError> {
    let path = path.as_ref();
    let file_name = path.display().to_string();
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| DatasetError::Parse {
            file: file_name.clone(),
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let format = detect_format(&header, &file_name)?;

    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| DatasetError::Parse {
            file: file_name.clone(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse_err = |msg: String| DatasetError::Parse {
            file: file_name.clone(),
            line,
            msg,
        };
        let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
        let (burst, a, b) = (field(0), field(1), field(2));
        if burst.is_empty() || a.is_empty() || b.is_empty() {
            return Err(parse_err("empty id field".into()));
        }
        if a == b {
            return Err(parse_err(format!("frame '{a}' paired with itself")));
        }
        let label = match format {
            PairsFormat::Consolidated => {
                let dy: u8 = field(3)
                    .parse()
                    .ok()
                    .filter(|d| *d <= 2)
                    .ok_or_else(|| parse_err(format!("delta_y '{}' not in {{0,1,2}}", field(3))))?;
                PairLabel::oriented(burst, a, b, dy as i8)
            }
            PairsFormat::Raw(n) => {
                let votes = (0..n)
                    .map(|i| {
                        field(3 + i)
                            .parse::<i8>()
                            .ok()
                            .filter(|v| (-2..=2).contains(v))
                            .ok_or_else(|| parse_err(format!("vote '{}' not in [-2, 2]", field(3 + i))))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                consolidate_votes(&VoteSet {
                    burst_id: burst.to_string(),
                    frame_a: a.to_string(),
                    frame_b: b.to_string(),
                    votes,
                })
                .map_err(|e| parse_err(e.to_string()))?
            }
        };
        out.push(label);
    }
    Ok(out)
}

/// Writes consolidated labels (`burst_id,frame_a,frame_b,delta_y`).
pub fn write_pairs_csv(pairs: &[PairLabel], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut f = File::create(path).map_err(io_err(path))?;
    let mut text = String::from("burst_id,frame_a,frame_b,delta_y\n");
    for p in pairs {
        text.push_str(&format!("{},{},{},{}\n", p.burst_id, p.better, p.other, p.delta_y));
    }
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

/// Writes raw votes (`burst_id,frame_a,frame_b,v1..vN`).
pub fn write_votes_csv(votes: &[VoteSet], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let n = votes.first().map(|v| v.votes.len()).unwrap_or(5);
    if votes.iter().any(|v| v.votes.len() != n) {
        return Err(DatasetError::Invalid("vote sets have differing voter counts".into()));
    }
    let mut text = String::from("burst_id,frame_a,frame_b");
    for i in 1..=n {
        text.push_str(&format!(",v{i}"));
    }
    text.push('\n');
    for v in votes {
        text.push_str(&format!("{},{},{}", v.burst_id, v.frame_a, v.frame_b));
        for x in &v.votes {
            text.push_str(&format!(",{x}"));
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}
