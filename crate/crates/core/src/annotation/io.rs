//! Canonical annotation CSV and feature file readers/writers.
//!
//! Annotation rows are `clip_id,actor_id,sentence_id,intended,modality,
//! ANG,DIS,FEA,HAP,NEU,SAD,N`, one per (clip, modality). Feature files hold
//! one record per clip: `clip_id`, `T`, `D`, then `T*D` row-major values,
//! either as CSV or as little-endian binary
//! (`u32 id_len, id bytes, u32 T, u32 D, f64 * T*D`).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Clip, Dataset, Emotion, FeatureSequence, Modality, VoteRecord};
use crate::error::{Error, Result};

pub const ANNOTATION_HEADER: [&str; 12] = [
    "clip_id",
    "actor_id",
    "sentence_id",
    "intended",
    "modality",
    "ANG",
    "DIS",
    "FEA",
    "HAP",
    "NEU",
    "SAD",
    "N",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Csv,
    Binary,
}

impl FeatureFormat {
    /// `.bin` selects the binary variant; anything else is CSV.
    pub fn from_path(path: &Path) -> FeatureFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("bin") => FeatureFormat::Binary,
            _ => FeatureFormat::Csv,
        }
    }
}

/// Loads annotations and, optionally, features into a validated [`Dataset`].
pub fn load_dataset(annotations: &Path, features: Option<&Path>) -> Result<Dataset> {
    let (clips, votes) = load_annotations(annotations)?;
    let feats = match features {
        Some(p) => load_features(p, FeatureFormat::from_path(p))?,
        None => Vec::new(),
    };
    Dataset::new(clips, votes, feats)
}

/// Parses an annotation CSV. Clips are returned in order of first appearance.
pub fn load_annotations(path: &Path) -> Result<(Vec<Clip>, Vec<VoteRecord>)> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));

    let mut clips: Vec<Clip> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut votes = Vec::new();

    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(&display, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        if i == 0 {
            let header: Vec<&str> = record.iter().collect();
            if header != ANNOTATION_HEADER {
                return Err(Error::parse(
                    &display,
                    line,
                    format!("expected header {:?}", ANNOTATION_HEADER.join(",")),
                ));
            }
            continue;
        }
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != ANNOTATION_HEADER.len() {
            return Err(Error::parse(
                &display,
                line,
                format!(
                    "expected {} columns, found {}",
                    ANNOTATION_HEADER.len(),
                    record.len()
                ),
            ));
        }

        let clip_id = record[0].to_owned();
        if clip_id.is_empty() {
            return Err(Error::parse(&display, line, "empty clip_id"));
        }
        let intended: Emotion = record[3]
            .parse()
            .map_err(|e: String| Error::parse(&display, line, e))?;
        let modality: Modality = record[4]
            .parse()
            .map_err(|e: String| Error::parse(&display, line, e))?;
        let mut counts = [0u32; Emotion::COUNT];
        for (k, slot) in counts.iter_mut().enumerate() {
            *slot = parse_count(&record[5 + k], ANNOTATION_HEADER[5 + k])
                .map_err(|m| Error::parse(&display, line, m))?;
        }
        let total = parse_count(&record[11], "N").map_err(|m| Error::parse(&display, line, m))?;

        let clip = Clip {
            clip_id: clip_id.clone(),
            actor_id: record[1].to_owned(),
            sentence_id: record[2].to_owned(),
            intended,
        };
        match seen.get(&clip_id) {
            Some(&idx) if clips[idx] != clip => {
                return Err(Error::integrity(format!(
                    "line {line}: clip {clip_id} redeclared with different actor/sentence/intended"
                )));
            }
            Some(_) => {}
            None => {
                seen.insert(clip_id.clone(), clips.len());
                clips.push(clip);
            }
        }

        let vote =
            VoteRecord::with_total(clip_id, modality, counts, total).map_err(|e| match e {
                Error::Integrity(m) => Error::integrity(format!("line {line}: {m}")),
                other => other,
            })?;
        votes.push(vote);
    }

    Ok((clips, votes))
}

fn parse_count(token: &str, column: &str) -> std::result::Result<u32, String> {
    if token.starts_with('-') {
        return Err(format!("negative count {token:?} in column {column}"));
    }
    token
        .parse::<u32>()
        .map_err(|_| format!("invalid count {token:?} in column {column}"))
}

/// Writes the canonical annotation CSV, one row per vote record in order.
pub fn write_annotations(path: &Path, dataset: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(ANNOTATION_HEADER).map_err(csv_err)?;
    for vote in dataset.votes() {
        let clip = dataset
            .clip(&vote.clip_id)
            .expect("dataset invariant: votes reference clips");
        let mut row: Vec<String> = vec![
            clip.clip_id.clone(),
            clip.actor_id.clone(),
            clip.sentence_id.clone(),
            clip.intended.code().to_owned(),
            vote.modality.as_str().to_owned(),
        ];
        row.extend(vote.counts().iter().map(|c| c.to_string()));
        row.push(vote.total().to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_features(path: &Path, format: FeatureFormat) -> Result<Vec<FeatureSequence>> {
    match format {
        FeatureFormat::Csv => load_features_csv(path),
        FeatureFormat::Binary => load_features_bin(path),
    }
}

fn load_features_csv(path: &Path) -> Result<Vec<FeatureSequence>> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));

    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(&display, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() < 3 {
            return Err(Error::parse(
                &display,
                line,
                "expected clip_id,T,D,values...",
            ));
        }
        let frames: usize = record[1]
            .parse()
            .map_err(|_| Error::parse(&display, line, format!("invalid T {:?}", &record[1])))?;
        let dim: usize = record[2]
            .parse()
            .map_err(|_| Error::parse(&display, line, format!("invalid D {:?}", &record[2])))?;
        if record.len() - 3 != frames * dim {
            return Err(Error::parse(
                &display,
                line,
                format!(
                    "expected {} values for T={frames}, D={dim}, found {}",
                    frames * dim,
                    record.len() - 3
                ),
            ));
        }
        let data = record
            .iter()
            .skip(3)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::parse(&display, line, format!("invalid value {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let seq = FeatureSequence::new(&record[0], frames, dim, data)
            .map_err(|e| Error::parse(&display, line, e.to_string()))?;
        out.push(seq);
    }
    Ok(out)
}

fn load_features_bin(path: &Path) -> Result<Vec<FeatureSequence>> {
    let display = path.display().to_string();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;

    let mut cursor = ByteCursor {
        bytes: &bytes,
        pos: 0,
    };
    let mut out = Vec::new();
    let mut record = 0u64;
    while !cursor.at_end() {
        record += 1;
        let truncated = |what: &str| {
            Error::parse(
                &display,
                record,
                format!("truncated record: missing {what}"),
            )
        };
        let id_len = cursor.u32().ok_or_else(|| truncated("id length"))? as usize;
        let id_bytes = cursor.take(id_len).ok_or_else(|| truncated("clip id"))?;
        let clip_id = std::str::from_utf8(id_bytes)
            .map_err(|_| Error::parse(&display, record, "clip id is not UTF-8"))?
            .to_owned();
        let frames = cursor.u32().ok_or_else(|| truncated("T"))? as usize;
        let dim = cursor.u32().ok_or_else(|| truncated("D"))? as usize;
        let n = frames
            .checked_mul(dim)
            .ok_or_else(|| Error::parse(&display, record, "T*D overflows"))?;
        let raw = cursor
            .take(n.checked_mul(8).ok_or_else(|| truncated("values"))?)
            .ok_or_else(|| truncated("values"))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let seq = FeatureSequence::new(clip_id, frames, dim, data)
            .map_err(|e| Error::parse(&display, record, e.to_string()))?;
        out.push(seq);
    }
    Ok(out)
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let slice = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(slice)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

/// Writes all dataset features in clip order, in the format implied by `path`.
pub fn write_features(path: &Path, dataset: &Dataset) -> Result<()> {
    let seqs: Vec<&FeatureSequence> = dataset
        .clips()
        .iter()
        .filter_map(|c| dataset.feature(&c.clip_id))
        .collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    match FeatureFormat::from_path(path) {
        FeatureFormat::Csv => {
            for seq in seqs {
                write!(w, "{},{},{}", seq.clip_id, seq.frames(), seq.dim()).map_err(io_err)?;
                for v in seq.data() {
                    write!(w, ",{v}").map_err(io_err)?;
                }
                writeln!(w).map_err(io_err)?;
            }
        }
        FeatureFormat::Binary => {
            for seq in seqs {
                let id = seq.clip_id.as_bytes();
                w.write_all(&(id.len() as u32).to_le_bytes())
                    .map_err(io_err)?;
                w.write_all(id).map_err(io_err)?;
                w.write_all(&(seq.frames() as u32).to_le_bytes())
                    .map_err(io_err)?;
                w.write_all(&(seq.dim() as u32).to_le_bytes())
                    .map_err(io_err)?;
                for v in seq.data() {
                    w.write_all(&v.to_le_bytes()).map_err(io_err)?;
                }
            }
        }
    }
    w.flush().map_err(io_err)
}
