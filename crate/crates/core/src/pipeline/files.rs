//! `clip_id,method_or_category,value` CSVs emitted by the score and classify
//! steps, and trial JSON collections.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::difficulty::{DifficultyCategory, DifficultyScore, ScoreMethod};
use crate::error::{Error, Result};
use crate::stats::TrialResult;

pub const DIFFICULTY_HEADER: &str = "clip_id,method_or_category,value";

pub fn scores_csv(scores: &[DifficultyScore]) -> String {
    let mut out = format!("{DIFFICULTY_HEADER}\n");
    for s in scores {
        let _ = writeln!(out, "{},{},{}", s.clip_id, s.method, s.value);
    }
    out
}

/// Category rows carry the category number (1-4) as their value.
pub fn categories_csv(categories: &BTreeMap<String, DifficultyCategory>) -> String {
    let mut out = format!("{DIFFICULTY_HEADER}\n");
    for (id, c) in categories {
        let _ = writeln!(out, "{id},{c},{}", c.number());
    }
    out
}

/// Parsed contents of a score or category CSV.
#[derive(Debug, Clone, PartialEq)]
pub enum DifficultyFile {
    Scores(Vec<DifficultyScore>),
    Categories(BTreeMap<String, DifficultyCategory>),
}

impl DifficultyFile {
    pub fn clip_ids(&self) -> Vec<String> {
        match self {
            DifficultyFile::Scores(s) => s.iter().map(|s| s.clip_id.clone()).collect(),
            DifficultyFile::Categories(c) => c.keys().cloned().collect(),
        }
    }
}

pub fn read_difficulty_csv(path: &Path) -> Result<DifficultyFile> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == DIFFICULTY_HEADER => {}
        _ => {
            return Err(Error::parse(
                &display,
                1,
                format!("expected header {DIFFICULTY_HEADER:?}"),
            ))
        }
    }

    let mut scores = Vec::new();
    let mut cats = BTreeMap::new();
    for (i, line) in lines {
        let lineno = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(Error::parse(
                &display,
                lineno,
                format!("expected 3 columns, found {}", cols.len()),
            ));
        }
        let (id, kind, value) = (cols[0], cols[1], cols[2]);
        if let Ok(method) = kind.parse::<ScoreMethod>() {
            let value: f64 = value
                .parse()
                .map_err(|_| Error::parse(&display, lineno, format!("invalid score {value:?}")))?;
            scores.push(DifficultyScore {
                clip_id: id.to_owned(),
                method,
                value,
            });
        } else {
            let cat: DifficultyCategory = kind
                .parse()
                .map_err(|e: String| Error::parse(&display, lineno, e))?;
            if cats.insert(id.to_owned(), cat).is_some() {
                return Err(Error::integrity(format!(
                    "{display}: clip {id} categorised twice"
                )));
            }
        }
    }
    match (scores.is_empty(), cats.is_empty()) {
        (false, true) => Ok(DifficultyFile::Scores(scores)),
        (true, false) => Ok(DifficultyFile::Categories(cats)),
        (true, true) => Err(Error::integrity(format!("{display}: no rows"))),
        (false, false) => Err(Error::integrity(format!(
            "{display}: mixes scores and categories"
        ))),
    }
}

/// Loads trial JSONs from files, or from every `*.json` below a directory
/// (recursively, in path order).
pub fn load_trials(paths: &[PathBuf]) -> Result<Vec<TrialResult>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            collect_json(p, &mut files)?;
        } else {
            files.push(p.clone());
        }
    }
    files
        .iter()
        .map(|f| {
            let text = fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
            TrialResult::from_json(&text)
        })
        .collect()
}

fn collect_json(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_json(&p, out)?;
        } else if p.extension().is_some_and(|x| x == "json") {
            out.push(p);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_and_category_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let scores = vec![
            DifficultyScore {
                clip_id: "a".into(),
                method: ScoreMethod::Entropy,
                value: 0.950_271_3,
            },
            DifficultyScore {
                clip_id: "b".into(),
                method: ScoreMethod::Entropy,
                value: 0.0,
            },
        ];
        let p = dir.path().join("s.csv");
        fs::write(&p, scores_csv(&scores)).unwrap();
        assert_eq!(
            read_difficulty_csv(&p).unwrap(),
            DifficultyFile::Scores(scores)
        );

        let mut cats = BTreeMap::new();
        cats.insert("x".to_owned(), DifficultyCategory::AmbiguousMismatch);
        let p = dir.path().join("c.csv");
        fs::write(&p, categories_csv(&cats)).unwrap();
        assert!(fs::read_to_string(&p)
            .unwrap()
            .contains("x,ambiguous_mismatch,4"));
        assert_eq!(
            read_difficulty_csv(&p).unwrap(),
            DifficultyFile::Categories(cats)
        );
    }

    #[test]
    fn malformed_difficulty_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, format!("{DIFFICULTY_HEADER}\na,entropy,zz\n")).unwrap();
        assert!(matches!(
            read_difficulty_csv(&p),
            Err(Error::Parse { line: 2, .. })
        ));
        fs::write(
            &p,
            format!("{DIFFICULTY_HEADER}\na,entropy,0.1\nb,clear_match,1\n"),
        )
        .unwrap();
        assert!(read_difficulty_csv(&p).is_err());
        fs::write(&p, "nope\n").unwrap();
        assert!(read_difficulty_csv(&p).is_err());
    }
}
