//! Dataset records and loaders: the tab-separated question-pair file and the
//! comma-separated grouped-text file (header `text,category,group_id`).

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// One labeled question pair.
#[derive(Debug, Clone)]
pub struct PairRecord {
    pub q1: String,
    pub q2: String,
    pub is_duplicate: bool,
}

/// Result of loading the pair TSV: parsed records plus the count of rows
/// skipped for missing or malformed fields.
#[derive(Debug)]
pub struct PairLoad {
    pub records: Vec<PairRecord>,
    pub skipped: usize,
}

const QUORA_HEADER: [&str; 6] = ["id", "qid1", "qid2", "question1", "question2", "is_duplicate"];

/// Load the pair dataset: tab-separated, header
/// `id qid1 qid2 question1 question2 is_duplicate`, label in {0,1}.
/// Malformed rows are skipped and counted, not fatal.
pub fn load_quora_tsv<P: AsRef<Path>>(path: P) -> Result<PairLoad> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {}", path.display(), e)))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: cannot read header: {}", path.display(), e)))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != QUORA_HEADER {
        return Err(Error::Data(format!(
            "{}: expected header {:?}, found {:?}",
            path.display(),
            QUORA_HEADER,
            got
        )));
    }

    let mut records = Vec::new();
    let mut skipped = 0usize;
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        if row.len() != 6 {
            skipped += 1;
            continue;
        }
        let q1 = row[3].trim();
        let q2 = row[4].trim();
        let label = row[5].trim();
        let is_duplicate = match label {
            "0" => false,
            "1" => true,
            _ => {
                skipped += 1;
                continue;
            }
        };
        if q1.is_empty() || q2.is_empty() {
            skipped += 1;
            continue;
        }
        records.push(PairRecord {
            q1: q1.to_string(),
            q2: q2.to_string(),
            is_duplicate,
        });
    }
    Ok(PairLoad { records, skipped })
}

/// Train/test split of the pair dataset. Training holds duplicate pairs
/// only; the test set holds the held-out duplicates plus sampled
/// non-duplicates.
#[derive(Debug)]
pub struct PairSplit {
    pub train: Vec<PairRecord>,
    pub test: Vec<PairRecord>,
}

/// Shuffle the duplicate pairs, send floor(n*train_ratio) to train and the
/// rest to test, then append `extra_negatives` sampled non-duplicate pairs
/// to the test set.
pub fn split_quora(
    records: &[PairRecord],
    train_ratio: f64,
    extra_negatives: usize,
    rng: &mut SeededRng,
) -> Result<PairSplit> {
    let mut duplicates: Vec<PairRecord> = records
        .iter()
        .filter(|r| r.is_duplicate)
        .cloned()
        .collect();
    let mut negatives: Vec<PairRecord> = records
        .iter()
        .filter(|r| !r.is_duplicate)
        .cloned()
        .collect();
    if extra_negatives > negatives.len() {
        return Err(Error::Data(format!(
            "requested {} negatives but only {} non-duplicate pairs are available",
            extra_negatives,
            negatives.len()
        )));
    }
    rng.shuffle(&mut duplicates);
    let train_count = ((duplicates.len() as f64) * train_ratio).floor() as usize;
    let train_count = train_count.min(duplicates.len());
    let test: Vec<PairRecord> = duplicates.split_off(train_count);
    let train = duplicates;

    rng.shuffle(&mut negatives);
    negatives.truncate(extra_negatives);

    let mut test = test;
    test.extend(negatives);
    Ok(PairSplit { train, test })
}

/// One row of the grouped-text dataset.
#[derive(Debug, Clone)]
pub struct GroupRecord {
    pub text: String,
    pub category: String,
    pub group_id: u64,
}

/// Parsed grouped dataset with the category list in first-appearance order.
#[derive(Debug)]
pub struct GroupedData {
    pub records: Vec<GroupRecord>,
    pub categories: Vec<String>,
}

impl GroupedData {
    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == name)
    }

    /// Group ids in first-appearance order with their member record indices.
    pub fn groups(&self) -> Vec<(u64, Vec<usize>)> {
        let mut order: Vec<u64> = Vec::new();
        let mut members: std::collections::HashMap<u64, Vec<usize>> =
            std::collections::HashMap::new();
        for (i, rec) in self.records.iter().enumerate() {
            let entry = members.entry(rec.group_id).or_default();
            if entry.is_empty() {
                order.push(rec.group_id);
            }
            entry.push(i);
        }
        order
            .into_iter()
            .map(|gid| {
                let m = members.remove(&gid).unwrap();
                (gid, m)
            })
            .collect()
    }
}

/// Load the grouped CSV (`text,category,group_id`, RFC-4180 quoting).
/// Every record of a group must carry the same category.
pub fn load_grouped_csv<P: AsRef<Path>>(path: P) -> Result<GroupedData> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {}", path.display(), e)))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: cannot read header: {}", path.display(), e)))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != ["text", "category", "group_id"] {
        return Err(Error::Data(format!(
            "{}: expected header [\"text\", \"category\", \"group_id\"], found {:?}",
            path.display(),
            got
        )));
    }

    let mut records = Vec::new();
    let mut categories: Vec<String> = Vec::new();
    let mut group_category: std::collections::HashMap<u64, String> =
        std::collections::HashMap::new();
    for (rownum, row) in reader.records().enumerate() {
        let row = row.map_err(|e| {
            Error::Data(format!("{}: row {}: {}", path.display(), rownum + 2, e))
        })?;
        if row.len() != 3 {
            return Err(Error::Data(format!(
                "{}: row {}: expected 3 fields, found {}",
                path.display(),
                rownum + 2,
                row.len()
            )));
        }
        let text = row[0].trim().to_string();
        let category = row[1].trim().to_string();
        let group_id: u64 = row[2].trim().parse().map_err(|_| {
            Error::Data(format!(
                "{}: row {}: group_id {:?} is not an integer",
                path.display(),
                rownum + 2,
                &row[2]
            ))
        })?;
        match group_category.get(&group_id) {
            Some(existing) if existing != &category => {
                return Err(Error::Data(format!(
                    "group {} spans two categories: {:?} and {:?}",
                    group_id, existing, category
                )));
            }
            Some(_) => {}
            None => {
                group_category.insert(group_id, category.clone());
            }
        }
        if !categories.iter().any(|c| c == &category) {
            categories.push(category.clone());
        }
        records.push(GroupRecord {
            text,
            category,
            group_id,
        });
    }
    if records.is_empty() {
        return Err(Error::Data(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(GroupedData {
        records,
        categories,
    })
}
