//! Dataset ingestion, splitting, and pool bookkeeping.
//!
//! A [`Dataset`] is an immutable, ordered list of texts whose ids are their
//! positions. A [`Pool`] tracks which of those positions have been labeled so
//! far and by whom.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Ordered class names. The position of a name is its class index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSchema {
    class_names: Vec<String>,
}

impl LabelSchema {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let class_names: Vec<String> = names.into_iter().map(Into::into).collect();
        if class_names.len() < 2 {
            return Err(Error::InvalidSchema(format!(
                "need at least 2 classes, got {}",
                class_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &class_names {
            if name.is_empty() {
                return Err(Error::InvalidSchema("empty class name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate class name {name:?}")));
            }
        }
        Ok(Self { class_names })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|n| n == name)
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.class_names.get(index).map(String::as_str)
    }

    pub fn check_class(&self, index: usize) -> Result<()> {
        if index < self.num_classes() {
            Ok(())
        } else {
            Err(Error::InvalidClass {
                index,
                num_classes: self.num_classes(),
            })
        }
    }
}

impl TryFrom<Vec<String>> for LabelSchema {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        LabelSchema::new(names)
    }
}

impl From<LabelSchema> for Vec<String> {
    fn from(schema: LabelSchema) -> Self {
        schema.class_names
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: usize,
    pub text: String,
    pub gold_label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    schema: LabelSchema,
    instances: Vec<Instance>,
}

impl Dataset {
    /// Builds a dataset from `(text, gold label)` pairs, assigning ids by
    /// position.
    pub fn new<I, S>(schema: LabelSchema, records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Option<usize>)>,
        S: Into<String>,
    {
        let mut instances = Vec::new();
        for (id, (text, gold_label)) in records.into_iter().enumerate() {
            if let Some(label) = gold_label {
                schema.check_class(label)?;
            }
            instances.push(Instance {
                id,
                text: text.into(),
                gold_label,
            });
        }
        if instances.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { schema, instances })
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Instance> {
        self.instances.get(id)
    }

    pub fn texts(&self) -> Vec<&str> {
        self.instances.iter().map(|i| i.text.as_str()).collect()
    }

    pub fn gold_label(&self, id: usize) -> Result<usize> {
        self.get(id)
            .and_then(|i| i.gold_label)
            .ok_or(Error::MissingGoldLabel(id))
    }

    /// Copies the given positions into a new dataset, renumbering ids.
    pub fn subset(&self, ids: &[usize]) -> Result<Self> {
        let records = ids
            .iter()
            .map(|&id| {
                self.get(id)
                    .map(|i| (i.text.clone(), i.gold_label))
                    .ok_or(Error::InsufficientPool {
                        requested: id + 1,
                        available: self.len(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.schema.clone(), records)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Jsonl,
    Csv,
}

impl DataFormat {
    /// Guesses the format from the file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Jsonl,
        }
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    id: Option<usize>,
    text: String,
    #[serde(default)]
    label: Option<String>,
}

fn resolve_label(schema: &LabelSchema, line: usize, label: Option<&str>) -> Result<Option<usize>> {
    match label {
        None | Some("") => Ok(None),
        Some(name) => schema.index_of(name).map(Some).ok_or_else(|| Error::UnknownLabel {
            line,
            label: name.to_string(),
        }),
    }
}

pub fn load_dataset(path: &Path, format: DataFormat, schema: &LabelSchema) -> Result<Dataset> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = match format {
        DataFormat::Jsonl => parse_jsonl(&raw, schema)?,
        DataFormat::Csv => parse_csv(&raw, schema)?,
    };
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(schema.clone(), records)
}

fn parse_jsonl(raw: &str, schema: &LabelSchema) -> Result<Vec<(String, Option<usize>)>> {
    let mut records = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        let line_number = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonRecord = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            line: line_number,
            reason: e.to_string(),
        })?;
        if let Some(id) = record.id {
            if id != records.len() {
                return Err(Error::MalformedRecord {
                    line: line_number,
                    reason: format!("id {id} does not match record position {}", records.len()),
                });
            }
        }
        let label = resolve_label(schema, line_number, record.label.as_deref())?;
        records.push((record.text, label));
    }
    Ok(records)
}

fn parse_csv(raw: &str, schema: &LabelSchema) -> Result<Vec<(String, Option<usize>)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(raw.as_bytes());
    let headers = reader.headers().map_err(|e| Error::MalformedRecord {
        line: 1,
        reason: e.to_string(),
    })?;
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (text_col, label_col) = match (column("text"), column("label")) {
        (Some(t), Some(l)) => (t, l),
        _ => {
            return Err(Error::MalformedRecord {
                line: 1,
                reason: "header must contain columns `text,label`".into(),
            })
        }
    };
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::MalformedRecord {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let text = row.get(text_col).ok_or_else(|| Error::MalformedRecord {
            line,
            reason: "missing text column".into(),
        })?;
        let label = resolve_label(schema, line, row.get(label_col).map(str::trim))?;
        records.push((text.to_string(), label));
    }
    Ok(records)
}

/// Index sets of a train/test split, both ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(d: &Dataset, test_fraction: f64, seed: u64, stratified: bool) -> Result<SplitIndices> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidSplit(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n = d.len();
    // The epsilon keeps exact products such as 100 * 0.1 from flooring down.
    let test_size = (n as f64 * test_fraction + 1e-9).floor() as usize;
    if test_size == 0 || test_size >= n {
        return Err(Error::InvalidSplit(format!(
            "fraction {test_fraction} of {n} instances leaves an empty split"
        )));
    }
    let mut rng = seed::rng(seed);

    let mut test = if stratified {
        let c = d.schema().num_classes();
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
        for inst in d.instances() {
            let label = inst.gold_label.ok_or(Error::MissingGoldLabel(inst.id))?;
            by_class[label].push(inst.id);
        }
        for (class, members) in by_class.iter().enumerate() {
            if !members.is_empty() && members.len() < 2 {
                return Err(Error::InsufficientClass {
                    class: d.schema().name(class).unwrap_or_default().to_string(),
                    needed: 2,
                    available: members.len(),
                });
            }
        }
        let mut take: Vec<usize> = by_class
            .iter()
            .map(|m| (m.len() as f64 * test_fraction + 1e-9).floor() as usize)
            .collect();
        let mut remaining = test_size.saturating_sub(take.iter().sum());
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|&a, &b| by_class[b].len().cmp(&by_class[a].len()).then(a.cmp(&b)));
        while remaining > 0 {
            let mut progressed = false;
            for &class in &order {
                if remaining == 0 {
                    break;
                }
                // Keep at least one instance of every class on the train side.
                if take[class] + 1 < by_class[class].len() {
                    take[class] += 1;
                    remaining -= 1;
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
        let mut test = Vec::with_capacity(test_size);
        for (class, members) in by_class.iter_mut().enumerate() {
            members.shuffle(&mut rng);
            test.extend_from_slice(&members[..take[class]]);
        }
        test
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all.truncate(test_size);
        all
    };
    test.sort_unstable();
    let in_test: HashSet<usize> = test.iter().copied().collect();
    let train = (0..n).filter(|i| !in_test.contains(i)).collect();
    Ok(SplitIndices { train, test })
}

/// Splits a dataset into renumbered train and test datasets.
pub fn split_dataset(d: &Dataset, test_fraction: f64, seed: u64, stratified: bool) -> Result<(Dataset, Dataset)> {
    let split = split_indices(d, test_fraction, seed, stratified)?;
    Ok((d.subset(&split.train)?, d.subset(&split.test)?))
}

/// Labeled/unlabeled partition over the positions of a fixed dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pool {
    size: usize,
    /// Labeled positions in the order they were labeled.
    labeled: Vec<usize>,
    unlabeled: BTreeSet<usize>,
    labels: BTreeMap<usize, usize>,
}

impl Pool {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            labeled: Vec::new(),
            unlabeled: (0..size).collect(),
            labels: BTreeMap::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<usize> {
        &self.unlabeled
    }

    pub fn unlabeled_vec(&self) -> Vec<usize> {
        self.unlabeled.iter().copied().collect()
    }

    pub fn label_of(&self, index: usize) -> Option<usize> {
        self.labels.get(&index).copied()
    }

    /// `(index, label)` pairs in labeling order.
    pub fn labeled_pairs(&self) -> Vec<(usize, usize)> {
        self.labeled.iter().map(|&i| (i, self.labels[&i])).collect()
    }

    /// Moves the given indices from the unlabeled to the labeled set.
    pub fn assign(&mut self, labeled: &[(usize, usize)]) -> Result<()> {
        let mut seen = HashSet::new();
        for &(index, _) in labeled {
            if !self.unlabeled.contains(&index) || !seen.insert(index) {
                return Err(Error::Oracle(format!("index {index} is not an unlabeled pool member")));
            }
        }
        for &(index, label) in labeled {
            self.unlabeled.remove(&index);
            self.labeled.push(index);
            self.labels.insert(index, label);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeedMode {
    #[default]
    Random,
    ClassBalanced,
}

/// Picks the initial labeled set from the pool's unlabeled indices.
///
/// Class-balanced mode takes `size / c` instances per gold class and draws the
/// remainder uniformly from what is left. The result is ascending.
pub fn init_seed_set(pool: &Pool, dataset: &Dataset, size: usize, mode: SeedMode, seed: u64) -> Result<Vec<usize>> {
    let available = pool.unlabeled().len();
    if size > available {
        return Err(Error::InsufficientPool {
            requested: size,
            available,
        });
    }
    let mut rng = seed::rng(seed);
    let mut candidates = pool.unlabeled_vec();
    let mut chosen = match mode {
        SeedMode::Random => {
            candidates.shuffle(&mut rng);
            candidates.truncate(size);
            candidates
        }
        SeedMode::ClassBalanced => {
            let schema = dataset.schema();
            let c = schema.num_classes();
            let per_class = size / c;
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
            for &index in &candidates {
                let label = dataset.gold_label(index)?;
                by_class[label].push(index);
            }
            let mut chosen = Vec::with_capacity(size);
            for (class, members) in by_class.iter_mut().enumerate() {
                if members.len() < per_class {
                    return Err(Error::InsufficientClass {
                        class: schema.name(class).unwrap_or_default().to_string(),
                        needed: per_class,
                        available: members.len(),
                    });
                }
                members.shuffle(&mut rng);
                chosen.extend_from_slice(&members[..per_class]);
            }
            let taken: HashSet<usize> = chosen.iter().copied().collect();
            let mut rest: Vec<usize> = candidates.into_iter().filter(|i| !taken.contains(i)).collect();
            rest.shuffle(&mut rng);
            chosen.extend(rest.into_iter().take(size - chosen.len()));
            chosen
        }
    };
    chosen.sort_unstable();
    Ok(chosen)
}
