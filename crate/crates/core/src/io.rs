//! CSV and JSON interchange formats.
//!
//! * Label CSV: `worker_id,item_id,label`, one row per observation.
//! * Gold and prediction CSV: `item_id,label`.
//! * Parameter JSON: `w` or `p_plus`/`p_minus`, `pi`, `q`, optional
//!   `workers`/`items` id lists fixing the index order.
//!
//! External string ids map to dense indices in order of first appearance,
//! unless an id list is supplied up front.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DawidSkeneParams, GoldLabels, Label, LabelMatrix, Prediction, SamplingDesign};

/// Label encoding on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    /// `-1` / `1`.
    #[default]
    Signed,
    /// `0` / `1`, with `0` read as the negative class.
    ZeroOne,
}

impl Encoding {
    fn parse(self, text: &str) -> Option<Label> {
        match (self, text.trim()) {
            (_, "1") | (Encoding::Signed, "+1") => Some(Label::Pos),
            (Encoding::Signed, "-1") | (Encoding::ZeroOne, "0") => Some(Label::Neg),
            _ => None,
        }
    }

    fn render(self, label: Label) -> &'static str {
        match (self, label) {
            (_, Label::Pos) => "1",
            (Encoding::Signed, Label::Neg) => "-1",
            (Encoding::ZeroOne, Label::Neg) => "0",
        }
    }

    fn expected(self) -> &'static str {
        match self {
            Encoding::Signed => "-1 or 1",
            Encoding::ZeroOne => "0 or 1",
        }
    }
}

/// Bidirectional map between external ids and dense indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fails on a repeated id.
    pub fn from_ids<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut map = IdMap::new();
        for id in ids {
            let id = id.into();
            if map.index.contains_key(&id) {
                return Err(Error::invalid(format!("id `{id}` listed twice")));
            }
            map.insert(id);
        }
        Ok(map)
    }

    /// `prefix0, prefix1, ...`.
    pub fn numbered(prefix: &str, count: usize) -> Self {
        IdMap::from_ids((0..count).map(|k| format!("{prefix}{k}"))).expect("distinct ids")
    }

    fn insert(&mut self, id: String) -> usize {
        let k = self.ids.len();
        self.index.insert(id.clone(), k);
        self.ids.push(id);
        k
    }

    pub fn get_or_insert(&mut self, id: &str) -> usize {
        match self.index.get(id) {
            Some(&k) => k,
            None => self.insert(id.to_string()),
        }
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Observations with the id maps they were read through.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub labels: LabelMatrix,
    pub workers: IdMap,
    pub items: IdMap,
    pub gold: Option<GoldLabels>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a headed CSV with `header.len()` columns. Yields the line number and
/// the fields of each record.
fn read_records<R: Read>(
    reader: R,
    source: &Path,
    header: &[&str],
) -> Result<Vec<(u64, Vec<String>)>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found = csv.headers().map_err(|e| parse_error(source, 1, e.to_string()))?;
    if found.len() != header.len() {
        return Err(parse_error(
            source,
            1,
            format!("expected header `{}`", header.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(source, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(parse_error(source, 1, "no data rows after the header"));
    }
    Ok(rows)
}

/// Raw observations keyed by dense indices, before the item count is final.
#[derive(Debug, Clone, Default)]
pub struct Observations {
    pub workers: IdMap,
    pub items: IdMap,
    pub entries: Vec<(usize, usize, Label)>,
}

impl Observations {
    pub fn into_matrix(self) -> Result<(LabelMatrix, IdMap, IdMap)> {
        let labels = LabelMatrix::new(self.workers.len(), self.items.len(), self.entries)?;
        Ok((labels, self.workers, self.items))
    }
}

/// Parses a label CSV. Ids not in the supplied maps are appended to them.
pub fn read_observations<R: Read>(
    reader: R,
    source: &Path,
    encoding: Encoding,
    workers: IdMap,
    items: IdMap,
) -> Result<Observations> {
    let mut obs = Observations {
        workers,
        items,
        entries: Vec::new(),
    };
    let mut seen: HashMap<(usize, usize), u64> = HashMap::new();
    for (line, fields) in read_records(reader, source, &["worker_id", "item_id", "label"])? {
        let [w, j, z] = &fields[..] else {
            return Err(parse_error(source, line, "expected 3 fields"));
        };
        let label = encoding.parse(z).ok_or_else(|| {
            parse_error(
                source,
                line,
                format!("label `{z}` is not {}", encoding.expected()),
            )
        })?;
        let w = obs.workers.get_or_insert(w);
        let j = obs.items.get_or_insert(j);
        if let Some(first) = seen.insert((w, j), line) {
            return Err(parse_error(
                source,
                line,
                format!(
                    "duplicate label for worker `{}` and item `{}` (first on line {first})",
                    obs.workers.id(w),
                    obs.items.id(j)
                ),
            ));
        }
        obs.entries.push((w, j, label));
    }
    Ok(obs)
}

/// Parses a gold CSV. Unknown item ids are appended to `items`.
pub fn read_gold_pairs<R: Read>(
    reader: R,
    source: &Path,
    encoding: Encoding,
    items: &mut IdMap,
) -> Result<Vec<(usize, Label)>> {
    let mut seen: HashMap<usize, u64> = HashMap::new();
    let mut pairs = Vec::new();
    for (line, fields) in read_records(reader, source, &["item_id", "label"])? {
        let [j, y] = &fields[..] else {
            return Err(parse_error(source, line, "expected 2 fields"));
        };
        let label = encoding.parse(y).ok_or_else(|| {
            parse_error(
                source,
                line,
                format!("label `{y}` is not {}", encoding.expected()),
            )
        })?;
        let j = items.get_or_insert(j);
        if let Some(first) = seen.insert(j, line) {
            return Err(parse_error(
                source,
                line,
                format!("duplicate gold label for item `{}` (first on line {first})", items.id(j)),
            ));
        }
        pairs.push((j, label));
    }
    Ok(pairs)
}

/// Loads a label CSV and optional gold CSV. Gold-only items join the item
/// set as items without observations. `ids` pre-seeds the worker and item
/// order (as stored in a parameter file).
pub fn load_dataset(
    labels: &Path,
    gold: Option<&Path>,
    encoding: Encoding,
    ids: Option<(IdMap, IdMap)>,
) -> Result<Dataset> {
    let (workers, items) = ids.unwrap_or_default();
    let mut obs = read_observations(open(labels)?, labels, encoding, workers, items)?;
    let gold_pairs = match gold {
        Some(path) => Some(read_gold_pairs(open(path)?, path, encoding, &mut obs.items)?),
        None => None,
    };
    let (matrix, workers, items) = obs.into_matrix()?;
    let gold = gold_pairs
        .map(|pairs| GoldLabels::new(items.len(), pairs))
        .transpose()?;
    Ok(Dataset {
        labels: matrix,
        workers,
        items,
        gold,
    })
}

fn flush<W: Write>(mut writer: csv::Writer<W>, target: &Path) -> Result<()> {
    writer.flush().map_err(|e| Error::io(target, e))
}

/// Writes observations item-major, workers ascending within an item.
pub fn write_labels<W: Write>(
    labels: &LabelMatrix,
    workers: &IdMap,
    items: &IdMap,
    encoding: Encoding,
    out: W,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["worker_id", "item_id", "label"])?;
    for (w, j, z) in labels.entries() {
        writer.write_record([workers.id(w), items.id(j), encoding.render(z)])?;
    }
    flush(writer, Path::new("<labels>"))
}

fn write_item_labels<W: Write>(
    rows: impl Iterator<Item = (usize, Label)>,
    items: &IdMap,
    encoding: Encoding,
    out: W,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["item_id", "label"])?;
    for (j, y) in rows {
        writer.write_record([items.id(j), encoding.render(y)])?;
    }
    flush(writer, Path::new("<items>"))
}

pub fn write_gold<W: Write>(gold: &GoldLabels, items: &IdMap, encoding: Encoding, out: W) -> Result<()> {
    write_item_labels(gold.iter(), items, encoding, out)
}

/// One row per item, in index order.
pub fn write_predictions<W: Write>(
    pred: &Prediction,
    items: &IdMap,
    encoding: Encoding,
    out: W,
) -> Result<()> {
    write_item_labels(pred.labels.iter().copied().enumerate(), items, encoding, out)
}

/// Writes to `path` through a buffered file.
pub fn to_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<File>) -> Result<()>,
{
    let mut file = std::io::BufWriter::new(create(path)?);
    f(&mut file)?;
    file.flush().map_err(|e| Error::io(path, e))
}

/// Worker parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_plus: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_minus: Option<Vec<f64>>,
    pub pi: f64,
    pub q: SamplingDesign,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Vec<String>>,
}

impl ParamsFile {
    /// `w` is written when sensitivity equals specificity for every worker.
    pub fn from_params(params: &DawidSkeneParams, ids: Option<(&IdMap, &IdMap)>) -> Self {
        let (w, p_plus, p_minus) = match params.to_one_coin() {
            Some(one) => (Some(one.accuracy().to_vec()), None, None),
            None => (
                None,
                Some(params.sensitivity().to_vec()),
                Some(params.specificity().to_vec()),
            ),
        };
        ParamsFile {
            w,
            p_plus,
            p_minus,
            pi: params.prior(),
            q: params.sampling().clone(),
            workers: ids.map(|(w, _)| w.ids().to_vec()),
            items: ids.map(|(_, i)| i.ids().to_vec()),
        }
    }

    pub fn to_params(&self) -> Result<DawidSkeneParams> {
        let (sens, spec) = match (&self.w, &self.p_plus, &self.p_minus) {
            (Some(w), None, None) => (w.clone(), w.clone()),
            (None, Some(p), Some(m)) => (p.clone(), m.clone()),
            _ => {
                return Err(Error::invalid(
                    "parameter file needs either `w` or both `p_plus` and `p_minus`",
                ))
            }
        };
        if let Some(workers) = &self.workers {
            if workers.len() != sens.len() {
                return Err(Error::DimensionMismatch {
                    what: "parameter file `workers`",
                    expected: sens.len(),
                    actual: workers.len(),
                });
            }
        }
        if let (Some(items), Some(n)) = (&self.items, self.q.num_items()) {
            if items.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "parameter file `items`",
                    expected: n,
                    actual: items.len(),
                });
            }
        }
        DawidSkeneParams::new(sens, spec, self.pi, self.q.clone())
    }

    /// The stored id lists, empty maps where absent.
    pub fn id_maps(&self) -> Result<(IdMap, IdMap)> {
        let workers = match &self.workers {
            Some(ids) => IdMap::from_ids(ids.iter().cloned())?,
            None => IdMap::new(),
        };
        let items = match &self.items {
            Some(ids) => IdMap::from_ids(ids.iter().cloned())?,
            None => IdMap::new(),
        };
        Ok((workers, items))
    }
}

pub fn read_params(path: &Path) -> Result<ParamsFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e.line() as u64, e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    to_file(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))
    })
}
