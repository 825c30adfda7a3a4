//! Feature rows for the explainable regressor.
//!
//! Word-level features come from lookup tables supplied as two-column TSV
//! files (`word<TAB>value`): corpus counts, CEFR levels and arbitrary numeric
//! norms. Prompt-derived values are keyed by item id. A JSON schema lists the
//! features to build, in order:
//!
//! ```json
//! [{"name": "len", "source": "word_length", "required": true},
//!  {"name": "freq_bnc", "source": "log_frequency:bnc", "required": false}]
//! ```
//!
//! Recognized sources are `word_length`, `l1_similarity`,
//! `log_frequency:<table>`, `cefr:<table>`, `numeric:<table>` and
//! `prompt:<key>`. Unavailable values are `None` and exported as `NA`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::data_model::TestItem;
use crate::error::{Error, Result};

/// Marker for a missing value in exported feature matrices.
pub const MISSING_MARKER: &str = "NA";

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    pub name: String,
    counts: HashMap<String, f64>,
    total: f64,
}

impl FrequencyTable {
    /// `total` defaults to the sum of all counts; range tables (number of
    /// documents or channels containing the word) should pass the number of
    /// documents explicitly.
    pub fn new(name: impl Into<String>, counts: HashMap<String, f64>, total: Option<f64>) -> Result<Self> {
        let name = name.into();
        let mut lowered = HashMap::with_capacity(counts.len());
        for (word, count) in counts {
            if !(count.is_finite() && count >= 0.0) {
                return Err(Error::invalid(format!("{name}: bad count {count} for `{word}`")));
            }
            *lowered.entry(word.to_lowercase()).or_insert(0.0) += count;
        }
        let total = total.unwrap_or_else(|| lowered.values().sum());
        if !(total > 0.0) {
            return Err(Error::invalid(format!("{name}: total must be positive")));
        }
        if let Some((w, c)) = lowered.iter().find(|(_, c)| **c > total) {
            return Err(Error::invalid(format!("{name}: count {c} for `{w}` exceeds total {total}")));
        }
        Ok(FrequencyTable {
            name,
            counts: lowered,
            total,
        })
    }

    pub fn from_tsv<R: Read>(name: &str, input: R, total: Option<f64>) -> Result<Self> {
        let counts = read_word_values(input)?;
        FrequencyTable::new(name, counts.into_iter().collect(), total)
    }

    pub fn count(&self, word: &str) -> Option<f64> {
        self.counts.get(&word.to_lowercase()).copied()
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

/// Reads `word<TAB>value` lines. Blank lines and a leading header whose value
/// column is not numeric are skipped.
fn read_word_values<R: Read>(input: R) -> Result<Vec<(String, f64)>> {
    let reader = std::io::BufReader::new(input);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (word, value) = line
            .split_once('\t')
            .ok_or_else(|| Error::row(idx + 1, "expected two tab-separated columns"))?;
        match value.trim().parse::<f64>() {
            Ok(v) => out.push((word.trim().to_string(), v)),
            Err(_) if idx == 0 => continue,
            Err(_) => return Err(Error::row(idx + 1, format!("`{value}` is not numeric"))),
        }
    }
    Ok(out)
}

/// `ln(count + 1)`, or `None` for words absent from the table.
pub fn log_frequency(table: &FrequencyTable, word: &str) -> Option<f64> {
    table.count(word).map(|c| c.ln_1p())
}

/// Lowercase, expand `ß`, decompose and drop combining marks.
pub fn normalize_for_similarity(s: &str) -> String {
    s.to_lowercase()
        .replace('ß', "ss")
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .collect()
}

/// Character-level edit distance (unit costs).
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - lev(a, b) / max(|a|, |b|)` on normalized forms, evaluated as
/// `(max - lev) / max` so that exact fractions such as 1/5 stay exact.
pub fn l1_similarity(en_word: &str, l1_word: &str) -> Result<f64> {
    let a: Vec<char> = normalize_for_similarity(en_word).chars().collect();
    let b: Vec<char> = normalize_for_similarity(l1_word).chars().collect();
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("similarity of an empty word"));
    }
    let longest = a.len().max(b.len());
    Ok((longest - levenshtein(&a, &b)) as f64 / longest as f64)
}

/// Number of letters, ignoring spaces and hyphens.
pub fn word_length(en_word: &str) -> usize {
    en_word.chars().filter(|c| c.is_alphabetic()).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CefrLevel {
    A1,
    A2,
    B1,
    B2,
    C1,
    C2,
}

impl FromStr for CefrLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "A1" => CefrLevel::A1,
            "A2" => CefrLevel::A2,
            "B1" => CefrLevel::B1,
            "B2" => CefrLevel::B2,
            "C1" => CefrLevel::C1,
            "C2" => CefrLevel::C2,
            other => return Err(Error::invalid(format!("unknown CEFR level `{other}`"))),
        })
    }
}

/// A1 = 1 through C2 = 6.
pub fn encode_cefr(level: Option<CefrLevel>) -> Option<f64> {
    level.map(|l| f64::from(l as u8 + 1))
}

/// Minimum CEFR level per word.
pub fn read_cefr_table<R: Read>(input: R) -> Result<HashMap<String, CefrLevel>> {
    let reader = std::io::BufReader::new(input);
    let mut out: HashMap<String, CefrLevel> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (word, level) = line
            .split_once('\t')
            .ok_or_else(|| Error::row(idx + 1, "expected two tab-separated columns"))?;
        let level = match level.parse::<CefrLevel>() {
            Ok(l) => l,
            Err(_) if idx == 0 => continue,
            Err(e) => return Err(Error::row(idx + 1, e.to_string())),
        };
        out.entry(word.trim().to_lowercase())
            .and_modify(|l| *l = (*l).min(level))
            .or_insert(level);
    }
    Ok(out)
}

pub fn read_numeric_table<R: Read>(input: R) -> Result<HashMap<String, f64>> {
    Ok(read_word_values(input)?
        .into_iter()
        .map(|(w, v)| (w.to_lowercase(), v))
        .collect())
}

/// How multiword English entries are looked up in word tables.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiwordLookup {
    #[default]
    ExactString,
    FirstToken,
}

impl MultiwordLookup {
    fn key<'a>(&self, word: &'a str) -> &'a str {
        match self {
            MultiwordLookup::ExactString => word,
            MultiwordLookup::FirstToken => word.split([' ', '-']).next().unwrap_or(word),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureSource {
    WordLength,
    L1Similarity,
    LogFrequency(String),
    Cefr(String),
    Numeric(String),
    Prompt(String),
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a.to_string())),
            None => (s, None),
        };
        let need = |arg: Option<String>| {
            arg.filter(|a| !a.is_empty())
                .ok_or_else(|| Error::invalid(format!("feature source `{s}` needs a resource name")))
        };
        match kind {
            "word_length" if arg.is_none() => Ok(FeatureSource::WordLength),
            "l1_similarity" if arg.is_none() => Ok(FeatureSource::L1Similarity),
            "log_frequency" => Ok(FeatureSource::LogFrequency(need(arg)?)),
            "cefr" => Ok(FeatureSource::Cefr(need(arg)?)),
            "numeric" => Ok(FeatureSource::Numeric(need(arg)?)),
            "prompt" => Ok(FeatureSource::Prompt(need(arg)?)),
            _ => Err(Error::invalid(format!("unknown feature source `{s}`"))),
        }
    }
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSource::WordLength => f.write_str("word_length"),
            FeatureSource::L1Similarity => f.write_str("l1_similarity"),
            FeatureSource::LogFrequency(t) => write!(f, "log_frequency:{t}"),
            FeatureSource::Cefr(t) => write!(f, "cefr:{t}"),
            FeatureSource::Numeric(t) => write!(f, "numeric:{t}"),
            FeatureSource::Prompt(k) => write!(f, "prompt:{k}"),
        }
    }
}

impl Serialize for FeatureSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub source: FeatureSource,
    #[serde(default)]
    pub required: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub frequency: BTreeMap<String, FrequencyTable>,
    pub cefr: BTreeMap<String, HashMap<String, CefrLevel>>,
    pub numeric: BTreeMap<String, HashMap<String, f64>>,
    pub multiword: MultiwordLookup,
}

/// Prompt-derived values: key, then item id.
pub type PromptValues = BTreeMap<String, HashMap<String, f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub item_id: String,
    pub values: IndexMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssembledFeatures {
    pub rows: Vec<FeatureRow>,
    /// Fraction of rows with a missing value, per feature in schema order.
    pub missing_rates: IndexMap<String, f64>,
}

fn check_schema(schema: &[FeatureSpec], res: &Resources, prompts: &PromptValues) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for spec in schema {
        if !seen.insert(spec.name.as_str()) {
            return Err(Error::invalid(format!("feature `{}` listed twice", spec.name)));
        }
        let known = match &spec.source {
            FeatureSource::WordLength | FeatureSource::L1Similarity => true,
            FeatureSource::LogFrequency(t) => res.frequency.contains_key(t),
            FeatureSource::Cefr(t) => res.cefr.contains_key(t),
            FeatureSource::Numeric(t) => res.numeric.contains_key(t),
            FeatureSource::Prompt(k) => prompts.contains_key(k),
        };
        if !known {
            return Err(Error::UnknownResource(spec.source.to_string()));
        }
    }
    Ok(())
}

fn feature_value(
    spec: &FeatureSpec,
    item: &TestItem,
    res: &Resources,
    prompts: &PromptValues,
) -> Result<Option<f64>> {
    let key = res.multiword.key(&item.en_word).to_lowercase();
    Ok(match &spec.source {
        FeatureSource::WordLength => Some(word_length(&item.en_word) as f64),
        FeatureSource::L1Similarity => {
            if item.l1.is_alphabetic() {
                Some(l1_similarity(&item.en_word, &item.l1_word)?)
            } else {
                None
            }
        }
        FeatureSource::LogFrequency(t) => log_frequency(&res.frequency[t], &key),
        FeatureSource::Cefr(t) => encode_cefr(res.cefr[t].get(&key).copied()),
        FeatureSource::Numeric(t) => res.numeric[t].get(&key).copied(),
        FeatureSource::Prompt(k) => prompts[k].get(&item.item_id).copied(),
    })
}

/// One row per item, in input order.
pub fn assemble(
    items: &[TestItem],
    schema: &[FeatureSpec],
    resources: &Resources,
    prompt_values: &PromptValues,
) -> Result<AssembledFeatures> {
    check_schema(schema, resources, prompt_values)?;
    let rows = items
        .par_iter()
        .map(|item| {
            let mut values = IndexMap::with_capacity(schema.len());
            for spec in schema {
                let v = feature_value(spec, item, resources, prompt_values)?;
                if v.is_none() && spec.required {
                    return Err(Error::invalid(format!(
                        "required feature `{}` is missing for item {}",
                        spec.name, item.item_id
                    )));
                }
                values.insert(spec.name.clone(), v);
            }
            Ok(FeatureRow {
                item_id: item.item_id.clone(),
                values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let missing_rates = schema
        .iter()
        .map(|spec| {
            let missing = rows.iter().filter(|r| r.values[&spec.name].is_none()).count();
            let rate = if rows.is_empty() {
                0.0
            } else {
                missing as f64 / rows.len() as f64
            };
            (spec.name.clone(), rate)
        })
        .collect();
    Ok(AssembledFeatures {
        rows,
        missing_rates,
    })
}

/// Comma-separated matrix with an `item_id` column first and `NA` for gaps.
pub fn write_feature_csv<W: Write>(output: W, rows: &[FeatureRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    let names: Vec<&String> = rows.first().map(|r| r.values.keys().collect()).unwrap_or_default();
    let mut header = vec!["item_id"];
    header.extend(names.iter().map(|s| s.as_str()));
    w.write_record(&header)?;
    for row in rows {
        if row.values.len() != names.len() || row.values.keys().zip(&names).any(|(a, b)| a != *b) {
            return Err(Error::invalid(format!("row {} has a different schema", row.item_id)));
        }
        let mut rec = vec![row.item_id.clone()];
        rec.extend(row.values.values().map(|v| match v {
            Some(x) => x.to_string(),
            None => MISSING_MARKER.to_string(),
        }));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_csv<R: Read>(input: R) -> Result<Vec<FeatureRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("item_id") {
        return Err(Error::MissingColumn("item_id".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for (idx, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::row(idx + 1, e.to_string()))?;
        let mut values = IndexMap::with_capacity(names.len());
        for (name, field) in names.iter().zip(rec.iter().skip(1)) {
            let v = if field == MISSING_MARKER {
                None
            } else {
                Some(field.parse::<f64>().map_err(|_| {
                    Error::row(idx + 1, format!("`{field}` in column {name} is not numeric"))
                })?)
            };
            values.insert(name.clone(), v);
        }
        rows.push(FeatureRow {
            item_id: rec.get(0).unwrap_or_default().to_string(),
            values,
        });
    }
    Ok(rows)
}
