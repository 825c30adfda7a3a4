//! Vocabulary test items and the mapping between raw difficulty scores and
//! the discrete rating scale.
//!
//! Items are exchanged as tab-separated UTF-8 with a header row naming the
//! columns `item_id, l1, l1_word, l1_context, pos, en_word, clue, gold_score`.
//! Only `l1_word`, `l1_context`, `en_word` and `gold_score` are mandatory; a
//! missing `clue` column is filled from [`make_clue`], a missing `item_id`
//! defaults to the data row number and a missing `l1` column takes the
//! language passed by the caller.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A learner's first language, identified by its ISO 639-1 code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Language(String);

impl Language {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into().trim().to_ascii_lowercase();
        if code.is_empty() || !code.chars().all(|c| c.is_ascii_alphabetic()) {
            return Err(Error::invalid(format!("bad language code `{code}`")));
        }
        Ok(Language(code))
    }

    pub fn code(&self) -> &str {
        &self.0
    }

    /// English name used inside prompts. Unknown codes fall back to the code.
    pub fn name(&self) -> &str {
        match self.0.as_str() {
            "zh" => "Chinese",
            "de" => "German",
            "es" => "Spanish",
            other => other,
        }
    }

    /// Whether the language is written in the Latin alphabet, which gates the
    /// orthographic similarity feature.
    pub fn is_alphabetic(&self) -> bool {
        !matches!(self.0.as_str(), "zh" | "ja" | "ko")
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Language::new(s)
    }
}

/// One vocabulary test item with its gold difficulty (GLMM log-odds of a
/// correct response, higher is easier).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestItem {
    pub l1: Language,
    pub l1_word: String,
    pub l1_context: String,
    pub en_word: String,
    pub pos: String,
    pub clue: String,
    pub gold_score: f64,
    pub item_id: String,
}

impl TestItem {
    /// Checks the item invariants: a well-formed English word, a clue
    /// consistent with it and a finite score.
    pub fn validate(&self) -> Result<()> {
        validate_en_word(&self.en_word)?;
        let expected = make_clue(&self.en_word)?;
        if self.clue != expected {
            return Err(Error::invalid(format!(
                "clue `{}` does not match `{}` for `{}`",
                self.clue, expected, self.en_word
            )));
        }
        if !self.gold_score.is_finite() {
            return Err(Error::invalid("gold score is not finite"));
        }
        Ok(())
    }
}

fn validate_en_word(word: &str) -> Result<()> {
    let chars: Vec<char> = word.chars().collect();
    let (Some(first), Some(last)) = (chars.first(), chars.last()) else {
        return Err(Error::invalid("empty English word"));
    };
    if !first.is_alphabetic() || !last.is_alphabetic() {
        return Err(Error::invalid(format!(
            "English word `{word}` must start and end with a letter"
        )));
    }
    if let Some(bad) = chars
        .iter()
        .find(|c| !(c.is_alphabetic() || **c == ' ' || **c == '-'))
    {
        return Err(Error::invalid(format!(
            "English word `{word}` contains `{bad}`"
        )));
    }
    Ok(())
}

/// Letter-pattern clue: the lowercased first letter followed by one
/// underscore per remaining letter, all space-separated. Spaces and hyphens
/// inside multiword entries are kept as their own tokens, so `hot dog`
/// becomes `h _ _   _ _ _`.
pub fn make_clue(en_word: &str) -> Result<String> {
    let mut chars = en_word.chars();
    let first = chars
        .next()
        .ok_or_else(|| Error::invalid("cannot make a clue for an empty word"))?;
    let mut clue: String = first.to_lowercase().collect();
    for c in chars {
        clue.push(' ');
        match c {
            ' ' | '-' => clue.push(c),
            _ => clue.push('_'),
        }
    }
    Ok(clue)
}

const COLUMNS: [&str; 8] = [
    "item_id",
    "l1",
    "l1_word",
    "l1_context",
    "pos",
    "en_word",
    "clue",
    "gold_score",
];

/// Parses tab-separated items. Each failing row is reported with its 1-based
/// data row number; nothing is skipped silently.
pub fn parse_items<R: Read>(input: R, default_l1: Option<&Language>) -> Result<Vec<TestItem>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .has_headers(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let required = |name: &str| col(name).ok_or_else(|| Error::MissingColumn(name.to_string()));

    let l1_word = required("l1_word")?;
    let l1_context = required("l1_context")?;
    let en_word = required("en_word")?;
    let gold = required("gold_score")?;
    let item_id = col("item_id");
    let pos = col("pos");
    let clue = col("clue");
    let l1 = col("l1");
    if l1.is_none() && default_l1.is_none() {
        return Err(Error::MissingColumn("l1".into()));
    }

    let mut items = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::row(row, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(Error::row(
                row,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let field = |i: usize| record.get(i).unwrap_or("").to_string();

        let en = field(en_word).trim().to_string();
        if en.is_empty() {
            return Err(Error::row(row, "empty English word"));
        }
        validate_en_word(&en).map_err(|e| Error::row(row, e.to_string()))?;

        let raw_score = field(gold);
        let gold_score: f64 = raw_score
            .trim()
            .parse()
            .map_err(|_| Error::row(row, format!("gold_score `{raw_score}` is not numeric")))?;
        if !gold_score.is_finite() {
            return Err(Error::row(row, "gold_score is not finite"));
        }

        let language = match l1 {
            Some(i) => Language::new(field(i)).map_err(|e| Error::row(row, e.to_string()))?,
            None => default_l1.cloned().expect("checked above"),
        };
        let derived = make_clue(&en)?;
        let clue = match clue.map(field) {
            Some(given) if !given.is_empty() => {
                if given != derived {
                    return Err(Error::row(
                        row,
                        format!("clue `{given}` does not match `{derived}`"),
                    ));
                }
                given
            }
            _ => derived,
        };

        items.push(TestItem {
            l1: language,
            l1_word: field(l1_word),
            l1_context: field(l1_context),
            en_word: en,
            pos: pos.map(field).unwrap_or_default(),
            clue,
            gold_score,
            item_id: item_id.map(field).unwrap_or_else(|| row.to_string()),
        });
    }
    Ok(items)
}

/// Writes items in the canonical column order understood by [`parse_items`].
pub fn write_items<W: Write>(output: W, items: &[TestItem]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(output);
    writer.write_record(COLUMNS)?;
    for (idx, item) in items.iter().enumerate() {
        let score = item.gold_score.to_string();
        let fields = [
            item.item_id.as_str(),
            item.l1.code(),
            &item.l1_word,
            &item.l1_context,
            &item.pos,
            &item.en_word,
            &item.clue,
            &score,
        ];
        if let Some(bad) = fields.iter().find(|f| f.contains(['\t', '\n', '\r'])) {
            return Err(Error::row(
                idx + 1,
                format!("field `{bad}` contains a tab or line break"),
            ));
        }
        writer.write_record(fields)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleMode {
    Linear,
    /// Scores are mapped through the logistic function first; `lo_raw` and
    /// `hi_raw` then live in probability space.
    ExpitThenLinear,
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Monotone bijection from raw scores onto the rating scale `1..=k`; the
/// largest training score maps to `k`, the smallest to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMap {
    pub lo_raw: f64,
    pub hi_raw: f64,
    pub k: u32,
    pub mode: ScaleMode,
}

impl ScaleMap {
    pub fn new(lo_raw: f64, hi_raw: f64, k: u32, mode: ScaleMode) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("scale needs at least 2 points, got {k}")));
        }
        if !(lo_raw.is_finite() && hi_raw.is_finite() && lo_raw < hi_raw) {
            return Err(Error::invalid(format!(
                "scale bounds must satisfy lo < hi, got [{lo_raw}, {hi_raw}]"
            )));
        }
        Ok(ScaleMap {
            lo_raw,
            hi_raw,
            k,
            mode,
        })
    }

    fn transform(&self, raw: f64) -> f64 {
        match self.mode {
            ScaleMode::Linear => raw,
            ScaleMode::ExpitThenLinear => expit(raw),
        }
    }

    pub fn to_scale(&self, raw: f64) -> f64 {
        let t = self.transform(raw);
        if t == self.hi_raw {
            return f64::from(self.k);
        }
        1.0 + f64::from(self.k - 1) * (t - self.lo_raw) / (self.hi_raw - self.lo_raw)
    }

    pub fn from_scale(&self, scaled: f64) -> f64 {
        let t = self.lo_raw + (scaled - 1.0) * (self.hi_raw - self.lo_raw) / f64::from(self.k - 1);
        match self.mode {
            ScaleMode::Linear => t,
            ScaleMode::ExpitThenLinear => logit(t),
        }
    }

    /// True when `raw` falls outside the score range the map was fitted on.
    pub fn is_extrapolated(&self, raw: f64) -> bool {
        let t = self.transform(raw);
        t < self.lo_raw || t > self.hi_raw
    }
}

/// Fits the scale map on training scores (min to 1, max to `k`).
pub fn fit_scale(train_scores: &[f64], k: u32, mode: ScaleMode) -> Result<ScaleMap> {
    let transformed: Vec<f64> = train_scores
        .iter()
        .map(|&s| match mode {
            ScaleMode::Linear => s,
            ScaleMode::ExpitThenLinear => expit(s),
        })
        .collect();
    if transformed.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("training scores must be finite"));
    }
    let lo = transformed.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = transformed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if transformed.len() < 2 || lo >= hi {
        return Err(Error::invalid(
            "fitting a scale needs at least two distinct scores",
        ));
    }
    ScaleMap::new(lo, hi, k, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TABLE1: &str = "l1\tl1_word\tl1_context\ten_word\tpos\tgold_score\n\
        es\tcasa\tVivo en una casa grande que tiene tres dormitorios.\thouse\tnoun\t3.07\n";

    #[test]
    fn parses_table1_row() {
        let items = parse_items(TABLE1.as_bytes(), None).unwrap();
        assert_eq!(items.len(), 1);
        let it = &items[0];
        assert_eq!(it.gold_score, 3.07);
        assert_eq!(it.clue, "h _ _ _ _");
        assert_eq!(it.l1.name(), "Spanish");
        assert_eq!(it.item_id, "1");
        assert_eq!(it.pos, "noun");
    }

    #[test]
    fn empty_input_after_header() {
        let input = "l1\tl1_word\tl1_context\ten_word\tgold_score\n";
        assert!(parse_items(input.as_bytes(), None).unwrap().is_empty());
    }

    #[test]
    fn non_numeric_score_reports_row() {
        let input = "l1\tl1_word\tl1_context\ten_word\tgold_score\n\
            es\tcasa\tctx\thouse\t1.0\n\
            es\tperro\tctx\tdog\tabc\n";
        match parse_items(input.as_bytes(), None) {
            Err(Error::Row { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_empty_word() {
        let no_score = "l1\tl1_word\tl1_context\ten_word\nes\tcasa\tctx\thouse\n";
        assert!(matches!(
            parse_items(no_score.as_bytes(), None),
            Err(Error::MissingColumn(c)) if c == "gold_score"
        ));
        let empty = "l1\tl1_word\tl1_context\ten_word\tgold_score\nes\tcasa\tctx\t\t1\n";
        assert!(matches!(
            parse_items(empty.as_bytes(), None),
            Err(Error::Row { row: 1, .. })
        ));
    }

    #[test]
    fn default_language_and_clue_check() {
        let es = Language::new("es").unwrap();
        let input = "l1_word\tl1_context\ten_word\tclue\tgold_score\ncasa\tctx\thouse\th _ _ _ _\t0.5\n";
        let items = parse_items(input.as_bytes(), Some(&es)).unwrap();
        assert_eq!(items[0].l1, es);
        let bad = "l1_word\tl1_context\ten_word\tclue\tgold_score\ncasa\tctx\thouse\th _ _ _\t0.5\n";
        assert!(parse_items(bad.as_bytes(), Some(&es)).is_err());
        assert!(parse_items(input.as_bytes(), None).is_err());
    }

    #[test]
    fn clue_examples() {
        assert_eq!(make_clue("house").unwrap(), "h _ _ _ _");
        assert_eq!(make_clue("a").unwrap(), "a");
        let book = make_clue("book").unwrap();
        assert_eq!(book, "b _ _ _");
        assert_eq!(book.matches('_').count(), "book".len() - 1);
        assert_eq!(make_clue("House").unwrap(), "h _ _ _ _");
        assert_eq!(make_clue("hot dog").unwrap(), "h _ _   _ _ _");
        assert_eq!(make_clue("e-mail").unwrap(), "e - _ _ _ _");
        assert!(make_clue("").is_err());
    }

    #[test]
    fn scale_examples() {
        let m = fit_scale(&[-5.0, 0.0, 5.0], 5, ScaleMode::Linear).unwrap();
        assert_eq!(m.to_scale(0.0), 3.0);
        assert_eq!(m.to_scale(2.5), 4.0);
        assert_eq!(m.to_scale(5.0), 5.0);
        assert_eq!(m.to_scale(-5.0), 1.0);
        assert!((m.from_scale(m.to_scale(1.234)) - 1.234).abs() < 1e-12);

        let m = fit_scale(&[-2.1, 3.07], 5, ScaleMode::Linear).unwrap();
        assert_eq!(m.to_scale(3.07), 5.0);
        assert_eq!(m.to_scale(-2.1), 1.0);

        let m = ScaleMap::new(0.0, 1.0, 5, ScaleMode::ExpitThenLinear).unwrap();
        assert_eq!(m.to_scale(0.0), 3.0);

        assert!(fit_scale(&[1.0, 1.0, 1.0], 5, ScaleMode::Linear).is_err());
        assert!(fit_scale(&[1.0], 5, ScaleMode::Linear).is_err());
    }

    #[test]
    fn expit_fit_and_extrapolation_flag() {
        let m = fit_scale(&[-3.0, 0.0, 3.0], 5, ScaleMode::ExpitThenLinear).unwrap();
        assert!((m.lo_raw - expit(-3.0)).abs() < 1e-15);
        assert_eq!(m.to_scale(3.0), 5.0);
        assert!((m.to_scale(0.0) - 3.0).abs() < 1e-12);
        assert!(m.is_extrapolated(3.5));
        assert!(!m.is_extrapolated(2.0));
        assert!(m.to_scale(3.5) > 5.0);
    }

    #[test]
    fn json_field_names() {
        let m = ScaleMap::new(-1.0, 2.0, 5, ScaleMode::ExpitThenLinear).unwrap();
        let v = serde_json::to_value(m).unwrap();
        assert_eq!(v["mode"], "expit-then-linear");
        assert_eq!(v["lo_raw"], -1.0);
        let item = &parse_items(TABLE1.as_bytes(), None).unwrap()[0];
        let v = serde_json::to_value(item).unwrap();
        for key in COLUMNS {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["l1"], "es");
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-zA-Z]{1,6}( [a-z]{1,5})?(-[a-z]{1,4})?"
    }

    proptest! {
        #[test]
        fn clue_shape(w in "[a-zA-Z]{1,20}") {
            let clue = make_clue(&w).unwrap();
            let first: String = w.chars().next().unwrap().to_lowercase().collect();
            prop_assert!(clue.starts_with(&first));
            prop_assert_eq!(clue.matches('_').count(), w.chars().count() - 1);
        }

        #[test]
        fn scale_monotone_and_invertible(a in -6.0f64..6.0, b in -6.0f64..6.0, expit_mode: bool) {
            let mode = if expit_mode { ScaleMode::ExpitThenLinear } else { ScaleMode::Linear };
            let m = fit_scale(&[-5.0, 5.0], 5, mode).unwrap();
            if a < b {
                prop_assert!(m.to_scale(a) < m.to_scale(b));
            }
            if !expit_mode {
                prop_assert!((m.from_scale(m.to_scale(a)) - a).abs() <= 1e-12);
            } else {
                prop_assert!((m.from_scale(m.to_scale(a)) - a).abs() <= 1e-10);
            }
        }

        #[test]
        fn tsv_round_trip(
            words in proptest::collection::vec(word(), 0..8),
            scores in proptest::collection::vec(-5.0f64..5.0, 8),
        ) {
            let items: Vec<TestItem> = words
                .iter()
                .enumerate()
                .map(|(i, w)| TestItem {
                    l1: Language::new(["es", "de", "zh"][i % 3]).unwrap(),
                    l1_word: format!("w{i}"),
                    l1_context: format!("context \"{i}\", quoted"),
                    en_word: w.clone(),
                    pos: "noun".into(),
                    clue: make_clue(w).unwrap(),
                    gold_score: scores[i],
                    item_id: format!("id{i}"),
                })
                .collect();
            let mut buf = Vec::new();
            write_items(&mut buf, &items).unwrap();
            let back = parse_items(buf.as_slice(), None).unwrap();
            prop_assert_eq!(back, items);
        }
    }
}
