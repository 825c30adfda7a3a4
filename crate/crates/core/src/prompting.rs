//! Prompt templates, completion clients with recorded fixtures, and the
//! prompt-derived features.
//!
//! Templates are stored verbatim with `{name}` placeholders. Item fields
//! (`l1_name`, `l1_word`, `l1_context`, `clue`, `en_word`) are bound
//! automatically; everything else comes from the caller's extras.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data_model::{ScaleMap, TestItem};
use crate::error::{Error, Result};
use crate::soft_target::{gscale, ScaleTokens};

/// Placeholder values beyond the item's own fields.
pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Basic,
    Short,
    Regression,
    RegressionMask,
    Ambiguity,
    Spelling,
    Calque,
    CalqueV1,
    TrickShort,
    TrickLong,
    Difficulty,
}

impl TemplateId {
    pub const ALL: [TemplateId; 11] = [
        TemplateId::Basic,
        TemplateId::Short,
        TemplateId::Regression,
        TemplateId::RegressionMask,
        TemplateId::Ambiguity,
        TemplateId::Spelling,
        TemplateId::Calque,
        TemplateId::CalqueV1,
        TemplateId::TrickShort,
        TemplateId::TrickLong,
        TemplateId::Difficulty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Basic => "basic",
            TemplateId::Short => "short",
            TemplateId::Regression => "regression",
            TemplateId::RegressionMask => "regression_mask",
            TemplateId::Ambiguity => "ambiguity",
            TemplateId::Spelling => "spelling",
            TemplateId::Calque => "calque",
            TemplateId::CalqueV1 => "calque_v1",
            TemplateId::TrickShort => "trick_short",
            TemplateId::TrickLong => "trick_long",
            TemplateId::Difficulty => "difficulty",
        }
    }

    /// Template text with `{name}` placeholders. The masked variant wraps
    /// the basic template at render time.
    pub fn body(self) -> &'static str {
        match self {
            TemplateId::Basic | TemplateId::RegressionMask => BASIC,
            TemplateId::Short => SHORT,
            TemplateId::Regression => REGRESSION,
            TemplateId::Ambiguity => AMBIGUITY,
            TemplateId::Spelling => SPELLING,
            TemplateId::Calque => CALQUE,
            TemplateId::CalqueV1 => CALQUE_V1,
            TemplateId::TrickShort => TRICK_SHORT,
            TemplateId::TrickLong => TRICK_LONG,
            TemplateId::Difficulty => DIFFICULTY,
        }
    }

    /// Distinct placeholder names in order of first appearance.
    pub fn placeholders(self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut rest = self.body();
        while let Some(open) = rest.find('{') {
            let close = rest[open..].find('}').expect("closed placeholder") + open;
            let name = &rest[open + 1..close];
            if !out.contains(&name) {
                out.push(name);
            }
            rest = &rest[close + 1..];
        }
        out
    }

    /// The rating scale a template asks for, if it asks for one.
    pub fn rating_scale(self) -> Option<RatingScale> {
        match self {
            TemplateId::Ambiguity | TemplateId::Calque | TemplateId::CalqueV1 => Some(RatingScale::Binary),
            TemplateId::Spelling | TemplateId::Difficulty => Some(RatingScale::OneToFive),
            _ => None,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown template `{s}`")))
    }
}

const BASIC: &str = "Rate how difficult it is for learners to guess the English word based on the {l1_name} word, context and clue on a scale from 1 to 5 (1=very easy, 5=very difficult).
{l1_name} word: {l1_word}
{l1_name} context: {l1_context}
Clue: {clue}
English word: {en_word}
Difficulty:";

const SHORT: &str = "{l1_word} ### {l1_context} ### {clue} ### {en_word} ### Difficulty (1 to 5):";

const REGRESSION: &str = "[CLS] {l1_word} [SEP] {l1_context} [SEP] {clue} [SEP] {en_word} [SEP]";

const AMBIGUITY: &str = r#"You are a language education expert.

TASK
Given:
- an English word form (the "English word"),
- an L1 gloss/translation (the "{l1_name} item"),
- and the L1 usage context sentence (the "{l1_name} context"),
decide whether the English word, when used to express the meaning suggested by the L1 item + context,
meets BOTH conditions:

A) Lexical ambiguity: the English word has multiple established senses that share the same form
   (polysemy or homonymy), such that another common sense could plausibly be activated/confused.

B) Unfamiliarity for L2 learners: in this meaning/usage, the English word is likely to be unfamiliar
   or challenging for typical second-language learners (e.g., less frequent sense, idiomatic/figurative,
   domain-specific usage, nonliteral extension).

OUTPUT REQUIREMENTS
- Output "1" if BOTH conditions (A and B) are met; otherwise output "0".
- Output MUST be exactly one character: 1 or 0.
- Do NOT include explanations, alternatives, quotes, or extra text.

EXAMPLE 1
English word: {ex_en_word}
{l1_name} item: {ex_easy_word_l1}
{l1_name} context: {ex_easy_context_l1}
Is the English word ambiguous and unfamiliar: 0

EXAMPLE 2
English word: {ex_en_word}
{l1_name} item: {ex_hard_word_l1}
{l1_name} context: {ex_hard_context_l1}
Is the English word ambiguous and unfamiliar: 1

NOW DECIDE
English word: {en_word}
{l1_name} item: {l1_word}
{l1_name} context: {l1_context}
Is the English word ambiguous and unfamiliar:"#;

const SPELLING: &str = "TASK
You are required to rate English spelling difficulty on a 1\u{2013}5 scale, where 1 = very easy and 5 = very difficult.
You will be given English pronunciation and the target word's translation in Chinese, Spanish, and German.
Evaluate how difficult it would be for learners with Chinese, Spanish, and German L1 backgrounds to spell the English word with that pronunciation correctly when they know the translation in their native language.

OUTPUT REQUIREMENTS
- Output exactly one digit (1, 2, 3, 4, or 5) for each L1, separated by commas, in the order of Chinese, Spanish, German.
- Do not include any other text.

EXAMPLE 1
English pronunciation: '{hard_pron}'
Chinese: {hard_cn}
Spanish: {hard_es}
German: {hard_de}
Result: {hard_cn_score},{hard_es_score},{hard_de_score}

EXAMPLE 2
English pronunciation: '{easy_pron}'
Chinese: {easy_cn}
Spanish: {easy_es}
German: {easy_de}
Result: {easy_cn_score},{easy_es_score},{easy_de_score}

NOW DECIDE
English pronunciation: {en_pron}
Chinese: {all_l1_words_cn}
Spanish: {all_l1_words_es}
German: {all_l1_words_de}
Result:";

const CALQUE: &str = "You are a linguist and your task is to decide whether an English word is a morpheme-for-morpheme translation of any of the given {l1_name} equivalents.
The morpheme-for-morpheme mapping must be 1:1. 1:N or other mappings do not count.
Single morpheme translations or simple borrowings/cognates do not count either.
Respond only with YES or NO.

wave/ola: NO (reason: single morpheme)
ecosystem/ecosistema: NO (reason: simple cognate)
hotdog/perro caliente: YES (reason: hot=caliente, dog=perro)
stare/mirar fijamente: NO (reason: not a 1:1 mapping)
{en_word}/{l1_word}:";

const CALQUE_V1: &str = r#"You are a bilinguistics expert.

TASK
Given a {l1_name} item and an English item, decide whether there exists a best-matching candidate in the {l1_name} item that is a component-by-component (morpheme-level) translation of the English item.

A component-by-component mapping means that the meaningful parts
(words, roots, prefixes, or suffixes) of the English item are directly translated
into corresponding meaningful parts in the {l1_name} item.

Procedure (internal; do NOT output these steps):
1) If the {l1_name} item contains multiple candidates, select exactly ONE candidate: the one that aligns best component-wise with the English form.
2) Judge ONLY that selected candidate for component-by-component mapping.

OUTPUT REQUIREMENTS
- Output "1" if the selected best candidate is a component-by-component mapping; otherwise output "0".
- Output MUST be exactly one character: 1 or 0.
- Do NOT include explanations, alternatives, quotes, or extra text.

EXAMPLE
{l1_name} item: {ex_calque_l1}
English item: {ex_calque_en}
Is word-for-word mapping: 1

NOW DECIDE
{l1_name} item: {l1_word}
English item: {en_word}
Is word-for-word mapping:"#;

const TRICK_SHORT: &str = r#"You are bilingual in {l1_name} and English and your task is to find the best English translation for a {l1_name} word given a context and constraints. The constraints are given in the form of a clue, e.g., "b _ _ _", meaning that the word starts with the (upper or lower case) letter B and has 4 letters. You must give a single English word in dictionary form (lemma) as a response.

{solve_example}
{l1_name} word: {l1_word}
{l1_name} context: {l1_context}
Clue: {clue}
English word:"#;

const TRICK_LONG: &str = r#"You are bilingual in {l1_name} and English.

TASK
Given a word in {l1_name}, its usage context, and a spelling clue, find the single best English translation that fits BOTH the meaning and the spelling constraint.

INPUTS
- {l1_name} word: a single word to translate
- {l1_name} context: a sentence showing how the word is used
- Clue: a pattern such as "b _ _ _", where:
  * the first letter is indicated (case-insensitive)
  * "_" indicates subsequent unknown letter
  * the total number of letters must match exactly

OUTPUT REQUIREMENTS
- Output EXACTLY ONE English word
- The word must be:
  * a dictionary form (lemma)
  * a single token (no spaces, hyphens, or punctuation)
  * consistent with the context
  * consistent with the clue
- Do NOT include explanations, alternatives, quotes, or extra text.

EXAMPLES
{solve_example}
NOW SOLVE
{l1_name} word: {l1_word}
{l1_name} context: {l1_context}
Clue: {clue}
English word:"#;

const DIFFICULTY: &str = "You are an English language teacher teaching learners whose native language is {l1_name}. Your task is to rate the difficulty of a vocabulary test item for native {l1_name} speakers learning English.

The test item consists of:
- a {l1_name} word,
- a {l1_name} context,
- a clue indicating the first letter and word length of the English word,
- the target English word, which is the only correct answer.

Letter case does not matter. The learners are likely to respond with synonyms or misspellings to some items, but such responses are considered incorrect. Treat this as increasing the difficulty.

Consider learners from beginner to advanced levels, weighting the intermediate learner most heavily. Rate how difficult the item is on a scale from 1 to 5:
1 = very easy (almost everybody answers correctly)
5 = very difficult (almost nobody answers correctly)

Output exactly one digit (1, 2, 3, 4, or 5). Do not include any other text.

{examples}
{l1_name} word: {l1_word}
{l1_name} context: {l1_context}
Clue: {clue}
English word: {en_word}
Difficulty:";

fn item_bindings(item: &TestItem) -> Bindings {
    [
        ("l1_name", item.l1.name().to_string()),
        ("l1_word", item.l1_word.clone()),
        ("l1_context", item.l1_context.clone()),
        ("clue", item.clue.clone()),
        ("en_word", item.en_word.clone()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn substitute(body: &str, bindings: &Bindings) -> Result<String> {
    let mut out = String::with_capacity(body.len() + 256);
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = rest[open..]
            .find('}')
            .map(|c| c + open)
            .ok_or_else(|| Error::invalid("unterminated placeholder"))?;
        let name = &rest[open + 1..close];
        let value = bindings
            .get(name)
            .ok_or_else(|| Error::Unbound(name.to_string()))?;
        out.push_str(value);
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Input sequence for masked-token prediction around a prompt.
pub fn mask_wrap(prompt: &str) -> String {
    format!("[CLS] {prompt} [MASK] [SEP]")
}

/// Renders a template for an item. Extras may override item bindings; an
/// item field bound to an empty string counts as unbound.
pub fn render(id: TemplateId, item: &TestItem, extras: &Bindings) -> Result<String> {
    let mut bindings = item_bindings(item);
    bindings.retain(|_, v| !v.is_empty());
    bindings.extend(extras.iter().map(|(k, v)| (k.clone(), v.clone())));
    let text = substitute(id.body(), &bindings)?;
    Ok(match id {
        TemplateId::RegressionMask => mask_wrap(&text),
        _ => text,
    })
}

/// Example bindings for the ambiguity prompt with Spanish items.
pub fn ambiguity_examples_es() -> Bindings {
    [
        ("ex_en_word", "bank"),
        ("ex_easy_word_l1", "banco"),
        ("ex_easy_context_l1", "Deposité el dinero en el banco."),
        ("ex_hard_word_l1", "orilla"),
        ("ex_hard_context_l1", "Nos sentamos en la orilla del río."),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Example bindings for the first calque prompt.
pub fn calque_v1_examples() -> Bindings {
    [("ex_calque_l1", "热狗"), ("ex_calque_en", "hot dog")]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// One-shot solving example for the trickiness prompts.
pub fn solve_example(l1_name: &str, l1_word: &str, l1_context: &str, en_word: &str) -> String {
    format!("{l1_name} word: {l1_word}\n{l1_name} context: {l1_context}\nEnglish word: {en_word}")
}

pub fn solve_example_de() -> String {
    solve_example("German", "Erdbeere", "Ich mag keine Erdbeeren.", "strawberry")
}

/// Few-shot block for the difficulty prompt: for each of the points 1, 3
/// and 5, the same-language training item whose scaled score is closest
/// (earliest on ties), excluding `item` itself. Ratings are shown rounded.
pub fn difficulty_examples(
    training: &[TestItem],
    item: &TestItem,
    scale: &ScaleMap,
) -> Result<String> {
    let pool: Vec<&TestItem> = training
        .iter()
        .filter(|t| t.l1 == item.l1 && t.item_id != item.item_id)
        .collect();
    let mut blocks = Vec::new();
    for target in [1.0, 3.0, 5.0] {
        let mut best: Option<(&TestItem, f64)> = None;
        for t in &pool {
            let d = (scale.to_scale(t.gold_score) - target).abs();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((t, d));
            }
        }
        let (ex, _) = best.ok_or_else(|| {
            Error::invalid(format!("no training items for {} to build examples", item.l1))
        })?;
        let rating = scale.to_scale(ex.gold_score).round();
        blocks.push(format!(
            "{l1} word: {}\n{l1} context: {}\nClue: {}\nEnglish word: {}\nDifficulty: {rating}\n",
            ex.l1_word,
            ex.l1_context,
            ex.clue,
            ex.en_word,
            l1 = item.l1.name()
        ));
    }
    Ok(blocks.join("\n"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub token: String,
    pub logprob: f64,
}

/// One completion with top-k log-probabilities per generated token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogProbResponse {
    pub generated_text: String,
    pub first_token_candidates: Vec<Candidate>,
    #[serde(default)]
    pub later_token_candidates: Vec<Vec<Candidate>>,
}

impl LogProbResponse {
    pub fn validate(&self) -> Result<()> {
        if self.first_token_candidates.is_empty() {
            return Err(Error::Protocol("empty candidate list".into()));
        }
        let all = std::iter::once(&self.first_token_candidates).chain(&self.later_token_candidates);
        for c in all.flatten() {
            if c.logprob.is_nan() || c.logprob > 0.0 {
                return Err(Error::Protocol(format!(
                    "log-probability {} for token {:?}",
                    c.logprob, c.token
                )));
            }
        }
        Ok(())
    }

    /// Candidate lists for every generated position.
    pub fn positions(&self) -> impl Iterator<Item = &Vec<Candidate>> {
        std::iter::once(&self.first_token_candidates).chain(&self.later_token_candidates)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingScale {
    /// Digits 1 to 5.
    OneToFive,
    /// "0"/"NO" and "1"/"YES".
    Binary,
}

impl RatingScale {
    pub fn tokens(self) -> ScaleTokens {
        match self {
            RatingScale::OneToFive => ScaleTokens::one_to_five(),
            RatingScale::Binary => ScaleTokens::binary(),
        }
    }

    /// Scale point for a surface form, after trimming and ignoring case.
    pub fn point_of(self, surface: &str) -> Option<i64> {
        let s = surface.trim().to_ascii_uppercase();
        match self {
            RatingScale::OneToFive => match s.as_str() {
                "1" => Some(1),
                "2" => Some(2),
                "3" => Some(3),
                "4" => Some(4),
                "5" => Some(5),
                _ => None,
            },
            RatingScale::Binary => match s.as_str() {
                "0" | "NO" => Some(0),
                "1" | "YES" => Some(1),
                _ => None,
            },
        }
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Per-point log-probabilities (`-inf` where absent) from one candidate
/// list. Surfaces mapping to the same point are combined.
pub fn scale_logprobs(candidates: &[Candidate], scale: RatingScale) -> Result<Vec<f64>> {
    let tokens = scale.tokens();
    let mut out = vec![f64::NEG_INFINITY; tokens.len()];
    let mut found = false;
    for c in candidates {
        if let Some(p) = scale.point_of(&c.token) {
            let j = (p - tokens.min_point()) as usize;
            out[j] = log_add_exp(out[j], c.logprob);
            found = true;
        }
    }
    if !found {
        return Err(Error::Protocol("no scale token among candidates".into()));
    }
    Ok(out)
}

/// G-Scale value of each response's first token.
pub fn feature_from_rating_prompt(
    responses: &[LogProbResponse],
    scale: RatingScale,
    temperature: f64,
) -> Result<Vec<f64>> {
    let tokens = scale.tokens();
    responses
        .iter()
        .map(|r| gscale(&scale_logprobs(&r.first_token_candidates, scale)?, temperature, &tokens))
        .collect()
}

/// Candidates at the `index`-th generated position whose most likely token
/// is a digit. The spelling prompt answers "c,s,g" for Chinese, Spanish and
/// German, so index 0, 1 and 2 select the three ratings.
pub fn digit_position(response: &LogProbResponse, index: usize) -> Result<&[Candidate]> {
    response
        .positions()
        .filter(|cands| {
            cands
                .iter()
                .max_by(|a, b| a.logprob.total_cmp(&b.logprob))
                .is_some_and(|top| {
                    let t = top.token.trim();
                    t.len() == 1 && t.as_bytes()[0].is_ascii_digit()
                })
        })
        .nth(index)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::Protocol(format!("response has no rating at position {index}")))
}

/// Position of an L1 in the spelling prompt's answer.
pub fn spelling_index(l1: &crate::data_model::Language) -> Result<usize> {
    match l1.code() {
        "zh" => Ok(0),
        "es" => Ok(1),
        "de" => Ok(2),
        other => Err(Error::invalid(format!("spelling prompt has no slot for `{other}`"))),
    }
}

fn same_word(a: &str, b: &str) -> bool {
    a.trim().to_lowercase() == b.trim().to_lowercase()
}

/// Probability that a solving prompt's answer is wrong: one minus the
/// first-token mass on the target word. If no candidate equals the whole
/// word but the generated text does, the top candidate's probability is
/// taken as the probability of the correct answer.
pub fn trickiness(response: &LogProbResponse, item: &TestItem) -> f64 {
    let matched: f64 = response
        .first_token_candidates
        .iter()
        .filter(|c| same_word(&c.token, &item.en_word))
        .map(|c| c.logprob.exp())
        .sum();
    let p_correct = if matched > 0.0 {
        matched
    } else if same_word(&response.generated_text, &item.en_word) {
        response
            .first_token_candidates
            .iter()
            .map(|c| c.logprob)
            .fold(f64::NEG_INFINITY, f64::max)
            .exp()
    } else {
        0.0
    };
    (1.0 - p_correct).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub template: TemplateId,
    pub prompt: String,
    pub max_tokens: u32,
    pub logprobs: u32,
}

impl CompletionRequest {
    /// Hex SHA-256 of the template id and prompt.
    pub fn key(&self) -> String {
        fixture_key(self.template, &self.prompt)
    }
}

pub fn fixture_key(template: TemplateId, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(template.as_str().as_bytes());
    h.update([0u8]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

pub trait CompletionClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<LogProbResponse>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub key: String,
    pub prompt: String,
    pub response: LogProbResponse,
}

/// Replays recorded responses by request key.
#[derive(Debug, Default)]
pub struct FixtureClient {
    records: HashMap<String, LogProbResponse>,
}

impl FixtureClient {
    pub fn from_records(records: impl IntoIterator<Item = FixtureRecord>) -> Self {
        FixtureClient {
            records: records.into_iter().map(|r| (r.key, r.response)).collect(),
        }
    }

    /// Reads JSON lines of [`FixtureRecord`]; blank lines are skipped.
    pub fn from_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FixtureRecord =
                serde_json::from_str(&line).map_err(|e| Error::row(i + 1, e.to_string()))?;
            records.push(rec);
        }
        Ok(Self::from_records(records))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl CompletionClient for FixtureClient {
    fn complete(&self, request: &CompletionRequest) -> Result<LogProbResponse> {
        let key = request.key();
        self.records
            .get(&key)
            .cloned()
            .ok_or(Error::FixtureMiss(key))
    }
}

/// Wraps a client and keeps every successful exchange for later replay.
pub struct RecordingClient<C> {
    inner: C,
    records: Mutex<BTreeMap<String, FixtureRecord>>,
}

impl<C: CompletionClient> RecordingClient<C> {
    pub fn new(inner: C) -> Self {
        RecordingClient {
            inner,
            records: Mutex::new(BTreeMap::new()),
        }
    }

    /// Writes the recorded exchanges as JSON lines sorted by key.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let records = self.records.lock().expect("recording lock");
        for rec in records.values() {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl<C: CompletionClient> CompletionClient for RecordingClient<C> {
    fn complete(&self, request: &CompletionRequest) -> Result<LogProbResponse> {
        let response = self.inner.complete(request)?;
        self.records.lock().expect("recording lock").insert(
            request.key(),
            FixtureRecord {
                key: request.key(),
                prompt: request.prompt.clone(),
                response: response.clone(),
            },
        );
        Ok(response)
    }
}

/// Client for completion endpoints that return legacy-style logprobs
/// (`choices[0].text` and `choices[0].logprobs.top_logprobs`).
pub struct HttpClient {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpClient {
    /// `api_key_env` names the environment variable holding the credential.
    pub fn new(endpoint: &str, model: &str, api_key_env: Option<&str>, timeout: Duration) -> Result<Self> {
        let api_key = match api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| Error::invalid(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Network(e.to_string()))?;
        Ok(HttpClient {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
            http,
        })
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    text: String,
    logprobs: Option<WireLogprobs>,
}

#[derive(Deserialize)]
struct WireLogprobs {
    top_logprobs: Option<Vec<Option<BTreeMap<String, f64>>>>,
}

/// Parses a completion response body.
pub fn parse_completion_body(body: &str) -> Result<LogProbResponse> {
    let wire: WireResponse =
        serde_json::from_str(body).map_err(|e| Error::Protocol(format!("malformed response: {e}")))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| Error::Protocol("response has no choices".into()))?;
    let top = choice
        .logprobs
        .and_then(|l| l.top_logprobs)
        .ok_or_else(|| Error::Protocol("response lacks logprobs".into()))?;
    let mut positions: Vec<Vec<Candidate>> = top
        .into_iter()
        .map(|m| {
            let mut cands: Vec<Candidate> = m
                .unwrap_or_default()
                .into_iter()
                .map(|(token, logprob)| Candidate { token, logprob })
                .collect();
            cands.sort_by(|a, b| b.logprob.total_cmp(&a.logprob).then_with(|| a.token.cmp(&b.token)));
            cands
        })
        .collect();
    if positions.is_empty() {
        return Err(Error::Protocol("response has no token positions".into()));
    }
    let first = positions.remove(0);
    let response = LogProbResponse {
        generated_text: choice.text,
        first_token_candidates: first,
        later_token_candidates: positions,
    };
    response.validate()?;
    Ok(response)
}

impl CompletionClient for HttpClient {
    fn complete(&self, request: &CompletionRequest) -> Result<LogProbResponse> {
        let payload = serde_json::json!({
            "model": self.model,
            "prompt": request.prompt,
            "temperature": 0,
            "max_tokens": request.max_tokens,
            "logprobs": request.logprobs,
        });
        let mut req = self.http.post(&self.endpoint).json(&payload);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Network(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| Error::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::Network(format!("HTTP {status}")));
        }
        parse_completion_body(&body)
    }
}

/// Runs requests with at most `max_in_flight` outstanding; results are
/// aligned with `requests`.
pub fn complete_all<C: CompletionClient + ?Sized>(
    client: &C,
    requests: &[CompletionRequest],
    max_in_flight: usize,
) -> Vec<Result<LogProbResponse>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        use rayon::prelude::*;
        requests.par_iter().map(|r| client.complete(r)).collect()
    })
}
