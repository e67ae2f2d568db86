//! Turns question/answer records into eight-way multiple-choice instances.
//!
//! Wrong candidates come from substituting one token of the ground truth:
//! the number word for "how many" questions, the entity noun for "who", the
//! possessive for "whose", and the head noun for everything else.
//!
//! There is no part-of-speech tagger. Nouns are found with a phrase
//! heuristic: a noun phrase starts after an article or possessive (or at the
//! start of the answer) and runs until a preposition, conjunction, verb-like
//! function word, possessive marker or punctuation; its last token is the
//! noun. When a noun lexicon is supplied, only lexicon words count as nouns.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use log::{debug, warn};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::NUM_CANDIDATES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuestionType {
    #[serde(alias = "how_many", alias = "howmany", alias = "how many")]
    HowMany,
    #[serde(alias = "who")]
    Who,
    #[serde(alias = "whose")]
    Whose,
    #[serde(alias = "what")]
    What,
    #[serde(alias = "where")]
    Where,
    #[serde(alias = "when")]
    When,
}

impl QuestionType {
    pub const ALL: [QuestionType; 6] = [
        QuestionType::HowMany,
        QuestionType::Who,
        QuestionType::Whose,
        QuestionType::What,
        QuestionType::Where,
        QuestionType::When,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::HowMany => "HowMany",
            QuestionType::Who => "Who",
            QuestionType::Whose => "Whose",
            QuestionType::What => "What",
            QuestionType::Where => "Where",
            QuestionType::When => "When",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A generated question with its ground-truth answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub video_id: String,
    #[serde(default)]
    pub description: String,
    pub question: String,
    pub answer: String,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub question_type: Option<QuestionType>,
}

/// A multiple-choice question over one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaInstance {
    pub video_id: String,
    pub question: String,
    pub candidates: Vec<String>,
    pub gt_index: usize,
    #[serde(rename = "type")]
    pub question_type: QuestionType,
}

impl QaInstance {
    pub fn ground_truth(&self) -> &str {
        &self.candidates[self.gt_index]
    }

    /// Eight pairwise distinct candidates and an in-range ground truth.
    pub fn validate(&self) -> Result<()> {
        if self.candidates.len() != NUM_CANDIDATES {
            return Err(Error::Invariant(format!(
                "{}: {} candidates",
                self.video_id,
                self.candidates.len()
            )));
        }
        if self.gt_index >= NUM_CANDIDATES {
            return Err(Error::Invariant(format!(
                "{}: gt_index {}",
                self.video_id, self.gt_index
            )));
        }
        let distinct: HashSet<&String> = self.candidates.iter().collect();
        if distinct.len() != NUM_CANDIDATES {
            return Err(Error::Invariant(format!(
                "{}: duplicate candidates",
                self.video_id
            )));
        }
        Ok(())
    }
}

/// Why a record produced no instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Discard {
    Unclassified,
    NumberOutOfRange { number: u32 },
    NoReplaceableToken,
    ResamplingExhausted,
}

impl fmt::Display for Discard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Discard::Unclassified => f.write_str("question type not recognized"),
            Discard::NumberOutOfRange { number } => write!(f, "number {number} outside one..eight"),
            Discard::NoReplaceableToken => f.write_str("no replaceable token in answer"),
            Discard::ResamplingExhausted => {
                f.write_str("could not sample enough distinct distractors")
            }
        }
    }
}

const SMALL_NUMBERS: [&str; 20] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// Counting answers are restricted to these.
pub const COUNT_WORDS: [&str; 8] = [
    "one", "two", "three", "four", "five", "six", "seven", "eight",
];

pub const POSSESSIVE_PRONOUNS: [&str; 7] = ["my", "your", "his", "her", "its", "our", "their"];

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Words that end a noun phrase.
const PHRASE_BREAKS: &[&str] = &[
    "in", "on", "at", "with", "of", "from", "to", "into", "onto", "by", "for", "near", "under",
    "over", "behind", "across", "through", "along", "around", "inside", "outside", "while", "and",
    "or", "but", "who", "whom", "that", "which", "is", "are", "was", "were", "be", "been", "has",
    "have", "had", "does", "do", "did", "'s", "'", "after", "before", "during", "as", "than",
    "then", "when", "where", "up", "down", "out", "off", "about", "between",
];

/// English word for `0..=100`.
pub fn number_word(n: u32) -> Option<String> {
    match n {
        0..=19 => Some(SMALL_NUMBERS[n as usize].to_string()),
        20..=99 => {
            let tens = TENS[(n / 10) as usize];
            Some(match n % 10 {
                0 => tens.to_string(),
                r => format!("{tens}-{}", SMALL_NUMBERS[r as usize]),
            })
        }
        100 => Some("one hundred".to_string()),
        _ => None,
    }
}

/// Value of a number word in `0..=100`.
pub fn parse_number_word(word: &str) -> Option<u32> {
    static_numbers().get(word).copied()
}

fn static_numbers() -> &'static HashMap<String, u32> {
    use std::sync::OnceLock;
    static TABLE: OnceLock<HashMap<String, u32>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=99).map(|n| (number_word(n).unwrap(), n)).collect())
}

/// Replaces every standalone decimal integer token in `0..=100` with its
/// lowercase English word, leaving whitespace and other tokens untouched.
pub fn normalize_numerals(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut token = String::new();
    let flush = |token: &mut String, out: &mut String| {
        let word = (!token.is_empty() && token.bytes().all(|b| b.is_ascii_digit()))
            .then(|| token.parse::<u32>().ok().and_then(number_word))
            .flatten();
        out.push_str(word.as_deref().unwrap_or(token));
        token.clear();
    };
    for ch in text.chars() {
        if ch.is_whitespace() {
            flush(&mut token, &mut out);
            out.push(ch);
        } else {
            token.push(ch);
        }
    }
    flush(&mut token, &mut out);
    out
}

/// Question type from the leading interrogative, case-insensitively.
pub fn classify_question(question: &str) -> Result<QuestionType> {
    let q = question.trim_start().to_lowercase();
    const PREFIXES: [(&str, QuestionType); 6] = [
        ("how many", QuestionType::HowMany),
        ("whose", QuestionType::Whose),
        ("who", QuestionType::Who),
        ("what", QuestionType::What),
        ("where", QuestionType::Where),
        ("when", QuestionType::When),
    ];
    for (prefix, ty) in PREFIXES {
        if let Some(rest) = q.strip_prefix(prefix) {
            if !rest.starts_with(|c: char| c.is_alphabetic()) {
                return Ok(ty);
            }
        }
    }
    Err(Error::Unclassified(question.to_string()))
}

/// Lowercase whitespace tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Token with surrounding punctuation removed.
fn core(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric() && c != '-')
}

/// Splits an attached possessive: `boy's` → (`boy`, `'s`), `cats'` → (`cats`, `'`).
fn split_possessive(token: &str) -> (&str, &str) {
    if let Some(stem) = token.strip_suffix("'s").filter(|s| !s.is_empty()) {
        (stem, "'s")
    } else if let Some(stem) = token.strip_suffix('\'').filter(|s| !s.is_empty()) {
        (stem, "'")
    } else {
        (token, "")
    }
}

fn is_determiner(word: &str) -> bool {
    ARTICLES.contains(&word) || POSSESSIVE_PRONOUNS.contains(&word)
}

fn is_break(token: &str) -> bool {
    PHRASE_BREAKS.contains(&token) || core(token).is_empty()
}

/// Optional set of known nouns.
#[derive(Clone, Debug, Default)]
pub struct NounLexicon {
    words: HashSet<String>,
}

impl NounLexicon {
    pub fn from_words<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        Self {
            words: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty() && !w.starts_with('#'))
                .collect(),
        }
    }

    /// One word per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Self {
        Self::from_words(text.lines())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }
}

/// Positions of noun tokens in `tokens`, in order.
pub fn noun_positions(tokens: &[String], lexicon: Option<&NounLexicon>) -> Vec<usize> {
    if let Some(lex) = lexicon {
        return tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| {
                let (stem, _) = split_possessive(t);
                lex.contains(core(stem))
            })
            .map(|(i, _)| i)
            .collect();
    }
    let mut nouns = Vec::new();
    let mut i = 0;
    // A possessive marker opens a new phrase just like a determiner.
    let mut opened = false;
    while i < tokens.len() {
        let t = tokens[i].as_str();
        let start = if opened {
            i
        } else if is_determiner(core(t)) || t == "'s" || t == "'" {
            i + 1
        } else if i == 0 && !is_break(t) {
            0
        } else {
            i += 1;
            continue;
        };
        opened = false;
        let mut end = start;
        while end < tokens.len() {
            let tok = tokens[end].as_str();
            if is_break(tok) || is_determiner(core(tok)) {
                break;
            }
            let (_, suffix) = split_possessive(tok);
            end += 1;
            if !suffix.is_empty() {
                opened = true;
                break;
            }
            if tok.ends_with(|c: char| c.is_ascii_punctuation()) {
                break;
            }
        }
        if end > start {
            let last = end - 1;
            if parse_number_word(core(split_possessive(&tokens[last]).0)).is_none() {
                nouns.push(last);
            }
            i = end;
        } else {
            i = start.max(i + 1);
        }
    }
    nouns
}

/// Entity nouns with their counts, most frequent first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EntityList {
    pub entries: Vec<(String, usize)>,
}

impl EntityList {
    pub fn words(&self) -> Vec<&str> {
        self.entries.iter().map(|(w, _)| w.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn from_counts(
        counts: BTreeMap<String, usize>,
        min_count: usize,
        blocklist: &HashSet<String>,
    ) -> Self {
        let mut entries: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_count && !blocklist.contains(w))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self { entries }
    }
}

/// Bare form of the noun at `pos`.
fn noun_at(tokens: &[String], pos: usize) -> String {
    core(split_possessive(&tokens[pos]).0).to_string()
}

/// Counts the entity noun of every "who" answer and keeps those seen at least
/// `min_count` times and not blocklisted.
pub fn build_entity_list(
    records: &[QaRecord],
    min_count: usize,
    blocklist: &HashSet<String>,
    lexicon: Option<&NounLexicon>,
) -> Result<EntityList> {
    if min_count == 0 {
        return Err(Error::arg("min_count must be at least 1"));
    }
    let mut counts = BTreeMap::new();
    for r in records {
        if record_type(r).ok() != Some(QuestionType::Who) {
            continue;
        }
        let tokens = tokenize(&r.answer);
        if let Some(&pos) = noun_positions(&tokens, lexicon).first() {
            *counts.entry(noun_at(&tokens, pos)).or_insert(0) += 1;
        }
    }
    let list = EntityList::from_counts(counts, min_count, blocklist);
    if list.is_empty() {
        return Err(Error::Config(format!(
            "entity list is empty after filtering; try a min_count below {min_count}"
        )));
    }
    Ok(list)
}

/// Head nouns of all non-counting answers, filtered like the entity list.
/// May be empty.
pub fn build_noun_list(
    records: &[QaRecord],
    min_count: usize,
    blocklist: &HashSet<String>,
    lexicon: Option<&NounLexicon>,
) -> EntityList {
    let mut counts = BTreeMap::new();
    for r in records {
        if matches!(record_type(r), Ok(QuestionType::HowMany) | Err(_)) {
            continue;
        }
        let tokens = tokenize(&r.answer);
        for pos in noun_positions(&tokens, lexicon) {
            *counts.entry(noun_at(&tokens, pos)).or_insert(0) += 1;
        }
    }
    EntityList::from_counts(counts, min_count.max(1), blocklist)
}

fn record_type(r: &QaRecord) -> Result<QuestionType> {
    match r.question_type {
        Some(t) => Ok(t),
        None => classify_question(&r.question),
    }
}

/// Distractor sources for [`gen_candidates`].
#[derive(Clone, Debug, Default)]
pub struct Pools<'a> {
    pub entities: Vec<&'a str>,
    pub nouns: Vec<&'a str>,
    pub lexicon: Option<&'a NounLexicon>,
}

const MAX_ATTEMPTS: usize = 100;

/// Replaces the token at `pos` (keeping any attached possessive) with each of
/// up to seven distinct pool words.
fn substitute<R: Rng + ?Sized>(
    tokens: &[String],
    pos: usize,
    pool: &[&str],
    need: usize,
    existing: &mut Vec<String>,
    rng: &mut R,
) -> std::result::Result<(), Discard> {
    let (stem, suffix) = split_possessive(&tokens[pos]);
    let original = core(stem).to_string();
    let usable = pool.iter().filter(|w| **w != original).count();
    if usable < need {
        return Err(Discard::ResamplingExhausted);
    }
    let mut added = 0;
    let mut attempts = 0;
    while added < need {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Discard::ResamplingExhausted);
        }
        let word = *pool.choose(rng).expect("non-empty pool");
        if word == original {
            continue;
        }
        let mut t = tokens.to_vec();
        t[pos] = format!("{word}{suffix}");
        let cand = t.join(" ");
        if !existing.contains(&cand) {
            existing.push(cand);
            added += 1;
        }
    }
    Ok(())
}

/// Produces eight shuffled candidates for `record`, or the reason it cannot.
pub fn gen_candidates<R: Rng + ?Sized>(
    record: &QaRecord,
    pools: &Pools<'_>,
    rng: &mut R,
) -> std::result::Result<QaInstance, Discard> {
    let ty = record_type(record).map_err(|_| Discard::Unclassified)?;
    let answer = normalize_numerals(&record.answer.to_lowercase());
    let tokens = tokenize(&answer);
    if tokens.is_empty() {
        return Err(Discard::NoReplaceableToken);
    }
    let gt = tokens.join(" ");
    let mut candidates = vec![gt.clone()];

    match ty {
        QuestionType::HowMany => {
            let pos = tokens
                .iter()
                .position(|t| parse_number_word(core(t)).is_some())
                .ok_or(Discard::NoReplaceableToken)?;
            let n = parse_number_word(core(&tokens[pos])).unwrap();
            if !(1..=8).contains(&n) {
                return Err(Discard::NumberOutOfRange { number: n });
            }
            candidates.clear();
            for w in COUNT_WORDS {
                let mut t = tokens.clone();
                t[pos] = w.to_string();
                candidates.push(t.join(" "));
            }
        }
        QuestionType::Who => {
            let pos = *noun_positions(&tokens, pools.lexicon)
                .first()
                .ok_or(Discard::NoReplaceableToken)?;
            substitute(&tokens, pos, &pools.entities, 7, &mut candidates, rng)?;
        }
        QuestionType::Whose => {
            let first = core(&tokens[0]);
            if POSSESSIVE_PRONOUNS.contains(&first) {
                for p in POSSESSIVE_PRONOUNS.iter().filter(|p| **p != first) {
                    let mut t = tokens.clone();
                    t[0] = p.to_string();
                    candidates.push(t.join(" "));
                }
                // Seven pronouns give only seven candidates; vary the head noun
                // for the rest.
                let missing = NUM_CANDIDATES - candidates.len();
                let head = noun_positions(&tokens, pools.lexicon)
                    .into_iter()
                    .rfind(|&p| p > 0)
                    .ok_or(Discard::ResamplingExhausted)?;
                let mut t = tokens.clone();
                t[0] = POSSESSIVE_PRONOUNS.choose(rng).unwrap().to_string();
                substitute(&t, head, &pools.nouns, missing, &mut candidates, rng)?;
                debug!(
                    "{}: possessive pool exhausted, varied head noun",
                    record.video_id
                );
            } else if let Some(pos) = possessive_noun(&tokens) {
                substitute(&tokens, pos, &pools.entities, 7, &mut candidates, rng)?;
            } else {
                let pos = *noun_positions(&tokens, pools.lexicon)
                    .last()
                    .ok_or(Discard::NoReplaceableToken)?;
                substitute(&tokens, pos, &pools.nouns, 7, &mut candidates, rng)?;
            }
        }
        QuestionType::What | QuestionType::Where | QuestionType::When => {
            let pos = *noun_positions(&tokens, pools.lexicon)
                .last()
                .ok_or(Discard::NoReplaceableToken)?;
            substitute(&tokens, pos, &pools.nouns, 7, &mut candidates, rng)?;
        }
    }

    candidates.shuffle(rng);
    let gt_index = candidates
        .iter()
        .position(|c| *c == gt)
        .expect("ground truth present");
    let inst = QaInstance {
        video_id: record.video_id.clone(),
        question: record.question.clone(),
        candidates,
        gt_index,
        question_type: ty,
    };
    debug_assert!(inst.validate().is_ok());
    Ok(inst)
}

/// Index of `X` in `X 's` / `X's` / `Xs'`.
fn possessive_noun(tokens: &[String]) -> Option<usize> {
    tokens.iter().enumerate().find_map(|(i, t)| {
        if (t == "'s" || t == "'") && i > 0 {
            Some(i - 1)
        } else if !split_possessive(t).1.is_empty() {
            Some(i)
        } else {
            None
        }
    })
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub min_noun_count: usize,
    pub blocklist: HashSet<String>,
    pub lexicon: Option<NounLexicon>,
    pub seed: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            min_noun_count: 5,
            blocklist: HashSet::new(),
            lexicon: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscardEntry {
    pub video_id: String,
    pub question: String,
    pub answer: String,
    #[serde(flatten)]
    pub reason: Discard,
}

#[derive(Clone, Debug, Default)]
pub struct BuildOutput {
    pub instances: Vec<QaInstance>,
    pub discards: Vec<DiscardEntry>,
    pub entities: EntityList,
    pub nouns: EntityList,
}

/// Record `index` gets its own random stream so results do not depend on
/// processing order.
pub fn record_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn build_dataset(records: &[QaRecord], opts: &BuildOptions) -> Result<BuildOutput> {
    let lexicon = opts.lexicon.as_ref();
    let needs_entities = records
        .iter()
        .any(|r| matches!(record_type(r), Ok(QuestionType::Who | QuestionType::Whose)));
    let entities = if needs_entities {
        build_entity_list(records, opts.min_noun_count, &opts.blocklist, lexicon)?
    } else {
        EntityList::default()
    };
    let nouns = build_noun_list(records, opts.min_noun_count, &opts.blocklist, lexicon);
    let pools = Pools {
        entities: entities.words(),
        nouns: nouns.words(),
        lexicon,
    };
    let mut out = BuildOutput::default();
    for (i, r) in records.iter().enumerate() {
        if r.question.trim().is_empty() || r.answer.trim().is_empty() {
            warn!(
                "record {i} ({}) has an empty question or answer",
                r.video_id
            );
            out.discards
                .push(discard_entry(r, Discard::NoReplaceableToken));
            continue;
        }
        let mut rng = record_rng(opts.seed, i);
        match gen_candidates(r, &pools, &mut rng) {
            Ok(inst) => out.instances.push(inst),
            Err(reason) => {
                if reason == Discard::Unclassified {
                    warn!("skipping unclassified question {:?}", r.question);
                }
                out.discards.push(discard_entry(r, reason));
            }
        }
    }
    out.entities = entities;
    out.nouns = nouns;
    Ok(out)
}

fn discard_entry(r: &QaRecord, reason: Discard) -> DiscardEntry {
    DiscardEntry {
        video_id: r.video_id.clone(),
        question: r.question.clone(),
        answer: r.answer.clone(),
        reason,
    }
}

/// Split proportions matching 230,689 / 24,696 / 32,378 pairs.
pub const DEFAULT_RATIOS: [f64; 3] = [0.801, 0.086, 0.113];

pub fn validate_ratios(ratios: &[f64; 3]) -> Result<()> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::arg(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1 (sum is {sum})"
        )));
    }
    Ok(())
}

/// Position of `video_id` in `[0, 1)` under `seed`.
pub fn video_unit(video_id: &str, seed: u64) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(video_id.as_bytes());
    let digest = h.finalize();
    let top = u64::from_le_bytes(digest[..8].try_into().unwrap()) >> 11;
    top as f64 / (1u64 << 53) as f64
}

/// 0 = train, 1 = validation, 2 = test.
pub fn split_of(video_id: &str, ratios: &[f64; 3], seed: u64) -> usize {
    let u = video_unit(video_id, seed);
    if u < ratios[0] {
        0
    } else if u < ratios[0] + ratios[1] {
        1
    } else {
        2
    }
}

/// Splits by video: every item of one video lands in the same part.
pub fn split_by_video<T: Clone>(
    items: &[T],
    video_of: impl Fn(&T) -> &str,
    ratios: [f64; 3],
    seed: u64,
) -> Result<[Vec<T>; 3]> {
    validate_ratios(&ratios)?;
    let mut parts: [Vec<T>; 3] = Default::default();
    for item in items {
        parts[split_of(video_of(item), &ratios, seed)].push(item.clone());
    }
    Ok(parts)
}

pub fn split_dataset(
    instances: &[QaInstance],
    ratios: [f64; 3],
    seed: u64,
) -> Result<[Vec<QaInstance>; 3]> {
    split_by_video(instances, |i| &i.video_id, ratios, seed)
}

/// Question tokens with the trailing question mark removed.
pub fn question_tokens(question: &str) -> Vec<String> {
    let mut tokens = tokenize(question);
    if let Some(last) = tokens.last_mut() {
        while last.ends_with('?') {
            last.pop();
        }
        if last.is_empty() {
            tokens.pop();
        }
    }
    tokens
}

/// Question tokens followed by each candidate's tokens.
pub fn make_qa_sentences(question: &str, candidates: &[String]) -> Vec<Vec<String>> {
    let q = question_tokens(question);
    candidates
        .iter()
        .map(|c| {
            let answer = tokenize(c);
            if answer.is_empty() {
                debug!("empty candidate for question {question:?}");
            }
            q.iter().cloned().chain(answer).collect()
        })
        .collect()
}

/// Distinct video ids in first-seen order.
pub fn videos<'a>(instances: impl IntoIterator<Item = &'a QaInstance>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for i in instances {
        if seen.insert(i.video_id.as_str()) {
            out.push(i.video_id.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(ty: Option<QuestionType>, q: &str, a: &str) -> QaRecord {
        QaRecord {
            video_id: "v".into(),
            description: String::new(),
            question: q.into(),
            answer: a.into(),
            question_type: ty,
        }
    }

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn numerals() {
        assert_eq!(normalize_numerals("3 dogs"), "three dogs");
        assert_eq!(normalize_numerals("two cars"), "two cars");
        assert_eq!(
            normalize_numerals("10 men and 2 dogs"),
            "ten men and two dogs"
        );
        assert_eq!(
            normalize_numerals("101 things, 3rd  42"),
            "101 things, 3rd  forty-two"
        );
        assert_eq!(normalize_numerals("100"), "one hundred");
    }

    #[test]
    fn number_words_round_trip() {
        for n in 0..=99 {
            assert_eq!(parse_number_word(&number_word(n).unwrap()), Some(n));
        }
        assert_eq!(number_word(101), None);
    }

    #[test]
    fn classification() {
        use QuestionType::*;
        let cases = [
            (
                "How many cars is chasing each other along a highway?",
                HowMany,
            ),
            ("Whose leg gets caught?", Whose),
            ("Who is glaring?", Who),
            ("what does a man in a hat adjust?", What),
            ("WHERE is the cat?", Where),
            ("When does he fall?", When),
            ("What's that", What),
        ];
        for (q, t) in cases {
            assert_eq!(classify_question(q).unwrap(), t, "{q}");
        }
        assert!(matches!(
            classify_question("Why?"),
            Err(Error::Unclassified(_))
        ));
        assert!(classify_question("Whoever wins").is_err());
    }

    #[test]
    fn noun_heuristic() {
        let n = |s: &str| {
            let t = toks(s);
            noun_positions(&t, None)
                .into_iter()
                .map(|p| noun_at(&t, p))
                .collect::<Vec<_>>()
        };
        assert_eq!(n("a man"), ["man"]);
        assert_eq!(n("a little boy 's leg"), ["boy", "leg"]);
        assert_eq!(n("his tie"), ["tie"]);
        assert_eq!(n("on the table"), ["table"]);
        assert_eq!(n("a man in a hat"), ["man", "hat"]);
        assert_eq!(n("two cars"), ["cars"]);
        assert_eq!(n("the girl's dog"), ["girl", "dog"]);
    }

    #[test]
    fn lexicon_overrides_heuristic() {
        let lex = NounLexicon::parse("# nouns\nboy\nleg\n");
        let t = toks("a little boy 's leg");
        assert_eq!(noun_positions(&t, Some(&lex)), [2, 4]);
    }

    #[test]
    fn entity_list_filters() {
        let recs: Vec<_> = ["a man", "a man", "a dog"]
            .iter()
            .map(|a| rec(Some(QuestionType::Who), "Who runs?", a))
            .collect();
        let l = build_entity_list(&recs, 2, &HashSet::new(), None).unwrap();
        assert_eq!(l.words(), ["man"]);
        let block: HashSet<String> = ["man".to_string()].into();
        assert!(matches!(
            build_entity_list(&recs, 2, &block, None),
            Err(Error::Config(_))
        ));
        assert!(build_entity_list(&recs, 0, &HashSet::new(), None).is_err());
        let all = build_entity_list(&recs, 1, &HashSet::new(), None).unwrap();
        assert_eq!(
            all.entries,
            [("man".to_string(), 2), ("dog".to_string(), 1)]
        );
    }

    #[test]
    fn how_many_uses_all_count_words() {
        let r = rec(
            None,
            "How many cars is chasing each other along a highway?",
            "two cars",
        );
        let inst = gen_candidates(&r, &Pools::default(), &mut record_rng(1, 0)).unwrap();
        let got: BTreeSet<_> = inst.candidates.iter().map(String::as_str).collect();
        let want: BTreeSet<_> = COUNT_WORDS.iter().map(|w| format!("{w} cars")).collect();
        assert_eq!(got, want.iter().map(String::as_str).collect());
        assert_eq!(inst.ground_truth(), "two cars");
        assert_eq!(inst.question_type, QuestionType::HowMany);
    }

    #[test]
    fn how_many_discards() {
        let mut rng = record_rng(0, 0);
        let r = rec(None, "How many cars?", "nine cars");
        assert_eq!(
            gen_candidates(&r, &Pools::default(), &mut rng),
            Err(Discard::NumberOutOfRange { number: 9 })
        );
        let r = rec(None, "How many cars?", "12 cars");
        assert_eq!(
            gen_candidates(&r, &Pools::default(), &mut rng),
            Err(Discard::NumberOutOfRange { number: 12 })
        );
        let r = rec(None, "How many cars?", "0 cars");
        assert_eq!(
            gen_candidates(&r, &Pools::default(), &mut rng),
            Err(Discard::NumberOutOfRange { number: 0 })
        );
        let r = rec(None, "How many cars?", "many cars");
        assert_eq!(
            gen_candidates(&r, &Pools::default(), &mut rng),
            Err(Discard::NoReplaceableToken)
        );
        let r = rec(None, "How many cars?", "3 cars");
        assert_eq!(
            gen_candidates(&r, &Pools::default(), &mut rng)
                .unwrap()
                .ground_truth(),
            "three cars"
        );
    }

    const PEOPLE: [&str; 9] = [
        "man",
        "spectator",
        "pilot",
        "performer",
        "alien",
        "model",
        "soldier",
        "biker",
        "boy",
    ];

    #[test]
    fn whose_possessive_noun() {
        let r = rec(None, "Whose leg gets caught?", "a little boy 's leg");
        let pools = Pools {
            entities: PEOPLE.to_vec(),
            ..Pools::default()
        };
        let inst = gen_candidates(&r, &pools, &mut record_rng(3, 0)).unwrap();
        inst.validate().unwrap();
        assert_eq!(inst.ground_truth(), "a little boy 's leg");
        for (i, c) in inst.candidates.iter().enumerate() {
            let t = toks(c);
            assert_eq!(t.len(), 5);
            assert_eq!(
                (t[0].as_str(), t[1].as_str(), t[3].as_str(), t[4].as_str()),
                ("a", "little", "'s", "leg")
            );
            assert!(PEOPLE.contains(&t[2].as_str()));
            if i != inst.gt_index {
                assert_ne!(t[2], "boy");
            }
        }
    }

    #[test]
    fn whose_pronoun_pool_extension() {
        let r = rec(None, "Whose tie is it?", "his tie");
        let pools = Pools {
            nouns: vec!["tie", "scar", "watch", "pocket"],
            ..Pools::default()
        };
        let inst = gen_candidates(&r, &pools, &mut record_rng(0, 0)).unwrap();
        inst.validate().unwrap();
        let with_tie = inst
            .candidates
            .iter()
            .filter(|c| c.ends_with(" tie"))
            .count();
        assert_eq!(with_tie, 7);
        for p in POSSESSIVE_PRONOUNS {
            assert!(inst.candidates.contains(&format!("{p} tie")));
        }
    }

    #[test]
    fn other_types_replace_head_noun() {
        let r = rec(None, "What does a man in a hat adjust?", "his tie");
        let pools = Pools {
            nouns: vec![
                "scar",
                "mannequin",
                "trunk",
                "watch",
                "caps",
                "pattern",
                "pocket",
                "tie",
            ],
            ..Pools::default()
        };
        let inst = gen_candidates(&r, &pools, &mut record_rng(5, 0)).unwrap();
        inst.validate().unwrap();
        assert!(inst.candidates.iter().all(|c| c.starts_with("his ")));
    }

    #[test]
    fn small_pool_is_exhausted() {
        let r = rec(None, "Who is glaring?", "a man");
        let pools = Pools {
            entities: vec!["man", "dog", "cat"],
            ..Pools::default()
        };
        assert_eq!(
            gen_candidates(&r, &pools, &mut record_rng(0, 0)),
            Err(Discard::ResamplingExhausted)
        );
    }

    #[test]
    fn unclassified_is_a_discard() {
        let r = rec(None, "Why is it raining?", "clouds");
        assert_eq!(
            gen_candidates(&r, &Pools::default(), &mut record_rng(0, 0)),
            Err(Discard::Unclassified)
        );
    }

    #[test]
    fn sentences() {
        let c = vec!["a woman".to_string(), String::new()];
        let s = make_qa_sentences("Who talks?", &c);
        assert_eq!(s[0], ["who", "talks", "a", "woman"]);
        assert_eq!(s[1], ["who", "talks"]);
        assert_eq!(question_tokens("Who talks ?"), ["who", "talks"]);
    }

    #[test]
    fn ratios_validated() {
        assert!(validate_ratios(&[0.5, 0.3, 0.1]).is_err());
        assert!(validate_ratios(&[1.2, -0.1, -0.1]).is_err());
        validate_ratios(&DEFAULT_RATIOS).unwrap();
        validate_ratios(&[1.0, 0.0, 0.0]).unwrap();
    }

    #[test]
    fn discard_serializes_with_reason_tag() {
        let e = DiscardEntry {
            video_id: "v1".into(),
            question: "How many?".into(),
            answer: "nine".into(),
            reason: Discard::NumberOutOfRange { number: 9 },
        };
        let s = serde_json::to_string(&e).unwrap();
        assert!(s.contains(r#""reason":"number_out_of_range""#), "{s}");
        assert!(s.contains(r#""number":9"#), "{s}");
    }

    #[test]
    fn record_type_aliases() {
        let r: QaRecord = serde_json::from_str(
            r#"{"video_id":"v","description":"d","question":"q","answer":"a","type":"how_many"}"#,
        )
        .unwrap();
        assert_eq!(r.question_type, Some(QuestionType::HowMany));
        let r: QaRecord =
            serde_json::from_str(r#"{"video_id":"v","question":"q","answer":"a"}"#).unwrap();
        assert_eq!(r.question_type, None);
    }
}
