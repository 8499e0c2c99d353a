//! Transcript coding: speaker filtering, tokenization, lemmatization and the
//! carrier-quarter communication flag.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::ops::Range;
use std::sync::OnceLock;

use crate::domain::YearQuarter;

const BUILTIN_RULES: &str = include_str!("../data/lemma_rules.txt");
const BUILTIN_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// Version of the shipped rule table; bumped whenever the table changes output.
pub const LEMMA_RULES_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TranscriptStatus {
    Collected,
    Bankruptcy,
    Merger,
    Private,
    Other,
}

impl TranscriptStatus {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "collected" => Some(Self::Collected),
            "bankruptcy" => Some(Self::Bankruptcy),
            "merger" => Some(Self::Merger),
            "private" => Some(Self::Private),
            "other" => Some(Self::Other),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Collected => "collected",
            Self::Bankruptcy => "bankruptcy",
            Self::Merger => "merger",
            Self::Private => "private",
            Self::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LabelSource {
    Authors,
    Ra,
    Automatic,
}

impl LabelSource {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "authors" => Some(Self::Authors),
            "ra" => Some(Self::Ra),
            "automatic" => Some(Self::Automatic),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Authors => "authors",
            Self::Ra => "ra",
            Self::Automatic => "automatic",
        }
    }

    pub const DEFAULT_PRIORITY: [LabelSource; 3] =
        [LabelSource::Authors, LabelSource::Ra, LabelSource::Automatic];
}

/// A manual or automatic label for one carrier-quarter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelOverride {
    pub carrier: String,
    pub year_quarter: YearQuarter,
    pub label: bool,
    pub source: LabelSource,
}

/// Label overrides keyed by (carrier, quarter, source); at most one per key.
#[derive(Debug, Clone, Default)]
pub struct LabelSet {
    labels: BTreeMap<(String, YearQuarter, LabelSource), bool>,
}

impl LabelSet {
    /// Fails with the existing label when the key is already present.
    pub fn insert(&mut self, o: LabelOverride) -> Result<(), LabelOverride> {
        let key = (o.carrier.clone(), o.year_quarter, o.source);
        if let Some(&existing) = self.labels.get(&key) {
            return Err(LabelOverride {
                label: existing,
                ..o
            });
        }
        self.labels.insert(key, o.label);
        Ok(())
    }

    pub fn get(&self, carrier: &str, yq: YearQuarter, source: LabelSource) -> Option<bool> {
        self.labels
            .get(&(carrier.to_string(), yq, source))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeakerRole {
    Management,
    Analyst,
    Operator,
}

impl SpeakerRole {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "management" => Some(Self::Management),
            "analyst" => Some(Self::Analyst),
            "operator" => Some(Self::Operator),
            _ => None,
        }
    }
}

const TAG_OPEN: &str = "<<SPEAKER:";
const TAG_CLOSE: &str = ">>";

/// Byte ranges of `raw` spoken by management, in document order.
///
/// Text before the first tag, and text under an unrecognised role, counts as
/// management. Tags themselves are never part of a span; spans are trimmed of
/// surrounding whitespace and empty spans are dropped.
pub fn management_spans(raw: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut role_is_mgmt = true;
    let mut pos = 0;
    loop {
        let next_tag = raw[pos..].find(TAG_OPEN).map(|i| pos + i);
        let body_end = next_tag.unwrap_or(raw.len());
        if role_is_mgmt {
            if let Some(r) = trimmed(raw, pos..body_end) {
                spans.push(r);
            }
        }
        let Some(tag_start) = next_tag else { break };
        let role_start = tag_start + TAG_OPEN.len();
        match raw[role_start..].find(TAG_CLOSE) {
            Some(off) => {
                let role = &raw[role_start..role_start + off];
                role_is_mgmt = !matches!(
                    SpeakerRole::parse(role),
                    Some(SpeakerRole::Analyst | SpeakerRole::Operator)
                );
                pos = role_start + off + TAG_CLOSE.len();
            }
            None => {
                // Unterminated tag: treat the remainder as plain text.
                if role_is_mgmt {
                    if let Some(r) = trimmed(raw, tag_start..raw.len()) {
                        spans.push(r);
                    }
                }
                break;
            }
        }
    }
    spans
}

fn trimmed(raw: &str, r: Range<usize>) -> Option<Range<usize>> {
    let s = &raw[r.clone()];
    let lead = s.len() - s.trim_start().len();
    let t = s.trim();
    if t.is_empty() {
        None
    } else {
        Some(r.start + lead..r.start + lead + t.len())
    }
}

/// Management-only text; separate speaker turns are joined by a blank line,
/// which the sentence splitter treats as a boundary.
pub fn strip_nonmanagement(raw: &str) -> String {
    management_spans(raw)
        .into_iter()
        .map(|r| &raw[r])
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[derive(Debug, Clone)]
enum Rule {
    Keep(String),
    Suffix {
        suffix: String,
        replacement: String,
        min_stem: usize,
        vowel: bool,
        post: bool,
    },
}

/// Rule-table lemmatizer. See `data/lemma_rules.txt` for the format.
#[derive(Debug, Clone)]
pub struct Lemmatizer {
    pub version: u32,
    exceptions: HashMap<String, String>,
    rules: Vec<Rule>,
    undouble: Vec<String>,
    restore_e: Vec<(String, Vec<String>)>,
}

impl Lemmatizer {
    pub fn parse(table: &str) -> Result<Self, String> {
        let mut lem = Lemmatizer {
            version: 0,
            exceptions: HashMap::new(),
            rules: Vec::new(),
            undouble: Vec::new(),
            restore_e: Vec::new(),
        };
        for (lineno, line) in table.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let directive = parts.next().unwrap_or_default();
            let args: Vec<&str> = parts.collect();
            let bad = |msg: &str| format!("line {}: {msg}: `{line}`", lineno + 1);
            match directive {
                "version" => {
                    lem.version = args
                        .first()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad("bad version"))?;
                }
                "exception" => {
                    let [form, lemma] = args[..] else {
                        return Err(bad("expected FORM LEMMA"));
                    };
                    lem.exceptions.insert(form.into(), lemma.into());
                }
                "keep" => {
                    let [suffix] = args[..] else {
                        return Err(bad("expected SUFFIX"));
                    };
                    lem.rules.push(Rule::Keep(suffix.into()));
                }
                "suffix" => {
                    if args.len() < 2 {
                        return Err(bad("expected SUFFIX REPL"));
                    }
                    let mut min_stem = 1;
                    let mut vowel = false;
                    let mut post = false;
                    for flag in &args[2..] {
                        match *flag {
                            "vowel" => vowel = true,
                            "post" => post = true,
                            f if f.starts_with("min=") => {
                                min_stem = f[4..].parse().map_err(|_| bad("bad min"))?;
                            }
                            _ => return Err(bad("unknown flag")),
                        }
                    }
                    lem.rules.push(Rule::Suffix {
                        suffix: args[0].into(),
                        replacement: if args[1] == "-" { String::new() } else { args[1].into() },
                        min_stem,
                        vowel,
                        post,
                    });
                }
                "undouble" => lem.undouble.extend(args.iter().map(|s| s.to_string())),
                "restore-e" => {
                    for spec in args {
                        let mut it = spec.split('!');
                        let end = it.next().unwrap_or_default().to_string();
                        lem.restore_e.push((end, it.map(str::to_string).collect()));
                    }
                }
                _ => return Err(bad("unknown directive")),
            }
        }
        Ok(lem)
    }

    pub fn builtin() -> &'static Lemmatizer {
        static LEM: OnceLock<Lemmatizer> = OnceLock::new();
        LEM.get_or_init(|| Lemmatizer::parse(BUILTIN_RULES).expect("shipped rule table parses"))
    }

    fn step(&self, word: &str) -> String {
        if let Some(l) = self.exceptions.get(word) {
            return l.clone();
        }
        for rule in &self.rules {
            match rule {
                Rule::Keep(s) if word.ends_with(s.as_str()) => return word.to_string(),
                Rule::Suffix {
                    suffix,
                    replacement,
                    min_stem,
                    vowel,
                    post,
                } if word.ends_with(suffix.as_str()) => {
                    let stem = &word[..word.len() - suffix.len()];
                    if stem.chars().count() < *min_stem || (*vowel && !has_vowel(stem)) {
                        return word.to_string();
                    }
                    let mut out = format!("{stem}{replacement}");
                    if *post {
                        out = self.post_process(out);
                    }
                    return out;
                }
                _ => {}
            }
        }
        word.to_string()
    }

    fn post_process(&self, stem: String) -> String {
        if stem.len() >= 4 && self.undouble.iter().any(|d| stem.ends_with(d.as_str())) {
            let mut s = stem;
            s.pop();
            return s;
        }
        let restore = self.restore_e.iter().any(|(end, excl)| {
            stem.ends_with(end.as_str()) && !excl.iter().any(|x| stem.ends_with(x.as_str()))
        });
        if restore {
            stem + "e"
        } else {
            stem
        }
    }

    /// Applies the rules until the word stops changing.
    pub fn lemmatize(&self, word: &str) -> String {
        let mut cur = word.to_string();
        // Every rule shortens the word, so this terminates quickly.
        for _ in 0..32 {
            let next = self.step(&cur);
            if next == cur {
                break;
            }
            cur = next;
        }
        cur
    }
}

fn has_vowel(s: &str) -> bool {
    s.chars().any(|c| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y'))
}

pub fn builtin_stopwords() -> &'static HashSet<String> {
    static SW: OnceLock<HashSet<String>> = OnceLock::new();
    SW.get_or_init(|| {
        BUILTIN_STOPWORDS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    })
}

/// Tokenizer configuration: stop words plus lemmatizer.
#[derive(Debug, Clone, Copy)]
pub struct TextPipeline<'a> {
    pub stopwords: &'a HashSet<String>,
    pub lemmatizer: &'a Lemmatizer,
}

impl Default for TextPipeline<'static> {
    fn default() -> Self {
        TextPipeline {
            stopwords: builtin_stopwords(),
            lemmatizer: Lemmatizer::builtin(),
        }
    }
}

/// Splits on `.`, `?` or `!` followed by whitespace (or end of text), and on
/// blank lines.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (idx, c) = chars[i];
        let next = chars.get(i + 1).map(|&(_, c)| c);
        let boundary_end = if matches!(c, '.' | '?' | '!') && next.is_none_or(char::is_whitespace) {
            Some(idx + c.len_utf8())
        } else if c == '\n' && next == Some('\n') {
            Some(idx)
        } else {
            None
        };
        if let Some(end) = boundary_end {
            if !text[start..end].trim().is_empty() {
                out.push(&text[start..end]);
            }
            start = end;
        }
        i += 1;
    }
    if !text[start..].trim().is_empty() {
        out.push(&text[start..]);
    }
    out
}

impl TextPipeline<'_> {
    fn words(&self, sentence: &str) -> Vec<String> {
        sentence
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .filter(|w| w.chars().count() > 1 && !self.stopwords.contains(w))
            .map(|w| self.lemmatizer.lemmatize(&w))
            .filter(|w| w.chars().count() > 1 && !self.stopwords.contains(w))
            .collect()
    }

    /// Lemma sequences, one per sentence.
    pub fn sentences(&self, text: &str) -> Vec<Vec<String>> {
        split_sentences(text)
            .into_iter()
            .map(|s| self.words(s))
            .filter(|s| !s.is_empty())
            .collect()
    }

    /// Lowercased, stop-word-free lemma sequence in original order.
    pub fn tokenize_lemmatize(&self, text: &str) -> Vec<String> {
        self.sentences(text).into_iter().flatten().collect()
    }
}

pub fn tokenize_lemmatize(text: &str) -> Vec<String> {
    TextPipeline::default().tokenize_lemmatize(text)
}

/// 1 when `phrase` occurs as adjacent lemmas in `tokens`.
pub fn flag_phrase<S: AsRef<str>, P: AsRef<str>>(tokens: &[S], phrase: &[P]) -> bool {
    assert!(!phrase.is_empty(), "phrase must be non-empty");
    tokens.windows(phrase.len()).any(|w| {
        w.iter()
            .zip(phrase)
            .all(|(a, b)| a.as_ref() == b.as_ref())
    })
}

/// 1 when "capacity" appears together with "demand" or "gdp".
pub fn cooccurrence_flag<S: AsRef<str>>(tokens: &[S]) -> bool {
    let has = |w: &str| tokens.iter().any(|t| t.as_ref() == w);
    has("capacity") && (has("demand") || has("gdp"))
}

pub const CAPACITY_DISCIPLINE: [&str; 2] = ["capacity", "discipline"];

/// One carrier-quarter earnings call.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptRecord {
    pub carrier: String,
    pub year_quarter: YearQuarter,
    pub status: TranscriptStatus,
    pub raw_text: String,
    /// Management-only lemma sequences, split by sentence.
    pub sentences: Vec<Vec<String>>,
    pub coded_flag: bool,
}

impl TranscriptRecord {
    pub fn new(carrier: &str, yq: YearQuarter, status: TranscriptStatus, raw_text: &str) -> Self {
        let collected = status == TranscriptStatus::Collected;
        TranscriptRecord {
            carrier: carrier.to_string(),
            year_quarter: yq,
            status,
            raw_text: if collected { raw_text.to_string() } else { String::new() },
            sentences: Vec::new(),
            coded_flag: false,
        }
    }

    /// Strips non-management speech and fills `sentences`. No-op unless collected.
    pub fn tokenize(&mut self, pipeline: &TextPipeline<'_>) {
        if self.status != TranscriptStatus::Collected {
            self.sentences.clear();
            return;
        }
        self.sentences = pipeline.sentences(&strip_nonmanagement(&self.raw_text));
    }

    pub fn tokens(&self) -> Vec<&str> {
        self.sentences
            .iter()
            .flat_map(|s| s.iter().map(String::as_str))
            .collect()
    }

    pub fn has_phrase(&self, phrase: &[&str]) -> bool {
        self.sentences.iter().any(|s| flag_phrase(s, phrase))
    }

    pub fn has_token(&self, token: &str) -> bool {
        self.sentences.iter().flatten().any(|t| t == token)
    }

    pub fn has_cooccurrence(&self) -> bool {
        cooccurrence_flag(&self.tokens())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodingReason {
    NotCollected(TranscriptStatus),
    Override(LabelSource),
    Phrase,
    /// Co-occurrence without the phrase and no label: coded 0, queued for review.
    ReviewQueued,
    NoMatch,
}

impl CodingReason {
    pub fn code(&self) -> String {
        match self {
            CodingReason::NotCollected(s) => format!("status:{}", s.as_str()),
            CodingReason::Override(src) => format!("override:{}", src.as_str()),
            CodingReason::Phrase => "phrase".into(),
            CodingReason::ReviewQueued => "review".into(),
            CodingReason::NoMatch => "none".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coding {
    pub flag: bool,
    pub reason: CodingReason,
}

/// Codes one (already tokenized) transcript.
///
/// Non-collected calls are always 0. Otherwise the first source in `priority`
/// holding a label wins; without labels the phrase match decides and
/// co-occurrence-only transcripts are coded 0 and queued for review.
pub fn code_transcript(
    rec: &TranscriptRecord,
    labels: &LabelSet,
    priority: &[LabelSource],
) -> Coding {
    if rec.status != TranscriptStatus::Collected {
        return Coding {
            flag: false,
            reason: CodingReason::NotCollected(rec.status),
        };
    }
    for &src in priority {
        if let Some(label) = labels.get(&rec.carrier, rec.year_quarter, src) {
            return Coding {
                flag: label,
                reason: CodingReason::Override(src),
            };
        }
    }
    if rec.has_phrase(&CAPACITY_DISCIPLINE) {
        Coding {
            flag: true,
            reason: CodingReason::Phrase,
        }
    } else if rec.has_cooccurrence() {
        Coding {
            flag: false,
            reason: CodingReason::ReviewQueued,
        }
    } else {
        Coding {
            flag: false,
            reason: CodingReason::NoMatch,
        }
    }
}

/// Result of coding a whole corpus.
#[derive(Debug, Clone, Default)]
pub struct CorpusCoding {
    /// (carrier, quarter) → coding, sorted.
    pub codings: BTreeMap<(String, YearQuarter), Coding>,
    pub review_queue: BTreeSet<(String, YearQuarter)>,
}

/// Codes every record, storing the flag on the record. Records are processed
/// in parallel; the output is order-independent.
pub fn code_corpus(
    records: &mut [TranscriptRecord],
    labels: &LabelSet,
    priority: &[LabelSource],
) -> CorpusCoding {
    use rayon::prelude::*;
    let pipeline = TextPipeline::default();
    let codings: Vec<Coding> = records
        .par_iter_mut()
        .map(|rec| {
            rec.tokenize(&pipeline);
            let c = code_transcript(rec, labels, priority);
            rec.coded_flag = c.flag;
            c
        })
        .collect();
    let mut out = CorpusCoding::default();
    for (rec, c) in records.iter().zip(codings) {
        let key = (rec.carrier.clone(), rec.year_quarter);
        if c.reason == CodingReason::ReviewQueued {
            out.review_queue.insert(key.clone());
        }
        out.codings.insert(key, c);
    }
    out
}
