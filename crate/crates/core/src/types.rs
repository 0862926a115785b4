//! Domain types shared by every pipeline stage, plus their validation rules.
//!
//! Everything here is an immutable value that serializes to a single JSON
//! line (see [`crate::persist`]), so records can be copied freely between
//! threads and written out without coordination.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Raised when a record fails one of its structural invariants. The field
/// name is part of the error so load failures point at the offending data.
#[derive(Debug, Error, PartialEq)]
#[error("{type_name}.{field}: {message}")]
pub struct InvariantError {
    pub type_name: &'static str,
    pub field: &'static str,
    pub message: String,
}

impl InvariantError {
    pub fn new(type_name: &'static str, field: &'static str, message: impl Into<String>) -> Self {
        Self {
            type_name,
            field,
            message: message.into(),
        }
    }
}

/// Types that can check their own invariants after deserialization.
pub trait Validate {
    fn validate(&self) -> Result<(), InvariantError>;
}

/// The sixteen probed languages plus English. Unknown codes are rejected
/// when configs or records are loaded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "en")]
    English,
    #[serde(rename = "zh")]
    Chinese,
    #[serde(rename = "ja")]
    Japanese,
    #[serde(rename = "ko")]
    Korean,
    #[serde(rename = "fr")]
    French,
    #[serde(rename = "es")]
    Spanish,
    #[serde(rename = "it")]
    Italian,
    #[serde(rename = "uk")]
    Ukrainian,
    #[serde(rename = "de")]
    German,
    #[serde(rename = "bn")]
    Bengali,
    #[serde(rename = "hi")]
    Hindi,
    #[serde(rename = "ar")]
    Arabic,
    #[serde(rename = "he")]
    Hebrew,
    #[serde(rename = "am")]
    Amharic,
    #[serde(rename = "yo")]
    Yoruba,
    #[serde(rename = "sw")]
    Swahili,
    #[serde(rename = "zu")]
    Zulu,
}

impl Language {
    pub const ALL: [Language; 17] = [
        Language::English,
        Language::Chinese,
        Language::Japanese,
        Language::Korean,
        Language::French,
        Language::Spanish,
        Language::Italian,
        Language::Ukrainian,
        Language::German,
        Language::Bengali,
        Language::Hindi,
        Language::Arabic,
        Language::Hebrew,
        Language::Amharic,
        Language::Yoruba,
        Language::Swahili,
        Language::Zulu,
    ];

    /// The sixteen non-English target languages.
    pub fn targets() -> impl Iterator<Item = Language> {
        Self::ALL.iter().copied().filter(|l| *l != Language::English)
    }

    pub fn code(&self) -> &'static str {
        match self {
            Language::English => "en",
            Language::Chinese => "zh",
            Language::Japanese => "ja",
            Language::Korean => "ko",
            Language::French => "fr",
            Language::Spanish => "es",
            Language::Italian => "it",
            Language::Ukrainian => "uk",
            Language::German => "de",
            Language::Bengali => "bn",
            Language::Hindi => "hi",
            Language::Arabic => "ar",
            Language::Hebrew => "he",
            Language::Amharic => "am",
            Language::Yoruba => "yo",
            Language::Swahili => "sw",
            Language::Zulu => "zu",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Language::English => "English",
            Language::Chinese => "Chinese",
            Language::Japanese => "Japanese",
            Language::Korean => "Korean",
            Language::French => "French",
            Language::Spanish => "Spanish",
            Language::Italian => "Italian",
            Language::Ukrainian => "Ukrainian",
            Language::German => "German",
            Language::Bengali => "Bengali",
            Language::Hindi => "Hindi",
            Language::Arabic => "Arabic",
            Language::Hebrew => "Hebrew",
            Language::Amharic => "Amharic",
            Language::Yoruba => "Yoruba",
            Language::Swahili => "Swahili",
            Language::Zulu => "Zulu",
        }
    }
}

impl FromStr for Language {
    type Err = InvariantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.code() == s)
            .ok_or_else(|| InvariantError::new("Language", "code", format!("unknown code {s:?}")))
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Source benchmark a seed question was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceDataset {
    Arc,
    Mmlu,
    CommonsenseQa,
    TruthfulQa,
    SciQ,
    Custom,
}

/// An English multiple-choice question as sampled from a source dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub source_dataset: SourceDataset,
    pub text: String,
    pub choices: Vec<String>,
    pub answer_index: usize,
}

impl Validate for QuestionRecord {
    fn validate(&self) -> Result<(), InvariantError> {
        let t = "QuestionRecord";
        if self.text.trim().is_empty() {
            return Err(InvariantError::new(t, "text", "must be non-empty"));
        }
        if self.choices.len() < 2 {
            return Err(InvariantError::new(t, "choices", "need at least 2 choices"));
        }
        for (i, a) in self.choices.iter().enumerate() {
            for b in self.choices.iter().skip(i + 1) {
                if a == b {
                    return Err(InvariantError::new(t, "choices", format!("duplicate choice {a:?}")));
                }
            }
        }
        if self.answer_index >= self.choices.len() {
            return Err(InvariantError::new(
                t,
                "answer_index",
                format!("{} out of range for {} choices", self.answer_index, self.choices.len()),
            ));
        }
        Ok(())
    }
}

/// One language's rendering of a question: stem, choices, and the index of
/// the correct choice. The incorrect set is everything but `answer_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedQuestion {
    pub language: Language,
    pub text: String,
    pub choices: Vec<String>,
    pub answer_index: usize,
}

impl LocalizedQuestion {
    pub fn correct_answer(&self) -> &str {
        &self.choices[self.answer_index]
    }

    /// Indices of the incorrect choices, in choice order.
    pub fn distractor_indices(&self) -> impl Iterator<Item = usize> + '_ {
        let answer = self.answer_index;
        (0..self.choices.len()).filter(move |i| *i != answer)
    }
}

impl Validate for LocalizedQuestion {
    fn validate(&self) -> Result<(), InvariantError> {
        let t = "LocalizedQuestion";
        if self.text.trim().is_empty() {
            return Err(InvariantError::new(t, "text", "must be non-empty"));
        }
        if self.choices.len() < 2 {
            return Err(InvariantError::new(t, "choices", "need at least 2 choices"));
        }
        if self.answer_index >= self.choices.len() {
            return Err(InvariantError::new(
                t,
                "answer_index",
                format!("{} out of range for {} choices", self.answer_index, self.choices.len()),
            ));
        }
        Ok(())
    }
}

/// One perturbation round in a pair's lineage: which distractor conditioned
/// the fragment, the fragment in both languages, and which proxy wrote it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationStep {
    pub distractor_index: usize,
    pub english_fragment: String,
    pub target_fragment: String,
    pub proxy_model: String,
    /// Milliseconds since the Unix epoch; a fixed logical clock under replay.
    pub created_at: i64,
}

impl Validate for PerturbationStep {
    fn validate(&self) -> Result<(), InvariantError> {
        let t = "PerturbationStep";
        if self.english_fragment.trim().is_empty() {
            return Err(InvariantError::new(t, "english_fragment", "must be non-empty"));
        }
        if self.target_fragment.trim().is_empty() {
            return Err(InvariantError::new(t, "target_fragment", "must be non-empty"));
        }
        Ok(())
    }
}

/// An English question paired with its target-language counterpart, plus the
/// perturbation lineage that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilingualPair {
    pub pair_id: String,
    pub seed_id: String,
    pub english: LocalizedQuestion,
    pub target: LocalizedQuestion,
    pub depth: usize,
    pub parent_id: Option<String>,
    pub lineage: Vec<PerturbationStep>,
}

impl BilingualPair {
    /// Content-addressed identity: stable across reruns, shared by pairs with
    /// the same seed, fragment history, and target language.
    pub fn compute_pair_id(seed_id: &str, english_fragments: &[&str], language: Language) -> String {
        let mut hasher = Sha256::new();
        hasher.update(seed_id.as_bytes());
        hasher.update([0u8]);
        hasher.update(language.code().as_bytes());
        for fragment in english_fragments {
            hasher.update([0u8]);
            hasher.update(fragment.as_bytes());
        }
        let digest = hasher.finalize();
        hex_prefix(&digest, 16)
    }

    /// Builds a depth-0 pair from a seed question and its translation.
    pub fn seed(seed_id: impl Into<String>, english: LocalizedQuestion, target: LocalizedQuestion) -> Self {
        let seed_id = seed_id.into();
        let pair_id = Self::compute_pair_id(&seed_id, &[], target.language);
        Self {
            pair_id,
            seed_id,
            english,
            target,
            depth: 0,
            parent_id: None,
            lineage: Vec::new(),
        }
    }

    pub fn english_fragments(&self) -> Vec<&str> {
        self.lineage.iter().map(|s| s.english_fragment.as_str()).collect()
    }
}

impl Validate for BilingualPair {
    fn validate(&self) -> Result<(), InvariantError> {
        let t = "BilingualPair";
        self.english.validate()?;
        self.target.validate()?;
        for step in &self.lineage {
            step.validate()?;
        }
        if self.english.language != Language::English {
            return Err(InvariantError::new(t, "english", "language must be en"));
        }
        if self.depth != self.lineage.len() {
            return Err(InvariantError::new(
                t,
                "depth",
                format!("depth {} != lineage length {}", self.depth, self.lineage.len()),
            ));
        }
        if (self.depth == 0) != self.parent_id.is_none() {
            return Err(InvariantError::new(
                t,
                "parent_id",
                "present exactly when depth > 0",
            ));
        }
        if self.english.answer_index != self.target.answer_index {
            return Err(InvariantError::new(
                t,
                "answer_index",
                "english and target answers must share an index",
            ));
        }
        if self.english.choices.len() != self.target.choices.len() {
            return Err(InvariantError::new(
                t,
                "choices",
                "english and target must have the same number of choices",
            ));
        }
        for step in &self.lineage {
            if step.distractor_index == self.english.answer_index {
                return Err(InvariantError::new(
                    t,
                    "lineage",
                    "distractor_index must not be the answer index",
                ));
            }
            if step.distractor_index >= self.english.choices.len() {
                return Err(InvariantError::new(t, "lineage", "distractor_index out of range"));
            }
        }
        Ok(())
    }
}

/// How many perturbation children each frontier pair spawns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branching {
    /// One child per incorrect option.
    AllDistractors,
    /// At most this many children, taken in choice order.
    Cap(usize),
}

impl Branching {
    pub fn limit(&self, distractors: usize) -> usize {
        match self {
            Branching::AllDistractors => distractors,
            Branching::Cap(n) => distractors.min(*n),
        }
    }
}

/// Every search hyperparameter in one place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Seed pairs searched together as one batch.
    pub batch_size: usize,
    /// Pairs retained in the frontier after ranking each level.
    pub beam_width: usize,
    /// Levels explored before any extension.
    pub depth_initial: usize,
    /// Levels explored once a level's best score clears `potential_threshold`.
    pub depth_extended: usize,
    /// Admitted candidates per seed before its descendants are abandoned.
    pub redundancy_cap: usize,
    /// Exponent applied to English accuracy inside the simulation score.
    pub score_exponent: f64,
    /// Score at which a pair is admitted to the candidate list.
    pub inclusion_threshold: f64,
    /// Score at which the depth budget extends.
    pub potential_threshold: f64,
    /// Tolerated English accuracy loss. Carried and reported; the score
    /// exponent is the only enforcement mechanism.
    pub english_tolerance: f64,
    pub branching: Branching,
    pub perturbation_temperature: f64,
    pub deterministic_temperature: f64,
    pub max_output_tokens: u32,
    /// Negative constant damping the relative affinity score.
    pub affinity_constant: f64,
    /// Attempts the perturbation generator gets before a child is abandoned.
    pub perturbation_retries: u32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            beam_width: 12,
            depth_initial: 4,
            depth_extended: 6,
            redundancy_cap: 3,
            score_exponent: 2.0,
            inclusion_threshold: 0.8,
            potential_threshold: 0.6,
            english_tolerance: 0.05,
            branching: Branching::AllDistractors,
            perturbation_temperature: 0.7,
            deterministic_temperature: 0.001,
            max_output_tokens: 1024,
            affinity_constant: -1.0,
            perturbation_retries: 3,
        }
    }
}

impl Validate for SearchConfig {
    fn validate(&self) -> Result<(), InvariantError> {
        let t = "SearchConfig";
        if self.batch_size < 1 {
            return Err(InvariantError::new(t, "batch_size", "must be >= 1"));
        }
        if self.beam_width < 1 {
            return Err(InvariantError::new(t, "beam_width", "must be >= 1"));
        }
        if self.depth_initial < 1 {
            return Err(InvariantError::new(t, "depth_initial", "must be >= 1"));
        }
        if self.depth_extended < self.depth_initial {
            return Err(InvariantError::new(
                t,
                "depth_extended",
                format!("{} < depth_initial {}", self.depth_extended, self.depth_initial),
            ));
        }
        if self.redundancy_cap < 1 {
            return Err(InvariantError::new(t, "redundancy_cap", "must be >= 1"));
        }
        if self.score_exponent <= 1.0 {
            return Err(InvariantError::new(t, "score_exponent", "must be > 1"));
        }
        for (field, v) in [
            ("inclusion_threshold", self.inclusion_threshold),
            ("potential_threshold", self.potential_threshold),
            ("english_tolerance", self.english_tolerance),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(InvariantError::new(t, field, "must be in [0, 1]"));
            }
        }
        if self.inclusion_threshold < self.potential_threshold {
            return Err(InvariantError::new(
                t,
                "inclusion_threshold",
                "must be >= potential_threshold",
            ));
        }
        if self.affinity_constant >= 0.0 {
            return Err(InvariantError::new(t, "affinity_constant", "must be < 0"));
        }
        if let Branching::Cap(0) = self.branching {
            return Err(InvariantError::new(t, "branching", "cap must be >= 1"));
        }
        Ok(())
    }
}

impl SearchConfig {
    pub fn max_depth(&self) -> usize {
        self.depth_initial.max(self.depth_extended)
    }
}

/// Per-model correctness bits for one perturbed pair, their averages, and
/// the resulting simulation score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub pair_id: String,
    pub english_correct: Vec<bool>,
    pub target_correct: Vec<bool>,
    pub english_mean: f64,
    pub target_mean: f64,
    pub score: f64,
}

impl Validate for SimulationResult {
    fn validate(&self) -> Result<(), InvariantError> {
        let t = "SimulationResult";
        if self.english_correct.is_empty() {
            return Err(InvariantError::new(t, "english_correct", "need at least one model"));
        }
        if self.english_correct.len() != self.target_correct.len() {
            return Err(InvariantError::new(t, "target_correct", "bit vectors differ in length"));
        }
        let mean = |bits: &[bool]| bits.iter().filter(|b| **b).count() as f64 / bits.len() as f64;
        if (mean(&self.english_correct) - self.english_mean).abs() > 1e-9 {
            return Err(InvariantError::new(t, "english_mean", "does not average the bits"));
        }
        if (mean(&self.target_correct) - self.target_mean).abs() > 1e-9 {
            return Err(InvariantError::new(t, "target_mean", "does not average the bits"));
        }
        if !(-1.0..=1.0).contains(&self.score) {
            return Err(InvariantError::new(t, "score", "must be in [-1, 1]"));
        }
        Ok(())
    }
}

/// A pair admitted to the candidate list, with the simulation that admitted it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub pair: BilingualPair,
    pub score: f64,
    pub simulation: SimulationResult,
    pub run_id: String,
    pub admitted_at_depth: usize,
}

impl Validate for CandidateRecord {
    fn validate(&self) -> Result<(), InvariantError> {
        self.pair.validate()?;
        self.simulation.validate()?;
        if (self.score - self.simulation.score).abs() > 1e-9 {
            return Err(InvariantError::new(
                "CandidateRecord",
                "score",
                "disagrees with the embedded simulation",
            ));
        }
        Ok(())
    }
}

/// Conversion-rate bookkeeping for one search (or baseline) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRunStats {
    pub language: Language,
    pub seeds_attempted: usize,
    pub seeds_converted: usize,
    pub candidates: usize,
    pub levels_explored: usize,
    pub total_pairs_scored: usize,
    pub wall_time: f64,
    pub dollars: f64,
}

impl SearchRunStats {
    pub fn empty(language: Language) -> Self {
        Self {
            language,
            seeds_attempted: 0,
            seeds_converted: 0,
            candidates: 0,
            levels_explored: 0,
            total_pairs_scored: 0,
            wall_time: 0.0,
            dollars: 0.0,
        }
    }
}

impl Validate for SearchRunStats {
    fn validate(&self) -> Result<(), InvariantError> {
        let t = "SearchRunStats";
        if self.seeds_converted > self.seeds_attempted {
            return Err(InvariantError::new(t, "seeds_converted", "exceeds seeds_attempted"));
        }
        if self.candidates < self.seeds_converted {
            return Err(InvariantError::new(t, "candidates", "below seeds_converted"));
        }
        Ok(())
    }
}

/// Token direction for ledger accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenDirection {
    Prompt,
    Completion,
}

/// Per-model token tallies. `approximate` is set when any contribution came
/// from a character-count estimate instead of a backend usage report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub approximate: bool,
}

/// Dollars per 1K tokens in each direction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceEntry {
    pub prompt_per_1k: f64,
    pub completion_per_1k: f64,
}

/// Dollars and candidates attributed to one language's runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LanguageSpend {
    pub dollars: f64,
    pub candidates: u64,
}

/// Token counts, the price table, and per-language attribution. Dollar
/// totals are always recomputed from counts, never stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub usage: BTreeMap<String, ModelUsage>,
    pub price_table: BTreeMap<String, PriceEntry>,
    pub per_language: BTreeMap<Language, LanguageSpend>,
}

impl CostLedger {
    pub fn set_price(&mut self, model: impl Into<String>, prompt_per_1k: f64, completion_per_1k: f64) {
        self.price_table.insert(
            model.into(),
            PriceEntry {
                prompt_per_1k,
                completion_per_1k,
            },
        );
    }

    pub fn record_usage(&mut self, model: &str, prompt_tokens: u64, completion_tokens: u64, approximate: bool) {
        let entry = self.usage.entry(model.to_string()).or_default();
        entry.prompt_tokens += prompt_tokens;
        entry.completion_tokens += completion_tokens;
        entry.approximate |= approximate;
    }

    pub fn tokens(&self, model: &str, direction: TokenDirection) -> u64 {
        self.usage
            .get(model)
            .map(|u| match direction {
                TokenDirection::Prompt => u.prompt_tokens,
                TokenDirection::Completion => u.completion_tokens,
            })
            .unwrap_or(0)
    }

    pub fn model_dollars(&self, model: &str) -> f64 {
        let usage = match self.usage.get(model) {
            Some(u) => u,
            None => return 0.0,
        };
        let price = self.price_table.get(model).copied().unwrap_or_default();
        usage.prompt_tokens as f64 / 1000.0 * price.prompt_per_1k
            + usage.completion_tokens as f64 / 1000.0 * price.completion_per_1k
    }

    /// Total dollars, recomputed from counts and the price table.
    pub fn total_dollars(&self) -> f64 {
        self.usage.keys().map(|m| self.model_dollars(m)).sum()
    }

    pub fn attribute_language(&mut self, language: Language, dollars: f64, candidates: u64) {
        let entry = self.per_language.entry(language).or_default();
        entry.dollars += dollars;
        entry.candidates += candidates;
    }
}

impl Validate for CostLedger {
    fn validate(&self) -> Result<(), InvariantError> {
        for (lang, spend) in &self.per_language {
            if spend.dollars < 0.0 {
                return Err(InvariantError::new(
                    "CostLedger",
                    "per_language",
                    format!("negative dollars for {lang}"),
                ));
            }
        }
        Ok(())
    }
}

pub(crate) fn hex_prefix(bytes: &[u8], len: usize) -> String {
    let mut out = String::with_capacity(len);
    for b in bytes {
        use fmt::Write;
        write!(out, "{b:02x}").expect("writing to a String cannot fail");
        if out.len() >= len {
            break;
        }
    }
    out.truncate(len);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn question(lang: Language) -> LocalizedQuestion {
        LocalizedQuestion {
            language: lang,
            text: "Which metal is liquid at room temperature?".into(),
            choices: vec!["mercury".into(), "iron".into(), "tin".into(), "zinc".into()],
            answer_index: 0,
        }
    }

    #[test]
    fn language_codes_round_trip() {
        for lang in Language::ALL {
            assert_eq!(lang.code().parse::<Language>().unwrap(), lang);
        }
        assert!("xx".parse::<Language>().is_err());
        assert_eq!(Language::targets().count(), 16);
    }

    #[test]
    fn question_record_invariants_name_the_field() {
        let mut q = QuestionRecord {
            id: "q1".into(),
            source_dataset: SourceDataset::Arc,
            text: "What?".into(),
            choices: vec!["a".into(), "b".into()],
            answer_index: 3,
        };
        let err = q.validate().unwrap_err();
        assert_eq!(err.field, "answer_index");

        q.answer_index = 0;
        q.choices = vec!["a".into(), "a".into()];
        assert_eq!(q.validate().unwrap_err().field, "choices");

        q.choices = vec!["a".into(), "b".into()];
        q.text = "  ".into();
        assert_eq!(q.validate().unwrap_err().field, "text");
    }

    #[test]
    fn pair_depth_and_parent_must_agree() {
        let mut pair = BilingualPair::seed("s1", question(Language::English), question(Language::French));
        assert!(pair.validate().is_ok());

        pair.depth = 1;
        assert_eq!(pair.validate().unwrap_err().field, "depth");

        pair.lineage.push(PerturbationStep {
            distractor_index: 1,
            english_fragment: "note".into(),
            target_fragment: "nota".into(),
            proxy_model: "m".into(),
            created_at: 0,
        });
        assert_eq!(pair.validate().unwrap_err().field, "parent_id");

        pair.parent_id = Some("p".into());
        assert!(pair.validate().is_ok());
    }

    #[test]
    fn pair_answer_consistency_is_enforced() {
        let mut target = question(Language::French);
        target.answer_index = 1;
        let pair = BilingualPair {
            pair_id: "x".into(),
            seed_id: "s".into(),
            english: question(Language::English),
            target,
            depth: 0,
            parent_id: None,
            lineage: vec![],
        };
        assert_eq!(pair.validate().unwrap_err().field, "answer_index");
    }

    #[test]
    fn pair_id_ignores_target_side_content() {
        let a = BilingualPair::compute_pair_id("seed", &["frag one", "frag two"], Language::Chinese);
        let b = BilingualPair::compute_pair_id("seed", &["frag one", "frag two"], Language::Chinese);
        let c = BilingualPair::compute_pair_id("seed", &["frag two", "frag one"], Language::Chinese);
        let d = BilingualPair::compute_pair_id("seed", &["frag one", "frag two"], Language::Japanese);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn search_config_defaults_validate_and_bad_depths_fail() {
        let cfg = SearchConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.beam_width, 12);
        assert_eq!(cfg.depth_initial, 4);
        assert_eq!(cfg.depth_extended, 6);
        assert_eq!(cfg.redundancy_cap, 3);
        assert_eq!(cfg.score_exponent, 2.0);
        assert_eq!(cfg.inclusion_threshold, 0.8);
        assert_eq!(cfg.potential_threshold, 0.6);
        assert_eq!(cfg.affinity_constant, -1.0);

        let bad = SearchConfig {
            depth_extended: 2,
            ..SearchConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().field, "depth_extended");

        let bad = SearchConfig {
            inclusion_threshold: 0.5,
            potential_threshold: 0.6,
            ..SearchConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().field, "inclusion_threshold");
    }

    #[test]
    fn simulation_means_must_match_bits() {
        let sim = SimulationResult {
            pair_id: "p".into(),
            english_correct: vec![true, true, false, true],
            target_correct: vec![false, false, true, false],
            english_mean: 0.75,
            target_mean: 0.25,
            score: 0.75f64.powi(2) - 0.25,
        };
        assert!(sim.validate().is_ok());

        let bad = SimulationResult {
            english_mean: 0.5,
            ..sim
        };
        assert_eq!(bad.validate().unwrap_err().field, "english_mean");
    }

    #[test]
    fn ledger_dollars_recompute_from_counts() {
        let mut ledger = CostLedger::default();
        ledger.set_price("m1", 0.15, 0.60);
        ledger.record_usage("m1", 2000, 500, false);
        ledger.record_usage("m1", 1000, 250, false);
        let expected = 3.0 * 0.15 + 0.75 * 0.60;
        assert!((ledger.total_dollars() - expected).abs() < 1e-9);
        assert_eq!(ledger.tokens("m1", TokenDirection::Prompt), 3000);
        assert_eq!(ledger.tokens("m1", TokenDirection::Completion), 750);
    }
}
