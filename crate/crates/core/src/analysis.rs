//! Post-search analytics: per-model accuracy tables, cross-language
//! expansion of candidates, relative affinity scores, subject-domain
//! categorization, cosine-distance matrices, cost reports, and fine-tuning
//! record export.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ModelSpec, Role};
use crate::linguistics::{insert, render_choices, Linguistics, LinguisticsError, TemplateId};
use crate::types::{
    BilingualPair, CandidateRecord, CostLedger, InvariantError, Language, LocalizedQuestion,
    SearchRunStats, Validate,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("matrix must be square over the language set: {languages} languages, {rows}x{cols} matrix")]
    NotSquare {
        languages: usize,
        rows: usize,
        cols: usize,
    },
    #[error("accuracy entry ({x},{y}) = {value} is outside [0,1]")]
    EntryRange { x: usize, y: usize, value: f64 },
    #[error("affinity constant must be negative, got {0}")]
    NonNegativeConstant(f64),
    #[error("embedding {id} has zero norm")]
    ZeroNorm { id: String },
    #[error("embedding {id} has dimension {got}, expected {expected}")]
    DimensionMismatch { id: String, expected: usize, got: usize },
    #[error("model {model} lacks the {role} role")]
    RoleMissing { model: String, role: Role },
    #[error(transparent)]
    Linguistics(#[from] LinguisticsError),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
}

/// The six fixed subject domains used for categorizing weaknesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubjectDomain {
    ScienceTechnology,
    GeneralKnowledge,
    GeographyEnvironment,
    SocietyCulture,
    ArtsLiterature,
    HistoryWorldEvents,
}

impl SubjectDomain {
    pub const ALL: [SubjectDomain; 6] = [
        SubjectDomain::ScienceTechnology,
        SubjectDomain::GeneralKnowledge,
        SubjectDomain::GeographyEnvironment,
        SubjectDomain::SocietyCulture,
        SubjectDomain::ArtsLiterature,
        SubjectDomain::HistoryWorldEvents,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            SubjectDomain::ScienceTechnology => "Science & Technology",
            SubjectDomain::GeneralKnowledge => "General Knowledge",
            SubjectDomain::GeographyEnvironment => "Geography & Environment",
            SubjectDomain::SocietyCulture => "Society & Culture",
            SubjectDomain::ArtsLiterature => "Arts & Literature",
            SubjectDomain::HistoryWorldEvents => "History & World Events",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        let trimmed = label.trim();
        Self::ALL.iter().copied().find(|d| d.label() == trimmed)
    }

    fn index(&self) -> usize {
        Self::ALL.iter().position(|d| d == self).expect("domain is in ALL")
    }
}

/// Accuracy counts for one (model, language) cell of the evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model: String,
    pub language: Language,
    pub n_questions: u64,
    pub n_correct_en: u64,
    pub n_correct_target: u64,
}

impl AccuracyRow {
    pub fn accuracy_en(&self) -> f64 {
        self.n_correct_en as f64 / self.n_questions as f64
    }

    pub fn accuracy_target(&self) -> f64 {
        self.n_correct_target as f64 / self.n_questions as f64
    }

    /// English accuracy minus target accuracy.
    pub fn drop(&self) -> f64 {
        self.accuracy_en() - self.accuracy_target()
    }
}

impl Validate for AccuracyRow {
    fn validate(&self) -> Result<(), InvariantError> {
        let t = "AccuracyRow";
        if self.n_correct_en > self.n_questions || self.n_correct_target > self.n_questions {
            return Err(InvariantError::new(t, "n_correct_en", "exceeds n_questions"));
        }
        Ok(())
    }
}

/// A question skipped during evaluation because a backend failed hard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSkip {
    pub model: String,
    pub pair_id: String,
    pub reason: String,
}

/// The evaluation grid plus the questions excluded from its denominators.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
    pub skipped: Vec<EvalSkip>,
}

impl AccuracyTable {
    /// Tab-separated rendering with derived accuracy and drop columns.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("model\tlanguage\tn_questions\tacc_en\tacc_target\tdrop\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
                row.model,
                row.language,
                row.n_questions,
                row.accuracy_en(),
                row.accuracy_target(),
                row.drop()
            ));
        }
        out
    }
}

/// Accuracies over (evaluation language x, seed language y), their row
/// means, and the relative affinity scores derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub languages: Vec<Language>,
    /// `accuracy[x][y]`: accuracy on language x over pairs expanded from
    /// seed language y.
    pub accuracy: Vec<Vec<f64>>,
    pub row_means: Vec<f64>,
    /// `affinity[x][y]`; `None` where a zero row mean leaves it undefined.
    pub affinity: Vec<Vec<Option<f64>>>,
    pub constant: f64,
}

impl AffinityMatrix {
    pub fn undefined_rows(&self) -> Vec<Language> {
        self.languages
            .iter()
            .zip(&self.row_means)
            .filter(|(_, m)| **m == 0.0)
            .map(|(l, _)| *l)
            .collect()
    }

    /// Tab-separated rendering. Rows are the evaluation language (x) and
    /// columns the seed language (y); both axes are labeled to keep the
    /// orientation unambiguous.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# rows: evaluation language (x); columns: seed language (y)\n");
        out.push_str("eval_language");
        for lang in &self.languages {
            out.push_str(&format!("\t{lang}"));
        }
        out.push_str("\trow_mean\n");
        for (x, lang) in self.languages.iter().enumerate() {
            out.push_str(&lang.to_string());
            for y in 0..self.languages.len() {
                match self.affinity[x][y] {
                    Some(v) => out.push_str(&format!("\t{v:.9}")),
                    None => out.push_str("\tundefined"),
                }
            }
            out.push_str(&format!("\t{:.9}\n", self.row_means[x]));
        }
        out
    }
}

/// Fills the affinity matrix from an accuracy matrix: each entry is the
/// relative accuracy deviation of (x, y) from x's row mean, damped
/// exponentially by the row-mean gap between x and y.
pub fn compute_affinity(
    languages: Vec<Language>,
    accuracy: Vec<Vec<f64>>,
    constant: f64,
) -> Result<AffinityMatrix, AnalysisError> {
    if constant >= 0.0 {
        return Err(AnalysisError::NonNegativeConstant(constant));
    }
    let n = languages.len();
    if accuracy.len() != n || accuracy.iter().any(|row| row.len() != n) {
        return Err(AnalysisError::NotSquare {
            languages: n,
            rows: accuracy.len(),
            cols: accuracy.first().map(|r| r.len()).unwrap_or(0),
        });
    }
    for (x, row) in accuracy.iter().enumerate() {
        for (y, value) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(value) {
                return Err(AnalysisError::EntryRange { x, y, value: *value });
            }
        }
    }

    let row_means: Vec<f64> = accuracy
        .iter()
        .map(|row| row.iter().sum::<f64>() / n as f64)
        .collect();

    let mut affinity = vec![vec![None; n]; n];
    for x in 0..n {
        if row_means[x] == 0.0 {
            // undefined, flagged rather than fabricated
            continue;
        }
        for y in 0..n {
            let deviation = (accuracy[x][y] - row_means[x]) / row_means[x];
            let damping = (constant * (row_means[y] - row_means[x]).abs()).exp();
            affinity[x][y] = Some(deviation * damping);
        }
    }

    Ok(AffinityMatrix {
        languages,
        accuracy,
        row_means,
        affinity,
        constant,
    })
}

/// Per-language counts over the six domains, plus how many verdicts fell
/// back to General Knowledge because they were unparseable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryDistribution {
    pub counts: BTreeMap<Language, [u64; 6]>,
    pub flagged_unparseable: u64,
}

impl CategoryDistribution {
    pub fn add(&mut self, language: Language, domain: SubjectDomain) {
        self.counts.entry(language).or_default()[domain.index()] += 1;
    }

    pub fn percentages(&self, language: Language) -> Option<[f64; 6]> {
        let counts = self.counts.get(&language)?;
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return None;
        }
        let mut out = [0.0; 6];
        for (i, c) in counts.iter().enumerate() {
            out[i] = *c as f64 * 100.0 / total as f64;
        }
        Some(out)
    }

    /// Mean of the per-language percentage rows.
    pub fn overall_average(&self) -> Option<[f64; 6]> {
        let rows: Vec<[f64; 6]> = self
            .counts
            .keys()
            .filter_map(|lang| self.percentages(*lang))
            .collect();
        if rows.is_empty() {
            return None;
        }
        let mut out = [0.0; 6];
        for row in &rows {
            for i in 0..6 {
                out[i] += row[i];
            }
        }
        for v in &mut out {
            *v /= rows.len() as f64;
        }
        Some(out)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("language");
        for domain in SubjectDomain::ALL {
            out.push_str(&format!("\t{}", domain.label()));
        }
        out.push('\n');
        for lang in self.counts.keys() {
            if let Some(percentages) = self.percentages(*lang) {
                out.push_str(&lang.to_string());
                for p in percentages {
                    out.push_str(&format!("\t{p:.2}%"));
                }
                out.push('\n');
            }
        }
        if let Some(avg) = self.overall_average() {
            out.push_str("overall_average");
            for p in avg {
                out.push_str(&format!("\t{p:.2}%"));
            }
            out.push('\n');
        }
        out.push_str(&format!("# unparseable verdicts defaulted to {}: {}\n", SubjectDomain::GeneralKnowledge.label(), self.flagged_unparseable));
        out
    }
}

impl Validate for CategoryDistribution {
    fn validate(&self) -> Result<(), InvariantError> {
        for lang in self.counts.keys() {
            if let Some(percentages) = self.percentages(*lang) {
                let sum: f64 = percentages.iter().sum();
                if (sum - 100.0).abs() > 0.1 {
                    return Err(InvariantError::new(
                        "CategoryDistribution",
                        "counts",
                        format!("percentages for {lang} sum to {sum}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Pairwise cosine distances over L2-normalized embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub ids: Vec<String>,
    pub distances: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("id");
        for id in &self.ids {
            out.push_str(&format!("\t{id}"));
        }
        out.push('\n');
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for j in 0..self.ids.len() {
                out.push_str(&format!("\t{:.9}", self.distances[i][j]));
            }
            out.push('\n');
        }
        out
    }
}

/// One (id, vector) embedding input record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vec<f64>,
}

impl Validate for EmbeddingRecord {
    fn validate(&self) -> Result<(), InvariantError> {
        if self.id.trim().is_empty() {
            return Err(InvariantError::new("EmbeddingRecord", "id", "must be non-empty"));
        }
        if self.vector.is_empty() {
            return Err(InvariantError::new("EmbeddingRecord", "vector", "must be non-empty"));
        }
        Ok(())
    }
}

/// Entry (i, j) is `1 - dot(v̂ᵢ, v̂ⱼ)` over L2-normalized vectors: zero
/// diagonal, symmetric, range [0, 2], invariant under positive rescaling.
pub fn cosine_distance_matrix(
    embeddings: &BTreeMap<String, Vec<f64>>,
) -> Result<DistanceMatrix, AnalysisError> {
    let ids: Vec<String> = embeddings.keys().cloned().collect();
    let dim = embeddings.values().next().map(|v| v.len()).unwrap_or(0);

    let mut normalized = Vec::with_capacity(ids.len());
    for id in &ids {
        let v = &embeddings[id];
        if v.len() != dim {
            return Err(AnalysisError::DimensionMismatch {
                id: id.clone(),
                expected: dim,
                got: v.len(),
            });
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(AnalysisError::ZeroNorm { id: id.clone() });
        }
        normalized.push(v.iter().map(|x| x / norm).collect::<Vec<f64>>());
    }

    let n = ids.len();
    let mut distances = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dot: f64 = normalized[i].iter().zip(&normalized[j]).map(|(a, b)| a * b).sum();
            let d = (1.0 - dot).clamp(0.0, 2.0);
            distances[i][j] = d;
            distances[j][i] = d;
        }
    }
    Ok(DistanceMatrix { ids, distances })
}

/// One line of the per-language cost table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReportRow {
    pub language: Language,
    pub dollars: f64,
    pub candidates: u64,
    /// `None` when the language produced no candidates.
    pub dollars_per_candidate: Option<f64>,
    /// `None` when no seeds were attempted for the language.
    pub conversion_rate: Option<f64>,
}

impl Validate for CostReportRow {
    fn validate(&self) -> Result<(), InvariantError> {
        if self.dollars < 0.0 {
            return Err(InvariantError::new("CostReportRow", "dollars", "must be >= 0"));
        }
        Ok(())
    }
}

/// Joins ledger attributions with run statistics into the per-language
/// (dollars per candidate, conversion rate) table. Runs for the same
/// language are summed before any division.
pub fn cost_report(ledger: &CostLedger, stats: &[SearchRunStats]) -> Vec<CostReportRow> {
    let mut attempted: BTreeMap<Language, (usize, usize)> = BTreeMap::new();
    for s in stats {
        let entry = attempted.entry(s.language).or_default();
        entry.0 += s.seeds_attempted;
        entry.1 += s.seeds_converted;
    }

    let mut languages: Vec<Language> = ledger.per_language.keys().copied().collect();
    for lang in attempted.keys() {
        if !languages.contains(lang) {
            languages.push(*lang);
        }
    }
    languages.sort();

    languages
        .into_iter()
        .map(|language| {
            let spend = ledger.per_language.get(&language).copied().unwrap_or_default();
            let dollars_per_candidate = if spend.candidates > 0 {
                Some(spend.dollars / spend.candidates as f64)
            } else {
                None
            };
            let conversion_rate = attempted.get(&language).and_then(|(att, conv)| {
                if *att > 0 {
                    Some(*conv as f64 / *att as f64)
                } else {
                    None
                }
            });
            CostReportRow {
                language,
                dollars: spend.dollars,
                candidates: spend.candidates,
                dollars_per_candidate,
                conversion_rate,
            }
        })
        .collect()
}

pub fn cost_report_tsv(rows: &[CostReportRow]) -> String {
    let mut out = String::from("language\tdollars\tcandidates\tdollars_per_candidate\tconversion_rate\n");
    for row in rows {
        let dpc = match row.dollars_per_candidate {
            Some(v) => format!("{v:.9}"),
            None => "no candidates".to_string(),
        };
        let rate = match row.conversion_rate {
            Some(v) => format!("{v:.6}"),
            None => "no data".to_string(),
        };
        out.push_str(&format!(
            "{}\t{:.9}\t{}\t{}\t{}\n",
            row.language, row.dollars, row.candidates, dpc, rate
        ));
    }
    out
}

/// Fine-tuning export formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinetuneFormat {
    Sft,
    Dpo,
}

/// One exported training record: prompt/completion for supervised tuning,
/// prompt/chosen/rejected for preference tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FinetuneRecord {
    Dpo {
        prompt: String,
        chosen: String,
        rejected: String,
    },
    Sft {
        prompt: String,
        completion: String,
    },
}

impl Validate for FinetuneRecord {
    fn validate(&self) -> Result<(), InvariantError> {
        Ok(())
    }
}

/// Builds training records from candidates: the target-language question
/// rendered with its answering template as the prompt, the correct choice
/// as the completion. The preference format adds a uniformly drawn
/// incorrect choice, reproducible from the run-level seed.
pub fn export_finetune(
    candidates: &[CandidateRecord],
    format: FinetuneFormat,
    seed: u64,
    ling: &Linguistics<'_>,
) -> Result<Vec<FinetuneRecord>, AnalysisError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(candidates.len());
    for candidate in candidates {
        let target = &candidate.pair.target;
        let choices = render_choices(&target.choices);
        let prompt = ling.templates().render(
            TemplateId::AnswerZeroShot,
            target.language,
            &[("question", &target.text), ("choices", &choices)],
        )?;
        let chosen = target.correct_answer().to_string();
        let record = match format {
            FinetuneFormat::Sft => FinetuneRecord::Sft {
                prompt,
                completion: chosen,
            },
            FinetuneFormat::Dpo => {
                let distractors: Vec<usize> = target.distractor_indices().collect();
                let rejected_index = distractors[rng.gen_range(0..distractors.len())];
                FinetuneRecord::Dpo {
                    prompt,
                    chosen,
                    rejected: target.choices[rejected_index].clone(),
                }
            }
        };
        records.push(record);
    }
    Ok(records)
}

/// A pair skipped during cross-language expansion, with its reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionSkip {
    pub source_pair_id: String,
    pub language: Language,
    pub reason: String,
}

impl Validate for ExpansionSkip {
    fn validate(&self) -> Result<(), InvariantError> {
        Ok(())
    }
}

/// Gateway-bound analytics operations.
pub struct Analyzer<'a> {
    ling: &'a Linguistics<'a>,
}

impl<'a> Analyzer<'a> {
    pub fn new(ling: &'a Linguistics<'a>) -> Self {
        Self { ling }
    }

    /// Answers both language versions of every candidate with every target
    /// model and aggregates correctness per (model, language). Backend
    /// failures exclude the question from that row's denominator.
    pub fn evaluate_candidates(
        &self,
        candidates: &[CandidateRecord],
        models: &[ModelSpec],
        judge: &ModelSpec,
    ) -> Result<AccuracyTable, AnalysisError> {
        for model in models {
            if !model.has_role(Role::Target) {
                return Err(AnalysisError::RoleMissing {
                    model: model.name.clone(),
                    role: Role::Target,
                });
            }
        }

        let mut cells: BTreeMap<(String, Language), AccuracyRow> = BTreeMap::new();
        let mut skipped = Vec::new();

        for candidate in candidates {
            for model in models {
                let result = self.answer_both_sides(candidate, model, judge);
                match result {
                    Ok((en_correct, target_correct)) => {
                        let key = (model.name.clone(), candidate.pair.target.language);
                        let row = cells.entry(key).or_insert_with(|| AccuracyRow {
                            model: model.name.clone(),
                            language: candidate.pair.target.language,
                            n_questions: 0,
                            n_correct_en: 0,
                            n_correct_target: 0,
                        });
                        row.n_questions += 1;
                        row.n_correct_en += u64::from(en_correct);
                        row.n_correct_target += u64::from(target_correct);
                    }
                    Err(reason) => skipped.push(EvalSkip {
                        model: model.name.clone(),
                        pair_id: candidate.pair.pair_id.clone(),
                        reason,
                    }),
                }
            }
        }

        Ok(AccuracyTable {
            rows: cells.into_values().collect(),
            skipped,
        })
    }

    fn answer_both_sides(
        &self,
        candidate: &CandidateRecord,
        model: &ModelSpec,
        judge: &ModelSpec,
    ) -> Result<(bool, bool), String> {
        let side = |q: &LocalizedQuestion| -> Result<bool, String> {
            let raw = self.ling.answer_question(model, q).map_err(|e| e.to_string())?;
            match self.ling.extract_answer(judge, q, &raw) {
                Ok(choice) => Ok(choice == q.answer_index),
                Err(LinguisticsError::Unextractable { .. })
                | Err(LinguisticsError::Unparseable { .. }) => Ok(false),
                Err(e) => Err(e.to_string()),
            }
        };
        Ok((side(&candidate.pair.english)?, side(&candidate.pair.target)?))
    }

    /// Re-translates a pair's base question and lineage fragments into each
    /// target language, re-inserting fragments in application order. The
    /// English side is carried over unchanged. Failures and duplicates are
    /// itemized, so `|output| + |skips| == |pairs| × |languages|`.
    pub fn expand_candidates(
        &self,
        pairs: &[BilingualPair],
        target_languages: &[Language],
        question_translator: &ModelSpec,
        fragment_translator: &ModelSpec,
    ) -> Result<(Vec<BilingualPair>, Vec<ExpansionSkip>), AnalysisError> {
        let mut expanded: Vec<BilingualPair> = Vec::new();
        let mut seen_ids: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        let mut skips = Vec::new();

        for pair in pairs {
            let base = match base_english_question(pair) {
                Ok(base) => base,
                Err(reason) => {
                    for language in target_languages {
                        skips.push(ExpansionSkip {
                            source_pair_id: pair.pair_id.clone(),
                            language: *language,
                            reason: reason.clone(),
                        });
                    }
                    continue;
                }
            };

            for &language in target_languages {
                match self.expand_one(pair, &base, language, question_translator, fragment_translator) {
                    Ok(new_pair) => {
                        if seen_ids.insert(new_pair.pair_id.clone()) {
                            expanded.push(new_pair);
                        } else {
                            skips.push(ExpansionSkip {
                                source_pair_id: pair.pair_id.clone(),
                                language,
                                reason: format!("duplicate pair_id {}", new_pair.pair_id),
                            });
                        }
                    }
                    Err(e) => {
                        log::warn!("expansion of {} into {language} failed: {e}", pair.pair_id);
                        skips.push(ExpansionSkip {
                            source_pair_id: pair.pair_id.clone(),
                            language,
                            reason: e.to_string(),
                        });
                    }
                }
            }
        }
        Ok((expanded, skips))
    }

    fn expand_one(
        &self,
        pair: &BilingualPair,
        base: &LocalizedQuestion,
        language: Language,
        question_translator: &ModelSpec,
        fragment_translator: &ModelSpec,
    ) -> Result<BilingualPair, AnalysisError> {
        let translated_base = self
            .ling
            .translate_question(question_translator, base, language)?;
        if translated_base.answer_index != base.answer_index {
            return Err(AnalysisError::Linguistics(LinguisticsError::AnswerMismatch));
        }

        let mut target = translated_base;
        let mut lineage = Vec::with_capacity(pair.lineage.len());
        for step in &pair.lineage {
            let fragment =
                self.ling
                    .translate_fragment(fragment_translator, &step.english_fragment, language)?;
            target = insert(&target, &fragment);
            let mut new_step = step.clone();
            new_step.target_fragment = fragment;
            lineage.push(new_step);
        }

        let fragments: Vec<&str> = lineage.iter().map(|s| s.english_fragment.as_str()).collect();
        let parent_id = if pair.depth == 0 {
            None
        } else {
            // the id the parent would carry if its own chain were expanded
            Some(BilingualPair::compute_pair_id(
                &pair.seed_id,
                &fragments[..fragments.len() - 1],
                language,
            ))
        };
        let new_pair = BilingualPair {
            pair_id: BilingualPair::compute_pair_id(&pair.seed_id, &fragments, language),
            seed_id: pair.seed_id.clone(),
            english: pair.english.clone(),
            target,
            depth: pair.depth,
            parent_id,
            lineage,
        };
        new_pair.validate()?;
        Ok(new_pair)
    }

    /// Assigns each candidate exactly one of the six domains via the judge,
    /// aggregated per target language. Unparseable verdicts fall back to
    /// General Knowledge and are counted.
    pub fn categorize_candidates(
        &self,
        candidates: &[CandidateRecord],
        judge: &ModelSpec,
    ) -> Result<CategoryDistribution, AnalysisError> {
        if !judge.has_role(Role::Judge) {
            return Err(AnalysisError::RoleMissing {
                model: judge.name.clone(),
                role: Role::Judge,
            });
        }
        let mut distribution = CategoryDistribution::default();
        for candidate in candidates {
            let verdict = self.ling.categorize(judge, &candidate.pair.english)?;
            let domain = match verdict.as_deref().and_then(SubjectDomain::from_label) {
                Some(domain) => domain,
                None => {
                    distribution.flagged_unparseable += 1;
                    SubjectDomain::GeneralKnowledge
                }
            };
            distribution.add(candidate.pair.target.language, domain);
        }
        Ok(distribution)
    }
}

/// Strips the lineage fragments back off a pair's English side, recovering
/// the base question the pair grew from.
fn base_english_question(pair: &BilingualPair) -> Result<LocalizedQuestion, String> {
    let mut text = pair.english.text.clone();
    for step in pair.lineage.iter().rev() {
        let suffix = format!(" {}", step.english_fragment);
        match text.strip_suffix(&suffix) {
            Some(stripped) => text = stripped.to_string(),
            None => {
                return Err(format!(
                    "lineage does not reconstruct the base question for {}",
                    pair.pair_id
                ))
            }
        }
    }
    Ok(LocalizedQuestion {
        language: Language::English,
        text,
        choices: pair.english.choices.clone(),
        answer_index: pair.english.answer_index,
    })
}
