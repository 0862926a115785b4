//! Turns prompts into pipeline steps: perturbation generation, fragment
//! insertion, translation, semantic checking, zero-shot answering, and
//! answer extraction.

mod templates;

pub use templates::{render_choices, PromptTemplate, TemplateId, TemplateRegistry};

use serde::Deserialize;
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, ModelSpec};
use crate::types::{Language, LocalizedQuestion, SearchConfig};

#[derive(Debug, Error)]
pub enum LinguisticsError {
    #[error("no {template} template for language {language}")]
    MissingTemplate {
        template: &'static str,
        language: Language,
    },
    #[error("template {template}.{language} is missing placeholder {{{placeholder}}}")]
    MissingPlaceholder {
        template: &'static str,
        language: Language,
        placeholder: &'static str,
    },
    #[error("template asset {path}: {message}")]
    TemplateIo { path: String, message: String },
    #[error("unparseable model output for {what}: {detail}")]
    Unparseable { what: &'static str, detail: String },
    #[error("translation produced {got} choices, expected {expected}")]
    ChoiceCardinality { expected: usize, got: usize },
    #[error("translated answer matches no translated choice")]
    AnswerMismatch,
    #[error("empty translation")]
    EmptyTranslation,
    #[error("perturbation still contained the correct answer after {attempts} attempts")]
    LeakedAnswer { attempts: u32 },
    #[error("answer could not be matched to any choice: {raw:?}")]
    Unextractable { raw: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Sampling knobs shared by every linguistics operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinguisticsOptions {
    pub perturbation_temperature: f64,
    pub deterministic_temperature: f64,
    pub max_output_tokens: u32,
    pub perturbation_retries: u32,
}

impl Default for LinguisticsOptions {
    fn default() -> Self {
        Self::from_config(&SearchConfig::default())
    }
}

impl LinguisticsOptions {
    pub fn from_config(config: &SearchConfig) -> Self {
        Self {
            perturbation_temperature: config.perturbation_temperature,
            deterministic_temperature: config.deterministic_temperature,
            max_output_tokens: config.max_output_tokens,
            perturbation_retries: config.perturbation_retries,
        }
    }
}

/// Appends a fragment to the question stem with a single separating space.
/// Choices and the answer index are untouched.
pub fn insert(q: &LocalizedQuestion, fragment: &str) -> LocalizedQuestion {
    debug_assert!(!fragment.trim().is_empty(), "insert requires a non-empty fragment");
    LocalizedQuestion {
        language: q.language,
        text: format!("{} {}", q.text, fragment),
        choices: q.choices.clone(),
        answer_index: q.answer_index,
    }
}

/// Stateless facade over the gateway and template registry; safe to share
/// across threads.
pub struct Linguistics<'a> {
    gateway: &'a Gateway,
    templates: &'a TemplateRegistry,
    pub opts: LinguisticsOptions,
}

impl<'a> Linguistics<'a> {
    pub fn new(gateway: &'a Gateway, templates: &'a TemplateRegistry, opts: LinguisticsOptions) -> Self {
        Self {
            gateway,
            templates,
            opts,
        }
    }

    pub fn gateway(&self) -> &Gateway {
        self.gateway
    }

    pub fn templates(&self) -> &TemplateRegistry {
        self.templates
    }

    /// Builds the perturbation prompt for one (question, distractor) pair.
    /// Exposed so batch fan-out can prepare prompts up front.
    pub fn perturbation_prompt(
        &self,
        q: &LocalizedQuestion,
        distractor_index: usize,
    ) -> Result<String, LinguisticsError> {
        if distractor_index == q.answer_index {
            return Err(LinguisticsError::Precondition(
                "distractor_index must not be the answer index".into(),
            ));
        }
        if distractor_index >= q.choices.len() {
            return Err(LinguisticsError::Precondition(format!(
                "distractor_index {distractor_index} out of range"
            )));
        }
        self.templates.render(
            TemplateId::Perturb,
            Language::English,
            &[
                ("question", &q.text),
                ("answer", q.correct_answer()),
                ("wrong_answer", &q.choices[distractor_index]),
            ],
        )
    }

    /// Accepts a raw proxy completion as a perturbation fragment, rejecting
    /// empties and fragments that leak the correct answer verbatim.
    pub fn accept_perturbation(
        &self,
        q: &LocalizedQuestion,
        raw: &str,
    ) -> Result<String, LinguisticsError> {
        let fragment = parse_perturbation(raw);
        if fragment.trim().is_empty() {
            return Err(LinguisticsError::Unparseable {
                what: "perturbation",
                detail: "empty fragment".into(),
            });
        }
        if fragment.to_lowercase().contains(&q.correct_answer().to_lowercase()) {
            return Err(LinguisticsError::LeakedAnswer { attempts: 1 });
        }
        Ok(fragment)
    }

    /// One distractor-conditioned fragment from the proxy, retried up to the
    /// configured bound when the proxy leaks the correct answer.
    pub fn generate_perturbation(
        &self,
        proxy: &ModelSpec,
        q: &LocalizedQuestion,
        distractor_index: usize,
    ) -> Result<String, LinguisticsError> {
        let prompt = self.perturbation_prompt(q, distractor_index)?;
        let attempts = self.opts.perturbation_retries.max(1);
        for _ in 0..attempts {
            let completion = self.gateway.complete(
                proxy,
                &prompt,
                self.opts.perturbation_temperature,
                self.opts.max_output_tokens,
            )?;
            match self.accept_perturbation(q, &completion.text) {
                Ok(fragment) => return Ok(fragment),
                Err(LinguisticsError::LeakedAnswer { .. }) => continue,
                Err(other) => return Err(other),
            }
        }
        Err(LinguisticsError::LeakedAnswer { attempts })
    }

    /// Translates the fragment alone; nothing else is sent or altered.
    pub fn translate_fragment(
        &self,
        translator: &ModelSpec,
        fragment: &str,
        language: Language,
    ) -> Result<String, LinguisticsError> {
        if fragment.trim().is_empty() {
            return Err(LinguisticsError::Precondition("fragment must be non-empty".into()));
        }
        let prompt = self
            .templates
            .render(TemplateId::TranslateFragment, language, &[("fragment", fragment)])?;
        let completion = self.gateway.complete(
            translator,
            &prompt,
            self.opts.deterministic_temperature,
            self.opts.max_output_tokens,
        )?;
        let translated = parse_fragment_translation(&completion.text)?;
        if translated.trim().is_empty() {
            return Err(LinguisticsError::EmptyTranslation);
        }
        Ok(translated)
    }

    /// Translates stem, choices, and answer; the answer index is recovered
    /// by matching the translated answer against the translated choices.
    pub fn translate_question(
        &self,
        translator: &ModelSpec,
        q: &LocalizedQuestion,
        language: Language,
    ) -> Result<LocalizedQuestion, LinguisticsError> {
        let choices = render_choices(&q.choices);
        let prompt = self.templates.render(
            TemplateId::TranslateQuestion,
            language,
            &[
                ("question", &q.text),
                ("choices", &choices),
                ("ground_truth", q.correct_answer()),
            ],
        )?;
        let completion = self.gateway.complete(
            translator,
            &prompt,
            self.opts.deterministic_temperature,
            self.opts.max_output_tokens,
        )?;
        let parsed = parse_question_translation(&completion.text)?;
        if parsed.choices.len() != q.choices.len() {
            return Err(LinguisticsError::ChoiceCardinality {
                expected: q.choices.len(),
                got: parsed.choices.len(),
            });
        }
        let answer = parsed.answer.trim();
        let answer_index = parsed
            .choices
            .iter()
            .position(|c| c.trim() == answer)
            .ok_or(LinguisticsError::AnswerMismatch)?;
        Ok(LocalizedQuestion {
            language,
            text: parsed.text,
            choices: parsed.choices,
            answer_index,
        })
    }

    /// True iff the judge affirms that meaning is preserved and the correct
    /// answer is unchanged.
    pub fn semantic_check(
        &self,
        judge: &ModelSpec,
        original: &LocalizedQuestion,
        candidate: &LocalizedQuestion,
    ) -> Result<bool, LinguisticsError> {
        if original.text.trim().is_empty() || candidate.text.trim().is_empty() {
            return Err(LinguisticsError::Precondition("questions must be non-empty".into()));
        }
        let prompt = self.templates.render(
            TemplateId::SemanticCheck,
            Language::English,
            &[
                ("original", &original.text),
                ("original_answer", original.correct_answer()),
                ("candidate", &candidate.text),
                ("candidate_answer", candidate.correct_answer()),
            ],
        )?;
        let completion = self.gateway.complete(
            judge,
            &prompt,
            self.opts.deterministic_temperature,
            self.opts.max_output_tokens,
        )?;
        parse_semantic_verdict(&completion.text)
    }

    /// Zero-shot chain-of-thought answer. The raw text is returned as-is;
    /// extraction is a separate judge step.
    pub fn answer_question(
        &self,
        model: &ModelSpec,
        q: &LocalizedQuestion,
    ) -> Result<String, LinguisticsError> {
        let prompt = self.answer_prompt(q)?;
        let completion = self.gateway.complete(
            model,
            &prompt,
            self.opts.deterministic_temperature,
            self.opts.max_output_tokens,
        )?;
        Ok(completion.text)
    }

    pub fn answer_prompt(&self, q: &LocalizedQuestion) -> Result<String, LinguisticsError> {
        let choices = render_choices(&q.choices);
        self.templates.render(
            TemplateId::AnswerZeroShot,
            q.language,
            &[("question", &q.text), ("choices", &choices)],
        )
    }

    /// Selects the choice index the judge reads out of a raw answer. The
    /// judge's string must equal one choice after whitespace normalization;
    /// anything else is the unextractable error (scored incorrect downstream).
    pub fn extract_answer(
        &self,
        judge: &ModelSpec,
        q: &LocalizedQuestion,
        raw: &str,
    ) -> Result<usize, LinguisticsError> {
        if raw.trim().is_empty() {
            return Err(LinguisticsError::Precondition("raw answer must be non-empty".into()));
        }
        let choices = render_choices(&q.choices);
        let prompt = self.templates.render(
            TemplateId::ExtractAnswer,
            Language::English,
            &[("question", &q.text), ("answer", raw), ("choices", &choices)],
        )?;
        let completion = self.gateway.complete(
            judge,
            &prompt,
            self.opts.deterministic_temperature,
            self.opts.max_output_tokens,
        )?;
        let selected = parse_final_answer(&completion.text)?;
        let normalized = normalize_whitespace(&selected);
        q.choices
            .iter()
            .position(|c| normalize_whitespace(c) == normalized)
            .ok_or(LinguisticsError::Unextractable { raw: selected })
    }

    /// One whole-question rewrite through the direct-perturbation template.
    pub fn direct_perturbation(
        &self,
        proxy: &ModelSpec,
        q: &LocalizedQuestion,
    ) -> Result<String, LinguisticsError> {
        let prompt = self.templates.render(
            TemplateId::DirectPerturbBaseline,
            Language::English,
            &[("question", &q.text)],
        )?;
        let completion = self.gateway.complete(
            proxy,
            &prompt,
            self.opts.perturbation_temperature,
            self.opts.max_output_tokens,
        )?;
        let rewritten = parse_dp_rewrite(&completion.text)?;
        Ok(rewritten)
    }

    /// One domain label for a question via the categorize template. `None`
    /// means the verdict was unparseable; the caller decides the fallback.
    pub fn categorize(
        &self,
        judge: &ModelSpec,
        q: &LocalizedQuestion,
    ) -> Result<Option<String>, LinguisticsError> {
        let prompt = self
            .templates
            .render(TemplateId::Categorize, Language::English, &[("question", &q.text)])?;
        let completion = self.gateway.complete(
            judge,
            &prompt,
            self.opts.deterministic_temperature,
            self.opts.max_output_tokens,
        )?;
        Ok(parse_category(&completion.text))
    }
}

/// Translate-the-template: produces a missing answering template through the
/// translator backend and stores it in the registry as a reviewable asset.
/// Returns false when the template already existed.
pub fn materialize_answer_template(
    registry: &mut TemplateRegistry,
    gateway: &Gateway,
    translator: &ModelSpec,
    language: Language,
    deterministic_temperature: f64,
    max_tokens: u32,
) -> Result<bool, LinguisticsError> {
    if registry.contains(TemplateId::AnswerZeroShot, language) {
        return Ok(false);
    }
    let base = registry.get(TemplateId::AnswerZeroShot, Language::English)?.body.clone();
    let prompt = format!(
        "You are a professional translation expert. Translate the prompt template below into {}. \
         Keep the placeholder tokens {{question}} and {{choices}} exactly as they are, keep the \
         bracketed section structure, and keep the JSON output line with its \"final_answer\" key, \
         translating only the human-readable text.\n\n[The Start of the Template]\n{}\n[The End of the Template]",
        language.name(),
        base
    );
    let completion = gateway.complete(translator, &prompt, deterministic_temperature, max_tokens)?;
    let body = completion.text.trim().to_string();
    registry.insert(PromptTemplate::new(TemplateId::AnswerZeroShot, language, body)?);
    Ok(true)
}

fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// First balanced-looking JSON object in a reply: the usual "find the
/// braces" heuristic for chat-model output.
fn extract_json_object(raw: &str) -> Option<serde_json::Value> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    if end <= start {
        return None;
    }
    serde_json::from_str(&raw[start..=end]).ok()
}

fn parse_final_answer(raw: &str) -> Result<String, LinguisticsError> {
    if let Some(value) = extract_json_object(raw) {
        if let Some(answer) = value.get("final_answer") {
            if let Some(s) = answer.as_str() {
                return Ok(s.to_string());
            }
            return Ok(answer.to_string());
        }
    }
    Err(LinguisticsError::Unparseable {
        what: "final_answer",
        detail: truncate_for_error(raw),
    })
}

#[derive(Deserialize)]
struct QuestionTranslation {
    text: String,
    choices: Vec<String>,
    answer: String,
}

fn parse_question_translation(raw: &str) -> Result<QuestionTranslation, LinguisticsError> {
    let value = extract_json_object(raw).ok_or_else(|| LinguisticsError::Unparseable {
        what: "question translation",
        detail: truncate_for_error(raw),
    })?;
    serde_json::from_value(value).map_err(|e| LinguisticsError::Unparseable {
        what: "question translation",
        detail: e.to_string(),
    })
}

fn parse_fragment_translation(raw: &str) -> Result<String, LinguisticsError> {
    if let Some(value) = extract_json_object(raw) {
        if let Some(s) = value.get("translation").and_then(|v| v.as_str()) {
            return Ok(s.to_string());
        }
    }
    Err(LinguisticsError::Unparseable {
        what: "fragment translation",
        detail: truncate_for_error(raw),
    })
}

fn parse_semantic_verdict(raw: &str) -> Result<bool, LinguisticsError> {
    let value = extract_json_object(raw).ok_or_else(|| LinguisticsError::Unparseable {
        what: "semantic verdict",
        detail: truncate_for_error(raw),
    })?;
    let as_bool = |key: &str| -> Result<bool, LinguisticsError> {
        let field = value.get(key).ok_or_else(|| LinguisticsError::Unparseable {
            what: "semantic verdict",
            detail: format!("missing {key}"),
        })?;
        if let Some(b) = field.as_bool() {
            return Ok(b);
        }
        match field.as_str().map(|s| s.trim().to_lowercase()) {
            Some(s) if s == "yes" || s == "true" => Ok(true),
            Some(s) if s == "no" || s == "false" => Ok(false),
            _ => Err(LinguisticsError::Unparseable {
                what: "semantic verdict",
                detail: format!("{key} is not yes/no"),
            }),
        }
    };
    Ok(as_bool("meaning_preserved")? && as_bool("answer_unchanged")?)
}

/// Perturbation replies arrive either as the bare fragment or wrapped in the
/// template's `{Generated Distraction: <...>}` frame.
fn parse_perturbation(raw: &str) -> String {
    let trimmed = raw.trim();
    if let Some(idx) = trimmed.find("Generated Distraction:") {
        let rest = &trimmed[idx + "Generated Distraction:".len()..];
        let rest = rest.trim().trim_end_matches('}').trim();
        let rest = rest.strip_prefix('<').unwrap_or(rest);
        let rest = rest.strip_suffix('>').unwrap_or(rest);
        return rest.trim().to_string();
    }
    trimmed.to_string()
}

fn parse_dp_rewrite(raw: &str) -> Result<String, LinguisticsError> {
    let trimmed = raw.trim();
    let text = match trimmed.find("New question:") {
        Some(idx) => trimmed[idx + "New question:".len()..].trim(),
        None => trimmed,
    };
    if text.is_empty() {
        return Err(LinguisticsError::Unparseable {
            what: "direct perturbation",
            detail: "empty rewrite".into(),
        });
    }
    Ok(text.to_string())
}

fn parse_category(raw: &str) -> Option<String> {
    extract_json_object(raw)
        .and_then(|v| v.get("category").and_then(|c| c.as_str().map(str::to_string)))
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
}

fn truncate_for_error(raw: &str) -> String {
    const LIMIT: usize = 120;
    if raw.len() <= LIMIT {
        raw.to_string()
    } else {
        let mut end = LIMIT;
        while !raw.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &raw[..end])
    }
}
