//! Prompt template registry. Templates are plain-text assets with named
//! `{placeholder}` slots, one file per (template id, language); the built-in
//! set is embedded at compile time and a directory of overrides can be
//! layered on top.

use std::collections::BTreeMap;
use std::path::Path;

use crate::types::Language;

use super::LinguisticsError;

/// Which pipeline step a template drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TemplateId {
    Perturb,
    TranslateQuestion,
    TranslateFragment,
    AnswerZeroShot,
    ExtractAnswer,
    SemanticCheck,
    DirectPerturbBaseline,
    Categorize,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::Perturb,
        TemplateId::TranslateQuestion,
        TemplateId::TranslateFragment,
        TemplateId::AnswerZeroShot,
        TemplateId::ExtractAnswer,
        TemplateId::SemanticCheck,
        TemplateId::DirectPerturbBaseline,
        TemplateId::Categorize,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateId::Perturb => "perturb",
            TemplateId::TranslateQuestion => "translate_question",
            TemplateId::TranslateFragment => "translate_fragment",
            TemplateId::AnswerZeroShot => "answer_zero_shot",
            TemplateId::ExtractAnswer => "extract_answer",
            TemplateId::SemanticCheck => "semantic_check",
            TemplateId::DirectPerturbBaseline => "direct_perturb_baseline",
            TemplateId::Categorize => "categorize",
        }
    }

    pub fn from_str_tag(tag: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|id| id.as_str() == tag)
    }

    /// Placeholders the render step will substitute; all must be present.
    pub fn required_placeholders(&self) -> &'static [&'static str] {
        match self {
            TemplateId::Perturb => &["question", "answer", "wrong_answer"],
            TemplateId::TranslateQuestion => &["question", "choices", "ground_truth"],
            TemplateId::TranslateFragment => &["fragment"],
            TemplateId::AnswerZeroShot => &["question", "choices"],
            TemplateId::ExtractAnswer => &["question", "answer", "choices"],
            TemplateId::SemanticCheck => &["original", "original_answer", "candidate", "candidate_answer"],
            TemplateId::DirectPerturbBaseline => &["question"],
            TemplateId::Categorize => &["question"],
        }
    }
}

impl std::fmt::Display for TemplateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One template body bound to its id and language.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub template_id: TemplateId,
    pub language: Language,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(template_id: TemplateId, language: Language, body: impl Into<String>) -> Result<Self, LinguisticsError> {
        let body = body.into();
        for placeholder in template_id.required_placeholders() {
            if !body.contains(&format!("{{{placeholder}}}")) {
                return Err(LinguisticsError::MissingPlaceholder {
                    template: template_id.as_str(),
                    language,
                    placeholder,
                });
            }
        }
        // answering templates must demand a structured final answer
        if template_id == TemplateId::AnswerZeroShot && !body.contains("final_answer") {
            return Err(LinguisticsError::MissingPlaceholder {
                template: template_id.as_str(),
                language,
                placeholder: "final_answer",
            });
        }
        Ok(Self {
            template_id,
            language,
            body,
        })
    }

    /// Substitutes `{key}` slots; unknown braces (JSON output blocks) pass
    /// through untouched.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let mut out = self.body.clone();
        for (key, value) in values {
            out = out.replace(&format!("{{{key}}}"), value);
        }
        out
    }
}

macro_rules! builtin_templates {
    ($(($id:expr, $lang:expr, $file:literal)),+ $(,)?) => {
        &[
            $(($id, $lang, include_str!(concat!("../../assets/templates/", $file)))),+
        ]
    };
}

const BUILTIN: &[(TemplateId, Language, &str)] = builtin_templates![
    (TemplateId::Perturb, Language::English, "perturb.en.txt"),
    (TemplateId::DirectPerturbBaseline, Language::English, "direct_perturb_baseline.en.txt"),
    (TemplateId::ExtractAnswer, Language::English, "extract_answer.en.txt"),
    (TemplateId::SemanticCheck, Language::English, "semantic_check.en.txt"),
    (TemplateId::Categorize, Language::English, "categorize.en.txt"),
    (TemplateId::AnswerZeroShot, Language::English, "answer_zero_shot.en.txt"),
    (TemplateId::AnswerZeroShot, Language::French, "answer_zero_shot.fr.txt"),
    (TemplateId::AnswerZeroShot, Language::Italian, "answer_zero_shot.it.txt"),
    (TemplateId::AnswerZeroShot, Language::Spanish, "answer_zero_shot.es.txt"),
    (TemplateId::TranslateQuestion, Language::Chinese, "translate_question.zh.txt"),
    (TemplateId::TranslateQuestion, Language::Japanese, "translate_question.ja.txt"),
    (TemplateId::TranslateQuestion, Language::Korean, "translate_question.ko.txt"),
    (TemplateId::TranslateQuestion, Language::French, "translate_question.fr.txt"),
    (TemplateId::TranslateQuestion, Language::Spanish, "translate_question.es.txt"),
    (TemplateId::TranslateQuestion, Language::Italian, "translate_question.it.txt"),
    (TemplateId::TranslateQuestion, Language::Ukrainian, "translate_question.uk.txt"),
    (TemplateId::TranslateQuestion, Language::German, "translate_question.de.txt"),
    (TemplateId::TranslateQuestion, Language::Bengali, "translate_question.bn.txt"),
    (TemplateId::TranslateQuestion, Language::Hindi, "translate_question.hi.txt"),
    (TemplateId::TranslateQuestion, Language::Arabic, "translate_question.ar.txt"),
    (TemplateId::TranslateQuestion, Language::Hebrew, "translate_question.he.txt"),
    (TemplateId::TranslateQuestion, Language::Amharic, "translate_question.am.txt"),
    (TemplateId::TranslateQuestion, Language::Yoruba, "translate_question.yo.txt"),
    (TemplateId::TranslateQuestion, Language::Swahili, "translate_question.sw.txt"),
    (TemplateId::TranslateQuestion, Language::Zulu, "translate_question.zu.txt"),
    (TemplateId::TranslateFragment, Language::Chinese, "translate_fragment.zh.txt"),
    (TemplateId::TranslateFragment, Language::Japanese, "translate_fragment.ja.txt"),
    (TemplateId::TranslateFragment, Language::Korean, "translate_fragment.ko.txt"),
    (TemplateId::TranslateFragment, Language::French, "translate_fragment.fr.txt"),
    (TemplateId::TranslateFragment, Language::Spanish, "translate_fragment.es.txt"),
    (TemplateId::TranslateFragment, Language::Italian, "translate_fragment.it.txt"),
    (TemplateId::TranslateFragment, Language::Ukrainian, "translate_fragment.uk.txt"),
    (TemplateId::TranslateFragment, Language::German, "translate_fragment.de.txt"),
    (TemplateId::TranslateFragment, Language::Bengali, "translate_fragment.bn.txt"),
    (TemplateId::TranslateFragment, Language::Hindi, "translate_fragment.hi.txt"),
    (TemplateId::TranslateFragment, Language::Arabic, "translate_fragment.ar.txt"),
    (TemplateId::TranslateFragment, Language::Hebrew, "translate_fragment.he.txt"),
    (TemplateId::TranslateFragment, Language::Amharic, "translate_fragment.am.txt"),
    (TemplateId::TranslateFragment, Language::Yoruba, "translate_fragment.yo.txt"),
    (TemplateId::TranslateFragment, Language::Swahili, "translate_fragment.sw.txt"),
    (TemplateId::TranslateFragment, Language::Zulu, "translate_fragment.zu.txt"),
];

/// All templates known to a run, keyed by (id, language).
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<(TemplateId, Language), PromptTemplate>,
}

impl TemplateRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The compiled-in template set.
    pub fn builtin() -> Self {
        let mut registry = Self::default();
        for (id, lang, body) in BUILTIN {
            let template = PromptTemplate::new(*id, *lang, *body)
                .expect("built-in templates carry their placeholders");
            registry.insert(template);
        }
        registry
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates
            .insert((template.template_id, template.language), template);
    }

    pub fn get(&self, id: TemplateId, language: Language) -> Result<&PromptTemplate, LinguisticsError> {
        self.templates
            .get(&(id, language))
            .ok_or(LinguisticsError::MissingTemplate {
                template: id.as_str(),
                language,
            })
    }

    pub fn contains(&self, id: TemplateId, language: Language) -> bool {
        self.templates.contains_key(&(id, language))
    }

    pub fn render(
        &self,
        id: TemplateId,
        language: Language,
        values: &[(&str, &str)],
    ) -> Result<String, LinguisticsError> {
        Ok(self.get(id, language)?.render(values))
    }

    /// Loads `<template_id>.<lang>.txt` files from a directory, overriding
    /// or extending the current set. Unrecognized names are rejected so
    /// typos don't silently vanish.
    pub fn load_dir(&mut self, dir: impl AsRef<Path>) -> Result<usize, LinguisticsError> {
        let dir = dir.as_ref();
        let entries = std::fs::read_dir(dir).map_err(|e| LinguisticsError::TemplateIo {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        let mut loaded = 0;
        for entry in entries {
            let entry = entry.map_err(|e| LinguisticsError::TemplateIo {
                path: dir.display().to_string(),
                message: e.to_string(),
            })?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let file_name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let (tag, lang_code) = file_name.rsplit_once('.').ok_or_else(|| LinguisticsError::TemplateIo {
                path: path.display().to_string(),
                message: "expected <template_id>.<lang>.txt".to_string(),
            })?;
            let id = TemplateId::from_str_tag(tag).ok_or_else(|| LinguisticsError::TemplateIo {
                path: path.display().to_string(),
                message: format!("unknown template id {tag:?}"),
            })?;
            let language: Language = lang_code.parse().map_err(|_| LinguisticsError::TemplateIo {
                path: path.display().to_string(),
                message: format!("unknown language code {lang_code:?}"),
            })?;
            let body = std::fs::read_to_string(&path).map_err(|e| LinguisticsError::TemplateIo {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            self.insert(PromptTemplate::new(id, language, body)?);
            loaded += 1;
        }
        Ok(loaded)
    }

    /// Writes one template back out as a reviewable asset file.
    pub fn save_template_file(
        &self,
        dir: impl AsRef<Path>,
        id: TemplateId,
        language: Language,
    ) -> Result<(), LinguisticsError> {
        let template = self.get(id, language)?;
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| LinguisticsError::TemplateIo {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        let path = dir.join(format!("{}.{}.txt", id.as_str(), language.code()));
        std::fs::write(&path, &template.body).map_err(|e| LinguisticsError::TemplateIo {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Renders a choices list the way every template expects it: a one-line
/// JSON array. Keeping it on one line also lets scripted backends find it.
pub fn render_choices(choices: &[String]) -> String {
    serde_json::to_string(choices).expect("strings serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_set_is_complete() {
        let reg = TemplateRegistry::builtin();
        assert!(reg.contains(TemplateId::Perturb, Language::English));
        assert!(reg.contains(TemplateId::ExtractAnswer, Language::English));
        assert!(reg.contains(TemplateId::SemanticCheck, Language::English));
        assert!(reg.contains(TemplateId::Categorize, Language::English));
        assert!(reg.contains(TemplateId::DirectPerturbBaseline, Language::English));
        for lang in Language::targets() {
            assert!(reg.contains(TemplateId::TranslateQuestion, lang), "{lang}");
            assert!(reg.contains(TemplateId::TranslateFragment, lang), "{lang}");
        }
        for lang in [Language::English, Language::French, Language::Italian, Language::Spanish] {
            assert!(reg.contains(TemplateId::AnswerZeroShot, lang), "{lang}");
        }
        assert!(!reg.contains(TemplateId::AnswerZeroShot, Language::Chinese));
    }

    #[test]
    fn render_fills_slots_and_leaves_json_braces_alone() {
        let reg = TemplateRegistry::builtin();
        let rendered = reg
            .render(
                TemplateId::AnswerZeroShot,
                Language::English,
                &[("question", "Which planet is red?"), ("choices", r#"["Mars","Venus"]"#)],
            )
            .unwrap();
        assert!(rendered.contains("Which planet is red?"));
        assert!(rendered.contains(r#"["Mars","Venus"]"#));
        assert!(rendered.contains(r#"{"final_answer""#));
        assert!(!rendered.contains("{question}"));
    }

    #[test]
    fn missing_placeholder_is_rejected_at_insert() {
        let err = PromptTemplate::new(TemplateId::Perturb, Language::English, "no slots here").unwrap_err();
        match err {
            LinguisticsError::MissingPlaceholder { placeholder, .. } => {
                assert_eq!(placeholder, "question")
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn answer_template_must_demand_final_answer() {
        let err = PromptTemplate::new(
            TemplateId::AnswerZeroShot,
            Language::German,
            "{question} {choices}",
        )
        .unwrap_err();
        match err {
            LinguisticsError::MissingPlaceholder { placeholder, .. } => {
                assert_eq!(placeholder, "final_answer")
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn load_dir_overrides_and_rejects_unknown_names() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("answer_zero_shot.de.txt"),
            "{question} {choices} final_answer",
        )
        .unwrap();
        let mut reg = TemplateRegistry::builtin();
        assert_eq!(reg.load_dir(dir.path()).unwrap(), 1);
        assert!(reg.contains(TemplateId::AnswerZeroShot, Language::German));

        std::fs::write(dir.path().join("bogus_id.de.txt"), "x").unwrap();
        assert!(reg.load_dir(dir.path()).is_err());
    }

    #[test]
    fn save_round_trips_through_load() {
        let dir = tempfile::tempdir().unwrap();
        let reg = TemplateRegistry::builtin();
        reg.save_template_file(dir.path(), TemplateId::Perturb, Language::English)
            .unwrap();
        let mut fresh = TemplateRegistry::empty();
        assert_eq!(fresh.load_dir(dir.path()).unwrap(), 1);
        assert_eq!(
            fresh.get(TemplateId::Perturb, Language::English).unwrap().body,
            reg.get(TemplateId::Perturb, Language::English).unwrap().body
        );
    }
}
