//! Built-in scripted scenarios for offline runs.
//!
//! The centerpiece is a planted-weakness harness: simulators answer
//! correctly in both languages unless the target-language text carries a
//! planted marker, and the only way to produce that marker is the
//! distractor-conditioned perturbation path. That gives offline runs a
//! weakness the search can genuinely discover, with translation-only and
//! direct-rewrite routes mostly blind to it.

use serde_json::json;

use crate::gateway::{Gateway, GatewayError, MockReply, MockScript, ScriptOutcome};
use crate::types::{
    BilingualPair, Language, LocalizedQuestion, QuestionRecord, SourceDataset,
};

/// Token that flips scripted simulators when it appears in target-language text.
pub const PLANT_MARKER: &str = "zq77";
/// Distractor text that makes the scripted proxy emit the planted marker.
pub const TRIGGER_DISTRACTOR: &str = "lodestone";
/// Substring identifying the correct choice to scripted simulators.
pub const CORRECT_TOKEN: &str = "prime";
/// Question-stem token that makes the direct-rewrite path plant the marker.
pub const DP_VULNERABLE_TOKEN: &str = "applied-history";
/// Prefix the scripted translator puts on every translated string.
pub const TARGET_TAG: &str = "FR::";

/// Canonical scenario names, usable as `mock:<name>` endpoints.
pub mod names {
    pub const PROXY: &str = "demo-proxy";
    pub const PROXY_BENIGN: &str = "demo-proxy-benign";
    pub const PROXY_PLANT_ALL: &str = "demo-proxy-plant-all";
    pub const TRANSLATOR: &str = "demo-translator";
    pub const JUDGE: &str = "demo-judge";
    pub const JUDGE_REJECT: &str = "demo-judge-reject";
    pub const SIM_FLIP: &str = "demo-sim-flip";
    pub const SIM_STEADY: &str = "demo-sim-steady";
}

fn block<'a>(prompt: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let s = prompt.find(start)? + start.len();
    let e = prompt[s..].find(end)? + s;
    Some(prompt[s..e].trim())
}

/// Finds the one-line JSON array of choices that every answering and
/// extraction prompt carries.
fn choices_line(prompt: &str) -> Option<Vec<String>> {
    prompt
        .lines()
        .find_map(|line| serde_json::from_str::<Vec<String>>(line.trim()).ok())
}

fn planted_fragment() -> String {
    format!("Field notes sometimes mention the {TRIGGER_DISTRACTOR} tally {PLANT_MARKER} in passing.")
}

fn is_perturb_prompt(prompt: &str) -> bool {
    prompt.contains("[The Start of the Incorrect Option]")
}

fn is_dp_prompt(prompt: &str) -> bool {
    prompt.contains("perturbation design expert")
}

fn perturb_reply(prompt: &str, plant: impl Fn(&str) -> bool) -> ScriptOutcome {
    let wrong = block(prompt, "[The Start of the Incorrect Option]", "[The End of the Incorrect Option]")
        .unwrap_or_default();
    let fragment = if plant(wrong) {
        planted_fragment()
    } else {
        format!("Background reading about {wrong} rarely changes the outcome.")
    };
    MockReply::text(fragment).into()
}

fn dp_reply(prompt: &str) -> ScriptOutcome {
    let question = block(prompt, "[The Start of the Question]", "[The End of the Question]").unwrap_or_default();
    let rewrite = if question.contains(DP_VULNERABLE_TOKEN) {
        format!("New question: {} {}", question, planted_fragment())
    } else {
        format!("New question: {question} General reference notes apply.")
    };
    MockReply::text(rewrite).into()
}

/// Perturbation proxy that plants the marker only for the trigger distractor.
pub fn planted_proxy_script() -> MockScript {
    MockScript::new()
        .rule(is_perturb_prompt, |p| {
            perturb_reply(p, |wrong| wrong.contains(TRIGGER_DISTRACTOR))
        })
        .rule(is_dp_prompt, dp_reply)
}

/// Proxy whose fragments never plant the marker; nothing ever flips.
pub fn benign_proxy_script() -> MockScript {
    MockScript::new()
        .rule(is_perturb_prompt, |p| perturb_reply(p, |_| false))
        .rule(is_dp_prompt, dp_reply)
}

/// Proxy that plants the marker for every distractor.
pub fn plant_all_proxy_script() -> MockScript {
    MockScript::new()
        .rule(is_perturb_prompt, |p| perturb_reply(p, |_| true))
        .rule(is_dp_prompt, dp_reply)
}

/// Translator: tags every translated string with [`TARGET_TAG`] so scripted
/// simulators can tell the target side from the English side.
pub fn translator_script() -> MockScript {
    MockScript::new()
        .rule(
            |p| p.contains("[The Start of the Text]"),
            |p| {
                let text = block(p, "[The Start of the Text]", "[The End of the Text]").unwrap_or_default();
                let answer = block(p, "[The Start of the Answer]", "[The End of the Answer]").unwrap_or_default();
                let choices = block(p, "[The Start of the Choices]", "[The End of the Choices]")
                    .and_then(|c| serde_json::from_str::<Vec<String>>(c).ok())
                    .unwrap_or_default();
                let translated: Vec<String> =
                    choices.iter().map(|c| format!("{TARGET_TAG} {c}")).collect();
                let body = json!({
                    "text": format!("{TARGET_TAG} {text}"),
                    "choices": translated,
                    "answer": format!("{TARGET_TAG} {answer}"),
                });
                MockReply::text(body.to_string()).into()
            },
        )
        .rule(
            |p| p.contains("[The Start of the Fragment]"),
            |p| {
                let fragment =
                    block(p, "[The Start of the Fragment]", "[The End of the Fragment]").unwrap_or_default();
                MockReply::text(json!({ "translation": format!("{TARGET_TAG} {fragment}") }).to_string()).into()
            },
        )
        .rule(
            |p| p.contains("[The Start of the Template]"),
            |p| {
                let body =
                    block(p, "[The Start of the Template]", "[The End of the Template]").unwrap_or_default();
                MockReply::text(body.to_string()).into()
            },
        )
}

/// Judge: approves every semantic check, extracts answers by echoing the raw
/// reply, and files every question under General Knowledge.
pub fn judge_script() -> MockScript {
    MockScript::new()
        .rule(
            |p| p.contains("[The Start of the Candidate Question]"),
            |_| MockReply::text(r#"{"meaning_preserved": "yes", "answer_unchanged": "yes"}"#).into(),
        )
        .rule(
            |p| p.contains("[The Start of the Model's Answer]"),
            |p| {
                let raw = block(p, "[The Start of the Model's Answer]", "[The End of the Model's Answer]")
                    .unwrap_or_default();
                MockReply::text(json!({ "final_answer": raw }).to_string()).into()
            },
        )
        .rule(
            |p| p.contains("subject domain"),
            |_| MockReply::text(r#"{"category": "General Knowledge"}"#).into(),
        )
}

/// Judge that vetoes every semantic check; extraction still works.
pub fn rejecting_judge_script() -> MockScript {
    MockScript::new()
        .rule(
            |p| p.contains("[The Start of the Candidate Question]"),
            |_| MockReply::text(r#"{"meaning_preserved": "no", "answer_unchanged": "no"}"#).into(),
        )
        .rule(
            |p| p.contains("[The Start of the Model's Answer]"),
            |p| {
                let raw = block(p, "[The Start of the Model's Answer]", "[The End of the Model's Answer]")
                    .unwrap_or_default();
                MockReply::text(json!({ "final_answer": raw }).to_string()).into()
            },
        )
}

fn answer_with(prompt: &str, flip: bool) -> ScriptOutcome {
    let Some(choices) = choices_line(prompt) else {
        return ScriptOutcome::Fail {
            message: "no choices line in prompt".into(),
            transient: false,
        };
    };
    let picked = if flip {
        choices.iter().find(|c| !c.contains(CORRECT_TOKEN))
    } else {
        choices.iter().find(|c| c.contains(CORRECT_TOKEN))
    };
    match picked {
        Some(choice) => MockReply::text(choice.clone()).into(),
        None => ScriptOutcome::Fail {
            message: "no suitable choice".into(),
            transient: false,
        },
    }
}

/// Simulator that answers wrongly when a target-language question carries
/// the planted marker, and correctly everywhere else.
pub fn flip_simulator_script() -> MockScript {
    MockScript::new().fallback(|p| {
        let flip = p.contains(PLANT_MARKER) && p.contains(TARGET_TAG);
        answer_with(p, flip)
    })
}

/// Simulator that always answers correctly.
pub fn steady_simulator_script() -> MockScript {
    MockScript::new().fallback(|p| answer_with(p, false))
}

/// Registers every demo scenario under its canonical name.
pub fn register_demo_scenarios(gateway: &Gateway) -> Result<(), GatewayError> {
    gateway.register_mock(names::PROXY, planted_proxy_script())?;
    gateway.register_mock(names::PROXY_BENIGN, benign_proxy_script())?;
    gateway.register_mock(names::PROXY_PLANT_ALL, plant_all_proxy_script())?;
    gateway.register_mock(names::TRANSLATOR, translator_script())?;
    gateway.register_mock(names::JUDGE, judge_script())?;
    gateway.register_mock(names::JUDGE_REJECT, rejecting_judge_script())?;
    gateway.register_mock(names::SIM_FLIP, flip_simulator_script())?;
    gateway.register_mock(names::SIM_STEADY, steady_simulator_script())?;
    Ok(())
}

/// Sample questions compatible with the scripted harness: the correct choice
/// carries [`CORRECT_TOKEN`], one distractor carries [`TRIGGER_DISTRACTOR`],
/// and every fourth stem carries [`DP_VULNERABLE_TOKEN`].
pub fn demo_question_records(n: usize) -> Vec<QuestionRecord> {
    const DATASETS: [SourceDataset; 5] = [
        SourceDataset::Arc,
        SourceDataset::Mmlu,
        SourceDataset::CommonsenseQa,
        SourceDataset::TruthfulQa,
        SourceDataset::SciQ,
    ];
    (0..n)
        .map(|i| {
            let topic = if i % 4 == 0 {
                format!("In {DP_VULNERABLE_TOKEN} terms, which relic stays sound in trial {i}?")
            } else {
                format!("Which relic stays sound in trial {i}?")
            };
            QuestionRecord {
                id: format!("demo-q{i}"),
                source_dataset: DATASETS[i % DATASETS.len()],
                text: topic,
                choices: demo_choices(i, 4),
                answer_index: 0,
            }
        })
        .collect()
}

fn demo_choices(i: usize, n_choices: usize) -> Vec<String> {
    let mut choices = vec![
        format!("{CORRECT_TOKEN} amber {i}"),
        format!("dull copper {i}"),
        format!("{TRIGGER_DISTRACTOR} shard {i}"),
        format!("pale glass {i}"),
    ];
    for extra in 4..n_choices {
        choices.push(format!("{TRIGGER_DISTRACTOR} relic {extra} of {i}"));
    }
    choices.truncate(n_choices.max(2));
    choices
}

/// Builds depth-0 pairs exactly as the scripted translator would produce
/// them, so tests can start mid-pipeline.
pub fn demo_seed_pairs(n: usize) -> Vec<BilingualPair> {
    demo_question_records(n)
        .into_iter()
        .map(|q| seed_pair_from_record(&q))
        .collect()
}

/// One seed pair with a configurable number of choices (all extra choices
/// carry the trigger, so wide questions spawn many planted children).
pub fn demo_seed_pair_with_choices(i: usize, n_choices: usize) -> BilingualPair {
    let record = QuestionRecord {
        id: format!("demo-wide-q{i}"),
        source_dataset: SourceDataset::Custom,
        text: format!("Which relic stays sound in wide trial {i}?"),
        choices: demo_choices(i, n_choices),
        answer_index: 0,
    };
    seed_pair_from_record(&record)
}

fn seed_pair_from_record(record: &QuestionRecord) -> BilingualPair {
    let english = LocalizedQuestion {
        language: Language::English,
        text: record.text.clone(),
        choices: record.choices.clone(),
        answer_index: record.answer_index,
    };
    let target = LocalizedQuestion {
        language: Language::French,
        text: format!("{TARGET_TAG} {}", record.text),
        choices: record.choices.iter().map(|c| format!("{TARGET_TAG} {c}")).collect(),
        answer_index: record.answer_index,
    };
    BilingualPair::seed(record.id.clone(), english, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::GatewaySettings;
    use crate::types::Validate;

    #[test]
    fn demo_scenarios_register_once() {
        let gw = Gateway::new(GatewaySettings::default());
        register_demo_scenarios(&gw).unwrap();
        assert!(gw.has_scenario(names::PROXY));
        assert!(gw.has_scenario(names::SIM_FLIP));
        assert!(register_demo_scenarios(&gw).is_err());
    }

    #[test]
    fn demo_records_and_pairs_satisfy_invariants() {
        for record in demo_question_records(10) {
            record.validate().unwrap();
        }
        for pair in demo_seed_pairs(10) {
            pair.validate().unwrap();
        }
        demo_seed_pair_with_choices(0, 6).validate().unwrap();
    }

    #[test]
    fn flip_simulator_only_flips_tagged_marked_prompts() {
        let choices = r#"["FR:: prime amber 0", "FR:: dull copper 0"]"#;
        let tagged_marked = format!("question with {PLANT_MARKER}\n{choices}\n");
        let tagged_only = format!("plain question\n{choices}\n");

        match flip_simulator_script().run(&tagged_marked).unwrap() {
            ScriptOutcome::Reply(r) => assert_eq!(r.text, "FR:: dull copper 0"),
            _ => panic!("expected reply"),
        }
        match flip_simulator_script().run(&tagged_only).unwrap() {
            ScriptOutcome::Reply(r) => assert_eq!(r.text, "FR:: prime amber 0"),
            _ => panic!("expected reply"),
        }
    }
}
