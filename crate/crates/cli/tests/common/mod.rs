//! Fixtures shared by the CLI integration and acceptance suites.
#![allow(dead_code)] // each test target uses a different subset

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use glotprobe::persist::save_records;
use glotprobe::scenarios::{self, names};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glotprobe"))
}

pub fn run_ok(args: &[&str]) -> Output {
    let output = bin().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

pub fn run_err(args: &[&str]) -> Output {
    let output = bin().args(args).output().expect("binary runs");
    assert!(
        !output.status.success(),
        "command {:?} unexpectedly succeeded",
        args
    );
    output
}

/// A full offline roster: planted proxy, tagging translator, approving
/// judge, K flip simulators (doubling as targets).
pub fn write_config(dir: &Path, simulators: usize, judge_scenario: &str) -> PathBuf {
    let mut text = String::from(
        r#"[search]
batch_size = 4
beam_width = 12
depth_initial = 4
depth_extended = 6
redundancy_cap = 3
score_exponent = 2.0
inclusion_threshold = 0.8
potential_threshold = 0.6

[gateway]
max_concurrency = 4

"#,
    );
    text.push_str(&model_block("proxy-model", "proxy", names::PROXY, 0.7, 0.15, 0.6));
    text.push_str(&model_block(
        "translator-model",
        "translator",
        names::TRANSLATOR,
        0.001,
        0.1,
        0.4,
    ));
    text.push_str(&format!(
        r#"[[models]]
name = "judge-model"
roles = ["judge"]
endpoint = "mock:{judge_scenario}"
temperature = 0.001
max_tokens = 1024
prompt_price = 0.1
completion_price = 0.4

"#
    ));
    for i in 0..simulators {
        text.push_str(&format!(
            r#"[[models]]
name = "sim-{i}"
roles = ["simulator", "target"]
endpoint = "mock:{}"
temperature = 0.001
max_tokens = 1024
prompt_price = 0.05
completion_price = 0.2

"#,
            names::SIM_FLIP
        ));
    }
    let path = dir.join("run.toml");
    std::fs::write(&path, text).expect("config written");
    path
}

fn model_block(name: &str, role: &str, scenario: &str, temperature: f64, pp: f64, cp: f64) -> String {
    format!(
        r#"[[models]]
name = "{name}"
roles = ["{role}"]
endpoint = "mock:{scenario}"
temperature = {temperature}
max_tokens = 1024
prompt_price = {pp}
completion_price = {cp}

"#
    )
}

pub fn write_questions(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("questions.jsonl");
    save_records(&path, &scenarios::demo_question_records(n)).expect("questions written");
    path
}

pub fn path_str(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Applies `rounds` scripted perturbation steps to a seed pair, shaped the
/// same way the search shapes its children.
pub fn grow_pair(seed: glotprobe::types::BilingualPair, rounds: usize) -> glotprobe::types::BilingualPair {
    use glotprobe::types::{BilingualPair, PerturbationStep};

    let mut pair = seed;
    for round in 0..rounds {
        let fragment = format!("Background note {round} about trial relics.");
        let target_fragment = format!("{} {fragment}", scenarios::TARGET_TAG);
        let mut lineage = pair.lineage.clone();
        lineage.push(PerturbationStep {
            distractor_index: 1,
            english_fragment: fragment.clone(),
            target_fragment: target_fragment.clone(),
            proxy_model: "proxy".into(),
            created_at: 0,
        });
        let fragments: Vec<&str> = lineage.iter().map(|s| s.english_fragment.as_str()).collect();
        pair = BilingualPair {
            pair_id: BilingualPair::compute_pair_id(&pair.seed_id, &fragments, pair.target.language),
            seed_id: pair.seed_id.clone(),
            english: append_fragment(&pair.english, &fragment),
            target: append_fragment(&pair.target, &target_fragment),
            depth: pair.depth + 1,
            parent_id: Some(pair.pair_id.clone()),
            lineage,
        };
    }
    pair
}

fn append_fragment(
    q: &glotprobe::types::LocalizedQuestion,
    fragment: &str,
) -> glotprobe::types::LocalizedQuestion {
    glotprobe::types::LocalizedQuestion {
        language: q.language,
        text: format!("{} {}", q.text, fragment),
        choices: q.choices.clone(),
        answer_index: q.answer_index,
    }
}
