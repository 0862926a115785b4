//! Line-delimited JSON persistence for every durable record type.
//!
//! One record per line, UTF-8, validated on load so a bad file fails with
//! the line number and offending field instead of flowing downstream.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::types::{InvariantError, Validate};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: parse error: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: {source}")]
    Invariant {
        path: String,
        line: usize,
        #[source]
        source: InvariantError,
    },
    #[error("serialization failure: {0}")]
    Serialize(#[source] serde_json::Error),
}

fn io_err(path: &Path, source: std::io::Error) -> PersistError {
    PersistError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `items` to `path`, one JSON record per line. Values are validated
/// first; a violation here means the caller built a broken record.
pub fn save_records<T, P>(path: P, items: &[T]) -> Result<(), PersistError>
where
    T: Serialize + Validate,
    P: AsRef<Path>,
{
    write_records(path.as_ref(), items, None)
}

/// Like [`save_records`], with a leading `# run_id: <id>` provenance
/// comment. Comment lines are ignored on load.
pub fn save_records_tagged<T, P>(path: P, items: &[T], run_id: &str) -> Result<(), PersistError>
where
    T: Serialize + Validate,
    P: AsRef<Path>,
{
    write_records(path.as_ref(), items, Some(run_id))
}

fn write_records<T>(path: &Path, items: &[T], run_id: Option<&str>) -> Result<(), PersistError>
where
    T: Serialize + Validate,
{
    for (i, item) in items.iter().enumerate() {
        item.validate().map_err(|source| PersistError::Invariant {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?;
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = BufWriter::new(file);
    if let Some(run_id) = run_id {
        writeln!(writer, "# run_id: {run_id}").map_err(|e| io_err(path, e))?;
    }
    for item in items {
        let line = serde_json::to_string(item).map_err(PersistError::Serialize)?;
        writer.write_all(line.as_bytes()).map_err(|e| io_err(path, e))?;
        writer.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}

/// Reads records of type `T` from `path` in file order, validating each.
pub fn load_records<T, P>(path: P) -> Result<Vec<T>, PersistError>
where
    T: DeserializeOwned + Validate,
    P: AsRef<Path>,
{
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut items = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|source| PersistError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            source,
        })?;
        item.validate().map_err(|source| PersistError::Invariant {
            path: path.display().to_string(),
            line: idx + 1,
            source,
        })?;
        items.push(item);
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BilingualPair, CandidateRecord, Language, LocalizedQuestion, SimulationResult};

    fn localized(lang: Language) -> LocalizedQuestion {
        LocalizedQuestion {
            language: lang,
            text: "Which gas do plants absorb?".into(),
            choices: vec!["carbon dioxide".into(), "oxygen".into(), "argon".into()],
            answer_index: 0,
        }
    }

    fn pair() -> BilingualPair {
        BilingualPair::seed("seed-1", localized(Language::English), localized(Language::Chinese))
    }

    #[test]
    fn empty_collection_writes_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        save_records::<BilingualPair, _>(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
        assert!(load_records::<BilingualPair, _>(&path).unwrap().is_empty());
    }

    #[test]
    fn single_pair_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let p = pair();
        save_records(&path, std::slice::from_ref(&p)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let loaded = load_records::<BilingualPair, _>(&path).unwrap();
        assert_eq!(loaded, vec![p]);
    }

    #[test]
    fn candidate_batch_writes_one_line_per_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("candidates.jsonl");
        let base = pair();
        let candidates: Vec<CandidateRecord> = (0..342)
            .map(|i| {
                let mut p = base.clone();
                p.seed_id = format!("seed-{i}");
                p.pair_id = BilingualPair::compute_pair_id(&p.seed_id, &[], Language::Chinese);
                CandidateRecord {
                    score: 1.0,
                    simulation: SimulationResult {
                        pair_id: p.pair_id.clone(),
                        english_correct: vec![true; 5],
                        target_correct: vec![false; 5],
                        english_mean: 1.0,
                        target_mean: 0.0,
                        score: 1.0,
                    },
                    run_id: "run".into(),
                    admitted_at_depth: 0,
                    pair: p,
                }
            })
            .collect();
        save_records(&path, &candidates).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 342);
        assert_eq!(load_records::<CandidateRecord, _>(&path).unwrap().len(), 342);
    }

    #[test]
    fn out_of_range_answer_index_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let mut p = pair();
        p.english.answer_index = 9;
        p.target.answer_index = 9;
        let line = serde_json::to_string(&p).unwrap();
        std::fs::write(&path, format!("{line}\n")).unwrap();
        let err = load_records::<BilingualPair, _>(&path).unwrap_err();
        assert!(err.to_string().contains("answer_index"), "got: {err}");
    }

    #[test]
    fn truncated_final_line_reports_its_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.jsonl");
        let pairs = vec![pair(), pair()];
        let mut text = String::new();
        for p in &pairs {
            text.push_str(&serde_json::to_string(p).unwrap());
            text.push('\n');
        }
        let cut = text.trim_end().len() - 10;
        std::fs::write(&path, &text[..cut]).unwrap();
        match load_records::<BilingualPair, _>(&path).unwrap_err() {
            PersistError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let err = save_records("/nonexistent-dir/x.jsonl", &[pair()]).unwrap_err();
        assert!(matches!(err, PersistError::Io { .. }));
    }

    #[test]
    fn tagged_files_carry_provenance_and_load_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tagged.jsonl");
        let p = pair();
        save_records_tagged(&path, std::slice::from_ref(&p), "run-abc").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# run_id: run-abc\n"));
        assert_eq!(load_records::<BilingualPair, _>(&path).unwrap(), vec![p]);
    }

    mod roundtrip_properties {
        use super::*;
        use crate::types::{CostLedger, PerturbationStep, SearchRunStats};
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn float_heavy_records_round_trip_field_exact(
                attempted in 0usize..1000,
                converted in 0usize..1000,
                wall in 0.0f64..1e6,
                dollars in 0.0f64..1e3,
                prompt_tokens in 0u64..10_000_000,
                completion_tokens in 0u64..10_000_000,
                prompt_price in 0.0f64..10.0,
                completion_price in 0.0f64..10.0,
            ) {
                let converted = converted.min(attempted);
                let stats = SearchRunStats {
                    language: Language::Chinese,
                    seeds_attempted: attempted,
                    seeds_converted: converted,
                    candidates: converted,
                    levels_explored: 4,
                    total_pairs_scored: attempted * 3,
                    wall_time: wall,
                    dollars,
                };
                let mut ledger = CostLedger::default();
                ledger.set_price("m", prompt_price, completion_price);
                ledger.record_usage("m", prompt_tokens, completion_tokens, false);
                ledger.attribute_language(Language::Chinese, dollars, converted as u64);

                let dir = tempfile::tempdir()?;
                let stats_path = dir.path().join("s.jsonl");
                let ledger_path = dir.path().join("l.jsonl");
                save_records(&stats_path, std::slice::from_ref(&stats))?;
                save_records(&ledger_path, std::slice::from_ref(&ledger))?;
                prop_assert_eq!(load_records::<SearchRunStats, _>(&stats_path)?, vec![stats]);
                prop_assert_eq!(load_records::<CostLedger, _>(&ledger_path)?, vec![ledger]);
            }

            #[test]
            fn pairs_round_trip_with_arbitrary_text(
                text in "\\PC{1,40}",
                fragment in "[a-zA-Z0-9 ]{1,20}",
                target_text in "\\PC{1,40}",
            ) {
                prop_assume!(!text.trim().is_empty());
                prop_assume!(!fragment.trim().is_empty());
                prop_assume!(!target_text.trim().is_empty());
                let english = LocalizedQuestion {
                    language: Language::English,
                    text: text.clone(),
                    choices: vec![format!("{text} A"), format!("{text} B")],
                    answer_index: 0,
                };
                let target = LocalizedQuestion {
                    language: Language::Japanese,
                    text: target_text.clone(),
                    choices: vec![format!("{target_text} 一"), format!("{target_text} 二")],
                    answer_index: 0,
                };
                let step = PerturbationStep {
                    distractor_index: 1,
                    english_fragment: fragment.clone(),
                    target_fragment: fragment,
                    proxy_model: "proxy".into(),
                    created_at: 1_700_000_000_000,
                };
                let pair = BilingualPair {
                    pair_id: "id".into(),
                    seed_id: "seed".into(),
                    english,
                    target,
                    depth: 1,
                    parent_id: Some("parent".into()),
                    lineage: vec![step],
                };
                let dir = tempfile::tempdir()?;
                let path = dir.path().join("p.jsonl");
                save_records(&path, std::slice::from_ref(&pair))?;
                prop_assert_eq!(load_records::<BilingualPair, _>(&path)?, vec![pair]);
            }
        }
    }
}
