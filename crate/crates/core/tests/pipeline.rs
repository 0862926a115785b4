//! End-to-end library runs against the scripted harness: search feeding
//! analysis, artifact persistence round-trips, transcript replay, and the
//! lineage-consistency property over everything expansion produces.

use std::collections::{BTreeMap, BTreeSet};

use glotprobe::clock::Clock;
use glotprobe::gateway::{Gateway, GatewaySettings, ModelSpec, ReplayStore, Role, TranscriptRecorder};
use glotprobe::linguistics::{Linguistics, LinguisticsOptions, TemplateRegistry};
use glotprobe::persist::{load_records, save_records};
use glotprobe::scenarios::{self, names};
use glotprobe::search::{SearchRoster, Searcher};
use glotprobe::types::{BilingualPair, CandidateRecord, Language, SearchConfig, SearchRunStats, Validate};

fn model(name: &str, scenario: &str, roles: &[Role]) -> ModelSpec {
    ModelSpec {
        name: name.into(),
        roles: BTreeSet::from_iter(roles.iter().copied()),
        endpoint: format!("mock:{scenario}"),
        api_key_env: None,
        temperature: 0.001,
        max_tokens: 1024,
        prompt_price: 0.1,
        completion_price: 0.2,
    }
}

fn demo_roster() -> SearchRoster {
    SearchRoster {
        proxy: model("proxy", names::PROXY, &[Role::Proxy]),
        translator: model("translator", names::TRANSLATOR, &[Role::Translator]),
        judge: model("judge", names::JUDGE, &[Role::Judge]),
        simulators: (0..5)
            .map(|i| model(&format!("sim-{i}"), names::SIM_FLIP, &[Role::Simulator]))
            .collect(),
    }
}

fn offline_gateway() -> Gateway {
    let gateway = Gateway::new(GatewaySettings {
        offline: true,
        ..GatewaySettings::default()
    });
    scenarios::register_demo_scenarios(&gateway).unwrap();
    gateway
}

#[test]
fn search_artifacts_round_trip_through_persistence() {
    let gateway = offline_gateway();
    let templates = TemplateRegistry::builtin();
    let config = SearchConfig::default();
    let ling = Linguistics::new(&gateway, &templates, LinguisticsOptions::from_config(&config));
    let roster = demo_roster();
    let searcher = Searcher::new(&ling, &roster, &config, Clock::Fixed(0), "pipeline-run", Language::French);

    let seeds = scenarios::demo_seed_pairs(4);
    let (candidates, stats) = searcher.run_search(&seeds).unwrap();
    assert!(!candidates.is_empty());
    assert_eq!(gateway.network_calls(), 0);

    let dir = tempfile::tempdir().unwrap();
    let candidates_path = dir.path().join("candidates.jsonl");
    let stats_path = dir.path().join("stats.jsonl");
    save_records(&candidates_path, &candidates).unwrap();
    save_records(&stats_path, std::slice::from_ref(&stats)).unwrap();

    let candidates_back: Vec<CandidateRecord> = load_records(&candidates_path).unwrap();
    let stats_back: Vec<SearchRunStats> = load_records(&stats_path).unwrap();
    assert_eq!(candidates_back, candidates);
    assert_eq!(stats_back, vec![stats]);

    // ledger attribution follows the run
    let ledger = gateway.ledger_snapshot();
    let spend = ledger.per_language.get(&Language::French).unwrap();
    assert_eq!(spend.candidates, candidates.len() as u64);
    assert!(spend.dollars > 0.0);
    assert!((ledger.total_dollars() - spend.dollars).abs() < 1e-9);
}

#[test]
fn recorded_transcript_replays_the_whole_search() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("transcript.jsonl");
    let seeds = scenarios::demo_seed_pairs(2);
    let config = SearchConfig::default();
    let roster = demo_roster();

    let recorded = {
        let gateway = offline_gateway().with_recording(TranscriptRecorder::create(&transcript, "rec").unwrap());
        let templates = TemplateRegistry::builtin();
        let ling = Linguistics::new(&gateway, &templates, LinguisticsOptions::from_config(&config));
        let searcher = Searcher::new(&ling, &roster, &config, Clock::Fixed(0), "rec", Language::French);
        searcher.run_search(&seeds).unwrap()
    };

    // scenario-free gateway: every response must come from the transcript
    let replayed = {
        let gateway = Gateway::new(GatewaySettings::default()).with_replay(ReplayStore::load(&transcript).unwrap());
        let templates = TemplateRegistry::builtin();
        let ling = Linguistics::new(&gateway, &templates, LinguisticsOptions::from_config(&config));
        let searcher = Searcher::new(&ling, &roster, &config, Clock::Fixed(0), "rec", Language::French);
        searcher.run_search(&seeds).unwrap()
    };

    assert_eq!(recorded.0, replayed.0);
    assert_eq!(recorded.1, replayed.1);
}

#[test]
fn every_expanded_pair_walks_back_to_a_seed_in_depth_steps() {
    let gateway = offline_gateway();
    let templates = TemplateRegistry::builtin();
    let config = SearchConfig::default();
    let ling = Linguistics::new(&gateway, &templates, LinguisticsOptions::from_config(&config));
    let roster = demo_roster();
    let searcher = Searcher::new(&ling, &roster, &config, Clock::Fixed(0), "walk", Language::French);

    let seeds = scenarios::demo_seed_pairs(3);
    let mut by_id: BTreeMap<String, BilingualPair> = BTreeMap::new();
    for seed in &seeds {
        by_id.insert(seed.pair_id.clone(), seed.clone());
    }

    let mut frontier = seeds;
    for _ in 0..3 {
        let children = searcher.expand_frontier(&frontier).unwrap();
        frontier = children.iter().map(|c| c.pair.clone()).collect();
        for child in children {
            by_id.insert(child.pair.pair_id.clone(), child.pair);
        }
    }

    for pair in by_id.values() {
        pair.validate().unwrap();
        let mut steps = 0;
        let mut cursor = pair;
        while let Some(parent_id) = &cursor.parent_id {
            cursor = by_id.get(parent_id).expect("parent recorded");
            steps += 1;
            assert!(steps <= pair.depth, "cycle or overlong chain at {}", pair.pair_id);
        }
        assert_eq!(steps, pair.depth);
        assert_eq!(cursor.depth, 0);
    }
}

#[test]
fn analysis_consumes_search_output_directly() {
    let gateway = offline_gateway();
    let templates = TemplateRegistry::builtin();
    let config = SearchConfig::default();
    let ling = Linguistics::new(&gateway, &templates, LinguisticsOptions::from_config(&config));
    let roster = demo_roster();
    let searcher = Searcher::new(&ling, &roster, &config, Clock::Fixed(0), "ana", Language::French);

    let seeds = scenarios::demo_seed_pairs(2);
    let (candidates, stats) = searcher.run_search(&seeds).unwrap();

    let analyzer = glotprobe::analysis::Analyzer::new(&ling);
    let target = model("eval-target", names::SIM_FLIP, &[Role::Target]);
    let table = analyzer
        .evaluate_candidates(&candidates, std::slice::from_ref(&target), &roster.judge)
        .unwrap();
    // the flip simulator stays perfect in English and fails on every
    // planted target question
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].accuracy_en(), 1.0);
    assert_eq!(table.rows[0].drop(), 1.0);

    let report = glotprobe::analysis::cost_report(&gateway.ledger_snapshot(), std::slice::from_ref(&stats));
    let row = report.iter().find(|r| r.language == Language::French).unwrap();
    assert_eq!(row.candidates, candidates.len() as u64);
    assert!(row.dollars_per_candidate.unwrap() > 0.0);
}
