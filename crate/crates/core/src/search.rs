//! Simulation scoring and the beam search: inclusion-threshold admission,
//! adaptive depth extension, and per-seed redundancy control, plus the
//! translation-only and direct-rewrite baselines.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::clock::Clock;
use crate::gateway::{BatchRequest, ModelSpec, Role};
use crate::linguistics::{insert, Linguistics, LinguisticsError};
use crate::types::{
    BilingualPair, CandidateRecord, InvariantError, Language, LocalizedQuestion, PerturbationStep,
    SearchConfig, SearchRunStats, SimulationResult, Validate,
};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("model roster has no {role} model")]
    RoleMissing { role: Role },
    #[error("proxy model failed hard: {source}")]
    ProxyFailure {
        #[source]
        source: LinguisticsError,
    },
    #[error("pair {pair_id} left unscored: {reason}")]
    PairUnscored { pair_id: String, reason: String },
    #[error(transparent)]
    Linguistics(#[from] LinguisticsError),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
}

/// The simulation score: exponentiated English accuracy minus target
/// accuracy. High English accuracy is amplified, so only pairs that stay
/// solid in English can rank well.
pub fn score(english_mean: f64, target_mean: f64, exponent: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&english_mean), "english mean out of [0,1]");
    debug_assert!((0.0..=1.0).contains(&target_mean), "target mean out of [0,1]");
    debug_assert!(exponent > 1.0, "exponent must exceed 1");
    english_mean.powf(exponent) - target_mean
}

/// Fraction of attempted seeds that produced at least one candidate;
/// `None` when nothing was attempted.
pub fn conversion_rate(stats: &SearchRunStats) -> Option<f64> {
    if stats.seeds_attempted == 0 {
        None
    } else {
        Some(stats.seeds_converted as f64 / stats.seeds_attempted as f64)
    }
}

/// The models a search run needs, resolved by role.
#[derive(Debug, Clone)]
pub struct SearchRoster {
    pub proxy: ModelSpec,
    pub translator: ModelSpec,
    pub judge: ModelSpec,
    pub simulators: Vec<ModelSpec>,
}

impl SearchRoster {
    /// Picks the first model for each singular role and every simulator.
    pub fn from_models(models: &[ModelSpec]) -> Result<Self, SearchError> {
        let first = |role: Role| -> Result<ModelSpec, SearchError> {
            models
                .iter()
                .find(|m| m.has_role(role))
                .cloned()
                .ok_or(SearchError::RoleMissing { role })
        };
        let proxy = first(Role::Proxy)?;
        let translator = first(Role::Translator)?;
        let judge = first(Role::Judge)?;
        let simulators: Vec<ModelSpec> = models.iter().filter(|m| m.has_role(Role::Simulator)).cloned().collect();
        if simulators.is_empty() {
            return Err(SearchError::RoleMissing {
                role: Role::Simulator,
            });
        }
        Ok(Self {
            proxy,
            translator,
            judge,
            simulators,
        })
    }
}

/// A frontier pair expanded from its parent, remembering the parent's rank
/// for deterministic tie-breaking.
#[derive(Debug, Clone)]
pub struct ExpandedChild {
    pub pair: BilingualPair,
    pub parent_rank: usize,
}

/// A simulated child ready for ranking. `semantic_ok` is the re-verification
/// verdict for children at or above the inclusion threshold; it is never
/// consulted for the rest.
#[derive(Debug, Clone)]
pub struct ScoredChild {
    pub pair: BilingualPair,
    pub parent_rank: usize,
    pub simulation: SimulationResult,
    pub semantic_ok: bool,
}

/// Per-seed admission bookkeeping carried across levels of one run.
#[derive(Debug, Default)]
pub struct SeedState {
    admitted: BTreeMap<String, usize>,
    closed: BTreeSet<String>,
}

impl SeedState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_closed(&self, seed_id: &str) -> bool {
        self.closed.contains(seed_id)
    }

    pub fn admitted_count(&self, seed_id: &str) -> usize {
        self.admitted.get(seed_id).copied().unwrap_or(0)
    }

    pub fn converted_seeds(&self) -> usize {
        self.admitted.values().filter(|n| **n > 0).count()
    }

    fn admit(&mut self, seed_id: &str, cap: usize) {
        let count = self.admitted.entry(seed_id.to_string()).or_insert(0);
        *count += 1;
        if *count >= cap {
            self.closed.insert(seed_id.to_string());
        }
    }
}

/// Output of one ranking step.
#[derive(Debug)]
pub struct BeamOutcome {
    /// Survivors in rank order, at most the beam width.
    pub frontier: Vec<ExpandedChild>,
    /// Children admitted to the candidate list this level, in rank order.
    pub admitted: Vec<ScoredChild>,
    /// Whether this level's best score cleared the potential threshold.
    pub extend_depth: bool,
}

/// One beam-search ranking step over a level's simulated children:
/// admission above the inclusion threshold (capped per seed), discarding of
/// closed seeds' descendants, and width-w survivor selection. Pure given
/// its inputs.
pub fn beam_step(children: Vec<ScoredChild>, config: &SearchConfig, seeds: &mut SeedState) -> BeamOutcome {
    let mut ranked = children;
    ranked.sort_by(|a, b| {
        b.simulation
            .score
            .total_cmp(&a.simulation.score)
            .then_with(|| a.parent_rank.cmp(&b.parent_rank))
            .then_with(|| a.pair.pair_id.cmp(&b.pair.pair_id))
    });

    let mut max_score = f64::NEG_INFINITY;
    let mut admitted = Vec::new();
    let mut survivors = Vec::new();

    for child in ranked {
        max_score = max_score.max(child.simulation.score);
        if seeds.is_closed(&child.pair.seed_id) {
            continue;
        }
        if child.simulation.score >= config.inclusion_threshold {
            // admitted the moment it clears the bar; a failed semantic
            // re-check discards the child without counting toward the cap
            if child.semantic_ok {
                seeds.admit(&child.pair.seed_id, config.redundancy_cap);
                admitted.push(child);
            } else {
                log::warn!(
                    "dropping candidate {}: failed semantic re-verification",
                    child.pair.pair_id
                );
            }
            continue;
        }
        if survivors.len() < config.beam_width {
            survivors.push(ExpandedChild {
                parent_rank: child.parent_rank,
                pair: child.pair,
            });
        }
    }

    // a seed may have closed after some of its low scorers were kept
    survivors.retain(|c| !seeds.is_closed(&c.pair.seed_id));

    BeamOutcome {
        frontier: survivors,
        admitted,
        extend_depth: max_score >= config.potential_threshold,
    }
}

/// Drives the search for one language against one model roster.
pub struct Searcher<'a> {
    ling: &'a Linguistics<'a>,
    roster: &'a SearchRoster,
    config: &'a SearchConfig,
    clock: Clock,
    run_id: String,
    language: Language,
}

impl<'a> Searcher<'a> {
    pub fn new(
        ling: &'a Linguistics<'a>,
        roster: &'a SearchRoster,
        config: &'a SearchConfig,
        clock: Clock,
        run_id: impl Into<String>,
        language: Language,
    ) -> Self {
        Self {
            ling,
            roster,
            config,
            clock,
            run_id: run_id.into(),
            language,
        }
    }

    /// Scores one pair: every simulator answers both language versions, a
    /// judge extracts each answer, and the bits are averaged into the
    /// simulation score. Unextractable answers count as incorrect; a hard
    /// backend failure aborts the pair instead of mis-scoring it.
    pub fn simulate(&self, pair: &BilingualPair) -> Result<SimulationResult, SearchError> {
        let simulators = &self.roster.simulators;
        if simulators.is_empty() {
            return Err(SearchError::RoleMissing {
                role: Role::Simulator,
            });
        }
        if let Some(bad) = simulators.iter().find(|m| !m.has_role(Role::Simulator)) {
            return Err(SearchError::Precondition(format!(
                "model {} lacks the simulator role",
                bad.name
            )));
        }

        let unscored = |e: &dyn std::fmt::Display| SearchError::PairUnscored {
            pair_id: pair.pair_id.clone(),
            reason: e.to_string(),
        };

        let english_prompt = self.ling.answer_prompt(&pair.english)?;
        let target_prompt = self.ling.answer_prompt(&pair.target)?;
        let deterministic = self.ling.opts.deterministic_temperature;
        let max_tokens = self.ling.opts.max_output_tokens;

        // 2K answer calls, english block then target block
        let mut requests = Vec::with_capacity(simulators.len() * 2);
        for prompt in [&english_prompt, &target_prompt] {
            for model in simulators {
                requests.push(BatchRequest {
                    model: model.clone(),
                    prompt: prompt.clone(),
                    temperature: deterministic,
                    max_tokens,
                });
            }
        }
        let mut raw_answers = Vec::with_capacity(requests.len());
        for result in self.ling.gateway().complete_batch(&requests) {
            raw_answers.push(result.map_err(|e| unscored(&e))?.text);
        }

        let k = simulators.len();
        let mut english_correct = Vec::with_capacity(k);
        let mut target_correct = Vec::with_capacity(k);
        for (idx, raw) in raw_answers.iter().enumerate() {
            let question = if idx < k { &pair.english } else { &pair.target };
            let correct = match self.ling.extract_answer(&self.roster.judge, question, raw) {
                Ok(choice) => choice == question.answer_index,
                Err(LinguisticsError::Unextractable { .. })
                | Err(LinguisticsError::Unparseable { .. }) => false,
                Err(e) => return Err(unscored(&e)),
            };
            if idx < k {
                english_correct.push(correct);
            } else {
                target_correct.push(correct);
            }
        }

        let mean = |bits: &[bool]| bits.iter().filter(|b| **b).count() as f64 / bits.len() as f64;
        let english_mean = mean(&english_correct);
        let target_mean = mean(&target_correct);
        Ok(SimulationResult {
            pair_id: pair.pair_id.clone(),
            english_correct,
            target_correct,
            english_mean,
            target_mean,
            score: score(english_mean, target_mean, self.config.score_exponent),
        })
    }

    /// Expands every frontier pair by one perturbation round: a fragment per
    /// selected distractor, translated and appended on both sides. Children
    /// whose generation fails are dropped with a logged reason; a proxy
    /// hard-failure aborts the expansion.
    pub fn expand_frontier(&self, frontier: &[BilingualPair]) -> Result<Vec<ExpandedChild>, SearchError> {
        let max_depth = self.config.max_depth();
        if let Some(p) = frontier.iter().find(|p| p.depth >= max_depth) {
            return Err(SearchError::Precondition(format!(
                "pair {} already at depth {}",
                p.pair_id, p.depth
            )));
        }

        let mut children = Vec::new();
        for (parent_rank, parent) in frontier.iter().enumerate() {
            let distractors: Vec<usize> = parent.english.distractor_indices().collect();
            let limit = self.config.branching.limit(distractors.len());
            for &distractor_index in distractors.iter().take(limit) {
                match self.spawn_child(parent, parent_rank, distractor_index) {
                    Ok(child) => children.push(child),
                    Err(SearchError::Linguistics(LinguisticsError::Gateway(e))) => {
                        return Err(SearchError::ProxyFailure {
                            source: LinguisticsError::Gateway(e),
                        });
                    }
                    Err(e) => {
                        log::warn!(
                            "dropping child of {} (distractor {distractor_index}): {e}",
                            parent.pair_id
                        );
                    }
                }
            }
        }
        Ok(children)
    }

    fn spawn_child(
        &self,
        parent: &BilingualPair,
        parent_rank: usize,
        distractor_index: usize,
    ) -> Result<ExpandedChild, SearchError> {
        let english_fragment =
            self.ling
                .generate_perturbation(&self.roster.proxy, &parent.english, distractor_index)?;
        let target_fragment =
            self.ling
                .translate_fragment(&self.roster.translator, &english_fragment, self.language)?;

        let step = PerturbationStep {
            distractor_index,
            english_fragment,
            target_fragment,
            proxy_model: self.roster.proxy.name.clone(),
            created_at: self.clock.now_ms(),
        };
        let mut lineage = parent.lineage.clone();
        lineage.push(step.clone());
        let fragments: Vec<&str> = lineage.iter().map(|s| s.english_fragment.as_str()).collect();

        let pair = BilingualPair {
            pair_id: BilingualPair::compute_pair_id(&parent.seed_id, &fragments, self.language),
            seed_id: parent.seed_id.clone(),
            english: insert(&parent.english, &step.english_fragment),
            target: insert(&parent.target, &step.target_fragment),
            depth: parent.depth + 1,
            parent_id: Some(parent.pair_id.clone()),
            lineage,
        };
        pair.validate()?;
        Ok(ExpandedChild { pair, parent_rank })
    }

    /// The full beam search over seed pairs, batched into groups. Returns
    /// the admitted candidates and the run's conversion statistics.
    pub fn run_search(&self, seeds: &[BilingualPair]) -> Result<(Vec<CandidateRecord>, SearchRunStats), SearchError> {
        self.config.validate()?;
        let started_ms = self.clock.now_ms();
        let dollars_before = self.ling.gateway().total_dollars();

        let mut stats = SearchRunStats::empty(self.language);
        stats.seeds_attempted = seeds.len();

        let mut seed_state = SeedState::new();
        let mut candidates: Vec<CandidateRecord> = Vec::new();
        let mut pairs_scored = 0usize;
        let mut max_levels = 0usize;

        for group in seeds.chunks(self.config.batch_size.max(1)) {
            match self.search_group(group, &mut seed_state, &mut candidates, &mut pairs_scored) {
                Ok(levels) => max_levels = max_levels.max(levels),
                Err(SearchError::ProxyFailure { source }) => {
                    log::warn!("aborting group of {} seeds: proxy failure: {source}", group.len());
                }
                Err(e) => return Err(e),
            }
        }

        stats.seeds_converted = seed_state.converted_seeds();
        stats.candidates = candidates.len();
        stats.levels_explored = max_levels;
        stats.total_pairs_scored = pairs_scored;
        stats.wall_time = self.clock.elapsed_secs(started_ms);
        stats.dollars = self.ling.gateway().total_dollars() - dollars_before;
        self.ling
            .gateway()
            .attribute_language(self.language, stats.dollars, candidates.len() as u64);

        // the english tolerance is documented and reported, never enforced;
        // the score exponent is the enforcement mechanism
        let below_tolerance = candidates
            .iter()
            .filter(|c| c.simulation.english_mean < 1.0 - self.config.english_tolerance)
            .count();
        if below_tolerance > 0 {
            log::info!(
                "{below_tolerance} of {} candidates sit below the documented english accuracy tolerance ({})",
                candidates.len(),
                1.0 - self.config.english_tolerance
            );
        }
        Ok((candidates, stats))
    }

    fn search_group(
        &self,
        group: &[BilingualPair],
        seed_state: &mut SeedState,
        candidates: &mut Vec<CandidateRecord>,
        pairs_scored: &mut usize,
    ) -> Result<usize, SearchError> {
        let seed_questions: BTreeMap<&str, &LocalizedQuestion> = group
            .iter()
            .map(|p| (p.seed_id.as_str(), &p.english))
            .collect();

        let mut frontier: Vec<BilingualPair> = group.to_vec();
        let mut depth_budget = self.config.depth_initial;
        let mut levels = 0usize;

        while !frontier.is_empty() && levels < depth_budget {
            let children = self.expand_frontier(&frontier)?;
            levels += 1;

            let mut scored = Vec::with_capacity(children.len());
            for child in children {
                match self.simulate(&child.pair) {
                    Ok(simulation) => {
                        *pairs_scored += 1;
                        scored.push(ScoredChild {
                            pair: child.pair,
                            parent_rank: child.parent_rank,
                            simulation,
                            semantic_ok: false,
                        });
                    }
                    // infrastructure failure, not search signal: exclude from ranking
                    Err(e) => log::warn!("{e}"),
                }
            }

            for child in &mut scored {
                if child.simulation.score < self.config.inclusion_threshold
                    || seed_state.is_closed(&child.pair.seed_id)
                {
                    continue;
                }
                child.semantic_ok = self.verify_candidate(&seed_questions, &child.pair);
            }

            let outcome = beam_step(scored, self.config, seed_state);
            for admitted in outcome.admitted {
                candidates.push(CandidateRecord {
                    score: admitted.simulation.score,
                    run_id: self.run_id.clone(),
                    admitted_at_depth: admitted.pair.depth,
                    simulation: admitted.simulation,
                    pair: admitted.pair,
                });
            }
            if outcome.extend_depth {
                // extension is sticky: one strong level buys the full budget
                depth_budget = depth_budget.max(self.config.depth_extended);
            }
            frontier = outcome.frontier.into_iter().map(|c| c.pair).collect();
        }
        Ok(levels)
    }

    /// Both semantic constraints on a would-be candidate: perturbed English
    /// against the seed question, and perturbed target against perturbed
    /// English. Judge failures count as a failed check.
    fn verify_candidate(
        &self,
        seed_questions: &BTreeMap<&str, &LocalizedQuestion>,
        pair: &BilingualPair,
    ) -> bool {
        let english_ok = match seed_questions.get(pair.seed_id.as_str()) {
            Some(seed_english) => {
                match self.ling.semantic_check(&self.roster.judge, seed_english, &pair.english) {
                    Ok(ok) => ok,
                    Err(e) => {
                        log::warn!("semantic check failed for {}: {e}", pair.pair_id);
                        false
                    }
                }
            }
            None => false,
        };
        if !english_ok {
            return false;
        }
        match self
            .ling
            .semantic_check(&self.roster.judge, &pair.english, &pair.target)
        {
            Ok(ok) => ok,
            Err(e) => {
                log::warn!("semantic check failed for {}: {e}", pair.pair_id);
                false
            }
        }
    }

    /// Translation-only baseline: simulate the unperturbed seed pairs once.
    pub fn baseline_np(&self, seeds: &[BilingualPair]) -> Result<(Vec<CandidateRecord>, SearchRunStats), SearchError> {
        let started_ms = self.clock.now_ms();
        let dollars_before = self.ling.gateway().total_dollars();
        let mut stats = SearchRunStats::empty(self.language);
        stats.seeds_attempted = seeds.len();
        let mut candidates = Vec::new();

        for seed in seeds {
            match self.simulate(seed) {
                Ok(simulation) => {
                    stats.total_pairs_scored += 1;
                    if simulation.score >= self.config.inclusion_threshold {
                        stats.seeds_converted += 1;
                        candidates.push(CandidateRecord {
                            pair: seed.clone(),
                            score: simulation.score,
                            simulation,
                            run_id: self.run_id.clone(),
                            admitted_at_depth: 0,
                        });
                    }
                }
                Err(e) => log::warn!("{e}"),
            }
        }

        stats.candidates = candidates.len();
        stats.wall_time = self.clock.elapsed_secs(started_ms);
        stats.dollars = self.ling.gateway().total_dollars() - dollars_before;
        self.ling
            .gateway()
            .attribute_language(self.language, stats.dollars, candidates.len() as u64);
        Ok((candidates, stats))
    }

    /// Direct-perturbation baseline: one template rewrite per seed, then a
    /// single simulation. No iteration, no ranking.
    pub fn baseline_dp(&self, seeds: &[BilingualPair]) -> Result<(Vec<CandidateRecord>, SearchRunStats), SearchError> {
        let started_ms = self.clock.now_ms();
        let dollars_before = self.ling.gateway().total_dollars();
        let mut stats = SearchRunStats::empty(self.language);
        stats.seeds_attempted = seeds.len();
        let mut candidates = Vec::new();

        for seed in seeds {
            match self.dp_attempt(seed) {
                Ok(Some(record)) => {
                    stats.total_pairs_scored += 1;
                    stats.seeds_converted += 1;
                    candidates.push(record);
                }
                Ok(None) => stats.total_pairs_scored += 1,
                Err(e) => log::warn!("direct perturbation of {} failed: {e}", seed.seed_id),
            }
        }

        stats.candidates = candidates.len();
        stats.wall_time = self.clock.elapsed_secs(started_ms);
        stats.dollars = self.ling.gateway().total_dollars() - dollars_before;
        self.ling
            .gateway()
            .attribute_language(self.language, stats.dollars, candidates.len() as u64);
        Ok((candidates, stats))
    }

    fn dp_attempt(&self, seed: &BilingualPair) -> Result<Option<CandidateRecord>, SearchError> {
        let rewrite = self.ling.direct_perturbation(&self.roster.proxy, &seed.english)?;
        let english = LocalizedQuestion {
            language: Language::English,
            text: rewrite.clone(),
            choices: seed.english.choices.clone(),
            answer_index: seed.english.answer_index,
        };
        let target = self
            .ling
            .translate_question(&self.roster.translator, &english, self.language)?;
        if target.answer_index != english.answer_index {
            return Err(SearchError::Precondition(
                "translation moved the answer to a different choice slot".into(),
            ));
        }

        if !self.ling.semantic_check(&self.roster.judge, &seed.english, &english)?
            || !self.ling.semantic_check(&self.roster.judge, &english, &target)?
        {
            return Ok(None);
        }

        let pair = BilingualPair {
            pair_id: BilingualPair::compute_pair_id(&seed.seed_id, &[&rewrite], self.language),
            seed_id: seed.seed_id.clone(),
            english,
            target,
            depth: 0,
            parent_id: None,
            lineage: Vec::new(),
        };
        pair.validate()?;

        let simulation = self.simulate(&pair)?;
        if simulation.score >= self.config.inclusion_threshold {
            Ok(Some(CandidateRecord {
                score: simulation.score,
                run_id: self.run_id.clone(),
                admitted_at_depth: 0,
                simulation,
                pair,
            }))
        } else {
            Ok(None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, GatewaySettings};
    use crate::linguistics::{LinguisticsOptions, TemplateRegistry};
    use crate::scenarios::{self, names};
    use crate::types::Validate;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn model(name: &str, scenario: &str, roles: &[Role]) -> ModelSpec {
        ModelSpec {
            name: name.into(),
            roles: BTreeSet::from_iter(roles.iter().copied()),
            endpoint: format!("mock:{scenario}"),
            api_key_env: None,
            temperature: 0.001,
            max_tokens: 1024,
            prompt_price: 0.0,
            completion_price: 0.0,
        }
    }

    fn demo_roster(proxy_scenario: &str, simulator_scenarios: &[&str]) -> SearchRoster {
        SearchRoster {
            proxy: model("proxy", proxy_scenario, &[Role::Proxy]),
            translator: model("translator", names::TRANSLATOR, &[Role::Translator]),
            judge: model("judge", names::JUDGE, &[Role::Judge]),
            simulators: simulator_scenarios
                .iter()
                .enumerate()
                .map(|(i, s)| model(&format!("sim-{i}"), s, &[Role::Simulator]))
                .collect(),
        }
    }

    struct Fixture {
        gateway: Gateway,
        templates: TemplateRegistry,
        config: SearchConfig,
    }

    impl Fixture {
        fn new() -> Self {
            let gateway = Gateway::new(GatewaySettings::default());
            scenarios::register_demo_scenarios(&gateway).unwrap();
            Self {
                gateway,
                templates: TemplateRegistry::builtin(),
                config: SearchConfig::default(),
            }
        }

        fn ling(&self) -> Linguistics<'_> {
            Linguistics::new(
                &self.gateway,
                &self.templates,
                LinguisticsOptions::from_config(&self.config),
            )
        }
    }

    fn searcher<'a>(
        ling: &'a Linguistics<'a>,
        roster: &'a SearchRoster,
        config: &'a SearchConfig,
    ) -> Searcher<'a> {
        Searcher::new(ling, roster, config, Clock::Fixed(0), "test-run", Language::French)
    }

    fn sim(pair_id: &str, english: &[bool], target: &[bool], gamma: f64) -> SimulationResult {
        let mean = |bits: &[bool]| bits.iter().filter(|b| **b).count() as f64 / bits.len() as f64;
        SimulationResult {
            pair_id: pair_id.into(),
            english_correct: english.to_vec(),
            target_correct: target.to_vec(),
            english_mean: mean(english),
            target_mean: mean(target),
            score: score(mean(english), mean(target), gamma),
        }
    }

    fn scored_child(seed: usize, child: usize, v_english: &[bool], v_target: &[bool]) -> ScoredChild {
        let mut pair = scenarios::demo_seed_pairs(seed + 1).pop().unwrap();
        pair.pair_id = format!("pair-{seed}-{child}");
        pair.seed_id = format!("seed-{seed}");
        ScoredChild {
            simulation: sim(&format!("pair-{seed}-{child}"), v_english, v_target, 2.0),
            pair,
            parent_rank: child,
            semantic_ok: true,
        }
    }

    #[test]
    fn score_matches_hand_computed_values() {
        assert!((score(0.8, 0.4, 2.0) - 0.24).abs() < 1e-12);
        assert!((score(1.0, 0.2, 2.0) - 0.8).abs() < 1e-12);
        assert!((score(0.6, 0.6, 2.0) - (-0.24)).abs() < 1e-12);
        assert_eq!(score(0.0, 0.0, 2.0), 0.0);
        assert_eq!(score(1.0, 1.0, 3.0), 0.0);
    }

    #[test]
    fn conversion_rate_handles_all_regimes() {
        let mut stats = SearchRunStats::empty(Language::Chinese);
        assert_eq!(conversion_rate(&stats), None);
        stats.seeds_attempted = 100;
        stats.seeds_converted = 43;
        stats.candidates = 43;
        assert!((conversion_rate(&stats).unwrap() - 0.43).abs() < 1e-12);
        stats.seeds_converted = 0;
        assert_eq!(conversion_rate(&stats).unwrap(), 0.0);
        stats.seeds_attempted = 7;
        stats.seeds_converted = 7;
        assert_eq!(conversion_rate(&stats).unwrap(), 1.0);
    }

    #[test]
    fn simulate_scores_the_maximal_gap_case() {
        let fx = Fixture::new();
        let ling = fx.ling();
        // all five simulators flip on the planted marker
        let roster = demo_roster(names::PROXY, &[names::SIM_FLIP; 5]);
        let s = searcher(&ling, &roster, &fx.config);

        let seed = &scenarios::demo_seed_pairs(1)[0];
        // plant the marker on the target side by hand
        let mut pair = seed.clone();
        pair.target.text = format!("{} {}", pair.target.text, scenarios::PLANT_MARKER);
        let result = s.simulate(&pair).unwrap();
        assert_eq!(result.english_mean, 1.0);
        assert_eq!(result.target_mean, 0.0);
        assert_eq!(result.score, 1.0);
        result.validate().unwrap();
    }

    #[test]
    fn simulate_scores_the_identity_case_as_zero() {
        let fx = Fixture::new();
        let ling = fx.ling();
        let roster = demo_roster(names::PROXY, &[names::SIM_FLIP; 5]);
        let s = searcher(&ling, &roster, &fx.config);
        let seed = &scenarios::demo_seed_pairs(1)[0];
        let result = s.simulate(seed).unwrap();
        assert_eq!(result.english_mean, 1.0);
        assert_eq!(result.target_mean, 1.0);
        assert_eq!(result.score, 0.0);
    }

    #[test]
    fn simulate_mixed_roster_reproduces_the_hand_evaluated_score() {
        // 4/5 correct in English would need an English-side failure; the
        // scripted flip only fires on target text, so build the 0.8/0.4 case
        // directly from per-model scenarios: one English-blind model and
        // three target-blind models.
        let fx = Fixture::new();
        fx.gateway
            .register_mock(
                "sim-english-wrong",
                crate::gateway::MockScript::new().fallback(|p| {
                    // wrong on english (untagged), right on target (tagged)
                    let tagged = p.contains(scenarios::TARGET_TAG);
                    scripted_answer(p, !tagged)
                }),
            )
            .unwrap();
        fx.gateway
            .register_mock(
                "sim-target-wrong",
                crate::gateway::MockScript::new().fallback(|p| {
                    let tagged = p.contains(scenarios::TARGET_TAG);
                    scripted_answer(p, tagged)
                }),
            )
            .unwrap();

        fn scripted_answer(prompt: &str, flip: bool) -> crate::gateway::ScriptOutcome {
            let choices = prompt
                .lines()
                .find_map(|l| serde_json::from_str::<Vec<String>>(l.trim()).ok())
                .unwrap();
            let picked = if flip {
                choices.iter().find(|c| !c.contains(scenarios::CORRECT_TOKEN))
            } else {
                choices.iter().find(|c| c.contains(scenarios::CORRECT_TOKEN))
            };
            crate::gateway::MockReply::text(picked.unwrap().clone()).into()
        }

        let ling = fx.ling();
        let roster = demo_roster(
            names::PROXY,
            &[
                names::SIM_STEADY,   // right / right
                "sim-english-wrong", // wrong / right
                "sim-target-wrong",  // right / wrong
                "sim-target-wrong",  // right / wrong
                "sim-target-wrong",  // right / wrong
            ],
        );
        let s = searcher(&ling, &roster, &fx.config);
        let seed = &scenarios::demo_seed_pairs(1)[0];
        let result = s.simulate(seed).unwrap();
        assert!((result.english_mean - 0.8).abs() < 1e-12);
        assert!((result.target_mean - 0.4).abs() < 1e-12);
        assert!((result.score - 0.24).abs() < 1e-12);
    }

    #[test]
    fn expand_spawns_one_child_per_distractor() {
        let fx = Fixture::new();
        let ling = fx.ling();
        let roster = demo_roster(names::PROXY, &[names::SIM_FLIP; 5]);
        let s = searcher(&ling, &roster, &fx.config);
        let seeds = scenarios::demo_seed_pairs(1);
        let children = s.expand_frontier(&seeds).unwrap();
        assert_eq!(children.len(), 3); // 4 choices, 3 distractors
        for child in &children {
            assert_eq!(child.pair.depth, 1);
            assert_eq!(child.pair.parent_id.as_deref(), Some(seeds[0].pair_id.as_str()));
            assert_eq!(child.pair.lineage.len(), 1);
            child.pair.validate().unwrap();
            // fragment translated and appended on the target side
            assert!(child.pair.target.text.contains(scenarios::TARGET_TAG));
        }
        // default W=4 seeds x 3 distractors stays within the default beam width
        let four = scenarios::demo_seed_pairs(4);
        let children = s.expand_frontier(&four).unwrap();
        assert!(children.len() <= 12);
        assert_eq!(children.len(), 12);
    }

    #[test]
    fn expand_rejects_frontier_at_max_depth() {
        let fx = Fixture::new();
        let ling = fx.ling();
        let roster = demo_roster(names::PROXY, &[names::SIM_FLIP; 5]);
        let s = searcher(&ling, &roster, &fx.config);
        let mut pair = scenarios::demo_seed_pairs(1).pop().unwrap();
        pair.depth = fx.config.max_depth();
        // fake lineage to keep the record self-consistent
        for i in 0..pair.depth {
            pair.lineage.push(PerturbationStep {
                distractor_index: 1,
                english_fragment: format!("frag {i}"),
                target_fragment: format!("frag-t {i}"),
                proxy_model: "proxy".into(),
                created_at: 0,
            });
        }
        pair.parent_id = Some("someone".into());
        let err = s.expand_frontier(&[pair]).unwrap_err();
        assert!(matches!(err, SearchError::Precondition(_)));
    }

    #[test]
    fn beam_step_admits_caps_and_closes_seeds() {
        // five children of one seed, all at the maximal score, cap 3
        let config = SearchConfig::default();
        let mut seeds = SeedState::new();
        let children: Vec<ScoredChild> = (0..5)
            .map(|i| scored_child(0, i, &[true; 5], &[false; 5]))
            .collect();
        let outcome = beam_step(children, &config, &mut seeds);
        assert_eq!(outcome.admitted.len(), 3);
        assert!(outcome.frontier.is_empty());
        assert!(seeds.is_closed("seed-0"));
        assert!(outcome.extend_depth);

        // descendants of a closed seed are discarded wholesale
        let more: Vec<ScoredChild> = (0..3)
            .map(|i| scored_child(0, i, &[true; 5], &[true, true, false, false, false]))
            .collect();
        let outcome = beam_step(more, &config, &mut seeds);
        assert!(outcome.admitted.is_empty());
        assert!(outcome.frontier.is_empty());
    }

    #[test]
    fn beam_step_depth_decision_follows_the_potential_threshold() {
        let config = SearchConfig::default(); // theta_pot = 0.6
        let mut seeds = SeedState::new();
        // V = 1 - 0.3 = 0.7 >= 0.6: extend
        let strong = vec![scored_child(0, 0, &[true; 10], &[true, true, true, false, false, false, false, false, false, false])];
        assert!(beam_step(strong, &config, &mut seeds).extend_depth);
        // V = 1 - 0.5 = 0.5 < 0.6: keep the initial budget
        let weak = vec![scored_child(1, 0, &[true; 10], &[true, true, true, true, true, false, false, false, false, false])];
        assert!(!beam_step(weak, &config, &mut seeds).extend_depth);
    }

    #[test]
    fn beam_step_ranking_is_deterministic_under_ties() {
        let config = SearchConfig {
            beam_width: 2,
            ..SearchConfig::default()
        };
        let mut seeds = SeedState::new();
        // three equal sub-threshold scores; survivors picked by parent rank then id
        let mut children: Vec<ScoredChild> = (0..3)
            .map(|i| scored_child(i, 0, &[true, false, false, false, false], &[false; 5]))
            .collect();
        children[0].parent_rank = 2;
        children[1].parent_rank = 0;
        children[2].parent_rank = 1;
        let outcome = beam_step(children, &config, &mut seeds);
        assert_eq!(outcome.frontier.len(), 2);
        assert_eq!(outcome.frontier[0].pair.seed_id, "seed-1");
        assert_eq!(outcome.frontier[1].pair.seed_id, "seed-2");
    }

    #[test]
    fn failed_semantic_verification_discards_without_counting() {
        let config = SearchConfig::default();
        let mut seeds = SeedState::new();
        let mut children: Vec<ScoredChild> = (0..2)
            .map(|i| scored_child(0, i, &[true; 5], &[false; 5]))
            .collect();
        children[0].semantic_ok = false;
        let outcome = beam_step(children, &config, &mut seeds);
        assert_eq!(outcome.admitted.len(), 1);
        assert_eq!(seeds.admitted_count("seed-0"), 1);
        assert!(!seeds.is_closed("seed-0"));
    }

    #[test]
    fn run_search_finds_planted_weaknesses_for_every_seed() {
        let fx = Fixture::new();
        let ling = fx.ling();
        let roster = demo_roster(names::PROXY, &[names::SIM_FLIP; 5]);
        let s = searcher(&ling, &roster, &fx.config);
        let seeds = scenarios::demo_seed_pairs(4);
        let (candidates, stats) = s.run_search(&seeds).unwrap();

        assert_eq!(stats.seeds_attempted, 4);
        assert_eq!(stats.seeds_converted, 4);
        assert!(stats.candidates >= 4);
        stats.validate().unwrap();

        let mut seeds_seen: BTreeSet<&str> = BTreeSet::new();
        for c in &candidates {
            c.validate().unwrap();
            assert!(c.score >= fx.config.inclusion_threshold);
            assert_eq!(c.simulation.english_mean, 1.0);
            assert!(c.simulation.target_mean <= 0.2);
            assert!(c.pair.depth <= 2);
            assert_eq!(c.pair.english.answer_index, c.pair.target.answer_index);
            seeds_seen.insert(c.pair.seed_id.as_str());
        }
        assert_eq!(seeds_seen.len(), 4);
        // redundancy cap bounds per-seed admissions
        for seed in &seeds {
            let n = candidates.iter().filter(|c| c.pair.seed_id == seed.seed_id).count();
            assert!(n <= fx.config.redundancy_cap);
        }
    }

    #[test]
    fn run_search_without_discoverable_weakness_explores_initial_depth() {
        let fx = Fixture::new();
        let ling = fx.ling();
        let roster = demo_roster(names::PROXY_BENIGN, &[names::SIM_FLIP; 5]);
        let s = searcher(&ling, &roster, &fx.config);
        let seeds = scenarios::demo_seed_pairs(2);
        let (candidates, stats) = s.run_search(&seeds).unwrap();
        assert!(candidates.is_empty());
        assert_eq!(stats.seeds_converted, 0);
        assert_eq!(stats.levels_explored, fx.config.depth_initial);
    }

    #[test]
    fn run_search_on_empty_seed_list_is_zeroed() {
        let fx = Fixture::new();
        let ling = fx.ling();
        let roster = demo_roster(names::PROXY, &[names::SIM_FLIP; 5]);
        let s = searcher(&ling, &roster, &fx.config);
        let (candidates, stats) = s.run_search(&[]).unwrap();
        assert!(candidates.is_empty());
        assert_eq!(stats.seeds_attempted, 0);
        assert_eq!(stats.levels_explored, 0);
        assert_eq!(conversion_rate(&stats), None);
    }

    #[test]
    fn redundancy_cap_scenario_admits_exactly_three() {
        // one seed, five distractors, every child planted
        let fx = Fixture::new();
        let ling = fx.ling();
        let roster = demo_roster(names::PROXY_PLANT_ALL, &[names::SIM_FLIP; 5]);
        let s = searcher(&ling, &roster, &fx.config);
        let seed = scenarios::demo_seed_pair_with_choices(0, 6);
        let (candidates, stats) = s.run_search(std::slice::from_ref(&seed)).unwrap();
        assert_eq!(candidates.len(), 3);
        assert_eq!(stats.seeds_converted, 1);
        // the seed closed at the first level; nothing survived to expand
        assert_eq!(stats.levels_explored, 1);
    }

    #[test]
    fn baselines_order_below_search_on_the_planted_harness() {
        let fx = Fixture::new();
        let ling = fx.ling();
        let roster = demo_roster(names::PROXY, &[names::SIM_FLIP; 5]);
        let s = searcher(&ling, &roster, &fx.config);
        let seeds = scenarios::demo_seed_pairs(4);

        let (_, np_stats) = s.baseline_np(&seeds).unwrap();
        let (dp_candidates, dp_stats) = s.baseline_dp(&seeds).unwrap();
        let (_, search_stats) = s.run_search(&seeds).unwrap();

        let np = conversion_rate(&np_stats).unwrap();
        let dp = conversion_rate(&dp_stats).unwrap();
        let search = conversion_rate(&search_stats).unwrap();
        assert_eq!(np, 0.0);
        assert!(np < dp, "np={np} dp={dp}");
        assert!(dp < search, "dp={dp} search={search}");
        for c in &dp_candidates {
            c.validate().unwrap();
        }
    }

    #[test]
    fn roster_resolution_names_the_missing_role() {
        let models = vec![model("p", names::PROXY, &[Role::Proxy])];
        match SearchRoster::from_models(&models) {
            Err(SearchError::RoleMissing { role }) => assert_eq!(role, Role::Translator),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn score_bounds_and_monotonicity(
            be in 0.0f64..=1.0,
            bt in 0.0f64..=1.0,
            gamma in prop::sample::select(vec![1.5f64, 2.0, 3.0]),
            delta in 0.001f64..=0.5,
        ) {
            let v = score(be, bt, gamma);
            prop_assert!((-1.0..=1.0).contains(&v));
            // non-decreasing in english accuracy
            let be_up = (be + delta).min(1.0);
            prop_assert!(score(be_up, bt, gamma) >= v - 1e-12);
            // strictly decreasing in target accuracy
            let bt_up = (bt + delta).min(1.0);
            if bt_up > bt {
                prop_assert!(score(be, bt_up, gamma) < v);
            }
            // the exponent pulls imperfect english accuracy down
            if be < 1.0 && be > 0.0 {
                prop_assert!(be.powf(gamma) < be);
            }
        }

        #[test]
        fn beam_step_respects_width_and_cap(
            n_children in 1usize..40,
            width in 1usize..6,
        ) {
            let config = SearchConfig {
                beam_width: width,
                ..SearchConfig::default()
            };
            let mut seeds = SeedState::new();
            let children: Vec<ScoredChild> = (0..n_children)
                .map(|i| {
                    // alternate scores below the inclusion bar
                    let target = if i % 2 == 0 { [true, true, false, false, false] } else { [true, true, true, false, false] };
                    scored_child(i % 3, i, &[true, true, true, true, false], &target)
                })
                .collect();
            let outcome = beam_step(children, &config, &mut seeds);
            prop_assert!(outcome.frontier.len() <= width);
            for seed in ["seed-0", "seed-1", "seed-2"] {
                prop_assert!(seeds.admitted_count(seed) <= config.redundancy_cap);
            }
        }
    }
}
