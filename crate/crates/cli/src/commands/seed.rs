//! `glotprobe seed`: sample English questions equally across their source
//! datasets, translate each into the target language, verify semantics, and
//! write the surviving depth-0 bilingual pairs.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use glotprobe::gateway::Role;
use glotprobe::linguistics::{Linguistics, LinguisticsOptions};
use glotprobe::persist::{load_records, save_records_tagged};
use glotprobe::types::{BilingualPair, Language, LocalizedQuestion, QuestionRecord, SourceDataset};

use crate::support::{derive_run_id, file_bytes, path_string, CliError, Mode, RunContext};

#[derive(Debug, Args)]
pub struct SeedArgs {
    /// Question records, one JSON object per line
    #[arg(long)]
    pub source: PathBuf,
    /// Target language code (e.g. zh, fr)
    #[arg(long)]
    pub language: Language,
    /// How many questions to sample, split equally across datasets
    #[arg(long, short = 'n')]
    pub count: usize,
    /// Run config with the model roster
    #[arg(long)]
    pub config: PathBuf,
    /// Output pair file
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "offline")]
    pub mode: Mode,
    /// RNG seed for sampling
    #[arg(long, default_value_t = 0)]
    pub sample_seed: u64,
}

pub fn run(args: &SeedArgs) -> Result<(), CliError> {
    let config_bytes = file_bytes(&args.config)?;
    let source_bytes = file_bytes(&args.source)?;
    let run_id = derive_run_id(&[
        ("command", b"seed"),
        ("config", &config_bytes),
        ("source", &source_bytes),
        ("language", args.language.code().as_bytes()),
        ("count", args.count.to_string().as_bytes()),
        ("sample_seed", args.sample_seed.to_string().as_bytes()),
    ]);
    let ctx = RunContext::build(&args.config, args.mode, None, None, run_id.clone())?;
    let started = ctx.clock.now_ms();

    let records: Vec<QuestionRecord> = load_records(&args.source)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.sample_seed);
    let sampled = equal_sample(records, args.count, &mut rng)?;

    let translator = ctx.config.require_role(Role::Translator)?.clone();
    let judge = ctx.config.require_role(Role::Judge)?.clone();
    let ling = Linguistics::new(
        &ctx.gateway,
        &ctx.templates,
        LinguisticsOptions::from_config(&ctx.config.search),
    );

    let mut pairs = Vec::new();
    let mut drops: Vec<(String, String)> = Vec::new();
    for record in &sampled {
        let english = LocalizedQuestion {
            language: Language::English,
            text: record.text.clone(),
            choices: record.choices.clone(),
            answer_index: record.answer_index,
        };
        match seed_one(&ling, &translator, &judge, &english, args.language) {
            Ok(target) => pairs.push(BilingualPair::seed(record.id.clone(), english, target)),
            Err(reason) => drops.push((record.id.clone(), reason)),
        }
    }

    save_records_tagged(&args.out, &pairs, &run_id)?;
    ctx.assert_offline_clean()?;

    let attempted = sampled.len();
    let drop_pct = if attempted > 0 {
        drops.len() as f64 * 100.0 / attempted as f64
    } else {
        0.0
    };
    println!(
        "seed: wrote {} pairs to {} ({} of {} dropped, {:.1}%)",
        pairs.len(),
        args.out.display(),
        drops.len(),
        attempted,
        drop_pct
    );
    for (id, reason) in &drops {
        log::warn!("dropped seed {id}: {reason}");
    }

    let manifest = ctx.manifest(
        "seed",
        vec![path_string(&args.source), path_string(&args.config)],
        vec![path_string(&args.out)],
        started,
    );
    manifest.save(&args.out.with_extension("manifest.json"))?;
    Ok(())
}

fn seed_one(
    ling: &Linguistics<'_>,
    translator: &glotprobe::gateway::ModelSpec,
    judge: &glotprobe::gateway::ModelSpec,
    english: &LocalizedQuestion,
    language: Language,
) -> Result<LocalizedQuestion, String> {
    let target = ling
        .translate_question(translator, english, language)
        .map_err(|e| e.to_string())?;
    if target.answer_index != english.answer_index {
        return Err("translation moved the answer to a different choice slot".into());
    }
    match ling.semantic_check(judge, english, &target) {
        Ok(true) => Ok(target),
        Ok(false) => Err("semantic check rejected the translation".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// Splits the request equally across the datasets present in the source;
/// any remainder goes to the earliest datasets in declaration order.
fn equal_sample(
    records: Vec<QuestionRecord>,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<QuestionRecord>, CliError> {
    let total = records.len();
    let mut by_dataset: BTreeMap<SourceDataset, Vec<QuestionRecord>> = BTreeMap::new();
    for record in records {
        by_dataset.entry(record.source_dataset).or_default().push(record);
    }
    if by_dataset.is_empty() {
        return Err(CliError::Config("source contains no questions".into()));
    }
    if count > total {
        return Err(CliError::Config(format!(
            "requested {count} questions but the source has only {total}"
        )));
    }

    let n_datasets = by_dataset.len();
    let base = count / n_datasets;
    let remainder = count % n_datasets;

    let mut sampled = Vec::with_capacity(count);
    for (i, (dataset, mut group)) in by_dataset.into_iter().enumerate() {
        let quota = base + usize::from(i < remainder);
        if quota > group.len() {
            return Err(CliError::Config(format!(
                "equal split needs {quota} questions from {dataset:?} but only {} are available",
                group.len()
            )));
        }
        group.sort_by(|a, b| a.id.cmp(&b.id));
        let mut picked: Vec<QuestionRecord> = group.choose_multiple(rng, quota).cloned().collect();
        picked.sort_by(|a, b| a.id.cmp(&b.id));
        sampled.extend(picked);
    }
    Ok(sampled)
}
