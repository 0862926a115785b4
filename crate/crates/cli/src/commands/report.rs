//! Analysis subcommands: evaluate, expand, affinity, categorize, cost,
//! distances, and export. Every emitted table and record file carries its
//! run_id, and candidate inputs from different runs require `--merge`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;

use glotprobe::analysis::{
    compute_affinity, cosine_distance_matrix, cost_report, cost_report_tsv, export_finetune,
    Analyzer, EmbeddingRecord, FinetuneFormat,
};
use glotprobe::gateway::Role;
use glotprobe::linguistics::{materialize_answer_template, Linguistics, LinguisticsOptions, TemplateId};
use glotprobe::persist::{load_records, save_records_tagged};
use glotprobe::types::{BilingualPair, CandidateRecord, CostLedger, Language, SearchRunStats};

use crate::support::{
    check_single_run, derive_run_id, file_bytes, parse_languages, path_string, read_accuracy_matrix,
    CliError, Mode, RunContext,
};

fn load_candidates(path: &Path, merge: bool) -> Result<Vec<CandidateRecord>, CliError> {
    let candidates: Vec<CandidateRecord> = load_records(path)?;
    check_single_run(&candidates, merge)?;
    Ok(candidates)
}

/// Materializes answering templates for every language the candidates use.
fn ensure_answer_templates(
    ctx: &mut RunContext,
    languages: impl IntoIterator<Item = Language>,
) -> Result<(), CliError> {
    let needed: Vec<Language> = languages
        .into_iter()
        .filter(|l| !ctx.templates.contains(TemplateId::AnswerZeroShot, *l))
        .collect();
    if needed.is_empty() {
        return Ok(());
    }
    let translator = ctx.config.require_role(Role::Translator)?.clone();
    for language in needed {
        materialize_answer_template(
            &mut ctx.templates,
            &ctx.gateway,
            &translator,
            language,
            ctx.config.search.deterministic_temperature,
            ctx.config.search.max_output_tokens,
        )?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "offline")]
    pub mode: Mode,
    /// Allow candidates from multiple runs
    #[arg(long)]
    pub merge: bool,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let run_id = derive_run_id(&[
        ("command", b"evaluate"),
        ("config", &file_bytes(&args.config)?),
        ("candidates", &file_bytes(&args.candidates)?),
    ]);
    let mut ctx = RunContext::build(&args.config, args.mode, None, None, run_id.clone())?;
    let started = ctx.clock.now_ms();

    let candidates = load_candidates(&args.candidates, args.merge)?;
    ensure_answer_templates(&mut ctx, candidates.iter().map(|c| c.pair.target.language))?;

    let targets: Vec<_> = ctx
        .config
        .models_with_role(Role::Target)
        .into_iter()
        .cloned()
        .collect();
    if targets.is_empty() {
        return Err(CliError::Config("no model carries the target role".into()));
    }
    let judge = ctx.config.require_role(Role::Judge)?.clone();

    let ling = Linguistics::new(
        &ctx.gateway,
        &ctx.templates,
        LinguisticsOptions::from_config(&ctx.config.search),
    );
    let table = Analyzer::new(&ling).evaluate_candidates(&candidates, &targets, &judge)?;

    let mut body = table.to_tsv();
    if candidates.is_empty() {
        body.push_str("# no data: empty candidate list\n");
    }
    for skip in &table.skipped {
        body.push_str(&format!(
            "# skipped: model={} pair={} reason={}\n",
            skip.model, skip.pair_id, skip.reason
        ));
    }
    crate::support::write_table(&args.out, &run_id, &body)?;
    ctx.assert_offline_clean()?;
    println!(
        "evaluate: {} rows over {} candidates ({} skipped question-model cells) -> {}",
        table.rows.len(),
        candidates.len(),
        table.skipped.len(),
        args.out.display()
    );
    ctx.manifest(
        "evaluate",
        vec![path_string(&args.candidates), path_string(&args.config)],
        vec![path_string(&args.out)],
        started,
    )
    .save(&args.out.with_extension("manifest.json"))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    /// Candidate records to expand (their pairs are used)
    #[arg(long, conflicts_with = "pairs", required_unless_present = "pairs")]
    pub candidates: Option<PathBuf>,
    /// Bare pair records to expand
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Comma-separated target language codes
    #[arg(long)]
    pub languages: String,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "offline")]
    pub mode: Mode,
    #[arg(long)]
    pub merge: bool,
}

pub fn expand(args: &ExpandArgs) -> Result<(), CliError> {
    let input = args
        .candidates
        .as_ref()
        .or(args.pairs.as_ref())
        .expect("clap enforces one input");
    let run_id = derive_run_id(&[
        ("command", b"expand"),
        ("config", &file_bytes(&args.config)?),
        ("input", &file_bytes(input)?),
        ("languages", args.languages.as_bytes()),
    ]);
    let ctx = RunContext::build(&args.config, args.mode, None, None, run_id.clone())?;
    let started = ctx.clock.now_ms();

    let pairs: Vec<BilingualPair> = match (&args.candidates, &args.pairs) {
        (Some(path), _) => load_candidates(path, args.merge)?
            .into_iter()
            .map(|c| c.pair)
            .collect(),
        (None, Some(path)) => load_records(path)?,
        (None, None) => unreachable!(),
    };
    let languages = parse_languages(&args.languages)?;

    // distinct translator backends for base questions and fragments when
    // the roster provides two; otherwise one does both jobs
    let translators = ctx.config.models_with_role(Role::Translator);
    let question_translator = translators
        .first()
        .copied()
        .cloned()
        .ok_or_else(|| CliError::Config("no model carries the translator role".into()))?;
    let fragment_translator = translators.get(1).copied().cloned().unwrap_or_else(|| question_translator.clone());

    let ling = Linguistics::new(
        &ctx.gateway,
        &ctx.templates,
        LinguisticsOptions::from_config(&ctx.config.search),
    );
    let (expanded, skips) = Analyzer::new(&ling).expand_candidates(
        &pairs,
        &languages,
        &question_translator,
        &fragment_translator,
    )?;

    save_records_tagged(&args.out, &expanded, &run_id)?;
    let mut outputs = vec![path_string(&args.out)];
    if !skips.is_empty() {
        let skips_path = args.out.with_extension("skips.jsonl");
        save_records_tagged(&skips_path, &skips, &run_id)?;
        outputs.push(path_string(&skips_path));
    }
    ctx.assert_offline_clean()?;
    println!(
        "expand: {} pairs from {} x {} languages ({} skipped, itemized)",
        expanded.len(),
        pairs.len(),
        languages.len(),
        skips.len()
    );
    ctx.manifest(
        "expand",
        vec![path_string(input), path_string(&args.config)],
        outputs,
        started,
    )
    .save(&args.out.with_extension("manifest.json"))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct AffinityArgs {
    /// Accuracy matrix TSV: header row of seed languages, one row per
    /// evaluation language
    #[arg(long)]
    pub matrix: PathBuf,
    /// Negative damping constant
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub constant: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn affinity(args: &AffinityArgs) -> Result<(), CliError> {
    let run_id = derive_run_id(&[
        ("command", b"affinity"),
        ("matrix", &file_bytes(&args.matrix)?),
        ("constant", args.constant.to_string().as_bytes()),
    ]);
    let (languages, accuracy) = read_accuracy_matrix(&args.matrix)?;
    let matrix = compute_affinity(languages, accuracy, args.constant)?;
    crate::support::write_table(&args.out, &run_id, &matrix.to_tsv())?;
    println!(
        "affinity: {} languages -> {}{}",
        matrix.languages.len(),
        args.out.display(),
        if matrix.undefined_rows().is_empty() {
            String::new()
        } else {
            format!(" ({} undefined rows)", matrix.undefined_rows().len())
        }
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct CategorizeArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "offline")]
    pub mode: Mode,
    #[arg(long)]
    pub merge: bool,
}

pub fn categorize(args: &CategorizeArgs) -> Result<(), CliError> {
    let run_id = derive_run_id(&[
        ("command", b"categorize"),
        ("config", &file_bytes(&args.config)?),
        ("candidates", &file_bytes(&args.candidates)?),
    ]);
    let ctx = RunContext::build(&args.config, args.mode, None, None, run_id.clone())?;
    let started = ctx.clock.now_ms();

    let candidates = load_candidates(&args.candidates, args.merge)?;
    let judge = ctx.config.require_role(Role::Judge)?.clone();
    let ling = Linguistics::new(
        &ctx.gateway,
        &ctx.templates,
        LinguisticsOptions::from_config(&ctx.config.search),
    );
    let distribution = Analyzer::new(&ling).categorize_candidates(&candidates, &judge)?;

    let mut body = distribution.to_tsv();
    if candidates.is_empty() {
        body.push_str("# no data: empty candidate list\n");
    }
    crate::support::write_table(&args.out, &run_id, &body)?;
    ctx.assert_offline_clean()?;
    println!(
        "categorize: {} candidates over {} languages -> {}",
        candidates.len(),
        distribution.counts.len(),
        args.out.display()
    );
    ctx.manifest(
        "categorize",
        vec![path_string(&args.candidates), path_string(&args.config)],
        vec![path_string(&args.out)],
        started,
    )
    .save(&args.out.with_extension("manifest.json"))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Ledger file written by `search`
    #[arg(long)]
    pub ledger: PathBuf,
    /// Stats files written by `search`; repeatable
    #[arg(long, required = true)]
    pub stats: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cost(args: &CostArgs) -> Result<(), CliError> {
    let mut id_parts: Vec<(&str, Vec<u8>)> = vec![
        ("command", b"cost".to_vec()),
        ("ledger", file_bytes(&args.ledger)?),
    ];
    for path in &args.stats {
        id_parts.push(("stats", file_bytes(path)?));
    }
    let borrowed: Vec<(&str, &[u8])> = id_parts.iter().map(|(l, b)| (*l, b.as_slice())).collect();
    let run_id = derive_run_id(&borrowed);

    let ledgers: Vec<CostLedger> = load_records(&args.ledger)?;
    let ledger = merge_ledgers(ledgers)
        .ok_or_else(|| CliError::Invariant(format!("{}: no ledger records", args.ledger.display())))?;
    let mut stats: Vec<SearchRunStats> = Vec::new();
    for path in &args.stats {
        stats.extend(load_records::<SearchRunStats, _>(path)?);
    }

    let rows = cost_report(&ledger, &stats);
    crate::support::write_table(&args.out, &run_id, &cost_report_tsv(&rows))?;
    println!("cost: {} language rows -> {}", rows.len(), args.out.display());
    Ok(())
}

/// Several runs may each dump a ledger; attribution and counts add up.
fn merge_ledgers(ledgers: Vec<CostLedger>) -> Option<CostLedger> {
    let mut iter = ledgers.into_iter();
    let mut merged = iter.next()?;
    for ledger in iter {
        for (model, usage) in ledger.usage {
            merged.record_usage(&model, usage.prompt_tokens, usage.completion_tokens, usage.approximate);
        }
        for (model, price) in ledger.price_table {
            merged.set_price(model, price.prompt_per_1k, price.completion_per_1k);
        }
        for (language, spend) in ledger.per_language {
            merged.attribute_language(language, spend.dollars, spend.candidates);
        }
    }
    Some(merged)
}

#[derive(Debug, Args)]
pub struct DistancesArgs {
    /// Embedding records: one {"id", "vector"} object per line
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn distances(args: &DistancesArgs) -> Result<(), CliError> {
    let run_id = derive_run_id(&[
        ("command", b"distances"),
        ("embeddings", &file_bytes(&args.embeddings)?),
    ]);
    let records: Vec<EmbeddingRecord> = load_records(&args.embeddings)?;
    let mut by_id: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for record in records {
        by_id.insert(record.id, record.vector);
    }
    let matrix = cosine_distance_matrix(&by_id)?;
    crate::support::write_table(&args.out, &run_id, &matrix.to_tsv())?;
    println!(
        "distances: {} x {} matrix -> {}",
        matrix.ids.len(),
        matrix.ids.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExportFormat {
    Sft,
    Dpo,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long, value_enum)]
    pub format: ExportFormat,
    /// RNG seed for the preference format's rejected-choice draw
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "offline")]
    pub mode: Mode,
    #[arg(long)]
    pub merge: bool,
}

pub fn export(args: &ExportArgs) -> Result<(), CliError> {
    let format_tag = match args.format {
        ExportFormat::Sft => "sft",
        ExportFormat::Dpo => "dpo",
    };
    let run_id = derive_run_id(&[
        ("command", b"export"),
        ("config", &file_bytes(&args.config)?),
        ("candidates", &file_bytes(&args.candidates)?),
        ("format", format_tag.as_bytes()),
        ("seed", args.seed.to_string().as_bytes()),
    ]);
    let mut ctx = RunContext::build(&args.config, args.mode, None, None, run_id.clone())?;
    let started = ctx.clock.now_ms();

    let candidates = load_candidates(&args.candidates, args.merge)?;
    ensure_answer_templates(&mut ctx, candidates.iter().map(|c| c.pair.target.language))?;

    let ling = Linguistics::new(
        &ctx.gateway,
        &ctx.templates,
        LinguisticsOptions::from_config(&ctx.config.search),
    );
    let format = match args.format {
        ExportFormat::Sft => FinetuneFormat::Sft,
        ExportFormat::Dpo => FinetuneFormat::Dpo,
    };
    let records = export_finetune(&candidates, format, args.seed, &ling)?;
    save_records_tagged(&args.out, &records, &run_id)?;
    ctx.assert_offline_clean()?;
    println!(
        "export: {} {format_tag} records -> {}",
        records.len(),
        args.out.display()
    );
    ctx.manifest(
        "export",
        vec![path_string(&args.candidates), path_string(&args.config)],
        vec![path_string(&args.out)],
        started,
    )
    .save(&args.out.with_extension("manifest.json"))?;
    Ok(())
}
