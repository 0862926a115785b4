//! `glotprobe search`: the beam search (or a baseline) over seed pairs,
//! with transcript record/replay and full artifact emission.

use std::path::PathBuf;

use clap::Args;

use glotprobe::linguistics::{materialize_answer_template, Linguistics, LinguisticsOptions, TemplateId};
use glotprobe::persist::{load_records, save_records_tagged};
use glotprobe::search::{conversion_rate, SearchRoster, Searcher};
use glotprobe::types::{BilingualPair, Branching, Language, SimulationResult, Validate};

use crate::support::{derive_run_id, file_bytes, path_string, CliError, Mode, RunContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BaselineKind {
    Np,
    Dp,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Seed pair file (depth-0 pairs from `seed`)
    #[arg(long)]
    pub pairs: PathBuf,
    /// Run config with search hyperparameters and the model roster
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for candidates, stats, ledger, and manifest
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "offline")]
    pub mode: Mode,
    /// Run a baseline instead of the beam search
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineKind>,
    /// Record every backend response to this transcript file
    #[arg(long, conflicts_with = "replay")]
    pub transcript: Option<PathBuf>,
    /// Serve every backend response from this recorded transcript
    #[arg(long)]
    pub replay: Option<PathBuf>,

    // hyperparameter overrides; defaults come from the config file
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub beam_width: Option<usize>,
    #[arg(long)]
    pub depth_initial: Option<usize>,
    #[arg(long)]
    pub depth_extended: Option<usize>,
    #[arg(long)]
    pub redundancy_cap: Option<usize>,
    #[arg(long)]
    pub score_exponent: Option<f64>,
    #[arg(long)]
    pub inclusion_threshold: Option<f64>,
    #[arg(long)]
    pub potential_threshold: Option<f64>,
    #[arg(long)]
    pub english_tolerance: Option<f64>,
    /// "all_distractors" or a per-pair cap
    #[arg(long)]
    pub branching: Option<String>,
    #[arg(long)]
    pub perturbation_temperature: Option<f64>,
    #[arg(long)]
    pub deterministic_temperature: Option<f64>,
    #[arg(long)]
    pub max_output_tokens: Option<u32>,
    #[arg(long)]
    pub affinity_constant: Option<f64>,
    #[arg(long)]
    pub perturbation_retries: Option<u32>,
}

pub fn run(args: &SearchArgs) -> Result<(), CliError> {
    let config_bytes = file_bytes(&args.config)?;
    let pairs_bytes = file_bytes(&args.pairs)?;
    let replay_bytes = match &args.replay {
        Some(path) => file_bytes(path)?,
        None => Vec::new(),
    };

    let (mut config, config_text) = glotprobe::config::RunConfig::load(&args.config)?;
    apply_overrides(&mut config.search, args)?;
    config
        .search
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let effective = serde_json::to_vec(&config.search)
        .map_err(|e| CliError::Other(format!("serializing effective config: {e}")))?;

    let baseline_tag = match args.baseline {
        None => "search",
        Some(BaselineKind::Np) => "baseline-np",
        Some(BaselineKind::Dp) => "baseline-dp",
    };
    let run_id = derive_run_id(&[
        ("command", baseline_tag.as_bytes()),
        ("config", &config_bytes),
        ("effective", &effective),
        ("pairs", &pairs_bytes),
        ("replay", &replay_bytes),
    ]);

    let mut ctx = RunContext::from_config(
        config,
        config_text,
        args.mode,
        args.transcript.as_deref(),
        args.replay.as_deref(),
        run_id.clone(),
    )?;
    let started = ctx.clock.now_ms();

    let pairs: Vec<BilingualPair> = load_records(&args.pairs)?;
    let language = pairs
        .first()
        .map(|p| p.target.language)
        .unwrap_or(Language::English);

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Other(format!("creating {}: {e}", args.out.display())))?;

    let roster = SearchRoster::from_models(&ctx.config.models)?;

    // answering templates for the run's language: translate-the-template
    // once and keep the result as a reviewable asset
    if !pairs.is_empty() && !ctx.templates.contains(TemplateId::AnswerZeroShot, language) {
        materialize_answer_template(
            &mut ctx.templates,
            &ctx.gateway,
            &roster.translator,
            language,
            ctx.config.search.deterministic_temperature,
            ctx.config.search.max_output_tokens,
        )?;
        ctx.templates
            .save_template_file(args.out.join("templates"), TemplateId::AnswerZeroShot, language)?;
    }

    let ling = Linguistics::new(
        &ctx.gateway,
        &ctx.templates,
        LinguisticsOptions::from_config(&ctx.config.search),
    );
    let searcher = Searcher::new(&ling, &roster, &ctx.config.search, ctx.clock, &run_id, language);

    let (candidates, stats) = match args.baseline {
        None => searcher.run_search(&pairs)?,
        Some(BaselineKind::Np) => searcher.baseline_np(&pairs)?,
        Some(BaselineKind::Dp) => searcher.baseline_dp(&pairs)?,
    };

    let candidates_path = args.out.join("candidates.jsonl");
    let stats_path = args.out.join("stats.jsonl");
    let simulations_path = args.out.join("simulations.jsonl");
    let ledger_path = args.out.join("ledger.jsonl");

    save_records_tagged(&candidates_path, &candidates, &run_id)?;
    save_records_tagged(&stats_path, std::slice::from_ref(&stats), &run_id)?;
    let simulations: Vec<SimulationResult> = candidates.iter().map(|c| c.simulation.clone()).collect();
    save_records_tagged(&simulations_path, &simulations, &run_id)?;
    save_records_tagged(&ledger_path, &[ctx.gateway.ledger_snapshot()], &run_id)?;

    ctx.assert_offline_clean()?;

    let rate = conversion_rate(&stats)
        .map(|r| format!("{r:.3}"))
        .unwrap_or_else(|| "no data".to_string());
    println!(
        "{baseline_tag}: {} candidates from {} seeds (conversion rate {rate}, levels {}, ${:.4})",
        stats.candidates, stats.seeds_attempted, stats.levels_explored, stats.dollars
    );

    let mut outputs = vec![
        path_string(&candidates_path),
        path_string(&stats_path),
        path_string(&simulations_path),
        path_string(&ledger_path),
    ];
    if let Some(t) = &args.transcript {
        outputs.push(path_string(t));
    }
    let manifest = ctx.manifest(
        baseline_tag,
        vec![path_string(&args.pairs), path_string(&args.config)],
        outputs,
        started,
    );
    manifest.save(&args.out.join("manifest.json"))?;
    Ok(())
}

fn apply_overrides(search: &mut glotprobe::types::SearchConfig, args: &SearchArgs) -> Result<(), CliError> {
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = args.$field {
                search.$field = v;
            }
        };
    }
    set!(batch_size);
    set!(beam_width);
    set!(depth_initial);
    set!(depth_extended);
    set!(redundancy_cap);
    set!(score_exponent);
    set!(inclusion_threshold);
    set!(potential_threshold);
    set!(english_tolerance);
    set!(perturbation_temperature);
    set!(deterministic_temperature);
    set!(max_output_tokens);
    set!(affinity_constant);
    set!(perturbation_retries);
    if let Some(branching) = &args.branching {
        search.branching = parse_branching(branching)?;
    }
    Ok(())
}

fn parse_branching(arg: &str) -> Result<Branching, CliError> {
    match arg {
        "all" | "all_distractors" => Ok(Branching::AllDistractors),
        n => n
            .parse::<usize>()
            .map(Branching::Cap)
            .map_err(|_| CliError::Config(format!("branching must be a count or \"all_distractors\", got {arg:?}"))),
    }
}
