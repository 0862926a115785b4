//! Discovers cross-lingual weaknesses in black-box language models: beam
//! search over LLM-generated question perturbations, multi-model simulation
//! scoring of bilingual question pairs, and post-search analytics.
//!
//! Module map:
//! - [`types`]: domain records and their invariants
//! - [`persist`]: line-delimited JSON storage
//! - [`gateway`]: model backends, caching, cost metering, record/replay
//! - [`linguistics`]: prompt templates and the perturbation/translation/
//!   judging operations built on them
//! - [`search`]: simulation scoring, the beam search, and baselines
//! - [`analysis`]: accuracy tables, affinity scores, categorization, cost
//!   reports, fine-tune export
//! - [`scenarios`]: scripted offline backends shared by tests and the CLI

pub mod analysis;
pub mod clock;
pub mod config;
pub mod gateway;
pub mod linguistics;
pub mod persist;
pub mod scenarios;
pub mod search;
pub mod types;
