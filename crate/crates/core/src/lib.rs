//! Personalized review generation: dataset construction from raw review
//! dumps, history-aware prompts, generation against chat-completions
//! endpoints, automatic metrics, and human-evaluation collection.

pub mod dataset;
pub mod eval;
pub mod generation;
pub mod humaneval;
pub mod ingest;
pub mod io;
pub mod metrics;
pub mod prompt;
pub mod rng;
