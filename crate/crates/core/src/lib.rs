//! Stance-detection evaluation harness: tweet corpus preparation, prompt
//! rendering, LLM batch prediction, response parsing and scoring.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod label;
pub mod llm_client;
pub mod metrics;
pub mod parser;
pub mod predictions;
pub mod prompts;
pub mod summary;

pub use config::RunConfig;
pub use corpus::Record;
pub use label::{Partition, StanceLabel};
pub use prompts::PromptKind;
