//! Core library for collecting reader feedback on sentence-level bias
//! highlights and turning it into an audited, exportable dataset.
//!
//! The modules follow the data flow: [`ingest`] labels articles with a
//! [`classifier`], readers produce [`model::FeedbackEvent`]s, [`aggregation`]
//! folds them into votes, filters spammers and labels sentences, and
//! [`metrics`] measures the result. [`pipeline`] runs the whole chain on a
//! snapshot and is shared by the service and the command line.

pub mod aggregation;
pub mod classifier;
pub mod config;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod replay;
pub mod stats;
pub mod synthetic;

pub use config::Config;
pub use pipeline::{run_pipeline, PipelineInput, PipelineOutput};
