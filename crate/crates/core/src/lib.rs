//! Regional fact-checking evaluation harness.
//!
//! - [`corpus`]: statement schema, loading and balance validation
//! - [`chat`]: chat-completion backends (OpenAI-compatible wire, scripted replay)
//! - [`wikitools`]: the two Wikipedia tools, HTML sectioning and the page cache
//! - [`runner`]: prompts, verdict parsing, the bounded agent loop, corpus runs
//! - [`stats`]: accuracy tables, confusion matrices and the logistic disparity model

pub mod chat;
pub mod corpus;
pub mod exec;
pub mod runner;
pub mod stats;
pub mod wikitools;

pub use exec::Execution;
