//! A deterministic multi-agent runtime.
//!
//! Agents run a tool-use loop ([`kernel`]) over an actionable engine ([`engine`]) and hand
//! control to one another through transfer calls. Agents and event-driven workflows are
//! described by XML forms ([`forms`]), executed by [`workflow`], created from requirements
//! by the bounded pipelines in [`creation`], and persisted in the [`registry`]. [`rag`]
//! provides the vector-backed document store and [`viewport`] the paginated viewers.

pub mod engine;
pub mod message;
pub mod forms;
pub mod kernel;
pub mod trace;
pub mod workflow;
pub mod registry;
pub mod creation;
pub mod rag;
pub mod viewport;
