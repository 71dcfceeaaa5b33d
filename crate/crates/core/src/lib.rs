//! Task-guidance engine.
//!
//! Spec documents and semantic frames ([`model`]), embedding ingestion
//! ([`encoder`]), online spec-item retrieval ([`matcher`]), causal action
//! segmentation ([`segmenter`]), frame extraction ([`frames`]), slot
//! questions ([`questions`]), Wizard-of-Oz sessions ([`session`]) and the
//! offline retrieval evaluation ([`eval`]).

pub mod encoder;
pub mod eval;
pub mod frames;
pub mod matcher;
pub mod model;
pub mod questions;
pub mod segmenter;
pub mod session;
