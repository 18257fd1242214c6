//! Auditing datasets with V-information: estimate how much usable
//! information an input (or a transformation of it) carries about the
//! output for a given family of models, and assemble those estimates into
//! pass/fail checklists.

pub mod adapter;
pub mod checklist;
pub mod dataset;
pub mod error;
pub mod families;
pub mod filtering;
pub mod features;
pub mod hashing;
pub mod info;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
