//! Natural-language control of a simulated X-ray scattering beamline.
//!
//! The pipeline runs free text through a word-level BIO tagger, groups the
//! tagged spans into commands, compiles them into a typed [`interpreter::Script`]
//! and, once an operator confirms, executes the script on a deterministic
//! [`simulator`].
//!
//! ```text
//! text -> tokenize -> predict -> repair -> group -> compile -> assemble -> render
//! ```
//!
//! Training data comes from [`corpus`], which concatenates slot-filled
//! sentence templates and keeps the gold labels and slot values.

pub mod corpus;
pub mod entity;
pub mod interpreter;
pub mod records;
pub mod simulator;
pub mod tagger;

mod error;

pub use entity::{EntityType, Label, Prefix, SlotValue};
pub use error::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;
