//! Entity-centric framing analysis over dependency-parsed news text.
//!
//! A *framing component* is a pair of words joined by one dependency
//! relation, where one side is a mention of a target entity (the shooter,
//! the victims, the event) and the other side is the word that attributes
//! something to it. The crate walks the full pipeline:
//!
//! 1. [`corpus`]: read CoNLL-U parses plus an outlet metadata sidecar.
//! 2. [`coref`]: tag pronouns and aliases with the entity they refer to.
//! 3. [`lexicon`]: per-entity keywords and relation whitelists.
//! 4. [`extraction`]: pull (anchor, modifier, relation) triples out of the trees.
//! 5. [`aggregate`]: per-outlet frequency tables and left/right contrasts.
//! 6. [`embedding`] and [`clustering`]: group modifiers into candidate frames.
//! 7. [`coding`]: persisted human coding sessions.
//!
//! [`server`] exposes the same operations over HTTP and [`cli`] drives them
//! from the command line.

pub mod aggregate;
pub mod cli;
pub mod clustering;
pub mod coding;
pub mod coref;
pub mod corpus;
pub mod embedding;
mod error;
pub mod extraction;
pub mod lexicon;
pub mod pipeline;
pub mod server;

pub use error::{read_to_string, Error, Result};
