//! Transforms between gradient discretisations.

mod condense;
mod lump;

pub use condense::{barycentric_condense, reg_ba, CondensationRule, Condensed};
pub use lump::{mass_lump, reconstruction_distance, LumpingPartition};
