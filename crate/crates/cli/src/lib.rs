//! Pipeline steps and plotting behind the `lfrl` command.

pub mod pipeline;
pub mod plot;
