//! Offline evaluation: synthetic tables with planted rules, session replay,
//! parameter sweeps and paired significance tests.

pub mod planted;
pub mod replay;
pub mod report;
pub mod stats;
pub mod sweep;
