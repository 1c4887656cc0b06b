//! Pipeline behind the `loopmem` binary: configuration, the per-stage
//! commands and the tab-separated table format they exchange.

pub mod config;
pub mod pipeline;
pub mod table;

pub use config::{Resolved, RunConfig};
pub use table::{Provenance, Table};
