//! Exit criteria. Each test prints one `criterion N: PASS|FAIL` line to
//! stderr, uncaptured, so the summary shows up in a plain `cargo test` log.

mod common;
mod frontiers;
mod link;
mod multiframe;
mod oracle;
mod properties;
