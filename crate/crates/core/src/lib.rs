//! Outage and error-rate analysis of multi-hop RIS-assisted mixed FSO/RF links.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod channels;
pub mod cli;
pub mod config;
pub mod foxh;
pub mod gamma;
pub mod metrics;
pub mod montecarlo;
pub mod quad;
pub mod relaying;
