//! Two-stage eMBB/URLLC traffic offloading for an integrated
//! satellite-terrestrial network (ISTN).
//!
//! Stage one punctures URLLC bandwidth out of eMBB grants inside each small
//! cell ([`terrestrial_alloc`]). Stage two decides which share of every
//! cell's eMBB load moves to the satellite backhaul and how satellite
//! bandwidth is split across cells ([`satellite_assoc`]). [`queueing`] gives
//! the M/G/1 delay analytics and [`simulator`] checks them packet by packet.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod barrier;
pub mod csvfmt;
pub mod error;
pub mod experiment;
pub mod pipeline;
pub mod queueing;
pub mod satellite_assoc;
pub mod scenario;
pub mod simulator;
pub mod stats;
pub mod terrestrial_alloc;
pub mod traffic;
pub mod units;

pub use error::{Error, Result};
