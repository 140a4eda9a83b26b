//! Deterministic simulator of a proof-of-stake smart-contract ledger kept as
//! a block tree, with short-leash transaction scoping, a long-range-attack
//! adversary, checkpoint replay with hash swizzling and transaction schedule
//! analysis.

pub mod adversary;
pub mod blocktree;
pub mod chain;
pub mod cli;
pub mod codec;
pub mod consensus;
pub mod demo;
pub mod hash;
pub mod keys;
pub mod leash;
pub mod replay;
pub mod scenario;
pub mod schedule;
pub mod state;
pub mod vm;
