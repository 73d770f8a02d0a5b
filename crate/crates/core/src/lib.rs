//! Firewall policy compiler and verifier.

pub mod canonical;
pub mod checker;
pub mod diag;
pub mod header_space;
pub mod netgen;
pub mod policy_lang;
pub mod render;
pub mod sim;
pub mod topo_model;
