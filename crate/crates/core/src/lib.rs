#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod diffops;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod linop;
pub mod metrics;
pub mod phantom;
pub mod projector;
pub mod regularizer;
pub mod solver;
