#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bgwo;
pub mod cli;
pub mod dataset;
pub mod evalreport;
pub mod features;
pub mod nbayes;
pub mod pipeline;
pub mod preprocess;
pub mod registry;
pub mod signal_io;
