//! Evaluation sweeps, file formats and the command-line interface.

pub mod cli;
mod eval;
mod ppm;

pub use eval::{
    downsample, export_dataset, run_eval, run_eval_with, Awareness, DatasetConfig, DistanceResult, EvalConfig,
    EvalReport, SuccessJudge,
};
pub use ppm::{decode_ppm, encode_ppm, read_ppm, write_ppm};
