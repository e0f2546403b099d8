//! Configuration handling and the benchmark runner behind the command-line tool.

mod bench;
mod config;

pub use bench::{
    apply_method, image_seed, parse_methods, report_csv, run_bench, summary_table, BenchConfig, BenchResult,
    ImageResult, Method, MethodParams, REPORT_HEADER,
};
pub use config::KeyValueConfig;
