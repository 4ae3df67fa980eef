//! Configuration files, manifests, and result files.

mod config;
mod output;

pub use config::{parse_config, parse_config_str, parse_config_table, parse_value, set_key};
pub use output::{
    canonical_config, config_hash, format_float, read_manifest, read_variance_table, results_dir,
    to_json_line, unix_now, variance_csv, write_manifest, write_results, write_summaries, RunManifest,
    RESULTS_ROOT_ENV,
};
