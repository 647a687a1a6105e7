//! Data loading, experiment orchestration, serving and benchmarking.

pub mod bench;
pub mod config;
pub mod io;
pub mod pipeline;
pub mod split;
pub mod stream;

pub use config::{DataSource, ExperimentConfig, ProcessMode};
pub use io::{load_edge_csv, Dataset, DatasetMeta, EdgeFormat, Event, LoadOptions};
pub use pipeline::{run_experiment, run_seed, ExperimentSummary, Prepared, RunReport};
pub use split::{chrono_split, ChronoSplit};
pub use stream::{stream_predict, Deployment, StreamPrediction};
