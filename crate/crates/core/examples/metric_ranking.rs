//! Ranks the bundled synthetic node metrics against probe latency and
//! slack.

use std::fs::File;
use std::path::Path;

use mcorch::assurance::read_trace_csv;
use mcorch::metrics::{load_pipeline_inputs, rank_metrics, read_targets_csv, PipelineConfig};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let trace = read_trace_csv(File::open(dir.join("traces.csv")).unwrap()).unwrap();
    let targets = read_targets_csv(File::open(dir.join("targets.csv")).unwrap()).unwrap();
    let inputs = load_pipeline_inputs(&trace, &targets).unwrap();
    let ranking = rank_metrics(&inputs.metrics, &inputs.latency, &inputs.slack, &PipelineConfig::default()).unwrap();
    print!("{}", ranking.top_k_table(10));
    for (name, of) in &ranking.dropped {
        println!("dropped {name} (duplicate of {of})");
    }
}
