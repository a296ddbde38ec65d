use std::path::Path;

use clap::ValueEnum;
use fairforge::harness::{self, FrontierPoint};
use fairforge::MetricSpec;

use crate::Failure;

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Reads `frontier.json`, given either the file or its result directory.
pub fn read(path: &Path) -> Result<Vec<FrontierPoint>, Failure> {
    let file = if path.is_dir() {
        path.join(harness::FRONTIER_FILE)
    } else {
        path.to_path_buf()
    };
    if !file.exists() {
        return Err(Failure::invalid(format!("{}: no such frontier", file.display())));
    }
    Ok(harness::read_frontier(&file)?)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per point. Weights and metric values get one column per metric
/// so that the file loads straight into a spreadsheet.
pub fn render(points: &[FrontierPoint], format: Format) -> Result<Vec<u8>, Failure> {
    match format {
        Format::Json => Ok(harness::frontier_json(points)?.into_bytes()),
        Format::Csv => {
            let ids: Vec<String> = MetricSpec::ALL.iter().map(|m| m.id()).collect();
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header: Vec<String> = [
                "config_hash", "dataset", "kind", "lambda", "alpha", "label", "seed", "seeds", "status",
                "error", "test_accuracy", "dev_accuracy",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect();
            header.extend(ids.iter().map(|id| format!("w:{id}")));
            header.extend(ids.iter().map(|id| format!("test:{id}")));
            header.extend(ids.iter().map(|id| format!("dev:{id}")));
            let csv_err = |e: csv::Error| Failure::Runtime(e.to_string());
            w.write_record(&header).map_err(csv_err)?;
            for p in points {
                let kind = serde_json::to_value(p.kind).expect("kind serializes");
                let status = serde_json::to_value(p.status).expect("status serializes");
                let seeds: Vec<String> = p.seeds.iter().map(u64::to_string).collect();
                let mut row = vec![
                    p.config_hash.clone(),
                    p.dataset.clone(),
                    kind.as_str().unwrap_or_default().to_string(),
                    p.lambda.to_string(),
                    opt(p.alpha),
                    p.label.clone().unwrap_or_default(),
                    opt(p.seed),
                    seeds.join(" "),
                    status.as_str().unwrap_or_default().to_string(),
                    p.error.clone().unwrap_or_default(),
                    opt(p.test_accuracy),
                    opt(p.dev_accuracy),
                ];
                row.extend(p.weights.0.iter().map(f64::to_string));
                row.extend(ids.iter().map(|id| opt(p.metric_values.get(id))));
                row.extend(ids.iter().map(|id| opt(p.dev_metric_values.get(id))));
                w.write_record(&row).map_err(csv_err)?;
            }
            w.into_inner().map_err(|e| Failure::Runtime(e.to_string()))
        }
    }
}
