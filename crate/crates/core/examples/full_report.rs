//! Every analysis on a synthetic bundle, with CSV/JSON tables and SVG
//! figures written to a directory (a temp dir unless one is given).
//!
//! ```text
//! cargo run --example full_report -- /tmp/iav-report
//! ```

use std::path::PathBuf;

use iavkit::bundle::LabelMode;
use iavkit::report::{self, make_synthetic_bundle, Analysis, ReportSpec};
use iavkit::vit::ViTConfig;

fn main() -> iavkit::Result<()> {
    let scratch = tempfile::tempdir().map_err(|e| iavkit::Error::InvalidArgument(e.to_string()))?;
    let out: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| scratch.path().join("report"));
    let bundle_dir = scratch.path().join("bundle");
    let baseline_dir = scratch.path().join("final");

    let config = ViTConfig::toy(3, 0);
    make_synthetic_bundle(&config, 48, 1, &bundle_dir)?;
    make_synthetic_bundle(&ViTConfig { rng_seed: 1, ..config }, 48, 1, &baseline_dir)?;

    let mut spec = ReportSpec::new(&bundle_dir, &out).with_all_analyses();
    spec.analyses.remove(&Analysis::Aav);
    spec.figures = true;
    spec.seed = 7;
    spec.label_mode = LabelMode::GroundTruth;
    spec.options.final_bundle = Some(baseline_dir);
    spec.options.sort_heads = true;

    let outcome = report::run(&spec)?;
    for file in &outcome.files {
        println!("{}", file.display());
    }
    Ok(())
}
