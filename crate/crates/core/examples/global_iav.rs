//! Per-sample IAVs, the global IAV over a synthetic bundle, and AAV against
//! a uniform baseline map.
//!
//! ```text
//! cargo run --example global_iav
//! ```

use iavkit::attribution::AttributionMap;
use iavkit::bundle::LabelMode;
use iavkit::metrics::{aav, global_iav, iav_all, Baseline};
use iavkit::report::make_synthetic_bundle;
use iavkit::vit::ViTConfig;
use iavkit::Tensor;

fn main() -> iavkit::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| iavkit::Error::InvalidArgument(e.to_string()))?;
    let bundle = make_synthetic_bundle(&ViTConfig::toy(3, 0), 32, 1, dir.path())?;

    let iavs = iav_all(&bundle, LabelMode::Predicted)?;
    println!("IAV of sample 0 (layer-major): {:.3?}", iavs[0].scores);

    for mode in [LabelMode::Predicted, LabelMode::GroundTruth] {
        let g = global_iav(&bundle, mode)?;
        for l in 0..g.n_layers {
            println!("global IAV [{mode}] layer {l}: {:.4?}", g.layer(l));
        }
    }

    let uniform = AttributionMap::new(Tensor::full(vec![bundle.n_patches()], 1.0)?, 0, "uniform");
    let a = aav(&bundle, &Baseline::Shared(uniform), "uniform")?;
    println!("AAV vs uniform map: {:.4?}", a.scores);
    Ok(())
}
