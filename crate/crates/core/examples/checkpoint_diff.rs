//! Drift between an intermediate checkpoint and the final model, measured on
//! normalized attribution and attention maps of the same samples.
//!
//! ```text
//! cargo run --example checkpoint_diff
//! ```

use iavkit::metrics::{checkpoint_diff, DiffTarget};
use iavkit::report::make_synthetic_bundle;
use iavkit::vit::ViTConfig;

fn main() -> iavkit::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| iavkit::Error::InvalidArgument(e.to_string()))?;
    // Same images (seed 4), different weights: a stand-in for two checkpoints.
    let final_model = make_synthetic_bundle(&ViTConfig::toy(3, 100), 16, 4, dir.path().join("final"))?;
    for weights in [100, 101, 102] {
        let ckpt = make_synthetic_bundle(&ViTConfig::toy(3, weights), 16, 4, dir.path().join(format!("c{weights}")))?;
        println!(
            "weights seed {weights}: attribution diff {:.4}, attention diff {:.4}",
            checkpoint_diff(&ckpt, &final_model, DiffTarget::Attribution)?,
            checkpoint_diff(&ckpt, &final_model, DiffTarget::Attention)?
        );
    }
    Ok(())
}
