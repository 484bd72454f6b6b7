//! Attention entropy per head and the High/Low IA head split.
//!
//! ```text
//! cargo run --example head_profile
//! ```

use iavkit::bundle::LabelMode;
use iavkit::metrics::{classify_heads_with, entropy_profile};
use iavkit::report::make_synthetic_bundle;
use iavkit::vit::ViTConfig;

fn main() -> iavkit::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| iavkit::Error::InvalidArgument(e.to_string()))?;
    let config = ViTConfig { n_layers: 3, n_heads: 4, ..ViTConfig::toy(3, 2) };
    let bundle = make_synthetic_bundle(&config, 24, 5, dir.path())?;

    let entropy = entropy_profile(&bundle)?;
    println!("max possible entropy ln P = {:.4}", entropy.max_entropy);

    println!(" l  h  median     q1     q3  entropy  type");
    for hp in classify_heads_with(&bundle, LabelMode::GroundTruth)? {
        let s = hp.ia_score;
        println!(
            "{:>2} {:>2}  {:.4} {:.4} {:.4}   {:.4}  {}",
            hp.layer,
            hp.head,
            s.median,
            s.q1,
            s.q3,
            hp.mean_entropy,
            hp.head_type.as_str()
        );
    }
    Ok(())
}
