//! t-SNE of per-layer IAV slices, coloured by label, reporting the
//! optimisation's KL divergence and the perplexity actually used.
//!
//! ```text
//! cargo run --example tsne_layers
//! ```

use iavkit::bundle::LabelMode;
use iavkit::embedding::{layer_slice, tsne, TsneConfig};
use iavkit::metrics::iav_all;
use iavkit::report::make_synthetic_bundle;
use iavkit::vit::ViTConfig;

fn main() -> iavkit::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| iavkit::Error::InvalidArgument(e.to_string()))?;
    let config = ViTConfig { n_heads: 4, ..ViTConfig::toy(3, 6) };
    let bundle = make_synthetic_bundle(&config, 60, 2, dir.path())?;
    let iavs = iav_all(&bundle, LabelMode::GroundTruth)?;

    for layer in 0..config.n_layers {
        let points = layer_slice(&iavs, layer)?;
        let out = tsne(&points, &TsneConfig::default().with_seed(0))?;
        println!(
            "layer {layer}: perplexity {:.2}{}, KL {:.4} -> {:.4}",
            out.affinities.perplexity,
            if out.affinities.capped { " (capped)" } else { "" },
            out.kl_after_exaggeration,
            out.final_kl
        );
        for (i, xy) in out.embedding.data().chunks(2).take(3).enumerate() {
            println!("  sample {i} label {} at ({:.2}, {:.2})", bundle.labels()[i], xy[0], xy[1]);
        }
    }
    Ok(())
}
