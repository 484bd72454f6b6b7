//! Occlusion attribution: score drop when each patch is replaced by a
//! baseline value. On a linear patch model the map has a closed form, which
//! this example prints next to the computed one.
//!
//! ```text
//! cargo run --example occlusion
//! ```

use iavkit::attribution::{occlusion_attribution, validate_external_attribution, AttributionMap};
use iavkit::scorer::LinearPatchScorer;
use iavkit::vit::{ViTConfig, ViTModel};
use iavkit::Tensor;

fn main() -> iavkit::Result<()> {
    let weights = Tensor::new(vec![2, 4], vec![2.0, -1.0, 0.5, 3.0, 0.0, 1.0, 1.0, 0.0])?;
    let scorer = LinearPatchScorer::new(weights, 2)?;
    let image = Tensor::new(vec![4, 4, 1], (1..=16).map(|v| v as f64 / 16.0).collect())?;

    let map = occlusion_attribution(&scorer, &image, 2, 0, 0.0)?;
    let means = scorer.patch_means(&image)?;
    println!("patch  occlusion  w*mean (clamped)");
    for (p, (got, (w, m))) in map
        .values
        .data()
        .iter()
        .zip([2.0, -1.0, 0.5, 3.0].iter().zip(&means))
        .enumerate()
    {
        println!("{p:>5}  {got:>9.5}  {:>9.5}", (w * m).max(0.0));
    }

    // The same generator works for any scorer, e.g. the toy ViT.
    let model = ViTModel::init(ViTConfig::toy(3, 1))?;
    let vit_image = Tensor::full(vec![16, 16, 1], 0.5)?;
    let vit_map = occlusion_attribution(&model, &vit_image, 4, 0, 0.0)?;
    println!("toy ViT occlusion mass: {:.3e}", vit_map.values.sum());

    // External maps are pooled to patches and clamped to be non-negative.
    let pixel_map = Tensor::new(vec![4, 4], vec![-0.2; 16])?;
    let checked = validate_external_attribution(&AttributionMap::new(pixel_map, 0, "gradcam"), 4, Some(2))?;
    println!("external map: clamped {}, degenerate {}", checked.clamped, checked.map.degenerate);
    Ok(())
}
