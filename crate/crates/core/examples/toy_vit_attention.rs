//! Runs the seeded toy ViT on one image and prints each head's CLS attention
//! over the 4×4 patch grid.
//!
//! ```text
//! cargo run --example toy_vit_attention
//! ```

use iavkit::vit::{extract_cls_attention, ViTConfig, ViTModel};
use iavkit::Tensor;

fn main() -> iavkit::Result<()> {
    let config = ViTConfig::toy(3, 7);
    let model = ViTModel::init(config.clone())?;

    // Dark image with a bright square in the top-left patch.
    let mut pixels = vec![0.1; 16 * 16];
    for r in 0..4 {
        for c in 0..4 {
            pixels[r * 16 + c] = 1.0;
        }
    }
    let image = Tensor::new(vec![16, 16, 1], pixels)?;
    let out = model.forward(&image)?;
    println!("class scores: {:?}", out.scores);

    let cls = extract_cls_attention(&out.attention)?;
    let (grid_r, grid_c) = config.grid();
    for l in 0..config.n_layers {
        for h in 0..config.n_heads {
            println!("layer {l} head {h}");
            let row = cls.slice(&[l, h])?;
            for gr in 0..grid_r {
                let cells: Vec<String> = row[gr * grid_c..(gr + 1) * grid_c]
                    .iter()
                    .map(|v| format!("{v:.3}"))
                    .collect();
                println!("  {}", cells.join(" "));
            }
        }
    }
    Ok(())
}
