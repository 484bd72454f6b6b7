//! Accuracy of the toy ViT under Gaussian blur and jigsaw shuffles on a
//! synthetic bundle, plus a look at a single shuffled image.
//!
//! ```text
//! cargo run --example robustness
//! ```

use iavkit::perturb::{jigsaw, robustness_curve, JigsawSpec, Perturbation};
use iavkit::report::{make_synthetic_bundle, MODEL_DIR};
use iavkit::vit::{ViTConfig, ViTModel};
use iavkit::Tensor;

fn main() -> iavkit::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| iavkit::Error::InvalidArgument(e.to_string()))?;
    let bundle = make_synthetic_bundle(&ViTConfig::toy(3, 4), 32, 9, dir.path())?;
    let model = ViTModel::load(dir.path().join(MODEL_DIR))?;

    let blur: Vec<Perturbation> = [0.0, 0.5, 1.0, 2.0].map(|sigma| Perturbation::Blur { sigma }).to_vec();
    for point in robustness_curve(&bundle, &model, &blur)? {
        println!("blur sigma {:.1}: accuracy {:.3}", point.x, point.accuracy);
    }
    let shuffles: Vec<Perturbation> = (0..4)
        .map(|swaps| Perturbation::Jigsaw(JigsawSpec { grid: 4, swaps, seed: 1 }))
        .collect();
    for point in robustness_curve(&bundle, &model, &shuffles)? {
        println!("jigsaw 4x4, {} swaps: accuracy {:.3}", point.x, point.accuracy);
    }

    let labels = Tensor::new(vec![4, 4, 1], (0..16).map(f64::from).collect())?;
    let spec = JigsawSpec { grid: 2, swaps: 1, seed: 5 };
    let shuffled = jigsaw(&labels, &spec)?;
    println!("swapped cells {:?}:", spec.transpositions());
    for row in shuffled.data().chunks(4) {
        println!("  {row:?}");
    }
    Ok(())
}
