//! Builds an analysis bundle in memory, writes it as NPY arrays plus a JSON
//! manifest, and loads it back with validation.
//!
//! ```text
//! cargo run --example bundle_roundtrip
//! ```

use iavkit::bundle::{load_bundle_with_report, save_bundle, AnalysisBundle, AttributionTarget, BundleParts, Manifest};
use iavkit::Tensor;

fn main() -> iavkit::Result<()> {
    let (n, l, h, p) = (2, 1, 2, 4);
    let parts = BundleParts {
        attention: Tensor::full(vec![n, l, h, p], 0.25)?,
        // Per-class attribution for two classes; one entry is slightly negative.
        attribution: Tensor::new(
            vec![n, 2, p],
            vec![
                0.1, 0.2, 0.3, 0.4, 0.0, 0.0, 1.0, 0.0, //
                0.5, -0.01, 0.5, 0.0, 1.0, 1.0, 0.0, 0.0,
            ],
        )?,
        attribution_target: AttributionTarget::PerClass,
        labels: vec![0, 1],
        predictions: vec![0, 0],
        images: None,
        class_names: vec!["cat".into(), "dog".into()],
        attribution_method: "smoothgrad".into(),
        checkpoint_tag: "epoch-10".into(),
        patch_size: None,
    };
    let (bundle, report) = AnalysisBundle::from_parts(parts)?;
    println!("ingest: {report:?}");

    let dir = tempfile::tempdir().map_err(|e| iavkit::Error::InvalidArgument(e.to_string()))?;
    save_bundle(&bundle, dir.path())?;
    let manifest = Manifest::read(dir.path())?;
    for (name, entry) in &manifest.files {
        println!("{name:>12}: {} {:?} crc32={}", entry.path, entry.shape, entry.crc32);
    }

    let (loaded, _) = load_bundle_with_report(dir.path())?;
    assert_eq!(loaded, bundle);
    println!("reloaded bundle is identical");
    Ok(())
}
