//! IA-Score of a single head: cosine between a patch attribution map and the
//! head's CLS attention.
//!
//! ```text
//! cargo run --example ia_score
//! ```

use iavkit::metrics::ia_score;

fn main() -> iavkit::Result<()> {
    let attribution = [0.0, 0.9, 0.1, 0.0];
    let heads = [
        ("focused on patch 1", [0.05, 0.85, 0.05, 0.05]),
        ("uniform", [0.25, 0.25, 0.25, 0.25]),
        ("focused on patch 3", [0.05, 0.05, 0.05, 0.85]),
    ];
    for (name, attention) in heads {
        let s = ia_score(&attribution, &attention)?;
        println!("{name:>20}: {:.4}", s.value);
    }

    // An all-zero attribution has no direction; the score is 0 and flagged.
    let s = ia_score(&[0.0; 4], &[0.25; 4])?;
    println!("zero attribution -> {} (degenerate: {})", s.value, s.degenerate);
    Ok(())
}
