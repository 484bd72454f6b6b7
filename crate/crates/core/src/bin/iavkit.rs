use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use iavkit::bundle::{load_bundle_with_report, LabelMode};
use iavkit::report::{self, Analysis, MaskSource, ReportSpec};
use iavkit::vit::ViTConfig;

/// Attention/attribution agreement analysis for ViT bundles.
#[derive(Parser)]
#[command(name = "iavkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Bundle directory; repeat to analyse several bundles.
    #[arg(long = "bundle", required = true)]
    bundles: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "iavkit-out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Class whose attribution is compared: predicted or ground-truth.
    #[arg(long, default_value = "predicted")]
    labels: LabelMode,
    /// Also write SVG figures.
    #[arg(long)]
    figures: bool,
    /// Sort heads within each layer in heatmaps.
    #[arg(long)]
    sort_heads: bool,
    /// Scoring model directory (defaults to `<bundle>/model`).
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bundle from a random toy ViT.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seed for the model weights.
        #[arg(long, default_value_t = 0)]
        model_seed: u64,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 2)]
        heads: usize,
        /// Square image side in pixels.
        #[arg(long, default_value_t = 16)]
        image: usize,
        #[arg(long, default_value_t = 4)]
        patch: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
    },
    /// Load a bundle, check its invariants and print the ingest report.
    Validate {
        #[arg(long)]
        bundle: PathBuf,
    },
    Iav(Common),
    GlobalIav(Common),
    Aav {
        #[command(flatten)]
        common: Common,
        /// NPY baseline map: [P], [rows, cols], [N, P] or [N, rows, cols].
        #[arg(long)]
        baseline: PathBuf,
    },
    Entropy(Common),
    Heads(Common),
    MaskCurve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        /// attention-mean, attribution, random or attention:<layer>,<head>.
        #[arg(long = "source")]
        sources: Vec<MaskSource>,
        #[arg(long, default_value_t = 0.0)]
        fill: f64,
    },
    Perturb {
        #[command(flatten)]
        common: Common,
        /// Blur sigmas to evaluate.
        #[arg(long, value_delimiter = ',')]
        blur: Option<Vec<f64>>,
        /// Grid size and maximum swap count, e.g. `2,4`.
        #[arg(long, value_parser = parse_jigsaw)]
        jigsaw: Option<(usize, usize)>,
    },
    Embed {
        #[command(flatten)]
        common: Common,
        /// Layer to embed; all layers when omitted.
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long)]
        perplexity: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    Diff {
        #[command(flatten)]
        common: Common,
        /// Final-checkpoint bundle.
        #[arg(long = "final")]
        final_bundle: PathBuf,
    },
    /// Every analysis; aav and diff only when their inputs are given.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long = "final")]
        final_bundle: Option<PathBuf>,
    },
}

fn parse_jigsaw(s: &str) -> Result<(usize, usize), String> {
    let (g, k) = s.split_once(',').ok_or("expected <grid>,<swaps>")?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((parse(g)?, parse(k)?))
}

fn spec(common: Common, analyses: &[Analysis]) -> ReportSpec {
    let mut spec = ReportSpec::new(PathBuf::new(), common.out);
    spec.bundles = common.bundles;
    spec.analyses.extend(analyses);
    spec.figures = common.figures;
    spec.seed = common.seed;
    spec.label_mode = common.labels;
    spec.options.model = common.model;
    spec.options.sort_heads = common.sort_heads;
    spec
}

fn execute(command: Command) -> iavkit::Result<()> {
    let spec = match command {
        Command::Synth { out, n, seed, model_seed, classes, layers, heads, image, patch, dim } => {
            let config = ViTConfig {
                image_size: [image, image, 1],
                patch_size: patch,
                n_layers: layers,
                n_heads: heads,
                embed_dim: dim,
                n_classes: classes,
                rng_seed: model_seed,
            };
            report::make_synthetic_bundle(&config, n, seed, &out)?;
            println!("wrote {}", out.display());
            return Ok(());
        }
        Command::Validate { bundle } => {
            let (b, ingest) = load_bundle_with_report(&bundle)
                .map_err(|e| e.context(format!("bundle {}", bundle.display())))?;
            println!(
                "ok: N={} L={} H={} P={} classes={} clamped={} renormalized={}",
                b.n_samples(),
                b.n_layers(),
                b.n_heads(),
                b.n_patches(),
                b.n_classes(),
                ingest.clamped_attribution,
                ingest.renormalized_rows
            );
            return Ok(());
        }
        Command::Iav(c) => spec(c, &[Analysis::Iav]),
        Command::GlobalIav(c) => spec(c, &[Analysis::GlobalIav]),
        Command::Entropy(c) => spec(c, &[Analysis::Entropy]),
        Command::Heads(c) => spec(c, &[Analysis::Heads]),
        Command::Aav { common, baseline } => {
            let mut s = spec(common, &[Analysis::Aav]);
            s.options.aav_baseline = Some(baseline);
            s
        }
        Command::MaskCurve { common, ratios, sources, fill } => {
            let mut s = spec(common, &[Analysis::MaskCurve]);
            if let Some(r) = ratios {
                s.options.mask_ratios = r;
            }
            if !sources.is_empty() {
                s.options.mask_sources = sources;
            }
            s.options.mask_fill = fill;
            s
        }
        Command::Perturb { common, blur, jigsaw } => {
            let mut s = spec(common, &[Analysis::Perturb]);
            if blur.is_some() || jigsaw.is_some() {
                s.options.blur_sigmas = blur.unwrap_or_default();
                s.options.jigsaw = jigsaw.map(|(g, k)| (g, (0..=k).collect()));
            }
            s
        }
        Command::Embed { common, layer, perplexity, iterations } => {
            let mut s = spec(common, &[Analysis::Embed]);
            s.options.embed_layers = layer.map(|l| vec![l]);
            if let Some(p) = perplexity {
                s.options.tsne.perplexity = p;
            }
            if let Some(n) = iterations {
                s.options.tsne.n_iterations = n;
            }
            s
        }
        Command::Diff { common, final_bundle } => {
            let mut s = spec(common, &[Analysis::Diff]);
            s.options.final_bundle = Some(final_bundle);
            s
        }
        Command::Report { common, baseline, final_bundle } => {
            let mut s = spec(common, &Analysis::ALL);
            if baseline.is_none() {
                s.analyses.remove(&Analysis::Aav);
            }
            if final_bundle.is_none() {
                s.analyses.remove(&Analysis::Diff);
            }
            s.options.aav_baseline = baseline;
            s.options.final_bundle = final_bundle;
            s.skip_unavailable = true;
            s
        }
    };
    let outcome = report::run(&spec)?;
    for file in outcome.files {
        println!("{}", file.display());
    }
    for (bundle, analysis, reason) in outcome.skipped {
        eprintln!("skipped {analysis} on {}: {reason}", bundle.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("iavkit: {e}");
            ExitCode::FAILURE
        }
    }
}
