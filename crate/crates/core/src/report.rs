//! Batch analysis runner: loads bundles, runs the selected analyses and writes
//! one CSV and one JSON per analysis, plus SVG figures on request.
//!
//! CSVs always list heads in canonical `(layer, head)` order; figures are
//! derived views and each one has a sibling CSV with its exact numbers.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attribution::{occlusion_all_classes, AttributionMap};
use crate::bundle::{load_bundle, save_bundle, AnalysisBundle, AttributionTarget, BundleParts, LabelMode};
use crate::embedding::{layer_slice, tsne, TsneConfig};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::metrics::{
    aav, checkpoint_diff, classify_heads_with, entropy_profile, global_iav, iav_all, Baseline, DiffTarget,
    GlobalIav, HeadType, Summary,
};
use crate::npy;
use crate::perturb::{baseline_accuracy, masking_curve, robustness_curve, CurvePoint, JigsawSpec, Perturbation, SaliencySource};
use crate::svg;
use crate::tensor::Tensor;
use crate::vit::{extract_cls_attention, ViTConfig, ViTModel};

/// Directory inside a synthetic bundle holding the model that produced it.
pub const MODEL_DIR: &str = "model";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Analysis {
    Iav,
    GlobalIav,
    Aav,
    Entropy,
    Heads,
    MaskCurve,
    Perturb,
    Embed,
    Diff,
}

impl Analysis {
    pub const ALL: [Analysis; 9] = [
        Analysis::Iav,
        Analysis::GlobalIav,
        Analysis::Aav,
        Analysis::Entropy,
        Analysis::Heads,
        Analysis::MaskCurve,
        Analysis::Perturb,
        Analysis::Embed,
        Analysis::Diff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Iav => "iav",
            Analysis::GlobalIav => "global-iav",
            Analysis::Aav => "aav",
            Analysis::Entropy => "entropy",
            Analysis::Heads => "heads",
            Analysis::MaskCurve => "mask-curve",
            Analysis::Perturb => "perturb",
            Analysis::Embed => "embed",
            Analysis::Diff => "diff",
        }
    }

    /// File stem of the analysis outputs.
    pub fn stem(self) -> String {
        self.name().replace('-', "_")
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Analysis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Analysis::ALL
            .into_iter()
            .find(|a| a.name() == s || a.stem() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown analysis '{s}'")))
    }
}

/// Saliency source for masking curves, resolved against a seed at run time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskSource {
    AttentionHead { layer: usize, head: usize },
    AttentionMean,
    Attribution,
    Random,
}

impl MaskSource {
    fn resolve(self, mode: LabelMode, seed: u64) -> SaliencySource {
        match self {
            MaskSource::AttentionHead { layer, head } => SaliencySource::AttentionHead { layer, head },
            MaskSource::AttentionMean => SaliencySource::AttentionMean,
            MaskSource::Attribution => SaliencySource::Attribution(mode),
            MaskSource::Random => SaliencySource::Random { seed },
        }
    }
}

impl FromStr for MaskSource {
    type Err = Error;

    /// `attention-mean`, `attribution`, `random` or `attention:<layer>,<head>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention-mean" => Ok(MaskSource::AttentionMean),
            "attribution" => Ok(MaskSource::Attribution),
            "random" => Ok(MaskSource::Random),
            other => {
                let bad = || Error::InvalidArgument(format!("unknown mask source '{other}'"));
                let rest = other.strip_prefix("attention:").ok_or_else(bad)?;
                let (l, h) = rest.split_once(',').ok_or_else(bad)?;
                Ok(MaskSource::AttentionHead {
                    layer: l.trim().parse().map_err(|_| bad())?,
                    head: h.trim().parse().map_err(|_| bad())?,
                })
            }
        }
    }
}

/// Per-analysis knobs. Defaults follow the usual figure grids.
#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    /// NPY map for `aav`: `[P]`, `[rows, cols]`, `[N, P]` or `[N, rows, cols]`.
    pub aav_baseline: Option<PathBuf>,
    pub mask_ratios: Vec<f64>,
    pub mask_sources: Vec<MaskSource>,
    pub mask_fill: f64,
    pub blur_sigmas: Vec<f64>,
    /// Jigsaw grid size and the swap counts to evaluate.
    pub jigsaw: Option<(usize, Vec<usize>)>,
    /// Layers to embed; `None` embeds every layer.
    pub embed_layers: Option<Vec<usize>>,
    pub tsne: TsneConfig,
    /// Final-checkpoint bundle for `diff`.
    pub final_bundle: Option<PathBuf>,
    /// Scoring model for curves; defaults to `<bundle>/model`.
    pub model: Option<PathBuf>,
    /// Sort heads within each layer in heatmaps.
    pub sort_heads: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            aav_baseline: None,
            mask_ratios: (0..10).map(|i| i as f64 / 10.0).collect(),
            mask_sources: vec![MaskSource::AttentionMean, MaskSource::Attribution, MaskSource::Random],
            mask_fill: 0.0,
            blur_sigmas: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            jigsaw: Some((2, vec![0, 1, 2, 3, 4])),
            embed_layers: None,
            tsne: TsneConfig::default(),
            final_bundle: None,
            model: None,
            sort_heads: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReportSpec {
    pub bundles: Vec<PathBuf>,
    pub analyses: BTreeSet<Analysis>,
    pub out_dir: PathBuf,
    pub figures: bool,
    pub seed: u64,
    pub label_mode: LabelMode,
    pub options: AnalysisOptions,
    /// Record analyses that lack images or a model as skipped instead of failing.
    pub skip_unavailable: bool,
}

impl ReportSpec {
    pub fn new(bundle: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            bundles: vec![bundle.into()],
            analyses: BTreeSet::new(),
            out_dir: out_dir.into(),
            figures: false,
            seed: 0,
            label_mode: LabelMode::Predicted,
            options: AnalysisOptions::default(),
            skip_unavailable: false,
        }
    }

    pub fn with_analysis(mut self, analysis: Analysis) -> Self {
        self.analyses.insert(analysis);
        self
    }

    pub fn with_all_analyses(mut self) -> Self {
        self.analyses.extend(Analysis::ALL);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.analyses.is_empty() {
            return Err(Error::InvalidArgument("no analysis selected".into()));
        }
        if self.bundles.is_empty() {
            return Err(Error::InvalidArgument("no bundle given".into()));
        }
        let names: BTreeSet<_> = self.bundles.iter().map(|b| bundle_name(b)).collect();
        if names.len() != self.bundles.len() {
            return Err(Error::InvalidArgument(
                "bundle directories must have distinct names".into(),
            ));
        }
        Ok(())
    }
}

fn bundle_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "bundle".into())
}

/// Files written by [`run`], in write order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReportOutcome {
    pub files: Vec<PathBuf>,
    /// Analyses skipped under `skip_unavailable`, with the reason.
    pub skipped: Vec<(PathBuf, Analysis, String)>,
}

/// Runs every selected analysis on every bundle. With several bundles each
/// gets its own subdirectory named after the bundle directory.
pub fn run(spec: &ReportSpec) -> Result<ReportOutcome> {
    spec.validate()?;
    let mut outcome = ReportOutcome::default();
    for path in &spec.bundles {
        let bundle = load_bundle(path).map_err(|e| e.context(format!("bundle {}", path.display())))?;
        let out = if spec.bundles.len() == 1 {
            spec.out_dir.clone()
        } else {
            spec.out_dir.join(bundle_name(path))
        };
        fsutil::create_dir(&out)?;
        let mut writer = Writer {
            dir: out,
            figures: spec.figures,
            files: &mut outcome.files,
        };
        for &analysis in &spec.analyses {
            match run_one(spec, path, &bundle, analysis, &mut writer) {
                Ok(()) => {}
                Err(e)
                    if spec.skip_unavailable
                        && matches!(e.root(), Error::MissingImages | Error::MissingModel(_)) =>
                {
                    outcome.skipped.push((path.clone(), analysis, e.to_string()));
                }
                Err(e) => return Err(e.context(format!("{analysis} on {}", path.display()))),
            }
        }
    }
    Ok(outcome)
}

struct Writer<'a> {
    dir: PathBuf,
    figures: bool,
    files: &'a mut Vec<PathBuf>,
}

impl Writer<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fsutil::write_atomic(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv encoding: {e}"));
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv encoding: {e}")))?;
        self.write(name, &bytes)
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::InvalidArgument(format!("json encoding: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn svg(&mut self, name: &str, render: impl FnOnce() -> String) -> Result<()> {
        if self.figures {
            self.write(name, render().as_bytes())?;
        }
        Ok(())
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

fn run_one(
    spec: &ReportSpec,
    path: &Path,
    bundle: &AnalysisBundle,
    analysis: Analysis,
    w: &mut Writer<'_>,
) -> Result<()> {
    let stem = analysis.stem();
    let mode = spec.label_mode;
    let opts = &spec.options;
    match analysis {
        Analysis::Iav => {
            let iavs = iav_all(bundle, mode)?;
            let mut rows = Vec::new();
            for v in &iavs {
                for l in 0..v.n_layers {
                    for h in 0..v.n_heads {
                        rows.push(vec![
                            v.sample_index.to_string(),
                            bundle.labels()[v.sample_index].to_string(),
                            bundle.predictions()[v.sample_index].to_string(),
                            v.class_index.to_string(),
                            l.to_string(),
                            h.to_string(),
                            num(v.get(l, h)),
                            v.degenerate_heads.contains(&(l, h)).to_string(),
                        ]);
                    }
                }
            }
            w.csv(
                &format!("{stem}.csv"),
                &["sample_index", "label", "prediction", "class", "layer", "head", "ia_score", "degenerate"],
                rows,
            )?;
            w.json(&format!("{stem}.json"), &iavs)?;
            let (labels, stats) = per_head_summaries(bundle, |j| iavs.iter().map(|v| v.scores[j]).collect())?;
            w.svg(&format!("{stem}_boxplot.svg"), || {
                svg::boxplot("IA-Score per head", "IA-Score", &labels, &stats, &[])
            })
        }
        Analysis::GlobalIav => {
            let g = global_iav(bundle, mode)?;
            write_global(w, &stem, &g, opts.sort_heads, "Global IAV")
        }
        Analysis::Aav => {
            let file = opts
                .aav_baseline
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("aav needs a baseline map".into()))?;
            let baseline = read_baseline(file, bundle)?;
            let tag = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let g = aav(bundle, &baseline, &tag)?;
            write_global(w, &stem, &g, opts.sort_heads, "AAV")
        }
        Analysis::Entropy => {
            let e = entropy_profile(bundle)?;
            let rows = e
                .stats
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    let mut row = vec![(j / e.n_heads).to_string(), (j % e.n_heads).to_string()];
                    row.extend(summary_cells(s));
                    row
                })
                .collect();
            w.csv(
                &format!("{stem}.csv"),
                &["layer", "head", "mean", "min", "q1", "median", "q3", "max", "variance"],
                rows,
            )?;
            w.json(&format!("{stem}.json"), &e)?;
            let labels = head_labels(bundle);
            w.svg(&format!("{stem}_boxplot.svg"), || {
                svg::boxplot("Attention entropy per head", "entropy (nats)", &labels, &e.stats, &[])
            })
        }
        Analysis::Heads => {
            let heads = classify_heads_with(bundle, mode)?;
            let rows = heads
                .iter()
                .map(|p| {
                    let s = &p.ia_score;
                    vec![
                        p.layer.to_string(),
                        p.head.to_string(),
                        num(s.median),
                        num(s.q1),
                        num(s.q3),
                        num(s.min),
                        num(s.max),
                        num(p.mean_entropy),
                        p.head_type.as_str().to_string(),
                        num(s.mean),
                        num(s.variance),
                    ]
                })
                .collect();
            w.csv(
                &format!("{stem}.csv"),
                &["l", "h", "median", "q1", "q3", "min", "max", "mean_entropy", "head_type", "mean", "variance"],
                rows,
            )?;
            w.json(&format!("{stem}.json"), &heads)?;
            let labels = head_labels(bundle);
            let stats: Vec<Summary> = heads.iter().map(|p| p.ia_score).collect();
            let colors: Vec<&str> = heads
                .iter()
                .map(|p| if p.head_type == HeadType::High { svg::palette(0) } else { svg::palette(1) })
                .collect();
            w.svg(&format!("{stem}_boxplot.svg"), || {
                svg::boxplot("IA-Score per head (blue High, orange Low)", "IA-Score", &labels, &stats, &colors)
            })
        }
        Analysis::MaskCurve => {
            let model = load_model(opts, path)?;
            let mut curves = Vec::new();
            for source in &opts.mask_sources {
                let source = source.resolve(mode, spec.seed);
                let points = masking_curve(bundle, &model, source, &opts.mask_ratios, opts.mask_fill)?;
                curves.push(Curve { name: source.label(), points });
            }
            write_curves(w, &stem, &["source", "ratio", "accuracy"], &curves, "Accuracy under masking", "masking ratio")
        }
        Analysis::Perturb => {
            let model = load_model(opts, path)?;
            let mut curves = Vec::new();
            if !opts.blur_sigmas.is_empty() {
                let blurs: Vec<Perturbation> =
                    opts.blur_sigmas.iter().map(|&sigma| Perturbation::Blur { sigma }).collect();
                curves.push(Curve {
                    name: "blur".into(),
                    points: robustness_curve(bundle, &model, &blurs)?,
                });
            }
            if let Some((grid, swaps)) = &opts.jigsaw {
                let perturbations: Vec<Perturbation> = swaps
                    .iter()
                    .map(|&k| Perturbation::Jigsaw(JigsawSpec { grid: *grid, swaps: k, seed: spec.seed }))
                    .collect();
                curves.push(Curve {
                    name: format!("jigsaw-g{grid}"),
                    points: robustness_curve(bundle, &model, &perturbations)?,
                });
            }
            let clean = baseline_accuracy(bundle, &model)?;
            w.json(&format!("{stem}_baseline.json"), &serde_json::json!({ "clean_accuracy": clean }))?;
            write_curves(w, &stem, &["perturbation", "degree", "accuracy"], &curves, "Accuracy under perturbation", "sigma / swaps")
        }
        Analysis::Embed => run_embed(spec, bundle, w, &stem),
        Analysis::Diff => {
            let final_path = opts
                .final_bundle
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("diff needs a final bundle".into()))?;
            let final_bundle =
                load_bundle(final_path).map_err(|e| e.context(format!("final bundle {}", final_path.display())))?;
            let attribution = checkpoint_diff(bundle, &final_bundle, DiffTarget::Attribution)?;
            let attention = checkpoint_diff(bundle, &final_bundle, DiffTarget::Attention)?;
            w.csv(
                &format!("{stem}.csv"),
                &["target", "value"],
                vec![
                    vec!["attribution".into(), num(attribution)],
                    vec!["attention".into(), num(attention)],
                ],
            )?;
            w.json(
                &format!("{stem}.json"),
                &serde_json::json!({
                    "checkpoint": bundle.checkpoint_tag(),
                    "final": final_bundle.checkpoint_tag(),
                    "attribution": attribution,
                    "attention": attention,
                }),
            )
        }
    }
}

fn summary_cells(s: &Summary) -> Vec<String> {
    [s.mean, s.min, s.q1, s.median, s.q3, s.max, s.variance].into_iter().map(num).collect()
}

fn head_labels(bundle: &AnalysisBundle) -> Vec<String> {
    (0..bundle.n_layers())
        .flat_map(|l| (0..bundle.n_heads()).map(move |h| format!("{l}.{h}")))
        .collect()
}

fn per_head_summaries(
    bundle: &AnalysisBundle,
    column: impl Fn(usize) -> Vec<f64>,
) -> Result<(Vec<String>, Vec<Summary>)> {
    let stats = (0..bundle.n_layers() * bundle.n_heads())
        .map(|j| Summary::of(&column(j)))
        .collect::<Result<Vec<_>>>()?;
    Ok((head_labels(bundle), stats))
}

fn write_global(w: &mut Writer<'_>, stem: &str, g: &GlobalIav, sort: bool, title: &str) -> Result<()> {
    let rows = (0..g.n_layers)
        .flat_map(|l| (0..g.n_heads).map(move |h| (l, h)))
        .map(|(l, h)| vec![l.to_string(), h.to_string(), num(g.get(l, h))])
        .collect();
    w.csv(&format!("{stem}.csv"), &["layer", "head", "score"], rows)?;
    w.json(&format!("{stem}.json"), g)?;
    w.svg(&format!("{stem}_heatmap.svg"), || {
        svg::heatmap(title, &g.scores, g.n_layers, g.n_heads, sort)
    })
}

struct Curve {
    name: String,
    points: Vec<CurvePoint>,
}

fn write_curves(
    w: &mut Writer<'_>,
    stem: &str,
    header: &[&str],
    curves: &[Curve],
    title: &str,
    x_label: &str,
) -> Result<()> {
    let rows = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| vec![c.name.clone(), num(p.x), num(p.accuracy)]))
        .collect();
    w.csv(&format!("{stem}.csv"), header, rows)?;
    let json: Vec<_> = curves
        .iter()
        .map(|c| serde_json::json!({ "name": c.name, "points": c.points }))
        .collect();
    w.json(&format!("{stem}.json"), &json)?;
    let series: Vec<svg::Series> = curves
        .iter()
        .map(|c| svg::Series {
            name: c.name.clone(),
            points: c.points.iter().map(|p| (p.x, p.accuracy)).collect(),
        })
        .collect();
    w.svg(&format!("{stem}.svg"), || svg::line_chart(title, x_label, "accuracy", &series))
}

#[derive(Serialize)]
struct EmbedSummary {
    layer: usize,
    perplexity: f64,
    perplexity_capped: bool,
    unconverged_rows: usize,
    kl_after_exaggeration: f64,
    final_kl: f64,
}

fn run_embed(spec: &ReportSpec, bundle: &AnalysisBundle, w: &mut Writer<'_>, stem: &str) -> Result<()> {
    let iavs = iav_all(bundle, spec.label_mode)?;
    let layers = spec
        .options
        .embed_layers
        .clone()
        .unwrap_or_else(|| (0..bundle.n_layers()).collect());
    let config = spec.options.tsne.clone().with_seed(spec.seed);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut figures = Vec::new();
    for layer in layers {
        let result = tsne(&layer_slice(&iavs, layer)?, &config)?;
        let xy = result.embedding.data();
        let mut points = Vec::new();
        for v in &iavs {
            let i = v.sample_index;
            let (x, y) = (xy[2 * i], xy[2 * i + 1]);
            rows.push(vec![
                i.to_string(),
                bundle.labels()[i].to_string(),
                bundle.predictions()[i].to_string(),
                layer.to_string(),
                num(x),
                num(y),
            ]);
            points.push((x, y, bundle.labels()[i]));
        }
        summaries.push(EmbedSummary {
            layer,
            perplexity: result.affinities.perplexity,
            perplexity_capped: result.affinities.capped,
            unconverged_rows: result.affinities.unconverged,
            kl_after_exaggeration: result.kl_after_exaggeration,
            final_kl: result.final_kl,
        });
        figures.push((layer, points));
    }
    w.csv(
        &format!("{stem}.csv"),
        &["sample_index", "label", "prediction", "layer", "x", "y"],
        rows,
    )?;
    w.json(
        &format!("{stem}.json"),
        &serde_json::json!({ "config": config, "label_mode": spec.label_mode, "layers": summaries }),
    )?;
    let names = bundle.class_names().to_vec();
    for (layer, points) in figures {
        w.svg(&format!("{stem}_layer{layer}.svg"), || {
            svg::scatter(&format!("t-SNE of layer {layer} IAVs"), &points, &names)
        })?;
    }
    Ok(())
}

fn load_model(opts: &AnalysisOptions, bundle_path: &Path) -> Result<ViTModel> {
    let dir = opts.model.clone().unwrap_or_else(|| bundle_path.join(MODEL_DIR));
    if !dir.join("manifest.json").is_file() {
        return Err(Error::MissingModel(format!(
            "no model at {}; pass one explicitly",
            dir.display()
        )));
    }
    ViTModel::load(&dir)
}

/// Reads an AAV baseline map and decides between one shared map and one map
/// per sample from its shape.
pub fn read_baseline(path: &Path, bundle: &AnalysisBundle) -> Result<Baseline> {
    let array = npy::decode(&fsutil::read(path)?).map_err(|e| e.context(path.display().to_string()))?;
    let shape = array.shape.clone();
    let values = Tensor::new(shape.clone(), array.into_f64())?;
    let n = bundle.n_samples();
    let p = bundle.n_patches();
    let map = |t: Tensor| AttributionMap::new(t, 0, "baseline");
    let per_sample = |inner: Vec<usize>| -> Result<Baseline> {
        let stride: usize = inner.iter().product();
        let maps = (0..n)
            .map(|i| Ok(map(Tensor::new(inner.clone(), values.data()[i * stride..(i + 1) * stride].to_vec())?)))
            .collect::<Result<_>>()?;
        Ok(Baseline::PerSample(maps))
    };
    match shape.as_slice() {
        [_] => Ok(Baseline::Shared(map(values))),
        [rows, cols] if *rows == n && *cols == p => per_sample(vec![p]),
        [_, _] => Ok(Baseline::Shared(map(values))),
        [m, rows, cols] if *m == n => per_sample(vec![*rows, *cols]),
        other => Err(Error::shape(format!("baseline map of shape {other:?}"))),
    }
}

/// Builds a seeded synthetic bundle from a randomly initialized toy ViT and
/// writes it to `out`, with the model under `out/model`.
///
/// Each image is low-amplitude noise with one bright patch; the ground-truth
/// label is that patch's index modulo the class count. Predictions come from
/// the model, attention is the CLS row of every head, and attribution is
/// per-class occlusion with a zero baseline.
pub fn make_synthetic_bundle(
    config: &ViTConfig,
    n_samples: usize,
    seed: u64,
    out: impl AsRef<Path>,
) -> Result<AnalysisBundle> {
    let out = out.as_ref();
    if n_samples == 0 {
        return Err(Error::EmptyBundle);
    }
    let model = ViTModel::init(config.clone())?;
    let [rows, cols, ch] = config.image_size;
    let ps = config.patch_size;
    let grid_c = cols / ps;
    let p = config.n_patches();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n_samples * rows * cols * ch);
    let mut labels = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut img: Vec<f64> = (0..rows * cols * ch).map(|_| rng.random_range(0.0..0.2)).collect();
        let bright = rng.random_range(0..p);
        labels.push(bright % config.n_classes);
        let (br, bc) = (bright / grid_c, bright % grid_c);
        for r in br * ps..(br + 1) * ps {
            let start = (r * cols + bc * ps) * ch;
            img[start..start + ps * ch].fill(1.0);
        }
        images.extend(img);
    }
    let images = Tensor::new(vec![n_samples, rows, cols, ch], images)?;

    let mut attention = Vec::with_capacity(n_samples * config.n_layers * config.n_heads * p);
    let mut attribution = Vec::with_capacity(n_samples * config.n_classes * p);
    let mut predictions = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let image = Tensor::new(vec![rows, cols, ch], images.slice(&[i])?.to_vec())?;
        let forward = model.forward(&image)?;
        attention.extend_from_slice(extract_cls_attention(&forward.attention)?.data());
        predictions.push(crate::scorer::argmax(&forward.scores));
        attribution.extend_from_slice(occlusion_all_classes(&model, &image, ps, 0.0)?.data());
    }

    let parts = BundleParts {
        attention: Tensor::new(vec![n_samples, config.n_layers, config.n_heads, p], attention)?,
        attribution: Tensor::new(vec![n_samples, config.n_classes, p], attribution)?,
        attribution_target: AttributionTarget::PerClass,
        labels,
        predictions,
        images: Some(images),
        class_names: (0..config.n_classes).map(|c| format!("class{c}")).collect(),
        attribution_method: crate::attribution::OCCLUSION_TAG.to_string(),
        checkpoint_tag: format!("synthetic-{seed}"),
        patch_size: Some(ps),
    };
    let (bundle, _) = AnalysisBundle::from_parts(parts)?;
    save_bundle(&bundle, out)?;
    model.save(out.join(MODEL_DIR))?;
    Ok(bundle)
}
