//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Every expected value comes from an independent oracle in
//! this file or in `common`.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use iavkit::attribution::occlusion_attribution;
use iavkit::bundle::{AnalysisBundle, LabelMode};
use iavkit::embedding::{joint_probabilities, tsne, TsneConfig};
use iavkit::metrics::{attention_entropy, classify_heads, global_iav, ia_score, iav_all, HeadType};
use iavkit::perturb::{baseline_accuracy, jigsaw, mask_image, masking_curve, JigsawSpec, SaliencySource};
use iavkit::scorer::LinearPatchScorer;
use iavkit::vit::{extract_cls_attention, ViTConfig, ViTModel};
use iavkit::Tensor;
use rand::Rng;

/// Tolerances pinned by the acceptance criteria.
const EXACT: f64 = 1e-12;
const LOOSE: f64 = 1e-9;
const PERPLEXITY_TOL: f64 = 1e-3;
const TREND_GAP: f64 = 0.3;
const SILHOUETTE_MIN: f64 = 0.5;
const TSNE_BUDGET: Duration = Duration::from_secs(60);
const E2E_BUDGET: Duration = Duration::from_secs(10);

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ia_score_correctness() -> Check {
    let mut r = common::rng(2024);
    let p = 16;
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let attr = common::nonnegative(&mut r, p);
        let att = common::probability(&mut r, p);
        let got = ia_score(&attr, &att).map_err(|e| e.to_string())?.value;
        ensure((0.0..=1.0).contains(&got), || format!("case {case}: {got} outside [0, 1]"))?;
        let err = (got - common::oracle_cosine(&attr, &att)).abs();
        worst = worst.max(err);
        ensure(err <= EXACT, || format!("case {case}: oracle error {err:e}"))?;
        let c = r.random_range(1e-3..1e3);
        let scaled: Vec<f64> = attr.iter().map(|v| v * c).collect();
        let drift = (ia_score(&scaled, &att).unwrap().value - got).abs();
        ensure(drift <= EXACT, || format!("case {case}: scale drift {drift:e}"))?;
    }
    Ok(format!("1000 pairs, max oracle error {worst:.1e}"))
}

fn iav_oracle() -> Check {
    let (n, l, h, p) = (16, 2, 2, 16);
    let b = common::random_bundle(77, n, l, h, p);
    let iavs = iav_all(&b, LabelMode::Predicted).map_err(|e| e.to_string())?;
    let g = global_iav(&b, LabelMode::Predicted).map_err(|e| e.to_string())?;
    let mut sums = vec![0.0; l * h];
    for (i, v) in iavs.iter().enumerate() {
        ensure(v.scores.len() == l * h, || format!("IAV length {}", v.scores.len()))?;
        let attr = &b.attribution().data()[i * p..(i + 1) * p];
        for li in 0..l {
            for hi in 0..h {
                let base = ((i * l + li) * h + hi) * p;
                let want = common::oracle_cosine(attr, &b.attention().data()[base..base + p]);
                ensure((v.get(li, hi) - want).abs() <= EXACT, || format!("iav[{i}][{li},{hi}]"))?;
                sums[li * h + hi] += want;
            }
        }
    }
    for (j, s) in sums.iter().enumerate() {
        ensure((g.scores[j] - s / n as f64).abs() <= EXACT, || format!("global head {j}"))?;
    }

    let mut r = common::rng(78);
    let (mut att, mut attr) = (Vec::new(), Vec::new());
    for _ in 0..n {
        let v = common::probability(&mut r, p);
        for _ in 0..l * h {
            att.extend_from_slice(&v);
        }
        attr.extend(v);
    }
    let ones = global_iav(&common::bundle(n, l, h, p, att, attr), LabelMode::Predicted).unwrap();
    let dev = ones.scores.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    ensure(dev <= LOOSE, || format!("all-ones deviation {dev:e}"))?;
    Ok(format!("N={n} L={l} H={h} P={p}; all-ones deviation {dev:.1e}"))
}

fn entropy_bounds() -> Check {
    let p = 16;
    let mut one_hot = vec![0.0; p];
    one_hot[3] = 1.0;
    let h0 = attention_entropy(&one_hot).unwrap();
    ensure(h0 == 0.0, || format!("one-hot entropy {h0}"))?;
    let hu = attention_entropy(&vec![1.0 / p as f64; p]).unwrap();
    ensure((hu - (p as f64).ln()).abs() <= LOOSE, || format!("uniform entropy {hu}"))?;
    let mut r = common::rng(5);
    for case in 0..1000 {
        let v = common::probability(&mut r, p);
        let h = attention_entropy(&v).unwrap();
        ensure(h >= 0.0 && h <= (p as f64).ln(), || format!("case {case}: {h}"))?;
        ensure((h - common::oracle_entropy(&v)).abs() <= EXACT, || format!("case {case}: oracle"))?;
    }
    Ok("one-hot 0, uniform ln P, 1000 random in bounds".into())
}

/// Attention `[x, y, y, y]` whose cosine with `e0` is exactly `s`.
fn attention_with_cosine(s: f64) -> Vec<f64> {
    let y = (1.0 - s * s).sqrt() / (s * 3f64.sqrt());
    let total = 1.0 + 3.0 * y;
    vec![1.0 / total, y / total, y / total, y / total]
}

fn head_typing() -> Check {
    // One layer, three heads; attribution e0 for every sample. Head 1 uses
    // uniform attention, whose cosine with e0 is exactly 0.5.
    let (n, p) = (5, 4);
    let designed = [0.2, 0.5, 0.8];
    let mut att = Vec::new();
    for _ in 0..n {
        att.extend(attention_with_cosine(0.2));
        att.extend([0.25; 4]);
        att.extend(attention_with_cosine(0.8));
    }
    let attr: Vec<f64> = (0..n).flat_map(|_| [1.0, 0.0, 0.0, 0.0]).collect();
    let b = common::bundle(n, 1, 3, p, att, attr);
    let heads = classify_heads(&b).map_err(|e| e.to_string())?;
    let want = [HeadType::Low, HeadType::High, HeadType::High];
    for (i, hp) in heads.iter().enumerate() {
        ensure((hp.ia_score.median - designed[i]).abs() <= EXACT, || {
            format!("head {i} median {}", hp.ia_score.median)
        })?;
        ensure(hp.head_type == want[i], || format!("head {i} typed {:?}", hp.head_type))?;
    }
    Ok("medians 0.2/0.5/0.8 -> Low/High/High".into())
}

fn toy_vit() -> Check {
    let cfg = ViTConfig::toy(4, 11);
    let model = ViTModel::init(cfg.clone()).map_err(|e| e.to_string())?;
    let again = ViTModel::init(cfg.clone()).unwrap();
    let mut r = common::rng(12);
    let t = cfg.n_patches() + 1;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let img = Tensor::new(vec![16, 16, 1], (0..256).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
        let out = model.forward(&img).unwrap();
        for row in out.attention.data().chunks(t) {
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        let cls = extract_cls_attention(&out.attention).map_err(|e| e.to_string())?;
        for row in cls.data().chunks(cfg.n_patches()) {
            ensure(row.iter().all(|v| *v >= 0.0), || "negative CLS attention".into())?;
            ensure((row.iter().sum::<f64>() - 1.0).abs() <= LOOSE, || "CLS row sum".into())?;
        }
        let twin = again.forward(&img).unwrap();
        let same = out.scores.iter().zip(&twin.scores).all(|(a, b)| a.to_bits() == b.to_bits())
            && out.attention.data().iter().zip(twin.attention.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || "forward not bit-deterministic".into())?;
    }
    ensure(worst <= LOOSE, || format!("row sum error {worst:e}"))?;
    Ok(format!("20 images, max row-sum error {worst:.1e}, bit-deterministic"))
}

fn occlusion_linear() -> Check {
    let mut r = common::rng(99);
    for case in 0..100 {
        let (k, ps) = (3, 2);
        let (rows, cols, ch) = (8, 6, 2);
        let p = (rows / ps) * (cols / ps);
        let w: Vec<f64> = (0..k * p).map(|_| r.random_range(-1.0..1.0)).collect();
        let scorer = LinearPatchScorer::new(Tensor::new(vec![k, p], w.clone()).unwrap(), ps).unwrap();
        let img: Vec<f64> = (0..rows * cols * ch).map(|_| r.random_range(0.0..1.0)).collect();
        let image = Tensor::new(vec![rows, cols, ch], img.clone()).unwrap();
        let baseline = r.random_range(-0.5..0.5);
        let class = r.random_range(0..k);
        let map = occlusion_attribution(&scorer, &image, ps, class, baseline).map_err(|e| e.to_string())?;
        for q in 0..p {
            let (qr, qc) = (q / (cols / ps), q % (cols / ps));
            let mut mean = 0.0;
            for y in qr * ps..(qr + 1) * ps {
                for x in qc * ps..(qc + 1) * ps {
                    for c in 0..ch {
                        mean += img[(y * cols + x) * ch + c];
                    }
                }
            }
            mean /= (ps * ps * ch) as f64;
            let want = (w[class * p + q] * (mean - baseline)).max(0.0);
            let got = map.values.data()[q];
            ensure((got - want).abs() <= EXACT, || format!("case {case} patch {q}: {got} vs {want}"))?;
        }
    }
    Ok("100 seeded cases match w·(mean - baseline), clamped at 0".into())
}

fn sorted_bits(v: &[f64]) -> Vec<u64> {
    let mut b: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
    b.sort_unstable();
    b
}

fn perturbations() -> Check {
    let mut r = common::rng(31);
    let img = Tensor::new(vec![16, 16, 3], (0..768).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
    for g in [2, 4, 8, 16] {
        for k in [0, 1, 3, 10, 50] {
            let out = jigsaw(&img, &JigsawSpec { grid: g, swaps: k, seed: (g * 100 + k) as u64 }).unwrap();
            ensure(sorted_bits(out.data()) == sorted_bits(img.data()), || format!("jigsaw g={g} k={k}"))?;
        }
    }

    let saliency: Vec<f64> = (0..16).map(|_| r.random_range(0.0..1.0)).collect();
    for tenth in 1usize..=9 {
        let ratio = tenth as f64 / 10.0;
        let masked = mask_image(&img, &saliency, 4, ratio, -1.0).unwrap();
        let mut count = 0;
        for q in 0..16 {
            let (y, x) = ((q / 4) * 4, (q % 4) * 4);
            if masked.get(&[y, x, 0]).unwrap() == -1.0 {
                count += 1;
            }
        }
        let want = (16 * tenth).div_ceil(10);
        ensure(count == want, || format!("ratio {ratio}: {count} masked, want {want}"))?;
    }

    let (bundle, scorer) = scored_bundle(32);
    let base = baseline_accuracy(&bundle, &scorer).map_err(|e| e.to_string())?;
    for source in [SaliencySource::AttentionMean, SaliencySource::Random { seed: 1 }] {
        let curve = masking_curve(&bundle, &scorer, source, &[0.0], 0.0).map_err(|e| e.to_string())?;
        ensure(curve[0].accuracy == base, || format!("ratio 0 accuracy {} vs {base}", curve[0].accuracy))?;
    }
    Ok(format!("jigsaw multiset exact for 20 (g, k); counts = ceil(16r); ratio-0 accuracy {base}"))
}

fn scored_bundle(n: usize) -> (AnalysisBundle, LinearPatchScorer) {
    use iavkit::bundle::{AttributionTarget, BundleParts};
    let mut r = common::rng(41);
    let (k, p) = (3, 16);
    let w = Tensor::new(vec![k, p], (0..k * p).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let scorer = LinearPatchScorer::new(w, 2).unwrap();
    let images = Tensor::new(vec![n, 8, 8, 1], (0..n * 64).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
    let parts = BundleParts {
        attention: Tensor::new(vec![n, 1, 2, p], (0..n * 2).flat_map(|_| common::probability(&mut r, p)).collect())
            .unwrap(),
        attribution: Tensor::new(vec![n, p], (0..n).flat_map(|_| common::nonnegative(&mut r, p)).collect()).unwrap(),
        attribution_target: AttributionTarget::Predicted,
        labels: labels.clone(),
        predictions: labels,
        images: Some(images),
        class_names: (0..k).map(|c| c.to_string()).collect(),
        attribution_method: "fixture".into(),
        checkpoint_tag: "t".into(),
        patch_size: Some(2),
    };
    (AnalysisBundle::from_parts(parts).unwrap().0, scorer)
}

/// Peaked non-negative map: a few hot patches over a faint floor.
fn peaked(r: &mut impl Rng, p: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..p).map(|_| r.random_range(0.0..0.05)).collect();
    for _ in 0..2 {
        v[r.random_range(0..p)] += r.random_range(0.5..1.0);
    }
    v
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let t: f64 = v.iter().sum();
    v.into_iter().map(|x| x / t).collect()
}

/// Bundle whose last layer attends like the attribution (`aligned`) or
/// independently of it.
fn trend_bundle(aligned: bool) -> AnalysisBundle {
    let (n, l, h, p) = (32, 4, 4, 16);
    let mut r = common::rng(if aligned { 500 } else { 501 });
    let mut att = Vec::new();
    let mut attr = Vec::new();
    for _ in 0..n {
        let a = peaked(&mut r, p);
        for layer in 0..l {
            for _ in 0..h {
                if layer == l - 1 && aligned {
                    let noisy: Vec<f64> = a.iter().map(|v| v + r.random_range(0.0..0.02)).collect();
                    att.extend(normalized(noisy));
                } else if layer == l - 1 {
                    att.extend(normalized(peaked(&mut r, p)));
                } else {
                    att.extend(common::probability(&mut r, p));
                }
            }
        }
        attr.extend(a);
    }
    common::bundle(n, l, h, p, att, attr)
}

fn qualitative_trend() -> Check {
    let aligned = global_iav(&trend_bundle(true), LabelMode::Predicted).map_err(|e| e.to_string())?;
    let independent = global_iav(&trend_bundle(false), LabelMode::Predicted).map_err(|e| e.to_string())?;
    let last = aligned.n_layers - 1;
    let (a, b) = (aligned.layer_mean(last), independent.layer_mean(last));
    ensure(a - b > TREND_GAP, || format!("last-layer gap {:.3} (aligned {a:.3}, independent {b:.3})", a - b))?;
    Ok(format!("last-layer global IAV {a:.3} vs {b:.3}, gap {:.3}", a - b))
}

fn tsne_checks() -> Check {
    let (pts, labels) = common::clusters(7, 20, 144);
    let out = tsne(&pts, &TsneConfig::default().with_seed(7)).map_err(|e| e.to_string())?;
    let sum: f64 = out.affinities.joint.iter().sum();
    ensure((sum - 1.0).abs() <= LOOSE, || format!("P sums to {sum}"))?;
    let xy: Vec<(f64, f64)> = out.embedding.data().chunks(2).map(|c| (c[0], c[1])).collect();
    let sil = common::silhouette(&xy, &labels);
    ensure(sil > SILHOUETTE_MIN, || format!("silhouette {sil:.3}"))?;

    let mut r = common::rng(8);
    let big = Tensor::new(vec![300, 12], (0..3600).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let aff = joint_probabilities(&big, 30.0).map_err(|e| e.to_string())?;
    let worst = aff.achieved.iter().map(|p| (p - 30.0).abs()).fold(0.0, f64::max);
    ensure(!aff.capped && worst <= PERPLEXITY_TOL, || format!("perplexity error {worst:e}"))?;
    let start = Instant::now();
    let run = tsne(&big, &TsneConfig::default().with_seed(1)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(elapsed < TSNE_BUDGET, || format!("N=300 took {elapsed:?}"))?;
    ensure((run.affinities.joint.iter().sum::<f64>() - 1.0).abs() <= LOOSE, || "N=300 P sum".into())?;
    Ok(format!(
        "P sum err {:.1e}; perplexity err {worst:.1e}; silhouette {sil:.3}; N=300 in {:.2}s",
        (sum - 1.0).abs(),
        elapsed.as_secs_f64()
    ))
}

fn csv_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let exe = env!("CARGO_BIN_EXE_iavkit");
    let mut outputs = Vec::new();
    for run in 0..2 {
        let bundle = dir.path().join(format!("bundle{run}"));
        let out = dir.path().join(format!("report{run}"));
        let start = Instant::now();
        let synth = Command::new(exe)
            .args(["synth", "--out", bundle.to_str().unwrap(), "--n", "64", "--layers", "2", "--heads", "2"])
            .args(["--image", "16", "--patch", "4", "--seed", "7"])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(synth.status.success(), || String::from_utf8_lossy(&synth.stderr).into_owned())?;
        let report = Command::new(exe)
            .args(["report", "--bundle", bundle.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .args(["--seed", "7", "--figures"])
            .output()
            .map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        ensure(report.status.success(), || String::from_utf8_lossy(&report.stderr).into_owned())?;
        ensure(elapsed < E2E_BUDGET, || format!("run {run} took {elapsed:?}"))?;
        outputs.push((csv_contents(&out), elapsed));
    }
    let (a, b) = (&outputs[0].0, &outputs[1].0);
    ensure(a.len() >= 7, || format!("only {} CSVs", a.len()))?;
    ensure(a == b, || "CSV outputs differ between seeded runs".into())?;
    Ok(format!(
        "{} CSVs byte-identical; runs took {:.2}s and {:.2}s",
        a.len(),
        outputs[0].1.as_secs_f64(),
        outputs[1].1.as_secs_f64()
    ))
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 10] = [
        ("ia-score correctness", ia_score_correctness),
        ("iav/global-iav oracle", iav_oracle),
        ("entropy bounds", entropy_bounds),
        ("head typing", head_typing),
        ("toy vit", toy_vit),
        ("occlusion attribution", occlusion_linear),
        ("perturbations", perturbations),
        ("qualitative trend", qualitative_trend),
        ("t-sne", tsne_checks),
        ("end-to-end", end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
