use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn iavkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iavkit")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, n: &str) -> PathBuf {
    let bundle = dir.join("bundle");
    let out = iavkit(&["synth", "--out", s(&bundle), "--n", n, "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    bundle
}

fn files_with_ext(dir: &Path, ext: &str) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(ext))
        .collect();
    v.sort();
    v
}

#[test]
fn global_iav_alone_writes_one_csv_and_one_svg() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth(dir.path(), "8");
    let out = dir.path().join("out");
    let run = iavkit(&["global-iav", "--bundle", s(&bundle), "--out", s(&out), "--figures"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(files_with_ext(&out, ".csv"), vec!["global_iav.csv"]);
    assert_eq!(files_with_ext(&out, ".svg"), vec!["global_iav_heatmap.svg"]);
    let csv = fs::read_to_string(out.join("global_iav.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("layer,head,score"));
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn missing_bundle_fails_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-bundle");
    let run = iavkit(&["heads", "--bundle", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert!(!run.status.success());
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains(s(&missing)), "{err}");
}

#[test]
fn validate_reports_dims() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth(dir.path(), "5");
    let run = iavkit(&["validate", "--bundle", s(&bundle)]);
    assert!(run.status.success());
    let text = String::from_utf8_lossy(&run.stdout);
    assert!(text.contains("N=5 L=2 H=2 P=16"), "{text}");
}

#[test]
fn subcommands_with_extra_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth(dir.path(), "8");
    let baseline = dir.path().join("uniform.npy");
    fs::write(&baseline, iavkit::npy::encode_f64(&[16], &[1.0; 16])).unwrap();
    let out = dir.path().join("out");
    let o = s(&out);
    let b = s(&bundle);

    let runs: Vec<Vec<&str>> = vec![
        vec!["aav", "--bundle", b, "--out", o, "--baseline", s(&baseline)],
        vec!["mask-curve", "--bundle", b, "--out", o, "--ratios", "0,0.5", "--source", "attention:1,0"],
        vec!["perturb", "--bundle", b, "--out", o, "--jigsaw", "2,2"],
        vec!["embed", "--bundle", b, "--out", o, "--layer", "1", "--labels", "ground-truth"],
        vec!["diff", "--bundle", b, "--out", o, "--final", b],
        vec!["iav", "--bundle", b, "--out", o],
        vec!["entropy", "--bundle", b, "--out", o],
    ];
    for args in runs {
        let run = iavkit(&args);
        assert!(run.status.success(), "{args:?}: {}", String::from_utf8_lossy(&run.stderr));
    }
    let curve = fs::read_to_string(out.join("mask_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);
    assert!(curve.contains("attention-l1h0,0.5,"));
    let perturb = fs::read_to_string(out.join("perturb.csv")).unwrap();
    assert_eq!(perturb.lines().skip(1).filter(|l| l.starts_with("jigsaw-g2")).count(), 3);
    let diff = fs::read_to_string(out.join("diff.csv")).unwrap();
    assert_eq!(diff, "target,value\nattribution,0\nattention,0\n");
    let embed = fs::read_to_string(out.join("embed.csv")).unwrap();
    assert_eq!(embed.lines().next(), Some("sample_index,label,prediction,layer,x,y"));
    assert!(embed.lines().skip(1).all(|l| l.split(',').nth(3) == Some("1")));
}

#[test]
fn bad_arguments_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = synth(dir.path(), "4");
    let o = dir.path().join("o");
    let run = iavkit(&["embed", "--bundle", s(&bundle), "--out", s(&o), "--layer", "5"]);
    assert!(!run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("embed"));
    let run = iavkit(&["heads", "--bundle", s(&bundle), "--labels", "sideways"]);
    assert!(!run.status.success());
}
