use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use depthsign::stack::ModelBundle;
use depthsign::StackedNetwork;
use tempfile::TempDir;

const SMALL: &[&str] = &[
    "--ae1-hidden",
    "8",
    "--ae1-epochs",
    "15",
    "--ae2-hidden",
    "5",
    "--ae2-epochs",
    "10",
    "--softmax-epochs",
    "30",
];

fn depthsign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthsign"))
        .args(args)
        .env_remove("DEPTHSIGN_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `defaults` as flag/value pairs, minus any flag that `extra` sets, then
/// `extra`.
fn merged<'a>(defaults: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    let mut out = Vec::new();
    for pair in defaults.chunks(2) {
        if !extra.contains(&pair[0]) {
            out.extend_from_slice(pair);
        }
    }
    out.extend_from_slice(extra);
    out
}

fn gen(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["gen-data", "--out", s(dir)];
    args.extend(merged(
        &["--per-class", "12", "--side", "8", "--seed", "5"],
        extra,
    ));
    ok(depthsign(&args));
    dir.join("manifest.tsv")
}

fn train(manifest: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--manifest", s(manifest), "--output", s(out)];
    args.extend(merged(SMALL, extra));
    depthsign(&args)
}

fn network(bundle: &Path) -> StackedNetwork {
    ModelBundle::from_bytes(&fs::read(bundle).unwrap())
        .unwrap()
        .network
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_data_is_reproducible_and_seed_sensitive() {
    let tmp = TempDir::new().unwrap();
    gen(&tmp.path().join("a"), &[]);
    gen(&tmp.path().join("b"), &[]);
    gen(&tmp.path().join("c"), &["--seed", "6"]);
    let a = tree(&tmp.path().join("a"));
    assert_eq!(a.len(), 5 * 12 + 1);
    assert_eq!(a, tree(&tmp.path().join("b")));
    assert_ne!(a, tree(&tmp.path().join("c")));
}

#[test]
fn gen_data_rejects_tiny_images_without_writing() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("d");
    let res = depthsign(&["gen-data", "--out", s(&out), "--side", "2"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn train_eval_predict_agree() {
    let tmp = TempDir::new().unwrap();
    let manifest = gen(&tmp.path().join("data"), &["--subjects", "2"]);
    let run = tmp.path().join("run");
    ok(train(&manifest, &run, &[]));
    let report = fs::read_to_string(run.join("report_validation.csv")).unwrap();
    assert!(report.starts_with("metric,su1,su2,avg\n"), "{report}");
    for f in [
        "config.txt",
        "su1/model.dsnw",
        "su2/ae1.dsae",
        "su2/ae2.txt",
        "su1/trace_softmax.csv",
    ] {
        assert!(run.join(f).is_file(), "{f}");
    }

    // eval re-derives the same validation partition from the bundles
    let eval_dir = tmp.path().join("eval");
    let m1 = run.join("su1/model.dsnw");
    let m2 = run.join("su2/model.dsnw");
    ok(depthsign(&[
        "eval",
        "--model",
        s(&m1),
        "--model",
        s(&m2),
        "--manifest",
        s(&manifest),
        "--out",
        s(&eval_dir),
    ]));
    assert_eq!(
        fs::read_to_string(eval_dir.join("report_validation.csv")).unwrap(),
        report
    );

    let preds = fs::read_to_string(eval_dir.join("predictions_validation.csv")).unwrap();
    let mut lines = preds.lines();
    assert_eq!(
        lines.next(),
        Some("subject,image,true_label,predicted_label")
    );
    let su1: Vec<(String, String)> = lines
        .filter(|l| l.starts_with("1,"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[3].to_string())
        })
        .collect();
    assert_eq!(su1.len(), 5 * 3);

    let images: Vec<String> = su1
        .iter()
        .map(|(p, _)| s(&tmp.path().join("data").join(p)).to_string())
        .collect();
    let mut args = vec!["predict", "--model", s(&m1)];
    args.extend(images.iter().map(String::as_str));
    let out = ok(depthsign(&args));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(rows.len(), su1.len());
    for (row, (_, predicted)) in rows.iter().zip(&su1) {
        let f: Vec<&str> = row.split('\t').collect();
        assert_eq!(f[1], predicted);
        let probs: Vec<f64> = f[2].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(probs.len(), 5);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn train_is_reproducible_and_parallel_safe() {
    let tmp = TempDir::new().unwrap();
    let manifest = gen(&tmp.path().join("data"), &["--subjects", "3"]);
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    ok(train(&manifest, &a, &["--seed", "9"]));
    ok(train(&manifest, &b, &["--seed", "9"]));
    ok(train(
        &manifest,
        &c,
        &["--seed", "9", "--parallel-subjects", "3"],
    ));
    // config snapshots name the output directory and worker count; every
    // other artifact must match byte for byte
    let artifacts = |dir: &Path| -> Vec<_> {
        tree(dir)
            .into_iter()
            .filter(|(p, _)| !p.ends_with("config.txt") && !p.ends_with("model.dsnw"))
            .collect()
    };
    let ta = artifacts(&a);
    assert_eq!(ta.len(), 2 + 3 * 7);
    assert_eq!(ta, artifacts(&b));
    assert_eq!(ta, artifacts(&c));
    for sub in ["su1", "su2", "su3"] {
        let m = format!("{sub}/model.dsnw");
        assert_eq!(network(&a.join(&m)), network(&b.join(&m)));
        assert_eq!(network(&a.join(&m)), network(&c.join(&m)));
    }
}

#[test]
fn seed_comes_from_environment_unless_given() {
    let tmp = TempDir::new().unwrap();
    let manifest = gen(&tmp.path().join("data"), &[]);
    let run = |dir: &str, env: Option<&str>, extra: &[&str]| {
        let out = tmp.path().join(dir);
        let mut args = vec![
            "train",
            "--init-only",
            "--manifest",
            s(&manifest),
            "--output",
            s(&out),
        ];
        args.extend_from_slice(extra);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_depthsign"));
        cmd.args(&args).env_remove("DEPTHSIGN_SEED");
        if let Some(v) = env {
            cmd.env("DEPTHSIGN_SEED", v);
        }
        ok(cmd.output().unwrap());
        network(&out.join("su1/model.dsnw"))
    };
    let from_env = run("env", Some("42"), &[]);
    assert_eq!(from_env, run("flag", None, &["--seed", "42"]));
    assert_eq!(run("both", Some("7"), &["--seed", "42"]), from_env);
    assert_ne!(run("default", None, &[]), from_env);
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let manifest = gen(&tmp.path().join("data"), &[]);
    let out = tmp.path().join("run");
    assert_eq!(
        train(&manifest, &out, &["--momentum-typo", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        train(&manifest, &out, &["--ae1-momentum", "1.5"])
            .status
            .code(),
        Some(2)
    );
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "ae1_hidden = lots\n").unwrap();
    assert_eq!(
        train(&manifest, &out, &["--config", s(&cfg)]).status.code(),
        Some(2)
    );
    assert!(!out.exists(), "nothing is written when validation fails");

    let missing = tmp.path().join("nope.dsnw");
    let res = depthsign(&["eval", "--model", s(&missing), "--manifest", s(&manifest)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn eval_rejects_mismatched_image_size() {
    let tmp = TempDir::new().unwrap();
    let small = gen(&tmp.path().join("small"), &[]);
    let big = gen(&tmp.path().join("big"), &["--side", "10"]);
    let run = tmp.path().join("run");
    ok(train(&small, &run, &["--init-only"]));
    let res = depthsign(&[
        "eval",
        "--model",
        s(&run.join("su1/model.dsnw")),
        "--manifest",
        s(&big),
        "--out",
        s(&tmp.path().join("eval")),
    ]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("64 pixels") && err.contains("10x10"), "{err}");
}

#[test]
fn divergence_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let manifest = gen(&tmp.path().join("data"), &[]);
    let res = train(
        &manifest,
        &tmp.path().join("run"),
        &[
            "--ae1-learning-rate",
            "1e6",
            "--ae1-l2-weight",
            "1",
            "--ae1-epochs",
            "400",
        ],
    );
    assert_eq!(res.status.code(), Some(3));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("ae1"), "{err}");
}

#[test]
fn plot_data_writes_one_csv_per_figure() {
    let tmp = TempDir::new().unwrap();
    let manifest = gen(
        &tmp.path().join("data"),
        &["--subjects", "5", "--per-class", "8"],
    );
    let run = tmp.path().join("run");
    ok(train(&manifest, &run, &[]));
    let figs = tmp.path().join("figs");
    let trace = run.join("su3/trace_ae1.csv");
    ok(depthsign(&[
        "plot-data",
        "--report",
        s(&run.join("report_validation.csv")),
        "--trace",
        s(&trace),
        "--out",
        s(&figs),
    ]));
    for (stem, metric) in [
        ("fig7_nrmse", "nrmse"),
        ("fig8_acc", "acc"),
        ("fig9_f1s", "f1s"),
        ("fig10_ber", "ber"),
    ] {
        let text = fs::read_to_string(figs.join(format!("{stem}.csv"))).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("subject,{metric}"));
        assert_eq!(lines.len(), 6);
        assert!(lines[1].starts_with("SU1,") && lines[5].starts_with("SU5,"));
    }
    assert_eq!(
        fs::read_to_string(figs.join("curve_trace_ae1.csv")).unwrap(),
        fs::read_to_string(&trace).unwrap()
    );

    let broken = tmp.path().join("broken.csv");
    fs::write(&broken, "epoch,train_objective,val_objective\n0,1\n").unwrap();
    let res = depthsign(&[
        "plot-data",
        "--report",
        s(&run.join("report_validation.csv")),
        "--trace",
        s(&broken),
        "--out",
        s(&tmp.path().join("figs2")),
    ]);
    assert_eq!(res.status.code(), Some(2));
}
