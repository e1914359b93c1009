//! End-to-end tests of the `autozoom` binary: artifact round trips,
//! determinism, exit codes, and stage composition.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use autozoom::reason::checkpoint::save_checkpoint;
use autozoom::reason::{model_flops, ConvModel2Plus1, ConvModel3d, Model, ReasonConfig, Variant};
use autozoom::tensor::Tensor;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_autozoom"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

fn run_err(args: &[&str]) -> (i32, String) {
    let Output { status, stderr, .. } = bin().args(args).output().expect("binary runs");
    assert!(!status.success(), "command {args:?} unexpectedly passed");
    (
        status.code().expect("exit code"),
        String::from_utf8_lossy(&stderr).into_owned(),
    )
}

fn s(p: &Path) -> String {
    p.to_str().expect("utf8 path").to_string()
}

/// All files under `dir`, as (relative path, bytes), sorted.
fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_str().unwrap().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn synth_is_deterministic_and_cross_loads_through_track() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        run_ok(&["synth", "--out", &s(dir), "--seed", "5"]);
    }
    assert_eq!(tree(&a), tree(&b), "same seed must produce identical bytes");
    for name in ["manifest.txt", "gt_track.txt", "detections.txt"] {
        assert!(a.join(name).is_file(), "missing {name}");
    }

    let track = tmp.path().join("track.txt");
    let detector = format!("file:{}", s(&a.join("detections.txt")));
    let stdout = run_ok(&[
        "track",
        "--manifest",
        &s(&a.join("manifest.txt")),
        "--out",
        &s(&track),
        "--detector",
        &detector,
    ]);
    // 60 frames at the default fraction 0.1: keys 0,10,...,50 plus 59.
    assert!(stdout.contains("key frames 7"), "stdout: {stdout}");
    assert!(stdout.contains("detector invocations 7"), "stdout: {stdout}");
    assert!(
        stdout.contains("provenance detected 7 predicted 0"),
        "clean clip must detect every key frame; stdout: {stdout}"
    );
}

#[test]
fn synth_occupancy_flag_sizes_the_actor() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("clip");
    run_ok(&[
        "synth",
        "--out",
        &s(&dir),
        "--width",
        "1920",
        "--height",
        "1080",
        "--frames",
        "2",
        "--occupancy",
        "0.02",
        "--velocity",
        "1,0",
        "--start",
        "960,540",
    ]);
    let gt = fs::read_to_string(dir.join("gt_track.txt")).unwrap();
    let first = gt.lines().next().unwrap();
    let fields: Vec<f64> = first
        .split_whitespace()
        .take(6)
        .map(|t| t.parse().unwrap())
        .collect();
    let (w, h) = (fields[3], fields[4]);
    let target = 0.02 * 1920.0 * 1080.0;
    assert!(
        (w * h - target).abs() <= w,
        "actor {w}x{h} area {} vs target {target}",
        w * h
    );
}

#[test]
fn track_marks_dropped_key_detections_as_predicted() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("clip");
    run_ok(&["synth", "--out", &s(&dir), "--frames", "61", "--seed", "4"]);

    // Remove the recorded detections for two interior key frames.
    let det_path = dir.join("detections.txt");
    let kept: String = fs::read_to_string(&det_path)
        .unwrap()
        .lines()
        .filter(|l| {
            let idx = l.split_whitespace().next().unwrap();
            idx != "30" && idx != "50"
        })
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&det_path, kept).unwrap();

    let track = tmp.path().join("track.txt");
    let stdout = run_ok(&[
        "track",
        "--manifest",
        &s(&dir.join("manifest.txt")),
        "--out",
        &s(&track),
        "--detector",
        &format!("file:{}", s(&det_path)),
    ]);
    assert!(stdout.contains("detector invocations 7"), "stdout: {stdout}");
    assert!(
        stdout.contains("provenance detected 5 predicted 2"),
        "stdout: {stdout}"
    );
    let text = fs::read_to_string(&track).unwrap();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        let idx: usize = it.next().unwrap().parse().unwrap();
        let prov = it.last().unwrap();
        match idx {
            30 | 50 => assert_eq!(prov, "P", "frame {idx}: {line}"),
            0 | 10 | 20 | 40 | 60 => assert_eq!(prov, "D", "frame {idx}: {line}"),
            _ => assert_eq!(prov, "I", "frame {idx}: {line}"),
        }
    }
}

#[test]
fn zoom_preserves_cardinality_and_reruns_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("clip");
    run_ok(&["synth", "--out", &s(&dir), "--frames", "100", "--seed", "9"]);
    let track = tmp.path().join("track.txt");
    run_ok(&[
        "track",
        "--manifest",
        &s(&dir.join("manifest.txt")),
        "--out",
        &s(&track),
        "--detector",
        &format!("file:{}", s(&dir.join("detections.txt"))),
    ]);

    let manifest = s(&dir.join("manifest.txt"));
    let track_s = s(&track);
    let run_zoom = |out: &Path| {
        run_ok(&[
            "zoom", "--manifest", &manifest, "--track", &track_s, "--out", &s(out),
            "--crop-sizes", "48,64,96", "--occupancy-low", "0.05",
            "--occupancy-high", "0.2",
        ])
    };
    let za = tmp.path().join("za");
    let zb = tmp.path().join("zb");
    let stdout = run_zoom(&za);
    assert!(stdout.contains("wrote 100 frames at 172x172"), "stdout: {stdout}");
    run_zoom(&zb);
    assert_eq!(tree(&za), tree(&zb), "rerun must be byte-identical");

    let frames: Vec<_> = fs::read_dir(za.join("frames")).unwrap().collect();
    assert_eq!(frames.len(), 100);
    let first = fs::read(za.join("frames/frame_000000.ppm")).unwrap();
    assert!(first.starts_with(b"P6\n172 172\n255\n"));
}

#[test]
fn zoom_occupancy_report_is_in_band_on_hd_input() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("clip");
    run_ok(&[
        "synth",
        "--out",
        &s(&dir),
        "--width",
        "1920",
        "--height",
        "1080",
        "--frames",
        "4",
        "--occupancy",
        "0.03",
        "--velocity",
        "8,3",
        "--start",
        "700,500",
        "--seed",
        "11",
    ]);
    let track = tmp.path().join("track.txt");
    run_ok(&[
        "track",
        "--manifest",
        &s(&dir.join("manifest.txt")),
        "--out",
        &s(&track),
        "--detector",
        &format!("file:{}", s(&dir.join("detections.txt"))),
        "--keyframe-fraction",
        "0.5",
    ]);
    let stdout = run_ok(&[
        "zoom",
        "--manifest",
        &s(&dir.join("manifest.txt")),
        "--track",
        &s(&track),
        "--out",
        &s(&tmp.path().join("zoomed")),
    ]);
    let report = stdout
        .lines()
        .find(|l| l.starts_with("occupancy"))
        .expect("occupancy report line");
    let values: Vec<f64> = report
        .split_whitespace()
        .filter_map(|t| t.parse().ok())
        .collect();
    assert_eq!(values.len(), 3, "report: {report}");
    for v in values {
        assert!((0.15..=0.22).contains(&v), "occupancy {v} out of band: {report}");
    }
}

#[test]
fn config_file_applies_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("clip");
    run_ok(&["synth", "--out", &s(&dir), "--frames", "61"]);
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "keyframe_fraction = 0.5\n").unwrap();
    let detector = format!("file:{}", s(&dir.join("detections.txt")));
    let base = [
        "track",
        "--manifest",
        &s(&dir.join("manifest.txt")),
        "--out",
        &s(&tmp.path().join("t.txt")),
        "--detector",
        &detector,
        "--config",
        &s(&cfg),
    ];

    let stdout = run_ok(&base);
    assert!(stdout.contains("key frames 31"), "config fraction 0.5: {stdout}");

    let mut with_flag = base.to_vec();
    with_flag.extend_from_slice(&["--keyframe-fraction", "0.1"]);
    let stdout = run_ok(&with_flag);
    assert!(stdout.contains("key frames 7"), "flag must win: {stdout}");
}

#[test]
fn exit_codes_distinguish_environment_from_domain_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("clip");
    run_ok(&["synth", "--out", &s(&dir), "--frames", "20", "--seed", "8"]);
    let manifest = s(&dir.join("manifest.txt"));
    let detector = format!("file:{}", s(&dir.join("detections.txt")));
    let out = s(&tmp.path().join("t.txt"));

    // Empty manifest: environment/input problem, exit 1.
    let empty = tmp.path().join("empty.txt");
    fs::write(&empty, "320 240 30\n").unwrap();
    let (code, msg) = run_err(&[
        "track", "--manifest", &s(&empty), "--out", &out, "--detector", &detector,
    ]);
    assert_eq!(code, 1, "stderr: {msg}");

    // Missing detector: usage/validation, exit 2.
    let (code, msg) = run_err(&["track", "--manifest", &manifest, "--out", &out]);
    assert_eq!(code, 2, "stderr: {msg}");

    // Detector child dies immediately: environment, exit 1.
    let (code, msg) = run_err(&[
        "track", "--manifest", &manifest, "--out", &out, "--detector", "exec:exit 0",
    ]);
    assert_eq!(code, 1, "stderr: {msg}");

    // Malformed config file: exit 1.
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let (code, msg) = run_err(&[
        "track", "--manifest", &manifest, "--out", &out, "--detector", &detector,
        "--config", &s(&cfg),
    ]);
    assert_eq!(code, 1, "stderr: {msg}");

    // Out-of-range parameter: domain, exit 2.
    let (code, msg) = run_err(&[
        "track", "--manifest", &manifest, "--out", &out, "--detector", &detector,
        "--keyframe-fraction", "1.5",
    ]);
    assert_eq!(code, 2, "stderr: {msg}");

    // Track that does not cover the clip: domain, exit 2.
    run_ok(&[
        "track", "--manifest", &manifest, "--out", &out, "--detector", &detector,
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
    let short = tmp.path().join("short.txt");
    fs::write(&short, truncated).unwrap();
    let (code, msg) = run_err(&[
        "zoom", "--manifest", &manifest, "--track", &s(&short),
        "--out", &s(&tmp.path().join("z")),
    ]);
    assert_eq!(code, 2, "stderr: {msg}");
}

#[test]
fn track_works_with_a_subprocess_detector() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("clip");
    run_ok(&[
        "synth", "--out", &s(&dir), "--frames", "20", "--velocity", "0,0",
        "--start", "100,100", "--actor", "24,16", "--seed", "2",
    ]);
    // Static stub: answers every query with the actor's true position.
    let script = r#"while read line; do idx=$(printf '%s' "$line" | sed 's/.*"frame_index":\([0-9]*\).*/\1/'); printf '{"frame_index":%s,"bboxes":[{"cx":100.0,"cy":100.0,"w":24.0,"h":16.0,"score":0.95}]}\n' "$idx"; done"#;
    let stdout = run_ok(&[
        "track",
        "--manifest",
        &s(&dir.join("manifest.txt")),
        "--out",
        &s(&tmp.path().join("track.txt")),
        "--detector",
        &format!("exec:{script}"),
    ]);
    assert!(stdout.contains("detector invocations 3"), "stdout: {stdout}");
    assert!(stdout.contains("provenance detected 3"), "stdout: {stdout}");
}

/// Trains on the toy task, checks the loss curve and held-out accuracy,
/// then composes synth -> track -> zoom -> eval on a fresh clip.
#[test]
fn toy_training_pipeline_composes() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = tmp.path().join("model.ckpt");
    let stdout = run_ok(&[
        "reason", "train", "--out", &s(&ckpt), "--seed", "7",
    ]);
    assert!(ckpt.is_file());
    let losses: Vec<f64> = fs::read_to_string(tmp.path().join("model.ckpt.loss.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(losses.len(), 800);
    assert!(
        losses[799] < losses[0],
        "final loss {} vs initial {}",
        losses[799],
        losses[0]
    );
    assert!(stdout.contains("checkpoint"), "stdout: {stdout}");

    let stdout = run_ok(&["reason", "eval", "--checkpoint", &s(&ckpt), "--seed", "7"]);
    let acc: f64 = stdout
        .split_whitespace()
        .last()
        .unwrap()
        .parse()
        .expect("accuracy number");
    assert!(acc >= 0.90, "held-out accuracy {acc}");

    // A fresh clip drawn from the same distribution as toy class 1
    // ("right"), pushed through the full artifact pipeline.
    let clip = tmp.path().join("clip");
    run_ok(&[
        "synth", "--out", &s(&clip), "--width", "96", "--height", "96",
        "--frames", "11", "--actor", "20,20", "--velocity", "6.6,0",
        "--start", "14,48", "--noise", "0.1", "--seed", "21",
    ]);
    let cfg = tmp.path().join("toy.cfg");
    fs::write(
        &cfg,
        "keyframe_fraction = 0.2\ncrop_sizes = 32,48,64\n\
         occupancy_low = 0.08\noccupancy_high = 0.12\ninput_size = 16\n",
    )
    .unwrap();
    let track = tmp.path().join("track.txt");
    run_ok(&[
        "track", "--manifest", &s(&clip.join("manifest.txt")), "--out", &s(&track),
        "--detector", &format!("file:{}", s(&clip.join("detections.txt"))),
        "--config", &s(&cfg),
    ]);
    let zoomed = tmp.path().join("zoomed");
    run_ok(&[
        "zoom", "--manifest", &s(&clip.join("manifest.txt")), "--track", &s(&track),
        "--out", &s(&zoomed), "--config", &s(&cfg),
    ]);
    let stdout = run_ok(&[
        "reason", "eval", "--checkpoint", &s(&ckpt),
        "--manifest", &s(&zoomed.join("manifest.txt")), "--label", "1",
    ]);
    assert!(
        stdout.contains("accuracy 1.000"),
        "in-distribution clip must classify correctly: {stdout}"
    );
}

#[test]
fn conv_checkpoints_with_separable_kernels_agree_on_logits() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg21 = ReasonConfig::conv(Variant::Conv2Plus1, 11, 4, 1, 16, 16, 3, 3, 2);
    let mut cfg3 = cfg21.clone();
    cfg3.variant = Variant::Conv3d;

    // Shared spatial kernels and head; diagonal temporal kernel with taps
    // g, and the matching separable 3D kernel g[a] * spatial[f,c,i,j].
    let base = ConvModel2Plus1::init(&cfg21, 13).unwrap();
    let (f_ch, c, k, kt) = (3usize, 1usize, 3usize, 2usize);
    let g = [0.6, -0.3];
    let mut t1 = vec![0.0; f_ch * f_ch * kt];
    let mut k3 = vec![0.0; f_ch * c * kt * k * k];
    for fi in 0..f_ch {
        for a in 0..kt {
            t1[(fi * f_ch + fi) * kt + a] = g[a];
        }
        for ci in 0..c {
            for a in 0..kt {
                for i in 0..k {
                    for j in 0..k {
                        k3[(((fi * c + ci) * kt + a) * k + i) * k + j] =
                            g[a] * base.spatial.data[((fi * c + ci) * k + i) * k + j];
                    }
                }
            }
        }
    }
    let m21 = ConvModel2Plus1 {
        temporal: Tensor::from_vec(vec![f_ch, f_ch, kt], t1).unwrap(),
        ..base.clone()
    };
    let m3 = ConvModel3d {
        kernel: Tensor::from_vec(vec![f_ch, c, kt, k, k], k3).unwrap(),
        head_w: base.head_w.clone(),
        head_b: base.head_b.clone(),
    };
    let p21 = tmp.path().join("c21.ckpt");
    let p3 = tmp.path().join("c3.ckpt");
    save_checkpoint(&p21, &cfg21, &Model::Conv2Plus1(m21)).unwrap();
    save_checkpoint(&p3, &cfg3, &Model::Conv3d(m3)).unwrap();

    let logits_of = |ckpt: &Path, out: &Path| -> Vec<Vec<f64>> {
        run_ok(&[
            "reason", "eval", "--checkpoint", &s(ckpt), "--clips", "12",
            "--seed", "5", "--logits", &s(out),
        ]);
        fs::read_to_string(out)
            .unwrap()
            .lines()
            .map(|l| {
                l.split_whitespace()
                    .skip(1)
                    .map(|t| t.parse().unwrap())
                    .collect()
            })
            .collect()
    };
    let l21 = logits_of(&p21, &tmp.path().join("l21.txt"));
    let l3 = logits_of(&p3, &tmp.path().join("l3.txt"));
    assert_eq!(l21.len(), 4, "12 toy clips hold out one per class");
    assert_eq!(l21.len(), l3.len());
    for (a, b) in l21.iter().flatten().zip(l3.iter().flatten()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn bench_csv_is_deterministic_and_matches_the_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let ca = tmp.path().join("a.csv");
    let cb = tmp.path().join("b.csv");
    let stdout = run_ok(&["bench", "--csv", &s(&ca)]);
    run_ok(&["bench", "--csv", &s(&cb)]);
    assert_eq!(fs::read(&ca).unwrap(), fs::read(&cb).unwrap());
    assert!(stdout.contains("affine in T and L: exact"), "stdout: {stdout}");

    let csv = fs::read_to_string(&ca).unwrap();
    for line in csv.lines().skip(1) {
        let parts: Vec<u64> = line.split(',').map(|t| t.parse().unwrap()).collect();
        let cfg = ReasonConfig::attention(
            parts[0] as usize, 24, 4, 16, 16, parts[1] as usize, 4, 256,
        );
        assert_eq!(parts[2], model_flops(&cfg).unwrap(), "line {line}");
    }
}
