use std::path::Path;
use std::process::{Command, Output};

use evpose::config::RunConfig;
use evpose::event::{
    parse_stream, read_stream_file, write_stream_file, SensorGeometry, EVT1_HEADER_LEN,
};
use evpose::pose::{write_pose_csv, Pose3D};
use evpose::sim::labels::{write_skeleton_csv, DEFAULT_JOINT_NAMES};
use evpose::sim::{
    frames_to_events, CameraModel, CoordinateFrame, FrameSequence, JointSet, PixelModelParams,
    SkeletonFrame,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn evpose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evpose"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = evpose(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn count_files(dir: &Path, ext: &str) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == ext)
        })
        .count()
}

const NOISELESS: [&str; 4] = ["--set", "leak_rate_hz=0", "--set", "shot_noise_scale=0"];

#[test]
fn simulate_constant_frames_gives_empty_stream() {
    let dir = tempfile::tempdir().unwrap();
    let (input, out) = (dir.path().join("frames"), dir.path().join("out"));
    FrameSequence::constant(SensorGeometry::new(8, 6).unwrap(), 30.0, 10, 0.4)
        .unwrap()
        .write_dir(&input)
        .unwrap();
    let mut args = vec!["simulate", "-i", s(&input), "-o", s(&out)];
    args.extend(NOISELESS);
    let stdout = ok(&args);
    assert!(stdout.contains("events = 0"));
    let bytes = std::fs::read(out.join("events.evt")).unwrap();
    assert_eq!(bytes.len(), EVT1_HEADER_LEN);
    let stream = parse_stream(&bytes).unwrap();
    assert!(stream.is_empty());
    assert_eq!(stream.geometry(), SensorGeometry::new(8, 6).unwrap());
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("# events = 0"));
    assert!(RunConfig::parse(&manifest).is_ok());
}

#[test]
fn simulate_matches_library_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("frames");
    let g = SensorGeometry::new(12, 9).unwrap();
    let frames: Vec<Vec<f64>> = (0..8)
        .map(|k| {
            (0..g.pixels())
                .map(|i| (0.05 + 0.1 * k as f64 + 0.01 * (i % 7) as f64).min(1.0))
                .collect()
        })
        .collect();
    FrameSequence::new(g, 50.0, frames)
        .unwrap()
        .write_dir(&input)
        .unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "simulate",
            "-i",
            s(&input),
            "-o",
            s(&out),
            "--set",
            "seed=9",
        ]);
        std::fs::read(out.join("events.evt")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));

    let reread = FrameSequence::read_dir(&input).unwrap();
    let params = PixelModelParams {
        seed: 9,
        ..PixelModelParams::default()
    };
    let want = frames_to_events(&reread, &params).unwrap();
    assert_eq!(parse_stream(&a).unwrap(), want);
    assert!(!want.is_empty());
}

#[test]
fn simulate_with_labels_writes_normalized_csv_and_heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("frames");
    let g = SensorGeometry::new(32, 24).unwrap();
    FrameSequence::constant(g, 30.0, 3, 0.5)
        .unwrap()
        .write_dir(&input)
        .unwrap();
    let joints = JointSet::default();
    let skel: Vec<SkeletonFrame> = (0..3)
        .map(|i| SkeletonFrame {
            t_us: i * 33_333,
            frame: CoordinateFrame::Camera,
            pose: Pose3D::new(
                (0..13)
                    .map(|j| {
                        [
                            j as f64 * 20.0 - 120.0,
                            j as f64 * 30.0 - 150.0,
                            3000.0 + j as f64,
                        ]
                    })
                    .collect(),
            )
            .unwrap(),
        })
        .collect();
    let sk_path = dir.path().join("skeleton.csv");
    std::fs::write(&sk_path, write_skeleton_csv(&skel, &joints)).unwrap();
    let cam_path = dir.path().join("camera.txt");
    std::fs::write(
        &cam_path,
        CameraModel::pinhole(40.0, 40.0, 16.0, 12.0)
            .unwrap()
            .to_text(),
    )
    .unwrap();
    let out = dir.path().join("out");
    let stdout = ok(&[
        "simulate",
        "-i",
        s(&input),
        "-o",
        s(&out),
        "--set",
        &format!("skeleton={}", s(&sk_path)),
        "--set",
        &format!("camera={}", s(&cam_path)),
        "--set",
        "heatmap_resolution=16",
    ]);
    assert!(stdout.contains("label_frames = 3"));
    assert_eq!(count_files(&out.join("heatmaps"), "tore"), 3);
    let csv = std::fs::read_to_string(out.join("labels_normalized.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t_us,joint_name,x,y,z,head_depth_mm"));
    let head: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(head[1], DEFAULT_JOINT_NAMES[0]);
    assert_eq!(head[4], "0.0");
    assert_eq!(csv.lines().count(), 1 + 3 * 13);
}

#[test]
fn tore_one_second_gives_fifty_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = SensorGeometry::new(16, 12).unwrap();
    let mut t = 0;
    let events: Vec<_> = (0..3000)
        .map(|_| {
            t += rng.random_range(0..300);
            let p = if rng.random() {
                evpose::event::Polarity::Positive
            } else {
                evpose::event::Polarity::Negative
            };
            evpose::event::Event::new(t, rng.random_range(0..16), rng.random_range(0..12), p)
        })
        .collect();
    let stream = evpose::event::EventStream::new(g, events).unwrap();
    let evt = dir.path().join("e.evt");
    write_stream_file(&evt, &stream).unwrap();
    let out = dir.path().join("tore");
    let stdout = ok(&[
        "tore",
        "-i",
        s(&evt),
        "-o",
        s(&out),
        "--set",
        "span_us=1000000",
    ]);
    assert!(stdout.contains("windows = 50"));
    assert_eq!(count_files(&out, "tore"), 50);
    let inside = stream.events().iter().filter(|e| e.t < 1_000_000).count();
    assert!(stdout.contains(&format!("events = {inside}")));

    let vols = evpose::pipeline::read_tore_dir(&out).unwrap();
    let want = evpose::tore::build_tore(
        &evpose::event::EventStream::new(
            g,
            stream
                .events()
                .iter()
                .copied()
                .filter(|e| e.t < 1_000_000)
                .collect(),
        )
        .unwrap(),
        evpose::tore::ToreConfig::default(),
        1_000_000,
    )
    .unwrap();
    assert_eq!(vols[49].data(), want.data());

    // occlusion at probability one blanks a box in every tensor
    let occ = dir.path().join("occ");
    ok(&[
        "tore",
        "-i",
        s(&evt),
        "-o",
        s(&occ),
        "--set",
        "occlusion_prob=1",
        "--set",
        "occlusion_max=4",
    ]);
    assert!(!evpose::pipeline::read_tore_dir(&occ).unwrap().is_empty());
}

fn write_tore_frames(dir: &Path, n: usize) {
    let g = SensorGeometry::new(20, 16).unwrap();
    std::fs::create_dir_all(dir).unwrap();
    for k in 0..n {
        let data = (0..2 * g.pixels())
            .map(|i| {
                let (x, y) = ((i % g.pixels()) % 20, (i % g.pixels()) / 20);
                if (3 + k % 5..9 + k % 5).contains(&x) && (4..10).contains(&y) {
                    0.7
                } else {
                    0.0
                }
            })
            .collect();
        let v = evpose::tore::ToreVolume::from_parts(g, 2, data, 0).unwrap();
        v.to_tensor()
            .write_file(&dir.join(format!("tore_{k:06}.tore")))
            .unwrap();
    }
}

#[test]
fn filter_threshold_extremes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    write_tore_frames(&input, 12);
    let run = |beta: &str| {
        let out = dir.path().join(format!("out{beta}"));
        let stdout = ok(&[
            "filter",
            "-i",
            s(&input),
            "-o",
            s(&out),
            "--set",
            &format!("beta={beta}"),
        ]);
        (stdout, out)
    };
    let (zero, out0) = run("0");
    assert!(zero.contains("backend_calls = 3"));
    let (one, _) = run("1");
    assert!(one.contains("backend_calls = 12"));
    assert_eq!(count_files(&out0, "tore"), 12);
    let trace = std::fs::read_to_string(out0.join("schedule.csv")).unwrap();
    assert_eq!(trace.lines().count(), 13);
    assert_eq!(trace.lines().nth(2), Some("1,0,0.9"));
    let sweep = std::fs::read_to_string(out0.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 7);
}

#[test]
fn eval_perfect_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let names: Vec<String> = DEFAULT_JOINT_NAMES.iter().map(|s| s.to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut records = Vec::new();
    for i in 0..4 {
        let p = Pose3D::new(
            (0..13)
                .map(|_| std::array::from_fn(|_| rng.random_range(-900.0..900.0)))
                .collect(),
        )
        .unwrap();
        std::fs::write(
            dir.path().join(format!("p{i}.csv")),
            write_pose_csv(&p, &names),
        )
        .unwrap();
        records.push(serde_json::json!({
            "frame": format!("f{i}"),
            "pred": format!("p{i}.csv"),
            "gt": format!("p{i}.csv"),
            "conditions": {"lighting": if i % 2 == 0 { "high" } else { "low" }}
        }));
    }
    let manifest = dir.path().join("eval.json");
    std::fs::write(
        &manifest,
        serde_json::json!({ "records": records }).to_string(),
    )
    .unwrap();
    let out = dir.path().join("report");
    ok(&[
        "eval",
        "-i",
        s(&manifest),
        "-o",
        s(&out),
        "--set",
        "group_by=lighting",
    ]);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[1], format!("overall,all,4,0.0,1.0,{:?}", 29.0 / 30.0));
    assert!(lines[2].starts_with("group,high,2,0.0,1.0,"));
    assert!(lines[3].starts_with("group,low,2,0.0,1.0,"));
    assert!(std::fs::read_to_string(out.join("report.txt"))
        .unwrap()
        .contains("overall"));
}

#[test]
fn bench_reports_throughput() {
    let stdout = ok(&[
        "bench",
        "--set",
        "bench_events=20000",
        "--set",
        "bench_windows=5",
    ]);
    assert!(stdout.contains("events"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| evpose(args).status.code();
    assert_eq!(code(&["bench", "--set", "beta=2"]), Some(2));
    assert_eq!(code(&["bench", "--set", "nonsense=1"]), Some(2));
    assert_eq!(code(&["tore", "-o", s(dir.path())]), Some(2));
    assert_eq!(
        code(&[
            "tore",
            "-i",
            s(&dir.path().join("none.evt")),
            "-o",
            s(dir.path())
        ]),
        Some(2)
    );
    let bad = dir.path().join("bad.evt");
    std::fs::write(&bad, b"EVT9garbage").unwrap();
    assert_eq!(
        code(&["tore", "-i", s(&bad), "-o", s(&dir.path().join("o"))]),
        Some(3)
    );
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "beta = 0.5\nbeta = 0.6\n").unwrap();
    assert_eq!(code(&["bench", "-c", s(&cfg)]), Some(2));
    assert_eq!(
        code(&[
            "bench",
            "--set",
            "bench_events=1000",
            "--set",
            "bench_windows=2"
        ]),
        Some(0)
    );
}

#[test]
fn manifest_flag_prints_a_parseable_config() {
    let stdout = ok(&[
        "bench",
        "--manifest",
        "--set",
        "bench_events=1000",
        "--set",
        "bench_windows=1",
        "--set",
        "beta=0.8",
    ]);
    let n = RunConfig::default().render().lines().count();
    let head: String = stdout.lines().take(n).map(|l| format!("{l}\n")).collect();
    let cfg = RunConfig::parse(&head).unwrap();
    assert_eq!(cfg.beta, 0.8);
    assert_eq!(cfg.bench_events, 1000);
}

#[test]
fn config_file_and_cli_input_compose() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = SensorGeometry::new(8, 8).unwrap();
    let mut t = 0;
    let events: Vec<_> = (0..200)
        .map(|_| {
            t += rng.random_range(0..500);
            evpose::event::Event::new(
                t,
                rng.random_range(0..8),
                rng.random_range(0..8),
                evpose::event::Polarity::Positive,
            )
        })
        .collect();
    let evt = dir.path().join("e.evt");
    write_stream_file(&evt, &evpose::event::EventStream::new(g, events).unwrap()).unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# windows of 10 ms\nwindow_us = 10000\nemit_empty = false\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    ok(&["tore", "-c", s(&cfg), "-i", s(&evt), "-o", s(&out)]);
    let written = count_files(&out, "tore");
    let stream = read_stream_file(&evt).unwrap();
    let mut nonempty: Vec<u64> = stream.events().iter().map(|e| e.t / 10_000).collect();
    nonempty.dedup();
    assert_eq!(written, nonempty.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn rendered_config_parses_back(
        beta in 0.0f64..=1.0,
        depth in 1usize..=255,
        tau in 2u64..100_000_000,
        window in 1u64..1_000_000,
        seed in any::<u64>(),
        span in proptest::option::of(1u64..10_000_000),
        hot in proptest::collection::vec((0u16..346, 0u16..260), 0..4),
        betas in proptest::collection::vec(0.0f64..=1.0, 1..6),
    ) {
        let c = RunConfig {
            beta,
            tore_depth: depth,
            tau_us: tau,
            window_us: window,
            seed,
            span_us: span,
            hot_pixels: hot,
            betas,
            input: Some("in dir/x.evt".into()),
            group_by: vec!["lighting".into(), "view".into()],
            ..RunConfig::default()
        };
        let back = RunConfig::parse(&c.render()).unwrap();
        prop_assert_eq!(back, c);
    }
}
