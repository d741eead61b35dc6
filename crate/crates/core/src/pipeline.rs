//! Batch pipelines behind the command-line subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::bench::{run_bench, BenchReport};
use crate::config::{ConfigError, MaskSource, RunConfig};
use crate::event::{read_stream_file, write_stream_file, SensorGeometry};
use crate::gating::{
    filter_frames, read_masks, schedule_masks, ExternalMaskBackend, MaskPredictor,
    ReferenceMaskBackend, Schedule,
};
use crate::metrics::{
    evaluate, occlude, sweep_csv, threshold_sweep, Axis, Conditions, EvalRecord, EvalReport,
    OcclusionParams,
};
use crate::pose::read_pose_csv;
use crate::sim::heatmap::heatmaps_to_tensor;
use crate::sim::labels::{read_skeleton_csv, write_skeleton_csv};
use crate::sim::{
    composite, frames_to_events, interpolate_linear, make_heatmaps, normalize_labels, CameraModel,
    CubeMapping, FrameSequence, JointSet, MaskSequence,
};
use crate::tensor::Tensor3;
use crate::tore::{ToreConfig, ToreState, ToreVolume};
use crate::{Error, Result};

fn io_ctx(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io(format!("{}: {e}", path.display()))
}

fn output_dir(c: &RunConfig) -> Result<PathBuf> {
    let out = c.require("output", &c.output)?.to_path_buf();
    fs::create_dir_all(&out).map_err(io_ctx(&out))?;
    Ok(out)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(io_ctx(path))
}

/// Config plus result lines as comments, so the file still parses as a config.
fn write_manifest(out: &Path, c: &RunConfig, facts: &[(&str, String)]) -> Result<()> {
    let mut text = c.render();
    for (k, v) in facts {
        let _ = writeln!(text, "# {k} = {v}");
    }
    write(&out.join("manifest.txt"), text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub events: usize,
    pub frames: usize,
    pub label_frames: usize,
}

pub fn cmd_simulate(c: &RunConfig) -> Result<SimulateSummary> {
    c.validate()?;
    c.check_paths(&["input", "masks", "background", "skeleton", "camera"])?;
    let input = c.require("input", &c.input)?;
    let out = output_dir(c)?;

    let fg = FrameSequence::read_dir(input)
        .map_err(|e| Error::from(e).context(input.display().to_string()))?;
    let mut frames = match (&c.masks, &c.background) {
        (Some(m), Some(b)) => {
            let masks = MaskSequence::read_dir(m)
                .map_err(|e| Error::from(e).context(m.display().to_string()))?;
            let bg = FrameSequence::read_dir(b)
                .map_err(|e| Error::from(e).context(b.display().to_string()))?;
            composite(&fg, &masks, &bg)?
        }
        (None, None) => fg,
        (None, Some(_)) => return Err(ConfigError::Missing("masks".into()).into()),
        (Some(_), None) => return Err(ConfigError::Missing("background".into()).into()),
    };
    if c.interpolate > 1 {
        frames = interpolate_linear(&frames, c.interpolate)?;
    }
    let stream = frames_to_events(&frames, &c.pixel_params())?;
    write_stream_file(&out.join("events.evt"), &stream)?;

    let mut label_frames = 0;
    if let Some(sk) = &c.skeleton {
        let cam_path = c.require("camera", &c.camera)?;
        let joints = JointSet::default();
        let text = fs::read_to_string(sk).map_err(io_ctx(sk))?;
        let skeletons = read_skeleton_csv(&text, &joints)
            .map_err(|e| Error::from(e).context(sk.display().to_string()))?;
        let cam = CameraModel::read_file(cam_path)
            .map_err(|e| Error::from(e).context(cam_path.display().to_string()))?;
        let g = frames.geometry();
        let mapping = CubeMapping::new(g.width() as f64, g.height() as f64, c.half_depth_mm)?;
        let hm_dir = out.join("heatmaps");
        fs::create_dir_all(&hm_dir).map_err(io_ctx(&hm_dir))?;
        let mut norm_csv = String::from("t_us,joint_name,x,y,z,head_depth_mm\n");
        for s in &skeletons {
            let n = normalize_labels(s, &cam, &mapping, &joints)
                .map_err(|e| Error::from(e).context(format!("label t={}", s.t_us)))?;
            for (name, p) in joints.names().iter().zip(n.pose.joints()) {
                let _ = writeln!(
                    norm_csv,
                    "{},{name},{:?},{:?},{:?},{:?}",
                    s.t_us, p[0], p[1], p[2], n.head_depth_mm
                );
            }
            let triplets = make_heatmaps(&n.pose, c.heatmap_resolution, c.heatmap_sigma)?;
            heatmaps_to_tensor(&triplets)
                .write_file(&hm_dir.join(format!("{:012}.tore", s.t_us)))?;
        }
        write(
            &out.join("skeleton.csv"),
            write_skeleton_csv(&skeletons, &joints),
        )?;
        write(&out.join("labels_normalized.csv"), norm_csv)?;
        write(&out.join("camera.txt"), cam.to_text())?;
        label_frames = skeletons.len();
    }

    let summary = SimulateSummary {
        events: stream.len(),
        frames: frames.len(),
        label_frames,
    };
    write_manifest(
        &out,
        c,
        &[
            ("events", summary.events.to_string()),
            ("frames", summary.frames.to_string()),
            ("label_frames", summary.label_frames.to_string()),
        ],
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToreSummary {
    pub events: usize,
    pub windows: usize,
    pub written: usize,
    pub occluded: usize,
}

/// Number of `window_us` windows from time 0 covering the span or the stream.
pub fn window_count(span_us: Option<u64>, last_event: Option<u64>, window_us: u64) -> usize {
    match (span_us, last_event) {
        (Some(span), _) => span.div_ceil(window_us) as usize,
        (None, Some(last)) => (last / window_us + 1) as usize,
        (None, None) => 0,
    }
}

pub fn cmd_tore(c: &RunConfig) -> Result<ToreSummary> {
    c.validate()?;
    c.check_paths(&["input"])?;
    let input = c.require("input", &c.input)?;
    let out = output_dir(c)?;
    let stream =
        read_stream_file(input).map_err(|e| Error::from(e).context(input.display().to_string()))?;
    let config = ToreConfig::new(c.tore_depth, c.tau_us)?;
    let mut occ = OcclusionParams::new(c.occlusion_prob)?;
    occ.max_w = c.occlusion_max;
    occ.max_h = c.occlusion_max;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);

    let windows = window_count(c.span_us, stream.last_time(), c.window_us);
    let mut state = ToreState::new(stream.geometry(), config);
    let mut summary = ToreSummary {
        events: 0,
        windows,
        written: 0,
        occluded: 0,
    };
    for k in 0..windows {
        let (start, end) = (k as u64 * c.window_us, (k as u64 + 1) * c.window_us);
        let slice = stream.time_range(start, end);
        state.ingest_all(slice)?;
        summary.events += slice.len();
        if slice.is_empty() && !c.emit_empty {
            continue;
        }
        let mut vol = state.materialize(end)?;
        if c.occlusion_prob > 0.0 {
            let (v, rect) = occlude(&vol, &occ, &mut rng);
            vol = v;
            summary.occluded += usize::from(rect.is_some());
        }
        vol.to_tensor()
            .write_file(&out.join(format!("tore_{k:06}.tore")))?;
        summary.written += 1;
    }
    write_manifest(
        &out,
        c,
        &[
            ("events", summary.events.to_string()),
            ("windows", summary.windows.to_string()),
            ("written", summary.written.to_string()),
        ],
    )?;
    Ok(summary)
}

/// Loads every `*.tore` tensor in a directory, sorted by file name.
pub fn read_tore_dir(dir: &Path) -> Result<Vec<ToreVolume>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_ctx(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tore"))
        .collect();
    files.sort();
    files
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let t = Tensor3::read_file(p)
                .map_err(|e| Error::from(e).context(p.display().to_string()))?;
            Ok(ToreVolume::from_tensor(&t, k as u64)?)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FilterSummary {
    pub frames: usize,
    pub backend_calls: usize,
    pub schedule: Schedule,
}

fn backend(c: &RunConfig, geometry: Option<SensorGeometry>) -> Result<Box<dyn MaskPredictor>> {
    Ok(match c.mask_source {
        MaskSource::Reference => Box::new(ReferenceMaskBackend {
            horizon: c.horizon,
            percentile: c.activity_percentile,
            decay: c.score_decay,
            floor: c.score_floor,
        }),
        MaskSource::External => {
            let path = c.require("masks", &c.masks)?;
            let masks = read_masks(path)?;
            if let (Some(g), Some(m)) = (geometry, masks.first()) {
                if m.geometry() != g {
                    return Err(crate::gating::GatingError::GeometryMismatch {
                        expected: g,
                        got: m.geometry(),
                    }
                    .into());
                }
            }
            Box::new(ExternalMaskBackend::with_decay(
                masks,
                c.horizon,
                c.score_decay,
                c.score_floor,
            )?)
        }
    })
}

pub fn cmd_filter(c: &RunConfig) -> Result<FilterSummary> {
    c.validate()?;
    c.check_paths(&["input", "masks"])?;
    let input = c.require("input", &c.input)?;
    let out = output_dir(c)?;
    let frames = read_tore_dir(input)?;
    if frames.is_empty() {
        return Err(crate::gating::GatingError::EmptyInput.into());
    }
    let b = backend(c, frames.first().map(|f| f.geometry()))?;
    let schedule = schedule_masks(&frames, b.as_ref(), c.beta)?;
    for (k, v) in filter_frames(&frames, &schedule)?.iter().enumerate() {
        v.to_tensor()
            .write_file(&out.join(format!("filtered_{k:06}.tore")))?;
    }
    let mut trace = Vec::new();
    schedule.write_trace(&mut trace)?;
    write(&out.join("schedule.csv"), trace)?;

    let gt = match (c.mask_source, &c.masks) {
        (MaskSource::Reference, Some(p)) => Some(read_masks(p)?),
        _ => None,
    };
    let rows = threshold_sweep(&frames, b.as_ref(), &c.betas, gt.as_deref())?;
    write(&out.join("sweep.csv"), sweep_csv(&rows))?;
    write_manifest(
        &out,
        c,
        &[
            ("frames", frames.len().to_string()),
            ("backend_calls", schedule.backend_calls().to_string()),
        ],
    )?;
    Ok(FilterSummary {
        frames: frames.len(),
        backend_calls: schedule.backend_calls(),
        schedule,
    })
}

/// Evaluation manifest; pose paths are relative to the manifest file.
#[derive(Debug, Clone, Deserialize)]
pub struct EvalManifest {
    #[serde(default)]
    pub joints: Option<Vec<String>>,
    pub records: Vec<EvalEntry>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EvalEntry {
    pub frame: String,
    pub pred: PathBuf,
    pub gt: PathBuf,
    #[serde(default)]
    pub conditions: Conditions,
}

pub fn load_eval_records(manifest: &Path) -> Result<(Vec<String>, Vec<EvalRecord>)> {
    let text = fs::read_to_string(manifest).map_err(io_ctx(manifest))?;
    let m: EvalManifest = serde_json::from_str(&text).map_err(|e| ConfigError::BadValue {
        key: "input".into(),
        reason: format!("{}: {e}", manifest.display()),
    })?;
    let joints = match m.joints {
        Some(names) => JointSet::new(
            names.clone(),
            names.first().map(String::as_str).unwrap_or(""),
        )?,
        None => JointSet::default(),
    };
    let names = joints.names().to_vec();
    let base = manifest.parent().unwrap_or(Path::new("."));
    let read = |p: &Path| -> Result<_> {
        let path = base.join(p);
        let text = fs::read_to_string(&path).map_err(io_ctx(&path))?;
        read_pose_csv(&text, &names).map_err(|e| Error::from(e).context(path.display().to_string()))
    };
    let records = m
        .records
        .iter()
        .map(|r| {
            Ok(EvalRecord {
                frame: r.frame.clone(),
                pred: read(&r.pred)?,
                gt: read(&r.gt)?,
                conditions: r.conditions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((names, records))
}

pub fn cmd_eval(c: &RunConfig) -> Result<EvalReport> {
    c.validate()?;
    c.check_paths(&["input"])?;
    let input = c.require("input", &c.input)?;
    let (names, records) = load_eval_records(input)?;
    let axes = c
        .group_by
        .iter()
        .map(|s| s.parse::<Axis>())
        .collect::<Result<Vec<_>, _>>()?;
    let report = evaluate(&records, &axes, c.alpha_mm)?;
    if c.output.is_some() {
        let out = output_dir(c)?;
        write(&out.join("report.csv"), report.to_csv(&names))?;
        write(&out.join("report.txt"), report.to_table(&names))?;
        write_manifest(&out, c, &[("records", records.len().to_string())])?;
    }
    Ok(report)
}

pub fn cmd_bench(c: &RunConfig) -> Result<BenchReport> {
    c.validate()?;
    let config = ToreConfig::new(c.tore_depth, c.tau_us)?;
    let report = run_bench(c.bench_events, c.bench_windows, c.seed, config)?;
    if c.output.is_some() {
        let out = output_dir(c)?;
        write(&out.join("bench.txt"), report.to_text())?;
    }
    Ok(report)
}
