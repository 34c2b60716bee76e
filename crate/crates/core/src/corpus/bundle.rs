use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};

use super::synth::{Renderer, SynthSpec};
use super::{crowd, CorpusError};
use crate::types::{
    validate_manifest, FrameImage, FramePattern, HighlightLevel, RawManifest, SceneType,
    VideoManifest, MANIFEST_FORMAT_VERSION,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENE_LABELS_FILE: &str = "scene_labels.csv";
pub const HIGHLIGHT_LEVELS_FILE: &str = "highlight_levels.csv";
pub const DEFAULT_FRAME_PATTERN: &str = "frame_%06d.ppm";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRow {
    pub frame_index: usize,
    pub annotator_id: String,
    pub level: HighlightLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct SceneRow {
    frame_index: usize,
    scene_code: i64,
}

/// A video on disk: manifest, frames and label files.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoBundle {
    pub manifest: VideoManifest,
    pub frames: Vec<FrameImage>,
    pub scenes: Vec<SceneType>,
    pub levels: Vec<LevelRow>,
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn manifest_for(video_id: &str, fps: f64, width: usize, height: usize, num_frames: usize) -> VideoManifest {
    VideoManifest {
        video_id: video_id.to_string(),
        fps,
        width,
        height,
        num_frames,
        frame_pattern: FramePattern::parse(DEFAULT_FRAME_PATTERN).expect("valid pattern"),
        format_version: MANIFEST_FORMAT_VERSION,
        ground_truth_paths: vec![SCENE_LABELS_FILE.into(), HIGHLIGHT_LEVELS_FILE.into()],
    }
}

pub fn write_manifest(manifest: &VideoManifest, dir: &Path) -> Result<PathBuf, CorpusError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest.to_raw()).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_manifest(dir: &Path) -> Result<VideoManifest, CorpusError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let raw: RawManifest =
        serde_json::from_str(&text).map_err(|e| CorpusError::Parse(format!("{}: {e}", path.display())))?;
    if let Some(v) = raw.format_version {
        if v != MANIFEST_FORMAT_VERSION {
            return Err(CorpusError::FormatVersionMismatch {
                found: v,
                supported: MANIFEST_FORMAT_VERSION,
            });
        }
    }
    Ok(validate_manifest(&raw)?)
}

pub fn encode_ppm(frame: &FrameImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.pixels().len() + 20);
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(
            frame.pixels(),
            frame.width() as u32,
            frame.height() as u32,
            ExtendedColorType::Rgb8,
        )
        .expect("in-memory PNM encoding");
    out
}

pub fn decode_image(bytes: &[u8], format: ImageFormat) -> Result<FrameImage, CorpusError> {
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| CorpusError::Parse(e.to_string()))?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(FrameImage::new(w, h, img.into_raw())?)
}

pub fn frame_path(dir: &Path, manifest: &VideoManifest, index: usize) -> PathBuf {
    dir.join(manifest.frame_pattern.expand(index))
}

pub fn write_frame(dir: &Path, manifest: &VideoManifest, index: usize, frame: &FrameImage) -> Result<(), CorpusError> {
    let path = frame_path(dir, manifest, index);
    fs::write(&path, encode_ppm(frame)).map_err(io_err(&path))
}

/// Reads and checks one frame against the manifest dimensions.
pub fn read_frame(dir: &Path, manifest: &VideoManifest, index: usize) -> Result<FrameImage, CorpusError> {
    let path = frame_path(dir, manifest, index);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let frame = decode_image(&bytes, ImageFormat::Pnm)
        .map_err(|e| CorpusError::Parse(format!("{}: {e}", path.display())))?;
    if frame.width() != manifest.width || frame.height() != manifest.height {
        return Err(CorpusError::Parse(format!(
            "{}: {}x{} frame, manifest says {}x{}",
            path.display(),
            frame.width(),
            frame.height(),
            manifest.width,
            manifest.height
        )));
    }
    Ok(frame)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CorpusError + '_ {
    move |e| CorpusError::Parse(format!("{}: {e}", path.display()))
}

pub fn write_scene_labels(path: &Path, scenes: &[SceneType]) -> Result<(), CorpusError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for (i, s) in scenes.iter().enumerate() {
        w.serialize(SceneRow {
            frame_index: i,
            scene_code: s.code() as i64,
        })
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a dense scene track; rows must cover `0..n` exactly once.
pub fn read_scene_labels(path: &Path) -> Result<Vec<SceneType>, CorpusError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CorpusError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CorpusError::Parse(format!("{}: {other:?}", path.display())),
    })?;
    let mut rows: Vec<SceneRow> = Vec::new();
    for row in r.deserialize() {
        rows.push(row.map_err(csv_err(path))?);
    }
    rows.sort_by_key(|r| r.frame_index);
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.frame_index != i {
            return Err(CorpusError::Parse(format!(
                "{}: scene rows must cover every frame once (problem at frame {i})",
                path.display()
            )));
        }
        out.push(SceneType::from_code(row.scene_code)?);
    }
    Ok(out)
}

pub fn write_level_rows(path: &Path, rows: &[LevelRow]) -> Result<(), CorpusError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    // header even when empty
    if rows.is_empty() {
        w.write_record(["frame_index", "annotator_id", "level"]).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_level_rows(path: &Path) -> Result<Vec<LevelRow>, CorpusError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CorpusError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CorpusError::Parse(format!("{}: {other:?}", path.display())),
    })?;
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row.map_err(csv_err(path))?);
    }
    Ok(rows)
}

pub fn write_bundle(bundle: &VideoBundle, dir: &Path) -> Result<PathBuf, CorpusError> {
    let m = &bundle.manifest;
    if bundle.frames.len() != m.num_frames || bundle.scenes.len() != m.num_frames {
        return Err(CorpusError::Parse(format!(
            "bundle has {} frames and {} scene labels, manifest says {}",
            bundle.frames.len(),
            bundle.scenes.len(),
            m.num_frames
        )));
    }
    let path = write_manifest(m, dir)?;
    for (i, f) in bundle.frames.iter().enumerate() {
        write_frame(dir, m, i, f)?;
    }
    write_scene_labels(&dir.join(SCENE_LABELS_FILE), &bundle.scenes)?;
    write_level_rows(&dir.join(HIGHLIGHT_LEVELS_FILE), &bundle.levels)?;
    Ok(path)
}

pub fn read_bundle(dir: &Path) -> Result<VideoBundle, CorpusError> {
    let manifest = read_manifest(dir)?;
    let frames = (0..manifest.num_frames)
        .map(|i| read_frame(dir, &manifest, i))
        .collect::<Result<Vec<_>, _>>()?;
    let scenes = read_scene_labels(&dir.join(SCENE_LABELS_FILE))?;
    if scenes.len() != manifest.num_frames {
        return Err(CorpusError::Parse(format!(
            "{} scene labels for {} frames",
            scenes.len(),
            manifest.num_frames
        )));
    }
    let levels = read_level_rows(&dir.join(HIGHLIGHT_LEVELS_FILE))?;
    Ok(VideoBundle {
        manifest,
        frames,
        scenes,
        levels,
    })
}

/// Renders `spec` straight to `dir` one frame at a time, with crowd and
/// ground-truth label rows.
pub fn write_synth_video(spec: &SynthSpec, dir: &Path, crowd_seed: u64) -> Result<PathBuf, CorpusError> {
    let renderer = Renderer::new(spec.clone())?;
    let manifest = manifest_for(&spec.video_id, spec.fps, spec.width, spec.height, spec.num_frames);
    let path = write_manifest(&manifest, dir)?;
    for i in 0..renderer.num_frames() {
        write_frame(dir, &manifest, i, &renderer.frame(i))?;
    }
    write_scene_labels(&dir.join(SCENE_LABELS_FILE), renderer.scenes())?;
    let mut rows = crowd::ground_truth_rows(renderer.levels());
    rows.extend(crowd::simulate_crowd(spec, crowd_seed));
    write_level_rows(&dir.join(HIGHLIGHT_LEVELS_FILE), &rows)?;
    fs::write(
        dir.join("synth_spec.json"),
        serde_json::to_string_pretty(spec).expect("spec serializes"),
    )
    .map_err(io_err(dir))?;
    Ok(path)
}
