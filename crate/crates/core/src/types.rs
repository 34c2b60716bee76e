//! Domain vocabulary shared by every stage: frames, scene types, highlight
//! levels, manifests, pipeline configuration and timelines.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TypeError {
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("non-positive dimension `{0}`")]
    NonPositiveDimension(&'static str),
    #[error("bad frame pattern `{0}`: expected exactly one `%d` or `%0Nd` placeholder")]
    BadPattern(String),
    #[error("unknown scene code {0}")]
    UnknownCode(i64),
    #[error("highlight level {0} outside 0..=3")]
    BadLevel(i64),
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    PixelBufferLength { expected: usize, actual: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid timeline: {0}")]
    InvalidTimeline(String),
}

/// Identity of one frame within a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub video_id: String,
    pub frame_index: usize,
    pub timestamp_s: f64,
}

impl FrameRef {
    pub fn new(video_id: impl Into<String>, frame_index: usize, fps: f64) -> Self {
        Self {
            video_id: video_id.into(),
            frame_index,
            timestamp_s: frame_index as f64 / fps,
        }
    }
}

/// Row-major interleaved RGB image, 8 bits per channel.
#[derive(Clone, PartialEq, Eq)]
pub struct FrameImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl fmt::Debug for FrameImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl FrameImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, TypeError> {
        if width == 0 {
            return Err(TypeError::NonPositiveDimension("width"));
        }
        if height == 0 {
            return Err(TypeError::NonPositiveDimension("height"));
        }
        let expected = width * height * 3;
        if pixels.len() != expected {
            return Err(TypeError::PixelBufferLength {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Self::new(width, height, pixels).expect("dimensions checked by caller")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = (y * self.width + x) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    /// Nearest-neighbour rescale to `size × size`.
    pub fn resize_nearest(&self, size: usize) -> FrameImage {
        if self.width == size && self.height == size {
            return self.clone();
        }
        let mut out = Vec::with_capacity(size * size * 3);
        for y in 0..size {
            let sy = (y * self.height) / size;
            for x in 0..size {
                let sx = (x * self.width) / size;
                out.extend_from_slice(&self.pixel(sx, sy));
            }
        }
        FrameImage {
            width: size,
            height: size,
            pixels: out,
        }
    }

    /// Mean of (R + G + B) / 3 over all pixels.
    pub fn mean_luminance(&self) -> f64 {
        let sum: u64 = self.pixels.iter().map(|&p| p as u64).sum();
        sum as f64 / self.pixels.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SceneType {
    GamePlay,
    GameReplay,
    CharacterDraft,
    Other,
}

impl SceneType {
    pub const ALL: [SceneType; 4] = [
        SceneType::GamePlay,
        SceneType::GameReplay,
        SceneType::CharacterDraft,
        SceneType::Other,
    ];

    pub fn code(self) -> u8 {
        match self {
            SceneType::GamePlay => 0,
            SceneType::GameReplay => 1,
            SceneType::CharacterDraft => 2,
            SceneType::Other => 3,
        }
    }

    pub fn from_code(code: i64) -> Result<Self, TypeError> {
        match code {
            0 => Ok(SceneType::GamePlay),
            1 => Ok(SceneType::GameReplay),
            2 => Ok(SceneType::CharacterDraft),
            3 => Ok(SceneType::Other),
            _ => Err(TypeError::UnknownCode(code)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SceneType::GamePlay => "game_play",
            SceneType::GameReplay => "game_replay",
            SceneType::CharacterDraft => "character_draft",
            SceneType::Other => "other",
        }
    }
}

impl fmt::Display for SceneType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Crowd highlight level: 0 non-highlight, 1 cool, 2 wow, 3 OMG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct HighlightLevel(u8);

impl HighlightLevel {
    pub const NONE: HighlightLevel = HighlightLevel(0);
    pub const COOL: HighlightLevel = HighlightLevel(1);
    pub const WOW: HighlightLevel = HighlightLevel(2);
    pub const OMG: HighlightLevel = HighlightLevel(3);

    pub fn new(level: i64) -> Result<Self, TypeError> {
        if (0..=3).contains(&level) {
            Ok(HighlightLevel(level as u8))
        } else {
            Err(TypeError::BadLevel(level))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn tag(self) -> &'static str {
        match self.0 {
            0 => "non-highlight",
            1 => "cool",
            2 => "wow",
            _ => "OMG",
        }
    }
}

impl TryFrom<i64> for HighlightLevel {
    type Error = TypeError;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        HighlightLevel::new(v)
    }
}

impl From<HighlightLevel> for u8 {
    fn from(l: HighlightLevel) -> u8 {
        l.0
    }
}

/// Frame filename template with a single `%d` / `%0Nd` placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePattern {
    prefix: String,
    width: usize,
    suffix: String,
    raw: String,
}

impl FramePattern {
    pub fn parse(raw: &str) -> Result<Self, TypeError> {
        let bad = || TypeError::BadPattern(raw.to_string());
        let mut found: Option<(usize, usize, usize)> = None;
        let bytes = raw.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'%' {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'd' {
                    if found.is_some() {
                        return Err(bad());
                    }
                    let digits = &raw[i + 1..j];
                    let width = if digits.is_empty() {
                        0
                    } else {
                        digits.parse().map_err(|_| bad())?
                    };
                    found = Some((i, j + 1, width));
                    i = j + 1;
                    continue;
                }
                return Err(bad());
            }
            i += 1;
        }
        let (start, end, width) = found.ok_or_else(bad)?;
        Ok(Self {
            prefix: raw[..start].to_string(),
            width,
            suffix: raw[end..].to_string(),
            raw: raw.to_string(),
        })
    }

    pub fn expand(&self, index: usize) -> String {
        format!("{}{:0w$}{}", self.prefix, index, self.suffix, w = self.width)
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }
}

/// Manifest record as it appears on disk, before validation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawManifest {
    pub video_id: Option<String>,
    pub fps: Option<f64>,
    pub width: Option<i64>,
    pub height: Option<i64>,
    pub num_frames: Option<i64>,
    pub frame_pattern: Option<String>,
    pub format_version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_paths: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoManifest {
    pub video_id: String,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
    pub frame_pattern: FramePattern,
    pub format_version: u32,
    pub ground_truth_paths: Vec<String>,
}

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

pub fn validate_manifest(raw: &RawManifest) -> Result<VideoManifest, TypeError> {
    let video_id = raw
        .video_id
        .clone()
        .ok_or(TypeError::MissingField("video_id"))?;
    let fps = raw.fps.ok_or(TypeError::MissingField("fps"))?;
    if !(fps > 0.0) || !fps.is_finite() {
        return Err(TypeError::NonPositiveDimension("fps"));
    }
    let positive = |v: Option<i64>, name: &'static str| -> Result<usize, TypeError> {
        let v = v.ok_or(TypeError::MissingField(name))?;
        if v <= 0 {
            return Err(TypeError::NonPositiveDimension(name));
        }
        Ok(v as usize)
    };
    let width = positive(raw.width, "width")?;
    let height = positive(raw.height, "height")?;
    let num_frames = positive(raw.num_frames, "num_frames")?;
    let pattern = raw
        .frame_pattern
        .as_deref()
        .ok_or(TypeError::MissingField("frame_pattern"))?;
    let frame_pattern = FramePattern::parse(pattern)?;
    Ok(VideoManifest {
        video_id,
        fps,
        width,
        height,
        num_frames,
        frame_pattern,
        format_version: raw.format_version.unwrap_or(MANIFEST_FORMAT_VERSION),
        ground_truth_paths: raw.ground_truth_paths.clone().unwrap_or_default(),
    })
}

impl VideoManifest {
    pub fn to_raw(&self) -> RawManifest {
        RawManifest {
            video_id: Some(self.video_id.clone()),
            fps: Some(self.fps),
            width: Some(self.width as i64),
            height: Some(self.height as i64),
            num_frames: Some(self.num_frames as i64),
            frame_pattern: Some(self.frame_pattern.as_str().to_string()),
            format_version: Some(self.format_version),
            ground_truth_paths: if self.ground_truth_paths.is_empty() {
                None
            } else {
                Some(self.ground_truth_paths.clone())
            },
        }
    }

    pub fn frame_ref(&self, index: usize) -> FrameRef {
        FrameRef::new(self.video_id.clone(), index, self.fps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stride: usize,
    pub highlight_threshold: f64,
    pub input_size: usize,
    pub realtime_pacing: bool,
    /// Capacity of each bounded hand-off queue between stages.
    pub queue_capacity: usize,
    /// Number of concurrent classify workers.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stride: 5,
            highlight_threshold: 0.5,
            input_size: 64,
            realtime_pacing: false,
            queue_capacity: 16,
            workers: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), TypeError> {
        if self.stride < 1 {
            return Err(TypeError::InvalidConfig("stride must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.highlight_threshold) {
            return Err(TypeError::InvalidConfig(
                "highlight_threshold must lie in [0, 1]".into(),
            ));
        }
        if self.input_size == 0 {
            return Err(TypeError::InvalidConfig("input_size must be > 0".into()));
        }
        if self.queue_capacity == 0 || self.workers == 0 {
            return Err(TypeError::InvalidConfig(
                "queue_capacity and workers must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighlightPrediction {
    pub frame_index: usize,
    pub score: f64,
    pub is_highlight: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub video_id: String,
    pub fps: f64,
    pub scene: Vec<SceneType>,
    pub score: Vec<f64>,
    pub sampled_indices: Vec<usize>,
}

impl Timeline {
    pub fn num_frames(&self) -> usize {
        self.scene.len()
    }

    /// Checks array lengths, score range, and that every sampled index is a
    /// stride multiple or the final frame.
    pub fn validate(&self, stride: usize) -> Result<(), TypeError> {
        let n = self.scene.len();
        if self.score.len() != n {
            return Err(TypeError::InvalidTimeline(format!(
                "scene has {} frames, score has {}",
                n,
                self.score.len()
            )));
        }
        if let Some((i, s)) = self
            .score
            .iter()
            .enumerate()
            .find(|(_, s)| !(0.0..=1.0).contains(*s))
        {
            return Err(TypeError::InvalidTimeline(format!(
                "score {s} at frame {i} outside [0, 1]"
            )));
        }
        for &i in &self.sampled_indices {
            if i >= n || (i % stride != 0 && i + 1 != n) {
                return Err(TypeError::InvalidTimeline(format!(
                    "sampled index {i} is neither a multiple of {stride} nor the final frame"
                )));
            }
        }
        Ok(())
    }
}
