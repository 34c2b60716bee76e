use std::fs::File;
use std::io::{BufReader, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::PipelineError;
use crate::corpus::{read_frame, read_manifest};
use crate::types::{FrameImage, VideoManifest};

pub const RAW_STREAM_MAGIC: &[u8; 4] = b"FRV1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceMode {
    ImageSequence,
    RawStream,
}

/// Stream-level facts known when a source is opened. Raw streams carry no
/// frame count, so `num_frames` is only known for bundles and memory sources.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceInfo {
    pub video_id: String,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub num_frames: Option<usize>,
}

enum Kind {
    Images { dir: PathBuf, manifest: VideoManifest },
    Raw { reader: Box<dyn Read + Send> },
    Memory { frames: Arc<Vec<FrameImage>> },
}

/// Frames in strictly increasing index order.
pub struct FrameSource {
    info: SourceInfo,
    kind: Kind,
}

impl std::fmt::Debug for FrameSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrameSource").field("info", &self.info).finish_non_exhaustive()
    }
}

impl FrameSource {
    pub fn open(uri: impl AsRef<Path>, mode: SourceMode) -> Result<Self, PipelineError> {
        let uri = uri.as_ref();
        match mode {
            SourceMode::ImageSequence => {
                let manifest = read_manifest(uri)?;
                Ok(Self {
                    info: SourceInfo {
                        video_id: manifest.video_id.clone(),
                        fps: manifest.fps,
                        width: manifest.width,
                        height: manifest.height,
                        num_frames: Some(manifest.num_frames),
                    },
                    kind: Kind::Images {
                        dir: uri.to_path_buf(),
                        manifest,
                    },
                })
            }
            SourceMode::RawStream => {
                let file = File::open(uri).map_err(|e| PipelineError::Io {
                    frame_index: None,
                    message: format!("{}: {e}", uri.display()),
                })?;
                let id = uri
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "stream".into());
                Self::raw_stream(BufReader::new(file), id)
            }
        }
    }

    /// Reads the `FRV1` header from `reader`.
    pub fn raw_stream(mut reader: impl Read + Send + 'static, video_id: impl Into<String>) -> Result<Self, PipelineError> {
        let mut header = [0u8; 20];
        reader
            .read_exact(&mut header)
            .map_err(|e| PipelineError::BadStreamHeader(format!("short header: {e}")))?;
        if &header[..4] != RAW_STREAM_MAGIC {
            return Err(PipelineError::BadStreamHeader(format!(
                "magic {:?}, expected \"FRV1\"",
                String::from_utf8_lossy(&header[..4])
            )));
        }
        let field = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
        let (width, height, num, den) = (field(0), field(1), field(2), field(3));
        if width == 0 || height == 0 || num == 0 || den == 0 {
            return Err(PipelineError::BadStreamHeader(format!(
                "zero field in header: {width}x{height} at {num}/{den} fps"
            )));
        }
        Ok(Self {
            info: SourceInfo {
                video_id: video_id.into(),
                fps: num as f64 / den as f64,
                width: width as usize,
                height: height as usize,
                num_frames: None,
            },
            kind: Kind::Raw {
                reader: Box::new(reader),
            },
        })
    }

    pub fn in_memory(video_id: impl Into<String>, fps: f64, frames: Vec<FrameImage>) -> Self {
        let (width, height) = frames.first().map_or((0, 0), |f| (f.width(), f.height()));
        Self {
            info: SourceInfo {
                video_id: video_id.into(),
                fps,
                width,
                height,
                num_frames: Some(frames.len()),
            },
            kind: Kind::Memory {
                frames: Arc::new(frames),
            },
        }
    }

    pub fn info(&self) -> &SourceInfo {
        &self.info
    }

    /// Sampled frames in order; see [`sample_frames`].
    pub fn sample(self, stride: usize) -> Sampler {
        assert!(stride >= 1, "stride must be >= 1");
        Sampler {
            source: self,
            stride,
            next: 0,
            pending: None,
            done: false,
        }
    }
}

/// `{0, s, 2s, …} ∩ [0, n)` plus `n − 1`.
pub fn sample_indices(num_frames: usize, stride: usize) -> Vec<usize> {
    assert!(stride >= 1, "stride must be >= 1");
    if num_frames == 0 {
        return Vec::new();
    }
    let mut out: Vec<usize> = (0..num_frames).step_by(stride).collect();
    if *out.last().expect("nonempty") != num_frames - 1 {
        out.push(num_frames - 1);
    }
    out
}

pub fn sample_frames(source: FrameSource, stride: usize) -> Sampler {
    source.sample(stride)
}

/// Iterator over `(frame_index, frame)` pairs at the sampled indices.
pub struct Sampler {
    source: FrameSource,
    stride: usize,
    next: usize,
    /// Raw streams: the most recent unsampled frame, held back in case it
    /// turns out to be the last one.
    pending: Option<(usize, FrameImage)>,
    done: bool,
}

impl Sampler {
    pub fn info(&self) -> &SourceInfo {
        &self.source.info
    }

    fn read_raw(&mut self) -> Result<Option<FrameImage>, PipelineError> {
        let Kind::Raw { reader } = &mut self.source.kind else {
            unreachable!()
        };
        let size = self.source.info.width * self.source.info.height * 3;
        let mut buf = vec![0u8; size];
        let mut filled = 0;
        while filled < size {
            match reader.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(k) => filled += k,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => {
                    return Err(PipelineError::Io {
                        frame_index: Some(self.next),
                        message: e.to_string(),
                    })
                }
            }
        }
        if filled == 0 {
            return Ok(None);
        }
        if filled < size {
            return Err(PipelineError::Io {
                frame_index: Some(self.next),
                message: format!("truncated frame: {filled} of {size} bytes"),
            });
        }
        Ok(Some(FrameImage::new(self.source.info.width, self.source.info.height, buf)?))
    }

    fn next_raw(&mut self) -> Result<Option<(usize, FrameImage)>, PipelineError> {
        loop {
            let index = self.next;
            match self.read_raw()? {
                None => {
                    self.done = true;
                    // the held-back frame is the final one
                    return Ok(self.pending.take());
                }
                Some(frame) => {
                    self.next += 1;
                    if index % self.stride == 0 {
                        self.pending = None;
                        return Ok(Some((index, frame)));
                    }
                    self.pending = Some((index, frame));
                }
            }
        }
    }
}

impl Iterator for Sampler {
    type Item = Result<(usize, FrameImage), PipelineError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let n = self.source.info.num_frames;
        let item = match &self.source.kind {
            Kind::Raw { .. } => return self.next_raw().transpose(),
            Kind::Images { dir, manifest } => {
                let n = n.expect("bundle frame count");
                let index = self.next;
                if index >= n {
                    self.done = true;
                    return None;
                }
                read_frame(dir, manifest, index)
                    .map(|f| (index, f))
                    .map_err(|e| PipelineError::Io {
                        frame_index: Some(index),
                        message: e.to_string(),
                    })
            }
            Kind::Memory { frames } => {
                let index = self.next;
                if index >= frames.len() {
                    self.done = true;
                    return None;
                }
                Ok((index, frames[index].clone()))
            }
        };
        let n = n.expect("known frame count");
        let index = self.next;
        self.next = if index + 1 == n {
            n
        } else {
            (index + self.stride).min(n - 1)
        };
        if item.is_err() {
            self.done = true;
        }
        Some(item)
    }
}

/// Writes the `FRV1` header and frames.
pub fn write_raw_stream<'a>(
    mut w: impl Write,
    width: u32,
    height: u32,
    fps: (u32, u32),
    frames: impl IntoIterator<Item = &'a FrameImage>,
) -> std::io::Result<()> {
    w.write_all(RAW_STREAM_MAGIC)?;
    for v in [width, height, fps.0, fps.1] {
        w.write_all(&v.to_le_bytes())?;
    }
    for f in frames {
        w.write_all(f.pixels())?;
    }
    w.flush()
}
