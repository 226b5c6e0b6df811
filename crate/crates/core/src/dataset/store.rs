//! On-disk frame store: one directory per sequence, `manifest.json` at the
//! root, one binary record per frame.
//!
//! Record layout (all little-endian):
//!   magic  "SFRM" (4 bytes), version u32
//!   index u64, timestamp f64, camera_timestamp f64, lidar_timestamp f64,
//!   steering_deg f64, pose_lateral f64, pose_vertical f64, speed f64
//!   camera payload  C*H*W f32, channel-major
//!   range-image payload 4*11*310 f32, channel-major

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::augment::PoseOffset;
use crate::dataset::Manifest;
use crate::error::{Error, Result};
use crate::lidar::RangeImage;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"SFRM";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 * 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMeta {
    pub index: u64,
    pub timestamp: f64,
    pub camera_timestamp: f64,
    pub lidar_timestamp: f64,
    pub steering_deg: f64,
    pub pose: PoseOffset,
    pub speed_mps: f64,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub meta: FrameMeta,
    pub camera: Tensor<f32>,
    pub range_image: RangeImage,
}

pub fn frame_file_name(index: u64) -> String {
    format!("frame-{index:06}.bin")
}

fn encode_header(meta: &FrameMeta, out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&meta.index.to_le_bytes());
    out.extend_from_slice(&meta.timestamp.to_le_bytes());
    out.extend_from_slice(&meta.camera_timestamp.to_le_bytes());
    out.extend_from_slice(&meta.lidar_timestamp.to_le_bytes());
    out.extend_from_slice(&meta.steering_deg.to_le_bytes());
    out.extend_from_slice(&meta.pose.lateral.to_le_bytes());
    out.extend_from_slice(&meta.pose.vertical.to_le_bytes());
    out.extend_from_slice(&meta.speed_mps.to_le_bytes());
}

fn decode_header(buf: &[u8], index_hint: u64) -> Result<FrameMeta> {
    let corrupt = |reason: &str| Error::CorruptFrame {
        index: index_hint,
        reason: reason.into(),
    };
    if buf.len() < HEADER_LEN {
        return Err(corrupt("record shorter than the header"));
    }
    if &buf[0..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let f = |off: usize| f64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
    Ok(FrameMeta {
        index: u64::from_le_bytes(buf[8..16].try_into().unwrap()),
        timestamp: f(16),
        camera_timestamp: f(24),
        lidar_timestamp: f(32),
        steering_deg: f(40),
        pose: PoseOffset::new(f(48), f(56)),
        speed_mps: f(64),
    })
}

pub struct FrameStore {
    root: PathBuf,
    pub manifest: Manifest,
}

impl FrameStore {
    /// Create a new store rooted at `root`, writing the manifest.
    pub fn create(root: impl Into<PathBuf>, manifest: Manifest) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(root.display().to_string(), e))?;
        let store = FrameStore { root, manifest };
        store.write_manifest()?;
        Ok(store)
    }

    /// Open an existing store and read its manifest.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let path = root.join("manifest.json");
        let text =
            fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        Ok(FrameStore { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_manifest(&self) -> Result<()> {
        let path = self.root.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn frame_path(&self, sequence_id: &str, index: u64) -> PathBuf {
        self.root.join(sequence_id).join(frame_file_name(index))
    }

    pub fn write_frame(&self, sequence_id: &str, frame: &Frame) -> Result<()> {
        let dir = self.root.join(sequence_id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let path = self.frame_path(sequence_id, frame.meta.index);

        let cam_len = frame.camera.numel();
        let lid_len = frame.range_image.data().len();
        let mut buf = Vec::with_capacity(HEADER_LEN + 4 * (cam_len + lid_len));
        encode_header(&frame.meta, &mut buf);
        for v in frame.camera.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in frame.range_image.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut file =
            fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        file.write_all(&buf)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_meta(&self, sequence_id: &str, index: u64) -> Result<FrameMeta> {
        let path = self.frame_path(sequence_id, index);
        let mut file =
            fs::File::open(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut buf = [0u8; HEADER_LEN];
        file.read_exact(&mut buf).map_err(|_| Error::CorruptFrame {
            index,
            reason: "truncated header".into(),
        })?;
        let meta = decode_header(&buf, index)?;
        if meta.index != index {
            return Err(Error::CorruptFrame {
                index,
                reason: format!("header claims index {}", meta.index),
            });
        }
        Ok(meta)
    }

    pub fn read_frame(&self, sequence_id: &str, index: u64) -> Result<Frame> {
        let path = self.frame_path(sequence_id, index);
        let buf = fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let meta = decode_header(&buf, index)?;
        let [c, h, w] = self.manifest.camera_shape;
        let cam_len = c * h * w;
        let lid_len: usize = self.manifest.lidar_shape.iter().product();
        let expected = HEADER_LEN + 4 * (cam_len + lid_len);
        if buf.len() != expected {
            return Err(Error::CorruptFrame {
                index,
                reason: format!("record is {} bytes, expected {expected}", buf.len()),
            });
        }
        let mut floats = buf[HEADER_LEN..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()));
        let camera: Vec<f32> = floats.by_ref().take(cam_len).collect();
        let lidar: Vec<f32> = floats.collect();
        let frame = Frame {
            meta,
            camera: Tensor::new(vec![c, h, w], camera).map_err(|_| Error::CorruptFrame {
                index,
                reason: "camera payload size".into(),
            })?,
            range_image: RangeImage::from_data(lidar).map_err(|_| Error::CorruptFrame {
                index,
                reason: "range image payload size".into(),
            })?,
        };
        if !frame.meta.steering_deg.is_finite() {
            return Err(Error::CorruptFrame {
                index,
                reason: "non-finite steering".into(),
            });
        }
        Ok(frame)
    }
}
