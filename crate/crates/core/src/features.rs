//! Per-video frame features and frame sampling.
//!
//! Feature files hold one video each: the magic `VFEA`, then version, frame
//! count and feature width as little-endian `u32`, then the frames as
//! row-major little-endian `f32`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"VFEA";
pub const VERSION: u32 = 1;
pub const EXTENSION: &str = "vfeat";

/// `n` frame indices out of `n_raw`, uniformly spaced, padding short videos
/// by repeating their last frame.
pub fn sample_frames(n_raw: usize, n: usize) -> Vec<usize> {
    if n_raw >= n {
        (0..n).map(|j| j * n_raw / n).collect()
    } else {
        (0..n).map(|j| j.min(n_raw.saturating_sub(1))).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoFeatures {
    pub video_id: String,
    /// `n_raw × d_v`
    pub frames: Tensor,
}

impl VideoFeatures {
    pub fn new(video_id: impl Into<String>, frames: Tensor) -> Result<Self> {
        if frames.rank() != 2 {
            return Err(Error::arg(format!(
                "frame matrix must be 2-D, got {:?}",
                frames.shape()
            )));
        }
        Ok(Self {
            video_id: video_id.into(),
            frames,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    /// `n × d_v` matrix of the sampled frames.
    pub fn sampled(&self, n: usize) -> Result<Tensor> {
        if n == 0 {
            return Err(Error::arg("frame count must be at least 1"));
        }
        let d = self.dim();
        let mut data = Vec::with_capacity(n * d);
        for i in sample_frames(self.num_frames(), n) {
            data.extend_from_slice(self.frames.row(i));
        }
        Tensor::new(vec![n, d], data)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.frames.len());
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.num_frames() as u32, self.dim() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &x in self.frames.data() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
        out
    }

    pub fn decode(video_id: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        let bad = |detail: String| Error::format("feature file", detail);
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("missing VFEA header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
        let (version, n_raw, d_v) = (word(1), word(2) as usize, word(3) as usize);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        if n_raw == 0 || d_v == 0 {
            return Err(bad(format!("empty feature matrix {n_raw}x{d_v}")));
        }
        let expected = 16 + 4 * n_raw * d_v;
        if bytes.len() != expected {
            return Err(bad(format!(
                "expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let data = bytes[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::new(video_id, Tensor::new(vec![n_raw, d_v], data)?)
    }

    pub fn path_in(dir: &Path, video_id: &str) -> PathBuf {
        dir.join(format!("{video_id}.{EXTENSION}"))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        crate::io::write_atomic(&Self::path_in(dir, &self.video_id), &self.encode())
    }

    pub fn load(dir: &Path, video_id: &str) -> Result<Self> {
        Self::decode(video_id, &crate::io::read(&Self::path_in(dir, video_id))?)
    }
}

/// Loads feature files on first use and keeps them.
#[derive(Debug)]
pub struct FeatureStore {
    dir: PathBuf,
    cache: HashMap<String, VideoFeatures>,
}

impl FeatureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            cache: HashMap::new(),
        }
    }

    pub fn get(&mut self, video_id: &str) -> Result<&VideoFeatures> {
        if !self.cache.contains_key(video_id) {
            let f = VideoFeatures::load(&self.dir, video_id)?;
            self.cache.insert(video_id.to_string(), f);
        }
        Ok(&self.cache[video_id])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_examples() {
        assert_eq!(sample_frames(100, 4), [0, 25, 50, 75]);
        assert_eq!(sample_frames(2, 4), [0, 1, 1, 1]);
        assert_eq!(sample_frames(5, 5), [0, 1, 2, 3, 4]);
        assert_eq!(sample_frames(1, 3), [0, 0, 0]);
    }

    #[test]
    fn file_round_trip() {
        let t = Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 0.25, 3.0, -0.125]).unwrap();
        let f = VideoFeatures::new("v", t).unwrap();
        let bytes = f.encode();
        assert_eq!(&bytes[..4], b"VFEA");
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(VideoFeatures::decode("v", &bytes).unwrap(), f);
        assert!(VideoFeatures::decode("v", &bytes[..30]).is_err());
        let mut wrong = bytes.clone();
        wrong[4] = 2;
        assert!(VideoFeatures::decode("v", &wrong).is_err());
    }

    #[test]
    fn sampled_pads_with_last_frame() {
        let t = Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap();
        let f = VideoFeatures::new("v", t).unwrap();
        assert_eq!(f.sampled(4).unwrap().data(), [1.0, 2.0, 2.0, 2.0]);
    }
}
