//! Mean image over the training frames at model resolution.
//!
//! Stored as `u32 height | u32 width | f32 data[height * width * 3]`,
//! little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::binio::*;
use crate::datapipe::episode::Episode;
use crate::datapipe::resample::downsample_nn;
use crate::error::{arg_err, fmt_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MeanImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl MeanImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        put_u32(w, len_u32(self.height)?)?;
        put_u32(w, len_u32(self.width)?)?;
        put_f32s(w, &self.data)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let height = get_u32(r)? as usize;
        let width = get_u32(r)? as usize;
        if height == 0 || width == 0 || height * width > 1 << 24 {
            return Err(fmt_err!("implausible mean image size {height}x{width}"));
        }
        let data = get_f32s(r, height * width * 3)?;
        expect_eof(r)?;
        Ok(Self { height, width, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(8 + self.data.len() * 4);
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    /// Hex SHA-256 of the serialized image; checkpoints record it to bind a
    /// model to the preprocessing it was trained with.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

/// Streaming per-pixel mean. Sums are kept in f64 and frames are added in
/// caller order, so the result is reproducible.
pub struct MeanAccumulator {
    height: usize,
    width: usize,
    sums: Vec<f64>,
    count: u64,
}

impl MeanAccumulator {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            sums: vec![0.0; height * width * 3],
            count: 0,
        }
    }

    /// Adds one frame already at model resolution.
    pub fn add(&mut self, frame: &[u8]) -> Result<()> {
        if frame.len() != self.sums.len() {
            return Err(arg_err!("frame has {} bytes, expected {}", frame.len(), self.sums.len()));
        }
        for (s, &p) in self.sums.iter_mut().zip(frame) {
            *s += p as f64;
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(&self) -> Result<MeanImage> {
        if self.count == 0 {
            return Err(arg_err!("mean image of an empty training set"));
        }
        let n = self.count as f64;
        Ok(MeanImage {
            height: self.height,
            width: self.width,
            data: self.sums.iter().map(|&s| (s / n) as f32).collect(),
        })
    }
}

/// Mean of every frame of `episodes` after downsampling to `height x width`,
/// in episode then tick order.
pub fn compute_mean_image(episodes: &[Episode], height: usize, width: usize) -> Result<MeanImage> {
    let mut acc = MeanAccumulator::new(height, width);
    for ep in episodes {
        for i in 0..ep.len() {
            acc.add(&downsample_nn(&ep.frame(i), height, width).data)?;
        }
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::{ActionClass, Frame};

    fn episode(values: &[u8]) -> Episode {
        let mut ep = Episode::new(2, 2, 30);
        for (t, &v) in values.iter().enumerate() {
            ep.push(t as u32, &Frame::filled(2, 2, [v; 3]), ActionClass::None).unwrap();
        }
        ep
    }

    #[test]
    fn single_frame_mean_is_the_frame() {
        let m = compute_mean_image(&[episode(&[7])], 2, 2).unwrap();
        assert!(m.data.iter().all(|&v| v == 7.0));
    }

    #[test]
    fn black_and_white_average() {
        let m = compute_mean_image(&[episode(&[0]), episode(&[255])], 2, 2).unwrap();
        assert!(m.data.iter().all(|&v| v == 127.5));
    }

    #[test]
    fn empty_set_is_rejected() {
        assert!(compute_mean_image(&[], 2, 2).is_err());
    }

    #[test]
    fn file_round_trip_and_hash() {
        let m = compute_mean_image(&[episode(&[1, 2, 9])], 2, 2).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(bytes.len(), 8 + 12 * 4);
        let back = MeanImage::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.hash(), m.hash());
        assert!(MeanImage::read_from(&mut &bytes[..bytes.len() - 1]).is_err());
    }
}
