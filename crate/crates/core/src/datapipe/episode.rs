//! Recorded demonstrations.
//!
//! Layout (little-endian):
//!
//! ```text
//! "PXEP" | u32 version | u32 width | u32 height | u32 channels (3)
//! u32 frame count | u32 tick rate
//! u32 stamps[n] | u8 labels[n] | u8 rgb[n * height * width * 3]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::arena::{
    render, ActionClass, ArenaConstants, Controller, Frame, GameState, NATIVE_HEIGHT,
    NATIVE_WIDTH,
};
use crate::binio::*;
use crate::error::{arg_err, fmt_err, Result};

pub const EPISODE_MAGIC: &[u8; 4] = b"PXEP";
pub const EPISODE_VERSION: u32 = 1;
const MAX_PIXELS: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Episode {
    pub width: usize,
    pub height: usize,
    pub tick_rate: u32,
    pub stamps: Vec<u32>,
    pub labels: Vec<ActionClass>,
    /// Frames back to back, each `height * width * 3` bytes.
    pub frames: Vec<u8>,
}

impl Episode {
    pub fn new(width: usize, height: usize, tick_rate: u32) -> Self {
        Self {
            width,
            height,
            tick_rate,
            stamps: Vec::new(),
            labels: Vec::new(),
            frames: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn frame_size(&self) -> usize {
        self.width * self.height * 3
    }

    pub fn push(&mut self, stamp: u32, frame: &Frame, label: ActionClass) -> Result<()> {
        if frame.width != self.width || frame.height != self.height {
            return Err(arg_err!(
                "frame is {}x{}, episode is {}x{}",
                frame.width,
                frame.height,
                self.width,
                self.height
            ));
        }
        if self.stamps.last().is_some_and(|&last| stamp <= last) {
            return Err(arg_err!("tick stamp {stamp} is not increasing"));
        }
        self.stamps.push(stamp);
        self.labels.push(label);
        self.frames.extend_from_slice(&frame.data);
        Ok(())
    }

    pub fn frame_bytes(&self, i: usize) -> &[u8] {
        let n = self.frame_size();
        &self.frames[i * n..(i + 1) * n]
    }

    pub fn frame(&self, i: usize) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            data: self.frame_bytes(i).to_vec(),
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(EPISODE_MAGIC)?;
        for v in [EPISODE_VERSION, len_u32(self.width)?, len_u32(self.height)?, 3] {
            put_u32(w, v)?;
        }
        put_u32(w, len_u32(self.len())?)?;
        put_u32(w, self.tick_rate)?;
        let mut buf = Vec::with_capacity(self.len() * 5);
        for s in &self.stamps {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        buf.extend(self.labels.iter().map(|&l| u8::from(l)));
        w.write_all(&buf)?;
        w.write_all(&self.frames)?;
        Ok(())
    }

    /// Reads the header, stamps and labels, leaving the reader at the frames.
    fn read_head<R: Read>(r: &mut R) -> Result<Episode> {
        let magic = get_bytes(r, 4)?;
        if magic != EPISODE_MAGIC {
            return Err(fmt_err!("bad episode magic {magic:?}"));
        }
        let version = get_u32(r)?;
        if version != EPISODE_VERSION {
            return Err(fmt_err!("unsupported episode version {version}"));
        }
        let width = get_u32(r)? as usize;
        let height = get_u32(r)? as usize;
        let channels = get_u32(r)?;
        if channels != 3 {
            return Err(fmt_err!("expected 3 channels, found {channels}"));
        }
        if width == 0 || height == 0 || width * height > MAX_PIXELS {
            return Err(fmt_err!("implausible frame size {width}x{height}"));
        }
        let n = get_u32(r)? as usize;
        let tick_rate = get_u32(r)?;
        let stamps: Vec<u32> = get_bytes(r, n * 4)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if stamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(fmt_err!("tick stamps are not strictly increasing"));
        }
        let labels = get_bytes(r, n)?
            .into_iter()
            .map(|b| ActionClass::try_from(b).map_err(|_| fmt_err!("label {b} out of range")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Episode {
            width,
            height,
            tick_rate,
            stamps,
            labels,
            frames: Vec::new(),
        })
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Episode> {
        let mut ep = Self::read_head(r)?;
        ep.frames = get_bytes(r, ep.len() * ep.frame_size())?;
        expect_eof(r)?;
        Ok(ep)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Episode> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Labels only; the frame payload is skipped (its length is still checked).
    pub fn load_labels(path: &Path) -> Result<Vec<ActionClass>> {
        let file = File::open(path)?;
        let total = file.metadata()?.len();
        let mut r = BufReader::new(file);
        let ep = Self::read_head(&mut r)?;
        let head = 28 + 5 * ep.len() as u64;
        let expected = head + (ep.len() * ep.frame_size()) as u64;
        if total != expected {
            return Err(fmt_err!("episode is {total} bytes, header implies {expected}"));
        }
        Ok(ep.labels)
    }
}

/// Plays `p1` against `p2` from a fresh state, rendering every tick at native
/// resolution and labeling it with player one's choice in that state.
pub fn record_episode(
    constants: &ArenaConstants,
    seed: u64,
    p1: &mut dyn Controller,
    p2: &mut dyn Controller,
    tick_limit: u64,
    path: Option<&Path>,
) -> Result<Episode> {
    if tick_limit == 0 {
        return Err(arg_err!("tick limit must be positive"));
    }
    let mut ep = Episode::new(NATIVE_WIDTH, NATIVE_HEIGHT, constants.tick_rate);
    let mut state = GameState::new(constants.clone(), tick_limit, seed);
    while !state.match_over {
        let a1 = p1.act(&state, 0);
        let a2 = p2.act(&state, 1);
        let frame = render(&state, NATIVE_WIDTH, NATIVE_HEIGHT);
        ep.push(state.tick as u32, &frame, a1)?;
        state.advance(a1, a2)?;
    }
    if let Some(path) = path {
        ep.save(path)?;
    }
    Ok(ep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::{Constant, Expert};

    fn small() -> Episode {
        let mut ep = Episode::new(4, 2, 30);
        for t in 0..3u32 {
            let f = Frame::filled(4, 2, [t as u8, 1, 2]);
            ep.push(t * 2, &f, ActionClass::ALL[t as usize]).unwrap();
        }
        ep
    }

    #[test]
    fn round_trip() {
        let ep = small();
        let mut buf = Vec::new();
        ep.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 28 + 3 * 5 + 3 * 24);
        assert_eq!(Episode::read_from(&mut buf.as_slice()).unwrap(), ep);
    }

    #[test]
    fn every_truncation_is_detected() {
        let mut buf = Vec::new();
        small().write_to(&mut buf).unwrap();
        for cut in 0..buf.len() {
            let err = Episode::read_from(&mut &buf[..cut]).unwrap_err();
            assert!(matches!(err, crate::Error::Format(_)), "cut {cut}: {err}");
        }
        buf.push(0);
        assert!(Episode::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn rejects_non_monotone_stamps() {
        let mut ep = small();
        let f = Frame::filled(4, 2, [0; 3]);
        assert!(ep.push(4, &f, ActionClass::None).is_err());
    }

    #[test]
    fn recording_matches_tick_limit_and_renders() {
        let c = ArenaConstants::default();
        let ep = record_episode(&c, 3, &mut Expert::new(1), &mut Constant(ActionClass::None), 100, None)
            .unwrap();
        assert_eq!(ep.len(), 100);
        assert_eq!(ep.frames.len(), 100 * NATIVE_WIDTH * NATIVE_HEIGHT * 3);
        let again = record_episode(&c, 3, &mut Expert::new(1), &mut Constant(ActionClass::None), 100, None)
            .unwrap();
        assert_eq!(ep, again);
    }
}
