//! Binary checkpoint files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "PXPL" | u32 version
//! u32 len | spec JSON (UTF-8)
//! u64 iteration
//! u32 len | mean-image hash (UTF-8 hex)
//! u32 block count | per block: u32 len | name | u32 ndim | u32 dims.. | f32 data..
//! u32 optimizer count | per entry: u32 len | name | u64 steps | f64 beta1 | f64 beta2
//!                       | f64 epsilon | f32 m.. | f32 v..   (shape of the named block)
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio::*;
use crate::error::{fmt_err, Result};
use crate::models::params::ModelParams;
use crate::models::spec::ArchitectureSpec;
use crate::optim::AdamState;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PXPL";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_NAME: usize = 1 << 12;
const MAX_SPEC: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: ArchitectureSpec,
    pub params: ModelParams,
    pub optimizer: BTreeMap<String, AdamState>,
    pub iteration: u64,
    pub mean_hash: String,
}

impl Checkpoint {
    pub fn new(spec: ArchitectureSpec, params: ModelParams) -> Self {
        Self {
            spec,
            params,
            optimizer: BTreeMap::new(),
            iteration: 0,
            mean_hash: String::new(),
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        put_u32(w, CHECKPOINT_VERSION)?;
        let spec = serde_json::to_string(&self.spec).map_err(|e| fmt_err!("spec: {e}"))?;
        put_str(w, &spec)?;
        put_u64(w, self.iteration)?;
        put_str(w, &self.mean_hash)?;
        put_u32(w, len_u32(self.params.len())?)?;
        for (name, t) in self.params.iter() {
            put_str(w, name)?;
            put_u32(w, len_u32(t.shape().len())?)?;
            for &d in t.shape() {
                put_u32(w, len_u32(d)?)?;
            }
            put_f32s(w, t.data())?;
        }
        put_u32(w, len_u32(self.optimizer.len())?)?;
        for (name, st) in &self.optimizer {
            put_str(w, name)?;
            put_u64(w, st.step_count)?;
            put_f64(w, st.beta1)?;
            put_f64(w, st.beta2)?;
            put_f64(w, st.epsilon)?;
            put_f32s(w, st.m.data())?;
            put_f32s(w, st.v.data())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let magic = get_bytes(r, 4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(fmt_err!("bad checkpoint magic {magic:?}"));
        }
        let version = get_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(fmt_err!("unsupported checkpoint version {version}"));
        }
        let spec_json = get_str(r, MAX_SPEC)?;
        let spec: ArchitectureSpec =
            serde_json::from_str(&spec_json).map_err(|e| fmt_err!("spec: {e}"))?;
        spec.validate().map_err(|e| fmt_err!("stored spec invalid: {e}"))?;
        let iteration = get_u64(r)?;
        let mean_hash = get_str(r, MAX_NAME)?;

        let expected: BTreeMap<String, Vec<usize>> = spec.block_shapes()?.into_iter().collect();
        let n_blocks = get_u32(r)? as usize;
        if n_blocks != expected.len() {
            return Err(fmt_err!(
                "checkpoint has {n_blocks} blocks, spec defines {}",
                expected.len()
            ));
        }
        let mut blocks = BTreeMap::new();
        for _ in 0..n_blocks {
            let name = get_str(r, MAX_NAME)?;
            let ndim = get_u32(r)? as usize;
            if ndim > 8 {
                return Err(fmt_err!("block {name}: implausible rank {ndim}"));
            }
            let shape = (0..ndim)
                .map(|_| get_u32(r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            match expected.get(&name) {
                Some(s) if *s == shape => {}
                Some(s) => {
                    return Err(fmt_err!(
                        "block {name}: stored shape {shape:?} disagrees with spec {s:?}"
                    ))
                }
                None => return Err(fmt_err!("block {name} not defined by spec")),
            }
            let n = shape.iter().product();
            let t = Tensor::new(&shape, get_f32s(r, n)?).map_err(|e| fmt_err!("{e}"))?;
            blocks.insert(name, t);
        }
        let n_opt = get_u32(r)? as usize;
        let mut optimizer = BTreeMap::new();
        for _ in 0..n_opt {
            let name = get_str(r, MAX_NAME)?;
            let shape = blocks
                .get(&name)
                .map(|t: &Tensor| t.shape().to_vec())
                .ok_or_else(|| fmt_err!("optimizer state for unknown block {name}"))?;
            let n: usize = shape.iter().product();
            let step_count = get_u64(r)?;
            let beta1 = get_f64(r)?;
            let beta2 = get_f64(r)?;
            let epsilon = get_f64(r)?;
            let m = Tensor::new(&shape, get_f32s(r, n)?)?;
            let v = Tensor::new(&shape, get_f32s(r, n)?)?;
            optimizer.insert(
                name,
                AdamState {
                    step_count,
                    m,
                    v,
                    beta1,
                    beta2,
                    epsilon,
                },
            );
        }
        expect_eof(r)?;
        Ok(Self {
            spec,
            params: ModelParams::from_blocks(blocks),
            optimizer,
            iteration,
            mean_hash,
        })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    ckpt.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    Checkpoint::read_from(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::spec::{Preset, Variant};
    use crate::Error;

    fn sample() -> Checkpoint {
        let spec = ArchitectureSpec::preset(Preset::Compact, Variant::SingleFrame, 10).unwrap();
        let params = ModelParams::he_uniform(&spec, 9).unwrap();
        let mut ck = Checkpoint::new(spec, params);
        let (name, t) = ck.params.iter().next().map(|(n, t)| (n.clone(), t.clone())).unwrap();
        let mut st = AdamState::new(t.shape());
        st.step_count = 3;
        st.m.fill(0.25);
        ck.optimizer.insert(name, st);
        ck.iteration = 42;
        ck.mean_hash = "abc123".into();
        ck
    }

    fn bytes(ck: &Checkpoint) -> Vec<u8> {
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ck = sample();
        let buf = bytes(&ck);
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(bytes(&back), buf);
        for ((na, a), (nb, b)) in ck.params.iter().zip(back.params.iter()) {
            assert_eq!(na, nb);
            let ab: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        assert_eq!(back.optimizer, ck.optimizer);
    }

    #[test]
    fn wrong_magic_rejected() {
        let mut buf = bytes(&sample());
        buf[0] = b'X';
        assert!(matches!(
            Checkpoint::read_from(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut buf = bytes(&sample());
        buf[4] = 99;
        assert!(matches!(
            Checkpoint::read_from(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn truncation_rejected() {
        let buf = bytes(&sample());
        for cut in [3, 10, buf.len() / 2, buf.len() - 1] {
            assert!(matches!(
                Checkpoint::read_from(&mut &buf[..cut]),
                Err(Error::Format(_))
            ));
        }
    }

    #[test]
    fn spec_shape_disagreement_rejected() {
        let mut ck = sample();
        // Store a spec whose class count differs from the stored head block.
        let mut other = ck.spec.clone();
        other.class_count = 7;
        if let Some(crate::models::LayerSpec::Dense { units }) = other.head.last_mut() {
            *units = 7;
        }
        ck.spec = other;
        let buf = bytes(&ck);
        assert!(matches!(
            Checkpoint::read_from(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
    }
}
