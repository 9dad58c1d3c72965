use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{arg_err, Result};
use crate::models::spec::ArchitectureSpec;
use crate::tensor::Tensor;

/// Named parameter blocks, keyed by layer path (`tower0.4.weight`, ...).
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ModelParams {
    blocks: BTreeMap<String, Tensor>,
}

impl ModelParams {
    pub fn from_blocks(blocks: BTreeMap<String, Tensor>) -> Self {
        Self { blocks }
    }

    /// He-uniform weights (`bound = sqrt(6 / fan_in)`), zero biases.
    pub fn he_uniform(spec: &ArchitectureSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = BTreeMap::new();
        for (name, shape) in spec.block_shapes()? {
            let t = if name.ends_with(".bias") {
                Tensor::zeros(&shape)
            } else {
                let fan_in: usize = shape[..shape.len() - 1].iter().product();
                let bound = (6.0 / fan_in as f32).sqrt();
                Tensor::uniform(&shape, bound, &mut rng)
            };
            blocks.insert(name, t);
        }
        Ok(Self { blocks })
    }

    pub fn zeros(spec: &ArchitectureSpec) -> Result<Self> {
        Ok(Self {
            blocks: spec
                .block_shapes()?
                .into_iter()
                .map(|(n, s)| (n, Tensor::zeros(&s)))
                .collect(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.blocks
            .get(name)
            .ok_or_else(|| arg_err!("missing parameter block {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.blocks
            .get_mut(name)
            .ok_or_else(|| arg_err!("missing parameter block {name}"))
    }

    /// Mutable access to two distinct blocks at once.
    pub fn pair_mut(&mut self, a: &str, b: &str) -> Result<(&mut Tensor, &mut Tensor)> {
        assert_ne!(a, b);
        let mut ta = None;
        let mut tb = None;
        for (name, t) in self.blocks.iter_mut() {
            if name == a {
                ta = Some(t);
            } else if name == b {
                tb = Some(t);
            }
        }
        match (ta, tb) {
            (Some(x), Some(y)) => Ok((x, y)),
            _ => Err(arg_err!("missing parameter block {a} or {b}")),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.blocks.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.blocks.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.blocks.keys()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.blocks.values().map(Tensor::len).sum()
    }

    pub fn fill(&mut self, value: f32) {
        self.blocks.values_mut().for_each(|t| t.fill(value));
    }

    pub fn scale(&mut self, s: f32) {
        self.blocks.values_mut().for_each(|t| t.scale(s));
    }

    /// Checks that names and shapes match the spec exactly.
    pub fn check_against(&self, spec: &ArchitectureSpec) -> Result<()> {
        let expected = spec.block_shapes()?;
        if expected.len() != self.blocks.len() {
            return Err(arg_err!(
                "expected {} parameter blocks, found {}",
                expected.len(),
                self.blocks.len()
            ));
        }
        for (name, shape) in expected {
            let t = self.get(&name)?;
            if t.shape() != shape.as_slice() {
                return Err(arg_err!(
                    "block {name} has shape {:?}, spec requires {shape:?}",
                    t.shape()
                ));
            }
        }
        Ok(())
    }

    pub fn sq_norm(&self) -> f64 {
        self.blocks.values().map(Tensor::sq_norm).sum()
    }
}
