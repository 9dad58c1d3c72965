//! Declarative architecture descriptions and their shape algebra.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, dim_err, Error, Result};
use crate::ops::{pool_extent, ConvGeometry, LrnSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    SingleFrame,
    EarlyIntegration,
    LateIntegration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    PaperFull,
    Compact,
}

impl Variant {
    pub const ALL: [Variant; 3] = [
        Variant::SingleFrame,
        Variant::EarlyIntegration,
        Variant::LateIntegration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SingleFrame => "single_frame",
            Variant::EarlyIntegration => "early_integration",
            Variant::LateIntegration => "late_integration",
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::PaperFull => "paper_full",
            Preset::Compact => "compact",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| arg_err!("unknown variant {s:?}"))
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_full" => Ok(Preset::PaperFull),
            "compact" => Ok(Preset::Compact),
            _ => Err(arg_err!("unknown preset {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        kernel: usize,
        stride: usize,
        pad: usize,
        filters: usize,
    },
    Relu,
    Lrn {
        #[serde(flatten)]
        spec: LrnSpec,
    },
    MaxPool {
        size: usize,
        stride: usize,
    },
    Dense {
        units: usize,
    },
    Dropout {
        p: f32,
    },
}

impl LayerSpec {
    fn conv(kernel: usize, stride: usize, pad: usize, filters: usize) -> Self {
        LayerSpec::Conv {
            kernel,
            stride,
            pad,
            filters,
        }
    }

    fn pool(size: usize, stride: usize) -> Self {
        LayerSpec::MaxPool { size, stride }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub preset: Preset,
    pub variant: Variant,
    /// Model input `(height, width)` in pixels.
    pub input_resolution: (usize, usize),
    pub frame_count: usize,
    pub class_count: usize,
    /// Layers applied to the image input (per frame for late integration).
    pub tower: Vec<LayerSpec>,
    /// Layers applied to the flattened (and, for late integration,
    /// concatenated) tower features. The last one must be `Dense` with
    /// `class_count` units.
    pub head: Vec<LayerSpec>,
}

/// Output shape of every layer, computed from the layer formulas alone.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeTrace {
    pub tower_input: (usize, usize, usize),
    pub tower: Vec<Vec<usize>>,
    /// Flattened length of one tower's output.
    pub flatten: usize,
    /// Length of the head's input (`towers * flatten`).
    pub head_input: usize,
    pub head: Vec<usize>,
    /// Spatial extent after each convolution or pooling layer.
    pub spatial_chain: Vec<usize>,
}

pub const DEFAULT_FRAME_COUNT: usize = 4;

impl ArchitectureSpec {
    pub fn preset(preset: Preset, variant: Variant, class_count: usize) -> Result<Self> {
        Self::with_frames(preset, variant, class_count, DEFAULT_FRAME_COUNT)
    }

    pub fn with_frames(
        preset: Preset,
        variant: Variant,
        class_count: usize,
        frame_count: usize,
    ) -> Result<Self> {
        if class_count == 0 {
            return Err(arg_err!("class_count must be positive"));
        }
        if frame_count == 0 {
            return Err(arg_err!("frame_count must be positive"));
        }
        let lrn = LayerSpec::Lrn {
            spec: LrnSpec::default(),
        };
        let (input_resolution, tower, head) = match preset {
            Preset::PaperFull => (
                (128, 128),
                vec![
                    LayerSpec::conv(7, 2, 0, 96),
                    LayerSpec::Relu,
                    lrn,
                    LayerSpec::pool(3, 3),
                    LayerSpec::conv(5, 1, 2, 256),
                    LayerSpec::Relu,
                    LayerSpec::pool(2, 2),
                    LayerSpec::conv(3, 1, 1, 512),
                    LayerSpec::Relu,
                    LayerSpec::conv(3, 1, 1, 512),
                    LayerSpec::Relu,
                    LayerSpec::conv(3, 1, 1, 512),
                    LayerSpec::Relu,
                    LayerSpec::pool(3, 3),
                ],
                vec![
                    LayerSpec::Dense { units: 4096 },
                    LayerSpec::Dropout { p: 0.5 },
                    LayerSpec::Dense { units: 4096 },
                    LayerSpec::Dropout { p: 0.5 },
                    LayerSpec::Dense { units: class_count },
                ],
            ),
            Preset::Compact => (
                (64, 64),
                vec![
                    LayerSpec::conv(5, 2, 2, 32),
                    LayerSpec::Relu,
                    lrn,
                    LayerSpec::pool(2, 2),
                    LayerSpec::conv(3, 1, 1, 64),
                    LayerSpec::Relu,
                    LayerSpec::pool(2, 2),
                    LayerSpec::conv(3, 1, 1, 64),
                    LayerSpec::Relu,
                    LayerSpec::pool(2, 2),
                ],
                vec![
                    LayerSpec::Dense { units: 256 },
                    LayerSpec::Dropout { p: 0.5 },
                    LayerSpec::Dense { units: class_count },
                ],
            ),
        };
        let spec = Self {
            preset,
            variant,
            input_resolution,
            frame_count,
            class_count,
            tower,
            head,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Number of frames one forward pass consumes.
    pub fn frames_consumed(&self) -> usize {
        match self.variant {
            Variant::SingleFrame => 1,
            _ => self.frame_count,
        }
    }

    pub fn tower_count(&self) -> usize {
        match self.variant {
            Variant::LateIntegration => self.frame_count,
            _ => 1,
        }
    }

    pub fn tower_input_channels(&self) -> usize {
        match self.variant {
            Variant::EarlyIntegration => 3 * self.frame_count,
            _ => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.head.last() {
            Some(LayerSpec::Dense { units }) if *units == self.class_count => {}
            _ => {
                return Err(arg_err!(
                    "head must end in a dense layer with {} units",
                    self.class_count
                ))
            }
        }
        self.shape_trace().map(|_| ())
    }

    pub fn shape_trace(&self) -> Result<ShapeTrace> {
        let (h, w) = self.input_resolution;
        let tower_input = (h, w, self.tower_input_channels());
        let mut cur = vec![h, w, tower_input.2];
        let mut tower = Vec::with_capacity(self.tower.len());
        let mut spatial_chain = Vec::new();
        for (i, layer) in self.tower.iter().enumerate() {
            cur = match *layer {
                LayerSpec::Conv {
                    kernel,
                    stride,
                    pad,
                    filters,
                } => {
                    let g = ConvGeometry::new((cur[0], cur[1], cur[2]), kernel, filters, stride, pad)
                        .map_err(|e| dim_err!("tower layer {i}: {e}"))?;
                    vec![g.out_h, g.out_w, filters]
                }
                LayerSpec::MaxPool { size, stride } => vec![
                    pool_extent(cur[0], size, stride).map_err(|e| dim_err!("tower layer {i}: {e}"))?,
                    pool_extent(cur[1], size, stride).map_err(|e| dim_err!("tower layer {i}: {e}"))?,
                    cur[2],
                ],
                LayerSpec::Relu => cur,
                LayerSpec::Lrn { spec } => {
                    spec.validate()?;
                    cur
                }
                LayerSpec::Dropout { p } => {
                    check_p(p)?;
                    cur
                }
                LayerSpec::Dense { .. } => {
                    return Err(arg_err!("dense layer {i} inside a convolutional tower"))
                }
            };
            if matches!(layer, LayerSpec::Conv { .. } | LayerSpec::MaxPool { .. }) {
                spatial_chain.push(cur[0]);
            }
            tower.push(cur.clone());
        }
        let flatten: usize = cur.iter().product();
        let head_input = flatten * self.tower_count();
        let mut width = head_input;
        let mut head = Vec::with_capacity(self.head.len());
        for (i, layer) in self.head.iter().enumerate() {
            width = match *layer {
                LayerSpec::Dense { units } if units > 0 => units,
                LayerSpec::Relu => width,
                LayerSpec::Dropout { p } => {
                    check_p(p)?;
                    width
                }
                _ => return Err(arg_err!("head layer {i} ({layer:?}) not allowed in the head")),
            };
            head.push(width);
        }
        Ok(ShapeTrace {
            tower_input,
            tower,
            flatten,
            head_input,
            head,
            spatial_chain,
        })
    }

    /// Tower parameter namespaces in canonical order.
    pub fn tower_namespaces(&self) -> Vec<String> {
        match self.variant {
            Variant::LateIntegration => (0..self.frame_count).map(|i| format!("tower{i}")).collect(),
            _ => vec!["tower".to_string()],
        }
    }

    /// Every parameter block name with its shape, in canonical order.
    pub fn block_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let trace = self.shape_trace()?;
        let mut blocks = Vec::new();
        for ns in self.tower_namespaces() {
            let mut in_c = trace.tower_input.2;
            for (i, layer) in self.tower.iter().enumerate() {
                if let LayerSpec::Conv { kernel, filters, .. } = *layer {
                    blocks.push((format!("{ns}.{i}.weight"), vec![kernel, kernel, in_c, filters]));
                    blocks.push((format!("{ns}.{i}.bias"), vec![filters]));
                }
                in_c = trace.tower[i][2];
            }
        }
        let mut width = trace.head_input;
        for (i, layer) in self.head.iter().enumerate() {
            if let LayerSpec::Dense { units } = *layer {
                blocks.push((format!("head.{i}.weight"), vec![width, units]));
                blocks.push((format!("head.{i}.bias"), vec![units]));
            }
            width = trace.head[i];
        }
        Ok(blocks)
    }
}

fn check_p(p: f32) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(arg_err!("dropout p {p} outside [0, 1)"));
    }
    Ok(())
}

/// Exact number of scalars across all parameter blocks.
pub fn param_count(spec: &ArchitectureSpec) -> Result<usize> {
    Ok(spec
        .block_shapes()?
        .iter()
        .map(|(_, s)| s.iter().product::<usize>())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_full_shape_chain() {
        let spec = ArchitectureSpec::preset(Preset::PaperFull, Variant::SingleFrame, 30).unwrap();
        let t = spec.shape_trace().unwrap();
        assert_eq!(t.spatial_chain, vec![61, 20, 20, 10, 10, 10, 10, 3]);
        assert_eq!(t.flatten, 4608);
    }

    #[test]
    fn early_integration_input_depth() {
        let spec =
            ArchitectureSpec::preset(Preset::PaperFull, Variant::EarlyIntegration, 30).unwrap();
        assert_eq!(spec.shape_trace().unwrap().tower_input, (128, 128, 12));
    }

    #[test]
    fn late_integration_head_input() {
        let spec =
            ArchitectureSpec::preset(Preset::PaperFull, Variant::LateIntegration, 30).unwrap();
        assert_eq!(spec.shape_trace().unwrap().head_input, 18432);
    }

    #[test]
    fn first_conv_block_count() {
        let spec = ArchitectureSpec::preset(Preset::PaperFull, Variant::SingleFrame, 30).unwrap();
        let blocks = spec.block_shapes().unwrap();
        let n: usize = blocks[..2].iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        assert_eq!(n, 14208);
    }

    #[test]
    fn lone_dense_count() {
        // 1x1 conv to 10 channels feeding a single 10 -> 5 dense layer.
        let spec = ArchitectureSpec {
            preset: Preset::Compact,
            variant: Variant::SingleFrame,
            input_resolution: (1, 1),
            frame_count: 1,
            class_count: 5,
            tower: vec![LayerSpec::conv(1, 1, 0, 10)],
            head: vec![LayerSpec::Dense { units: 5 }],
        };
        let conv = 3 * 10 + 10;
        assert_eq!(param_count(&spec).unwrap() - conv, 55);
    }

    #[test]
    fn late_count_is_namespace_sum() {
        let late = ArchitectureSpec::preset(Preset::Compact, Variant::LateIntegration, 10).unwrap();
        let blocks = late.block_shapes().unwrap();
        let size = |prefix: &str| -> usize {
            blocks
                .iter()
                .filter(|(n, _)| n.starts_with(prefix))
                .map(|(_, s)| s.iter().product::<usize>())
                .sum()
        };
        assert_eq!(
            param_count(&late).unwrap(),
            4 * size("tower0.") + size("head.")
        );
    }

    #[test]
    fn invalid_pipeline_rejected_at_construction() {
        let mut spec = ArchitectureSpec::preset(Preset::Compact, Variant::SingleFrame, 10).unwrap();
        spec.input_resolution = (8, 8);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn presets_parse() {
        assert_eq!("compact".parse::<Preset>().unwrap(), Preset::Compact);
        assert!("huge".parse::<Preset>().is_err());
        assert_eq!(
            "late_integration".parse::<Variant>().unwrap(),
            Variant::LateIntegration
        );
    }
}
