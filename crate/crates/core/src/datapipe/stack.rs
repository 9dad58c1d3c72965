use serde::{Deserialize, Serialize};

use crate::datapipe::episode::Episode;
use crate::datapipe::mean::MeanImage;
use crate::datapipe::resample::downsample_nn;
use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

/// Multiplier applied after mean subtraction, keeping inputs near unit range.
pub const INPUT_SCALE: f32 = 1.0 / 255.0;

/// Tick offsets of the frames in one network input, newest first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackSpec {
    pub offsets: Vec<i64>,
}

impl Default for StackSpec {
    fn default() -> Self {
        Self {
            offsets: vec![0, -5, -10, -15],
        }
    }
}

impl StackSpec {
    pub fn single() -> Self {
        Self { offsets: vec![0] }
    }

    pub fn frame_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.offsets.first() != Some(&0) {
            return Err(arg_err!("stack offsets must start at 0"));
        }
        if self.offsets.windows(2).any(|w| w[1] >= w[0]) {
            return Err(arg_err!("stack offsets must be strictly decreasing"));
        }
        Ok(())
    }

    /// Deepest look-back in ticks.
    pub fn span(&self) -> usize {
        self.offsets.last().map_or(0, |o| o.unsigned_abs() as usize)
    }

    /// Frame indices for `tick`, clamping look-back before the first frame.
    pub fn indices(&self, tick: usize) -> Vec<usize> {
        self.offsets
            .iter()
            .map(|&o| (tick as i64 + o).max(0) as usize)
            .collect()
    }
}

/// Mean-subtracts and scales one frame already at model resolution.
pub fn preprocess(frame: &[u8], mean: &MeanImage) -> Result<Tensor> {
    if frame.len() != mean.data.len() {
        return Err(arg_err!(
            "frame has {} values, mean image has {}",
            frame.len(),
            mean.data.len()
        ));
    }
    let data = frame
        .iter()
        .zip(&mean.data)
        .map(|(&p, &m)| (p as f32 - m) * INPUT_SCALE)
        .collect();
    Tensor::new(&[mean.height, mean.width, 3], data)
}

/// Network input for `tick` of a native-resolution episode.
pub fn make_stack(
    episode: &Episode,
    tick: usize,
    spec: &StackSpec,
    mean: &MeanImage,
) -> Result<Vec<Tensor>> {
    if tick >= episode.len() {
        return Err(arg_err!("tick {tick} outside episode of {} frames", episode.len()));
    }
    spec.indices(tick)
        .into_iter()
        .map(|i| {
            let small = downsample_nn(&episode.frame(i), mean.height, mean.width);
            preprocess(&small.data, mean)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::{ActionClass, Frame};

    fn counting_episode(n: usize) -> Episode {
        let mut ep = Episode::new(4, 4, 30);
        for t in 0..n {
            ep.push(t as u32, &Frame::filled(4, 4, [t as u8; 3]), ActionClass::None).unwrap();
        }
        ep
    }

    #[test]
    fn clamps_to_first_frame() {
        let spec = StackSpec::default();
        assert_eq!(spec.indices(0), vec![0, 0, 0, 0]);
        assert_eq!(spec.indices(15), vec![15, 10, 5, 0]);
        assert_eq!(spec.indices(7), vec![7, 2, 0, 0]);
    }

    #[test]
    fn slots_hold_the_right_frames() {
        let ep = counting_episode(20);
        let mean = MeanImage::zeros(2, 2);
        let s = make_stack(&ep, 15, &StackSpec::default(), &mean).unwrap();
        let firsts: Vec<f32> = s.iter().map(|t| t.data()[0] / INPUT_SCALE).collect();
        assert_eq!(firsts, vec![15.0, 10.0, 5.0, 0.0]);
        assert!(make_stack(&ep, 20, &StackSpec::default(), &mean).is_err());
    }

    #[test]
    fn frame_equal_to_mean_is_zero() {
        let ep = counting_episode(3);
        let mut mean = MeanImage::zeros(2, 2);
        mean.data.fill(2.0);
        let s = make_stack(&ep, 2, &StackSpec::single(), &mean).unwrap();
        assert!(s[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn validation() {
        assert!(StackSpec::default().validate().is_ok());
        assert!(StackSpec { offsets: vec![-1, -5] }.validate().is_err());
        assert!(StackSpec { offsets: vec![0, -5, -5] }.validate().is_err());
    }
}
