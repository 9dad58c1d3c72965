use crate::arena::Frame;

/// Source index for output index `i` under center-aligned nearest-neighbor
/// resampling: `floor((i + 0.5) * input / output)`.
pub fn nn_index(i: usize, input: usize, output: usize) -> usize {
    // Exact integer form of the floor above.
    (((2 * i + 1) * input) / (2 * output)).min(input - 1)
}

/// Nearest-neighbor resize. Every output pixel is a copy of one input pixel.
pub fn downsample_nn(frame: &Frame, out_h: usize, out_w: usize) -> Frame {
    assert!(out_h >= 1 && out_w >= 1, "output must be non-empty");
    let cols: Vec<usize> = (0..out_w).map(|c| nn_index(c, frame.width, out_w)).collect();
    let mut data = Vec::with_capacity(out_h * out_w * 3);
    for r in 0..out_h {
        let src_row = nn_index(r, frame.height, out_h) * frame.width;
        for &c in &cols {
            let i = (src_row + c) * 3;
            data.extend_from_slice(&frame.data[i..i + 3]);
        }
    }
    Frame {
        width: out_w,
        height: out_h,
        data,
    }
}
