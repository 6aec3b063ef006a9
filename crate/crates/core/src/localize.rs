//! Foreground localization by temporal differencing.
//!
//! A pixel is foreground when its intensity changed by more than a threshold
//! since the previous frame. The changed-pixel mask is dilated, split into
//! 8-connected components, and every component becomes a square box of at
//! least `min_box` pixels. Boxes that overlap heavily are merged.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::frame::VideoClip;
use crate::{Error, Result};

/// Axis-aligned pixel box `[x0, x1) x [y0, y1)` on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub frame_index: usize,
}

impl BoundingBox {
    /// Checks `0 <= x0 < x1 <= width` and the same vertically.
    pub fn new(
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
        frame_index: usize,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 || x1 > width || y1 > height {
            return Err(Error::invalid(format!(
                "box ({},{})-({},{}) invalid for {}x{} frame",
                x0, y0, x1, y1, width, height
            )));
        }
        Ok(BoundingBox {
            x0,
            y0,
            x1,
            y1,
            frame_index,
        })
    }

    /// The whole frame.
    pub fn full(width: usize, height: usize, frame_index: usize) -> Self {
        BoundingBox {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
            frame_index,
        }
    }

    pub fn width(&self) -> usize {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> usize {
        self.y1.saturating_sub(self.y0)
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn intersection(&self, other: &BoundingBox) -> usize {
        let w = self.x1.min(other.x1).saturating_sub(self.x0.max(other.x0));
        let h = self.y1.min(other.y1).saturating_sub(self.y0.max(other.y0));
        w * h
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizeParams {
    /// Absolute intensity change (on the `[0, 1]` scale) marking a pixel.
    pub diff_threshold: f32,
    /// Square dilation radius applied to the changed-pixel mask.
    pub dilation: usize,
    /// Components with fewer changed pixels are ignored.
    pub min_area: usize,
    /// Minimum side of an emitted box.
    pub min_box: usize,
    /// Boxes whose intersection covers at least this fraction of the smaller
    /// box are merged.
    pub merge_overlap: f64,
}

impl Default for LocalizeParams {
    fn default() -> Self {
        LocalizeParams {
            diff_threshold: 0.05,
            dilation: 1,
            min_area: 4,
            min_box: 16,
            merge_overlap: 0.5,
        }
    }
}

/// Anything that can propose object boxes on a frame.
pub trait Localizer {
    fn localize(&self, clip: &VideoClip, frame_index: usize) -> Result<Vec<BoundingBox>>;
}

/// Default [`Localizer`] built on [`localize_foreground`].
#[derive(Debug, Clone, Copy, Default)]
pub struct DifferenceLocalizer {
    pub params: LocalizeParams,
}

impl Localizer for DifferenceLocalizer {
    fn localize(&self, clip: &VideoClip, frame_index: usize) -> Result<Vec<BoundingBox>> {
        localize_foreground(clip, frame_index, &self.params)
    }
}

/// Boxes around pixels that changed between `frame_index` and its
/// predecessor (the successor for frame 0). Output is sorted row-major.
pub fn localize_foreground(
    clip: &VideoClip,
    frame_index: usize,
    params: &LocalizeParams,
) -> Result<Vec<BoundingBox>> {
    if frame_index >= clip.len() {
        return Err(Error::invalid(format!(
            "frame {} outside clip of {} frames",
            frame_index,
            clip.len()
        )));
    }
    if clip.len() < 2 {
        return Ok(Vec::new());
    }
    let other = if frame_index == 0 { 1 } else { frame_index - 1 };
    let (w, h) = (clip.width(), clip.height());
    let cur = clip.frames()[frame_index].data();
    let prev = clip.frames()[other].data();
    let changed: Vec<bool> = cur
        .iter()
        .zip(prev)
        .map(|(a, b)| (a - b).abs() > params.diff_threshold)
        .collect();
    let mask = dilate(&changed, w, h, params.dilation);

    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut boxes = Vec::new();
    for start in 0..w * h {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut raw = 0usize;
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(p) = stack.pop() {
            let (px, py) = (p % w, p / w);
            if changed[p] {
                raw += 1;
                x0 = x0.min(px);
                y0 = y0.min(py);
                x1 = x1.max(px + 1);
                y1 = y1.max(py + 1);
            }
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let nx = px as isize + dx;
                    let ny = py as isize + dy;
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if mask[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        if raw >= params.min_area.max(1) {
            boxes.push(square(x0, y0, x1, y1, params.min_box, w, h, frame_index));
        }
    }
    Ok(merge(boxes, params, w, h))
}

fn dilate(mask: &[bool], w: usize, h: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    // Separable max filter: rows, then columns.
    let mut rows = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if mask[y * w + x] {
                let lo = x.saturating_sub(radius);
                let hi = (x + radius).min(w - 1);
                rows[y * w + lo..=y * w + hi].iter_mut().for_each(|v| *v = true);
            }
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if rows[y * w + x] {
                let lo = y.saturating_sub(radius);
                let hi = (y + radius).min(h - 1);
                for yy in lo..=hi {
                    out[yy * w + x] = true;
                }
            }
        }
    }
    out
}

/// Grows a box to a square of side `max(w, h, min_side)` about its center,
/// shifted to stay inside the frame.
#[allow(clippy::too_many_arguments)]
fn square(
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    min_side: usize,
    w: usize,
    h: usize,
    frame_index: usize,
) -> BoundingBox {
    let side = (x1 - x0).max(y1 - y0).max(min_side);
    let axis = |lo: usize, hi: usize, limit: usize| -> (usize, usize) {
        let len = side.min(limit);
        let start = ((lo + hi) as isize - len as isize).div_euclid(2);
        let start = start.clamp(0, (limit - len) as isize) as usize;
        (start, start + len)
    };
    let (nx0, nx1) = axis(x0, x1, w);
    let (ny0, ny1) = axis(y0, y1, h);
    BoundingBox {
        x0: nx0,
        y0: ny0,
        x1: nx1,
        y1: ny1,
        frame_index,
    }
}

fn merge(mut boxes: Vec<BoundingBox>, params: &LocalizeParams, w: usize, h: usize) -> Vec<BoundingBox> {
    loop {
        let mut merged = false;
        'outer: for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                let (a, b) = (boxes[i], boxes[j]);
                let inter = a.intersection(&b) as f64;
                let smaller = a.area().min(b.area()) as f64;
                if smaller > 0.0 && inter >= params.merge_overlap * smaller {
                    boxes[i] = square(
                        a.x0.min(b.x0),
                        a.y0.min(b.y0),
                        a.x1.max(b.x1),
                        a.y1.max(b.y1),
                        params.min_box,
                        w,
                        h,
                        a.frame_index,
                    );
                    boxes.swap_remove(j);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }
    boxes.sort_by_key(|b| (b.y0, b.x0, b.y1, b.x1));
    boxes.dedup();
    boxes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Frame;

    fn block_frame(w: usize, h: usize, blocks: &[(usize, usize, usize)]) -> Frame {
        let mut f = Frame::filled(w, h, 0.0);
        for &(bx, by, size) in blocks {
            for y in by..by + size {
                for x in bx..bx + size {
                    f.data_mut()[y * w + x] = 1.0;
                }
            }
        }
        f
    }

    #[test]
    fn static_frames_have_no_boxes() {
        let f = block_frame(64, 64, &[(10, 10, 8)]);
        let clip = VideoClip::new("v", vec![f.clone(), f]).unwrap();
        assert!(localize_foreground(&clip, 1, &LocalizeParams::default()).unwrap().is_empty());
    }

    #[test]
    fn moving_block_gives_one_containing_box() {
        let a = block_frame(64, 64, &[(20, 24, 8)]);
        let b = block_frame(64, 64, &[(22, 24, 8)]);
        let clip = VideoClip::new("v", vec![a, b]).unwrap();
        let boxes = localize_foreground(&clip, 1, &LocalizeParams::default()).unwrap();
        assert_eq!(boxes.len(), 1);
        let block = BoundingBox::new(22, 24, 30, 32, 1, 64, 64).unwrap();
        assert!(boxes[0].contains_box(&block), "{:?}", boxes[0]);
        assert!(boxes[0].width() >= 16 && boxes[0].height() >= 16);
        // Frame 0 looks forward instead.
        let first = localize_foreground(&clip, 0, &LocalizeParams::default()).unwrap();
        assert_eq!(first.len(), 1);
    }

    #[test]
    fn separated_blocks_give_two_boxes() {
        let a = block_frame(96, 64, &[(8, 8, 8), (70, 40, 8)]);
        let b = block_frame(96, 64, &[(10, 8, 8), (68, 42, 8)]);
        let clip = VideoClip::new("v", vec![a, b]).unwrap();
        let boxes = localize_foreground(&clip, 1, &LocalizeParams::default()).unwrap();
        assert_eq!(boxes.len(), 2, "{:?}", boxes);
    }

    #[test]
    fn boxes_stay_inside_frame() {
        let a = block_frame(40, 20, &[(0, 0, 6)]);
        let b = block_frame(40, 20, &[(1, 1, 6)]);
        let clip = VideoClip::new("v", vec![a, b]).unwrap();
        let boxes = localize_foreground(&clip, 1, &LocalizeParams::default()).unwrap();
        assert_eq!(boxes.len(), 1);
        let bx = boxes[0];
        assert!(bx.x0 == 0 && bx.y0 == 0 && bx.x1 <= 40 && bx.y1 <= 20);
        assert_eq!((bx.width(), bx.height()), (16, 16));
    }

    #[test]
    fn out_of_range_frame_is_rejected() {
        let clip = VideoClip::new("v", vec![Frame::filled(8, 8, 0.0)]).unwrap();
        assert!(localize_foreground(&clip, 1, &LocalizeParams::default()).is_err());
        assert!(localize_foreground(&clip, 0, &LocalizeParams::default()).unwrap().is_empty());
    }
}
