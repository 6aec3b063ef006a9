//! Dense optical flow by exhaustive block matching.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::frame::{Frame, VideoClip};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowParams {
    /// Side of the square matching block.
    pub block: usize,
    /// Largest displacement searched along each axis.
    pub radius: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams { block: 8, radius: 4 }
    }
}

/// Per-pixel displacement `(u, v)` in pixels per frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        FlowField {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Horizontal component.
    pub fn u(&self) -> &[f32] {
        &self.u
    }

    /// Vertical component.
    pub fn v(&self) -> &[f32] {
        &self.v
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }
}

/// Candidate displacements ordered by magnitude, then row-major.
fn candidates(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .collect();
    out.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));
    out
}

/// Motion from `a` to `b`: each block of `a` is matched against every
/// in-bounds displaced block of `b` by sum of absolute differences. Ties go
/// to the smaller displacement, then the earlier one in row-major order. The
/// block-grid field is bilinearly upsampled to every pixel.
pub fn estimate_flow(a: &Frame, b: &Frame, params: &FlowParams) -> Result<FlowField> {
    let (w, h) = (a.width(), a.height());
    if (b.width(), b.height()) != (w, h) {
        return Err(Error::shape(
            "flow",
            format!("frames {}x{} and {}x{}", w, h, b.width(), b.height()),
        ));
    }
    let bs = params.block;
    if bs == 0 || w < bs || h < bs {
        return Err(Error::invalid(format!(
            "{}x{} frame smaller than one {}px block",
            w, h, bs
        )));
    }
    let (nbx, nby) = (w / bs, h / bs);
    let cands = candidates(params.radius);
    let mut grid_u = vec![0.0f32; nbx * nby];
    let mut grid_v = vec![0.0f32; nbx * nby];
    let (ad, bd) = (a.data(), b.data());
    for by in 0..nby {
        for bx in 0..nbx {
            let (x0, y0) = (bx * bs, by * bs);
            let mut best = (0isize, 0isize);
            let mut best_sad = f32::INFINITY;
            for &(dx, dy) in &cands {
                let tx = x0 as isize + dx;
                let ty = y0 as isize + dy;
                if tx < 0 || ty < 0 || tx as usize + bs > w || ty as usize + bs > h {
                    continue;
                }
                let (tx, ty) = (tx as usize, ty as usize);
                let mut sad = 0.0f32;
                for r in 0..bs {
                    let ra = &ad[(y0 + r) * w + x0..(y0 + r) * w + x0 + bs];
                    let rb = &bd[(ty + r) * w + tx..(ty + r) * w + tx + bs];
                    for (p, q) in ra.iter().zip(rb) {
                        sad += (p - q).abs();
                    }
                    if sad >= best_sad {
                        break;
                    }
                }
                if sad < best_sad {
                    best_sad = sad;
                    best = (dx, dy);
                }
            }
            grid_u[by * nbx + bx] = best.0 as f32;
            grid_v[by * nbx + bx] = best.1 as f32;
        }
    }

    let mut field = FlowField::zeros(w, h);
    let coord = |p: usize, n: usize| -> (usize, usize, f32) {
        let g = ((p as f32 + 0.5) / bs as f32 - 0.5).clamp(0.0, (n - 1) as f32);
        let lo = Float::floor(g) as usize;
        let hi = (lo + 1).min(n - 1);
        (lo, hi, g - lo as f32)
    };
    for y in 0..h {
        let (y0, y1, fy) = coord(y, nby);
        for x in 0..w {
            let (x0, x1, fx) = coord(x, nbx);
            let lerp = |g: &[f32]| {
                let top = g[y0 * nbx + x0] * (1.0 - fx) + g[y0 * nbx + x1] * fx;
                let bot = g[y1 * nbx + x0] * (1.0 - fx) + g[y1 * nbx + x1] * fx;
                top * (1.0 - fy) + bot * fy
            };
            field.u[y * w + x] = lerp(&grid_u);
            field.v[y * w + x] = lerp(&grid_v);
        }
    }
    Ok(field)
}

/// Flow map for every frame of a clip: frame `t` carries the motion from `t`
/// to `t + 1`; the last frame repeats its predecessor's map.
pub fn clip_flow(clip: &VideoClip, params: &FlowParams) -> Result<Vec<FlowField>> {
    let frames = clip.frames();
    if frames.len() == 1 {
        return Ok(vec![FlowField::zeros(clip.width(), clip.height())]);
    }
    let mut maps = Vec::with_capacity(frames.len());
    for pair in frames.windows(2) {
        maps.push(estimate_flow(&pair[0], &pair[1], params)?);
    }
    let last = maps.last().expect("at least one pair").clone();
    maps.push(last);
    Ok(maps)
}
