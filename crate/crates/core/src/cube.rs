//! Spatio-temporal cubes (appearance), optical-flow cubes (motion), whole-frame
//! cubes for the frame-level baseline, and the learning-paradigm transforms.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;
use core::str::FromStr;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::flow::FlowField;
use crate::frame::VideoClip;
use crate::localize::BoundingBox;
use crate::{Error, Result, CUBE_DEPTH, CUBE_SIZE};

/// Output size of cube extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CubeShape {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for CubeShape {
    fn default() -> Self {
        CubeShape {
            depth: CUBE_DEPTH,
            height: CUBE_SIZE,
            width: CUBE_SIZE,
        }
    }
}

/// A stack of `slices` temporal slices, each with `components` planes of
/// `height x width`. Channel `s * components + c` holds component `c` of slice
/// `s`. The buffer is shared so identical input/target pairs cost nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    slices: usize,
    components: usize,
    height: usize,
    width: usize,
    data: Arc<[f32]>,
}

impl Volume {
    pub fn new(
        slices: usize,
        components: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if data.len() != slices * components * height * width {
            return Err(Error::shape(
                "volume",
                format!(
                    "{}x{}x{}x{} volume needs {} values, got {}",
                    slices,
                    components,
                    height,
                    width,
                    slices * components * height * width,
                    data.len()
                ),
            ));
        }
        Ok(Volume {
            slices,
            components,
            height,
            width,
            data: data.into(),
        })
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn channels(&self) -> usize {
        self.slices * self.components
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// All components of temporal slice `s`.
    pub fn slice(&self, s: usize) -> &[f32] {
        let n = self.components * self.height * self.width;
        &self.data[s * n..(s + 1) * n]
    }

    /// `[channels, height, width]`.
    pub fn chw(&self) -> [usize; 3] {
        [self.channels(), self.height, self.width]
    }

    fn from_slices(&self, order: impl Iterator<Item = Option<usize>>) -> Volume {
        let n = self.components * self.height * self.width;
        let mut data = Vec::with_capacity(self.data.len());
        for src in order {
            match src {
                Some(s) => data.extend_from_slice(self.slice(s)),
                None => data.extend(core::iter::repeat(0.0).take(n)),
            }
        }
        Volume {
            data: data.into(),
            ..self.clone()
        }
    }
}

/// Where a cube came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub video_id: String,
    pub center_frame: usize,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatioTemporalCube {
    pub volume: Volume,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalFlowCube {
    pub volume: Volume,
    pub provenance: Provenance,
}

/// Frame indices of the temporal window centered on `center`, clamped to the
/// clip by repeating the boundary frame.
pub fn temporal_window(center: usize, depth: usize, len: usize) -> Vec<usize> {
    let before = (depth.saturating_sub(1) / 2) as isize;
    (0..depth as isize)
        .map(|k| (center as isize - before + k).clamp(0, len as isize - 1) as usize)
        .collect()
}

/// Bilinear resampling of the `bbox` region of a row-major plane
/// (pixel-center alignment, edges clamped).
fn resize_region(
    plane: &[f32],
    stride: usize,
    bbox: &BoundingBox,
    out_h: usize,
    out_w: usize,
    dst: &mut Vec<f32>,
) {
    let (bw, bh) = (bbox.width(), bbox.height());
    let sx = bw as f32 / out_w as f32;
    let sy = bh as f32 / out_h as f32;
    let axis = |o: usize, scale: f32, n: usize| -> (usize, usize, f32) {
        let s = ((o as f32 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f32);
        let lo = Float::floor(s) as usize;
        let hi = (lo + 1).min(n - 1);
        (lo, hi, s - lo as f32)
    };
    for oy in 0..out_h {
        let (y0, y1, fy) = axis(oy, sy, bh);
        let r0 = (bbox.y0 + y0) * stride + bbox.x0;
        let r1 = (bbox.y0 + y1) * stride + bbox.x0;
        for ox in 0..out_w {
            let (x0, x1, fx) = axis(ox, sx, bw);
            let top = plane[r0 + x0] * (1.0 - fx) + plane[r0 + x1] * fx;
            let bot = plane[r1 + x0] * (1.0 - fx) + plane[r1 + x1] * fx;
            dst.push(top * (1.0 - fy) + bot * fy);
        }
    }
}

fn check_box(bbox: &BoundingBox, width: usize, height: usize) -> Result<()> {
    if bbox.area() == 0 || bbox.x1 > width || bbox.y1 > height {
        return Err(Error::invalid(format!(
            "box ({},{})-({},{}) unusable on {}x{} frames",
            bbox.x0, bbox.y0, bbox.x1, bbox.y1, width, height
        )));
    }
    Ok(())
}

/// Crops `bbox` from the frames around `center` and resizes each patch.
pub fn build_stc(
    clip: &VideoClip,
    bbox: &BoundingBox,
    center: usize,
    shape: &CubeShape,
) -> Result<SpatioTemporalCube> {
    check_box(bbox, clip.width(), clip.height())?;
    if center >= clip.len() {
        return Err(Error::invalid(format!("center frame {} outside clip", center)));
    }
    let mut data = Vec::with_capacity(shape.depth * shape.height * shape.width);
    for t in temporal_window(center, shape.depth, clip.len()) {
        let frame = &clip.frames()[t];
        resize_region(frame.data(), frame.width(), bbox, shape.height, shape.width, &mut data);
    }
    Ok(SpatioTemporalCube {
        volume: Volume::new(shape.depth, 1, shape.height, shape.width, data)?,
        provenance: Provenance {
            video_id: String::from(clip.id()),
            center_frame: center,
            bbox: BoundingBox {
                frame_index: center,
                ..*bbox
            },
        },
    })
}

/// Whole-frame cube used by the frame-based baseline.
pub fn build_frame_cube(
    clip: &VideoClip,
    center: usize,
    shape: &CubeShape,
) -> Result<SpatioTemporalCube> {
    build_stc(clip, &BoundingBox::full(clip.width(), clip.height(), center), center, shape)
}

/// Motion counterpart of [`build_stc`] over per-frame flow maps.
pub fn build_ofc(
    video_id: &str,
    flow_maps: &[FlowField],
    bbox: &BoundingBox,
    center: usize,
    shape: &CubeShape,
) -> Result<OpticalFlowCube> {
    let first = flow_maps.first().ok_or(Error::Empty("flow maps"))?;
    check_box(bbox, first.width(), first.height())?;
    if center >= flow_maps.len() {
        return Err(Error::invalid(format!("center frame {} outside flow maps", center)));
    }
    let mut data = Vec::with_capacity(2 * shape.depth * shape.height * shape.width);
    for t in temporal_window(center, shape.depth, flow_maps.len()) {
        let f = &flow_maps[t];
        resize_region(f.u(), f.width(), bbox, shape.height, shape.width, &mut data);
        resize_region(f.v(), f.width(), bbox, shape.height, shape.width, &mut data);
    }
    Ok(OpticalFlowCube {
        volume: Volume::new(shape.depth, 2, shape.height, shape.width, data)?,
        provenance: Provenance {
            video_id: String::from(video_id),
            center_frame: center,
            bbox: BoundingBox {
                frame_index: center,
                ..*bbox
            },
        },
    })
}

/// Surrogate learning task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Paradigm {
    /// Reconstruct the cube.
    #[default]
    Rec,
    /// Predict the last slice from the others.
    Prd,
    /// Reconstruct from the temporally reversed cube.
    Rr,
    /// Reconstruct from randomly shuffled slices.
    Sf,
}

impl Paradigm {
    pub const ALL: [Paradigm; 4] = [Paradigm::Rec, Paradigm::Prd, Paradigm::Rr, Paradigm::Sf];

    pub fn as_str(&self) -> &'static str {
        match self {
            Paradigm::Rec => "REC",
            Paradigm::Prd => "PRD",
            Paradigm::Rr => "RR",
            Paradigm::Sf => "SF",
        }
    }
}

impl core::fmt::Display for Paradigm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Paradigm::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown paradigm {:?} (REC, PRD, RR, SF)", s)))
    }
}

/// Network input, training target, and the target channels the loss covers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParadigmPair {
    pub paradigm: Paradigm,
    pub input: Volume,
    pub target: Volume,
    pub loss_channels: Range<usize>,
}

fn transform_input(volume: &Volume, paradigm: Paradigm, seed: u64) -> Result<Volume> {
    let d = volume.slices();
    Ok(match paradigm {
        Paradigm::Rec => volume.clone(),
        Paradigm::Prd => {
            if d < 2 {
                return Err(Error::invalid("prediction needs at least two slices"));
            }
            volume.from_slices((0..d).map(|s| if s + 1 < d { Some(s) } else { None }))
        }
        Paradigm::Rr => volume.from_slices((0..d).rev().map(Some)),
        Paradigm::Sf => {
            let mut perm: Vec<usize> = (0..d).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            volume.from_slices(perm.into_iter().map(Some))
        }
    })
}

fn last_slice_channels(target: &Volume, paradigm: Paradigm) -> Range<usize> {
    match paradigm {
        Paradigm::Prd => (target.slices() - 1) * target.components()..target.channels(),
        _ => 0..target.channels(),
    }
}

/// Input/target pair of a cube under `paradigm`; the target is always the
/// original cube. `seed` drives the slice permutation of [`Paradigm::Sf`].
pub fn apply_paradigm(volume: &Volume, paradigm: Paradigm, seed: u64) -> Result<ParadigmPair> {
    let input = transform_input(volume, paradigm, seed)?;
    Ok(ParadigmPair {
        paradigm,
        loss_channels: last_slice_channels(volume, paradigm),
        input,
        target: volume.clone(),
    })
}

/// Cross-modal pair: the transformed appearance cube predicts the flow cube.
pub fn motion_pair(
    stc: &Volume,
    ofc: &Volume,
    paradigm: Paradigm,
    seed: u64,
) -> Result<ParadigmPair> {
    if stc.slices() != ofc.slices() || stc.height() != ofc.height() || stc.width() != ofc.width() {
        return Err(Error::shape(
            "motion pair",
            format!("cube {:?} vs flow cube {:?}", stc.chw(), ofc.chw()),
        ));
    }
    Ok(ParadigmPair {
        paradigm,
        input: transform_input(stc, paradigm, seed)?,
        loss_channels: last_slice_channels(ofc, paradigm),
        target: ofc.clone(),
    })
}

/// Seed of cube `index` under a run seed (SplitMix64 finalizer).
pub fn cube_seed(run_seed: u64, index: usize) -> u64 {
    let mut z = run_seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Zero-filled volume, mostly for tests.
pub fn zero_volume(slices: usize, components: usize, height: usize, width: usize) -> Volume {
    Volume {
        slices,
        components,
        height,
        width,
        data: vec![0.0; slices * components * height * width].into(),
    }
}
