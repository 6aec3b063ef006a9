//! Seeded synthetic videos: textured rectangular sprites circling at constant
//! speed over a dark frame, with a rare anomaly sprite planted on a contiguous
//! run of frames per video.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cube::cube_seed;
use crate::frame::{Frame, VideoClip};
use crate::localize::BoundingBox;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Texture {
    /// Square cells alternating between full and half intensity.
    Checker { cell: usize },
    /// Vertical bars alternating between full intensity and black.
    Stripes { period: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motif {
    pub size: usize,
    pub texture: Texture,
    pub intensity: f32,
}

/// How the anomaly sprite departs from the normal ones. It always moves at
/// three times the normal speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyStyle {
    /// Different texture as well as speed.
    Distinct,
    /// Same motif as the normal sprites; only speed differs.
    SpeedOnly,
}

pub const ANOMALY_SPEEDUP: f32 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n_videos: usize,
    pub frames_per_video: usize,
    pub width: usize,
    pub height: usize,
    /// Fraction of each video's frames that show the anomaly sprite.
    pub anomaly_fraction: f64,
    pub style: AnomalyStyle,
    pub normal: Motif,
    pub anomaly: Motif,
    pub min_sprites: usize,
    pub max_sprites: usize,
    /// Normal speed range in pixels per frame.
    pub speed: (f32, f32),
    /// Amplitude of uniform per-pixel noise.
    pub noise: f32,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_videos: 10,
            frames_per_video: 200,
            width: 64,
            height: 64,
            anomaly_fraction: 0.1,
            style: AnomalyStyle::Distinct,
            normal: Motif {
                size: 12,
                texture: Texture::Checker { cell: 3 },
                intensity: 0.8,
            },
            anomaly: Motif {
                size: 12,
                texture: Texture::Stripes { period: 2 },
                intensity: 0.9,
            },
            min_sprites: 1,
            max_sprites: 4,
            speed: (1.0, 2.0),
            noise: 0.01,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.anomaly_fraction) {
            return Err(Error::invalid(format!(
                "anomaly_fraction {} outside [0, 0.5)",
                self.anomaly_fraction
            )));
        }
        if self.n_videos == 0 || self.frames_per_video < 2 {
            return Err(Error::invalid("need at least one video of two frames"));
        }
        if self.min_sprites == 0 || self.min_sprites > self.max_sprites {
            return Err(Error::invalid("sprite count range must satisfy 1 <= min <= max"));
        }
        for m in [&self.normal, &self.anomaly] {
            if m.size == 0 || m.size >= self.width || m.size >= self.height {
                return Err(Error::invalid(format!(
                    "sprite size {} does not fit a {}x{} frame",
                    m.size, self.width, self.height
                )));
            }
            if !(0.0..=1.0).contains(&m.intensity) {
                return Err(Error::invalid("sprite intensity outside [0, 1]"));
            }
        }
        if !(self.speed.0 > 0.0 && self.speed.0 <= self.speed.1) {
            return Err(Error::invalid("speed range must satisfy 0 < min <= max"));
        }
        if !(self.noise >= 0.0 && self.noise < 0.5) {
            return Err(Error::invalid("noise outside [0, 0.5)"));
        }
        Ok(())
    }

    /// The motif drawn for anomalies under the configured style.
    pub fn anomaly_motif(&self) -> Motif {
        match self.style {
            AnomalyStyle::Distinct => self.anomaly,
            AnomalyStyle::SpeedOnly => self.normal,
        }
    }

    /// Number of anomalous frames planted in each video.
    pub fn anomalous_frames_per_video(&self) -> usize {
        let n = self.anomaly_fraction * self.frames_per_video as f64;
        Float::round(n) as usize
    }
}

/// One generated video: 8-bit grayscale frames, per-frame labels and the
/// in-frame extent of the anomaly sprite wherever it is present.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<Vec<u8>>,
    pub labels: Vec<bool>,
    pub anomaly_boxes: Vec<Option<BoundingBox>>,
}

impl SynthVideo {
    pub fn to_clip(&self) -> Result<VideoClip> {
        let frames = self
            .frames
            .iter()
            .map(|p| Frame::from_luma8(self.width, self.height, p))
            .collect::<Result<Vec<_>>>()?;
        VideoClip::new(self.id.clone(), frames)
    }
}

/// A sprite orbiting a fixed center at constant speed.
struct Sprite {
    motif: Motif,
    cx: f32,
    cy: f32,
    radius: f32,
    theta: f32,
    omega: f32,
}

impl Sprite {
    fn spawn(rng: &mut ChaCha8Rng, motif: Motif, speed: f32, width: usize, height: usize) -> Self {
        let max_x = (width - motif.size) as f32;
        let max_y = (height - motif.size) as f32;
        let limit = 0.5 * max_x.min(max_y);
        let radius = rng.gen_range((0.25 * limit).max(1.0)..=limit.max(1.0));
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        Sprite {
            motif,
            cx: rng.gen_range(radius..=(max_x - radius).max(radius)),
            cy: rng.gen_range(radius..=(max_y - radius).max(radius)),
            radius,
            theta: rng.gen_range(0.0..core::f32::consts::TAU),
            omega: sign * speed / radius,
        }
    }

    fn advance(&mut self) {
        self.theta += self.omega;
    }

    /// Top-left corner in pixels, kept inside the frame.
    fn position(&self, width: usize, height: usize) -> (f32, f32) {
        let x = self.cx + self.radius * Float::cos(self.theta);
        let y = self.cy + self.radius * Float::sin(self.theta);
        (
            x.clamp(0.0, (width - self.motif.size) as f32),
            y.clamp(0.0, (height - self.motif.size) as f32),
        )
    }

    fn texel(&self, dx: usize, dy: usize) -> f32 {
        let hi = self.motif.intensity;
        match self.motif.texture {
            Texture::Checker { cell } => {
                let c = cell.max(1);
                if (dx / c + dy / c) % 2 == 0 {
                    hi
                } else {
                    hi * 0.5
                }
            }
            Texture::Stripes { period } => {
                if (dx / period.max(1)) % 2 == 0 {
                    hi
                } else {
                    0.0
                }
            }
        }
    }

    /// Draws at sub-pixel precision: each texel is split bilinearly over
    /// the four pixels it overlaps, and the sprite covers what lies below
    /// in proportion to its coverage.
    fn draw(&self, canvas: &mut [f32], width: usize, height: usize) {
        let (x, y) = self.position(width, height);
        let (ix, iy) = (Float::floor(x) as usize, Float::floor(y) as usize);
        let (fx, fy) = (x - ix as f32, y - iy as f32);
        let s = self.motif.size;
        let fw = (s + 1).min(width - ix);
        let fh = (s + 1).min(height - iy);
        let mut paint = vec![0.0f32; fw * fh];
        let mut cover = vec![0.0f32; fw * fh];
        for dy in 0..s {
            for dx in 0..s {
                let v = self.texel(dx, dy);
                for (oy, wy) in [(0, 1.0 - fy), (1, fy)] {
                    for (ox, wx) in [(0, 1.0 - fx), (1, fx)] {
                        let (px, py) = (dx + ox, dy + oy);
                        if px < fw && py < fh {
                            paint[py * fw + px] += v * wx * wy;
                            cover[py * fw + px] += wx * wy;
                        }
                    }
                }
            }
        }
        for py in 0..fh {
            for px in 0..fw {
                let k = py * fw + px;
                let c = &mut canvas[(iy + py) * width + ix + px];
                *c = *c * (1.0 - cover[k]) + paint[k];
            }
        }
    }

    fn bbox(&self, frame_index: usize, width: usize, height: usize) -> BoundingBox {
        let (x, y) = self.position(width, height);
        let (x0, y0) = (Float::floor(x) as usize, Float::floor(y) as usize);
        BoundingBox {
            x0,
            y0,
            x1: (Float::ceil(x) as usize + self.motif.size).min(width),
            y1: (Float::ceil(y) as usize + self.motif.size).min(height),
            frame_index,
        }
    }
}

/// Generates video `index` of the corpus. Each video has its own random
/// stream, so videos can be produced in any order or in parallel.
pub fn generate_video(spec: &CorpusSpec, index: usize) -> Result<SynthVideo> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(cube_seed(spec.seed, index));
    let count = rng.gen_range(spec.min_sprites..=spec.max_sprites);
    let mut sprites: Vec<Sprite> = (0..count)
        .map(|_| {
            let speed = rng.gen_range(spec.speed.0..=spec.speed.1);
            Sprite::spawn(&mut rng, spec.normal, speed, w, h)
        })
        .collect();
    let n_anom = spec.anomalous_frames_per_video();
    let start = if n_anom > 0 {
        rng.gen_range(0..=spec.frames_per_video - n_anom)
    } else {
        0
    };
    let anomaly_speed = ANOMALY_SPEEDUP * rng.gen_range(spec.speed.0..=spec.speed.1);
    let mut anomaly = Sprite::spawn(&mut rng, spec.anomaly_motif(), anomaly_speed, w, h);

    let mut frames = Vec::with_capacity(spec.frames_per_video);
    let mut labels = Vec::with_capacity(spec.frames_per_video);
    let mut boxes = Vec::with_capacity(spec.frames_per_video);
    let mut canvas = vec![0.0f32; w * h];
    for f in 0..spec.frames_per_video {
        canvas.iter_mut().for_each(|p| *p = 0.0);
        for s in &sprites {
            s.draw(&mut canvas, w, h);
        }
        let present = n_anom > 0 && f >= start && f < start + n_anom;
        if present {
            anomaly.draw(&mut canvas, w, h);
            boxes.push(Some(anomaly.bbox(f, w, h)));
            anomaly.advance();
        } else {
            boxes.push(None);
        }
        labels.push(present);
        let noise = spec.noise;
        frames.push(
            canvas
                .iter()
                .map(|&p| {
                    let n = if noise > 0.0 {
                        rng.gen_range(-noise..=noise)
                    } else {
                        0.0
                    };
                    Float::round((p + n).clamp(0.0, 1.0) * 255.0) as u8
                })
                .collect(),
        );
        for s in sprites.iter_mut() {
            s.advance();
        }
    }
    Ok(SynthVideo {
        id: format!("video_{:03}", index),
        width: w,
        height: h,
        frames,
        labels,
        anomaly_boxes: boxes,
    })
}

/// Generates every video of the corpus in order.
pub fn generate(spec: &CorpusSpec) -> Result<Vec<SynthVideo>> {
    spec.validate()?;
    (0..spec.n_videos).map(|i| generate_video(spec, i)).collect()
}
