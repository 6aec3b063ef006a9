//! Grayscale frames and clips.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(
                "frame",
                format!("{}x{} frame needs {} pixels, got {}", width, height, width * height, data.len()),
            ));
        }
        Ok(Frame { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Frame {
            width,
            height,
            data: alloc::vec![value; width * height],
        }
    }

    /// Maps 8-bit intensities onto `[0, 1]`.
    pub fn from_luma8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        Frame::new(width, height, pixels.iter().map(|&p| p as f32 / 255.0).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// An ordered sequence of equally sized frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    id: String,
    frames: Vec<Frame>,
}

impl VideoClip {
    /// Fails on an empty list or on the first frame whose size differs from
    /// the first one.
    pub fn new(id: impl Into<String>, frames: Vec<Frame>) -> Result<Self> {
        let first = frames.first().ok_or(Error::Empty("video clip"))?;
        let dims = (first.width, first.height);
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| (f.width, f.height) != dims)
        {
            return Err(Error::shape(
                format!("frame {}", i),
                format!("{}x{} differs from clip size {}x{}", f.width, f.height, dims.0, dims.1),
            ));
        }
        Ok(VideoClip {
            id: id.into(),
            frames,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }
}
