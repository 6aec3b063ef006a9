//! Cube cache: `SPRCUBE1`, cube count, volume layout (slices, components,
//! height, width), then per cube its provenance (video id, center frame,
//! box) and its values, all little-endian (`u32` integers, `f32` values).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use spr_core::cube::{Provenance, Volume};
use spr_core::localize::BoundingBox;

use crate::binio::{expect_magic, get_f32s, get_u32, put_f32s, put_u32};
use crate::error::{Error, Result};

pub const CUBE_MAGIC: &[u8; 8] = b"SPRCUBE1";

/// Cubes with their provenance, in extraction order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CubeSet {
    pub provenance: Vec<Provenance>,
    pub volumes: Vec<Volume>,
}

impl CubeSet {
    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn push(&mut self, provenance: Provenance, volume: Volume) {
        self.provenance.push(provenance);
        self.volumes.push(volume);
    }

    pub fn extend(&mut self, other: CubeSet) {
        self.provenance.extend(other.provenance);
        self.volumes.extend(other.volumes);
    }
}

pub fn write_cubes(path: &Path, cubes: &CubeSet) -> Result<()> {
    let file = File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(file);
    write_to(&mut w, cubes)
        .and_then(|_| w.flush())
        .map_err(Error::io(path))
}

fn write_to(w: &mut impl Write, cubes: &CubeSet) -> std::io::Result<()> {
    w.write_all(CUBE_MAGIC)?;
    put_u32(w, cubes.len())?;
    let layout = cubes
        .volumes
        .first()
        .map(|v| [v.slices(), v.components(), v.height(), v.width()])
        .unwrap_or([0; 4]);
    for x in layout {
        put_u32(w, x)?;
    }
    for (p, v) in cubes.provenance.iter().zip(&cubes.volumes) {
        if [v.slices(), v.components(), v.height(), v.width()] != layout {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                "cubes differ in layout",
            ));
        }
        put_u32(w, p.video_id.len())?;
        w.write_all(p.video_id.as_bytes())?;
        put_u32(w, p.center_frame)?;
        for x in [p.bbox.x0, p.bbox.y0, p.bbox.x1, p.bbox.y1] {
            put_u32(w, x)?;
        }
        put_f32s(w, v.data())?;
    }
    Ok(())
}

pub fn read_cubes(path: &Path) -> Result<CubeSet> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut r = BufReader::new(file);
    if !expect_magic(&mut r, CUBE_MAGIC).map_err(Error::io(path))? {
        return Err(Error::format(path, "not a cube file"));
    }
    read_from(&mut r, path)
}

fn read_from(r: &mut impl Read, path: &Path) -> Result<CubeSet> {
    let io = |e| Error::io(path)(e);
    let count = get_u32(r).map_err(io)?;
    let mut layout = [0usize; 4];
    for x in layout.iter_mut() {
        *x = get_u32(r).map_err(io)?;
    }
    let [slices, components, height, width] = layout;
    let per = slices * components * height * width;
    let mut set = CubeSet::default();
    for i in 0..count {
        let len = get_u32(r).map_err(io)?;
        let mut id = vec![0u8; len];
        r.read_exact(&mut id).map_err(io)?;
        let video_id = String::from_utf8(id)
            .map_err(|_| Error::format(path, format!("cube {}: video id is not UTF-8", i)))?;
        let center_frame = get_u32(r).map_err(io)?;
        let mut b = [0usize; 4];
        for x in b.iter_mut() {
            *x = get_u32(r).map_err(io)?;
        }
        let data = get_f32s(r, per).map_err(io)?;
        set.push(
            Provenance {
                video_id,
                center_frame,
                bbox: BoundingBox {
                    x0: b[0],
                    y0: b[1],
                    x1: b[2],
                    y1: b[3],
                    frame_index: center_frame,
                },
            },
            Volume::new(slices, components, height, width, data)?,
        );
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io)? != 0 {
        return Err(Error::format(path, "trailing bytes after the last cube"));
    }
    Ok(set)
}
