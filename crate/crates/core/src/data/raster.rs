//! Raster container: magic "RRAS" | u32 version | u32 ndim | u64 extents… |
//! f32 little-endian values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::ImageData;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RRAS";
const VERSION: u32 = 1;

pub fn write_raster(path: &Path, image: &ImageData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(image.shape.len() as u32).to_le_bytes())?;
    for &e in &image.shape {
        w.write_all(&(e as u64).to_le_bytes())?;
    }
    for &v in &image.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raster(path: &Path) -> Result<ImageData> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| truncated(path))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: not a raster file",
            path.display()
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(|_| truncated(path))?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported raster version {version}"
        )));
    }
    r.read_exact(&mut b4).map_err(|_| truncated(path))?;
    let ndim = u32::from_le_bytes(b4) as usize;
    if ndim == 0 || ndim > 8 {
        return Err(Error::Format(format!("implausible raster rank {ndim}")));
    }
    let mut shape = Vec::with_capacity(ndim);
    let mut b8 = [0u8; 8];
    for _ in 0..ndim {
        r.read_exact(&mut b8).map_err(|_| truncated(path))?;
        shape.push(u64::from_le_bytes(b8) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut values = Vec::with_capacity(numel);
    for _ in 0..numel {
        r.read_exact(&mut b4).map_err(|_| truncated(path))?;
        values.push(f32::from_le_bytes(b4));
    }
    ImageData::new(shape, values)
}

fn truncated(path: &Path) -> Error {
    Error::Format(format!("{}: truncated raster file", path.display()))
}
