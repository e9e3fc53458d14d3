//! Versioned binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "RLAG" | u32 version | config_hash [32 bytes] | u32 epochs_completed
//! u32 n_params
//!   per param: u32 name_len | name utf-8 | u8 trainable | u8 ndim
//!              | u64 extents… | f32 values…
//! u8 has_optimizer
//!   if set: u64 step_count | f64 beta1 | f64 beta2 | f64 epsilon
//!           | f64 base_lr | u32 half_period
//!           | per trainable param (store order): f32 m… | f32 v…
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::adam::AdamState;
use crate::numerics::params::ParamStore;

const MAGIC: &[u8; 4] = b"RLAG";
const VERSION: u32 = 1;

/// Everything needed to resume or evaluate a training run.
pub struct Checkpoint {
    pub config_hash: [u8; 32],
    pub epochs_completed: u32,
    pub store: ParamStore<f32>,
    pub optimizer: Option<AdamState<f32>>,
}

pub fn write_checkpoint(
    path: &Path,
    config_hash: &[u8; 32],
    epochs_completed: u32,
    store: &ParamStore<f32>,
    optimizer: Option<&AdamState<f32>>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(config_hash)?;
    w.write_all(&epochs_completed.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (_, p) in store.iter() {
        w.write_all(&(p.name.len() as u32).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        w.write_all(&[p.trainable as u8, p.shape.len() as u8])?;
        for &e in &p.shape {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in &p.value {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    match optimizer {
        None => w.write_all(&[0u8])?,
        Some(adam) => {
            w.write_all(&[1u8])?;
            w.write_all(&adam.step_count.to_le_bytes())?;
            for f in [adam.beta1, adam.beta2, adam.epsilon, adam.base_lr] {
                w.write_all(&f.to_le_bytes())?;
            }
            w.write_all(&(adam.half_period as u32).to_le_bytes())?;
            for (m, v) in adam.first_moment.iter().zip(&adam.second_moment) {
                for &x in m {
                    w.write_all(&x.to_le_bytes())?;
                }
                for &x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Format("checkpoint truncated".into()))?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f32()?);
        }
        Ok(out)
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
    };
    if &r.bytes::<4>()? != MAGIC {
        return Err(Error::Format(format!(
            "{}: not a checkpoint file",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let config_hash: [u8; 32] = r.bytes()?;
    let epochs_completed = r.u32()?;
    let n_params = r.u32()? as usize;
    let mut store = ParamStore::new();
    for _ in 0..n_params {
        let name_len = r.u32()? as usize;
        if name_len > 4096 {
            return Err(Error::Format("parameter name too long".into()));
        }
        let mut name = vec![0u8; name_len];
        r.inner
            .read_exact(&mut name)
            .map_err(|_| Error::Format("checkpoint truncated".into()))?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format("parameter name is not utf-8".into()))?;
        let trainable = r.u8()? != 0;
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let value = r.f32s(numel)?;
        store.add(name, shape, value, trainable)?;
    }
    let optimizer = if r.u8()? != 0 {
        let mut adam = AdamState::new(&store, 0.0, 1);
        adam.step_count = r.u64()?;
        adam.beta1 = r.f64()?;
        adam.beta2 = r.f64()?;
        adam.epsilon = r.f64()?;
        adam.base_lr = r.f64()?;
        adam.half_period = r.u32()? as usize;
        for i in 0..adam.first_moment.len() {
            let n = adam.first_moment[i].len();
            adam.first_moment[i] = r.f32s(n)?;
            adam.second_moment[i] = r.f32s(n)?;
        }
        Some(adam)
    } else {
        None
    };
    Ok(Checkpoint {
        config_hash,
        epochs_completed,
        store,
        optimizer,
    })
}
