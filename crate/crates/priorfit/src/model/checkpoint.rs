//! Binary checkpoints: magic "PFNC", version, config, flat parameter tensors,
//! optional tuned ψ*/t* record. Round-trips are bit-exact.

use super::config::ModelConfig;
use super::net::{tensor_count, ModelParams};
use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PFNC";
const VERSION: u16 = 1;

/// Result of the hyperparameter tuner, stored alongside the weights so
/// `predict` can default to the tuned settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TunedSettings {
    /// ψ* in encoded [0, 1] coordinates.
    pub psi: Vec<f32>,
    /// Softmax temperature t*.
    pub temperature: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub params: ModelParams,
    pub tuned: Option<TunedSettings>,
}

impl ModelCheckpoint {
    pub fn new(params: ModelParams) -> Self {
        ModelCheckpoint { params, tuned: None }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_u16::<LittleEndian>(VERSION)?;
        let c = &self.params.config;
        for v in [
            c.layers,
            c.d_model,
            c.d_ff,
            c.heads,
            c.max_features,
            c.max_classes,
            c.max_train_len,
            c.style_dim,
        ] {
            w.write_u32::<LittleEndian>(v as u32)?;
        }
        w.write_u32::<LittleEndian>(self.params.tensors.len() as u32)?;
        for t in &self.params.tensors {
            w.write_u8(t.shape.len() as u8)?;
            for &d in &t.shape {
                w.write_u32::<LittleEndian>(d as u32)?;
            }
            w.write_u32::<LittleEndian>(t.data.len() as u32)?;
            for &v in &t.data {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
        match &self.tuned {
            None => w.write_u8(0)?,
            Some(ts) => {
                w.write_u8(1)?;
                w.write_u32::<LittleEndian>(ts.psi.len() as u32)?;
                for &v in &ts.psi {
                    w.write_f32::<LittleEndian>(v)?;
                }
                w.write_f32::<LittleEndian>(ts.temperature)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse(format!(
                "{} is not a model checkpoint (bad magic {magic:?})",
                path.display()
            )));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
        }
        let mut cf = [0usize; 8];
        for v in cf.iter_mut() {
            *v = r.read_u32::<LittleEndian>()? as usize;
        }
        let config = ModelConfig {
            layers: cf[0],
            d_model: cf[1],
            d_ff: cf[2],
            heads: cf[3],
            max_features: cf[4],
            max_classes: cf[5],
            max_train_len: cf[6],
            style_dim: cf[7],
        };
        config.validate()?;
        let count = r.read_u32::<LittleEndian>()? as usize;
        if count != tensor_count(&config) {
            return Err(Error::Parse(format!(
                "checkpoint holds {count} tensors, config implies {}",
                tensor_count(&config)
            )));
        }
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let rank = r.read_u8()? as usize;
            if rank > 2 {
                return Err(Error::Parse(format!("tensor rank {rank} out of range")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.read_u32::<LittleEndian>()? as usize);
            }
            let len = r.read_u32::<LittleEndian>()? as usize;
            if len != shape.iter().product::<usize>() {
                return Err(Error::Parse(format!("tensor length {len} does not match {shape:?}")));
            }
            let mut data = vec![0.0f32; len];
            r.read_f32_into::<LittleEndian>(&mut data)?;
            tensors.push(crate::numerics::Tensor::new(shape, data));
        }
        let tuned = match r.read_u8()? {
            0 => None,
            1 => {
                let n = r.read_u32::<LittleEndian>()? as usize;
                let mut psi = vec![0.0f32; n];
                r.read_f32_into::<LittleEndian>(&mut psi)?;
                let temperature = r.read_f32::<LittleEndian>()?;
                Some(TunedSettings { psi, temperature })
            }
            f => return Err(Error::Parse(format!("bad tuned-settings flag {f}"))),
        };
        Ok(ModelCheckpoint { params: ModelParams { config, tensors }, tuned })
    }
}
