//! Binary dataset shard container.
//!
//! Layout: magic "PFND", format version u16 LE, then per-dataset records
//! until EOF: n u32, k u32, n_classes u16, split_point u32, psi_len u32,
//! psi f32[psi_len], x f32[n*k] row-major, mask u8[n*k], y u16[n].

use super::dataset::{GeneratorKind, SyntheticDataset};
use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"PFND";
pub const VERSION: u16 = 1;

pub fn write_header<W: Write>(w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    Ok(())
}

pub fn write_dataset<W: Write>(w: &mut W, ds: &SyntheticDataset) -> Result<()> {
    let n = ds.rows();
    let k = ds.features();
    w.write_u32::<LittleEndian>(n as u32)?;
    w.write_u32::<LittleEndian>(k as u32)?;
    w.write_u16::<LittleEndian>(ds.n_classes as u16)?;
    w.write_u32::<LittleEndian>(ds.split_point as u32)?;
    w.write_u32::<LittleEndian>(ds.psi_vector.len() as u32)?;
    for &v in &ds.psi_vector {
        w.write_f32::<LittleEndian>(v)?;
    }
    for row in &ds.x {
        for &v in row {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    for row in &ds.mask {
        w.write_all(row)?;
    }
    for &y in &ds.y {
        w.write_u16::<LittleEndian>(y)?;
    }
    Ok(())
}

pub fn read_header<R: Read>(r: &mut R) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse(format!("bad shard magic {magic:?}")));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported shard version {version}")));
    }
    Ok(())
}

/// Read one record; `Ok(None)` at a clean EOF.
pub fn read_dataset<R: Read>(r: &mut R) -> Result<Option<SyntheticDataset>> {
    let n = match r.read_u32::<LittleEndian>() {
        Ok(v) => v as usize,
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let k = r.read_u32::<LittleEndian>()? as usize;
    let n_classes = r.read_u16::<LittleEndian>()? as usize;
    let split_point = r.read_u32::<LittleEndian>()? as usize;
    let psi_len = r.read_u32::<LittleEndian>()? as usize;
    let mut psi_vector = vec![0.0f32; psi_len];
    for v in &mut psi_vector {
        *v = r.read_f32::<LittleEndian>()?;
    }
    let mut x = vec![vec![0.0f32; k]; n];
    for row in &mut x {
        for v in row.iter_mut() {
            *v = r.read_f32::<LittleEndian>()?;
        }
    }
    let mut mask = vec![vec![0u8; k]; n];
    for row in &mut mask {
        r.read_exact(row)?;
    }
    let mut y = vec![0u16; n];
    for v in &mut y {
        *v = r.read_u16::<LittleEndian>()?;
    }
    Ok(Some(SyntheticDataset {
        x,
        y,
        mask,
        n_classes,
        psi_vector,
        split_point,
        // the shard does not persist the generator branch
        generator: GeneratorKind::Scm,
    }))
}

pub fn write_shard<W: Write>(w: &mut W, datasets: &[SyntheticDataset]) -> Result<()> {
    write_header(w)?;
    for ds in datasets {
        write_dataset(w, ds)?;
    }
    Ok(())
}

pub fn read_shard<R: Read>(r: &mut R) -> Result<Vec<SyntheticDataset>> {
    read_header(r)?;
    let mut out = Vec::new();
    while let Some(ds) = read_dataset(r)? {
        out.push(ds);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::dataset::{sample_dataset, SampleLimits};
    use crate::prior::hyper::{PriorHyperparameters, PriorSpace};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shard_roundtrip_preserves_payload() {
        let space = PriorSpace::full();
        let limits = SampleLimits::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut datasets = Vec::new();
        for _ in 0..3 {
            let psi = PriorHyperparameters::sample(&space, &mut rng).unwrap();
            datasets.push(sample_dataset(&psi, &space, 24, 3, &limits, &mut rng).unwrap());
        }
        let mut buf = Vec::new();
        write_shard(&mut buf, &datasets).unwrap();
        let back = read_shard(&mut buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in datasets.iter().zip(back.iter()) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.y, b.y);
            assert_eq!(a.mask, b.mask);
            assert_eq!(a.n_classes, b.n_classes);
            assert_eq!(a.psi_vector, b.psi_vector);
            assert_eq!(a.split_point, b.split_point);
        }
    }

    #[test]
    fn bad_magic_is_a_parse_error() {
        let buf = b"NOPE\x01\x00".to_vec();
        assert!(matches!(
            read_shard(&mut buf.as_slice()),
            Err(crate::error::Error::Parse(_))
        ));
    }
}
