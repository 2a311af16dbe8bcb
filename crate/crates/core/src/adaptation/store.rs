//! Binary PCA model files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "MPCA" | version u32 | dim u32 | m u32
//! retention f64 | total_variance f64
//! pipeline_len u16 | pipeline id bytes (UTF-8)
//! mean: dim x f64 | eigenvalues: m x f64 | basis: dim*m x f64, column-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{AdaptationError, PcaModel};

pub const MPCA_MAGIC: &[u8; 4] = b"MPCA";
const VERSION: u32 = 1;

pub fn write_pca<W: Write>(mut w: W, model: &PcaModel) -> Result<(), AdaptationError> {
    let dim = u32::try_from(model.dim())
        .map_err(|_| AdaptationError::Format("dim exceeds u32".into()))?;
    let m = u32::try_from(model.components())
        .map_err(|_| AdaptationError::Format("component count exceeds u32".into()))?;
    let id = model.pipeline_id.as_bytes();
    let id_len = u16::try_from(id.len())
        .map_err(|_| AdaptationError::Format("pipeline id too long".into()))?;
    w.write_all(MPCA_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())?;
    w.write_all(&m.to_le_bytes())?;
    w.write_all(&model.retention.to_le_bytes())?;
    w.write_all(&model.total_variance.to_le_bytes())?;
    w.write_all(&id_len.to_le_bytes())?;
    w.write_all(id)?;
    let values = model
        .mean
        .iter()
        .chain(model.eigenvalues.iter())
        .chain(model.basis.as_slice().iter());
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn take<const N: usize, R: Read>(r: &mut R, what: &str) -> Result<[u8; N], AdaptationError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => AdaptationError::Format(format!("truncated {what}")),
        _ => AdaptationError::Io(e),
    })?;
    Ok(b)
}

fn take_f64s<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<f64>, AdaptationError> {
    (0..n)
        .map(|_| take::<8, _>(r, what).map(f64::from_le_bytes))
        .collect()
}

pub fn read_pca<R: Read>(mut r: R) -> Result<PcaModel, AdaptationError> {
    let magic = take::<4, _>(&mut r, "magic")?;
    if &magic != MPCA_MAGIC {
        return Err(AdaptationError::Format(format!("bad magic {magic:?}")));
    }
    let version = u32::from_le_bytes(take(&mut r, "version")?);
    if version != VERSION {
        return Err(AdaptationError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let dim = u32::from_le_bytes(take(&mut r, "dim")?) as usize;
    let m = u32::from_le_bytes(take(&mut r, "m")?) as usize;
    if m > dim {
        return Err(AdaptationError::Format(format!("m = {m} exceeds dim = {dim}")));
    }
    let retention = f64::from_le_bytes(take(&mut r, "retention")?);
    let total_variance = f64::from_le_bytes(take(&mut r, "total variance")?);
    let id_len = u16::from_le_bytes(take(&mut r, "pipeline id")?) as usize;
    let mut id = vec![0u8; id_len];
    r.read_exact(&mut id)
        .map_err(|_| AdaptationError::Format("truncated pipeline id".into()))?;
    let pipeline_id = String::from_utf8(id)
        .map_err(|_| AdaptationError::Format("pipeline id is not UTF-8".into()))?;
    let mean = take_f64s(&mut r, dim, "mean")?;
    let eigenvalues = take_f64s(&mut r, m, "eigenvalues")?;
    let basis = take_f64s(&mut r, dim * m, "basis")?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(AdaptationError::Format("trailing bytes".into()));
    }
    Ok(PcaModel {
        pipeline_id,
        mean: DVector::from_vec(mean),
        basis: DMatrix::from_vec(dim, m, basis),
        eigenvalues,
        retention,
        total_variance,
    })
}

pub fn save_pca(path: impl AsRef<Path>, model: &PcaModel) -> Result<(), AdaptationError> {
    write_pca(BufWriter::new(File::create(path)?), model)
}

pub fn load_pca(path: impl AsRef<Path>) -> Result<PcaModel, AdaptationError> {
    read_pca(BufReader::new(File::open(path)?))
}
