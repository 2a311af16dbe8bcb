//! Binary feature files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "MPFV" | version u32 | dim u32 | count u32
//! count x ( id_len u16 | id bytes (UTF-8) | dim x f32 )
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FeatureError, FeatureVector};

pub const MPFV_MAGIC: &[u8; 4] = b"MPFV";
const VERSION: u32 = 1;

/// Writes `(id, vector)` records. Values are stored as `f32`, so only
/// `f32`-representable inputs survive a round trip bit-exactly.
pub fn write_features<'a, W: Write>(
    mut w: W,
    records: impl IntoIterator<Item = (&'a str, &'a FeatureVector)>,
) -> Result<(), FeatureError> {
    let records: Vec<_> = records.into_iter().collect();
    let dim = records.first().map_or(0, |(_, f)| f.dim());
    let mut seen = std::collections::HashSet::new();
    for (id, f) in &records {
        if f.dim() != dim {
            return Err(FeatureError::DimMismatch(format!(
                "{id:?} has dim {}, expected {dim}",
                f.dim()
            )));
        }
        if id.len() > u16::MAX as usize {
            return Err(FeatureError::Format(format!("id {id:?} is too long")));
        }
        if !seen.insert(*id) {
            return Err(FeatureError::DuplicateId(id.to_string()));
        }
        if f.values().iter().any(|v| v.is_nan() || v.abs() > f32::MAX as f64) {
            return Err(FeatureError::Format(format!(
                "{id:?} has values outside the f32 range"
            )));
        }
    }
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| FeatureError::Format(format!("{what} exceeds u32")))
    };
    w.write_all(MPFV_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&to_u32(dim, "dim")?.to_le_bytes())?;
    w.write_all(&to_u32(records.len(), "count")?.to_le_bytes())?;
    for (id, f) in records {
        w.write_all(&(id.len() as u16).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
        for &v in f.values() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], err: impl FnOnce() -> FeatureError) -> Result<(), FeatureError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => err(),
        _ => FeatureError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32, FeatureError> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, || FeatureError::Format(format!("truncated header ({what})")))?;
    Ok(u32::from_le_bytes(b))
}

/// Parses a feature stream, tagging every vector with `pipeline_id`.
///
/// Records whose payload does not match the header dimension (a short
/// final record or trailing bytes) are reported as `DimMismatch`.
pub fn read_features<R: Read>(
    mut r: R,
    pipeline_id: &str,
) -> Result<BTreeMap<String, FeatureVector>, FeatureError> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, || FeatureError::Format("missing magic".into()))?;
    if &magic != MPFV_MAGIC {
        return Err(FeatureError::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(FeatureError::Format(format!("unsupported version {version}")));
    }
    let dim = read_u32(&mut r, "dim")? as usize;
    let count = read_u32(&mut r, "count")? as usize;
    if dim == 0 && count > 0 {
        return Err(FeatureError::Format("zero dimension".into()));
    }

    let mut out = BTreeMap::new();
    let mut payload = vec![0u8; dim * 4];
    for i in 0..count {
        let short = || FeatureError::DimMismatch(format!("record {i} is shorter than dim {dim}"));
        let mut len = [0u8; 2];
        read_exact_or(&mut r, &mut len, short)?;
        let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact_or(&mut r, &mut id, short)?;
        let id = String::from_utf8(id)
            .map_err(|_| FeatureError::Format(format!("record {i}: id is not UTF-8")))?;
        read_exact_or(&mut r, &mut payload, short)?;
        let values = payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        let fv = FeatureVector::new(pipeline_id, values)
            .map_err(|e| FeatureError::Format(format!("record {i} ({id:?}): {e}")))?;
        if out.insert(id.clone(), fv).is_some() {
            return Err(FeatureError::DuplicateId(id));
        }
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(FeatureError::DimMismatch(format!(
            "{} trailing bytes after {count} records of dim {dim}",
            rest.len()
        )));
    }
    Ok(out)
}

/// Loads an embedding file into an id-keyed map.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    expected_pipeline: &str,
) -> Result<BTreeMap<String, FeatureVector>, FeatureError> {
    read_features(BufReader::new(File::open(path)?), expected_pipeline)
}

/// Saves an id-keyed map in id order.
pub fn save_embeddings(
    path: impl AsRef<Path>,
    features: &BTreeMap<String, FeatureVector>,
) -> Result<(), FeatureError> {
    let file = File::create(path)?;
    write_features(
        BufWriter::new(file),
        features.iter().map(|(k, v)| (k.as_str(), v)),
    )
}
