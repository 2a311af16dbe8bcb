//! PNG input/output and atomic file writes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use image::{ColorType, DynamicImage, GrayImage, ImageFormat, RgbImage};
use multipose::image::Image;

use crate::DataError;

/// Reads an 8-bit gray or RGB PNG.
pub fn read_png(path: &Path) -> anyhow::Result<Image> {
    let reader = image::ImageReader::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .with_guessed_format()?;
    if reader.format() != Some(ImageFormat::Png) {
        return Err(DataError::wrap(anyhow!("{} is not a PNG file", path.display())));
    }
    let decoded = reader
        .decode()
        .with_context(|| format!("decoding {}", path.display()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, bytes) = match decoded {
        DynamicImage::ImageLuma8(img) => (1, img.into_raw()),
        DynamicImage::ImageRgb8(img) => (3, img.into_raw()),
        other => {
            return Err(DataError::wrap(anyhow!(
                "{}: unsupported pixel format {:?} (need 8-bit gray or RGB)",
                path.display(),
                other.color()
            )))
        }
    };
    Image::from_u8(w, h, channels, &bytes).map_err(|e| DataError::wrap(anyhow!("{}: {e}", path.display())))
}

pub fn encode_png(image: &Image) -> anyhow::Result<Vec<u8>> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let raw = image.to_u8();
    let dynamic = match image.channels() {
        1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, raw).ok_or_else(|| anyhow!("buffer size"))?),
        3 => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, raw).ok_or_else(|| anyhow!("buffer size"))?),
        c => return Err(anyhow!("cannot encode {c}-channel image")),
    };
    debug_assert!(matches!(dynamic.color(), ColorType::L8 | ColorType::Rgb8));
    let mut out = std::io::Cursor::new(Vec::new());
    dynamic.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn write_png(path: &Path, image: &Image) -> anyhow::Result<()> {
    let bytes = encode_png(image)?;
    write_atomic(path, |w| Ok(w.write_all(&bytes)?))
}

/// Writes through a temporary file in the target directory, then renames
/// it into place, so readers never observe a partial file.
pub fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_gray_and_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let gray = Image::from_fn(7, 5, |x, y| (x * 30 + y) as f32);
        let p = dir.path().join("g.png");
        write_png(&p, &gray).unwrap();
        assert_eq!(read_png(&p).unwrap(), gray);

        let px: Vec<u8> = (0..4 * 3 * 3).map(|v| (v * 7) as u8).collect();
        let rgb = Image::from_u8(4, 3, 3, &px).unwrap();
        let p = dir.path().join("nested/c.png");
        write_png(&p, &rgb).unwrap();
        assert_eq!(read_png(&p).unwrap(), rgb);
    }

    #[test]
    fn rejects_non_png_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        fs::write(&p, b"not an image").unwrap();
        assert!(read_png(&p).is_err());
        assert!(read_png(&dir.path().join("missing.png")).is_err());
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_text(&p, "first version, fairly long").unwrap();
        write_text(&p, "second").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "second");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
