//! Raster and stack-manifest file formats, PNG export, atomic writes.
//!
//! Raster format ("SRAS"): 4-byte magic, little-endian u32 width and height,
//! then width×height little-endian IEEE-754 f32 values, row-major. The
//! payload round-trips bit-exactly.
//!
//! Stack manifests are TOML: a `domain` ("intensity" or "amplitude") and an
//! `entries` array of `{ date, path, enl }` with strictly increasing
//! ISO-8601 dates. Relative raster paths resolve against the manifest's
//! directory. The stack's scalar ENL is the arithmetic mean of the entry
//! ENLs (they are usually identical).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glr::{Domain, ImageStack};
use crate::raster::{Raster, RgbRaster};

const RASTER_MAGIC: &[u8; 4] = b"SRAS";

/// Writes bytes through a temporary file in the target directory and renames
/// it into place, so interrupted runs never leave half-written outputs.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            tempfile::NamedTempFile::new_in(dir)?
        }
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Serializes a raster in the repository format.
pub fn write_raster(path: &Path, raster: &Raster) -> Result<()> {
    let mut bytes = Vec::with_capacity(12 + raster.len() * 4);
    bytes.extend_from_slice(RASTER_MAGIC);
    bytes.extend_from_slice(&(raster.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(raster.height() as u32).to_le_bytes());
    for v in raster.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &bytes)
}

/// Reads a raster in the repository format, validating magic and payload
/// length.
pub fn read_raster(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..4] != RASTER_MAGIC {
        return Err(Error::format(path, "bad magic (expected SRAS)"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + width * height * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "payload is {} bytes, header {}x{} requires {}",
                bytes.len() - 12,
                width,
                height,
                expected - 12
            ),
        ));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Raster::from_vec(width, height, data)
}

/// One dated raster of a stack manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// ISO-8601 date (YYYY-MM-DD).
    pub date: String,
    /// Raster path, relative to the manifest file.
    pub path: PathBuf,
    /// Equivalent number of looks of this image's intensity statistics.
    pub enl: f64,
}

/// On-disk description of an image stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackManifest {
    pub domain: Domain,
    pub entries: Vec<ManifestEntry>,
}

impl StackManifest {
    /// Checks dates (parseable, strictly increasing), ENL positivity and
    /// non-emptiness; errors name the offending entry.
    pub fn validate(&self) -> Result<Vec<NaiveDate>> {
        if self.entries.is_empty() {
            return Err(Error::Input("manifest has no entries".into()));
        }
        let mut dates = Vec::with_capacity(self.entries.len());
        for (i, entry) in self.entries.iter().enumerate() {
            let date = NaiveDate::parse_from_str(&entry.date, "%Y-%m-%d").map_err(|e| {
                Error::Input(format!("entry {i}: bad date {:?}: {e}", entry.date))
            })?;
            if !(entry.enl.is_finite() && entry.enl > 0.0) {
                return Err(Error::Input(format!(
                    "entry {i}: enl must be positive, got {}",
                    entry.enl
                )));
            }
            if let Some(&prev) = dates.last() {
                if date <= prev {
                    return Err(Error::Input(format!(
                        "entry {i}: date {} does not increase over {}",
                        date, prev
                    )));
                }
            }
            dates.push(date);
        }
        Ok(dates)
    }
}

pub fn read_manifest(path: &Path) -> Result<StackManifest> {
    let text = fs::read_to_string(path)?;
    let manifest: StackManifest =
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn write_manifest(path: &Path, manifest: &StackManifest) -> Result<()> {
    manifest.validate()?;
    let text = toml::to_string(manifest)
        .map_err(|e| Error::format(path, format!("serialization failed: {e}")))?;
    atomic_write(path, text.as_bytes())
}

/// Loads the manifest and its rasters into an [`ImageStack`]. Timestamps are
/// days since the first acquisition plus one, so hue interpolation follows
/// real acquisition spacing.
pub fn load_stack(manifest_path: &Path) -> Result<ImageStack> {
    let manifest = read_manifest(manifest_path)?;
    let dates = manifest.validate()?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut images = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let path = if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            base.join(&entry.path)
        };
        images.push(read_raster(&path)?);
    }
    let timestamps: Vec<f64> = dates
        .iter()
        .map(|d| (*d - dates[0]).num_days() as f64 + 1.0)
        .collect();
    let enl =
        manifest.entries.iter().map(|e| e.enl).sum::<f64>() / manifest.entries.len() as f64;
    ImageStack::new(images, timestamps, enl, manifest.domain)
}

/// Writes an 8-bit RGB PNG (no interlacing).
pub fn write_png_rgb(path: &Path, rgb: &RgbRaster) -> Result<()> {
    let mut bytes = Vec::new();
    let encoder = image::codecs::png::PngEncoder::new(&mut bytes);
    image::ImageEncoder::write_image(
        encoder,
        rgb.data(),
        rgb.width() as u32,
        rgb.height() as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::format(path, format!("png encoding failed: {e}")))?;
    atomic_write(path, &bytes)
}

/// Writes an 8-bit grayscale PNG (used for label and mask rasters).
pub fn write_png_gray(path: &Path, data: &[u8], width: usize, height: usize) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::Input(format!(
            "{} bytes for a {width}x{height} grayscale image",
            data.len()
        )));
    }
    let mut bytes = Vec::new();
    let encoder = image::codecs::png::PngEncoder::new(&mut bytes);
    image::ImageEncoder::write_image(
        encoder,
        data,
        width as u32,
        height as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| Error::format(path, format!("png encoding failed: {e}")))?;
    atomic_write(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn raster_round_trip_bit_exact() {
        let dir = tmpdir();
        let path = dir.path().join("r.rst");
        let r = Raster::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        write_raster(&path, &r).unwrap();
        assert_eq!(read_raster(&path).unwrap(), r);
    }

    #[test]
    fn raster_bad_magic_and_truncation() {
        let dir = tmpdir();
        let path = dir.path().join("bad.rst");
        fs::write(&path, b"NOPE\x01\x00\x00\x00\x01\x00\x00\x00AAAA").unwrap();
        assert!(matches!(read_raster(&path), Err(Error::Format { .. })));

        let mut ok = Vec::new();
        ok.extend_from_slice(b"SRAS");
        ok.extend_from_slice(&2u32.to_le_bytes());
        ok.extend_from_slice(&2u32.to_le_bytes());
        ok.extend_from_slice(&[0u8; 12]); // 12 bytes instead of 16
        fs::write(&path, &ok).unwrap();
        assert!(matches!(read_raster(&path), Err(Error::Format { .. })));
    }

    fn sample_manifest() -> StackManifest {
        StackManifest {
            domain: Domain::Intensity,
            entries: vec![
                ManifestEntry {
                    date: "2020-01-01".into(),
                    path: "a.rst".into(),
                    enl: 1.0,
                },
                ManifestEntry {
                    date: "2020-01-13".into(),
                    path: "b.rst".into(),
                    enl: 1.0,
                },
            ],
        }
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tmpdir();
        let path = dir.path().join("stack.toml");
        let m = sample_manifest();
        write_manifest(&path, &m).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), m);
    }

    #[test]
    fn manifest_validation_names_entry() {
        let mut m = sample_manifest();
        m.entries[1].date = "2020-01-01".into();
        let err = m.validate().unwrap_err().to_string();
        assert!(err.contains("entry 1"), "{err}");

        let mut m2 = sample_manifest();
        m2.entries[0].enl = 0.0;
        let err2 = m2.validate().unwrap_err().to_string();
        assert!(err2.contains("entry 0"), "{err2}");
    }

    #[test]
    fn load_stack_resolves_and_validates() {
        let dir = tmpdir();
        let a = Raster::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let b = Raster::from_vec(2, 1, vec![3.0, 4.0]).unwrap();
        write_raster(&dir.path().join("a.rst"), &a).unwrap();
        write_raster(&dir.path().join("b.rst"), &b).unwrap();
        let path = dir.path().join("stack.toml");
        write_manifest(&path, &sample_manifest()).unwrap();
        let stack = load_stack(&path).unwrap();
        assert_eq!(stack.len(), 2);
        assert_eq!(stack.timestamps(), &[1.0, 13.0]);
        assert_eq!(stack.enl(), 1.0);

        // dimension mismatch surfaces at load
        let c = Raster::from_vec(1, 1, vec![9.0]).unwrap();
        write_raster(&dir.path().join("b.rst"), &c).unwrap();
        assert!(load_stack(&path).is_err());
    }

    #[test]
    fn png_outputs_are_deterministic() {
        let dir = tmpdir();
        let mut rgb = RgbRaster::new(4, 3);
        rgb.set(1, 1, [250, 2, 30]);
        let p1 = dir.path().join("a.png");
        let p2 = dir.path().join("b.png");
        write_png_rgb(&p1, &rgb).unwrap();
        write_png_rgb(&p2, &rgb).unwrap();
        assert_eq!(fs::read(p1).unwrap(), fs::read(p2).unwrap());
    }

    proptest! {
        #[test]
        fn prop_raster_round_trip(
            w in 1usize..12,
            h in 1usize..12,
            seed in 0u64..1000,
        ) {
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
            let data: Vec<f32> = (0..w * h)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    f32::from_bits((state >> 32) as u32 & 0x7F7F_FFFF) // finite payloads
                })
                .collect();
            let r = Raster::from_vec(w, h, data).unwrap();
            let dir = tmpdir();
            let path = dir.path().join("p.rst");
            write_raster(&path, &r).unwrap();
            let back = read_raster(&path).unwrap();
            prop_assert_eq!(
                r.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
