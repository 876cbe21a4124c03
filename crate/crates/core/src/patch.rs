//! Object image patches and binary PGM/PPM I/O.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColorPlanes {
    pub r: Vec<u8>,
    pub g: Vec<u8>,
    pub b: Vec<u8>,
}

/// Row-major 8-bit image patch cropped from the world image.
///
/// `pixels` always holds the gray plane. Color patches additionally carry
/// the three color planes; their gray plane is the rounded channel mean.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayPatch {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    color: Option<ColorPlanes>,
}

impl GrayPatch {
    pub fn from_gray(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} patch with {} pixels",
                width,
                height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels, color: None })
    }

    pub fn from_rgb(width: usize, height: usize, r: Vec<u8>, g: Vec<u8>, b: Vec<u8>) -> Result<Self> {
        let n = width * height;
        if r.len() != n || g.len() != n || b.len() != n {
            return Err(Error::ShapeMismatch(format!("{width}x{height} color planes")));
        }
        let pixels = (0..n)
            .map(|i| ((r[i] as u16 + g[i] as u16 + b[i] as u16 + 1) / 3) as u8)
            .collect();
        Ok(Self { width, height, pixels, color: Some(ColorPlanes { r, g, b }) })
    }

    /// Builds a color patch from interleaved RGB bytes.
    pub fn from_interleaved_rgb(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::ShapeMismatch(format!("{width}x{height} rgb buffer of {}", rgb.len())));
        }
        let (mut r, mut g, mut b) = (Vec::new(), Vec::new(), Vec::new());
        for px in rgb.chunks_exact(3) {
            r.push(px[0]);
            g.push(px[1]);
            b.push(px[2]);
        }
        Self::from_rgb(width, height, r, g, b)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn color(&self) -> Option<&ColorPlanes> {
        self.color.as_ref()
    }

    pub fn gray_at(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Interleaved RGB bytes; gray patches replicate the gray plane.
    pub fn to_interleaved_rgb(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() * 3);
        match &self.color {
            Some(c) => {
                for i in 0..self.pixels.len() {
                    out.extend_from_slice(&[c.r[i], c.g[i], c.b[i]]);
                }
            }
            None => {
                for &p in &self.pixels {
                    out.extend_from_slice(&[p, p, p]);
                }
            }
        }
        out
    }

    /// Parses a binary PGM (`P5`) or PPM (`P6`) with maxval 255.
    pub fn from_pnm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = HeaderCursor { bytes, pos: 0 };
        let magic = cur.token()?;
        let color = match magic {
            b"P5" => false,
            b"P6" => true,
            other => {
                return Err(Error::Image(format!(
                    "unsupported magic {:?}",
                    String::from_utf8_lossy(other)
                )))
            }
        };
        let width = cur.number()?;
        let height = cur.number()?;
        let maxval = cur.number()?;
        if maxval != 255 {
            return Err(Error::Image(format!("maxval must be 255, got {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(Error::Image("missing whitespace after maxval".into())),
        }
        let channels = if color { 3 } else { 1 };
        let expected = width * height * channels;
        let raster = &bytes[cur.pos..];
        if raster.len() != expected {
            return Err(Error::Image(format!(
                "raster holds {} bytes, expected {expected}",
                raster.len()
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::EmptyPatch);
        }
        if color {
            Self::from_interleaved_rgb(width, height, raster)
        } else {
            Self::from_gray(width, height, raster.to_vec())
        }
    }

    /// Serializes as `P6` when color planes exist, `P5` otherwise.
    pub fn to_pnm_bytes(&self) -> Vec<u8> {
        let magic = if self.color.is_some() { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        if self.color.is_some() {
            out.extend(self.to_interleaved_rgb());
        } else {
            out.extend_from_slice(&self.pixels);
        }
        out
    }

    pub fn read_pnm(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_pnm_bytes(&std::fs::read(path)?)
    }

    pub fn write_pnm(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_pnm_bytes())?;
        Ok(())
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_separators();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Image("truncated header".into()));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Image(format!("bad header number {:?}", String::from_utf8_lossy(tok))))
    }
}

/// Patches keyed by their reference string.
#[derive(Clone, Debug, Default)]
pub struct PatchLibrary {
    patches: BTreeMap<String, GrayPatch>,
}

impl PatchLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, patch: GrayPatch) {
        self.patches.insert(key.into(), patch);
    }

    pub fn get(&self, key: &str) -> Option<&GrayPatch> {
        self.patches.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &GrayPatch)> {
        self.patches.iter()
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pgm_with_comment() {
        let mut bytes = b"P5\n# a comment\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 1, 2, 3, 4, 255]);
        let p = GrayPatch::from_pnm_bytes(&bytes).unwrap();
        assert_eq!((p.width(), p.height()), (3, 2));
        assert_eq!(p.gray_at(2, 1), 255);
        assert!(p.color().is_none());
    }

    #[test]
    fn raster_may_start_with_whitespace_byte() {
        // the first raster byte is 0x0A; only one separator byte is consumed
        let mut bytes = b"P5 2 1 255 ".to_vec();
        bytes.extend_from_slice(&[10, 32]);
        let p = GrayPatch::from_pnm_bytes(&bytes).unwrap();
        assert_eq!(p.pixels(), &[10, 32]);
    }

    #[test]
    fn ppm_roundtrip() {
        let p = GrayPatch::from_interleaved_rgb(2, 1, &[255, 0, 0, 10, 20, 30]).unwrap();
        let bytes = p.to_pnm_bytes();
        assert!(bytes.starts_with(b"P6\n2 1\n255\n"));
        let q = GrayPatch::from_pnm_bytes(&bytes).unwrap();
        assert_eq!(p, q);
        assert_eq!(q.color().unwrap().r, vec![255, 10]);
        assert_eq!(q.pixels(), &[85, 20]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(GrayPatch::from_pnm_bytes(b"P2\n1 1\n255\n0").is_err());
        assert!(GrayPatch::from_pnm_bytes(b"P5\n1 1\n65535\n\0\0").is_err());
        assert!(GrayPatch::from_pnm_bytes(b"P5\n2 2\n255\n\0\0\0").is_err());
        assert!(GrayPatch::from_pnm_bytes(b"P5\n1 1\n255\n\0\0").is_err());
        assert!(GrayPatch::from_pnm_bytes(b"P5\n1 1\n255").is_err());
        assert!(GrayPatch::from_pnm_bytes(b"P5\n-1 1\n255\n\0").is_err());
    }
}
