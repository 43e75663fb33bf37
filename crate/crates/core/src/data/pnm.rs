//! Netpbm greymap and pixmap decoding (`P2`, `P3`, `P5`, `P6`), 8-bit only.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self, field: &str) -> Result<&str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(field, "truncated: unexpected end of file"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(field, "not ASCII"))
    }

    fn number(&mut self, field: &str) -> Result<u32> {
        let tok = self.token(field)?;
        tok.parse()
            .map_err(|_| Error::parse(field, format!("expected a non-negative integer, got {tok:?}")))
    }
}

/// Decode a PNM image into a `[C, H, W]` tensor scaled to [0, 1] by `maxval`.
pub fn parse_pnm(bytes: &[u8]) -> Result<Tensor<f32>> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::parse("magic", "unsupported magic (not a PNM file)"));
    }
    let (channels, binary) = match bytes[1] {
        b'2' => (1, false),
        b'3' => (3, false),
        b'5' => (1, true),
        b'6' => (3, true),
        other => {
            return Err(Error::parse(
                "magic",
                format!("unsupported magic P{}", other as char),
            ))
        }
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::parse("width", "image dimensions must be positive"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(
            "maxval",
            format!("maxval {maxval} outside 1..=255"),
        ));
    }
    let n = width * height * channels;
    let mut samples = Vec::with_capacity(n);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(Error::parse("payload", "truncated: missing raster"));
        }
        let raster = &bytes[cur.pos + 1..];
        if raster.len() < n {
            return Err(Error::parse(
                "payload",
                format!("truncated: expected {n} bytes, found {}", raster.len()),
            ));
        }
        samples.extend(raster[..n].iter().map(|&b| u32::from(b)));
    } else {
        for i in 0..n {
            let v = cur.number("payload").map_err(|e| match e {
                Error::Parse { message, .. } if message.starts_with("truncated") => Error::parse(
                    "payload",
                    format!("truncated: expected {n} samples, found {i}"),
                ),
                other => other,
            })?;
            samples.push(v);
        }
    }
    if let Some(&bad) = samples.iter().find(|&&v| v > maxval) {
        return Err(Error::parse("payload", format!("sample {bad} exceeds maxval {maxval}")));
    }
    // Interleaved RGB to planar.
    let scale = maxval as f32;
    let mut planar = vec![0.0f32; n];
    for (i, &v) in samples.iter().enumerate() {
        let (pixel, ch) = (i / channels, i % channels);
        planar[ch * width * height + pixel] = v as f32 / scale;
    }
    Tensor::new(&[channels, height, width], planar)
}

pub fn load_pnm(path: &Path) -> Result<Tensor<f32>> {
    let bytes = std::fs::read(path)?;
    parse_pnm(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_greymap() {
        let t = parse_pnm(b"P2 2 2 255 0 128 255 64").unwrap();
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0]);
    }

    #[test]
    fn comments_and_binary_pixmap() {
        let mut f = b"P6\n# comment\n2 1\n# another\n255\n".to_vec();
        f.extend_from_slice(&[255, 0, 0, 0, 51, 255]);
        let t = parse_pnm(&f).unwrap();
        assert_eq!(t.shape(), &[3, 1, 2]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 0.2, 0.0, 1.0]);
    }

    #[test]
    fn errors_name_the_field() {
        let err = |b: &[u8]| match parse_pnm(b) {
            Err(Error::Parse { field, message }) => (field, message),
            other => panic!("expected parse error, got {other:?}"),
        };
        let (f, m) = err(b"P7 1 1 255 0");
        assert_eq!(f, "magic");
        assert!(m.contains("unsupported magic"));
        assert_eq!(err(b"P2 2 2 255 0 1 2").0, "payload");
        assert_eq!(err(b"P5 2 2 255 \x01\x02").0, "payload");
        assert_eq!(err(b"P2 1 1 65535 0").0, "maxval");
        assert_eq!(err(b"P2 1 1 10 11").0, "payload");
        assert_eq!(err(b"P2 x 1 10 1").0, "width");
    }
}
