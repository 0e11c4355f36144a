//! 8-bit binary PGM (P5) reading and writing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

fn bad(path: &Path, detail: impl Into<String>) -> Error {
    Error::Pgm { path: path.to_path_buf(), detail: detail.into() }
}

/// Parses a P5 image with maxval 255. Header comments (`#` to end of line)
/// are skipped.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<Pgm> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad(path, "bad magic (expected P5)"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (slot, name) in fields.iter_mut().zip(["width", "height", "maxval"]) {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad(path, format!("header ends before {name}"))),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(path, format!("malformed {name}")))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(bad(path, format!("degenerate size {width}x{height}")));
    }
    if maxval != 255 {
        return Err(bad(path, format!("unsupported maxval {maxval} (expected 255)")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad(path, "missing whitespace after maxval"));
    }
    pos += 1;
    let n = width * height;
    let data = bytes.get(pos..pos + n).ok_or_else(|| bad(path, format!("truncated pixel data: need {n} bytes")))?;
    Ok(Pgm { width, height, pixels: data.to_vec() })
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Pgm> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, path)
}

pub fn encode_pgm(img: &Pgm) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn write_pgm(img: &Pgm, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_round_trips() {
        let p = Path::new("mem");
        let raw = b"P5 # made by hand\n3 2\n# another\n255\n\x00\x01\x02\xfd\xfe\xff";
        let img = parse_pgm(raw, p).unwrap();
        assert_eq!((img.width, img.height), (3, 2));
        assert_eq!(img.pixels, [0, 1, 2, 253, 254, 255]);
        assert_eq!(parse_pgm(&encode_pgm(&img), p).unwrap(), img);
    }

    #[test]
    fn rejects_malformed_files() {
        let p = Path::new("mem");
        assert!(parse_pgm(b"P2\n1 1\n255\n0", p).is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\x00\x00", p).is_err());
        assert!(parse_pgm(b"P5\n2 2\n65535\n", p).is_err());
        assert!(parse_pgm(b"P5\nx 2\n255\n", p).is_err());
    }
}
