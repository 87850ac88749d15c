//! Binary Netpbm I/O: 8-bit PGM (P5) for images and PBM (P4) for binary
//! masks. Intensities map to bytes as `round(255 * v)`.
//! https://netpbm.sourceforge.net/doc/

use std::path::Path;

use super::{GrayImage, Grid, Mask};
use crate::error::{Error, Result};

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| (255.0 * v).round() as u8));
    out
}

pub fn encode_pbm(mask: &Mask) -> Result<Vec<u8>> {
    if !mask.is_binary() {
        return Err(Error::Precondition("PBM export needs a binary mask".into()));
    }
    let (h, w) = mask.shape();
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    let row_bytes = w.div_ceil(8);
    for r in 0..h {
        let mut row = vec![0u8; row_bytes];
        for c in 0..w {
            if mask.get(r, c) == 1.0 {
                row[c / 8] |= 0x80 >> (c % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    std::fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn write_pbm(path: &Path, mask: &Mask) -> Result<()> {
    let bytes = encode_pbm(mask)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

pub fn read_pbm(path: &Path) -> Result<Mask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pbm(&bytes).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

struct Header<'a> {
    fields: Vec<usize>,
    rest: &'a [u8],
}

/// Reads the magic number and `count` ASCII integers, skipping comments.
/// Exactly one whitespace byte separates the header from the raster.
fn parse_header<'a>(
    bytes: &'a [u8],
    magic: &[u8],
    count: usize,
) -> std::result::Result<Header<'a>, String> {
    if !bytes.starts_with(magic) {
        return Err(format!("expected magic {}", String::from_utf8_lossy(magic)));
    }
    let mut pos = magic.len();
    let mut fields = Vec::with_capacity(count);
    while fields.len() < count {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated or non-numeric header".into());
        }
        let text = std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?;
        fields.push(
            text.parse()
                .map_err(|e| format!("bad header value {text}: {e}"))?,
        );
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("missing whitespace after header".into());
    }
    Ok(Header {
        fields,
        rest: &bytes[pos + 1..],
    })
}

pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let hdr = parse_header(bytes, b"P5", 3)?;
    let (w, h, maxval) = (hdr.fields[0], hdr.fields[1], hdr.fields[2]);
    if maxval == 0 || maxval > 255 {
        return Err(format!(
            "unsupported maxval {maxval}, only 8-bit PGM is read"
        ));
    }
    if hdr.rest.len() < w * h {
        return Err(format!(
            "raster has {} bytes, expected {}",
            hdr.rest.len(),
            w * h
        ));
    }
    let data = hdr.rest[..w * h]
        .iter()
        .map(|&b| (f64::from(b) / maxval as f64).min(1.0))
        .collect();
    let grid = Grid::new(h, w, data).map_err(|e| e.to_string())?;
    GrayImage::new(grid).map_err(|e| e.to_string())
}

pub fn decode_pbm(bytes: &[u8]) -> std::result::Result<Mask, String> {
    let hdr = parse_header(bytes, b"P4", 2)?;
    let (w, h) = (hdr.fields[0], hdr.fields[1]);
    let row_bytes = w.div_ceil(8);
    if hdr.rest.len() < row_bytes * h {
        return Err(format!(
            "raster has {} bytes, expected {}",
            hdr.rest.len(),
            row_bytes * h
        ));
    }
    Ok(Mask::binary_from_fn(h, w, |r, c| {
        hdr.rest[r * row_bytes + c / 8] & (0x80 >> (c % 8)) != 0
    }))
}
