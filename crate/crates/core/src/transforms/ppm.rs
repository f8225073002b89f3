use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Frame;
use crate::error::{Result, StaError};

/// Writes a binary PPM (P6). Single-channel frames are written as gray RGB.
pub fn write_ppm(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P6\n{} {}\n255\n", frame.width, frame.height)?;
    let mut bytes = Vec::with_capacity(frame.height * frame.width * 3);
    for px in frame.values.chunks_exact(frame.channels) {
        let to_byte = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        if frame.channels == 3 {
            bytes.extend(px.iter().map(|&v| to_byte(v)));
        } else {
            bytes.extend([to_byte(px[0]); 3]);
        }
    }
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

fn header_token<R: Read>(r: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(StaError::Format("truncated ppm header".into()));
        }
        let c = byte[0] as char;
        if c == '#' {
            while r.read(&mut byte)? == 1 && byte[0] != b'\n' {}
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(c);
    }
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Frame> {
    let mut r = BufReader::new(File::open(path)?);
    if header_token(&mut r)? != "P6" {
        return Err(StaError::Format("not a binary ppm".into()));
    }
    let mut num = |what: &str| -> Result<usize> {
        header_token(&mut r)?
            .parse()
            .map_err(|_| StaError::Format(format!("bad ppm {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(StaError::Format(format!("unsupported maxval {maxval}")));
    }
    let mut bytes = vec![0u8; width * height * 3];
    r.read_exact(&mut bytes)
        .map_err(|_| StaError::Format("truncated ppm data".into()))?;
    let values = bytes.iter().map(|&b| b as f64 / maxval as f64).collect();
    Frame::from_values(3, height, width, values)
}

/// Tiles `rows` of equally sized frames into one image with `pad` black pixels
/// between tiles.
pub fn mosaic(rows: &[Vec<Frame>], pad: usize) -> Result<Frame> {
    let first = rows
        .iter()
        .flat_map(|r| r.first())
        .next()
        .ok_or_else(|| StaError::Config("empty mosaic".into()))?;
    let (c, h, w) = (first.channels, first.height, first.width);
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let height = rows.len() * h + (rows.len() - 1) * pad;
    let width = cols * w + (cols - 1) * pad;
    let mut out = Frame::black(c, height, width);
    for (ri, row) in rows.iter().enumerate() {
        for (ci, f) in row.iter().enumerate() {
            if (f.channels, f.height, f.width) != (c, h, w) {
                return Err(StaError::Config("mosaic frames differ in size".into()));
            }
            let (oy, ox) = (ri * (h + pad), ci * (w + pad));
            for i in 0..h {
                let dst = ((oy + i) * width + ox) * c;
                out.values[dst..dst + w * c].copy_from_slice(&f.values[i * w * c..(i + 1) * w * c]);
            }
        }
    }
    Ok(out)
}
