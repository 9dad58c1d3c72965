//! Little-endian primitives shared by the binary file formats.

use std::io::{Read, Write};

use crate::error::{fmt_err, Error, Result};

pub fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn put_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    put_u32(w, len_u32(s.len())?)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn put_f32s<W: Write>(w: &mut W, data: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| fmt_err!("length {n} does not fit in u32"))
}

/// Maps an unexpected EOF to a format error so truncation is reported as
/// corruption rather than as an I/O failure.
fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => fmt_err!("file truncated"),
        _ => Error::Io(e),
    })
}

pub fn get_bytes<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

pub fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn get_str<R: Read>(r: &mut R, max: usize) -> Result<String> {
    let n = get_u32(r)? as usize;
    if n > max {
        return Err(fmt_err!("string length {n} exceeds limit {max}"));
    }
    String::from_utf8(get_bytes(r, n)?).map_err(|_| fmt_err!("invalid UTF-8"))
}

pub fn get_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let bytes = get_bytes(r, n * 4)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(()),
        _ => Err(fmt_err!("trailing bytes after payload")),
    }
}
