//! Minimal reader/writer for the NPY array layout.
//!
//! Writing always produces version 1.0 files holding little-endian `f64` in C
//! order. Reading additionally accepts version 2.0/3.0 headers and `<f4`
//! payloads, which are widened to `f64`. Fortran-ordered arrays are rejected.

use std::io::{self, Read, Write};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

/// A dense array of `f64` values with an arbitrary C-ordered shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F8,
    F4,
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// Writes `data` with `shape` as a version 1.0 NPY stream.
pub fn write_npy<W: Write>(mut w: W, shape: &[usize], data: &[f64]) -> io::Result<()> {
    let expected: usize = shape.iter().product();
    if expected != data.len() {
        return Err(invalid(format!(
            "shape {:?} holds {} values but {} were given",
            shape,
            expected,
            data.len()
        )));
    }
    let shape_str = match shape.len() {
        1 => format!("({},)", shape[0]),
        _ => format!(
            "({})",
            shape
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut header = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': {}, }}",
        shape_str
    );
    // magic(6) + version(2) + len(2) + header + '\n' must be a multiple of ALIGN
    let unpadded = 10 + header.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');
    let header_len = u16::try_from(header.len()).map_err(|_| invalid("header too long"))?;

    w.write_all(MAGIC)?;
    w.write_all(&[1, 0])?;
    w.write_all(&header_len.to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads an NPY stream positioned at its start.
pub fn read_npy<R: Read>(mut r: R) -> io::Result<NpyArray> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(invalid("not an NPY file (bad magic)"));
    }
    let mut version = [0u8; 2];
    r.read_exact(&mut version)?;
    let header_len = match version[0] {
        1 => {
            let mut b = [0u8; 2];
            r.read_exact(&mut b)?;
            u16::from_le_bytes(b) as usize
        }
        2 | 3 => {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            u32::from_le_bytes(b) as usize
        }
        v => return Err(invalid(format!("unsupported NPY version {v}"))),
    };
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let header = String::from_utf8(header).map_err(|_| invalid("header is not UTF-8"))?;
    let (dtype, fortran, shape) = parse_header(&header)?;
    if fortran {
        return Err(invalid("Fortran-ordered arrays are not supported"));
    }
    let count: usize = shape.iter().product();
    let width = match dtype {
        Dtype::F8 => 8,
        Dtype::F4 => 4,
    };
    let mut raw = vec![0u8; count * width];
    r.read_exact(&mut raw)?;
    let data = match dtype {
        Dtype::F8 => raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F4 => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    Ok(NpyArray { shape, data })
}

fn dict_value<'a>(header: &'a str, key: &str) -> io::Result<&'a str> {
    let needle = format!("'{key}'");
    let start = header
        .find(&needle)
        .ok_or_else(|| invalid(format!("header lacks key {key}")))?;
    let rest = header[start + needle.len()..].trim_start();
    let rest = rest
        .strip_prefix(':')
        .ok_or_else(|| invalid(format!("malformed entry for {key}")))?;
    Ok(rest.trim_start())
}

fn parse_header(header: &str) -> io::Result<(Dtype, bool, Vec<usize>)> {
    let descr = dict_value(header, "descr")?;
    let quote = descr
        .chars()
        .next()
        .filter(|c| *c == '\'' || *c == '"')
        .ok_or_else(|| invalid("descr is not a string"))?;
    let end = descr[1..]
        .find(quote)
        .ok_or_else(|| invalid("unterminated descr"))?;
    let dtype = match &descr[1..1 + end] {
        "<f8" | "=f8" | "f8" => Dtype::F8,
        "<f4" | "=f4" | "f4" => Dtype::F4,
        other => return Err(invalid(format!("unsupported dtype {other}"))),
    };

    let fortran = dict_value(header, "fortran_order")?;
    let fortran = if fortran.starts_with("True") {
        true
    } else if fortran.starts_with("False") {
        false
    } else {
        return Err(invalid("malformed fortran_order"));
    };

    let shape = dict_value(header, "shape")?;
    let shape = shape
        .strip_prefix('(')
        .ok_or_else(|| invalid("shape is not a tuple"))?;
    let close = shape.find(')').ok_or_else(|| invalid("unterminated shape"))?;
    let dims = shape[..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| invalid(format!("bad shape dimension {s:?}")))
        })
        .collect::<io::Result<Vec<_>>>()?;
    Ok((dtype, fortran, dims))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_aligned_and_parses() {
        let mut buf = Vec::new();
        write_npy(&mut buf, &[3, 4], &(0..12).map(|v| v as f64).collect::<Vec<_>>()).unwrap();
        let header_len = u16::from_le_bytes([buf[8], buf[9]]) as usize;
        assert_eq!((10 + header_len) % ALIGN, 0);
        assert_eq!(buf[10 + header_len - 1], b'\n');
        assert_eq!(buf.len(), 10 + header_len + 12 * 8);
        let arr = read_npy(&buf[..]).unwrap();
        assert_eq!(arr.shape, vec![3, 4]);
        assert_eq!(arr.data[11], 11.0);
    }

    #[test]
    fn reads_numpy_written_float32() {
        // np.save of np.array([[1.5, -2.0]], dtype='<f4'), version 1.0
        let header = "{'descr': '<f4', 'fortran_order': False, 'shape': (1, 2), }";
        let mut h = header.to_string();
        let pad = (64 - (10 + h.len() + 1) % 64) % 64;
        h.push_str(&" ".repeat(pad));
        h.push('\n');
        let mut buf = b"\x93NUMPY\x01\x00".to_vec();
        buf.extend_from_slice(&(h.len() as u16).to_le_bytes());
        buf.extend_from_slice(h.as_bytes());
        buf.extend_from_slice(&1.5f32.to_le_bytes());
        buf.extend_from_slice(&(-2.0f32).to_le_bytes());
        let arr = read_npy(&buf[..]).unwrap();
        assert_eq!(arr.data, vec![1.5, -2.0]);
    }

    #[test]
    fn one_dimensional_shape_uses_trailing_comma() {
        let mut buf = Vec::new();
        write_npy(&mut buf, &[2], &[1.0, 2.0]).unwrap();
        let text = String::from_utf8_lossy(&buf[10..]);
        assert!(text.contains("'shape': (2,)"));
        assert_eq!(read_npy(&buf[..]).unwrap().shape, vec![2]);
    }

    #[test]
    fn rejects_fortran_and_bad_magic() {
        let h = "{'descr': '<f8', 'fortran_order': True, 'shape': (1, 1), }\n";
        let mut buf = b"\x93NUMPY\x01\x00".to_vec();
        buf.extend_from_slice(&(h.len() as u16).to_le_bytes());
        buf.extend_from_slice(h.as_bytes());
        buf.extend_from_slice(&0f64.to_le_bytes());
        assert!(read_npy(&buf[..]).is_err());
        assert!(read_npy(&b"NOTNPY\x01\x00"[..]).is_err());
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let mut buf = Vec::new();
        write_npy(&mut buf, &[2, 2], &[1.0; 4]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_npy(&buf[..]).is_err());
    }
}
