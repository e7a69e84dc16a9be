//! Field files and CSV helpers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Dims, LatticeMask, ScalarField};

const MAGIC: &[u8; 4] = b"VXLF";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Real = 0,
    Complex = 1,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldData {
    Real(ScalarField),
    Complex(ComplexField),
}

/// Flat little-endian layout: magic, `nx: u64`, `ny: u64`, `h: f64`, `kind: u8`,
/// then row-major values (complex values as re, im pairs).
pub fn write_field(path: &Path, h: f64, field: &FieldData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let (dims, kind) = match field {
        FieldData::Real(f) => (f.dims, FieldKind::Real),
        FieldData::Complex(f) => (f.dims, FieldKind::Complex),
    };
    w.write_all(MAGIC)?;
    w.write_all(&(dims.nx as u64).to_le_bytes())?;
    w.write_all(&(dims.ny as u64).to_le_bytes())?;
    w.write_all(&h.to_le_bytes())?;
    w.write_all(&[kind as u8])?;
    match field {
        FieldData::Real(f) => {
            for v in &f.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        FieldData::Complex(f) => {
            for z in &f.values {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<(f64, FieldData)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidInput(format!("{} is not a field file", path.display())));
    }
    let mut b8 = [0u8; 8];
    let mut next = |r: &mut BufReader<File>| -> Result<[u8; 8]> {
        r.read_exact(&mut b8)?;
        Ok(b8)
    };
    let nx = u64::from_le_bytes(next(&mut r)?) as usize;
    let ny = u64::from_le_bytes(next(&mut r)?) as usize;
    let h = f64::from_le_bytes(next(&mut r)?);
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    let dims = Dims { nx, ny };
    let n = nx.checked_mul(ny).ok_or_else(|| Error::InvalidInput("field dimensions overflow".into()))?;
    let mut f64s = |count: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; count * 8];
        r.read_exact(&mut buf)?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let data = match kind[0] {
        0 => FieldData::Real(ScalarField { dims, values: f64s(n)? }),
        1 => {
            let raw = f64s(2 * n)?;
            FieldData::Complex(ComplexField {
                dims,
                values: raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect(),
            })
        }
        k => return Err(Error::InvalidInput(format!("unknown field kind {k}"))),
    };
    Ok((h, data))
}

/// 17 significant digits, round-trip exact.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// `x,y,value` (or `x,y,re,im`) for the active nodes of `mask`.
pub fn field_to_csv(mask: &LatticeMask, field: &FieldData) -> String {
    let mut out = String::new();
    match field {
        FieldData::Real(_) => out.push_str("x,y,value\n"),
        FieldData::Complex(_) => out.push_str("x,y,re,im\n"),
    }
    let d = mask.dims;
    for k in 0..d.node_count() {
        if !mask.node[k] {
            continue;
        }
        let (i, j) = d.coords(k);
        let p = mask.pos(i, j);
        match field {
            FieldData::Real(f) => out.push_str(&format!("{},{},{}\n", fmt17(p[0]), fmt17(p[1]), fmt17(f.values[k]))),
            FieldData::Complex(f) => out.push_str(&format!(
                "{},{},{},{}\n",
                fmt17(p[0]),
                fmt17(p[1]),
                fmt17(f.values[k].re),
                fmt17(f.values[k].im)
            )),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_both_kinds() {
        let dir = std::env::temp_dir().join(format!("vxl-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let dims = Dims { nx: 3, ny: 2 };
        let r = FieldData::Real(ScalarField { dims, values: vec![0.1, -2.0, 3.5, 1e-300, f64::MAX, 0.0] });
        let c = FieldData::Complex(ComplexField {
            dims,
            values: (0..6).map(|k| Complex64::new(k as f64, -0.5 * k as f64)).collect(),
        });
        for (name, f) in [("r.bin", &r), ("c.bin", &c)] {
            let p = dir.join(name);
            write_field(&p, 0.125, f).unwrap();
            let (h, back) = read_field(&p).unwrap();
            assert_eq!(h, 0.125);
            assert_eq!(&back, f);
        }
        std::fs::write(dir.join("bad.bin"), b"nope").unwrap();
        assert!(read_field(&dir.join("bad.bin")).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -9.065e-7, 123456.789] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
    }
}
