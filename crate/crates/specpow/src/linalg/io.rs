//! SMAT binary matrix files and plain CSV grids.
//!
//! Layout: `b"SMAT"`, version `u32`, rows `u64`, cols `u64`, precision tag
//! `u8`, then the row-major little-endian payload (f64 for tag 0, f32 for
//! tag 1, raw 16-bit words for the emulated half formats).

use std::io::{Read, Write};
use std::path::Path;

use half::{bf16, f16};

use crate::error::{Result, SpecError};
use crate::linalg::{Mat, Precision};

const MAGIC: &[u8; 4] = b"SMAT";
const VERSION: u32 = 1;

pub fn write_smat(w: &mut impl Write, m: &Mat, precision: Precision) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    w.write_all(&[precision.tag()])?;
    for &v in m.data() {
        match precision {
            Precision::F64 => w.write_all(&v.to_le_bytes())?,
            Precision::F32 => w.write_all(&(v as f32).to_le_bytes())?,
            Precision::F16e => w.write_all(&f16::from_f64(v).to_bits().to_le_bytes())?,
            Precision::Bf16e => w.write_all(&bf16::from_f64(v).to_bits().to_le_bytes())?,
        }
    }
    Ok(())
}

pub fn read_smat(r: &mut impl Read) -> Result<(Mat, Precision)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SpecError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(r)?);
    if version != VERSION {
        return Err(SpecError::Format(format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(read_array(r)?) as usize;
    let cols = u64::from_le_bytes(read_array(r)?) as usize;
    let [tag] = read_array::<1>(r)?;
    let precision =
        Precision::from_tag(tag).ok_or_else(|| SpecError::Format(format!("unknown precision tag {tag}")))?;
    let n = rows.checked_mul(cols).ok_or_else(|| SpecError::Format("dimension overflow".into()))?;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        let v = match precision {
            Precision::F64 => f64::from_le_bytes(read_array(r)?),
            Precision::F32 => f32::from_le_bytes(read_array(r)?) as f64,
            Precision::F16e => f16::from_bits(u16::from_le_bytes(read_array(r)?)).to_f64(),
            Precision::Bf16e => bf16::from_bits(u16::from_le_bytes(read_array(r)?)).to_f64(),
        };
        data.push(v);
    }
    Ok((Mat::new(rows, cols, data)?, precision))
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Plain numeric grid, one row per line, comma separated, no header.
pub fn read_csv_grid(r: impl Read) -> Result<Mat> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| SpecError::Format(format!("bad number {s:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if !row.is_empty() {
            rows.push(row);
        }
    }
    Mat::from_rows(&rows)
}

pub fn write_csv_grid(w: impl Write, m: &Mat) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..m.rows() {
        wtr.write_record(m.row(i).iter().map(|v| format!("{v:e}")))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Load a matrix from `.smat` or `.csv` (chosen by extension).
pub fn load_matrix(path: &Path) -> Result<Mat> {
    let file = std::fs::File::open(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_csv_grid(std::io::BufReader::new(file))
    } else {
        Ok(read_smat(&mut std::io::BufReader::new(file))?.0)
    }
}

pub fn save_matrix(path: &Path, m: &Mat, precision: Precision) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_csv_grid(&mut w, m)?;
    } else {
        write_smat(&mut w, m, precision)?;
    }
    w.flush()?;
    Ok(())
}
