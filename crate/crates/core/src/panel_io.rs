//! Reading and writing panels.
//!
//! CSV: one line per unit, one field per period, optional header line.
//! Binary: magic `WPCPANEL`, little-endian `u64` N and T, then N·T
//! little-endian `f64` in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::PanelMatrix;

const MAGIC: &[u8; 8] = b"WPCPANEL";

pub fn write_csv<W: Write>(panel: &PanelMatrix, out: W, header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    if header {
        w.write_record((0..panel.n_periods()).map(|t| format!("t{t}")))?;
    }
    for row in panel.values().row_iter() {
        // `{:?}` prints the shortest string that parses back to the same f64
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a CSV panel. A first line that does not parse as numbers is taken
/// as a header.
pub fn read_csv<R: Read>(input: R) -> Result<PanelMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
            _ => Error::Parse(format!("line {}: {e}", line + 1)),
        })?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", line + 1))),
        };
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Parse(format!("line {}: {} fields, expected {w}", line + 1, values.len())))
            }
            _ => {}
        }
        data.extend(values);
        rows += 1;
    }
    PanelMatrix::from_row_major(rows, width.unwrap_or(0), &data)
}

pub fn write_binary<W: Write>(panel: &PanelMatrix, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(panel.n_units() as u64).to_le_bytes())?;
    out.write_all(&(panel.n_periods() as u64).to_le_bytes())?;
    for v in panel.to_row_major() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<PanelMatrix> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a panel file".into()));
    }
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let n = u64::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let t = u64::from_le_bytes(word) as usize;
    let len = n
        .checked_mul(t)
        .filter(|&l| l <= (1 << 32))
        .ok_or_else(|| Error::Parse(format!("implausible dimensions {n}x{t}")))?;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        input.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    if input.read(&mut word)? != 0 {
        return Err(Error::Parse("trailing bytes after panel data".into()));
    }
    PanelMatrix::from_row_major(n, t, &data)
}

/// Load a panel, choosing the format from the file extension (`.csv` or
/// anything else for binary).
pub fn load(path: &Path) -> Result<PanelMatrix> {
    let f = BufReader::new(File::open(path)?);
    if is_csv(path) {
        read_csv(f)
    } else {
        read_binary(f)
    }
}

pub fn save(panel: &PanelMatrix, path: &Path) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    if is_csv(path) {
        write_csv(panel, f, false)
    } else {
        write_binary(panel, f)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}
