//! CSV metric files. The first line is `# format_version 1`, then a header
//! row, then data rows; fields are comma-separated with `\n` line ends.

use std::path::Path;

use crate::error::Result;
use crate::fsio;

pub fn to_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut out = b"# format_version 1\n".to_vec();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
        w.write_record(header).expect("writing to memory");
        for r in rows {
            w.write_record(r).expect("writing to memory");
        }
        w.flush().expect("writing to memory");
    }
    out
}

pub fn write(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    fsio::write_atomic(path, &to_bytes(header, rows))
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}
