//! Embedding-file ingestion.
//!
//! Two formats are supported:
//!
//! * CSV: UTF-8 with a header row. An optional first column named `label`
//!   holds class identifiers; every other column is a numeric feature.
//! * Raw binary (`SGWE`): magic bytes `SGWE`, `u32` LE row count `n`, `u32`
//!   LE column count `d`, a `u8` has-labels flag, `n*d` LE `f64` values in
//!   row-major order, then (if flagged) `n` labels, each a `u32` LE byte
//!   length followed by UTF-8 bytes.
//!
//! The raw container is also used for network checkpoints and image buffers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::EmbeddingSet;

pub const RAW_MAGIC: &[u8; 4] = b"SGWE";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Csv,
    RawF64,
}

impl EmbeddingFormat {
    /// `.csv` → CSV, anything else → raw.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EmbeddingFormat::Csv,
            _ => EmbeddingFormat::RawF64,
        }
    }
}

pub fn load_embeddings(path: &Path, format: EmbeddingFormat) -> Result<EmbeddingSet> {
    match format {
        EmbeddingFormat::Csv => load_csv(path),
        EmbeddingFormat::RawF64 => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let (points, labels) = read_raw(&mut BufReader::new(file), path)?;
            if points.nrows() == 0 {
                return Err(Error::EmptyFile(path.to_path_buf()));
            }
            EmbeddingSet::new(points, labels).map_err(|e| malformed(path, 0, e.to_string()))
        }
    }
}

pub fn save_embeddings(set: &EmbeddingSet, path: &Path, format: EmbeddingFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        EmbeddingFormat::Csv => write_csv(set, &mut w).map_err(|e| Error::io(path, e))?,
        EmbeddingFormat::RawF64 => {
            write_raw(&mut w, set.points(), set.labels()).map_err(|e| Error::io(path, e))?
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn malformed(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::MalformedFile {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn load_csv(path: &Path) -> Result<EmbeddingSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let header = reader
        .headers()
        .map_err(|e| malformed(path, 1, e.to_string()))?
        .clone();
    let has_labels = header.get(0).is_some_and(|h| h.trim() == "label");
    let d = header.len() - usize::from(has_labels);
    if d == 0 {
        return Err(malformed(path, 1, "no feature columns"));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            malformed(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record.get(0).is_some_and(|c| c.trim().is_empty()) {
            continue;
        }
        if record.len() != header.len() {
            return Err(malformed(
                path,
                line,
                format!("expected {} columns, found {}", header.len(), record.len()),
            ));
        }
        let mut cells = record.iter();
        if has_labels {
            labels.push(cells.next().unwrap_or_default().trim().to_string());
        }
        for (col, cell) in cells.enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                malformed(path, line, format!("non-numeric feature {cell:?} in column {col}"))
            })?;
            if !v.is_finite() {
                return Err(malformed(path, line, format!("non-finite feature {cell:?}")));
            }
            values.push(v);
        }
    }
    let n = values.len() / d;
    if n == 0 {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let points = Array2::from_shape_vec((n, d), values).map_err(|e| malformed(path, 0, e.to_string()))?;
    EmbeddingSet::new(points, has_labels.then_some(labels)).map_err(|e| malformed(path, 0, e.to_string()))
}

fn write_csv<W: Write>(set: &EmbeddingSet, w: &mut W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = Vec::new();
    if set.labels().is_some() {
        header.push("label".into());
    }
    header.extend((0..set.dim()).map(|j| format!("f{j}")));
    out.write_record(&header)?;
    for i in 0..set.len() {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        if let Some(l) = set.labels() {
            row.push(l[i].clone());
        }
        // `{:?}` prints the shortest representation that parses back exactly.
        row.extend(set.point(i).iter().map(|v| format!("{v:?}")));
        out.write_record(&row)?;
    }
    out.flush()
}

/// Write a matrix (and optional row labels) in the raw container format.
pub fn write_raw<W: Write>(w: &mut W, values: &Array2<f64>, labels: Option<&[String]>) -> std::io::Result<()> {
    let (n, d) = values.dim();
    let too_big = |_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "dimension exceeds u32");
    w.write_all(RAW_MAGIC)?;
    w.write_all(&u32::try_from(n).map_err(too_big)?.to_le_bytes())?;
    w.write_all(&u32::try_from(d).map_err(too_big)?.to_le_bytes())?;
    w.write_all(&[u8::from(labels.is_some())])?;
    for v in values.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    if let Some(labels) = labels {
        for l in labels {
            let bytes = l.as_bytes();
            w.write_all(&u32::try_from(bytes.len()).map_err(too_big)?.to_le_bytes())?;
            w.write_all(bytes)?;
        }
    }
    Ok(())
}

/// Read one raw container. `path` is only used in error messages.
pub fn read_raw<R: Read>(r: &mut R, path: &Path) -> Result<(Array2<f64>, Option<Vec<String>>)> {
    let io_err = |e: std::io::Error| malformed(path, 0, format!("truncated raw container: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != RAW_MAGIC {
        return Err(malformed(path, 0, "bad magic bytes (expected SGWE)"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(io_err)?;
    let n = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf).map_err(io_err)?;
    let d = u32::from_le_bytes(u32buf) as usize;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag).map_err(io_err)?;
    let has_labels = match flag[0] {
        0 => false,
        1 => true,
        f => return Err(malformed(path, 0, format!("invalid label flag {f}"))),
    };
    let mut values = Vec::with_capacity(n.saturating_mul(d).min(1 << 24));
    let mut f64buf = [0u8; 8];
    for _ in 0..n * d {
        r.read_exact(&mut f64buf).map_err(io_err)?;
        values.push(f64::from_le_bytes(f64buf));
    }
    let labels = if has_labels {
        let mut labels = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            r.read_exact(&mut u32buf).map_err(io_err)?;
            let len = u32::from_le_bytes(u32buf) as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes).map_err(io_err)?;
            labels.push(String::from_utf8(bytes).map_err(|e| malformed(path, 0, e.to_string()))?);
        }
        Some(labels)
    } else {
        None
    };
    let values = Array2::from_shape_vec((n, d), values).map_err(|e| malformed(path, 0, e.to_string()))?;
    Ok((values, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Cursor;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn minimal_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "label,f0,f1\nA,0,0\nB,1,1\n");
        let s = load_embeddings(&p, EmbeddingFormat::Csv).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.labels().unwrap(), &["A".to_string(), "B".to_string()]);
        assert_eq!(s.points(), &array![[0.0, 0.0], [1.0, 1.0]]);
    }

    #[test]
    fn crlf_and_unlabeled() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x,y,z\r\n1.5,2,3\r\n4,5,6e-1\r\n");
        let s = load_embeddings(&p, EmbeddingFormat::Csv).unwrap();
        assert!(s.labels().is_none());
        assert_eq!(s.points(), &array![[1.5, 2.0, 3.0], [4.0, 5.0, 0.6]]);
    }

    #[test]
    fn ragged_csv_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "f0,f1\n0,0\n1,2,3\n");
        match load_embeddings(&p, EmbeddingFormat::Csv) {
            Err(Error::MalformedFile { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "f0,f1\n0,abc\n");
        assert!(matches!(
            load_embeddings(&p, EmbeddingFormat::Csv),
            Err(Error::MalformedFile { line: 2, .. })
        ));
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "label,f0\n");
        assert!(matches!(load_embeddings(&p, EmbeddingFormat::Csv), Err(Error::EmptyFile(_))));
    }

    #[test]
    fn raw_layout_is_exact() {
        let mut buf = Vec::new();
        write_raw(&mut buf, &array![[1.0, 2.0]], Some(&["ab".to_string()])).unwrap();
        let mut expected = b"SGWE".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(2u32.to_le_bytes());
        expected.push(1);
        expected.extend(1.0f64.to_le_bytes());
        expected.extend(2.0f64.to_le_bytes());
        expected.extend(2u32.to_le_bytes());
        expected.extend(b"ab");
        assert_eq!(buf, expected);
        let (m, l) = read_raw(&mut Cursor::new(buf), Path::new("mem")).unwrap();
        assert_eq!(m, array![[1.0, 2.0]]);
        assert_eq!(l.unwrap(), vec!["ab".to_string()]);
    }

    #[test]
    fn raw_bad_magic() {
        let buf = b"NOPE\0\0\0\0".to_vec();
        assert!(read_raw(&mut Cursor::new(buf), Path::new("mem")).is_err());
    }
}
