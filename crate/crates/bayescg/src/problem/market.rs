//! Matrix Market coordinate-format reader/writer for symmetric matrices.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Loads a real matrix in Matrix Market coordinate format.
///
/// The `symmetric` qualifier is honored by mirroring each off-diagonal entry;
/// a `general` header is rejected when a symmetric matrix is expected.
pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    let file = std::fs::File::open(path.as_ref())?;
    read_matrix_market(BufReader::new(file))
}

pub fn read_matrix_market<R: BufRead>(reader: R) -> Result<CsrMatrix> {
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))?
        .1
        .map(|h| (0usize, h))
        .map_err(Error::Io)?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_lowercase()).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, format!("bad MatrixMarket banner: {header:?}")));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(1, format!("unsupported format {:?}", tokens[2])));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(parse_err(1, format!("unsupported field {:?}", tokens[3])));
    }
    let symmetric = match tokens[4].as_str() {
        "symmetric" => true,
        "general" => {
            return Err(parse_err(
                1,
                "expected a symmetric matrix, header says general",
            ))
        }
        other => return Err(parse_err(1, format!("unsupported symmetry {other:?}"))),
    };

    // skip comments, read the size line
    let mut size_line = None;
    let mut size_line_no = 0;
    for (idx, line) in &mut lines {
        let line = line.map_err(Error::Io)?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        size_line = Some(trimmed.to_string());
        size_line_no = idx + 1;
        break;
    }
    let size_line = size_line.ok_or_else(|| parse_err(size_line_no, "missing size line"))?;
    let dims: Vec<&str> = size_line.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(parse_err(size_line_no, format!("bad size line {size_line:?}")));
    }
    let nrows: usize = dims[0]
        .parse()
        .map_err(|_| parse_err(size_line_no, "bad row count"))?;
    let ncols: usize = dims[1]
        .parse()
        .map_err(|_| parse_err(size_line_no, "bad column count"))?;
    let declared_nnz: usize = dims[2]
        .parse()
        .map_err(|_| parse_err(size_line_no, "bad entry count"))?;
    if nrows != ncols {
        return Err(parse_err(
            size_line_no,
            format!("matrix must be square, got {nrows}x{ncols}"),
        ));
    }

    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * declared_nnz);
    let mut seen = 0usize;
    for (idx, line) in &mut lines {
        let line = line.map_err(Error::Io)?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let line_no = idx + 1;
        let mut it = trimmed.split_whitespace();
        let i: usize = it
            .next()
            .ok_or_else(|| parse_err(line_no, "missing row index"))?
            .parse()
            .map_err(|_| parse_err(line_no, "bad row index"))?;
        let j: usize = it
            .next()
            .ok_or_else(|| parse_err(line_no, "missing column index"))?
            .parse()
            .map_err(|_| parse_err(line_no, "bad column index"))?;
        let v: f64 = it
            .next()
            .ok_or_else(|| parse_err(line_no, "missing value"))?
            .parse()
            .map_err(|_| parse_err(line_no, "bad value"))?;
        if i == 0 || j == 0 || i > nrows || j > ncols {
            return Err(parse_err(
                line_no,
                format!("index ({i}, {j}) outside 1..={nrows}"),
            ));
        }
        if symmetric && j > i {
            return Err(parse_err(
                line_no,
                format!("entry ({i}, {j}) above the diagonal in a symmetric file"),
            ));
        }
        triplets.push((i - 1, j - 1, v));
        if symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
        seen += 1;
    }
    if seen != declared_nnz {
        return Err(parse_err(
            0,
            format!("header declares {declared_nnz} entries, file has {seen}"),
        ));
    }
    CsrMatrix::from_triplets(nrows, &triplets)
}

/// Writes the lower triangle of a symmetric matrix in coordinate format.
pub fn write_matrix_market<W: Write>(w: &mut W, m: &CsrMatrix) -> Result<()> {
    let n = m.nrows();
    let mut entries = Vec::new();
    for i in 0..n {
        for (j, v) in m.row(i) {
            if j <= i && v != 0.0 {
                entries.push((i, j, v));
            }
        }
    }
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", n, n, entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {:?}", i + 1, j + 1, v)?;
    }
    Ok(())
}
