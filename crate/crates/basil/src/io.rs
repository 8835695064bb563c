//! Text and binary file formats.
//!
//! Expression CSV: rows are samples, columns are genes; the header holds gene ids,
//! and an optional first column holds sample ids (its header cell is empty or one
//! of `sample`, `sample_id`, `id`).
//!
//! Gene sets come either as a dense CSV (header = set ids, first column = gene
//! ids, cells 0/1) or as a triplet TSV with one `gene<TAB>set` membership per
//! line and `#` comments.
//!
//! Floating-point values are written with 17 significant digits so they read
//! back bit-identically.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use basil_core::{BasilError, DMatrix, DataMatrix, GeneSetMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

const SAMPLE_HEADERS: [&str; 3] = ["sample", "sample_id", "id"];

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        kind => CliError::parse(path, line, None, format!("{kind:?}")),
    }
}

fn parse_cell(path: &Path, line: u64, column: &str, cell: &str) -> Result<f64> {
    let value: f64 = cell
        .trim()
        .parse()
        .map_err(|_| CliError::parse(path, line, Some(column.to_string()), format!("`{cell}` is not a number")))?;
    if !value.is_finite() {
        return Err(CliError::parse(path, line, Some(column.to_string()), format!("`{cell}` is not finite")));
    }
    Ok(value)
}

/// Expression data with optional sample ids.
#[derive(Debug, Clone)]
pub struct Expression {
    pub data: DataMatrix,
    pub sample_ids: Option<Vec<String>>,
}

// Column ids, optional row labels and the numeric rows.
type Table = (Vec<String>, Option<Vec<String>>, Vec<Vec<f64>>);

/// Reads a numeric table with a header row and an optional leading label
/// column (`label_column` decides from the first header cell).
fn read_table(path: &Path, label_column: impl Fn(&str) -> bool) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(open(path)?);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.is_empty() {
        return Err(CliError::parse(path, 1, None, "empty header"));
    }
    let labeled = label_column(&header[0]);
    let columns: Vec<String> = header.iter().skip(usize::from(labeled)).map(str::to_string).collect();
    if columns.is_empty() {
        return Err(CliError::parse(path, 1, None, "no data columns"));
    }
    let mut labels = labeled.then(Vec::new);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut cells = record.iter();
        if let Some(labels) = labels.as_mut() {
            labels.push(cells.next().unwrap_or_default().to_string());
        }
        let row = cells
            .zip(&columns)
            .map(|(cell, column)| parse_cell(path, line, column, cell))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::parse(path, 2, None, "no data rows"));
    }
    Ok((columns, labels, rows))
}

fn to_matrix(rows: &[Vec<f64>], cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

pub fn read_expression_csv(path: &Path) -> Result<Expression> {
    let (genes, samples, rows) =
        read_table(path, |first| first.is_empty() || SAMPLE_HEADERS.contains(&first.to_ascii_lowercase().as_str()))?;
    let values = to_matrix(&rows, genes.len());
    let data = DataMatrix::new(values, genes).map_err(|e| model_error_in(path, e))?;
    Ok(Expression { data, sample_ids: samples })
}

// Attaches file and line context to validation errors from the core.
fn model_error_in(path: &Path, e: BasilError) -> CliError {
    match e {
        BasilError::DuplicateId { kind, id } => CliError::parse(path, 1, None, format!("duplicate {kind} id `{id}`")),
        other => CliError::Model(other),
    }
}

pub fn write_expression_csv(path: &Path, data: &DataMatrix, sample_ids: Option<&[String]>) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| CliError::io(path, e);
    write!(out, "sample").map_err(io)?;
    for g in data.gene_ids() {
        write!(out, ",{g}").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for (i, row) in data.values().row_iter().enumerate() {
        match sample_ids {
            Some(ids) => write!(out, "{}", ids[i]),
            None => write!(out, "s{}", i + 1),
        }
        .map_err(io)?;
        for v in row.iter() {
            write!(out, ",{}", fmt_f64(*v)).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Rows labeled by id, columns labeled by header.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    pub values: DMatrix<f64>,
}

pub fn write_labeled_matrix(
    path: &Path,
    corner: &str,
    row_ids: &[String],
    col_ids: &[String],
    values: &DMatrix<f64>,
) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| CliError::io(path, e);
    write!(out, "{corner}").map_err(io)?;
    for c in col_ids {
        write!(out, ",{c}").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for (i, id) in row_ids.iter().enumerate() {
        write!(out, "{id}").map_err(io)?;
        for v in values.row(i).iter() {
            write!(out, ",{}", fmt_f64(*v)).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_labeled_matrix(path: &Path) -> Result<LabeledMatrix> {
    let (col_ids, row_ids, rows) = read_table(path, |_| true)?;
    let values = to_matrix(&rows, col_ids.len());
    Ok(LabeledMatrix { row_ids: row_ids.unwrap_or_default(), col_ids, values })
}

/// Column names `prefix1..prefixk`.
pub fn numbered(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|h| format!("{prefix}{h}")).collect()
}

/// On-disk layout of a gene-set file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GeneSetFormat {
    DenseCsv,
    TripletTsv,
}

impl GeneSetFormat {
    /// `.csv` files are dense, everything else is read as triplets.
    pub fn from_extension(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => GeneSetFormat::DenseCsv,
            _ => GeneSetFormat::TripletTsv,
        }
    }
}

pub fn read_gene_sets(path: &Path, format: GeneSetFormat) -> Result<GeneSetMatrix> {
    match format {
        GeneSetFormat::DenseCsv => read_dense_gene_sets(path),
        GeneSetFormat::TripletTsv => read_triplet_gene_sets(path),
    }
}

fn read_dense_gene_sets(path: &Path) -> Result<GeneSetMatrix> {
    let table = read_labeled_matrix(path)?;
    GeneSetMatrix::new(table.values, table.row_ids, table.col_ids.clone()).map_err(|e| match e {
        BasilError::NonBinaryEntry { row, col, value } => CliError::parse(
            path,
            row as u64 + 2,
            Some(table.col_ids[col].clone()),
            format!("entry {value} is not 0 or 1"),
        ),
        other => model_error_in(path, other),
    })
}

fn read_triplet_gene_sets(path: &Path) -> Result<GeneSetMatrix> {
    let reader = BufReader::new(open(path)?);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(CliError::parse(
                path,
                i as u64 + 1,
                None,
                format!("expected `gene<TAB>set`, found {} field(s)", fields.len()),
            ));
        }
        pairs.push((fields[0].to_string(), fields[1].to_string()));
    }
    if pairs.is_empty() {
        return Err(CliError::parse(path, 1, None, "no memberships"));
    }
    GeneSetMatrix::from_memberships(pairs).map_err(|e| model_error_in(path, e))
}

pub fn write_triplet_gene_sets(path: &Path, c: &GeneSetMatrix) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(out, "# gene\tset").map_err(io)?;
    for (l, set) in c.set_ids().iter().enumerate() {
        for (j, gene) in c.gene_ids().iter().enumerate() {
            if c.membership()[(j, l)] != 0.0 {
                writeln!(out, "{gene}\t{set}").map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

pub fn write_dense_gene_sets(path: &Path, c: &GeneSetMatrix) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| CliError::io(path, e);
    write!(out, "gene").map_err(io)?;
    for s in c.set_ids() {
        write!(out, ",{s}").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for (j, gene) in c.gene_ids().iter().enumerate() {
        write!(out, "{gene}").map_err(io)?;
        for l in 0..c.n_sets() {
            write!(out, ",{}", c.membership()[(j, l)] as u8).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::io(path, e.into()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line() as u64, None, e.to_string()))
}

/// Little-endian `f64` vector.
pub fn write_f64_bin(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = create(path)?;
    for v in values {
        out.write_all(&v.to_le_bytes()).map_err(|e| CliError::io(path, e))?;
    }
    out.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_f64_bin(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| CliError::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(CliError::parse(path, 0, None, "length is not a multiple of 8 bytes"));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn extension_picks_format() {
        assert_eq!(GeneSetFormat::from_extension(Path::new("a/sets.CSV")), GeneSetFormat::DenseCsv);
        assert_eq!(GeneSetFormat::from_extension(Path::new("sets.tsv")), GeneSetFormat::TripletTsv);
        assert_eq!(GeneSetFormat::from_extension(Path::new("sets")), GeneSetFormat::TripletTsv);
    }
}
