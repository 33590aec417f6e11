//! Count-table ingestion with cell-level diagnostics, plus the CSV and JSON
//! writers shared by all subcommands.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use clrlr_core::CountMatrix;
use nalgebra::DMatrix;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;
pub type CliResult<T> = Result<T, BoxError>;

pub fn err<T>(message: String) -> CliResult<T> {
    Err(message.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TableFormat {
    Tsv,
    Csv,
}

impl TableFormat {
    pub fn delimiter(self) -> char {
        match self {
            TableFormat::Tsv => '\t',
            TableFormat::Csv => ',',
        }
    }

    /// Picks the format from the file extension; anything but `.csv` is
    /// treated as tab-separated.
    pub fn infer(path: &Path) -> TableFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TableFormat::Csv,
            _ => TableFormat::Tsv,
        }
    }
}

/// A parsed count table: header row of taxa ids, one labeled row per sample.
#[derive(Debug, Clone)]
pub struct CountTable {
    pub sample_ids: Vec<String>,
    pub taxa_ids: Vec<String>,
    pub counts: CountMatrix,
}

pub fn read_counts(path: &Path, format: TableFormat) -> CliResult<CountTable> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let delim = format.delimiter();

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(idx, line)| (idx + 1, line))
        .filter(|(_, line)| !line.trim().is_empty());

    let (_, header) = lines
        .next()
        .ok_or_else(|| format!("{}: file contains no data", path.display()))?;
    let header_fields: Vec<&str> = header.split(delim).map(str::trim).collect();
    if header_fields.len() < 3 {
        return err(format!(
            "{}: header must list a sample-id column and at least two taxa, found {} fields",
            path.display(),
            header_fields.len()
        ));
    }
    let taxa_ids: Vec<String> = header_fields[1..].iter().map(|s| s.to_string()).collect();
    let mut seen = HashSet::new();
    for (j, id) in taxa_ids.iter().enumerate() {
        if !seen.insert(id.as_str()) {
            return err(format!(
                "{}: duplicate taxa id {id:?} in header column {}",
                path.display(),
                j + 2
            ));
        }
    }

    let p = taxa_ids.len();
    let mut sample_ids = Vec::new();
    let mut data: Vec<u64> = Vec::new();
    let mut seen_samples = HashSet::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
        if fields.len() != p + 1 {
            return err(format!(
                "{}: line {line_no}: expected {} fields, found {}",
                path.display(),
                p + 1,
                fields.len()
            ));
        }
        let sample_id = fields[0].to_string();
        if !seen_samples.insert(sample_id.clone()) {
            return err(format!(
                "{}: line {line_no}: duplicate sample id {sample_id:?}",
                path.display()
            ));
        }
        for (j, token) in fields[1..].iter().enumerate() {
            let value: u64 = token.parse().map_err(|_| {
                format!(
                    "{}: line {line_no}, column {}: invalid count {token:?} (counts must be base-10 nonnegative integers)",
                    path.display(),
                    j + 2
                )
            })?;
            data.push(value);
        }
        sample_ids.push(sample_id);
    }

    if sample_ids.is_empty() {
        return err(format!("{}: no sample rows after the header", path.display()));
    }
    let n = sample_ids.len();
    let counts = CountMatrix::new(DMatrix::from_row_iterator(n, p, data))
        .map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(CountTable { sample_ids, taxa_ids, counts })
}

/// Shortest-round-trip decimal formatting; parses back to the same bits.
pub fn fmt_f64(value: f64) -> String {
    format!("{value}")
}

/// Creates `dir` and refuses to clobber any of `files` unless forced.
pub fn prepare_out_dir(dir: &Path, files: &[&str], force: bool) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    if !force {
        for name in files {
            let target = dir.join(name);
            if target.exists() {
                return err(format!(
                    "{} already exists; pass --force to overwrite",
                    target.display()
                ));
            }
        }
    }
    Ok(())
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let context = |e: csv::Error| format!("cannot write {}: {e}", path.display());
    let mut writer = csv::Writer::from_path(path).map_err(context)?;
    writer.write_record(header).map_err(context)?;
    for row in rows {
        writer.write_record(row).map_err(context)?;
    }
    writer.flush().map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    Ok(())
}

/// Writes a labeled numeric table: one id column, then one column per taxa.
pub fn write_matrix_csv(
    path: &Path,
    id_column: &str,
    row_ids: &[String],
    col_ids: &[String],
    values: &DMatrix<f64>,
) -> CliResult<()> {
    let mut header = Vec::with_capacity(col_ids.len() + 1);
    header.push(id_column.to_string());
    header.extend(col_ids.iter().cloned());
    let rows: Vec<Vec<String>> = (0..values.nrows())
        .map(|i| {
            let mut row = Vec::with_capacity(values.ncols() + 1);
            row.push(row_ids[i].clone());
            row.extend((0..values.ncols()).map(|j| fmt_f64(values[(i, j)])));
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

pub fn write_counts_csv(path: &Path, table: &CountTable) -> CliResult<()> {
    let mut header = Vec::with_capacity(table.taxa_ids.len() + 1);
    header.push("sample_id".to_string());
    header.extend(table.taxa_ids.iter().cloned());
    let values = table.counts.values();
    let rows: Vec<Vec<String>> = (0..values.nrows())
        .map(|i| {
            let mut row = Vec::with_capacity(values.ncols() + 1);
            row.push(table.sample_ids[i].clone());
            row.extend((0..values.ncols()).map(|j| values[(i, j)].to_string()));
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| format!("cannot serialize {}: {e}", path.display()))?;
    body.push('\n');
    fs::write(path, body).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(name: &str, content: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("clrlr-io-tests");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn reads_well_formed_tsv() {
        let path = write_temp("ok.tsv", "id\ta\tb\tc\ns1\t1\t2\t3\ns2\t0\t4\t5\n");
        let table = read_counts(&path, TableFormat::Tsv).unwrap();
        assert_eq!(table.sample_ids, vec!["s1", "s2"]);
        assert_eq!(table.taxa_ids, vec!["a", "b", "c"]);
        assert_eq!(table.counts.values()[(1, 2)], 5);
    }

    #[test]
    fn reads_csv_by_inference() {
        let path = write_temp("ok.csv", "id,a,b\ns1,7,8\n");
        assert_eq!(TableFormat::infer(&path), TableFormat::Csv);
        let table = read_counts(&path, TableFormat::Csv).unwrap();
        assert_eq!(table.counts.values()[(0, 1)], 8);
    }

    #[test]
    fn rejects_negative_cell_with_location() {
        let path = write_temp("neg.tsv", "id\ta\tb\ns1\t-1\t2\n");
        let msg = read_counts(&path, TableFormat::Tsv).unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("column 2"), "{msg}");
        assert!(msg.contains("-1"), "{msg}");
    }

    #[test]
    fn rejects_fractional_cell_with_location() {
        let path = write_temp("frac.tsv", "id\ta\tb\ns1\t1\t2\ns2\t1\t2.5\n");
        let msg = read_counts(&path, TableFormat::Tsv).unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("column 3"), "{msg}");
        assert!(msg.contains("2.5"), "{msg}");
    }

    #[test]
    fn rejects_ragged_rows() {
        let path = write_temp("ragged.tsv", "id\ta\tb\ns1\t1\n");
        let msg = read_counts(&path, TableFormat::Tsv).unwrap_err().to_string();
        assert!(msg.contains("expected 3 fields, found 2"), "{msg}");
    }

    #[test]
    fn rejects_duplicate_ids() {
        let path = write_temp("dup.tsv", "id\ta\ta\ns1\t1\t2\n");
        assert!(read_counts(&path, TableFormat::Tsv).is_err());
        let path = write_temp("dup2.tsv", "id\ta\tb\ns1\t1\t2\ns1\t3\t4\n");
        let msg = read_counts(&path, TableFormat::Tsv).unwrap_err().to_string();
        assert!(msg.contains("duplicate sample id"), "{msg}");
    }

    #[test]
    fn rejects_single_taxa_column() {
        let path = write_temp("thin.tsv", "id\ta\ns1\t1\n");
        assert!(read_counts(&path, TableFormat::Tsv).is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 42.31, 1e-300, f64::MAX, -0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }
}
