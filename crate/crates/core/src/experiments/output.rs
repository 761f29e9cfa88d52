//! Output files. Every file opens with `#` comment lines carrying the code
//! version, the command, the master seed and the resolved configuration, so
//! reruns with the same configuration are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A named file produced by an experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Comment header shared by every output file.
pub fn metadata_header(command: &str, config: &ExperimentConfig) -> String {
    let mut h = String::new();
    let _ = writeln!(h, "# cvqkd {VERSION}");
    let _ = writeln!(h, "# command: {command}");
    let _ = writeln!(h, "# seed: {}", config.seed);
    // Where the files land is not part of the experiment.
    for line in config.to_text().lines().filter(|l| !l.starts_with("output_dir")) {
        let _ = writeln!(h, "# config: {line}");
    }
    h
}

/// Builds a CSV body (header plus rows) and prefixes the metadata header.
pub struct CsvTable {
    body: String,
    columns: usize,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        let mut body = columns.join(",");
        body.push('\n');
        Self { body, columns: columns.len() }
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let cells: Vec<String> = cells.into_iter().map(|c| c.as_ref().to_owned()).collect();
        assert_eq!(cells.len(), self.columns, "row width must match the header");
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn into_artifact(self, name: &str, command: &str, config: &ExperimentConfig) -> Artifact {
        Artifact { name: name.to_owned(), contents: metadata_header(command, config) + &self.body }
    }
}

/// Formats a float for CSV output; non-finite values become empty cells.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Writes artifacts into `dir`, creating it if needed. Returns the paths.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    artifacts
        .iter()
        .map(|a| {
            let path = dir.join(&a.name);
            std::fs::write(&path, &a.contents).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Reads a CSV artifact back, skipping the metadata comment lines.
pub fn read_csv_records(contents: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(contents.as_bytes());
    let header = reader.headers()?.iter().map(str::to_owned).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_owned).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_rows_round_trip() {
        let config = ExperimentConfig::default();
        let mut t = CsvTable::new(&["a", "b"]);
        t.row(["1", "x"]);
        t.row([num(0.5), num(f64::NAN)]);
        let art = t.into_artifact("t.csv", "test", &config);
        assert!(art.contents.starts_with("# cvqkd "));
        let (header, rows) = read_csv_records(&art.contents).unwrap();
        assert_eq!(header, vec!["a", "b"]);
        assert_eq!(rows, vec![vec!["1", "x"], vec!["0.5", ""]]);
    }

    #[test]
    fn writes_into_a_fresh_directory() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("nested");
        let art = Artifact { name: "f.txt".into(), contents: "hi\n".into() };
        let paths = write_artifacts(&target, &[art]).unwrap();
        assert_eq!(std::fs::read_to_string(&paths[0]).unwrap(), "hi\n");
    }
}
