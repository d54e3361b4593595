//! Tab-separated tables with a `#`-prefixed metadata block.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), ..Default::default() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::ShapeMismatch { expected: self.columns.len(), actual: row.len() });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.metadata {
            s.push_str(&format!("# {k}: {v}\n"));
        }
        s.push_str(&self.columns.join("\t"));
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join("\t"));
            s.push('\n');
        }
        s
    }
}

pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(table.render().as_bytes())?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_metadata_header_and_rows() {
        let mut t = Table::new(["m", "max_score"]);
        t.meta("lambda", 0.51);
        t.push(vec!["0".into(), "1.5".into()]).unwrap();
        assert!(t.push(vec!["1".into()]).is_err());
        assert_eq!(t.render(), "# lambda: 0.51\nm\tmax_score\n0\t1.5\n");
    }
}
