use std::path::Path;

use crate::data::write_file;
use crate::error::Result;

/// Audit lines written at the top of every output file.
#[derive(Debug, Clone)]
pub struct Header {
    pub command: String,
    pub seed: Option<u64>,
    pub config: Vec<String>,
}

impl Header {
    pub fn lines(&self) -> Vec<String> {
        let mut v = vec![
            format!("hmmgmr {}", crate::VERSION),
            format!("command: {}", self.command),
        ];
        if let Some(s) = self.seed {
            v.push(format!("seed: {s}"));
        }
        v.extend(self.config.iter().map(|c| format!("config: {c}")));
        v
    }

    fn block(&self) -> String {
        self.lines().iter().map(|l| format!("# {l}\n")).collect()
    }
}

/// Rows of string cells rendered as fixed-width text and as CSV.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_text(&self) -> String {
        let mut width: Vec<usize> = self.columns.iter().map(String::len).collect();
        for r in &self.rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let fmt_row = |cells: &[String]| {
            let mut line = cells
                .iter()
                .zip(&width)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ");
            line.push('\n');
            line
        };
        let mut s = fmt_row(&self.columns);
        s.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * width.len().saturating_sub(1)));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&fmt_row(r));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    /// Writes `<stem>.txt` and `<stem>.csv` into `dir`, both headed by `header`.
    pub fn write(&self, dir: &Path, stem: &str, header: &Header) -> Result<()> {
        write_text(&dir.join(format!("{stem}.txt")), header, &self.to_text())?;
        write_text(&dir.join(format!("{stem}.csv")), header, &self.to_csv())
    }
}

pub fn write_text(path: &Path, header: &Header, body: &str) -> Result<()> {
    write_file(path, format!("{}{body}", header.block()).as_bytes())
}

/// Full-precision cell.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Fixed six-decimal cell.
pub fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_and_csv_agree_on_cells() {
        let mut t = Table::new(["k", "score"]);
        t.push(vec!["1".into(), "10.5".into()]);
        t.push(vec!["12".into(), "3".into()]);
        assert_eq!(t.to_csv(), "k,score\n1,10.5\n12,3\n");
        let text = t.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], " k  score");
        assert_eq!(lines[2], " 1   10.5");
        assert_eq!(lines[3], "12      3");
    }
}
