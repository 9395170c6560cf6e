//! Convergence tables and their CSV / Markdown renderings.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Duration;

use subdiff_core::Result;

use crate::config::OutputFormat;

/// One `(α, row, N)` measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub alpha: f64,
    pub row: String,
    pub steps: usize,
    pub error: f64,
    /// Inner iterations over all steps (direct solves not counted).
    pub iterations: usize,
    pub wall_time: Duration,
}

/// Errors keyed by `(α, row label)` and `N`, in insertion order of rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorTable {
    /// Metadata lines written as `#` comments ahead of the CSV header.
    pub header: Vec<String>,
    cells: Vec<Cell>,
}

/// `e` as printed in CSV, read back. Rates are derived from these values so
/// that they can be recomputed exactly from the output.
pub fn rounded(e: f64) -> f64 {
    format!("{e:.5e}").parse().expect("formatted float parses")
}

/// Quotes a field that contains a comma or quote, as `log:3,0` does.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `log₂(e_prev / e)`, the observed order when `N` doubles.
pub fn rate(e_prev: f64, e: f64) -> f64 {
    (e_prev / e).log2()
}

impl ErrorTable {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, cells: Vec::new() }
    }

    pub fn push(&mut self, cell: Cell) {
        self.cells.push(cell);
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Distinct `(α, row)` keys in first-appearance order.
    pub fn rows(&self) -> Vec<(f64, String)> {
        let mut out: Vec<(f64, String)> = Vec::new();
        for c in &self.cells {
            if !out.iter().any(|(a, r)| *a == c.alpha && *r == c.row) {
                out.push((c.alpha, c.row.clone()));
            }
        }
        out
    }

    /// Cells of one row, sorted by `N`.
    pub fn row(&self, alpha: f64, label: &str) -> Vec<&Cell> {
        let mut v: Vec<&Cell> = self.cells.iter().filter(|c| c.alpha == alpha && c.row == label).collect();
        v.sort_by_key(|c| c.steps);
        v
    }

    pub fn error(&self, alpha: f64, label: &str, steps: usize) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.alpha == alpha && c.row == label && c.steps == steps)
            .map(|c| c.error)
    }

    /// `(N, rate)` pairs of one row from the second `N` on, using the
    /// printed errors.
    pub fn rates(&self, alpha: f64, label: &str) -> Vec<(usize, f64)> {
        self.row(alpha, label)
            .windows(2)
            .map(|w| (w[1].steps, rate(rounded(w[0].error), rounded(w[1].error))))
            .collect()
    }

    pub fn write<W: Write>(&self, format: OutputFormat, out: W) -> Result<()> {
        match format {
            OutputFormat::Csv => self.write_csv(out),
            OutputFormat::Markdown => self.write_markdown(out),
        }
    }

    /// `alpha,row_label,N,eN,rate`; the rate is empty in each row's first
    /// column.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for line in &self.header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "alpha,row_label,N,eN,rate")?;
        for (alpha, label) in self.rows() {
            let mut prev: Option<f64> = None;
            for c in self.row(alpha, &label) {
                let e = rounded(c.error);
                let r = prev.map(|p| format!("{:.10}", rate(p, e))).unwrap_or_default();
                writeln!(out, "{alpha},{},{},{:.5e},{r}", csv_field(&label), c.steps, c.error)?;
                prev = Some(e);
            }
        }
        Ok(())
    }

    /// One block per `α`: an error line and a rate line per schedule row.
    pub fn write_markdown<W: Write>(&self, mut out: W) -> Result<()> {
        for line in &self.header {
            writeln!(out, "<!-- {line} -->")?;
        }
        let steps: BTreeSet<usize> = self.cells.iter().map(|c| c.steps).collect();
        write!(out, "| α | M_n |")?;
        for n in &steps {
            write!(out, " N={n} |")?;
        }
        writeln!(out)?;
        write!(out, "|---|---|")?;
        for _ in &steps {
            write!(out, "---|")?;
        }
        writeln!(out)?;
        let mut last_alpha = None;
        for (alpha, label) in self.rows() {
            let cells = self.row(alpha, &label);
            let shown = if last_alpha == Some(alpha) { String::new() } else { alpha.to_string() };
            last_alpha = Some(alpha);
            write!(out, "| {shown} | {label} |")?;
            for n in &steps {
                match cells.iter().find(|c| c.steps == *n) {
                    Some(c) => write!(out, " {:.2e} |", c.error)?,
                    None => write!(out, " |")?,
                }
            }
            writeln!(out)?;
            write!(out, "| | |")?;
            let rates = self.rates(alpha, &label);
            for n in &steps {
                match rates.iter().find(|(m, _)| m == n) {
                    Some((_, r)) => write!(out, " {r:.2} |")?,
                    None => write!(out, " |")?,
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(alpha: f64, row: &str, steps: usize, error: f64) -> Cell {
        Cell { alpha, row: row.into(), steps, error, iterations: 0, wall_time: Duration::ZERO }
    }

    fn csv(t: &ErrorTable) -> String {
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(csv(&ErrorTable::default()), "alpha,row_label,N,eN,rate\n");
    }

    #[test]
    fn single_cell_has_empty_rate() {
        let mut t = ErrorTable::default();
        t.push(cell(0.5, "exact", 10, 1.234567e-3));
        assert_eq!(csv(&t), "alpha,row_label,N,eN,rate\n0.5,exact,10,1.23457e-3,\n");
    }

    #[test]
    fn rates_follow_printed_errors() {
        let mut t = ErrorTable::new(vec!["seed=1".into()]);
        t.push(cell(0.2, "fixed:1", 20, 2.0e-3));
        t.push(cell(0.2, "fixed:1", 10, 4.0e-3));
        let text = csv(&t);
        assert!(text.starts_with("# seed=1\n"));
        assert!(text.ends_with("0.2,fixed:1,20,2.00000e-3,1.0000000000\n"));
        assert_eq!(t.rates(0.2, "fixed:1"), vec![(20, 1.0)]);
    }

    #[test]
    fn labels_with_commas_are_quoted() {
        let mut t = ErrorTable::default();
        t.push(cell(0.8, "log:3,0", 10, 1.0));
        assert!(csv(&t).ends_with("0.8,\"log:3,0\",10,1.00000e0,\n"));
    }

    #[test]
    fn markdown_has_rate_lines() {
        let mut t = ErrorTable::default();
        t.push(cell(0.8, "exact", 10, 4.0e-3));
        t.push(cell(0.8, "exact", 20, 1.0e-3));
        let mut buf = Vec::new();
        t.write_markdown(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("| 0.8 | exact | 4.00e-3 | 1.00e-3 |"));
        assert!(text.contains("| | | | 2.00 |"));
    }
}
