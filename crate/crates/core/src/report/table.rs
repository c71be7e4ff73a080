use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Real(f64),
    Empty,
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Self::Text(s.into())
    }

    pub fn int(n: usize) -> Self {
        Self::Int(n as i64)
    }

    pub fn opt(v: Option<f64>) -> Self {
        v.map_or(Self::Empty, Self::Real)
    }

    /// Exact rendering used in CSV output: shortest round-trip decimal.
    pub fn render(&self) -> String {
        match self {
            Self::Text(s) => s.clone(),
            Self::Int(n) => n.to_string(),
            Self::Real(v) if v.is_nan() => "nan".into(),
            Self::Real(v) if v.is_infinite() => if *v > 0.0 { "inf" } else { "-inf" }.into(),
            Self::Real(v) => format!("{v}"),
            Self::Empty => String::new(),
        }
    }

    /// Rounded rendering for the summary.
    pub fn pretty(&self) -> String {
        match self {
            Self::Real(v) if v.is_finite() && *v != 0.0 && v.abs() < 1e-3 => format!("{v:.2e}"),
            Self::Real(v) if v.is_finite() => format!("{v:.3}"),
            other => other.render(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Real(v) => Some(*v),
            Self::Int(n) => Some(*n as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Self::Text(s) => Some(s),
            _ => None,
        }
    }
}

/// A named report table. Every row has one cell per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// First row whose text cells in `keys` columns equal the given values.
    pub fn find(&self, keys: &[(&str, &str)]) -> Option<&[Cell]> {
        let idx: Vec<(usize, &str)> = keys
            .iter()
            .map(|(c, v)| self.column(c).map(|i| (i, *v)))
            .collect::<Option<_>>()?;
        self.rows
            .iter()
            .find(|row| idx.iter().all(|(i, v)| row[*i].render() == *v))
            .map(Vec::as_slice)
    }

    /// Cell in `column` of the row matched by `keys`.
    pub fn value(&self, keys: &[(&str, &str)], column: &str) -> Option<&Cell> {
        let c = self.column(column)?;
        self.find(keys).map(|row| &row[c])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush().map_err(|e| Error::io(format!("<{}>", self.name), e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    /// Fixed-width text rendering with rounded numbers.
    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(Cell::pretty).collect())
            .collect();
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|c| {
                cells
                    .iter()
                    .map(|r| r[c].chars().count())
                    .chain(std::iter::once(self.columns[c].chars().count()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |row: &[String]| {
            row.iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&self.columns);
        out.push('\n');
        for r in &cells {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_lookup() {
        let mut t = Table::new("t", &["model", "x"]);
        t.push(vec![Cell::text("a,b"), Cell::Real(0.1)]);
        t.push(vec![Cell::text("c"), Cell::Real(f64::INFINITY)]);
        assert_eq!(t.to_csv_string().unwrap(), "model,x\n\"a,b\",0.1\nc,inf\n");
        assert_eq!(t.value(&[("model", "c")], "x"), Some(&Cell::Real(f64::INFINITY)));
        assert_eq!(Cell::Real(1.0 / 3.0).pretty(), "0.333");
        assert_eq!(Cell::Real(3.97e-24).pretty(), "3.97e-24");
    }
}
