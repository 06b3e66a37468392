//! CSV emission and parsing: comma-separated, header row, `%.10e` numeric
//! formatting, Unix newlines. The format is bit-exact so reproducibility can
//! be checked byte-for-byte.

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    #[allow(dead_code)] // exercised by the round-trip tests
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    #[allow(dead_code)] // exercised by the round-trip tests
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn emit(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_e(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    #[allow(dead_code)] // exercised by the round-trip tests
    pub fn parse(text: &str) -> Result<Table, CliError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| CliError::Config("empty CSV".to_string()))?;
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|cell| {
                    cell.parse::<f64>().map_err(|_| {
                        CliError::Config(format!("CSV row {}: bad number `{cell}`", i + 2))
                    })
                })
                .collect::<Result<_, _>>()?;
            if row.len() != columns.len() {
                return Err(CliError::Config(format!(
                    "CSV row {}: {} cells, expected {}",
                    i + 2,
                    row.len(),
                    columns.len()
                )));
            }
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }
}

/// `%.10e`: ten fractional digits, signed two-digit exponent.
pub fn fmt_e(v: f64) -> String {
    let s = format!("{v:.10e}");
    let (mantissa, exp) = s.split_once('e').expect("exponential format");
    let (sign, digits) = match exp.strip_prefix('-') {
        Some(d) => ('-', d),
        None => ('+', exp),
    };
    format!("{mantissa}e{sign}{digits:0>2}")
}
