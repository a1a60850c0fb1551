//! Summary emission: a CSV and a human-readable table that mirror each
//! other value for value, in a deterministic column order.

/// A rectangular summary: header plus rows of already-formatted cells.
#[derive(Debug, Clone)]
pub struct Summary {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Summary {
    pub fn new(header: &[&str]) -> Summary {
        Summary {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Space-aligned table carrying exactly the CSV's values.
    pub fn to_table(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let emit = |out: &mut String, cells: &[String]| {
            let line: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        };
        emit(&mut out, &self.header);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&rule.join("  "));
        out.push('\n');
        for row in &self.rows {
            emit(&mut out, row);
        }
        out
    }
}

/// Render an f64 for a report cell. Uses the shortest round-trip form, so
/// identical values always produce identical bytes.
pub fn cell(v: f64) -> String {
    v.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_table_mirror_each_other() {
        let mut s = Summary::new(&["seed", "value"]);
        s.push(vec!["1".into(), cell(0.5)]);
        s.push(vec!["2".into(), cell(1.0)]);
        let csv = s.to_csv();
        assert_eq!(csv, "seed,value\n1,0.5\n2,1\n");
        let table = s.to_table();
        for row in csv.lines().skip(1) {
            for value in row.split(',') {
                assert!(table.contains(value), "table missing {value}");
            }
        }
        // Deterministic emission.
        assert_eq!(s.to_csv(), csv);
        assert_eq!(s.to_table(), table);
    }

    #[test]
    fn empty_summary_has_header_only() {
        let s = Summary::new(&["a", "b"]);
        assert_eq!(s.to_csv(), "a,b\n");
    }
}
