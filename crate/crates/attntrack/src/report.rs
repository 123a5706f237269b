//! Evaluation reports: an aligned text table and a CSV file, one row per
//! sequence plus an `ALL` row aggregated from the summed counts.

use std::fmt::Write as _;

use attntrack_core::metrics::MetricReport;

pub const COLUMNS: [&str; 7] = ["MOTA", "IDF1", "MT", "ML", "FP", "FN", "ID Sw."];

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub seed: u64,
    pub rows: Vec<(String, MetricReport)>,
}

impl Report {
    pub fn new(seed: u64, rows: Vec<(String, MetricReport)>) -> Self {
        Self { seed, rows }
    }

    pub fn overall(&self) -> MetricReport {
        let all: Vec<MetricReport> = self.rows.iter().map(|(_, r)| *r).collect();
        MetricReport::aggregate(&all)
    }

    fn all_rows(&self) -> Vec<(String, MetricReport)> {
        let mut rows = self.rows.clone();
        rows.push(("ALL".to_string(), self.overall()));
        rows
    }

    /// MOTA and IDF1 in percent with one decimal.
    pub fn to_table(&self) -> String {
        let rows = self.all_rows();
        let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Sequence".len());
        let mut s = format!("# seed={}\n{:<name_w$}", self.seed, "Sequence");
        for c in COLUMNS {
            write!(s, " {c:>7}").unwrap();
        }
        s.push('\n');
        for (name, r) in rows {
            write!(
                s,
                "{:<name_w$} {:>7.1} {:>7.1} {:>7} {:>7} {:>7} {:>7} {:>7}",
                name,
                100.0 * r.mota,
                100.0 * r.idf1,
                r.mt,
                r.ml,
                r.fp,
                r.fn_,
                r.id_switches
            )
            .unwrap();
            s.push('\n');
        }
        s
    }

    /// MOTA and IDF1 as fractions with six decimals.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# seed={}\nsequence,{}\n", self.seed, COLUMNS.join(","));
        for (name, r) in self.all_rows() {
            writeln!(
                s,
                "{},{:.6},{:.6},{},{},{},{},{}",
                name, r.mota, r.idf1, r.mt, r.ml, r.fp, r.fn_, r.id_switches
            )
            .unwrap();
        }
        s
    }
}
