//! Experiment results as CSV and aligned text tables.

use std::collections::BTreeMap;

use super::spec::{Method, Regime, View};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Cell,
    Mean,
}

impl RowKind {
    fn as_str(self) -> &'static str {
        match self {
            Self::Cell => "cell",
            Self::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub kind: RowKind,
    pub dataset: String,
    /// Sweep parameter (imbalance ratio or fraction), if any.
    pub param: Option<f64>,
    pub view: View,
    pub model: String,
    pub partner: String,
    pub method: Method,
    pub seed: Option<u64>,
    pub accuracy: f64,
    pub stddev: Option<f64>,
    pub orig_dim: usize,
    pub proj_dim: usize,
    pub realized_ratio: Option<f64>,
    pub rank_warning: bool,
}

impl ReportRow {
    /// `(proj − orig) / orig`.
    pub fn dim_delta(&self) -> f64 {
        (self.proj_dim as f64 - self.orig_dim as f64) / self.orig_dim as f64
    }

    fn group_key(&self) -> (String, Option<u64>, View, Method) {
        (self.dataset.clone(), self.param.map(f64::to_bits), self.view, self.method)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub name: String,
    pub regime: Regime,
    /// Ordered `key: value` pairs written ahead of the table.
    pub provenance: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
}

pub const CSV_COLUMNS: [&str; 15] = [
    "kind",
    "dataset",
    "param",
    "view",
    "model",
    "partner",
    "method",
    "seed",
    "accuracy",
    "stddev",
    "orig_dim",
    "proj_dim",
    "dim_delta",
    "realized_ratio",
    "rank_warning",
];

fn mean_and_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn parse_opt<T: std::str::FromStr>(s: &str, column: &str) -> Result<Option<T>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Csv(format!("bad value {s:?} in column {column}")))
}

fn parse_req<T: std::str::FromStr>(s: &str, column: &str) -> Result<T> {
    parse_opt(s, column)?.ok_or_else(|| Error::Csv(format!("missing value in column {column}")))
}

/// Percent with two decimals.
pub fn format_accuracy(a: f64) -> String {
    format!("{:.2}%", a * 100.0)
}

/// Whole percentages print without decimals (`-75%`), the rest with one
/// decimal rounded half away from zero (`-81.3%`).
pub fn format_dim_delta(delta: f64) -> String {
    let pct = delta * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}%", pct.round() as i64)
    } else {
        format!("{:.1}%", (pct * 10.0).round() / 10.0)
    }
}

impl Report {
    pub fn new(name: impl Into<String>, regime: Regime) -> Self {
        Self {
            name: name.into(),
            regime,
            provenance: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn provenance(&mut self, key: impl Into<String>, value: impl ToString) {
        self.provenance.push((key.into(), value.to_string()));
    }

    /// Appends one mean row per (dataset, param, view, method) over the cell
    /// rows, in order of first appearance.
    pub fn aggregate(&mut self) {
        let mut order = Vec::new();
        let mut groups: BTreeMap<_, Vec<&ReportRow>> = BTreeMap::new();
        for row in self.rows.iter().filter(|r| r.kind == RowKind::Cell) {
            let key = row.group_key();
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            groups.entry(key).or_default().push(row);
        }
        let means: Vec<ReportRow> = order
            .iter()
            .map(|key| {
                let members = &groups[key];
                let acc: Vec<f64> = members.iter().map(|r| r.accuracy).collect();
                let (mean, sd) = mean_and_stddev(&acc);
                ReportRow {
                    kind: RowKind::Mean,
                    seed: None,
                    accuracy: mean,
                    stddev: Some(sd),
                    rank_warning: members.iter().any(|r| r.rank_warning),
                    ..members[0].clone()
                }
            })
            .collect();
        self.rows.extend(means);
    }

    pub fn cells(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.kind == RowKind::Cell)
    }

    pub fn means(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.kind == RowKind::Mean)
    }

    pub fn mean(&self, dataset: &str, param: Option<f64>, view: View, method: Method) -> Option<&ReportRow> {
        self.means()
            .find(|r| r.dataset == dataset && r.param == param && r.view == view && r.method == method)
    }

    fn param_label(&self) -> Option<&'static str> {
        match self.regime {
            Regime::ImbalanceSweep => Some("Ratio"),
            Regime::FractionSweep => Some("Fraction"),
            _ => None,
        }
    }

    fn provenance_block(&self) -> String {
        let mut out = format!("# report: {}\n# regime: {}\n", self.name, self.regime);
        for (k, v) in &self.provenance {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out
    }

    /// Provenance as `#` lines, then a header and one record per row.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut out = self.provenance_block().into_bytes();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.kind.as_str().to_string(),
                r.dataset.clone(),
                opt(r.param),
                r.view.to_string(),
                r.model.clone(),
                r.partner.clone(),
                r.method.to_string(),
                opt(r.seed),
                r.accuracy.to_string(),
                opt(r.stddev),
                r.orig_dim.to_string(),
                r.proj_dim.to_string(),
                r.dim_delta().to_string(),
                opt(r.realized_ratio),
                r.rank_warning.to_string(),
            ])
            .expect("in-memory write");
        }
        out.extend(w.into_inner().expect("in-memory flush"));
        out
    }

    /// Fixed-width table of mean accuracies, one line per (dataset, param,
    /// view), preceded by the provenance block.
    pub fn to_text(&self) -> String {
        let multi_dataset = {
            let mut names: Vec<&str> = self.rows.iter().map(|r| r.dataset.as_str()).collect();
            names.dedup();
            names.len() > 1
        };
        let mut header: Vec<String> = Vec::new();
        if multi_dataset {
            header.push("Dataset".into());
        }
        if let Some(label) = self.param_label() {
            header.push(label.into());
        }
        header.extend(
            ["Model", "CCA Partner", "Baseline", "PCA", "CCA", "Orig. Dim.", "Proj. Dim.", "Dim. Δ"]
                .map(String::from),
        );

        let mut lines: Vec<Vec<String>> = Vec::new();
        let mut seen: Vec<(String, Option<u64>, View)> = Vec::new();
        for row in self.means() {
            let key = (row.dataset.clone(), row.param.map(f64::to_bits), row.view);
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let get = |m| self.mean(&row.dataset, row.param, row.view, m);
            let projected = get(Method::Cca).or(get(Method::Pca));
            let mut line = Vec::new();
            if multi_dataset {
                line.push(row.dataset.clone());
            }
            if self.param_label().is_some() {
                line.push(opt(row.param));
            }
            line.push(row.model.clone());
            line.push(if row.partner.is_empty() { "-".into() } else { row.partner.clone() });
            for m in Method::ALL {
                line.push(get(m).map(|r| format_accuracy(r.accuracy)).unwrap_or_else(|| "-".into()));
            }
            line.push(row.orig_dim.to_string());
            line.push(projected.map(|r| r.proj_dim.to_string()).unwrap_or_else(|| "-".into()));
            line.push(projected.map(|r| format_dim_delta(r.dim_delta())).unwrap_or_else(|| "-".into()));
            lines.push(line);
        }

        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                std::iter::once(&header)
                    .chain(&lines)
                    .map(|l| l[c].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let render = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            format!("| {} |\n", padded.join(" | "))
        };
        let rule = format!(
            "|{}|\n",
            widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|")
        );
        let mut out = self.provenance_block();
        out.push_str(&render(&header));
        out.push_str(&rule);
        for line in &lines {
            out.push_str(&render(line));
        }
        out
    }
}

/// Parses the rows of a CSV produced by [`Report::to_csv`].
pub fn parse_csv(bytes: &[u8]) -> Result<Vec<ReportRow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
    let header = r.headers().map_err(|e| Error::Csv(e.to_string()))?;
    if header.iter().ne(CSV_COLUMNS) {
        return Err(Error::Csv(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let rec = record.map_err(|e| Error::Csv(e.to_string()))?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let kind = match f(0) {
            "cell" => RowKind::Cell,
            "mean" => RowKind::Mean,
            other => return Err(Error::Csv(format!("unknown row kind {other:?}"))),
        };
        rows.push(ReportRow {
            kind,
            dataset: f(1).to_string(),
            param: parse_opt(f(2), "param")?,
            view: f(3).parse().map_err(|_| Error::Csv(format!("bad view {:?}", f(3))))?,
            model: f(4).to_string(),
            partner: f(5).to_string(),
            method: f(6).parse().map_err(|_| Error::Csv(format!("bad method {:?}", f(6))))?,
            seed: parse_opt(f(7), "seed")?,
            accuracy: parse_req(f(8), "accuracy")?,
            stddev: parse_opt(f(9), "stddev")?,
            orig_dim: parse_req(f(10), "orig_dim")?,
            proj_dim: parse_req(f(11), "proj_dim")?,
            realized_ratio: parse_opt(f(13), "realized_ratio")?,
            rank_warning: parse_req(f(14), "rank_warning")?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementRow {
    pub dataset: String,
    pub backbone: String,
    pub partner: String,
    pub param_ratio: f64,
    /// Mean CCA accuracy minus mean baseline accuracy for the backbone.
    pub delta: f64,
}

/// CCA-over-baseline gain per (backbone, partner) pair, sorted by the
/// backbone/partner parameter ratio.
pub fn improvement_table(reports: &[Report], param_counts: &BTreeMap<String, f64>) -> Result<Vec<ImprovementRow>> {
    if let Some(first) = reports.first() {
        if let Some(other) = reports.iter().find(|r| r.regime != first.regime) {
            return Err(Error::InvalidArgument(format!(
                "reports mix regimes {} and {}",
                first.regime, other.regime
            )));
        }
    }
    let count = |model: &str| {
        param_counts
            .get(model)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("missing parameter count for model {model:?}")))
    };
    let mut out = Vec::new();
    for report in reports {
        for cca in report.means().filter(|r| r.method == Method::Cca && r.param.is_none()) {
            let Some(base) = report.mean(&cca.dataset, None, cca.view, Method::Baseline) else {
                continue;
            };
            out.push(ImprovementRow {
                dataset: cca.dataset.clone(),
                backbone: cca.model.clone(),
                partner: cca.partner.clone(),
                param_ratio: count(&cca.model)? / count(&cca.partner)?,
                delta: cca.accuracy - base.accuracy,
            });
        }
    }
    out.sort_by(|a, b| {
        a.param_ratio
            .total_cmp(&b.param_ratio)
            .then_with(|| a.backbone.cmp(&b.backbone))
            .then_with(|| a.partner.cmp(&b.partner))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(method: Method, seed: u64, accuracy: f64, orig: usize, proj: usize) -> ReportRow {
        ReportRow {
            kind: RowKind::Cell,
            dataset: "d".into(),
            param: None,
            view: View::X,
            model: "vit_b".into(),
            partner: "vit_t".into(),
            method,
            seed: Some(seed),
            accuracy,
            stddev: None,
            orig_dim: orig,
            proj_dim: proj,
            realized_ratio: None,
            rank_warning: false,
        }
    }

    fn sample() -> Report {
        let mut r = Report::new("t", Regime::ReduceDim);
        r.provenance("epsilon_rel", 1e-6);
        for seed in 0..3 {
            r.rows.push(cell(Method::Baseline, seed, 0.6 + 0.01 * seed as f64, 768, 768));
            r.rows.push(cell(Method::Pca, seed, 0.1 / 3.0 + seed as f64, 768, 192));
            r.rows.push(cell(Method::Cca, seed, 0.7, 768, 192));
        }
        r.aggregate();
        r
    }

    #[test]
    fn aggregates_mean_and_sample_stddev() {
        let r = sample();
        let base = r.mean("d", None, View::X, Method::Baseline).unwrap();
        assert!((base.accuracy - 0.61).abs() < 1e-12);
        assert!((base.stddev.unwrap() - 0.01).abs() < 1e-12);
        assert!(r.mean("d", None, View::X, Method::Cca).unwrap().stddev.unwrap() < 1e-15);
        assert_eq!(r.means().count(), 3);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let r = sample();
        let bytes = r.to_csv();
        assert_eq!(parse_csv(&bytes).unwrap(), r.rows);
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("# report: t\n# regime: reduce_dim\n# epsilon_rel: 0.000001\n"));
    }

    #[test]
    fn empty_report_is_header_only() {
        let r = Report::new("e", Regime::ReduceDim);
        let text = String::from_utf8(r.to_csv()).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body, vec![CSV_COLUMNS.join(",")]);
        assert!(parse_csv(text.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn text_table_columns() {
        let text = sample().to_text();
        let header = text.lines().find(|l| l.starts_with("| Model")).unwrap();
        let cols: Vec<&str> = header.trim_matches('|').split('|').map(str::trim).collect();
        assert_eq!(
            cols,
            ["Model", "CCA Partner", "Baseline", "PCA", "CCA", "Orig. Dim.", "Proj. Dim.", "Dim. Δ"]
        );
        let row = text.lines().last().unwrap();
        assert!(row.contains("61.00%") && row.contains("70.00%") && row.contains("-75%"), "{row}");
    }

    #[test]
    fn dim_delta_formatting() {
        assert_eq!(format_dim_delta(-0.75), "-75%");
        assert_eq!(format_dim_delta(-0.25), "-25%");
        assert_eq!(format_dim_delta(-0.8125), "-81.3%");
        assert_eq!(format_dim_delta(-0.625), "-62.5%");
        assert_eq!(format_dim_delta(0.0), "0%");
        assert_eq!(format_accuracy(0.7580), "75.80%");
    }

    #[test]
    fn rejects_malformed_csv() {
        assert!(parse_csv(b"a,b\n1,2\n").is_err());
        let mut bytes = sample().to_csv();
        bytes.extend_from_slice(b"cell,d,,z,m,p,cca,0,0.5,,4,2,-0.5,,false\n");
        assert!(parse_csv(&bytes).is_err());
    }

    #[test]
    fn improvement_rows() {
        let counts: BTreeMap<String, f64> =
            [("vit_b".to_string(), 86.6), ("vit_t".to_string(), 5.7)].into_iter().collect();
        let rows = improvement_table(&[sample()], &counts).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].delta - 0.09).abs() < 1e-12);
        assert!((rows[0].param_ratio - 86.6 / 5.7).abs() < 1e-12);

        let mut same = sample();
        for r in &mut same.rows {
            r.accuracy = 0.5;
        }
        assert!(improvement_table(&[same.clone()], &counts).unwrap().iter().all(|r| r.delta == 0.0));
        assert!(improvement_table(&[same], &BTreeMap::new()).is_err());
    }
}
