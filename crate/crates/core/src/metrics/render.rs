use serde::Serialize;

use super::{Metric, MetricReport};

/// Column order of the text table.
pub const TABLE_COLUMNS: [&str; 14] = [
    "VYR", "TIHR", "WHR", "SCSI", "HRR", "HSR", "TIB", "ICR", "SGLI", "TLSR", "ASLSR", "AALSR",
    "SRLSR", "Overall",
];

enum Style {
    /// Fraction shown as a percentage with one decimal.
    Percent,
    /// Already a percentage.
    Raw1,
    Raw(usize),
}

fn cells(report: &MetricReport) -> Vec<(&'static str, &Metric, Style)> {
    let l1 = &report.layer1;
    let l2 = &report.layer2;
    let mut out = vec![
        ("VYR", &l1.vyr, Style::Percent),
        ("TIHR", &l1.tihr, Style::Percent),
        ("WHR", &l2.whr, Style::Percent),
        ("SCSI", &l2.scsi, Style::Raw(2)),
        ("HRR", &l1.hrr, Style::Percent),
        ("HSR", &l2.hsr, Style::Raw1),
        ("TIB", &l1.tib, Style::Percent),
        ("ICR", &l1.icr, Style::Percent),
        ("SGLI", &l1.sgli, Style::Raw(3)),
    ];
    for l in &report.layer3 {
        out.push((l.index_name(), &l.t, Style::Raw(2)));
    }
    out.push(("Overall", &report.overall, Style::Percent));
    out
}

fn format_cell(m: &Metric, style: &Style) -> String {
    match m {
        Metric::Undefined(_) => "n/a".to_string(),
        Metric::Infinite { positive: true } => "inf".to_string(),
        Metric::Infinite { positive: false } => "-inf".to_string(),
        Metric::Value(v) => match style {
            Style::Percent => format!("{:.1}", v * 100.0),
            Style::Raw1 => format!("{v:.1}"),
            Style::Raw(p) => format!("{v:.p$}"),
        },
    }
}

/// Plain-text table, one row for the model, followed by the reasons for any
/// undefined column. Load-sensitivity columns show the t statistic.
pub fn render_table(model_id: &str, report: &MetricReport) -> String {
    let cells = cells(report);
    let model_width = model_id.chars().count().max("Model".len());
    let widths: Vec<usize> = cells
        .iter()
        .map(|(name, m, style)| name.len().max(format_cell(m, style).chars().count()))
        .collect();

    let pad = |s: &str, w: usize| format!("{}{s}", " ".repeat(w.saturating_sub(s.chars().count())));
    let mut header = format!("{:<model_width$}", "Model");
    let mut row = format!("{model_id:<model_width$}");
    for ((name, m, style), w) in cells.iter().zip(&widths) {
        header.push_str("  ");
        header.push_str(&pad(name, *w));
        row.push_str("  ");
        row.push_str(&pad(&format_cell(m, style), *w));
    }
    let mut out = format!("{header}\n{row}\n");
    for (name, m, _) in &cells {
        if let Some(reason) = m.reason() {
            out.push_str(&format!("{name}: undefined ({reason})\n"));
        }
    }
    out
}

#[derive(Serialize)]
struct Document<'a> {
    model_id: &'a str,
    report: &'a MetricReport,
}

/// Full-precision structured report.
pub fn render_json(model_id: &str, report: &MetricReport) -> String {
    let mut s = serde_json::to_string_pretty(&Document { model_id, report })
        .expect("report values are finite");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{full_report, MetricInput};

    #[test]
    fn empty_report_renders_dashes() {
        let r = full_report(&MetricInput::new(Vec::new()).unwrap());
        let t = render_table("m", &r);
        let lines: Vec<&str> = t.lines().collect();
        let header: Vec<&str> = lines[0].split_whitespace().collect();
        assert_eq!(&header[1..], &TABLE_COLUMNS);
        assert_eq!(lines[1].matches("n/a").count(), 14);
        assert!(t.contains("HRR: undefined (no contradictory samples)"));
        let j: serde_json::Value = serde_json::from_str(&render_json("m", &r)).unwrap();
        assert_eq!(j["report"]["layer1"]["hrr"]["undefined"], "no contradictory samples");
    }

    #[test]
    fn formatting() {
        assert_eq!(format_cell(&Metric::Value(0.771), &Style::Percent), "77.1");
        assert_eq!(format_cell(&Metric::Value(-0.046), &Style::Percent), "-4.6");
        assert_eq!(format_cell(&Metric::Value(0.8194), &Style::Raw(3)), "0.819");
        assert_eq!(format_cell(&Metric::Infinite { positive: false }, &Style::Raw(2)), "-inf");
    }
}
