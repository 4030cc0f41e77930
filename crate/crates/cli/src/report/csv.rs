use lerg_core::eval::CorpusReport;
use lerg_core::{Example, ExplanationMatrix, LergError, Result};

use super::{fmt_f64, Stamp};

fn to_io(e: csv::Error) -> LergError {
    LergError::Io(std::io::Error::other(e))
}

fn finish(stamp: &Stamp, writer: csv::Writer<Vec<u8>>) -> Result<String> {
    let body = writer.into_inner().map_err(|e| LergError::Io(std::io::Error::other(e.to_string())))?;
    let body = String::from_utf8(body).map_err(|e| LergError::Io(std::io::Error::other(e)))?;
    Ok(format!("{}{body}", stamp.csv_preamble()))
}

/// `Φ` with one row per context segment and one column per response
/// segment. The first column and header row carry the segment text.
pub fn matrix_csv(stamp: &Stamp, example: &Example, explanation: &ExplanationMatrix) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["segment".to_string()];
    header.extend(example.response.segments().iter().cloned());
    w.write_record(&header).map_err(to_io)?;
    for (i, seg) in example.context.segments().iter().enumerate() {
        let mut row = vec![seg.clone()];
        row.extend(explanation.phi.row(i).iter().map(|&v| fmt_f64(v)));
        w.write_record(&row).map_err(to_io)?;
    }
    finish(stamp, w)
}

/// Reads the numeric body of a [`matrix_csv`] file back.
pub fn parse_matrix_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(to_io)?;
        let row = record
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|e| LergError::Validation(format!("bad number `{v}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Per-example rows `example_id, method, metric, ratio, value` plus the raw
/// sums each value is computed from. Full-input perplexity appears as
/// method `full-input`, metric `ppl`, ratio 1.
pub fn eval_csv(stamp: &Stamp, report: &CorpusReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["example_id", "method", "metric", "ratio", "value", "log_sum", "tokens", "clamped"])
        .map_err(to_io)?;
    for ex in &report.examples {
        w.write_record([
            ex.id.as_str(),
            "full-input",
            "ppl",
            "1",
            &fmt_f64(ex.full.value()),
            &fmt_f64(ex.full.log_sum),
            &ex.full.tokens.to_string(),
            &ex.full.clamped.to_string(),
        ])
        .map_err(to_io)?;
        for curve in &ex.curves {
            for (ratio, p) in curve.ratios.iter().zip(&curve.points) {
                w.write_record([
                    ex.id.as_str(),
                    &curve.label(),
                    curve.metric.name(),
                    &fmt_f64(*ratio),
                    &fmt_f64(p.value()),
                    &fmt_f64(p.log_sum),
                    &p.tokens.to_string(),
                    &p.clamped.to_string(),
                ])
                .map_err(to_io)?;
            }
        }
    }
    finish(stamp, w)
}

/// Corpus aggregates, token-weighted and example-mean.
pub fn aggregate_csv(stamp: &Stamp, report: &CorpusReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "metric",
        "ratio",
        "token_mean",
        "example_mean",
        "log_sum",
        "tokens",
        "clamped",
        "examples",
    ])
    .map_err(to_io)?;
    for agg in &report.aggregates {
        for k in 0..agg.ratios.len() {
            w.write_record([
                agg.label().as_str(),
                agg.metric.name(),
                &fmt_f64(agg.ratios[k]),
                &fmt_f64(agg.token_mean[k]),
                &fmt_f64(agg.example_mean[k]),
                &fmt_f64(agg.log_sums[k]),
                &agg.tokens[k].to_string(),
                &agg.clamped[k].to_string(),
                &agg.examples.to_string(),
            ])
            .map_err(to_io)?;
        }
    }
    finish(stamp, w)
}
