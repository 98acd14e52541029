//! CSV output. Floats use Rust's shortest round-trip formatting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::game::RegretReport;
use super::grid::QuantileTable;
use crate::error::{Error, Result};

pub const REPORT_HEADER: &str = "t,algo,seed,loss,avg_loss,regret,bound";
pub const QUANTILE_HEADER: &str = "t,algo,q25,q50,q75";

/// One parsed line of a report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub t: usize,
    pub algo: String,
    pub seed: u64,
    pub loss: f64,
    pub avg_loss: f64,
    pub regret: f64,
    pub bound: f64,
}

pub fn write_reports<W: Write>(reports: &[RegretReport], mut w: W) -> Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in reports {
        let avg = r.average_losses();
        for (t, a) in avg.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{:?},{a:?},{:?},{:?}",
                t + 1,
                r.algo,
                r.seed,
                r.learner_losses[t],
                r.cumulative_regret[t],
                r.bound[t]
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_quantiles<W: Write>(tables: &[QuantileTable], mut w: W) -> Result<()> {
    writeln!(w, "{QUANTILE_HEADER}")?;
    for table in tables {
        for row in &table.rows {
            writeln!(w, "{},{},{:?},{:?},{:?}", row.t, table.algo, row.q25, row.q50, row.q75)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(reports: &[RegretReport], path: impl AsRef<Path>) -> Result<()> {
    write_reports(reports, BufWriter::new(File::create(path)?))
}

pub fn emit_quantiles_csv(tables: &[QuantileTable], path: impl AsRef<Path>) -> Result<()> {
    write_quantiles(tables, BufWriter::new(File::create(path)?))
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, name: &str) -> Result<T> {
    tok.and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
        line,
        message: format!("bad or missing `{name}`"),
    })
}

fn body<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, &'a str)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == header => Ok(lines.map(|(i, l)| (i + 1, l))),
        _ => Err(Error::Parse {
            line: 1,
            message: format!("expected header `{header}`"),
        }),
    }
}

pub fn parse_reports(text: &str) -> Result<Vec<ReportRow>> {
    body(text, REPORT_HEADER)?
        .map(|(line, l)| {
            let mut it = l.split(',');
            Ok(ReportRow {
                t: field(it.next(), line, "t")?,
                algo: field(it.next(), line, "algo")?,
                seed: field(it.next(), line, "seed")?,
                loss: field(it.next(), line, "loss")?,
                avg_loss: field(it.next(), line, "avg_loss")?,
                regret: field(it.next(), line, "regret")?,
                bound: field(it.next(), line, "bound")?,
            })
        })
        .collect()
}

pub fn parse_quantiles(text: &str) -> Result<Vec<(usize, String, [f64; 3])>> {
    body(text, QUANTILE_HEADER)?
        .map(|(line, l)| {
            let mut it = l.split(',');
            Ok((
                field(it.next(), line, "t")?,
                field(it.next(), line, "algo")?,
                [
                    field(it.next(), line, "q25")?,
                    field(it.next(), line, "q50")?,
                    field(it.next(), line, "q75")?,
                ],
            ))
        })
        .collect()
}
