use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use crate::ee_model::{IsoWeek, SurveillanceSeries};
use crate::error::{Error, Result};

/// Reads weekly counts from a CSV with header `year,week,<group>...`.
/// `groups` selects and orders a subset of the group columns.
pub fn ingest_csv(path: impl AsRef<Path>, groups: Option<&[String]>) -> Result<SurveillanceSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    ingest_reader(file, &path.display().to_string(), groups)
}

/// Same as [`ingest_csv`] for any reader; `name` labels error messages.
pub fn ingest_reader<R: Read>(
    reader: R,
    name: &str,
    groups: Option<&[String]>,
) -> Result<SurveillanceSeries> {
    let err = |line: usize, message: String| Error::Data {
        path: name.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[0] != "year" || header[1] != "week" {
        return Err(err(1, "header must be `year,week,<group>...`".into()));
    }
    let all_labels = &header[2..];
    let mut seen = HashSet::new();
    if let Some(dup) = all_labels.iter().find(|l| !seen.insert(l.as_str())) {
        return Err(err(1, format!("duplicate group column '{dup}'")));
    }
    let columns: Vec<usize> = match groups {
        None => (0..all_labels.len()).collect(),
        Some(sel) => sel
            .iter()
            .map(|s| {
                all_labels
                    .iter()
                    .position(|l| l == s)
                    .ok_or_else(|| err(1, format!("no column for group '{s}'")))
            })
            .collect::<Result<_>>()?,
    };
    if columns.is_empty() {
        return Err(err(1, "no groups selected".into()));
    }
    let labels: Vec<String> = columns.iter().map(|c| all_labels[*c].clone()).collect();

    let mut weeks: Vec<IsoWeek> = Vec::new();
    let mut counts: Vec<Vec<u64>> = vec![Vec::new(); columns.len()];
    let mut seen_weeks = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(err(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let year: i32 = rec[0]
            .parse()
            .map_err(|_| err(line, format!("cannot parse year '{}'", &rec[0])))?;
        let wk: u32 = rec[1]
            .parse()
            .map_err(|_| err(line, format!("cannot parse week '{}'", &rec[1])))?;
        let week = IsoWeek::new(year, wk).map_err(|e| err(line, e.to_string()))?;
        if !seen_weeks.insert(week) {
            return Err(err(line, format!("duplicate week {week}")));
        }
        if let Some(prev) = weeks.last() {
            if week != prev.next() {
                let message = if week < *prev {
                    format!("week {week} out of order after {prev}")
                } else {
                    format!("gap in weeks: {} to {} missing", prev.next(), week.plus(-1))
                };
                return Err(err(line, message));
            }
        }
        for (slot, c) in counts.iter_mut().zip(&columns) {
            let field = &rec[c + 2];
            let value: i64 = field.parse().map_err(|_| {
                err(
                    line,
                    format!(
                        "cannot parse count '{field}' in column '{}'",
                        all_labels[*c]
                    ),
                )
            })?;
            if value < 0 {
                return Err(err(
                    line,
                    format!("negative count {value} in column '{}'", all_labels[*c]),
                ));
            }
            slot.push(value as u64);
        }
        weeks.push(week);
    }
    SurveillanceSeries::new(counts, weeks, labels, None)
}
