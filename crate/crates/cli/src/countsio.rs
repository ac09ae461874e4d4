//! Counts CSV: `interval,t_lower,t_upper,stress,count` with `#`-prefixed
//! header comments echoing the design, survivors row last with upper bound
//! `inf`. Self-describing, so a dataset can be sanity-checked against the
//! config it is fitted under.

use std::io::Write;
use std::path::Path;

use stepstress::{GroupedCounts, StepStressDesign};

use crate::config::ExperimentConfig;
use crate::CliError;

pub fn write_counts(
    path: &Path,
    config: &ExperimentConfig,
    design: &StepStressDesign,
    counts: &GroupedCounts,
    seed: u64,
) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str("# stepstress counts v1\n");
    out.push_str(&format!("# baseline: {}\n", config.baseline));
    out.push_str(&format!("# x1: {}\n", design.x1()));
    out.push_str(&format!("# x2: {}\n", design.x2()));
    out.push_str(&format!("# tau: {}\n", design.tau()));
    out.push_str(&format!("# n_units: {}\n", design.n_units()));
    out.push_str(&format!("# seed: {seed}\n"));
    out.push_str("interval,t_lower,t_upper,stress,count\n");
    let times = design.inspection_times();
    let mut lower = 0.0;
    for (j, &upper) in times.iter().enumerate() {
        let stress = if upper <= design.tau() {
            design.x1()
        } else {
            design.x2()
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            j + 1,
            lower,
            upper,
            stress,
            counts.counts()[j]
        ));
        lower = upper;
    }
    out.push_str(&format!(
        "{},{},inf,{},{}\n",
        times.len() + 1,
        lower,
        design.x2(),
        counts.counts()[times.len()]
    ));
    let mut file = std::fs::File::create(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    file.write_all(out.as_bytes())
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Read a counts CSV and cross-check it against the design.
pub fn read_counts(path: &Path, design: &StepStressDesign) -> Result<GroupedCounts, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        .clone();
    let expected = ["interval", "t_lower", "t_upper", "stress", "count"];
    if headers.iter().ne(expected) {
        return Err(CliError::Validation(format!(
            "{}: header must be `{}`, got `{}`",
            path.display(),
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let times = design.inspection_times();
    let mut counts = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record =
            record.map_err(|e| CliError::Validation(format!("{} row {row}: {e}", path.display())))?;
        if record.len() != 5 {
            return Err(CliError::Validation(format!(
                "{} row {row}: expected 5 fields, got {}",
                path.display(),
                record.len()
            )));
        }
        let field = |i: usize| record.get(i).unwrap_or("");
        let interval: usize = field(0).parse().map_err(|_| {
            CliError::Validation(format!(
                "{} row {row}: interval `{}` is not an integer",
                path.display(),
                field(0)
            ))
        })?;
        if interval != row {
            return Err(CliError::Validation(format!(
                "{} row {row}: interval index {interval} out of order",
                path.display()
            )));
        }
        let upper_text = field(2);
        let upper: f64 = if upper_text == "inf" {
            f64::INFINITY
        } else {
            upper_text.parse().map_err(|_| {
                CliError::Validation(format!(
                    "{} row {row}: t_upper `{upper_text}` is not a number",
                    path.display()
                ))
            })?
        };
        // Interval bounds must match the design's inspection grid.
        if row <= times.len() {
            let expect = times[row - 1];
            if !((upper - expect).abs() <= 1e-9 * expect.abs().max(1.0)) {
                return Err(CliError::Validation(format!(
                    "{} row {row}: t_upper {upper} does not match inspection time {expect}",
                    path.display()
                )));
            }
        } else if row == times.len() + 1 {
            if upper.is_finite() {
                return Err(CliError::Validation(format!(
                    "{} row {row}: survivors row must have t_upper = inf",
                    path.display()
                )));
            }
        } else {
            return Err(CliError::Validation(format!(
                "{} row {row}: more rows than the design's {} cells",
                path.display(),
                design.n_cells()
            )));
        }
        let count: u64 = field(4).parse().map_err(|_| {
            CliError::Validation(format!(
                "{} row {row}: count `{}` is not a nonnegative integer",
                path.display(),
                field(4)
            ))
        })?;
        counts.push(count);
    }
    if counts.len() != design.n_cells() {
        return Err(CliError::Validation(format!(
            "{}: found {} rows but the design has {} cells",
            path.display(),
            counts.len(),
            design.n_cells()
        )));
    }
    let grouped = GroupedCounts::new(counts)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    grouped
        .validate_for(design)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok(grouped)
}
