//! Two-sample metrics and the metrics CSV format.
//!
//! Energy distance stands in for feature-space metrics that need a
//! pretrained embedding network: it is a proper metric on distributions,
//! cheap at desk scale, and has a Gaussian closed form for oracle tests.

use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::checkpoint::write_atomic;
use crate::training::MetricsRecord;

fn check_sets(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<usize> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(
            "energy distance needs two nonempty sample sets".into(),
        ));
    }
    let dim = a[0].len();
    for (name, set) in [("first", a), ("second", b)] {
        for x in set {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: format!("energy distance, {name} set"),
                    expected: dim,
                    actual: x.len(),
                });
            }
        }
    }
    Ok(dim)
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn mean_within(set: &[Vec<f64>]) -> f64 {
    let n = set.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += dist(&set[i], &set[j]);
        }
    }
    2.0 * sum / (n as f64 * (n - 1) as f64)
}

/// Energy distance `2 E||A-B|| - E||A-A'|| - E||B-B'||` with U-statistic
/// within-set terms (all unordered pairs) and the full cross product between
/// sets. Unbiased for the population quantity; can be slightly negative on
/// finite samples from the same distribution.
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    check_sets(a, b)?;
    let mut cross = 0.0;
    for x in a {
        for y in b {
            cross += dist(x, y);
        }
    }
    cross /= (a.len() * b.len()) as f64;
    Ok(2.0 * cross - mean_within(a) - mean_within(b))
}

/// Variant for equal-size sets that drops the diagonal of the cross term as
/// well, so two identical multisets score exactly zero rather than zero in
/// expectation.
pub fn energy_distance_paired(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    check_sets(a, b)?;
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired energy distance needs equal set sizes, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "paired energy distance needs at least 2 samples per set".into(),
        ));
    }
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                cross += dist(&a[i], &b[j]);
            }
        }
    }
    cross /= (n * (n - 1)) as f64;
    Ok(2.0 * cross - mean_within(a) - mean_within(b))
}

/// Write the metrics trail as CSV (atomically, so a crashed run never leaves
/// a half-written file).
pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut text = String::from(MetricsRecord::CSV_HEADER);
    text.push('\n');
    for r in records {
        text.push_str(&r.to_csv_row());
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}
