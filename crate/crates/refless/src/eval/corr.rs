//! Rank and linear correlation coefficients.

use serde::{Deserialize, Serialize};

use crate::corpus::SystemScoreTable;
use crate::error::{Error, Result};

fn check_paired(x: &[f64], y: &[f64], min_len: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "paired vectors differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min_len {
        return Err(Error::Validation(format!(
            "need at least {min_len} paired observations, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// Sample Pearson correlation. Errors on zero variance in either vector.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check_paired(x, y, 3)?;
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "zero variance in one of the vectors".into(),
        ));
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// Average ranks (ties share the mean of the positions they occupy).
pub(crate) fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) hold equal values; their 1-based
        // ranks average to (i + j)/2 + 1.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_paired(x, y, 3)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    pearson_r(&rx, &ry).map_err(|e| match e {
        Error::UndefinedCorrelation(_) => {
            Error::UndefinedCorrelation("zero rank variance (all values tied)".into())
        }
        other => other,
    })
}

/// Kendall's tau-b: tie-corrected concordance over all pairs.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    check_paired(x, y, 2)?;
    let n = x.len();
    let mut concordant = 0usize;
    let mut discordant = 0usize;
    let mut ties_x = 0usize;
    let mut ties_y = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                // Tied in both: counted in neither correction term.
            } else if dx == 0.0 {
                ties_x += 1;
            } else if dy == 0.0 {
                ties_y += 1;
            } else if dx * dy > 0.0 {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let total = (n * (n - 1) / 2) as f64;
    // Pairs tied in both x and y reduce both denominator factors.
    let both_tied = total - (concordant + discordant + ties_x + ties_y) as f64;
    let denom_x = total - (ties_x as f64 + both_tied);
    let denom_y = total - (ties_y as f64 + both_tied);
    if denom_x <= 0.0 || denom_y <= 0.0 {
        return Err(Error::UndefinedCorrelation(
            "all values tied in one of the vectors".into(),
        ));
    }
    Ok((concordant as f64 - discordant as f64) / (denom_x * denom_y).sqrt())
}

/// The three coefficients reported per (dataset, quality, method).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub rho: f64,
    pub tau: f64,
    pub r: f64,
}

/// Correlate two sets of per-system values matched by system id.
pub fn correlate_scalar(
    pred: &std::collections::BTreeMap<String, f64>,
    gold: &std::collections::BTreeMap<String, f64>,
) -> Result<(Coefficients, usize)> {
    let shared: Vec<&String> = pred.keys().filter(|k| gold.contains_key(*k)).collect();
    if shared.len() < 3 {
        return Err(Error::Validation(format!(
            "need at least 3 shared systems, got {}",
            shared.len()
        )));
    }
    let x: Vec<f64> = shared.iter().map(|k| pred[*k]).collect();
    let y: Vec<f64> = shared.iter().map(|k| gold[*k]).collect();
    Ok((
        Coefficients {
            rho: spearman_rho(&x, &y)?,
            tau: kendall_tau(&x, &y)?,
            r: pearson_r(&x, &y)?,
        },
        shared.len(),
    ))
}

/// Correlate predicted against gold per-system means for one quality.
/// Systems are matched by id (intersection); at least 3 must be shared.
pub fn correlate_systems(
    pred: &SystemScoreTable,
    gold: &SystemScoreTable,
    quality: usize,
) -> Result<(Coefficients, usize)> {
    let pred_col = pred
        .rows
        .iter()
        .map(|(sys, qv)| (sys.clone(), qv.get(quality)))
        .collect();
    let gold_col = gold
        .rows
        .iter()
        .map(|(sys, qv)| (sys.clone(), qv.get(quality)))
        .collect();
    correlate_scalar(&pred_col, &gold_col)
}
