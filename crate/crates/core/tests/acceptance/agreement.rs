use skintone_core::metrics::{icc3, krippendorff_alpha, AlphaMetric, MetricsError};
use skintone_core::{MstLabel, RatingsMatrix};

use crate::{ensure, Outcome};

type Grid = Vec<Vec<Option<u8>>>;

fn complete(rows: &[&[u8]]) -> Grid {
    rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect()
}

fn to_matrix(grid: &Grid) -> RatingsMatrix {
    let k = grid[0].len();
    RatingsMatrix::from_rows(
        (0..k).map(|j| format!("rater{j}")).collect(),
        grid.iter()
            .enumerate()
            .map(|(i, row)| {
                let cells = row.iter().map(|c| c.map(|v| MstLabel::new(v as i64).unwrap())).collect();
                (format!("subject{i:02}"), cells)
            })
            .collect(),
    )
}

/// ICC(3,1) from a full two-way ANOVA table, error term by subtraction.
fn oracle_icc(grid: &Grid) -> f64 {
    let rows: Vec<Vec<f64>> = grid
        .iter()
        .filter(|r| r.iter().all(Option::is_some))
        .map(|r| r.iter().map(|v| v.unwrap() as f64).collect())
        .collect();
    let (n, k) = (rows.len() as f64, rows[0].len() as f64);
    let all: Vec<f64> = rows.iter().flatten().copied().collect();
    let grand = all.iter().sum::<f64>() / all.len() as f64;
    let ss_total: f64 = all.iter().map(|x| (x - grand).powi(2)).sum();
    let ss_rows: f64 = rows.iter().map(|r| k * (r.iter().sum::<f64>() / k - grand).powi(2)).sum();
    let ss_cols: f64 = (0..rows[0].len())
        .map(|j| n * (rows.iter().map(|r| r[j]).sum::<f64>() / n - grand).powi(2))
        .sum();
    let ms_rows = ss_rows / (n - 1.0);
    let ms_err = (ss_total - ss_rows - ss_cols) / ((n - 1.0) * (k - 1.0));
    (ms_rows - ms_err) / (ms_rows + (k - 1.0) * ms_err)
}

/// α = 1 − D_o / D_e with both disagreements summed over value pairs directly.
fn oracle_alpha(grid: &Grid, metric: AlphaMetric) -> f64 {
    let units: Vec<Vec<f64>> = grid
        .iter()
        .map(|r| r.iter().flatten().map(|&v| v as f64).collect::<Vec<_>>())
        .filter(|u| u.len() >= 2)
        .collect();
    let pooled: Vec<f64> = units.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let freq = |v: f64| pooled.iter().filter(|&&p| p == v).count() as f64;
    let delta = |a: f64, b: f64| match metric {
        AlphaMetric::Interval => (a - b).powi(2),
        AlphaMetric::Ordinal => {
            let (lo, hi) = (a.min(b), a.max(b));
            let between = pooled.iter().filter(|&&p| p >= lo && p <= hi).count() as f64;
            (between - (freq(lo) + freq(hi)) / 2.0).powi(2)
        }
    };
    let mut observed = 0.0;
    for u in &units {
        let m = u.len() as f64;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    observed += delta(u[i], u[j]) / (m - 1.0);
                }
            }
        }
    }
    let mut expected = 0.0;
    for i in 0..pooled.len() {
        for j in 0..pooled.len() {
            if i != j {
                expected += delta(pooled[i], pooled[j]);
            }
        }
    }
    1.0 - (observed / n) / (expected / (n * (n - 1.0)))
}

/// Krippendorff's published reliability example: 12 units, 4 observers, with gaps.
fn reference_data() -> Grid {
    let observers: [[u8; 12]; 4] = [
        [1, 2, 3, 3, 2, 1, 4, 1, 2, 0, 0, 0],
        [1, 2, 3, 3, 2, 2, 4, 1, 2, 5, 0, 3],
        [0, 3, 3, 3, 2, 3, 4, 2, 2, 5, 1, 0],
        [1, 2, 3, 3, 2, 4, 4, 1, 2, 5, 1, 0],
    ];
    (0..12)
        .map(|u| observers.iter().map(|o| (o[u] > 0).then_some(o[u])).collect())
        .collect()
}

pub fn agreement() -> Outcome {
    let matrices: Vec<Grid> = vec![
        complete(&[&[2, 3, 2], &[5, 5, 6], &[7, 8, 8], &[1, 2, 1], &[9, 9, 10]]),
        complete(&[&[3, 3, 4, 3], &[6, 5, 6, 7], &[2, 2, 3, 2], &[8, 9, 8, 8], &[4, 6, 5, 4], &[10, 9, 10, 10]]),
        complete(&[&[1, 4], &[2, 2], &[6, 3], &[7, 9], &[5, 5], &[3, 8], &[10, 6]]),
        reference_data(),
    ];
    let mut worst = 0.0f64;
    for (i, grid) in matrices.iter().enumerate() {
        let ratings = to_matrix(grid);
        let icc = icc3(&ratings).map_err(|e| format!("matrix {i}: {e}"))?;
        let want = oracle_icc(grid);
        worst = worst.max((icc - want).abs());
        ensure!((icc - want).abs() <= 1e-9, "matrix {i}: ICC {icc} vs oracle {want}");
        for metric in [AlphaMetric::Interval, AlphaMetric::Ordinal] {
            let alpha = krippendorff_alpha(&ratings, metric).map_err(|e| format!("matrix {i}: {e}"))?;
            let want = oracle_alpha(grid, metric);
            worst = worst.max((alpha - want).abs());
            ensure!((alpha - want).abs() <= 1e-9, "matrix {i}: {metric:?} alpha {alpha} vs oracle {want}");
        }
    }
    let reference = to_matrix(&reference_data());
    let interval = krippendorff_alpha(&reference, AlphaMetric::Interval).unwrap();
    let ordinal = krippendorff_alpha(&reference, AlphaMetric::Ordinal).unwrap();
    ensure!((interval - 0.849).abs() < 5e-4, "reference interval alpha {interval}");
    ensure!((ordinal - 0.815).abs() < 5e-4, "reference ordinal alpha {ordinal}");

    let perfect = to_matrix(&complete(&[&[1, 1, 1], &[4, 4, 4], &[7, 7, 7], &[10, 10, 10]]));
    let icc = icc3(&perfect).unwrap();
    let alpha = krippendorff_alpha(&perfect, AlphaMetric::Interval).unwrap();
    ensure!(icc == 1.0 && alpha == 1.0, "perfect agreement gives ICC {icc}, alpha {alpha}");

    let constant = to_matrix(&complete(&[&[5, 5], &[5, 5], &[5, 5]]));
    ensure!(
        matches!(icc3(&constant), Err(MetricsError::Undefined(_))),
        "constant ratings ICC: {:?}",
        icc3(&constant)
    );
    ensure!(
        matches!(krippendorff_alpha(&constant, AlphaMetric::Interval), Err(MetricsError::Undefined(_))),
        "constant ratings alpha: {:?}",
        krippendorff_alpha(&constant, AlphaMetric::Interval)
    );
    Ok(format!(
        "4 matrices within {worst:.1e} of oracles; reference alpha {interval:.3}/{ordinal:.3}; perfect -> 1; constant -> error"
    ))
}
