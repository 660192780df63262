use nalgebra::{DMatrix, DVector};

use super::{HistoryRecord, SearchError};
use crate::arch::ArchGenome;
use crate::pcrep::{Format, View};

/// Presence indicators per (view, stage), view-major in `View::ALL` order.
pub const PRESENCE_FEATURES: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct Regression {
    pub coefficients: Vec<f64>,
    pub rank: usize,
    /// Set when the design matrix lacks full column rank; the coefficients
    /// are then the minimum-norm least-squares solution.
    pub rank_deficient: bool,
}

/// Ordinary least squares without intercept via SVD.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<Regression, SearchError> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n == 0 || p == 0 || n != y.len() || rows.iter().any(|r| r.len() != p) {
        return Err(SearchError::InsufficientData { needed: 1, got: n.min(y.len()) });
    }
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let svd = x.svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = max_sv * n.max(p) as f64 * f64::EPSILON;
    let rank = svd.rank(eps);
    let beta = if max_sv == 0.0 {
        DVector::zeros(p)
    } else {
        svd.solve(&DVector::from_column_slice(y), eps).expect("U and V were computed")
    };
    Ok(Regression { coefficients: beta.iter().copied().collect(), rank, rank_deficient: rank < p })
}

/// 12-dim 0/1 presence vector, index `view * 3 + stage`.
pub fn presence_features(g: &ArchGenome) -> [f64; PRESENCE_FEATURES] {
    let mut f = [0.0; PRESENCE_FEATURES];
    for (s, p) in g.presence().iter().enumerate().take(3) {
        for v in View::ALL {
            if p[v.index()] {
                f[v.index() * 3 + s] = 1.0;
            }
        }
    }
    f
}

/// Regresses quality on presence indicators. Needs at least 13 samples.
pub fn analyze_presence_regression<'a>(
    samples: impl IntoIterator<Item = (&'a ArchGenome, f64)>,
) -> Result<Regression, SearchError> {
    let (rows, y): (Vec<Vec<f64>>, Vec<f64>) = samples.into_iter().map(|(g, q)| (presence_features(g).to_vec(), q)).unzip();
    if rows.len() <= PRESENCE_FEATURES {
        return Err(SearchError::InsufficientData { needed: PRESENCE_FEATURES + 1, got: rows.len() });
    }
    least_squares(&rows, &y)
}

/// `[empty stages, dense branches, sparse branches]` for one view.
pub fn format_features(g: &ArchGenome, view: View) -> [f64; 3] {
    let mut f = [0.0; 3];
    for stage in &g.stages {
        let mut present = false;
        for b in stage.iter().filter(|b| b.view == view) {
            present = true;
            match b.format {
                Some(Format::Dense) => f[1] += 1.0,
                _ => f[2] += 1.0,
            }
        }
        if !present {
            f[0] += 1.0;
        }
    }
    f
}

/// Latency regressions on `[empty, dense, sparse]` counts for the two views with both formats.
#[derive(Clone, Debug, PartialEq)]
pub struct FormatLatency {
    pub perspective: Regression,
    pub pillar: Regression,
}

pub fn analyze_format_latency<'a>(samples: impl IntoIterator<Item = (&'a ArchGenome, f64)>) -> Result<FormatLatency, SearchError> {
    let samples: Vec<_> = samples.into_iter().collect();
    if samples.len() < 3 {
        return Err(SearchError::InsufficientData { needed: 3, got: samples.len() });
    }
    let y: Vec<f64> = samples.iter().map(|(_, l)| *l).collect();
    let fit = |v: View| {
        let rows: Vec<Vec<f64>> = samples.iter().map(|(g, _)| format_features(g, v).to_vec()).collect();
        least_squares(&rows, &y)
    };
    Ok(FormatLatency { perspective: fit(View::Perspective)?, pillar: fit(View::Pillar)? })
}

/// Population standard deviations of child quality, split by whether the
/// mutation touched only the layer. `None` marks an empty subset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MutationVariance {
    pub layer_only: Option<f64>,
    pub other: Option<f64>,
    pub layer_only_count: usize,
    pub other_count: usize,
}

pub fn analyze_mutation_variance(records: &[HistoryRecord]) -> MutationVariance {
    let mut layer = Vec::new();
    let mut other = Vec::new();
    for r in records {
        let (Some(m), Some(q)) = (r.mutation(), r.quality) else { continue };
        if m.kind().is_layer_only() {
            layer.push(q);
        } else {
            other.push(q);
        }
    }
    MutationVariance {
        layer_only: population_std(&layer),
        other: population_std(&other),
        layer_only_count: layer.len(),
        other_count: other.len(),
    }
}

fn population_std(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    Some((v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit_is_recovered() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, (i % 3) as f64, (i * i % 7) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] - 0.5 * r[1] + 0.25 * r[2]).collect();
        let r = least_squares(&rows, &y).unwrap();
        assert!(!r.rank_deficient);
        for (c, e) in r.coefficients.iter().zip([2.0, -0.5, 0.25]) {
            assert!((c - e).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_columns_give_minimum_norm() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 * i as f64).collect();
        let r = least_squares(&rows, &y).unwrap();
        assert!(r.rank_deficient);
        assert_eq!(r.rank, 1);
        assert!((r.coefficients[0] - 1.0).abs() < 1e-12 && (r.coefficients[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn std_of_empty_subset_is_flagged() {
        assert_eq!(population_std(&[]), None);
        assert_eq!(population_std(&[0.5, 0.5]), Some(0.0));
        let s = population_std(&[0.3, 0.7]).unwrap();
        assert!((s - 0.2).abs() <= 0.2 * f64::EPSILON);
    }
}
