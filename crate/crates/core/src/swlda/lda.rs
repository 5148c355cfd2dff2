//! Two-class linear discriminant on a selected column subset.

use nalgebra::{DMatrix, DVector};

use super::{SwldaError, TrainedModel, TrainingSet, MODEL_FORMAT};

/// Relative singular-value floor below which the pooled covariance is
/// considered singular.
const SINGULAR_TOL: f64 = 1e-12;

/// Fit LDA on `selected` columns: `w = S⁻¹(μ₁ − μ₀)` with `S` the pooled
/// within-class covariance, solved through its SVD, and
/// `offset = −w·(μ₀ + μ₁)/2 + ln(n₁/n₀)`.
///
/// A singular `S` gets `1e-9 · trace(S)/k` added to its diagonal.
pub fn train(ts: &TrainingSet, selected: &[usize]) -> Result<TrainedModel, SwldaError> {
    if selected.is_empty() {
        return Err(SwldaError::EmptySelection { reason: "no columns given to train".into() });
    }
    if let Some(&bad) = selected.iter().find(|&&f| f >= ts.n_features()) {
        return Err(SwldaError::BadFeature(bad));
    }
    let counts = [ts.class_count(0), ts.class_count(1)];
    for (class, &rows) in counts.iter().enumerate() {
        if rows < 2 {
            return Err(SwldaError::DegenerateClass { class: class as u8, rows, needed: 2 });
        }
    }

    let k = selected.len();
    let labels = ts.labels();
    let mut means = [DVector::<f64>::zeros(k), DVector::<f64>::zeros(k)];
    for (j, &f) in selected.iter().enumerate() {
        for (i, v) in ts.columns()[f].iter().enumerate() {
            means[labels[i] as usize][j] += v;
        }
    }
    for c in 0..2 {
        means[c] /= counts[c] as f64;
    }

    let n = ts.n_rows();
    let centered = DMatrix::from_fn(n, k, |i, j| {
        ts.columns()[selected[j]][i] - means[labels[i] as usize][j]
    });
    let mut cov = centered.transpose() * &centered / (n - 2) as f64;

    let svd = cov.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= SINGULAR_TOL * smax.max(f64::MIN_POSITIVE) {
        let eps = 1e-9 * cov.trace() / k as f64;
        let eps = if eps > 0.0 { eps } else { 1e-9 };
        for d in 0..k {
            cov[(d, d)] += eps;
        }
    }
    let diff = &means[1] - &means[0];
    let svd = cov.svd(true, true);
    let w = svd
        .solve(&diff, SINGULAR_TOL * svd.singular_values.max())
        .map_err(|e| SwldaError::Format(e.to_string()))?;

    let mid = (&means[0] + &means[1]) * 0.5;
    let offset = -w.dot(&mid) + (counts[1] as f64 / counts[0] as f64).ln();

    Ok(TrainedModel {
        format: MODEL_FORMAT.to_string(),
        n_features: ts.n_features(),
        selected: selected.to_vec(),
        weights: w.iter().copied().collect(),
        offset,
        metadata: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn clusters(seed: u64, shift: f64, n: usize) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let l = (i % 2) as u8;
            let base: f64 = rng.sample(StandardNormal);
            rows.push(vec![base + shift * f64::from(l), rng.sample(StandardNormal)]);
            labels.push(l);
        }
        TrainingSet::new(rows, labels).unwrap()
    }

    #[test]
    fn orientation_puts_targets_high() {
        let ts = clusters(1, 6.0, 100);
        let m = train(&ts, &[0]).unwrap();
        let lo = m.score_values(&[0.0, 0.0]).unwrap();
        let hi = m.score_values(&[6.0, 0.0]).unwrap();
        assert!(hi > 0.0 && lo < 0.0, "{lo} {hi}");
    }

    #[test]
    fn equal_means_still_train() {
        let ts = clusters(2, 0.0, 400);
        let m = train(&ts, &[0, 1]).unwrap();
        let scores: Vec<f64> = (0..ts.n_rows()).map(|i| m.score_values(&ts.row(i)).unwrap()).collect();
        let (mut s0, mut s1) = (Vec::new(), Vec::new());
        for (s, &l) in scores.iter().zip(ts.labels()) {
            if l == 1 { s1.push(*s) } else { s0.push(*s) }
        }
        // Welch two-sample t on the scores: no detectable class difference.
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let se = (var(&s0) / s0.len() as f64 + var(&s1) / s1.len() as f64).sqrt();
        let t = (mean(&s1) - mean(&s0)) / se;
        assert!(t.abs() < 3.0, "t = {t}");
    }

    #[test]
    fn singular_covariance_is_regularised() {
        // Second column duplicates the first.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let l = (i % 2) as u8;
            let v: f64 = rng.sample::<f64, _>(StandardNormal) + 2.0 * f64::from(l);
            rows.push(vec![v, v]);
            labels.push(l);
        }
        let ts = TrainingSet::new(rows, labels).unwrap();
        let m = train(&ts, &[0, 1]).unwrap();
        assert!(m.weights.iter().all(|w| w.is_finite()));
        assert!(m.score_values(&[2.0, 2.0]).unwrap() > m.score_values(&[0.0, 0.0]).unwrap());
    }

    #[test]
    fn degenerate_class() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let ts = TrainingSet::new(rows, vec![0, 0, 0, 1]).unwrap();
        assert!(matches!(train(&ts, &[0]), Err(SwldaError::DegenerateClass { class: 1, rows: 1, .. })));
    }

    #[test]
    fn matches_closed_form_in_one_dimension() {
        let ts = clusters(4, 1.5, 50);
        let m = train(&ts, &[0]).unwrap();
        let col = &ts.columns()[0];
        let (mut m0, mut m1, mut n0, mut n1) = (0.0, 0.0, 0.0, 0.0);
        for (v, &l) in col.iter().zip(ts.labels()) {
            if l == 1 { m1 += v; n1 += 1.0 } else { m0 += v; n0 += 1.0 }
        }
        m0 /= n0;
        m1 /= n1;
        let ss: f64 = col
            .iter()
            .zip(ts.labels())
            .map(|(v, &l)| (v - if l == 1 { m1 } else { m0 }).powi(2))
            .sum();
        let var = ss / (ts.n_rows() - 2) as f64;
        let w = (m1 - m0) / var;
        assert!((m.weights[0] - w).abs() < 1e-10);
        assert!((m.offset - (-w * (m0 + m1) / 2.0 + (n1 / n0).ln())).abs() < 1e-10);
    }
}
