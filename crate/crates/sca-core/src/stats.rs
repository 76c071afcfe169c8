//! Small numeric helpers: compensated summation, rank correlation, and a
//! two-sample Kolmogorov-Smirnov statistic. These back the evaluation code
//! and the test suites; none of them allocate more than O(n).

/// Kahan-compensated sum. Keeps accumulation error near one ulp of the
/// result even for long sequences, which matters when objective traces are
/// checked for monotonicity at tight tolerances.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(items: I) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for x in items {
        let y = x - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    kahan_sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased sample variance (n - 1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    kahan_sum(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() - 1) as f64
}

/// Fractional ranks with ties sharing their average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // ranks are 1-based; tied entries get the average of their span
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation. Returns 0 when either sequence is constant.
///
/// # Panics
/// Panics if the slices differ in length.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "spearman needs paired samples");
    if xs.len() < 2 {
        return 0.0;
    }
    pearson(&ranks(xs), &ranks(ys))
}

/// Two-sample Kolmogorov-Smirnov statistic: the maximum gap between the
/// two empirical CDFs.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "ks needs nonempty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_sums_exactly_on_small_inputs() {
        assert_eq!(kahan_sum([1.0, 2.0, 3.0]), 6.0);
        assert_eq!(kahan_sum(std::iter::empty()), 0.0);
    }

    #[test]
    fn kahan_beats_naive_on_adversarial_sequence() {
        // 1 followed by many tiny terms that naive f64 summation drops
        let tiny = 1e-16;
        let n = 1_000_000usize;
        let seq = std::iter::once(1.0).chain(std::iter::repeat_n(tiny, n));
        let exact = 1.0 + tiny * n as f64;
        assert!((kahan_sum(seq) - exact).abs() < 1e-12);
    }

    #[test]
    fn spearman_detects_monotone_relations() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert!((spearman(&xs, &ys) - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((spearman(&xs, &neg) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_handles_ties() {
        let xs = [1.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 1.0, 2.0, 3.0];
        assert!((spearman(&xs, &ys) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_zero_for_identical_samples() {
        let a = [0.3, 1.2, 2.0, 5.5];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
    }

    #[test]
    fn ks_one_for_disjoint_supports() {
        let a = [0.0, 1.0, 2.0];
        let b = [10.0, 11.0];
        assert_eq!(ks_two_sample(&a, &b), 1.0);
    }
}
