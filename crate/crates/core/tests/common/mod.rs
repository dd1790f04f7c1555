#![allow(dead_code)]

use std::cmp::Ordering;

/// Kendall's tau-b by Knight's O(n log n) algorithm.
pub fn kendall_tau(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as u64;
    let mut v: Vec<(f64, f64)> = pairs.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n0 = n * (n - 1) / 2;
    let tie_pairs = |eq: &dyn Fn(usize, usize) -> bool| -> u64 {
        let mut total = 0u64;
        let mut run = 1u64;
        for i in 1..v.len() {
            if eq(i - 1, i) {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        total + run * (run - 1) / 2
    };
    let n1 = tie_pairs(&|i, j| v[i].0 == v[j].0);
    let n3 = tie_pairs(&|i, j| v[i].0 == v[j].0 && v[i].1 == v[j].1);
    let mut ys: Vec<f64> = v.iter().map(|p| p.1).collect();
    let swaps = merge_count(&mut ys);
    let mut run = 1u64;
    let mut n2 = 0u64;
    for i in 1..ys.len() {
        if ys[i - 1] == ys[i] {
            run += 1;
        } else {
            n2 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n2 += run * (run - 1) / 2;
    let num = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    num / ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt()
}

// Sorts `a` ascending and returns the number of strictly inverted pairs.
fn merge_count(a: &mut [f64]) -> u64 {
    let n = a.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut a[..mid]) + merge_count(&mut a[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if a[j].total_cmp(&a[i]) == Ordering::Less {
            merged.push(a[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            merged.push(a[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&a[i..mid]);
    merged.extend_from_slice(&a[j..n]);
    a.copy_from_slice(&merged);
    swaps
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            ((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn kendall_oracle_matches_brute_force() {
    let pairs = [(1.0, 2.0), (2.0, 1.0), (3.0, 3.0), (3.0, 4.0), (5.0, 4.0), (6.0, 0.5)];
    let mut c = 0.0;
    let (mut tx, mut ty) = (0.0, 0.0);
    let mut d = 0.0;
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            let s = (pairs[i].0 - pairs[j].0) * (pairs[i].1 - pairs[j].1);
            if s > 0.0 {
                c += 1.0
            } else if s < 0.0 {
                d += 1.0
            }
            if pairs[i].0 == pairs[j].0 {
                tx += 1.0;
            }
            if pairs[i].1 == pairs[j].1 {
                ty += 1.0;
            }
        }
    }
    let n0: f64 = 15.0;
    let brute = (c - d) / ((n0 - tx) * (n0 - ty)).sqrt();
    assert!((kendall_tau(&pairs) - brute).abs() < 1e-12);
}
