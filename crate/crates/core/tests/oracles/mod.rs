//! Slow, definitional reference implementations used as test oracles.
#![allow(dead_code)]

pub mod greedy;
pub mod linalg;
pub mod shapley;

use std::collections::HashMap;

/// Edit distance by memoized recursion on suffixes.
pub fn edit_distance(a: &[char], b: &[char]) -> usize {
    fn go(a: &[char], b: &[char], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&d) = memo.get(&(i, j)) {
            return d;
        }
        let d = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j, memo)
                .min(go(a, b, i, j + 1, memo))
                .min(go(a, b, i + 1, j + 1, memo))
        };
        memo.insert((i, j), d);
        d
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

/// Most distant score inside the clipped rank window, by scanning every
/// member. `ranked` must be sorted descending.
pub fn optimum_scan(ranked: &[f64], rank: usize, w: usize) -> f64 {
    let s = ranked[rank];
    let lo = rank.saturating_sub(w);
    let hi = (rank + w).min(ranked.len() - 1);
    let mut best = s;
    let mut best_d = 0.0;
    for &c in &ranked[lo..=hi] {
        let d = (c - s).abs();
        if d > best_d || (d == best_d && c < best) {
            best = c;
            best_d = d;
        }
    }
    best
}

/// Central finite-difference gradient.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            buf[i] = x[i] + h;
            let up = f(&buf);
            buf[i] = x[i] - h;
            let down = f(&buf);
            buf[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}
