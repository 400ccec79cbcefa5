//! Independent reference computations used by the tests. They deliberately
//! share no code with the library.

#![allow(dead_code)]

use std::collections::HashMap;

/// Brute-force nominal alpha from an explicit coincidence matrix. `rows[u]`
/// holds the values coded for unit `u` (missing cells already dropped); any
/// number of categories is allowed.
///
/// Every ordered pair of distinct coders within a unit of `m` values adds
/// `1 / (m - 1)` to `o[c][k]`. Then `alpha = 1 - (n - 1) * sum_{c != k} o[c][k]
/// / sum_{c != k} n_c n_k`. Returns `None` when no unit has two values and
/// `Some(1.0)` when every pairable value is the same category.
pub fn alpha_bruteforce(rows: &[Vec<u8>]) -> Option<f64> {
    let mut o: HashMap<(u8, u8), f64> = HashMap::new();
    for values in rows {
        let m = values.len();
        if m < 2 {
            continue;
        }
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    *o.entry((values[i], values[j])).or_default() += 1.0 / (m as f64 - 1.0);
                }
            }
        }
    }
    if o.is_empty() {
        return None;
    }
    let mut marginals: HashMap<u8, f64> = HashMap::new();
    for (&(c, _), &v) in &o {
        *marginals.entry(c).or_default() += v;
    }
    let n: f64 = marginals.values().sum();
    let observed: f64 = o.iter().filter(|((c, k), _)| c != k).map(|(_, v)| v).sum();
    let mut expected = 0.0;
    for (&c, &nc) in &marginals {
        for (&k, &nk) in &marginals {
            if c != k {
                expected += nc * nk;
            }
        }
    }
    if expected == 0.0 {
        return Some(1.0);
    }
    Some(1.0 - (n - 1.0) * observed / expected)
}

/// Status of a sentence with `b` biased and `n` not-biased votes, worked out
/// in integer arithmetic: `(insufficient, decided, undecided, controversial)`.
/// The band is `[lo_num / den, hi_num / den]`, inclusive.
pub fn status_rational(b: u32, n: u32, min_votes: u32, lo_num: u32, hi_num: u32, den: u32) -> (bool, bool, bool, bool) {
    let total = b + n;
    if total < min_votes {
        return (true, false, false, false);
    }
    // lo <= b / total <= hi  <=>  lo_num * total <= den * b <= hi_num * total
    let controversial = lo_num * total <= den * b && den * b <= hi_num * total;
    (false, b != n, b == n, controversial)
}

/// Sample mean and sample (n - 1) standard deviation, two-pass.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}
