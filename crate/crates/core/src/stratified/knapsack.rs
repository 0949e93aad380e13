//! Multiple-choice knapsack over strata: pick one option `b_s` per stratum,
//! with `sum_s b_s` fixed, minimizing `sum_s v_s(b_s)`.

use crate::error::{Error, Result};

/// Number of sunk treated units chosen in each stratum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratifiedAllocation {
    pub b: Vec<usize>,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Solver {
    /// Exact dynamic program.
    Dp,
    /// Greedy on each stratum's lower convex envelope; never above the exact
    /// minimum.
    Greedy,
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dp" => Ok(Solver::Dp),
            "greedy" => Ok(Solver::Greedy),
            _ => Err(Error::InvalidParameter(format!(
                "unknown knapsack solver '{s}'"
            ))),
        }
    }
}

fn check_total(options: &[Vec<f64>], total: usize) -> Result<()> {
    if options.iter().any(|o| o.is_empty()) {
        return Err(Error::InvalidParameter(
            "every stratum needs at least one option".into(),
        ));
    }
    let cap: usize = options.iter().map(|o| o.len() - 1).sum();
    if total > cap {
        return Err(Error::InvalidParameter(format!(
            "allocation total {total} exceeds capacity {cap}"
        )));
    }
    Ok(())
}

/// Exact minimum. `options[s][b]` is the value of stratum `s` with `b` sunk
/// units. Among minimizers the one with the smallest `b` in earlier strata
/// is returned.
pub fn knapsack_dp(options: &[Vec<f64>], total: usize) -> Result<(f64, StratifiedAllocation)> {
    check_total(options, total)?;
    let s_count = options.len();
    // best[s][t]: minimum over strata s.. with t units still to place.
    let mut best = vec![vec![f64::INFINITY; total + 1]; s_count + 1];
    best[s_count][0] = 0.0;
    for s in (0..s_count).rev() {
        for t in 0..=total {
            let mut v = f64::INFINITY;
            for (b, &val) in options[s].iter().enumerate().take(t + 1) {
                let rest = best[s + 1][t - b];
                if rest.is_finite() {
                    v = v.min(val + rest);
                }
            }
            best[s][t] = v;
        }
    }
    let mut b = Vec::with_capacity(s_count);
    let mut left = total;
    for s in 0..s_count {
        let target = best[s][left];
        let pick = (0..options[s].len().min(left + 1))
            .find(|&b| {
                best[s + 1][left - b].is_finite() && options[s][b] + best[s + 1][left - b] == target
            })
            .expect("an optimal choice exists");
        b.push(pick);
        left -= pick;
    }
    Ok((best[0][total], StratifiedAllocation { b, total }))
}

/// Vertices of the lower convex envelope of `(b, v[b])`. Collinear points are
/// kept so the envelope touches `v` wherever `v` is itself convex.
pub fn lower_envelope(v: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // Drop b when it lies strictly above the chord from a to i.
            let cross = (b - a) as f64 * (v[i] - v[a]) - (i - a) as f64 * (v[b] - v[a]);
            if cross < 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

fn envelope_value(v: &[f64], hull: &[usize], b: usize) -> f64 {
    let j = hull.partition_point(|&h| h < b);
    if hull[j] == b {
        return v[b];
    }
    let (lo, hi) = (hull[j - 1], hull[j]);
    v[lo] + (v[hi] - v[lo]) * (b - lo) as f64 / (hi - lo) as f64
}

/// Minimum of the summed convex envelopes, found by taking the `total`
/// steepest unit decrements across strata. Bounded above by [`knapsack_dp`].
pub fn knapsack_greedy(options: &[Vec<f64>], total: usize) -> Result<(f64, StratifiedAllocation)> {
    check_total(options, total)?;
    let hulls: Vec<Vec<usize>> = options.iter().map(|o| lower_envelope(o)).collect();
    // Unit-step slopes along each envelope are nondecreasing, so the global
    // smallest `total` slopes form a prefix in every stratum.
    let mut steps: Vec<(f64, usize, usize)> = Vec::new();
    for (s, (v, hull)) in options.iter().zip(&hulls).enumerate() {
        for w in hull.windows(2) {
            let slope = (v[w[1]] - v[w[0]]) / (w[1] - w[0]) as f64;
            for b in w[0]..w[1] {
                steps.push((slope, s, b));
            }
        }
    }
    steps.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut b = vec![0usize; options.len()];
    for &(_, s, _) in steps.iter().take(total) {
        b[s] += 1;
    }
    let value = options
        .iter()
        .zip(&hulls)
        .zip(&b)
        .rev()
        .fold(0.0, |acc, ((v, hull), &bs)| {
            envelope_value(v, hull, bs) + acc
        });
    Ok((value, StratifiedAllocation { b, total }))
}

pub fn knapsack(
    options: &[Vec<f64>],
    total: usize,
    solver: Solver,
) -> Result<(f64, StratifiedAllocation)> {
    match solver {
        Solver::Dp => knapsack_dp(options, total),
        Solver::Greedy => knapsack_greedy(options, total),
    }
}
