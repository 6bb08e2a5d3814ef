//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use rand::Rng;

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

/// All `k`-subsets of `items`.
pub fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if items.len() < k {
        return vec![];
    }
    let mut out = Vec::new();
    for mut rest in subsets(&items[1..], k - 1) {
        rest.insert(0, items[0]);
        out.push(rest);
    }
    out.extend(subsets(&items[1..], k));
    out
}

/// Krum score of every vector: the smallest total squared distance to any
/// `neighbors`-subset of the other vectors, found by enumerating subsets.
pub fn krum_scores(vs: &[Vec<f64>], neighbors: usize) -> Vec<f64> {
    (0..vs.len())
        .map(|i| {
            let others: Vec<usize> = (0..vs.len()).filter(|&j| j != i).collect();
            subsets(&others, neighbors)
                .iter()
                .map(|s| s.iter().map(|&j| dist_sq(&vs[i], &vs[j])).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Lowest index whose score is within `rtol` of the minimum.
pub fn krum_oracle_index(vs: &[Vec<f64>], neighbors: usize, rtol: f64) -> usize {
    let scores = krum_scores(vs, neighbors);
    let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
    scores
        .iter()
        .position(|&s| s <= best + rtol * best)
        .expect("non-empty")
}

pub fn median_by_sort(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

pub fn marginal_median_oracle(vs: &[Vec<f64>]) -> Vec<f64> {
    (0..vs[0].len())
        .map(|j| median_by_sort(&vs.iter().map(|v| v[j]).collect::<Vec<_>>()))
        .collect()
}

/// Per coordinate, among all `keep`-subsets pick the one with the smallest total
/// absolute deviation from the median (near-ties go to the smaller values) and
/// average it.
pub fn mean_around_median_oracle(vs: &[Vec<f64>], keep: usize) -> Vec<f64> {
    let idx: Vec<usize> = (0..vs.len()).collect();
    let all = subsets(&idx, keep);
    (0..vs[0].len())
        .map(|j| {
            let col: Vec<f64> = vs.iter().map(|v| v[j]).collect();
            let med = median_by_sort(&col);
            let cost = |s: &Vec<usize>| s.iter().map(|&i| (col[i] - med).abs()).sum::<f64>();
            let total = |s: &Vec<usize>| s.iter().map(|&i| col[i]).sum::<f64>();
            let best_cost = all.iter().map(cost).fold(f64::INFINITY, f64::min);
            let scale = col.iter().map(|x| x.abs()).fold(1.0, f64::max);
            let best = all
                .iter()
                .filter(|s| cost(s) <= best_cost + 1e-12 * scale)
                .min_by(|a, b| total(a).partial_cmp(&total(b)).unwrap())
                .expect("non-empty");
            total(best) / keep as f64
        })
        .collect()
}

pub fn geometric_objective(vs: &[Vec<f64>], y: &[f64]) -> f64 {
    vs.iter().map(|v| dist(v, y)).sum()
}

/// Ternary search along `origin + t u` for `t` in `[lo, hi]`.
pub fn line_search_median(vs: &[Vec<f64>], origin: &[f64], u: &[f64], mut lo: f64, mut hi: f64) -> Vec<f64> {
    let at = |t: f64| -> Vec<f64> { origin.iter().zip(u).map(|(o, d)| o + t * d).collect() };
    for _ in 0..300 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if geometric_objective(vs, &at(a)) <= geometric_objective(vs, &at(b)) {
            hi = b;
        } else {
            lo = a;
        }
    }
    at((lo + hi) / 2.0)
}

/// Compass search on the geometric-median objective, from the mean, down to step 1e-12.
pub fn compass_search_median(vs: &[Vec<f64>]) -> Vec<f64> {
    let d = vs[0].len();
    let mut y: Vec<f64> = (0..d)
        .map(|j| vs.iter().map(|v| v[j]).sum::<f64>() / vs.len() as f64)
        .collect();
    let scale = vs.iter().map(|v| dist(v, &y)).fold(0.0, f64::max).max(1e-3);
    let mut step = scale;
    let mut f = geometric_objective(vs, &y);
    while step > 1e-12 * scale {
        let mut improved = false;
        for j in 0..d {
            for s in [step, -step] {
                let mut c = y.clone();
                c[j] += s;
                let fc = geometric_objective(vs, &c);
                if fc < f {
                    y = c;
                    f = fc;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    y
}

/// Bulyan traced step by step: Krum picks with clamped neighbour counts, then the
/// trimmed mean around the candidate median.
pub fn bulyan_krum_oracle(vs: &[Vec<f64>], q: usize, rtol: f64) -> Vec<f64> {
    let theta = vs.len() - 2 * q;
    let mut pool: Vec<Vec<f64>> = vs.to_vec();
    let mut candidates = Vec::new();
    for _ in 0..theta {
        let n = pool.len();
        let pick = if n == 1 {
            0
        } else {
            let nb = (n as isize - q as isize - 2).clamp(1, n as isize - 1) as usize;
            krum_oracle_index(&pool, nb, rtol)
        };
        candidates.push(pool.remove(pick));
    }
    mean_around_median_oracle(&candidates, theta - 2 * q)
}

pub fn random_vectors<R: Rng>(rng: &mut R, m: usize, d: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect())
        .collect()
}

pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a
            .iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}
