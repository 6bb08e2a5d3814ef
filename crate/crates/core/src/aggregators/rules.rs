//! The aggregation rules themselves. Inputs are assumed validated by
//! [`super::AggregatorSpec::validate`]; ties are always broken by lowest node index.

use super::Rule;
use crate::linalg;

/// Scores within this relative distance of the best count as tied; ties go to the
/// lowest index.
pub const KRUM_TIE_RTOL: f64 = 1e-9;

/// Index of the Krum winner: the vector whose summed squared distance to its
/// `neighbors` nearest other vectors is smallest.
pub fn krum_index<V: AsRef<[f64]>>(vectors: &[V], neighbors: usize) -> usize {
    let m = vectors.len();
    let mut best: Option<(usize, f64)> = None;
    let mut dists = Vec::with_capacity(m.saturating_sub(1));
    for i in 0..m {
        dists.clear();
        dists.extend(
            (0..m)
                .filter(|&j| j != i)
                .map(|j| linalg::dist_sq(vectors[i].as_ref(), vectors[j].as_ref())),
        );
        dists.sort_by(f64::total_cmp);
        let score: f64 = dists.iter().take(neighbors).sum();
        match best {
            Some((_, b)) if !(score < b - KRUM_TIE_RTOL * b) => {}
            _ => best = Some((i, score)),
        }
    }
    best.map_or(0, |b| b.0)
}

/// Krum with the standard `m - q - 2` neighbours.
pub fn krum<V: AsRef<[f64]>>(vectors: &[V], q: usize) -> Vec<f64> {
    let neighbors = vectors.len() - q - 2;
    vectors[krum_index(vectors, neighbors)].as_ref().to_vec()
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Coordinatewise median; even counts average the two central order statistics.
pub fn marginal_median<V: AsRef<[f64]>>(vectors: &[V]) -> Vec<f64> {
    let d = vectors[0].as_ref().len();
    let mut column = Vec::with_capacity(vectors.len());
    (0..d)
        .map(|c| {
            column.clear();
            column.extend(vectors.iter().map(|v| v.as_ref()[c]));
            column.sort_by(f64::total_cmp);
            median_of_sorted(&column)
        })
        .collect()
}

/// Per coordinate, the mean of the `keep` values closest to that coordinate's
/// median. Distance ties go to the lower value; the two central values of an even
/// count are tied by definition.
pub fn mean_around_median_keep<V: AsRef<[f64]>>(vectors: &[V], keep: usize) -> Vec<f64> {
    let d = vectors[0].as_ref().len();
    let n = vectors.len();
    let mut sorted = Vec::with_capacity(n);
    (0..d)
        .map(|c| {
            sorted.clear();
            sorted.extend(vectors.iter().map(|v| v.as_ref()[c]));
            sorted.sort_by(f64::total_cmp);
            let med = median_of_sorted(&sorted);
            // the kept values form a window of the sorted column grown outwards from
            // the centre; `lo..hi` is the window so far
            let (mut lo, mut hi) = if n % 2 == 1 {
                (n / 2, n / 2 + 1)
            } else {
                (n / 2 - 1, n / 2)
            };
            if n.is_multiple_of(2) && keep >= 2 {
                hi += 1;
            }
            while hi - lo < keep {
                let take_left = lo > 0 && (hi == n || med - sorted[lo - 1] <= sorted[hi] - med);
                if take_left {
                    lo -= 1;
                } else {
                    hi += 1;
                }
            }
            linalg::mean_scalar(sorted[lo..hi].iter().copied())
        })
        .collect()
}

/// Mean of the `m - q` values closest to the marginal median, per coordinate.
pub fn mean_around_median<V: AsRef<[f64]>>(vectors: &[V], q: usize) -> Vec<f64> {
    mean_around_median_keep(vectors, vectors.len() - q)
}

fn weiszfeld_objective<V: AsRef<[f64]>>(vectors: &[V], y: &[f64]) -> f64 {
    vectors.iter().map(|v| linalg::dist(v.as_ref(), y)).sum()
}

/// Points closer than this to an iterate are treated as coinciding with it.
const ANCHOR_RADIUS: f64 = 1e-12;

/// Geometric median `argmin_g sum_i ||g - v_i||` by the modified (Vardi-Zhang)
/// Weiszfeld iteration, started from the coordinatewise mean.
///
/// Stops once successive iterates move less than `tol` or after `max_iter` steps.
/// The returned point is the best of all iterates, the input points and the
/// coordinatewise median, so its objective never exceeds theirs.
pub fn geometric_median<V: AsRef<[f64]>>(vectors: &[V], tol: f64, max_iter: usize) -> Vec<f64> {
    if vectors.len() == 1 {
        return vectors[0].as_ref().to_vec();
    }
    let d = vectors[0].as_ref().len();
    let mut y = linalg::mean(vectors);
    let mut best_obj = weiszfeld_objective(vectors, &y);
    let mut best = y.clone();

    for _ in 0..max_iter {
        let mut numer = vec![0.0; d];
        let mut denom = 0.0;
        let mut coincident = 0usize;
        // pull of the non-coincident points, sum_i (v_i - y) / ||v_i - y||
        let mut pull = vec![0.0; d];
        for v in vectors {
            let v = v.as_ref();
            let dist = linalg::dist(v, &y);
            if dist <= ANCHOR_RADIUS {
                coincident += 1;
                continue;
            }
            let w = 1.0 / dist;
            linalg::axpy(&mut numer, w, v);
            denom += w;
            for c in 0..d {
                pull[c] += (v[c] - y[c]) * w;
            }
        }
        if denom == 0.0 {
            break;
        }
        let t: Vec<f64> = numer.iter().map(|x| x / denom).collect();
        let next = if coincident == 0 {
            t
        } else {
            let r = linalg::norm(&pull);
            if r <= coincident as f64 {
                // y is a data point satisfying the optimality condition
                break;
            }
            let gamma = coincident as f64 / r;
            t.iter()
                .zip(&y)
                .map(|(ti, yi)| (1.0 - gamma) * ti + gamma * yi)
                .collect()
        };
        let step = linalg::dist(&next, &y);
        y = next;
        let obj = weiszfeld_objective(vectors, &y);
        if obj < best_obj {
            best_obj = obj;
            best = y.clone();
        }
        if step < tol {
            break;
        }
    }

    let median = marginal_median(vectors);
    for cand in vectors.iter().map(|v| v.as_ref()).chain(std::iter::once(median.as_slice())) {
        let obj = weiszfeld_objective(vectors, cand);
        if obj < best_obj {
            best_obj = obj;
            best = cand.to_vec();
        }
    }
    best
}

/// Which input a base rule "selects" inside Bulyan. Krum selects directly (with its
/// neighbour count clamped to `[1, n - 1]` as the pool shrinks); other rules select
/// the input nearest to their output.
fn bulyan_select(
    pool: &[&[f64]],
    q: usize,
    base: Rule,
    tol: f64,
    max_iter: usize,
) -> usize {
    let n = pool.len();
    if n == 1 {
        return 0;
    }
    let out = match base {
        Rule::Krum => {
            let neighbors = (n as isize - q as isize - 2).clamp(1, n as isize - 1) as usize;
            return krum_index(pool, neighbors);
        }
        Rule::Mean => linalg::mean(pool),
        Rule::MarginalMedian => marginal_median(pool),
        Rule::GeometricMedian => geometric_median(pool, tol, max_iter),
        Rule::MeanAroundMedian => mean_around_median(pool, q.min(n - 1)),
        Rule::Bulyan => unreachable!("bulyan cannot be its own base rule"),
    };
    let mut best = (0, f64::INFINITY);
    for (i, v) in pool.iter().enumerate() {
        let dist = linalg::dist_sq(v, &out);
        if dist < best.1 {
            best = (i, dist);
        }
    }
    best.0
}

/// Bulyan: select `theta = m - 2q` candidates by repeatedly applying `base` and
/// removing its pick, then average per coordinate the `theta - 2q` candidate values
/// closest to the candidate median.
pub fn bulyan<V: AsRef<[f64]>>(
    vectors: &[V],
    q: usize,
    base: Rule,
    tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let theta = selection_size(vectors.len(), q);
    let mut pool: Vec<&[f64]> = vectors.iter().map(|v| v.as_ref()).collect();
    let mut candidates: Vec<&[f64]> = Vec::with_capacity(theta);
    for _ in 0..theta {
        let pick = bulyan_select(&pool, q, base, tol, max_iter);
        candidates.push(pool.remove(pick));
    }
    mean_around_median_keep(&candidates, theta - 2 * q)
}

/// Bulyan's candidate-set size `m - 2q`.
pub fn selection_size(m: usize, q: usize) -> usize {
    m - 2 * q
}
