//! k-means with k-means++ seeding and Hamerly's bounds, plus the choice of
//! one representative member per cluster.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
pub const SHIFT_TOLERANCE: f64 = 1e-6;

/// Row-major points of a common dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Points {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim));
        Self { dim, data }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Squared Euclidean distance, summed in four lanes so it vectorizes.
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| (x - y) * (x - y)).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            let d = x[i] - y[i];
            acc[i] += d * d;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Clone, Debug)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

/// Above this many point-centroid pairs the per-centroid bounds of Elkan's
/// method take too much memory and Hamerly's single bound is used instead.
const ELKAN_MAX_BOUNDS: usize = 32_000_000;

/// Lloyd's algorithm from k-means++ seeding, accelerated with triangle
/// inequality bounds (Elkan's for small `n·c`, Hamerly's otherwise); both
/// reach the same assignments as plain Lloyd. `c` must not exceed the number
/// of distinct points.
pub fn kmeans(points: &Points, c: usize, seed: u64) -> KMeans {
    let centroids = seed_plus_plus(points, c, seed);
    if points.len() * c <= ELKAN_MAX_BOUNDS {
        elkan(points, centroids)
    } else {
        hamerly(points, centroids)
    }
}

fn seed_plus_plus(points: &Points, c: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = vec![points.get(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(points.get(i), &centroids[0])).collect();
    let mut nearest = vec![0usize; n];
    while centroids.len() < c {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        };
        let cen = points.get(next).to_vec();
        // a point can only move to the new seed if it is closer than twice
        // its current distance from the point's nearest seed
        let gap: Vec<f64> = centroids.iter().map(|o| dist2(o, &cen)).collect();
        let new = centroids.len();
        for (i, d) in d2.iter_mut().enumerate() {
            if gap[nearest[i]] >= 4.0 * *d {
                continue;
            }
            let e = dist2(points.get(i), &cen);
            if e < *d {
                *d = e;
                nearest[i] = new;
            }
        }
        centroids.push(cen);
    }
    centroids
}

/// Per-cluster coordinate sums and sizes, updated as points move.
struct Sums {
    sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
}

impl Sums {
    fn new(points: &Points, c: usize, assignment: &[usize]) -> Self {
        let mut s = Sums { sums: vec![vec![0.0; points.dim]; c], counts: vec![0; c] };
        for (i, &a) in assignment.iter().enumerate() {
            s.counts[a] += 1;
            for (acc, x) in s.sums[a].iter_mut().zip(points.get(i)) {
                *acc += x;
            }
        }
        s
    }

    fn moved(&mut self, x: &[f64], from: usize, to: usize) {
        self.counts[from] -= 1;
        self.counts[to] += 1;
        for (k, v) in x.iter().enumerate() {
            self.sums[from][k] -= v;
            self.sums[to][k] += v;
        }
    }

    /// Moves every non-empty centroid to its cluster mean; returns the shifts.
    fn update(&self, centroids: &mut [Vec<f64>]) -> Vec<f64> {
        let mut shift = vec![0.0; centroids.len()];
        for (j, cen) in centroids.iter_mut().enumerate() {
            if self.counts[j] > 0 {
                let new: Vec<f64> = self.sums[j].iter().map(|s| s / self.counts[j] as f64).collect();
                shift[j] = dist2(&new, cen).sqrt();
                *cen = new;
            }
        }
        shift
    }
}

/// Centroid distance matrix and half the distance from each centroid to its
/// closest other centroid.
fn centroid_gaps(centroids: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let c = centroids.len();
    let mut cc = vec![0.0; c * c];
    for j in 0..c {
        for o in j + 1..c {
            let d = dist2(&centroids[j], &centroids[o]).sqrt();
            cc[j * c + o] = d;
            cc[o * c + j] = d;
        }
    }
    let s = (0..c).map(|j| (0..c).filter(|&o| o != j).map(|o| cc[j * c + o]).fold(f64::INFINITY, f64::min) / 2.0).collect();
    (cc, s)
}

/// Elkan's method. Bounds are stored relative to each centroid's total
/// drift so that moving the centroids does not touch every bound: the lower
/// bound of point `i` against centroid `j` is `lower[i·c+j] - drift[j]`, its
/// upper bound `upper[i] + drift[a]` for its centroid `a`.
fn elkan(points: &Points, mut centroids: Vec<Vec<f64>>) -> KMeans {
    let (n, c) = (points.len(), centroids.len());
    let mut lower = vec![0.0f64; n * c];
    let mut assignment = vec![0usize; n];
    let mut upper = vec![0.0f64; n];
    let mut drift = vec![0.0f64; c];
    for i in 0..n {
        let x = points.get(i);
        let lb = &mut lower[i * c..(i + 1) * c];
        let (mut best, mut b1) = (0, f64::INFINITY);
        for (j, cen) in centroids.iter().enumerate() {
            let d = dist2(x, cen).sqrt();
            lb[j] = d;
            if d < b1 {
                best = j;
                b1 = d;
            }
        }
        assignment[i] = best;
        upper[i] = b1;
    }
    let mut sums = Sums::new(points, c, &assignment);

    let mut iterations = 0;
    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        let shift = sums.update(&mut centroids);
        if shift.iter().copied().fold(0.0, f64::max) < SHIFT_TOLERANCE {
            break;
        }
        for (d, s) in drift.iter_mut().zip(&shift) {
            *d += s;
        }
        let (cc, s) = centroid_gaps(&centroids);
        for i in 0..n {
            let mut a = assignment[i];
            let mut u = upper[i] + drift[a];
            if u <= s[a] {
                continue;
            }
            let x = points.get(i);
            let lb = &mut lower[i * c..(i + 1) * c];
            let mut tight = false;
            for j in 0..c {
                // ties go to the smaller index, as in a plain scan
                if j == a || u < lb[j] - drift[j] || u < cc[a * c + j] / 2.0 {
                    continue;
                }
                if !tight {
                    u = dist2(x, &centroids[a]).sqrt();
                    lb[a] = u + drift[a];
                    tight = true;
                    if u < lb[j] - drift[j] || u < cc[a * c + j] / 2.0 {
                        continue;
                    }
                }
                let d = dist2(x, &centroids[j]).sqrt();
                lb[j] = d + drift[j];
                if d < u || (d == u && j < a) {
                    a = j;
                    u = d;
                }
            }
            upper[i] = u - drift[a];
            if a != assignment[i] {
                sums.moved(x, assignment[i], a);
                assignment[i] = a;
            }
        }
    }
    KMeans { centroids, assignment, iterations }
}

fn hamerly(points: &Points, mut centroids: Vec<Vec<f64>>) -> KMeans {
    let (n, c) = (points.len(), centroids.len());
    let mut assignment = vec![0usize; n];
    let mut upper = vec![f64::INFINITY; n];
    let mut lower = vec![0.0f64; n];
    for i in 0..n {
        let (mut best, mut b1, mut b2) = (0, f64::INFINITY, f64::INFINITY);
        for (j, cen) in centroids.iter().enumerate() {
            let d = dist2(points.get(i), cen);
            if d < b1 {
                b2 = b1;
                b1 = d;
                best = j;
            } else if d < b2 {
                b2 = d;
            }
        }
        assignment[i] = best;
        upper[i] = b1.sqrt();
        lower[i] = b2.sqrt();
    }
    let mut sums = Sums::new(points, c, &assignment);

    let mut iterations = 0;
    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        let shift = sums.update(&mut centroids);
        if shift.iter().copied().fold(0.0, f64::max) < SHIFT_TOLERANCE {
            break;
        }
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|&a, &b| shift[b].total_cmp(&shift[a]));
        let (top, second) = (order[0], order.get(1).copied().unwrap_or(order[0]));
        for i in 0..n {
            upper[i] += shift[assignment[i]];
            lower[i] -= if assignment[i] == top { shift[second] } else { shift[top] };
        }
        let (cc, s) = centroid_gaps(&centroids);
        for i in 0..n {
            let bound = s[assignment[i]].max(lower[i]);
            if upper[i] <= bound {
                continue;
            }
            upper[i] = dist2(points.get(i), &centroids[assignment[i]]).sqrt();
            if upper[i] <= bound {
                continue;
            }
            let (a, u, l) = nearest_two_pruned(points.get(i), &centroids, assignment[i], upper[i], &cc[assignment[i] * c..]);
            if a != assignment[i] {
                sums.moved(points.get(i), assignment[i], a);
            }
            assignment[i] = a;
            upper[i] = u;
            lower[i] = l;
        }
    }
    KMeans { centroids, assignment, iterations }
}

/// Nearest and second-nearest centroid of `x`, given its exact distance `u`
/// to centroid `a` and the distances `cc` from `a` to every centroid. A
/// centroid with `cc[j] > 2u` cannot be nearer than `a`; for it only the
/// lower bound `cc[j] - u` enters the second distance.
fn nearest_two_pruned(x: &[f64], centroids: &[Vec<f64>], a: usize, u: f64, cc: &[f64]) -> (usize, f64, f64) {
    let (mut best, mut b1, mut b2) = (a, u, f64::INFINITY);
    for (j, cen) in centroids.iter().enumerate() {
        if j == a {
            continue;
        }
        if cc[j] > 2.0 * u {
            b2 = b2.min(cc[j] - u);
            continue;
        }
        let d = dist2(x, cen).sqrt();
        if d < b1 || (d == b1 && j < best) {
            b2 = b1;
            b1 = d;
            best = j;
        } else if d < b2 {
            b2 = d;
        }
    }
    (best, b1, b2)
}

/// Picks `c` ids: the member nearest each k-means centroid (ties to the
/// smallest id). When there are at most `c` distinct vectors, every distinct
/// vector is represented by its smallest id and the remaining slots are
/// filled with the smallest unused ids. The result is sorted.
pub fn centroid_representatives(ids: &[u32], points: &Points, c: usize, seed: u64) -> Result<Vec<u32>> {
    if points.is_empty() || ids.is_empty() {
        return Err(Error::Selection("no vectors to cluster".into()));
    }
    if ids.len() != points.len() {
        return Err(Error::Selection("ids and vectors differ in length".into()));
    }
    if c == 0 {
        return Err(Error::Parameter("cluster count must be positive".into()));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| ids[i]);

    // smallest id of each distinct vector, in first-seen (ascending id) order
    let mut distinct: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut reps = Vec::new();
    for &i in &order {
        let key: Vec<u64> = points.get(i).iter().map(|x| x.to_bits()).collect();
        distinct.entry(key).or_insert_with(|| {
            reps.push(i);
            i
        });
    }

    let mut chosen: Vec<usize> = if reps.len() <= c {
        reps
    } else {
        let km = kmeans(points, c, seed);
        let mut best: Vec<Option<(f64, u32, usize)>> = vec![None; c];
        for i in 0..points.len() {
            let j = km.assignment[i];
            let d = dist2(points.get(i), &km.centroids[j]);
            let cand = (d, ids[i], i);
            if best[j].is_none_or(|b| (cand.0, cand.1) < (b.0, b.1)) {
                best[j] = Some(cand);
            }
        }
        best.into_iter().flatten().map(|(_, _, i)| i).collect()
    };
    if chosen.len() < c {
        let taken: std::collections::HashSet<usize> = chosen.iter().copied().collect();
        let fill: Vec<usize> = order.iter().copied().filter(|i| !taken.contains(i)).take(c - chosen.len()).collect();
        chosen.extend(fill);
    }
    let mut out: Vec<u32> = chosen.into_iter().map(|i| ids[i]).collect();
    out.sort_unstable();
    Ok(out)
}
