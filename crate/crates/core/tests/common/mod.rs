//! Reference computations for the integration tests. Everything here is
//! written against plain slices so it shares no code path with the crate.

#![allow(dead_code)]

use rand::Rng;

/// Solves `m x = rhs` by Gaussian elimination with partial pivoting. Returns
/// `None` when a pivot falls below `1e-12` times the largest entry.
pub fn solve_linear(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 * scale {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let pivot_row = m[col].clone();
        for row in col + 1..n {
            let f = m[row][col] / pivot_row[col];
            for (v, p) in m[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *v -= f * p;
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for c in row + 1..n {
            acc -= m[row][c] * x[c];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn combine(columns: &[&[f64]], w: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (c, wi) in columns.iter().zip(w) {
        for (o, v) in out.iter_mut().zip(c.iter()) {
            *o += wi * v;
        }
    }
    out
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Closest point of the convex hull of `points` to `x`, by enumerating every
/// support set and solving its equality-constrained least squares exactly.
/// Returns `(weights, squared distance)`.
pub fn hull_bruteforce(points: &[Vec<f64>], x: &[f64]) -> (Vec<f64>, f64) {
    let k = points.len();
    let dim = x.len();
    let mut best = (vec![0.0; k], f64::INFINITY);
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let s = support.len();
        let mut m = vec![vec![0.0; s + 1]; s + 1];
        let mut rhs = vec![0.0; s + 1];
        for (r, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                m[r][c] = 2.0 * dot(&points[i], &points[j]);
            }
            m[r][s] = 1.0;
            m[s][r] = 1.0;
            rhs[r] = 2.0 * dot(&points[i], x);
        }
        rhs[s] = 1.0;
        let Some(sol) = solve_linear(m, rhs) else {
            continue;
        };
        if sol[..s].iter().any(|w| *w < -1e-10) {
            continue;
        }
        let cols: Vec<&[f64]> = support.iter().map(|&i| points[i].as_slice()).collect();
        let residual = dist2(&combine(&cols, &sol[..s], dim), x);
        if residual < best.1 {
            let mut w = vec![0.0; k];
            for (r, &i) in support.iter().enumerate() {
                w[i] = sol[r].max(0.0);
            }
            best = (w, residual);
        }
    }
    best
}

/// Squared distance from `target` to the cone `{sum c_i w_i : w >= 0}`.
pub fn cone_residual(columns: &[Vec<f64>], target: &[f64]) -> f64 {
    let k = columns.len();
    let dim = target.len();
    let mut best = dot(target, target);
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        // Square subsets are solved directly; normal equations would square
        // the conditioning of nearly opposite columns.
        let solved = if support.len() == dim {
            let m = (0..dim)
                .map(|r| support.iter().map(|&i| columns[i][r]).collect())
                .collect();
            solve_linear(m, target.to_vec())
        } else {
            let m = support
                .iter()
                .map(|&i| support.iter().map(|&j| dot(&columns[i], &columns[j])).collect())
                .collect();
            let rhs = support.iter().map(|&i| dot(&columns[i], target)).collect();
            solve_linear(m, rhs)
        };
        let Some(w) = solved else {
            continue;
        };
        if w.iter().any(|v| *v < -1e-10) {
            continue;
        }
        let cols: Vec<&[f64]> = support.iter().map(|&i| columns[i].as_slice()).collect();
        best = best.min(dist2(&combine(&cols, &w, dim), target));
    }
    best
}

/// Posterior after tabular inputs, multiplying raw Boltzmann likelihoods.
/// `q[g][s][a]`.
pub fn tabular_posterior(
    q: &[Vec<Vec<f64>>],
    beta: f64,
    steps: &[(usize, usize)],
    prior: &[f64],
) -> Vec<f64> {
    let mut p = prior.to_vec();
    for &(s, a) in steps {
        for (g, pg) in p.iter_mut().enumerate() {
            let z: f64 = q[g][s].iter().map(|v| (beta * v).exp()).sum();
            *pg *= (beta * q[g][s][a]).exp() / z;
        }
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
    }
    p
}

/// Interior grid of the probability simplex with `n` subdivisions per axis.
pub fn simplex_grid(k: usize, n: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for i in 1..left {
            prefix.push(i);
            rec(k - 1, left - i, prefix, out);
            prefix.pop();
        }
    }
    let mut raw = Vec::new();
    rec(k, n, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|c| c.into_iter().map(|v| v as f64 / n as f64).collect())
        .collect()
}

/// Indices maximizing `w . q_a`, all of them within `1e-12`.
pub fn argmax_set(vectors: &[Vec<f64>], w: &[f64]) -> Vec<usize> {
    let values: Vec<f64> = vectors.iter().map(|q| dot(q, w)).collect();
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..values.len()).filter(|&i| values[i] >= best - 1e-12).collect()
}

/// Strictly-dominated check by definition.
pub fn is_dominated(vectors: &[Vec<f64>], i: usize) -> bool {
    vectors.iter().enumerate().any(|(j, o)| {
        j != i
            && o.iter().zip(&vectors[i]).all(|(a, b)| a >= b)
            && o.iter().zip(&vectors[i]).any(|(a, b)| a > b)
    })
}

pub fn random_points<R: Rng>(rng: &mut R, k: usize, dim: usize, spread: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| (0..dim).map(|_| rng.gen_range(-spread..spread)).collect())
        .collect()
}

pub fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// A point strictly outside `conv(points)`: a hull point pushed a margin past
/// the farthest goal along a random unit direction `n`, so
/// `n . (g_i - x) <= -margin` for every goal. Returns `(x, n)`.
pub fn outside_point<R: Rng>(rng: &mut R, points: &[Vec<f64>], margin: f64) -> (Vec<f64>, Vec<f64>) {
    let dim = points[0].len();
    let mut n: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let len = norm(&n).max(1e-3);
    n.iter_mut().for_each(|v| *v /= len);
    let reach = points.iter().map(|g| dot(g, &n)).fold(f64::NEG_INFINITY, f64::max);
    let w = random_simplex(rng, points.len());
    let cols: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
    let mut x = combine(&cols, &w, dim);
    let push = reach - dot(&x, &n) + margin;
    for (xi, ni) in x.iter_mut().zip(&n) {
        *xi += ni * push;
    }
    (x, n)
}
