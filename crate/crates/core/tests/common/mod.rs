#![allow(dead_code)]

use gbpn::{Connectivity, GridGraph, MrfParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// An MRF described independently of the crate's storage conventions:
/// energy `Σ w_i (x_i - s_i)²/2 + Σ w (x_a - x_b - r)²/2`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub height: usize,
    pub width: usize,
    pub s: Vec<f64>,
    pub w_unary: Vec<f64>,
    /// `(a, b, w, r)` with `a < b`.
    pub pairs: Vec<(usize, usize, f64, f64)>,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.height * self.width
    }

    pub fn graph(&self, connectivity: Connectivity) -> GridGraph {
        let local: Vec<(usize, usize)> = self.pairs.iter().map(|&(a, b, _, _)| (a, b)).collect();
        GridGraph::from_pairs(self.height, self.width, connectivity, &local, &[]).unwrap()
    }

    pub fn params(&self, graph: &GridGraph, beta: f64) -> MrfParams<f64> {
        let n = self.n();
        let mask: Vec<bool> = self.w_unary.iter().map(|&w| w > 0.0).collect();
        MrfParams::from_undirected(
            graph,
            self.s.clone(),
            mask,
            self.w_unary.clone(),
            vec![beta; n],
            |a, b| {
                let &(_, _, w, r) = self
                    .pairs
                    .iter()
                    .find(|p| p.0 == a && p.1 == b)
                    .expect("pair present");
                (w, r)
            },
        )
        .unwrap()
    }

    /// Dense `J` and `η` built straight from the energy.
    pub fn dense(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.n();
        let mut j = vec![vec![0.0; n]; n];
        let mut eta = vec![0.0; n];
        for i in 0..n {
            j[i][i] += self.w_unary[i];
            eta[i] += self.w_unary[i] * self.s[i];
        }
        for &(a, b, w, r) in &self.pairs {
            j[a][a] += w;
            j[b][b] += w;
            j[a][b] -= w;
            j[b][a] -= w;
            eta[a] += w * r;
            eta[b] -= w * r;
        }
        (j, eta)
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        let mut e = 0.0;
        for i in 0..self.n() {
            e += 0.5 * self.w_unary[i] * (x[i] - self.s[i]).powi(2);
        }
        for &(a, b, w, r) in &self.pairs {
            e += 0.5 * w * (x[a] - x[b] - r).powi(2);
        }
        e
    }
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for k in col..=n {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (m[row][n] - s) / m[row][row];
    }
    x
}

/// Diagonal of `A⁻¹`, one column solve at a time.
pub fn dense_inverse_diag(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            dense_solve(a, &e)[i]
        })
        .collect()
}

/// All lattice pairs with random weights, residuals and a random subset of
/// measured pixels (at least one).
pub fn random_lattice(
    rng: &mut ChaCha8Rng,
    height: usize,
    width: usize,
    connectivity: Connectivity,
    measured_frac: f64,
) -> Instance {
    let n = height * width;
    let lattice = GridGraph::lattice(height, width, connectivity).unwrap();
    let pairs = lattice
        .local_pairs()
        .into_iter()
        .map(|(a, b)| (a, b, rng.gen_range(0.1..10.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let mut w_unary: Vec<f64> = (0..n)
        .map(|_| {
            if rng.gen_bool(measured_frac) {
                rng.gen_range(0.1..10.0)
            } else {
                0.0
            }
        })
        .collect();
    if w_unary.iter().all(|&w| w == 0.0) {
        w_unary[rng.gen_range(0..n)] = rng.gen_range(0.1..10.0);
    }
    Instance {
        height,
        width,
        s: (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        w_unary,
        pairs,
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
