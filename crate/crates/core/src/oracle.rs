//! Exact inference reference.
//!
//! Expands the MRF into its information form `J x = η` and solves it
//! directly. The factorization always runs in `f64`, whatever scalar the
//! caller uses.

use crate::error::{Error, Result};
use crate::graph::GridGraph;
use crate::potentials::MrfParams;
use crate::scalar::Scalar;

/// Largest system solved by Cholesky; above this, preconditioned CG.
pub const DIRECT_SOLVE_MAX: usize = 16_384;
/// Largest system for which exact marginal precisions are computed.
pub const MARGINALS_MAX: usize = 4_096;

/// Sparse symmetric information matrix plus information vector.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationSystem<T> {
    height: usize,
    width: usize,
    /// `J_ii = w_i + Σ w_ij`.
    pub diag: Vec<T>,
    /// Row offsets into `cols`/`vals` for the off-diagonal entries.
    row_offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
    pub eta: Vec<T>,
    /// Measurement weight per pixel (the anchoring part of the diagonal).
    pub unary: Vec<T>,
}

/// Expands unary and pairwise potentials into `J` and `η`. Each undirected
/// edge contributes once, in its `src < dst` orientation.
pub fn assemble_system<T: Scalar>(
    params: &MrfParams<T>,
    graph: &GridGraph,
) -> Result<InformationSystem<T>> {
    params.check_shape(graph)?;
    let n = graph.pixel_count();
    let unary: Vec<T> = (0..n).map(|i| params.unary_lambda(i)).collect();
    let mut diag = unary.clone();
    let mut eta: Vec<T> = (0..n).map(|i| params.unary_eta(i)).collect();

    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(graph.edge_count());
    let mut vals = Vec::with_capacity(graph.edge_count());
    row_offsets.push(0);
    for p in 0..n {
        for id in graph.incoming(p) {
            let w = params.w_pair[id];
            diag[p] += w;
            cols.push(graph.edge(id).src);
            vals.push(-w);
        }
        row_offsets.push(cols.len());
    }
    for id in graph.canonical_edges() {
        let e = graph.edge(id);
        let load = params.w_pair[id] * params.potential_residual(graph, id);
        eta[e.src] += load;
        eta[e.dst] -= load;
    }
    Ok(InformationSystem {
        height: graph.height(),
        width: graph.width(),
        diag,
        row_offsets,
        cols,
        vals,
        eta,
        unary,
    })
}

impl<T: Scalar> InformationSystem<T> {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    /// Off-diagonal entries `(col, J_row,col)` of one row, ascending by column.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_offsets[row]..self.row_offsets[row + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// Dense copy of `J`, row-major.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.size();
        let mut m = vec![vec![T::zero(); n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            for (j, v) in self.row(i) {
                m[i][j] += v;
            }
        }
        m
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.size())
            .map(|i| self.diag[i] * x[i] + self.row(i).map(|(j, v)| v * x[j]).sum::<T>())
            .collect()
    }

    /// `‖J x − η‖∞`.
    pub fn residual_inf(&self, x: &[T]) -> T {
        self.matvec(x)
            .iter()
            .zip(&self.eta)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// `½ xᵀ J x − ηᵀ x`.
    pub fn energy(&self, x: &[T]) -> T {
        let jx = self.matvec(x);
        let half = T::lit(0.5);
        x.iter()
            .zip(&jx)
            .zip(&self.eta)
            .map(|((&xi, &ji), &ei)| half * xi * ji - ei * xi)
            .sum()
    }

    /// Fails with [`Error::Singular`] naming the first connected component
    /// that has no measurement.
    pub fn check_anchored(&self) -> Result<()> {
        let n = self.size();
        let mut comp = vec![usize::MAX; n];
        let mut stack = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = start;
            stack.push(start);
            let mut size = 0usize;
            let mut anchored = false;
            while let Some(p) = stack.pop() {
                size += 1;
                anchored |= self.unary[p] > T::zero();
                for (q, _) in self.row(p) {
                    if comp[q] == usize::MAX {
                        comp[q] = start;
                        stack.push(q);
                    }
                }
            }
            if !anchored {
                return Err(Error::Singular(format!(
                    "component containing pixel ({}, {}) has {size} pixel(s) and no measurement",
                    start / self.width,
                    start % self.width
                )));
            }
        }
        Ok(())
    }

    fn diag_f64(&self) -> Vec<f64> {
        self.diag.iter().map(|v| v.to_f64_lossy()).collect()
    }

    fn factor(&self) -> Result<EnvelopeCholesky> {
        self.check_anchored()?;
        EnvelopeCholesky::factor(self)
    }
}

/// Solves `J μ = η` to `‖J μ − η‖∞ ≤ tol · (1 + ‖η‖∞)`.
pub fn solve_exact<T: Scalar>(sys: &InformationSystem<T>, tol: T) -> Result<Vec<T>> {
    let tol = tol.to_f64_lossy();
    let eta: Vec<f64> = sys.eta.iter().map(|v| v.to_f64_lossy()).collect();
    let bound = tol * (1.0 + eta.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let x = if sys.size() <= DIRECT_SOLVE_MAX {
        let chol = sys.factor()?;
        let mut x = chol.solve(&eta);
        // a couple of refinement steps recover accuracy lost to conditioning
        for _ in 0..3 {
            let r = residual_f64(sys, &x, &eta);
            if inf_norm(&r) <= bound {
                break;
            }
            let dx = chol.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        }
        x
    } else {
        sys.check_anchored()?;
        pcg(sys, &eta, bound)?
    };
    let res = inf_norm(&residual_f64(sys, &x, &eta));
    if res > bound {
        return Err(Error::NotConverged(format!(
            "residual {res:e} exceeds bound {bound:e}"
        )));
    }
    Ok(x.into_iter().map(T::lit).collect())
}

/// Exact marginal precisions `1 / (J⁻¹)_ii`.
pub fn exact_marginal_precisions<T: Scalar>(sys: &InformationSystem<T>) -> Result<Vec<T>> {
    let n = sys.size();
    if n > MARGINALS_MAX {
        return Err(Error::SizeExceeded(format!(
            "exact marginals limited to {MARGINALS_MAX} pixels, got {n}"
        )));
    }
    let chol = sys.factor()?;
    Ok((0..n).map(|i| T::lit(1.0 / chol.inverse_diag(i))).collect())
}

fn matvec_f64<T: Scalar>(sys: &InformationSystem<T>, x: &[f64]) -> Vec<f64> {
    (0..sys.size())
        .map(|i| {
            let mut acc = sys.diag[i].to_f64_lossy() * x[i];
            for (j, v) in sys.row(i) {
                acc += v.to_f64_lossy() * x[j];
            }
            acc
        })
        .collect()
}

fn residual_f64<T: Scalar>(sys: &InformationSystem<T>, x: &[f64], b: &[f64]) -> Vec<f64> {
    matvec_f64(sys, x)
        .into_iter()
        .zip(b)
        .map(|(ax, bi)| bi - ax)
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Cholesky factor stored row by row over each row's envelope
/// `first[i] ..= i`. Row-major pixel order keeps the envelope within a few
/// image rows of the diagonal.
struct EnvelopeCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    fn factor<T: Scalar>(sys: &InformationSystem<T>) -> Result<Self> {
        let n = sys.size();
        let first: Vec<usize> = (0..n)
            .map(|i| sys.row(i).map(|(j, _)| j).min().unwrap_or(i).min(i))
            .collect();
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + i - first[i] + 1);
        }
        let mut values = vec![0.0f64; start[n]];
        let diag = sys.diag_f64();
        for i in 0..n {
            values[start[i] + i - first[i]] = diag[i];
            for (j, v) in sys.row(i) {
                if j < i {
                    values[start[i] + j - first[i]] += v.to_f64_lossy();
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let (head, tail) = values.split_at_mut(start[i]);
                let row_i = &mut tail[..i - fi + 1];
                let dot: f64 = if j < i {
                    let row_j = &head[start[j]..start[j] + j - fj + 1];
                    row_i[k0 - fi..j - fi]
                        .iter()
                        .zip(&row_j[k0 - fj..j - fj])
                        .map(|(a, b)| a * b)
                        .sum()
                } else {
                    row_i[..i - fi].iter().map(|a| a * a).sum()
                };
                let s = row_i[j - fi] - dot;
                if j < i {
                    let ljj = head[start[j] + j - fj];
                    row_i[j - fi] = s / ljj;
                } else {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Singular(format!(
                            "matrix not positive definite at pixel {i} (pivot {s:e})"
                        )));
                    }
                    row_i[i - fi] = s.sqrt();
                }
            }
        }
        Ok(Self {
            first,
            start,
            values,
        })
    }

    fn entry(&self, i: usize, k: usize) -> f64 {
        self.values[self.start[i] + k - self.first[i]]
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.first.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let dot: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let xi = y[i];
            for (k, l) in (fi..i).zip(&row[..i - fi]) {
                y[k] -= l * xi;
            }
        }
        y
    }

    /// `(J⁻¹)_ii = ‖L⁻¹ e_i‖²`.
    fn inverse_diag(&self, i: usize) -> f64 {
        let n = self.first.len();
        let mut z = vec![0.0f64; n];
        z[i] = 1.0 / self.entry(i, i);
        let mut acc = z[i] * z[i];
        for k in i + 1..n {
            let fk = self.first[k];
            if fk > k {
                continue;
            }
            let lo = fk.max(i);
            if lo >= k {
                continue;
            }
            let row = &self.values[self.start[k]..self.start[k + 1]];
            let dot: f64 = row[lo - fk..k - fk]
                .iter()
                .zip(&z[lo..k])
                .map(|(a, b)| a * b)
                .sum();
            z[k] = -dot / row[k - fk];
            acc += z[k] * z[k];
        }
        acc
    }
}

/// Jacobi-preconditioned conjugate gradient.
fn pcg<T: Scalar>(sys: &InformationSystem<T>, b: &[f64], bound: f64) -> Result<Vec<f64>> {
    let n = sys.size();
    let diag = sys.diag_f64();
    let mut x = vec![0.0f64; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let max_iter = (20 * n).max(1000);
    for _ in 0..max_iter {
        if inf_norm(&r) <= 0.5 * bound {
            return Ok(x);
        }
        let ap = matvec_f64(sys, &p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::Singular("conjugate gradient hit a non-positive curvature".into()));
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
        z = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    if inf_norm(&residual_f64(sys, &x, b)) <= bound {
        return Ok(x);
    }
    Err(Error::NotConverged(format!(
        "conjugate gradient did not reach {bound:e} in {max_iter} iterations"
    )))
}
