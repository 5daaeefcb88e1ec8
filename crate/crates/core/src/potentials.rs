//! MRF parameters: unary measurement terms, pairwise weights and residuals,
//! and the per-pixel damping field.
//!
//! Pairwise quantities are stored per directed edge, aligned with the edge
//! ids of the owning [`GridGraph`]. The residual on edge `src -> dst` is the
//! offset added to the source's cavity mean when it sends to `dst`, so an
//! undirected potential `w (x_i - x_j - r)^2 / 2` stores `+r` on `j -> i` and
//! `-r` on `i -> j`.

mod file;

pub use file::{load_params, load_params_with_floor, save_params, PARAM_MAGIC};

use log::warn;

use crate::error::{Error, Result};
use crate::graph::GridGraph;
use crate::raster::DepthGrid;
use crate::scalar::Scalar;

pub const DEFAULT_W_MIN: f64 = 1e-6;

/// Constants of the hand-crafted guide-image construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialConfig<T> {
    pub w_meas: T,
    pub lambda_smooth: T,
    pub sigma_color: T,
    pub w_min: T,
    pub beta_const: T,
}

impl<T: Scalar> Default for PotentialConfig<T> {
    fn default() -> Self {
        Self {
            w_meas: T::one(),
            lambda_smooth: T::one(),
            sigma_color: T::lit(0.1),
            w_min: T::lit(DEFAULT_W_MIN),
            beta_const: T::lit(0.3),
        }
    }
}

impl<T: Scalar> PotentialConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("w_meas", self.w_meas),
            ("lambda_smooth", self.lambda_smooth),
            ("sigma_color", self.sigma_color),
            ("w_min", self.w_min),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        check_beta(self.beta_const)
    }
}

pub(crate) fn check_beta<T: Scalar>(beta: T) -> Result<()> {
    if beta >= T::zero() && beta < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "damping beta must lie in [0, 1), got {beta}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrfParams<T> {
    height: usize,
    width: usize,
    /// Measurement value, zero where the mask is false.
    pub s: Vec<T>,
    pub measurement_mask: Vec<bool>,
    pub w_unary: Vec<T>,
    /// Per directed edge, indexed by graph edge id.
    pub w_pair: Vec<T>,
    /// Per directed edge message offset (see module docs).
    pub r_pair: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Scalar> MrfParams<T> {
    /// Assembles parameters from per-pixel arrays and a callback giving
    /// `(w, r)` for each undirected pair `(lo, hi)`, interpreted as the
    /// potential `w (x_lo - x_hi - r)^2 / 2`.
    pub fn from_undirected(
        graph: &GridGraph,
        s: Vec<T>,
        measurement_mask: Vec<bool>,
        w_unary: Vec<T>,
        beta: Vec<T>,
        mut pair: impl FnMut(usize, usize) -> (T, T),
    ) -> Result<Self> {
        let n = graph.pixel_count();
        for (name, len) in [
            ("s", s.len()),
            ("measurement_mask", measurement_mask.len()),
            ("w_unary", w_unary.len()),
            ("beta", beta.len()),
        ] {
            if len != n {
                return Err(Error::ShapeMismatch(format!(
                    "{name} has {len} entries, graph has {n} pixels"
                )));
            }
        }
        let mut w_pair = vec![T::zero(); graph.edge_count()];
        let mut r_pair = vec![T::zero(); graph.edge_count()];
        for id in graph.canonical_edges() {
            let e = graph.edge(id);
            let (w, r) = pair(e.src, e.dst);
            let rev = graph.reverse(id);
            w_pair[id] = w;
            w_pair[rev] = w;
            // id is lo -> hi: message to hi carries -r; hi -> lo carries +r
            r_pair[id] = -r;
            r_pair[rev] = r;
        }
        let s = s
            .into_iter()
            .zip(&measurement_mask)
            .map(|(v, &m)| if m { v } else { T::zero() })
            .collect();
        Ok(Self {
            height: graph.height(),
            width: graph.width(),
            s,
            measurement_mask,
            w_unary,
            w_pair,
            r_pair,
            beta,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// Residual of the undirected potential for canonical edge `id`
    /// (`src < dst`), in `(x_src - x_dst - r)` orientation.
    pub fn potential_residual(&self, graph: &GridGraph, id: usize) -> T {
        self.r_pair[graph.reverse(id)]
    }

    /// Unary information contribution `w_i s_i`, zero off-mask.
    pub fn unary_eta(&self, pixel: usize) -> T {
        if self.measurement_mask[pixel] {
            self.w_unary[pixel] * self.s[pixel]
        } else {
            T::zero()
        }
    }

    pub fn unary_lambda(&self, pixel: usize) -> T {
        if self.measurement_mask[pixel] {
            self.w_unary[pixel]
        } else {
            T::zero()
        }
    }

    /// True when at least one pixel carries a positive measurement weight.
    pub fn is_anchored(&self) -> bool {
        self.w_unary
            .iter()
            .zip(&self.measurement_mask)
            .any(|(&w, &m)| m && w > T::zero())
    }

    pub fn check_shape(&self, graph: &GridGraph) -> Result<()> {
        if (self.height, self.width) != graph.shape()
            || self.w_pair.len() != graph.edge_count()
            || self.r_pair.len() != graph.edge_count()
        {
            return Err(Error::ShapeMismatch(format!(
                "params for {}x{} with {} edges vs graph {}x{} with {} edges",
                self.height,
                self.width,
                self.w_pair.len(),
                graph.height(),
                graph.width(),
                graph.edge_count()
            )));
        }
        let n = self.pixel_count();
        if self.s.len() != n
            || self.measurement_mask.len() != n
            || self.w_unary.len() != n
            || self.beta.len() != n
        {
            return Err(Error::ShapeMismatch("per-pixel array length".into()));
        }
        Ok(())
    }

    /// Checks every invariant against `graph`. An empty measurement set is
    /// reported as a warning only: it is representable, just not solvable.
    pub fn validate(&self, graph: &GridGraph, w_min: T) -> Result<()> {
        self.check_shape(graph)?;
        for i in 0..self.pixel_count() {
            let w = self.w_unary[i];
            if !(w >= T::zero()) || !w.is_finite() {
                return Err(Error::Validation(format!(
                    "pixel {i}: unary weight {w} must be finite and >= 0"
                )));
            }
            if w > T::zero() && !self.measurement_mask[i] {
                return Err(Error::Validation(format!(
                    "pixel {i}: positive unary weight outside the measurement mask"
                )));
            }
            if self.measurement_mask[i] && !self.s[i].is_finite() {
                return Err(Error::Validation(format!(
                    "pixel {i}: measurement is not finite"
                )));
            }
            check_beta(self.beta[i])
                .map_err(|_| Error::Validation(format!("pixel {i}: beta {} not in [0, 1)", self.beta[i])))?;
        }
        for id in 0..graph.edge_count() {
            let e = graph.edge(id);
            let rev = graph.reverse(id);
            let (w, r) = (self.w_pair[id], self.r_pair[id]);
            if !(w >= w_min) || !w.is_finite() {
                return Err(Error::Validation(format!(
                    "edge {} -> {}: weight {w} below floor {w_min}",
                    e.src, e.dst
                )));
            }
            if !r.is_finite() {
                return Err(Error::Validation(format!(
                    "edge {} -> {}: residual is not finite",
                    e.src, e.dst
                )));
            }
            if self.w_pair[rev] != w || self.r_pair[rev] != -r {
                return Err(Error::Validation(format!(
                    "edge {} -> {}: weight/residual not symmetric with its reverse",
                    e.src, e.dst
                )));
            }
        }
        if !self.is_anchored() {
            warn!("no pixel carries a measurement; the posterior is improper");
        }
        Ok(())
    }

    /// Same parameters with every unary and pairwise weight multiplied by `gamma`.
    pub fn scaled(&self, gamma: T) -> Self {
        let mut out = self.clone();
        out.w_unary.iter_mut().for_each(|w| *w *= gamma);
        out.w_pair.iter_mut().for_each(|w| *w *= gamma);
        out
    }

    /// Converts every array to another scalar type.
    pub fn cast<U: Scalar>(&self) -> MrfParams<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::lit(x.to_f64_lossy())).collect();
        MrfParams {
            height: self.height,
            width: self.width,
            s: conv(&self.s),
            measurement_mask: self.measurement_mask.clone(),
            w_unary: conv(&self.w_unary),
            w_pair: conv(&self.w_pair),
            r_pair: conv(&self.r_pair),
            beta: conv(&self.beta),
        }
    }

    /// Same parameters with `c` added to every measurement.
    pub fn shifted(&self, c: T) -> Self {
        let mut out = self.clone();
        for (s, &m) in out.s.iter_mut().zip(&self.measurement_mask) {
            if m {
                *s += c;
            }
        }
        out
    }
}

/// Hand-crafted construction: edge weights from guide color similarity,
/// unary weights on valid sparse pixels, zero residuals, constant damping.
pub fn params_from_guide<T: Scalar>(
    guide: &DepthGrid<T>,
    sparse: &DepthGrid<T>,
    graph: &GridGraph,
    cfg: &PotentialConfig<T>,
) -> Result<MrfParams<T>> {
    cfg.validate()?;
    guide.ensure_same_shape(sparse, "guide vs sparse")?;
    if guide.shape() != graph.shape() {
        return Err(Error::ShapeMismatch(format!(
            "guide {}x{} vs graph {}x{}",
            guide.height(),
            guide.width(),
            graph.height(),
            graph.width()
        )));
    }
    let n = graph.pixel_count();
    let mask: Vec<bool> = (0..n).map(|i| sparse.is_valid(i)).collect();
    let s: Vec<T> = (0..n)
        .map(|i| sparse.value(i).unwrap_or_else(T::zero))
        .collect();
    let w_unary = mask
        .iter()
        .map(|&m| if m { cfg.w_meas } else { T::zero() })
        .collect();
    let two_sigma2 = T::lit(2.0) * cfg.sigma_color * cfg.sigma_color;
    let weight = |a: usize, b: usize| {
        let d2: T = guide
            .pixel(a)
            .iter()
            .zip(guide.pixel(b))
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        let w = cfg.lambda_smooth * (-d2 / two_sigma2).exp();
        if w > cfg.w_min {
            w
        } else {
            cfg.w_min
        }
    };
    MrfParams::from_undirected(
        graph,
        s,
        mask,
        w_unary,
        vec![cfg.beta_const; n],
        |a, b| (weight(a, b), T::zero()),
    )
}
