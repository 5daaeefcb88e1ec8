//! Canonical-form Gaussian belief propagation with damping.
//!
//! One outer iteration runs four directional serial sweeps (LR, TB, RL, BT)
//! followed by `nonlocal_steps` Jacobi-style updates over the non-local edges.
//! Within a sweep, lines are processed in order and the beliefs on a line are
//! refreshed before the next line reads them, so a single sweep carries
//! information across the whole image.
//!
//! Every message on a line depends only on the previous line, so lines are
//! split across the rayon pool. Results are collected in a fixed order and
//! belief sums always run over the incoming edges in id order, which keeps
//! the output bit-identical regardless of thread count.

use std::time::Instant;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{GridGraph, Sweep};
use crate::potentials::{check_beta, MrfParams};
use crate::raster::DepthGrid;
use crate::scalar::Scalar;

/// Below this many items a line is processed on the calling thread.
const PAR_MIN_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    /// Outer iterations `T`.
    pub iterations: usize,
    /// Parallel non-local steps per outer iteration `T_n`.
    pub nonlocal_steps: usize,
    /// Cavity precision at or below which a message is vacuous.
    pub epsilon_cavity: T,
    /// Stop once max |Δμ| over informative pixels drops below this.
    pub early_stop_tol: Option<T>,
    pub record_trace: bool,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            iterations: 5,
            nonlocal_steps: 1,
            epsilon_cavity: T::lit(1e-12),
            early_stop_tol: None,
            record_trace: false,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be >= 1".into()));
        }
        if !(self.epsilon_cavity > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon_cavity must be positive, got {}",
                self.epsilon_cavity
            )));
        }
        if let Some(tol) = self.early_stop_tol {
            if !(tol >= T::zero()) {
                return Err(Error::InvalidParameter(format!(
                    "early_stop_tol must be >= 0, got {tol}"
                )));
            }
        }
        Ok(())
    }
}

/// Gaussian message in canonical form, one per directed edge.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageStore<T> {
    pub eta: Vec<T>,
    pub lambda: Vec<T>,
}

impl<T: Scalar> MessageStore<T> {
    pub fn zeros(edges: usize) -> Self {
        Self {
            eta: vec![T::zero(); edges],
            lambda: vec![T::zero(); edges],
        }
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn get(&self, edge: usize) -> (T, T) {
        (self.eta[edge], self.lambda[edge])
    }

    /// Largest absolute difference over both parameters of every message.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.eta
            .iter()
            .zip(&other.eta)
            .chain(self.lambda.iter().zip(&other.lambda))
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}

/// Per-pixel belief in canonical form.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMap<T> {
    height: usize,
    width: usize,
    pub eta: Vec<T>,
    pub lambda: Vec<T>,
}

impl<T: Scalar> BeliefMap<T> {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            eta: vec![T::zero(); height * width],
            lambda: vec![T::zero(); height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    /// Posterior mean `η/Λ`, `None` while the belief carries no precision.
    pub fn mean(&self, pixel: usize) -> Option<T> {
        let lam = self.lambda[pixel];
        (lam > T::zero()).then(|| self.eta[pixel] / lam)
    }

    pub fn precision(&self, pixel: usize) -> T {
        self.lambda[pixel]
    }

    pub fn means(&self) -> Vec<Option<T>> {
        (0..self.len()).map(|i| self.mean(i)).collect()
    }

    /// Mean as a raster; pixels with zero precision are invalid.
    pub fn mean_grid(&self) -> DepthGrid<T> {
        let mut g = DepthGrid::new(self.height, self.width, 1).expect("nonzero dims");
        for i in 0..self.len() {
            if let Some(mu) = self.mean(i) {
                g.set_index(i, mu);
            }
        }
        g
    }

    /// Precision as a fully valid raster.
    pub fn precision_grid(&self) -> DepthGrid<T> {
        DepthGrid::from_values(self.height, self.width, self.lambda.clone()).expect("nonzero dims")
    }

    /// Fraction of pixels with positive precision.
    pub fn coverage(&self) -> f64 {
        let n = self.lambda.iter().filter(|&&l| l > T::zero()).count();
        n as f64 / self.len() as f64
    }
}

/// Sends a Gaussian through a pairwise potential: mean shifts by `r`,
/// variance grows by `1/w`. A cavity at or below `epsilon_cavity` precision
/// yields the vacuous message `(0, 0)`.
pub fn message_update<T: Scalar>(
    cavity_eta: T,
    cavity_lambda: T,
    w: T,
    r: T,
    epsilon_cavity: T,
) -> Result<(T, T)> {
    if !(w > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "pairwise weight must be positive, got {w}"
        )));
    }
    Ok(message_kernel(cavity_eta, cavity_lambda, w, r, epsilon_cavity))
}

#[inline]
fn message_kernel<T: Scalar>(eta: T, lambda: T, w: T, r: T, eps: T) -> (T, T) {
    if lambda <= eps {
        return (T::zero(), T::zero());
    }
    let mean = eta / lambda;
    // (1/Λ + 1/w)^-1 without forming the reciprocals
    let lam_msg = lambda * w / (lambda + w);
    (lam_msg * (mean + r), lam_msg)
}

/// Convex blend of the stored and freshly computed message.
pub fn damp<T: Scalar>(prev: (T, T), fresh: (T, T), beta: T) -> Result<(T, T)> {
    check_beta(beta)?;
    Ok(damp_kernel(prev, fresh, beta))
}

#[inline]
fn damp_kernel<T: Scalar>(prev: (T, T), fresh: (T, T), beta: T) -> (T, T) {
    if beta == T::zero() {
        return fresh;
    }
    let keep = T::one() - beta;
    (
        beta * prev.0 + keep * fresh.0,
        beta * prev.1 + keep * fresh.1,
    )
}

/// Belief at `pixel` from unary evidence plus every incoming message.
pub fn belief_update<T: Scalar>(
    pixel: usize,
    params: &MrfParams<T>,
    store: &MessageStore<T>,
    graph: &GridGraph,
) -> (T, T) {
    let mut eta = params.unary_eta(pixel);
    let mut lambda = params.unary_lambda(pixel);
    for id in graph.incoming(pixel) {
        eta += store.eta[id];
        lambda += store.lambda[id];
    }
    (eta, lambda)
}

/// One entry of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow<T> {
    pub iteration: usize,
    /// Max |Δμ| over pixels informative after the iteration; infinite when a
    /// pixel became informative during it.
    pub max_delta_mu: T,
    pub mean_lambda: T,
    pub elapsed_ms: f64,
}

impl<T: Scalar> TraceRow<T> {
    /// Tab-separated: iteration, max|Δμ|, mean Λ, wall-clock ms.
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:e}\t{:e}\t{:.3}",
            self.iteration, self.max_delta_mu, self.mean_lambda, self.elapsed_ms
        )
    }
}

#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub beliefs: BeliefMap<T>,
    pub messages: MessageStore<T>,
    pub iterations_run: usize,
    pub trace: Vec<TraceRow<T>>,
}

/// Solver state for one run. Owns its messages and beliefs exclusively.
pub struct Solver<'a, T> {
    graph: &'a GridGraph,
    params: &'a MrfParams<T>,
    cfg: SolverConfig<T>,
    messages: MessageStore<T>,
    beliefs: BeliefMap<T>,
}

impl<'a, T: Scalar> Solver<'a, T> {
    /// Zero messages; beliefs hold the unary evidence only.
    pub fn new(params: &'a MrfParams<T>, graph: &'a GridGraph, cfg: SolverConfig<T>) -> Result<Self> {
        cfg.validate()?;
        params.check_shape(graph)?;
        if !params.is_anchored() {
            warn!("no measurements: precision stays zero on every pixel");
        }
        let mut solver = Self {
            graph,
            params,
            cfg,
            messages: MessageStore::zeros(graph.edge_count()),
            beliefs: BeliefMap::zeros(graph.height(), graph.width()),
        };
        solver.refresh_all_beliefs();
        Ok(solver)
    }

    pub fn messages(&self) -> &MessageStore<T> {
        &self.messages
    }

    pub fn beliefs(&self) -> &BeliefMap<T> {
        &self.beliefs
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.cfg
    }

    /// Replaces the message state and recomputes every belief from it.
    pub fn set_messages(&mut self, messages: MessageStore<T>) -> Result<()> {
        if messages.len() != self.graph.edge_count() || messages.lambda.len() != messages.eta.len() {
            return Err(Error::ShapeMismatch(format!(
                "message store has {} entries, graph has {} edges",
                messages.len(),
                self.graph.edge_count()
            )));
        }
        self.messages = messages;
        self.refresh_all_beliefs();
        Ok(())
    }

    fn refresh_all_beliefs(&mut self) {
        let (graph, params, messages) = (self.graph, self.params, &self.messages);
        let pixels: Vec<usize> = (0..graph.pixel_count()).collect();
        let fresh = map_ordered(&pixels, |p| belief_update(p, params, messages, graph));
        for (p, (eta, lambda)) in fresh.into_iter().enumerate() {
            self.beliefs.eta[p] = eta;
            self.beliefs.lambda[p] = lambda;
        }
    }

    /// Fresh damped message on `edge` from the current beliefs and messages.
    fn edge_message(&self, edge: usize) -> (T, T) {
        let e = self.graph.edge(edge);
        let rev = self.graph.reverse(edge);
        let cav_eta = self.beliefs.eta[e.src] - self.messages.eta[rev];
        let cav_lambda = self.beliefs.lambda[e.src] - self.messages.lambda[rev];
        let fresh = message_kernel(
            cav_eta,
            cav_lambda,
            self.params.w_pair[edge],
            self.params.r_pair[edge],
            self.cfg.epsilon_cavity,
        );
        damp_kernel(self.messages.get(edge), fresh, self.params.beta[e.dst])
    }

    /// Processes one directional set line by line.
    pub fn serial_sweep(&mut self, dir: Sweep) {
        let graph = self.graph;
        let plan = graph.sweep_plan(dir);
        for line in 0..plan.line_count() {
            let edges = plan.line_edges(line);
            if edges.is_empty() {
                continue;
            }
            let fresh: Vec<(T, T)> = {
                let this = &*self;
                map_ordered(edges, |id| this.edge_message(id))
            };
            for (&id, (eta, lambda)) in edges.iter().zip(fresh) {
                self.messages.eta[id] = eta;
                self.messages.lambda[id] = lambda;
            }
            let targets = plan.line_targets(line);
            let beliefs: Vec<(T, T)> = {
                let (params, messages) = (self.params, &self.messages);
                map_ordered(targets, |p| belief_update(p, params, messages, graph))
            };
            for (&p, (eta, lambda)) in targets.iter().zip(beliefs) {
                self.beliefs.eta[p] = eta;
                self.beliefs.lambda[p] = lambda;
            }
        }
    }

    /// Updates every non-local edge from one snapshot of beliefs and
    /// messages, then refreshes the beliefs.
    pub fn parallel_nonlocal_step(&mut self) {
        let edges = self.graph.nonlocal_edges();
        if edges.is_empty() {
            return;
        }
        let fresh: Vec<(T, T)> = {
            let this = &*self;
            map_ordered(edges, |id| this.edge_message(id))
        };
        for (&id, (eta, lambda)) in edges.iter().zip(fresh) {
            self.messages.eta[id] = eta;
            self.messages.lambda[id] = lambda;
        }
        self.refresh_all_beliefs();
    }

    /// One outer iteration: LR, TB, RL, BT sweeps then the non-local steps.
    pub fn iterate(&mut self) {
        for dir in Sweep::ORDER {
            self.serial_sweep(dir);
        }
        for _ in 0..self.cfg.nonlocal_steps {
            self.parallel_nonlocal_step();
        }
    }

    /// Runs the configured number of outer iterations.
    pub fn run(mut self) -> Solution<T> {
        let start = Instant::now();
        let mut trace = Vec::new();
        let track = self.cfg.record_trace || self.cfg.early_stop_tol.is_some();
        let mut iterations_run = 0;
        for t in 1..=self.cfg.iterations {
            let before = track.then(|| self.beliefs.means());
            self.iterate();
            iterations_run = t;
            if let Some(before) = before {
                let delta = max_mean_change(&before, &self.beliefs);
                if self.cfg.record_trace {
                    let n = T::lit(self.beliefs.len() as f64);
                    trace.push(TraceRow {
                        iteration: t,
                        max_delta_mu: delta,
                        mean_lambda: self.beliefs.lambda.iter().copied().sum::<T>() / n,
                        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
                    });
                }
                if self.cfg.early_stop_tol.is_some_and(|tol| delta < tol) {
                    break;
                }
            }
        }
        Solution {
            beliefs: self.beliefs,
            messages: self.messages,
            iterations_run,
            trace,
        }
    }
}

/// Maps in input order; parallel only for long inputs.
fn map_ordered<T, F>(items: &[usize], f: F) -> Vec<(T, T)>
where
    T: Scalar,
    F: Fn(usize) -> (T, T) + Sync,
{
    if items.len() < PAR_MIN_LEN {
        items.iter().map(|&i| f(i)).collect()
    } else {
        items
            .par_iter()
            .with_min_len(PAR_MIN_LEN / 4)
            .map(|&i| f(i))
            .collect()
    }
}

fn max_mean_change<T: Scalar>(before: &[Option<T>], after: &BeliefMap<T>) -> T {
    let mut worst = T::zero();
    for (p, prev) in before.iter().enumerate() {
        match (prev, after.mean(p)) {
            (Some(a), Some(b)) => worst = worst.max((b - *a).abs()),
            (None, Some(_)) => return T::infinity(),
            _ => {}
        }
    }
    worst
}

/// Initializes messages to zero and runs the full schedule.
pub fn run<T: Scalar>(
    params: &MrfParams<T>,
    graph: &GridGraph,
    cfg: SolverConfig<T>,
) -> Result<Solution<T>> {
    Ok(Solver::new(params, graph, cfg)?.run())
}
