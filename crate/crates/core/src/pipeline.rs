//! End-to-end completion: guide + sparse depth in, posterior mean and
//! precision out.

use crate::baseline::nearest_fill;
use crate::config::RunConfig;
use crate::error::Result;
use crate::gbp::{self, Solution};
use crate::graph::{propose_nonlocal_edges, GridGraph};
use crate::io::sample_sparse;
use crate::metrics::{self, EvalReport};
use crate::oracle;
use crate::potentials::{params_from_guide, MrfParams};
use crate::raster::DepthGrid;
use crate::scalar::Scalar;

/// Lattice plus patch-matched non-local edges for `guide`.
pub fn build_graph<T: Scalar>(guide: &DepthGrid<T>, cfg: &RunConfig) -> Result<GridGraph> {
    let graph = GridGraph::lattice(guide.height(), guide.width(), cfg.connectivity)?;
    if cfg.k_nonlocal == 0 {
        return Ok(graph);
    }
    let partners = propose_nonlocal_edges(guide, &cfg.nonlocal_config())?;
    graph.with_nonlocal(&partners)
}

pub fn build_mrf<T: Scalar>(
    guide: &DepthGrid<T>,
    sparse: &DepthGrid<T>,
    cfg: &RunConfig,
) -> Result<(GridGraph, MrfParams<T>)> {
    let graph = build_graph(guide, cfg)?;
    let params = params_from_guide(guide, sparse, &graph, &cfg.potential_config())?;
    Ok((graph, params))
}

#[derive(Debug, Clone)]
pub struct Completion<T> {
    /// Posterior mean; invalid where the precision is zero.
    pub mean: DepthGrid<T>,
    pub precision: DepthGrid<T>,
    pub solution: Solution<T>,
}

pub fn complete_on<T: Scalar>(
    graph: &GridGraph,
    params: &MrfParams<T>,
    cfg: &RunConfig,
) -> Result<Completion<T>> {
    let solution = gbp::run(params, graph, cfg.solver_config())?;
    Ok(Completion {
        mean: solution.beliefs.mean_grid(),
        precision: solution.beliefs.precision_grid(),
        solution,
    })
}

pub fn complete<T: Scalar>(
    guide: &DepthGrid<T>,
    sparse: &DepthGrid<T>,
    cfg: &RunConfig,
) -> Result<Completion<T>> {
    let (graph, params) = build_mrf(guide, sparse, cfg)?;
    complete_on(&graph, &params, cfg)
}

/// Exact posterior mean of the same MRF [`complete`] would build.
pub fn complete_exact<T: Scalar>(
    guide: &DepthGrid<T>,
    sparse: &DepthGrid<T>,
    cfg: &RunConfig,
    tol: T,
) -> Result<DepthGrid<T>> {
    let (graph, params) = build_mrf(guide, sparse, cfg)?;
    let sys = oracle::assemble_system(&params, &graph)?;
    let mu = oracle::solve_exact(&sys, tol)?;
    DepthGrid::from_values(guide.height(), guide.width(), mu)
}

/// Seed-averaged results for one sparsity level.
#[derive(Debug, Clone)]
pub struct DensityRow<T> {
    pub points: usize,
    pub seeds: usize,
    pub gbp: EvalReport<T>,
    pub nearest: EvalReport<T>,
}

/// Samples `points` ground-truth pixels for seeds `cfg.seed .. cfg.seed +
/// seeds`, completes each sample, and averages the per-sample metrics.
pub fn sweep_density<T: Scalar>(
    gt: &DepthGrid<T>,
    guide: &DepthGrid<T>,
    point_counts: &[usize],
    seeds: usize,
    cfg: &RunConfig,
) -> Result<Vec<DensityRow<T>>> {
    gt.ensure_same_shape(guide, "ground truth vs guide")?;
    let graph = build_graph(guide, cfg)?;
    let thetas: Vec<T> = cfg.thetas.iter().map(|&t| T::lit(t)).collect();
    let alpha = T::lit(cfg.alpha);
    let mut rows = Vec::with_capacity(point_counts.len());
    for &points in point_counts {
        let mut gbp_reports = Vec::with_capacity(seeds);
        let mut nn_reports = Vec::with_capacity(seeds);
        for k in 0..seeds as u64 {
            let sparse = sample_sparse(gt, points, cfg.seed.wrapping_add(k))?;
            let params = params_from_guide(guide, &sparse, &graph, &cfg.potential_config())?;
            let done = complete_on(&graph, &params, cfg)?;
            gbp_reports.push(metrics::evaluate(
                &done.mean,
                Some(&done.precision),
                gt,
                &thetas,
                alpha,
            )?);
            let nn = nearest_fill(&sparse)?;
            nn_reports.push(metrics::evaluate(&nn, None, gt, &thetas, alpha)?);
        }
        rows.push(DensityRow {
            points,
            seeds,
            gbp: metrics::aggregate(&gbp_reports)?,
            nearest: metrics::aggregate(&nn_reports)?,
        });
    }
    Ok(rows)
}
