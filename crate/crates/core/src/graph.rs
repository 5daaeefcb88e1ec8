//! MRF structure over the pixel lattice.
//!
//! Every undirected pairwise potential is stored as two directed edges. Local
//! edges are partitioned into four sweep sets by the sign of their coordinate
//! delta (column first, so diagonals ride the horizontal sweeps); non-local
//! edges form a fifth set updated in parallel.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::raster::DepthGrid;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    const FOUR: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
    const EIGHT: [(isize, isize); 8] = [
        (-1, -1),
        (-1, 0),
        (-1, 1),
        (0, -1),
        (0, 1),
        (1, -1),
        (1, 0),
        (1, 1),
    ];

    /// Neighbor offsets `(drow, dcol)` in row-major order.
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &Self::FOUR,
            Connectivity::Eight => &Self::EIGHT,
        }
    }

    pub fn flag(self) -> u8 {
        match self {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }

    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            4 => Some(Connectivity::Four),
            8 => Some(Connectivity::Eight),
            _ => None,
        }
    }

    fn admits(self, drow: isize, dcol: isize) -> bool {
        self.offsets().contains(&(drow, dcol))
    }
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "4" | "four" => Ok(Connectivity::Four),
            "8" | "eight" => Ok(Connectivity::Eight),
            other => Err(Error::InvalidParameter(format!(
                "connectivity must be 4 or 8, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for Connectivity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.flag())
    }
}

/// Directional sweep over the local edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sweep {
    LeftRight,
    TopBottom,
    RightLeft,
    BottomTop,
}

impl Sweep {
    /// Order of the serial sweeps inside one outer iteration.
    pub const ORDER: [Sweep; 4] = [
        Sweep::LeftRight,
        Sweep::TopBottom,
        Sweep::RightLeft,
        Sweep::BottomTop,
    ];

    /// Classifies a directed edge by its `dst - src` coordinate delta.
    pub fn classify(drow: isize, dcol: isize) -> Option<Sweep> {
        match (drow, dcol) {
            (_, c) if c > 0 => Some(Sweep::LeftRight),
            (_, c) if c < 0 => Some(Sweep::RightLeft),
            (r, _) if r > 0 => Some(Sweep::TopBottom),
            (r, _) if r < 0 => Some(Sweep::BottomTop),
            _ => None,
        }
    }

    fn slot(self) -> usize {
        match self {
            Sweep::LeftRight => 0,
            Sweep::TopBottom => 1,
            Sweep::RightLeft => 2,
            Sweep::BottomTop => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Sweep::LeftRight => "LR",
            Sweep::TopBottom => "TB",
            Sweep::RightLeft => "RL",
            Sweep::BottomTop => "BT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Local(Sweep),
    NonLocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectedEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

/// Line-by-line processing order for one sweep direction.
///
/// Lines are visited in sweep order; within a line, targets are row-major and
/// each target owns a contiguous run of edge ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SweepPlan {
    line_offsets: Vec<usize>,
    targets: Vec<usize>,
    target_offsets: Vec<usize>,
    edges: Vec<usize>,
}

impl SweepPlan {
    pub fn line_count(&self) -> usize {
        self.line_offsets.len().saturating_sub(1)
    }

    /// Target pixels of line `line`.
    pub fn line_targets(&self, line: usize) -> &[usize] {
        &self.targets[self.line_offsets[line]..self.line_offsets[line + 1]]
    }

    /// Edge ids of line `line`, grouped by target in `line_targets` order.
    pub fn line_edges(&self, line: usize) -> &[usize] {
        let a = self.target_offsets[self.line_offsets[line]];
        let b = self.target_offsets[self.line_offsets[line + 1]];
        &self.edges[a..b]
    }

    /// All edge ids in processing order.
    pub fn edges(&self) -> &[usize] {
        &self.edges
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridGraph {
    height: usize,
    width: usize,
    connectivity: Connectivity,
    edges: Vec<DirectedEdge>,
    reverse: Vec<usize>,
    incoming: Vec<usize>,
    sweeps: [SweepPlan; 4],
    nonlocal: Vec<usize>,
}

/// Builds the full lattice for `connectivity`.
pub fn build_local_edges(
    height: usize,
    width: usize,
    connectivity: Connectivity,
) -> Result<GridGraph> {
    GridGraph::lattice(height, width, connectivity)
}

impl GridGraph {
    pub fn lattice(height: usize, width: usize, connectivity: Connectivity) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimension { height, width });
        }
        let mut pairs = Vec::new();
        for row in 0..height {
            for col in 0..width {
                let i = row * width + col;
                for &(dr, dc) in connectivity.offsets() {
                    let (r, c) = (row as isize + dr, col as isize + dc);
                    if r < 0 || c < 0 || r >= height as isize || c >= width as isize {
                        continue;
                    }
                    let j = r as usize * width + c as usize;
                    if i < j {
                        pairs.push((i, j));
                    }
                }
            }
        }
        Self::from_pairs(height, width, connectivity, &pairs, &[])
    }

    /// Builds a graph from undirected pixel pairs. Local pairs must be lattice
    /// neighbors under `connectivity`; non-local pairs must be at Chebyshev
    /// distance greater than one. Each pair becomes two directed edges.
    pub fn from_pairs(
        height: usize,
        width: usize,
        connectivity: Connectivity,
        local: &[(usize, usize)],
        nonlocal: &[(usize, usize)],
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimension { height, width });
        }
        let n = height * width;
        let coords = |p: usize| ((p / width) as isize, (p % width) as isize);

        let mut seen = BTreeSet::new();
        let mut edges = Vec::with_capacity(2 * (local.len() + nonlocal.len()));
        for (is_local, pairs) in [(true, local), (false, nonlocal)] {
            for &(a, b) in pairs {
                if a >= n || b >= n {
                    return Err(Error::Validation(format!(
                        "edge ({a}, {b}) out of bounds for {height}x{width}"
                    )));
                }
                if a == b {
                    return Err(Error::Validation(format!("self edge at pixel {a}")));
                }
                let key = (a.min(b), a.max(b));
                if !seen.insert(key) {
                    return Err(Error::Validation(format!("duplicate edge ({a}, {b})")));
                }
                let ((ra, ca), (rb, cb)) = (coords(a), coords(b));
                let (dr, dc) = (rb - ra, cb - ca);
                if is_local {
                    if !connectivity.admits(dr, dc) {
                        return Err(Error::Validation(format!(
                            "pixels {a} and {b} are not {connectivity}-neighbors"
                        )));
                    }
                    let fwd = Sweep::classify(dr, dc).expect("nonzero delta");
                    let bwd = Sweep::classify(-dr, -dc).expect("nonzero delta");
                    edges.push(DirectedEdge {
                        src: a,
                        dst: b,
                        kind: EdgeKind::Local(fwd),
                    });
                    edges.push(DirectedEdge {
                        src: b,
                        dst: a,
                        kind: EdgeKind::Local(bwd),
                    });
                } else {
                    if dr.abs().max(dc.abs()) <= 1 {
                        return Err(Error::Validation(format!(
                            "non-local pair ({a}, {b}) is within the local neighborhood"
                        )));
                    }
                    for (src, dst) in [(a, b), (b, a)] {
                        edges.push(DirectedEdge {
                            src,
                            dst,
                            kind: EdgeKind::NonLocal,
                        });
                    }
                }
            }
        }
        edges.sort_by_key(|e| (e.dst, e.src));

        let id_of: HashMap<(usize, usize), usize> = edges
            .iter()
            .enumerate()
            .map(|(id, e)| ((e.src, e.dst), id))
            .collect();
        let reverse = edges.iter().map(|e| id_of[&(e.dst, e.src)]).collect();

        let mut incoming = vec![0usize; n + 1];
        for e in &edges {
            incoming[e.dst + 1] += 1;
        }
        for p in 0..n {
            incoming[p + 1] += incoming[p];
        }

        let sweeps = Sweep::ORDER.map(|dir| Self::plan(height, width, &edges, &incoming, dir));
        let nonlocal = edges
            .iter()
            .enumerate()
            .filter_map(|(id, e)| (e.kind == EdgeKind::NonLocal).then_some(id))
            .collect();

        Ok(Self {
            height,
            width,
            connectivity,
            edges,
            reverse,
            incoming,
            sweeps,
            nonlocal,
        })
    }

    fn plan(
        height: usize,
        width: usize,
        edges: &[DirectedEdge],
        incoming: &[usize],
        dir: Sweep,
    ) -> SweepPlan {
        let lines: Vec<Vec<usize>> = match dir {
            Sweep::LeftRight => (0..width)
                .map(|c| (0..height).map(|r| r * width + c).collect())
                .collect(),
            Sweep::RightLeft => (0..width)
                .rev()
                .map(|c| (0..height).map(|r| r * width + c).collect())
                .collect(),
            Sweep::TopBottom => (0..height)
                .map(|r| (0..width).map(|c| r * width + c).collect())
                .collect(),
            Sweep::BottomTop => (0..height)
                .rev()
                .map(|r| (0..width).map(|c| r * width + c).collect())
                .collect(),
        };
        let mut plan = SweepPlan {
            line_offsets: vec![0],
            targets: Vec::new(),
            target_offsets: vec![0],
            edges: Vec::new(),
        };
        for line in lines {
            for target in line {
                let before = plan.edges.len();
                plan.edges.extend(
                    (incoming[target]..incoming[target + 1])
                        .filter(|&id| edges[id].kind == EdgeKind::Local(dir)),
                );
                if plan.edges.len() > before {
                    plan.targets.push(target);
                    plan.target_offsets.push(plan.edges.len());
                }
            }
            plan.line_offsets.push(plan.targets.len());
        }
        plan
    }

    /// Adds symmetric non-local edges from per-pixel partner lists. A pair
    /// proposed from both ends is stored once.
    pub fn with_nonlocal(&self, partners: &[Vec<usize>]) -> Result<Self> {
        if partners.len() != self.pixel_count() {
            return Err(Error::ShapeMismatch(format!(
                "partner lists cover {} pixels, graph has {}",
                partners.len(),
                self.pixel_count()
            )));
        }
        let mut pairs: BTreeSet<(usize, usize)> = self.nonlocal_pairs().into_iter().collect();
        for (p, list) in partners.iter().enumerate() {
            for &q in list {
                pairs.insert((p.min(q), p.max(q)));
            }
        }
        let pairs: Vec<_> = pairs.into_iter().collect();
        Self::from_pairs(
            self.height,
            self.width,
            self.connectivity,
            &self.local_pairs(),
            &pairs,
        )
    }

    /// Keeps only the local edges whose unordered pair `(lo, hi)` satisfies
    /// `keep`. Non-local edges are untouched.
    pub fn restrict_local(&self, mut keep: impl FnMut(usize, usize) -> bool) -> Self {
        let local: Vec<_> = self
            .local_pairs()
            .into_iter()
            .filter(|&(a, b)| keep(a, b))
            .collect();
        Self::from_pairs(
            self.height,
            self.width,
            self.connectivity,
            &local,
            &self.nonlocal_pairs(),
        )
        .expect("subset of a valid graph is valid")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[DirectedEdge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> DirectedEdge {
        self.edges[id]
    }

    /// Id of the opposite-direction edge.
    pub fn reverse(&self, id: usize) -> usize {
        self.reverse[id]
    }

    /// Edge ids whose target is `pixel`, sorted by source.
    pub fn incoming(&self, pixel: usize) -> Range<usize> {
        self.incoming[pixel]..self.incoming[pixel + 1]
    }

    pub fn edge_id(&self, src: usize, dst: usize) -> Option<usize> {
        let range = self.incoming(dst);
        self.edges[range.clone()]
            .binary_search_by_key(&src, |e| e.src)
            .ok()
            .map(|k| range.start + k)
    }

    pub fn sweep_plan(&self, dir: Sweep) -> &SweepPlan {
        &self.sweeps[dir.slot()]
    }

    /// Edge ids of one directional set, in sweep processing order.
    pub fn sweep_set(&self, dir: Sweep) -> &[usize] {
        self.sweep_plan(dir).edges()
    }

    pub fn nonlocal_edges(&self) -> &[usize] {
        &self.nonlocal
    }

    pub fn local_edge_count(&self) -> usize {
        self.edges.len() - self.nonlocal.len()
    }

    /// Non-local partners of `pixel`, ascending.
    pub fn nonlocal_partners(&self, pixel: usize) -> Vec<usize> {
        self.incoming(pixel)
            .filter(|&id| self.edges[id].kind == EdgeKind::NonLocal)
            .map(|id| self.edges[id].src)
            .collect()
    }

    /// Undirected local pairs `(lo, hi)`, ascending.
    pub fn local_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs_where(|k| k != EdgeKind::NonLocal)
    }

    /// Undirected non-local pairs `(lo, hi)`, ascending.
    pub fn nonlocal_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs_where(|k| k == EdgeKind::NonLocal)
    }

    fn pairs_where(&self, pred: impl Fn(EdgeKind) -> bool) -> Vec<(usize, usize)> {
        let mut pairs: Vec<_> = self
            .edges
            .iter()
            .filter(|e| e.src < e.dst && pred(e.kind))
            .map(|e| (e.src, e.dst))
            .collect();
        pairs.sort_unstable();
        pairs
    }

    /// Ids of edges with `src < dst`: one per undirected potential.
    pub fn canonical_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter_map(|(id, e)| (e.src < e.dst).then_some(id))
    }
}

/// Settings for the patch-similarity non-local proposer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonLocalConfig {
    pub k: usize,
    pub search_radius: usize,
    pub patch_radius: usize,
    pub min_distance: usize,
}

impl Default for NonLocalConfig {
    fn default() -> Self {
        Self {
            k: 2,
            search_radius: 5,
            patch_radius: 1,
            min_distance: 2,
        }
    }
}

impl NonLocalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_distance < 2 {
            return Err(Error::InvalidParameter(format!(
                "min_distance must be at least 2, got {}",
                self.min_distance
            )));
        }
        if self.search_radius < self.min_distance {
            return Err(Error::InvalidParameter(format!(
                "search_radius {} below min_distance {}",
                self.search_radius, self.min_distance
            )));
        }
        Ok(())
    }
}

/// For each pixel, picks the `k` window candidates with the smallest mean
/// squared patch difference in `guide`. Patches sample with clamp-to-edge;
/// ties go to the earlier candidate in row-major order.
pub fn propose_nonlocal_edges<T: Scalar>(
    guide: &DepthGrid<T>,
    cfg: &NonLocalConfig,
) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let (h, w) = guide.shape();
    let mut partners = vec![Vec::new(); h * w];
    if cfg.k == 0 {
        return Ok(partners);
    }
    let ch = guide.channels();
    let pr = cfg.patch_radius as isize;
    let sr = cfg.search_radius as isize;
    let md = cfg.min_distance as isize;
    let norm = T::lit(((2 * pr + 1) * (2 * pr + 1)) as f64 * ch as f64);
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let patch_distance = |a: (isize, isize), b: (isize, isize)| -> T {
        let mut acc = T::zero();
        for dr in -pr..=pr {
            for dc in -pr..=pr {
                let pa = guide.pixel(clamp(a.0 + dr, h) * w + clamp(a.1 + dc, w));
                let pb = guide.pixel(clamp(b.0 + dr, h) * w + clamp(b.1 + dc, w));
                for c in 0..ch {
                    let d = pa[c] - pb[c];
                    acc += d * d;
                }
            }
        }
        acc / norm
    };

    let mut candidates: Vec<(T, usize)> = Vec::new();
    for row in 0..h as isize {
        for col in 0..w as isize {
            candidates.clear();
            for r in (row - sr).max(0)..=(row + sr).min(h as isize - 1) {
                for c in (col - sr).max(0)..=(col + sr).min(w as isize - 1) {
                    if (r - row).abs().max((c - col).abs()) < md {
                        continue;
                    }
                    let d = patch_distance((row, col), (r, c));
                    candidates.push((d, r as usize * w + c as usize));
                }
            }
            // stable: equal distances keep scan order
            candidates.sort_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap_or_else(|| a.0.is_nan().cmp(&b.0.is_nan()))
            });
            partners[row as usize * w + col as usize] =
                candidates.iter().take(cfg.k).map(|&(_, q)| q).collect();
        }
    }
    Ok(partners)
}
