//! Label-field estimation over the node grid: partial initialisation from
//! unambiguous nodes, corner seeding, clique eligibility, the weighted
//! likelihood/prior posterior, raster fill, and ICM refinement.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::config::EstimatorConfig;
use crate::error::{Error, Result};
use crate::frame_io::{FrameSequence, NodeGrid, Raster};
use crate::repset::{estimate_noise_threshold, RepresentativeSet, SceneModel};
use crate::spectral::{
    assemble_corner_tile, assemble_pair_tile, clique_energy, CliqueCorner, CliqueTile,
    PairDirection,
};

/// Stabiliser for the adaptive softmax temperature.
const TEMPERATURE_EPSILON: f64 = 1e-12;

/// Per-node chosen representative indices; None marks an unlabelled node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackgroundGrid {
    cols: u32,
    rows: u32,
    slots: Vec<Option<usize>>,
}

impl BackgroundGrid {
    pub fn empty(grid: &NodeGrid) -> BackgroundGrid {
        BackgroundGrid {
            cols: grid.cols(),
            rows: grid.rows(),
            slots: vec![None; grid.node_count()],
        }
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn get(&self, i: u32, j: u32) -> Option<usize> {
        assert!(i < self.cols && j < self.rows, "node out of range");
        self.slots[self.index(i, j)]
    }

    pub fn set(&mut self, i: u32, j: u32, rep: usize) {
        assert!(i < self.cols && j < self.rows, "node out of range");
        let idx = self.index(i, j);
        self.slots[idx] = Some(rep);
    }

    pub fn is_complete(&self) -> bool {
        self.slots.iter().all(|s| s.is_some())
    }

    pub fn labelled_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    fn index(&self, i: u32, j: u32) -> usize {
        j as usize * self.cols as usize + i as usize
    }

    fn get_offset(&self, i: u32, j: u32, di: i64, dj: i64) -> Option<usize> {
        let ni = i as i64 + di;
        let nj = j as i64 + dj;
        if ni < 0 || nj < 0 || ni >= self.cols as i64 || nj >= self.rows as i64 {
            return None;
        }
        self.slots[nj as usize * self.cols as usize + ni as usize]
    }
}

/// Posterior parameters for Stage 3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsParams {
    /// Cap on the number of neighbour nodes entering the prior exponent.
    pub eta_cap: u32,
    /// Divisor mapping the mean energy spread to the softmax temperature.
    pub tau: f64,
    /// Likelihood weight cap expressed in seconds of observation.
    pub w_max_seconds: f64,
    /// ICM refinement iterations; 0 leaves the filled grid untouched.
    pub icm_iterations: u32,
}

impl Default for GibbsParams {
    fn default() -> GibbsParams {
        GibbsParams {
            eta_cap: 3,
            tau: 10.0,
            w_max_seconds: 5.0,
            icm_iterations: 0,
        }
    }
}

/// A usable clique at a node: either a full corner clique or a fallback
/// pair with one labelled 4-neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliqueRef {
    Corner(CliqueCorner),
    Pair(PairDirection),
}

/// Labels every unambiguous node (exactly one representative) with index 0,
/// leaving contested nodes empty.
pub fn initialize_partial(model: &SceneModel) -> BackgroundGrid {
    let grid = model.grid();
    let mut bg = BackgroundGrid::empty(grid);
    for j in 0..grid.rows() {
        for i in 0..grid.cols() {
            if model.set(i, j).len() == 1 {
                bg.set(i, j, 0);
            }
        }
    }
    bg
}

/// Seeds an entirely empty grid: among the four corner nodes, the
/// representative with the largest weight wins; ties resolve to the
/// earliest corner in row-major node order, then the lowest index.
/// Returns the seeded node.
pub fn seed_corners(model: &SceneModel, bg: &mut BackgroundGrid) -> (u32, u32) {
    assert_eq!(
        bg.labelled_count(),
        0,
        "seed_corners requires an entirely empty grid"
    );
    let (cols, rows) = (bg.cols, bg.rows);
    let mut corners: Vec<(u32, u32)> =
        vec![(0, 0), (cols - 1, 0), (0, rows - 1), (cols - 1, rows - 1)];
    corners.sort_by_key(|&(i, j)| (j, i));
    corners.dedup();
    let mut best: Option<((u32, u32), usize, u64)> = None;
    for &(i, j) in &corners {
        for (idx, rep) in model.set(i, j).reps().iter().enumerate() {
            let better = match best {
                None => true,
                Some((_, _, w)) => rep.weight() > w,
            };
            if better {
                best = Some(((i, j), idx, rep.weight()));
            }
        }
    }
    let ((i, j), idx, _) = best.expect("seed_corners requires ingested corner representatives");
    bg.set(i, j, idx);
    (i, j)
}

/// Cliques usable at a node, ignoring the node's own slot. Full corner
/// cliques (both adjacent 4-neighbours and the diagonal between them
/// labelled) take precedence; without any, labelled 4-neighbours yield
/// fallback pair cliques. Empty means the node has no labelled neighbours.
pub fn eligible(bg: &BackgroundGrid, i: u32, j: u32) -> Vec<CliqueRef> {
    let mut full = Vec::new();
    for corner in CliqueCorner::ALL {
        if corner
            .neighbour_offsets()
            .iter()
            .all(|&(di, dj)| bg.get_offset(i, j, di, dj).is_some())
        {
            full.push(CliqueRef::Corner(corner));
        }
    }
    if !full.is_empty() {
        return full;
    }
    PairDirection::ALL
        .iter()
        .filter(|dir| {
            let (di, dj) = dir.offset();
            bg.get_offset(i, j, di, dj).is_some()
        })
        .map(|&dir| CliqueRef::Pair(dir))
        .collect()
}

/// Assembles the pixel tile for one clique at a node, with `candidate`
/// standing at the node's position and neighbours taken from their chosen
/// representatives. None when a participating block is unlabelled.
pub fn assemble_clique(
    model: &SceneModel,
    bg: &BackgroundGrid,
    i: u32,
    j: u32,
    clique: CliqueRef,
    candidate: &[f64],
) -> Option<CliqueTile> {
    let n = model.grid().block_size() as usize;
    let lookup = |di: i64, dj: i64| -> Option<&[f64]> {
        let rep = bg.get_offset(i, j, di, dj)?;
        let ni = (i as i64 + di) as u32;
        let nj = (j as i64 + dj) as u32;
        Some(model.set(ni, nj).rep(rep).mean())
    };
    match clique {
        CliqueRef::Corner(corner) => assemble_corner_tile(n, corner, candidate, lookup),
        CliqueRef::Pair(dir) => assemble_pair_tile(n, dir, candidate, lookup),
    }
}

/// Mean per-pixel clique energy of `candidate` at a node over the given
/// cliques. Panics if no clique is usable.
fn energy_over_cliques(
    model: &SceneModel,
    bg: &BackgroundGrid,
    i: u32,
    j: u32,
    cliques: &[CliqueRef],
    candidate: &[f64],
) -> f64 {
    assert!(
        !cliques.is_empty(),
        "node energy requires at least one usable clique"
    );
    let mut sum = 0.0;
    for &clique in cliques {
        let tile = assemble_clique(model, bg, i, j, clique, candidate)
            .expect("eligible clique must assemble");
        sum += clique_energy(&tile) / tile.pixel_count() as f64;
    }
    sum / cliques.len() as f64
}

/// Mean per-pixel clique energy of `candidate` at node (i, j) over its
/// currently eligible cliques.
pub fn node_energy(
    model: &SceneModel,
    bg: &BackgroundGrid,
    i: u32,
    j: u32,
    candidate: &[f64],
) -> f64 {
    let cliques = eligible(bg, i, j);
    energy_over_cliques(model, bg, i, j, &cliques, candidate)
}

/// Normalised label likelihood: weights are capped at
/// w_max_seconds * fps and divided by their sum.
pub fn label_likelihood(set: &RepresentativeSet, params: &GibbsParams, fps: f64) -> Vec<f64> {
    assert!(
        !set.is_empty(),
        "likelihood requires at least one representative"
    );
    let cap = params.w_max_seconds * fps;
    let capped: Vec<f64> = set
        .reps()
        .iter()
        .map(|r| (r.weight() as f64).min(cap))
        .collect();
    let total: f64 = capped.iter().sum();
    assert!(total > 0.0, "likelihood weights must be positive");
    capped.iter().map(|w| w / total).collect()
}

/// Log-space prior exponents: -(U_k - U_min) / T with the adaptive
/// temperature T = max(eps, (U_mean - U_min) / tau + eps). Scale-invariant
/// in the energies; equal energies give equal exponents.
fn prior_logits(energies: &[f64], tau: f64) -> Vec<f64> {
    assert!(!energies.is_empty(), "prior requires at least one energy");
    let n = energies.len() as f64;
    let u_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let u_mean = energies.iter().sum::<f64>() / n;
    let temperature = ((u_mean - u_min) / tau + TEMPERATURE_EPSILON).max(TEMPERATURE_EPSILON);
    energies
        .iter()
        .map(|u| -(u - u_min) / temperature)
        .collect()
}

/// Gibbs prior over candidates from their node energies: softmax of
/// `prior_logits`. Sums to 1; invariant under positive rescaling of the
/// energy axis.
pub fn label_prior(energies: &[f64], params: &GibbsParams) -> Vec<f64> {
    let logits = prior_logits(energies, params.tau);
    let total: f64 = logits.iter().map(|l| l.exp()).sum();
    logits.iter().map(|l| l.exp() / total).collect()
}

/// Per-candidate posterior decomposition at one node.
#[derive(Debug, Clone)]
pub struct CandidateScore {
    pub log_likelihood: f64,
    pub log_prior: f64,
    /// log likelihood + eta_eff * log prior.
    pub log_posterior: f64,
}

#[derive(Debug, Clone)]
pub struct PosteriorBreakdown {
    pub scores: Vec<CandidateScore>,
    /// Cliques used for the energies.
    pub clique_count: usize,
    /// Distinct neighbour nodes behind those cliques, capped at eta_cap.
    pub eta_eff: u32,
}

/// Scores every candidate representative at node (i, j) and returns the
/// argmax with its breakdown. Ties resolve toward the larger weight, then
/// the lower index. Panics when the node has no usable cliques.
pub fn select_label(
    model: &SceneModel,
    bg: &BackgroundGrid,
    i: u32,
    j: u32,
    params: &GibbsParams,
) -> (usize, PosteriorBreakdown) {
    let cliques = eligible(bg, i, j);
    select_label_with_cliques(model, bg, i, j, &cliques, params)
}

fn select_label_with_cliques(
    model: &SceneModel,
    bg: &BackgroundGrid,
    i: u32,
    j: u32,
    cliques: &[CliqueRef],
    params: &GibbsParams,
) -> (usize, PosteriorBreakdown) {
    assert!(
        !cliques.is_empty(),
        "label selection requires at least one usable clique"
    );
    let set = model.set(i, j);
    assert!(!set.is_empty(), "label selection requires candidates");

    let mut neighbours: Vec<(i64, i64)> = Vec::new();
    for clique in cliques {
        match clique {
            CliqueRef::Corner(corner) => neighbours.extend(corner.neighbour_offsets()),
            CliqueRef::Pair(dir) => neighbours.push(dir.offset()),
        }
    }
    neighbours.sort_unstable();
    neighbours.dedup();
    let eta_eff = (neighbours.len() as u32).min(params.eta_cap);

    let energies: Vec<f64> = set
        .reps()
        .iter()
        .map(|rep| energy_over_cliques(model, bg, i, j, cliques, rep.mean()))
        .collect();
    let likelihood = label_likelihood(set, params, model.fps());
    let logits = prior_logits(&energies, params.tau);
    // log sum exp with logits <= 0 and max logit 0.
    let lse = logits.iter().map(|l| l.exp()).sum::<f64>().ln();

    let mut scores = Vec::with_capacity(set.len());
    for k in 0..set.len() {
        let log_likelihood = likelihood[k].ln();
        let log_prior = logits[k] - lse;
        let log_posterior = log_likelihood + eta_eff as f64 * log_prior;
        scores.push(CandidateScore {
            log_likelihood,
            log_prior,
            log_posterior,
        });
    }

    let mut best = 0usize;
    for k in 1..set.len() {
        let better = scores[k].log_posterior > scores[best].log_posterior
            || (scores[k].log_posterior == scores[best].log_posterior
                && set.rep(k).weight() > set.rep(best).weight());
        if better {
            best = k;
        }
    }
    (
        best,
        PosteriorBreakdown {
            scores,
            clique_count: cliques.len(),
            eta_eff,
        },
    )
}

/// Fill statistics: pass counts and safety-valve assignments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FillStats {
    pub full_passes: u32,
    pub fallback_passes: u32,
    pub valve_assignments: u32,
}

/// Fills every empty node by repeated raster-order passes. A pass labels
/// each empty node that has full-clique eligibility, with same-pass
/// visibility. When a pass labels nothing, one pass permitting fallback
/// pair cliques runs; if that also labels nothing, remaining nodes take
/// their highest-weight representative. Terminates on any input.
pub fn fill_background(
    model: &SceneModel,
    bg: &mut BackgroundGrid,
    params: &GibbsParams,
) -> FillStats {
    let mut stats = FillStats::default();
    loop {
        if bg.is_complete() {
            return stats;
        }
        let labelled = fill_pass(model, bg, params, false);
        stats.full_passes += 1;
        if labelled == 0 {
            let fallback = fill_pass(model, bg, params, true);
            stats.fallback_passes += 1;
            if fallback == 0 {
                for j in 0..bg.rows {
                    for i in 0..bg.cols {
                        if bg.get(i, j).is_none() {
                            let idx = model
                                .set(i, j)
                                .highest_weight_index()
                                .expect("fill requires ingested representatives");
                            bg.set(i, j, idx);
                            stats.valve_assignments += 1;
                        }
                    }
                }
                return stats;
            }
        }
    }
}

fn fill_pass(
    model: &SceneModel,
    bg: &mut BackgroundGrid,
    params: &GibbsParams,
    allow_fallback: bool,
) -> usize {
    let mut labelled = 0;
    for j in 0..bg.rows {
        for i in 0..bg.cols {
            if bg.get(i, j).is_some() {
                continue;
            }
            let cliques = eligible(bg, i, j);
            if cliques.is_empty() {
                continue;
            }
            if !allow_fallback && matches!(cliques[0], CliqueRef::Pair(_)) {
                continue;
            }
            let (best, _) = select_label_with_cliques(model, bg, i, j, &cliques, params);
            bg.set(i, j, best);
            labelled += 1;
        }
    }
    labelled
}

/// ICM statistics: iterations actually run and label changes per iteration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IcmStats {
    pub iterations_run: u32,
    pub changes_per_iteration: Vec<u32>,
}

impl IcmStats {
    pub fn total_changes(&self) -> u64 {
        self.changes_per_iteration.iter().map(|&c| c as u64).sum()
    }
}

/// Iterated conditional modes over a complete grid. The first iteration
/// visits every node in raster order, replacing a label only when some
/// candidate attains strictly greater posterior; later iterations revisit
/// only nodes with an 8-connected neighbour change in the previous
/// iteration. Stops early when an iteration changes nothing.
pub fn icm_refine(model: &SceneModel, bg: &mut BackgroundGrid, params: &GibbsParams) -> IcmStats {
    assert!(bg.is_complete(), "ICM requires a complete grid");
    let mut stats = IcmStats::default();
    if params.icm_iterations == 0 {
        return stats;
    }
    let (cols, rows) = (bg.cols as usize, bg.rows as usize);
    let mut changed_prev = vec![false; cols * rows];
    for iteration in 0..params.icm_iterations {
        let mut changed_now = vec![false; cols * rows];
        let mut changes = 0u32;
        for j in 0..bg.rows {
            for i in 0..bg.cols {
                if iteration > 0 && !neighbour_changed(&changed_prev, cols, rows, i, j) {
                    continue;
                }
                if let Some(new) = icm_proposal(model, bg, i, j, params) {
                    bg.set(i, j, new);
                    changed_now[j as usize * cols + i as usize] = true;
                    changes += 1;
                }
            }
        }
        stats.iterations_run = iteration + 1;
        stats.changes_per_iteration.push(changes);
        if changes == 0 {
            break;
        }
        changed_prev = changed_now;
    }
    stats
}

/// Parallel ICM variant: proposals for one iteration are evaluated against
/// an immutable snapshot of the grid and applied synchronously at the
/// iteration boundary. The visit rule and stop conditions are unchanged.
pub fn icm_refine_parallel(
    model: &SceneModel,
    bg: &mut BackgroundGrid,
    params: &GibbsParams,
) -> IcmStats {
    assert!(bg.is_complete(), "ICM requires a complete grid");
    let mut stats = IcmStats::default();
    if params.icm_iterations == 0 {
        return stats;
    }
    let (cols, rows) = (bg.cols as usize, bg.rows as usize);
    let mut changed_prev = vec![false; cols * rows];
    for iteration in 0..params.icm_iterations {
        let snapshot = bg.clone();
        let proposals: Vec<(u32, u32, usize)> = (0..(cols * rows))
            .into_par_iter()
            .filter_map(|idx| {
                let i = (idx % cols) as u32;
                let j = (idx / cols) as u32;
                if iteration > 0 && !neighbour_changed(&changed_prev, cols, rows, i, j) {
                    return None;
                }
                icm_proposal(model, &snapshot, i, j, params).map(|new| (i, j, new))
            })
            .collect();
        let mut changed_now = vec![false; cols * rows];
        for &(i, j, new) in &proposals {
            bg.set(i, j, new);
            changed_now[j as usize * cols + i as usize] = true;
        }
        stats.iterations_run = iteration + 1;
        stats.changes_per_iteration.push(proposals.len() as u32);
        if proposals.is_empty() {
            break;
        }
        changed_prev = changed_now;
    }
    stats
}

/// The relabelling a single ICM visit would apply, if any: the posterior
/// argmax when it strictly beats the incumbent.
fn icm_proposal(
    model: &SceneModel,
    bg: &BackgroundGrid,
    i: u32,
    j: u32,
    params: &GibbsParams,
) -> Option<usize> {
    let set = model.set(i, j);
    if set.len() < 2 {
        return None;
    }
    let cliques = eligible(bg, i, j);
    if cliques.is_empty() {
        return None;
    }
    let incumbent = bg.get(i, j).expect("ICM grid is complete");
    let (best, breakdown) = select_label_with_cliques(model, bg, i, j, &cliques, params);
    if best != incumbent
        && breakdown.scores[best].log_posterior > breakdown.scores[incumbent].log_posterior
    {
        Some(best)
    } else {
        None
    }
}

fn neighbour_changed(changed: &[bool], cols: usize, rows: usize, i: u32, j: u32) -> bool {
    for dj in -1i64..=1 {
        for di in -1i64..=1 {
            if di == 0 && dj == 0 {
                continue;
            }
            let ni = i as i64 + di;
            let nj = j as i64 + dj;
            if ni >= 0
                && nj >= 0
                && (ni as usize) < cols
                && (nj as usize) < rows
                && changed[nj as usize * cols + ni as usize]
            {
                return true;
            }
        }
    }
    false
}

/// Renders the chosen representatives into a raster, one block per node,
/// means rounded to nearest and clamped to [0, 255]. Output geometry is
/// the covered (possibly cropped) area of the grid.
pub fn render_background(model: &SceneModel, bg: &BackgroundGrid) -> Raster {
    assert!(bg.is_complete(), "rendering requires a complete grid");
    let grid = model.grid();
    let n = grid.block_size();
    let mut raster = Raster::filled(grid.covered_width(), grid.covered_height(), 0);
    for j in 0..grid.rows() {
        for i in 0..grid.cols() {
            let rep = bg.get(i, j).unwrap();
            let mean = model.set(i, j).rep(rep).mean();
            let (x0, y0) = grid.node_origin(i, j);
            for by in 0..n {
                for bx in 0..n {
                    let v = mean[(by * n + bx) as usize].round().clamp(0.0, 255.0) as u8;
                    raster.set(x0 + bx, y0 + by, v);
                }
            }
        }
    }
    raster
}

/// Aggregate statistics of one estimation run.
#[derive(Debug, Clone)]
pub struct EstimateStats {
    pub frames: usize,
    pub grid_cols: u32,
    pub grid_rows: u32,
    pub t2: f64,
    /// Distribution of per-node set sizes S -> node count.
    pub s_histogram: BTreeMap<usize, usize>,
    /// Nodes labelled by partial initialisation.
    pub partial_initialised: usize,
    pub corner_seeded: bool,
    pub fill: FillStats,
    pub icm: IcmStats,
    /// Largest model size observed during ingestion, in bytes.
    pub peak_model_bytes: usize,
}

/// Full estimation outcome: the rendered background, the scene model, the
/// chosen label field, and run statistics.
#[derive(Debug, Clone)]
pub struct EstimateOutcome {
    pub background: Raster,
    pub model: SceneModel,
    pub labels: BackgroundGrid,
    pub stats: EstimateStats,
}

/// Runs the full pipeline on a frame sequence: noise-threshold estimation
/// on the leading window, per-node clustering over all frames, partial
/// initialisation (with corner seeding when nothing is unambiguous),
/// raster fill, and optional ICM refinement.
pub fn estimate_background(
    frames: &FrameSequence,
    config: &EstimatorConfig,
) -> Result<EstimateOutcome> {
    config.validate()?;
    if frames.frame_count() < 2 {
        return Err(Error::InsufficientFrames(format!(
            "estimation needs at least 2 frames, got {}",
            frames.frame_count()
        )));
    }
    let grid = NodeGrid::for_frame(frames.width(), frames.height(), config.block_size)?;
    let mut thresholds = estimate_noise_threshold(frames, &grid, config.t1)?;
    if let Some(t2) = config.t2_override {
        thresholds.t2 = t2;
    }

    let fps = if frames.fps() > 0.0 {
        frames.fps()
    } else {
        25.0
    };
    let mut model = SceneModel::new(grid, thresholds, fps);
    let mut peak_model_bytes = 0usize;
    for f in 0..frames.frame_count() {
        if config.parallel {
            model.ingest_frame_parallel(frames.frame(f));
        } else {
            model.ingest_frame(frames.frame(f));
        }
        peak_model_bytes = peak_model_bytes.max(model.model_bytes());
    }

    let mut labels = initialize_partial(&model);
    let partial_initialised = labels.labelled_count();
    let corner_seeded = partial_initialised == 0;
    if corner_seeded {
        seed_corners(&model, &mut labels);
    }
    let fill = fill_background(&model, &mut labels, &config.gibbs);
    let icm = if config.parallel {
        icm_refine_parallel(&model, &mut labels, &config.gibbs)
    } else {
        icm_refine(&model, &mut labels, &config.gibbs)
    };

    let mut s_histogram = BTreeMap::new();
    for set in model.sets() {
        *s_histogram.entry(set.len()).or_insert(0usize) += 1;
    }

    let background = render_background(&model, &labels);
    let (grid_cols, grid_rows) = (model.grid().cols(), model.grid().rows());
    Ok(EstimateOutcome {
        background,
        model,
        labels,
        stats: EstimateStats {
            frames: frames.frame_count(),
            grid_cols,
            grid_rows,
            t2: thresholds.t2,
            s_histogram,
            partial_initialised,
            corner_seeded,
            fill,
            icm,
            peak_model_bytes,
        },
    })
}
