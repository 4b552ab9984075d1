//! The alignment pipeline: Gromov-Wasserstein initialization into a common
//! frame, then alternating barycenter and Procrustes refinement.

mod procrustes;
mod tree;

use ndarray::{Array1, Array2, ArrayView2};

pub use procrustes::{procrustes, random_orthogonal, OrthogonalMap, ORTHOGONALITY_TOLERANCE};
pub use tree::{hierarchical_align, translate_via_tree, LanguageTree, TreeEdge, TreeNode, TreeSpec};

use crate::barycenter::{compute_barycenter, compute_barycenter_from, BarycenterConfig, IterationRecord};
use crate::embed_io::{center_rows, cosine_distances, squared_euclidean_cost, DiscreteDistribution, EmbeddingSpace, MassModel};
use crate::error::{Error, Result};
use crate::gromov::{gromov_wasserstein, GWConfig};
use crate::ot::{Coupling, SinkhornConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub gw: GWConfig,
    pub bary: BarycenterConfig,
    pub ot: SinkhornConfig,
    /// Maximum refinement rounds.
    pub outer_iters: usize,
    /// Language whose frame is the common frame during initialization.
    pub pivot_index: usize,
    pub mass_model: MassModel,
    /// Stop refining once the relative objective change falls below this.
    pub early_stop: f64,
    /// Start each round's barycenter from the previous round's support.
    pub warm_start_support: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gw: GWConfig::default(),
            bary: BarycenterConfig::default(),
            ot: SinkhornConfig::default(),
            outer_iters: 10,
            pivot_index: 0,
            mass_model: MassModel::Uniform,
            early_stop: 1e-4,
            warm_start_support: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self, languages: usize) -> Result<()> {
        if self.outer_iters == 0 {
            return Err(Error::Config("outer_iters must be at least 1".into()));
        }
        if self.pivot_index >= languages {
            return Err(Error::Config(format!(
                "pivot_index {} out of range for {languages} languages",
                self.pivot_index
            )));
        }
        if !(self.early_stop >= 0.0) {
            return Err(Error::Config("early_stop must be nonnegative".into()));
        }
        self.ot.validate()?;
        self.gw.inner.validate()
    }
}

/// Convergence flags of one initialization solve.
#[derive(Clone, Debug, PartialEq)]
pub struct GwReport {
    pub language: String,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

/// One refinement round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// `sum_i lambda_i <P_i, C(X_i Q_i, Y)>` after the rotations of this round.
    pub objective: f64,
    /// Barycenter objective before the rotations.
    pub barycenter_objective: f64,
    pub barycenter_iterations: Vec<IterationRecord>,
    /// Transport solves of this round that hit their iteration cap.
    pub unconverged_solves: usize,
    /// Objective rose by more than 1% over the previous round.
    pub increased: bool,
}

/// Aligned languages: rotated spaces, the composed maps that produced them,
/// and the couplings to the shared reference measure (the barycenter, or the
/// pivot language right after initialization).
#[derive(Clone, Debug)]
pub struct AlignmentState {
    /// Current coordinates, `centered[i] . Q_i`.
    pub spaces: Vec<EmbeddingSpace>,
    pub masses: Vec<Array1<f64>>,
    pub maps: Vec<OrthogonalMap>,
    pub couplings: Vec<Coupling>,
    pub barycenter: Option<DiscreteDistribution>,
    pub history: Vec<RoundRecord>,
    pub gw_reports: Vec<GwReport>,
    /// Centered input vectors, before any rotation.
    pub(crate) centered: Vec<Array2<f64>>,
}

impl AlignmentState {
    /// Rebuilds a state from stored rotated spaces and maps.
    pub fn from_parts(
        spaces: Vec<EmbeddingSpace>,
        masses: Vec<Array1<f64>>,
        maps: Vec<OrthogonalMap>,
        couplings: Vec<Coupling>,
        barycenter: Option<DiscreteDistribution>,
    ) -> Result<Self> {
        let m = spaces.len();
        if masses.len() != m || maps.len() != m || couplings.len() != m {
            return Err(Error::Dimension("alignment parts have different language counts".into()));
        }
        let mut centered = Vec::with_capacity(m);
        for i in 0..m {
            let (n, d) = spaces[i].vectors().dim();
            if masses[i].len() != n || maps[i].dim() != d || couplings[i].shape().0 != n {
                return Err(Error::Dimension(format!("language `{}` has inconsistent parts", spaces[i].language())));
            }
            centered.push(maps[i].unapply(spaces[i].vectors().view()));
        }
        Ok(Self {
            spaces,
            masses,
            maps,
            couplings,
            barycenter,
            history: Vec::new(),
            gw_reports: Vec::new(),
            centered,
        })
    }

    pub fn len(&self) -> usize {
        self.spaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spaces.is_empty()
    }

    pub fn languages(&self) -> Vec<&str> {
        self.spaces.iter().map(|s| s.language()).collect()
    }

    pub fn language_index(&self, tag: &str) -> Result<usize> {
        self.spaces
            .iter()
            .position(|s| s.language() == tag)
            .ok_or_else(|| Error::UnknownLanguage(tag.to_string()))
    }

    /// Centered vectors of language `i` before rotation.
    pub fn centered(&self, i: usize) -> &Array2<f64> {
        &self.centered[i]
    }

    /// `Q_i Q_k^T`: maps language `i` coordinates onto language `k` coordinates.
    pub fn map_between(&self, i: usize, k: usize) -> Array2<f64> {
        self.maps[i].matrix().dot(&self.maps[k].matrix().t())
    }

    fn distributions(&self) -> Vec<DiscreteDistribution> {
        self.spaces
            .iter()
            .zip(&self.masses)
            .map(|(s, p)| DiscreteDistribution {
                support: s.vectors().clone(),
                mass: p.clone(),
            })
            .collect()
    }
}

fn check_spaces(spaces: &[EmbeddingSpace]) -> Result<usize> {
    if spaces.len() < 2 {
        return Err(Error::InvalidInput(format!("alignment needs at least 2 languages, got {}", spaces.len())));
    }
    let d = spaces[0].dim();
    for s in spaces {
        if s.dim() != d {
            return Err(Error::Dimension(format!(
                "language `{}` is {}-d, `{}` is {d}-d",
                s.language(),
                s.dim(),
                spaces[0].language()
            )));
        }
    }
    for (i, s) in spaces.iter().enumerate() {
        if spaces[..i].iter().any(|t| t.language() == s.language()) {
            return Err(Error::InvalidInput(format!("language `{}` given twice", s.language())));
        }
    }
    Ok(d)
}

/// Centers every language and rotates it onto the pivot's frame through a
/// Gromov-Wasserstein coupling of cosine-distance matrices.
pub fn gw_initialize(spaces: &[EmbeddingSpace], cfg: &PipelineConfig) -> Result<AlignmentState> {
    let d = check_spaces(spaces)?;
    cfg.validate(spaces.len())?;
    let pivot = cfg.pivot_index;
    let centered: Vec<Array2<f64>> = spaces.iter().map(|s| center_rows(s.vectors().view())).collect();
    let masses: Vec<Array1<f64>> = spaces.iter().map(|s| cfg.mass_model.weights(s.len())).collect();
    let pivot_tag = spaces[pivot].language();
    let pivot_dist = cosine_distances(centered[pivot].view()).map_err(|e| e.in_phase("gw-init", pivot_tag))?;

    let mut maps = Vec::with_capacity(spaces.len());
    let mut couplings = Vec::with_capacity(spaces.len());
    let mut reports = Vec::new();
    for (i, space) in spaces.iter().enumerate() {
        let tag = space.language();
        if i == pivot {
            maps.push(OrthogonalMap::identity(d));
            couplings.push(Coupling {
                matrix: Array2::from_diag(&masses[i]),
                row_marginal: masses[i].clone(),
                col_marginal: masses[i].clone(),
            });
            continue;
        }
        let phase = |e: Error| e.in_phase("gw-init", tag);
        let dist = cosine_distances(centered[i].view()).map_err(phase)?;
        let sol = gromov_wasserstein(dist.view(), pivot_dist.view(), &masses[i], &masses[pivot], &cfg.gw).map_err(phase)?;
        log::info!(
            "gw-init {tag} -> {pivot_tag}: {} iterations, converged {}, objective {:.6e}",
            sol.iterations,
            sol.converged,
            sol.objective()
        );
        reports.push(GwReport {
            language: tag.to_string(),
            converged: sol.converged,
            iterations: sol.iterations,
            objective: sol.objective(),
        });
        let q = procrustes(centered[i].view(), &sol.coupling.matrix, centered[pivot].view())
            .map_err(|e| e.in_phase("procrustes", tag))?;
        maps.push(q);
        couplings.push(sol.coupling);
    }

    let rotated = spaces
        .iter()
        .zip(&centered)
        .zip(&maps)
        .map(|((s, x), q)| s.with_vectors(q.apply(x.view())))
        .collect::<Result<Vec<_>>>()?;
    Ok(AlignmentState {
        spaces: rotated,
        masses,
        maps,
        couplings,
        barycenter: None,
        history: Vec::new(),
        gw_reports: reports,
        centered,
    })
}

/// Result of refining a group of distributions that already share a frame.
#[derive(Clone, Debug)]
pub(crate) struct GroupRefinement {
    /// Rotation applied to each input, accumulated over the rounds.
    pub maps: Vec<OrthogonalMap>,
    pub barycenter: DiscreteDistribution,
    pub couplings: Vec<Coupling>,
    pub history: Vec<RoundRecord>,
}

/// Alternates barycenter computation and per-input Procrustes rotation.
pub(crate) fn refine_group(
    inputs: &[DiscreteDistribution],
    cfg: &PipelineConfig,
    start: Option<DiscreteDistribution>,
) -> Result<GroupRefinement> {
    let d = inputs[0].dim();
    let lambda = match &cfg.bary.lambda {
        Some(l) => Array1::from(l.clone()),
        None => Array1::from_elem(inputs.len(), 1.0 / inputs.len() as f64),
    };
    let mut current: Vec<DiscreteDistribution> = inputs.to_vec();
    let mut maps = vec![OrthogonalMap::identity(d); inputs.len()];
    let mut support = start;
    let mut history: Vec<RoundRecord> = Vec::new();
    let mut couplings = Vec::new();
    let mut bary_cfg = cfg.bary.clone();

    for round in 0..cfg.outer_iters {
        let bary = match support.take() {
            Some(init) if cfg.warm_start_support => compute_barycenter_from(&current, init, &bary_cfg, &cfg.ot),
            _ => compute_barycenter(&current, &cfg.bary, &cfg.ot),
        }
        .map_err(|e| e.in_phase("barycenter", "*"))?;
        let y = &bary.distribution.support;

        let mut objective = 0.0;
        for (i, coupling) in bary.couplings.iter().enumerate() {
            let delta = procrustes(current[i].support.view(), &coupling.matrix, y.view())
                .map_err(|e| e.in_phase("procrustes", format!("#{i}")))?;
            maps[i] = maps[i].compose(&delta);
            current[i].support = maps[i].apply(inputs[i].support.view());
            let cost = squared_euclidean_cost(current[i].support.view(), y.view())?;
            objective += lambda[i] * coupling.transport_cost(cost.view());
        }

        let previous = history.last().map(|r| r.objective);
        let increased = previous.is_some_and(|p| objective > p * 1.01);
        if increased {
            log::warn!("refinement round {round}: objective rose from {:.6e} to {objective:.6e}", previous.unwrap());
        }
        log::info!(
            "refinement round {round}: objective {objective:.6e} ({} barycenter iterations)",
            bary.iteration
        );
        history.push(RoundRecord {
            round,
            objective,
            barycenter_objective: bary.objective,
            barycenter_iterations: bary.history.clone(),
            unconverged_solves: bary.unconverged_solves,
            increased,
        });
        // the next round starts from this mass, which a step could not improve
        if bary.weights_frozen && cfg.warm_start_support {
            bary_cfg.optimize_weights = false;
        }
        couplings = bary.couplings;
        support = Some(bary.distribution);
        if let Some(p) = previous {
            if (p - objective).abs() <= cfg.early_stop * p.abs() {
                break;
            }
        }
    }

    Ok(GroupRefinement {
        maps,
        barycenter: support.expect("at least one round"),
        couplings,
        history,
    })
}

/// Refinement loop of the pipeline: barycenter of all languages, optimal
/// transport of each language to it, Procrustes rotation, repeat.
pub fn barycenter_align(mut state: AlignmentState, cfg: &PipelineConfig) -> Result<AlignmentState> {
    cfg.validate(state.len())?;
    let inputs = state.distributions();
    let start = state.barycenter.take();
    let refined = refine_group(&inputs, cfg, start)?;
    for (i, delta) in refined.maps.iter().enumerate() {
        state.maps[i] = state.maps[i].compose(delta);
        let rotated = state.maps[i].apply(state.centered[i].view());
        state.spaces[i] = state.spaces[i].with_vectors(rotated)?;
    }
    state.couplings = refined.couplings;
    state.barycenter = Some(refined.barycenter);
    state.history.extend(refined.history);
    Ok(state)
}

/// Full pipeline: initialization followed by barycenter refinement.
pub fn align(spaces: &[EmbeddingSpace], cfg: &PipelineConfig) -> Result<AlignmentState> {
    let state = gw_initialize(spaces, cfg)?;
    barycenter_align(state, cfg)
}

/// Arithmetic-mean pivot `(1/m) sum_k P_k X_k Q_k`, where `P_k` is the
/// row-normalized transpose of the language-to-pivot coupling.
pub fn arithmetic_mean_pivot(
    spaces: &[ArrayView2<f64>],
    couplings: &[Coupling],
    maps: &[OrthogonalMap],
) -> Result<Array2<f64>> {
    if spaces.is_empty() || spaces.len() != couplings.len() || spaces.len() != maps.len() {
        return Err(Error::Dimension("arithmetic mean needs one coupling and map per language".into()));
    }
    let (n, d) = (couplings[0].shape().1, spaces[0].ncols());
    let mut mean = Array2::<f64>::zeros((n, d));
    for ((x, coupling), q) in spaces.iter().zip(couplings).zip(maps) {
        let (rows, cols) = coupling.shape();
        if rows != cols || cols != n || x.nrows() != rows || x.ncols() != d || q.dim() != d {
            return Err(Error::Dimension(format!(
                "coupling {rows}x{cols} with {}x{} vectors against a {n}-point pivot",
                x.nrows(),
                x.ncols()
            )));
        }
        let mut p = coupling.matrix.t().to_owned();
        for (mut row, &mass) in p.rows_mut().into_iter().zip(&coupling.col_marginal) {
            if mass > 0.0 {
                row /= mass;
            }
        }
        mean += &p.dot(&q.apply(*x));
    }
    Ok(mean / spaces.len() as f64)
}

#[cfg(test)]
mod tests;
