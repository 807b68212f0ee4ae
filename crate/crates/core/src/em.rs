//! Expectation-Maximization over rigid-motion hypotheses.
//!
//! Each hypothesis `j` is an isotropic Gaussian on the residual
//! `b_i − R_j a_i − t_j` with its own scale `σ_j` and mixing weight `π_j`.
//! A uniform outlier component with fixed density absorbs correspondences
//! no motion explains. With the distance term enabled, a hypothesis only
//! competes at full strength for points whose source lies within `τ` of the
//! hypothesis' responsibility-weighted centroid; elsewhere its likelihood
//! is scaled by a tiny gate floor. This lets two objects that share a
//! motion but are spatially apart stay separate.
//!
//! The E-step works in the log domain. The M-step refits each pose with
//! the weighted Horn solver using the responsibilities as weights, then
//! re-estimates `σ_j` from the refitted residuals. Hypotheses are pruned
//! when they win fewer than `m_min` correspondences or their total
//! responsibility drops below `m_min`.
//!
//! Near-duplicate hypotheses (typically fragments of one object seeded by
//! an over-segmented initialization) form stable EM fixed points: each one
//! keeps the noise tail its slightly tilted pose explains best. Before each
//! M-step, every hypothesis is therefore tested against its main competitor:
//! the competitor is refitted on both responsibility columns and the
//! resulting log-likelihood loss is compared with the BIC price of the
//! dropped hypothesis' parameters. Cheap absorptions are applied. With the
//! distance term, far-apart objects never qualify, because the refitted
//! hypothesis would lose its gate on one of them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CorrespondenceSet, Labeling, Point3, RigidTransform, OUTLIER};
use crate::horn;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmParams {
    /// Spatial gate radius (m).
    pub tau: f64,
    /// Minimum cluster size.
    pub m_min: usize,
    /// Maximum number of EM iterations.
    pub t_iters: usize,
    pub use_distance_term: bool,
    /// Pool the noise variance over all hypotheses instead of fitting one
    /// σ_j per hypothesis.
    pub shared_sigma: bool,
    /// Drop hypotheses whose removal lowers the log-likelihood by less than
    /// the BIC cost of their parameters.
    pub bic_prune: bool,
    /// Lower bound on each σ_j (m).
    pub sigma_floor: f64,
    /// Density of the uniform outlier component (1/m³).
    pub outlier_density: f64,
    /// Outlier mixing weight before the first M-step.
    pub initial_outlier_weight: f64,
    /// Multiplier applied to a hypothesis' likelihood outside its gate.
    pub gate_floor: f64,
}

impl Default for EmParams {
    fn default() -> Self {
        Self {
            tau: 1.5,
            m_min: 4,
            t_iters: 10,
            use_distance_term: true,
            shared_sigma: false,
            bic_prune: true,
            sigma_floor: 1e-4,
            outlier_density: 0.01,
            initial_outlier_weight: 0.1,
            gate_floor: 1e-12,
        }
    }
}

impl EmParams {
    pub fn vanilla() -> Self {
        Self {
            use_distance_term: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("tau", "must be > 0"));
        }
        if self.m_min < 3 {
            return Err(Error::invalid("m_min", "must be >= 3"));
        }
        if self.t_iters < 1 {
            return Err(Error::invalid("t_iters", "must be >= 1"));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::invalid("sigma_floor", "must be > 0"));
        }
        if !(self.outlier_density > 0.0 && self.outlier_density.is_finite()) {
            return Err(Error::invalid("outlier_density", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.initial_outlier_weight) {
            return Err(Error::invalid(
                "initial_outlier_weight",
                "must be in [0, 1)",
            ));
        }
        if !(self.gate_floor > 0.0 && self.gate_floor <= 1.0) {
            return Err(Error::invalid("gate_floor", "must be in (0, 1]"));
        }
        Ok(())
    }
}

/// One motion hypothesis of the mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub pose: RigidTransform,
    pub sigma: f64,
    pub weight: f64,
    #[serde(with = "point_serde")]
    pub centroid: Point3,
}

/// Hypotheses plus the outlier component's mixing weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub hypotheses: Vec<Hypothesis>,
    pub outlier_weight: f64,
}

/// Row-stochastic `n × (K+1)` matrix; the last column is the outlier
/// component.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n: usize,
    k: usize,
    data: Vec<f64>,
    /// Per-point gate results (`n × K`), present with the distance term.
    gates: Option<Vec<bool>>,
    /// Per-row `ln Σ_j π_j p_j(x_i)`; empty when not computed.
    row_log_norm: Vec<f64>,
    log_likelihood: f64,
}

impl Responsibilities {
    /// Builds from row-major `n × (k+1)` entries, checking that rows are
    /// non-negative and sum to one within 1e-9.
    pub fn from_rows(n: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * (k + 1) {
            return Err(Error::LengthMismatch {
                expected: n * (k + 1),
                actual: data.len(),
            });
        }
        for (i, row) in data.chunks_exact(k + 1).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(
                    "responsibilities",
                    format!("row {i} is not a probability vector"),
                ));
            }
        }
        Ok(Self {
            n,
            k,
            data,
            gates: None,
            row_log_norm: Vec::new(),
            log_likelihood: f64::NAN,
        })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    /// Number of hypothesis columns (excluding the outlier column).
    pub fn hypotheses(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * (self.k + 1)..(i + 1) * (self.k + 1)]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.k + 1) + j]
    }

    pub fn outlier(&self, i: usize) -> f64 {
        self.get(i, self.k)
    }

    pub fn gates(&self) -> Option<&[bool]> {
        self.gates.as_deref()
    }

    /// Data log-likelihood of the mixture that produced these
    /// responsibilities (NaN when built from raw rows).
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Largest `|Σ_j r_ij − 1|` over rows.
    pub fn max_row_error(&self) -> f64 {
        self.data
            .chunks_exact(self.k + 1)
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Hard assignment: argmax column per row, ties to the lowest index,
    /// outlier column mapped to [`OUTLIER`].
    pub fn argmax(&self) -> Vec<i32> {
        self.data
            .chunks_exact(self.k + 1)
            .map(|row| {
                let mut best = 0;
                for (j, v) in row.iter().enumerate().skip(1) {
                    if *v > row[best] {
                        best = j;
                    }
                }
                if best == self.k {
                    OUTLIER
                } else {
                    best as i32
                }
            })
            .collect()
    }

    fn column_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    /// Keeps the listed hypothesis columns and the outlier column. Rows are
    /// not renormalized.
    fn select(&self, keep: &[usize]) -> Responsibilities {
        let mut data = Vec::with_capacity(self.n * (keep.len() + 1));
        for i in 0..self.n {
            let row = self.row(i);
            data.extend(keep.iter().map(|&j| row[j]));
            data.push(row[self.k]);
        }
        let gates = self.gates.as_ref().map(|g| {
            let mut out = Vec::with_capacity(self.n * keep.len());
            for i in 0..self.n {
                out.extend(keep.iter().map(|&j| g[i * self.k + j]));
            }
            out
        });
        Responsibilities {
            n: self.n,
            k: keep.len(),
            data,
            gates,
            row_log_norm: Vec::new(),
            log_likelihood: f64::NAN,
        }
    }
}

/// Solver output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiModelEstimate {
    pub hypotheses: Vec<Hypothesis>,
    pub labeling: Labeling,
    pub iterations_run: usize,
}

impl MultiModelEstimate {
    pub fn poses(&self) -> Vec<RigidTransform> {
        self.hypotheses.iter().map(|h| h.pose).collect()
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub hypotheses: usize,
    pub max_row_error: f64,
    /// Log-likelihood of the mixture entering the iteration.
    pub log_likelihood_before: f64,
    /// Log-likelihood after the M-step with gates frozen at their E-step
    /// values; `None` when the iteration pruned a hypothesis.
    pub log_likelihood_after: Option<f64>,
    pub pruned: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EmTrace {
    pub iterations: Vec<IterationRecord>,
}

#[inline]
fn log_gaussian3(r2: f64, sigma: f64) -> f64 {
    let var = sigma * sigma;
    -1.5 * (2.0 * PI * var).ln() - r2 / (2.0 * var)
}

#[inline]
fn gate_passes(a: &Point3, h: &Hypothesis, tau: f64) -> bool {
    (a - h.centroid).norm() <= tau
}

/// Per-point log terms `ln(π_j p_j(x_i) g_ij)` for all columns; the gate
/// pattern is either computed here or taken from `frozen`.
fn log_terms(
    corrs: &CorrespondenceSet,
    mix: &Mixture,
    params: &EmParams,
    i: usize,
    frozen: Option<&[bool]>,
    gates_out: Option<&mut Vec<bool>>,
    terms: &mut Vec<f64>,
) {
    let k = mix.hypotheses.len();
    let c = &corrs.items[i];
    let ln_floor = params.gate_floor.ln();
    terms.clear();
    let mut gates_out = gates_out;
    for (j, h) in mix.hypotheses.iter().enumerate() {
        let mut t = h.weight.ln() + log_gaussian3(h.pose.residual_sq(c), h.sigma);
        if params.use_distance_term {
            let pass = match frozen {
                Some(g) => g[i * k + j],
                None => gate_passes(&c.a, h, params.tau),
            };
            if let Some(out) = gates_out.as_deref_mut() {
                out.push(pass);
            }
            if !pass {
                t += ln_floor;
            }
        }
        terms.push(t);
    }
    terms.push(mix.outlier_weight.ln() + params.outlier_density.ln());
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Posterior membership of every correspondence.
pub fn e_step(corrs: &CorrespondenceSet, mix: &Mixture, params: &EmParams) -> Responsibilities {
    let n = corrs.len();
    let k = mix.hypotheses.len();
    let rows = par::map_range(n, |i| {
        let mut terms = Vec::with_capacity(k + 1);
        let mut gates = Vec::with_capacity(if params.use_distance_term { k } else { 0 });
        log_terms(corrs, mix, params, i, None, Some(&mut gates), &mut terms);
        let lse = log_sum_exp(&terms);
        let row: Vec<f64> = if lse.is_finite() {
            terms.iter().map(|t| (t - lse).exp()).collect()
        } else {
            // No component explains the point at all.
            let mut r = vec![0.0; k + 1];
            r[k] = 1.0;
            r
        };
        (row, gates, lse)
    });
    let mut data = Vec::with_capacity(n * (k + 1));
    let mut gates = params.use_distance_term.then(|| Vec::with_capacity(n * k));
    let mut log_likelihood = 0.0;
    let mut row_log_norm = Vec::with_capacity(n);
    for (row, g, lse) in rows {
        data.extend_from_slice(&row);
        if let Some(all) = gates.as_mut() {
            all.extend_from_slice(&g);
        }
        log_likelihood += lse;
        row_log_norm.push(lse);
    }
    Responsibilities {
        n,
        k,
        data,
        gates,
        row_log_norm,
        log_likelihood,
    }
}

/// Data log-likelihood of `mix`, optionally with gate outcomes frozen.
pub fn log_likelihood(
    corrs: &CorrespondenceSet,
    mix: &Mixture,
    params: &EmParams,
    frozen_gates: Option<&[bool]>,
) -> f64 {
    let k = mix.hypotheses.len();
    par::map_range(corrs.len(), |i| {
        let mut terms = Vec::with_capacity(k + 1);
        log_terms(corrs, mix, params, i, frozen_gates, None, &mut terms);
        log_sum_exp(&terms)
    })
    .into_iter()
    .sum()
}

/// Weighted refit of every hypothesis column. Columns whose total
/// responsibility is below `m_min`, or whose weighted sources are
/// collinear, are dropped; the indices of surviving columns are returned
/// alongside the mixture.
pub fn m_step_indexed(
    corrs: &CorrespondenceSet,
    resp: &Responsibilities,
    params: &EmParams,
) -> (Mixture, Vec<usize>) {
    let n = corrs.len();
    let fits = par::map_range(resp.k, |j| {
        let total = resp.column_sum(j);
        if total < params.m_min as f64 {
            return None;
        }
        let column = || (0..n).map(move |i| (&corrs.items[i], resp.get(i, j)));
        let pose = horn::fit_weighted(column()).ok()?;
        let mut sq = 0.0;
        let mut centroid = nalgebra::Vector3::zeros();
        for (c, w) in column() {
            sq += w * pose.residual_sq(c);
            centroid += w * c.a.coords;
        }
        let var = (sq / (3.0 * total)).max(params.sigma_floor * params.sigma_floor);
        Some((
            Hypothesis {
                pose,
                sigma: var.sqrt(),
                weight: total / n as f64,
                centroid: Point3::from(centroid / total),
            },
            sq,
            total,
        ))
    });
    let outlier_total = resp.column_sum(resp.k);
    let mut kept = Vec::new();
    let mut hypotheses = Vec::new();
    let (mut sq_all, mut total_all) = (0.0, 0.0);
    for (j, fit) in fits.into_iter().enumerate() {
        if let Some((h, sq, total)) = fit {
            kept.push(j);
            hypotheses.push(h);
            sq_all += sq;
            total_all += total;
        }
    }
    if params.shared_sigma && total_all > 0.0 {
        let var = (sq_all / (3.0 * total_all)).max(params.sigma_floor * params.sigma_floor);
        for h in &mut hypotheses {
            h.sigma = var.sqrt();
        }
    }
    let mut mix = Mixture {
        hypotheses,
        outlier_weight: outlier_total / n as f64,
    };
    normalize_weights(&mut mix);
    (mix, kept)
}

/// M-step returning only the surviving hypotheses.
pub fn m_step(corrs: &CorrespondenceSet, resp: &Responsibilities, params: &EmParams) -> Mixture {
    m_step_indexed(corrs, resp, params).0
}

fn normalize_weights(mix: &mut Mixture) {
    let total: f64 = mix.hypotheses.iter().map(|h| h.weight).sum::<f64>() + mix.outlier_weight;
    if total > 0.0 && total != 1.0 {
        for h in &mut mix.hypotheses {
            h.weight /= total;
        }
        mix.outlier_weight /= total;
    }
}

/// Initial mixture: one hard-assigned M-step per init cluster.
pub fn initial_mixture(
    corrs: &CorrespondenceSet,
    init: &Labeling,
    params: &EmParams,
) -> Result<(Mixture, Vec<usize>)> {
    let clusters: Vec<Vec<usize>> = init.clusters().into_values().collect();
    let k = clusters.len();
    let n = corrs.len();
    let mut data = vec![0.0; n * (k + 1)];
    let mut assigned = vec![false; n];
    for (j, members) in clusters.iter().enumerate() {
        for &i in members {
            data[i * (k + 1) + j] = 1.0;
            assigned[i] = true;
        }
    }
    for (i, a) in assigned.iter().enumerate() {
        if !a {
            data[i * (k + 1) + k] = 1.0;
        }
    }
    let resp = Responsibilities::from_rows(n, k, data)?;
    let (mut mix, kept) = m_step_indexed(corrs, &resp, params);
    if mix.hypotheses.is_empty() {
        return Err(Error::NoValidCluster);
    }
    let scale = 1.0 - params.initial_outlier_weight;
    let total: f64 = mix.hypotheses.iter().map(|h| h.weight).sum();
    for h in &mut mix.hypotheses {
        h.weight *= scale / total;
    }
    mix.outlier_weight = params.initial_outlier_weight;
    Ok((mix, kept))
}

/// Runs EM from an initial clustering. The algorithm itself is
/// deterministic; `seed` is accepted so every solver shares one signature
/// and does not influence the result.
pub fn solve_em(
    corrs: &CorrespondenceSet,
    init: &Labeling,
    params: &EmParams,
    seed: u64,
) -> Result<MultiModelEstimate> {
    solve_em_traced(corrs, init, params, seed).map(|(est, _)| est)
}

pub fn solve_em_traced(
    corrs: &CorrespondenceSet,
    init: &Labeling,
    params: &EmParams,
    _seed: u64,
) -> Result<(MultiModelEstimate, EmTrace)> {
    params.validate()?;
    if corrs.is_empty() {
        return Err(Error::EmptySet);
    }
    if init.len() != corrs.len() {
        return Err(Error::LengthMismatch {
            expected: corrs.len(),
            actual: init.len(),
        });
    }
    let (mut mix, kept) = initial_mixture(corrs, init, params)?;
    // Stable identity of each hypothesis, used to compare labelings across
    // iterations when columns are pruned.
    let mut ids: Vec<usize> = kept;
    let mut trace = EmTrace::default();
    let mut previous: Option<Vec<i64>> = None;
    let mut iterations_run = 0;

    for _ in 0..params.t_iters {
        let resp = e_step(corrs, &mix, params);
        let k_before = mix.hypotheses.len();
        let (max_row_error, log_likelihood_before) = (resp.max_row_error(), resp.log_likelihood());
        let (reduced, alive) = if params.bic_prune {
            let (m, r, alive) = absorb_redundant(corrs, mix, resp, params);
            mix = m;
            (r, alive)
        } else {
            (resp, (0..k_before).collect())
        };
        let labels = reduced.argmax();
        let stable: Vec<i64> = labels
            .iter()
            .map(|&l| {
                if l == OUTLIER {
                    -1
                } else {
                    ids[alive[l as usize]] as i64
                }
            })
            .collect();
        if alive.len() == k_before && previous.as_ref() == Some(&stable) {
            break;
        }
        let counts = member_counts(&labels, alive.len());
        let local: Vec<usize> = (0..alive.len())
            .filter(|&j| counts[j] >= params.m_min)
            .collect();
        let keep: Vec<usize> = local.iter().map(|&j| alive[j]).collect();
        let mut pruned = keep.len() < k_before;
        let selected = if local.len() < alive.len() {
            reduced.select(&local)
        } else {
            reduced
        };
        let (next, survivors) = m_step_indexed(corrs, &selected, params);
        pruned |= survivors.len() < keep.len();
        if next.hypotheses.is_empty() {
            log::warn!("em: every hypothesis was pruned; keeping previous mixture");
            break;
        }
        let log_likelihood_after =
            (!pruned).then(|| log_likelihood(corrs, &next, params, selected.gates()));
        trace.iterations.push(IterationRecord {
            hypotheses: k_before,
            max_row_error,
            log_likelihood_before,
            log_likelihood_after,
            pruned,
        });
        ids = survivors.iter().map(|&s| ids[keep[s]]).collect();
        mix = next;
        previous = Some(stable);
        iterations_run += 1;
    }

    // Final assignment; drop hypotheses that do not win m_min points and
    // reassign their points among the rest.
    loop {
        let resp = e_step(corrs, &mix, params);
        let labels = resp.argmax();
        let counts = member_counts(&labels, mix.hypotheses.len());
        if counts.iter().all(|&c| c >= params.m_min) {
            return Ok((
                MultiModelEstimate {
                    hypotheses: mix.hypotheses,
                    labeling: Labeling::new(labels),
                    iterations_run,
                },
                trace,
            ));
        }
        let mut j = 0;
        mix.hypotheses.retain(|_| {
            let keep = counts[j] >= params.m_min;
            j += 1;
            keep
        });
        if mix.hypotheses.is_empty() {
            return Err(Error::NoValidCluster);
        }
        normalize_weights(&mut mix);
    }
}

fn member_counts(labels: &[i32], k: usize) -> Vec<usize> {
    let mut counts = vec![0usize; k];
    for &l in labels {
        if l != OUTLIER {
            counts[l as usize] += 1;
        }
    }
    counts
}

/// BIC cost of one hypothesis: pose, mixing weight and, without sharing,
/// its own σ.
fn bic_penalty(params: &EmParams, n: usize) -> f64 {
    let dof = if params.shared_sigma { 7.0 } else { 8.0 };
    0.5 * dof * (n as f64).ln()
}

/// Proposal to drop hypothesis `h` and let `into` absorb its points.
struct Absorption {
    h: usize,
    into: usize,
    merged: Hypothesis,
    cost: f64,
}

/// Hypothesis sharing most of `h`'s responsibility mass, per column.
fn absorbers(resp: &Responsibilities) -> Vec<Option<usize>> {
    let (n, k) = (resp.n, resp.k);
    let mut shared = vec![0.0; k * k];
    for i in 0..n {
        let row = &resp.row(i)[..k];
        let (mut first, mut second) = (usize::MAX, usize::MAX);
        for j in 0..k {
            if first == usize::MAX || row[j] > row[first] {
                second = first;
                first = j;
            } else if second == usize::MAX || row[j] > row[second] {
                second = j;
            }
        }
        if second == usize::MAX {
            continue;
        }
        shared[first * k + second] += row[first];
        shared[second * k + first] += row[second];
    }
    (0..k)
        .map(|h| {
            let row = &shared[h * k..(h + 1) * k];
            (0..k)
                .filter(|&j| j != h && row[j] > 0.0)
                .fold(None, |best: Option<usize>, j| match best {
                    Some(b) if row[b] >= row[j] => Some(b),
                    _ => Some(j),
                })
        })
        .collect()
}

/// Refit of `into` on the pooled responsibilities of `h` and `into`, and
/// the log-likelihood lost by replacing both with it.
fn absorption(
    corrs: &CorrespondenceSet,
    mix: &Mixture,
    resp: &Responsibilities,
    params: &EmParams,
    h: usize,
    into: usize,
) -> Option<Absorption> {
    let n = corrs.len();
    let column = || (0..n).map(move |i| (&corrs.items[i], resp.get(i, h) + resp.get(i, into)));
    let pose = horn::fit_weighted(column()).ok()?;
    let (mut total, mut sq) = (0.0, 0.0);
    let mut centroid = nalgebra::Vector3::zeros();
    for (c, w) in column() {
        total += w;
        sq += w * pose.residual_sq(c);
        centroid += w * c.a.coords;
    }
    let sigma = if params.shared_sigma {
        mix.hypotheses[into].sigma
    } else {
        (sq / (3.0 * total))
            .max(params.sigma_floor * params.sigma_floor)
            .sqrt()
    };
    let merged = Hypothesis {
        pose,
        sigma,
        weight: mix.hypotheses[h].weight + mix.hypotheses[into].weight,
        centroid: Point3::from(centroid / total),
    };
    let ln_floor = params.gate_floor.ln();
    let ln_weight = merged.weight.ln();
    let mut cost = 0.0;
    for (i, c) in corrs.items.iter().enumerate() {
        let rest = 1.0 - resp.get(i, h) - resp.get(i, into);
        let mut t = ln_weight + log_gaussian3(merged.pose.residual_sq(c), merged.sigma);
        if params.use_distance_term && !gate_passes(&c.a, &merged, params.tau) {
            t += ln_floor;
        }
        let kept = if rest > 0.0 {
            let r = rest.ln();
            let m = r.max(t - resp.row_log_norm[i]);
            m + ((r - m).exp() + (t - resp.row_log_norm[i] - m).exp()).ln()
        } else {
            t - resp.row_log_norm[i]
        };
        cost -= kept;
    }
    Some(Absorption {
        h,
        into,
        merged,
        cost,
    })
}

/// Drops hypotheses that another hypothesis can absorb at a log-likelihood
/// cost below the BIC price of their parameters. Each round evaluates every
/// hypothesis against its main competitor, applies the cheapest disjoint
/// absorptions and recomputes responsibilities. Returns the reduced
/// mixture, its responsibilities and the surviving original indices.
fn absorb_redundant(
    corrs: &CorrespondenceSet,
    mut mix: Mixture,
    mut resp: Responsibilities,
    params: &EmParams,
) -> (Mixture, Responsibilities, Vec<usize>) {
    let penalty = bic_penalty(params, corrs.len());
    let mut alive: Vec<usize> = (0..mix.hypotheses.len()).collect();
    loop {
        let k = mix.hypotheses.len();
        if k < 2 {
            break;
        }
        let targets = absorbers(&resp);
        let mut proposals: Vec<Absorption> = par::map_range(k, |h| {
            let into = targets[h]?;
            absorption(corrs, &mix, &resp, params, h, into).filter(|a| a.cost < penalty)
        })
        .into_iter()
        .flatten()
        .collect();
        if proposals.is_empty() {
            break;
        }
        proposals.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.h.cmp(&b.h)));
        let mut touched = vec![false; k];
        let mut dropped = vec![false; k];
        for a in proposals {
            if touched[a.h] || touched[a.into] {
                continue;
            }
            touched[a.h] = true;
            touched[a.into] = true;
            dropped[a.h] = true;
            mix.hypotheses[a.into] = a.merged;
        }
        let mut j = 0;
        mix.hypotheses.retain(|_| {
            j += 1;
            !dropped[j - 1]
        });
        let mut j = 0;
        alive.retain(|_| {
            j += 1;
            !dropped[j - 1]
        });
        normalize_weights(&mut mix);
        resp = e_step(corrs, &mix, params);
    }
    (mix, resp, alive)
}

mod point_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::geometry::Point3;

    pub fn serialize<S: Serializer>(p: &Point3, s: S) -> Result<S::Ok, S::Error> {
        [p.x, p.y, p.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Point3, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(d)?;
        Ok(Point3::new(x, y, z))
    }
}
