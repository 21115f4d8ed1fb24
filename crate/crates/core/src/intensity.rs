//! Conditional-intensity evaluation for the superposed bivariate process, plus
//! the oracle log-likelihood-ratio score and decisive-set classification.
//!
//! All evaluations use the left-limit convention: an event never contributes to
//! the intensity at its own time, and only labels of strictly earlier events
//! enter label-induced intensities.

use serde::{Deserialize, Serialize};

use crate::catalog::{EventCatalog, Labelling, SpaceTimePoint};
use crate::error::{Error, Result};
use crate::geometry::{Allocation, Tessellation};
use crate::kernel::KernelFamily;
use crate::params::{Gating, ModelParams};

/// Decisive-set classification of a score at threshold b.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decisive {
    /// score >= b: the oracle favours component 1.
    Plus,
    /// score <= -b: the oracle favours component 0.
    Minus,
    /// |score| < b.
    Ambiguous,
}

/// Exact indicator of the decisive sets S^+(b), S^-(b) and the band A(b).
pub fn classify_decisive(score: f64, b: f64) -> Result<Decisive> {
    if !(b > 0.0) {
        return Err(Error::InvalidInput(format!("threshold b must be positive, got {b}")));
    }
    Ok(if score >= b {
        Decisive::Plus
    } else if score <= -b {
        Decisive::Minus
    } else {
        Decisive::Ambiguous
    })
}

/// Log intensity ratio with its margin-clip flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    /// True when either component intensity was clipped at mu_min.
    pub clipped: bool,
}

/// Precomputed interaction cones for one catalog and kernel support.
///
/// Events are stored flat with the pre-treatment block first. For every
/// post-treatment event the parent list caches the lag, squared distance and
/// sup-norm displacement to each history event inside the truncation window;
/// the child lists are the transpose restricted to post-treatment parents
/// (the forward cone a label flip can touch).
#[derive(Debug, Clone)]
pub struct Cones {
    pub n_pre: usize,
    pub n_post: usize,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mag: Vec<f64>,
    /// Tessellation cell of each post event.
    pub cell: Vec<usize>,
    /// Background field weight at each post event (1 without a field).
    pub weight: Vec<f64>,
    parent_start: Vec<usize>,
    parent_idx: Vec<u32>,
    parent_dt: Vec<f64>,
    parent_r2: Vec<f64>,
    parent_dmax: Vec<f64>,
    child_start: Vec<usize>,
    child_idx: Vec<u32>,
}

impl Cones {
    /// Build the cone index for `catalog` under the support of `params.kernel`.
    pub fn build(catalog: &EventCatalog, params: &ModelParams, tess: &Tessellation) -> Result<Self> {
        let h = params.kernel.temporal_support();
        let r = params.kernel.spatial_support();
        let n_pre = catalog.n_pre();
        let n_post = catalog.n_post();
        let n = n_pre + n_post;
        let mut t = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut mag = Vec::with_capacity(n);
        for p in catalog.pre().iter().chain(catalog.post().iter()) {
            t.push(p.t);
            x.push(p.x);
            y.push(p.y);
            mag.push(p.mag.unwrap_or(reference_mag(&params.kernel)));
        }
        let mut cell = Vec::with_capacity(n_post);
        let mut weight = Vec::with_capacity(n_post);
        for p in catalog.post() {
            let j = tess.cell_index(p.x, p.y).ok_or_else(|| {
                Error::InvalidInput(format!("event at ({}, {}) outside tessellation", p.x, p.y))
            })?;
            cell.push(j);
            weight.push(params.background.as_ref().map(|f| f.value(p.x, p.y)).unwrap_or(1.0));
        }

        let mut parent_start = Vec::with_capacity(n_post + 1);
        let mut parent_idx = Vec::new();
        let mut parent_dt = Vec::new();
        let mut parent_r2 = Vec::new();
        let mut parent_dmax = Vec::new();
        parent_start.push(0);
        for i in 0..n_post {
            let gi = n_pre + i;
            let ti = t[gi];
            // candidate range: t in [ti - h, ti)
            let lo = t.partition_point(|&tp| tp < ti - h);
            let hi = t.partition_point(|&tp| tp < ti);
            for p in lo..hi {
                let dx = (x[gi] - x[p]).abs();
                let dy = (y[gi] - y[p]).abs();
                let dmax = dx.max(dy);
                if dmax > r {
                    continue;
                }
                parent_idx.push(p as u32);
                parent_dt.push(ti - t[p]);
                parent_r2.push(dx * dx + dy * dy);
                parent_dmax.push(dmax);
            }
            parent_start.push(parent_idx.len());
        }

        // transpose: children (post indices) of each post event
        let mut counts = vec![0usize; n_post];
        for i in 0..n_post {
            for s in parent_start[i]..parent_start[i + 1] {
                let p = parent_idx[s] as usize;
                if p >= n_pre {
                    counts[p - n_pre] += 1;
                }
            }
        }
        let mut child_start = vec![0usize; n_post + 1];
        for j in 0..n_post {
            child_start[j + 1] = child_start[j] + counts[j];
        }
        let mut child_idx = vec![0u32; child_start[n_post]];
        let mut fill = child_start.clone();
        for i in 0..n_post {
            for s in parent_start[i]..parent_start[i + 1] {
                let p = parent_idx[s] as usize;
                if p >= n_pre {
                    let j = p - n_pre;
                    child_idx[fill[j]] = i as u32;
                    fill[j] += 1;
                }
            }
        }

        Ok(Self {
            n_pre,
            n_post,
            t,
            x,
            y,
            mag,
            cell,
            weight,
            parent_start,
            parent_idx,
            parent_dt,
            parent_r2,
            parent_dmax,
            child_start,
            child_idx,
        })
    }

    #[inline]
    pub fn parents(&self, i_post: usize) -> impl Iterator<Item = (usize, f64, f64, f64)> + '_ {
        (self.parent_start[i_post]..self.parent_start[i_post + 1]).map(move |s| {
            (self.parent_idx[s] as usize, self.parent_dt[s], self.parent_r2[s], self.parent_dmax[s])
        })
    }

    /// Post-event indices whose intensity a label flip of post event `j` touches.
    #[inline]
    pub fn children(&self, j_post: usize) -> &[u32] {
        &self.child_idx[self.child_start[j_post]..self.child_start[j_post + 1]]
    }

    /// Component label of combined-index event under `labels` (pre events are 0).
    #[inline]
    pub fn label_of(&self, combined: usize, labels: &Labelling) -> usize {
        if combined < self.n_pre {
            0
        } else {
            labels.get(combined - self.n_pre) as usize
        }
    }

    /// Time of post event `i_post`.
    #[inline]
    pub fn post_t(&self, i_post: usize) -> f64 {
        self.t[self.n_pre + i_post]
    }

    /// Label-induced intensity pair at post event `i_post`, using only labels of
    /// strictly earlier events.
    pub fn intensities_at_event(
        &self,
        i_post: usize,
        params: &ModelParams,
        tess: &Tessellation,
        alloc: &Allocation,
        labels: &Labelling,
    ) -> [f64; 2] {
        let j = self.cell[i_post];
        let w = self.weight[i_post];
        let mut lam = [0.0; 2];
        for (k, l) in lam.iter_mut().enumerate() {
            let active = alloc.treatment(j) == k as u8;
            if active {
                *l = match params.background_model {
                    crate::params::BackgroundModel::UniformDensity => params.mu[k],
                    crate::params::BackgroundModel::TotalMass => {
                        let area = alloc.component_area(tess, k as u8);
                        if area > 0.0 {
                            params.mu[k] / area * w
                        } else {
                            0.0
                        }
                    }
                    crate::params::BackgroundModel::RegionMass => {
                        params.mu[k] / tess.region.area() * w
                    }
                };
            }
        }
        for (p, dt, r2, dmax) in self.parents(i_post) {
            let lp = self.label_of(p, labels);
            let mp = self.mag[p];
            for (k, l) in lam.iter_mut().enumerate() {
                *l += params.kernel.eval(k, lp, dt, r2, dmax, mp);
            }
        }
        lam
    }
}

fn reference_mag(kernel: &KernelFamily) -> f64 {
    match kernel {
        KernelFamily::ExpGauss(_) => 0.0,
        KernelFamily::Etas(e) => e.m0,
    }
}

/// Options for free-point intensity evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    /// Error (rather than proceed) when the truncation window reaches before the
    /// observed history start.
    pub strict_coverage: bool,
}

/// Conditional intensity of one component at an arbitrary point, given the
/// catalog history strictly before `point.t`.
///
/// Labels come from `labels` when given, else from the catalog's own event
/// labels; an unlabelled post-treatment history event is an error.
pub fn evaluate_intensity(
    params: &ModelParams,
    catalog: &EventCatalog,
    labels: Option<&Labelling>,
    point: &SpaceTimePoint,
    alloc: &Allocation,
    tess: &Tessellation,
    component: usize,
    opts: EvalOptions,
) -> Result<f64> {
    Ok(intensity_pair(params, catalog, labels, point, alloc, tess, opts)?[component])
}

/// Both component intensities at an arbitrary point.
pub fn intensity_pair(
    params: &ModelParams,
    catalog: &EventCatalog,
    labels: Option<&Labelling>,
    point: &SpaceTimePoint,
    alloc: &Allocation,
    tess: &Tessellation,
    opts: EvalOptions,
) -> Result<[f64; 2]> {
    if let Some(lab) = labels {
        if lab.len() != catalog.n_post() {
            return Err(Error::LabellingMismatch { got: lab.len(), expected: catalog.n_post() });
        }
    }
    let h = params.kernel.temporal_support();
    let r = params.kernel.spatial_support();
    if opts.strict_coverage && point.t - h < catalog.window.t_start && point.t > catalog.window.t_start
    {
        return Err(Error::InvalidInput(format!(
            "pre-history coverage shorter than the truncation window at t = {}",
            point.t
        )));
    }
    let gating = if point.t > catalog.t_star {
        Gating::Allocated(alloc)
    } else {
        Gating::PreTreatment
    };
    let mut lam = [
        params.background_density(0, point.x, point.y, tess, gating),
        params.background_density(1, point.x, point.y, tess, gating),
    ];
    let m0 = reference_mag(&params.kernel);

    let mut add_event = |idx: usize, p: &SpaceTimePoint, lab: usize| {
        let dt = point.t - p.t;
        if dt <= 0.0 || dt > h {
            return Ok(());
        }
        let dx = (point.x - p.x).abs();
        let dy = (point.y - p.y).abs();
        let dmax = dx.max(dy);
        if dmax > r {
            return Ok(());
        }
        let _ = idx;
        let mp = p.mag.unwrap_or(m0);
        for (k, l) in lam.iter_mut().enumerate() {
            *l += params.kernel.eval(k, lab, dt, dx * dx + dy * dy, dmax, mp);
        }
        Ok(())
    };

    for (i, p) in catalog.pre().iter().enumerate() {
        add_event(i, p, 0)?;
    }
    for (i, p) in catalog.post().iter().enumerate() {
        if p.t >= point.t {
            break;
        }
        let lab = match labels {
            Some(lb) => lb.get(i) as usize,
            None => p.label.ok_or(Error::LabelsRequired { index: i })? as usize,
        };
        add_event(catalog.n_pre() + i, p, lab)?;
    }
    Ok(lam)
}

/// Oracle score log(lambda_1 / lambda_0) at a point.
///
/// Intensities below `params.mu_min` are clipped there and flagged; with
/// `mu_min = 0` a vanishing component intensity is a hard error.
pub fn oracle_score(
    params: &ModelParams,
    catalog: &EventCatalog,
    labels: Option<&Labelling>,
    point: &SpaceTimePoint,
    alloc: &Allocation,
    tess: &Tessellation,
) -> Result<Score> {
    let lam = intensity_pair(params, catalog, labels, point, alloc, tess, EvalOptions::default())?;
    score_from_intensities(lam, params.mu_min, point.t)
}

/// Score from an intensity pair, applying the margin convention.
pub fn score_from_intensities(lam: [f64; 2], mu_min: f64, t: f64) -> Result<Score> {
    let mut clipped = false;
    let mut l = lam;
    for (k, v) in l.iter_mut().enumerate() {
        if *v < mu_min {
            if mu_min > 0.0 {
                *v = mu_min;
                clipped = true;
            } else if *v <= 0.0 {
                return Err(Error::MarginViolated { component: k, t });
            }
        }
    }
    let value = l[1].ln() - l[0].ln();
    if !value.is_finite() {
        return Err(Error::MarginViolated { component: usize::from(l[1] > l[0]), t });
    }
    Ok(Score { value, clipped })
}
