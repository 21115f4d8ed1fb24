//! Exact simulation of the superposed bivariate process under an allocation,
//! by Ogata thinning (exponential-Gaussian family) or cluster construction
//! (both families), plus Monte Carlo evaluation of counterfactual regimes.
//!
//! Model conventions match the likelihood exactly: before t* all cells feed
//! component 0 and the component-1 intensity is zero; after t* the background
//! is gated by the allocation while triggering is regime-independent; events
//! never reproduce from outside the study region (offspring landing outside
//! are censored and do not reproduce).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::catalog::{EventCatalog, Labelling, SpaceTimePoint};
use crate::error::{Error, Result};
use crate::geometry::{Allocation, Cell, Tessellation, Window};
use crate::kernel::KernelFamily;
use crate::params::{BackgroundModel, Gating, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimMethod {
    /// Ogata thinning with a piecewise-constant dominating rate; exact for the
    /// exponential-Gaussian family.
    Thinning,
    /// Poisson cluster (branching) construction; exact for both families,
    /// requires a subcritical branching matrix.
    Branching,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: ModelParams,
    pub window: Window,
    pub t_star: f64,
    pub tess: Tessellation,
    pub allocation: Allocation,
    pub seed: u64,
    pub method: SimMethod,
    /// Extra burn-in time simulated before the window start and discarded.
    pub warmup: f64,
    /// Explosion guard: error when the realization exceeds this many events.
    pub max_events: usize,
    /// Fixed conditioning history (events at or before the window start).
    pub initial_history: Vec<SpaceTimePoint>,
}

impl SimConfig {
    pub fn new(
        params: ModelParams,
        window: Window,
        t_star: f64,
        tess: Tessellation,
        allocation: Allocation,
        seed: u64,
    ) -> Self {
        Self {
            params,
            window,
            t_star,
            tess,
            allocation,
            seed,
            method: SimMethod::Thinning,
            warmup: 0.0,
            max_events: 2_000_000,
            initial_history: Vec::new(),
        }
    }

    pub fn with_method(mut self, method: SimMethod) -> Self {
        self.method = method;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Catalog with the true component label attached to every event.
    pub catalog: EventCatalog,
    /// True labelling of the post-treatment events.
    pub truth: Labelling,
    /// Time ties broken by one-ulp perturbation (almost surely zero).
    pub tie_perturbations: usize,
}

/// Deterministic per-replicate stream seed.
pub fn rep_seed(seed: u64, rep: usize) -> u64 {
    // splitmix64 over (seed, rep)
    let mut z = seed ^ (rep as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Simulate one realization on the configured window.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    cfg.params.validate()?;
    if !(cfg.window.t_start <= cfg.t_star && cfg.t_star < cfg.window.t_end) {
        return Err(Error::InvalidInput("t_star must lie inside the window".into()));
    }
    if cfg.warmup < 0.0 {
        return Err(Error::InvalidInput("warmup must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut events = match cfg.method {
        SimMethod::Thinning => thinning(cfg, &mut rng)?,
        SimMethod::Branching => branching(cfg, &mut rng)?,
    };
    events.retain(|e| e.t > cfg.window.t_start);
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut ties = 0usize;
    for i in 1..events.len() {
        if events[i].t <= events[i - 1].t {
            events[i].t = events[i - 1].t.next_up();
            ties += 1;
        }
    }
    let mut pre: Vec<SpaceTimePoint> = cfg.initial_history.clone();
    let mut post = Vec::new();
    for e in events {
        if e.t <= cfg.t_star {
            pre.push(e);
        } else {
            post.push(e);
        }
    }
    let catalog = EventCatalog::new(pre, post, cfg.t_star, cfg.window)?;
    let truth = catalog
        .truth_labelling()
        .ok_or_else(|| Error::InvalidInput("simulated event missing its label".into()))?;
    Ok(SimResult { catalog, truth, tie_perturbations: ties })
}

// ---------------------------------------------------------------------------
// background sampling
// ---------------------------------------------------------------------------

/// Sampler for gated background locations of one component.
struct BackgroundSampler {
    /// Cumulative weights over sources (cells, or raster pixels with a field).
    cum: Vec<f64>,
    /// Source index -> geometry to draw within.
    sources: Vec<BgSource>,
    total: f64,
}

enum BgSource {
    CellRect(crate::geometry::Rect),
    CellPolygon(Cell),
    Pixel(crate::geometry::Rect),
}

impl BackgroundSampler {
    fn build(params: &ModelParams, tess: &Tessellation, gating: Gating, k: usize) -> Self {
        let mut cum = Vec::new();
        let mut sources = Vec::new();
        let mut total = 0.0;
        let active = |j: usize| match gating {
            Gating::PreTreatment => k == 0,
            Gating::Allocated(a) => a.treatment(j) == k as u8,
        };
        match (&params.background, params.background_model) {
            (Some(field), BackgroundModel::TotalMass) => {
                let pa = field.pixel_area();
                for i in 0..field.weights().len() {
                    let (cx, cy) = field.pixel_center(i);
                    let Some(j) = tess.cell_index(cx, cy) else { continue };
                    if !active(j) {
                        continue;
                    }
                    let w = field.weights()[i] * pa;
                    if w <= 0.0 {
                        continue;
                    }
                    total += w;
                    cum.push(total);
                    let wx = (field.region.x_max - field.region.x_min) / field.nx as f64;
                    let wy = (field.region.y_max - field.region.y_min) / field.ny as f64;
                    sources.push(BgSource::Pixel(crate::geometry::Rect {
                        x_min: cx - 0.5 * wx,
                        x_max: cx + 0.5 * wx,
                        y_min: cy - 0.5 * wy,
                        y_max: cy + 0.5 * wy,
                    }));
                }
            }
            _ => {
                for j in 0..tess.n_cells() {
                    if !active(j) {
                        continue;
                    }
                    let area = tess.cell_area(j);
                    if area <= 0.0 {
                        continue;
                    }
                    total += area;
                    cum.push(total);
                    match tess.cell(j) {
                        Cell::Rect(r) => sources.push(BgSource::CellRect(r)),
                        c @ Cell::Polygon(_) => sources.push(BgSource::CellPolygon(c)),
                    }
                }
            }
        }
        Self { cum, sources, total }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let u = rng.gen_range(0.0..self.total);
        let idx = self.cum.partition_point(|&c| c < u).min(self.sources.len() - 1);
        match &self.sources[idx] {
            BgSource::CellRect(r) | BgSource::Pixel(r) => {
                (rng.gen_range(r.x_min..r.x_max), rng.gen_range(r.y_min..r.y_max))
            }
            BgSource::CellPolygon(c) => {
                let bb = c.bounding_box();
                loop {
                    let x = rng.gen_range(bb.x_min..bb.x_max);
                    let y = rng.gen_range(bb.y_min..bb.y_max);
                    if c.contains(x, y) {
                        return (x, y);
                    }
                }
            }
        }
    }
}

fn sample_magnitude(kernel: &KernelFamily, rng: &mut ChaCha8Rng) -> Option<f64> {
    match kernel {
        KernelFamily::ExpGauss(_) => None,
        KernelFamily::Etas(e) => {
            let u: f64 = rng.gen_range(0.0f64..1.0);
            Some(e.m0 - (1.0 - u).ln() / e.gr_beta)
        }
    }
}

// ---------------------------------------------------------------------------
// thinning
// ---------------------------------------------------------------------------

struct ActiveParent {
    t: f64,
    x: f64,
    y: f64,
    /// Region-clipped spatial mass times amplitude and normalization, per
    /// receiving component (temporal decay applied at evaluation).
    contrib: [f64; 2],
}

fn thinning(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Vec<SpaceTimePoint>> {
    let kr = match &cfg.params.kernel {
        KernelFamily::ExpGauss(k) => *k,
        KernelFamily::Etas(_) => {
            return Err(Error::InvalidInput(
                "thinning needs a computable intensity bound; use Branching for ETAS".into(),
            ))
        }
    };
    let params = &cfg.params;
    let region = cfg.window.region;
    let start = cfg.window.t_start - cfg.warmup;
    let t_end = cfg.window.t_end;
    let mut events: Vec<SpaceTimePoint> = Vec::new();
    let mut active: Vec<ActiveParent> = cfg
        .initial_history
        .iter()
        .map(|e| make_parent(&kr, e, region))
        .collect();

    let make_contrib = |e: &SpaceTimePoint| make_parent(&kr, e, region);

    // segments with constant gating
    let segments = [(start, cfg.t_star, Gating::PreTreatment), (
        cfg.t_star,
        t_end,
        Gating::Allocated(&cfg.allocation),
    )];
    for (seg_a, seg_b, gating) in segments {
        if seg_b <= seg_a {
            continue;
        }
        let comps: &[usize] = match gating {
            Gating::PreTreatment => &[0],
            Gating::Allocated(_) => &[0, 1],
        };
        let bg_rate: [f64; 2] = [
            params.background_total_rate(0, &cfg.tess, gating),
            params.background_total_rate(1, &cfg.tess, gating),
        ];
        let bg_total: f64 = comps.iter().map(|&k| bg_rate[k]).sum();
        let bg_samplers: [Option<BackgroundSampler>; 2] = [
            (bg_rate[0] > 0.0).then(|| BackgroundSampler::build(params, &cfg.tess, gating, 0)),
            (bg_rate[1] > 0.0).then(|| BackgroundSampler::build(params, &cfg.tess, gating, 1)),
        ];
        let ground = |t: f64, active: &[ActiveParent]| -> f64 {
            let mut g = bg_total;
            for p in active {
                let dt = t - p.t;
                if dt <= 0.0 || dt > kr.h {
                    continue;
                }
                for &k in comps {
                    g += p.contrib[k] * (-kr.beta[k] * dt).exp();
                }
            }
            g
        };

        let mut t = seg_a;
        // dominate with the value immediately after the current time: between
        // accepted events every term decays, so the bound stays valid
        let mut bound = ground(t.next_up(), &active).max(1e-300);
        loop {
            active.retain(|p| t - p.t <= kr.h);
            if bound <= 0.0 {
                break;
            }
            let gap = -(1.0 - rng.gen_range(0.0f64..1.0)).ln() / bound;
            let t_cand = t + gap;
            if t_cand >= seg_b {
                break;
            }
            let lam = ground(t_cand, &active);
            let u: f64 = rng.gen_range(0.0f64..1.0);
            if u * bound <= lam {
                // accept: pick the source, then the location
                let mut pick = rng.gen_range(0.0f64..1.0) * lam;
                let mut chosen: Option<(usize, Option<usize>)> = None; // (component, parent idx)
                'outer: {
                    for &k in comps {
                        if bg_rate[k] > 0.0 {
                            pick -= bg_rate[k];
                            if pick <= 0.0 {
                                chosen = Some((k, None));
                                break 'outer;
                            }
                        }
                    }
                    for (pi, p) in active.iter().enumerate() {
                        let dt = t_cand - p.t;
                        if dt <= 0.0 || dt > kr.h {
                            continue;
                        }
                        for &k in comps {
                            pick -= p.contrib[k] * (-kr.beta[k] * dt).exp();
                            if pick <= 0.0 {
                                chosen = Some((k, Some(pi)));
                                break 'outer;
                            }
                        }
                    }
                    // numerical remainder: attribute to the last positive source
                    let k = *comps.last().unwrap();
                    chosen = Some((k, None));
                }
                let (k, parent) = chosen.unwrap();
                let (x, y) = match parent {
                    None => match &bg_samplers[k] {
                        Some(s) => s.sample(rng),
                        None => {
                            return Err(Error::InvalidInput(
                                "background source chosen with zero rate".into(),
                            ))
                        }
                    },
                    Some(pi) => {
                        let p = &active[pi];
                        sample_gauss_offspring(&kr, k, p.x, p.y, &region, rng)
                    }
                };
                let ev = SpaceTimePoint { t: t_cand, x, y, mag: None, label: Some(k as u8) };
                active.push(make_contrib(&ev));
                events.push(ev);
                if events.len() > cfg.max_events {
                    return Err(Error::ExplosionGuard { cap: cfg.max_events });
                }
                t = t_cand;
                bound = ground(t.next_up(), &active).max(1e-300);
            } else {
                // rejected: the ground intensity only decays until the next event
                t = t_cand;
                bound = lam.max(1e-300);
            }
        }
    }
    Ok(events)
}

fn make_parent(
    kr: &crate::kernel::ExpGauss,
    e: &SpaceTimePoint,
    region: crate::geometry::Rect,
) -> ActiveParent {
    let lp = e.label.unwrap_or(0) as usize;
    let mut contrib = [0.0; 2];
    for (k, c) in contrib.iter_mut().enumerate() {
        let norm = if kr.normalized {
            kr.beta[k] * kr.alpha[k] / std::f64::consts::PI
        } else {
            1.0
        };
        *c = kr.k[k][lp] * norm * kr.spatial_integral_rect(k, e.x, e.y, &region);
    }
    ActiveParent { t: e.t, x: e.x, y: e.y, contrib }
}

/// Box-truncated Gaussian displacement, rejected until inside the region.
fn sample_gauss_offspring(
    kr: &crate::kernel::ExpGauss,
    k: usize,
    px: f64,
    py: f64,
    region: &crate::geometry::Rect,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let sigma = 1.0 / (2.0 * kr.alpha[k]).sqrt();
    let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
    loop {
        let dx = normal.sample(rng);
        let dy = normal.sample(rng);
        if dx.abs() > kr.r_max || dy.abs() > kr.r_max {
            continue;
        }
        let x = px + dx;
        let y = py + dy;
        if region.contains(x, y) {
            return (x, y);
        }
    }
}

// ---------------------------------------------------------------------------
// branching (cluster) construction
// ---------------------------------------------------------------------------

fn branching(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Vec<SpaceTimePoint>> {
    let params = &cfg.params;
    let radius = params.kernel.spectral_radius();
    if radius >= 1.0 {
        return Err(Error::Supercritical { radius });
    }
    let region = cfg.window.region;
    let start = cfg.window.t_start - cfg.warmup;
    let t_end = cfg.window.t_end;

    let mut queue: Vec<SpaceTimePoint> = Vec::new();
    let mut out: Vec<SpaceTimePoint> = Vec::new();

    // immigrants per gating segment
    let segments = [(start, cfg.t_star, Gating::PreTreatment), (
        cfg.t_star,
        t_end,
        Gating::Allocated(&cfg.allocation),
    )];
    for (seg_a, seg_b, gating) in segments {
        if seg_b <= seg_a {
            continue;
        }
        for k in 0..2usize {
            let rate = params.background_total_rate(k, &cfg.tess, gating);
            if rate <= 0.0 {
                continue;
            }
            let sampler = BackgroundSampler::build(params, &cfg.tess, gating, k);
            let n = Poisson::new(rate * (seg_b - seg_a)).unwrap().sample(rng) as usize;
            for _ in 0..n {
                let t = rng.gen_range(seg_a..seg_b);
                let (x, y) = sampler.sample(rng);
                let ev = SpaceTimePoint {
                    t,
                    x,
                    y,
                    mag: sample_magnitude(&params.kernel, rng),
                    label: Some(k as u8),
                };
                queue.push(ev);
            }
        }
    }
    // fixed history reproduces but is not part of the output
    let mut frontier: Vec<SpaceTimePoint> = cfg.initial_history.clone();
    frontier.extend(queue.iter().cloned());
    out.extend(queue);

    // generations: each parent spawns offspring per receiving component
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for parent in &frontier {
            let lp = parent.label.unwrap_or(0) as usize;
            for k in 0..2usize {
                let mass = offspring_mass(params, k, lp, parent.mag);
                if mass <= 0.0 {
                    continue;
                }
                let n = Poisson::new(mass).unwrap().sample(rng) as usize;
                for _ in 0..n {
                    let Some(child) = sample_offspring(params, k, parent, &region, t_end, cfg, rng)
                    else {
                        continue;
                    };
                    next.push(child);
                }
            }
        }
        out.extend(next.iter().cloned());
        if out.len() > cfg.max_events {
            return Err(Error::ExplosionGuard { cap: cfg.max_events });
        }
        frontier = next;
    }
    Ok(out)
}

fn offspring_mass(params: &ModelParams, k: usize, lp: usize, mag: Option<f64>) -> f64 {
    match &params.kernel {
        KernelFamily::ExpGauss(kr) => kr.offspring_mass(k, lp),
        KernelFamily::Etas(kr) => kr.offspring_mass(k, lp, mag.unwrap_or(kr.m0)),
    }
}

/// Draw one offspring of component k; None when censored (outside the region,
/// beyond the window end, or a component-1 child before treatment starts).
fn sample_offspring(
    params: &ModelParams,
    k: usize,
    parent: &SpaceTimePoint,
    region: &crate::geometry::Rect,
    t_end: f64,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Option<SpaceTimePoint> {
    let (t, x, y) = match &params.kernel {
        KernelFamily::ExpGauss(kr) => {
            // truncated exponential lag on (0, h]
            let u: f64 = rng.gen_range(0.0f64..1.0);
            let trunc = 1.0 - (-kr.beta[k] * kr.h).exp();
            let dt = -(1.0 - u * trunc).ln() / kr.beta[k];
            let sigma = 1.0 / (2.0 * kr.alpha[k]).sqrt();
            let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
            let (dx, dy) = loop {
                let dx = normal.sample(rng);
                let dy = normal.sample(rng);
                if dx.abs() <= kr.r_max && dy.abs() <= kr.r_max {
                    break (dx, dy);
                }
            };
            (parent.t + dt, parent.x + dx, parent.y + dy)
        }
        KernelFamily::Etas(kr) => {
            let u: f64 = rng.gen_range(0.0f64..1.0);
            let g_tr = 1.0 - (1.0 + kr.t_trunc / kr.c).powf(1.0 - kr.p);
            let dt = kr.c * ((1.0 - u * g_tr).powf(1.0 / (1.0 - kr.p)) - 1.0);
            let d = kr.spatial_scale(parent.mag.unwrap_or(kr.m0));
            let v: f64 = rng.gen_range(0.0f64..1.0);
            let r = (d * ((1.0 - v).powf(1.0 / (1.0 - kr.q)) - 1.0)).max(0.0).sqrt();
            let phi = rng.gen_range(0.0..(2.0 * std::f64::consts::PI));
            (parent.t + dt, parent.x + r * phi.cos(), parent.y + r * phi.sin())
        }
    };
    // component 1 does not exist before treatment
    if k == 1 && t <= cfg.t_star {
        return None;
    }
    if t > t_end || !region.contains(x, y) {
        return None;
    }
    Some(SpaceTimePoint {
        t,
        x,
        y,
        mag: sample_magnitude(&params.kernel, rng),
        label: Some(k as u8),
    })
}

// ---------------------------------------------------------------------------
// counterfactual regimes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CounterfactualConfig {
    pub params: ModelParams,
    pub window: Window,
    pub t_star: f64,
    pub tess: Tessellation,
    /// Count events in (t_star, t_star + horizon]; defaults to the full window.
    pub horizon: Option<f64>,
    pub n_reps: usize,
    pub seed: u64,
    pub method: SimMethod,
    /// Conditioning pre-treatment history (all control).
    pub pre_history: Vec<SpaceTimePoint>,
    pub max_events: usize,
}

/// Per-replicate post-treatment counts under a fixed allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualDraws {
    pub total: Vec<u64>,
    pub per_cell: Vec<Vec<u32>>,
}

/// Monte Carlo draws of N^z over the post-treatment window: replicate i uses a
/// stream derived from (seed, i), so paired regimes share randomness when
/// called with the same seed.
pub fn simulate_counterfactual(
    cfg: &CounterfactualConfig,
    z: &Allocation,
) -> Result<CounterfactualDraws> {
    if cfg.n_reps == 0 {
        return Err(Error::InvalidInput("n_reps must be at least 1".into()));
    }
    let horizon = cfg.horizon.unwrap_or(cfg.window.t_end - cfg.t_star);
    if horizon <= 0.0 || cfg.t_star + horizon > cfg.window.t_end + 1e-9 {
        return Err(Error::InvalidInput("horizon must lie inside the window".into()));
    }
    let u_end = cfg.t_star + horizon;
    let mut total = Vec::with_capacity(cfg.n_reps);
    let mut per_cell = Vec::with_capacity(cfg.n_reps);
    for rep in 0..cfg.n_reps {
        let sim_cfg = SimConfig {
            params: cfg.params.clone(),
            // simulate the post window only, conditioning on the given history
            window: Window::new(cfg.t_star, u_end, cfg.window.region)?,
            t_star: cfg.t_star,
            tess: cfg.tess.clone(),
            allocation: z.clone(),
            seed: rep_seed(cfg.seed, rep),
            method: cfg.method,
            warmup: 0.0,
            max_events: cfg.max_events,
            initial_history: cfg.pre_history.clone(),
        };
        let res = simulate(&sim_cfg)?;
        let mut cells = vec![0u32; cfg.tess.n_cells()];
        for p in res.catalog.post() {
            if let Some(j) = cfg.tess.cell_index(p.x, p.y) {
                cells[j] += 1;
            }
        }
        total.push(res.catalog.n_post() as u64);
        per_cell.push(cells);
    }
    Ok(CounterfactualDraws { total, per_cell })
}
