//! Event catalogs: marked spatiotemporal points split at the treatment time, and
//! binary component labellings of the post-treatment events.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Window;

/// One marked event. `mag` is an optional magnitude mark (ETAS); `label` is the
/// component that generated the event when known (0 = control, 1 = treatment).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mag: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

impl SpaceTimePoint {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self { t, x, y, mag: None, label: None }
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_mag(mut self, mag: f64) -> Self {
        self.mag = Some(mag);
        self
    }
}

/// Ordered event catalog split at the treatment time t*.
///
/// Invariants enforced at construction: all points finite and inside the window
/// region, pre events have t <= t* and are labelled 0 (forced), post events have
/// t > t* and are sorted ascending in time (stable in input order on ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCatalog {
    pre: Vec<SpaceTimePoint>,
    post: Vec<SpaceTimePoint>,
    pub t_star: f64,
    pub window: Window,
}

impl EventCatalog {
    pub fn new(
        mut pre: Vec<SpaceTimePoint>,
        mut post: Vec<SpaceTimePoint>,
        t_star: f64,
        window: Window,
    ) -> Result<Self> {
        if !(window.t_start <= t_star && t_star < window.t_end) {
            return Err(Error::InvalidInput(format!(
                "t_star {t_star} outside window [{}, {})",
                window.t_start, window.t_end
            )));
        }
        for (i, p) in pre.iter().chain(post.iter()).enumerate() {
            if !(p.t.is_finite() && p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::InvalidInput(format!("event {i} has non-finite coordinates")));
            }
            if !window.region.contains(p.x, p.y) {
                return Err(Error::InvalidInput(format!(
                    "event {i} at ({}, {}) lies outside the region",
                    p.x, p.y
                )));
            }
        }
        if pre.iter().any(|p| p.t > t_star) {
            return Err(Error::InvalidInput("pre-treatment event with t > t_star".into()));
        }
        if post.iter().any(|p| p.t <= t_star) {
            return Err(Error::InvalidInput("post-treatment event with t <= t_star".into()));
        }
        for p in &mut pre {
            p.label = Some(0);
        }
        pre.sort_by(|a, b| a.t.total_cmp(&b.t));
        post.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self { pre, post, t_star, window })
    }

    /// Build from a single merged list, splitting at t_star.
    pub fn from_events(events: Vec<SpaceTimePoint>, t_star: f64, window: Window) -> Result<Self> {
        let (pre, post) = events.into_iter().partition(|p| p.t <= t_star);
        Self::new(pre, post, t_star, window)
    }

    pub fn pre(&self) -> &[SpaceTimePoint] {
        &self.pre
    }

    pub fn post(&self) -> &[SpaceTimePoint] {
        &self.post
    }

    pub fn n_pre(&self) -> usize {
        self.pre.len()
    }

    pub fn n_post(&self) -> usize {
        self.post.len()
    }

    /// Number of post-treatment events with t <= u.
    pub fn n_post_upto(&self, u: f64) -> usize {
        self.post.partition_point(|p| p.t <= u)
    }

    /// True labelling of the post-treatment events, if every event carries one.
    pub fn truth_labelling(&self) -> Option<Labelling> {
        let bits: Option<Vec<u8>> = self.post.iter().map(|p| p.label).collect();
        bits.map(Labelling::new)
    }

    /// Replace post-event labels with the given labelling (pre stays 0).
    pub fn with_labels(&self, labelling: &Labelling) -> Result<Self> {
        if labelling.len() != self.post.len() {
            return Err(Error::LabellingMismatch {
                got: labelling.len(),
                expected: self.post.len(),
            });
        }
        let mut out = self.clone();
        for (p, &b) in out.post.iter_mut().zip(labelling.bits()) {
            p.label = Some(b);
        }
        Ok(out)
    }
}

/// Binary component assignment of the post-treatment events, indexed by event
/// order in the catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labelling {
    bits: Vec<u8>,
}

impl Labelling {
    pub fn new(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Self { bits }
    }

    pub fn zeros(n: usize) -> Self {
        Self { bits: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> u8 {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, b: u8) {
        self.bits[i] = b;
    }

    /// New labelling with coordinate `i` flipped.
    pub fn flipped(&self, i: usize) -> Self {
        let mut out = self.clone();
        out.bits[i] = 1 - out.bits[i];
        out
    }

    /// Hamming distance over all coordinates.
    pub fn hamming(&self, other: &Labelling) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }

    /// Hamming distance restricted to post events with t <= u.
    pub fn prefix_hamming(&self, other: &Labelling, catalog: &EventCatalog, u: f64) -> usize {
        let n = catalog.n_post_upto(u).min(self.bits.len()).min(other.bits.len());
        self.bits[..n].iter().zip(&other.bits[..n]).filter(|(a, b)| a != b).count()
    }

    /// Labels set to the treatment status of each event's cell.
    pub fn from_cell_treatment(
        catalog: &EventCatalog,
        tess: &crate::geometry::Tessellation,
        alloc: &crate::geometry::Allocation,
    ) -> Self {
        let bits = catalog
            .post()
            .iter()
            .map(|p| tess.cell_index(p.x, p.y).map(|j| alloc.treatment(j)).unwrap_or(0))
            .collect();
        Self { bits }
    }
}
