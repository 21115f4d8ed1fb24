//! Spatial primitives: the study window, tessellations (grid or polygon), and
//! per-cell treatment allocations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::InvalidInput(format!(
                "degenerate rectangle [{x_min},{x_max}]x[{y_min},{y_max}]"
            )));
        }
        Ok(Self { x_min, x_max, y_min, y_max })
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Spatiotemporal study window: [t_start, t_end] x region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t_start: f64,
    pub t_end: f64,
    pub region: Rect,
}

impl Window {
    pub fn new(t_start: f64, t_end: f64, region: Rect) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite() && t_start < t_end) {
            return Err(Error::InvalidInput(format!(
                "window times must satisfy t_start < t_end (got {t_start}, {t_end})"
            )));
        }
        Ok(Self { t_start, t_end, region })
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// |window| = duration x area.
    pub fn volume(&self) -> f64 {
        self.duration() * self.region.area()
    }
}

/// Simple planar polygon (one outer ring, implicitly closed, planar coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub ring: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(ring: Vec<(f64, f64)>) -> Result<Self> {
        if ring.len() < 3 {
            return Err(Error::InvalidInput("polygon needs at least 3 vertices".into()));
        }
        Ok(Self { ring })
    }

    /// Shoelace area (absolute value).
    pub fn area(&self) -> f64 {
        let n = self.ring.len();
        let mut s = 0.0;
        for i in 0..n {
            let (x0, y0) = self.ring[i];
            let (x1, y1) = self.ring[(i + 1) % n];
            s += x0 * y1 - x1 * y0;
        }
        0.5 * s.abs()
    }

    /// Even-odd point-in-polygon test; boundary points count as inside.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let n = self.ring.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = self.ring[i];
            let (xj, yj) = self.ring[j];
            if (yi > y) != (yj > y) {
                let x_cross = (xj - xi) * (y - yi) / (yj - yi) + xi;
                if x < x_cross {
                    inside = !inside;
                } else if (x - x_cross).abs() < 1e-12 {
                    return true;
                }
            }
            j = i;
        }
        inside
    }

    pub fn bounding_box(&self) -> Rect {
        let mut r = Rect {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for &(x, y) in &self.ring {
            r.x_min = r.x_min.min(x);
            r.x_max = r.x_max.max(x);
            r.y_min = r.y_min.min(y);
            r.y_max = r.y_max.max(y);
        }
        r
    }
}

/// Cell geometry within a tessellation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    /// Axis-aligned rectangle (grid tessellations).
    Rect(Rect),
    /// Planar polygon.
    Polygon(Polygon),
}

impl Cell {
    pub fn area(&self) -> f64 {
        match self {
            Cell::Rect(r) => r.area(),
            Cell::Polygon(p) => p.area(),
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Cell::Rect(r) => r.contains(x, y),
            Cell::Polygon(p) => p.contains(x, y),
        }
    }

    pub fn bounding_box(&self) -> Rect {
        match self {
            Cell::Rect(r) => *r,
            Cell::Polygon(p) => p.bounding_box(),
        }
    }
}

/// Exogenous, time-invariant spatial partition of the study region.
///
/// Grid tessellations resolve `cell_index` arithmetically; polygon tessellations
/// scan cells (bounding box first) and must pass a raster coverage check at
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tessellation {
    pub region: Rect,
    kind: TessKind,
    areas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum TessKind {
    Grid { nx: usize, ny: usize },
    Polygons(Vec<Polygon>),
}

impl Tessellation {
    /// Regular nx x ny grid over `region`.
    pub fn grid(region: Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidInput("grid dimensions must be positive".into()));
        }
        let cell_area = region.area() / (nx * ny) as f64;
        Ok(Self { region, kind: TessKind::Grid { nx, ny }, areas: vec![cell_area; nx * ny] })
    }

    /// Polygon tessellation. Validates the partition on a raster: every probe
    /// point must fall in exactly one polygon, with uncovered/overlapping area
    /// fraction below `tol_area_fraction`.
    pub fn polygons(region: Rect, polys: Vec<Polygon>, tol_area_fraction: f64) -> Result<Self> {
        if polys.is_empty() {
            return Err(Error::InvalidInput("polygon tessellation needs at least one cell".into()));
        }
        for (j, p) in polys.iter().enumerate() {
            if p.area() <= 0.0 {
                return Err(Error::InvalidInput(format!("polygon cell {j} has zero area")));
            }
        }
        const PROBE: usize = 256;
        let mut uncovered = 0usize;
        let mut overlap_pair: Option<(usize, usize)> = None;
        let mut overlapping = 0usize;
        for iy in 0..PROBE {
            for ix in 0..PROBE {
                let x = region.x_min
                    + (ix as f64 + 0.5) / PROBE as f64 * (region.x_max - region.x_min);
                let y = region.y_min
                    + (iy as f64 + 0.5) / PROBE as f64 * (region.y_max - region.y_min);
                let mut hits = [usize::MAX; 2];
                let mut n_hits = 0;
                for (j, p) in polys.iter().enumerate() {
                    if p.contains(x, y) {
                        if n_hits < 2 {
                            hits[n_hits] = j;
                        }
                        n_hits += 1;
                    }
                }
                match n_hits {
                    0 => uncovered += 1,
                    1 => {}
                    _ => {
                        overlapping += 1;
                        if overlap_pair.is_none() {
                            overlap_pair = Some((hits[0], hits[1]));
                        }
                    }
                }
            }
        }
        let total = (PROBE * PROBE) as f64;
        // One raster row of slack for boundary-tracing jitter.
        let raster_slack = 2.0 / PROBE as f64;
        if overlapping as f64 / total > tol_area_fraction.max(raster_slack) {
            let (a, b) = overlap_pair.unwrap();
            return Err(Error::InvalidInput(format!(
                "overlapping polygons: cells {a} and {b} (overlap fraction {:.2e})",
                overlapping as f64 / total
            )));
        }
        if uncovered as f64 / total > tol_area_fraction.max(raster_slack) {
            return Err(Error::InvalidInput(format!(
                "polygons fail to cover the region (uncovered fraction {:.2e})",
                uncovered as f64 / total
            )));
        }
        let areas = polys.iter().map(|p| p.area()).collect();
        Ok(Self { region, kind: TessKind::Polygons(polys), areas })
    }

    pub fn n_cells(&self) -> usize {
        self.areas.len()
    }

    pub fn cell_area(&self, j: usize) -> f64 {
        self.areas[j]
    }

    pub fn cell(&self, j: usize) -> Cell {
        match &self.kind {
            TessKind::Grid { nx, ny } => {
                let ix = j % nx;
                let iy = j / nx;
                debug_assert!(iy < *ny);
                let wx = (self.region.x_max - self.region.x_min) / *nx as f64;
                let wy = (self.region.y_max - self.region.y_min) / *ny as f64;
                Cell::Rect(Rect {
                    x_min: self.region.x_min + ix as f64 * wx,
                    x_max: self.region.x_min + (ix + 1) as f64 * wx,
                    y_min: self.region.y_min + iy as f64 * wy,
                    y_max: self.region.y_min + (iy + 1) as f64 * wy,
                })
            }
            TessKind::Polygons(ps) => Cell::Polygon(ps[j].clone()),
        }
    }

    /// Cell index of a point inside the region. Points on shared grid edges
    /// resolve to the higher-index cell except on the outer boundary.
    pub fn cell_index(&self, x: f64, y: f64) -> Option<usize> {
        if !self.region.contains(x, y) {
            return None;
        }
        match &self.kind {
            TessKind::Grid { nx, ny } => {
                let fx = (x - self.region.x_min) / (self.region.x_max - self.region.x_min);
                let fy = (y - self.region.y_min) / (self.region.y_max - self.region.y_min);
                let ix = ((fx * *nx as f64) as usize).min(nx - 1);
                let iy = ((fy * *ny as f64) as usize).min(ny - 1);
                Some(iy * nx + ix)
            }
            TessKind::Polygons(ps) => {
                for (j, p) in ps.iter().enumerate() {
                    let bb = p.bounding_box();
                    if bb.contains(x, y) && p.contains(x, y) {
                        return Some(j);
                    }
                }
                None
            }
        }
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.kind, TessKind::Grid { .. })
    }
}

/// Binary per-cell treatment vector; component 1 is gated to cells with z = 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    z: Vec<u8>,
}

impl Allocation {
    pub fn new(z: Vec<u8>, tess: &Tessellation) -> Result<Self> {
        if z.len() != tess.n_cells() {
            return Err(Error::InvalidInput(format!(
                "allocation length {} != {} cells",
                z.len(),
                tess.n_cells()
            )));
        }
        if z.iter().any(|&b| b > 1) {
            return Err(Error::InvalidInput("allocation entries must be 0 or 1".into()));
        }
        Ok(Self { z })
    }

    pub fn all_control(tess: &Tessellation) -> Self {
        Self { z: vec![0; tess.n_cells()] }
    }

    pub fn all_treated(tess: &Tessellation) -> Self {
        Self { z: vec![1; tess.n_cells()] }
    }

    /// Flip coordinate `j` to `value`, leaving the rest unchanged.
    pub fn with_cell(&self, j: usize, value: u8) -> Self {
        let mut z = self.z.clone();
        z[j] = value;
        Self { z }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn treatment(&self, j: usize) -> u8 {
        self.z[j]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.z
    }

    /// Total area allocated to component k under this allocation.
    pub fn component_area(&self, tess: &Tessellation, k: u8) -> f64 {
        self.z
            .iter()
            .enumerate()
            .filter(|(_, &zj)| zj == k)
            .map(|(j, _)| tess.cell_area(j))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_10x10_over_100_square() {
        let region = Rect::new(0.0, 100.0, 0.0, 100.0).unwrap();
        let tess = Tessellation::grid(region, 10, 10).unwrap();
        assert_eq!(tess.n_cells(), 100);
        for j in 0..100 {
            assert!((tess.cell_area(j) - 100.0).abs() < 1e-12);
        }
        assert_eq!(tess.cell_index(5.0, 5.0), Some(0));
        assert_eq!(tess.cell_index(95.0, 95.0), Some(99));
        assert_eq!(tess.cell_index(100.0, 100.0), Some(99));
        assert_eq!(tess.cell_index(101.0, 5.0), None);
    }

    #[test]
    fn grid_1x1_is_region() {
        let region = Rect::new(-1.0, 3.0, 2.0, 4.0).unwrap();
        let tess = Tessellation::grid(region, 1, 1).unwrap();
        assert_eq!(tess.n_cells(), 1);
        assert!((tess.cell_area(0) - region.area()).abs() < 1e-12);
        match tess.cell(0) {
            Cell::Rect(r) => assert_eq!(r, region),
            _ => panic!("grid cell should be a rect"),
        }
    }

    #[test]
    fn polygons_cover_check() {
        let region = Rect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let left = Polygon::new(vec![(0.0, 0.0), (0.5, 0.0), (0.5, 1.0), (0.0, 1.0)]).unwrap();
        let right = Polygon::new(vec![(0.5, 0.0), (1.0, 0.0), (1.0, 1.0), (0.5, 1.0)]).unwrap();
        let tess = Tessellation::polygons(region, vec![left.clone(), right], 1e-6).unwrap();
        assert_eq!(tess.n_cells(), 2);
        assert_eq!(tess.cell_index(0.25, 0.5), Some(0));
        assert_eq!(tess.cell_index(0.75, 0.5), Some(1));

        // A single half-square leaves half the region uncovered.
        let err = Tessellation::polygons(region, vec![left], 1e-6);
        assert!(err.is_err());
    }

    #[test]
    fn overlapping_polygons_rejected() {
        let region = Rect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let a = Polygon::new(vec![(0.0, 0.0), (0.8, 0.0), (0.8, 1.0), (0.0, 1.0)]).unwrap();
        let b = Polygon::new(vec![(0.4, 0.0), (1.0, 0.0), (1.0, 1.0), (0.4, 1.0)]).unwrap();
        let err = Tessellation::polygons(region, vec![a, b], 1e-6).unwrap_err();
        assert!(err.to_string().contains("overlap"));
    }

    #[test]
    fn allocation_validation_and_areas() {
        let region = Rect::new(0.0, 100.0, 0.0, 100.0).unwrap();
        let tess = Tessellation::grid(region, 10, 10).unwrap();
        assert!(Allocation::new(vec![0; 99], &tess).is_err());
        assert!(Allocation::new(vec![2; 100], &tess).is_err());
        let mut z = vec![0u8; 100];
        for zj in z.iter_mut().take(50) {
            *zj = 1;
        }
        let alloc = Allocation::new(z, &tess).unwrap();
        assert!((alloc.component_area(&tess, 1) - 5000.0).abs() < 1e-9);
        assert!((alloc.component_area(&tess, 0) - 5000.0).abs() < 1e-9);
    }

    #[test]
    fn polygon_contains_and_area() {
        let tri = Polygon::new(vec![(0.0, 0.0), (2.0, 0.0), (0.0, 2.0)]).unwrap();
        assert!((tri.area() - 2.0).abs() < 1e-12);
        assert!(tri.contains(0.5, 0.5));
        assert!(!tri.contains(1.5, 1.5));
    }
}
