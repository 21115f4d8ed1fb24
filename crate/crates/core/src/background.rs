//! Inhomogeneous background fields on a raster, and Gaussian-KDE estimation
//! from reserved pre-treatment events.

use serde::{Deserialize, Serialize};

use crate::catalog::SpaceTimePoint;
use crate::error::{Error, Result};
use crate::geometry::{Rect, Tessellation};

/// Piecewise-constant nonnegative weight field W(x, y) on a raster over the
/// region. After [`BackgroundField::normalize_to_cells`], the mass of W over
/// every tessellation cell equals the cell's area, so a component with total
/// background rate `mu` has density `mu / |S_k| * W(x, y)` on its cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundField {
    pub region: Rect,
    pub nx: usize,
    pub ny: usize,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    /// Silverman's two-dimensional plug-in rule, h_i = sd_i * n^(-1/6).
    Auto,
    /// Fixed isotropic bandwidth (standard deviation of the smoothing kernel).
    Fixed(f64),
}

impl BackgroundField {
    /// Uniform field W = 1.
    pub fn uniform(region: Rect, nx: usize, ny: usize) -> Self {
        Self { region, nx, ny, weights: vec![1.0; nx * ny] }
    }

    pub fn from_weights(region: Rect, nx: usize, ny: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != nx * ny {
            return Err(Error::InvalidInput("weight raster shape mismatch".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        Ok(Self { region, nx, ny, weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn pixel_area(&self) -> f64 {
        self.region.area() / (self.nx * self.ny) as f64
    }

    #[inline]
    fn pixel_index(&self, x: f64, y: f64) -> Option<usize> {
        if !self.region.contains(x, y) {
            return None;
        }
        let fx = (x - self.region.x_min) / (self.region.x_max - self.region.x_min);
        let fy = (y - self.region.y_min) / (self.region.y_max - self.region.y_min);
        let ix = ((fx * self.nx as f64) as usize).min(self.nx - 1);
        let iy = ((fy * self.ny as f64) as usize).min(self.ny - 1);
        Some(iy * self.nx + ix)
    }

    /// Field value at a point (0 outside the region).
    #[inline]
    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.pixel_index(x, y).map(|i| self.weights[i]).unwrap_or(0.0)
    }

    pub fn pixel_center(&self, i: usize) -> (f64, f64) {
        let ix = i % self.nx;
        let iy = i / self.nx;
        let wx = (self.region.x_max - self.region.x_min) / self.nx as f64;
        let wy = (self.region.y_max - self.region.y_min) / self.ny as f64;
        (self.region.x_min + (ix as f64 + 0.5) * wx, self.region.y_min + (iy as f64 + 0.5) * wy)
    }

    /// Rescale pixels cell-by-cell so that the field mass over each tessellation
    /// cell equals the cell's area. Pixels with zero cell mass become uniform 1.
    pub fn normalize_to_cells(&mut self, tess: &Tessellation) {
        let pa = self.pixel_area();
        let n_cells = tess.n_cells();
        let mut pixel_cell = vec![usize::MAX; self.weights.len()];
        let mut mass = vec![0.0; n_cells];
        let mut count = vec![0usize; n_cells];
        for i in 0..self.weights.len() {
            let (x, y) = self.pixel_center(i);
            if let Some(j) = tess.cell_index(x, y) {
                pixel_cell[i] = j;
                mass[j] += self.weights[i] * pa;
                count[j] += 1;
            }
        }
        for (i, w) in self.weights.iter_mut().enumerate() {
            let j = pixel_cell[i];
            if j == usize::MAX {
                continue;
            }
            if mass[j] > 0.0 {
                *w *= tess.cell_area(j) / mass[j];
            } else {
                // raster-area convention keeps the cell mass exact even when the
                // KDE put no mass there
                *w = tess.cell_area(j) / (count[j] as f64 * pa);
            }
        }
    }

    /// Field mass over a tessellation cell (sum of pixel masses).
    pub fn cell_mass(&self, tess: &Tessellation, j: usize) -> f64 {
        let pa = self.pixel_area();
        let mut m = 0.0;
        for i in 0..self.weights.len() {
            let (x, y) = self.pixel_center(i);
            if tess.cell_index(x, y) == Some(j) {
                m += self.weights[i] * pa;
            }
        }
        m
    }
}

/// Gaussian-kernel density estimate of the spatial background on a raster.
///
/// When `tess` is given, the raw density is renormalized cell-wise so that the
/// background mass over each cell matches the cell's area; otherwise the field
/// is normalized globally so its mass equals the region's area.
pub fn estimate_background_kde(
    points: &[SpaceTimePoint],
    region: Rect,
    bandwidth: Bandwidth,
    raster: (usize, usize),
    tess: Option<&Tessellation>,
) -> Result<BackgroundField> {
    if points.is_empty() {
        return Err(Error::InvalidInput("KDE needs at least one point".into()));
    }
    if region.area() <= 0.0 {
        return Err(Error::InvalidInput("region must have positive area".into()));
    }
    let (sx, sy) = match bandwidth {
        Bandwidth::Fixed(s) => {
            if s <= 0.0 {
                return Err(Error::InvalidInput(format!("bandwidth must be positive, got {s}")));
            }
            (s, s)
        }
        Bandwidth::Auto => {
            if points.len() < 10 {
                return Err(Error::InvalidInput(
                    "auto bandwidth needs at least 10 points".into(),
                ));
            }
            let n = points.len() as f64;
            let mean_x = points.iter().map(|p| p.x).sum::<f64>() / n;
            let mean_y = points.iter().map(|p| p.y).sum::<f64>() / n;
            let var_x =
                points.iter().map(|p| (p.x - mean_x) * (p.x - mean_x)).sum::<f64>() / (n - 1.0);
            let var_y =
                points.iter().map(|p| (p.y - mean_y) * (p.y - mean_y)).sum::<f64>() / (n - 1.0);
            let factor = n.powf(-1.0 / 6.0);
            let sx = (var_x.sqrt() * factor).max(1e-12);
            let sy = (var_y.sqrt() * factor).max(1e-12);
            (sx, sy)
        }
    };
    let (nx, ny) = raster;
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidInput("raster shape must be positive".into()));
    }
    let mut field = BackgroundField::uniform(region, nx, ny);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sx * sy * points.len() as f64);
    let mut weights = vec![0.0; nx * ny];
    for (i, w) in weights.iter_mut().enumerate() {
        let (cx, cy) = field.pixel_center(i);
        let mut acc = 0.0;
        for p in points {
            let zx = (cx - p.x) / sx;
            let zy = (cy - p.y) / sy;
            let e2 = 0.5 * (zx * zx + zy * zy);
            if e2 < 40.0 {
                acc += (-e2).exp();
            }
        }
        *w = acc * norm;
    }
    field.weights = weights;
    match tess {
        Some(t) => field.normalize_to_cells(t),
        None => {
            let single = Tessellation::grid(region, 1, 1)?;
            field.normalize_to_cells(&single);
        }
    }
    Ok(field)
}
