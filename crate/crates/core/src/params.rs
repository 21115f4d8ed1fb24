//! Model parameters: per-component backgrounds plus a kernel family, with a
//! fixed-dimension flat parameter vector for optimization.

use serde::{Deserialize, Serialize};

use crate::background::BackgroundField;
use crate::error::{Error, Result};
use crate::geometry::{Allocation, Tessellation};
use crate::kernel::KernelFamily;

/// How the per-component background rate `mu_k` is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackgroundModel {
    /// `mu_k` is an events/time/area density on the component's allocated cells.
    UniformDensity,
    /// `mu_k` is the component's total background rate (events/time)
    /// concentrated on its allocated cells: density `mu_k / |S_k(z)| * W(x, y)`
    /// where `|S_k(z)|` is the area allocated to component k.
    TotalMass,
    /// `mu_k` is the full-region background mass rate: density
    /// `mu_k / |S| * W(x, y)` on allocated cells. The density field is fixed
    /// across regimes; an allocation only re-gates which component owns each
    /// cell's immigrants, so total immigration is conserved.
    RegionMass,
}

/// Which cells feed each component's background.
#[derive(Debug, Clone, Copy)]
pub enum Gating<'a> {
    /// Before treatment: all cells belong to component 0.
    PreTreatment,
    /// After treatment: component k is gated to cells with z = k.
    Allocated(&'a Allocation),
}

/// Full parameter set of the bivariate superposed model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Background rates (interpretation set by `background_model`).
    pub mu: [f64; 2],
    pub kernel: KernelFamily,
    pub background_model: BackgroundModel,
    /// Optional inhomogeneous weight field (TotalMass mode only).
    pub background: Option<BackgroundField>,
    /// Margin floor for log-intensity terms and scores.
    pub mu_min: f64,
}

impl ModelParams {
    pub fn new(mu: [f64; 2], kernel: KernelFamily) -> Self {
        Self {
            mu,
            kernel,
            background_model: BackgroundModel::RegionMass,
            background: None,
            mu_min: 1e-8,
        }
    }

    pub fn with_background_model(mut self, model: BackgroundModel) -> Self {
        self.background_model = model;
        self
    }

    pub fn with_field(mut self, field: BackgroundField) -> Self {
        self.background = Some(field);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidInput("background rates must be positive".into()));
        }
        if self.background.is_some() && self.background_model == BackgroundModel::UniformDensity {
            return Err(Error::InvalidInput(
                "a background field requires a mass-normalized background model".into(),
            ));
        }
        self.kernel.validate()
    }

    /// Area feeding component k's background under the given gating.
    pub fn component_area(&self, k: usize, tess: &Tessellation, gating: Gating) -> f64 {
        match gating {
            Gating::PreTreatment => {
                if k == 0 {
                    tess.region.area()
                } else {
                    0.0
                }
            }
            Gating::Allocated(alloc) => alloc.component_area(tess, k as u8),
        }
    }

    /// Background intensity of component k at (x, y) under the given gating.
    pub fn background_density(
        &self,
        k: usize,
        x: f64,
        y: f64,
        tess: &Tessellation,
        gating: Gating,
    ) -> f64 {
        let active = match gating {
            Gating::PreTreatment => k == 0,
            Gating::Allocated(alloc) => match tess.cell_index(x, y) {
                Some(j) => alloc.treatment(j) == k as u8,
                None => false,
            },
        };
        if !active {
            return 0.0;
        }
        match self.background_model {
            BackgroundModel::UniformDensity => self.mu[k],
            BackgroundModel::TotalMass => {
                let area = self.component_area(k, tess, gating);
                if area <= 0.0 {
                    return 0.0;
                }
                let w = self.background.as_ref().map(|f| f.value(x, y)).unwrap_or(1.0);
                self.mu[k] / area * w
            }
            BackgroundModel::RegionMass => {
                let w = self.background.as_ref().map(|f| f.value(x, y)).unwrap_or(1.0);
                self.mu[k] / tess.region.area() * w
            }
        }
    }

    /// Total background rate (events per unit time) of component k under the
    /// given gating; the time integral of the background is rate x duration.
    pub fn background_total_rate(&self, k: usize, tess: &Tessellation, gating: Gating) -> f64 {
        let area = self.component_area(k, tess, gating);
        if area <= 0.0 {
            return 0.0;
        }
        match self.background_model {
            BackgroundModel::UniformDensity => self.mu[k] * area,
            // cell-wise field normalization makes the field mass equal the area
            BackgroundModel::TotalMass => self.mu[k],
            BackgroundModel::RegionMass => self.mu[k] * area / tess.region.area(),
        }
    }

    /// Background rate restricted to one cell under the given gating.
    pub fn background_cell_rate(
        &self,
        k: usize,
        j: usize,
        tess: &Tessellation,
        gating: Gating,
    ) -> f64 {
        let active = match gating {
            Gating::PreTreatment => k == 0,
            Gating::Allocated(alloc) => alloc.treatment(j) == k as u8,
        };
        if !active {
            return 0.0;
        }
        match self.background_model {
            BackgroundModel::UniformDensity => self.mu[k] * tess.cell_area(j),
            BackgroundModel::TotalMass => {
                let area = self.component_area(k, tess, gating);
                if area <= 0.0 {
                    return 0.0;
                }
                self.mu[k] * tess.cell_area(j) / area
            }
            BackgroundModel::RegionMass => self.mu[k] * tess.cell_area(j) / tess.region.area(),
        }
    }

    /// Sup of the background density over the region (for envelopes and
    /// thinning bounds).
    pub fn background_density_sup(&self, tess: &Tessellation, gating: Gating) -> f64 {
        let mut sup: f64 = 0.0;
        for k in 0..2 {
            let area = self.component_area(k, tess, gating);
            if area <= 0.0 {
                continue;
            }
            let wmax = self
                .background
                .as_ref()
                .map(|f| f.weights().iter().cloned().fold(0.0, f64::max))
                .unwrap_or(1.0);
            let dens = match self.background_model {
                BackgroundModel::UniformDensity => self.mu[k],
                BackgroundModel::TotalMass => self.mu[k] / area * wmax,
                BackgroundModel::RegionMass => self.mu[k] / tess.region.area() * wmax,
            };
            sup = sup.max(dens);
        }
        sup
    }

    // ---- flat parameter vector -------------------------------------------

    pub fn theta_dim(&self) -> usize {
        2 + match &self.kernel {
            KernelFamily::ExpGauss(k) => match k.structure {
                crate::kernel::Excitation::Diagonal => 6,
                crate::kernel::Excitation::Full => 8,
            },
            KernelFamily::Etas(_) => 13,
        }
    }

    pub fn theta(&self) -> Vec<f64> {
        let mut v = vec![self.mu[0], self.mu[1]];
        match &self.kernel {
            KernelFamily::ExpGauss(k) => {
                match k.structure {
                    crate::kernel::Excitation::Diagonal => {
                        v.extend_from_slice(&[k.k[0][0], k.k[1][1]]);
                    }
                    crate::kernel::Excitation::Full => {
                        v.extend_from_slice(&[k.k[0][0], k.k[0][1], k.k[1][0], k.k[1][1]]);
                    }
                }
                v.extend_from_slice(&[k.beta[0], k.beta[1], k.alpha[0], k.alpha[1]]);
            }
            KernelFamily::Etas(k) => {
                v.extend_from_slice(&[k.a[0][0], k.a[0][1], k.a[1][0], k.a[1][1]]);
                v.extend_from_slice(&[
                    k.alpha_m[0][0],
                    k.alpha_m[0][1],
                    k.alpha_m[1][0],
                    k.alpha_m[1][1],
                ]);
                v.extend_from_slice(&[k.c, k.p, k.d0, k.gamma, k.q]);
            }
        }
        v
    }

    pub fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta_dim() {
            return Err(Error::InvalidInput(format!(
                "theta length {} != {}",
                theta.len(),
                self.theta_dim()
            )));
        }
        self.mu = [theta[0], theta[1]];
        match &mut self.kernel {
            KernelFamily::ExpGauss(k) => {
                let rest = match k.structure {
                    crate::kernel::Excitation::Diagonal => {
                        k.k = [[theta[2], 0.0], [0.0, theta[3]]];
                        &theta[4..]
                    }
                    crate::kernel::Excitation::Full => {
                        k.k = [[theta[2], theta[3]], [theta[4], theta[5]]];
                        &theta[6..]
                    }
                };
                k.beta = [rest[0], rest[1]];
                k.alpha = [rest[2], rest[3]];
            }
            KernelFamily::Etas(k) => {
                k.a = [[theta[2], theta[3]], [theta[4], theta[5]]];
                k.alpha_m = [[theta[6], theta[7]], [theta[8], theta[9]]];
                k.c = theta[10];
                k.p = theta[11];
                k.d0 = theta[12];
                k.gamma = theta[13];
                k.q = theta[14];
            }
        }
        Ok(())
    }

    pub fn theta_names(&self) -> Vec<String> {
        let mut names = vec!["mu_0".to_string(), "mu_1".to_string()];
        match &self.kernel {
            KernelFamily::ExpGauss(k) => {
                match k.structure {
                    crate::kernel::Excitation::Diagonal => {
                        names.extend(["K_00", "K_11"].map(String::from));
                    }
                    crate::kernel::Excitation::Full => {
                        names.extend(["K_00", "K_01", "K_10", "K_11"].map(String::from));
                    }
                }
                names.extend(["beta_0", "beta_1", "alpha_0", "alpha_1"].map(String::from));
            }
            KernelFamily::Etas(_) => {
                names.extend(
                    ["A_00", "A_01", "A_10", "A_11", "am_00", "am_01", "am_10", "am_11", "c",
                        "p", "D0", "gamma", "q"]
                        .map(String::from),
                );
            }
        }
        names
    }

    /// Default box constraints for fitting, wide enough for the desk-scale
    /// configurations exercised here.
    pub fn default_bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(1e-6, 1e4); 2];
        match &self.kernel {
            KernelFamily::ExpGauss(k) => {
                let n_amp = match k.structure {
                    crate::kernel::Excitation::Diagonal => 2,
                    crate::kernel::Excitation::Full => 4,
                };
                let amp_hi = if k.normalized { 0.95 } else { 1e3 };
                b.extend(std::iter::repeat((0.0, amp_hi)).take(n_amp));
                b.extend([(0.2, 200.0), (0.2, 200.0)]); // beta
                b.extend([(1e-4, 10.0), (1e-4, 10.0)]); // alpha
            }
            KernelFamily::Etas(_) => {
                b.extend(std::iter::repeat((0.0, 0.95)).take(4)); // A
                b.extend(std::iter::repeat((0.0, 2.2)).take(4)); // alpha_m (< gr_beta)
                b.extend([(1e-3, 50.0), (1.05, 5.0), (1e-4, 10.0), (0.0, 3.0), (1.05, 5.0)]);
            }
        }
        b
    }
}
