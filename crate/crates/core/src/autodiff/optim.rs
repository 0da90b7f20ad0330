//! Adam for Euclidean parameters, Riemannian Adam for ball-valued ones.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::{ParamKind, ParamStore};
use super::Mat;
use crate::error::{Error, Result};
use crate::hypgeom::{self, PoincarePoint, TangentVector, MAX_NORM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    first: Mat,
    /// Elementwise for Euclidean parameters; one squared norm per row
    /// (`rows × 1`) for manifold parameters.
    second: Mat,
}

/// Optimizer state for one [`ParamStore`].
///
/// Manifold rows are updated with the Riemannian gradient
/// `((1 - ‖b‖²)² / 4) ∇b`, first moments in the tangent space, a scalar
/// second moment per point, and retraction through the exponential map at
/// the current point followed by projection into the shell.
#[derive(Debug, Clone)]
pub struct RiemannianAdam {
    pub config: AdamConfig,
    moments: Vec<Moments>,
    steps: u64,
}

impl RiemannianAdam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let moments = store
            .params()
            .iter()
            .map(|p| Moments {
                first: Array2::zeros(p.value.raw_dim()),
                second: match p.kind {
                    ParamKind::Euclidean => Array2::zeros(p.value.raw_dim()),
                    ParamKind::Manifold => Array2::zeros((p.value.nrows(), 1)),
                },
            })
            .collect();
        Self { config, moments, steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the gradients accumulated in `store`. Does not
    /// clear them.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for p in store.params() {
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of parameter `{}`", p.name)));
            }
        }
        self.steps += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.steps as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        for (p, mom) in store.params_mut().iter_mut().zip(&mut self.moments) {
            match p.kind {
                ParamKind::Euclidean => {
                    ndarray::Zip::from(&mut p.value)
                        .and(&p.grad)
                        .and(&mut mom.first)
                        .and(&mut mom.second)
                        .for_each(|w, &g, m, v| {
                            *m = beta1 * *m + (1.0 - beta1) * g;
                            *v = beta2 * *v + (1.0 - beta2) * g * g;
                            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                        });
                }
                ParamKind::Manifold => {
                    for r in 0..p.value.nrows() {
                        let point = p.value.row(r).to_vec();
                        let sq: f64 = point.iter().map(|c| c * c).sum();
                        let factor = (1.0 - sq).powi(2) / 4.0;
                        let rgrad: Vec<f64> = p.grad.row(r).iter().map(|g| g * factor).collect();
                        let rnorm2: f64 = rgrad.iter().map(|g| g * g).sum();
                        let mut first = mom.first.row_mut(r);
                        first.zip_mut_with(&ndarray::ArrayView1::from(&rgrad[..]), |m, &g| {
                            *m = beta1 * *m + (1.0 - beta1) * g
                        });
                        let v = &mut mom.second[[r, 0]];
                        *v = beta2 * *v + (1.0 - beta2) * rnorm2;
                        let denom = (*v / c2).sqrt() + eps;
                        let step: Vec<f64> = first.iter().map(|m| -lr * (m / c1) / denom).collect();
                        let base = hypgeom::project_to_ball(&point)?;
                        let next = hypgeom::exp_map(&base, &TangentVector::new(step)?)?;
                        debug_assert!(next.norm() <= MAX_NORM && next.coords().iter().all(|c| c.is_finite()));
                        p.value.row_mut(r).assign(&ndarray::ArrayView1::from(next.coords()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Reads row `r` of a manifold parameter as a ball point.
pub fn manifold_row(value: &Mat, r: usize) -> Result<PoincarePoint> {
    PoincarePoint::new(value.row(r).to_vec())
}
