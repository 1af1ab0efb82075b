use nalgebra::{Matrix2, Matrix4, Vector2};

use super::{SdeId, SdeSpec};
use crate::{Error, Result};

/// Transition mean and componentwise variance of `x_t` given `x_0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl Moments {
    pub fn std(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }
}

impl SdeSpec {
    /// Analytic transition moments of the continuous-time process, available
    /// for the linear systems (`ou1d`, `gbm`, `ou2d`).
    pub fn closed_form_moments(&self, x0: &[f64], t: f64) -> Result<Moments> {
        if x0.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "initial state must have length {}, got {}",
                self.dim(),
                x0.len()
            )));
        }
        if !(t >= 0.0) {
            return Err(Error::InvalidInput(format!("time must be >= 0, got {t}")));
        }
        match *self {
            SdeSpec::Ou1d { theta, mu, sigma } => {
                let decay = (-theta * t).exp();
                Ok(Moments {
                    mean: vec![mu + (x0[0] - mu) * decay],
                    variance: vec![sigma * sigma * (1.0 - (-2.0 * theta * t).exp()) / (2.0 * theta)],
                })
            }
            SdeSpec::Gbm { mu, sigma } => {
                let growth = (mu * t).exp();
                Ok(Moments {
                    mean: vec![x0[0] * growth],
                    variance: vec![x0[0] * x0[0] * growth * growth * ((sigma * sigma * t).exp() - 1.0)],
                })
            }
            SdeSpec::Ou2d { b, sigma } => {
                let b = Matrix2::new(b[0][0], b[0][1], b[1][0], b[1][1]);
                let s = Matrix2::new(sigma[0][0], sigma[0][1], sigma[1][0], sigma[1][1]);
                let (mean, cov) = ou2d_transition(&b, &(s * s.transpose()), &Vector2::new(x0[0], x0[1]), t);
                Ok(Moments {
                    mean: vec![mean[0], mean[1]],
                    variance: vec![cov[(0, 0)], cov[(1, 1)]],
                })
            }
            _ => Err(Error::NotAvailable(format!(
                "no closed-form moments for {}",
                self.id().name()
            ))),
        }
    }

    pub fn has_closed_form(&self) -> bool {
        matches!(self.id(), SdeId::Ou1d | SdeId::Gbm | SdeId::Ou2d)
    }
}

/// Mean `e^{Bt}x₀` and covariance `∫₀ᵗ e^{Bs} Q e^{Bᵀs} ds` via the block
/// matrix exponential of `[[−B, Q], [0, Bᵀ]]·t`.
pub fn ou2d_transition(
    b: &Matrix2<f64>,
    q: &Matrix2<f64>,
    x0: &Vector2<f64>,
    t: f64,
) -> (Vector2<f64>, Matrix2<f64>) {
    let mut block = Matrix4::zeros();
    block.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-b));
    block.fixed_view_mut::<2, 2>(0, 2).copy_from(q);
    block.fixed_view_mut::<2, 2>(2, 2).copy_from(&b.transpose());
    let e = (block * t).exp();
    let f22: Matrix2<f64> = e.fixed_view::<2, 2>(2, 2).into_owned();
    let g12: Matrix2<f64> = e.fixed_view::<2, 2>(0, 2).into_owned();
    let cov = f22.transpose() * g12;
    let mean = (b * t).exp() * x0;
    (mean, (cov + cov.transpose()) * 0.5)
}
