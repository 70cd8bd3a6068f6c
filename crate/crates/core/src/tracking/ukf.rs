//! Generic unscented Kalman filter core on dynamic matrices.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::wrap_angle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UkfError {
    #[error("sigma point generation failed: covariance not positive definite")]
    SigmaPointFailure,
    #[error("innovation covariance is singular")]
    SingularInnovation,
}

/// Scaled unscented transform parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnscentedParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UnscentedParams {
    /// `lambda = 0`: all weights non-negative, centre point carries no weight.
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            kappa: 0.0,
        }
    }
}

impl UnscentedParams {
    pub fn lambda(&self, n: usize) -> f64 {
        self.alpha * self.alpha * (n as f64 + self.kappa) - n as f64
    }

    /// `(mean weights, covariance weights)` for `2n + 1` points.
    pub fn weights(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let lambda = self.lambda(n);
        let denom = n as f64 + lambda;
        let mut wm = vec![0.5 / denom; 2 * n + 1];
        let mut wc = wm.clone();
        wm[0] = lambda / denom;
        wc[0] = lambda / denom + (1.0 - self.alpha * self.alpha + self.beta);
        (wm, wc)
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

/// Lower Cholesky factor, retrying once with diagonal jitter.
pub fn robust_cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>, UkfError> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let scale = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let jittered = m + DMatrix::identity(m.nrows(), m.ncols()) * (1e-9 * scale);
    jittered.cholesky().map(|c| c.l()).ok_or(UkfError::SigmaPointFailure)
}

pub fn sigma_points(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    params: &UnscentedParams,
    angles: &[usize],
) -> Result<Vec<DVector<f64>>, UkfError> {
    let n = mean.len();
    let scale = n as f64 + params.lambda(n);
    let l = robust_cholesky(&(cov * scale))?;
    Ok(spread(mean, &l, angles))
}

fn spread(mean: &DVector<f64>, factor: &DMatrix<f64>, angles: &[usize]) -> Vec<DVector<f64>> {
    let n = mean.len();
    let mut pts = Vec::with_capacity(2 * n + 1);
    pts.push(mean.clone());
    for sign in [1.0, -1.0] {
        for i in 0..n {
            let mut p = mean + factor.column(i) * sign;
            for &a in angles {
                p[a] = wrap_angle(p[a]);
            }
            pts.push(p);
        }
    }
    pts
}

/// Weighted mean, wrapping `angles` through a circular mean.
pub fn weighted_mean(points: &[DVector<f64>], wm: &[f64], angles: &[usize]) -> DVector<f64> {
    let n = points[0].len();
    let mut mean = DVector::zeros(n);
    for (p, w) in points.iter().zip(wm) {
        mean += p * *w;
    }
    for &a in angles {
        let (mut s, mut c) = (0.0, 0.0);
        for (p, w) in points.iter().zip(wm) {
            s += w * p[a].sin();
            c += w * p[a].cos();
        }
        mean[a] = s.atan2(c);
    }
    mean
}

fn residual(a: &DVector<f64>, b: &DVector<f64>, angles: &[usize]) -> DVector<f64> {
    let mut d = a - b;
    for &i in angles {
        d[i] = wrap_angle(d[i]);
    }
    d
}

/// Prediction with augmented process noise: `f(x, w)` where `w` is zero-mean
/// with independent variances `q_diag`. `additive` is added to the propagated
/// covariance.
#[allow(clippy::too_many_arguments)]
pub fn predict_augmented<F>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    q_diag: &[f64],
    additive: &DMatrix<f64>,
    params: &UnscentedParams,
    angles: &[usize],
    f: F,
) -> Result<(DVector<f64>, DMatrix<f64>), UkfError>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let n = mean.len();
    let nq = q_diag.len();
    let na = n + nq;
    let scale = na as f64 + params.lambda(na);
    let mut xa = DVector::zeros(na);
    xa.rows_mut(0, n).copy_from(mean);
    let mut la = DMatrix::zeros(na, na);
    la.view_mut((0, 0), (n, n)).copy_from(&robust_cholesky(&(cov * scale))?);
    for (i, q) in q_diag.iter().enumerate() {
        la[(n + i, n + i)] = (q.max(0.0) * scale).sqrt();
    }
    let sig = spread(&xa, &la, angles);
    let (wm, wc) = params.weights(na);
    let prop: Vec<DVector<f64>> = sig
        .iter()
        .map(|s| {
            let x = s.rows(0, n).into_owned();
            let w = s.rows(n, nq).into_owned();
            let mut y = f(&x, &w);
            for &a in angles {
                y[a] = wrap_angle(y[a]);
            }
            y
        })
        .collect();
    let m = weighted_mean(&prop, &wm, angles);
    let mut p = additive.clone();
    for (s, w) in prop.iter().zip(&wc) {
        let d = residual(s, &m, angles);
        p += &d * d.transpose() * *w;
    }
    symmetrize(&mut p);
    Ok((m, p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
}

impl UpdateOutcome {
    /// Normalized innovation squared.
    pub fn nis(&self) -> f64 {
        self.innovation_cov
            .clone()
            .try_inverse()
            .map(|si| (self.innovation.transpose() * si * &self.innovation)[(0, 0)])
            .unwrap_or(f64::NAN)
    }
}

/// Measurement update with additive noise `r` and model `h`.
#[allow(clippy::too_many_arguments)]
pub fn update<H>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    z: &DVector<f64>,
    r: &DMatrix<f64>,
    params: &UnscentedParams,
    state_angles: &[usize],
    meas_angles: &[usize],
    h: H,
) -> Result<UpdateOutcome, UkfError>
where
    H: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = mean.len();
    let sig = sigma_points(mean, cov, params, state_angles)?;
    let (wm, wc) = params.weights(n);
    let zs: Vec<DVector<f64>> = sig.iter().map(&h).collect();
    let zm = weighted_mean(&zs, &wm, meas_angles);
    let nz = z.len();
    let mut s = r.clone();
    let mut pxz = DMatrix::zeros(n, nz);
    for ((zi, xi), w) in zs.iter().zip(&sig).zip(&wc) {
        let dz = residual(zi, &zm, meas_angles);
        let dx = residual(xi, mean, state_angles);
        s += &dz * dz.transpose() * *w;
        pxz += &dx * dz.transpose() * *w;
    }
    symmetrize(&mut s);
    let s_inv = s.clone().try_inverse().ok_or(UkfError::SingularInnovation)?;
    let k = &pxz * &s_inv;
    let innovation = residual(z, &zm, meas_angles);
    let mut m = mean + &k * &innovation;
    for &a in state_angles {
        m[a] = wrap_angle(m[a]);
    }
    let mut p = cov - &k * &s * k.transpose();
    symmetrize(&mut p);
    robust_cholesky(&p)?;
    Ok(UpdateOutcome {
        mean: m,
        cov: p,
        innovation,
        innovation_cov: s,
    })
}
