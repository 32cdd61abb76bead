//! Constant-velocity Kalman filter over `(x, y, aspect, height)` box
//! measurements, with noise scaled by box height.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::BoxXYXY;

pub type Mean = SVector<f64, 8>;
pub type Covariance = SMatrix<f64, 8, 8>;
pub type Measurement = SVector<f64, 4>;

/// 95% quantile of the chi-square distribution with 4 degrees of freedom.
pub const CHI2_95_4DOF: f64 = 9.4877;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: Mean,
    pub covariance: Covariance,
}

impl KalmanState {
    pub fn bbox(&self) -> BoxXYXY {
        measurement_to_box(&self.mean.fixed_rows::<4>(0).into_owned())
    }
}

/// `(centre x, centre y, width / height, height)`.
pub fn box_to_measurement(b: &BoxXYXY) -> Measurement {
    let (cx, cy) = b.center();
    let h = b.height().max(f64::EPSILON);
    Measurement::new(cx, cy, b.width() / h, h)
}

pub fn measurement_to_box(m: &Measurement) -> BoxXYXY {
    let w = m[2] * m[3];
    BoxXYXY {
        x_min: m[0] - w / 2.0,
        y_min: m[1] - m[3] / 2.0,
        x_max: m[0] + w / 2.0,
        y_max: m[1] + m[3] / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanFilter {
    std_weight_position: f64,
    std_weight_velocity: f64,
}

impl Default for KalmanFilter {
    fn default() -> Self {
        KalmanFilter {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
        }
    }
}

fn diag_sq<const N: usize>(std: [f64; N]) -> SMatrix<f64, N, N> {
    SMatrix::<f64, N, N>::from_diagonal(&SVector::<f64, N>::from(std.map(|s| s * s)))
}

fn motion_matrix() -> Covariance {
    let mut f = Covariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

impl KalmanFilter {
    pub fn initiate(&self, z: &Measurement) -> KalmanState {
        let mut mean = Mean::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(z);
        let (p, v, h) = (self.std_weight_position, self.std_weight_velocity, z[3]);
        let std = [
            2.0 * p * h,
            2.0 * p * h,
            1e-2,
            2.0 * p * h,
            10.0 * v * h,
            10.0 * v * h,
            1e-5,
            10.0 * v * h,
        ];
        KalmanState {
            mean,
            covariance: diag_sq(std),
        }
    }

    pub fn predict(&self, s: &KalmanState) -> KalmanState {
        let (p, v, h) = (self.std_weight_position, self.std_weight_velocity, s.mean[3]);
        let q = diag_sq([p * h, p * h, 1e-2, p * h, v * h, v * h, 1e-5, v * h]);
        let f = motion_matrix();
        KalmanState {
            mean: f * s.mean,
            covariance: f * s.covariance * f.transpose() + q,
        }
    }

    /// Measurement-space mean and covariance (including measurement noise).
    pub fn project(&self, s: &KalmanState) -> (Measurement, SMatrix<f64, 4, 4>) {
        let (p, h) = (self.std_weight_position, s.mean[3]);
        let r = diag_sq([p * h, p * h, 1e-1, p * h]);
        let mean = s.mean.fixed_rows::<4>(0).into_owned();
        let cov = s.covariance.fixed_view::<4, 4>(0, 0).into_owned() + r;
        (mean, cov)
    }

    pub fn update(&self, s: &KalmanState, z: &Measurement) -> Result<KalmanState> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite measurement"));
        }
        let (proj_mean, proj_cov) = self.project(s);
        let chol = proj_cov
            .cholesky()
            .ok_or_else(|| Error::Singular("innovation covariance is not positive definite".into()))?;
        // P H^T, i.e. the first four columns of P.
        let pht: SMatrix<f64, 8, 4> = s.covariance.fixed_columns::<4>(0).into_owned();
        // K = P H^T S^-1, solved as S K^T = H P.
        let gain: SMatrix<f64, 8, 4> = chol.solve(&pht.transpose()).transpose();
        let innovation = z - proj_mean;
        let mean = s.mean + gain * innovation;
        let mut covariance = s.covariance - gain * proj_cov * gain.transpose();
        covariance = (covariance + covariance.transpose()) * 0.5;
        Ok(KalmanState { mean, covariance })
    }

    /// Squared Mahalanobis distance of `z` from the projected state.
    pub fn gating_distance(&self, s: &KalmanState, z: &Measurement) -> Result<f64> {
        let (mean, cov) = self.project(s);
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Singular("projected covariance is not positive definite".into()))?;
        let d = z - mean;
        Ok(d.dot(&chol.solve(&d)))
    }
}
