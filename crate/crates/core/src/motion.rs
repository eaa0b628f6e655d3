//! Constant-velocity Kalman filter over `(cx, cy, w, h)` box state, the
//! squared Mahalanobis motion distance and its chi-square gate.

use nalgebra::{Cholesky, SMatrix, SVector};

use crate::error::{input, numeric, Result};
use crate::geometry::BoundingBox;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
pub type MeasurementVector = SVector<f64, 4>;
pub type MeasurementCovariance = SMatrix<f64, 4, 4>;

/// 0.95 quantile of the chi-square distribution with 4 degrees of freedom.
pub const CHI2_95_4DOF: f64 = 9.4877;

/// Smallest size used when deriving noise scales from a predicted box.
const MIN_SIZE: f64 = 1e-3;

/// Box observation `(cx, cy, w, h)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement(MeasurementVector);

impl Measurement {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(input("measurement must be finite"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(input("measurement size must be positive"));
        }
        Ok(Self(MeasurementVector::new(cx, cy, w, h)))
    }

    pub fn from_box(b: &BoundingBox) -> Self {
        let [cx, cy, w, h] = b.to_cxcywh();
        Self(MeasurementVector::new(cx, cy, w, h))
    }

    pub fn vector(&self) -> &MeasurementVector {
        &self.0
    }
}

/// Gaussian belief over `(cx, cy, w, h, vcx, vcy, vw, vh)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

impl KalmanState {
    /// Position part of the mean as a box. Sizes are floored at a small
    /// positive value so a diverging prediction still yields a valid box.
    pub fn to_box(&self) -> BoundingBox {
        let m = &self.mean;
        BoundingBox::from_center(m[0], m[1], m[2].max(MIN_SIZE), m[3].max(MIN_SIZE))
            .expect("finite state")
    }
}

/// Noise model. Standard deviations are proportional to the box size: the
/// `x` and `w` components scale with width, `y` and `h` with height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionConfig {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
    pub std_weight_measurement: f64,
    /// Multiplier on the position std when a track is initiated.
    pub init_position_factor: f64,
    /// Multiplier on the velocity std when a track is initiated.
    pub init_velocity_factor: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            std_weight_measurement: 1.0 / 20.0,
            init_position_factor: 2.0,
            init_velocity_factor: 10.0,
        }
    }
}

fn size_scales(w: f64, h: f64) -> [f64; 4] {
    let (w, h) = (w.abs().max(MIN_SIZE), h.abs().max(MIN_SIZE));
    [w, h, w, h]
}

/// Constant-velocity filter with unit time step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KalmanFilter {
    config: MotionConfig,
}

impl KalmanFilter {
    pub fn new(config: MotionConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &MotionConfig {
        &self.config
    }

    /// Transition matrix: position += velocity.
    pub fn transition() -> StateCovariance {
        let mut f = StateCovariance::identity();
        for i in 0..4 {
            f[(i, i + 4)] = 1.0;
        }
        f
    }

    /// Process noise for a state whose mean has size `(w, h)`.
    pub fn process_noise(&self, w: f64, h: f64) -> StateCovariance {
        let s = size_scales(w, h);
        let mut q = StateCovariance::zeros();
        for i in 0..4 {
            let p = self.config.std_weight_position * s[i];
            let v = self.config.std_weight_velocity * s[i];
            q[(i, i)] = p * p;
            q[(i + 4, i + 4)] = v * v;
        }
        q
    }

    /// Measurement noise for a predicted box of size `(w, h)`.
    pub fn measurement_noise(&self, w: f64, h: f64) -> MeasurementCovariance {
        let s = size_scales(w, h);
        MeasurementCovariance::from_diagonal(&MeasurementVector::from_fn(|i, _| {
            let m = self.config.std_weight_measurement * s[i];
            m * m
        }))
    }

    /// Zero-velocity state centred on `z`.
    pub fn initiate(&self, z: &Measurement) -> KalmanState {
        let zv = z.vector();
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(zv);
        let s = size_scales(zv[2], zv[3]);
        let mut covariance = StateCovariance::zeros();
        for i in 0..4 {
            let p = self.config.init_position_factor * self.config.std_weight_position * s[i];
            let v = self.config.init_velocity_factor * self.config.std_weight_velocity * s[i];
            covariance[(i, i)] = p * p;
            covariance[(i + 4, i + 4)] = v * v;
        }
        KalmanState { mean, covariance }
    }

    /// One-frame prediction: `x <- F x`, `P <- F P F^T + Q`.
    pub fn predict(&self, s: &KalmanState) -> KalmanState {
        let f = Self::transition();
        let q = self.process_noise(s.mean[2], s.mean[3]);
        let covariance = symmetrize(f * s.covariance * f.transpose() + q);
        KalmanState {
            mean: f * s.mean,
            covariance,
        }
    }

    /// Projects the state into measurement space: `(H x, H P H^T + R)`.
    pub fn project(&self, s: &KalmanState) -> (MeasurementVector, MeasurementCovariance) {
        let mean = s.mean.fixed_rows::<4>(0).into_owned();
        let cov = s.covariance.fixed_view::<4, 4>(0, 0).into_owned()
            + self.measurement_noise(s.mean[2], s.mean[3]);
        (mean, cov)
    }

    /// Projection with a factorized innovation covariance, for evaluating
    /// many measurements against one track.
    pub fn gate_projection(&self, s: &KalmanState) -> Result<ProjectedState> {
        let (mean, cov) = self.project(s);
        let chol = Cholesky::new(cov)
            .ok_or_else(|| numeric("innovation covariance is not positive definite"))?;
        Ok(ProjectedState { mean, chol })
    }

    /// Standard Kalman correction with `H = [I_4 0]`.
    pub fn update(&self, s: &KalmanState, z: &Measurement) -> Result<KalmanState> {
        let (proj_mean, proj_cov) = self.project(s);
        let chol = Cholesky::new(proj_cov)
            .ok_or_else(|| numeric("innovation covariance is not positive definite"))?;
        // H P is the top four rows of P; K^T = S^-1 H P.
        let hp: SMatrix<f64, 4, 8> = s.covariance.fixed_rows::<4>(0).into_owned();
        let gain_t = chol.solve(&hp);
        let gain = gain_t.transpose();
        let innovation = z.vector() - proj_mean;
        let mean = s.mean + gain * innovation;
        let covariance = symmetrize(s.covariance - gain * proj_cov * gain_t);
        Ok(KalmanState { mean, covariance })
    }

    /// Squared Mahalanobis distance between `z` and the projected state.
    pub fn mahalanobis_sq(&self, s: &KalmanState, z: &Measurement) -> Result<f64> {
        Ok(self.gate_projection(s)?.mahalanobis_sq(z))
    }
}

/// Predicted measurement and Cholesky factor of its covariance.
#[derive(Debug, Clone)]
pub struct ProjectedState {
    pub mean: MeasurementVector,
    chol: Cholesky<f64, nalgebra::Const<4>>,
}

impl ProjectedState {
    pub fn covariance(&self) -> MeasurementCovariance {
        let l = self.chol.l();
        l * l.transpose()
    }

    pub fn mahalanobis_sq(&self, z: &Measurement) -> f64 {
        let d = z.vector() - self.mean;
        let y = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&d)
            .expect("Cholesky factor has a positive diagonal");
        y.norm_squared()
    }
}

/// `true` iff `d1 < t1`.
pub fn motion_gate(d1: f64, t1: f64) -> bool {
    d1 < t1
}

fn symmetrize<const N: usize>(m: SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}
