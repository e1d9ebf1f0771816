//! Cartesian compliance law and a 1-DOF probe/tissue contact simulation.
//!
//! Units inside this module are meters, newtons and radians.

use std::io::Write;

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("stiffness and damping coefficients must be non-negative")]
    NegativeStiffness,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unstable simulation parameters: {0}")]
    UnstableParameters(String),
}

/// Usual probe-axis stiffness band for soft tissue, N/m.
pub const PROBE_STIFFNESS_BAND: (f64, f64) = (125.0, 500.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ComplianceParams<T: Real> {
    /// Lateral translational stiffness `k_t`, N/m.
    pub k_t: T,
    /// Probe-axis stiffness `k_g`, N/m.
    pub k_g: T,
    /// Rotational stiffness `k_r`, Nm/rad.
    pub k_r: T,
    /// Desired contact force `F_c` along the probe axis, N.
    pub desired_force: T,
    /// Cartesian viscous damping per axis, N·s/m and Nm·s/rad.
    pub damping: [T; 6],
}

impl<T: Real> Default for ComplianceParams<T> {
    fn default() -> Self {
        Self {
            k_t: T::lit(2000.0),
            k_g: T::lit(300.0),
            k_r: T::lit(50.0),
            desired_force: T::lit(8.0),
            damping: [T::lit(150.0); 6],
        }
    }
}

impl<T: Real> ComplianceParams<T> {
    /// Human-readable warnings for values outside the usual ranges.
    pub fn warnings(&self) -> Vec<String> {
        let (lo, hi) = PROBE_STIFFNESS_BAND;
        let k_g = self.k_g.as_f64();
        if (lo..=hi).contains(&k_g) {
            Vec::new()
        } else {
            vec![format!(
                "probe-axis stiffness {k_g} N/m is outside [{lo}, {hi}] N/m"
            )]
        }
    }

    /// `F_d = [0, 0, F_c, 0, 0, 0]`.
    pub fn desired_wrench(&self) -> Vector6<T> {
        let mut f = Vector6::zeros();
        f[2] = self.desired_force;
        f
    }
}

/// `K_m = diag(k_t, k_t, k_g, k_r, k_r, k_r)`.
pub fn build_stiffness<T: Real>(params: &ComplianceParams<T>) -> Result<Matrix6<T>, ControlError> {
    let (k_t, k_g, k_r) = (params.k_t, params.k_g, params.k_r);
    if [k_t, k_g, k_r]
        .iter()
        .chain(&params.damping)
        .any(|k| !(*k >= T::zero()))
    {
        return Err(ControlError::NegativeStiffness);
    }
    for w in params.warnings() {
        log::warn!("{w}");
    }
    Ok(Matrix6::from_diagonal(&Vector6::new(
        k_t, k_t, k_g, k_r, k_r, k_r,
    )))
}

/// Robot state in Cartesian and joint space.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState<T: Real> {
    /// Cartesian pose `x_c` (translation, then rotation vector).
    pub pose: Vector6<T>,
    pub velocity: Vector6<T>,
    /// 6×n geometric Jacobian.
    pub jacobian: DMatrix<T>,
    pub q: DVector<T>,
    pub qd: DVector<T>,
    pub qdd: DVector<T>,
}

impl<T: Real> RobotState<T> {
    pub fn joints(&self) -> usize {
        self.jacobian.ncols()
    }
}

/// `τ = Jᵀ[K_m(x_d − x_c) + F_d] − Jᵀ·diag(d)·ẋ_c + f_dyn`.
pub fn compliance_torque<T: Real>(
    state: &RobotState<T>,
    x_d: &Vector6<T>,
    params: &ComplianceParams<T>,
    f_dyn: &DVector<T>,
) -> Result<DVector<T>, ControlError> {
    let n = state.joints();
    if state.jacobian.nrows() != 6 {
        return Err(ControlError::DimensionMismatch(format!(
            "jacobian has {} rows, expected 6",
            state.jacobian.nrows()
        )));
    }
    for (name, len) in [
        ("q", state.q.len()),
        ("qd", state.qd.len()),
        ("qdd", state.qdd.len()),
        ("f_dyn", f_dyn.len()),
    ] {
        if len != n {
            return Err(ControlError::DimensionMismatch(format!(
                "{name} has {len} entries, expected {n}"
            )));
        }
    }
    if !state.jacobian.iter().all(|v| v.is_finite()) {
        return Err(ControlError::DimensionMismatch(
            "jacobian is not finite".into(),
        ));
    }
    let k = build_stiffness(params)?;
    let damping = Vector6::from_column_slice(&params.damping);
    let wrench =
        k * (x_d - state.pose) + params.desired_wrench() - damping.component_mul(&state.velocity);
    let wrench = DVector::from_column_slice(wrench.as_slice());
    Ok(state.jacobian.transpose() * wrench + f_dyn)
}

/// Plant and outer-loop constants of the contact simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ContactModel {
    /// Moving mass along the probe axis, kg.
    pub mass: f64,
    /// Rate at which the setpoint `x_d` drifts to cancel force error, 1/s.
    pub adaptation_rate: f64,
}

impl Default for ContactModel {
    fn default() -> Self {
        Self {
            mass: 1.0,
            adaptation_rate: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceSample {
    /// Seconds.
    pub t: f64,
    /// Meters into the surface; negative when out of contact.
    pub penetration: f64,
    /// Newtons.
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceTrace {
    pub samples: Vec<ForceSample>,
}

impl ForceTrace {
    /// Mean force over the trailing `fraction` of the trace.
    pub fn steady_state(&self, fraction: f64) -> f64 {
        let n = self.samples.len();
        let tail = ((n as f64 * fraction).ceil() as usize).clamp(1, n.max(1));
        if n == 0 {
            return 0.0;
        }
        self.samples[n - tail..]
            .iter()
            .map(|s| s.force)
            .sum::<f64>()
            / tail as f64
    }

    pub fn max_abs_force(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.force.abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "t,penetration,force")?;
        for s in &self.samples {
            writeln!(out, "{},{},{}", s.t, s.penetration, s.force)?;
        }
        Ok(())
    }
}

/// Probe pressed onto a linear spring surface of stiffness `k_s` along the
/// probe axis, starting at first touch with the setpoint on the surface.
pub fn simulate_contact(
    params: &ComplianceParams<f64>,
    surface_stiffness: f64,
    steps: usize,
    dt: f64,
) -> Result<ForceTrace, ControlError> {
    simulate_contact_with(
        params,
        &ContactModel::default(),
        surface_stiffness,
        steps,
        dt,
    )
}

/// Semi-implicit Euler integration of the probe axis driven by the
/// compliance law, with the setpoint adapted as
/// `ẋ_d = γ·(F_c − f)/k_g` so that the steady state balances force.
pub fn simulate_contact_with(
    params: &ComplianceParams<f64>,
    model: &ContactModel,
    surface_stiffness: f64,
    steps: usize,
    dt: f64,
) -> Result<ForceTrace, ControlError> {
    if !(surface_stiffness > 0.0) {
        return Err(ControlError::UnstableParameters(
            "surface stiffness must be positive".into(),
        ));
    }
    if !(model.mass > 0.0) || !(dt > 0.0) {
        return Err(ControlError::UnstableParameters(
            "mass and time step must be positive".into(),
        ));
    }
    build_stiffness(params)?;
    let limit = 2.0 * (model.mass / (params.k_g + surface_stiffness)).sqrt();
    if dt >= limit {
        return Err(ControlError::UnstableParameters(format!(
            "dt {dt} s exceeds the stability limit {limit:.6} s"
        )));
    }

    // Only the probe axis moves: J maps the single joint onto tcpZ.
    let mut jacobian = DMatrix::<f64>::zeros(6, 1);
    jacobian[(2, 0)] = 1.0;
    let zero = DVector::zeros(1);
    let mut state = RobotState::<f64> {
        pose: Vector6::zeros(),
        velocity: Vector6::zeros(),
        jacobian,
        q: zero.clone(),
        qd: zero.clone(),
        qdd: zero.clone(),
    };
    let mut x_d = Vector6::<f64>::zeros();
    let mut samples = Vec::with_capacity(steps);
    for step in 0..steps {
        let z = state.pose[2];
        let force = surface_stiffness * z.max(0.0);
        let tau = compliance_torque(&state, &x_d, params, &zero)?[0];
        let accel = (tau - force) / model.mass;
        state.velocity[2] += accel * dt;
        state.pose[2] += state.velocity[2] * dt;
        state.q[0] = state.pose[2];
        state.qd[0] = state.velocity[2];
        state.qdd[0] = accel;
        if params.k_g > 0.0 {
            x_d[2] += dt * model.adaptation_rate * (params.desired_force - force) / params.k_g;
        } else {
            x_d[2] = state.pose[2];
        }
        let z = state.pose[2];
        samples.push(ForceSample {
            t: (step + 1) as f64 * dt,
            penetration: z,
            force: surface_stiffness * z.max(0.0),
        });
    }
    Ok(ForceTrace { samples })
}
