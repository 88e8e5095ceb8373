//! Plants the servo loop can drive, selected by name.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::inverse_dynamics_full;
use crate::error::{check_dim, Error, Result};
use crate::kinematics::{forward_kinematics, tip_jacobian, FramePose};
use crate::model::{CableModel, ChainState};
use crate::registry::{Named, Registry};
use crate::sim::clamp_to_limits;

/// A chain whose joint velocities the controller commands.
pub trait Plant {
    fn dof(&self) -> usize;
    fn q(&self) -> &DVector<f64>;
    fn tip_frame(&self) -> Result<FramePose>;
    /// 6×n tip Jacobian, linear rows first.
    fn jacobian(&self) -> Result<DMatrix<f64>>;
    fn step(&mut self, command: &DVector<f64>, dt: f64) -> Result<()>;
}

pub trait PlantFactory: Named + Send + Sync {
    fn build(&self, model: &CableModel, q0: &DVector<f64>) -> Result<Box<dyn Plant>>;
}

fn check_command(model: &CableModel, command: &DVector<f64>, dt: f64) -> Result<()> {
    check_dim("joint velocity command", model.dof(), command.len())?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidTimeStep(dt));
    }
    if command.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("non-finite joint velocity command".into()));
    }
    Ok(())
}

/// Executes the commanded joint velocity exactly: `q += q̇ dt`, clamped to
/// the joint limits.
#[derive(Debug, Clone)]
pub struct KinematicPlant {
    model: CableModel,
    q: DVector<f64>,
}

impl KinematicPlant {
    pub fn new(model: CableModel, q0: DVector<f64>) -> Result<Self> {
        model.check_coordinates(&q0)?;
        Ok(Self { model, q: q0 })
    }

    pub fn model(&self) -> &CableModel {
        &self.model
    }
}

impl Plant for KinematicPlant {
    fn dof(&self) -> usize {
        self.model.dof()
    }
    fn q(&self) -> &DVector<f64> {
        &self.q
    }
    fn tip_frame(&self) -> Result<FramePose> {
        Ok(forward_kinematics(&self.model, &self.q)?.tip)
    }
    fn jacobian(&self) -> Result<DMatrix<f64>> {
        tip_jacobian(&self.model, &self.q)
    }
    fn step(&mut self, command: &DVector<f64>, dt: f64) -> Result<()> {
        check_command(&self.model, command, dt)?;
        let mut q = &self.q + command * dt;
        let mut qd = command.clone();
        clamp_to_limits(&self.model, &mut q, &mut qd);
        self.q = q;
        Ok(())
    }
}

/// Joint velocities follow the command through a first-order lag,
/// `q̈ = (q̇_cmd − q̇)/τ`, realised by computed torque on the full rigid-body
/// model. Over a step the command is held, so the lag is integrated in
/// closed form; the joint torque needed at the end of each step is kept.
#[derive(Debug, Clone)]
pub struct DynamicPlant {
    model: CableModel,
    state: ChainState,
    lag: f64,
    torque: DVector<f64>,
}

impl DynamicPlant {
    pub const DEFAULT_LAG: f64 = 0.02;

    pub fn new(model: CableModel, q0: DVector<f64>, lag: f64) -> Result<Self> {
        model.check_coordinates(&q0)?;
        if !(lag > 0.0 && lag.is_finite()) {
            return Err(Error::InvalidArgument(format!("velocity lag must be positive, got {lag}")));
        }
        let state = ChainState::at_rest(q0);
        let torque = inverse_dynamics_full(&model, &state, &[])?;
        Ok(Self { model, state, lag, torque })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    /// Actuation torque commanded at the last step, N·m.
    pub fn torque(&self) -> &DVector<f64> {
        &self.torque
    }
}

impl Plant for DynamicPlant {
    fn dof(&self) -> usize {
        self.model.dof()
    }
    fn q(&self) -> &DVector<f64> {
        &self.state.q
    }
    fn tip_frame(&self) -> Result<FramePose> {
        Ok(forward_kinematics(&self.model, &self.state.q)?.tip)
    }
    fn jacobian(&self) -> Result<DMatrix<f64>> {
        tip_jacobian(&self.model, &self.state.q)
    }
    fn step(&mut self, command: &DVector<f64>, dt: f64) -> Result<()> {
        check_command(&self.model, command, dt)?;
        let decay = (-dt / self.lag).exp();
        let gap = &self.state.qd - command;
        let mut q = &self.state.q + command * dt + &gap * (self.lag * (1.0 - decay));
        let mut qd = command + &gap * decay;
        clamp_to_limits(&self.model, &mut q, &mut qd);
        let qdd = (command - &qd) / self.lag;
        self.state = ChainState::new(q, qd, qdd);
        self.torque = inverse_dynamics_full(&self.model, &self.state, &[])?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KinematicPlantFactory;

impl Named for KinematicPlantFactory {
    fn name(&self) -> &'static str {
        "kinematic"
    }
    fn description(&self) -> &'static str {
        "joint velocities executed exactly (default)"
    }
}

impl PlantFactory for KinematicPlantFactory {
    fn build(&self, model: &CableModel, q0: &DVector<f64>) -> Result<Box<dyn Plant>> {
        Ok(Box::new(KinematicPlant::new(model.clone(), q0.clone())?))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DynamicPlantFactory;

impl Named for DynamicPlantFactory {
    fn name(&self) -> &'static str {
        "dynamic"
    }
    fn description(&self) -> &'static str {
        "computed-torque chain with a 20 ms first-order velocity lag"
    }
}

impl PlantFactory for DynamicPlantFactory {
    fn build(&self, model: &CableModel, q0: &DVector<f64>) -> Result<Box<dyn Plant>> {
        Ok(Box::new(DynamicPlant::new(model.clone(), q0.clone(), DynamicPlant::DEFAULT_LAG)?))
    }
}

pub fn plants() -> Registry<dyn PlantFactory> {
    let mut r: Registry<dyn PlantFactory> = Registry::new("plant");
    r.register(Arc::new(KinematicPlantFactory));
    r.register(Arc::new(DynamicPlantFactory));
    r
}
