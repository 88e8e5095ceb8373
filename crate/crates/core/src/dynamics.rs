//! Recursive Newton-Euler inverse dynamics and the terms of the equation of
//! motion
//!
//! ```text
//! M(q) q̈ + C(q, q̇) q̇ + G(q) + Jᵀ f_ext + K q + D q̇ = τ
//! ```
//!
//! `τ = 0` for the passive cable. `f_ext` is the reaction of the applied
//! loads, so the load term is `-Σ Jᵀ w` for every applied wrench `w`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{check_dim, Result};
use crate::kinematics::{placement_frame, point_jacobian_into, segment_frames};
use crate::model::{CableModel, ChainState, ExternalLoad};

/// Every term the simulator and the identification need at one state.
#[derive(Debug, Clone)]
pub struct DynamicsTerms {
    pub mass_matrix: DMatrix<f64>,
    /// `C q̇ + G`.
    pub bias: DVector<f64>,
    pub gravity_torque: DVector<f64>,
    /// `M q̈ + bias` at the state's acceleration.
    pub rne_torque: DVector<f64>,
}

/// RNE over raw slices; `gravity` is the field seeding the base
/// acceleration (zero for "gravity off").
pub(crate) fn rne_raw(
    model: &CableModel,
    q: &[f64],
    qd: &[f64],
    qdd: &[f64],
    gravity: &Vector3<f64>,
) -> DVector<f64> {
    let segs = &model.layout().segments;
    let n = segs.len();
    let mut rot = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut wd = Vec::with_capacity(n);
    let mut acc_c = Vec::with_capacity(n);

    let (mut w_p, mut wd_p, mut a_p) = (Vector3::zeros(), Vector3::zeros(), -gravity);
    for (i, seg) in segs.iter().enumerate() {
        let r = seg.fixed_rotation
            * nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(seg.axis), q[i]);
        let rt = r.transpose();
        let w_in = rt * w_p;
        let wi = w_in + seg.axis * qd[i];
        let wdi = rt * wd_p + seg.axis * qdd[i] + w_in.cross(&(seg.axis * qd[i]));
        let off = seg.offset;
        let ai = rt * (a_p + wd_p.cross(&off) + w_p.cross(&w_p.cross(&off)));
        let c = seg.body.com;
        acc_c.push(ai + wdi.cross(&c) + wi.cross(&wi.cross(&c)));
        rot.push(r);
        w.push(wi);
        wd.push(wdi);
        (w_p, wd_p, a_p) = (wi, wdi, ai);
    }

    let arm = model.armature();
    let mut tau = DVector::zeros(n);
    let (mut f_c, mut n_c) = (Vector3::zeros(), Vector3::zeros());
    for i in (0..n).rev() {
        let body = &segs[i].body;
        let force = acc_c[i] * body.mass;
        let inertia: &Matrix3<f64> = &body.inertia;
        let moment = inertia * wd[i] + w[i].cross(&(inertia * w[i]));
        let (f_child, n_child, r_child) = if i + 1 < n {
            (rot[i + 1] * f_c, rot[i + 1] * n_c, segs[i + 1].offset)
        } else {
            (Vector3::zeros(), Vector3::zeros(), Vector3::zeros())
        };
        let f = force + f_child;
        let m = moment + n_child + body.com.cross(&force) + r_child.cross(&f_child);
        tau[i] = m.dot(&segs[i].axis) + arm[i] * qdd[i];
        f_c = f;
        n_c = m;
    }
    tau
}

fn gravity_of(model: &CableModel, gravity_on: bool) -> Vector3<f64> {
    if gravity_on {
        model.gravity()
    } else {
        Vector3::zeros()
    }
}

/// Inverse dynamics `M q̈ + C q̇ (+ G if gravity_on)`.
pub fn rne(model: &CableModel, state: &ChainState, gravity_on: bool) -> Result<DVector<f64>> {
    state.check_dims(model)?;
    Ok(rne_raw(
        model,
        state.q.as_slice(),
        state.qd.as_slice(),
        state.qdd.as_slice(),
        &gravity_of(model, gravity_on),
    ))
}

pub(crate) fn mass_matrix_raw(model: &CableModel, q: &[f64]) -> DMatrix<f64> {
    let n = model.dof();
    let zero = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut m = DMatrix::zeros(n, n);
    let g = Vector3::zeros();
    for j in 0..n {
        e[j] = 1.0;
        m.set_column(j, &rne_raw(model, q, &zero, &e, &g));
        e[j] = 0.0;
    }
    // symmetric up to rounding; make it exact
    let mt = m.transpose();
    (m + mt) * 0.5
}

pub fn mass_matrix(model: &CableModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_dim("joint positions", model.dof(), q.len())?;
    Ok(mass_matrix_raw(model, q.as_slice()))
}

/// `C(q, q̇) q̇ + G(q)`.
pub fn bias_forces(model: &CableModel, q: &DVector<f64>, qd: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("joint positions", model.dof(), q.len())?;
    check_dim("joint velocities", model.dof(), qd.len())?;
    let zero = vec![0.0; model.dof()];
    Ok(rne_raw(model, q.as_slice(), qd.as_slice(), &zero, &model.gravity()))
}

/// `G(q) = ∂V_grav/∂q`.
pub fn gravity_torque(model: &CableModel, q: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("joint positions", model.dof(), q.len())?;
    let zero = vec![0.0; model.dof()];
    Ok(rne_raw(model, q.as_slice(), &zero, &zero, &model.gravity()))
}

pub fn dynamics_terms(model: &CableModel, state: &ChainState) -> Result<DynamicsTerms> {
    state.check_dims(model)?;
    let mass_matrix = mass_matrix_raw(model, state.q.as_slice());
    let bias = bias_forces(model, &state.q, &state.qd)?;
    let gravity_torque = gravity_torque(model, &state.q)?;
    let rne_torque = &mass_matrix * &state.qdd + &bias;
    Ok(DynamicsTerms {
        mass_matrix,
        bias,
        gravity_torque,
        rne_torque,
    })
}

/// The `Jᵀ f_ext` term: minus the generalized force of the applied loads.
pub fn load_term(model: &CableModel, q: &DVector<f64>, loads: &[ExternalLoad]) -> Result<DVector<f64>> {
    check_dim("joint positions", model.dof(), q.len())?;
    for load in loads {
        load.validate(model)?;
    }
    Ok(load_term_raw(model, q.as_slice(), loads))
}

pub(crate) fn load_term_raw(model: &CableModel, q: &[f64], loads: &[ExternalLoad]) -> DVector<f64> {
    let n = model.dof();
    let mut out = DVector::zeros(n);
    if loads.is_empty() {
        return out;
    }
    let layout = model.layout();
    let frames = segment_frames(layout, q);
    let mut j = DMatrix::zeros(6, n);
    for load in loads {
        let placement = &layout.links[load.attachment.link];
        let link = placement_frame(&frames, placement);
        let p = link.transform_point(&Vector3::new(load.attachment.offset, 0.0, 0.0));
        point_jacobian_into(layout, &frames, placement.body, &p, &mut j);
        out -= j.transpose() * load.wrench;
    }
    out
}

/// Left side of the equation of motion: `τ_RNE + Jᵀ f_ext + K q + D q̇`.
/// Zero along any motion of the free passive cable.
pub fn inverse_dynamics_full(
    model: &CableModel,
    state: &ChainState,
    loads: &[ExternalLoad],
) -> Result<DVector<f64>> {
    let tau = rne(model, state, true)?;
    let ext = load_term(model, &state.q, loads)?;
    let k = model.stiffness().component_mul(&state.q);
    let d = model.damping().component_mul(&state.qd);
    Ok(tau + ext + k + d)
}

/// `½ q̇ᵀ M q̇`.
pub fn kinetic_energy(model: &CableModel, q: &DVector<f64>, qd: &DVector<f64>) -> Result<f64> {
    let m = mass_matrix(model, q)?;
    check_dim("joint velocities", model.dof(), qd.len())?;
    Ok(0.5 * qd.dot(&(m * qd)))
}

/// Gravitational potential of the moving bodies (zero at the world origin).
pub fn gravity_potential(model: &CableModel, q: &DVector<f64>) -> Result<f64> {
    check_dim("joint positions", model.dof(), q.len())?;
    let layout = model.layout();
    let frames = segment_frames(layout, q.as_slice());
    let g = model.gravity();
    Ok(layout
        .segments
        .iter()
        .zip(&frames)
        .map(|(seg, f)| -seg.body.mass * g.dot(&f.transform_point(&seg.body.com)))
        .sum())
}

/// Potential of constant applied forces, `-Σ f·p`. Applied torques are
/// ignored (they are not conservative for a spatial chain).
pub fn load_potential(model: &CableModel, q: &DVector<f64>, loads: &[ExternalLoad]) -> Result<f64> {
    let mut v = 0.0;
    for load in loads {
        let p = crate::kinematics::point_position(model, q, load.attachment)?;
        v -= load.force_part().dot(&p.coords);
    }
    Ok(v)
}

/// Lyapunov energy `½q̇ᵀMq̇ + ½qᵀKq + V_grav + V_load`.
pub fn total_energy(model: &CableModel, state: &ChainState, loads: &[ExternalLoad]) -> Result<f64> {
    let spring = 0.5 * state.q.dot(&model.stiffness().component_mul(&state.q));
    Ok(kinetic_energy(model, &state.q, &state.qd)?
        + spring
        + gravity_potential(model, &state.q)?
        + load_potential(model, &state.q, loads)?)
}
