//! Forward kinematics and geometric Jacobians of the serial chain.

use nalgebra::{
    DMatrix, DVector, Point3, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3,
};

use crate::error::{Error, Result};
use crate::model::{Axis, CableModel, ChainLayout, ChainPoint, Placement};

/// Rigid transform of a frame expressed in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePose {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for FramePose {
    fn default() -> Self {
        Self::identity()
    }
}

impl FramePose {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Pose from a translation and a quaternion given as `(x, y, z, w)`.
    /// The quaternion is normalized.
    pub fn from_quaternion(translation: Vector3<f64>, xyzw: [f64; 4]) -> Result<Self> {
        let q = Quaternion::new(xyzw[3], xyzw[0], xyzw[1], xyzw[2]);
        if !(q.norm() > 1e-12) || !q.coords.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "quaternion {xyzw:?} is not normalizable"
            )));
        }
        Ok(Self::new(
            UnitQuaternion::from_quaternion(q).to_rotation_matrix(),
            translation,
        ))
    }

    /// Quaternion `(x, y, z, w)` with non-negative `w`.
    pub fn quaternion_xyzw(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&self.rotation);
        let c = if q.w < 0.0 { -q.coords } else { q.coords };
        [c.x, c.y, c.z, c.w]
    }

    pub fn compose(&self, other: &FramePose) -> FramePose {
        FramePose {
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn inverse(&self) -> FramePose {
        let r = self.rotation.inverse();
        FramePose {
            rotation: r,
            translation: -(r * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.translation + self.rotation * p
    }

    /// Max deviation of `RᵀR` from identity and of `det R` from one.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.rotation.matrix();
        let gram = (m.transpose() * m - nalgebra::Matrix3::identity()).abs().max();
        gram.max((m.determinant() - 1.0).abs())
    }
}

/// Rotation about an elementary joint axis.
pub fn axis_rotation(axis: Axis, angle: f64) -> Rotation3<f64> {
    let unit = match axis {
        Axis::Pitch => Vector3::y_axis(),
        Axis::Roll => Vector3::x_axis(),
    };
    Rotation3::from_axis_angle(&unit, angle)
}

/// Logarithm of a rotation as an axis-angle vector (rad).
///
/// Goes through the quaternion with `atan2` so small angles keep full
/// relative precision (the trace/`acos` route does not).
pub fn rotation_log(r: &Rotation3<f64>) -> Vector3<f64> {
    let q = UnitQuaternion::from_rotation_matrix(r);
    let (w, v) = if q.w < 0.0 {
        (-q.w, -q.imag())
    } else {
        (q.w, q.imag())
    };
    let s = v.norm();
    if s < 1e-300 {
        return Vector3::zeros();
    }
    let angle = 2.0 * s.atan2(w);
    v * (angle / s)
}

pub fn rotation_exp(v: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::new(*v)
}

/// World poses of every frame along the chain for one configuration.
#[derive(Debug, Clone)]
pub struct ChainFrames {
    /// One frame per DOF, at the joint origin, oriented with the body it drives.
    pub joints: Vec<FramePose>,
    /// One frame per link, origin at its proximal end, x along the link.
    pub links: Vec<FramePose>,
    /// Center of mass of each link, with the link orientation.
    pub coms: Vec<FramePose>,
    /// Distal end of the last link.
    pub tip: FramePose,
}

pub(crate) fn segment_frames(layout: &ChainLayout, q: &[f64]) -> Vec<FramePose> {
    let mut out = Vec::with_capacity(layout.segments.len());
    let mut parent = FramePose::identity();
    for (seg, &angle) in layout.segments.iter().zip(q) {
        let joint = Rotation3::from_axis_angle(&Unit::new_unchecked(seg.axis), angle);
        let frame = FramePose {
            rotation: parent.rotation * seg.fixed_rotation * joint,
            translation: parent.transform_point(&seg.offset),
        };
        out.push(frame);
        parent = frame;
    }
    out
}

pub(crate) fn placement_frame(segments: &[FramePose], placement: &Placement) -> FramePose {
    let host = placement
        .body
        .map(|b| segments[b])
        .unwrap_or_else(FramePose::identity);
    host.compose(&FramePose::new(placement.rotation, placement.origin))
}

fn check_q(model: &CableModel, q: &DVector<f64>) -> Result<()> {
    crate::error::check_dim("joint positions", model.dof(), q.len())
}

pub fn forward_kinematics(model: &CableModel, q: &DVector<f64>) -> Result<ChainFrames> {
    check_q(model, q)?;
    let layout = model.layout();
    let joints = segment_frames(layout, q.as_slice());
    let links: Vec<FramePose> = layout
        .links
        .iter()
        .map(|p| placement_frame(&joints, p))
        .collect();
    let coms = links
        .iter()
        .zip(model.links())
        .map(|(frame, spec)| {
            FramePose::new(
                frame.rotation,
                frame.transform_point(&Vector3::new(spec.com_offset, 0.0, 0.0)),
            )
        })
        .collect();
    let tip = placement_frame(&joints, &layout.tip);
    Ok(ChainFrames {
        joints,
        links,
        coms,
        tip,
    })
}

/// World position of a point on the chain.
pub fn point_position(model: &CableModel, q: &DVector<f64>, point: ChainPoint) -> Result<Point3<f64>> {
    check_q(model, q)?;
    point.validate(model)?;
    let layout = model.layout();
    let frames = segment_frames(layout, q.as_slice());
    let link = placement_frame(&frames, &layout.links[point.link]);
    Ok(Point3::from(link.transform_point(&Vector3::new(point.offset, 0.0, 0.0))))
}

/// Fills a 6×n Jacobian (linear rows first) for a world point carried by
/// `body`; `None` means the point is on the base.
pub(crate) fn point_jacobian_into(
    layout: &ChainLayout,
    frames: &[FramePose],
    body: Option<usize>,
    point: &Vector3<f64>,
    out: &mut DMatrix<f64>,
) {
    out.fill(0.0);
    let Some(last) = body else { return };
    for (i, (seg, frame)) in layout.segments.iter().zip(frames).enumerate().take(last + 1) {
        let axis = frame.rotation * seg.axis;
        let lin = axis.cross(&(point - frame.translation));
        out.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        out.fixed_view_mut::<3, 1>(3, i).copy_from(&axis);
    }
}

/// Geometric Jacobian mapping joint velocities to the twist (linear
/// velocity; angular velocity) of a point on the chain, world frame.
pub fn jacobian(model: &CableModel, q: &DVector<f64>, point: ChainPoint) -> Result<DMatrix<f64>> {
    check_q(model, q)?;
    point.validate(model)?;
    let layout = model.layout();
    let frames = segment_frames(layout, q.as_slice());
    let placement = &layout.links[point.link];
    let link = placement_frame(&frames, placement);
    let p = link.transform_point(&Vector3::new(point.offset, 0.0, 0.0));
    let mut j = DMatrix::zeros(6, model.dof());
    point_jacobian_into(layout, &frames, placement.body, &p, &mut j);
    Ok(j)
}

/// Jacobian of the tip frame origin.
pub fn tip_jacobian(model: &CableModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    jacobian(model, q, ChainPoint::tip(model))
}

/// Total pitch rotation from the base frame to the tip frame, positive when
/// the tip sags downward. Fails if any roll coordinate (enabled or locked)
/// is nonzero, since the angle is then not a planar rotation.
pub fn tip_sagging_angle(model: &CableModel, q: &DVector<f64>) -> Result<f64> {
    check_q(model, q)?;
    for (i, dof) in model.dofs().iter().enumerate() {
        if dof.axis == Axis::Roll && q[i] != 0.0 {
            return Err(Error::NonPlanar { dof: i, value: q[i] });
        }
    }
    for joint in model.joints() {
        if let Some(roll) = joint.roll {
            if roll.is_locked() && roll.lower != 0.0 {
                return Err(Error::NonPlanar {
                    dof: usize::MAX,
                    value: roll.lower,
                });
            }
        }
    }
    let frames = forward_kinematics(model, q)?;
    let log = rotation_log(&frames.tip.rotation);
    Ok(log.y)
}
