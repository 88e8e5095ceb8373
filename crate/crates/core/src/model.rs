//! Parametric cable model: a serial chain of rigid links joined by stiff,
//! damped revolute joints.
//!
//! Links are ordered from the fixed (grasped) end toward the tip; link 0 is
//! the base and is welded to the world, so its mass never enters the
//! dynamics. Joint `j` sits at the distal end of link `j` and connects it to
//! link `j + 1`. Each joint may enable a pitch axis (horizontal, perpendicular
//! to the straight chain) and a roll axis (along the link). An enabled axis
//! whose limits collapse to a single value is *locked*: it is a rigid rotation
//! at that angle, not a degree of freedom. A joint with no axes is a weld.
//!
//! World frame: the first joint is at the origin, the straight chain points
//! along +x and gravity along -z. Positive pitch rotates the distal chain
//! downward.

use nalgebra::{DVector, Matrix3, Rotation3, SymmetricEigen, Vector3};

use crate::error::{check_dim, Error, Result};

pub const STANDARD_GRAVITY: f64 = 9.8;

/// Radius used for the axial inertia of the default cable links.
pub const CABLE_RADIUS: f64 = 0.005;
/// Radius used for the axial inertia of the default plug link.
pub const PLUG_RADIUS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Pitch,
    Roll,
}

impl Axis {
    /// Rotation axis in the joint frame.
    pub fn unit(self) -> Vector3<f64> {
        match self {
            Axis::Pitch => Vector3::y(),
            Axis::Roll => Vector3::x(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::Pitch => "pitch",
            Axis::Roll => "roll",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    /// Meters.
    pub length: f64,
    /// Kilograms.
    pub mass: f64,
    /// Distance from the proximal joint to the center of mass, along the link axis.
    pub com_offset: f64,
    /// Rotational inertia about the COM in the link frame, kg·m².
    pub inertia: Matrix3<f64>,
}

impl LinkSpec {
    /// Uniform rod of the given radius with its COM in the middle.
    pub fn rod(length: f64, mass: f64, radius: f64) -> Self {
        let transverse = mass * length * length / 12.0;
        let axial = 0.5 * mass * radius * radius;
        Self {
            length,
            mass,
            com_offset: 0.5 * length,
            inertia: Matrix3::from_diagonal(&Vector3::new(axial, transverse, transverse)),
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let finite = self.length.is_finite()
            && self.mass.is_finite()
            && self.com_offset.is_finite()
            && self.inertia.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid(path, "all values must be finite"));
        }
        if self.length <= 0.0 {
            return Err(Error::invalid(
                format!("{path}.length_m"),
                "length must be positive",
            ));
        }
        if self.mass <= 0.0 {
            return Err(Error::invalid(
                format!("{path}.mass_kg"),
                "mass must be positive",
            ));
        }
        if self.com_offset < 0.0 || self.com_offset > self.length {
            return Err(Error::invalid(
                format!("{path}.com_offset_m"),
                "center of mass must lie within the link",
            ));
        }
        let scale = self.inertia.abs().max().max(f64::MIN_POSITIVE);
        if (self.inertia - self.inertia.transpose()).abs().max() > 1e-12 * scale {
            return Err(Error::invalid(
                format!("{path}.inertia_kgm2"),
                "inertia must be symmetric",
            ));
        }
        let eig = SymmetricEigen::new(self.inertia);
        if eig.eigenvalues.min() < -1e-12 * scale {
            return Err(Error::invalid(
                format!("{path}.inertia_kgm2"),
                "inertia must be positive semi-definite",
            ));
        }
        Ok(())
    }
}

/// Parameters of one enabled joint axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    /// N·m/rad.
    pub stiffness: f64,
    /// N·m·s/rad.
    pub damping: f64,
    /// Radians.
    pub lower: f64,
    pub upper: f64,
    /// Rotor inertia reflected onto the axis, kg·m². Zero for passive cable joints.
    pub armature: f64,
}

impl AxisSpec {
    pub fn free(lower: f64, upper: f64) -> Self {
        Self {
            stiffness: 0.0,
            damping: 0.0,
            lower,
            upper,
            armature: 0.0,
        }
    }

    pub fn locked(angle: f64) -> Self {
        Self::free(angle, angle)
    }

    pub fn with_stiffness(mut self, stiffness: f64) -> Self {
        self.stiffness = stiffness;
        self
    }

    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    pub fn is_locked(&self) -> bool {
        self.lower == self.upper
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if ![self.stiffness, self.damping, self.lower, self.upper, self.armature]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::invalid(path, "all values must be finite"));
        }
        if self.stiffness < 0.0 {
            return Err(Error::invalid(
                format!("{path}.stiffness_nm_per_rad"),
                "stiffness must be non-negative",
            ));
        }
        if self.damping < 0.0 {
            return Err(Error::invalid(
                format!("{path}.damping_nms_per_rad"),
                "damping must be non-negative",
            ));
        }
        if self.lower > self.upper {
            return Err(Error::invalid(
                format!("{path}.limits_rad"),
                "lower limit exceeds upper limit",
            ));
        }
        if self.armature < 0.0 {
            return Err(Error::invalid(
                format!("{path}.armature_kgm2"),
                "armature must be non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JointSpec {
    pub pitch: Option<AxisSpec>,
    pub roll: Option<AxisSpec>,
}

impl JointSpec {
    pub fn fixed() -> Self {
        Self::default()
    }

    pub fn pitch(spec: AxisSpec) -> Self {
        Self {
            pitch: Some(spec),
            roll: None,
        }
    }

    pub fn pitch_roll(pitch: AxisSpec, roll: AxisSpec) -> Self {
        Self {
            pitch: Some(pitch),
            roll: Some(roll),
        }
    }

    /// Enabled axes in application order (pitch, then roll).
    pub fn axes(&self) -> impl Iterator<Item = (Axis, &AxisSpec)> {
        [(Axis::Pitch, &self.pitch), (Axis::Roll, &self.roll)]
            .into_iter()
            .filter_map(|(axis, spec)| spec.as_ref().map(|s| (axis, s)))
    }

    pub fn axis_mut(&mut self, axis: Axis) -> &mut Option<AxisSpec> {
        match axis {
            Axis::Pitch => &mut self.pitch,
            Axis::Roll => &mut self.roll,
        }
    }

    pub fn dof_count(&self) -> usize {
        self.axes().filter(|(_, s)| !s.is_locked()).count()
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        for (axis, spec) in self.axes() {
            spec.validate(&format!("{path}.{}", axis.label()))?;
        }
        Ok(())
    }
}

/// One generalized coordinate of the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofInfo {
    /// Index into [`CableModel::joints`].
    pub joint: usize,
    pub axis: Axis,
    pub spec: AxisSpec,
}

/// Mass properties of a rigid body, expressed in its own frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RigidBody {
    pub mass: f64,
    pub com: Vector3<f64>,
    /// About the COM.
    pub inertia: Matrix3<f64>,
}

impl RigidBody {
    pub fn empty() -> Self {
        Self {
            mass: 0.0,
            com: Vector3::zeros(),
            inertia: Matrix3::zeros(),
        }
    }

    /// The body of a link placed at `(rotation, origin)` in the host frame.
    fn from_link(link: &LinkSpec, rotation: &Rotation3<f64>, origin: &Vector3<f64>) -> Self {
        let r = rotation.matrix();
        Self {
            mass: link.mass,
            com: origin + rotation * Vector3::new(link.com_offset, 0.0, 0.0),
            inertia: r * link.inertia * r.transpose(),
        }
    }

    fn merged(&self, other: &RigidBody) -> Self {
        let mass = self.mass + other.mass;
        if mass == 0.0 {
            return Self::empty();
        }
        let com = (self.com * self.mass + other.com * other.mass) / mass;
        let shift = |b: &RigidBody| {
            let d = b.com - com;
            b.inertia + (Matrix3::identity() * d.norm_squared() - d * d.transpose()) * b.mass
        };
        Self {
            mass,
            com,
            inertia: shift(self) + shift(other),
        }
    }
}

/// One degree of freedom after flattening welds and locked axes.
#[derive(Debug, Clone)]
pub(crate) struct Segment {
    /// Fixed transform from the parent body frame to this joint frame.
    pub fixed_rotation: Rotation3<f64>,
    pub offset: Vector3<f64>,
    /// Rotation axis, unit, in the joint frame (invariant under its own rotation).
    pub axis: Vector3<f64>,
    pub body: RigidBody,
}

/// Where a link frame lives: a fixed transform inside a segment body frame
/// (`None` = the world-fixed base).
#[derive(Debug, Clone)]
pub(crate) struct Placement {
    pub body: Option<usize>,
    pub rotation: Rotation3<f64>,
    pub origin: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ChainLayout {
    pub segments: Vec<Segment>,
    pub links: Vec<Placement>,
    pub tip: Placement,
}

impl ChainLayout {
    fn build(links: &[LinkSpec], joints: &[JointSpec]) -> Self {
        let mut segments: Vec<Segment> = Vec::new();
        let mut placements = Vec::with_capacity(links.len());
        // Base link frame, placed so its distal end is the world origin.
        placements.push(Placement {
            body: None,
            rotation: Rotation3::identity(),
            origin: Vector3::new(-links[0].length, 0.0, 0.0),
        });
        let mut current: Option<usize> = None;
        let mut rotation = Rotation3::identity();
        let mut origin = Vector3::zeros();

        for (j, joint) in joints.iter().enumerate() {
            for (axis, spec) in joint.axes() {
                let turn = Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(axis.unit()), spec.lower);
                if spec.is_locked() {
                    rotation *= turn;
                } else {
                    segments.push(Segment {
                        fixed_rotation: rotation,
                        offset: origin,
                        axis: axis.unit(),
                        body: RigidBody::empty(),
                    });
                    current = Some(segments.len() - 1);
                    rotation = Rotation3::identity();
                    origin = Vector3::zeros();
                }
            }
            let child = &links[j + 1];
            if let Some(idx) = current {
                let body = RigidBody::from_link(child, &rotation, &origin);
                segments[idx].body = segments[idx].body.merged(&body);
            }
            placements.push(Placement {
                body: current,
                rotation,
                origin,
            });
            origin += rotation * Vector3::new(child.length, 0.0, 0.0);
        }
        ChainLayout {
            segments,
            links: placements,
            tip: Placement {
                body: current,
                rotation,
                origin,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct CableModel {
    links: Vec<LinkSpec>,
    joints: Vec<JointSpec>,
    gravity: Vector3<f64>,
    dofs: Vec<DofInfo>,
    layout: ChainLayout,
}

impl PartialEq for CableModel {
    fn eq(&self, other: &Self) -> bool {
        self.links == other.links && self.joints == other.joints && self.gravity == other.gravity
    }
}

impl CableModel {
    pub fn new(links: Vec<LinkSpec>, joints: Vec<JointSpec>, gravity: Vector3<f64>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::invalid("links", "at least one link is required"));
        }
        if joints.len() + 1 != links.len() {
            return Err(Error::invalid(
                "joints",
                format!(
                    "expected {} joints for {} links, found {}",
                    links.len() - 1,
                    links.len(),
                    joints.len()
                ),
            ));
        }
        for (i, link) in links.iter().enumerate() {
            link.validate(&format!("links[{i}]"))?;
        }
        for (j, joint) in joints.iter().enumerate() {
            joint.validate(&format!("joints[{j}]"))?;
        }
        if !gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::invalid("gravity_mps2", "gravity must be finite"));
        }
        let dofs = joints
            .iter()
            .enumerate()
            .flat_map(|(j, joint)| {
                joint
                    .axes()
                    .filter(|(_, s)| !s.is_locked())
                    .map(move |(axis, spec)| DofInfo {
                        joint: j,
                        axis,
                        spec: *spec,
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let layout = ChainLayout::build(&links, &joints);
        Ok(Self {
            links,
            joints,
            gravity,
            dofs,
            layout,
        })
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn gravity(&self) -> Vector3<f64> {
        self.gravity
    }

    pub fn dof(&self) -> usize {
        self.dofs.len()
    }

    pub fn dofs(&self) -> &[DofInfo] {
        &self.dofs
    }

    pub(crate) fn layout(&self) -> &ChainLayout {
        &self.layout
    }

    /// Total mass of every link, base included.
    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// Mass carried by the moving part of the chain (everything but the base).
    pub fn moving_mass(&self) -> f64 {
        self.links[1..].iter().map(|l| l.mass).sum()
    }

    pub fn chain_length(&self) -> f64 {
        self.links[1..].iter().map(|l| l.length).sum()
    }

    pub fn stiffness(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.dofs.iter().map(|d| d.spec.stiffness))
    }

    pub fn damping(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.dofs.iter().map(|d| d.spec.damping))
    }

    pub fn armature(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.dofs.iter().map(|d| d.spec.armature))
    }

    pub fn with_gravity(&self, gravity: Vector3<f64>) -> Result<Self> {
        Self::new(self.links.clone(), self.joints.clone(), gravity)
    }

    /// Copy with per-DOF stiffness and damping replaced.
    pub fn with_stiffness_damping(&self, stiffness: &[f64], damping: &[f64]) -> Result<Self> {
        check_dim("stiffness", self.dof(), stiffness.len())?;
        check_dim("damping", self.dof(), damping.len())?;
        let mut joints = self.joints.clone();
        for ((dof, k), d) in self.dofs.iter().zip(stiffness).zip(damping) {
            if let Some(spec) = joints[dof.joint].axis_mut(dof.axis) {
                spec.stiffness = *k;
                spec.damping = *d;
            }
        }
        Self::new(self.links.clone(), joints, self.gravity)
    }

    /// Same stiffness and damping on every DOF.
    pub fn with_uniform_stiffness_damping(&self, stiffness: f64, damping: f64) -> Result<Self> {
        let n = self.dof();
        self.with_stiffness_damping(&vec![stiffness; n], &vec![damping; n])
    }

    /// Copy with every roll axis removed.
    pub fn pitch_only(&self) -> Self {
        let joints = self
            .joints
            .iter()
            .map(|j| JointSpec {
                pitch: j.pitch,
                roll: None,
            })
            .collect();
        Self::new(self.links.clone(), joints, self.gravity).expect("projection of a valid model")
    }

    /// Copy with every locked roll axis freed to `[−limit, limit]`, keeping
    /// its stiffness and damping.
    pub fn with_free_roll(&self, limit: f64) -> Result<Self> {
        let joints = self
            .joints
            .iter()
            .map(|j| JointSpec {
                pitch: j.pitch,
                roll: j.roll.map(|r| {
                    if r.is_locked() {
                        AxisSpec { lower: -limit, upper: limit, ..r }
                    } else {
                        r
                    }
                }),
            })
            .collect();
        Self::new(self.links.clone(), joints, self.gravity)
    }

    /// Sub-chain rooted at `links[base]`, which becomes the welded base.
    pub fn rerooted(&self, base: usize) -> Result<Self> {
        if base >= self.links.len() {
            return Err(Error::ChainTooShort {
                needed: base + 1,
                found: self.links.len(),
            });
        }
        Self::new(
            self.links[base..].to_vec(),
            self.joints[base..].to_vec(),
            self.gravity,
        )
    }

    /// Checks dimensions and joint limits of a coordinate vector.
    pub fn check_coordinates(&self, q: &DVector<f64>) -> Result<()> {
        check_dim("joint positions", self.dof(), q.len())?;
        for (i, (d, v)) in self.dofs.iter().zip(q.iter()).enumerate() {
            if *v < d.spec.lower || *v > d.spec.upper || !v.is_finite() {
                return Err(Error::JointLimit {
                    dof: i,
                    value: *v,
                    lower: d.spec.lower,
                    upper: d.spec.upper,
                });
            }
        }
        Ok(())
    }
}

/// Joint positions, velocities and accelerations, one entry per DOF.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub qdd: DVector<f64>,
}

impl ChainState {
    pub fn zeros(n: usize) -> Self {
        Self {
            q: DVector::zeros(n),
            qd: DVector::zeros(n),
            qdd: DVector::zeros(n),
        }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            qd: DVector::zeros(n),
            qdd: DVector::zeros(n),
        }
    }

    pub fn new(q: DVector<f64>, qd: DVector<f64>, qdd: DVector<f64>) -> Self {
        Self { q, qd, qdd }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn check_dims(&self, model: &CableModel) -> Result<()> {
        check_dim("joint positions", model.dof(), self.q.len())?;
        check_dim("joint velocities", model.dof(), self.qd.len())?;
        check_dim("joint accelerations", model.dof(), self.qdd.len())
    }

    /// Dimension check plus joint-limit check on `q`.
    pub fn validate(&self, model: &CableModel) -> Result<()> {
        self.check_dims(model)?;
        model.check_coordinates(&self.q)
    }
}

/// A point rigidly attached to a link: `offset` meters along its axis from
/// the proximal end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainPoint {
    pub link: usize,
    pub offset: f64,
}

impl ChainPoint {
    pub fn new(link: usize, offset: f64) -> Self {
        Self { link, offset }
    }

    /// Distal end of the last link.
    pub fn tip(model: &CableModel) -> Self {
        let last = model.links().len() - 1;
        Self::new(last, model.links()[last].length)
    }

    pub fn validate(&self, model: &CableModel) -> Result<()> {
        let Some(link) = model.links().get(self.link) else {
            return Err(Error::InvalidPoint {
                link: self.link,
                offset: self.offset,
                reason: format!("model has {} links", model.links().len()),
            });
        };
        if !(0.0..=link.length).contains(&self.offset) {
            return Err(Error::InvalidPoint {
                link: self.link,
                offset: self.offset,
                reason: format!("offset outside [0, {}]", link.length),
            });
        }
        Ok(())
    }
}

/// A constant wrench applied to the cable at a point on a link.
///
/// `wrench` is the load acting *on* the cable, world frame: force (N) then
/// torque (N·m). A hanging weight of mass `m` is `(0, 0, -m g, 0, 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalLoad {
    pub attachment: ChainPoint,
    pub wrench: nalgebra::Vector6<f64>,
}

impl ExternalLoad {
    pub fn force(attachment: ChainPoint, force: Vector3<f64>) -> Self {
        let mut wrench = nalgebra::Vector6::zeros();
        wrench.fixed_rows_mut::<3>(0).copy_from(&force);
        Self { attachment, wrench }
    }

    /// Weight of `mass` kg hanging from the chain tip.
    pub fn tip_weight(model: &CableModel, mass: f64) -> Self {
        Self::force(ChainPoint::tip(model), model.gravity() * mass)
    }

    pub fn force_part(&self) -> Vector3<f64> {
        self.wrench.fixed_rows::<3>(0).into_owned()
    }

    pub fn torque_part(&self) -> Vector3<f64> {
        self.wrench.fixed_rows::<3>(3).into_owned()
    }

    pub fn validate(&self, model: &CableModel) -> Result<()> {
        self.attachment.validate(model)?;
        if !self.wrench.iter().all(|w| w.is_finite()) {
            return Err(Error::InvalidArgument("load wrench must be finite".into()));
        }
        Ok(())
    }
}

/// Tip loads list for a weight of `mass` kg; empty when `mass` is zero.
pub fn tip_weight_loads(model: &CableModel, mass: f64) -> Vec<ExternalLoad> {
    if mass == 0.0 {
        Vec::new()
    } else {
        vec![ExternalLoad::tip_weight(model, mass)]
    }
}

/// Fifteen 5 cm / 50 g cable links followed by a 10 cm / 100 g plug link.
/// Cable joints carry pitch and roll axes with roll locked at zero; the plug
/// is welded to the last cable link. Stiffness and damping start at zero.
pub fn default_paper_model() -> CableModel {
    const CABLE_LINKS: usize = 15;
    let mut links: Vec<LinkSpec> = (0..CABLE_LINKS)
        .map(|_| LinkSpec::rod(0.05, 0.05, CABLE_RADIUS))
        .collect();
    links.push(LinkSpec::rod(0.10, 0.10, PLUG_RADIUS));

    let pitch = AxisSpec::free(-std::f64::consts::PI, std::f64::consts::PI);
    let roll = AxisSpec::locked(0.0);
    let mut joints: Vec<JointSpec> = (0..CABLE_LINKS - 1)
        .map(|_| JointSpec::pitch_roll(pitch, roll))
        .collect();
    joints.push(JointSpec::fixed());

    CableModel::new(links, joints, Vector3::new(0.0, 0.0, -STANDARD_GRAVITY))
        .expect("default model is valid")
}

/// Number of cable links kept by [`identification_subchain`].
pub const IDENTIFICATION_LINKS: usize = 4;

/// The four distal cable links plus the plug, rooted at the next link up
/// and reduced to pitch axes only (four DOF for the default model).
pub fn identification_subchain(model: &CableModel) -> Result<CableModel> {
    // base + 4 cable links + plug
    let needed = IDENTIFICATION_LINKS + 2;
    let n = model.links().len();
    if n < needed {
        return Err(Error::ChainTooShort { needed, found: n });
    }
    Ok(model.rerooted(n - needed)?.pitch_only())
}
