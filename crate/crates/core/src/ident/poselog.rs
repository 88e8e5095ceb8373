//! Fiducial pose logs and their conversion to joint angles.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{check_header, fmt9, parse_f64};
use crate::kinematics::{rotation_log, FramePose};
use crate::model::{Axis, CableModel};

/// Default half-open association window for grouping tags into one instant.
pub const ASSOCIATION_WINDOW: f64 = 0.010;

/// Largest tolerated non-pitch part of a relative tag rotation, radians.
pub const MAX_OFF_PITCH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEntry {
    pub t: f64,
    pub tag_id: u32,
    pub pose: FramePose,
}

/// Sidecar metadata: tag ids in chain order (base to tip) and their spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseLogMeta {
    pub tag_ids: Vec<u32>,
    pub spacing_m: f64,
}

impl PoseLogMeta {
    pub fn from_toml(text: &str) -> Result<Self> {
        let meta: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metadata serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tag_ids.len() < 2 {
            return Err(Error::InvalidArgument("pose log metadata needs at least two tags".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = self.tag_ids.iter().find(|t| !seen.insert(**t)) {
            return Err(Error::InvalidArgument(format!("tag {dup} declared twice")));
        }
        if !(self.spacing_m > 0.0) {
            return Err(Error::InvalidArgument("tag spacing must be positive".into()));
        }
        Ok(())
    }
}

/// Timestamped tag frames. Each tag's timestamps are strictly increasing
/// and every tag is declared in the metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseLog {
    pub meta: PoseLogMeta,
    entries: Vec<PoseEntry>,
}

/// All chain tags observed at one instant, in chain order.
#[derive(Debug, Clone, PartialEq)]
pub struct TagInstant {
    pub t: f64,
    pub frames: Vec<FramePose>,
}

impl PoseLog {
    pub fn new(meta: PoseLogMeta, entries: Vec<PoseEntry>) -> Result<Self> {
        meta.validate()?;
        let mut last: BTreeMap<u32, f64> = meta.tag_ids.iter().map(|t| (*t, f64::NEG_INFINITY)).collect();
        for (i, e) in entries.iter().enumerate() {
            let Some(prev) = last.get_mut(&e.tag_id) else {
                return Err(Error::UndeclaredTag { tag: e.tag_id });
            };
            if !(e.t > *prev) || !e.t.is_finite() {
                return Err(Error::NonMonotoneTime { index: i });
            }
            *prev = e.t;
        }
        Ok(Self { meta, entries })
    }

    pub fn entries(&self) -> &[PoseEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Copy with every timestamp shifted by `dt`.
    pub fn time_shifted(&self, dt: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| PoseEntry { t: e.t + dt, ..*e })
            .collect();
        Self {
            meta: self.meta.clone(),
            entries,
        }
    }

    /// Groups the tags into instants, clocked by the first (base) tag. Each
    /// other tag contributes its nearest observation, which must lie within
    /// half the association window of the base stamp.
    pub fn instants(&self, window: f64) -> Result<Vec<TagInstant>> {
        let mut per_tag: BTreeMap<u32, Vec<&PoseEntry>> = BTreeMap::new();
        for e in &self.entries {
            per_tag.entry(e.tag_id).or_default().push(e);
        }
        let base_id = self.meta.tag_ids[0];
        let Some(base) = per_tag.get(&base_id) else {
            return Ok(Vec::new());
        };
        let half = 0.5 * window;
        let mut out = Vec::with_capacity(base.len());
        for b in base {
            let mut frames = Vec::with_capacity(self.meta.tag_ids.len());
            frames.push(b.pose);
            for tag in &self.meta.tag_ids[1..] {
                let obs = per_tag.get(tag).map(Vec::as_slice).unwrap_or(&[]);
                let nearest = nearest_in_time(obs, b.t)
                    .filter(|e| (e.t - b.t).abs() <= half + 1e-12)
                    .ok_or(Error::MissingTag { tag: *tag, t: b.t })?;
                frames.push(nearest.pose);
            }
            out.push(TagInstant { t: b.t, frames });
        }
        Ok(out)
    }

    /// Reads `t,tag_id,x,y,z,qx,qy,qz,qw` rows.
    pub fn read_csv(reader: impl Read, meta: PoseLogMeta) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        check_header(rdr.headers()?, &CSV_HEADER)?;
        let mut entries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            if rec.len() != CSV_HEADER.len() {
                return Err(Error::InvalidArgument(format!(
                    "row {row}: expected {} fields, found {}",
                    CSV_HEADER.len(),
                    rec.len()
                )));
            }
            let num = |k: usize| parse_f64(&rec[k], CSV_HEADER[k], row);
            let tag_id: u32 = rec[1]
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("row {row}: bad tag id `{}`", &rec[1])))?;
            let pose = FramePose::from_quaternion(
                Vector3::new(num(2)?, num(3)?, num(4)?),
                [num(5)?, num(6)?, num(7)?, num(8)?],
            )?;
            entries.push(PoseEntry { t: num(0)?, tag_id, pose });
        }
        Self::new(meta, entries)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", CSV_HEADER.join(","))?;
        for e in &self.entries {
            let p = e.pose.translation;
            let q = e.pose.quaternion_xyzw();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                fmt9(e.t),
                e.tag_id,
                fmt9(p.x),
                fmt9(p.y),
                fmt9(p.z),
                fmt9(q[0]),
                fmt9(q[1]),
                fmt9(q[2]),
                fmt9(q[3])
            )?;
        }
        Ok(())
    }
}

const CSV_HEADER: [&str; 9] = ["t", "tag_id", "x", "y", "z", "qx", "qy", "qz", "qw"];

fn nearest_in_time<'a>(obs: &[&'a PoseEntry], t: f64) -> Option<&'a PoseEntry> {
    let i = obs.partition_point(|e| e.t < t);
    let before = i.checked_sub(1).map(|k| obs[k]);
    let after = obs.get(i).copied();
    match (before, after) {
        (Some(a), Some(b)) => Some(if (t - a.t) <= (b.t - t) { a } else { b }),
        (a, b) => a.or(b),
    }
}

/// Link carrying each tag: the link before the first DOF, then the link
/// driven by each DOF. Requires a pitch-only model.
pub fn tag_links(model: &CableModel) -> Result<Vec<usize>> {
    if let Some((i, _)) = model.dofs().iter().enumerate().find(|(_, d)| d.axis != Axis::Pitch) {
        return Err(Error::InvalidArgument(format!(
            "pose logs map to pitch-only chains; DOF {i} is a roll axis"
        )));
    }
    let Some(first) = model.dofs().first() else {
        return Err(Error::NoDegreesOfFreedom("model has no joints to observe".into()));
    };
    let mut links = vec![first.joint];
    links.extend(model.dofs().iter().map(|d| d.joint + 1));
    Ok(links)
}

/// Pitch angle of each relative rotation between consecutive tag frames.
pub fn poses_to_joint_angles(frames: &[FramePose], model: &CableModel) -> Result<DVector<f64>> {
    let n = model.dof();
    let links = tag_links(model)?;
    if frames.len() != links.len() {
        return Err(Error::DimensionMismatch {
            what: "tag frames",
            expected: links.len(),
            found: frames.len(),
        });
    }
    let mut q = DVector::zeros(n);
    for i in 0..n {
        let rel = frames[i].rotation.inverse() * frames[i + 1].rotation;
        let m = rel.matrix();
        let angle = m[(0, 2)].atan2(m[(0, 0)]);
        let pitch = crate::kinematics::axis_rotation(Axis::Pitch, angle);
        let off = rotation_log(&(pitch.inverse() * rel)).norm();
        if off > MAX_OFF_PITCH {
            return Err(Error::OffPitchRotation { joint: i, magnitude: off });
        }
        q[i] = angle;
    }
    Ok(q)
}
