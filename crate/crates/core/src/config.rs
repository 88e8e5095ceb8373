//! TOML model files. Every key carries its unit in the name.
//!
//! ```toml
//! gravity_mps2 = [0.0, 0.0, -9.8]
//!
//! [[links]]
//! length_m = 0.05
//! mass_kg = 0.05
//! com_offset_m = 0.025
//! inertia_kgm2 = [[6.25e-7, 0.0, 0.0], [0.0, 1.0417e-5, 0.0], [0.0, 0.0, 1.0417e-5]]
//!
//! [[joints]]              # a joint with no axis tables is a weld
//! [joints.pitch]
//! stiffness_nm_per_rad = 0.5
//! damping_nms_per_rad = 0.01
//! limits_rad = [-3.141592653589793, 3.141592653589793]
//! armature_kgm2 = 0.0     # optional
//! ```

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AxisSpec, CableModel, JointSpec, LinkSpec, STANDARD_GRAVITY};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(default = "default_gravity")]
    gravity_mps2: [f64; 3],
    links: Vec<LinkEntry>,
    #[serde(default)]
    joints: Vec<JointEntry>,
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -STANDARD_GRAVITY]
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkEntry {
    length_m: f64,
    mass_kg: f64,
    com_offset_m: f64,
    inertia_kgm2: [[f64; 3]; 3],
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    pitch: Option<AxisEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    roll: Option<AxisEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisEntry {
    #[serde(default)]
    stiffness_nm_per_rad: f64,
    #[serde(default)]
    damping_nms_per_rad: f64,
    limits_rad: [f64; 2],
    #[serde(default)]
    armature_kgm2: f64,
}

impl From<&AxisSpec> for AxisEntry {
    fn from(s: &AxisSpec) -> Self {
        Self {
            stiffness_nm_per_rad: s.stiffness,
            damping_nms_per_rad: s.damping,
            limits_rad: [s.lower, s.upper],
            armature_kgm2: s.armature,
        }
    }
}

impl From<&AxisEntry> for AxisSpec {
    fn from(e: &AxisEntry) -> Self {
        Self {
            stiffness: e.stiffness_nm_per_rad,
            damping: e.damping_nms_per_rad,
            lower: e.limits_rad[0],
            upper: e.limits_rad[1],
            armature: e.armature_kgm2,
        }
    }
}

/// Parses a model document and validates every invariant.
pub fn load_model(document: &str) -> Result<CableModel> {
    let file: ModelFile = toml::from_str(document).map_err(|e| Error::Config(e.to_string()))?;
    let links = file
        .links
        .iter()
        .map(|l| LinkSpec {
            length: l.length_m,
            mass: l.mass_kg,
            com_offset: l.com_offset_m,
            inertia: Matrix3::from_fn(|r, c| l.inertia_kgm2[r][c]),
        })
        .collect();
    let joints = file
        .joints
        .iter()
        .map(|j| JointSpec {
            pitch: j.pitch.as_ref().map(AxisSpec::from),
            roll: j.roll.as_ref().map(AxisSpec::from),
        })
        .collect();
    CableModel::new(links, joints, Vector3::from(file.gravity_mps2))
}

pub fn save_model(model: &CableModel) -> String {
    let g = model.gravity();
    let file = ModelFile {
        gravity_mps2: [g.x, g.y, g.z],
        links: model
            .links()
            .iter()
            .map(|l| LinkEntry {
                length_m: l.length,
                mass_kg: l.mass,
                com_offset_m: l.com_offset,
                inertia_kgm2: std::array::from_fn(|r| std::array::from_fn(|c| l.inertia[(r, c)])),
            })
            .collect(),
        joints: model
            .joints()
            .iter()
            .map(|j| JointEntry {
                pitch: j.pitch.as_ref().map(AxisEntry::from),
                roll: j.roll.as_ref().map(AxisEntry::from),
            })
            .collect(),
    };
    toml::to_string(&file).expect("model file serializes")
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<CableModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    load_model(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_model_file(model: &CableModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, save_model(model))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_paper_model;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"
[[links]]
length_m = 0.05
mass_kg = 0.05
com_offset_m = 0.025
inertia_kgm2 = [[0.0, 0.0, 0.0], [0.0, 1e-5, 0.0], [0.0, 0.0, 1e-5]]

[[links]]
length_m = 0.05
mass_kg = MASS
com_offset_m = 0.025
inertia_kgm2 = [[0.0, 0.0, 0.0], [0.0, 1e-5, 0.0], [0.0, 0.0, 1e-5]]

[[joints]]
[joints.pitch]
stiffness_nm_per_rad = 0.5
limits_rad = [-1.0, 1.0]
"#;

    #[test]
    fn parses_minimal_document_with_default_gravity() {
        let m = load_model(&MINIMAL.replace("MASS", "0.05")).unwrap();
        assert_eq!(m.dof(), 1);
        assert_eq!(m.gravity(), Vector3::new(0.0, 0.0, -9.8));
        assert_eq!(m.stiffness()[0], 0.5);
        assert_eq!(m.damping()[0], 0.0);
    }

    #[test]
    fn negative_mass_is_an_invariant_error() {
        let err = load_model(&MINIMAL.replace("MASS", "-1")).unwrap_err();
        assert!(matches!(err, Error::InvalidModel { .. }));
        assert!(err.to_string().contains("mass must be positive"));
        assert!(err.to_string().contains("links[1].mass_kg"));
    }

    #[test]
    fn missing_key_and_bad_syntax_are_parse_errors() {
        let missing = MINIMAL.replace("mass_kg = MASS\n", "");
        let err = load_model(&missing).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("mass_kg"), "{err}");
        assert!(matches!(load_model("links = ["), Err(Error::Config(_))));
    }

    #[test]
    fn paper_model_round_trips() {
        let m = default_paper_model();
        let back = load_model(&save_model(&m)).unwrap();
        assert_eq!(back, m);
    }

    fn arb_axis() -> impl Strategy<Value = AxisSpec> {
        (0.0..10.0f64, 0.0..1.0f64, -3.0..0.0f64, 0.0..3.0f64, 0.0..1e-3f64).prop_map(
            |(k, d, lo, hi, a)| AxisSpec {
                stiffness: k,
                damping: d,
                lower: lo,
                upper: hi,
                armature: a,
            },
        )
    }

    fn arb_model() -> impl Strategy<Value = CableModel> {
        (2usize..7).prop_flat_map(|n| {
            (
                prop::collection::vec((0.01..0.2f64, 0.01..0.5f64, 0.0..1.0f64, 0.0..0.02f64), n),
                prop::collection::vec((prop::option::of(arb_axis()), prop::option::of(arb_axis())), n - 1),
                prop::array::uniform3(-10.0..10.0f64),
            )
                .prop_map(|(links, joints, g)| {
                    let links = links
                        .into_iter()
                        .map(|(len, mass, frac, r)| {
                            let mut l = LinkSpec::rod(len, mass, r);
                            l.com_offset = frac * len;
                            l
                        })
                        .collect();
                    let joints = joints
                        .into_iter()
                        .map(|(pitch, roll)| JointSpec { pitch, roll })
                        .collect();
                    CableModel::new(links, joints, Vector3::from(g)).unwrap()
                })
        })
    }

    fn numeric_bits(m: &CableModel) -> Vec<u64> {
        let mut out: Vec<u64> = m.gravity().iter().map(|v| v.to_bits()).collect();
        for l in m.links() {
            out.extend([l.length, l.mass, l.com_offset].map(f64::to_bits));
            out.extend(l.inertia.iter().map(|v| v.to_bits()));
        }
        for j in m.joints() {
            for (_, a) in j.axes() {
                out.extend([a.stiffness, a.damping, a.lower, a.upper, a.armature].map(f64::to_bits));
            }
        }
        out
    }

    proptest! {
        #[test]
        fn save_then_load_is_identity(model in arb_model()) {
            let text = save_model(&model);
            let back = load_model(&text).unwrap();
            prop_assert_eq!(numeric_bits(&back), numeric_bits(&model));
            prop_assert_eq!(back, model);
        }
    }
}
