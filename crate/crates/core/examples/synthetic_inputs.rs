//! Writes synthetic inputs for the CLI into a directory:
//! a released-weight pose log of the four-joint fixture (`poses.csv`,
//! `poses.meta.toml`) and a sagging-cable point cloud (`cloud.csv`).
//!
//! cargo run --release -p cablekit --example synthetic_inputs -- OUT_DIR [K D [NOISE_SEED]]

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use cablekit::ident::{add_pose_noise, synthetic_pose_log, PoseNoise, SyntheticConfig};
use cablekit::io::write_points_csv;
use cablekit::model::{default_paper_model, identification_subchain};
use cablekit::validation::{cable_cloud, CLOUD_NOISE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(dir) = args.first().map(PathBuf::from) else {
        return Err("usage: synthetic_inputs OUT_DIR [K D [NOISE_SEED]]".into());
    };
    let k: f64 = args.get(1).map_or(Ok(0.5), |s| s.parse())?;
    let d: f64 = args.get(2).map_or(Ok(0.01), |s| s.parse())?;
    std::fs::create_dir_all(&dir)?;

    let truth = identification_subchain(&default_paper_model())?.with_uniform_stiffness_damping(k, d)?;
    let syn = synthetic_pose_log(&truth, &SyntheticConfig::default())?;
    let log = match args.get(3) {
        Some(seed) => add_pose_noise(&syn.log, &PoseNoise::default(), seed.parse()?)?,
        None => syn.log,
    };
    log.write_csv(BufWriter::new(File::create(dir.join("poses.csv"))?))?;
    std::fs::write(dir.join("poses.meta.toml"), log.meta.to_toml())?;

    let cable = default_paper_model().with_uniform_stiffness_damping(k, d)?;
    let cloud: Vec<_> = cable_cloud(&cable, CLOUD_NOISE, 0)?.into_iter().map(|p| p.coords).collect();
    write_points_csv(BufWriter::new(File::create(dir.join("cloud.csv"))?), &cloud)?;
    println!("wrote {} pose rows and {} cloud points to {}", log.entries().len(), cloud.len(), dir.display());
    Ok(())
}
