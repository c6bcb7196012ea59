//! Calibrates the wandering classifier on simulated Phase-A sessions, checks
//! it against shuffled labels and round-trips the model file.

use cuelab::classifier::{cross_validate, ForestConfig, WanderingModel, CV_FOLDS};
use cuelab::protocol::StudyConfig;
use cuelab::sim::calibrate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map_or(Ok(7), |s| s.parse())?;
    let cal = calibrate(&StudyConfig::default(), seed)?;
    let (settled, wandering) = cal.training.class_counts();
    println!("{} sessions, {settled} settled rows, {wandering} wandering rows", cal.sessions.len());
    println!("5-fold CV accuracy: {:.4}", cal.cv_accuracy);
    let shuffled = cross_validate(&cal.training.permuted(seed), seed, ForestConfig::default(), CV_FOLDS)?;
    println!("shuffled-label accuracy: {shuffled:.4}");

    let dir = tempfile_dir()?;
    let path = dir.join("model.json");
    cal.model.save(&path)?;
    let back = WanderingModel::load(&path)?;
    println!("model file {} bytes, identical after reload: {}", std::fs::metadata(&path)?.len(), back.to_bytes() == cal.model.to_bytes());
    std::fs::remove_dir_all(dir)?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("cuelab-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
