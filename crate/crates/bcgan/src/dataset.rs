//! Labeled Ising image datasets: generation, manifest format, loading.
//!
//! The manifest is a CSV with header `filename,temperature`; temperatures are
//! printed as the shortest decimal that round-trips the float32 label.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{lattice_to_image, read_pgm, write_pgm, GrayImage};
use crate::ising::{critical_temperature, run_simulation, SimParams};
use crate::rng::mix64;

pub const MANIFEST_FILE: &str = "manifest.csv";

/// Smallest dataset temperature; T = 0 is excluded from every grid.
pub const EPSILON_TEMPERATURE: f32 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<(String, f32)>,
    pub lattice_size: usize,
    pub per_temperature: usize,
    pub temperatures: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub temperatures: Vec<f32>,
    pub per_temperature: usize,
    pub n: usize,
    pub base_seed: u64,
    /// Steps per simulation; defaults to n^3 when None.
    pub max_steps: Option<u64>,
}

/// Uniform inclusive grid of `count` temperatures over [eps, 2*T_c].
pub fn temperature_grid(count: usize, eps: f32) -> Vec<f32> {
    let hi = 2.0 * critical_temperature();
    let lo = eps as f64;
    (0..count)
        .map(|i| {
            if count == 1 {
                hi as f32
            } else {
                (lo + (hi - lo) * i as f64 / (count - 1) as f64) as f32
            }
        })
        .collect()
}

fn validate_temperature(t: f32) -> Result<()> {
    let hi = (2.0 * critical_temperature()) as f32;
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::InvalidTemperature(t));
    }
    if t > hi {
        return Err(Error::TemperatureOutOfRange(t, hi));
    }
    Ok(())
}

/// Generate one independent simulation per (temperature, sample) cell and
/// write the images plus the manifest to `out_dir`.
///
/// Seeds are derived as mix64-chained (base_seed, temperature index, sample
/// index), so the dataset is reproducible and simulations are independent.
pub fn generate_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest> {
    for &t in &config.temperatures {
        validate_temperature(t)?;
    }
    if config.per_temperature == 0 || config.temperatures.is_empty() {
        return Err(Error::Config("dataset must have at least one image".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let jobs: Vec<(usize, usize, f32)> = config
        .temperatures
        .iter()
        .enumerate()
        .flat_map(|(ti, &t)| (0..config.per_temperature).map(move |si| (ti, si, t)))
        .collect();
    let max_steps = config
        .max_steps
        .unwrap_or((config.n * config.n * config.n) as u64);

    let entries: Vec<(String, f32)> = jobs
        .par_iter()
        .map(|&(ti, si, t)| -> Result<(String, f32)> {
            let seed = derive_sim_seed(config.base_seed, ti, si);
            let params = SimParams {
                n: config.n,
                temperature: t,
                max_steps,
                seed,
            };
            let lattice = run_simulation(&params)?;
            let filename = format!("t{ti:03}_s{si:04}.pgm");
            write_pgm(&out_dir.join(&filename), &lattice_to_image(&lattice))?;
            Ok((filename, t))
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest {
        entries,
        lattice_size: config.n,
        per_temperature: config.per_temperature,
        temperatures: config.temperatures.clone(),
    };
    std::fs::write(out_dir.join(MANIFEST_FILE), encode_manifest(&manifest))?;
    Ok(manifest)
}

pub fn derive_sim_seed(base_seed: u64, temp_index: usize, sample_index: usize) -> u64 {
    let mut h = mix64(base_seed);
    h = mix64(h ^ (temp_index as u64).wrapping_mul(0x9e3779b97f4a7c15));
    mix64(h ^ (sample_index as u64).wrapping_mul(0x9e3779b97f4a7c15))
}

pub fn encode_manifest(manifest: &DatasetManifest) -> String {
    let mut out = String::from("filename,temperature\n");
    for (name, t) in &manifest.entries {
        // `{}` on f32 prints the shortest decimal that round-trips.
        let _ = writeln!(out, "{name},{t}");
    }
    out
}

/// Parse a `filename,temperature` manifest CSV.
pub fn parse_manifest(text: &str) -> Result<Vec<(String, f32)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "filename,temperature" => {}
        _ => return Err(Error::ManifestFormat("missing header".into())),
    }
    let mut entries = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (name, t) = line
            .split_once(',')
            .ok_or_else(|| Error::ManifestFormat(format!("line {}: no comma", lineno + 2)))?;
        if name.is_empty() || name.contains(['/', '\\']) || name.contains("..") {
            return Err(Error::ManifestFormat(format!(
                "line {}: bad filename {name:?}",
                lineno + 2
            )));
        }
        let t: f32 = t
            .trim()
            .parse()
            .map_err(|_| Error::ManifestFormat(format!("line {}: bad temperature", lineno + 2)))?;
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::ManifestFormat(format!(
                "line {}: temperature {t} out of range",
                lineno + 2
            )));
        }
        entries.push((name.to_string(), t));
    }
    if entries.is_empty() {
        return Err(Error::ManifestFormat("empty manifest".into()));
    }
    Ok(entries)
}

/// A dataset loaded into memory: images with their temperature labels.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dir: PathBuf,
    pub n: usize,
    pub images: Vec<GrayImage>,
    pub labels: Vec<f32>,
}

pub fn load_dataset(dir: &Path) -> Result<LoadedDataset> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let entries = parse_manifest(&text)?;
    let mut images = Vec::with_capacity(entries.len());
    let mut labels = Vec::with_capacity(entries.len());
    let mut n = 0usize;
    for (name, t) in &entries {
        let img = read_pgm(&dir.join(name))?;
        if n == 0 {
            n = img.n();
        } else if img.n() != n {
            return Err(Error::ShapeMismatch(format!(
                "{name}: image is {}x{}, dataset is {n}x{n}",
                img.n(),
                img.n()
            )));
        }
        images.push(img);
        labels.push(*t);
    }
    Ok(LoadedDataset {
        dir: dir.to_path_buf(),
        n,
        images,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn grid_endpoints() {
        let g = temperature_grid(16, EPSILON_TEMPERATURE);
        assert_eq!(g.len(), 16);
        assert_eq!(g[0], EPSILON_TEMPERATURE);
        let hi = (2.0 * critical_temperature()) as f32;
        assert!((g[15] - hi).abs() < 1e-6);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(g.iter().all(|&t| t > 0.0));
    }

    #[test]
    fn dataset_generation_and_reload() {
        let dir = tempdir().unwrap();
        let config = DatasetConfig {
            temperatures: temperature_grid(4, 0.01),
            per_temperature: 2,
            n: 8,
            base_seed: 42,
            max_steps: Some(512),
        };
        let manifest = generate_dataset(&config, dir.path()).unwrap();
        assert_eq!(manifest.entries.len(), 8);
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.images.len(), 8);
        assert_eq!(loaded.n, 8);

        // byte-identical regeneration
        let dir2 = tempdir().unwrap();
        generate_dataset(&config, dir2.path()).unwrap();
        for (name, _) in &manifest.entries {
            let a = std::fs::read(dir.path().join(name)).unwrap();
            let b = std::fs::read(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name}");
        }
        assert_eq!(
            std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap(),
            std::fs::read(dir2.path().join(MANIFEST_FILE)).unwrap()
        );
    }

    #[test]
    fn manifest_roundtrip_shortest_decimal() {
        let manifest = DatasetManifest {
            entries: vec![("a.pgm".into(), 2.2691853_f32), ("b.pgm".into(), 0.01)],
            lattice_size: 8,
            per_temperature: 1,
            temperatures: vec![0.01, 2.2691853],
        };
        let text = encode_manifest(&manifest);
        let parsed = parse_manifest(&text).unwrap();
        assert_eq!(parsed[0].1.to_bits(), 2.2691853_f32.to_bits());
        assert_eq!(parsed[1].1.to_bits(), 0.01_f32.to_bits());
    }

    #[test]
    fn manifest_rejects_garbage() {
        assert!(parse_manifest("").is_err());
        assert!(parse_manifest("filename,temperature\n").is_err());
        assert!(parse_manifest("filename,temperature\nx.pgm,-1.0\n").is_err());
        assert!(parse_manifest("filename,temperature\n../x.pgm,1.0\n").is_err());
        assert!(parse_manifest("nope\nx.pgm,1.0\n").is_err());
    }

    #[test]
    fn rejects_out_of_range_temperature() {
        let dir = tempdir().unwrap();
        let config = DatasetConfig {
            temperatures: vec![10.0],
            per_temperature: 1,
            n: 8,
            base_seed: 1,
            max_steps: Some(8),
        };
        assert!(generate_dataset(&config, dir.path()).is_err());
    }
}
