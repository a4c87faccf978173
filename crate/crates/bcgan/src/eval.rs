//! Pipeline evaluation: the conditioning sweep (generate, fingerprint,
//! invert), the label-sensitivity experiment, and diff-map rendering.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gan::{generate_conditioned, Generator};
use crate::image::{GrayImage, RgbImage};
use crate::psd::{psd_params, ResponseMap};
use crate::rng::mix64;

/// One row per conditioning temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub temperature: f32,
    pub t_hat_mean: f64,
    pub t_hat_std: f64,
    pub slope_mean: f64,
    pub slope_std: f64,
    pub intercept_mean: f64,
    pub intercept_std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Generate `samples_per_temp` images at each temperature, fingerprint them,
/// invert to a recovered temperature, and aggregate. Per-temperature batches
/// run in parallel; rows are emitted in input order so output is
/// scheduling-independent.
pub fn run_evaluation_sweep(
    generator: &Generator,
    map: &ResponseMap,
    temps: &[f32],
    samples_per_temp: usize,
    seed: u64,
) -> Result<EvalReport> {
    let rows = temps
        .par_iter()
        .enumerate()
        .map(|(ti, &t)| -> Result<EvalRow> {
            let batch_seed = mix64(seed ^ (ti as u64).wrapping_mul(0x9e3779b97f4a7c15));
            let images = generate_conditioned(generator, t, samples_per_temp, batch_seed)?;
            let mut slopes = Vec::with_capacity(images.len());
            let mut intercepts = Vec::with_capacity(images.len());
            let mut t_hats = Vec::with_capacity(images.len());
            for img in &images {
                // constant images (e.g. fully saturated low-T output) have
                // zero spectral power and no fingerprint; skip them
                let p = match psd_params(img) {
                    Ok(p) => p,
                    Err(Error::TooFewFitPoints(_)) => continue,
                    Err(e) => return Err(e),
                };
                slopes.push(p.slope);
                intercepts.push(p.intercept);
                t_hats.push(map.invert_temperature(p)? as f64);
            }
            let (t_hat_mean, t_hat_std) = mean_std(&t_hats);
            let (slope_mean, slope_std) = mean_std(&slopes);
            let (intercept_mean, intercept_std) = mean_std(&intercepts);
            Ok(EvalRow {
                temperature: t,
                t_hat_mean,
                t_hat_std,
                slope_mean,
                slope_std,
                intercept_mean,
                intercept_std,
                count: t_hats.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { rows })
}

impl EvalReport {
    pub fn encode_csv(&self) -> String {
        let mut out = String::from(
            "temperature,t_hat_mean,t_hat_std,slope_mean,slope_std,intercept_mean,intercept_std,count\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.temperature,
                r.t_hat_mean,
                r.t_hat_std,
                r.slope_mean,
                r.slope_std,
                r.intercept_mean,
                r.intercept_std,
                r.count
            );
        }
        out
    }

    /// Pearson correlation between conditioning T and mean recovered T,
    /// over rows that produced at least one fingerprint.
    pub fn conditioning_correlation(&self) -> f64 {
        let usable: Vec<&EvalRow> = self.rows.iter().filter(|r| r.count > 0).collect();
        let xs: Vec<f64> = usable.iter().map(|r| r.temperature as f64).collect();
        let ys: Vec<f64> = usable.iter().map(|r| r.t_hat_mean).collect();
        pearson(&xs, &ys)
    }
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Signed pixel-diff map: 0 unchanged, +1 flipped up (0 -> 255),
/// -1 flipped down.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMap {
    pub n: usize,
    pub codes: Vec<i8>,
}

impl DiffMap {
    pub fn changed_fraction(&self) -> f64 {
        let changed = self.codes.iter().filter(|&&c| c != 0).count();
        changed as f64 / self.codes.len() as f64
    }

    /// Fig-style rendering: gray unchanged, red flipped up, blue flipped down.
    pub fn to_rgb(&self) -> RgbImage {
        let pixels = self
            .codes
            .iter()
            .map(|&c| match c {
                1 => [220, 50, 50],
                -1 => [50, 50, 220],
                _ => [128, 128, 128],
            })
            .collect();
        RgbImage {
            n: self.n,
            pixels,
        }
    }
}

pub fn image_diff_map(a: &GrayImage, b: &GrayImage) -> Result<DiffMap> {
    if a.n() != b.n() {
        return Err(Error::ShapeMismatch(format!(
            "diff of {}x{} against {}x{}",
            a.n(),
            a.n(),
            b.n(),
            b.n()
        )));
    }
    let codes = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&pa, &pb)| match (pa, pb) {
            (0, 255) => 1,
            (255, 0) => -1,
            _ => 0,
        })
        .collect();
    Ok(DiffMap { n: a.n(), codes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub base_temperature: f32,
    pub epsilons: Vec<f32>,
    /// (noise seed index, epsilon, changed fraction)
    pub rows: Vec<(usize, f32, f64)>,
    pub diff_image_paths: Vec<String>,
}

impl SensitivityReport {
    pub fn encode_csv(&self) -> String {
        let mut out = String::from("seed,epsilon,changed_fraction\n");
        for (seed, eps, frac) in &self.rows {
            let _ = writeln!(out, "{seed},{eps},{frac}");
        }
        out
    }

    pub fn mean_changed_fraction(&self, epsilon: f32) -> f64 {
        let fracs: Vec<f64> = self
            .rows
            .iter()
            .filter(|(_, e, _)| *e == epsilon)
            .map(|(_, _, f)| *f)
            .collect();
        fracs.iter().sum::<f64>() / fracs.len() as f64
    }
}

/// For each noise seed: generate at base_T and at base_T + eps with the same
/// noise, diff, record the changed fraction, and emit one diff image per
/// (seed, eps) when `out_dir` is given.
pub fn run_sensitivity(
    generator: &Generator,
    base_temperature: f32,
    epsilons: &[f32],
    noise_seeds: usize,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<SensitivityReport> {
    let mut rows = Vec::new();
    let mut paths = Vec::new();
    for si in 0..noise_seeds {
        let noise_seed = mix64(seed ^ (si as u64).wrapping_mul(0x9e3779b97f4a7c15));
        let base = generate_conditioned(generator, base_temperature, 1, noise_seed)?
            .remove(0);
        for &eps in epsilons {
            let perturbed_label = base_temperature + eps;
            let perturbed =
                generate_conditioned(generator, perturbed_label, 1, noise_seed)?.remove(0);
            let diff = image_diff_map(&base, &perturbed)?;
            rows.push((si, eps, diff.changed_fraction()));
            if let Some(dir) = out_dir {
                let name = format!("diff_s{si:03}_eps{eps:e}.ppm");
                crate::image::write_ppm(&dir.join(&name), &diff.to_rgb())?;
                paths.push(name);
            }
        }
    }
    Ok(SensitivityReport {
        base_temperature,
        epsilons: epsilons.to_vec(),
        rows,
        diff_image_paths: paths,
    })
}
