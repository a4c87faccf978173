//! Power-spectral-density fingerprinting of microstructure images.
//!
//! Pixels are mapped to spins (+-1), the mean is subtracted, a 2D DFT is
//! taken (unnormalized convention: X[k] = sum x[n] e^{-2 pi i k n / N}), and
//! the radially averaged squared magnitude is fit by a line in log-log space.
//! The (slope, intercept) pair is the two-parameter fingerprint.

use std::fmt::Write as _;
use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Debug, Clone, PartialEq)]
pub struct PsdCurve {
    /// Radial bin centers in cycles per image, strictly increasing.
    pub wavenumbers: Vec<f64>,
    /// Mean power per bin, nonnegative.
    pub power: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdParams {
    pub slope: f64,
    /// Intercept of the log-log fit, in log10-power units.
    pub intercept: f64,
}

/// Squared-magnitude 2D DFT of the centered spin field.
pub fn power_spectrum(image: &GrayImage) -> Result<Vec<f64>> {
    let n = image.n();
    if n < 4 {
        return Err(Error::ImageTooSmall(n));
    }
    // pixels -> spins +-1, then center
    let spins: Vec<f64> = image
        .pixels()
        .iter()
        .map(|&p| if p > 127 { 1.0 } else { -1.0 })
        .collect();
    let mean = spins.iter().sum::<f64>() / spins.len() as f64;
    let mut field: Vec<Complex<f64>> = spins
        .iter()
        .map(|&s| Complex::new(s - mean, 0.0))
        .collect();
    fft_2d(n, &mut field);
    Ok(field.iter().map(|c| c.norm_sqr()).collect())
}

/// In-place 2D DFT of a row-major n x n buffer: rows first, then columns.
fn fft_2d(n: usize, data: &mut [Complex<f64>]) {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = data[r * n + c];
        }
        fft.process(&mut col);
        for r in 0..n {
            data[r * n + c] = col[r];
        }
    }
}

/// Isotropic reduction: each entry is assigned to the integer ring
/// r = round(sqrt(kx^2 + ky^2)) using centered frequencies, rings 1..=n/2,
/// power averaged over ring members. Empty rings are dropped.
pub fn radial_average(power2d: &[f64], n: usize) -> Result<PsdCurve> {
    if power2d.len() != n * n {
        return Err(Error::ShapeMismatch(format!(
            "power array has {} entries, expected {}",
            power2d.len(),
            n * n
        )));
    }
    let max_bin = n / 2;
    let mut sums = vec![0.0f64; max_bin + 1];
    let mut counts = vec![0usize; max_bin + 1];
    for i in 0..n {
        let ky = centered_freq(i, n);
        for j in 0..n {
            let kx = centered_freq(j, n);
            let r = ((kx * kx + ky * ky) as f64).sqrt().round() as usize;
            if (1..=max_bin).contains(&r) {
                sums[r] += power2d[i * n + j];
                counts[r] += 1;
            }
        }
    }
    let mut wavenumbers = Vec::with_capacity(max_bin);
    let mut power = Vec::with_capacity(max_bin);
    for r in 1..=max_bin {
        if counts[r] > 0 {
            wavenumbers.push(r as f64);
            power.push(sums[r] / counts[r] as f64);
        }
    }
    Ok(PsdCurve { wavenumbers, power })
}

#[inline]
fn centered_freq(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Ordinary least squares of log10(power) on log10(wavenumber) over bins with
/// strictly positive power. Optional [kmin, kmax] restriction of the fit range.
pub fn loglog_fit_range(
    curve: &PsdCurve,
    kmin: Option<f64>,
    kmax: Option<f64>,
) -> Result<PsdParams> {
    let lo = kmin.unwrap_or(f64::NEG_INFINITY);
    let hi = kmax.unwrap_or(f64::INFINITY);
    let pts: Vec<(f64, f64)> = curve
        .wavenumbers
        .iter()
        .zip(&curve.power)
        .filter(|&(&k, &p)| p > 0.0 && k >= lo && k <= hi)
        .map(|(&k, &p)| (k.log10(), p.log10()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::TooFewFitPoints(pts.len()));
    }
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = m * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::TooFewFitPoints(pts.len()));
    }
    let slope = (m * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / m;
    Ok(PsdParams { slope, intercept })
}

pub fn loglog_fit(curve: &PsdCurve) -> Result<PsdParams> {
    loglog_fit_range(curve, None, None)
}

/// Full pipeline: image -> (slope, intercept).
pub fn psd_params(image: &GrayImage) -> Result<PsdParams> {
    let spectrum = power_spectrum(image)?;
    let curve = radial_average(&spectrum, image.n())?;
    loglog_fit(&curve)
}

pub fn encode_curve_csv(curve: &PsdCurve) -> String {
    let mut out = String::from("k,power\n");
    for (k, p) in curve.wavenumbers.iter().zip(&curve.power) {
        let _ = writeln!(out, "{k},{p}");
    }
    out
}

/// Calibration table: temperature -> mean/std of (slope, intercept).
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    pub temperatures: Vec<f32>,
    pub mean_slope: Vec<f64>,
    pub mean_intercept: Vec<f64>,
    pub std_slope: Vec<f64>,
    pub std_intercept: Vec<f64>,
}

/// Per-temperature mean and population std of the fingerprints.
/// Knots are returned in increasing temperature order.
pub fn build_response_map(samples: &[(f32, PsdParams)]) -> Result<ResponseMap> {
    let mut by_temp: Vec<(f32, Vec<PsdParams>)> = Vec::new();
    for &(t, p) in samples {
        match by_temp.iter_mut().find(|(bt, _)| *bt == t) {
            Some((_, v)) => v.push(p),
            None => by_temp.push((t, vec![p])),
        }
    }
    if by_temp.len() < 2 || by_temp.iter().any(|(_, v)| v.len() < 2) {
        return Err(Error::InsufficientCalibration);
    }
    by_temp.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut map = ResponseMap {
        temperatures: Vec::new(),
        mean_slope: Vec::new(),
        mean_intercept: Vec::new(),
        std_slope: Vec::new(),
        std_intercept: Vec::new(),
    };
    for (t, params) in by_temp {
        let m = params.len() as f64;
        let ms = params.iter().map(|p| p.slope).sum::<f64>() / m;
        let mi = params.iter().map(|p| p.intercept).sum::<f64>() / m;
        let vs = params.iter().map(|p| (p.slope - ms).powi(2)).sum::<f64>() / m;
        let vi = params
            .iter()
            .map(|p| (p.intercept - mi).powi(2))
            .sum::<f64>()
            / m;
        map.temperatures.push(t);
        map.mean_slope.push(ms);
        map.mean_intercept.push(mi);
        map.std_slope.push(vs.sqrt());
        map.std_intercept.push(vi.sqrt());
    }
    Ok(map)
}

impl ResponseMap {
    /// Feature scales used for standardized distances: the population std of
    /// the knot means per feature. A feature with zero spread gets scale 1 so
    /// it does not dominate; a map with zero spread in both is degenerate.
    fn feature_scales(&self) -> Result<(f64, f64)> {
        let spread = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
        };
        let ss = spread(&self.mean_slope);
        let si = spread(&self.mean_intercept);
        if ss == 0.0 && si == 0.0 {
            return Err(Error::DegenerateMap);
        }
        Ok((
            if ss > 0.0 { ss } else { 1.0 },
            if si > 0.0 { si } else { 1.0 },
        ))
    }

    /// Map a fingerprint back to temperature: the parameter of the closest
    /// point on the piecewise-linear curve (mean_slope(T), mean_intercept(T))
    /// in standardized Euclidean distance, clamped to [min knot, max knot].
    pub fn invert_temperature(&self, params: PsdParams) -> Result<f32> {
        let (ss, si) = self.feature_scales()?;
        let qx = params.slope / ss;
        let qy = params.intercept / si;
        let mut best = (f64::INFINITY, self.temperatures[0] as f64);
        for seg in 0..self.temperatures.len() - 1 {
            let ax = self.mean_slope[seg] / ss;
            let ay = self.mean_intercept[seg] / si;
            let bx = self.mean_slope[seg + 1] / ss;
            let by = self.mean_intercept[seg + 1] / si;
            let (dx, dy) = (bx - ax, by - ay);
            let len2 = dx * dx + dy * dy;
            let u = if len2 > 0.0 {
                (((qx - ax) * dx + (qy - ay) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (px, py) = (ax + u * dx, ay + u * dy);
            let d2 = (qx - px).powi(2) + (qy - py).powi(2);
            if d2 < best.0 {
                let ta = self.temperatures[seg] as f64;
                let tb = self.temperatures[seg + 1] as f64;
                best = (d2, ta + u * (tb - ta));
            }
        }
        let (lo, hi) = (
            self.temperatures[0] as f64,
            *self.temperatures.last().unwrap() as f64,
        );
        Ok(best.1.clamp(lo, hi) as f32)
    }

    pub fn encode_csv(&self) -> String {
        let mut out = String::from("temperature,mean_slope,mean_intercept,std_slope,std_intercept\n");
        for i in 0..self.temperatures.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.temperatures[i],
                self.mean_slope[i],
                self.mean_intercept[i],
                self.std_slope[i],
                self.std_intercept[i]
            );
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h)
                if h.trim() == "temperature,mean_slope,mean_intercept,std_slope,std_intercept" => {}
            _ => return Err(Error::ManifestFormat("bad response map header".into())),
        }
        let mut map = ResponseMap {
            temperatures: Vec::new(),
            mean_slope: Vec::new(),
            mean_intercept: Vec::new(),
            std_slope: Vec::new(),
            std_intercept: Vec::new(),
        };
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::ManifestFormat(format!(
                    "response map line {}: expected 5 fields",
                    lineno + 2
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                let v: f64 = s.trim().parse().map_err(|_| {
                    Error::ManifestFormat(format!("response map line {}: bad number", lineno + 2))
                })?;
                if !v.is_finite() {
                    return Err(Error::ManifestFormat(format!(
                        "response map line {}: non-finite value",
                        lineno + 2
                    )));
                }
                Ok(v)
            };
            let t = parse(fields[0])? as f32;
            if t <= 0.0 {
                return Err(Error::ManifestFormat(format!(
                    "response map line {}: temperature must be positive",
                    lineno + 2
                )));
            }
            map.temperatures.push(t);
            map.mean_slope.push(parse(fields[1])?);
            map.mean_intercept.push(parse(fields[2])?);
            let ss = parse(fields[3])?;
            let si = parse(fields[4])?;
            if ss < 0.0 || si < 0.0 {
                return Err(Error::ManifestFormat(format!(
                    "response map line {}: negative std",
                    lineno + 2
                )));
            }
            map.std_slope.push(ss);
            map.std_intercept.push(si);
        }
        if map.temperatures.len() < 2 {
            return Err(Error::InsufficientCalibration);
        }
        if map.temperatures.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ManifestFormat(
                "response map temperatures must be strictly increasing".into(),
            ));
        }
        Ok(map)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::parse_csv(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::GrayImage;

    fn image_from_spins(n: usize, spins: &[f64]) -> GrayImage {
        let px = spins
            .iter()
            .map(|&s| if s > 0.0 { 255 } else { 0 })
            .collect();
        GrayImage::new(n, px).unwrap()
    }

    #[test]
    fn constant_image_zero_power() {
        let img = GrayImage::new(8, vec![255; 64]).unwrap();
        let p = power_spectrum(&img).unwrap();
        assert!(p.iter().all(|&v| v < 1e-18));
    }

    #[test]
    fn pure_tone_two_peaks() {
        // horizontal square-wave at frequency k = 2 on an 8x8 grid:
        // spins s(x) = +1 for cos >= 0. Use a true +-1 cosine sign pattern of
        // period 4 so the field is exactly cos-like? A +-1 square wave has
        // harmonics; instead check a +-1 pattern alternating every column
        // (frequency n/2) which is an exact single tone.
        let n = 8;
        let spins: Vec<f64> = (0..n * n)
            .map(|i| if (i % n) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let img = image_from_spins(n, &spins);
        let p = power_spectrum(&img).unwrap();
        let nonzero: Vec<usize> = p
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 1e-9)
            .map(|(i, _)| i)
            .collect();
        // single tone at kx = n/2 = 4, ky = 0 (its own conjugate on the grid)
        assert_eq!(nonzero, vec![4]);
        assert!((p[4] - (n * n) as f64 * (n * n) as f64).abs() < 1e-6);

        // period-4 column pattern: a shifted cosine at k = 2 with exactly
        // two nonzero entries, at +2 and -2 (index n - 2)
        let spins: Vec<f64> = (0..n * n)
            .map(|i| if (i % n) % 4 < 2 { 1.0 } else { -1.0 })
            .collect();
        let img = image_from_spins(n, &spins);
        let p = power_spectrum(&img).unwrap();
        let nonzero: Vec<usize> = p
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 1e-9)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(nonzero, vec![2, n - 2]);
    }

    #[test]
    fn parseval_holds() {
        let mut rng = crate::rng::Rng::seed_from_u64(21);
        for _ in 0..20 {
            let n = 8;
            let lat = crate::ising::SpinLattice::random(n, &mut rng).unwrap();
            let img = crate::image::lattice_to_image(&lat);
            let spins: Vec<f64> = lat.spins().iter().map(|&s| s as f64).collect();
            let mean = spins.iter().sum::<f64>() / spins.len() as f64;
            let ssq: f64 = spins.iter().map(|s| (s - mean).powi(2)).sum();
            let p = power_spectrum(&img).unwrap();
            let total: f64 = p.iter().sum();
            let expected = (n * n) as f64 * ssq;
            assert!(
                (total - expected).abs() <= 1e-6 * expected.max(1.0),
                "parseval: {total} vs {expected}"
            );
        }
    }

    #[test]
    fn radial_average_constant() {
        let n = 8;
        let p2 = vec![3.5; n * n];
        let curve = radial_average(&p2, n).unwrap();
        assert!(curve.power.iter().all(|&p| (p - 3.5).abs() < 1e-12));
        assert_eq!(curve.wavenumbers.len(), n / 2);
        assert!(curve.wavenumbers.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn radial_average_single_ring() {
        // brute-force ring construction: set power only where round(|k|) == 3
        let n = 16;
        let mut p2 = vec![0.0; n * n];
        let mut members = 0;
        for i in 0..n {
            for j in 0..n {
                let ky = centered_freq(i, n);
                let kx = centered_freq(j, n);
                let r = ((kx * kx + ky * ky) as f64).sqrt().round() as i64;
                if r == 3 {
                    p2[i * n + j] = 2.0;
                    members += 1;
                }
            }
        }
        assert!(members > 0);
        let curve = radial_average(&p2, n).unwrap();
        for (k, p) in curve.wavenumbers.iter().zip(&curve.power) {
            if (*k - 3.0).abs() < 1e-12 {
                assert!((p - 2.0).abs() < 1e-12);
            } else {
                assert_eq!(*p, 0.0);
            }
        }
    }

    #[test]
    fn fit_exact_power_laws() {
        let ks: Vec<f64> = (1..=16).map(|k| k as f64).collect();
        let curve = PsdCurve {
            wavenumbers: ks.clone(),
            power: ks.iter().map(|k| k.powi(-2)).collect(),
        };
        let p = loglog_fit(&curve).unwrap();
        assert!((p.slope + 2.0).abs() < 1e-9);
        assert!(p.intercept.abs() < 1e-9);

        let flat = PsdCurve {
            wavenumbers: ks.clone(),
            power: vec![1e3; 16],
        };
        let p = loglog_fit(&flat).unwrap();
        assert!(p.slope.abs() < 1e-9);
        assert!((p.intercept - 3.0).abs() < 1e-9);

        let line = PsdCurve {
            wavenumbers: ks.clone(),
            power: ks.iter().map(|k| 1e3 / k).collect(),
        };
        let p = loglog_fit(&line).unwrap();
        assert!((p.slope + 1.0).abs() < 1e-9);
        assert!((p.intercept - 3.0).abs() < 1e-9);
    }

    #[test]
    fn fit_needs_two_positive_bins() {
        let curve = PsdCurve {
            wavenumbers: vec![1.0, 2.0, 3.0],
            power: vec![0.0, 5.0, 0.0],
        };
        assert!(matches!(
            loglog_fit(&curve),
            Err(Error::TooFewFitPoints(1))
        ));
    }

    #[test]
    fn rotation_invariance() {
        let mut rng = crate::rng::Rng::seed_from_u64(8);
        let lat = crate::ising::SpinLattice::random(16, &mut rng).unwrap();
        let img = crate::image::lattice_to_image(&lat);
        let n = 16;
        // rotate 90 degrees
        let mut rot = vec![0u8; n * n];
        for r in 0..n {
            for c in 0..n {
                rot[c * n + (n - 1 - r)] = img.pixels()[r * n + c];
            }
        }
        let rimg = GrayImage::new(n, rot).unwrap();
        let a = radial_average(&power_spectrum(&img).unwrap(), n).unwrap();
        let b = radial_average(&power_spectrum(&rimg).unwrap(), n).unwrap();
        assert_eq!(a.wavenumbers, b.wavenumbers);
        for (x, y) in a.power.iter().zip(&b.power) {
            assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn response_map_build_and_order() {
        let samples = vec![
            (3.0_f32, PsdParams { slope: -1.0, intercept: 2.0 }),
            (3.0, PsdParams { slope: -1.2, intercept: 2.2 }),
            (1.0, PsdParams { slope: -3.0, intercept: 4.0 }),
            (1.0, PsdParams { slope: -3.0, intercept: 4.0 }),
        ];
        let map = build_response_map(&samples).unwrap();
        assert_eq!(map.temperatures, vec![1.0, 3.0]);
        assert_eq!(map.std_slope[0], 0.0);
        assert!((map.mean_slope[1] + 1.1).abs() < 1e-12);
    }

    #[test]
    fn inversion_behaviour() {
        let samples = vec![
            (1.0_f32, PsdParams { slope: -3.0, intercept: 4.0 }),
            (1.0, PsdParams { slope: -3.1, intercept: 4.1 }),
            (2.0, PsdParams { slope: -2.0, intercept: 3.0 }),
            (2.0, PsdParams { slope: -2.1, intercept: 3.1 }),
            (3.0, PsdParams { slope: -1.0, intercept: 2.0 }),
            (3.0, PsdParams { slope: -1.1, intercept: 2.1 }),
        ];
        let map = build_response_map(&samples).unwrap();
        // exactly at a knot mean
        let t = map
            .invert_temperature(PsdParams { slope: -2.05, intercept: 3.05 })
            .unwrap();
        assert!((t - 2.0).abs() < 1e-6);
        // midpoint of a segment: between the T=2 mean (-2.05, 3.05) and the
        // T=3 mean (-1.05, 2.05)
        let t = map
            .invert_temperature(PsdParams { slope: -1.55, intercept: 2.55 })
            .unwrap();
        assert!((t - 2.5).abs() < 1e-6);
        // far beyond the last knot clamps
        let t = map
            .invert_temperature(PsdParams { slope: 5.0, intercept: -5.0 })
            .unwrap();
        assert_eq!(t, 3.0);
    }

    #[test]
    fn response_map_csv_roundtrip() {
        let samples = vec![
            (1.0_f32, PsdParams { slope: -3.0, intercept: 4.0 }),
            (1.0, PsdParams { slope: -3.1, intercept: 4.1 }),
            (2.0, PsdParams { slope: -2.0, intercept: 3.0 }),
            (2.0, PsdParams { slope: -2.1, intercept: 3.1 }),
        ];
        let map = build_response_map(&samples).unwrap();
        let parsed = ResponseMap::parse_csv(&map.encode_csv()).unwrap();
        assert_eq!(map, parsed);
        assert!(ResponseMap::parse_csv("garbage").is_err());
    }
}
