//! 2D Ising model with Metropolis Monte Carlo dynamics.
//!
//! Reduced units throughout: coupling J = 1, external field h = 0, k_B = 1.
//! A "step" is one proposed single-site flip; the default budget is n^3 steps.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Curie temperature of the square-lattice Ising model, 2 / ln(1 + sqrt(2)).
pub fn critical_temperature() -> f64 {
    2.0 / (1.0 + std::f64::consts::SQRT_2).ln()
}

/// An n x n lattice of +-1 spins with periodic boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinLattice {
    n: usize,
    spins: Vec<i8>,
}

impl SpinLattice {
    pub fn new(n: usize, spins: Vec<i8>) -> Result<Self> {
        if n < 2 {
            return Err(Error::LatticeTooSmall(n));
        }
        if spins.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "expected {} spins, got {}",
                n * n,
                spins.len()
            )));
        }
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::ShapeMismatch(
                "spins must be exactly +1 or -1".into(),
            ));
        }
        Ok(SpinLattice { n, spins })
    }

    pub fn uniform(n: usize, spin: i8) -> Result<Self> {
        SpinLattice::new(n, vec![spin; n * n])
    }

    pub fn random(n: usize, rng: &mut Rng) -> Result<Self> {
        if n < 2 {
            return Err(Error::LatticeTooSmall(n));
        }
        let spins = (0..n * n).map(|_| rng.next_spin()).collect();
        Ok(SpinLattice { n, spins })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.spins[row * self.n + col]
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// Sum of the four periodic nearest neighbors of (row, col).
    #[inline]
    fn neighbor_sum(&self, row: usize, col: usize) -> i32 {
        let n = self.n;
        let up = self.spins[((row + n - 1) % n) * n + col] as i32;
        let down = self.spins[((row + 1) % n) * n + col] as i32;
        let left = self.spins[row * n + (col + n - 1) % n] as i32;
        let right = self.spins[row * n + (col + 1) % n] as i32;
        up + down + left + right
    }

    /// H = -sum over the 2n^2 distinct nearest-neighbor bonds, each counted once.
    pub fn total_energy(&self) -> i64 {
        let n = self.n;
        let mut h = 0i64;
        for row in 0..n {
            for col in 0..n {
                let s = self.spins[row * n + col] as i64;
                let right = self.spins[row * n + (col + 1) % n] as i64;
                let down = self.spins[((row + 1) % n) * n + col] as i64;
                h -= s * (right + down);
            }
        }
        h
    }

    /// Energy change from flipping the spin at (row, col):
    /// dE = 2 * s * (sum of the four neighbors).
    pub fn local_delta_energy(&self, row: usize, col: usize) -> Result<i32> {
        if row >= self.n || col >= self.n {
            return Err(Error::IndexOutOfRange {
                row,
                col,
                n: self.n,
            });
        }
        let s = self.spins[row * self.n + col] as i32;
        Ok(2 * s * self.neighbor_sum(row, col))
    }

    /// Mean spin, in [-1, +1].
    pub fn magnetization(&self) -> f64 {
        let sum: i64 = self.spins.iter().map(|&s| s as i64).sum();
        sum as f64 / (self.n * self.n) as f64
    }

    #[inline]
    fn flip(&mut self, idx: usize) {
        self.spins[idx] = -self.spins[idx];
    }
}

#[derive(Debug, Clone)]
pub struct SimParams {
    pub n: usize,
    /// Temperature in reduced units; must be finite and strictly positive.
    pub temperature: f32,
    pub max_steps: u64,
    pub seed: u64,
}

impl SimParams {
    /// Defaults: max_steps = n^3 so every site is visited ~n times.
    pub fn new(n: usize, temperature: f32, seed: u64) -> Self {
        SimParams {
            n,
            temperature,
            max_steps: (n * n * n) as u64,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::LatticeTooSmall(self.n));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::InvalidTemperature(self.temperature));
        }
        if self.max_steps < 1 {
            return Err(Error::Config("max_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Run max_steps single-site Metropolis updates from a random initial lattice.
///
/// Acceptance rule: a proposed flip with dE <= 0 is always accepted and
/// consumes no uniform draw; a flip with dE > 0 consumes exactly one uniform
/// in [0, 1) and is accepted when u < exp(-dE / T). This draw-skipping is
/// part of the deterministic contract.
pub fn run_simulation(params: &SimParams) -> Result<SpinLattice> {
    params.validate()?;
    let mut rng = Rng::seed_from_u64(params.seed);
    let lattice = SpinLattice::random(params.n, &mut rng)?;
    metropolis(lattice, params.temperature, params.max_steps, &mut rng)
}

/// Same dynamics as [`run_simulation`], starting from a caller-supplied lattice.
pub fn run_simulation_from(
    initial: SpinLattice,
    params: &SimParams,
) -> Result<SpinLattice> {
    params.validate()?;
    if initial.n() != params.n {
        return Err(Error::ShapeMismatch(format!(
            "initial lattice is {}x{} but params.n = {}",
            initial.n(),
            initial.n(),
            params.n
        )));
    }
    let mut rng = Rng::seed_from_u64(params.seed);
    metropolis(initial, params.temperature, params.max_steps, &mut rng)
}

fn metropolis(
    mut lattice: SpinLattice,
    temperature: f32,
    steps: u64,
    rng: &mut Rng,
) -> Result<SpinLattice> {
    let n = lattice.n();
    let beta = 1.0 / temperature as f64;
    // dE for a single flip is one of {-8, -4, 0, 4, 8}; precompute the two
    // uphill acceptance probabilities.
    let accept = [(-(4.0) * beta).exp(), (-(8.0) * beta).exp()];
    let sites = (n * n) as u64;
    for _ in 0..steps {
        let idx = rng.next_below(sites) as usize;
        let (row, col) = (idx / n, idx % n);
        let de = lattice.local_delta_energy(row, col)?;
        if de <= 0 {
            lattice.flip(idx);
        } else {
            let p = accept[(de / 4 - 1) as usize];
            if rng.next_f64() < p {
                lattice.flip(idx);
            }
        }
    }
    Ok(lattice)
}

/// Metropolis sampler that records the visited state after every step.
/// Used by the exact-Boltzmann validation on tiny lattices.
pub fn sample_chain<F: FnMut(&SpinLattice)>(
    params: &SimParams,
    burn_in: u64,
    mut visit: F,
) -> Result<()> {
    params.validate()?;
    let mut rng = Rng::seed_from_u64(params.seed);
    let mut lattice = SpinLattice::random(params.n, &mut rng)?;
    let n = params.n;
    let beta = 1.0 / params.temperature as f64;
    let accept = [(-(4.0) * beta).exp(), (-(8.0) * beta).exp()];
    let sites = (n * n) as u64;
    for step in 0..burn_in + params.max_steps {
        let idx = rng.next_below(sites) as usize;
        let (row, col) = (idx / n, idx % n);
        let de = lattice.local_delta_energy(row, col)?;
        if de <= 0 || rng.next_f64() < accept[(de / 4 - 1) as usize] {
            lattice.flip(idx);
        }
        if step >= burn_in {
            visit(&lattice);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkerboard(n: usize) -> SpinLattice {
        let spins = (0..n * n)
            .map(|i| {
                let (r, c) = (i / n, i % n);
                if (r + c) % 2 == 0 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        SpinLattice::new(n, spins).unwrap()
    }

    #[test]
    fn tc_value() {
        let tc = critical_temperature();
        assert!((tc - 2.269185).abs() < 1e-5, "tc = {tc}");
        // intermediate: ln(1 + sqrt(2))
        let l = (1.0 + std::f64::consts::SQRT_2).ln();
        assert!((l - 0.881374).abs() < 5e-7, "ln(1+sqrt2) = {l}");
    }

    #[test]
    fn energy_all_up() {
        let l = SpinLattice::uniform(4, 1).unwrap();
        assert_eq!(l.total_energy(), -32);
    }

    #[test]
    fn energy_checkerboard() {
        assert_eq!(checkerboard(4).total_energy(), 32);
    }

    #[test]
    fn energy_one_flip() {
        let mut spins = vec![1i8; 16];
        spins[5] = -1;
        let l = SpinLattice::new(4, spins).unwrap();
        assert_eq!(l.total_energy(), -24);
    }

    #[test]
    fn delta_energy_cases() {
        let up = SpinLattice::uniform(4, 1).unwrap();
        assert_eq!(up.local_delta_energy(1, 1).unwrap(), 8);

        // site with 2 up / 2 down neighbors
        let mut spins = vec![1i8; 16];
        spins[1] = -1; // up neighbor of (1,1)
        spins[9] = -1; // down neighbor of (1,1)
        let l = SpinLattice::new(4, spins).unwrap();
        assert_eq!(l.local_delta_energy(1, 1).unwrap(), 0);

        // lone down spin flipping back up
        let mut spins = vec![1i8; 16];
        spins[5] = -1;
        let l = SpinLattice::new(4, spins).unwrap();
        assert_eq!(l.local_delta_energy(1, 1).unwrap(), -8);
    }

    #[test]
    fn delta_energy_out_of_range() {
        let l = SpinLattice::uniform(4, 1).unwrap();
        assert!(l.local_delta_energy(4, 0).is_err());
    }

    #[test]
    fn delta_matches_total_energy() {
        let mut rng = Rng::seed_from_u64(314);
        for _ in 0..1000 {
            let n = 2 + rng.next_below(7) as usize;
            let mut l = SpinLattice::random(n, &mut rng).unwrap();
            let row = rng.next_below(n as u64) as usize;
            let col = rng.next_below(n as u64) as usize;
            let before = l.total_energy();
            let de = l.local_delta_energy(row, col).unwrap();
            l.flip(row * n + col);
            assert_eq!(l.total_energy() - before, de as i64);
        }
    }

    #[test]
    fn energy_bounds() {
        let mut rng = Rng::seed_from_u64(7);
        for _ in 0..50 {
            let l = SpinLattice::random(8, &mut rng).unwrap();
            let e = l.total_energy();
            assert!((-128..=128).contains(&e));
        }
    }

    #[test]
    fn magnetization_cases() {
        assert_eq!(SpinLattice::uniform(4, 1).unwrap().magnetization(), 1.0);
        assert_eq!(SpinLattice::uniform(4, -1).unwrap().magnetization(), -1.0);
        assert_eq!(checkerboard(4).magnetization(), 0.0);
    }

    #[test]
    fn cold_start_stays_ordered() {
        let params = SimParams::new(16, 0.1, 11);
        let initial = SpinLattice::uniform(16, 1).unwrap();
        let out = run_simulation_from(initial, &params).unwrap();
        assert!(out.magnetization().abs() >= 0.99);
    }

    #[test]
    fn hot_lattice_disordered() {
        // At T = 100 spins are nearly i.i.d.; |M| should be small on average.
        let mut total = 0.0;
        for seed in 0..50u64 {
            let params = SimParams::new(64, 100.0, seed);
            let out = run_simulation(&params).unwrap();
            total += out.magnetization().abs();
        }
        assert!(total / 50.0 < 0.1, "mean |M| = {}", total / 50.0);
    }

    #[test]
    fn simulation_deterministic() {
        let params = SimParams::new(16, 2.5, 12345);
        let a = run_simulation(&params).unwrap();
        let b = run_simulation(&params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_temperature_rejected() {
        let params = SimParams::new(8, 0.0, 1);
        assert!(matches!(
            run_simulation(&params),
            Err(Error::InvalidTemperature(_))
        ));
    }
}
