//! Seeded synthetic series with known statistics.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::SeriesTable;

fn table(name: &str, values: Vec<f64>) -> SeriesTable {
    let ts = (0..values.len()).map(|i| i.to_string()).collect();
    SeriesTable::new(vec![name.to_string()], ts, vec![values]).expect("single column")
}

/// Two sinusoids plus white noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Sines {
    pub amplitudes: [f64; 2],
    pub periods: [f64; 2],
    pub phases: [f64; 2],
    /// Noise standard deviation.
    pub sigma: f64,
}

impl Sines {
    /// Amplitudes 1 and ½, periods 24 and 55, random phases, and noise at
    /// `noise_ratio` times the standard deviation of the clean signal.
    pub fn seeded(seed: u64, noise_ratio: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amplitudes = [1.0, 0.5];
        let signal_std = (amplitudes.iter().map(|a| a * a / 2.0).sum::<f64>()).sqrt();
        Sines {
            amplitudes,
            periods: [24.0, 55.0],
            phases: [rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)],
            sigma: noise_ratio * signal_std,
        }
    }

    pub fn clean(&self, t: f64) -> f64 {
        (0..2).map(|i| self.amplitudes[i] * (2.0 * PI * t / self.periods[i] + self.phases[i]).sin()).sum()
    }

    pub fn generate(&self, len: usize, seed: u64) -> SeriesTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_51de);
        let noise = Normal::new(0.0, self.sigma.max(0.0)).expect("finite sigma");
        table("OT", (0..len).map(|t| self.clean(t as f64) + noise.sample(&mut rng)).collect())
    }

    /// Long-run mean squared error of repeating the last observation `h`
    /// steps ahead: `Σ aᵢ²(1 − cos ωᵢh) + 2σ²`.
    pub fn persistence_mse(&self, h: usize) -> f64 {
        let h = h as f64;
        (0..2).map(|i| self.amplitudes[i].powi(2) * (1.0 - (2.0 * PI * h / self.periods[i]).cos())).sum::<f64>()
            + 2.0 * self.sigma * self.sigma
    }

    /// Average of [`Self::persistence_mse`] over horizons `1..=horizon`.
    pub fn persistence_mse_over(&self, horizon: usize) -> f64 {
        (1..=horizon).map(|h| self.persistence_mse(h)).sum::<f64>() / horizon as f64
    }

    pub fn variance(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a / 2.0).sum::<f64>() + self.sigma * self.sigma
    }
}

/// A series that alternates between two autoregressive regimes every
/// `segment` steps: a fast oscillation and a slow, strongly persistent
/// drift. The switch is not announced, so a forecaster must recognise the
/// regime from the shape of recent patches.
pub fn regime_switching(len: usize, segment: usize, seed: u64) -> SeriesTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let segment = segment.max(1);
    let (mut x1, mut x2) = (0.0f64, 0.0f64);
    let mut out = Vec::with_capacity(len);
    for t in 0..len {
        let e: f64 = rng.sample(StandardNormal);
        let x = if (t / segment).is_multiple_of(2) {
            // AR(2) with complex roots: period ≈ 8, modulus 0.95.
            2.0 * 0.95 * (2.0 * PI / 8.0).cos() * x1 - 0.95 * 0.95 * x2 + 0.3 * e
        } else {
            0.97 * x1 + 0.1 * e
        };
        x2 = x1;
        x1 = x;
        out.push(x);
    }
    table("OT", out)
}

/// Gaussian random walk with step standard deviation `sigma`.
pub fn random_walk(len: usize, sigma: f64, seed: u64) -> SeriesTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = 0.0;
    table(
        "OT",
        (0..len)
            .map(|_| {
                x += sigma * rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect(),
    )
}
