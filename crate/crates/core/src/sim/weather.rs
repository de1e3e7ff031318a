use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::topology::ConsumerSpec;

/// Shape of the synthetic outdoor temperature: an annual and a daily
/// cosine, both with their minimum at the configured hour, plus white noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherProfile {
    /// °C
    pub mean: f64,
    pub annual_amplitude: f64,
    pub daily_amplitude: f64,
    /// Hour of the year with the lowest seasonal temperature.
    pub coldest_hour: f64,
    /// Hour of the day with the lowest daily temperature.
    pub coldest_hour_of_day: f64,
    pub noise_std: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for WeatherProfile {
    fn default() -> Self {
        Self {
            mean: 8.0,
            annual_amplitude: 11.0,
            daily_amplitude: 4.0,
            coldest_hour: 480.0,
            coldest_hour_of_day: 5.0,
            noise_std: 1.5,
            min: -15.0,
            max: 35.0,
        }
    }
}

impl WeatherProfile {
    /// Noise-free temperature at `hour`, before clipping.
    pub fn deterministic(&self, hour: usize) -> f64 {
        let h = hour as f64;
        self.mean
            - self.annual_amplitude * (2.0 * PI * (h - self.coldest_hour) / 8760.0).cos()
            - self.daily_amplitude * (2.0 * PI * (h - self.coldest_hour_of_day) / 24.0).cos()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    /// Hourly ambient temperature, °C.
    pub hourly: Vec<f64>,
    pub seed: u64,
}

impl WeatherSeries {
    pub fn len(&self) -> usize {
        self.hourly.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hourly.is_empty()
    }
}

pub fn synthesize_weather(hours: usize, seed: u64, profile: &WeatherProfile) -> WeatherSeries {
    assert!(hours >= 1, "weather series needs at least one hour");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (profile.noise_std > 0.0)
        .then(|| Normal::new(0.0, profile.noise_std).expect("finite std"));
    let hourly = (0..hours)
        .map(|h| {
            let eps = noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
            (profile.deterministic(h) + eps).clamp(profile.min, profile.max)
        })
        .collect();
    WeatherSeries { hourly, seed }
}

/// Heating demand `max(coeff·area·(t_ref − T_amb), q_min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandLaw {
    /// °C
    pub t_ref: f64,
    /// kW/(m²·K)
    pub coeff: f64,
}

impl Default for DemandLaw {
    fn default() -> Self {
        Self {
            t_ref: 18.0,
            coeff: 0.05,
        }
    }
}

impl DemandLaw {
    pub fn demand(&self, consumer: &ConsumerSpec, t_amb: f64) -> f64 {
        (self.coeff * consumer.area * (self.t_ref - t_amb)).max(consumer.q_min)
    }
}

/// Hourly demand in kW, one series per consumer.
pub fn demands_from_weather(
    weather: &WeatherSeries,
    consumers: &[ConsumerSpec],
    law: &DemandLaw,
) -> Vec<Vec<f64>> {
    consumers
        .iter()
        .map(|c| weather.hourly.iter().map(|&t| law.demand(c, t)).collect())
        .collect()
}
