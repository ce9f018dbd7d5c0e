//! Deterministic input generators shared by the criterion benchmarks.

use evio_core::imu::ImuSample;
use evio_core::Event;

/// Small xorshift generator; benchmarks only need stable, cheap filler data.
pub struct SplitMix {
    state: u64,
}

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed.wrapping_mul(0x9E3779B97F4A7C15).max(1),
        }
    }

    pub fn next_f64(&mut self) -> f64 {
        self.state ^= self.state << 13;
        self.state ^= self.state >> 7;
        self.state ^= self.state << 17;
        (self.state >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Uniform random pixel values in `[0, 1)`.
pub fn random_buffer(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = SplitMix::new(seed);
    (0..n).map(|_| rng.next_f64()).collect()
}

/// A burst of `n` events spread uniformly over the sensor.
pub fn random_events(n: usize, width: u16, height: u16, seed: u64) -> Vec<Event> {
    let mut rng = SplitMix::new(seed);
    (0..n)
        .map(|k| Event {
            t_us: k as u64,
            x: (rng.next_f64() * f64::from(width)) as u16 % width,
            y: (rng.next_f64() * f64::from(height)) as u16 % height,
            polarity: if rng.next_f64() < 0.5 { 1 } else { -1 },
        })
        .collect()
}

/// A rotating, accelerating IMU window of `n` samples at 1 kHz.
pub fn imu_window(n: usize) -> Vec<ImuSample> {
    (0..n)
        .map(|k| {
            let t = k as f64 * 1e-3;
            ImuSample {
                t_us: k as u64 * 1000,
                gyro: nalgebra_vec(0.4 * t.sin(), -0.2 * (2.0 * t).cos(), 0.1),
                accel: nalgebra_vec(0.5 * t.cos(), 0.3, 9.81 + 0.2 * t.sin()),
            }
        })
        .collect()
}

fn nalgebra_vec(x: f64, y: f64, z: f64) -> nalgebra::Vector3<f64> {
    nalgebra::Vector3::new(x, y, z)
}
