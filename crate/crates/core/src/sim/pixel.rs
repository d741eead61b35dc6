//! Frame-to-event conversion with a per-pixel log-intensity threshold model.
//!
//! Each pixel tracks `L = ln(I + eps)` and a reference level. Between two
//! frames `L` is taken to move linearly; every time it moves a full
//! threshold away from the reference an event is emitted at the
//! interpolated crossing time and the reference steps by one threshold.
//! Sub-threshold change carries over to the next frame pair.
//!
//! Noise events follow a Poisson process per pixel with rate
//! `leak_rate_hz + shot_noise_scale · (1 − I)`, so darker pixels are
//! noisier, with random polarity. Listed hot pixels fire at an extra
//! fixed rate. Every pixel draws from its own ChaCha stream keyed by the
//! seed and pixel index, so output is deterministic and independent of
//! thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::event::{Event, EventStream, Polarity};

use super::frames::FrameSequence;
use super::SimError;

/// Slack (log units) when testing for a full threshold crossing.
pub const CROSSING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PixelModelParams {
    pub theta_pos: f64,
    pub theta_neg: f64,
    pub leak_rate_hz: f64,
    pub shot_noise_scale: f64,
    pub eps: f64,
    pub seed: u64,
    pub hot_pixels: Vec<(u16, u16)>,
    pub hot_rate_hz: f64,
}

impl Default for PixelModelParams {
    fn default() -> Self {
        Self {
            theta_pos: 0.2,
            theta_neg: 0.2,
            leak_rate_hz: 0.1,
            shot_noise_scale: 1.0,
            eps: 1e-3,
            seed: 0,
            hot_pixels: Vec::new(),
            hot_rate_hz: 100.0,
        }
    }
}

impl PixelModelParams {
    /// Noise-free model with symmetric threshold.
    pub fn noiseless(theta: f64) -> Self {
        Self {
            theta_pos: theta,
            theta_neg: theta,
            leak_rate_hz: 0.0,
            shot_noise_scale: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: String| Err(SimError::InvalidParam(what));
        if !(self.theta_pos > 0.0 && self.theta_neg > 0.0) {
            return bad(format!(
                "thresholds must be positive ({}, {})",
                self.theta_pos, self.theta_neg
            ));
        }
        if !(self.leak_rate_hz >= 0.0 && self.shot_noise_scale >= 0.0 && self.hot_rate_hz >= 0.0) {
            return bad("noise rates must be non-negative".into());
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps {} outside (0, 1)", self.eps));
        }
        Ok(())
    }

    /// Expected noise rate (Hz) for a pixel of intensity `intensity`.
    pub fn noise_rate_hz(&self, intensity: f64) -> f64 {
        self.leak_rate_hz + self.shot_noise_scale * (1.0 - intensity.clamp(0.0, 1.0))
    }
}

pub fn frames_to_events(f: &FrameSequence, p: &PixelModelParams) -> Result<EventStream, SimError> {
    p.validate()?;
    if f.len() < 2 {
        return Err(SimError::EmptySequence);
    }
    let geometry = f.geometry();
    for &(x, y) in &p.hot_pixels {
        if !geometry.contains(x, y) {
            return Err(SimError::InvalidParam(format!(
                "hot pixel ({x}, {y}) outside {geometry}"
            )));
        }
    }
    let mut hot = vec![false; geometry.pixels()];
    for &(x, y) in &p.hot_pixels {
        hot[geometry.index(x, y)] = true;
    }
    let times: Vec<f64> = (0..f.len()).map(|i| f.frame_time_us(i)).collect();
    let width = geometry.width();

    let per_pixel: Vec<Vec<Event>> = (0..geometry.pixels())
        .into_par_iter()
        .map(|pix| {
            let x = (pix % width) as u16;
            let y = (pix / width) as u16;
            pixel_events(f, p, &times, pix, x, y, hot[pix])
        })
        .collect();

    let mut events: Vec<Event> = per_pixel.into_iter().flatten().collect();
    events.sort_unstable_by_key(|e| (e.t, e.y, e.x, e.polarity));
    EventStream::new(geometry, events).map_err(|e| SimError::Internal(e.to_string()))
}

fn pixel_events(
    f: &FrameSequence,
    p: &PixelModelParams,
    times: &[f64],
    pix: usize,
    x: u16,
    y: u16,
    hot: bool,
) -> Vec<Event> {
    let frames = f.frames();
    let log = |i: usize| (frames[i][pix] + p.eps).ln();
    let mut out = Vec::new();
    let mut reference = log(0);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream(pix as u64);
    let stamp = |t: f64| t.round() as u64;

    for i in 0..frames.len() - 1 {
        let (t0, t1) = (times[i], times[i + 1]);
        let dt = t1 - t0;
        let (l0, l1) = (log(i), log(i + 1));
        let span = l1 - l0;
        while l1 - reference >= p.theta_pos - CROSSING_SLACK {
            reference += p.theta_pos;
            let frac = ((reference - l0) / span).clamp(0.0, 1.0);
            out.push(Event::new(stamp(t0 + frac * dt), x, y, Polarity::Positive));
        }
        while reference - l1 >= p.theta_neg - CROSSING_SLACK {
            reference -= p.theta_neg;
            let frac = ((reference - l0) / span).clamp(0.0, 1.0);
            out.push(Event::new(stamp(t0 + frac * dt), x, y, Polarity::Negative));
        }

        let intensity = 0.5 * (frames[i][pix] + frames[i + 1][pix]);
        let mut rate = p.noise_rate_hz(intensity);
        if hot {
            rate += p.hot_rate_hz;
        }
        let lambda = rate * dt * 1e-6;
        if lambda > 0.0 {
            let n = Poisson::new(lambda)
                .expect("positive finite rate")
                .sample(&mut rng) as u64;
            for _ in 0..n {
                let t = t0 + rng.random::<f64>() * dt;
                let polarity = if rng.random::<bool>() {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                };
                out.push(Event::new(stamp(t), x, y, polarity));
            }
        }
    }
    out
}
