//! Procedural rain-streak synthesis: seeded sparse noise smeared along an
//! oriented line and added to a clean image.

use serde::{Deserialize, Serialize};

use super::image::ImageF;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Parameters for one synthetic rain layer. Identical parameters always
/// produce the identical layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RainParams {
    /// Streak direction, degrees away from vertical, in `[-45, 45]`.
    pub angle_deg: f64,
    /// Extent of the oriented smear, in pixels (>= 1).
    pub streak_length_px: usize,
    /// Fraction of pixels seeded with a streak head, in `[0, 1]`.
    pub density: f64,
    /// Strength of the layer added to the clean image, in `[0, 1]`.
    pub intensity: f64,
    pub seed: u64,
}

impl Default for RainParams {
    fn default() -> Self {
        RainParams {
            angle_deg: 12.0,
            streak_length_px: 11,
            density: 0.02,
            intensity: 0.6,
            seed: 0,
        }
    }
}

impl RainParams {
    pub fn validate(&self) -> Result<()> {
        if !self.angle_deg.is_finite() || !(-45.0..=45.0).contains(&self.angle_deg) {
            return Err(Error::invalid(
                "rain_params",
                format!("angle_deg must be in [-45, 45], got {}", self.angle_deg),
            ));
        }
        if self.streak_length_px == 0 {
            return Err(Error::invalid("rain_params", "streak_length_px must be >= 1"));
        }
        if !self.density.is_finite() || !(0.0..=1.0).contains(&self.density) {
            return Err(Error::invalid(
                "rain_params",
                format!("density must be in [0, 1], got {}", self.density),
            ));
        }
        if !self.intensity.is_finite() || !(0.0..=1.0).contains(&self.intensity) {
            return Err(Error::invalid(
                "rain_params",
                format!("intensity must be in [0, 1], got {}", self.intensity),
            ));
        }
        Ok(())
    }
}

/// Per-step falloff of the smear away from the streak head. Kept below 1/11
/// so the whole one-sided trail mass (rho / (1 - rho)) stays under 0.1: the
/// fraction of layer pixels above 0.1 then tracks the seed density.
const TRAIL_DECAY: f64 = 0.09;

/// Falloff for a tap `|offset|` pixels from the streak head. Offsets are
/// integers (odd lengths) or half-integers (even lengths); computed by exact
/// repeated multiplication so the layer is reproducible bit-for-bit.
fn trail_weight(off_abs: f64) -> f64 {
    let whole = off_abs.floor() as usize;
    let mut w = 1.0f64;
    for _ in 0..whole {
        w *= TRAIL_DECAY;
    }
    if off_abs - off_abs.floor() != 0.0 {
        w *= TRAIL_DECAY.sqrt();
    }
    w
}

fn splat_bilinear(layer: &mut [f64], h: usize, w: usize, y: f64, x: f64, value: f64) {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let corners = [
        (y0 as isize, x0 as isize, (1.0 - fy) * (1.0 - fx)),
        (y0 as isize, x0 as isize + 1, (1.0 - fy) * fx),
        (y0 as isize + 1, x0 as isize, fy * (1.0 - fx)),
        (y0 as isize + 1, x0 as isize + 1, fy * fx),
    ];
    for (cy, cx, cw) in corners {
        if cy >= 0 && cx >= 0 && (cy as usize) < h && (cx as usize) < w && cw > 0.0 {
            layer[cy as usize * w + cx as usize] += value * cw;
        }
    }
}

/// The raw streak layer before intensity scaling: uniform noise is
/// thresholded at `1 - density` (the retained sample is the head brightness)
/// and each head is smeared `streak_length_px` pixels along `angle_deg`
/// (measured from vertical) with the head at full weight.
pub fn streak_layer(height: usize, width: usize, p: &RainParams) -> Result<Vec<f64>> {
    p.validate()?;
    let mut rng = Rng::seed_from_u64(p.seed);
    let threshold = 1.0 - p.density;
    let mut seeds: Vec<(usize, usize, f64)> = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let u = rng.next_f64();
            if u >= threshold {
                seeds.push((y, x, u));
            }
        }
    }
    let mut layer = vec![0.0f64; height * width];
    let theta = p.angle_deg.to_radians();
    let (dy, dx) = (theta.cos(), theta.sin());
    let mid = (p.streak_length_px as f64 - 1.0) / 2.0;
    for &(sy, sx, brightness) in &seeds {
        for tap in 0..p.streak_length_px {
            let off = tap as f64 - mid;
            let value = brightness * trail_weight(off.abs());
            splat_bilinear(
                &mut layer,
                height,
                width,
                sy as f64 + off * dy,
                sx as f64 + off * dx,
                value,
            );
        }
    }
    Ok(layer)
}

/// rain = clamp(clean + intensity * streak_layer, 0, 1), the same layer added
/// to all three channels. Pixels the layer never touches keep their exact
/// clean values.
pub fn synth_rain(clean: &ImageF, p: &RainParams) -> Result<ImageF> {
    let (h, w) = (clean.height(), clean.width());
    let layer = streak_layer(h, w, p)?;
    let mut rain = clean.clone();
    for y in 0..h {
        for x in 0..w {
            let add = p.intensity * layer[y * w + x];
            if add != 0.0 {
                for c in 0..3 {
                    rain.set(y, x, c, (clean.get(y, x, c) + add).clamp(0.0, 1.0));
                }
            }
        }
    }
    Ok(rain)
}
