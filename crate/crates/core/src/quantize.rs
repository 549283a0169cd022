use thiserror::Error;

use crate::geometry::Vec3;

/// Bins per axis. Keeps every coordinate token within one byte.
pub const DEFAULT_RESOLUTION: u32 = 256;

const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum QuantizeError {
    #[error("component {axis} = {value} lies outside [-1, 1]")]
    OutOfRange { axis: usize, value: f64 },
    #[error("resolution must be at least 2, got {0}")]
    BadResolution(u32),
}

/// Per-axis `floor((x + 1) / 2 * resolution)`, clamped to `[0, resolution - 1]`.
pub fn quantize(p: &Vec3, resolution: u32) -> Result<[u32; 3], QuantizeError> {
    if resolution < 2 {
        return Err(QuantizeError::BadResolution(resolution));
    }
    let mut out = [0u32; 3];
    for axis in 0..3 {
        let value = p[axis];
        if !(value >= -1.0 - RANGE_SLACK && value <= 1.0 + RANGE_SLACK) {
            return Err(QuantizeError::OutOfRange { axis, value });
        }
        let bin = ((value + 1.0) * 0.5 * resolution as f64).floor();
        out[axis] = bin.clamp(0.0, (resolution - 1) as f64) as u32;
    }
    Ok(out)
}

/// Bin-center coordinate of each axis bin.
pub fn dequantize(bins: [u32; 3], resolution: u32) -> Vec3 {
    let r = resolution as f64;
    Vec3::from(bins.map(|b| (b as f64 + 0.5) / r * 2.0 - 1.0))
}
