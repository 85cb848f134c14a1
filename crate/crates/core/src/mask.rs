//! Run-length-encoded binary masks and mask IoU.
//!
//! Counts are row-major and always start with the zero run, so a mask whose
//! first pixel is set begins with a 0 count. The text form is
//! `<width>x<height>:<c0>,<c1>,...`, the payload of the `rle=` field in
//! track files.

use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MaskError {
    #[error("invalid run-length mask: {0}")]
    InvalidRle(String),
    #[error("mask grids differ: {left_w}x{left_h} vs {right_w}x{right_h}")]
    GridMismatch {
        left_w: u32,
        left_h: u32,
        right_w: u32,
        right_h: u32,
    },
}

/// A `width x height` binary grid stored as alternating zero/one run
/// lengths summing to the grid area.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RleMask {
    width: u32,
    height: u32,
    counts: Vec<u32>,
}

impl RleMask {
    pub fn new(width: u32, height: u32, counts: Vec<u32>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::InvalidRle(format!(
                "grid must be nonempty, got {width}x{height}"
            )));
        }
        if counts.is_empty() {
            return Err(MaskError::InvalidRle("no run counts".into()));
        }
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        let area = width as u64 * height as u64;
        if total != area {
            return Err(MaskError::InvalidRle(format!(
                "runs cover {total} cells, grid has {area}"
            )));
        }
        Ok(Self {
            width,
            height,
            counts,
        })
    }

    /// Encodes a row-major bit grid; `bits.len()` must equal the area.
    pub fn from_bits(width: u32, height: u32, bits: &[bool]) -> Result<Self, MaskError> {
        let area = width as u64 * height as u64;
        if bits.len() as u64 != area {
            return Err(MaskError::InvalidRle(format!(
                "{} bits for a {width}x{height} grid",
                bits.len()
            )));
        }
        let mut counts = Vec::new();
        let mut current = false;
        let mut run: u32 = 0;
        for &bit in bits {
            if bit == current {
                run += 1;
            } else {
                counts.push(run);
                current = bit;
                run = 1;
            }
        }
        counts.push(run);
        Self::new(width, height, counts)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Number of set cells: the odd-indexed runs.
    pub fn area(&self) -> u64 {
        self.counts
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&c| c as u64)
            .sum()
    }

    pub fn to_bits(&self) -> Vec<bool> {
        let mut bits = Vec::with_capacity((self.width as usize) * (self.height as usize));
        for (i, &c) in self.counts.iter().enumerate() {
            bits.extend(std::iter::repeat(i % 2 == 1).take(c as usize));
        }
        bits
    }

    fn check_grid(&self, other: &RleMask) -> Result<(), MaskError> {
        if self.width != other.width || self.height != other.height {
            return Err(MaskError::GridMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            });
        }
        Ok(())
    }

    /// Set cells common to both masks, by a single pass over both run
    /// lists. Both lists cover the same area, so they exhaust together.
    pub fn intersection(&self, other: &RleMask) -> Result<u64, MaskError> {
        self.check_grid(other)?;
        let mut inter = 0u64;
        let (mut ia, mut ib) = (0usize, 0usize);
        let mut ra = self.counts[0] as u64;
        let mut rb = other.counts[0] as u64;
        loop {
            while ra == 0 {
                ia += 1;
                if ia == self.counts.len() {
                    return Ok(inter);
                }
                ra = self.counts[ia] as u64;
            }
            while rb == 0 {
                ib += 1;
                if ib == other.counts.len() {
                    return Ok(inter);
                }
                rb = other.counts[ib] as u64;
            }
            let step = ra.min(rb);
            if ia % 2 == 1 && ib % 2 == 1 {
                inter += step;
            }
            ra -= step;
            rb -= step;
        }
    }

    /// Intersection over union; 0 when both masks are empty.
    pub fn iou(&self, other: &RleMask) -> Result<f64, MaskError> {
        let inter = self.intersection(other)?;
        let union = self.area() + other.area() - inter;
        if union == 0 {
            return Ok(0.0);
        }
        Ok(inter as f64 / union as f64)
    }
}

impl fmt::Display for RleMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}:", self.width, self.height)?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for RleMask {
    type Err = MaskError;

    fn from_str(s: &str) -> Result<Self, MaskError> {
        let (grid, runs) = s
            .split_once(':')
            .ok_or_else(|| MaskError::InvalidRle(format!("missing ':' in '{s}'")))?;
        let (w, h) = grid
            .split_once('x')
            .ok_or_else(|| MaskError::InvalidRle(format!("missing 'x' in grid '{grid}'")))?;
        let width: u32 = w
            .parse()
            .map_err(|_| MaskError::InvalidRle(format!("bad width '{w}'")))?;
        let height: u32 = h
            .parse()
            .map_err(|_| MaskError::InvalidRle(format!("bad height '{h}'")))?;
        let counts = runs
            .split(',')
            .map(|c| {
                c.parse()
                    .map_err(|_| MaskError::InvalidRle(format!("bad run count '{c}'")))
            })
            .collect::<Result<Vec<u32>, _>>()?;
        RleMask::new(width, height, counts)
    }
}
