use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{BeamError, Result};

/// Uniform periodic grid on [-L, L) with `n` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub half_length: f64,
    pub n: usize,
    pub h: f64,
}

pub fn build_grid(half_length: f64, n: usize) -> Result<Grid> {
    if !(half_length > 0.0 && half_length.is_finite()) {
        return Err(BeamError::invalid("grid.L", format!("must be positive, got {half_length}")));
    }
    if n < 64 || !n.is_power_of_two() {
        return Err(BeamError::invalid("grid.n", format!("must be a power of two >= 64, got {n}")));
    }
    Ok(Grid { half_length, n, h: 2.0 * half_length / n as f64 })
}

impl Grid {
    pub fn node(&self, i: usize) -> f64 {
        -self.half_length + i as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Signed mode index in FFT order: 0, 1, …, n/2−1, −n/2, …, −1.
    pub fn mode_index(&self, j: usize) -> i64 {
        let n = self.n as i64;
        let j = j as i64;
        if j < n / 2 {
            j
        } else {
            j - n
        }
    }

    /// Wavenumbers `k_j = π j / L` in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|j| PI * self.mode_index(j) as f64 / self.half_length).collect()
    }

    /// Index of the node closest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let i = ((x + self.half_length) / self.h).round();
        i.clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Same spacing, box enlarged by an integer factor.
    pub fn padded(&self, factor: usize) -> Grid {
        let factor = factor.max(1);
        Grid { half_length: self.half_length * factor as f64, n: self.n * factor, h: self.h }
    }
}
