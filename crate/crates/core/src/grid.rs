use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform time grid `0 = t_0 < t_1 < ... < t_N = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    t_end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::InvalidParameter(format!("T must be positive, got {t_end}")));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("grid_n must be at least 1".into()));
        }
        Ok(Self { t_end, steps })
    }

    /// Builds a grid from explicit time points, rejecting anything that is
    /// not uniform (relative spacing error above 1e-9) or does not start at 0.
    pub fn from_times(times: &[f64]) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::NonUniformGrid("need at least two time points".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::NonUniformGrid(format!("grid starts at {}", times[0])));
        }
        let steps = times.len() - 1;
        let t_end = times[steps];
        let dt = t_end / steps as f64;
        for (i, w) in times.windows(2).enumerate() {
            let h = w[1] - w[0];
            if !(h > 0.0) || ((h - dt) / dt).abs() > 1e-9 {
                return Err(Error::NonUniformGrid(format!(
                    "step {i} has width {h}, expected {dt}"
                )));
            }
        }
        Self::new(t_end, steps)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of grid points, `N + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t_end
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Index of `t` on the grid, or `None` if `t` is off-grid or out of range.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        if !(t >= 0.0) || t > self.t_end * (1.0 + 1e-12) {
            return None;
        }
        let x = t / self.dt();
        let i = x.round();
        if (x - i).abs() <= 1e-9 * x.max(1.0) {
            Some(i as usize)
        } else {
            None
        }
    }
}
