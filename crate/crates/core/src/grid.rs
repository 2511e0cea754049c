//! Uniform periodic grids and the n-dimensional FFT used by every spectral operator.
//!
//! Node `i` along an axis sits at box position `i * h`, `h = L / N`. Observables use
//! box-centered coordinates `i * h - L / 2`, so the box center is the origin and a
//! node index maps to the minimal image of its offset from the center.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub points: usize,
    pub length: f64,
}

impl Grid {
    pub fn new(dim: usize, points: usize, length: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::invalid("d", format!("dimension {dim} not in 1..=3")));
        }
        if points < 4 || !points.is_power_of_two() {
            return Err(Error::invalid(
                "grid_points",
                format!("{points} is not a power of two >= 4"),
            ));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::invalid("box_length", format!("{length} must be positive")));
        }
        Ok(Grid { dim, points, length })
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Row-major stride of `axis` (the last axis is contiguous).
    pub fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.dim - 1 - axis) as u32)
    }

    pub fn multi_index(&self, mut flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        for axis in (0..self.dim).rev() {
            idx[axis] = flat % self.points;
            flat /= self.points;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().take(self.dim).fold(0, |acc, &i| acc * self.points + i)
    }

    pub fn centered_coordinate(&self, i: usize) -> f64 {
        i as f64 * self.spacing() - 0.5 * self.length
    }

    /// Box-centered position of a node; unused axes are zero.
    pub fn position(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(flat);
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = self.centered_coordinate(idx[axis]);
        }
        x
    }

    /// Angular wavenumber of FFT bin `i`; the Nyquist bin maps to `-pi / h`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        let n = self.points as i64;
        let signed = if (i as i64) < n / 2 { i as i64 } else { i as i64 - n };
        2.0 * std::f64::consts::PI * signed as f64 / self.length
    }

    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.points / 2
    }

    pub fn wavevector(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(flat);
        let mut k = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            k[axis] = self.wavenumber(idx[axis]);
        }
        k
    }

    pub fn k_squared(&self) -> Vec<f64> {
        (0..self.len())
            .map(|f| self.wavevector(f).iter().map(|k| k * k).sum())
            .collect()
    }

    pub fn r_squared(&self) -> Vec<f64> {
        (0..self.len())
            .map(|f| self.position(f).iter().map(|x| x * x).sum())
            .collect()
    }

    /// Largest angular wavenumber representable on the grid.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI / self.spacing()
    }

    /// Wrap a box coordinate into `[0, L)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let w = x.rem_euclid(self.length);
        if w >= self.length {
            0.0
        } else {
            w
        }
    }

    /// Minimal-image displacement of a box coordinate from the box center.
    pub fn centered_from_box(&self, x: f64) -> f64 {
        let c = self.wrap(x) - 0.5 * self.length;
        if c >= 0.5 * self.length {
            c - self.length
        } else {
            c
        }
    }
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, HashMap<usize, PlanPair>)>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let (planner, map) = &mut *guard;
    if let Some(p) = map.get(&n) {
        return p.clone();
    }
    let pair = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
    map.insert(n, pair.clone());
    pair
}

/// Unnormalized forward / normalized inverse FFT over all axes of a grid field.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        let (forward, inverse) = plans(grid.points);
        Spectral { grid, forward, inverse }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let g = &self.grid;
        assert_eq!(data.len(), g.len(), "field length does not match grid");
        let n = g.points;
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        let mut line = vec![Complex64::default(); n];
        for axis in 0..g.dim {
            let stride = g.stride(axis);
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = stride * n;
            for outer in (0..data.len()).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (m, v) in line.iter_mut().enumerate() {
                        *v = data[base + m * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (m, v) in line.iter().enumerate() {
                        data[base + m * stride] = *v;
                    }
                }
            }
        }
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }
}
