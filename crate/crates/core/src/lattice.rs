//! Truncated integer lattice `{-m..m}^N` and the difference operators on it.
//!
//! Sites are flattened row-major over `(i_1, ..., i_N)`, so the last
//! coordinate varies fastest. Values outside the window are treated as zero.
//!
//! The forward difference `B_j` maps sites to the edge set of direction `j`,
//! which contains both boundary edges: along axis `j` the edge "low" coordinate
//! runs over `{-m-1..m}`, giving `(2m+2)(2m+1)^(N-1)` edges. With this choice
//! `A = sum_j B_j^* B_j` holds exactly on the window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeWindow {
    dim: usize,
    radius: usize,
}

impl LatticeWindow {
    pub fn new(dim: usize, radius: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidWindow("dimension must be at least 1".into()));
        }
        let side = 2 * radius + 1;
        let fits = (0..dim).try_fold(1usize, |acc, _| acc.checked_mul(side + 1));
        if fits.is_none() {
            return Err(Error::InvalidWindow(format!(
                "window {side}^{dim} is too large"
            )));
        }
        Ok(Self { dim, radius })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Number of sites along one axis, `2m+1`.
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn site_count(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    /// Edges in one direction, `(2m+2)(2m+1)^(N-1)`.
    pub fn edge_count(&self) -> usize {
        (self.side() + 1) * self.side().pow(self.dim as u32 - 1)
    }

    /// Distance in the flat index between neighbours along axis `j` (0-based).
    fn stride(&self, axis: usize) -> usize {
        self.side().pow((self.dim - 1 - axis) as u32)
    }

    pub fn contains(&self, index: &[i64]) -> bool {
        let m = self.radius as i64;
        index.len() == self.dim && index.iter().all(|&c| (-m..=m).contains(&c))
    }

    pub fn flat_index(&self, index: &[i64]) -> Option<usize> {
        if !self.contains(index) {
            return None;
        }
        let m = self.radius as i64;
        let side = self.side();
        Some(
            index
                .iter()
                .fold(0usize, |acc, &c| acc * side + (c + m) as usize),
        )
    }

    pub fn multi_index(&self, flat: usize) -> Option<Vec<i64>> {
        if flat >= self.site_count() {
            return None;
        }
        let side = self.side();
        let m = self.radius as i64;
        let mut out = vec![0i64; self.dim];
        let mut rest = flat;
        for slot in out.iter_mut().rev() {
            *slot = (rest % side) as i64 - m;
            rest /= side;
        }
        Some(out)
    }

    /// Sup-norm `max_j |i_j|` of the multi-index of a flat site.
    pub fn site_radius(&self, flat: usize) -> usize {
        let side = self.side();
        let m = self.radius as i64;
        let mut rest = flat;
        let mut r = 0;
        for _ in 0..self.dim {
            let c = (rest % side) as i64 - m;
            r = r.max(c.unsigned_abs() as usize);
            rest /= side;
        }
        r
    }

    fn check_direction(&self, direction: usize) -> Result<usize> {
        if direction == 0 || direction > self.dim {
            return Err(Error::InvalidDirection {
                direction,
                dim: self.dim,
            });
        }
        Ok(direction - 1)
    }
}

/// A finite `l^2` vector over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    window: LatticeWindow,
    values: Vec<f64>,
}

impl State {
    pub fn zeros(window: LatticeWindow) -> Self {
        Self {
            window,
            values: vec![0.0; window.site_count()],
        }
    }

    pub fn from_values(window: LatticeWindow, values: Vec<f64>) -> Result<Self> {
        if values.len() != window.site_count() {
            return Err(Error::DimensionMismatch {
                expected: window.site_count(),
                got: values.len(),
            });
        }
        Ok(Self { window, values })
    }

    /// Unit vector at the given site.
    pub fn unit(window: LatticeWindow, index: &[i64]) -> Result<Self> {
        let flat = window
            .flat_index(index)
            .ok_or_else(|| Error::InvalidWindow(format!("site {index:?} outside window")))?;
        let mut s = Self::zeros(window);
        s.values[flat] = 1.0;
        Ok(s)
    }

    pub fn constant(window: LatticeWindow, value: f64) -> Self {
        Self {
            window,
            values: vec![value; window.site_count()],
        }
    }

    pub fn window(&self) -> LatticeWindow {
        self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.values)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &State) -> Result<f64> {
        same_window(self.window, other.window)?;
        Ok(dot(&self.values, &other.values))
    }

    pub fn sub(&self, other: &State) -> Result<State> {
        same_window(self.window, other.window)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(State {
            window: self.window,
            values,
        })
    }
}

/// Values on the edge set of one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeVector {
    window: LatticeWindow,
    direction: usize,
    values: Vec<f64>,
}

impl EdgeVector {
    pub fn new(window: LatticeWindow, direction: usize, values: Vec<f64>) -> Result<Self> {
        window.check_direction(direction)?;
        if values.len() != window.edge_count() {
            return Err(Error::DimensionMismatch {
                expected: window.edge_count(),
                got: values.len(),
            });
        }
        Ok(Self {
            window,
            direction,
            values,
        })
    }

    pub fn direction(&self) -> usize {
        self.direction
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dot(&self, other: &EdgeVector) -> Result<f64> {
        same_window(self.window, other.window)?;
        if self.direction != other.direction {
            return Err(Error::WindowMismatch(format!(
                "edge directions {} and {}",
                self.direction, other.direction
            )));
        }
        Ok(dot(&self.values, &other.values))
    }
}

fn same_window(a: LatticeWindow, b: LatticeWindow) -> Result<()> {
    if a != b {
        return Err(Error::WindowMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Writes `A u` into `out`. Both slices have `site_count` entries.
pub(crate) fn apply_a_into(window: LatticeWindow, u: &[f64], out: &mut [f64]) {
    let side = window.side();
    let two_n = 2.0 * window.dim() as f64;
    for (o, &x) in out.iter_mut().zip(u) {
        *o = two_n * x;
    }
    for axis in 0..window.dim() {
        let stride = window.stride(axis);
        for (s, o) in out.iter_mut().enumerate() {
            let pos = (s / stride) % side;
            if pos > 0 {
                *o -= u[s - stride];
            }
            if pos + 1 < side {
                *o -= u[s + stride];
            }
        }
    }
}

/// Site index of the low end of an edge along `axis`, or `None` when it lies
/// outside the window; same for the high end.
fn edge_ends(window: LatticeWindow, axis: usize, edge: usize) -> (Option<usize>, Option<usize>) {
    let side = window.side();
    let stride = window.stride(axis);
    // Edge layout equals the site layout with axis `axis` widened to side + 1.
    let outer = edge / (stride * (side + 1));
    let pos = (edge / stride) % (side + 1);
    let inner = edge % stride;
    let site = |p: usize| outer * stride * side + p * stride + inner;
    let low = if pos >= 1 { Some(site(pos - 1)) } else { None };
    let high = if pos < side { Some(site(pos)) } else { None };
    (low, high)
}

pub fn apply_a(u: &State) -> State {
    let mut out = State::zeros(u.window);
    apply_a_into(u.window, &u.values, &mut out.values);
    out
}

/// Forward difference `(B_j u)_i = u_{i+e_j} - u_i`; `direction` is 1-based.
pub fn apply_b(direction: usize, u: &State) -> Result<EdgeVector> {
    let window = u.window;
    let axis = window.check_direction(direction)?;
    let values = (0..window.edge_count())
        .map(|e| {
            let (low, high) = edge_ends(window, axis, e);
            high.map_or(0.0, |h| u.values[h]) - low.map_or(0.0, |l| u.values[l])
        })
        .collect();
    Ok(EdgeVector {
        window,
        direction,
        values,
    })
}

/// Adjoint of [`apply_b`]: `(B_j^* w)_i = w_{i-e_j} - w_i` in edge terms.
pub fn apply_b_star(w: &EdgeVector) -> State {
    let window = w.window;
    let axis = w.direction - 1;
    let mut out = State::zeros(window);
    for (e, &we) in w.values.iter().enumerate() {
        let (low, high) = edge_ends(window, axis, e);
        if let Some(h) = high {
            out.values[h] += we;
        }
        if let Some(l) = low {
            out.values[l] -= we;
        }
    }
    out
}

/// `sum_j |B_j u|^2`, which equals `(A u, u)`.
pub fn dirichlet_energy(u: &State) -> f64 {
    (1..=u.window.dim())
        .map(|j| {
            let b = apply_b(j, u).expect("direction in range");
            norm_sq(&b.values)
        })
        .sum()
}
