//! Uniform tensor grids on `(0, L)^d`, the Dirichlet-zero five-point (three in 1D)
//! Laplacian and the discrete norms used by the experiments.
//!
//! Only interior nodes carry unknowns: `x_i = i h` for `i = 1..N-1` per axis
//! with `N = L / h`. Boundary values are identically zero. In 2D the index of
//! node `(i, j)` (`i` along x, `j` along y, both zero-based over interior
//! nodes) is `j * n + i`.

use std::io::Write;

use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

/// Relative slack when checking that a ratio of lengths is an integer.
const INTEGRAL_RATIO_TOL: f64 = 1e-9;

pub(crate) fn integral_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    let ratio = num / den;
    let rounded = ratio.round();
    if !(ratio.is_finite() && rounded >= 1.0 && (ratio - rounded).abs() <= INTEGRAL_RATIO_TOL * rounded)
    {
        return Err(Error::Config(format!(
            "{what}: ratio {num} / {den} = {ratio} is not a positive integer"
        )));
    }
    Ok(rounded as usize)
}

/// Uniform grid of interior nodes with homogeneous Dirichlet boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    length: f64,
    intervals: usize,
}

impl Grid {
    pub fn new(dim: usize, length: f64, h: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("dimension must be 1 or 2, got {dim}")));
        }
        if !(length > 0.0 && length.is_finite() && h > 0.0) {
            return Err(Error::Config(format!(
                "domain length and mesh size must be positive, got L={length}, h={h}"
            )));
        }
        let intervals = integral_ratio(length, h, "L/h")?;
        Self::with_intervals(dim, length, intervals)
    }

    /// Grid with `intervals` cells per axis, i.e. `intervals - 1` interior nodes.
    pub fn with_intervals(dim: usize, length: f64, intervals: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("dimension must be 1 or 2, got {dim}")));
        }
        if intervals < 2 {
            return Err(Error::Config(format!(
                "need at least 2 intervals per axis (one interior node), got {intervals}"
            )));
        }
        Ok(Self {
            dim,
            length,
            intervals,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.length / self.intervals as f64
    }

    /// `N = L / h`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Interior nodes per axis, `N - 1`.
    pub fn n_per_axis(&self) -> usize {
        self.intervals - 1
    }

    pub fn len(&self) -> usize {
        self.n_per_axis().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Coordinates of node `k`; the second entry is 0 in 1D.
    pub fn coords(&self, k: usize) -> [f64; 2] {
        let n = self.n_per_axis();
        let h = self.h();
        match self.dim {
            1 => [(k + 1) as f64 * h, 0.0],
            _ => [(k % n + 1) as f64 * h, (k / n + 1) as f64 * h],
        }
    }

    pub fn zeros(&self) -> Field {
        Field::zeros(self.len())
    }

    pub fn field_from_fn(&self, f: impl Fn([f64; 2]) -> f64) -> Field {
        Field::from_vec((0..self.len()).map(|k| f(self.coords(k))).collect())
    }

    pub(crate) fn check(&self, f: &Field) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::Contract(format!(
                "field has {} entries, grid has {} interior nodes",
                f.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// `out = Delta_h f`, no allocation, no shape checks.
    pub(crate) fn laplacian_into(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n_per_axis();
        let inv_h2 = 1.0 / (self.h() * self.h());
        match self.dim {
            1 => {
                for i in 0..n {
                    let left = if i > 0 { f[i - 1] } else { 0.0 };
                    let right = if i + 1 < n { f[i + 1] } else { 0.0 };
                    out[i] = (left - 2.0 * f[i] + right) * inv_h2;
                }
            }
            _ => {
                for j in 0..n {
                    for i in 0..n {
                        let k = j * n + i;
                        let mut acc = -4.0 * f[k];
                        if i > 0 {
                            acc += f[k - 1];
                        }
                        if i + 1 < n {
                            acc += f[k + 1];
                        }
                        if j > 0 {
                            acc += f[k - n];
                        }
                        if j + 1 < n {
                            acc += f[k + n];
                        }
                        out[k] = acc * inv_h2;
                    }
                }
            }
        }
    }

    /// Neighbours of node `k` (interior only) in the stencil.
    pub(crate) fn neighbours(&self, k: usize) -> impl Iterator<Item = usize> {
        let n = self.n_per_axis();
        let dim = self.dim;
        let (i, j) = (k % n, k / n);
        let cand: [Option<usize>; 4] = if dim == 1 {
            [
                (k > 0).then(|| k - 1),
                (k + 1 < n).then(|| k + 1),
                None,
                None,
            ]
        } else {
            [
                (i > 0).then(|| k - 1),
                (i + 1 < n).then(|| k + 1),
                (j > 0).then(|| k - n),
                (j + 1 < n).then(|| k + n),
            ]
        };
        cand.into_iter().flatten()
    }

    /// Diagonal entry of the discrete Laplacian, `-2d / h^2`.
    pub(crate) fn laplacian_diagonal(&self) -> f64 {
        -2.0 * self.dim as f64 / (self.h() * self.h())
    }
}

/// Nodal values on the interior nodes of a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_vec(self.values.iter().map(|&x| f(x)).collect())
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|x| c * x)
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &Field, b: f64) -> Field {
        debug_assert_eq!(self.len(), other.len());
        Field::from_vec(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&x, &y)| a * x + b * y)
                .collect(),
        )
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// Euclidean inner product without the cell-volume weight.
    pub fn dot(&self, other: &Field) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

/// Uniform time grid `t^n = n dt`, `n = 0..=n_steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, t_final: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        if t_final == 0.0 {
            return Ok(Self { dt, n_steps: 0 });
        }
        let n_steps = integral_ratio(t_final, dt, "T/dt")?;
        Ok(Self { dt, n_steps })
    }

    pub fn with_steps(dt: f64, n_steps: usize) -> Self {
        Self { dt, n_steps }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn t_final(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
}

/// `Delta_h f` with homogeneous Dirichlet boundary.
pub fn apply_laplacian(f: &Field, g: &Grid) -> Result<Field> {
    g.check(f)?;
    let mut out = g.zeros();
    g.laplacian_into(f.as_slice(), out.as_mut_slice());
    Ok(out)
}

/// Sparse matrix of `Delta_h` in the grid's node ordering.
pub fn assemble_laplacian(g: &Grid) -> SparseColMat<usize, f64> {
    let inv_h2 = 1.0 / (g.h() * g.h());
    let mut triplets = Vec::with_capacity(g.len() * (2 * g.dim() + 1));
    for k in 0..g.len() {
        triplets.push(Triplet::new(k, k, g.laplacian_diagonal()));
        for nb in g.neighbours(k) {
            triplets.push(Triplet::new(k, nb, inv_h2));
        }
    }
    SparseColMat::try_new_from_triplets(g.len(), g.len(), &triplets)
        .expect("laplacian triplets are in range")
}

/// `sqrt( sum_{n,i} |z_i^n|^2 h^d dt )` over `n = 0..=n_steps`.
pub fn l2_spacetime_norm(traj: &[Field], time: &TimeGrid, g: &Grid) -> Result<f64> {
    if traj.len() != time.n_steps() + 1 {
        return Err(Error::Contract(format!(
            "trajectory has {} time levels, expected {}",
            traj.len(),
            time.n_steps() + 1
        )));
    }
    let mut acc = 0.0;
    for f in traj {
        g.check(f)?;
        acc += f.dot(f);
    }
    Ok((acc * g.cell_volume() * time.dt()).sqrt())
}

/// `( sum_i |f_i|^q h^d )^(1/q)`, evaluated relative to `max |f_i|` so that
/// tiny fields do not underflow.
pub fn lq_norm(f: &Field, g: &Grid, q: f64) -> Result<f64> {
    let (m, s) = scaled_lq_parts(f, g, q)?;
    Ok(if m == 0.0 { 0.0 } else { m * s.powf(1.0 / q) })
}

/// Natural logarithm of [`lq_norm`]; `-inf` for the zero field.
pub fn ln_lq_norm(f: &Field, g: &Grid, q: f64) -> Result<f64> {
    let (m, s) = scaled_lq_parts(f, g, q)?;
    Ok(if m == 0.0 {
        f64::NEG_INFINITY
    } else {
        m.ln() + s.ln() / q
    })
}

fn scaled_lq_parts(f: &Field, g: &Grid, q: f64) -> Result<(f64, f64)> {
    g.check(f)?;
    if !(q >= 1.0) {
        return Err(Error::Contract(format!("norm exponent must be >= 1, got {q}")));
    }
    let m = f.sup_norm();
    if m == 0.0 {
        return Ok((0.0, 0.0));
    }
    let sum: f64 = f.as_slice().iter().map(|x| (x.abs() / m).powf(q)).sum();
    Ok((m, sum * g.cell_volume()))
}

/// Squared discrete gradient norm by forward differences over every
/// axis-aligned edge, boundary edges included.
pub fn h1_seminorm_sq(f: &Field, g: &Grid) -> Result<f64> {
    g.check(f)?;
    let n = g.n_per_axis();
    let h = g.h();
    let v = f.as_slice();
    // values along a line of N+1 nodes with zero ends
    let line_sum = |get: &dyn Fn(usize) -> f64| -> f64 {
        let mut acc = 0.0;
        let mut prev = 0.0;
        for i in 0..n {
            let cur = get(i);
            acc += (cur - prev) * (cur - prev);
            prev = cur;
        }
        acc + prev * prev
    };
    let sum = match g.dim() {
        1 => line_sum(&|i| v[i]),
        _ => {
            let mut acc = 0.0;
            for j in 0..n {
                acc += line_sum(&|i| v[j * n + i]);
                acc += line_sum(&|i| v[i * n + j]);
            }
            acc
        }
    };
    Ok(sum / (h * h) * g.cell_volume())
}

/// Nodal restriction from a grid to a coarser one whose mesh size is an
/// integer multiple.
pub fn restrict(fine: &Field, fine_grid: &Grid, coarse_grid: &Grid) -> Result<Field> {
    fine_grid.check(fine)?;
    if fine_grid.dim() != coarse_grid.dim() || fine_grid.length() != coarse_grid.length() {
        return Err(Error::Contract(
            "restriction requires grids on the same domain".into(),
        ));
    }
    if fine_grid.intervals() % coarse_grid.intervals() != 0 {
        return Err(Error::Contract(format!(
            "coarse mesh size is not an integer multiple of the fine one ({} vs {} intervals)",
            coarse_grid.intervals(),
            fine_grid.intervals()
        )));
    }
    let ratio = fine_grid.intervals() / coarse_grid.intervals();
    let nf = fine_grid.n_per_axis();
    let nc = coarse_grid.n_per_axis();
    let v = fine.as_slice();
    // coarse node index c (zero-based) sits at fine node ratio*(c+1) - 1
    let map = |c: usize| ratio * (c + 1) - 1;
    let values = match coarse_grid.dim() {
        1 => (0..nc).map(|c| v[map(c)]).collect(),
        _ => (0..nc * nc)
            .map(|k| v[map(k / nc) * nf + map(k % nc)])
            .collect(),
    };
    Ok(Field::from_vec(values))
}

/// Write a field as CSV with columns `x[,y],<value_name>`, 17 significant digits.
pub fn write_field_csv<W: Write>(
    w: &mut W,
    g: &Grid,
    f: &Field,
    value_name: &str,
) -> std::io::Result<()> {
    if g.dim() == 1 {
        writeln!(w, "x,{value_name}")?;
    } else {
        writeln!(w, "x,y,{value_name}")?;
    }
    for (k, value) in f.as_slice().iter().enumerate() {
        let [x, y] = g.coords(k);
        if g.dim() == 1 {
            writeln!(w, "{},{}", fmt17(x), fmt17(*value))?;
        } else {
            writeln!(w, "{},{},{}", fmt17(x), fmt17(y), fmt17(*value))?;
        }
    }
    Ok(())
}

/// Scientific notation with 17 significant digits (round-trips any f64).
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
