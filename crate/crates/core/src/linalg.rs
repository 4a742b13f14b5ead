//! Linear-algebra kernels behind the Newton solves: banded LU with partial
//! pivoting (1D problems), restarted GMRES, and a fast sine-transform
//! solver for the Dirichlet Laplacian (2D preconditioning).

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Band matrix with `kl` sub- and `ku` super-diagonals, stored row-wise with
/// `kl` extra super-diagonals reserved for pivoting fill-in.
#[derive(Clone, Debug)]
pub(crate) struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i}, {j}) outside the band"
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// LU factorization with partial pivoting, in place.
    pub fn factor(mut self) -> Result<BandLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let a = self.data[self.idx(i, k)].abs();
                if a > best {
                    best = a;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Linear(format!(
                    "band matrix is singular or non-finite at column {k}"
                )));
            }
            piv[k] = p;
            let last_col = (k + ku + kl).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let kj = self.data[self.idx(k, j)];
                        let ij = self.idx(i, j);
                        self.data[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(BandLu { band: self, piv })
    }
}

#[derive(Clone, Debug)]
pub(crate) struct BandLu {
    band: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let m = &self.band;
        let (n, kl, ku) = (m.n, m.kl, m.ku);
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= m.data[m.idx(i, k)] * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..=(i + ku + kl).min(n - 1) {
                acc -= m.data[m.idx(i, j)] * b[j];
            }
            b[i] = acc / m.data[m.idx(i, i)];
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct GmresOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Restarted GMRES with right preconditioning; `x` holds the initial guess on
/// entry and the solution on exit. Convergence is measured on the true
/// residual relative to `||b||`.
pub(crate) fn gmres(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    precond: &mut dyn FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    restart: usize,
    max_iter: usize,
) -> GmresOutcome {
    let n = b.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return GmresOutcome {
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
        };
    }
    let target = rel_tol * b_norm;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
    let mut hess = vec![vec![0.0; restart]; restart + 1];
    let mut cs = vec![0.0; restart];
    let mut sn = vec![0.0; restart];
    let mut g = vec![0.0; restart + 1];
    let mut total = 0;

    loop {
        apply(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = norm2(&r);
        if beta <= target || total >= max_iter {
            return GmresOutcome {
                iterations: total,
                rel_residual: beta / b_norm,
                converged: beta <= target,
            };
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k_used = 0;
        for j in 0..restart {
            precond(&basis[j], &mut z);
            apply(&z, &mut w);
            for i in 0..=j {
                let h: f64 = w.iter().zip(&basis[i]).map(|(a, b)| a * b).sum();
                hess[i][j] = h;
                for (wk, vk) in w.iter_mut().zip(&basis[i]) {
                    *wk -= h * vk;
                }
            }
            let h_next = norm2(&w);
            hess[j + 1][j] = h_next;
            for i in 0..j {
                let tmp = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = tmp;
            }
            let denom = hess[j][j].hypot(hess[j + 1][j]);
            if denom == 0.0 {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = hess[j][j] / denom;
                sn[j] = hess[j + 1][j] / denom;
            }
            hess[j][j] = denom;
            hess[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            total += 1;
            k_used = j + 1;
            let estimate = g[j + 1].abs();
            if estimate <= 0.5 * target || h_next == 0.0 || total >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for l in i + 1..k_used {
                acc -= hess[i][l] * y[l];
            }
            y[i] = acc / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, vi) in y.iter().zip(&basis) {
            for (u, v) in update.iter_mut().zip(vi) {
                *u += yi * v;
            }
        }
        precond(&update, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
    }
}

/// Direct solver for `-Delta_h x = f` on a square grid by discrete sine
/// transforms.
pub(crate) struct DirichletPoisson {
    dim: usize,
    n: usize,
    intervals: usize,
    eig: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl DirichletPoisson {
    pub fn new(g: &Grid) -> Self {
        let n = g.n_per_axis();
        let big_n = g.intervals();
        let h = g.h();
        let eig = (1..=n)
            .map(|k| {
                let s = (std::f64::consts::PI * k as f64 / (2.0 * big_n as f64)).sin();
                4.0 / (h * h) * s * s
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(2 * big_n);
        Self {
            dim: g.dim(),
            n,
            intervals: big_n,
            eig,
            fft,
        }
    }

    /// Unnormalized DST-I of `lines` consecutive vectors of length `n`
    /// (read with `stride` between entries, `offset(line)` for the start).
    fn dst_lines(&self, data: &mut [f64], lines: usize, start: impl Fn(usize) -> usize, stride: usize) {
        let (n, big_n) = (self.n, self.intervals);
        let len = 2 * big_n;
        let mut buf = vec![Complex::new(0.0, 0.0); lines * len];
        for l in 0..lines {
            let chunk = &mut buf[l * len..(l + 1) * len];
            let s = start(l);
            for j in 1..=n {
                let x = data[s + (j - 1) * stride];
                chunk[j] = Complex::new(x, 0.0);
                chunk[len - j] = Complex::new(-x, 0.0);
            }
        }
        self.fft.process(&mut buf);
        for l in 0..lines {
            let chunk = &buf[l * len..(l + 1) * len];
            let s = start(l);
            for k in 1..=n {
                data[s + (k - 1) * stride] = -0.5 * chunk[k].im;
            }
        }
    }

    fn dst(&self, data: &mut [f64]) {
        let n = self.n;
        if self.dim == 1 {
            self.dst_lines(data, 1, |_| 0, 1);
        } else {
            self.dst_lines(data, n, |row| row * n, 1);
            self.dst_lines(data, n, |col| col, n);
        }
    }

    pub fn solve(&self, rhs: &[f64], out: &mut [f64]) {
        out.copy_from_slice(rhs);
        self.dst(out);
        let n = self.n;
        if self.dim == 1 {
            for k in 0..n {
                out[k] /= self.eig[k];
            }
        } else {
            for j in 0..n {
                for i in 0..n {
                    out[j * n + i] /= self.eig[i] + self.eig[j];
                }
            }
        }
        self.dst(out);
        let scale = (2.0 / self.intervals as f64).powi(self.dim as i32);
        out.iter_mut().for_each(|v| *v *= scale);
    }
}
