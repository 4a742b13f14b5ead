//! Brute-force reference solvers shared by the integration tests.
#![allow(dead_code)]

use fde_relax::{Grid, PowerLaw};

/// Root of a strictly monotone scalar function by bracket expansion and bisection.
fn bisect(f: impl Fn(f64) -> f64, guess: f64) -> f64 {
    let increasing = f(guess + 1.0) > f(guess - 1.0);
    let g = |z: f64| if increasing { f(z) } else { -f(z) };
    let (mut lo, mut hi) = (guess - 1.0, guess + 1.0);
    let mut width = 1.0;
    while g(lo) > 0.0 {
        width *= 2.0;
        lo = guess - width;
    }
    width = 1.0;
    while g(hi) < 0.0 {
        width *= 2.0;
        hi = guess + width;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn neighbour_sum(g: &Grid, f: &[f64], k: usize) -> f64 {
    let n = g.n_per_axis();
    let (i, j) = (k % n, k / n);
    let mut s = 0.0;
    if i > 0 {
        s += f[k - 1];
    }
    if i + 1 < n {
        s += f[k + 1];
    }
    if g.dim() == 2 {
        if j > 0 {
            s += f[k - n];
        }
        if j + 1 < n {
            s += f[k + n];
        }
    }
    s
}

pub struct CoupledProblem<'a> {
    pub grid: &'a Grid,
    pub law: PowerLaw,
    pub mu: f64,
    pub eps: f64,
    pub xi: f64,
    pub dt: f64,
}

/// One step of the coupled scheme by nonlinear Gauss-Seidel. At each node
/// the sum `mu E1 + E2` is linear in `(u_i, v_i)`; along that line `E1` is
/// strictly decreasing in `z_i`, so each local solve is a bisection.
pub fn coupled_step(pb: &CoupledProblem<'_>, u_old: &[f64], v_old: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let g = pb.grid;
    let (mu, eps, xi, dt) = (pb.mu, pb.eps, pb.xi, pb.dt);
    let h2 = g.h() * g.h();
    let diag = 2.0 * g.dim() as f64;
    let a = 1.0 / dt + diag * mu / h2;
    let b = xi / dt + diag / h2;
    assert!(mu * xi < 1.0);
    let mut u = u_old.to_vec();
    let mut v = v_old.to_vec();
    for _sweep in 0..100_000 {
        let mut change = 0.0f64;
        for k in 0..g.len() {
            let su = neighbour_sum(g, &u, k);
            let sv = neighbour_sum(g, &v, k);
            let c = u_old[k] / dt + mu * su / h2 + xi * v_old[k] / dt + sv / h2;
            let u_of = |z: f64| (c - b * z) / (a - b * mu);
            let e1 = |z: f64| {
                let uz = u_of(z);
                (uz - u_old[k]) / (mu * dt) + (diag * uz - su) / h2 + (uz - pb.law.alpha(z)) / eps
            };
            let z = bisect(e1, mu * u[k] + v[k]);
            let un = u_of(z);
            let vn = z - mu * un;
            change = change.max((un - u[k]).abs()).max((vn - v[k]).abs());
            u[k] = un;
            v[k] = vn;
        }
        if change < 1e-15 {
            break;
        }
    }
    (u, v)
}

/// One implicit fast-diffusion step by nonlinear Gauss-Seidel with scalar bisection.
pub fn fde_step(g: &Grid, law: &PowerLaw, dt: f64, z_old: &[f64]) -> Vec<f64> {
    let h2 = g.h() * g.h();
    let diag = 2.0 * g.dim() as f64;
    let mut z = z_old.to_vec();
    for _sweep in 0..100_000 {
        let mut change = 0.0f64;
        for k in 0..g.len() {
            let s = neighbour_sum(g, &z, k);
            let rhs = law.alpha(z_old[k]) / dt + s / h2;
            let zn = bisect(|x| law.alpha(x) / dt + diag * x / h2 - rhs, z[k]);
            change = change.max((zn - z[k]).abs());
            z[k] = zn;
        }
        if change < 1e-15 {
            break;
        }
    }
    z
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
