//! Divergence-form seven-point operator with mirrored ghost nodes.
//!
//! `L(c) u` at node `i` sums `c_face (u_nb - u_i) / h^2` over the six faces,
//! with `c_face` the mean of the two adjacent nodal values. A missing
//! neighbour on the boundary is replaced by the mirror image of the inner
//! one, which doubles the inner face term. With the lumped nodal weights
//! `M` this gives `L = M^-1 K` with `K` symmetric, so the Euclidean
//! transpose is `M L M^-1`.

use rayon::prelude::*;

use crate::grid::Grid3;

/// Grids at least this large are updated plane-parallel.
const PARALLEL_THRESHOLD: usize = 32_768;

#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    grid: Grid3,
    inv_h2: f64,
    mass: Vec<f64>,
}

impl Stencil {
    pub fn new(grid: &Grid3) -> Self {
        let mass = (0..grid.len()).map(|i| grid.nodal_weight(i)).collect();
        Self { grid: *grid, inv_h2: 1.0 / (grid.h * grid.h), mass }
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `out = L(c) u`.
    pub fn apply(&self, c: &[f64], u: &[f64], out: &mut [f64]) {
        let plane = self.grid.n[0] * self.grid.n[1];
        if self.grid.len() >= PARALLEL_THRESHOLD {
            out.par_chunks_mut(plane)
                .enumerate()
                .for_each(|(k, chunk)| self.apply_plane(k, c, u, chunk));
        } else {
            out.chunks_mut(plane).enumerate().for_each(|(k, chunk)| self.apply_plane(k, c, u, chunk));
        }
    }

    fn apply_plane(&self, k: usize, c: &[f64], u: &[f64], out: &mut [f64]) {
        let n = self.grid.n;
        let base = k * n[0] * n[1];
        for j in 0..n[1] {
            for i in 0..n[0] {
                let idx = base + i + n[0] * j;
                let ci = c[idx];
                let ui = u[idx];
                let mut acc = 0.0;
                for (axis, p) in [(0, i), (1, j), (2, k)] {
                    let s = self.grid.stride(axis);
                    let last = n[axis] - 1;
                    if p == 0 {
                        acc += (ci + c[idx + s]) * (u[idx + s] - ui);
                    } else if p == last {
                        acc += (ci + c[idx - s]) * (u[idx - s] - ui);
                    } else {
                        acc += 0.5 * (ci + c[idx + s]) * (u[idx + s] - ui)
                            + 0.5 * (ci + c[idx - s]) * (u[idx - s] - ui);
                    }
                }
                out[idx - base] = acc * self.inv_h2;
            }
        }
    }

    /// `out = L(c)^T mu = M L(c) (M^-1 mu)`; `scratch` holds `M^-1 mu`.
    pub fn apply_transpose(&self, c: &[f64], mu: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        for ((s, &m), &w) in scratch.iter_mut().zip(mu).zip(&self.mass) {
            *s = m / w;
        }
        self.apply(c, scratch, out);
        for (o, &w) in out.iter_mut().zip(&self.mass) {
            *o *= w;
        }
    }

    /// `grad += scale * d/dc [mu^T L(c) u]`. The operator is linear in `c`,
    /// so the result does not depend on the current coefficient.
    pub fn accumulate_coefficient_derivative(&self, mu: &[f64], u: &[f64], scale: f64, grad: &mut [f64]) {
        let n = self.grid.n;
        let plane = n[0] * n[1];
        let factor = 0.5 * self.inv_h2 * scale;
        let body = |k: usize, chunk: &mut [f64]| {
            let base = k * plane;
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let idx = base + i + n[0] * j;
                    let mut acc = 0.0;
                    for (axis, p) in [(0, i), (1, j), (2, k)] {
                        let s = self.grid.stride(axis);
                        let last = n[axis] - 1;
                        if p > 0 {
                            acc += self.edge(idx - s, idx, p - 1 == 0, p == last, mu, u);
                        }
                        if p < last {
                            acc += self.edge(idx, idx + s, p == 0, p + 1 == last, mu, u);
                        }
                    }
                    chunk[idx - base] += factor * acc;
                }
            }
        };
        if self.grid.len() >= PARALLEL_THRESHOLD {
            grad.par_chunks_mut(plane).enumerate().for_each(|(k, chunk)| body(k, chunk));
        } else {
            grad.chunks_mut(plane).enumerate().for_each(|(k, chunk)| body(k, chunk));
        }
    }

    /// Edge `(a, b)` with `b = a + stride`; `a_low` marks `a` on the low face,
    /// `b_high` marks `b` on the high face (ghost-doubled terms).
    #[inline]
    fn edge(&self, a: usize, b: usize, a_low: bool, b_high: bool, mu: &[f64], u: &[f64]) -> f64 {
        let fa = if a_low { 2.0 } else { 1.0 };
        let fb = if b_high { 2.0 } else { 1.0 };
        (fa * mu[a] - fb * mu[b]) * (u[b] - u[a])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Box3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_grid() -> Grid3 {
        build_grid(Box3::new([0.0; 3], [0.5, 0.4, 0.3]).unwrap(), 0.1).unwrap()
    }

    fn random(n: usize, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn constant_field_is_in_kernel() {
        let g = small_grid();
        let st = Stencil::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random(g.len(), &mut rng, 1.0, 3.0);
        let mut out = vec![1.0; g.len()];
        st.apply(&c, &vec![2.5; g.len()], &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn transpose_is_exact() {
        let g = small_grid();
        let st = Stencil::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = random(g.len(), &mut rng, 1.0, 3.0);
        let u = random(g.len(), &mut rng, -1.0, 1.0);
        let mu = random(g.len(), &mut rng, -1.0, 1.0);
        let mut lu = vec![0.0; g.len()];
        let mut ltmu = vec![0.0; g.len()];
        let mut scratch = vec![0.0; g.len()];
        st.apply(&c, &u, &mut lu);
        st.apply_transpose(&c, &mu, &mut scratch, &mut ltmu);
        let (a, b) = (dot(&mu, &lu), dot(&ltmu, &u));
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn coefficient_derivative_matches_linearity() {
        // mu^T L(c) u is linear in c, so the derivative dotted with dc equals
        // mu^T L(dc) u.
        let g = small_grid();
        let st = Stencil::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dc = random(g.len(), &mut rng, -1.0, 1.0);
        let u = random(g.len(), &mut rng, -1.0, 1.0);
        let mu = random(g.len(), &mut rng, -1.0, 1.0);
        let mut grad = vec![0.0; g.len()];
        st.accumulate_coefficient_derivative(&mu, &u, 1.0, &mut grad);
        let mut l_dc_u = vec![0.0; g.len()];
        st.apply(&dc, &u, &mut l_dc_u);
        let (a, b) = (dot(&grad, &dc), dot(&mu, &l_dc_u));
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn mirrored_boundary_is_second_order_for_neumann_data() {
        // u = cos(pi x / a) has zero normal derivative on both x faces;
        // L u should approximate -(pi/a)^2 u everywhere, boundary included.
        let g = build_grid(Box3::new([0.0; 3], [1.0, 0.2, 0.2]).unwrap(), 0.05).unwrap();
        let st = Stencil::new(&g);
        let k = std::f64::consts::PI;
        let u: Vec<f64> = (0..g.len()).map(|i| (k * g.coords(i)[0]).cos()).collect();
        let c = vec![1.0; g.len()];
        let mut out = vec![0.0; g.len()];
        st.apply(&c, &u, &mut out);
        let err = out.iter().zip(&u).map(|(o, v)| (o + k * k * v).abs()).fold(0.0, f64::max);
        assert!(err < 0.03, "{err}");
    }
}
