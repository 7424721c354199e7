//! Uniform periodic boxes, grid-file IO, trilinear sampling, and a 3D FFT
//! wrapper with the continuum Fourier normalization
//!     fhat(xi) = integral f(x) exp(-i xi.x) dx,
//!     f(x) = (2pi)^-3 integral fhat(xi) exp(i xi.x) dxi.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::{Result, WaveError};

/// Uniform grid on the box [-L_d, L_d) per axis, n_d points, spacing
/// h_d = 2 L_d / n_d. Point i sits at -L_d + i h_d.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    pub n: [usize; 3],
    pub extent: [f64; 3],
}

impl Grid3 {
    pub fn cube(n: usize, extent: f64) -> Self {
        Grid3 {
            n: [n; 3],
            extent: [extent; 3],
        }
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h(&self) -> [f64; 3] {
        [
            2.0 * self.extent[0] / self.n[0] as f64,
            2.0 * self.extent[1] / self.n[1] as f64,
            2.0 * self.extent[2] / self.n[2] as f64,
        ]
    }

    /// Volume element; every point carries this weight, so the weights sum
    /// to the box volume.
    pub fn cell_volume(&self) -> f64 {
        let h = self.h();
        h[0] * h[1] * h[2]
    }

    pub fn idx(&self, i: [usize; 3]) -> usize {
        (i[0] * self.n[1] + i[1]) * self.n[2] + i[2]
    }

    pub fn index3(&self, flat: usize) -> [usize; 3] {
        let i2 = flat % self.n[2];
        let r = flat / self.n[2];
        [r / self.n[1], r % self.n[1], i2]
    }

    pub fn point(&self, i: [usize; 3]) -> [f64; 3] {
        let h = self.h();
        [
            -self.extent[0] + i[0] as f64 * h[0],
            -self.extent[1] + i[1] as f64 * h[1],
            -self.extent[2] + i[2] as f64 * h[2],
        ]
    }

    pub fn point_flat(&self, flat: usize) -> [f64; 3] {
        self.point(self.index3(flat))
    }

    /// FFT-ordered frequency along `axis`: index i maps to xi = pi*m/L with
    /// m = i for i < n/2 and m = i - n otherwise.
    pub fn freq(&self, axis: usize, i: usize) -> f64 {
        let n = self.n[axis];
        let m = if i < n.div_ceil(2) {
            i as i64
        } else {
            i as i64 - n as i64
        };
        std::f64::consts::PI * m as f64 / self.extent[axis]
    }

    pub fn freqs(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|i| self.freq(axis, i)).collect()
    }

    pub fn freq_flat(&self, flat: usize) -> [f64; 3] {
        let i = self.index3(flat);
        [
            self.freq(0, i[0]),
            self.freq(1, i[1]),
            self.freq(2, i[2]),
        ]
    }

    /// Frequency-space cell volume (2pi)^3 / box volume.
    pub fn freq_cell_volume(&self) -> f64 {
        let tp = 2.0 * std::f64::consts::PI;
        tp * tp * tp / (8.0 * self.extent[0] * self.extent[1] * self.extent[2])
    }
}

/// Evaluate a scalar field sampled on `grid` at an arbitrary point by
/// trilinear interpolation. Points outside the interpolable region give 0.
pub fn trilinear(grid: &Grid3, values: &[Complex64], p: [f64; 3]) -> Complex64 {
    debug_assert_eq!(values.len(), grid.len());
    let h = grid.h();
    let mut base = [0usize; 3];
    let mut frac = [0f64; 3];
    for d in 0..3 {
        let t = (p[d] + grid.extent[d]) / h[d];
        if !(0.0..=(grid.n[d] - 1) as f64).contains(&t) {
            return Complex64::new(0.0, 0.0);
        }
        let i = (t.floor() as usize).min(grid.n[d] - 2);
        base[d] = i;
        frac[d] = t - i as f64;
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for c0 in 0..2 {
        for c1 in 0..2 {
            for c2 in 0..2 {
                let w = (if c0 == 0 { 1.0 - frac[0] } else { frac[0] })
                    * (if c1 == 0 { 1.0 - frac[1] } else { frac[1] })
                    * (if c2 == 0 { 1.0 - frac[2] } else { frac[2] });
                if w == 0.0 {
                    continue;
                }
                acc += values[grid.idx([base[0] + c0, base[1] + c1, base[2] + c2])] * w;
            }
        }
    }
    acc
}

/// Tricubic Lagrange interpolation on the uniform grid: exact on per-axis
/// cubics, O(h^4) on smooth data. Falls back to trilinear where the 4-point
/// stencil would leave the grid; 0 outside the interpolable region.
pub fn tricubic(grid: &Grid3, values: &[Complex64], p: [f64; 3]) -> Complex64 {
    debug_assert_eq!(values.len(), grid.len());
    let h = grid.h();
    let mut base = [0usize; 3];
    let mut w = [[0f64; 4]; 3];
    for d in 0..3 {
        let t = (p[d] + grid.extent[d]) / h[d];
        if !(0.0..=(grid.n[d] - 1) as f64).contains(&t) {
            return Complex64::new(0.0, 0.0);
        }
        let i = (t.floor() as usize).min(grid.n[d] - 2);
        if i == 0 || i + 2 >= grid.n[d] {
            return trilinear(grid, values, p);
        }
        let u = t - i as f64;
        base[d] = i - 1;
        w[d][0] = -u * (u - 1.0) * (u - 2.0) / 6.0;
        w[d][1] = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
        w[d][2] = -(u + 1.0) * u * (u - 2.0) / 2.0;
        w[d][3] = (u + 1.0) * u * (u - 1.0) / 6.0;
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for c0 in 0..4 {
        let w0 = w[0][c0];
        for c1 in 0..4 {
            let w01 = w0 * w[1][c1];
            let row = grid.idx([base[0] + c0, base[1] + c1, base[2]]);
            for c2 in 0..4 {
                acc += values[row + c2] * (w01 * w[2][c2]);
            }
        }
    }
    acc
}

pub fn trilinear_real(grid: &Grid3, values: &[f64], p: [f64; 3]) -> f64 {
    debug_assert_eq!(values.len(), grid.len());
    let h = grid.h();
    let mut base = [0usize; 3];
    let mut frac = [0f64; 3];
    for d in 0..3 {
        let t = (p[d] + grid.extent[d]) / h[d];
        if !(0.0..=(grid.n[d] - 1) as f64).contains(&t) {
            return 0.0;
        }
        let i = (t.floor() as usize).min(grid.n[d] - 2);
        base[d] = i;
        frac[d] = t - i as f64;
    }
    let mut acc = 0.0;
    for c0 in 0..2 {
        for c1 in 0..2 {
            for c2 in 0..2 {
                let w = (if c0 == 0 { 1.0 - frac[0] } else { frac[0] })
                    * (if c1 == 0 { 1.0 - frac[1] } else { frac[1] })
                    * (if c2 == 0 { 1.0 - frac[2] } else { frac[2] });
                if w == 0.0 {
                    continue;
                }
                acc += values[grid.idx([base[0] + c0, base[1] + c1, base[2] + c2])] * w;
            }
        }
    }
    acc
}

/// L2 norm of a grid field, cell-weighted.
pub fn l2_norm(grid: &Grid3, f: &[Complex64]) -> f64 {
    let s: f64 = f.iter().map(|z| z.norm_sqr()).sum();
    (s * grid.cell_volume()).sqrt()
}

/// Inner product <f, g> = integral conj(f) g, cell-weighted.
pub fn inner(grid: &Grid3, f: &[Complex64], g: &[Complex64]) -> Complex64 {
    let s: Complex64 = f.iter().zip(g).map(|(a, b)| a.conj() * b).sum();
    s * grid.cell_volume()
}

/// Three-axis complex FFT on a Grid3-shaped buffer.
pub struct Fft3 {
    n: [usize; 3],
    fwd: [Arc<dyn rustfft::Fft<f64>>; 3],
    inv: [Arc<dyn rustfft::Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(grid: &Grid3) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = [
            planner.plan_fft_forward(grid.n[0]),
            planner.plan_fft_forward(grid.n[1]),
            planner.plan_fft_forward(grid.n[2]),
        ];
        let inv = [
            planner.plan_fft_inverse(grid.n[0]),
            planner.plan_fft_inverse(grid.n[1]),
            planner.plan_fft_inverse(grid.n[2]),
        ];
        Fft3 { n: grid.n, fwd, inv }
    }

    fn apply_axis(&self, data: &mut [Complex64], axis: usize, forward: bool) {
        let plan = if forward {
            &self.fwd[axis]
        } else {
            &self.inv[axis]
        };
        let len = self.n[axis];
        let scratch_len = plan.get_inplace_scratch_len();
        if axis == 2 {
            data.par_chunks_mut(len)
                .for_each_init(
                    || vec![Complex64::new(0.0, 0.0); scratch_len],
                    |scratch, line| plan.process_with_scratch(line, scratch),
                );
            return;
        }
        // gather lines along a non-contiguous axis, transform, scatter back
        let (n0, n1, n2) = (self.n[0], self.n[1], self.n[2]);
        let stride = if axis == 0 { n1 * n2 } else { n2 };
        let line_starts: Vec<usize> = if axis == 0 {
            (0..n1 * n2).collect()
        } else {
            (0..n0)
                .flat_map(|i0| (0..n2).map(move |i2| i0 * n1 * n2 + i2))
                .collect()
        };
        let mut lines = vec![Complex64::new(0.0, 0.0); line_starts.len() * len];
        lines
            .par_chunks_mut(len)
            .zip(line_starts.par_iter())
            .for_each(|(buf, &s)| {
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = data[s + k * stride];
                }
            });
        lines.par_chunks_mut(len).for_each_init(
            || vec![Complex64::new(0.0, 0.0); scratch_len],
            |scratch, line| plan.process_with_scratch(line, scratch),
        );
        for (buf, &s) in lines.chunks(len).zip(line_starts.iter()) {
            for (k, b) in buf.iter().enumerate() {
                data[s + k * stride] = *b;
            }
        }
    }

    /// In-place unnormalized forward DFT along all three axes.
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n[0] * self.n[1] * self.n[2]);
        for axis in 0..3 {
            self.apply_axis(data, axis, true);
        }
    }

    /// In-place inverse DFT, normalized so inverse(forward(f)) == f.
    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n[0] * self.n[1] * self.n[2]);
        for axis in 0..3 {
            self.apply_axis(data, axis, false);
        }
        let scale = 1.0 / data.len() as f64;
        data.par_iter_mut().for_each(|z| *z *= scale);
    }
}

/// Continuum Fourier coefficients fhat(xi_m) on the FFT frequency layout:
/// applies the grid phases and the cell volume so the result approximates
/// integral f(x) exp(-i xi.x) dx.
pub fn fourier_grid(grid: &Grid3, fft: &Fft3, f: &[Complex64]) -> Vec<Complex64> {
    let mut data = f.to_vec();
    fft.forward(&mut data);
    let vol = grid.cell_volume();
    data.par_iter_mut().enumerate().for_each(|(flat, z)| {
        let i = grid.index3(flat);
        // exp(-i xi_m . x_0) with x_0 = -L: phase (-1)^(m0+m1+m2)
        let mut sign = 1.0;
        for d in 0..3 {
            let n = grid.n[d];
            let m = if i[d] < n.div_ceil(2) {
                i[d] as i64
            } else {
                i[d] as i64 - n as i64
            };
            if m.rem_euclid(2) == 1 {
                sign = -sign;
            }
        }
        *z *= sign * vol;
    });
    data
}

/// Inverse of `fourier_grid`.
pub fn inv_fourier_grid(grid: &Grid3, fft: &Fft3, fhat: &[Complex64]) -> Vec<Complex64> {
    let mut data = fhat.to_vec();
    let vol = grid.cell_volume();
    data.par_iter_mut().enumerate().for_each(|(flat, z)| {
        let i = grid.index3(flat);
        let mut sign = 1.0;
        for d in 0..3 {
            let n = grid.n[d];
            let m = if i[d] < n.div_ceil(2) {
                i[d] as i64
            } else {
                i[d] as i64 - n as i64
            };
            if m.rem_euclid(2) == 1 {
                sign = -sign;
            }
        }
        *z *= sign / vol;
    });
    fft.inverse(&mut data);
    data
}

/// Binary scalar-grid file: three u64 dims, three f64 extents, then
/// row-major f64 samples, all little-endian.
pub fn write_scalar_grid(path: &Path, grid: &Grid3, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(WaveError::GridMismatch(format!(
            "{} values for {} grid points",
            values.len(),
            grid.len()
        )));
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for d in 0..3 {
        w.write_all(&(grid.n[d] as u64).to_le_bytes())?;
    }
    for d in 0..3 {
        w.write_all(&grid.extent[d].to_le_bytes())?;
    }
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scalar_grid(path: &Path) -> Result<(Grid3, Vec<f64>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut b8 = [0u8; 8];
    let mut n = [0usize; 3];
    for d in &mut n {
        r.read_exact(&mut b8)?;
        *d = u64::from_le_bytes(b8) as usize;
    }
    let mut extent = [0f64; 3];
    for e in &mut extent {
        r.read_exact(&mut b8)?;
        *e = f64::from_le_bytes(b8);
    }
    let grid = Grid3 { n, extent };
    let count = grid.len();
    if count == 0 || count > (1 << 32) {
        return Err(WaveError::BadGridFile(format!("implausible dims {:?}", n)));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(WaveError::BadGridFile("trailing bytes".into()));
    }
    Ok((grid, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn weights_sum_to_box_volume() {
        let g = Grid3::cube(20, 7.5);
        assert_relative_eq!(
            g.cell_volume() * g.len() as f64,
            15.0f64.powi(3),
            epsilon = 1e-9
        );
    }

    #[test]
    fn fft_roundtrip() {
        let g = Grid3::cube(16, 4.0);
        let fft = Fft3::new(&g);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let f: Vec<Complex64> = (0..g.len())
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let mut data = f.clone();
        fft.forward(&mut data);
        fft.inverse(&mut data);
        let err: f64 = data
            .iter()
            .zip(&f)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "roundtrip error {err}");
    }

    #[test]
    fn continuum_fourier_of_gaussian() {
        // f = exp(-|x|^2/2) has fhat(xi) = (2pi)^(3/2) exp(-|xi|^2/2)
        let g = Grid3::cube(32, 12.0);
        let fft = Fft3::new(&g);
        let f: Vec<Complex64> = (0..g.len())
            .map(|k| {
                let p = g.point_flat(k);
                let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
                Complex64::new((-r2 / 2.0).exp(), 0.0)
            })
            .collect();
        let fhat = fourier_grid(&g, &fft, &f);
        let c = (2.0 * std::f64::consts::PI).powf(1.5);
        for flat in [0, 1, 40, g.idx([3, 30, 5]), g.idx([16, 16, 16])] {
            let xi = g.freq_flat(flat);
            let q2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
            let want = c * (-q2 / 2.0).exp();
            let got = fhat[flat];
            // floor set by the first alias image, ~4e-8 on this grid
            assert!(
                (got.re - want).abs() < 1e-7 && got.im.abs() < 1e-7,
                "flat {flat}: got {got} want {want}"
            );
        }
        let back = inv_fourier_grid(&g, &fft, &fhat);
        let err: f64 = back
            .iter()
            .zip(&f)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn trilinear_reproduces_linear_functions() {
        let g = Grid3::cube(10, 2.0);
        let f: Vec<Complex64> = (0..g.len())
            .map(|k| {
                let p = g.point_flat(k);
                Complex64::new(1.0 + 2.0 * p[0] - p[1] + 0.5 * p[2], p[0] + p[2])
            })
            .collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = [
                rng.gen_range(-1.9..1.5),
                rng.gen_range(-1.9..1.5),
                rng.gen_range(-1.9..1.5),
            ];
            let got = trilinear(&g, &f, p);
            let want = Complex64::new(1.0 + 2.0 * p[0] - p[1] + 0.5 * p[2], p[0] + p[2]);
            assert!((got - want).norm() < 1e-12);
        }
        assert_eq!(
            trilinear(&g, &f, [2.5, 0.0, 0.0]),
            Complex64::new(0.0, 0.0)
        );
    }

    #[test]
    fn tricubic_reproduces_per_axis_cubics() {
        let g = Grid3::cube(12, 3.0);
        let poly = |p: [f64; 3]| {
            let c = p[0] * p[0] * p[0] - 0.4 * p[1] * p[1] * p[1] + 0.7 * p[2] * p[2];
            Complex64::new(c + p[0] * p[1] * p[2], 0.3 * p[0] * p[0] * p[1] - p[2])
        };
        let f: Vec<Complex64> = (0..g.len()).map(|k| poly(g.point_flat(k))).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            // interior points where the full 4-point stencil applies
            let p = [
                rng.gen_range(-2.4..1.9),
                rng.gen_range(-2.4..1.9),
                rng.gen_range(-2.4..1.9),
            ];
            let got = tricubic(&g, &f, p);
            assert!((got - poly(p)).norm() < 1e-11);
        }
        assert_eq!(tricubic(&g, &f, [3.5, 0.0, 0.0]), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn grid_file_roundtrip() {
        let g = Grid3 {
            n: [6, 5, 4],
            extent: [3.0, 2.5, 2.0],
        };
        let vals: Vec<f64> = (0..g.len()).map(|i| (i as f64).sin()).collect();
        let path = std::env::temp_dir().join("wavecore_grid_roundtrip.bin");
        write_scalar_grid(&path, &g, &vals).unwrap();
        let (g2, v2) = read_scalar_grid(&path).unwrap();
        assert_eq!(g, g2);
        assert_eq!(vals, v2);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn parseval_on_grid() {
        let g = Grid3::cube(12, 3.0);
        let fft = Fft3::new(&g);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let f: Vec<Complex64> = (0..g.len())
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let fhat = fourier_grid(&g, &fft, &f);
        let lhs = l2_norm(&g, &f).powi(2);
        let rhs: f64 = fhat.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.freq_cell_volume()
            / (2.0 * std::f64::consts::PI).powi(3);
        assert_relative_eq!(lhs, rhs, epsilon = 1e-10);
    }
}
