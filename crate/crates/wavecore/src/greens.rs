//! Free and perturbed resolvent kernels on grids, zero-energy diagnostics,
//! and bound-state extraction.

use crate::grid::{Fft3, Grid3};
use crate::potential::Potential;
use crate::{Complex64, Result, WaveError};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::io::{Read as _, Write as _};

/// Dense kernel on a point cloud. Rows index the output point, columns the
/// input point; quadrature weights are folded into the columns, so `entries * f`
/// already approximates the integral operator.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub entries: DMatrix<Complex64>,
    pub eta: Option<[f64; 3]>,
}

impl KernelOperator {
    pub fn new(
        points: Vec<[f64; 3]>,
        weights: Vec<f64>,
        entries: DMatrix<Complex64>,
        eta: Option<[f64; 3]>,
    ) -> Result<Self> {
        let n = points.len();
        if weights.len() != n || entries.nrows() != n || entries.ncols() != n {
            return Err(WaveError::GridMismatch(
                "kernel operator fields disagree in size".into(),
            ));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(WaveError::Invalid("non-finite kernel entry".into()));
        }
        Ok(KernelOperator {
            points,
            weights,
            entries,
            eta,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        let v = DVector::from_column_slice(f);
        (&self.entries * v).iter().copied().collect()
    }
}

/// e^{i lambda |x-y|} / (4 pi |x-y|), upper half-plane branch.
pub fn free_resolvent_kernel(lambda: Complex64, x: [f64; 3], y: [f64; 3]) -> Result<Complex64> {
    if lambda.im < 0.0 {
        return Err(WaveError::LowerHalfPlane(lambda.im));
    }
    let r = dist(x, y);
    if r < 1e-14 {
        return Err(WaveError::DiagonalSingularity);
    }
    Ok((Complex64::i() * lambda * r).exp() / (4.0 * PI * r))
}

/// (R0(l+i0) - R0(l-i0))/i for real l: sin(l r)/(2 pi r), smooth at r = 0.
pub fn resolvent_jump_kernel(lambda: f64, x: [f64; 3], y: [f64; 3]) -> f64 {
    let r = dist(x, y);
    if lambda.abs() * r < 1e-8 {
        return lambda / (2.0 * PI) * (1.0 - (lambda * r).powi(2) / 6.0);
    }
    (lambda * r).sin() / (2.0 * PI * r)
}

fn dist(x: [f64; 3], y: [f64; 3]) -> f64 {
    let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Mean of the kernel over a ball of the same volume as a cell of side h.
/// Integrating e^{i l r}/(4 pi r) over |z| < R gives
/// (e^{i l R}(i l R - 1) + 1)/(i l)^2, divided by the ball volume.
pub fn ball_mean_diagonal(lambda: Complex64, h: f64) -> Complex64 {
    let r_eff = h * (3.0 / (4.0 * PI)).powf(1.0 / 3.0);
    let vol = 4.0 * PI * r_eff.powi(3) / 3.0;
    if lambda.norm() * r_eff < 1e-6 {
        return Complex64::new(r_eff * r_eff / 2.0 / vol, 0.0)
            + Complex64::i() * lambda * r_eff.powi(3) / 3.0 / vol;
    }
    let a = Complex64::i() * lambda;
    let integral = ((a * r_eff).exp() * (a * r_eff - 1.0) + 1.0) / (a * a);
    integral / vol
}

fn check_wavelength(lambda: Complex64, grid: &Grid3) -> Result<()> {
    if lambda.re.abs() > 0.0 {
        let wavelength = 2.0 * PI / lambda.re.abs();
        let hmax = grid.h().iter().cloned().fold(0.0f64, f64::max);
        if hmax > wavelength / 4.0 {
            return Err(WaveError::Invalid(format!(
                "grid spacing {:.3} resolves fewer than 4 points per wavelength {:.3}",
                hmax, wavelength
            )));
        }
    }
    Ok(())
}

/// Nystrom matrix of R0(lambda^2) on the full grid, diagonal regularized by
/// the equal-volume ball mean. Dense: keep the grid small.
pub fn assemble_free_resolvent(lambda: Complex64, grid: &Grid3) -> Result<KernelOperator> {
    if lambda.im < 0.0 {
        return Err(WaveError::LowerHalfPlane(lambda.im));
    }
    check_wavelength(lambda, grid)?;
    let n = grid.len();
    let h = grid.h();
    let w = grid.cell_volume();
    let hmean = (h[0] * h[1] * h[2]).powf(1.0 / 3.0);
    let diag = ball_mean_diagonal(lambda, hmean) * w;
    let points: Vec<[f64; 3]> = (0..n).map(|i| grid.point_flat(i)).collect();
    let mut entries = DMatrix::zeros(n, n);
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(n);
            for j in 0..n {
                if i == j {
                    row.push(diag);
                } else {
                    let r = dist(points[i], points[j]);
                    row.push((Complex64::i() * lambda * r).exp() / (4.0 * PI * r) * w);
                }
            }
            row
        })
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        for (j, z) in row.into_iter().enumerate() {
            entries[(i, j)] = z;
        }
    }
    KernelOperator::new(points, vec![w; n], entries, None)
}

/// R0(lambda^2) f by zero-padded FFT convolution; same entries as the dense
/// Nystrom matrix (Toeplitz structure), usable at grids the matrix cannot reach.
pub fn apply_free_resolvent(
    lambda: Complex64,
    grid: &Grid3,
    f: &[Complex64],
) -> Result<Vec<Complex64>> {
    if lambda.im < 0.0 {
        return Err(WaveError::LowerHalfPlane(lambda.im));
    }
    check_wavelength(lambda, grid)?;
    if f.len() != grid.len() {
        return Err(WaveError::GridMismatch(
            "field length does not match grid".into(),
        ));
    }
    let h = grid.h();
    let w = grid.cell_volume();
    let hmean = (h[0] * h[1] * h[2]).powf(1.0 / 3.0);
    let diag = ball_mean_diagonal(lambda, hmean) * w;
    let big = Grid3 {
        n: [2 * grid.n[0], 2 * grid.n[1], 2 * grid.n[2]],
        extent: [
            2.0 * grid.extent[0],
            2.0 * grid.extent[1],
            2.0 * grid.extent[2],
        ],
    };
    let fft = Fft3::new(&big);
    // kernel table indexed by periodic offset
    let mut ker = vec![Complex64::new(0.0, 0.0); big.len()];
    for flat in 0..big.len() {
        let i = big.index3(flat);
        let mut r2 = 0.0;
        for d in 0..3 {
            let m = if i[d] <= big.n[d] / 2 {
                i[d] as f64
            } else {
                i[d] as f64 - big.n[d] as f64
            };
            let dx = m * h[d];
            r2 += dx * dx;
        }
        if r2 < 1e-28 {
            ker[flat] = diag;
        } else {
            let r = r2.sqrt();
            ker[flat] = (Complex64::i() * lambda * r).exp() / (4.0 * PI * r) * w;
        }
    }
    let mut fpad = vec![Complex64::new(0.0, 0.0); big.len()];
    for flat in 0..grid.len() {
        let i = grid.index3(flat);
        fpad[big.idx(i)] = f[flat];
    }
    fft.forward(&mut ker);
    fft.forward(&mut fpad);
    for (k, f) in ker.iter_mut().zip(&fpad) {
        *k *= f;
    }
    fft.inverse(&mut ker);
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    for flat in 0..grid.len() {
        let i = grid.index3(flat);
        out[flat] = ker[big.idx(i)];
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Generic,
    EigenvalueOrResonance,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Generic => "generic",
            Verdict::EigenvalueOrResonance => "eigenvalue_or_resonance",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralDiagnosis {
    pub min_singular_value: f64,
    pub verdict: Verdict,
    pub bound_states: Vec<(f64, Vec<f64>)>,
    pub resolution_margin: f64,
}

impl SpectralDiagnosis {
    pub fn to_json(&self) -> String {
        let energies: Vec<String> = self
            .bound_states
            .iter()
            .map(|(e, _)| format!("{:.12e}", e))
            .collect();
        format!(
            "{{\"min_singular_value\":{:.12e},\"verdict\":\"{}\",\"resolution_margin\":{:.6},\"bound_state_energies\":[{}]}}",
            self.min_singular_value,
            self.verdict.as_str(),
            self.resolution_margin,
            energies.join(",")
        )
    }
}

/// Mean of V over the grid cell centered at p. Cells where the corner values
/// agree keep the center sample; the rest get a midpoint subgrid, which keeps
/// discontinuous wells at O(h^2) instead of O(h) boundary misclassification.
pub fn cell_mean_potential(v: &Potential, p: [f64; 3], h: [f64; 3]) -> f64 {
    let c = v.eval(p);
    let mut lo = c;
    let mut hi = c;
    for sx in [-0.5f64, 0.5] {
        for sy in [-0.5f64, 0.5] {
            for sz in [-0.5f64, 0.5] {
                let val = v.eval([p[0] + sx * h[0], p[1] + sy * h[1], p[2] + sz * h[2]]);
                lo = lo.min(val);
                hi = hi.max(val);
            }
        }
    }
    if hi - lo <= 1e-12 * (hi.abs() + lo.abs()) {
        return c;
    }
    let m = 6;
    let mut acc = 0.0;
    for ix in 0..m {
        for iy in 0..m {
            for iz in 0..m {
                let q = [
                    p[0] + ((ix as f64 + 0.5) / m as f64 - 0.5) * h[0],
                    p[1] + ((iy as f64 + 0.5) / m as f64 - 0.5) * h[1],
                    p[2] + ((iz as f64 + 0.5) / m as f64 - 0.5) * h[2],
                ];
                acc += v.eval(q);
            }
        }
    }
    acc / (m * m * m) as f64
}

/// Indices of grid points where |V| is above rel_cut times its max.
pub fn active_points(v: &Potential, grid: &Grid3, rel_cut: f64) -> Vec<usize> {
    let vals: Vec<f64> = (0..grid.len()).map(|i| v.eval(grid.point_flat(i))).collect();
    let vmax = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if vmax == 0.0 {
        return Vec::new();
    }
    (0..grid.len())
        .filter(|&i| vals[i].abs() > rel_cut * vmax)
        .collect()
}

/// I + R0(0) diag(V w) compressed to the active points of V. Invertibility of
/// the full operator reduces to this block: the complement rows are triangular.
fn zero_energy_matrix(v: &Potential, grid: &Grid3) -> (Vec<usize>, DMatrix<Complex64>) {
    let h = grid.h();
    let means: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| cell_mean_potential(v, grid.point_flat(i), h))
        .collect();
    let vmax = means.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let act: Vec<usize> = (0..grid.len())
        .filter(|&i| means[i].abs() > 1e-12 * vmax.max(1e-300))
        .collect();
    let m = act.len();
    let w = grid.cell_volume();
    let hmean = (h[0] * h[1] * h[2]).powf(1.0 / 3.0);
    let diag = ball_mean_diagonal(Complex64::new(0.0, 0.0), hmean).re * w;
    let pts: Vec<[f64; 3]> = act.iter().map(|&i| grid.point_flat(i)).collect();
    let vals: Vec<f64> = act.iter().map(|&i| means[i]).collect();
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let g = if i == j {
                diag
            } else {
                w / (4.0 * PI * dist(pts[i], pts[j]))
            };
            a[(i, j)] = Complex64::new(g * vals[j], 0.0);
        }
        a[(i, i)] += Complex64::new(1.0, 0.0);
    }
    (act, a)
}

/// Smallest singular value of a dense matrix: LU-based inverse iteration on
/// A* A. Exact SVD would be cubic with a large constant at these sizes.
pub fn dense_sigma_min(a: &DMatrix<Complex64>) -> f64 {
    let m = a.nrows();
    if m == 0 {
        return 1.0;
    }
    let lu = a.clone().lu();
    let lu_h = a.adjoint().lu();
    let mut x = DVector::from_fn(m, |i, _| {
        Complex64::new(((i * 2654435761 + 1) % 1000) as f64 / 1000.0 - 0.5, 0.3)
    });
    x /= Complex64::new(x.norm(), 0.0);
    let mut last = 0.0f64;
    for _ in 0..60 {
        // x <- (A* A)^{-1} x via two triangular solves; singular LU means an
        // exact zero singular value
        let y = match lu_h.solve(&x) {
            Some(y) => y,
            None => return 0.0,
        };
        let z = match lu.solve(&y) {
            Some(z) => z,
            None => return 0.0,
        };
        let nz = z.norm();
        if !nz.is_finite() || nz == 0.0 {
            return 0.0;
        }
        x = z / Complex64::new(nz, 0.0);
        if (nz - last).abs() < 1e-10 * nz {
            break;
        }
        last = nz;
    }
    (a * &x).norm()
}

/// Zero-energy diagnostic: sigma_min of I + R0(0)V at the given grid and a
/// 2x-coarser one, verdict from stability under refinement, plus the discrete
/// bound-state list.
pub fn zero_energy_check(v: &Potential, grid: &Grid3, threshold: f64) -> Result<SpectralDiagnosis> {
    let coarse = Grid3 {
        n: [
            (grid.n[0] / 2).max(8),
            (grid.n[1] / 2).max(8),
            (grid.n[2] / 2).max(8),
        ],
        extent: grid.extent,
    };
    let (act_f, af) = zero_energy_matrix(v, grid);
    let (_, ac) = zero_energy_matrix(v, &coarse);
    let (sf, sc) = if act_f.is_empty() {
        (1.0, 1.0)
    } else {
        (dense_sigma_min(&af), dense_sigma_min(&ac))
    };
    let ratio = if sf > 0.0 { sc / sf } else { f64::INFINITY };
    let margin = ratio.max(1.0 / ratio.max(1e-300)).max(1.0).min(1e6);
    let bound = bound_states_auto(v)?;
    let verdict = if sf <= threshold {
        // singular already at the fine grid
        Verdict::EigenvalueOrResonance
    } else if margin > 4.0 {
        Verdict::Inconclusive
    } else if sf > threshold * margin {
        Verdict::Generic
    } else {
        Verdict::EigenvalueOrResonance
    };
    Ok(SpectralDiagnosis {
        min_singular_value: sf,
        verdict,
        bound_states: bound,
        resolution_margin: margin,
    })
}

/// Largest eigenvalue of |V|^{1/2} R0(0) |V|^{1/2} on the active points of the
/// grid; for attractive V the coupling g V turns resonant at g = 1/rho.
pub fn coupling_spectral_radius(v: &Potential, grid: &Grid3) -> f64 {
    let h = grid.h();
    let means: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| cell_mean_potential(v, grid.point_flat(i), h))
        .collect();
    let vmax = means.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let act: Vec<usize> = (0..grid.len())
        .filter(|&i| means[i].abs() > 1e-12 * vmax.max(1e-300))
        .collect();
    let m = act.len();
    if m == 0 {
        return 0.0;
    }
    let w = grid.cell_volume();
    let hmean = (h[0] * h[1] * h[2]).powf(1.0 / 3.0);
    let diag = ball_mean_diagonal(Complex64::new(0.0, 0.0), hmean).re * w;
    let pts: Vec<[f64; 3]> = act.iter().map(|&i| grid.point_flat(i)).collect();
    let sq: Vec<f64> = act.iter().map(|&i| means[i].abs().sqrt()).collect();
    let mut s = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let g = if i == j {
                diag
            } else {
                w / (4.0 * PI * dist(pts[i], pts[j]))
            };
            s[(i, j)] = sq[i] * g * sq[j];
        }
    }
    let mut x = DVector::from_element(m, 1.0f64);
    x /= x.norm();
    let mut lam = 0.0;
    for _ in 0..400 {
        let y = &s * &x;
        let ny = y.norm();
        if ny == 0.0 {
            return 0.0;
        }
        let new_lam = x.dot(&y);
        x = y / ny;
        if (new_lam - lam).abs() < 1e-12 * new_lam.abs() {
            lam = new_lam;
            break;
        }
        lam = new_lam;
    }
    lam
}

/// R_V(lambda^2) = (I + R0 V)^{-1} R0 as a dense kernel on the full grid.
/// The solve is compressed to the active points: R_V = R0 - R0|cols W X with
/// (I + G W) X = R0|rows, W = diag(V w).
pub fn perturbed_resolvent(
    v: &Potential,
    lambda: Complex64,
    grid: &Grid3,
) -> Result<KernelOperator> {
    let r0 = assemble_free_resolvent(lambda, grid)?;
    let n = grid.len();
    let act = active_points(v, grid, 1e-12);
    let m = act.len();
    if m == 0 {
        return Ok(r0);
    }
    let vals: Vec<f64> = act.iter().map(|&i| v.eval(grid.point_flat(i))).collect();
    // A = I + (R0 rows at active) diag(V) restricted to active columns;
    // the weight is already folded into the R0 entries.
    let mut a = DMatrix::<Complex64>::identity(m, m);
    for (bi, &i) in act.iter().enumerate() {
        for (bj, &j) in act.iter().enumerate() {
            a[(bi, bj)] += r0.entries[(i, j)] * vals[bj];
        }
    }
    let sig = dense_sigma_min(&a);
    let scale = a.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if sig < 1e-12 * scale.max(1.0) {
        return Err(WaveError::SolveFailed(format!(
            "I + R0 V nearly singular (sigma_min {:.3e}) at lambda^2 = {:.6}+{:.6}i",
            sig,
            (lambda * lambda).re,
            (lambda * lambda).im
        )));
    }
    let lu = a.lu();
    // rows of R0 at active points
    let mut rhs = DMatrix::<Complex64>::zeros(m, n);
    for (bi, &i) in act.iter().enumerate() {
        for j in 0..n {
            rhs[(bi, j)] = r0.entries[(i, j)];
        }
    }
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| WaveError::SolveFailed("LU solve failed".into()))?;
    // R_V = R0 - R0|cols diag(V) X
    let mut cols = DMatrix::<Complex64>::zeros(n, m);
    for i in 0..n {
        for (bj, &j) in act.iter().enumerate() {
            cols[(i, bj)] = r0.entries[(i, j)] * vals[bj];
        }
    }
    let entries = &r0.entries - cols * x;
    KernelOperator::new(r0.points, r0.weights, entries, None)
}

/// Seven-point stencil for -Laplacian + V, matrix-free.
struct Hamiltonian<'a> {
    grid: &'a Grid3,
    vdiag: Vec<f64>,
}

impl<'a> Hamiltonian<'a> {
    fn new(v: &Potential, grid: &'a Grid3) -> Self {
        let h = grid.h();
        let vdiag = (0..grid.len())
            .into_par_iter()
            .map(|i| cell_mean_potential(v, grid.point_flat(i), h))
            .collect();
        Hamiltonian { grid, vdiag }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.grid.n;
        let h = self.grid.h();
        let inv = [1.0 / (h[0] * h[0]), 1.0 / (h[1] * h[1]), 1.0 / (h[2] * h[2])];
        let c0 = 2.0 * (inv[0] + inv[1] + inv[2]);
        let (n0, n1, n2) = (n[0], n[1], n[2]);
        out.par_chunks_mut(n1 * n2)
            .enumerate()
            .for_each(|(i, plane)| {
                for j in 0..n1 {
                    for k in 0..n2 {
                        let flat = (i * n1 + j) * n2 + k;
                        let mut acc = (c0 + self.vdiag[flat]) * x[flat];
                        if i > 0 {
                            acc -= inv[0] * x[flat - n1 * n2];
                        }
                        if i + 1 < n0 {
                            acc -= inv[0] * x[flat + n1 * n2];
                        }
                        if j > 0 {
                            acc -= inv[1] * x[flat - n2];
                        }
                        if j + 1 < n1 {
                            acc -= inv[1] * x[flat + n2];
                        }
                        if k > 0 {
                            acc -= inv[2] * x[flat - 1];
                        }
                        if k + 1 < n2 {
                            acc -= inv[2] * x[flat + 1];
                        }
                        plane[j * n2 + k] = acc;
                    }
                }
            });
    }
}

/// Negative eigenvalues of the discretized -Laplacian + V with L2-normalized,
/// mutually orthogonal eigenvectors. Lanczos with full reorthogonalization on
/// -H; the discrete spectrum sits isolated above the continuum edge.
pub fn bound_states(v: &Potential, grid: &Grid3) -> Result<Vec<(f64, Vec<f64>)>> {
    let ham = Hamiltonian::new(v, grid);
    if ham.vdiag.iter().all(|&x| x == 0.0) {
        return Ok(Vec::new());
    }
    let n = grid.len();
    let w = grid.cell_volume();
    let iters = 110.min(n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(iters);
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    // deterministic start: gaussian bump plus a dc floor catches s states
    let mut q: Vec<f64> = (0..n)
        .map(|i| {
            let p = grid.point_flat(i);
            let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
            (-0.5 * r2).exp() + 1e-3
        })
        .collect();
    normalize(&mut q, w);
    let mut prev: Vec<f64> = vec![0.0; n];
    let mut beta_prev = 0.0;
    let mut hx = vec![0.0; n];
    for _ in 0..iters {
        basis.push(q.clone());
        ham.apply(&q, &mut hx);
        // Lanczos on -H
        for x in hx.iter_mut() {
            *x = -*x;
        }
        let alpha: f64 = dot(&hx, &q, w);
        for i in 0..n {
            hx[i] -= alpha * q[i] + beta_prev * prev[i];
        }
        // full reorthogonalization keeps the Ritz values clean
        for b in &basis {
            let c = dot(&hx, b, w);
            for i in 0..n {
                hx[i] -= c * b[i];
            }
        }
        alphas.push(alpha);
        let beta = (dot(&hx, &hx, w)).sqrt();
        if beta < 1e-13 {
            break;
        }
        betas.push(beta);
        prev = q.clone();
        beta_prev = beta;
        q = hx.iter().map(|x| x / beta).collect();
    }
    let k = alphas.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut states: Vec<(f64, Vec<f64>)> = Vec::new();
    for idx in 0..k {
        let theta = eig.eigenvalues[idx];
        // theta approximates -E; keep strictly negative energies, drop the
        // near-zero continuum edge as spurious
        let energy = -theta;
        if energy >= -1e-6 {
            continue;
        }
        let mut vec_ = vec![0.0; n];
        for (b, row) in basis.iter().enumerate() {
            let c = eig.eigenvectors[(b, idx)];
            for i in 0..n {
                vec_[i] += c * row[i];
            }
        }
        // Ritz residual filters unconverged copies
        ham.apply(&vec_, &mut hx);
        let mut res = 0.0;
        for i in 0..n {
            let d = hx[i] - energy * vec_[i];
            res += d * d * w;
        }
        if res.sqrt() > 1e-5 * energy.abs().max(1.0) {
            continue;
        }
        normalize(&mut vec_, w);
        states.push((energy, vec_));
    }
    states.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // orthonormalize within the kept set (Lanczos already close)
    let mut kept: Vec<(f64, Vec<f64>)> = Vec::new();
    for (e, mut f) in states {
        for (_, g) in &kept {
            let c = dot(&f, g, w);
            for i in 0..f.len() {
                f[i] -= c * g[i];
            }
        }
        let nrm = dot(&f, &f, w).sqrt();
        if nrm < 1e-6 {
            continue;
        }
        for x in f.iter_mut() {
            *x /= nrm;
        }
        kept.push((e, f));
    }
    Ok(kept)
}

fn bound_states_auto(v: &Potential) -> Result<Vec<(f64, Vec<f64>)>> {
    let support = if v.support_radius.is_finite() {
        v.support_radius
    } else {
        4.0
    };
    let extent = (3.0 * support).max(6.0).min(12.0);
    let grid = Grid3::cube(32, extent);
    bound_states(v, &grid)
}

fn dot(a: &[f64], b: &[f64], w: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc * w
}

fn normalize(x: &mut [f64], w: f64) {
    let n = dot(x, x, w).sqrt();
    if n > 0.0 {
        for v in x.iter_mut() {
            *v /= n;
        }
    }
}

/// Binary layout: dims [n, n, 2] and zero extents as in the scalar grid
/// format, the trailing 2 flagging interleaved complex entries; then points,
/// weights, and the optional eta tag.
pub fn write_kernel_operator(path: &std::path::Path, op: &KernelOperator) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    let n = op.len() as u64;
    for d in [n, n, 2u64] {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for _ in 0..3 {
        buf.extend_from_slice(&0.0f64.to_le_bytes());
    }
    for i in 0..op.len() {
        for j in 0..op.len() {
            let z = op.entries[(i, j)];
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    for p in &op.points {
        for c in p {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    for w in &op.weights {
        buf.extend_from_slice(&w.to_le_bytes());
    }
    match op.eta {
        Some(e) => {
            buf.extend_from_slice(&1u64.to_le_bytes());
            for c in e {
                buf.extend_from_slice(&c.to_le_bytes());
            }
        }
        None => buf.extend_from_slice(&0u64.to_le_bytes()),
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_kernel_operator(path: &std::path::Path) -> Result<KernelOperator> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut off = 0usize;
    let read_u64 = |bytes: &[u8], off: &mut usize| -> Result<u64> {
        if *off + 8 > bytes.len() {
            return Err(WaveError::BadGridFile("truncated".into()));
        }
        let v = u64::from_le_bytes(bytes[*off..*off + 8].try_into().unwrap());
        *off += 8;
        Ok(v)
    };
    let n = read_u64(&bytes, &mut off)? as usize;
    let n2 = read_u64(&bytes, &mut off)? as usize;
    let flag = read_u64(&bytes, &mut off)?;
    if n != n2 || flag != 2 {
        return Err(WaveError::BadGridFile("not a kernel file".into()));
    }
    let read_f64 = |bytes: &[u8], off: &mut usize| -> Result<f64> {
        if *off + 8 > bytes.len() {
            return Err(WaveError::BadGridFile("truncated".into()));
        }
        let v = f64::from_le_bytes(bytes[*off..*off + 8].try_into().unwrap());
        *off += 8;
        Ok(v)
    };
    for _ in 0..3 {
        read_f64(&bytes, &mut off)?;
    }
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re = read_f64(&bytes, &mut off)?;
            let im = read_f64(&bytes, &mut off)?;
            entries[(i, j)] = Complex64::new(re, im);
        }
    }
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let mut p = [0.0; 3];
        for c in p.iter_mut() {
            *c = read_f64(&bytes, &mut off)?;
        }
        points.push(p);
    }
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        weights.push(read_f64(&bytes, &mut off)?);
    }
    let eta_flag = u64::from_le_bytes(
        bytes
            .get(off..off + 8)
            .ok_or_else(|| WaveError::BadGridFile("truncated".into()))?
            .try_into()
            .unwrap(),
    );
    off += 8;
    let eta = if eta_flag == 1 {
        let mut e = [0.0; 3];
        for c in e.iter_mut() {
            *c = read_f64(&bytes, &mut off)?;
        }
        Some(e)
    } else {
        None
    };
    if off != bytes.len() {
        return Err(WaveError::BadGridFile("trailing bytes".into()));
    }
    KernelOperator::new(points, weights, entries, eta)
}
