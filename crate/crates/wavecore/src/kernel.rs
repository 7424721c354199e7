//! Per-frequency kernel calculus: the first-order families T1(eta), the
//! composition product, Born powers, per-eta inversion, and the scattering
//! family.

use crate::greens::{ball_mean_diagonal, KernelOperator, SpectralDiagnosis, Verdict};
use crate::grid::Grid3;
use crate::potential::Potential;
use crate::quad::{neville_at_zero, SphereRule};
use crate::{Complex64, Result, WaveError};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(&self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Plus => "plus",
            Branch::Minus => "minus",
        }
    }
}

/// One kernel operator per frequency eta, all over a shared point set.
#[derive(Debug, Clone)]
pub struct EtaKernelFamily {
    pub eta_grid: Vec<([f64; 3], f64)>,
    pub ops: Vec<KernelOperator>,
    pub sign: Branch,
    pub eps: f64,
}

impl EtaKernelFamily {
    pub fn new(
        eta_grid: Vec<([f64; 3], f64)>,
        ops: Vec<KernelOperator>,
        sign: Branch,
        eps: f64,
    ) -> Result<Self> {
        if eta_grid.len() != ops.len() {
            return Err(WaveError::GridMismatch(
                "eta grid and operator list differ in length".into(),
            ));
        }
        if let Some(first) = ops.first() {
            for op in &ops[1..] {
                if op.points != first.points {
                    return Err(WaveError::GridMismatch(
                        "family operators must share one point set".into(),
                    ));
                }
            }
        }
        Ok(EtaKernelFamily {
            eta_grid,
            ops,
            sign,
            eps,
        })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        self.ops.first().map(|o| o.points.as_slice()).unwrap_or(&[])
    }

    pub fn compatible(&self, other: &Self) -> Result<()> {
        if self.eta_grid.len() != other.eta_grid.len() {
            return Err(WaveError::GridMismatch("eta grids differ".into()));
        }
        for (a, b) in self.eta_grid.iter().zip(&other.eta_grid) {
            if a.0 != b.0 {
                return Err(WaveError::GridMismatch("eta grids differ".into()));
            }
        }
        if self.points() != other.points() {
            return Err(WaveError::GridMismatch("point sets differ".into()));
        }
        if self.sign != other.sign {
            return Err(WaveError::GridMismatch("branch signs differ".into()));
        }
        Ok(())
    }
}

/// Support-adapted point set: cells where |V| is above 1e-12 of its max,
/// with values and the uniform cell weight.
pub fn support_points(v: &Potential, grid: &Grid3) -> (Vec<[f64; 3]>, Vec<f64>, f64) {
    let vals: Vec<f64> = (0..grid.len()).map(|i| v.eval(grid.point_flat(i))).collect();
    let vmax = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut pts = Vec::new();
    let mut vv = Vec::new();
    for i in 0..grid.len() {
        if vals[i].abs() > 1e-12 * vmax.max(1e-300) {
            pts.push(grid.point_flat(i));
            vv.push(vals[i]);
        }
    }
    (pts, vv, grid.cell_volume())
}

/// Upper-half-plane root of |eta|^2 + sign * i * eps.
fn lambda_of(eta2: f64, sign: Branch, eps: f64) -> Complex64 {
    if eps == 0.0 {
        return Complex64::new(sign.sign() * eta2.sqrt(), 0.0);
    }
    let z = Complex64::new(eta2, sign.sign() * eps);
    let mut l = z.sqrt();
    if l.im < 0.0 {
        l = -l;
    }
    l
}

fn t1_matrix(
    pts: &[[f64; 3]],
    vv: &[f64],
    w: f64,
    hmean: f64,
    eta: [f64; 3],
    lambda: Complex64,
) -> DMatrix<Complex64> {
    let m = pts.len();
    let diag = ball_mean_diagonal(lambda, hmean) * w;
    let phase: Vec<Complex64> = pts
        .iter()
        .map(|p| {
            let d = p[0] * eta[0] + p[1] * eta[1] + p[2] * eta[2];
            Complex64::new(0.0, -d).exp()
        })
        .collect();
    let mut e = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let g = if i == j {
                diag
            } else {
                let d = [
                    pts[i][0] - pts[j][0],
                    pts[i][1] - pts[j][1],
                    pts[i][2] - pts[j][2],
                ];
                let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                (Complex64::i() * lambda * r).exp() / (4.0 * PI * r) * w
            };
            e[(i, j)] = vv[i] * phase[i] * g * phase[j].conj();
        }
    }
    e
}

/// First-order family: entry(x0, x1) = V(x0) e^{-i x0 eta} R0(|eta|^2 +/- i0)
/// (x0, x1) e^{i x1 eta}, quadrature weight folded in.
pub fn t1_family(
    v: &Potential,
    grid: &Grid3,
    eta_grid: &[([f64; 3], f64)],
    sign: Branch,
) -> Result<EtaKernelFamily> {
    let (pts, vv, w) = support_points(v, grid);
    let h = grid.h();
    let hmean = (h[0] * h[1] * h[2]).powf(1.0 / 3.0);
    let ops: Vec<KernelOperator> = eta_grid
        .par_iter()
        .map(|&(eta, _)| {
            let eta2 = eta[0] * eta[0] + eta[1] * eta[1] + eta[2] * eta[2];
            let lambda = lambda_of(eta2, sign, 0.0);
            let e = t1_matrix(&pts, &vv, w, hmean, eta, lambda);
            KernelOperator::new(pts.clone(), vec![w; pts.len()], e, Some(eta))
        })
        .collect::<Result<Vec<_>>>()?;
    EtaKernelFamily::new(eta_grid.to_vec(), ops, sign, 0.0)
}

/// Mollified family extrapolated to eps = 0 along the ladder; returns the
/// extrapolated family and the per-eta last-rung extrapolation differences
/// relative to the entry scale.
pub fn t1_family_extrapolated(
    v: &Potential,
    grid: &Grid3,
    eta_grid: &[([f64; 3], f64)],
    sign: Branch,
    ladder: &[f64],
) -> Result<(EtaKernelFamily, Vec<f64>)> {
    if ladder.len() < 3 {
        return Err(WaveError::Invalid(
            "extrapolation ladder needs at least 3 rungs".into(),
        ));
    }
    let (pts, vv, w) = support_points(v, grid);
    let h = grid.h();
    let hmean = (h[0] * h[1] * h[2]).powf(1.0 / 3.0);
    let m = pts.len();
    let mut ops = Vec::with_capacity(eta_grid.len());
    let mut residuals = Vec::with_capacity(eta_grid.len());
    for &(eta, _) in eta_grid {
        let eta2 = eta[0] * eta[0] + eta[1] * eta[1] + eta[2] * eta[2];
        let rungs: Vec<DMatrix<Complex64>> = ladder
            .iter()
            .map(|&eps| t1_matrix(&pts, &vv, w, hmean, eta, lambda_of(eta2, sign, eps)))
            .collect();
        let mut full = DMatrix::zeros(m, m);
        let mut drop_last = DMatrix::zeros(m, m);
        let short: Vec<f64> = ladder[..ladder.len() - 1].to_vec();
        for i in 0..m {
            for j in 0..m {
                let ys: Vec<Complex64> = rungs.iter().map(|r| r[(i, j)]).collect();
                full[(i, j)] = neville_at_zero(ladder, &ys);
                drop_last[(i, j)] = neville_at_zero(&short, &ys[..ys.len() - 1]);
            }
        }
        let scale = full.norm().max(1e-300);
        residuals.push((&full - &drop_last).norm() / scale);
        ops.push(KernelOperator::new(
            pts.clone(),
            vec![w; m],
            full,
            Some(eta),
        )?);
    }
    Ok((
        EtaKernelFamily::new(eta_grid.to_vec(), ops, sign, 0.0)?,
        residuals,
    ))
}

/// Identity family over the same grid and points: the unit of the composition.
pub fn identity_family(like: &EtaKernelFamily) -> Result<EtaKernelFamily> {
    let pts = like.points().to_vec();
    let m = pts.len();
    let ops: Vec<KernelOperator> = like
        .eta_grid
        .iter()
        .map(|&(eta, _)| {
            KernelOperator::new(
                pts.clone(),
                like.ops.first().map(|o| o.weights.clone()).unwrap_or_default(),
                DMatrix::identity(m, m),
                Some(eta),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    EtaKernelFamily::new(like.eta_grid.clone(), ops, like.sign, like.eps)
}

/// Per-eta composition: (A (*) B)(x0, x2) = integral of A(x0, x1) B(x1, x2)
/// over x1. With weights folded into columns this is the plain matrix product.
pub fn ostar(a: &EtaKernelFamily, b: &EtaKernelFamily) -> Result<EtaKernelFamily> {
    a.compatible(b)?;
    let ops: Vec<KernelOperator> = a
        .ops
        .par_iter()
        .zip(b.ops.par_iter())
        .map(|(oa, ob)| {
            KernelOperator::new(
                oa.points.clone(),
                oa.weights.clone(),
                &oa.entries * &ob.entries,
                oa.eta,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    EtaKernelFamily::new(a.eta_grid.clone(), ops, a.sign, a.eps.max(b.eps))
}

/// n-fold composition power of the first-order family.
pub fn born_term(
    v: &Potential,
    grid: &Grid3,
    n: usize,
    eta_grid: &[([f64; 3], f64)],
    sign: Branch,
) -> Result<EtaKernelFamily> {
    if n == 0 {
        return Err(WaveError::Invalid("born term order must be >= 1".into()));
    }
    let t1 = t1_family(v, grid, eta_grid, sign)?;
    let mut acc = t1.clone();
    for _ in 1..n {
        acc = ostar(&acc, &t1)?;
        for (k, op) in acc.ops.iter().enumerate() {
            let nrm = op.entries.norm();
            if !nrm.is_finite() {
                return Err(WaveError::Divergence(format!(
                    "operator norm overflow at order {n}, eta #{k}"
                )));
            }
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvertStrategy {
    Direct,
    Neumann { max_terms: usize },
}

/// Per-eta record of how the inversion went.
#[derive(Debug, Clone)]
pub struct InversionReport {
    pub residuals: Vec<f64>,
    pub used_direct: Vec<bool>,
    pub spectral_radii: Vec<f64>,
}

impl InversionReport {
    /// Eta indices where the Neumann strategy had to fail over: the grid
    /// counterpart of the regions needing the covering argument.
    pub fn neumann_failures(&self) -> Vec<usize> {
        self.used_direct
            .iter()
            .enumerate()
            .filter(|(_, &d)| d)
            .map(|(i, _)| i)
            .collect()
    }
}

fn spectral_radius_estimate(a: &DMatrix<Complex64>) -> f64 {
    let m = a.nrows();
    if m == 0 {
        return 0.0;
    }
    let mut x = nalgebra::DVector::from_fn(m, |i, _| {
        Complex64::new(1.0 + (i as f64 * 0.7).sin(), (i as f64 * 1.3).cos())
    });
    x /= Complex64::new(x.norm(), 0.0);
    let mut rho = 0.0;
    for _ in 0..50 {
        let y = a * &x;
        let ny = y.norm();
        if ny == 0.0 {
            return 0.0;
        }
        rho = ny;
        x = y / Complex64::new(ny, 0.0);
    }
    rho
}

/// Invert I + T1 per eta, returning T with (I + T1)(I - T) = I. The Neumann
/// strategy sums (-1)^{k-1} T1^k and fails over to a direct solve when the
/// estimated spectral radius reaches 0.9.
pub fn invert_family_with_report(
    t1: &EtaKernelFamily,
    strategy: InvertStrategy,
) -> Result<(EtaKernelFamily, InversionReport)> {
    let m = t1.points().len();
    let eye = DMatrix::<Complex64>::identity(m, m);
    let mut ops = Vec::with_capacity(t1.ops.len());
    let mut residuals = Vec::with_capacity(t1.ops.len());
    let mut used_direct = Vec::with_capacity(t1.ops.len());
    let mut radii = Vec::with_capacity(t1.ops.len());
    for (k, op) in t1.ops.iter().enumerate() {
        let a = &op.entries + &eye;
        let rho = spectral_radius_estimate(&op.entries);
        radii.push(rho);
        let (t_plus, direct) = match strategy {
            InvertStrategy::Neumann { max_terms } if rho < 0.9 => {
                let mut sum = op.entries.clone();
                let mut term = op.entries.clone();
                for _ in 1..max_terms {
                    term = -(&term * &op.entries);
                    sum += &term;
                }
                (sum, false)
            }
            _ => {
                let lu = a.clone().lu();
                let inv = lu.try_inverse().ok_or_else(|| {
                    WaveError::SolveFailed(format!(
                        "I + T1 singular at eta #{k} (embedded eigenvalue or resonance)"
                    ))
                })?;
                (&eye - inv, true)
            }
        };
        let resid = (&a * (&eye - &t_plus) - &eye).norm() / (m as f64).sqrt();
        residuals.push(resid);
        used_direct.push(direct);
        ops.push(KernelOperator::new(
            op.points.clone(),
            op.weights.clone(),
            t_plus,
            op.eta,
        )?);
    }
    let fam = EtaKernelFamily::new(t1.eta_grid.clone(), ops, t1.sign, t1.eps)?;
    Ok((
        fam,
        InversionReport {
            residuals,
            used_direct,
            spectral_radii: radii,
        },
    ))
}

pub fn invert_family(t1: &EtaKernelFamily, strategy: InvertStrategy) -> Result<EtaKernelFamily> {
    invert_family_with_report(t1, strategy).map(|(f, _)| f)
}

/// Scattering family T_S = I + (I + T1-)^{-1} (*) (T1+ - T1-). The branch
/// difference carries the resolvent jump.
pub fn scattering_family(
    v: &Potential,
    grid: &Grid3,
    eta_grid: &[([f64; 3], f64)],
) -> Result<EtaKernelFamily> {
    let tm = t1_family(v, grid, eta_grid, Branch::Minus)?;
    let tp = t1_family(v, grid, eta_grid, Branch::Plus)?;
    let m = tm.points().len();
    let eye = DMatrix::<Complex64>::identity(m, m);
    let ops: Vec<KernelOperator> = tm
        .ops
        .par_iter()
        .zip(tp.ops.par_iter())
        .enumerate()
        .map(|(k, (om, op_))| {
            let a = &om.entries + &eye;
            let rhs = &op_.entries - &om.entries;
            let lu = a.lu();
            let x = lu.solve(&rhs).ok_or_else(|| {
                WaveError::SolveFailed(format!(
                    "I + T1- singular at eta #{k} (embedded eigenvalue or resonance)"
                ))
            })?;
            KernelOperator::new(om.points.clone(), om.weights.clone(), x + &eye, om.eta)
        })
        .collect::<Result<Vec<_>>>()?;
    EtaKernelFamily::new(tm.eta_grid.clone(), ops, Branch::Plus, 0.0)
}

/// Default frequency grid: 24 geometric radii on [0.05, 20] crossed with a
/// product sphere rule of degree 17; log-trapezoid radial weights carry the
/// r^2 dr measure. No zero frequency.
pub fn default_eta_grid() -> Vec<([f64; 3], f64)> {
    eta_grid_radii(24, 0.05, 20.0)
}

pub fn eta_grid_radii(n_radii: usize, r_min: f64, r_max: f64) -> Vec<([f64; 3], f64)> {
    eta_grid_radii_with_degree(n_radii, r_min, r_max, 17)
}

/// Same grid with the sphere degree chosen by the caller; memory per family
/// scales with radii x sphere points, so small studies want low degrees.
pub fn eta_grid_radii_with_degree(
    n_radii: usize,
    r_min: f64,
    r_max: f64,
    degree: usize,
) -> Vec<([f64; 3], f64)> {
    let sphere = SphereRule::of_degree(degree);
    let mut out = Vec::new();
    let dln = (r_max / r_min).ln() / (n_radii.max(2) as f64 - 1.0);
    for k in 0..n_radii {
        let r = r_min * (dln * k as f64).exp();
        // trapezoid in log r against r^2 dr = r^3 d(ln r)
        let end = k == 0 || k == n_radii - 1;
        let wr = r * r * r * dln * if end { 0.5 } else { 1.0 };
        for (p, ws) in sphere.points.iter().zip(&sphere.weights) {
            out.push(([r * p[0], r * p[1], r * p[2]], wr * ws));
        }
    }
    out
}

/// Grid for a verdict: generic admits eta = 0; otherwise it is replaced by
/// the smallest-radius point on the first axis.
pub fn eta_grid_for(diag: &SpectralDiagnosis) -> Vec<([f64; 3], f64)> {
    let mut g = default_eta_grid();
    if diag.verdict == Verdict::Generic {
        g.push(([0.0, 0.0, 0.0], 0.0));
    } else {
        g.push(([0.05, 0.0, 0.0], 0.0));
    }
    g
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn point_set_hash(points: &[[f64; 3]]) -> u64 {
    let mut bytes = Vec::with_capacity(points.len() * 24);
    for p in points {
        for c in p {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
    }
    fnv1a(&bytes)
}

/// Serialize a family to a directory: manifest.json plus one matrix file
/// per eta in the extended binary kernel format.
pub fn write_family(dir: &std::path::Path, fam: &EtaKernelFamily) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::from("{\n  \"eta_grid\": [\n");
    for (i, (eta, w)) in fam.eta_grid.iter().enumerate() {
        manifest.push_str(&format!(
            "    [{:.17e}, {:.17e}, {:.17e}, {:.17e}]{}\n",
            eta[0],
            eta[1],
            eta[2],
            w,
            if i + 1 < fam.eta_grid.len() { "," } else { "" }
        ));
    }
    manifest.push_str(&format!(
        "  ],\n  \"sign\": \"{}\",\n  \"eps\": {:.17e},\n  \"point_set_hash\": \"{:016x}\",\n  \"count\": {}\n}}\n",
        fam.sign.as_str(),
        fam.eps,
        point_set_hash(fam.points()),
        fam.ops.len()
    ));
    std::fs::write(dir.join("manifest.json"), manifest)?;
    for (k, op) in fam.ops.iter().enumerate() {
        crate::greens::write_kernel_operator(&dir.join(format!("eta_{k:05}.bin")), op)?;
    }
    Ok(())
}

pub fn read_family(dir: &std::path::Path) -> Result<EtaKernelFamily> {
    let manifest = std::fs::read_to_string(dir.join("manifest.json"))?;
    let sign = if manifest.contains("\"sign\": \"plus\"") {
        Branch::Plus
    } else if manifest.contains("\"sign\": \"minus\"") {
        Branch::Minus
    } else {
        return Err(WaveError::BadGridFile("manifest sign missing".into()));
    };
    let eps = manifest
        .split("\"eps\": ")
        .nth(1)
        .and_then(|s| s.split([',', '\n']).next())
        .and_then(|s| s.trim().parse::<f64>().ok())
        .ok_or_else(|| WaveError::BadGridFile("manifest eps missing".into()))?;
    let mut eta_grid = Vec::new();
    for line in manifest.lines() {
        let line = line.trim().trim_end_matches(',');
        if line.starts_with('[') && line.ends_with(']') {
            let inner = &line[1..line.len() - 1];
            let parts: Vec<f64> = inner
                .split(',')
                .filter_map(|s| s.trim().parse::<f64>().ok())
                .collect();
            if parts.len() == 4 {
                eta_grid.push(([parts[0], parts[1], parts[2]], parts[3]));
            }
        }
    }
    let mut ops = Vec::with_capacity(eta_grid.len());
    for k in 0..eta_grid.len() {
        ops.push(crate::greens::read_kernel_operator(
            &dir.join(format!("eta_{k:05}.bin")),
        )?);
    }
    EtaKernelFamily::new(eta_grid, ops, sign, eps)
}
