//! Half-space atom decomposition of the leading wave-operator correction and
//! the operator assembly routes built on the eta-kernel families.

use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::grid::{self, Fft3, Grid3};
use crate::kernel::{support_points, Branch, EtaKernelFamily};
use crate::potential::{self, Potential};
use crate::quad::pairwise_sum;
use crate::ray::{self, RayProfile};
use crate::{Result, WaveError};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
/// (2 pi)^{-3}, the measure normalization shared by every frequency-side sum.
const INV_8PI3: f64 = 1.0 / (TWO_PI * TWO_PI * TWO_PI);

/// Smallest admissible fraction of ||f||^2 that a family's eta grid must
/// capture before an assembly against that family is meaningful.
const COVERAGE_FLOOR: f64 = 0.9;

/// One reflected half-space term. At (omega, t) the input is read at
/// S x + t omega, S the reflection through the plane normal to omega;
/// coeff_minus weights the region x.omega < t/2, coeff_plus the rest.
#[derive(Debug, Clone)]
pub struct StructureAtom {
    pub omega: [f64; 3],
    pub t: f64,
    pub coeff_minus: Complex64,
    pub coeff_plus: Complex64,
    pub quad_weight: f64,
}

#[derive(Debug, Clone)]
pub struct StructureDecomposition {
    pub atoms: Vec<StructureAtom>,
    /// sum of quad_weight * (|coeff_minus| + |coeff_plus|); bounds the sup
    /// norm of the assembled operator by construction
    pub mass: f64,
    /// fingerprint of the ray profile the atoms were built from
    pub profile_hash: u64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn profile_fingerprint(p: &RayProfile) -> u64 {
    let mut bytes = Vec::with_capacity(8 * (3 * p.omega_grid.len() + p.t_grid.len()));
    for w in &p.omega_grid {
        for c in w {
            bytes.extend_from_slice(&c.to_bits().to_le_bytes());
        }
    }
    for t in &p.t_grid {
        bytes.extend_from_slice(&t.to_bits().to_le_bytes());
    }
    for z in p.l1.iter().chain(p.l1_tilde.iter()) {
        bytes.extend_from_slice(&z.re.to_bits().to_le_bytes());
        bytes.extend_from_slice(&z.im.to_bits().to_le_bytes());
    }
    fnv1a(&bytes)
}

fn finish(atoms: Vec<StructureAtom>, profile: &RayProfile) -> StructureDecomposition {
    let parts: Vec<f64> = atoms
        .iter()
        .map(|a| a.quad_weight * (a.coeff_minus.norm() + a.coeff_plus.norm()))
        .collect();
    StructureDecomposition {
        mass: pairwise_sum(&parts),
        profile_hash: profile_fingerprint(profile),
        atoms,
    }
}

/// Atoms realizing the first-order incoming wave operator: the half-space
/// coefficients are -i/(2 (2pi)^3) L1(t omega) and +i/(2 (2pi)^3) L1~(t omega).
/// Scale and relative sign are pinned by the frequency-side kernel
/// -(2pi)^{-3} Vhat(zeta-eta) / (|zeta|^2 - |eta|^2 - i0): the principal-value
/// part forces the coefficients to be opposite, the on-shell part fixes the
/// prefactor -i/2 (2pi)^{-3}, and the two-sided Hilbert remainders cancel only
/// with this pairing. Tests compare against that kernel through an
/// independent quadrature.
pub fn decompose_w1(profile: &RayProfile) -> StructureDecomposition {
    let tw = ray::t_weights(&profile.t_grid);
    let kappa = Complex64::new(0.0, 0.5 * INV_8PI3);
    let mut atoms = Vec::new();
    for (iw, omega) in profile.omega_grid.iter().enumerate() {
        for (it, &t) in profile.t_grid.iter().enumerate() {
            let cm = -kappa * profile.l1_at(iw, it);
            let cp = kappa * profile.l1_tilde_at(iw, it);
            if cm.norm_sqr() == 0.0 && cp.norm_sqr() == 0.0 {
                continue;
            }
            atoms.push(StructureAtom {
                omega: *omega,
                t,
                coeff_minus: cm,
                coeff_plus: cp,
                quad_weight: profile.omega_weights[iw] * tw[it],
            });
        }
    }
    finish(atoms, profile)
}

/// First-order scattering atoms. Adjoint composition swaps and conjugates the
/// half-space pair, so the two coefficients coincide and the cutoff drops out:
/// the resulting operator is purely on-shell.
pub fn decompose_scattering_first_order(profile: &RayProfile) -> StructureDecomposition {
    let tw = ray::t_weights(&profile.t_grid);
    let kappa = Complex64::new(0.0, 0.5 * INV_8PI3);
    let mut atoms = Vec::new();
    for (iw, omega) in profile.omega_grid.iter().enumerate() {
        for (it, &t) in profile.t_grid.iter().enumerate() {
            let c = -kappa * (profile.l1_at(iw, it) - profile.l1_tilde_at(iw, it));
            if c.norm_sqr() == 0.0 {
                continue;
            }
            atoms.push(StructureAtom {
                omega: *omega,
                t,
                coeff_minus: c,
                coeff_plus: c,
                quad_weight: profile.omega_weights[iw] * tw[it],
            });
        }
    }
    finish(atoms, profile)
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Numeric reach of f: radius of the smallest origin ball holding every
/// sample above 1e-12 of the peak, plus one cell diagonal.
fn numeric_reach(grid: &Grid3, f: &[Complex64]) -> f64 {
    let peak = f.iter().fold(0.0f64, |m, z| m.max(z.norm_sqr()));
    let cut = 1e-24 * peak;
    let mut r2max = 0.0f64;
    for (i, z) in f.iter().enumerate() {
        if z.norm_sqr() > cut {
            let p = grid.point_flat(i);
            r2max = r2max.max(dot3(p, p));
        }
    }
    let h = grid.h();
    // two extra cells cover the cubic stencil reading past the support edge
    r2max.sqrt() + 2.0 * (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt()
}

/// Assembles the atom sum on the grid. Reads go reflect, translate, cutoff;
/// off-grid reads count as zero; points on the cutoff plane average the two
/// coefficients. Output order is independent of the parallel split.
pub fn apply_structure(
    d: &StructureDecomposition,
    grid: &Grid3,
    f: &[Complex64],
) -> Result<Vec<Complex64>> {
    if f.len() != grid.len() {
        return Err(WaveError::GridMismatch(format!(
            "field has {} samples, grid has {}",
            f.len(),
            grid.len()
        )));
    }
    let reach = numeric_reach(grid, f);
    let reach2 = reach * reach;
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    let chunk = grid.len().div_ceil(8 * rayon::current_num_threads().max(1));
    out.par_chunks_mut(chunk).enumerate().for_each(|(ci, slab)| {
        let base = ci * chunk;
        for (off, o) in slab.iter_mut().enumerate() {
            let x = grid.point_flat(base + off);
            let mut acc = Complex64::new(0.0, 0.0);
            for a in &d.atoms {
                // the atom touches x only if x lies in the reach ball
                // centered at t*omega (the reflection is an involution)
                let dx = [
                    x[0] - a.t * a.omega[0],
                    x[1] - a.t * a.omega[1],
                    x[2] - a.t * a.omega[2],
                ];
                if dot3(dx, dx) > reach2 {
                    continue;
                }
                let u = dot3(x, a.omega);
                let y = [
                    x[0] - 2.0 * u * a.omega[0] + a.t * a.omega[0],
                    x[1] - 2.0 * u * a.omega[1] + a.t * a.omega[1],
                    x[2] - 2.0 * u * a.omega[2] + a.t * a.omega[2],
                ];
                let val = grid::tricubic(grid, f, y);
                if val.norm_sqr() == 0.0 {
                    continue;
                }
                let half = 0.5 * a.t;
                let c = if u < half {
                    a.coeff_minus
                } else if u > half {
                    a.coeff_plus
                } else {
                    0.5 * (a.coeff_minus + a.coeff_plus)
                };
                acc += a.quad_weight * c * val;
            }
            *o = acc;
        }
    });
    Ok(out)
}

/// Continuum transform sum_x f(x) e^{-i eta.x} h^3 at arbitrary frequencies,
/// evaluated through separable per-axis phase tables.
fn nuft3(grid: &Grid3, f: &[Complex64], etas: &[[f64; 3]]) -> Vec<Complex64> {
    let cv = grid.cell_volume();
    let n = grid.n;
    let axis_coord = |d: usize, i: usize| -> f64 {
        let mut idx = [0usize; 3];
        idx[d] = i;
        grid.point_flat(grid.idx(idx))[d]
    };
    etas.par_iter()
        .map(|eta| {
            let mut tabs: [Vec<Complex64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
            for d in 0..3 {
                tabs[d] = (0..n[d])
                    .map(|i| Complex64::new(0.0, -eta[d] * axis_coord(d, i)).exp())
                    .collect();
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for (flat, z) in f.iter().enumerate() {
                let ix = grid.index3(flat);
                acc += z * tabs[0][ix[0]] * tabs[1][ix[1]] * tabs[2][ix[2]];
            }
            acc * cv
        })
        .collect()
}

fn point_to_flat(grid: &Grid3, p: [f64; 3]) -> usize {
    let h = grid.h();
    let origin = grid.point_flat(0);
    let mut idx = [0usize; 3];
    for d in 0..3 {
        let i = ((p[d] - origin[d]) / h[d]).round();
        debug_assert!(i >= 0.0 && (i as usize) < grid.n[d]);
        idx[d] = i as usize;
    }
    grid.idx(idx)
}

/// Radius shells of an eta grid: indices grouped by |eta| up to 1e-9 relative.
fn radius_shells(eta_grid: &[([f64; 3], f64)]) -> Vec<(f64, Vec<usize>)> {
    let mut order: Vec<usize> = (0..eta_grid.len()).collect();
    let radius = |k: usize| dot3(eta_grid[k].0, eta_grid[k].0).sqrt();
    order.sort_by(|&a, &b| radius(a).partial_cmp(&radius(b)).unwrap());
    let mut shells: Vec<(f64, Vec<usize>)> = Vec::new();
    for k in order {
        let r = radius(k);
        match shells.last_mut() {
            Some((r0, idxs)) if (r - *r0).abs() <= 1e-9 * (1.0 + *r0) => idxs.push(k),
            _ => shells.push((r, vec![k])),
        }
    }
    shells
}

#[derive(Debug, Clone)]
pub struct WaveApplication {
    pub field: Vec<Complex64>,
    /// fraction of ||f||_2^2 captured by the family's eta grid
    pub coverage: f64,
}

/// Assembles the full wave-operator action from an inverted family. The
/// family's branch selects the time direction: the incoming-kernel family
/// (Branch::Minus) produces the t -> +infinity limit and vice versa. The
/// potential must be the one the family was built from; its support samples
/// are rederived here and checked against the family's point set.
pub fn apply_wave(
    v: &Potential,
    fam: &EtaKernelFamily,
    grid: &Grid3,
    f: &[Complex64],
) -> Result<WaveApplication> {
    wave_inner(v, fam, grid, f, false)
}

/// Same assembly with the kernel contraction dropped: keeps only the term
/// linear in the potential, so full minus first-order scales quadratically.
pub fn apply_wave_first_order(
    v: &Potential,
    fam: &EtaKernelFamily,
    grid: &Grid3,
    f: &[Complex64],
) -> Result<WaveApplication> {
    wave_inner(v, fam, grid, f, true)
}

fn check_family_support(
    v: &Potential,
    fam: &EtaKernelFamily,
    grid: &Grid3,
) -> Result<Option<(Vec<[f64; 3]>, Vec<f64>, f64)>> {
    let (pts, vv, w) = support_points(v, grid);
    if pts.is_empty() {
        return Ok(None);
    }
    if pts.len() != fam.points().len()
        || pts
            .iter()
            .zip(fam.points())
            .any(|(a, b)| a[0] != b[0] || a[1] != b[1] || a[2] != b[2])
    {
        return Err(WaveError::GridMismatch(
            "family support points do not match the potential on this grid".into(),
        ));
    }
    Ok(Some((pts, vv, w)))
}

fn wave_inner(
    v: &Potential,
    fam: &EtaKernelFamily,
    grid: &Grid3,
    f: &[Complex64],
    first_order: bool,
) -> Result<WaveApplication> {
    if f.len() != grid.len() {
        return Err(WaveError::GridMismatch(format!(
            "field has {} samples, grid has {}",
            f.len(),
            grid.len()
        )));
    }
    let support = check_family_support(v, fam, grid)?;
    let (pts, vv, _w) = match support {
        None => {
            return Ok(WaveApplication {
                field: f.to_vec(),
                coverage: 1.0,
            })
        }
        Some(s) => s,
    };
    let m = pts.len();

    let etas: Vec<[f64; 3]> = fam.eta_grid.iter().map(|(e, _)| *e).collect();
    let fh = nuft3(grid, f, &etas);

    let f2: f64 = pairwise_sum(&f.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>())
        * grid.cell_volume();
    let captured: f64 = pairwise_sum(
        &fam.eta_grid
            .iter()
            .zip(&fh)
            .map(|((_, w), z)| w * z.norm_sqr())
            .collect::<Vec<_>>(),
    ) * INV_8PI3;
    let coverage = if f2 > 0.0 { captured / f2 } else { 1.0 };
    if coverage < COVERAGE_FLOOR {
        return Err(WaveError::Accuracy(coverage));
    }

    let vvc = nalgebra::DVector::from_iterator(m, vv.iter().map(|&x| Complex64::new(x, 0.0)));
    let mut corr = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (r, idxs) in radius_shells(&fam.eta_grid) {
        let mut dens = vec![Complex64::new(0.0, 0.0); m];
        for &k in &idxs {
            let (eta, weta) = fam.eta_grid[k];
            let amp = -INV_8PI3 * weta * fh[k];
            let tv = if first_order {
                None
            } else {
                Some(&fam.ops[k].entries * &vvc)
            };
            for j in 0..m {
                let phase = Complex64::new(0.0, dot3(eta, pts[j])).exp();
                let gj = match &tv {
                    Some(tv) => Complex64::new(vv[j], 0.0) - tv[j],
                    None => Complex64::new(vv[j], 0.0),
                };
                dens[j] += amp * phase * gj;
            }
        }
        let mut src = vec![Complex64::new(0.0, 0.0); grid.len()];
        for j in 0..m {
            src[point_to_flat(grid, pts[j])] = dens[j];
        }
        let lambda = Complex64::new(fam.sign.sign() * r, 0.0);
        let spread = crate::greens::apply_free_resolvent(lambda, grid, &src)?;
        for (c, s) in corr.iter_mut().zip(&spread) {
            *c += s;
        }
    }

    let field = f.iter().zip(&corr).map(|(a, b)| a + b).collect();
    Ok(WaveApplication { field, coverage })
}

#[derive(Debug, Clone)]
pub struct ScatteringApplication {
    pub field: Vec<Complex64>,
    /// radial frequency band [lo, hi] holding the input's spectral mass
    pub band: (f64, f64),
    /// fraction of the correction's spectral mass outside the padded band
    pub annulus_leakage: f64,
}

/// Assembles the scattering action from the outgoing inverted family. The
/// correction is purely on-shell: per radius shell it pairs the transform of
/// f on that sphere with the one-sphere kernel contraction, and values
/// between shells are reached by linear interpolation in the radius.
pub fn apply_scattering(
    v: &Potential,
    fam: &EtaKernelFamily,
    grid: &Grid3,
    f: &[Complex64],
) -> Result<ScatteringApplication> {
    if fam.sign != Branch::Plus {
        return Err(WaveError::Invalid(
            "scattering assembly needs the outgoing (plus) family".into(),
        ));
    }
    if f.len() != grid.len() {
        return Err(WaveError::GridMismatch(format!(
            "field has {} samples, grid has {}",
            f.len(),
            grid.len()
        )));
    }
    let fft = Fft3::new(grid);
    let support = check_family_support(v, fam, grid)?;
    let (pts, vv, _w) = match support {
        None => {
            return Ok(ScatteringApplication {
                field: f.to_vec(),
                band: (0.0, 0.0),
                annulus_leakage: 0.0,
            })
        }
        Some(s) => s,
    };
    let m = pts.len();

    let etas: Vec<[f64; 3]> = fam.eta_grid.iter().map(|(e, _)| *e).collect();
    let fh = nuft3(grid, f, &etas);
    let vvc = nalgebra::DVector::from_iterator(m, vv.iter().map(|&x| Complex64::new(x, 0.0)));

    let shells = radius_shells(&fam.eta_grid);
    // per-shell transform of the on-shell source, on the whole frequency grid
    let mut shell_hats: Vec<Vec<Complex64>> = Vec::with_capacity(shells.len());
    let mut radii: Vec<f64> = Vec::with_capacity(shells.len());
    for (r, idxs) in &shells {
        let wsum: f64 = idxs.iter().map(|&k| fam.eta_grid[k].1).sum();
        if wsum <= 0.0 {
            return Err(WaveError::Invalid("eta shell with zero weight".into()));
        }
        let mut dens = vec![Complex64::new(0.0, 0.0); m];
        for &k in idxs {
            let (eta, weta) = fam.eta_grid[k];
            // renormalize the combined weight to the unit-sphere measure
            let w_ang = weta * 4.0 * std::f64::consts::PI / wsum;
            let amp = Complex64::new(0.0, -std::f64::consts::PI * INV_8PI3 * r) * w_ang * fh[k];
            let tv = &fam.ops[k].entries * &vvc;
            for j in 0..m {
                let phase = Complex64::new(0.0, dot3(eta, pts[j])).exp();
                dens[j] += amp * phase * (Complex64::new(vv[j], 0.0) - tv[j]);
            }
        }
        let mut src = vec![Complex64::new(0.0, 0.0); grid.len()];
        for j in 0..m {
            src[point_to_flat(grid, pts[j])] = dens[j];
        }
        shell_hats.push(grid::fourier_grid(grid, &fft, &src));
        radii.push(*r);
    }

    // radial interpolation of the shell values at each grid frequency
    let nfreq = grid.len();
    let mut corr_hat = vec![Complex64::new(0.0, 0.0); nfreq];
    if !radii.is_empty() {
        for flat in 0..nfreq {
            let xi = grid.freq_flat(flat);
            let r = dot3(xi, xi).sqrt();
            if r < radii[0] || r > *radii.last().unwrap() {
                continue;
            }
            let j = match radii.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
                Ok(j) => j,
                Err(j) => j, // first shell above r; j >= 1 here
            };
            corr_hat[flat] = if j == 0 || radii[j.min(radii.len() - 1)] == r {
                shell_hats[j.min(radii.len() - 1)][flat]
            } else {
                let (ra, rb) = (radii[j - 1], radii[j]);
                let s = (r - ra) / (rb - ra);
                shell_hats[j - 1][flat] * (1.0 - s) + shell_hats[j][flat] * s
            };
        }
    }

    // band of the input's spectral mass and the off-band fraction of the correction
    let f_hat = grid::fourier_grid(grid, &fft, f);
    let mut by_r: Vec<(f64, f64)> = (0..nfreq)
        .map(|flat| {
            let xi = grid.freq_flat(flat);
            (dot3(xi, xi).sqrt(), f_hat[flat].norm_sqr())
        })
        .collect();
    by_r.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total: f64 = by_r.iter().map(|x| x.1).sum();
    let mut lo = 0.0;
    let mut hi = 0.0;
    if total > 0.0 {
        let mut cum = 0.0;
        let mut lo_set = false;
        for &(r, mass) in &by_r {
            cum += mass;
            if !lo_set && cum >= 1e-3 * total {
                lo = r;
                lo_set = true;
            }
            if cum <= (1.0 - 1e-3) * total {
                hi = r;
            }
        }
    }
    let max_gap = radii
        .windows(2)
        .map(|p| p[1] - p[0])
        .fold(0.0f64, f64::max);
    let pad = max_gap + TWO_PI / (grid.n[0] as f64 * grid.h()[0]);
    let corr_total: f64 = corr_hat.iter().map(|z| z.norm_sqr()).sum();
    let mut off_band = 0.0;
    if corr_total > 0.0 {
        for flat in 0..nfreq {
            let xi = grid.freq_flat(flat);
            let r = dot3(xi, xi).sqrt();
            if r < lo - pad || r > hi + pad {
                off_band += corr_hat[flat].norm_sqr();
            }
        }
    }
    let leakage = if corr_total > 0.0 {
        off_band / corr_total
    } else {
        0.0
    };

    let corr = grid::inv_fourier_grid(grid, &fft, &corr_hat);
    let field = f.iter().zip(&corr).map(|(a, b)| a + b).collect();
    Ok(ScatteringApplication {
        field,
        band: (lo, hi),
        annulus_leakage: leakage,
    })
}

#[derive(Debug, Clone)]
pub struct AsymptoticSplit {
    /// shared flat-profile coefficient per atom, aligned with remainder.atoms
    pub leading: Vec<Complex64>,
    pub remainder: StructureDecomposition,
    pub leading_mass: f64,
    /// sum of quad_weight * <t>^{1+eps} (|rm| + |rp|) over remainder atoms
    pub remainder_weighted_mass: f64,
}

/// Integrability margin in the remainder weight <t>^{1+eps}.
const SPLIT_WEIGHT_EPS: f64 = 0.01;

/// Splits every coefficient pair into the shared large-t limit
/// i (2pi)^{-3} 2 Vhat(0) <t>^{-2} plus remainder. Both half-spaces carry the
/// same limit with a plus sign: flipping it would hand the full <t>^{-2} tail
/// to the remainder and the weighted mass would grow with the t horizon.
pub fn asymptotic_split(d: &StructureDecomposition, v: &Potential) -> Result<AsymptoticSplit> {
    let vhat0 = potential::fourier_on_ray(v, [0.0, 0.0, 1.0], &[0.0])?[0].re;
    let mut leading = Vec::with_capacity(d.atoms.len());
    let mut rem_atoms = Vec::with_capacity(d.atoms.len());
    let mut lead_parts = Vec::with_capacity(d.atoms.len());
    let mut rem_parts = Vec::with_capacity(d.atoms.len());
    for a in &d.atoms {
        let t2 = a.t * a.t;
        let lead = Complex64::new(0.0, 2.0 * INV_8PI3 * vhat0 / (1.0 + t2));
        let rm = a.coeff_minus - lead;
        let rp = a.coeff_plus - lead;
        leading.push(lead);
        lead_parts.push(a.quad_weight * 2.0 * lead.norm());
        rem_parts.push(
            a.quad_weight
                * (1.0 + t2).powf(0.5 * (1.0 + SPLIT_WEIGHT_EPS))
                * (rm.norm() + rp.norm()),
        );
        rem_atoms.push(StructureAtom {
            omega: a.omega,
            t: a.t,
            coeff_minus: rm,
            coeff_plus: rp,
            quad_weight: a.quad_weight,
        });
    }
    let rem_mass_parts: Vec<f64> = rem_atoms
        .iter()
        .map(|a| a.quad_weight * (a.coeff_minus.norm() + a.coeff_plus.norm()))
        .collect();
    Ok(AsymptoticSplit {
        leading,
        remainder: StructureDecomposition {
            atoms: rem_atoms,
            mass: pairwise_sum(&rem_mass_parts),
            profile_hash: d.profile_hash,
        },
        leading_mass: pairwise_sum(&lead_parts),
        remainder_weighted_mass: pairwise_sum(&rem_parts),
    })
}

pub fn write_decomposition(dir: &Path, d: &StructureDecomposition) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = std::fs::File::create(dir.join("atoms.csv"))?;
    writeln!(
        csv,
        "omega_x,omega_y,omega_z,t,re_coeff_minus,im_coeff_minus,re_coeff_plus,im_coeff_plus,quad_weight"
    )?;
    for a in &d.atoms {
        writeln!(
            csv,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            a.omega[0],
            a.omega[1],
            a.omega[2],
            a.t,
            a.coeff_minus.re,
            a.coeff_minus.im,
            a.coeff_plus.re,
            a.coeff_plus.im,
            a.quad_weight
        )?;
    }
    let mut man = std::fs::File::create(dir.join("manifest.json"))?;
    writeln!(
        man,
        "{{\n  \"atom_count\": {},\n  \"mass\": {:.17e},\n  \"profile_hash\": {}\n}}",
        d.atoms.len(),
        d.mass,
        d.profile_hash
    )?;
    Ok(())
}

pub fn read_decomposition(dir: &Path) -> Result<StructureDecomposition> {
    let text = std::fs::read_to_string(dir.join("atoms.csv"))?;
    let mut atoms = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| WaveError::Invalid(format!("bad atom row {ln}")))?;
        if cols.len() != 9 {
            return Err(WaveError::Invalid(format!(
                "atom row {ln} has {} columns",
                cols.len()
            )));
        }
        atoms.push(StructureAtom {
            omega: [cols[0], cols[1], cols[2]],
            t: cols[3],
            coeff_minus: Complex64::new(cols[4], cols[5]),
            coeff_plus: Complex64::new(cols[6], cols[7]),
            quad_weight: cols[8],
        });
    }
    let man = std::fs::read_to_string(dir.join("manifest.json"))?;
    let raw = |key: &str| -> Result<&str> {
        let tag = format!("\"{key}\":");
        let at = man
            .find(&tag)
            .ok_or_else(|| WaveError::Invalid(format!("manifest missing {key}")))?;
        let rest = &man[at + tag.len()..];
        let end = rest.find([',', '\n', '}']).unwrap_or(rest.len());
        Ok(rest[..end].trim())
    };
    let field = |key: &str| -> Result<f64> {
        raw(key)?
            .parse::<f64>()
            .map_err(|_| WaveError::Invalid(format!("bad manifest value for {key}")))
    };
    let count = field("atom_count")? as usize;
    if count != atoms.len() {
        return Err(WaveError::Invalid(format!(
            "manifest counts {count} atoms, file holds {}",
            atoms.len()
        )));
    }
    let mass = field("mass")?;
    let parts: Vec<f64> = atoms
        .iter()
        .map(|a| a.quad_weight * (a.coeff_minus.norm() + a.coeff_plus.norm()))
        .collect();
    let recomputed = pairwise_sum(&parts);
    if (recomputed - mass).abs() > 1e-9 * (1.0 + mass.abs()) {
        return Err(WaveError::Invalid(
            "stored mass disagrees with the atom list".into(),
        ));
    }
    let profile_hash = raw("profile_hash")?
        .parse::<u64>()
        .map_err(|_| WaveError::Invalid("bad manifest value for profile_hash".into()))?;
    Ok(StructureDecomposition {
        atoms,
        mass,
        profile_hash,
    })
}
