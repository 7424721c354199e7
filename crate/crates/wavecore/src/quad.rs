//! Quadrature building blocks used throughout the crate: Gauss-Legendre
//! rules, product rules on the sphere, Neville extrapolation and
//! compensated summation.

use num_complex::Complex64;

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Newton iteration on P_n with the Chebyshev-like initial guess; converges
/// to machine precision in a handful of steps for any practical n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        // nodes come out descending in i; store ascending
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// P_n(x) and P_n'(x) via the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        xs.iter().map(|x| mid + half * x).collect(),
        ws.iter().map(|w| half * w).collect(),
    )
}

/// Composite rule: `panels` equal panels on [a, b], `order` GL points each.
pub fn panel_gauss(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    let step = (b - a) / panels as f64;
    for p in 0..panels {
        let (px, pw) = gauss_legendre_on(order, a + p as f64 * step, a + (p + 1) as f64 * step);
        xs.extend(px);
        ws.extend(pw);
    }
    (xs, ws)
}

/// Geometric subdivision of [a, b] (a > 0) into `panels` panels, GL inside each.
pub fn geometric_panel_gauss(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(a > 0.0 && b > a);
    let ratio = (b / a).powf(1.0 / panels as f64);
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    let mut left = a;
    for _ in 0..panels {
        let right = left * ratio;
        let (px, pw) = gauss_legendre_on(order, left, right);
        xs.extend(px);
        ws.extend(pw);
        left = right;
    }
    (xs, ws)
}

/// Quadrature rule on the unit sphere, weights summing to 4*pi.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    /// Product rule: `n_theta` Gauss-Legendre nodes in cos(theta) times
    /// `n_phi` uniform azimuthal nodes. Exact for spherical polynomials of
    /// degree <= min(2*n_theta - 1, n_phi - 1).
    ///
    /// With n_phi even the point set is antipodally symmetric, which some
    /// kernel symmetry checks rely on.
    pub fn product(n_theta: usize, n_phi: usize) -> Self {
        let (us, uw) = gauss_legendre(n_theta);
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        let mut points = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (u, w) in us.iter().zip(uw.iter()) {
            let s = (1.0 - u * u).max(0.0).sqrt();
            for j in 0..n_phi {
                let phi = dphi * j as f64;
                points.push([s * phi.cos(), s * phi.sin(), *u]);
                weights.push(w * dphi);
            }
        }
        SphereRule { points, weights }
    }

    /// Smallest product rule exact for spherical polynomials of degree `d`,
    /// padded to keep the antipodal symmetry (even azimuthal count).
    pub fn of_degree(d: usize) -> Self {
        let nt = (d + 2) / 2;
        let mut np = d + 1;
        if np % 2 == 1 {
            np += 1;
        }
        SphereRule::product(nt.max(1), np.max(2))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the antipode of point i, if present to tolerance.
    pub fn antipode_index(&self, i: usize) -> Option<usize> {
        let p = self.points[i];
        self.points.iter().position(|q| {
            (q[0] + p[0]).abs() < 1e-10 && (q[1] + p[1]).abs() < 1e-10 && (q[2] + p[2]).abs() < 1e-10
        })
    }
}

/// Neville polynomial extrapolation of the samples (xs[i], ys[i]) to x = 0.
///
/// Used to remove an exp(-eps*s) damping from oscillatory half-line
/// integrals: evaluate at a short ladder of eps values and extrapolate.
pub fn neville_at_zero(xs: &[f64], ys: &[Complex64]) -> Complex64 {
    assert_eq!(xs.len(), ys.len());
    assert!(!xs.is_empty());
    let mut tab: Vec<Complex64> = ys.to_vec();
    let n = xs.len();
    for level in 1..n {
        for i in 0..n - level {
            let x0 = xs[i];
            let x1 = xs[i + level];
            tab[i] = (tab[i + 1] * (-x0) - tab[i] * (-x1)) / (x1 - x0);
        }
    }
    tab[0]
}

/// Pairwise (cascade) summation; deterministic and accurate for long sums.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
        }
    }
}

/// Pairwise summation for complex slices.
pub fn pairwise_sum_c(v: &[Complex64]) -> Complex64 {
    match v.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let mid = n / 2;
            pairwise_sum_c(&v[..mid]) + pairwise_sum_c(&v[mid..])
        }
    }
}
