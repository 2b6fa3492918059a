//! Discretization of momentum space and of the unit sphere.
//!
//! Momentum space is truncated to the cube `[-pmax, pmax]^3` and sampled on a
//! cell-centered uniform lattice, so grid sums are midpoint-rule quadratures.
//! The sphere is sampled by Gauss-Legendre nodes in cos(theta) times a
//! uniform midpoint rule in phi.

use crate::kinematics::Vec3;

/// Cell-centered uniform lattice on `[-pmax, pmax]^3` with `n` points per
/// axis. Nodes sit at `-pmax + (i + 1/2) h` with `h = 2 pmax / n`, so the
/// lattice is symmetric under sign flips and axis permutations and contains
/// no node at the origin.
#[derive(Clone, Debug)]
pub struct MomentumGrid {
    pmax: f64,
    n: usize,
    h: f64,
    axis: Vec<f64>,
    energies: Vec<f64>,
}

impl MomentumGrid {
    pub fn new(pmax: f64, n: usize) -> Result<Self, String> {
        if !(pmax > 0.0) {
            return Err(format!("pmax must be positive, got {pmax}"));
        }
        if n < 4 || n % 2 != 0 {
            return Err(format!("n must be even and at least 4, got {n}"));
        }
        let h = 2.0 * pmax / n as f64;
        let axis: Vec<f64> = (0..n).map(|i| -pmax + (i as f64 + 0.5) * h).collect();
        let mut energies = Vec::with_capacity(n * n * n);
        for &x in &axis {
            for &y in &axis {
                for &z in &axis {
                    energies.push((1.0 + x * x + y * y + z * z).sqrt());
                }
            }
        }
        Ok(Self { pmax, n, h, axis, energies })
    }

    #[inline]
    pub fn pmax(&self) -> f64 {
        self.pmax
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h * self.h * self.h
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn unflat(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.n;
        let j = (idx / self.n) % self.n;
        let i = idx / (self.n * self.n);
        (i, j, k)
    }

    #[inline]
    pub fn axis_coord(&self, i: usize) -> f64 {
        self.axis[i]
    }

    #[inline]
    pub fn node(&self, idx: usize) -> Vec3 {
        let (i, j, k) = self.unflat(idx);
        [self.axis[i], self.axis[j], self.axis[k]]
    }

    /// On-shell energy of the node (precomputed).
    #[inline]
    pub fn energy(&self, idx: usize) -> f64 {
        self.energies[idx]
    }

    #[inline]
    pub fn contains(&self, p: &Vec3) -> bool {
        p.iter().all(|&x| x.abs() <= self.pmax)
    }

    /// Whether two grids are the same discretization.
    pub fn same_as(&self, other: &MomentumGrid) -> bool {
        self.n == other.n && self.pmax == other.pmax
    }

    /// Trilinear stencil for a continuous momentum: base node index along
    /// each axis plus local coordinates of the enclosing cell. The base is
    /// clamped to the lattice so points between the outermost node layer and
    /// the domain boundary use the boundary cell's polynomial; this keeps the
    /// interpolant exact on affine functions everywhere inside the cube.
    #[inline]
    pub fn stencil(&self, p: &Vec3) -> Option<([usize; 3], [f64; 3])> {
        if !self.contains(p) {
            return None;
        }
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for d in 0..3 {
            let t = (p[d] - self.axis[0]) / self.h;
            let i = (t.floor() as isize).clamp(0, self.n as isize - 2) as usize;
            base[d] = i;
            frac[d] = t - i as f64;
        }
        Some((base, frac))
    }

    /// Trilinear interpolation of node values at a continuous momentum;
    /// zero outside the domain.
    pub fn interpolate(&self, values: &[f64], p: &Vec3) -> f64 {
        match self.stencil(p) {
            None => 0.0,
            Some((base, frac)) => {
                let n = self.n;
                let [i, j, k] = base;
                let [fx, fy, fz] = frac;
                let gx = 1.0 - fx;
                let gy = 1.0 - fy;
                let gz = 1.0 - fz;
                let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
                gx * (gy * (gz * values[idx(i, j, k)] + fz * values[idx(i, j, k + 1)])
                    + fy * (gz * values[idx(i, j + 1, k)] + fz * values[idx(i, j + 1, k + 1)]))
                    + fx * (gy * (gz * values[idx(i + 1, j, k)] + fz * values[idx(i + 1, j, k + 1)])
                        + fy * (gz * values[idx(i + 1, j + 1, k)]
                            + fz * values[idx(i + 1, j + 1, k + 1)]))
            }
        }
    }
}

/// One scattering-direction node with its quadrature weight.
#[derive(Clone, Copy, Debug)]
pub struct AngularNode {
    pub omega: Vec3,
    pub sin_theta: f64,
    pub weight: f64,
}

/// Product quadrature on the unit sphere: Gauss-Legendre in cos(theta),
/// uniform midpoint in phi. Weights sum to 4 pi.
#[derive(Clone, Debug)]
pub struct AngularQuadrature {
    ntheta: usize,
    nphi: usize,
    nodes: Vec<AngularNode>,
}

impl AngularQuadrature {
    pub fn new(ntheta: usize, nphi: usize) -> Result<Self, String> {
        if ntheta < 2 || nphi < 2 {
            return Err(format!("need at least 2 nodes per angle, got {ntheta} x {nphi}"));
        }
        if nphi % 2 != 0 {
            return Err(format!("nphi must be even for the hemisphere symmetry, got {nphi}"));
        }
        let (ct, wt) = gauss_legendre(ntheta);
        let dphi = std::f64::consts::TAU / nphi as f64;
        let mut nodes = Vec::with_capacity(ntheta * nphi);
        for (&c, &w) in ct.iter().zip(wt.iter()) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for j in 0..nphi {
                let phi = (j as f64 + 0.5) * dphi;
                nodes.push(AngularNode {
                    omega: [s * phi.cos(), s * phi.sin(), c],
                    sin_theta: s,
                    weight: w * dphi,
                });
            }
        }
        Ok(Self { ntheta, nphi, nodes })
    }

    #[inline]
    pub fn nodes(&self) -> &[AngularNode] {
        &self.nodes
    }

    #[inline]
    pub fn ntheta(&self) -> usize {
        self.ntheta
    }

    #[inline]
    pub fn nphi(&self) -> usize {
        self.nphi
    }

    pub fn weight_sum(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre polynomial. Deterministic; accurate to machine precision.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, refined by Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * d * d);
        // Store symmetric pairs explicitly so the node set is exactly
        // closed under reflection.
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
