//! Discrete evaluation of the quartic collision operator, its gain/loss
//! split, and the moment residuals of the quadrature.
//!
//! The momentum integral runs over the grid nodes (midpoint rule), the
//! angular integral over the product quadrature on the sphere. For every
//! `(q, omega)` sample the post-collisional pair comes from the
//! center-of-momentum map, and the distribution is evaluated there through a
//! [`SliceView`]: grid data is interpolated trilinearly, equilibria are
//! evaluated analytically (which keeps detailed balance exact pointwise),
//! and near-equilibrium states combine the analytic equilibrium with an
//! interpolated perturbation.

use rayon::prelude::*;

use crate::equilibrium::{EquilibriumParams, StatisticsKind};
use crate::error::CollisionError;
use crate::grid::{AngularQuadrature, MomentumGrid};
use crate::kinematics::Vec3;

/// Distribution values on a momentum grid.
#[derive(Clone, Debug)]
pub struct DistributionSlice {
    pub values: Vec<f64>,
    pub stats: StatisticsKind,
}

impl DistributionSlice {
    pub fn new(values: Vec<f64>, stats: StatisticsKind) -> Self {
        Self { values, stats }
    }

    /// Samples an equilibrium onto the grid.
    pub fn from_equilibrium(params: &EquilibriumParams, grid: &MomentumGrid) -> Self {
        let values = (0..grid.len()).map(|i| params.m_of_energy(grid.energy(i))).collect();
        Self { values, stats: params.stats() }
    }

    /// Checks the admissibility bounds: nonnegative, and at most one for
    /// fermions (up to rounding).
    pub fn is_admissible(&self) -> bool {
        self.values.iter().all(|&v| {
            v >= 0.0
                && v.is_finite()
                && (self.stats == StatisticsKind::Boson || v <= 1.0 + 1e-12)
        })
    }

    pub fn view(&self) -> SliceView<'_> {
        SliceView::Values { values: &self.values, stats: self.stats }
    }
}

/// Trilinear interpolation clamped to the statistics bounds; zero outside
/// the truncated domain.
pub fn interpolate_offgrid(
    values: &[f64],
    grid: &MomentumGrid,
    stats: StatisticsKind,
    p: &Vec3,
) -> f64 {
    clamp_stats(grid.interpolate(values, p), stats)
}

#[inline]
fn clamp_stats(v: f64, stats: StatisticsKind) -> f64 {
    match stats {
        StatisticsKind::Fermion => v.clamp(0.0, 1.0),
        StatisticsKind::Boson => v.max(0.0),
    }
}

/// How a distribution is evaluated at arbitrary momenta during the
/// collision quadrature.
#[derive(Clone, Copy)]
pub enum SliceView<'a> {
    /// Grid values; off-grid points by clamped trilinear interpolation,
    /// zero beyond the truncation cube.
    Values { values: &'a [f64], stats: StatisticsKind },
    /// An analytic global equilibrium.
    Equilibrium { params: &'a EquilibriumParams },
    /// `m(p) + sqrt(m + tau m^2)(p) * f(p)` with the perturbation carried as
    /// the ratio `phi = f / sqrt(m + tau m^2)` on the grid and extended
    /// off-grid by trilinear interpolation of the ratio. `clamp` restores
    /// the statistics bounds (wanted by the solver, not by the
    /// linearization identity).
    Perturbed { params: &'a EquilibriumParams, phi: &'a [f64], clamp: bool },
}

impl<'a> SliceView<'a> {
    #[inline]
    pub fn stats(&self) -> StatisticsKind {
        match self {
            SliceView::Values { stats, .. } => *stats,
            SliceView::Equilibrium { params } => params.stats(),
            SliceView::Perturbed { params, .. } => params.stats(),
        }
    }

    /// Value at a grid node.
    #[inline]
    pub fn eval_node(&self, grid: &MomentumGrid, idx: usize) -> f64 {
        match self {
            SliceView::Values { values, .. } => values[idx],
            SliceView::Equilibrium { params } => params.m_of_energy(grid.energy(idx)),
            SliceView::Perturbed { params, phi, clamp } => {
                let (m, _, w) = params.mbw_of_energy(grid.energy(idx));
                let v = m + w * w * phi[idx];
                if *clamp {
                    clamp_stats(v, params.stats())
                } else {
                    v
                }
            }
        }
    }

    /// Value at a continuous momentum whose on-shell energy is already
    /// known (the collision map provides it for free).
    #[inline]
    pub fn eval_offgrid(&self, grid: &MomentumGrid, p: &Vec3, p0: f64) -> f64 {
        match self {
            SliceView::Values { values, stats } => {
                clamp_stats(grid.interpolate(values, p), *stats)
            }
            SliceView::Equilibrium { params } => params.m_of_energy(p0),
            SliceView::Perturbed { params, phi, clamp } => {
                // f extends off-grid as w(p) * interp(f/w), so the full
                // value is m + w^2 * interp(phi).
                let (m, _, w) = params.mbw_of_energy(p0);
                let v = m + w * w * grid.interpolate(phi, p);
                if *clamp {
                    clamp_stats(v, params.stats())
                } else {
                    v
                }
            }
        }
    }
}

/// Builds the ratio field `phi = f / sqrt(m + tau m^2)` used by
/// [`SliceView::Perturbed`]; at a node the full value is then
/// `m + w^2 phi = m + w f`.
pub fn perturbation_ratio(params: &EquilibriumParams, grid: &MomentumGrid, f: &[f64]) -> Vec<f64> {
    (0..grid.len())
        .map(|i| {
            let w = params.sqrt_weight_of_energy(grid.energy(i));
            f[i] / w
        })
        .collect()
}

/// Geometry of one `(p, q, omega)` collision sample.
#[derive(Clone, Copy)]
pub struct PairSample {
    /// Momentum-space kernel `v_moller * sigma(g, theta)`.
    pub kernel: f64,
    pub p_prime: Vec3,
    pub p_prime0: f64,
    pub q_prime: Vec3,
    pub q_prime0: f64,
}

/// Collision geometry and kernel for nodes `p`, `q` and scattering
/// direction `omega`; the hot inner step of every quadrature here.
#[inline]
pub fn pair_sample(
    p: &Vec3,
    p0: f64,
    q: &Vec3,
    q0: f64,
    omega: &Vec3,
    sin_theta: f64,
) -> PairSample {
    let pq = -p0 * q0 + p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
    let g2 = (2.0 * (-pq - 1.0)).max(0.0);
    let g = g2.sqrt();
    let s = g2 + 4.0;
    let sqrt_s = s.sqrt();

    // Moller velocity in the square-root form.
    let inv_p0 = 1.0 / p0;
    let inv_q0 = 1.0 / q0;
    let ux = p[0] * inv_p0;
    let uy = p[1] * inv_p0;
    let uz = p[2] * inv_p0;
    let vx = q[0] * inv_q0;
    let vy = q[1] * inv_q0;
    let vz = q[2] * inv_q0;
    let dx = ux - vx;
    let dy = uy - vy;
    let dz = uz - vz;
    let cx = uy * vz - uz * vy;
    let cy = uz * vx - ux * vz;
    let cz = ux * vy - uy * vx;
    let moller = (dx * dx + dy * dy + dz * dz - cx * cx - cy * cy - cz * cz).max(0.0).sqrt();
    let kernel = moller * g * sin_theta;

    // Center-of-momentum post-collisional pair.
    let tx = p[0] + q[0];
    let ty = p[1] + q[1];
    let tz = p[2] + q[2];
    let t2 = tx * tx + ty * ty + tz * tz;
    let gamma = (p0 + q0) / sqrt_s;
    let corr = if t2 < 1e-26 {
        0.0
    } else {
        (gamma - 1.0) * (tx * omega[0] + ty * omega[1] + tz * omega[2]) / t2
    };
    let half_g = 0.5 * g;
    let sx = half_g * (omega[0] + corr * tx);
    let sy = half_g * (omega[1] + corr * ty);
    let sz = half_g * (omega[2] + corr * tz);
    let ppx = 0.5 * tx + sx;
    let ppy = 0.5 * ty + sy;
    let ppz = 0.5 * tz + sz;
    let qpx = 0.5 * tx - sx;
    let qpy = 0.5 * ty - sy;
    let qpz = 0.5 * tz - sz;
    PairSample {
        kernel,
        p_prime: [ppx, ppy, ppz],
        p_prime0: (1.0 + ppx * ppx + ppy * ppy + ppz * ppz).sqrt(),
        q_prime: [qpx, qpy, qpz],
        q_prime0: (1.0 + qpx * qpx + qpy * qpy + qpz * qpz).sqrt(),
    }
}

/// The collision quadrature: a momentum grid for the `dq` integral and an
/// angular quadrature for the `domega` integral.
pub struct CollisionOperator<'a> {
    pub grid: &'a MomentumGrid,
    pub angular: &'a AngularQuadrature,
}

impl<'a> CollisionOperator<'a> {
    pub fn new(grid: &'a MomentumGrid, angular: &'a AngularQuadrature) -> Self {
        Self { grid, angular }
    }

    fn check_views(&self, views: &[&SliceView]) -> Result<(), CollisionError> {
        let stats = views[0].stats();
        for v in views {
            if v.stats() != stats {
                return Err(CollisionError::StatisticsMismatch);
            }
            if let SliceView::Values { values, .. } = v {
                if values.len() != self.grid.len() {
                    return Err(CollisionError::GridMismatch);
                }
            }
            if let SliceView::Perturbed { phi, .. } = v {
                if phi.len() != self.grid.len() {
                    return Err(CollisionError::GridMismatch);
                }
            }
        }
        Ok(())
    }

    /// Gain and loss integrals of the quartic operator at one node,
    /// separately. `Q = gain - loss`.
    pub fn gain_loss_at(
        &self,
        f1: &SliceView,
        f2: &SliceView,
        f3: &SliceView,
        f4: &SliceView,
        p_idx: usize,
    ) -> Result<(f64, f64), CollisionError> {
        self.check_views(&[f1, f2, f3, f4])?;
        let grid = self.grid;
        let tau = f1.stats().tau();
        let p = grid.node(p_idx);
        let p0 = grid.energy(p_idx);
        let f3_p = f3.eval_node(grid, p_idx);
        let occ3 = 1.0 + tau * f3_p;
        let vol = grid.cell_volume();

        let mut gain = 0.0;
        let mut loss = 0.0;
        for q_idx in 0..grid.len() {
            let q = grid.node(q_idx);
            let q0 = grid.energy(q_idx);
            let f4_q = f4.eval_node(grid, q_idx);
            let occ4 = 1.0 + tau * f4_q;
            let gain_w = occ3 * occ4;
            let loss_w = f3_p * f4_q;
            let mut gain_q = 0.0;
            let mut loss_q = 0.0;
            for node in self.angular.nodes() {
                let s = pair_sample(&p, p0, &q, q0, &node.omega, node.sin_theta);
                if s.kernel == 0.0 {
                    continue;
                }
                let f1_pp = f1.eval_offgrid(grid, &s.p_prime, s.p_prime0);
                let f2_qp = f2.eval_offgrid(grid, &s.q_prime, s.q_prime0);
                let k = node.weight * s.kernel;
                gain_q += k * f1_pp * f2_qp;
                loss_q += k * (1.0 + tau * f1_pp) * (1.0 + tau * f2_qp);
            }
            gain += gain_q * gain_w;
            loss += loss_q * loss_w;
        }
        Ok((gain * vol, loss * vol))
    }

    /// The quartic collision operator at one node: the quadrature of
    /// `v sigma [F1(p')F2(q')(1+tau F3(p))(1+tau F4(q))
    /// - (1+tau F1(p'))(1+tau F2(q'))F3(p)F4(q)]`.
    pub fn evaluate_q(
        &self,
        f1: &SliceView,
        f2: &SliceView,
        f3: &SliceView,
        f4: &SliceView,
        p_idx: usize,
    ) -> Result<f64, CollisionError> {
        let (gain, loss) = self.gain_loss_at(f1, f2, f3, f4, p_idx)?;
        Ok(gain - loss)
    }

    /// Gain and loss operators of the semi-implicit split at one node:
    /// `G = Int v sigma F(p') F(q') (1 + tau F(q))` and
    /// `R = Int v sigma (1 + tau F(p'))(1 + tau F(q')) F(q)`, so that
    /// `Q(F) = G (1 + tau F(p)) - R F(p)`.
    pub fn gr_at(&self, f: &SliceView, p_idx: usize) -> Result<(f64, f64), CollisionError> {
        self.check_views(&[f])?;
        Ok(self.gr_at_unchecked(f, p_idx))
    }

    fn gr_at_unchecked(&self, f: &SliceView, p_idx: usize) -> (f64, f64) {
        let grid = self.grid;
        let tau = f.stats().tau();
        let p = grid.node(p_idx);
        let p0 = grid.energy(p_idx);
        let vol = grid.cell_volume();

        let mut g_total = 0.0;
        let mut r_total = 0.0;
        for q_idx in 0..grid.len() {
            let q = grid.node(q_idx);
            let q0 = grid.energy(q_idx);
            let f_q = f.eval_node(grid, q_idx);
            let occ_q = 1.0 + tau * f_q;
            let mut g_q = 0.0;
            let mut r_q = 0.0;
            for node in self.angular.nodes() {
                let s = pair_sample(&p, p0, &q, q0, &node.omega, node.sin_theta);
                if s.kernel == 0.0 {
                    continue;
                }
                let f_pp = f.eval_offgrid(grid, &s.p_prime, s.p_prime0);
                let f_qp = f.eval_offgrid(grid, &s.q_prime, s.q_prime0);
                let k = node.weight * s.kernel;
                g_q += k * f_pp * f_qp;
                r_q += k * (1.0 + tau * f_pp) * (1.0 + tau * f_qp);
            }
            g_total += g_q * occ_q;
            r_total += r_q * f_q;
        }
        (g_total * vol, r_total * vol)
    }

    /// Gain/loss split on the whole grid, parallel over output nodes. Each
    /// node is reduced sequentially in a fixed order, so results do not
    /// depend on the thread count.
    pub fn gr_full(&self, f: &SliceView) -> Result<(Vec<f64>, Vec<f64>), CollisionError> {
        self.check_views(&[f])?;
        let out: Vec<(f64, f64)> = (0..self.grid.len())
            .into_par_iter()
            .map(|p_idx| self.gr_at_unchecked(f, p_idx))
            .collect();
        Ok(out.into_iter().unzip())
    }

    /// `Q(F)` on the whole grid via the gain/loss split.
    pub fn q_full(&self, f: &SliceView) -> Result<Vec<f64>, CollisionError> {
        let (g, r) = self.gr_full(f)?;
        let tau = f.stats().tau();
        Ok((0..self.grid.len())
            .map(|i| {
                let fp = f.eval_node(self.grid, i);
                g[i] * (1.0 + tau * fp) - r[i] * fp
            })
            .collect())
    }
}

/// Raw and normalized moment residuals of a collision-operator field.
#[derive(Clone, Copy, Debug)]
pub struct MomentResiduals {
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
    /// `Int |Q| (1 + p0) dp`, the scale the relative residuals refer to.
    pub normalizer: f64,
}

impl MomentResiduals {
    pub fn relative(&self) -> (f64, [f64; 3], f64) {
        let n = self.normalizer.max(1e-300);
        (
            self.mass / n,
            [self.momentum[0] / n, self.momentum[1] / n, self.momentum[2] / n],
            self.energy / n,
        )
    }

    pub fn max_relative(&self) -> f64 {
        let (m, p, e) = self.relative();
        m.abs().max(p[0].abs()).max(p[1].abs()).max(p[2].abs()).max(e.abs())
    }
}

/// Moments of a `Q` field: the discrete residuals of the five collision
/// invariants, with the `Int |Q| (1 + p0)` normalizer.
pub fn collision_invariants_residual(q_field: &[f64], grid: &MomentumGrid) -> MomentResiduals {
    assert_eq!(q_field.len(), grid.len());
    let mut mass = 0.0;
    let mut momentum = [0.0; 3];
    let mut energy = 0.0;
    let mut normalizer = 0.0;
    for (idx, &q) in q_field.iter().enumerate() {
        let node = grid.node(idx);
        let p0 = grid.energy(idx);
        mass += q;
        momentum[0] += q * node[0];
        momentum[1] += q * node[1];
        momentum[2] += q * node[2];
        energy += q * p0;
        normalizer += q.abs() * (1.0 + p0);
    }
    let v = grid.cell_volume();
    MomentResiduals {
        mass: mass * v,
        momentum: [momentum[0] * v, momentum[1] * v, momentum[2] * v],
        energy: energy * v,
        normalizer: normalizer * v,
    }
}
