//! Quantum global equilibria, the Juttner reference distribution, their
//! algebraic identities, and moment-matching of equilibrium parameters to
//! initial data.

use crate::error::EquilibriumError;
use crate::grid::MomentumGrid;

/// Particle statistics: `tau = +1` for bosons, `tau = -1` for fermions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StatisticsKind {
    Boson,
    Fermion,
}

impl StatisticsKind {
    /// The sign carried through every occupancy factor `1 + tau F`.
    #[inline]
    pub fn tau(self) -> f64 {
        match self {
            StatisticsKind::Boson => 1.0,
            StatisticsKind::Fermion => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StatisticsKind::Boson => "boson",
            StatisticsKind::Fermion => "fermion",
        }
    }
}

/// Exponents beyond this evaluate to zero occupancy.
const EXP_UNDERFLOW: f64 = 700.0;

/// Margin kept between c and -a for bosons to stay away from the blow-up
/// boundary of the Bose-Einstein distribution.
const BOSON_MARGIN: f64 = 1e-10;

/// Parameters `(a, c)` of the global equilibrium `m(p) = 1/(e^{a p0 + c} - tau)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibriumParams {
    a: f64,
    c: f64,
    stats: StatisticsKind,
}

impl EquilibriumParams {
    pub fn new(a: f64, c: f64, stats: StatisticsKind) -> Result<Self, EquilibriumError> {
        if !a.is_finite() || a <= 0.0 {
            return Err(EquilibriumError::InvalidParams(format!("a must be positive, got {a}")));
        }
        if !c.is_finite() {
            return Err(EquilibriumError::InvalidParams(format!("c must be finite, got {c}")));
        }
        if stats == StatisticsKind::Boson && c + a < BOSON_MARGIN {
            return Err(EquilibriumError::InvalidParams(format!(
                "boson equilibrium needs c > -a (margin {BOSON_MARGIN:e}), got a = {a}, c = {c}"
            )));
        }
        Ok(Self { a, c, stats })
    }

    #[inline]
    pub fn a(&self) -> f64 {
        self.a
    }

    #[inline]
    pub fn c(&self) -> f64 {
        self.c
    }

    #[inline]
    pub fn stats(&self) -> StatisticsKind {
        self.stats
    }

    #[inline]
    pub fn tau(&self) -> f64 {
        self.stats.tau()
    }

    /// Equilibrium occupancy `m = 1/(e^{a p0 + c} - tau)` as a function of
    /// the on-shell energy.
    #[inline]
    pub fn m_of_energy(&self, p0: f64) -> f64 {
        let x = self.a * p0 + self.c;
        if x > EXP_UNDERFLOW {
            return 0.0;
        }
        1.0 / (x.exp() - self.tau())
    }

    /// Occupancy factor `1 + tau m`.
    #[inline]
    pub fn occupancy_of_energy(&self, p0: f64) -> f64 {
        1.0 + self.tau() * self.m_of_energy(p0)
    }

    /// Square-root weight `sqrt(m + tau m^2)` used by the linearization.
    #[inline]
    pub fn sqrt_weight_of_energy(&self, p0: f64) -> f64 {
        let m = self.m_of_energy(p0);
        (m * (1.0 + self.tau() * m)).max(0.0).sqrt()
    }

    /// All three of `(m, 1 + tau m, sqrt(m + tau m^2))` in one evaluation.
    #[inline]
    pub fn mbw_of_energy(&self, p0: f64) -> (f64, f64, f64) {
        let m = self.m_of_energy(p0);
        let b = 1.0 + self.tau() * m;
        (m, b, (m * b).max(0.0).sqrt())
    }
}

/// Equilibrium occupancy at spatial momentum `p`.
pub fn equilibrium_m(params: &EquilibriumParams, p: &[f64; 3]) -> f64 {
    let p0 = (1.0 + p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    params.m_of_energy(p0)
}

/// The non-quantum relativistic (Juttner) reference `J(p0) = e^{-a p0}`.
#[inline]
pub fn juttner_j(a: f64, p0: f64) -> f64 {
    (-a * p0).exp()
}

/// Sandwich constants `C1 J <= m <= C2 J` with the explicit choices used in
/// the proof: fermions `C1 = 1/(1+e^c)`, `C2 = e^{-c}`; bosons `C1 = e^{-c}`,
/// `C2 = 1/(e^c - e^{-a})`.
pub fn juttner_sandwich_constants(params: &EquilibriumParams) -> (f64, f64) {
    match params.stats() {
        StatisticsKind::Fermion => (1.0 / (1.0 + params.c().exp()), (-params.c()).exp()),
        StatisticsKind::Boson => {
            ((-params.c()).exp(), 1.0 / (params.c().exp() - (-params.a()).exp()))
        }
    }
}

/// `sqrt(m + tau m^2)` at spatial momentum `p`.
pub fn sqrt_weight(params: &EquilibriumParams, p: &[f64; 3]) -> f64 {
    let p0 = (1.0 + p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    params.sqrt_weight_of_energy(p0)
}

/// The two ratio identities of the weight:
/// `r1 = m / sqrt(m + tau m^2) = e^{-(a p0 + c)/2}` and
/// `r2 = (1 + tau m)/sqrt(m + tau m^2) = e^{+(a p0 + c)/2}`.
pub fn weight_identities(params: &EquilibriumParams, p: &[f64; 3]) -> (f64, f64) {
    let p0 = (1.0 + p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    let (m, b, w) = params.mbw_of_energy(p0);
    (m / w, b / w)
}

/// Discrete mass and energy moments of the equilibrium on a grid.
fn equilibrium_moments(params: &EquilibriumParams, grid: &MomentumGrid) -> (f64, f64) {
    let mut mass = 0.0;
    let mut energy = 0.0;
    for idx in 0..grid.len() {
        let p0 = grid.energy(idx);
        let m = params.m_of_energy(p0);
        mass += m;
        energy += m * p0;
    }
    let v = grid.cell_volume();
    (mass * v, energy * v)
}

/// Discrete moments of an arbitrary slice of values on a grid.
pub fn slice_moments(values: &[f64], grid: &MomentumGrid) -> (f64, [f64; 3], f64) {
    assert_eq!(values.len(), grid.len());
    let mut mass = 0.0;
    let mut mom = [0.0; 3];
    let mut energy = 0.0;
    for (idx, &f) in values.iter().enumerate() {
        let node = grid.node(idx);
        mass += f;
        mom[0] += f * node[0];
        mom[1] += f * node[1];
        mom[2] += f * node[2];
        energy += f * grid.energy(idx);
    }
    let v = grid.cell_volume();
    (mass * v, [mom[0] * v, mom[1] * v, mom[2] * v], energy * v)
}

/// Convergence target of the moment match, relative to the target moments.
/// Tighter than the contract tolerance so the matched equilibrium leaves no
/// spurious kernel content in the initial perturbation.
const MATCH_TOL: f64 = 1e-12;
const MATCH_MAX_ITER: usize = 200;

/// Finds `(a, c)` such that the discrete mass and energy moments of the
/// equilibrium match those of the given initial slice. The mean velocity is
/// fixed to zero, so the initial data must carry (numerically) no net
/// momentum.
///
/// Damped Newton iteration on `(ln a, c)` with a central-difference Jacobian;
/// falls back to a bisection-style step halving when a step does not reduce
/// the residual.
pub fn match_equilibrium_params(
    values: &[f64],
    grid: &MomentumGrid,
    stats: StatisticsKind,
    initial_guess: Option<(f64, f64)>,
) -> Result<EquilibriumParams, EquilibriumError> {
    let (mass0, mom0, energy0) = slice_moments(values, grid);
    if !(mass0.is_finite() && energy0.is_finite()) || mass0 <= 0.0 || energy0 <= 0.0 {
        return Err(EquilibriumError::InvalidParams(format!(
            "initial data must have positive finite mass and energy (got {mass0}, {energy0})"
        )));
    }
    let mom_norm = (mom0[0] * mom0[0] + mom0[1] * mom0[1] + mom0[2] * mom0[2]).sqrt();
    if mom_norm > 1e-8 * mass0 {
        return Err(EquilibriumError::NonzeroNetMomentum(mom_norm / mass0));
    }

    let (mut ln_a, mut c) = match initial_guess {
        Some((a, c)) => (a.ln(), c),
        None => (0.0, 0.0),
    };

    let residual = |ln_a: f64, c: f64| -> Result<(f64, f64), EquilibriumError> {
        let params = EquilibriumParams::new(ln_a.exp(), c, stats)
            .unwrap_or(EquilibriumParams { a: ln_a.exp(), c, stats });
        let (mass, energy) = equilibrium_moments(&params, grid);
        Ok(((mass - mass0) / mass0, (energy - energy0) / energy0))
    };

    let mut res = residual(ln_a, c)?;
    let mut res_norm = (res.0 * res.0 + res.1 * res.1).sqrt();
    let mut newton_failed = false;
    for _ in 0..MATCH_MAX_ITER {
        if res_norm < MATCH_TOL {
            return EquilibriumParams::new(ln_a.exp(), c, stats);
        }
        if newton_failed {
            break;
        }
        // Central-difference Jacobian of the relative residuals.
        let h_a = 1e-6;
        let h_c = 1e-6;
        let ra = residual(ln_a + h_a, c)?;
        let rb = residual(ln_a - h_a, c)?;
        let rc = residual(ln_a, c + h_c)?;
        let rd = residual(ln_a, c - h_c)?;
        let j00 = (ra.0 - rb.0) / (2.0 * h_a);
        let j10 = (ra.1 - rb.1) / (2.0 * h_a);
        let j01 = (rc.0 - rd.0) / (2.0 * h_c);
        let j11 = (rc.1 - rd.1) / (2.0 * h_c);
        let det = j00 * j11 - j01 * j10;
        if det.abs() < 1e-300 {
            newton_failed = true;
            continue;
        }
        let da = -(j11 * res.0 - j01 * res.1) / det;
        let dc = -(-j10 * res.0 + j00 * res.1) / det;

        // Backtracking line search; keeps bosons on the valid side of c > -a.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let ln_a_new = ln_a + step * da;
            let mut c_new = c + step * dc;
            if stats == StatisticsKind::Boson {
                let a_new = ln_a_new.exp();
                if c_new + a_new < BOSON_MARGIN {
                    c_new = -a_new + BOSON_MARGIN;
                }
            }
            let res_new = residual(ln_a_new, c_new)?;
            let norm_new = (res_new.0 * res_new.0 + res_new.1 * res_new.1).sqrt();
            if norm_new < res_norm {
                ln_a = ln_a_new;
                c = c_new;
                res = res_new;
                res_norm = norm_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            newton_failed = true;
        }
    }
    if res_norm < MATCH_TOL {
        return EquilibriumParams::new(ln_a.exp(), c, stats);
    }
    nested_bisection(mass0, energy0, grid, stats)
}

/// Robust fallback: for each trial `a` the amplitude `c` is solved by
/// bisection on the (monotone in c) mass moment, then `a` itself is bisected
/// on the per-particle energy, which is monotone decreasing in `a`.
fn nested_bisection(
    mass0: f64,
    energy0: f64,
    grid: &MomentumGrid,
    stats: StatisticsKind,
) -> Result<EquilibriumParams, EquilibriumError> {
    let p0_max = (1.0 + 3.0 * grid.pmax() * grid.pmax()).sqrt();
    let c_for_mass = |a: f64| -> Option<f64> {
        // The lower end of the c-bracket saturates the grid: for fermions
        // that is F ~ 1 on the whole cube, for bosons the blow-up boundary.
        let c_min = match stats {
            StatisticsKind::Boson => -a + BOSON_MARGIN,
            StatisticsKind::Fermion => -a * p0_max - 60.0,
        };
        let mass_at = |c: f64| {
            let params = EquilibriumParams { a, c, stats };
            equilibrium_moments(&params, grid).0
        };
        // Mass is strictly decreasing in c. Expand the upper end of the
        // bracket until the target is enclosed.
        let mut lo = c_min;
        let mut hi = c_min.max(0.0) + 1.0;
        if mass_at(lo) < mass0 {
            return None; // even the densest admissible equilibrium is too light
        }
        let mut tries = 0;
        while mass_at(hi) > mass0 {
            hi = hi * 2.0 + 1.0;
            tries += 1;
            if tries > 200 {
                return None;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass_at(mid) > mass0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 * (1.0 + hi.abs()) {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    };

    let target_ratio = energy0 / mass0;
    let energy_ratio = |a: f64| -> Option<f64> {
        let c = c_for_mass(a)?;
        let params = EquilibriumParams { a, c, stats };
        let (mass, energy) = equilibrium_moments(&params, grid);
        Some(energy / mass)
    };

    let mut a_lo = 1e-3;
    let mut a_hi = 64.0;
    let r_lo = energy_ratio(a_lo);
    let r_hi = energy_ratio(a_hi);
    match (r_lo, r_hi) {
        (Some(rl), Some(rh)) if rl >= target_ratio && rh <= target_ratio => {}
        _ => {
            return Err(EquilibriumError::NonConvergence {
                iterations: 0,
                residual: f64::INFINITY,
            })
        }
    }
    for _ in 0..200 {
        let a_mid = (a_lo * a_hi).sqrt();
        match energy_ratio(a_mid) {
            Some(r) if r > target_ratio => a_lo = a_mid,
            Some(_) => a_hi = a_mid,
            None => a_hi = a_mid,
        }
        if (a_hi - a_lo) < 1e-13 * a_hi {
            break;
        }
    }
    let a = (a_lo * a_hi).sqrt();
    let c = c_for_mass(a).ok_or(EquilibriumError::NonConvergence {
        iterations: 0,
        residual: f64::INFINITY,
    })?;
    let params = EquilibriumParams::new(a, c, stats)?;
    let (mass, energy) = equilibrium_moments(&params, grid);
    let res = ((mass - mass0) / mass0).hypot((energy - energy0) / energy0);
    if res < MATCH_TOL {
        Ok(params)
    } else {
        Err(EquilibriumError::NonConvergence { iterations: 200, residual: res })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::MomentumGrid;
    use crate::kinematics::{com_post_momenta, CollisionGeometry, FourMomentum};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fermion_rest_value() {
        let params = EquilibriumParams::new(1.0, 0.0, StatisticsKind::Fermion).unwrap();
        let m = equilibrium_m(&params, &[0.0; 3]);
        assert!((m - 1.0 / (std::f64::consts::E + 1.0)).abs() < 1e-12);
        assert!((m - 0.268_941_421_369_995_1).abs() < 1e-7);
    }

    #[test]
    fn boson_rest_value() {
        let params = EquilibriumParams::new(1.0, 0.0, StatisticsKind::Boson).unwrap();
        let m = equilibrium_m(&params, &[0.0; 3]);
        assert!((m - 1.0 / (std::f64::consts::E - 1.0)).abs() < 1e-12);
        assert!((m - 0.581_976_706_869_326_4).abs() < 1e-7);
    }

    #[test]
    fn m_decays_monotonically() {
        let params = EquilibriumParams::new(1.3, -0.4, StatisticsKind::Fermion).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..200 {
            let r = 0.1 * k as f64;
            let m = equilibrium_m(&params, &[r, 0.0, 0.0]);
            assert!(m > 0.0 || r > 600.0);
            assert!(m < last);
            assert!(m < 1.0, "fermion occupancy stays below one");
            last = m;
        }
    }

    #[test]
    fn boson_boundary_rejected() {
        assert!(EquilibriumParams::new(1.0, -1.0, StatisticsKind::Boson).is_err());
        assert!(EquilibriumParams::new(1.0, -1.0 + 1e-12, StatisticsKind::Boson).is_err());
        assert!(EquilibriumParams::new(1.0, -0.9, StatisticsKind::Boson).is_ok());
        assert!(EquilibriumParams::new(1.0, -1.5, StatisticsKind::Fermion).is_ok());
        assert!(EquilibriumParams::new(-1.0, 0.0, StatisticsKind::Fermion).is_err());
    }

    #[test]
    fn juttner_values() {
        assert!((juttner_j(1.0, 1.0) - (-1.0_f64).exp()).abs() < 1e-12);
        for k in 0..50 {
            let p0 = 1.0 + 0.5 * k as f64;
            let j = juttner_j(0.7, p0);
            assert!(j > 0.0 && j <= (-0.7_f64).exp() + 1e-15);
        }
    }

    #[test]
    fn sandwich_bounds_hold_on_log_spaced_grid() {
        for (a, c, stats) in [
            (1.0, 0.0, StatisticsKind::Fermion),
            (0.8, -1.0, StatisticsKind::Fermion),
            (1.0, 0.5, StatisticsKind::Boson),
            (1.5, -1.2, StatisticsKind::Boson),
        ] {
            let params = EquilibriumParams::new(a, c, stats).unwrap();
            let (c1, c2) = juttner_sandwich_constants(&params);
            for k in 0..=60 {
                let p0 = (50.0_f64).powf(k as f64 / 60.0);
                let m = params.m_of_energy(p0);
                let j = juttner_j(a, p0);
                // The boson upper bound is an exact equality at p0 = 1.
                assert!(c1 * j <= m * (1.0 + 1e-12) + 1e-300, "lower bound at p0 = {p0}");
                assert!(m <= c2 * j * (1.0 + 1e-12) + 1e-300, "upper bound at p0 = {p0}");
            }
        }
    }

    #[test]
    fn occupancy_bounds() {
        let fermion = EquilibriumParams::new(1.0, 0.2, StatisticsKind::Fermion).unwrap();
        let boson = EquilibriumParams::new(1.0, 0.3, StatisticsKind::Boson).unwrap();
        let boson_cap = 1.0 + 1.0 / ((boson.a() + boson.c()).exp() - 1.0);
        for k in 0..100 {
            let p0 = 1.0 + 0.3 * k as f64;
            let bf = fermion.occupancy_of_energy(p0);
            assert!(bf > 0.0 && bf < 1.0);
            let bb = boson.occupancy_of_energy(p0);
            assert!(bb >= 1.0 && bb <= boson_cap + 1e-12);
        }
    }

    #[test]
    fn weight_identities_exponential_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for (a, c, stats) in [
            (1.0, 0.0, StatisticsKind::Fermion),
            (0.6, 1.3, StatisticsKind::Boson),
        ] {
            let params = EquilibriumParams::new(a, c, stats).unwrap();
            for _ in 0..200 {
                let p: [f64; 3] = [
                    rng.gen_range(-6.0..6.0),
                    rng.gen_range(-6.0..6.0),
                    rng.gen_range(-6.0..6.0),
                ];
                let p0 = (1.0 + p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                let (r1, r2) = weight_identities(&params, &p);
                let x = 0.5 * (a * p0 + c);
                assert!((r1 - (-x).exp()).abs() < 1e-12 * r1.max(1.0));
                assert!((r2 - x.exp()).abs() < 1e-12 * r2);
                assert!((r1 * r2 - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fermion_sqrt_weight_rest_value() {
        let params = EquilibriumParams::new(1.0, 0.0, StatisticsKind::Fermion).unwrap();
        let m = 1.0 / (std::f64::consts::E + 1.0);
        let expected = (m - m * m).sqrt();
        assert!((sqrt_weight(&params, &[0.0; 3]) - expected).abs() < 1e-13);
        assert!((expected - 0.443_409_442_7).abs() < 1e-9);
    }

    #[test]
    fn detailed_balance_on_com_quadruples() {
        // m(p') m(q') (1+tau m(p)) (1+tau m(q)) = (1+tau m(p'))(1+tau m(q')) m(p) m(q)
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for stats in [StatisticsKind::Fermion, StatisticsKind::Boson] {
            let params = EquilibriumParams::new(1.0, 0.4, stats).unwrap();
            for _ in 0..500 {
                let p = FourMomentum::from_components(
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                );
                let q = FourMomentum::from_components(
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                );
                let cos_t: f64 = rng.gen_range(-1.0..1.0);
                let geom = CollisionGeometry::from_angles(
                    cos_t.acos(),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                );
                let quad = com_post_momenta(&p, &q, &geom).unwrap();
                let tau = params.tau();
                let m = |e: f64| params.m_of_energy(e);
                let lhs = m(quad.p_prime.energy())
                    * m(quad.q_prime.energy())
                    * (1.0 + tau * m(p.energy()))
                    * (1.0 + tau * m(q.energy()));
                let rhs = (1.0 + tau * m(quad.p_prime.energy()))
                    * (1.0 + tau * m(quad.q_prime.energy()))
                    * m(p.energy())
                    * m(q.energy());
                assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1e-300));
            }
        }
    }

    #[test]
    fn ratio_product_identity_on_com_quadruples() {
        // (m/w)(p) (m/w)(q) = (m/w)(p') (m/w)(q') by energy conservation.
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let params = EquilibriumParams::new(0.9, -0.3, StatisticsKind::Fermion).unwrap();
        for _ in 0..300 {
            let p = FourMomentum::from_components(
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
            );
            let q = FourMomentum::from_components(
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
            );
            let cos_t: f64 = rng.gen_range(-1.0..1.0);
            let geom = CollisionGeometry::from_angles(
                cos_t.acos(),
                rng.gen_range(0.0..std::f64::consts::TAU),
            );
            let quad = com_post_momenta(&p, &q, &geom).unwrap();
            let ratio = |e: f64| {
                let (m, _, w) = params.mbw_of_energy(e);
                m / w
            };
            let lhs = ratio(p.energy()) * ratio(q.energy());
            let rhs = ratio(quad.p_prime.energy()) * ratio(quad.q_prime.energy());
            assert!((lhs - rhs).abs() < 1e-10 * lhs.max(rhs));
        }
    }

    #[test]
    fn match_recovers_exact_equilibrium() {
        let grid = MomentumGrid::new(6.0, 16).unwrap();
        let target = EquilibriumParams::new(1.1, -0.2, StatisticsKind::Fermion).unwrap();
        let values: Vec<f64> = (0..grid.len()).map(|i| target.m_of_energy(grid.energy(i))).collect();
        let params = match_equilibrium_params(&values, &grid, StatisticsKind::Fermion, None).unwrap();
        assert!((params.a() - target.a()).abs() < 1e-8);
        assert!((params.c() - target.c()).abs() < 1e-7);
    }

    #[test]
    fn match_scaled_equilibrium_reproduces_moments() {
        let grid = MomentumGrid::new(6.0, 16).unwrap();
        let base = EquilibriumParams::new(1.0, 0.0, StatisticsKind::Fermion).unwrap();
        let values: Vec<f64> =
            (0..grid.len()).map(|i| 1.05 * base.m_of_energy(grid.energy(i))).collect();
        let (mass0, _, energy0) = slice_moments(&values, &grid);
        let params = match_equilibrium_params(&values, &grid, StatisticsKind::Fermion, None).unwrap();
        let matched: Vec<f64> =
            (0..grid.len()).map(|i| params.m_of_energy(grid.energy(i))).collect();
        let (mass1, _, energy1) = slice_moments(&matched, &grid);
        assert!((mass1 - mass0).abs() < 1e-8 * mass0);
        assert!((energy1 - energy0).abs() < 1e-8 * energy0);
    }

    #[test]
    fn match_near_saturation_fermion() {
        let grid = MomentumGrid::new(6.0, 12).unwrap();
        // Nearly saturated data: F close to one at the innermost nodes.
        let target = EquilibriumParams::new(1.0, -6.5, StatisticsKind::Fermion).unwrap();
        let values: Vec<f64> =
            (0..grid.len()).map(|i| target.m_of_energy(grid.energy(i))).collect();
        assert!(values.iter().cloned().fold(0.0, f64::max) > 0.98);
        let params = match_equilibrium_params(&values, &grid, StatisticsKind::Fermion, None).unwrap();
        assert!(params.c() < -4.0);
        let matched: Vec<f64> =
            (0..grid.len()).map(|i| params.m_of_energy(grid.energy(i))).collect();
        let (mass0, _, energy0) = slice_moments(&values, &grid);
        let (mass1, _, energy1) = slice_moments(&matched, &grid);
        assert!((mass1 - mass0).abs() < 1e-8 * mass0);
        assert!((energy1 - energy0).abs() < 1e-8 * energy0);
    }

    #[test]
    fn match_rejects_net_momentum() {
        let grid = MomentumGrid::new(5.0, 10).unwrap();
        let values: Vec<f64> = (0..grid.len())
            .map(|i| {
                let node = grid.node(i);
                (-(node[0] - 1.5) * (node[0] - 1.5) - node[1] * node[1] - node[2] * node[2]).exp()
            })
            .collect();
        assert!(matches!(
            match_equilibrium_params(&values, &grid, StatisticsKind::Fermion, None),
            Err(EquilibriumError::NonzeroNetMomentum(_))
        ));
    }
}
