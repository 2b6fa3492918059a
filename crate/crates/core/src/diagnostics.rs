//! Moments, quantum entropy, perturbation norms and decay-rate fitting.

use crate::equilibrium::EquilibriumParams;
use crate::error::FitError;
use crate::grid::MomentumGrid;
use crate::solver::{SpatialMode, State, TORUS_LENGTH};

/// One diagnostics row of a run.
#[derive(Clone, Copy, Debug)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
    pub h: f64,
    pub l2_f: f64,
    pub nu_norm_f: f64,
    pub min_f: f64,
    pub max_f: f64,
}

/// Discrete mass, momentum and energy of a momentum slice.
pub fn moments(values: &[f64], grid: &MomentumGrid) -> (f64, [f64; 3], f64) {
    crate::equilibrium::slice_moments(values, grid)
}

/// Quantum entropy of one slice:
/// `H = Int F ln F - tau^{-1} (1 + tau F) ln(1 + tau F)`.
///
/// Conventions at the boundary of the admissible range: `0 ln 0 = 0`, and
/// for fermions `(1 - F) ln(1 - F) -> 0` as `F -> 1`.
pub fn h_functional(values: &[f64], grid: &MomentumGrid, tau: f64) -> f64 {
    let mut total = 0.0;
    for &v in values {
        let first = if v < 1e-300 { 0.0 } else { v * v.ln() };
        let occ = 1.0 + tau * v;
        let second = if occ < 1e-300 { 0.0 } else { occ * occ.ln() / tau };
        total += first - second;
    }
    total * grid.cell_volume()
}

/// Extracts the weighted perturbation `f = (F - m) / sqrt(m + tau m^2)`.
pub fn perturbation(values: &[f64], grid: &MomentumGrid, params: &EquilibriumParams) -> Vec<f64> {
    (0..grid.len())
        .map(|i| {
            let (m, _, w) = params.mbw_of_energy(grid.energy(i));
            (values[i] - m) / w
        })
        .collect()
}

/// Discrete L2 and nu-weighted norms of a perturbation slice.
pub fn norms(f: &[f64], grid: &MomentumGrid, nu: &[f64]) -> (f64, f64) {
    let mut l2 = 0.0;
    let mut nu_norm = 0.0;
    for (i, &v) in f.iter().enumerate() {
        l2 += v * v;
        nu_norm += nu[i] * v * v;
    }
    let vol = grid.cell_volume();
    ((l2 * vol).sqrt(), (nu_norm * vol).sqrt())
}

/// Full diagnostics row for a (possibly spatial) state.
pub fn record(
    state: &State,
    grid: &MomentumGrid,
    params: &EquilibriumParams,
    nu: &[f64],
) -> DiagnosticsRecord {
    let n = grid.len();
    let nx = state.nx;
    let x_weight = if nx == 1 { 1.0 } else { TORUS_LENGTH / nx as f64 };
    let tau = params.tau();

    let mut mass = 0.0;
    let mut momentum = [0.0; 3];
    let mut energy = 0.0;
    let mut h = 0.0;
    let mut l2 = 0.0;
    let mut nu_norm = 0.0;
    for ix in 0..nx {
        let cell = state.cell(ix, n);
        let (m, p, e) = moments(cell, grid);
        mass += m;
        for d in 0..3 {
            momentum[d] += p[d];
        }
        energy += e;
        h += h_functional(cell, grid, tau);
        let f = perturbation(cell, grid, params);
        let (c_l2, c_nu) = norms(&f, grid, nu);
        l2 += c_l2 * c_l2;
        nu_norm += c_nu * c_nu;
    }
    let (min_f, max_f) = state.min_max();
    DiagnosticsRecord {
        t: state.t,
        mass: mass * x_weight,
        momentum: [momentum[0] * x_weight, momentum[1] * x_weight, momentum[2] * x_weight],
        energy: energy * x_weight,
        h: h * x_weight,
        l2_f: (l2 * x_weight).sqrt(),
        nu_norm_f: (nu_norm * x_weight).sqrt(),
        min_f,
        max_f,
    }
}

/// Spatial mode inferred from a state (for reporting only).
pub fn spatial_of(state: &State) -> SpatialMode {
    if state.nx == 1 {
        SpatialMode::None
    } else {
        SpatialMode::Torus1d { nx: state.nx }
    }
}

/// Result of the exponential-decay fit.
#[derive(Clone, Copy, Debug)]
pub struct DecayFit {
    pub epsilon: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Least-squares slope of `ln(l2)` against `t` after discarding the burn-in
/// fraction; returns the decay rate `epsilon = -slope` and the goodness of
/// fit.
pub fn decay_rate_fit(series: &[(f64, f64)], burn_in: f64) -> Result<DecayFit, FitError> {
    let skip = ((series.len() as f64) * burn_in).floor() as usize;
    let used = &series[skip.min(series.len())..];
    if used.len() < 10 {
        return Err(FitError::InsufficientSamples { needed: 10, got: used.len() });
    }
    for (i, &(_, v)) in used.iter().enumerate() {
        if v <= 0.0 {
            return Err(FitError::NonpositiveValue { index: skip + i, value: v });
        }
    }
    let n = used.len() as f64;
    let mut st = 0.0;
    let mut sy = 0.0;
    for &(t, v) in used {
        st += t;
        sy += v.ln();
    }
    let tbar = st / n;
    let ybar = sy / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    let mut syy = 0.0;
    for &(t, v) in used {
        let dt = t - tbar;
        let dy = v.ln() - ybar;
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let slope = sty / stt;
    let r_squared = if syy == 0.0 { 1.0 } else { (sty * sty) / (stt * syy) };
    Ok(DecayFit { epsilon: -slope, r_squared, samples: used.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::StatisticsKind;

    #[test]
    fn h_functional_conventions() {
        let grid = MomentumGrid::new(2.0, 4).unwrap();
        let zeros = vec![0.0; grid.len()];
        assert_eq!(h_functional(&zeros, &grid, -1.0), 0.0);
        // Fermion saturation: F = 1 contributes 1 ln 1 + 0 ln 0 = 0.
        let ones = vec![1.0; grid.len()];
        assert_eq!(h_functional(&ones, &grid, -1.0), 0.0);
        // A mid value is negative for fermions (mixing entropy).
        let half = vec![0.5; grid.len()];
        assert!(h_functional(&half, &grid, -1.0) < 0.0);
    }

    #[test]
    fn perturbation_round_trip() {
        let grid = MomentumGrid::new(4.0, 6).unwrap();
        let params = EquilibriumParams::new(1.0, 0.0, StatisticsKind::Fermion).unwrap();
        let g: Vec<f64> = (0..grid.len()).map(|i| 0.01 * ((i % 5) as f64 - 2.0)).collect();
        let values: Vec<f64> = (0..grid.len())
            .map(|i| {
                let (m, _, w) = params.mbw_of_energy(grid.energy(i));
                m + w * g[i]
            })
            .collect();
        let f = perturbation(&values, &grid, &params);
        for (a, b) in f.iter().zip(g.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Equilibrium itself gives zero perturbation and zero norms.
        let eq: Vec<f64> = (0..grid.len()).map(|i| params.m_of_energy(grid.energy(i))).collect();
        let f0 = perturbation(&eq, &grid, &params);
        let nu = vec![1.0; grid.len()];
        let (l2, nn) = norms(&f0, &grid, &nu);
        assert!(l2 < 1e-14 && nn < 1e-14);
    }

    #[test]
    fn nu_norm_dominates_l2() {
        let grid = MomentumGrid::new(4.0, 6).unwrap();
        let f: Vec<f64> = (0..grid.len()).map(|i| ((i % 7) as f64 - 3.0) * 0.1).collect();
        let nu: Vec<f64> = (0..grid.len()).map(|i| 1.0 + (i % 3) as f64).collect();
        let nu_min: f64 = 1.0;
        let (l2, nn) = norms(&f, &grid, &nu);
        assert!(nn >= nu_min.sqrt() * l2 * (1.0 - 1e-12));
    }

    #[test]
    fn decay_fit_exact_exponential() {
        let series: Vec<(f64, f64)> =
            (0..100).map(|k| (0.1 * k as f64, 3.0 * (-0.7 * 0.1 * k as f64).exp())).collect();
        let fit = decay_rate_fit(&series, 0.1).unwrap();
        assert!((fit.epsilon - 0.7).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decay_fit_noisy_exponential() {
        let mut state = 42u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let series: Vec<(f64, f64)> = (0..200)
            .map(|k| {
                let t = 0.05 * k as f64;
                (t, 3.0 * (-0.7 * t).exp() * (1.0 + 0.01 * rnd()))
            })
            .collect();
        let fit = decay_rate_fit(&series, 0.1).unwrap();
        assert!((fit.epsilon - 0.7).abs() < 0.05, "epsilon {}", fit.epsilon);
        assert!(fit.r_squared > 0.99);
    }

    #[test]
    fn decay_fit_invariances() {
        let series: Vec<(f64, f64)> =
            (0..60).map(|k| (0.2 * k as f64, (-0.9 * 0.2 * k as f64).exp())).collect();
        let base = decay_rate_fit(&series, 0.0).unwrap();
        // Time shift and amplitude scale leave the rate unchanged.
        let shifted: Vec<(f64, f64)> =
            series.iter().map(|&(t, v)| (t + 5.0, 17.0 * v)).collect();
        let fit = decay_rate_fit(&shifted, 0.0).unwrap();
        assert!((fit.epsilon - base.epsilon).abs() < 1e-12);
    }

    #[test]
    fn decay_fit_error_paths() {
        let short: Vec<(f64, f64)> = (0..5).map(|k| (k as f64, 1.0)).collect();
        assert!(matches!(
            decay_rate_fit(&short, 0.0),
            Err(FitError::InsufficientSamples { .. })
        ));
        let bad: Vec<(f64, f64)> =
            (0..20).map(|k| (k as f64, if k == 7 { -1.0 } else { 1.0 })).collect();
        assert!(matches!(decay_rate_fit(&bad, 0.0), Err(FitError::NonpositiveValue { .. })));
    }
}
