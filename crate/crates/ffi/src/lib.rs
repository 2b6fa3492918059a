//! C ABI for the rqboltz solver: opaque handles, status codes, and a small
//! set of pure kernel evaluations, so other languages can drive runs and
//! cross-check the physics without linking Rust.
//!
//! Every function is safe to call from any thread; handles must not be
//! shared between threads without external synchronization.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rqboltz::collision::CollisionOperator;
use rqboltz::config::FileConfig;
use rqboltz::diagnostics;
use rqboltz::equilibrium::{EquilibriumParams, StatisticsKind};
use rqboltz::kinematics::FourMomentum;
use rqboltz::linearized::Linearized;
use rqboltz::reduced;
use rqboltz::solver::{self, SimulationConfig, State};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RqbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    NumericalError = 4,
    Internal = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

/// Copies the last error message of the calling thread into `buf`
/// (NUL-terminated, truncated to `cap`). Returns the full message length.
#[no_mangle]
pub extern "C" fn rqb_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rqb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---------------------------------------------------------------------------
// Pure kernel evaluations.
// ---------------------------------------------------------------------------

/// Minkowski product of two on-shell momenta given by spatial components.
#[no_mangle]
pub extern "C" fn rqb_minkowski_product(p: *const f64, q: *const f64, out: *mut f64) -> RqbStatus {
    if p.is_null() || q.is_null() || out.is_null() {
        return RqbStatus::NullPointer;
    }
    let (pv, qv) = unsafe { (read_vec3(p), read_vec3(q)) };
    let a = FourMomentum::new(pv);
    let b = FourMomentum::new(qv);
    unsafe { *out = rqboltz::kinematics::minkowski_product(&a, &b) };
    RqbStatus::Ok
}

/// Relative energy `s` and relative momentum `g` of a pair.
#[no_mangle]
pub extern "C" fn rqb_relative_quantities(
    p: *const f64,
    q: *const f64,
    s_out: *mut f64,
    g_out: *mut f64,
) -> RqbStatus {
    if p.is_null() || q.is_null() || s_out.is_null() || g_out.is_null() {
        return RqbStatus::NullPointer;
    }
    let (pv, qv) = unsafe { (read_vec3(p), read_vec3(q)) };
    let a = FourMomentum::new(pv);
    let b = FourMomentum::new(qv);
    match rqboltz::kinematics::relative_quantities(&a, &b) {
        Ok((s, g)) => {
            unsafe {
                *s_out = s;
                *g_out = g;
            }
            RqbStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            RqbStatus::NumericalError
        }
    }
}

/// Moller velocity of a pair (square-root form).
#[no_mangle]
pub extern "C" fn rqb_moller_velocity(p: *const f64, q: *const f64, out: *mut f64) -> RqbStatus {
    if p.is_null() || q.is_null() || out.is_null() {
        return RqbStatus::NullPointer;
    }
    let (pv, qv) = unsafe { (read_vec3(p), read_vec3(q)) };
    let a = FourMomentum::new(pv);
    let b = FourMomentum::new(qv);
    unsafe { *out = rqboltz::kinematics::moller_velocity(&a, &b) };
    RqbStatus::Ok
}

/// Hard-potential cross section `g sin(theta)`.
#[no_mangle]
pub extern "C" fn rqb_cross_section(g: f64, theta: f64) -> f64 {
    rqboltz::kinematics::cross_section(g, theta)
}

/// Equilibrium occupancy `1 / (e^{a p0 + c} - tau)` at spatial momentum `p`;
/// `tau` is +1 for bosons, -1 for fermions.
#[no_mangle]
pub extern "C" fn rqb_equilibrium_m(
    a: f64,
    c: f64,
    tau: i32,
    p: *const f64,
    out: *mut f64,
) -> RqbStatus {
    if p.is_null() || out.is_null() {
        return RqbStatus::NullPointer;
    }
    let stats = match tau {
        1 => StatisticsKind::Boson,
        -1 => StatisticsKind::Fermion,
        _ => {
            set_error("tau must be +1 (boson) or -1 (fermion)");
            return RqbStatus::InvalidArgument;
        }
    };
    match EquilibriumParams::new(a, c, stats) {
        Ok(params) => {
            let pv = unsafe { read_vec3(p) };
            unsafe { *out = rqboltz::equilibrium::equilibrium_m(&params, &pv) };
            RqbStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            RqbStatus::InvalidArgument
        }
    }
}

/// Modified Bessel function I0.
#[no_mangle]
pub extern "C" fn rqb_bessel_i0(y: f64, out: *mut f64) -> RqbStatus {
    if out.is_null() {
        return RqbStatus::NullPointer;
    }
    if !(y >= 0.0) {
        set_error("bessel_i0 needs y >= 0");
        return RqbStatus::InvalidArgument;
    }
    unsafe { *out = reduced::bessel_i0(y) };
    RqbStatus::Ok
}

/// The reduced kernel integral B(p, p'; a) and its closed-form upper bound.
#[no_mangle]
pub extern "C" fn rqb_reduced_b(
    p: *const f64,
    p_prime: *const f64,
    a: f64,
    b_out: *mut f64,
    upper_out: *mut f64,
) -> RqbStatus {
    if p.is_null() || p_prime.is_null() || b_out.is_null() || upper_out.is_null() {
        return RqbStatus::NullPointer;
    }
    if !(a > 0.0) {
        set_error("decay rate a must be positive");
        return RqbStatus::InvalidArgument;
    }
    let (pv, qv) = unsafe { (read_vec3(p), read_vec3(p_prime)) };
    let pm = FourMomentum::new(pv);
    let qm = FourMomentum::new(qv);
    let b = match reduced::reduced_b(&pm, &qm, a) {
        Ok(b) => b,
        Err(e) => {
            set_error(e.to_string());
            return RqbStatus::NumericalError;
        }
    };
    let upper = match reduced::b_upper(&pm, &qm, a) {
        Ok(u) => u,
        Err(e) => {
            set_error(e.to_string());
            return RqbStatus::NumericalError;
        }
    };
    unsafe {
        *b_out = b;
        *upper_out = upper.bracket;
    }
    RqbStatus::Ok
}

unsafe fn read_vec3(p: *const f64) -> [f64; 3] {
    [*p, *p.add(1), *p.add(2)]
}

// ---------------------------------------------------------------------------
// Configuration handles.
// ---------------------------------------------------------------------------

/// Opaque parsed configuration.
pub struct RqbConfig {
    file: FileConfig,
}

/// Parses a configuration from NUL-terminated `key = value` text. Returns a
/// handle or NULL (inspect `rqb_last_error`).
#[no_mangle]
pub extern "C" fn rqb_config_parse(text: *const c_char) -> *mut RqbConfig {
    if text.is_null() {
        set_error("null config text");
        return ptr::null_mut();
    }
    let text = match unsafe { CStr::from_ptr(text) }.to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("config text is not valid UTF-8");
            return ptr::null_mut();
        }
    };
    match FileConfig::parse(text) {
        Ok(file) => Box::into_raw(Box::new(RqbConfig { file })),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Frees a configuration handle.
#[no_mangle]
pub extern "C" fn rqb_config_free(config: *mut RqbConfig) {
    if !config.is_null() {
        drop(unsafe { Box::from_raw(config) });
    }
}

/// Writes the canonical normalized `key = value` form into `buf`.
/// Returns the full length of the normalized text.
#[no_mangle]
pub extern "C" fn rqb_config_normalized(
    config: *const RqbConfig,
    buf: *mut c_char,
    cap: usize,
) -> usize {
    if config.is_null() {
        return 0;
    }
    let text = unsafe { &*config }.file.normalized();
    let bytes = text.as_bytes();
    if !buf.is_null() && cap > 0 {
        let n = bytes.len().min(cap - 1);
        unsafe {
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
    }
    bytes.len()
}

// ---------------------------------------------------------------------------
// Solver handles.
// ---------------------------------------------------------------------------

/// Diagnostics of the current solver state.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct RqbDiagnostics {
    pub t: f64,
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
    pub entropy_h: f64,
    pub l2_f: f64,
    pub nu_norm_f: f64,
    pub min_f: f64,
    pub max_f: f64,
}

/// Opaque solver: configuration, matched equilibrium and current state.
pub struct RqbSolver {
    config: SimulationConfig,
    matched: EquilibriumParams,
    nu: Vec<f64>,
    state: State,
}

/// Creates a solver from a parsed configuration: builds the initial state
/// and matches the reference equilibrium to it.
#[no_mangle]
pub extern "C" fn rqb_solver_new(config: *const RqbConfig) -> *mut RqbSolver {
    if config.is_null() {
        set_error("null config");
        return ptr::null_mut();
    }
    let built = unsafe { &*config }.file.build();
    let result = catch_unwind(AssertUnwindSafe(|| {
        let state = solver::initial_state(&built);
        let n = built.grid.len();
        let x_avg: Vec<f64> = (0..n)
            .map(|idx| {
                let mut acc = 0.0;
                for ix in 0..state.nx {
                    acc += state.data[ix * n + idx];
                }
                acc / state.nx as f64
            })
            .collect();
        let matched = rqboltz::equilibrium::match_equilibrium_params(
            &x_avg,
            &built.grid,
            built.params.stats(),
            Some((built.params.a(), built.params.c())),
        )?;
        let lin = Linearized::new(&matched, &built.grid, &built.angular);
        let nu = lin.nu_on_grid();
        Ok::<_, rqboltz::error::EquilibriumError>((state, matched, nu))
    }));
    match result {
        Ok(Ok((state, matched, nu))) => {
            Box::into_raw(Box::new(RqbSolver { config: built, matched, nu, state }))
        }
        Ok(Err(e)) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
        Err(_) => {
            set_error("panic during solver construction");
            ptr::null_mut()
        }
    }
}

/// Advances the solver by `steps` collision (and transport, on the torus)
/// steps of the configured dt.
#[no_mangle]
pub extern "C" fn rqb_solver_step(solver: *mut RqbSolver, steps: usize) -> RqbStatus {
    if solver.is_null() {
        return RqbStatus::NullPointer;
    }
    let s = unsafe { &mut *solver };
    let result = catch_unwind(AssertUnwindSafe(|| {
        let grid = &s.config.grid;
        let n = grid.len();
        let op = CollisionOperator::new(grid, &s.config.angular);
        let basis = solver::ConservationBasis::new(&s.matched, grid);
        let fix = if s.config.conservation_fix { Some(&basis) } else { None };
        for _ in 0..steps {
            match s.config.spatial {
                solver::SpatialMode::None => {
                    s.state.data =
                        solver::collision_substep(s.state.cell(0, n), &s.matched, &op, s.config.dt, fix);
                }
                solver::SpatialMode::Torus1d { .. } => {
                    solver::transport_substep(&mut s.state, grid, 0.5 * s.config.dt);
                    let mut new_data = vec![0.0; s.state.data.len()];
                    for ix in 0..s.state.nx {
                        let updated = solver::collision_substep(
                            s.state.cell(ix, n),
                            &s.matched,
                            &op,
                            s.config.dt,
                            fix,
                        );
                        new_data[ix * n..(ix + 1) * n].copy_from_slice(&updated);
                    }
                    s.state.data = new_data;
                    solver::transport_substep(&mut s.state, grid, 0.5 * s.config.dt);
                }
            }
            s.state.t += s.config.dt;
            if s.state.data.iter().any(|v| !v.is_finite()) {
                return Err("numerical divergence");
            }
        }
        Ok(())
    }));
    match result {
        Ok(Ok(())) => RqbStatus::Ok,
        Ok(Err(msg)) => {
            set_error(msg);
            RqbStatus::NumericalError
        }
        Err(_) => {
            set_error("panic during stepping");
            RqbStatus::Internal
        }
    }
}

/// Fills the diagnostics of the current state.
#[no_mangle]
pub extern "C" fn rqb_solver_diagnostics(
    solver: *const RqbSolver,
    out: *mut RqbDiagnostics,
) -> RqbStatus {
    if solver.is_null() || out.is_null() {
        return RqbStatus::NullPointer;
    }
    let s = unsafe { &*solver };
    let rec = diagnostics::record(&s.state, &s.config.grid, &s.matched, &s.nu);
    unsafe {
        *out = RqbDiagnostics {
            t: rec.t,
            mass: rec.mass,
            momentum: rec.momentum,
            energy: rec.energy,
            entropy_h: rec.h,
            l2_f: rec.l2_f,
            nu_norm_f: rec.nu_norm_f,
            min_f: rec.min_f,
            max_f: rec.max_f,
        };
    }
    RqbStatus::Ok
}

/// Number of stored field values (x-cells times momentum nodes).
#[no_mangle]
pub extern "C" fn rqb_solver_len(solver: *const RqbSolver) -> usize {
    if solver.is_null() {
        return 0;
    }
    unsafe { &*solver }.state.data.len()
}

/// Copies the current field (x-major, p-lexicographic) into `buf`.
#[no_mangle]
pub extern "C" fn rqb_solver_values(
    solver: *const RqbSolver,
    buf: *mut f64,
    len: usize,
) -> RqbStatus {
    if solver.is_null() || buf.is_null() {
        return RqbStatus::NullPointer;
    }
    let s = unsafe { &*solver };
    if len < s.state.data.len() {
        set_error(format!("buffer holds {len} values, state has {}", s.state.data.len()));
        return RqbStatus::InvalidArgument;
    }
    unsafe {
        ptr::copy_nonoverlapping(s.state.data.as_ptr(), buf, s.state.data.len());
    }
    RqbStatus::Ok
}

/// Frees a solver handle.
#[no_mangle]
pub extern "C" fn rqb_solver_free(solver: *mut RqbSolver) {
    if !solver.is_null() {
        drop(unsafe { Box::from_raw(solver) });
    }
}
