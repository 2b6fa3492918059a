//! Command-line surface: run drivers, the spectral report, the reduction
//! oracle, the benchmark harness and config validation.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
//! 4 internal error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::collision::{CollisionOperator, SliceView};
use crate::config::FileConfig;
use crate::csvio;
use crate::diagnostics::decay_rate_fit;
use crate::error::SolverError;
use crate::kinematics::{com_post_momenta, CollisionGeometry, FourMomentum};
use crate::linearized::{assemble_l, Linearized};
use crate::reduced;
use crate::snapshot::Snapshot;
use crate::solver::{self, SpatialMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

const USAGE: &str = "\
usage: rqboltz <subcommand> [--config PATH] [--out DIR] [--threads N] [--resume SNAPSHOT]

subcommands:
  relax            homogeneous relaxation run (spatial = none)
  perturb          torus transport-collision run (spatial = torus1d)
  spectrum         assemble the linearized operator and report its spectrum
  oracle           run the reduction identity suite, write a CSV report
  bench            time collision-operator applications per thread count
  validate-config  parse the config file and echo the normalized form
";

struct Args {
    subcommand: String,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    threads: usize,
    resume: Option<PathBuf>,
}

fn parse_args(argv: &[String]) -> Result<Args, String> {
    let mut it = argv.iter();
    let subcommand = it.next().ok_or_else(|| USAGE.to_string())?.clone();
    let mut args = Args {
        subcommand,
        config: None,
        out: None,
        threads: 0,
        resume: None,
    };
    while let Some(flag) = it.next() {
        match flag.as_str() {
            "--config" => {
                args.config =
                    Some(PathBuf::from(it.next().ok_or("--config needs a path")?))
            }
            "--out" => args.out = Some(PathBuf::from(it.next().ok_or("--out needs a path")?)),
            "--threads" => {
                let v = it.next().ok_or("--threads needs a count")?;
                args.threads =
                    v.parse::<usize>().map_err(|_| format!("bad thread count `{v}`"))?;
            }
            "--resume" => {
                args.resume =
                    Some(PathBuf::from(it.next().ok_or("--resume needs a path")?))
            }
            other => return Err(format!("unknown flag `{other}`\n{USAGE}")),
        }
    }
    Ok(args)
}

/// Entry point shared by the binary and the tests.
pub fn run_cli(argv: &[String]) -> i32 {
    let args = match parse_args(argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("{msg}");
            return EXIT_CONFIG;
        }
    };

    // A worker pool of the requested size; 0 picks the machine default.
    // Every computation runs inside it, so thread-count effects (there are
    // none on the numbers, by construction) would be visible to the tests.
    let mut builder = rayon::ThreadPoolBuilder::new();
    if args.threads > 0 {
        builder = builder.num_threads(args.threads);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("failed to build worker pool: {e}");
            return EXIT_INTERNAL;
        }
    };

    pool.install(|| dispatch(&args))
}

fn dispatch(args: &Args) -> i32 {
    match args.subcommand.as_str() {
        "relax" | "perturb" => run_simulation(args),
        "spectrum" => run_spectrum(args),
        "oracle" => run_oracle(args),
        "bench" => run_bench(args),
        "validate-config" => run_validate(args),
        other => {
            eprintln!("unknown subcommand `{other}`\n{USAGE}");
            EXIT_CONFIG
        }
    }
}

fn load_config(args: &Args) -> Result<FileConfig, i32> {
    let Some(path) = &args.config else {
        eprintln!("--config is required for `{}`", args.subcommand);
        return Err(EXIT_CONFIG);
    };
    FileConfig::load(path).map_err(|e| {
        eprintln!("config error: {e}");
        EXIT_CONFIG
    })
}

fn ensure_out(args: &Args) -> Result<PathBuf, i32> {
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("cannot create output directory {}: {e}", out.display());
        return Err(EXIT_INTERNAL);
    }
    Ok(out)
}

fn run_simulation(args: &Args) -> i32 {
    let file_config = match load_config(args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match (args.subcommand.as_str(), file_config.spatial) {
        ("relax", SpatialMode::None) | ("perturb", SpatialMode::Torus1d { .. }) => {}
        ("relax", _) => {
            eprintln!("`relax` needs `spatial = none` in the config");
            return EXIT_CONFIG;
        }
        (_, SpatialMode::None) => {
            eprintln!("`perturb` needs `spatial = torus1d` in the config");
            return EXIT_CONFIG;
        }
        _ => unreachable!(),
    }
    let out = match ensure_out(args) {
        Ok(o) => o,
        Err(code) => return code,
    };
    let config = file_config.build();

    let resume_state = match &args.resume {
        None => None,
        Some(path) => match Snapshot::load(path) {
            Ok(snap) => {
                if snap.dims[0] as usize != file_config.n
                    || snap.nx as usize != config.spatial.cells()
                    || snap.stats != file_config.stats
                {
                    eprintln!("snapshot shape does not match the configuration");
                    return EXIT_CONFIG;
                }
                Some(snap.into_state())
            }
            Err(e) => {
                eprintln!("cannot read snapshot: {e}");
                return EXIT_CONFIG;
            }
        },
    };

    let csv_path = out.join("diagnostics.csv");
    // Truncate any previous run in this directory.
    if let Err(e) = csvio::save_diagnostics_csv(&[], &csv_path) {
        eprintln!("cannot write {}: {e}", csv_path.display());
        return EXIT_INTERNAL;
    }
    let mut snapshot_counter = 0usize;
    let on_record = |rec: &crate::diagnostics::DiagnosticsRecord| {
        let _ = csvio::append_diagnostics_csv(std::slice::from_ref(rec), &csv_path);
    };
    let on_snapshot = |state: &solver::State| {
        let snap = Snapshot::from_state(
            state,
            file_config.a,
            file_config.c,
            file_config.n,
            file_config.pmax,
        );
        let path = out.join(format!("snapshot_{snapshot_counter:05}.rqbk"));
        let _ = snap.save(&path);
        snapshot_counter += 1;
    };

    match solver::run_with(&config, resume_state, on_record, on_snapshot) {
        Ok(result) => {
            let snap = Snapshot::from_state(
                &result.state,
                result.matched.a(),
                result.matched.c(),
                file_config.n,
                file_config.pmax,
            );
            if let Err(e) = snap.save(&out.join("final.rqbk")) {
                eprintln!("cannot write final snapshot: {e}");
                return EXIT_INTERNAL;
            }
            let series: Vec<(f64, f64)> =
                result.records.iter().map(|r| (r.t, r.l2_f)).collect();
            match decay_rate_fit(&series, 0.1) {
                Ok(fit) => println!(
                    "decay fit: epsilon = {:.6e}, r^2 = {:.6}, samples = {}",
                    fit.epsilon, fit.r_squared, fit.samples
                ),
                Err(e) => println!("decay fit unavailable: {e}"),
            }
            println!(
                "run complete: t = {}, records = {}, matched (a, c) = ({:.12}, {:.12})",
                result.state.t,
                result.records.len(),
                result.matched.a(),
                result.matched.c()
            );
            EXIT_OK
        }
        Err(SolverError::Divergence { t, node }) => {
            eprintln!("numerical divergence at t = {t}, node {node}; last good state persisted");
            EXIT_DIVERGENCE
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            EXIT_INTERNAL
        }
    }
}

fn run_spectrum(args: &Args) -> i32 {
    let file_config = match load_config(args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let out = match ensure_out(args) {
        Ok(o) => o,
        Err(code) => return code,
    };
    let config = file_config.build();
    let lin = Linearized::new(&config.params, &config.grid, &config.angular);
    let start = Instant::now();
    let op = assemble_l(&lin);
    println!(
        "assembled L: n = {} ({} nodes), {:.1} s",
        file_config.n,
        op.n,
        start.elapsed().as_secs_f64()
    );
    println!("raw asymmetry: max {:.3e} (relative {:.3e})", op.raw_asymmetry_max, op.raw_asymmetry_rel);
    println!("symmetry defect after symmetrization: {:.3e}", op.symmetry_defect());
    println!("raw kernel residuals (pre-deflation): {:?}", op.raw_kernel_residuals);
    let kernel = op.kernel_residual_norms();
    println!("kernel singular values (post-deflation): {kernel:?}");
    let gap = match op.l2_gap() {
        Ok(g) => g,
        Err(e) => {
            eprintln!("eigenvalue iteration failed: {e}");
            return EXIT_INTERNAL;
        }
    };
    let delta = match op.coercivity_delta() {
        Ok(d) => d,
        Err(e) => {
            eprintln!("eigenvalue iteration failed: {e}");
            return EXIT_INTERNAL;
        }
    };
    println!("sixth smallest eigenvalue (L2 gap): {gap:.6e}");
    println!("coercivity delta (nu-weighted gap): {delta:.6e}");

    // CSV report.
    let report_path = out.join("spectrum.csv");
    let report = {
        let mut s = String::from("quantity,value\n");
        s.push_str(&format!("nodes,{}\n", op.n));
        s.push_str(&format!("raw_asymmetry_max,{:.17e}\n", op.raw_asymmetry_max));
        s.push_str(&format!("raw_asymmetry_rel,{:.17e}\n", op.raw_asymmetry_rel));
        s.push_str(&format!("symmetry_defect,{:.17e}\n", op.symmetry_defect()));
        for (k, r) in op.raw_kernel_residuals.iter().enumerate() {
            s.push_str(&format!("raw_kernel_residual_{k},{r:.17e}\n"));
        }
        for (k, r) in kernel.iter().enumerate() {
            s.push_str(&format!("kernel_singular_value_{k},{r:.17e}\n"));
        }
        s.push_str(&format!("l2_gap,{gap:.17e}\n"));
        s.push_str(&format!("coercivity_delta,{delta:.17e}\n"));
        s
    };
    if let Err(e) = std::fs::write(&report_path, report) {
        eprintln!("cannot write {}: {e}", report_path.display());
        return EXIT_INTERNAL;
    }

    // Dense matrix export for offline analysis.
    if let Err(e) = write_matrix(&out.join("matrix_l.rqbm"), op.n, &op.matrix) {
        eprintln!("cannot export matrix: {e}");
        return EXIT_INTERNAL;
    }
    EXIT_OK
}

/// Dense matrix export: magic `RQBM`, version, dimension, row-major f64
/// little-endian payload.
pub fn write_matrix(path: &Path, n: usize, matrix: &[f64]) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(b"RQBM")?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&(n as u32).to_le_bytes())?;
    for v in matrix {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn run_oracle(args: &Args) -> i32 {
    let out = match ensure_out(args) {
        Ok(o) => o,
        Err(code) => return code,
    };
    // Deterministic sample of collision quadruples.
    let mut rng_state = 0x5EEDu64;
    let mut next = move || {
        rng_state = rng_state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = rng_state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
        (z as f64) / (u64::MAX as f64) - 0.5
    };
    let mut merged = reduced::IdentityReport::default();
    let samples = 2000usize;
    for _ in 0..samples {
        let p = FourMomentum::new([20.0 * next(), 20.0 * next(), 20.0 * next()]);
        let q = FourMomentum::new([20.0 * next(), 20.0 * next(), 20.0 * next()]);
        let cos_t = (2.0 * next()).clamp(-1.0, 1.0);
        let phi = (next() + 0.5) * std::f64::consts::TAU;
        let geom = CollisionGeometry::from_angles(cos_t.acos(), phi);
        let quad = match com_post_momenta(&p, &q, &geom) {
            Ok(quad) => quad,
            Err(_) => continue,
        };
        merged.merge(&reduced::on_shell_identity_suite(&quad));
    }

    // Bessel and closed-form oracle rows.
    let mut extra: Vec<(String, f64, f64, bool)> = Vec::new();
    let mut bessel_worst = 0.0f64;
    for k in 0..=40 {
        let y = 0.5 * k as f64;
        let ours = reduced::bessel_i0_scaled(y);
        let oracle = reduced::bessel_i0_scaled_by_quadrature(y);
        bessel_worst = bessel_worst.max((ours - oracle).abs() / oracle);
    }
    extra.push(("bessel_i0_vs_defining_integral".into(), bessel_worst, 1e-12, bessel_worst <= 1e-12));

    let mut closed_worst = 0.0f64;
    for i in 0..10 {
        let r_big = 1.1 + 18.9 * i as f64 / 9.0;
        for j in 0..8 {
            let r_small = r_big * 0.95 * j as f64 / 7.0;
            let (q1, q2) = reduced::closed_form_by_quadrature(r_big, r_small).unwrap();
            let c1 = reduced::closed_form_i(r_big, r_small).unwrap();
            let c2 = reduced::closed_form_ii(r_big, r_small).unwrap();
            closed_worst = closed_worst.max((q1 - c1).abs() / c1).max((q2 - c2).abs() / c2);
        }
    }
    extra.push(("closed_forms_vs_quadrature".into(), closed_worst, 1e-8, closed_worst <= 1e-8));

    let mut bound_ok = true;
    let mut bound_margin = f64::INFINITY;
    for _ in 0..500 {
        let p = FourMomentum::new([10.0 * next(), 10.0 * next(), 10.0 * next()]);
        let pp = FourMomentum::new([10.0 * next(), 10.0 * next(), 10.0 * next()]);
        let Ok(b) = reduced::reduced_b(&p, &pp, 1.0) else { continue };
        let upper = reduced::b_upper(&p, &pp, 1.0).unwrap();
        bound_ok &= b <= upper.bracket * (1.0 + 1e-9);
        bound_margin = bound_margin.min(upper.bracket / b);
    }
    extra.push(("reduced_b_below_upper_bound".into(), bound_margin, f64::INFINITY, bound_ok));

    let mut csv = String::from("check,max_error,tolerance,skipped,pass\n");
    for check in &merged.checks {
        csv.push_str(&format!(
            "{},{:.17e},{:.17e},{},{}\n",
            check.name,
            check.error,
            check.tol,
            check.skipped,
            check.passed()
        ));
    }
    for (name, value, tol, pass) in &extra {
        csv.push_str(&format!("{name},{value:.17e},{tol:.17e},false,{pass}\n"));
    }
    let path = out.join("oracle.csv");
    if let Err(e) = std::fs::write(&path, &csv) {
        eprintln!("cannot write {}: {e}", path.display());
        return EXIT_INTERNAL;
    }
    let all = merged.all_passed() && extra.iter().all(|(_, _, _, p)| *p);
    println!(
        "oracle: {} identity checks over {samples} quadruples, {}",
        merged.checks.len() + extra.len(),
        if all { "all passed" } else { "FAILURES (see oracle.csv)" }
    );
    if all {
        EXIT_OK
    } else {
        EXIT_INTERNAL
    }
}

fn run_bench(args: &Args) -> i32 {
    let file_config = match load_config(args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let config = file_config.build();
    let params = &config.params;
    let grid = &config.grid;
    let op = CollisionOperator::new(grid, &config.angular);

    // A reproducible near-equilibrium field.
    let values: Vec<f64> = (0..grid.len())
        .map(|i| {
            let p = grid.node(i);
            let m = params.m_of_energy(grid.energy(i));
            let bump = 0.05 * (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / 4.0).exp();
            (m + bump).clamp(0.0, 1.0)
        })
        .collect();

    let thread_counts: Vec<usize> = if args.threads > 0 {
        vec![args.threads]
    } else {
        let max = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        let mut v = vec![1];
        let mut k = 2;
        while k < max {
            v.push(k);
            k *= 2;
        }
        if max > 1 {
            v.push(max);
        }
        v
    };

    println!("{:>8} {:>12} {:>14}  checksum", "threads", "seconds", "nodes/s");
    let mut reference_checksum: Option<String> = None;
    for &threads in &thread_counts {
        let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(p) => p,
            Err(e) => {
                eprintln!("pool: {e}");
                return EXIT_INTERNAL;
            }
        };
        let start = Instant::now();
        let q = pool.install(|| {
            let view = SliceView::Values { values: &values, stats: params.stats() };
            op.q_full(&view).expect("validated")
        });
        let elapsed = start.elapsed().as_secs_f64();
        // Checksum in fixed index order ties the timing to validated output.
        let checksum: f64 =
            q.iter().enumerate().fold(0.0, |acc, (i, v)| acc + v * (1.0 + (i % 97) as f64));
        let formatted = format!("{checksum:.16e}");
        println!(
            "{threads:>8} {elapsed:>12.3} {:>14.0}  {formatted}",
            grid.len() as f64 / elapsed
        );
        match &reference_checksum {
            None => reference_checksum = Some(formatted),
            Some(reference) => {
                if *reference != formatted {
                    eprintln!("checksum mismatch across thread counts");
                    return EXIT_INTERNAL;
                }
            }
        }
    }
    println!("checksums identical across thread counts");
    EXIT_OK
}

fn run_validate(args: &Args) -> i32 {
    match load_config(args) {
        Ok(config) => {
            print!("{}", config.normalized());
            EXIT_OK
        }
        Err(code) => code,
    }
}
