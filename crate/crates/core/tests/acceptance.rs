//! Desk-scale acceptance runs. Every criterion prints one PASS/FAIL line; the test
//! fails at the end if any of them failed.
//!
//! Run alone with `cargo test --release --test acceptance`.

use std::io::Write;
use std::time::{Duration, Instant};

use bohm_limit::bohm::{integrate_ensemble, ParticleFlag};
use bohm_limit::environment::EnvironmentPolicy;
use bohm_limit::experiments::*;
use bohm_limit::field::make_gaussian_in;
use bohm_limit::localplane::{stationary_phase_oracle, DEFAULT_LPW_THRESHOLD};
use bohm_limit::propagator::{max_stable_dt, Propagator};
use bohm_limit::stats::ks_critical_1pct;
use bohm_limit::{Grid, PotentialSpec, Units};

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: usize, name: &'static str, pass: bool, detail: String) -> Line {
    let l = Line {
        id,
        name,
        pass,
        detail,
    };
    report(format_args!(
        "criterion {:>2} {:<28} {}  {}",
        l.id,
        l.name,
        if l.pass { "PASS" } else { "FAIL" },
        l.detail
    ));
    l
}

/// Straight to the stderr handle, which the test harness does not capture, so the
/// table shows up in plain `cargo test` output too.
fn report(args: std::fmt::Arguments) {
    let _ = writeln!(std::io::stderr(), "{args}");
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn unitarity() -> Line {
    let mut s = quartic_packet(Size::Full).unwrap();
    s.grid.n = 2048;
    let psi0 = s.initial_wave().unwrap();
    let grid = *psi0.grid();
    let dt = 0.4 * max_stable_dt(&grid, s.units, &s.potential);
    let start = Instant::now();
    let prop = Propagator::new(grid, s.units, &s.potential, dt).unwrap();
    let e0 = prop.energy(&psi0);
    let psi = prop.advance(&psi0, 10_000).unwrap();
    let elapsed = start.elapsed();
    let norm = (psi.norm_sq() - psi0.norm_sq()).abs();
    let energy = ((prop.energy(&psi) - e0) / e0).abs();
    line(
        1,
        "unitarity and energy",
        norm < 1e-10 && energy < 1e-6 && elapsed < Duration::from_secs(30),
        format!(
            "norm drift {norm:.2e}, <H> drift {energy:.2e}, {:.1} s",
            secs(elapsed)
        ),
    )
}

fn equivariance() -> Line {
    let s = free_gaussian(Size::Full).unwrap();
    let start = Instant::now();
    let o = run_scenario(&s).unwrap();
    let elapsed = start.elapsed();
    let n = s.particles;
    let crit = ks_critical_1pct(n);
    let worst =
        o.ks.iter()
            .map(|k| k.unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
    line(
        2,
        "equivariance",
        worst < crit && elapsed < Duration::from_secs(120),
        format!(
            "max KS {worst:.4} vs {crit:.4} ({n} particles), {:.1} s",
            secs(elapsed)
        ),
    )
}

fn analytic_trajectories() -> Line {
    let s = free_gaussian(Size::Full).unwrap();
    let psi0 = s.initial_wave().unwrap();
    let run = integrate_ensemble(&psi0, &s.potential, &s.plan, 2000, s.seed).unwrap();
    let (sigma0, hbar, m) = (s.packets[0].sigma, s.units.hbar, s.units.mass);
    let e = &run.ensemble;
    let mut worst_rel: f64 = 0.0;
    for (p, path) in e.positions.iter().enumerate() {
        if e.flags[p] != ParticleFlag::Ok {
            continue;
        }
        for (k, &t) in e.times.iter().enumerate() {
            let stretch = (1.0 + (hbar * t / (2.0 * m * sigma0 * sigma0)).powi(2)).sqrt();
            let want = path[0] * stretch;
            // particles starting at the centre barely move; measure them against sigma(t)
            let scale = want.abs().max(1e-2 * sigma0 * stretch);
            worst_rel = worst_rel.max((path[k] - want).abs() / scale);
        }
    }

    let c = coherent_harmonic(Size::Full).unwrap();
    let run = integrate_ensemble(
        &c.initial_wave().unwrap(),
        &c.potential,
        &c.plan,
        c.particles,
        c.seed,
    )
    .unwrap();
    let (x0, omega) = (c.packets[0].center, 1.0);
    let mut worst_abs: f64 = 0.0;
    for path in &run.ensemble.positions {
        for (k, &t) in run.ensemble.times.iter().enumerate() {
            let want = x0 * (omega * t).cos() + (path[0] - x0);
            worst_abs = worst_abs.max((path[k] - want).abs());
        }
    }
    line(
        3,
        "analytic trajectories",
        worst_rel < 1e-3 && worst_abs < 1e-3,
        format!("free max rel err {worst_rel:.2e}, coherent max err {worst_abs:.2e}"),
    )
}

fn newton() -> Line {
    let s = quartic_packet(Size::Full).unwrap();
    let psi0 = s.initial_wave().unwrap();
    let run = integrate_ensemble(&psi0, &s.potential, &s.plan, s.particles, s.seed).unwrap();
    let c = newton_closure(&run, &s.potential, 1e-3).unwrap();
    line(
        4,
        "modified Newton closure",
        c.fraction >= 0.99,
        format!(
            "{}/{} trajectories close ({:.3})",
            c.passed, c.checked, c.fraction
        ),
    )
}

fn stationary_phase() -> Line {
    let grid = Grid::new(-1024.0, 1024.0, 8192).unwrap();
    let psi0 = make_gaussian_in(grid, 0.0, 1.0, 0.0, Units::default()).unwrap();
    let pot = PotentialSpec::free((-1024.0, 1024.0));
    let errs: Vec<f64> = [50.0, 100.0, 200.0]
        .iter()
        .map(|&t| stationary_phase_oracle(&psi0, &pot, t).unwrap().1)
        .collect();
    line(
        5,
        "stationary phase",
        errs[0] < 0.05 && errs[0] > errs[1] && errs[1] > errs[2],
        format!(
            "L2 error {:.4} / {:.4} / {:.4} at t = 50/100/200",
            errs[0], errs[1], errs[2]
        ),
    )
}

fn lpw_time() -> Line {
    let s = two_packet_free(Size::Full).unwrap();
    let psi0 = s.initial_wave().unwrap();
    let times = s.plan.snapshot_times(0.0);
    let tl = lpw_formation(&psi0, &times, DEFAULT_LPW_THRESHOLD).unwrap();
    let ratio = tl.ratio.unwrap_or(f64::INFINITY);
    line(
        6,
        "local plane wave formation",
        ratio <= 10.0,
        format!(
            "t_lpw = {:?}, tau = {:.4}, ratio {ratio:.2}",
            tl.t_lpw, tl.tau
        ),
    )
}

fn caustics() -> Line {
    let t5 = caustic_time(&two_packet_well(5.0, Size::Full).unwrap()).unwrap();
    let t10 = caustic_time(&two_packet_well(10.0, Size::Full).unwrap()).unwrap();
    let rel5 = (t5.measured - t5.predicted).abs() / t5.predicted;
    let halving = t10.measured / t5.measured;
    line(
        7,
        "caustic kinematics",
        rel5 <= 0.1 && (halving - 0.5).abs() <= 0.05,
        format!(
            "p=5: {:.3} vs {:.1}; p=10: {:.3}; ratio {halving:.3}",
            t5.measured, t5.predicted, t10.measured
        ),
    )
}

fn sweep(id: usize, name: &'static str, family: SweepFamily, limit: Option<Duration>) -> Line {
    let spec = SweepSpec::standard(family, Size::Full);
    let start = Instant::now();
    let r = run_sweep(&spec).unwrap();
    let elapsed = start.elapsed();
    let k = r
        .deltas
        .iter()
        .position(|&d| (d - 0.1).abs() < 1e-12)
        .expect("delta 0.1 in the sweep");
    let failed = r.points.iter().filter(|p| p.error.is_some()).count();
    let pass = failed == 0
        && r.median_non_increasing
        && r.exceedance_non_increasing[k]
        && r.slope > 0.0
        && limit.is_none_or(|l| elapsed < l);
    let medians: Vec<String> = r
        .points
        .iter()
        .map(|p| format!("{:.3e}", p.d_median))
        .collect();
    let exceed: Vec<String> = r.p_exceed(0.1).iter().map(|p| format!("{p:.3}")).collect();
    line(
        id,
        name,
        pass,
        format!(
            "median sup|D| [{}], P(D>0.1) [{}], slope {:.2}, {:.0} s",
            medians.join(", "),
            exceed.join(", "),
            r.slope,
            secs(elapsed)
        ),
    )
}

fn environment() -> Line {
    let t_c = two_packet_well_launched_params(Size::Full).predicted_caustic_time();
    let p90 = |policy| {
        let o = run_scenario(&two_packet_well_launched(policy, Size::Full).unwrap()).unwrap();
        let d = &o.trajectory;
        (d.quantile_at(d.index_near(2.0 * t_c), 0.9), d.excluded)
    };
    let (on, on_x) = p90(EnvironmentPolicy::AtSeparation);
    let (off, off_x) = p90(EnvironmentPolicy::Off);
    line(
        9,
        "environment restores classicality",
        on < 0.02 && off > 0.1,
        format!("p90 at 2 t_c: collapse {on:.4} (excl {on_x}), off {off:.4} (excl {off_x})"),
    )
}

fn ehrenfest() -> Line {
    let (narrow, wide) = ehrenfest_pair(Size::Full).unwrap();
    let dev =
        |s: &Scenario| moment_deviation(&s.initial_wave().unwrap(), &s.potential, &s.plan).unwrap();
    let (a, b) = (dev(&narrow), dev(&wide));
    let ratio = b.max_deviation / a.max_deviation;
    line(
        11,
        "Ehrenfest contrast",
        a.condition <= 1e-3 && ratio >= 10.0,
        format!(
            "c = {:.1e} vs {:.2}; max |<X> - x_cl| {:.2e} vs {:.2e}, ratio {ratio:.1}",
            a.condition, b.condition, a.max_deviation, b.max_deviation
        ),
    )
}

/// Comma-separated criterion ids in `ACCEPTANCE_ONLY` restrict the run, for iterating.
fn wanted(id: usize) -> bool {
    match std::env::var("ACCEPTANCE_ONLY") {
        Ok(v) if !v.trim().is_empty() => v.split(',').any(|s| s.trim().parse() == Ok(id)),
        _ => true,
    }
}

#[test]
fn primary_criteria() {
    let criteria: [(usize, fn() -> Line); 11] = [
        (1, unitarity),
        (2, equivariance),
        (3, analytic_trajectories),
        (4, newton),
        (5, stationary_phase),
        (6, lpw_time),
        (7, caustics),
        (8, || {
            sweep(
                8,
                "quartic sweep",
                SweepFamily::Quartic,
                Some(Duration::from_secs(1200)),
            )
        }),
        (9, environment),
        (10, || {
            sweep(10, "harmonic sweep with L_o", SweepFamily::HarmonicLo, None)
        }),
        (11, ehrenfest),
    ];
    let lines: Vec<Line> = criteria
        .iter()
        .filter(|(id, _)| wanted(*id))
        .map(|(_, f)| f())
        .collect();
    let failed: Vec<String> = lines
        .iter()
        .filter(|l| !l.pass)
        .map(|l| format!("{} ({})", l.id, l.name))
        .collect();
    report(format_args!(
        "{} of {} criteria pass",
        lines.len() - failed.len(),
        lines.len()
    ));
    assert!(failed.is_empty(), "failing criteria: {}", failed.join(", "));
}
