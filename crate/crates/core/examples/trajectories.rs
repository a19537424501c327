//! Bohmian trajectories against closed forms: a spreading free Gaussian scales every
//! position by sigma(t)/sigma0, a coherent state translates rigidly.

use bohm_limit::bohm::integrate_ensemble;
use bohm_limit::experiments::{coherent_harmonic, free_gaussian, Size};

fn main() -> bohm_limit::Result<()> {
    let s = free_gaussian(Size::Full)?;
    let run = integrate_ensemble(&s.initial_wave()?, &s.potential, &s.plan, 5, s.seed)?;
    let sigma0 = s.packets[0].sigma;
    let t_end = *run.ensemble.times.last().unwrap();
    let stretch = (1.0 + (t_end / (2.0 * sigma0 * sigma0)).powi(2)).sqrt();
    println!("free Gaussian, t = {t_end}: X(t) vs X(0) sigma(t)/sigma0");
    for path in &run.ensemble.positions {
        println!(
            "  {:>9.5} -> {:>9.5}  (closed form {:>9.5})",
            path[0],
            path.last().unwrap(),
            path[0] * stretch
        );
    }

    let c = coherent_harmonic(Size::Full)?;
    let run = integrate_ensemble(&c.initial_wave()?, &c.potential, &c.plan, 5, c.seed)?;
    let x0 = c.packets[0].center;
    let k = run.ensemble.times.len() / 2;
    let t = run.ensemble.times[k];
    println!("coherent state, t = {t:.3}: X(t) vs x0 cos t + X(0) - x0");
    for path in &run.ensemble.positions {
        println!(
            "  {:>9.5} -> {:>9.5}  (closed form {:>9.5})",
            path[0],
            path[k],
            x0 * t.cos() + path[0] - x0
        );
    }
    Ok(())
}
