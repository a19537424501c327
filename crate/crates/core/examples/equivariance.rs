//! Equilibrium ensemble in a spreading free Gaussian: KS distance to |psi_t|^2 at each
//! snapshot against the 1% critical value.

use bohm_limit::bohm::{integrate_ensemble, ks_curve};
use bohm_limit::experiments::{free_gaussian, Size};
use bohm_limit::stats::ks_critical_1pct;

fn main() -> bohm_limit::Result<()> {
    let s = free_gaussian(Size::Full)?;
    let run = integrate_ensemble(
        &s.initial_wave()?,
        &s.potential,
        &s.plan,
        s.particles,
        s.seed,
    )?;
    let crit = ks_critical_1pct(s.particles);
    for (t, ks) in run.ensemble.times.iter().zip(ks_curve(&run)).step_by(10) {
        println!("t = {t:5.2}  KS = {ks:.4}  (critical {crit:.4})");
    }
    Ok(())
}
