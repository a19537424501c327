//! Quantum potential and force of a packet in a quartic well, and the modified Newton
//! equation m X'' = F + F_Q checked along the trajectories.

use bohm_limit::bohm::integrate_ensemble;
use bohm_limit::experiments::{newton_closure, quartic_packet, Size};
use bohm_limit::quantum::QuantumField;

fn main() -> bohm_limit::Result<()> {
    let s = quartic_packet(Size::Full)?;
    let psi0 = s.initial_wave()?;
    let q = QuantumField::new(&psi0, 1e-6)?;
    for x in [-6.0, -5.0, -4.0, -3.0, -2.0] {
        println!(
            "x = {x:5.1}  F = {:8.4}  F_Q = {:8.4}",
            s.potential.force(x),
            q.force(x)?
        );
    }
    let run = integrate_ensemble(&psi0, &s.potential, &s.plan, 200, s.seed)?;
    let c = newton_closure(&run, &s.potential, 1e-3)?;
    println!(
        "closure: {}/{} trajectories within tolerance, median worst excess {:.2}",
        c.passed, c.checked, c.median_excess
    );
    Ok(())
}
