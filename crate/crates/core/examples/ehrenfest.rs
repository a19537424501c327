//! Ehrenfest condition: <X> follows the Newtonian path when Delta sup|V'''| / sup|V'| is
//! small and leaves it when the packet is as wide as the potential scale.

use bohm_limit::experiments::{ehrenfest_pair, moment_deviation, Size};

fn main() -> bohm_limit::Result<()> {
    let (narrow, wide) = ehrenfest_pair(Size::Full)?;
    for s in [&narrow, &wide] {
        let m = moment_deviation(&s.initial_wave()?, &s.potential, &s.plan)?;
        println!(
            "{:<18} c = {:.2e}  max |<X> - x_cl| = {:.3e}",
            s.name, m.condition, m.max_deviation
        );
    }
    Ok(())
}
