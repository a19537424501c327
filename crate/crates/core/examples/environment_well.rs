//! Packets launched apart in a box: trajectory deviation from Newtonian partners at
//! twice the first caustic time, with and without collapse at separation.

use bohm_limit::environment::EnvironmentPolicy;
use bohm_limit::experiments::{
    run_scenario, two_packet_well_launched, two_packet_well_launched_params, Size,
};

fn main() -> bohm_limit::Result<()> {
    let w = two_packet_well_launched_params(Size::Full);
    let t_c = w.predicted_caustic_time();
    for policy in [EnvironmentPolicy::AtSeparation, EnvironmentPolicy::Off] {
        let s = two_packet_well_launched(policy, Size::Full)?;
        let o = run_scenario(&s)?;
        let dev = &o.trajectory;
        let mut line = format!(
            "{policy:?}: events {}, excluded {}",
            o.run.events.len(),
            dev.excluded
        );
        for f in [0.5, 1.0, 1.5, 2.0] {
            let k = dev.index_near(f * t_c);
            line += &format!(", p90 at {f} t_c = {:.4}", dev.quantile_at(k, 0.9));
        }
        println!("{line} (normalised by W = {:.0})", dev.length);
    }
    Ok(())
}
