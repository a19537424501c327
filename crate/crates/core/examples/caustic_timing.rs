//! First caustic time in the two-packet box for p = 5 and p = 10.

use bohm_limit::experiments::{caustic_time, two_packet_well, Size};

fn main() -> bohm_limit::Result<()> {
    for p in [5.0, 10.0] {
        let s = two_packet_well(p, Size::Full)?;
        let c = caustic_time(&s)?;
        println!(
            "p = {p:>4}: predicted t_c = {:.3}, measured = {:.3} (contrast {:.2}), ratio {:.3}",
            c.predicted,
            c.measured,
            c.contrast,
            c.measured / c.predicted
        );
    }
    Ok(())
}
