//! Two overlapping counter-propagating packets separate into local plane waves within a
//! few tau = hbar / E_kin.

use bohm_limit::experiments::{lpw_formation, two_packet_free, Size};
use bohm_limit::localplane::DEFAULT_LPW_THRESHOLD;

fn main() -> bohm_limit::Result<()> {
    let s = two_packet_free(Size::Full)?;
    let tl = lpw_formation(
        &s.initial_wave()?,
        &s.plan.snapshot_times(0.0),
        DEFAULT_LPW_THRESHOLD,
    )?;
    for ((t, score), ok) in tl.times.iter().zip(&tl.scores).zip(&tl.is_lpw).step_by(5) {
        println!("t = {t:.2}  score {score:.3}  lpw {ok}");
    }
    println!(
        "t_lpw = {:?}, tau = {:.4}, ratio {:?}",
        tl.t_lpw, tl.tau, tl.ratio
    );
    Ok(())
}
