//! Halving epsilon = lambda / L four times in the quartic family and watching the
//! quantum-force statistic D shrink. Pass `harmonic` for the L_o variant.

use bohm_limit::experiments::{run_sweep, Size, SweepFamily, SweepSpec};

fn main() -> bohm_limit::Result<()> {
    let family = match std::env::args().nth(1).as_deref() {
        Some("harmonic") => SweepFamily::HarmonicLo,
        _ => SweepFamily::Quartic,
    };
    let r = run_sweep(&SweepSpec::standard(family, Size::Full))?;
    r.write_csv(std::io::stdout().lock())?;
    Ok(())
}
