//! Long-time free evolution of a Gaussian against its stationary-phase form
//! `(m / i hbar t)^{1/2} e^{i m x^2 / 2 hbar t} psi_hat(m x / hbar t)`.

use bohm_limit::field::make_gaussian_in;
use bohm_limit::localplane::stationary_phase_oracle;
use bohm_limit::{Grid, PotentialSpec, Units};

fn main() -> bohm_limit::Result<()> {
    let grid = Grid::new(-1024.0, 1024.0, 8192)?;
    let psi0 = make_gaussian_in(grid, 0.0, 1.0, 0.0, Units::default())?;
    let pot = PotentialSpec::free((-1024.0, 1024.0));
    for t in [10.0, 50.0, 100.0, 200.0] {
        let (_, err) = stationary_phase_oracle(&psi0, &pot, t)?;
        println!("t = {t:5.0}  relative L2 error on the core {err:.4}");
    }
    Ok(())
}
