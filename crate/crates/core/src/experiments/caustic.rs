//! First-caustic timing in the two-packet box.

use serde::Serialize;

use crate::field::WaveField;
use crate::potential::PotentialKind;
use crate::propagator::evolve;
use crate::quantum::lambda_of_psi;
use crate::{Error, Result};

use super::scenario::Scenario;

/// Fringe contrast above which the central window counts as interfering.
pub const CAUSTIC_CONTRAST: f64 = 0.5;
/// The window counts as empty once its peak falls below this fraction of the global peak.
pub const WINDOW_CLEAR: f64 = 1e-2;
/// Fringes only count once the window peak reaches this fraction of the global peak.
pub const WINDOW_FILL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CausticTiming {
    pub predicted: f64,
    pub measured: f64,
    /// Contrast at the measured onset.
    pub contrast: f64,
}

fn well_width(s: &Scenario) -> Result<f64> {
    match s.potential.kind {
        PotentialKind::InfiniteWell { width, .. } if s.packets.len() == 2 => Ok(width),
        _ => Err(Error::InvalidArgument(format!(
            "`{}` is not a two-packet infinite-well scenario",
            s.name
        ))),
    }
}

/// Mean over packets of the free-flight time to the middle of the box, reflecting once
/// off the wall the packet moves towards.
pub fn predicted_caustic_time(s: &Scenario) -> Result<f64> {
    let w = well_width(s)?;
    let mut total = 0.0;
    for p in &s.packets {
        let v = s.units.hbar * p.k0.abs() / s.units.mass;
        if v == 0.0 {
            return Err(Error::InvalidArgument(
                "packets at rest never reach the walls".into(),
            ));
        }
        let outward = p.center * p.k0 >= 0.0;
        let path = if outward {
            w - p.center.abs()
        } else {
            p.center.abs()
        };
        total += path / v;
    }
    Ok(total / s.packets.len() as f64)
}

/// Fringe contrast `(max - min) / (max + min)` of `|psi|^2` over one fringe period
/// `lambda / 2` around the density peak inside `[-half, half]`, and the window peak
/// relative to the global peak.
pub fn window_contrast(psi: &WaveField, half: f64) -> (f64, f64) {
    let rho = psi.density();
    let grid = psi.grid();
    let global = rho.iter().cloned().fold(0.0, f64::max);
    let mut peak: Option<usize> = None;
    for (j, &r) in rho.iter().enumerate() {
        if grid.x(j).abs() <= half && peak.is_none_or(|p| r > rho[p]) {
            peak = Some(j);
        }
    }
    let Some(p) = peak else {
        return (0.0, 0.0);
    };
    let period = lambda_of_psi(psi).map(|l| l / 2.0).unwrap_or(0.0);
    let reach = (period / grid.dx()).ceil() as usize;
    let lo = p.saturating_sub(reach);
    let hi = (p + reach).min(rho.len() - 1);
    let (mn, mx) = rho[lo..=hi]
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let contrast = if mx + mn > 0.0 {
        (mx - mn) / (mx + mn)
    } else {
        0.0
    };
    (contrast, rho[p] / global)
}

/// First time, after the central window `|x| <= width / 8` has emptied, at which the
/// density peak inside it is significant ([`WINDOW_FILL`]) and shows fringes of contrast
/// above [`CAUSTIC_CONTRAST`].
pub fn detect_caustic(snapshots: &[WaveField], width: f64) -> Result<(f64, f64)> {
    let half = width / 8.0;
    let mut cleared = false;
    for s in snapshots {
        let (contrast, fill) = window_contrast(s, half);
        if !cleared {
            cleared = fill < WINDOW_CLEAR;
            continue;
        }
        if fill >= WINDOW_FILL && contrast > CAUSTIC_CONTRAST {
            return Ok((s.time() - snapshots[0].time(), contrast));
        }
    }
    Err(Error::NoCausticDetected)
}

/// Predicted and measured first caustic time of a two-packet box scenario (wave only).
pub fn caustic_time(s: &Scenario) -> Result<CausticTiming> {
    let width = well_width(s)?;
    let predicted = predicted_caustic_time(s)?;
    let psi0 = s.initial_wave()?;
    let snaps = evolve(&psi0, &s.potential, &s.plan)?;
    let (measured, contrast) = detect_caustic(&snaps, width)?;
    Ok(CausticTiming {
        predicted,
        measured,
        contrast,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::scenario::{two_packet_well, Size};

    #[test]
    fn prediction_matches_kinematics() {
        let s = two_packet_well(5.0, Size::Full).unwrap();
        assert!((predicted_caustic_time(&s).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn short_window_detects_nothing() {
        let mut s = two_packet_well(5.0, Size::Smoke).unwrap();
        s.plan.n_steps = 20;
        assert!(matches!(caustic_time(&s), Err(Error::NoCausticDetected)));
    }

    #[test]
    fn rejects_other_scenarios() {
        let s = crate::experiments::scenario::free_gaussian(Size::Smoke).unwrap();
        assert!(caustic_time(&s).is_err());
    }
}
