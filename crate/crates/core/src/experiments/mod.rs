//! Scenarios, classical partners, caustic timing and epsilon sweeps.

mod caustic;
mod deviation;
mod run;
mod scenario;
mod sweep;

pub use crate::classical::{classical_integrate, ClassicalPath};
pub use caustic::{
    caustic_time, detect_caustic, predicted_caustic_time, window_contrast, CausticTiming,
    CAUSTIC_CONTRAST, WINDOW_CLEAR, WINDOW_FILL,
};
pub use deviation::{
    classical_partners, moment_deviation, newton_closure, trajectory_deviation, MomentDeviation,
    NewtonClosure, TrajectoryDeviation,
};
pub use run::{
    branch_deviation, lpw_formation, lpw_timeline, run_scenario, scales_json, summary_json,
    write_run_dir, LpwTimeline, Outcome, SNAPSHOT_FILES,
};
pub(crate) use run::{ensure_dir_target, write_json};
pub use scenario::{
    coherent_harmonic, dispersed_lpw, ehrenfest_pair, free_gaussian, lookup, plan_for,
    quartic_packet, scenario, scenario_library, substeps_for, sweep_point, two_packet_free,
    two_packet_well, two_packet_well_launched, two_packet_well_launched_params,
    two_packet_well_params, well_pair, GridSpec, Job, LibraryEntry, Packet, Scenario, Size,
    WellPair, DEFAULT_DELTAS,
};
pub use sweep::{
    epsilon_sweep, run_sweep, SweepFamily, SweepPoint, SweepResult, SweepSpec, MIN_SWEEP_PARTICLES,
};
