use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("packet width {sigma} is not resolved by grid spacing {dx} (need sigma > 2 dx)")]
    SigmaUnderresolved { sigma: f64, dx: f64 },
    #[error("packet support [{lo}, {hi}] is clipped by the grid edges")]
    EdgeOverlap { lo: f64, hi: f64 },
    #[error("every grid point lies below the node threshold")]
    AllNodes,
    #[error("array length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("time step {dt} too large: phase per step {phase:.3} exceeds 0.5")]
    StepTooLarge { dt: f64, phase: f64 },
    #[error("position {x} lies outside the grid domain [{lo}, {hi})")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("position {x} lies in a node-masked segment")]
    NearNode { x: f64 },
    #[error("kinetic energy is zero; de Broglie wavelength undefined")]
    ZeroKineticEnergy,
    #[error("potential is quadratic (L = inf) and no user length scale L_o was given")]
    MissingLo,
    #[error("{flagged} of {total} trajectories are flagged; at most 10% allowed")]
    TooManyFlagged { flagged: usize, total: usize },
    #[error("wave function is not a local plane wave on its probability core")]
    NotLocalPlaneWave,
    #[error("stationary-phase oracle requires the free potential")]
    NonFreePotential,
    #[error("particle at {x} lies in a gap between components; collapse deferred")]
    ParticleInGap { x: f64 },
    #[error("collapse needs at least two separated components, found {0}")]
    SingleComponent(usize),
    #[error("no caustic detected within the simulated window")]
    NoCausticDetected,
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("epsilon sweep needs at least 4 strictly decreasing points: {0}")]
    InvalidSweep(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
