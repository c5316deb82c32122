use std::path::PathBuf;

use clap::{Args, ValueEnum};
use strata_core::gait::{InputPlane, Pairing};
use strata_core::shapefield::DEFAULT_FLOW_STEP;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Plane {
    Scaling,
    Sliding,
}

impl From<Plane> for InputPlane {
    fn from(p: Plane) -> Self {
        match p {
            Plane::Scaling => InputPlane::Scaling,
            Plane::Sliding => InputPlane::Sliding,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PairingArg {
    Trot,
    Bound,
    Pace,
}

impl PairingArg {
    /// One-based stance pairs of the bundled quadruped numbering.
    pub fn pairs(self) -> ([usize; 2], [usize; 2]) {
        match self {
            Self::Trot => ([1, 3], [2, 4]),
            Self::Bound => ([1, 2], [3, 4]),
            Self::Pace => ([1, 4], [2, 3]),
        }
    }
}

impl From<PairingArg> for Pairing {
    fn from(p: PairingArg) -> Self {
        match p {
            PairingArg::Trot => Pairing::Trot,
            PairingArg::Bound => Pairing::Bound,
            PairingArg::Pace => Pairing::Pace,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Model file; `fourbar.json` and `quad.json` fall back to the bundled models.
    #[arg(long, default_value = "quad.json")]
    pub model: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Grid nodes per axis.
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Seed for randomized sampling. No current command draws random numbers.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Arc-length step of the shape flows.
    #[arg(long, default_value_t = DEFAULT_FLOW_STEP)]
    pub step: f64,
}

pub const MIN_GRID: usize = 32;

#[derive(Args, Debug, Clone)]
pub struct ShapeArgs {
    /// One-based leg pair, e.g. `1,3`. Repeat for several pairs.
    #[arg(long = "pair", value_parser = parse_pair)]
    pub pairs: Vec<[usize; 2]>,
    /// Angle interval `lo,hi` applied to both axes; the swing limits by default.
    #[arg(long, value_parser = parse_f64_pair, allow_hyphen_values = true)]
    pub bounds: Option<[f64; 2]>,
}

#[derive(Args, Debug, Clone)]
pub struct PanelArgs {
    /// Also write the two-beat panel of the gait.
    #[arg(long)]
    pub two_beat: bool,
    /// Phase samples of the two-beat panel over `[0, π]`.
    #[arg(long, default_value_t = 201)]
    pub phases: usize,
}

#[derive(Args, Debug, Clone)]
pub struct GaitArgs {
    /// Gait file (two-beat gait or a single subgait).
    #[arg(long)]
    pub gait: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "gait")]
    pub pairing: Option<PairingArg>,
    #[arg(long, value_parser = parse_pair, conflicts_with = "gait")]
    pub first_pair: Option<[usize; 2]>,
    #[arg(long, value_parser = parse_pair, conflicts_with = "gait")]
    pub second_pair: Option<[usize; 2]>,
    /// Reference shape of both subgaits.
    #[arg(long, value_parser = parse_f64_pair, allow_hyphen_values = true, conflicts_with = "gait")]
    pub alpha_star: Option<[f64; 2]>,
    #[arg(long, allow_hyphen_values = true, conflicts_with = "gait")]
    pub t0: Option<f64>,
    #[arg(long, allow_hyphen_values = true, conflicts_with = "gait")]
    pub t_pi: Option<f64>,
    /// Inputs `u1,u2` of the first subgait.
    #[arg(long, value_parser = parse_f64_pair, allow_hyphen_values = true)]
    pub u13: Option<[f64; 2]>,
    /// Inputs `u1,u2` of the second subgait.
    #[arg(long, value_parser = parse_f64_pair, allow_hyphen_values = true)]
    pub u24: Option<[f64; 2]>,
    /// Repeat the gait's inputs for this many cycles.
    #[arg(long, conflicts_with = "schedule")]
    pub cycles: Option<usize>,
    /// JSON list of per-cycle inputs `{"first":[u1,u2],"second":[u1,u2]}`.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct TrajectoryArgs {
    /// Run only the first subgait (stance then swing) instead of the two-beat gait.
    #[arg(long)]
    pub subgait: bool,
    /// Recorded samples per half cycle.
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    /// Upper bound on the integration step in phase.
    #[arg(long, default_value_t = std::f64::consts::PI / 2000.0)]
    pub phase_step: f64,
    /// Initial pose `x,y,theta`.
    #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
    pub start: Option<[f64; 3]>,
}

#[derive(Args, Debug, Clone)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Initial phase rate in radians per second.
    #[arg(long, default_value_t = std::f64::consts::PI)]
    pub rate: f64,
    /// Simulation tick in milliseconds.
    #[arg(long, default_value_t = 20)]
    pub tick_ms: u64,
    /// Broadcast every this many ticks.
    #[arg(long, default_value_t = 3)]
    pub decimation: u32,
}

fn parse_list<T: std::str::FromStr, const N: usize>(s: &str) -> Result<[T; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated values, got `{s}`"));
    }
    let mut values = Vec::with_capacity(N);
    for p in parts {
        values.push(p.parse::<T>().map_err(|_| format!("cannot parse `{p}`"))?);
    }
    values.try_into().map_err(|_| unreachable!())
}

fn parse_pair(s: &str) -> Result<[usize; 2], String> {
    parse_list(s)
}

fn parse_f64_pair(s: &str) -> Result<[f64; 2], String> {
    let v: [f64; 2] = parse_list(s)?;
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(format!("values must be finite, got `{s}`"))
    }
}

fn parse_pose(s: &str) -> Result<[f64; 3], String> {
    parse_list(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists() {
        assert_eq!(parse_pair("1,3").unwrap(), [1, 3]);
        assert_eq!(parse_f64_pair("-0.5, 0.25").unwrap(), [-0.5, 0.25]);
        assert!(parse_pair("1").is_err());
        assert!(parse_f64_pair("1,nan").is_err());
        assert!(parse_pose("1,2").is_err());
    }

    #[test]
    fn pairings() {
        assert_eq!(PairingArg::Trot.pairs(), ([1, 3], [2, 4]));
        assert_eq!(Pairing::from(PairingArg::Pace), Pairing::Pace);
    }
}
