mod commands;
mod options;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use options::{Common, GaitArgs, PanelArgs, ServeArgs, ShapeArgs, TrajectoryArgs};

/// Gait design for planar no-slip legged systems.
#[derive(Parser, Debug)]
#[command(name = "strata", version, about, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Inter-foot distance field, its gradient and the nonslip direction on a grid.
    FieldDump {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        shape: ShapeArgs,
    },
    /// Stratified panels per stance pair, optionally the two-beat panel.
    Panel {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        shape: ShapeArgs,
        #[command(flatten)]
        panel: PanelArgs,
        #[command(flatten)]
        gait: GaitArgs,
    },
    /// Body trajectory of a subgait or a scheduled two-beat gait.
    Trajectory {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        gait: GaitArgs,
        #[command(flatten)]
        traj: TrajectoryArgs,
    },
    /// Per-cycle displacement over the scaling or sliding input plane.
    DisplacementField {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        gait: GaitArgs,
        /// Input plane to sweep.
        #[arg(long, value_enum, default_value = "scaling")]
        plane: options::Plane,
        #[arg(long, default_value_t = 64)]
        samples: usize,
    },
    /// Live steering session over WebSocket.
    Serve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        gait: GaitArgs,
        #[command(flatten)]
        serve: ServeArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("STRATA_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::FieldDump { common, shape } => commands::field_dump(&common, &shape),
        Command::Panel {
            common,
            shape,
            panel,
            gait,
        } => commands::panel(&common, &shape, &panel, &gait),
        Command::Trajectory { common, gait, traj } => commands::trajectory(&common, &gait, &traj),
        Command::DisplacementField {
            common,
            gait,
            plane,
            samples,
        } => commands::displacement_field(&common, &gait, plane, samples),
        Command::Serve { common, gait, serve } => commands::serve(&common, &gait, &serve),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("strata: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
