mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use meshmotion::{ConverterConfig, Stage};

#[derive(Parser)]
#[command(name = "meshmotion", version, about = "Skeleton-free motion transfer between arbitrary meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transfer a sequence of posed source meshes onto a target.
    Retarget(RetargetArgs),
    /// Repaint vertices with a part label and write the converted weights.
    Convert(ConvertArgs),
    /// Write the bundled demo characters, clip and capture bundle.
    Fixture(FixtureArgs),
    /// Project workflow against a local store, mirroring the HTTP API.
    Project(ProjectArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct RetargetArgs {
    /// Source character in rest pose.
    #[arg(long)]
    source_rest: PathBuf,
    /// Directory of posed source OBJs, one per frame, in file-name order.
    #[arg(long)]
    source_clip: PathBuf,
    #[arg(long)]
    source_weights: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    target_weights: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Copy)]
struct ConverterArgs {
    #[arg(long, default_value_t = ConverterConfig::default().idw_power)]
    idw_power: f64,
    /// Minimum KDE bandwidth as a fraction of the mesh bounding-box diagonal.
    #[arg(long, default_value_t = ConverterConfig::default().bandwidth_floor)]
    bandwidth_floor: f64,
}

impl From<ConverterArgs> for ConverterConfig {
    fn from(a: ConverterArgs) -> Self {
        ConverterConfig {
            idw_power: a.idw_power,
            bandwidth_floor: a.bandwidth_floor,
        }
    }
}

/// An edit given inline or as a `{"vertices", "label"}` file.
#[derive(Args)]
#[group(required = true, multiple = true)]
struct EditArgs {
    #[arg(long, value_delimiter = ',', requires = "label", conflicts_with = "command")]
    vertices: Vec<usize>,
    #[arg(long, requires = "vertices", conflicts_with = "command")]
    label: Option<usize>,
    /// Edit-command JSON file.
    #[arg(long)]
    command: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[command(flatten)]
    edit: EditArgs,
    #[command(flatten)]
    converter: ConverterArgs,
    /// Output weights file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 48)]
    frames: usize,
}

#[derive(Args, Clone)]
struct MoCapArgs {
    /// Directory of `<video stem>.bvh-bundle` captures for the local mock.
    #[arg(long)]
    mocap_fixtures: Option<PathBuf>,
    /// Base URL of a capture service; the bearer token is read from
    /// MOCAP_API_TOKEN.
    #[arg(long, conflicts_with = "mocap_fixtures")]
    mocap_endpoint: Option<String>,
}

#[derive(Args)]
struct ProjectArgs {
    /// Project store directory.
    #[arg(long, env = "MESHMOTION_STORE", default_value = "projects")]
    store: PathBuf,
    #[command(subcommand)]
    command: ProjectCommand,
}

#[derive(Clone, Copy, ValueEnum)]
enum FrameFormat {
    Obj,
    Json,
}

#[derive(Subcommand)]
enum ProjectCommand {
    /// Validate uploads and create a project.
    Create {
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        source_mesh: Option<PathBuf>,
        /// Joint-space weights of the human.
        #[arg(long)]
        source_weights: Option<PathBuf>,
        /// Part-space weights of the human; the joint weights are used when absent.
        #[arg(long)]
        source_part_weights: Option<PathBuf>,
        #[arg(long)]
        clip: Option<PathBuf>,
        /// Video reference for a later capture.
        #[arg(long, requires = "video_duration")]
        video: Option<String>,
        #[arg(long, requires = "video")]
        video_duration: Option<f64>,
        #[arg(long)]
        target_mesh: PathBuf,
        #[arg(long)]
        target_weights: PathBuf,
    },
    /// List project ids.
    List,
    /// Print the project summary.
    Show {
        id: String,
    },
    /// Move the workflow stage.
    Stage {
        id: String,
        #[arg(value_parser = parse_stage)]
        stage: Stage,
    },
    /// Capture the clip from the project video.
    Mocap {
        id: String,
        /// Defaults to the video given at creation.
        #[arg(long, requires = "duration")]
        video: Option<String>,
        #[arg(long, requires = "video")]
        duration: Option<f64>,
        #[command(flatten)]
        mocap: MoCapArgs,
    },
    /// Apply a 6-DoF joint edit to one frame.
    PoseEdit {
        id: String,
        #[arg(long)]
        frame: usize,
        /// Joint index or name.
        #[arg(long)]
        joint: String,
        /// Rotation delta as a quaternion w,x,y,z.
        #[arg(long, value_parser = parse_floats::<4>, allow_hyphen_values = true)]
        rot: Option<[f64; 4]>,
        /// Translation delta x,y,z in the parent joint frame.
        #[arg(long, value_parser = parse_floats::<3>, allow_hyphen_values = true)]
        trans: Option<[f64; 3]>,
    },
    /// Repaint target vertices with a part label.
    WeightEdit {
        id: String,
        #[command(flatten)]
        edit: EditArgs,
        #[command(flatten)]
        converter: ConverterArgs,
    },
    /// Transfer the clip onto the target.
    Motrans {
        id: String,
    },
    /// Print one transferred frame.
    Frame {
        id: String,
        n: usize,
        #[arg(long, value_enum, default_value = "obj")]
        format: FrameFormat,
    },
    /// Print the label palette and per-vertex labels.
    Labels {
        id: String,
    },
    /// Print the source and target vertices carrying a label.
    Correspondence {
        id: String,
        label: usize,
    },
    /// Write the frame sequence, manifest and diagnostics.
    Export {
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_floats<const N: usize>(text: &str) -> Result<[f64; N], String> {
    let values = text
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("{v:?} is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    values.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_stage(text: &str) -> Result<Stage, String> {
    serde_json::from_value(serde_json::Value::String(text.to_string()))
        .map_err(|_| format!("unknown stage {text:?}; expected upload, mocap, motrans or results"))
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "MESHMOTION_STORE", default_value = "projects")]
    store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// Bearer token required on every project route.
    #[arg(long, env = "MESHMOTION_API_TOKEN", hide_env_values = true)]
    token: Option<String>,
    #[command(flatten)]
    mocap: MoCapArgs,
    #[command(flatten)]
    converter: ConverterArgs,
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Retarget(a) => commands::retarget(a),
        Command::Convert(a) => commands::convert(a),
        Command::Fixture(a) => commands::fixture(a),
        Command::Project(a) => commands::project(a),
        Command::Serve(a) => commands::serve(a),
    }
}
