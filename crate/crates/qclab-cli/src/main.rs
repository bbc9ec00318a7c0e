use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use qclab::planar::PlanarExample;
use qclab::run::{dispatch, validate_config, write_record, Command, Format, MethodChoice, RunConfig};
use qclab::{Point3, SpaceId};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qclab", version, about = "Sub-Riemannian distance, volume and modulus experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Seed for every stochastic component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_format)]
    format: Option<Format>,
    /// Output directory; QCLAB_OUTPUT_DIR takes precedence.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Do not echo the record on stdout.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Carnot–Carathéodory distance between two points.
    Distance {
        #[arg(long, value_parser = parse_space)]
        space: Option<SpaceId>,
        #[arg(long, value_parser = parse_point)]
        from: Option<[f64; 3]>,
        #[arg(long, value_parser = parse_point)]
        to: [f64; 3],
        #[arg(long, value_parser = parse_method)]
        method: Option<MethodChoice>,
        /// Graph step.
        #[arg(long)]
        h: Option<f64>,
    },
    /// Ball volumes at the given radii.
    BallVolume(VolumeArgs),
    /// Log–log growth exponent of ball volumes.
    GrowthFit(VolumeArgs),
    /// Q-modulus of the planar annulus family, with its closed form for Q = 2.
    Modulus {
        #[arg(long)]
        r_in: Option<f64>,
        #[arg(long)]
        r_out: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long = "q", short = 'Q')]
        q: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Modulus of two segments at relative separation t.
    Loewner {
        #[arg(long, value_parser = parse_space)]
        space: Option<SpaceId>,
        #[arg(long = "q", short = 'Q')]
        q: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        t: Option<Vec<f64>>,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        cells: Option<f64>,
        #[arg(long)]
        width: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// End-to-end experiment: bounded moduli in RT against the transported families in H¹.
    Obstruction(ObstructionArgs),
    /// Moduli of the continua pairs at relative separation t against the density energy.
    BoundedLoewner {
        #[arg(long, value_parser = parse_space)]
        space: Option<SpaceId>,
        #[arg(long, value_delimiter = ',')]
        t: Option<Vec<f64>>,
        #[command(flatten)]
        obstruction: ObstructionArgs,
    },
    /// Pullback and horizontality checks of the contactomorphism.
    ContactoCheck {
        #[arg(long)]
        samples: Option<usize>,
        /// Pairs for the bi-Lipschitz estimate; 0 skips it.
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        ball_radius: Option<f64>,
    },
    /// Quasi-isometry constants of the identity between Euclidean ℝ³ and RT.
    QiEstimate {
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long = "box")]
        side: Option<f64>,
    },
    /// Dilatation, shape fit and growth of the planar examples.
    Planar {
        #[arg(long, value_parser = parse_example)]
        example: PlanarExample,
        #[arg(long, value_parser = parse_pair)]
        z: Option<[f64; 2]>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Run the command described by a TOML config file.
    Run { config: PathBuf },
    /// Validate a TOML config file and print it with defaults filled in.
    CheckConfig { config: PathBuf },
}

#[derive(Args)]
struct VolumeArgs {
    #[arg(long, value_parser = parse_space)]
    space: Option<SpaceId>,
    #[arg(long, value_parser = parse_point)]
    center: Option<[f64; 3]>,
    #[arg(long, value_delimiter = ',', required = true)]
    radii: Vec<f64>,
    /// Grid steps per radius.
    #[arg(long)]
    cells: Option<f64>,
}

#[derive(Args)]
struct ObstructionArgs {
    #[arg(long, value_delimiter = ',')]
    indices: Option<Vec<f64>>,
    #[arg(long)]
    max_index: Option<f64>,
    #[arg(long)]
    h_rt: Option<f64>,
    #[arg(long)]
    h_h: Option<f64>,
}

fn parse_space(s: &str) -> Result<SpaceId, String> {
    s.parse().map_err(|e: qclab::Error| e.to_string())
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    s.parse::<Point3>().map(Point3::to_array).map_err(|e| e.to_string())
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v[..] {
        [x, y] => Ok([x, y]),
        _ => Err(format!("expected x,y, got {s}")),
    }
}

fn parse_method(s: &str) -> Result<MethodChoice, String> {
    s.parse().map_err(|e: qclab::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: qclab::Error| e.to_string())
}

fn parse_example(s: &str) -> Result<PlanarExample, String> {
    s.parse().map_err(|e: qclab::Error| e.to_string())
}

fn apply_obstruction(cfg: &mut RunConfig, a: ObstructionArgs) {
    let o = &mut cfg.obstruction;
    if let Some(v) = a.indices {
        o.indices = v;
    }
    if let Some(v) = a.max_index {
        o.max_index = v;
    }
    if let Some(v) = a.h_rt {
        o.h_rt = v;
    }
    if let Some(v) = a.h_h {
        o.h_h = v;
    }
}

fn volume_config(command: Command, a: VolumeArgs) -> RunConfig {
    let mut cfg = RunConfig::new(command);
    cfg.space = a.space;
    cfg.params.center = a.center;
    cfg.params.radii = Some(a.radii);
    cfg.params.cells = a.cells;
    cfg
}

/// Builds the run config, or `None` for commands that only inspect a file.
fn build_config(cmd: Cmd) -> Result<Option<RunConfig>> {
    let cfg = match cmd {
        Cmd::Distance { space, from, to, method, h } => {
            let mut cfg = RunConfig::new(Command::Distance);
            cfg.space = space;
            cfg.params.from = from;
            cfg.params.to = Some(to);
            cfg.params.method = method;
            cfg.params.h = h;
            cfg
        }
        Cmd::BallVolume(a) => volume_config(Command::BallVolume, a),
        Cmd::GrowthFit(a) => volume_config(Command::GrowthFit, a),
        Cmd::Modulus { r_in, r_out, h, q, tol } => {
            let mut cfg = RunConfig::new(Command::Modulus);
            cfg.params.r_in = r_in;
            cfg.params.r_out = r_out;
            cfg.params.h = h;
            cfg.params.q = q;
            cfg.params.tol = tol;
            cfg
        }
        Cmd::Loewner { space, q, t, scale, cells, width, tol } => {
            let mut cfg = RunConfig::new(Command::Loewner);
            cfg.space = space;
            cfg.params.q = q;
            cfg.params.t = t;
            cfg.params.scale = scale;
            cfg.params.cells = cells;
            cfg.params.width = width;
            cfg.params.tol = tol;
            cfg
        }
        Cmd::Obstruction(a) => {
            let mut cfg = RunConfig::new(Command::Obstruction);
            apply_obstruction(&mut cfg, a);
            cfg
        }
        Cmd::BoundedLoewner { space, t, obstruction } => {
            let mut cfg = RunConfig::new(Command::BoundedLoewner);
            cfg.space = space;
            cfg.params.t = t;
            apply_obstruction(&mut cfg, obstruction);
            cfg
        }
        Cmd::ContactoCheck { samples, pairs, ball_radius } => {
            let mut cfg = RunConfig::new(Command::ContactoCheck);
            cfg.params.samples = samples;
            cfg.params.pairs = pairs;
            cfg.params.ball_radius = ball_radius;
            cfg
        }
        Cmd::QiEstimate { pairs, side } => {
            let mut cfg = RunConfig::new(Command::QiEstimate);
            cfg.params.pairs = pairs;
            cfg.params.side = side;
            cfg
        }
        Cmd::Planar { example, z, lambda, radii, samples } => {
            let mut cfg = RunConfig::new(Command::Planar);
            cfg.params.example = Some(example);
            cfg.params.z = z;
            cfg.params.lambda = lambda;
            cfg.params.radii = radii;
            cfg.params.samples = samples;
            cfg
        }
        Cmd::Run { config } => validate_config(&config).with_context(|| format!("config {}", config.display()))?,
        Cmd::CheckConfig { config } => {
            let cfg = validate_config(&config).with_context(|| format!("config {}", config.display()))?;
            println!("{}", toml::to_string(&cfg)?);
            return Ok(None);
        }
    };
    Ok(Some(cfg))
}

fn run(cli: Cli) -> Result<()> {
    let Some(mut cfg) = build_config(cli.command)? else {
        return Ok(());
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(f) = cli.common.format {
        cfg.format = f;
    }
    if let Some(d) = cli.common.output_dir {
        cfg.output_dir = Some(d);
    }
    let record = dispatch(&cfg)?;
    let dir = cfg.resolved_output_dir();
    let paths = write_record(&record, &dir).with_context(|| format!("writing to {}", dir.display()))?;
    if !cli.common.quiet {
        println!("{}", serde_json::to_string_pretty(&record.result)?);
    }
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

/// 1 usage, 2 numerical non-convergence, 3 resource cap.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<qclab::Error>() {
        Some(qclab::Error::NonConvergence(_)) => 2,
        Some(qclab::Error::ResourceCap { .. }) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
