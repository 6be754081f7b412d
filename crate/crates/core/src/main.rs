use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spider::report::{self, Command, EulerMethod, Options, PotentialKind, RunError};
use spider::Point;

#[derive(Parser)]
#[command(name = "spider", version, about = "Critical-point analysis of planar spider linkages")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the document and report strong genericity.
    Validate(Common),
    /// Stratified work space; --svg draws it.
    Workspace(Common),
    /// Critical components of a potential.
    Critical(Common),
    /// Morse–Bott polynomial of a potential.
    MorsePoly(Common),
    /// Euler characteristic of the spider space.
    Euler(Common),
    /// Numerical cross-checks.
    Oracle {
        #[command(subcommand)]
        action: OracleCmd,
    },
    /// Critical points of the distance to the nearest foot, in the plane.
    VoronoiPlane(Common),
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Compare predicted components against a multistart KKT search.
    Verify(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Potential {
    Sqdist,
    Hooke,
    Voronoi,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Strata,
    Morse,
    Both,
}

#[derive(Args)]
struct Common {
    /// Mechanism document (JSON); `-` reads stdin.
    input: PathBuf,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    z: Option<Point>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    weights: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "sqdist")]
    potential: Potential,
    #[arg(long, value_enum, default_value = "both")]
    method: Method,
    /// Displace the Voronoi sites to remove non-isolated critical sets.
    #[arg(long)]
    morsify: bool,
    /// Offset bound for --morsify.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Refuse non-generic input (exit status 2).
    #[arg(long)]
    certified: bool,
    /// Accepted for symmetry with --svg; JSON is always written.
    #[arg(long)]
    json: bool,
}

fn parse_point(s: &str) -> Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let f = |t: &str| t.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok(Point::new(f(x)?, f(y)?))
}

fn execute(command: Command, c: Common) -> Result<(), RunError> {
    let opts = Options {
        potential: match c.potential {
            Potential::Sqdist => PotentialKind::Sqdist,
            Potential::Hooke => PotentialKind::Hooke,
            Potential::Voronoi => PotentialKind::Voronoi,
        },
        z: c.z,
        weights: c.weights,
        method: match c.method {
            Method::Strata => EulerMethod::Strata,
            Method::Morse => EulerMethod::Morse,
            Method::Both => EulerMethod::Both,
        },
        morsify: c.morsify,
        eps: c.eps,
        seed: c.seed,
        starts: c.starts,
        certified: c.certified,
    };
    let text = if c.input.as_os_str() == "-" { std::io::read_to_string(std::io::stdin()) } else { std::fs::read_to_string(&c.input) }
        .map_err(|e| RunError::Input(format!("{}: {e}", c.input.display())))?;
    let (doc, mech) = report::load(&text, &opts)?;
    let (rep, svg) = report::run(command, &doc, &mech, &opts)?;
    let json = rep.to_json() + "\n";
    match &c.out {
        Some(p) => std::fs::write(p, json).map_err(|e| RunError::Input(format!("{}: {e}", p.display())))?,
        None => print!("{json}"),
    }
    if let Some(p) = &c.svg {
        if svg.is_empty() {
            return Err(RunError::Input(format!("`{}` draws nothing", command.name())));
        }
        std::fs::write(p, svg).map_err(|e| RunError::Input(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Validate(c) => (Command::Validate, c),
        Cmd::Workspace(c) => (Command::Workspace, c),
        Cmd::Critical(c) => (Command::Critical, c),
        Cmd::MorsePoly(c) => (Command::MorsePoly, c),
        Cmd::Euler(c) => (Command::Euler, c),
        Cmd::Oracle { action: OracleCmd::Verify(c) } => (Command::OracleVerify, c),
        Cmd::VoronoiPlane(c) => (Command::VoronoiPlane, c),
    };
    match execute(command, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spider: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
