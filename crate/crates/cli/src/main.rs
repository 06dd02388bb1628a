use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gup_lab::bounds::{MeasurementOrder, RelationId, RelationReport};
use gup_lab::config::RunConfig;
use gup_lab::grid::Grid;
use gup_lab::report::{self, SweepAxis};
use gup_lab::suite::{self, CellIndex, Filter, Summary};
use gup_lab::transforms::{q_to_k_density_capturing, Density};

/// Certifies entropic uncertainty relations for successive position and
/// momentum measurements under a minimal-length deformation.
#[derive(Debug, Parser)]
#[command(name = "gup-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the suite and write reports.json and reports.csv.
    Check(Common),
    /// Run the suite and write a plot-ready table keyed by one config axis.
    Sweep {
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[command(flatten)]
        common: Common,
    },
    /// Write densities, states or outcome ensembles as numeric columns.
    Dump {
        #[arg(long, value_enum)]
        what: DumpTarget,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; the bundled desk suite when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated relation ids to run.
    #[arg(long, value_delimiter = ',')]
    relations: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "all")]
    order: OrderArg,
    /// Output directory (overrides the config).
    #[arg(long, env = "GUPLAB_OUT")]
    out: Option<PathBuf>,
    /// Certification tolerance (overrides the config).
    #[arg(long)]
    tol: Option<f64>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum OrderArg {
    MomentumFirst,
    PositionFirst,
    Preparation,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum AxisArg {
    Beta,
    ProfileWidth,
    BinWidth,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DumpTarget {
    Densities,
    States,
    Ensembles,
}

enum Failure {
    Config(String),
    Io(String),
}

impl From<gup_lab::Error> for Failure {
    fn from(e: gup_lab::Error) -> Self {
        match e {
            gup_lab::Error::Io(m) => Failure::Io(m),
            other => Failure::Config(other.to_string()),
        }
    }
}

struct Run {
    cfg: RunConfig,
    filter: Filter,
    out: PathBuf,
}

fn load(common: &Common) -> Result<Run, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::bundled(),
    };
    if let Some(t) = common.tol {
        cfg.tolerance = t;
        cfg.validate()?;
    }
    let relations = match &common.relations {
        Some(ids) => Some(
            ids.iter()
                .map(|s| s.parse::<RelationId>())
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    let orders = match common.order {
        OrderArg::All => None,
        OrderArg::MomentumFirst => Some(vec![MeasurementOrder::MomentumFirst]),
        OrderArg::PositionFirst => Some(vec![MeasurementOrder::PositionFirst]),
        OrderArg::Preparation => Some(vec![MeasurementOrder::Preparation]),
    };
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("gup-lab-out"));
    Ok(Run {
        cfg,
        filter: Filter { relations, orders },
        out,
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn print_summary(reports: &[RelationReport]) -> Summary {
    let s = Summary::of(reports);
    println!(
        "relations checked: {}  passed: {}  violated: {}  errors: {}  min margin: {}",
        s.checked,
        s.passed,
        s.violated,
        s.errors,
        report::number(s.min_margin)
    );
    for r in reports.iter().filter(|r| !r.pass) {
        println!(
            "FAIL {} {} beta={} family={} f={} g={} status={} margin={}{}",
            r.id,
            r.order,
            r.beta,
            r.cell.family,
            r.cell.f_width,
            r.cell.g_width,
            r.status,
            report::number(r.margin),
            r.message.as_ref().map(|m| format!(" ({m})")).unwrap_or_default()
        );
    }
    s
}

fn verdict(s: Summary) -> u8 {
    if s.hard_failures() == 0 {
        0
    } else {
        1
    }
}

fn cmd_check(common: &Common) -> Result<u8, Failure> {
    let run = load(common)?;
    let reports = suite::run_suite(&run.cfg, &run.filter);
    write(&run.out, "reports.json", &report::to_json(&reports))?;
    write(&run.out, "reports.csv", &report::to_csv(&reports))?;
    Ok(verdict(print_summary(&reports)))
}

fn cmd_sweep(axis: AxisArg, common: &Common) -> Result<u8, Failure> {
    let run = load(common)?;
    let (axis, values) = match axis {
        AxisArg::Beta => (SweepAxis::Beta, run.cfg.betas.len()),
        AxisArg::ProfileWidth => (SweepAxis::ProfileWidth, run.cfg.profiles.widths.len()),
        AxisArg::BinWidth => (SweepAxis::BinWidth, run.cfg.bins.len()),
    };
    if values < 2 {
        return Err(Failure::Config(format!(
            "sweep over {} needs at least 2 values in the config, found {values}",
            axis.name()
        )));
    }
    let reports = suite::run_suite(&run.cfg, &run.filter);
    write(&run.out, &format!("sweep_{}.csv", axis.name()), &report::sweep_csv(axis, &reports))?;
    Ok(verdict(print_summary(&reports)))
}

fn cmd_dump(what: DumpTarget, common: &Common) -> Result<u8, Failure> {
    let run = load(common)?;
    let cfg = &run.cfg;
    let mut cells: Vec<CellIndex> = suite::cells(cfg)
        .into_iter()
        .filter(|c| c.profile == 0 && c.bins == 0)
        .collect();
    cells.sort_by_key(|c| (c.beta, c.family));
    let mut written = 0;
    for c in cells {
        let stem = format!("{}_beta{}", cfg.states[c.family].label(c.family), c.beta);
        let files = match what {
            DumpTarget::Densities => dump_densities(cfg, c)?,
            DumpTarget::States => dump_states(cfg, c)?,
            DumpTarget::Ensembles => dump_ensembles(cfg, c)?,
        };
        for (suffix, text) in files {
            write(&run.out, &format!("{stem}_{suffix}.txt"), &text)?;
            written += 1;
        }
    }
    println!("wrote {written} files to {}", run.out.display());
    Ok(0)
}

type Files = Vec<(String, String)>;

fn dump_densities(cfg: &RunConfig, c: CellIndex) -> Result<Files, Failure> {
    let rho = suite::build_state(cfg, c.family, cfg.betas[c.beta])?;
    let beta = rho.beta();
    let v = rho.q_density()?;
    let (qlo, qhi) = v.quantile_window(1e-2);
    let kgrid = Grid::new(beta.k_of_q(qlo), beta.k_of_q(qhi), rho.axis().len())?;
    let u = q_to_k_density_capturing(&v, beta, &kgrid, 0.0)?.density;
    let mut files = vec![density_file("q", "v", &v), density_file("k", "u", &u)];
    // Heavy-tailed states can defeat the outcome window; the state densities
    // are still written.
    match suite::build_lab(cfg, c).and_then(|lab| lab.prep().cloned()) {
        Ok(p) => files.extend([
            density_file("zeta", "U", &p.u),
            density_file("x", "w", &p.x_density),
            density_file("xi", "W", &p.w),
        ]),
        Err(e) => eprintln!(
            "warning: {} beta={}: measured densities skipped: {e}",
            cfg.states[c.family].label(c.family),
            cfg.betas[c.beta]
        ),
    }
    Ok(files)
}

fn density_file(axis: &str, name: &str, d: &Density) -> (String, String) {
    let nodes = d.grid().nodes();
    (axis.to_string(), report::columns(&[axis, name], &[&nodes, d.values()]))
}

fn dump_states(cfg: &RunConfig, c: CellIndex) -> Result<Files, Failure> {
    let rho = suite::build_state(cfg, c.family, cfg.betas[c.beta])?;
    Ok(rho
        .components()
        .iter()
        .enumerate()
        .map(|(i, (w, s))| {
            let q = s.grid().nodes();
            let re: Vec<f64> = s.amplitudes().iter().map(|a| a.re).collect();
            let im: Vec<f64> = s.amplitudes().iter().map(|a| a.im).collect();
            let mut text = format!("# weight {}\n", report::number(*w));
            text.push_str(&report::columns(&["q", "re_phi", "im_phi"], &[&q, &re, &im]));
            (format!("state{i}"), text)
        })
        .collect())
}

fn dump_ensembles(cfg: &RunConfig, c: CellIndex) -> Result<Files, Failure> {
    let lab = suite::build_lab(cfg, c)?;
    let mut files = Vec::new();
    for order in [MeasurementOrder::MomentumFirst, MeasurementOrder::PositionFirst] {
        let s = lab.scenario(order)?;
        let col = |f: &dyn Fn(&gup_lab::lab::PostSummary) -> f64| -> Vec<f64> {
            s.posts.iter().map(f).collect()
        };
        let corr = col(&|p| p.corr);
        let leak = col(&|p| p.leakage);
        let cu = col(&|p| p.capture_u);
        let cw = col(&|p| p.capture_w);
        files.push((
            order.name().to_string(),
            report::columns(
                &["outcome", "weight", "corr", "leakage", "capture_u", "capture_w"],
                &[&s.outcomes, &s.weights, &corr, &leak, &cu, &cw],
            ),
        ));
    }
    Ok(files)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Check(c) => c,
        Command::Sweep { common, .. } => common,
        Command::Dump { common, .. } => common,
    };
    if let Some(n) = common.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Check(c) => cmd_check(c),
        Command::Sweep { axis, common } => cmd_sweep(*axis, common),
        Command::Dump { what, common } => cmd_dump(*what, common),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Io(m)) => {
            eprintln!("I/O error: {m}");
            ExitCode::from(3)
        }
    }
}
