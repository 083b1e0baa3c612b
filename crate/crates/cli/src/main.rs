use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde_json::json;

use ncstab::io::NetworkFile;
use ncstab::oracle::{
    simulate_fluid, worst_case_scenario, write_csv, ArrivalPattern, Scenario, ServerPlan,
};
use ncstab::stability::{analyze, critical_utilization, Label, Method, StabilityReport, Target};
use ncstab::tree_analysis::tree_backlog;
use ncstab::{Bound, Network};
use ncstab_cli::{
    format_bound, format_number, grid, parse_methods, sweep, write_sweep_csv, FamilyArgs,
};

#[derive(Parser)]
#[command(
    name = "ncstab",
    version,
    about = "Backlog bounds and stability of networks of rate-latency servers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a network of a family as JSON.
    Generate {
        #[command(flatten)]
        family: FamilyArgs,
        /// Utilisation of every server.
        #[arg(long, default_value_t = 0.5)]
        u: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Stability verdict and bound for a network file.
    Analyze {
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value = "td")]
        method: String,
        /// Server (1-based) of a backlog bound.
        #[arg(long)]
        server: Option<usize>,
        /// Flows (1-based) of a backlog bound; all flows crossing the server
        /// by default.
        #[arg(long, value_delimiter = ',')]
        flows: Option<Vec<usize>>,
        /// Flow (1-based) of an end-to-end delay bound.
        #[arg(long, conflicts_with_all = ["server", "flows"])]
        flow: Option<usize>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// CSV of the bound of flow 1 at its last server against utilisation.
    Sweep {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, value_delimiter = ',', default_value = "sd,td,ag")]
        method: Vec<String>,
        #[arg(long, default_value_t = 0.05)]
        u_min: f64,
        #[arg(long, default_value_t = 0.95)]
        u_max: f64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Largest utilisation a method proves stable.
    Critical {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, default_value = "td")]
        method: String,
    },
    /// Fluid simulation of a network file.
    Simulate {
        #[arg(long)]
        network: PathBuf,
        /// Seed of the random arrivals.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Time step; a hundredth of the smallest latency by default.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        /// Play the worst case for the backlog of these flows (1-based) at
        /// the root of a tree instead of random arrivals.
        #[arg(long, value_delimiter = ',')]
        flows: Option<Vec<usize>>,
        /// Trajectory dump (CSV).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ncstab::Error>().is_some()
                || e.downcast_ref::<io::Error>().is_some()
            {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Generate { family, u, output } => {
            if !(u > 0.0 && u < 1.0) {
                return Err(ncstab::Error::InvalidParameter(format!(
                    "utilization {u} must be within (0, 1)"
                ))
                .into());
            }
            let family = family.family()?;
            let net = family.network(u)?;
            let file = NetworkFile::from_network(&net, family.removal().as_ref());
            emit(output.as_deref(), |w| writeln!(w, "{}", file.to_json()))?;
        }
        Command::Analyze {
            network,
            method,
            server,
            flows,
            flow,
            json,
        } => {
            let (net, file) = load(&network)?;
            let method: Method = method.parse()?;
            let target = target(&net, server, flows, flow)?;
            let removal = file.removal()?;
            let report = analyze(&net, method, removal.as_ref(), target.as_ref())?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report_json(&report, target.as_ref()))?
                );
            } else {
                print_report(&report, target.as_ref());
            }
            if report.bound == Some(Bound::Unbounded) {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Sweep {
            family,
            method,
            u_min,
            u_max,
            step,
            output,
        } => {
            let methods = parse_methods(&method)?;
            let us = grid(u_min, u_max, step)?;
            let rows = sweep(&family.family()?, &methods, &us)?;
            emit(output.as_deref(), |w| write_sweep_csv(&methods, &rows, w))?;
        }
        Command::Critical { family, method } => {
            let family = family.family()?;
            let method: Method = method.parse()?;
            let u = critical_utilization(&family.base()?, method, family.removal().as_ref())?;
            println!("{}", format_number(u));
        }
        Command::Simulate {
            network,
            seed,
            dt,
            steps,
            flows,
            output,
        } => {
            let (net, _) = load(&network)?;
            let dt = dt.unwrap_or_else(|| Scenario::default_dt(&net));
            let scenario = match &flows {
                Some(ids) => {
                    worst_case_scenario(&net, &to_indices(ids, net.flow_count(), "flow")?, dt)?
                }
                None => Scenario {
                    dt,
                    steps,
                    arrivals: (0..net.flow_count())
                        .map(|i| ArrivalPattern::Random {
                            seed: seed.wrapping_add(i as u64),
                            start: 0.0,
                        })
                        .collect(),
                    servers: vec![ServerPlan::default(); net.server_count()],
                },
            };
            let result = simulate_fluid(&net, &scenario)?;
            println!("server,max_backlog");
            for (j, b) in result.max_backlog.iter().enumerate() {
                println!("{},{}", j + 1, format_number(*b));
            }
            if let Some(ids) = &flows {
                let interest = to_indices(ids, net.flow_count(), "flow")?;
                let root = net.flows()[interest[0]].sink();
                let reached = result.trajectory.max_backlog(root, &interest);
                let bound = tree_backlog(&net, &interest)?.value;
                println!(
                    "# flows {ids:?} at server {}: simulated {}, bound {}",
                    root + 1,
                    format_number(reached),
                    format_bound(bound)
                );
            }
            if let Some(path) = output {
                let f = fs::File::create(&path)
                    .with_context(|| format!("creating {}", path.display()))?;
                write_csv(&result.trajectory, io::BufWriter::new(f))?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load(path: &Path) -> anyhow::Result<(Network, NetworkFile)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = NetworkFile::parse(&text)?;
    Ok((file.network()?, file))
}

fn emit(
    path: Option<&Path>,
    write: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            let mut f = io::BufWriter::new(
                fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
            );
            write(&mut f)?;
            f.flush()?;
        }
        None => write(&mut io::stdout().lock())?,
    }
    Ok(())
}

fn to_indices(ids: &[usize], count: usize, what: &str) -> ncstab::Result<Vec<usize>> {
    ids.iter()
        .map(|&id| {
            if id == 0 || id > count {
                Err(ncstab::Error::InvalidParameter(format!(
                    "{what} {id} is outside 1..={count}"
                )))
            } else {
                Ok(id - 1)
            }
        })
        .collect()
}

fn target(
    net: &Network,
    server: Option<usize>,
    flows: Option<Vec<usize>>,
    flow: Option<usize>,
) -> anyhow::Result<Option<Target>> {
    if let Some(f) = flow {
        return Ok(Some(Target::Delay {
            flow: to_indices(&[f], net.flow_count(), "flow")?[0],
        }));
    }
    let Some(server) = server else {
        if flows.is_some() {
            bail!(ncstab::Error::InvalidParameter(
                "--flows needs --server".into()
            ));
        }
        return Ok(None);
    };
    let server = to_indices(&[server], net.server_count(), "server")?[0];
    let flows = match flows {
        Some(ids) => to_indices(&ids, net.flow_count(), "flow")?,
        None => net.flows_through(server),
    };
    Ok(Some(Target::Backlog { server, flows }))
}

fn label_name(label: &Label) -> String {
    match label {
        Label::Segment { flow, index } => format!("flow {} segment {}", flow + 1, index + 1),
        Label::Arc((a, b)) => format!("arc ({}, {})", a + 1, b + 1),
    }
}

fn target_name(target: &Target) -> String {
    match target {
        Target::Backlog { server, flows } => {
            let ids: Vec<String> = flows.iter().map(|i| (i + 1).to_string()).collect();
            format!(
                "backlog of flows {} at server {}",
                ids.join(","),
                server + 1
            )
        }
        Target::Delay { flow } => format!("delay of flow {}", flow + 1),
    }
}

fn print_report(report: &StabilityReport, target: Option<&Target>) {
    println!("method: {}", report.method);
    match report.rho {
        Some(rho) => println!("spectral radius: {}", format_number(rho)),
        None => println!("spectral radius: - (not locally stable)"),
    }
    println!(
        "verdict: {}",
        if report.stable { "stable" } else { "unstable" }
    );
    if let (Some(t), Some(b)) = (target, report.bound) {
        println!("{}: {}", target_name(t), format_bound(b));
    }
    if let Some(obj) = &report.objective {
        println!("constant: {}", format_number(obj.constant));
        for (label, q) in report.labels.iter().zip(&obj.q) {
            if *q != 0.0 {
                println!("  {}: {}", label_name(label), format_number(*q));
            }
        }
    }
}

fn report_json(report: &StabilityReport, target: Option<&Target>) -> serde_json::Value {
    let bound = report.bound.map(|b| match b {
        Bound::Finite(v) => json!(v),
        Bound::Unbounded => json!("inf"),
    });
    json!({
        "method": report.method.to_string(),
        "spectral_radius": report.rho,
        "stable": report.stable,
        "target": target.map(target_name),
        "bound": bound,
        "labels": report.labels.iter().map(label_name).collect::<Vec<_>>(),
        "fixed_point": report.fixed_point,
        "coefficients": report.objective.as_ref().map(|o| o.q.clone()),
        "constant": report.objective.as_ref().map(|o| o.constant),
    })
}
