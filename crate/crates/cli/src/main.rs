//! `cvcal`: solve conjectural-variations gas market models and calibrate
//! their market power, anchor prices and elasticities to reference data.
//!
//! Every subcommand prints a one-line JSON summary on stdout. Failures print
//! a JSON object with an `error` kind and a `message` on stderr and exit
//! with a status identifying the failure class (see [`error`]).

mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cvcal_core::calibration::initial_ranges;
use cvcal_core::fixtures::{self, Instance};
use cvcal_core::io::{
    equilibrium_tables, load_anchors, load_network, load_reference, load_theta, ranges_table,
    read_json, write_json, write_text, IoError, NetworkData, NetworkFile, ReferenceFile, Report,
    ResultFile, ThetaFile,
};
use cvcal_core::market::{assemble_base, solve_system};
use cvcal_core::{
    calibrate, lcp, preprocess_reference, CalibrationConfig, MarketNetwork, ThetaMatrix,
};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use error::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "cvcal",
    version,
    about = "Conjectural-variations gas market models and their calibration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check input files without solving anything.
    Validate {
        #[arg(long)]
        network: PathBuf,
        /// Anchor file overriding the anchors in the network file.
        #[arg(long)]
        anchors: Option<PathBuf>,
        #[arg(long)]
        theta: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Solve the base model and write sales and prices.
    Solve {
        #[arg(long)]
        network: PathBuf,
        /// Anchor file; defaults to the anchors in the network file.
        #[arg(long)]
        anchors: Option<PathBuf>,
        /// Market power file; every value defaults to one.
        #[arg(long)]
        theta: Option<PathBuf>,
        #[arg(long, default_value_t = lcp::DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Admissible price ranges and anchor choices after marginal cost
    /// recovery. Writes `ranges.csv`, or prints it when `--out` is absent.
    Ranges {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the calibration and write the result and report tables.
    Calibrate {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render the report tables of a stored result.
    Report {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded synthetic instance: network, market power and
    /// reference data.
    Generate {
        #[arg(long, value_enum)]
        fixture: Fixture,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Fixture {
    /// Random single market; reference data is its exact equilibrium.
    SingleMarket,
    /// Random two-node network; reference data is its exact equilibrium.
    TwoNode,
    /// Ten nodes, two periods, five traders; noisy reference data.
    Grid10,
    /// 43 nodes, 247 arcs, two periods; noisy reference data.
    Replica43,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(Failure::Usage(e.to_string())),
    };
    match run(cli.command) {
        Ok(summary) => {
            if !summary.is_null() {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    eprintln!("{}", f.payload());
    f.exit_code()
}

fn run(command: Command) -> Result<Value, Failure> {
    match command {
        Command::Validate {
            network,
            anchors,
            theta,
            reference,
            config,
        } => {
            let config = load_config(config.as_deref())?;
            let data = load_network(&network)?;
            let net = &data.network;
            let anchors = match anchors {
                Some(p) => load_anchors(&p, net)?,
                None => data.anchors.clone(),
            };
            if let Some(p) = theta {
                load_theta(&p, net)?;
            }
            let mut summary = json!({
                "nodes": net.n_nodes(),
                "periods": net.n_periods(),
                "traders": net.n_traders(),
                "markets": net.consumer_nodes().count() * net.n_periods(),
                "anchors": anchors.as_slice().iter().flatten().count(),
            });
            if let Some(p) = reference {
                let loaded = load_reference(&p, net, &config.eta_box)?;
                summary["reference_consistent"] = loaded.consistent.into();
            }
            Ok(summary)
        }
        Command::Solve {
            network,
            anchors,
            theta,
            tol,
            out,
        } => {
            let NetworkData {
                network: net,
                anchors: file_anchors,
            } = load_network(&network)?;
            let anchors = match anchors {
                Some(p) => load_anchors(&p, &net)?,
                None => file_anchors,
            };
            let theta = load_theta_or_one(theta.as_deref(), &net)?;
            let sys = assemble_base(&net, &anchors, &theta)?;
            info!("solving a system of dimension {}", sys.dim());
            let eq = solve_system(&net, &sys, tol)?;
            let (sales, prices) = equilibrium_tables(&net, &eq);
            create_dir(&out)?;
            write_text(&out.join("sales.csv"), &sales)?;
            write_text(&out.join("prices.csv"), &prices)?;
            Ok(json!({ "dimension": sys.dim(), "out": out }))
        }
        Command::Ranges {
            network,
            reference,
            config,
            out,
        } => {
            let config = load_config(config.as_deref())?;
            let net = load_network(&network)?.network;
            let raw = load_reference(&reference, &net, &config.eta_box)?.raw;
            let reference = preprocess_reference(&net, &raw, &config)?;
            let records = initial_ranges(&net, &reference, &config)?;
            let table = ranges_table(&net, &records);
            let satisfied = records.iter().filter(|r| r.choice.satisfied()).count();
            match out {
                Some(dir) => {
                    create_dir(&dir)?;
                    write_text(&dir.join("ranges.csv"), &table)?;
                    Ok(json!({ "markets": records.len(), "satisfied": satisfied, "out": dir }))
                }
                None => {
                    // The table itself is the output; no summary line.
                    print!("{table}");
                    Ok(Value::Null)
                }
            }
        }
        Command::Calibrate {
            network,
            reference,
            config,
            out,
        } => {
            let config = load_config(config.as_deref())?;
            let net = load_network(&network)?.network;
            let loaded = load_reference(&reference, &net, &config.eta_box)?;
            if !loaded.consistent {
                info!("reference sales are inconsistent; scaling them");
            }
            let reference = preprocess_reference(&net, &loaded.raw, &config)?;
            let result = calibrate(&net, &reference, &config)?;
            let summary = json!({
                "iterations": result.iterations,
                "termination": result.termination,
                "out": out,
            });
            let file = ResultFile::new(&net, result);
            create_dir(&out)?;
            write_json(&out.join("result.json"), &file)?;
            Report::build(&file).write(&out)?;
            Ok(summary)
        }
        Command::Report { result, out } => {
            let file: ResultFile = read_json(&result)?;
            create_dir(&out)?;
            Report::build(&file).write(&out)?;
            Ok(json!({ "iterations": file.result.iterations, "out": out }))
        }
        Command::Generate { fixture, seed, out } => generate(fixture, seed, &out),
    }
}

fn load_config(path: Option<&Path>) -> Result<CalibrationConfig, Failure> {
    let config = match path {
        Some(p) => read_json(p)?,
        None => CalibrationConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn load_theta_or_one(path: Option<&Path>, net: &MarketNetwork) -> Result<ThetaMatrix, Failure> {
    Ok(match path {
        Some(p) => load_theta(p, net)?,
        None => ThetaMatrix::uniform(net.n_traders(), net.n_nodes(), net.n_periods(), 1.0),
    })
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|source| {
        Failure::Io(IoError::Write {
            path: dir.to_path_buf(),
            source,
        })
    })
}

fn generate(fixture: Fixture, seed: u64, out: &Path) -> Result<Value, Failure> {
    let tol = lcp::DEFAULT_TOL;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (inst, reference) = match fixture {
        Fixture::SingleMarket | Fixture::TwoNode => {
            let gen = match fixture {
                Fixture::SingleMarket => {
                    fixtures::random_single_market as fn(&mut ChaCha8Rng) -> Instance
                }
                _ => fixtures::random_two_node,
            };
            let rt = fixtures::sample_round_trip(&mut rng, tol, gen);
            let file = ReferenceFile::from_reference(&rt.instance.network, &rt.reference);
            (rt.instance, file)
        }
        Fixture::Grid10 => {
            let (inst, raw) = fixtures::perturbed_grid10(seed, tol)?;
            let file = ReferenceFile::from_raw(&inst.network, &raw);
            (inst, file)
        }
        Fixture::Replica43 => {
            let inst = fixtures::replica43(seed);
            // Downward noise only: the replica's equilibrium nearly
            // exhausts production capacity.
            let raw = fixtures::perturbed_with(&inst, seed, tol, 0.9..1.0)?;
            let file = ReferenceFile::from_raw(&inst.network, &raw);
            (inst, file)
        }
    };
    let Instance {
        network,
        anchors,
        theta,
    } = &inst;
    create_dir(out)?;
    write_json(
        &out.join("network.json"),
        &NetworkFile::from_network(network, Some(anchors)),
    )?;
    write_json(
        &out.join("theta.json"),
        &ThetaFile::from_theta(network, theta),
    )?;
    write_json(&out.join("reference.json"), &reference)?;
    Ok(json!({
        "nodes": network.n_nodes(),
        "arcs": network.pipelines.len() + network.ships.len(),
        "periods": network.n_periods(),
        "traders": network.n_traders(),
        "out": out,
    }))
}
