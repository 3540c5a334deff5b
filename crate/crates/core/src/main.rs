use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use swarmform::frames::J2Context;
use swarmform::graph::{build_graph, degree_bounds, parse_edge_list};
use swarmform::grouping::centralized_grouping;
use swarmform::io::{analyze, parse_config, write_run};
use swarmform::relorbit::state_from_params;
use swarmform::sim::{init_swarm, run, ScenarioConfig};
use swarmform::stabilizer::{check_gain_condition, derive_gains};
use swarmform::Error;

const SCENARIOS: &[(&str, &str)] = &[
    ("theta1_n20", include_str!("../scenarios/theta1_n20.cfg")),
    ("theta2_n20", include_str!("../scenarios/theta2_n20.cfg")),
    ("small_c1_main", include_str!("../scenarios/small_c1_main.cfg")),
    ("small_c1_opp", include_str!("../scenarios/small_c1_opp.cfg")),
];

#[derive(Parser)]
#[command(name = "swarmform", version, about = "J2-perturbed satellite swarm deployment simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML run configuration (schema = 1).
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Bundled scenario name.
    #[arg(long)]
    scenario: Option<String>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write states.csv, params.csv, groups.json, summary.json.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute summary and metric series from a run directory.
    Analyze {
        #[arg(long = "in", alias = "out")]
        dir: PathBuf,
    },
    /// Derive gains for an edge list and check the eigenvalue condition.
    Gains {
        /// Text file with one `a b` pair per line.
        #[arg(long)]
        edges: PathBuf,
        #[arg(long, default_value_t = 1.5e-2)]
        k_a: f64,
        #[arg(long, default_value_t = swarmform::frames::R_REF_DEFAULT)]
        r_ref_m: f64,
        #[arg(long, default_value_t = 51.7)]
        i_ref_deg: f64,
    },
    /// Group the initial swarm of a scenario and print the result as JSON.
    Group {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// List bundled scenarios.
    Scenarios,
}

fn load_config(a: &ConfigArgs) -> swarmform::Result<ScenarioConfig> {
    let text = match (&a.config, &a.scenario) {
        (Some(p), _) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        (None, Some(name)) => SCENARIOS
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.to_string())
            .ok_or_else(|| Error::Config(format!("unknown scenario {name:?}")))?,
        (None, None) => return Err(Error::Config("one of --config or --scenario is required".into())),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn cmd_gains(path: &Path, k_a: f64, r_ref: f64, i_ref_deg: f64) -> swarmform::Result<()> {
    let ctx = J2Context::build(r_ref, i_ref_deg.to_radians())?;
    let edges = parse_edge_list(&std::fs::read_to_string(path)?)?;
    if edges.is_empty() {
        return Err(Error::Config("edge list is empty".into()));
    }
    let n = edges.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0) + 1;
    let g = build_graph(n, &edges)?;
    if !g.connected {
        return Err(Error::Disconnected);
    }
    let (dmin, dmax) = degree_bounds(&g);
    let gains = derive_gains(dmin, dmax, n, k_a, &ctx)?;
    let report = check_gain_condition(&g, &gains, &ctx);
    println!("vertices {n}  edges {}  delta {dmin}  Delta {dmax}", g.n_edges());
    println!(
        "k_A {k_a:e} 1/s  lambda_0 {:.10e}  gamma_B {:.10e}  psi {:.10e}  f_0 {:.10e}  g_0 {:.10e}",
        gains.lambda_0, gains.gamma_b, gains.psi, gains.f_0, gains.g_0
    );
    println!("window [{:.10e}, {:.10e}]", report.lower, report.upper);
    println!("{:>20}  {}", "eigenvalue", "in window");
    for &l in g.eigenvalues.iter().filter(|&&l| l > 1e-9) {
        let pass = !report.violations.iter().any(|&v| v == l);
        println!("{:>20.12e}  {}", l, if pass { "pass" } else { "FAIL" });
    }
    println!("condition {}", if report.pass { "PASS" } else { "FAIL" });
    Ok(())
}

fn cmd_group(cfg: &ScenarioConfig) -> swarmform::Result<()> {
    let ctx = cfg.context()?;
    let plane = cfg.plane(&ctx)?;
    let init = init_swarm(cfg)?;
    let states: Vec<_> = init.params.iter().map(|p| state_from_params(p, 0.0, &ctx)).collect();
    let d = centralized_grouping(&states, &init.params, &cfg.grouping, &plane, &ctx)?;
    let out = serde_json::json!({
        "schema": swarmform::io::SCHEMA_VERSION,
        "ref_index": init.ref_index,
        "groups": d.groups,
        "edges": d.undirected_edges(),
        "skipped": d.skipped,
        "invariants": d.check_invariants(cfg.grouping.n_fl_max, cfg.grouping.n_lf_max).err(),
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    Ok(())
}

fn exec(cli: Cli) -> swarmform::Result<()> {
    match cli.cmd {
        Cmd::Simulate { cfg, out } => {
            let cfg = load_config(&cfg)?;
            log::info!("simulating {} satellites for {} s", cfg.n_sats, cfg.t_end);
            let log = run(&cfg)?;
            let s = write_run(&out, &log)?;
            if let Some(f) = &s.plane_fit {
                log::info!("plane fit ({:.4}, {:.4}) deg", f.theta_p_deg, f.theta_zxy_deg);
            }
            println!("{}", out.join("summary.json").display());
        }
        Cmd::Analyze { dir } => {
            analyze(&dir)?;
            println!("{}", dir.join("summary.json").display());
        }
        Cmd::Gains {
            edges,
            k_a,
            r_ref_m,
            i_ref_deg,
        } => cmd_gains(&edges, k_a, r_ref_m, i_ref_deg)?,
        Cmd::Group { cfg } => cmd_group(&load_config(&cfg)?)?,
        Cmd::Scenarios => {
            for (n, _) in SCENARIOS {
                println!("{n}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match exec(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::NumericalAbort { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
