use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use grand_core::fluid::{distance_to_optimal_set, objective_gap, verify_optimal};
use grand_core::lyapunov::{lyapunov_value, solve_cvx, xi_drift, LyapunovParams};
use grand_core::{simulate, solve_lp};
use grand_sim::check::run_checks;
use grand_sim::config::{Config, DEFAULT_R};
use grand_sim::csv::{config_label, join, real, snapshot_header, snapshot_row};
use grand_sim::sweep::{self, run_sweep, SweepSpec, DISTANCE_TOL};

#[derive(Parser)]
#[command(name = "grand-sim", version, about = "GRAND placement simulator and fluid benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every configured policy once at the `[run]` scale.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the final state of each run (X_k in canonical order, then Z).
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Solve the fluid LP and print L*, x*, eta and the slackness certificate.
    Lp {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the entropy-regularized problem for one `a`.
    Cvx {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        a: f64,
    },
    /// Run the invariant suite and print one pass/fail line per property.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Replicated sweep over the r grid; writes runs.csv, report.csv, verdicts.txt, floors.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Worker threads (defaults to all cores); output does not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, seed, out, snapshot } => {
            let config = Config::from_path(&config)?;
            simulate_cmd(&config, seed, &out, snapshot.as_deref())?;
        }
        Command::Lp { config } => lp_cmd(&Config::from_path(&config)?)?,
        Command::Cvx { config, a } => cvx_cmd(&Config::from_path(&config)?, a)?,
        Command::Check { config, seed } => {
            let config = Config::from_path(&config)?;
            let r = config.run.r.unwrap_or(DEFAULT_R);
            let mut all = true;
            for c in run_checks(&config, seed, r) {
                all &= c.pass;
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if !all {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Sweep { config, out_dir, threads } => {
            let config = Config::from_path(&config)?;
            let spec = SweepSpec::from_config(&config);
            let report = match threads {
                Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(|| run_sweep(&spec))?,
                None => run_sweep(&spec)?,
            };
            sweep::write_outputs(&config, &report, &out_dir)?;
            print!("{}", sweep::verdicts_txt(&report));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn simulate_cmd(config: &Config, seed: u64, out: &std::path::Path, snapshot: Option<&std::path::Path>) -> Result<()> {
    let r = config.run.r.unwrap_or(DEFAULT_R);
    let rho = config.rho();
    let lp = solve_lp(&config.packing, &rho)?;
    let mut header: Vec<String> = ["run_id", "r", "policy", "param"].map(String::from).to_vec();
    header.extend(sweep::run_value_header(config));
    let mut body = join(header) + "\n";
    let mut snaps = snapshot_header(&config.packing) + "\n";
    for (id, &policy) in config.policies.iter().enumerate() {
        let mut spec = config.run_spec(policy, r)?;
        spec.seed = seed;
        spec.stream = id as u64;
        let rec = simulate(&spec).with_context(|| format!("simulating {}", policy.name()))?;
        let gap = objective_gap(&rec.mean_x, lp.l_star);
        let dist = distance_to_optimal_set(&config.packing, &rho, lp.l_star, &rec.mean_x, DISTANCE_TOL)?;
        let mut row = vec![id.to_string(), real(r), policy.name().to_string(), real(policy.parameter())];
        row.extend(sweep::run_values(&rec, r, Some((gap, dist))));
        body += &(join(row) + "\n");
        snaps += &(snapshot_row(&rec.final_state) + "\n");
    }
    fs::write(out, body).with_context(|| format!("writing {}", out.display()))?;
    if let Some(path) = snapshot {
        fs::write(path, snaps).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn lp_cmd(config: &Config) -> Result<()> {
    let ps = &config.packing;
    let rho = config.rho();
    let lp = solve_lp(ps, &rho)?;
    println!("quantity,index,value");
    println!("l_star,,{}", real(lp.l_star));
    for (k, v) in ps.configs().iter().zip(lp.x_star.as_slice()) {
        println!("x_star,{},{}", config_label(k), real(*v));
    }
    for (i, v) in lp.eta.iter().enumerate() {
        println!("eta,{i},{}", real(*v));
    }
    let eta_rho: f64 = lp.eta.iter().zip(&rho).map(|(e, r)| e * r).sum();
    println!("dual_value,,{}", real(eta_rho));
    for (k, v) in ps.configs().iter().zip(lp.x_star.as_slice()) {
        let reduced = 1.0 - k.counts().iter().zip(&lp.eta).map(|(&c, e)| f64::from(c) * e).sum::<f64>();
        println!("reduced_cost,{},{}", config_label(k), real(reduced));
        println!("slackness_product,{},{}", config_label(k), real(reduced * v));
    }
    println!("certificate,,{}", verify_optimal(ps, &rho, &lp.x_star, &lp.eta));
    Ok(())
}

fn cvx_cmd(config: &Config, a: f64) -> Result<()> {
    let ps = &config.packing;
    let rho = config.rho();
    let sol = solve_cvx(ps, &rho, a, 1e-12)?;
    let params = LyapunovParams::new(ps, a)?;
    println!("quantity,index,value");
    for (k, v) in ps.configs().iter().zip(sol.point.x.as_slice()) {
        println!("x,{},{}", config_label(k), real(*v));
    }
    for (i, v) in sol.point.nu.iter().enumerate() {
        println!("nu,{i},{}", real(*v));
    }
    println!("lyapunov,,{}", real(lyapunov_value(&params, &sol.point.x)?));
    println!("drift,,{}", real(xi_drift(&params, ps, &sol.point.x, &config.mu)?));
    println!("residual,,{}", real(sol.residual));
    println!("iterations,,{}", sol.iterations);
    Ok(())
}
