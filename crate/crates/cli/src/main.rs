use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use multichan_core::analysis::{
    bad_step_budget, empirical_occupancy_distribution, hoeffding_bound, occupancy_weight_exact,
    power_sum_bounds, settle_expectation, tau_threshold, uniform_occupancy_probability, TauParams,
    DEFAULT_TAU_CAP,
};
use multichan_core::congestion::{enumerate_pne_with_cap, DEFAULT_PROFILE_CAP};
use multichan_core::game::socially_optimal;
use multichan_core::harness::{load_spec, run_batch, write_jsonl, ExperimentConfig};
use multichan_core::replicator::{
    integrate, jacobian_stability, Field, IntegrateOptions, LimitKind, MixedProfile,
};
use multichan_core::GameSpec;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "multichan",
    version,
    about = "Decentralized channel allocation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config and write curves and a summary.
    Simulate {
        /// Experiment config (TOML).
        config: PathBuf,
        /// Replace the config's seed list; repeat for several seeds.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Override the horizon.
        #[arg(long)]
        horizon: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the socially optimal allocation of a spec.
    Optimal {
        /// Spec file, or an experiment config whose `[spec]` is used.
        spec: PathBuf,
        /// Emit JSON lines instead of text.
        #[arg(long)]
        json: bool,
    },
    /// List the pure Nash equilibria of the one-shot game.
    Pne {
        spec: PathBuf,
        /// Emit JSON lines instead of CSV.
        #[arg(long)]
        json: bool,
        /// Largest number of profiles to scan.
        #[arg(long, default_value_t = DEFAULT_PROFILE_CAP)]
        cap: u128,
    },
    /// Integrate the replicator field from a starting profile.
    Replicator {
        spec: PathBuf,
        /// `uniform`, `random`, or rows like `0.2,0.8;0.5,0.5`.
        #[arg(long, default_value = "random")]
        start: String,
        /// Seed for a random start.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long, default_value_t = 50_000.0)]
        horizon: f64,
        #[arg(long, value_enum, default_value_t = FieldArg::Exp3Limit)]
        field: FieldArg,
        /// Write the potential trace as CSV (`step,time,potential`).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Evaluate the analysis bounds as JSON lines.
    Bounds {
        #[arg(long)]
        users: usize,
        #[arg(long)]
        channels: usize,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value_t = 0.02)]
        gamma: f64,
        #[arg(long, default_value_t = 0.01)]
        gamma_prime: f64,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        /// Upper limit for the threshold-time search.
        #[arg(long, default_value_t = DEFAULT_TAU_CAP)]
        cap: f64,
        /// Horizons for the power-sum and exploration-budget tables.
        #[arg(long, value_delimiter = ',', default_values_t = [10u64, 100, 1_000, 10_000, 100_000, 1_000_000])]
        n: Vec<u64>,
        /// Monte Carlo samples for the empirical occupancy distribution.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    Exp3Limit,
    MeanFactored,
}

impl From<FieldArg> for Field {
    fn from(f: FieldArg) -> Self {
        match f {
            FieldArg::Exp3Limit => Field::Exp3Limit,
            FieldArg::MeanFactored => Field::MeanFactored,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli.command, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("multichan: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command, out: &mut impl Write) -> Result<()> {
    match command {
        Command::Simulate {
            config,
            seeds,
            horizon,
            out: out_dir,
        } => simulate(&config, seeds, horizon, out_dir, out),
        Command::Optimal { spec, json } => optimal(&load(&spec)?, json, out),
        Command::Pne { spec, json, cap } => pne(&load(&spec)?, json, cap, out),
        Command::Replicator {
            spec,
            start,
            seed,
            step,
            horizon,
            field,
            trace,
        } => {
            let spec = load(&spec)?;
            let start = parse_start(&spec, &start, seed)?;
            let opts = IntegrateOptions {
                step,
                horizon,
                field: field.into(),
            };
            replicator(&spec, &start, opts, trace.as_deref(), out)
        }
        Command::Bounds {
            users,
            channels,
            eps,
            gamma,
            gamma_prime,
            a,
            cap,
            n,
            samples,
            seed,
        } => {
            let params = TauParams {
                num_users: users,
                num_channels: channels,
                eps,
                gamma,
                gamma_prime,
                a,
            };
            bounds(params, cap, &n, samples, seed, out)
        }
    }
}

fn load(path: &Path) -> Result<GameSpec> {
    load_spec(path).with_context(|| format!("cannot load spec from {}", path.display()))
}

fn simulate(
    path: &Path,
    seeds: Vec<u64>,
    horizon: Option<u64>,
    out_dir: Option<PathBuf>,
    out: &mut impl Write,
) -> Result<()> {
    let mut config = ExperimentConfig::load(path)?;
    if !seeds.is_empty() {
        config.seeds = seeds;
    }
    if let Some(h) = horizon {
        config.horizon = h;
    }
    if let Some(dir) = out_dir {
        config.out_dir = dir;
    }
    let batch = run_batch(&config)?;
    batch.write(&config.out_dir)?;
    let mut records = batch.summary_records();
    records.push(("out_dir", json!(config.out_dir.display().to_string())));
    write_jsonl(out, &records)?;
    Ok(())
}

fn per_channel(values: &[Option<f64>]) -> String {
    let parts: Vec<String> = values
        .iter()
        .map(|v| v.map_or_else(|| "-".to_string(), |x| x.to_string()))
        .collect();
    format!("({})", parts.join(","))
}

fn optimal(spec: &GameSpec, as_json: bool, out: &mut impl Write) -> Result<()> {
    let sol = socially_optimal(spec)?;
    if as_json {
        let ties: Vec<String> = sol.ties.iter().map(ToString::to_string).collect();
        write_jsonl(
            out,
            &[
                ("k_star", json!(sol.k_star.0)),
                ("v_star", json!(sol.v_star)),
                ("v_star_per_channel", json!(sol.v_star_per_channel)),
                ("support", json!(sol.support)),
                ("margin", json!(sol.margin)),
                ("unique", json!(sol.is_unique())),
                ("ties", json!(ties)),
            ],
        )?;
    } else {
        writeln!(out, "k*={}", sol.k_star)?;
        writeln!(out, "v*={}", sol.v_star)?;
        writeln!(out, "v*_j={}", per_channel(&sol.v_star_per_channel))?;
        writeln!(out, "support={}", sol.support)?;
        writeln!(out, "margin={}", sol.margin)?;
        if !sol.is_unique() {
            let ties: Vec<String> = sol.ties.iter().map(ToString::to_string).collect();
            writeln!(out, "tied={}", ties.join(" "))?;
        }
    }
    Ok(())
}

fn pne(spec: &GameSpec, as_json: bool, cap: u128, out: &mut impl Write) -> Result<()> {
    let report = enumerate_pne_with_cap(spec, cap)?;
    let n = spec.num_channels();
    if as_json {
        let profiles: Vec<String> = report
            .pne_profiles
            .iter()
            .map(ToString::to_string)
            .collect();
        let occupancies: Vec<&Vec<usize>> = report.pne_occupancies.iter().map(|k| &k.0).collect();
        write_jsonl(
            out,
            &[
                ("pne_profiles", json!(profiles)),
                ("pne_occupancies", json!(occupancies)),
                ("potential_values", json!(report.potential_values)),
                ("optimum", json!(report.optimum.0)),
                ("contains_optimum", json!(report.contains_optimum)),
            ],
        )?;
    } else {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["profile", "occupancy", "potential", "is_optimum"])?;
        for (p, phi) in report.pne_profiles.iter().zip(&report.potential_values) {
            let occ = p.occupancy(n);
            w.write_record([
                p.to_string(),
                occ.to_string(),
                phi.to_string(),
                (occ == report.optimum).to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn parse_start(spec: &GameSpec, start: &str, seed: u64) -> Result<MixedProfile> {
    let (m, n) = (spec.num_users(), spec.num_channels());
    match start {
        "uniform" => Ok(MixedProfile::uniform(m, n)),
        "random" => Ok(MixedProfile::random_interior(
            m,
            n,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )),
        rows => {
            let rows: Vec<Vec<f64>> = rows
                .split(';')
                .map(|row| {
                    row.split(',')
                        .map(|x| x.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                })
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("cannot parse start profile `{rows}`"))?;
            if rows.len() != m || rows.iter().any(|r| r.len() != n) {
                bail!("start profile needs {m} rows of {n} probabilities");
            }
            Ok(MixedProfile::new(rows)?)
        }
    }
}

fn replicator(
    spec: &GameSpec,
    start: &MixedProfile,
    opts: IntegrateOptions,
    trace: Option<&Path>,
    out: &mut impl Write,
) -> Result<()> {
    let res = integrate(spec, start, opts)?;
    if let Some(path) = trace {
        let file =
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["step", "time", "potential"])?;
        for (i, phi) in res.potential_trace.iter().enumerate() {
            let time = (i as f64 * opts.step).min(res.time);
            w.write_record([i.to_string(), time.to_string(), phi.to_string()])?;
        }
        w.flush()?;
    }
    let final_rows: Vec<&[f64]> = (0..res.final_profile.num_users())
        .map(|i| res.final_profile.row(i))
        .collect();
    let mut records = vec![
        ("limit_kind", json!(res.limit_kind)),
        ("converged", json!(res.converged)),
        ("time", json!(res.time)),
        ("steps", json!(res.steps)),
        ("final_profile", json!(final_rows)),
        ("initial_potential", json!(res.potential_trace.first())),
        ("final_potential", json!(res.potential_trace.last())),
        ("max_row_sum", json!(res.max_row_sum)),
        ("max_simplex_violation", json!(res.max_simplex_violation)),
    ];
    if let Some(pure) = res.final_profile.as_pure() {
        records.push(("pure_profile", json!(pure.to_string())));
    }
    if res.converged && res.limit_kind != LimitKind::NotConverged {
        let stability = jacobian_stability(spec, &res.final_profile);
        records.push(("stability", json!(stability.classification)));
        records.push((
            "eigenvalue_real_parts",
            json!(stability.eigenvalue_real_parts),
        ));
    }
    write_jsonl(out, &records)?;
    Ok(())
}

/// Integers past `u64` are emitted as strings so JSON readers keep every digit.
fn big_int(v: u128) -> Value {
    u64::try_from(v).map_or_else(|_| json!(v.to_string()), |x| json!(x))
}

fn bounds(
    params: TauParams,
    cap: f64,
    horizons: &[u64],
    samples: usize,
    seed: u64,
    out: &mut impl Write,
) -> Result<()> {
    let (m, n) = (params.num_users, params.num_channels);
    if m == 0 || n < 2 {
        bail!("bounds need at least one user and two channels");
    }
    let tau = tau_threshold(params, cap)?;

    let mut records: Vec<(&str, Value)> =
        vec![("tau", big_int(tau)), ("tau_params", json!(params))];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let empirical = empirical_occupancy_distribution(m, n, samples, &mut rng);
    let weights = (1..=m)
        .map(|l| {
            let (num, den) = occupancy_weight_exact(m, n, l)?;
            Ok(json!({
                "l": l,
                "numerator": big_int(num),
                "denominator": big_int(den),
                "value": num as f64 / den as f64,
                "uniform_probability": uniform_occupancy_probability(m, n, l),
                "empirical_probability": empirical[l - 1],
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    records.push(("occupancy_weights", json!(weights)));

    let settle = (1..=n.min(m))
        .map(|z| Ok(json!({ "support": z, "expected_rounds": big_int(settle_expectation(m, z)?) })))
        .collect::<Result<Vec<_>>>()?;
    records.push(("settle_expectation", json!(settle)));

    let p = 1.0 / (2.0 * m as f64) - params.gamma / m as f64;
    let sums = horizons
        .iter()
        .map(|&h| {
            let b = power_sum_bounds(h, p)?;
            let budget = bad_step_budget(h, m, params.gamma)?;
            Ok(json!({
                "n": h,
                "p": p,
                "lower": b.lower,
                "sum": b.sum,
                "upper": b.upper,
                "bad_steps_exact": budget.exact,
                "bad_steps_bound": budget.bound,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    records.push(("exploration_sums", json!(sums)));

    let hoeffding: Vec<Value> = [10u64, 100, 1000]
        .iter()
        .map(|&k| json!({ "n": k, "eps": params.eps, "bound": hoeffding_bound(k, params.eps) }))
        .collect();
    records.push(("hoeffding", json!(hoeffding)));

    write_jsonl(out, &records)?;
    Ok(())
}
