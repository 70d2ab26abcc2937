//! Seeded experiment harness: configuration, synchronous simulation rounds,
//! multi-seed aggregation and CSV/JSON-lines output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{exponent_fit, regret, RunTrace};
use crate::error::{Error, Result};
use crate::game::{
    realized_payoffs, sample_rates, social_welfare, socially_optimal, ActionProfile, GameSpec,
};
use crate::learners::{make_agent, AgentParams, Feedback, VisibleInfo};

/// Information regime the users operate under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// Payoff-only feedback; users know only `N`.
    C1,
    /// Payoff and channel occupancy; users know `N` and `M`.
    C2,
    /// Constant rates, payoff-only feedback; users know `N` and `M`.
    C3,
}

impl Case {
    fn native_agent(self) -> &'static str {
        match self {
            Case::C1 => "exp3",
            Case::C2 => "rla",
            Case::C3 => "rs",
        }
    }
}

/// How densely per-step curves are written out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cadence {
    /// Every step up to here is kept.
    pub dense_until: u64,
    /// Log-spaced points per factor of ten beyond `dense_until`.
    pub points_per_decade: u32,
}

impl Default for Cadence {
    fn default() -> Self {
        Cadence {
            dense_until: 10_000,
            points_per_decade: 100,
        }
    }
}

impl Cadence {
    /// Output times in `1..=horizon`, always including `horizon`.
    pub fn sample_times(&self, horizon: u64) -> Vec<u64> {
        let mut times: Vec<u64> = (1..=horizon.min(self.dense_until)).collect();
        if horizon > self.dense_until && self.points_per_decade > 0 {
            let base = self.dense_until.max(1) as f64;
            let mut k = 1u32;
            loop {
                let t =
                    (base * 10f64.powf(k as f64 / self.points_per_decade as f64)).round() as u64;
                if t >= horizon {
                    break;
                }
                if times.last().is_none_or(|&last| t > last) {
                    times.push(t);
                }
                k += 1;
            }
        }
        if times.last() != Some(&horizon) && horizon > 0 {
            times.push(horizon);
        }
        times
    }
}

fn default_spec_id() -> String {
    "spec".into()
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_spec_id")]
    pub spec_id: String,
    pub spec: GameSpec,
    pub case: Case,
    pub agent: AgentParams,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub cadence: Cadence,
    /// Permits running a learner outside its native information regime.
    #[serde(default)]
    pub allow_cross_pairing: bool,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.case == Case::C3 && !self.spec.is_case3() {
            self.spec.clone().into_case3()?;
        }
        let kind = self.agent.name();
        if kind != self.case.native_agent() && !self.allow_cross_pairing {
            return Err(Error::InvalidParam(format!(
                "agent {kind} does not match case {:?}; set allow_cross_pairing to override",
                self.case
            )));
        }
        if kind == "rla" && self.case != Case::C2 {
            return Err(Error::InvalidParam(
                "rla needs occupancy feedback, which only case C2 delivers".into(),
            ));
        }
        if kind == "rs" {
            self.spec.clone().into_case3()?;
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidParam("need at least one seed".into()));
        }
        make_agent(&self.agent, self.visible_info())?;
        Ok(())
    }

    fn visible_info(&self) -> VisibleInfo {
        VisibleInfo {
            num_channels: self.spec.num_channels(),
            num_users: match self.case {
                Case::C1 => None,
                Case::C2 | Case::C3 => Some(self.spec.num_users()),
            },
        }
    }
}

/// Reads a game spec from a TOML file holding either a bare spec or a full
/// experiment config, in which case its `[spec]` table is used.
pub fn load_spec(path: &Path) -> Result<GameSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config_err = |message: String| Error::Config {
        path: path.to_path_buf(),
        message,
    };
    let mut value: toml::Table = toml::from_str(&text).map_err(|e| config_err(e.to_string()))?;
    let table = match value.remove("spec") {
        Some(toml::Value::Table(spec)) => spec,
        Some(_) => return Err(config_err("`spec` must be a table".into())),
        None => value,
    };
    GameSpec::deserialize(toml::Value::Table(table)).map_err(|e| config_err(e.to_string()))
}

/// Simulates `config.horizon` synchronous rounds from `seed`.
///
/// The environment and every agent draw from independent ChaCha streams of
/// the same seed, so a run is a pure function of `(config, seed)`. One rate
/// per channel is drawn per round and shared by everyone on that channel.
pub fn run_once(config: &ExperimentConfig, seed: u64) -> Result<RunTrace> {
    let spec = &config.spec;
    let (m, n) = (spec.num_users(), spec.num_channels());
    let info = config.visible_info();
    let mut agents = (0..m)
        .map(|_| make_agent(&config.agent, info))
        .collect::<Result<Vec<_>>>()?;
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent_rngs: Vec<ChaCha8Rng> = (0..m)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i as u64 + 1);
            r
        })
        .collect();

    let mut trace = RunTrace::new(seed, config.spec_id.clone(), m, n);
    let mut profile = ActionProfile(vec![0; m]);
    let mut explored = vec![false; m];
    for t in 1..=config.horizon {
        for (i, (agent, rng)) in agents.iter_mut().zip(&mut agent_rngs).enumerate() {
            profile.0[i] = agent.act(t, rng);
            explored[i] = agent.explored();
        }
        let occupancy = profile.occupancy(n);
        let rates = sample_rates(spec, &mut env_rng);
        let payoffs = realized_payoffs(spec, &profile, &rates);
        for (i, agent) in agents.iter_mut().enumerate() {
            let occ = (config.case == Case::C2).then(|| occupancy.0[profile.0[i]]);
            agent.observe(&Feedback {
                payoff: payoffs[i],
                occupancy: occ,
            })?;
        }
        trace.push(
            occupancy.counts(),
            payoffs.iter().sum(),
            social_welfare(spec, &occupancy),
            &explored,
        );
    }
    Ok(trace)
}

/// Per-seed reduction of a trace, sampled at the batch's output times.
#[derive(Clone, Debug, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub regret_expected: Vec<f64>,
    pub regret_realized: Vec<f64>,
    pub frac_optimal: Vec<f64>,
    /// Fraction of optimal steps over `n/10 < t <= n`.
    pub frac_optimal_final_decade: f64,
    /// First step from which the optimum is held to the horizon.
    pub hold_time: Option<usize>,
    /// Rounds in which at least one user explored.
    pub exploration_rounds: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct BatchResult {
    pub spec_id: String,
    pub agent: String,
    pub horizon: u64,
    pub v_star: f64,
    pub times: Vec<u64>,
    pub seeds: Vec<SeedResult>,
    pub mean_regret_expected: Vec<f64>,
    pub std_regret_expected: Vec<f64>,
    pub mean_regret_realized: Vec<f64>,
    pub std_regret_realized: Vec<f64>,
    pub mean_frac_optimal: Vec<f64>,
    pub std_frac_optimal: Vec<f64>,
    /// Slope of log mean expected regret over the trailing half of the horizon.
    pub exponent: Option<f64>,
    pub mean_frac_optimal_final_decade: f64,
    pub mean_hold_time: Option<f64>,
    pub mean_exploration_rounds: f64,
}

fn mean_std(columns: &[&[f64]], idx: usize) -> (f64, f64) {
    let k = columns.len() as f64;
    let mean = columns.iter().map(|c| c[idx]).sum::<f64>() / k;
    if columns.len() < 2 {
        return (mean, 0.0);
    }
    let var = columns.iter().map(|c| (c[idx] - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt())
}

/// Runs every seed (in parallel), reduces each trace, and aggregates.
pub fn run_batch(config: &ExperimentConfig) -> Result<BatchResult> {
    config.validate()?;
    let v_star = socially_optimal(&config.spec)?.v_star;
    let times = config.cadence.sample_times(config.horizon);
    let seeds = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let trace = run_once(config, seed)?;
            let curve = regret(&trace, v_star);
            let pick = |v: &[f64]| times.iter().map(|&t| v[t as usize - 1]).collect::<Vec<_>>();
            let n = trace.len();
            Ok(SeedResult {
                seed,
                regret_expected: pick(&curve.regret_expected),
                regret_realized: pick(&curve.regret_realized),
                frac_optimal: pick(&curve.frac_optimal),
                frac_optimal_final_decade: trace.fraction_optimal_after(v_star, n / 10),
                hold_time: trace.hold_time(v_star),
                exploration_rounds: (0..n).filter(|&i| trace.explorers(i) > 0).count(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let column = |f: fn(&SeedResult) -> &Vec<f64>| -> (Vec<f64>, Vec<f64>) {
        let cols: Vec<&[f64]> = seeds.iter().map(|s| f(s).as_slice()).collect();
        (0..times.len()).map(|i| mean_std(&cols, i)).unzip()
    };
    let (mean_regret_expected, std_regret_expected) = column(|s| &s.regret_expected);
    let (mean_regret_realized, std_regret_realized) = column(|s| &s.regret_realized);
    let (mean_frac_optimal, std_frac_optimal) = column(|s| &s.frac_optimal);

    let tf: Vec<f64> = times.iter().map(|&t| t as f64).collect();
    let exponent = exponent_fit(&tf, &mean_regret_expected, config.horizon as f64 / 2.0).ok();
    let k = seeds.len() as f64;
    let mean_hold_time = seeds
        .iter()
        .map(|s| s.hold_time.map(|t| t as f64))
        .sum::<Option<f64>>()
        .map(|s| s / k);

    Ok(BatchResult {
        spec_id: config.spec_id.clone(),
        agent: config.agent.name().to_string(),
        horizon: config.horizon,
        v_star,
        mean_frac_optimal_final_decade: seeds
            .iter()
            .map(|s| s.frac_optimal_final_decade)
            .sum::<f64>()
            / k,
        mean_exploration_rounds: seeds
            .iter()
            .map(|s| s.exploration_rounds as f64)
            .sum::<f64>()
            / k,
        mean_hold_time,
        exponent,
        times,
        seeds,
        mean_regret_expected,
        std_regret_expected,
        mean_regret_realized,
        std_regret_realized,
        mean_frac_optimal,
        std_frac_optimal,
    })
}

pub const CURVE_HEADER: [&str; 7] = [
    "t",
    "regret_expected",
    "regret_expected_std",
    "regret_realized",
    "regret_realized_std",
    "frac_optimal",
    "frac_optimal_std",
];

pub const SEED_CURVE_HEADER: [&str; 4] =
    ["t", "regret_expected", "regret_realized", "frac_optimal"];

/// One `{"key": ..., "value": ...}` object per line.
pub fn write_jsonl<W: Write>(
    out: &mut W,
    records: &[(&str, serde_json::Value)],
) -> std::io::Result<()> {
    for (key, value) in records {
        let line = serde_json::json!({ "key": key, "value": value });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

impl BatchResult {
    pub fn summary_records(&self) -> Vec<(&'static str, serde_json::Value)> {
        use serde_json::json;
        vec![
            ("spec_id", json!(self.spec_id)),
            ("agent", json!(self.agent)),
            ("horizon", json!(self.horizon)),
            (
                "seeds",
                json!(self.seeds.iter().map(|s| s.seed).collect::<Vec<_>>()),
            ),
            ("v_star", json!(self.v_star)),
            (
                "final_regret_expected",
                json!(self.mean_regret_expected.last()),
            ),
            (
                "final_regret_realized",
                json!(self.mean_regret_realized.last()),
            ),
            ("exponent", json!(self.exponent)),
            (
                "frac_optimal_final_decade",
                json!(self.mean_frac_optimal_final_decade),
            ),
            ("mean_hold_time", json!(self.mean_hold_time)),
            (
                "mean_exploration_rounds",
                json!(self.mean_exploration_rounds),
            ),
        ]
    }

    /// Writes `curve.csv`, `summary.jsonl` and `seeds/seed_<seed>.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let seeds_dir = dir.join("seeds");
        fs::create_dir_all(&seeds_dir).map_err(|e| Error::io(&seeds_dir, e))?;

        let curve_path = dir.join("curve.csv");
        let csv_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| Error::Csv { path, source }
        };
        let mut w = csv::Writer::from_path(&curve_path).map_err(csv_err(&curve_path))?;
        w.write_record(CURVE_HEADER).map_err(csv_err(&curve_path))?;
        for (i, t) in self.times.iter().enumerate() {
            w.write_record([
                t.to_string(),
                self.mean_regret_expected[i].to_string(),
                self.std_regret_expected[i].to_string(),
                self.mean_regret_realized[i].to_string(),
                self.std_regret_realized[i].to_string(),
                self.mean_frac_optimal[i].to_string(),
                self.std_frac_optimal[i].to_string(),
            ])
            .map_err(csv_err(&curve_path))?;
        }
        w.flush().map_err(|e| Error::io(&curve_path, e))?;

        for s in &self.seeds {
            let path = seeds_dir.join(format!("seed_{}.csv", s.seed));
            let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
            w.write_record(SEED_CURVE_HEADER).map_err(csv_err(&path))?;
            for (i, t) in self.times.iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    s.regret_expected[i].to_string(),
                    s.regret_realized[i].to_string(),
                    s.frac_optimal[i].to_string(),
                ])
                .map_err(csv_err(&path))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }

        let summary_path = dir.join("summary.jsonl");
        let mut f = fs::File::create(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
        write_jsonl(&mut f, &self.summary_records()).map_err(|e| Error::io(&summary_path, e))?;
        Ok(())
    }
}
