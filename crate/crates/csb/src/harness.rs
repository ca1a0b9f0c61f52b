//! Episode driver, replicated experiment runner, metric aggregation, and
//! CSV export.

use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{CsbError, Result};
use crate::policies::{build_policy, Policy, PolicyParams};
use crate::sem_core::{
    draw_instantaneous_rewards, payoff, sem_output, EpisodeTrace, RegretOracle, RoundRecord,
    Scenario,
};

/// One experiment: a scenario, the policies to compare, and the seeding.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// `(registry name, parameter map)` per policy.
    pub policies: Vec<(String, PolicyParams)>,
    pub replications: usize,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.replications == 0 {
            return Err(CsbError::invalid("replications must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(CsbError::invalid("at least one policy is required"));
        }
        // Fail fast on unknown names/params before spawning work.
        for (name, params) in &self.policies {
            build_policy(name, params, &self.scenario)?;
        }
        Ok(())
    }
}

/// Graph-estimation error `|W - W_hat|_F^2 / K^2`.
pub fn mse(w_true: &DMatrix<f64>, w_hat: &DMatrix<f64>) -> Result<f64> {
    if w_true.shape() != w_hat.shape() {
        return Err(CsbError::invalid("mse: shape mismatch"));
    }
    let k = w_true.nrows() as f64;
    Ok((w_true - w_hat).norm_squared() / (k * k))
}

/// Environment and policy RNGs for one replication: independent streams
/// `2 rep` and `2 rep + 1` of the master seed, so the environment draw
/// sequence is identical across policies run with the same `(seed, rep)`.
pub fn episode_streams(master_seed: u64, rep: u64) -> (ChaCha12Rng, ChaCha12Rng) {
    let mut env = ChaCha12Rng::seed_from_u64(master_seed);
    env.set_stream(2 * rep);
    let mut pol = ChaCha12Rng::seed_from_u64(master_seed);
    pol.set_stream(2 * rep + 1);
    (env, pol)
}

/// Runs one episode of `scenario.horizon` rounds. The environment draws
/// every arm's instantaneous reward each round, so the reward tape does
/// not depend on the policy's choices.
pub fn run_episode(
    scenario: &Scenario,
    policy: &mut (dyn Policy + Send),
    master_seed: u64,
    rep: u64,
) -> Result<EpisodeTrace> {
    let (mut env_rng, mut policy_rng) = episode_streams(master_seed, rep);
    let oracle = RegretOracle::new(scenario)?;
    let mut trace = EpisodeTrace::with_capacity(scenario.horizon);
    for t in 1..=scenario.horizon {
        let dist = scenario.active_dist(t);
        let b = draw_instantaneous_rewards(&dist.means, dist.noise_scale, &mut env_rng);
        let graph = scenario.active_graph(t);

        let x = policy.select_action(t, &mut policy_rng)?;
        if x.len() != scenario.arm_count {
            return Err(CsbError::invalid("policy decision dimension mismatch"));
        }
        let fb = sem_output(graph, &b, &x)?;
        let pay = payoff(&scenario.interest_mask, &fb.y);
        let regret_increment = oracle.instantaneous_regret(t, &x)?;
        let events = policy.observe(t, &x, fb.z.as_slice(), fb.y.as_slice(), &mut policy_rng)?;
        let mse_now = policy
            .graph_estimate()
            .map(|w_hat| mse(graph.entries(), w_hat))
            .transpose()?;

        trace.records.push(RoundRecord {
            round: t,
            action: x,
            z: fb.z.as_slice().to_vec(),
            y: fb.y.as_slice().to_vec(),
            payoff: pay,
            regret_increment,
            detections: events.detections,
            restarted: events.restarted,
            graph_change: events.graph_change,
            gldg_active: events.gldg_active,
            mse: mse_now,
        });
    }
    Ok(trace)
}

/// Compact per-replication series kept for aggregation and CSV export;
/// sparse event columns avoid holding full traces for every replication.
#[derive(Debug, Clone)]
pub struct ReplicationSeries {
    pub policy: String,
    pub rep: usize,
    pub cum_regret: Vec<f64>,
    /// Per-round graph MSE; `None` for policies without an estimate.
    pub mse: Option<Vec<f64>>,
    /// `(round, fired arms)`.
    pub detections: Vec<(usize, Vec<usize>)>,
    /// `(round, restarted arms)`.
    pub restarts: Vec<(usize, Vec<usize>)>,
    /// Rounds at which a graph (re-)learning phase began, including the
    /// initial one.
    pub graph_relearns: Vec<usize>,
}

impl ReplicationSeries {
    pub fn from_trace(policy: &str, rep: usize, trace: &EpisodeTrace) -> Self {
        let mut cum_regret = Vec::with_capacity(trace.records.len());
        let mut acc = 0.0;
        let mut mse_series = Vec::new();
        let mut detections = Vec::new();
        let mut restarts = Vec::new();
        let mut graph_relearns = Vec::new();
        let mut in_gldg = false;
        for r in &trace.records {
            acc += r.regret_increment;
            cum_regret.push(acc);
            if let Some(m) = r.mse {
                mse_series.push(m);
            }
            if !r.detections.is_empty() {
                detections.push((r.round, r.detections.clone()));
            }
            if !r.restarted.is_empty() {
                restarts.push((r.round, r.restarted.clone()));
            }
            // A re-learn starts at the first round of each GLDG phase.
            if r.gldg_active && !in_gldg {
                graph_relearns.push(r.round);
            }
            in_gldg = r.gldg_active;
        }
        let mse = if mse_series.len() == trace.records.len() {
            Some(mse_series)
        } else {
            None
        };
        ReplicationSeries {
            policy: policy.to_string(),
            rep,
            cum_regret,
            mse,
            detections,
            restarts,
            graph_relearns,
        }
    }
}

/// One sparse event-log row.
#[derive(Debug, Clone)]
pub struct EventRecord {
    pub policy: String,
    pub rep: usize,
    pub round: usize,
    /// `detection`, `restart`, or `graph_relearn`.
    pub event_type: String,
    pub arms: Vec<usize>,
    /// Detection rounds since the attributed true change, when one exists.
    pub delay: Option<usize>,
}

/// Aggregated series of one policy over all replications.
#[derive(Debug, Clone)]
pub struct PolicyMetrics {
    pub policy: String,
    pub mean_cum_regret: Vec<f64>,
    /// Standard error of the mean per round; zero for one replication.
    pub se_cum_regret: Vec<f64>,
    pub mean_mse: Option<Vec<f64>>,
}

impl PolicyMetrics {
    pub fn final_mean_regret(&self) -> f64 {
        *self.mean_cum_regret.last().unwrap_or(&0.0)
    }

    pub fn final_se(&self) -> f64 {
        *self.se_cum_regret.last().unwrap_or(&0.0)
    }
}

/// Everything `run_experiment` produces: per-policy aggregates, the raw
/// per-replication series, and the event log.
#[derive(Debug, Clone)]
pub struct MetricsBundle {
    pub horizon: usize,
    pub per_policy: Vec<PolicyMetrics>,
    pub replications: Vec<ReplicationSeries>,
    pub events: Vec<EventRecord>,
}

impl MetricsBundle {
    pub fn policy(&self, name: &str) -> Option<&PolicyMetrics> {
        self.per_policy.iter().find(|p| p.policy == name)
    }
}

fn mean_and_se(series: &[&Vec<f64>], t: usize) -> (f64, f64) {
    let n = series.len() as f64;
    let mean = series.iter().map(|s| s[t]).sum::<f64>() / n;
    if series.len() < 2 {
        return (mean, 0.0);
    }
    let var = series.iter().map(|s| (s[t] - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Attributes a detection to the most recent preceding true distribution
/// change affecting any arm of the restarted set.
fn attribute_delay(
    scenario: &Scenario,
    round: usize,
    restarted: &[usize],
) -> Option<usize> {
    scenario
        .dist_change_events()
        .iter()
        .rev()
        .find(|(start, groups)| {
            *start <= round
                && restarted
                    .iter()
                    .any(|&arm| groups.contains(&scenario.group_of(arm)))
        })
        .map(|(start, _)| round - start)
}

fn events_of(scenario: &Scenario, series: &ReplicationSeries) -> Vec<EventRecord> {
    let mut events = Vec::new();
    let mut push = |round: usize, event_type: &str, arms: Vec<usize>, delay: Option<usize>| {
        events.push(EventRecord {
            policy: series.policy.clone(),
            rep: series.rep,
            round,
            event_type: event_type.to_string(),
            arms,
            delay,
        });
    };
    for (round, arms) in &series.detections {
        // Delay is measured against the whole restarted set of the round.
        let restarted = series
            .restarts
            .iter()
            .find(|(r, _)| r == round)
            .map(|(_, a)| a.as_slice())
            .unwrap_or(arms.as_slice());
        let delay = attribute_delay(scenario, *round, restarted);
        push(*round, "detection", arms.clone(), delay);
    }
    for (round, arms) in &series.restarts {
        push(*round, "restart", arms.clone(), None);
    }
    for &round in &series.graph_relearns {
        push(round, "graph_relearn", Vec::new(), None);
    }
    events.sort_by_key(|e| (e.round, e.event_type.clone()));
    events
}

fn run_jobs(config: &ExperimentConfig) -> Result<Vec<ReplicationSeries>> {
    let jobs: Vec<(usize, usize)> = (0..config.policies.len())
        .flat_map(|p| (0..config.replications).map(move |r| (p, r)))
        .collect();
    let mut results = jobs
        .into_par_iter()
        .map(|(p, rep)| {
            let (name, params) = &config.policies[p];
            let mut policy = build_policy(name, params, &config.scenario)?;
            let trace = run_episode(
                &config.scenario,
                policy.as_mut(),
                config.master_seed,
                rep as u64,
            )?;
            Ok(((p, rep), ReplicationSeries::from_trace(name, rep, &trace)))
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|(key, _)| *key);
    Ok(results.into_iter().map(|(_, s)| s).collect())
}

/// Runs every `(policy, replication)` pair, concurrently when a rayon
/// pool is available. `CSB_THREADS` caps the worker count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsBundle> {
    config.validate()?;
    let threads = std::env::var("CSB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1);
    let replications = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CsbError::invalid(format!("thread pool: {e}")))?
            .install(|| run_jobs(config)),
        None => run_jobs(config),
    }?;

    let mut per_policy = Vec::new();
    for (name, _) in &config.policies {
        let reps: Vec<&ReplicationSeries> = replications
            .iter()
            .filter(|s| &s.policy == name)
            .collect();
        let regrets: Vec<&Vec<f64>> = reps.iter().map(|s| &s.cum_regret).collect();
        let mut mean_cum_regret = Vec::with_capacity(config.scenario.horizon);
        let mut se_cum_regret = Vec::with_capacity(config.scenario.horizon);
        for t in 0..config.scenario.horizon {
            let (m, se) = mean_and_se(&regrets, t);
            mean_cum_regret.push(m);
            se_cum_regret.push(se);
        }
        let mse_series: Vec<&Vec<f64>> = reps.iter().filter_map(|s| s.mse.as_ref()).collect();
        let mean_mse = (mse_series.len() == reps.len() && !reps.is_empty()).then(|| {
            (0..config.scenario.horizon)
                .map(|t| mean_and_se(&mse_series, t).0)
                .collect()
        });
        per_policy.push(PolicyMetrics {
            policy: name.clone(),
            mean_cum_regret,
            se_cum_regret,
            mean_mse,
        });
    }

    let events = replications
        .iter()
        .flat_map(|s| events_of(&config.scenario, s))
        .collect();

    Ok(MetricsBundle {
        horizon: config.scenario.horizon,
        per_policy,
        replications,
        events,
    })
}

fn join_arms(arms: &[usize]) -> String {
    // 1-based in external artifacts, matching the scenario JSON.
    arms.iter()
        .map(|a| (a + 1).to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Per-round CSV: `policy,rep,t,cum_regret,mse,detections,restarted_arms,
/// graph_relearn`, one row per round per policy per replication.
pub fn write_round_csv<W: std::io::Write>(out: W, series: &[ReplicationSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "policy",
        "rep",
        "t",
        "cum_regret",
        "mse",
        "detections",
        "restarted_arms",
        "graph_relearn",
    ])?;
    for s in series {
        let mut det = s.detections.iter().peekable();
        let mut res = s.restarts.iter().peekable();
        let mut relearn = s.graph_relearns.iter().peekable();
        for (i, &r) in s.cum_regret.iter().enumerate() {
            let t = i + 1;
            let d = match det.peek() {
                Some((round, arms)) if *round == t => {
                    let cell = join_arms(arms);
                    det.next();
                    cell
                }
                _ => String::new(),
            };
            let rs = match res.peek() {
                Some((round, arms)) if *round == t => {
                    let cell = join_arms(arms);
                    res.next();
                    cell
                }
                _ => String::new(),
            };
            let gl = match relearn.peek() {
                Some(&&round) if round == t => {
                    relearn.next();
                    "1"
                }
                _ => "0",
            };
            let mse_cell = s
                .mse
                .as_ref()
                .map(|m| format!("{:.9}", m[i]))
                .unwrap_or_default();
            w.write_record([
                s.policy.as_str(),
                &s.rep.to_string(),
                &t.to_string(),
                &format!("{r:.9}"),
                &mse_cell,
                &d,
                &rs,
                gl,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Aggregated CSV: `policy,t,mean_cum_regret,se_cum_regret,mean_mse`.
pub fn write_aggregate_csv<W: std::io::Write>(out: W, bundle: &MetricsBundle) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["policy", "t", "mean_cum_regret", "se_cum_regret", "mean_mse"])?;
    for p in &bundle.per_policy {
        for t in 0..bundle.horizon {
            let mse_cell = p
                .mean_mse
                .as_ref()
                .map(|m| format!("{:.9}", m[t]))
                .unwrap_or_default();
            w.write_record([
                p.policy.as_str(),
                &(t + 1).to_string(),
                &format!("{:.9}", p.mean_cum_regret[t]),
                &format!("{:.9}", p.se_cum_regret[t]),
                &mse_cell,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Event-log CSV: `policy,rep,t,event_type,arms`.
pub fn write_event_csv<W: std::io::Write>(out: W, events: &[EventRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["policy", "rep", "t", "event_type", "arms"])?;
    for e in events {
        w.write_record([
            e.policy.as_str(),
            &e.rep.to_string(),
            &e.round.to_string(),
            &e.event_type,
            &join_arms(&e.arms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes through a temporary sibling file and renames, so failures never
/// leave a partial file at `path`.
pub fn write_file_atomic(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buffer = Vec::new();
    write(&mut buffer)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&buffer)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
