//! Scenario evaluation, metric tables and the training ablation.

pub mod ablation;
pub mod metrics;
pub mod scenario;

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::baseline_hc::{HcConfig, HcController};
use crate::controller::{ActionMode, Controller, PolicyController, RandomGoalController, Stationary};
use crate::error::{Error, Result};
use crate::human_motion::TrajectoryLibrary;
use crate::planner::PlannerConfig;
use crate::rl::mlp::Mlp;
use crate::sim::{EpisodeConfig, EpisodeLog};

pub use metrics::{compute_metrics, emit_table, MetricsRow, TABLE_HEADER};
pub use scenario::{default_scenarios, find_scenario, run_scenario, HumanScript, Scenario, ScriptParams};

/// Recipe for a fresh controller, so every episode starts from scratch.
#[derive(Debug, Clone)]
pub enum ControllerSpec {
    Lbgp(Arc<Mlp>),
    E2e(Arc<Mlp>),
    Hc(HcConfig),
    Random,
    Stationary,
}

impl ControllerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerSpec::Lbgp(_) => "LBGP",
            ControllerSpec::E2e(_) => "E2E",
            ControllerSpec::Hc(_) => "HC",
            ControllerSpec::Random => "random",
            ControllerSpec::Stationary => "stationary",
        }
    }

    pub fn build(&self, planner: &PlannerConfig, dt: f64, seed: u64) -> Result<Box<dyn Controller>> {
        Ok(match self {
            ControllerSpec::Lbgp(actor) => Box::new(PolicyController::new((**actor).clone(), ActionMode::Goal, *planner)?),
            ControllerSpec::E2e(actor) => Box::new(PolicyController::new((**actor).clone(), ActionMode::Velocity, *planner)?),
            ControllerSpec::Hc(cfg) => Box::new(HcController::new(*cfg, *planner, dt)),
            ControllerSpec::Random => Box::new(RandomGoalController::new(*planner, seed ^ 0x5eed)),
            ControllerSpec::Stationary => Box::new(Stationary),
        })
    }
}

/// Shared inputs of an evaluation.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub episode: EpisodeConfig,
    pub planner: PlannerConfig,
    pub library: Arc<TrajectoryLibrary>,
    /// Discount for the discounted-reward column.
    pub gamma: f64,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub scenario: String,
    pub controller: String,
    pub seed: u64,
    pub log: EpisodeLog,
}

/// Runs every (scenario, controller, seed) combination, in parallel across
/// combinations, and returns one metrics row per (scenario, controller)
/// together with all episode logs in a fixed order.
pub fn run_suite(
    scenarios: &[Scenario],
    controllers: &[ControllerSpec],
    seeds: &[u64],
    ctx: &EvalContext,
) -> Result<(Vec<MetricsRow>, Vec<EpisodeResult>)> {
    if scenarios.is_empty() || controllers.is_empty() || seeds.is_empty() {
        return Err(Error::Empty("evaluation needs scenarios, controllers and seeds"));
    }
    let jobs: Vec<(usize, usize, u64)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(si, _)| {
            controllers
                .iter()
                .enumerate()
                .flat_map(move |(ci, _)| seeds.iter().map(move |s| (si, ci, *s)))
        })
        .collect();
    let threads = if ctx.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        ctx.threads
    }
    .min(jobs.len());
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<EpisodeLog>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(si, ci, seed)) = jobs.get(i) else { break };
                let result = controllers[ci]
                    .build(&ctx.planner, ctx.episode.dt, seed)
                    .and_then(|mut c| run_scenario(&scenarios[si], c.as_mut(), &ctx.episode, &ctx.library, seed));
                slots.lock()[i] = Some(result);
            });
        }
    });
    let mut episodes = Vec::with_capacity(jobs.len());
    for (slot, (si, ci, seed)) in slots.into_inner().into_iter().zip(&jobs) {
        let log = slot.expect("every job ran")?;
        episodes.push(EpisodeResult {
            scenario: scenarios[*si].name.clone(),
            controller: controllers[*ci].name().to_string(),
            seed: *seed,
            log,
        });
    }
    let mut rows = Vec::new();
    for sc in scenarios {
        for spec in controllers {
            let logs: Vec<EpisodeLog> = episodes
                .iter()
                .filter(|e| e.scenario == sc.name && e.controller == spec.name())
                .map(|e| e.log.clone())
                .collect();
            rows.push(compute_metrics(&sc.name, spec.name(), &logs, ctx.gamma)?);
        }
    }
    Ok((rows, episodes))
}

/// File name of one episode log inside the `logs` directory.
pub fn log_file_name(e: &EpisodeResult) -> String {
    format!("{}__{}__seed{}.csv", e.scenario, e.controller, e.seed)
}

/// Writes `metrics.csv` and `logs/<scenario>__<controller>__seed<n>.csv`
/// under `out_dir` and returns the table text.
pub fn write_eval_outputs(rows: &[MetricsRow], episodes: &[EpisodeResult], out_dir: &Path) -> Result<String> {
    let table = emit_table(rows)?;
    let logs = out_dir.join("logs");
    fs::create_dir_all(&logs)?;
    fs::write(out_dir.join("metrics.csv"), &table)?;
    for e in episodes {
        fs::write(logs.join(log_file_name(e)), e.log.to_text())?;
    }
    Ok(table)
}
