//! Learning-curve comparison of the goal policy with and without the
//! curriculum, and of the end-to-end velocity policy.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::controller::ActionMode;
use crate::error::{Error, Result};
use crate::rl::trainer::{train, CurriculumConfig, CurvePoint, TrainConfig, TrainSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Lbgp,
    LbgpNoCurriculum,
    E2e,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Lbgp, Variant::LbgpNoCurriculum, Variant::E2e];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Lbgp => "lbgp",
            Variant::LbgpNoCurriculum => "lbgp_no_curriculum",
            Variant::E2e => "e2e",
        }
    }

    /// Training configuration of this variant. Curriculum budgets shrink in
    /// proportion when `total_steps` is below the full-run default.
    pub fn config(self, base: &TrainConfig, total_steps: u64) -> TrainConfig {
        let full = TrainConfig::default().total_steps as f64;
        let scale = (total_steps as f64 / full).min(1.0);
        let mut curriculum = base.curriculum.clone();
        for b in curriculum.budgets.iter_mut() {
            *b = ((*b as f64) * scale).round().max(1.0) as u64;
        }
        curriculum.fixed_level = None;
        let (mode, curriculum) = match self {
            Variant::Lbgp => (ActionMode::Goal, curriculum),
            Variant::LbgpNoCurriculum => (ActionMode::Goal, CurriculumConfig::without_curriculum()),
            Variant::E2e => (ActionMode::Velocity, curriculum),
        };
        TrainConfig {
            mode,
            curriculum,
            total_steps,
            noise_decay_steps: base.noise_decay_steps.min(total_steps),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub seeds: Vec<u64>,
    pub total_steps: u64,
    /// Concurrent training runs; 0 uses every available core.
    pub threads: usize,
    /// Curve points in the final moving average.
    pub final_window: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3],
            total_steps: 60_000,
            threads: 0,
            final_window: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationRun {
    pub variant: Variant,
    pub seed: u64,
    pub curve: Vec<CurvePoint>,
    pub file: PathBuf,
}

pub const CURVE_HEADER: &str = "step,reward,std";

pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for p in curve {
        s.push_str(&format!("{},{:.6},{:.6}\n", p.step, p.reward, p.std));
    }
    s
}

/// Parses a curve file into (step, reward, std) rows, checking the header,
/// strictly increasing steps and non-negative spreads.
pub fn parse_curve(text: &str) -> Result<Vec<(u64, f64, f64)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CURVE_HEADER) {
        return Err(Error::Log("curve file lacks its header".into()));
    }
    let mut rows: Vec<(u64, f64, f64)> = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.trim().split(',').collect();
        let bad = || Error::Log(format!("curve line {}: {line:?}", i + 2));
        if f.len() != 3 {
            return Err(bad());
        }
        let step: u64 = f[0].parse().map_err(|_| bad())?;
        let reward: f64 = f[1].parse().map_err(|_| bad())?;
        let std: f64 = f[2].parse().map_err(|_| bad())?;
        if !reward.is_finite() || !(std >= 0.0) || rows.last().is_some_and(|r| r.0 >= step) {
            return Err(bad());
        }
        rows.push((step, reward, std));
    }
    Ok(rows)
}

/// Mean reward of the last `window` curve points.
pub fn final_moving_average(rewards: &[f64], window: usize) -> Option<f64> {
    if rewards.is_empty() {
        return None;
    }
    let tail = &rewards[rewards.len().saturating_sub(window.max(1))..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Trains every variant for every seed and writes one curve file per run,
/// named `<variant>_seed<seed>.csv`, into `out_dir`.
pub fn ablation_run(base: &TrainConfig, cfg: &AblationConfig, setup: &TrainSetup, out_dir: &Path) -> Result<Vec<AblationRun>> {
    if cfg.seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    fs::create_dir_all(out_dir)?;
    let jobs: Vec<(Variant, u64)> = Variant::ALL
        .iter()
        .flat_map(|v| cfg.seeds.iter().map(move |s| (*v, *s)))
        .collect();
    let threads = if cfg.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        cfg.threads
    }
    .min(jobs.len());
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<AblationRun>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(variant, seed)) = jobs.get(i) else { break };
                let run_cfg = variant.config(base, cfg.total_steps);
                let run_setup = TrainSetup { seed, ..setup.clone() };
                log::info!("ablation: training {} seed {seed}", variant.as_str());
                let result = train(&run_cfg, &run_setup).and_then(|(_, report)| {
                    let file = out_dir.join(format!("{}_seed{seed}.csv", variant.as_str()));
                    fs::write(&file, curve_to_csv(&report.curve))?;
                    Ok(AblationRun {
                        variant,
                        seed,
                        curve: report.curve,
                        file,
                    })
                });
                slots.lock()[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .into_iter()
        .map(|s| s.expect("every job ran"))
        .collect()
}
