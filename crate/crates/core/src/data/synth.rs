//! Seeded synthetic trajectory corpus.
//!
//! Every task draws one parameter tuple; its episodes re-render that tuple
//! with a small Gaussian jitter on each parameter. Arm dimensions follow
//! either a sum of sinusoids or a chain of minimum-jerk point-to-point moves;
//! an optional last dimension is a binary gripper command.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;
use core::str::FromStr;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, Episode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Family {
    Sinusoid,
    MinJerk,
    Gripper,
}

impl FromStr for Family {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sinusoid" => Ok(Self::Sinusoid),
            "min_jerk" => Ok(Self::MinJerk),
            "gripper" => Ok(Self::Gripper),
            other => Err(DataError::UnknownFamily(other.into())),
        }
    }
}

/// Closed interval `[lo, hi]` a task parameter is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..self.hi)
        } else {
            self.lo
        }
    }

    fn check(&self, name: &str) -> Result<(), DataError> {
        if self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi {
            Ok(())
        } else {
            Err(DataError::InvalidArgument(format!(
                "range {name} = [{}, {}] is not a valid interval",
                self.lo, self.hi
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamRanges {
    /// Number of sinusoids per arm dimension.
    pub components: (usize, usize),
    pub amplitude: Range,
    /// Hz; kept below 2.
    pub frequency: Range,
    /// Position of each min-jerk waypoint.
    pub waypoint: Range,
    /// Seconds per min-jerk segment.
    pub segment: Range,
    /// Seconds between gripper switches.
    pub gripper_hold: Range,
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            components: (1, 4),
            amplitude: Range::new(0.1, 1.0),
            frequency: Range::new(0.05, 1.95),
            waypoint: Range::new(-1.0, 1.0),
            segment: Range::new(0.4, 1.6),
            gripper_hold: Range::new(0.3, 2.0),
        }
    }
}

/// What to generate. Family names: `sinusoid`, `min_jerk`, `gripper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub families: Vec<String>,
    pub tasks: usize,
    pub episodes_per_task: usize,
    /// Steps per episode (`T`).
    pub steps: usize,
    /// Action dimensions (`S`).
    pub dims: usize,
    pub dt: f64,
    /// Standard deviation of the per-episode parameter jitter.
    pub noise_std: f64,
    pub ranges: ParamRanges,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            families: vec!["sinusoid".into(), "min_jerk".into(), "gripper".into()],
            tasks: 820,
            episodes_per_task: 2,
            steps: 96,
            dims: 7,
            dt: 1.0 / 30.0,
            noise_std: 0.01,
            ranges: ParamRanges::default(),
        }
    }
}

impl CorpusSpec {
    /// Parsed family list, rejecting unknown names and empty lists.
    pub fn parsed_families(&self) -> Result<Vec<Family>, DataError> {
        let mut out: Vec<Family> = self.families.iter().map(|f| f.parse()).collect::<Result<_, _>>()?;
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(DataError::Empty("generator families"));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        self.parsed_families()?;
        if self.tasks == 0 || self.episodes_per_task == 0 || self.steps == 0 || self.dims == 0 {
            return Err(DataError::InvalidArgument(
                "tasks, episodes_per_task, steps and dims must be positive".into(),
            ));
        }
        if !(self.dt > 0.0) || !(self.noise_std >= 0.0) {
            return Err(DataError::InvalidArgument(format!(
                "dt {} must be positive and noise_std {} non-negative",
                self.dt, self.noise_std
            )));
        }
        let r = &self.ranges;
        if r.components.0 == 0 || r.components.0 > r.components.1 {
            return Err(DataError::InvalidArgument(format!(
                "components range {:?} is invalid",
                r.components
            )));
        }
        r.amplitude.check("amplitude")?;
        r.frequency.check("frequency")?;
        r.waypoint.check("waypoint")?;
        r.segment.check("segment")?;
        r.gripper_hold.check("gripper_hold")?;
        if r.segment.lo <= 0.0 || r.gripper_hold.lo <= 0.0 {
            return Err(DataError::InvalidArgument(
                "segment and gripper_hold durations must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One sinusoidal component `amplitude * sin(2 pi frequency t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

/// Per-dimension signal parameters of one task.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    Sinusoids(Vec<Sinusoid>),
    /// Waypoint positions at the given knot times (seconds, increasing from 0).
    MinJerk {
        knots: Vec<f64>,
        positions: Vec<f64>,
    },
    /// Starts at `initial` and flips sign at each switch time.
    Gripper {
        initial: f64,
        switches: Vec<f64>,
    },
}

/// Quintic minimum-jerk blend from `x0` to `x1` over `duration`, evaluated at `s`.
pub fn min_jerk(x0: f64, x1: f64, duration: f64, s: f64) -> f64 {
    let tau = (s / duration).clamp(0.0, 1.0);
    let blend = tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
    x0 + (x1 - x0) * blend
}

impl Signal {
    pub fn eval(&self, time: f64) -> f64 {
        match self {
            Signal::Sinusoids(comps) => comps
                .iter()
                .map(|c| c.amplitude * Float::sin(TAU * c.frequency * time + c.phase))
                .sum(),
            Signal::MinJerk { knots, positions } => {
                let seg = knots.partition_point(|&k| k <= time).clamp(1, knots.len() - 1) - 1;
                let (t0, t1) = (knots[seg], knots[seg + 1]);
                min_jerk(positions[seg], positions[seg + 1], t1 - t0, time - t0)
            }
            Signal::Gripper { initial, switches } => {
                let flips = switches.partition_point(|&s| s <= time);
                if flips % 2 == 0 {
                    *initial
                } else {
                    -*initial
                }
            }
        }
    }

    fn jittered(&self, rng: &mut ChaCha8Rng, sigma: f64) -> Signal {
        let mut noise = || -> f64 { sigma * rng.sample::<f64, _>(StandardNormal) };
        match self {
            Signal::Sinusoids(comps) => Signal::Sinusoids(
                comps
                    .iter()
                    .map(|c| Sinusoid {
                        amplitude: c.amplitude + noise(),
                        frequency: c.frequency + noise(),
                        phase: c.phase + noise(),
                    })
                    .collect(),
            ),
            Signal::MinJerk { knots, positions } => {
                // Keep knots strictly increasing after jitter.
                let mut out: Vec<f64> = Vec::with_capacity(knots.len());
                for (i, &k) in knots.iter().enumerate() {
                    let k = if i == 0 { k } else { k + noise() };
                    let k = match out.last() {
                        Some(&prev) => k.max(prev + 1e-3),
                        None => k,
                    };
                    out.push(k);
                }
                Signal::MinJerk {
                    knots: out,
                    positions: positions.iter().map(|p| p + noise()).collect(),
                }
            }
            Signal::Gripper { initial, switches } => {
                let mut s: Vec<f64> = switches.iter().map(|s| s + noise()).collect();
                s.sort_by(f64::total_cmp);
                Signal::Gripper {
                    initial: *initial,
                    switches: s,
                }
            }
        }
    }
}

/// The parameter tuple fixed by one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskParams {
    pub task_id: String,
    pub family: Family,
    pub signals: Vec<Signal>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn knot_times(rng: &mut ChaCha8Rng, segment: Range, span: f64) -> Vec<f64> {
    let mut knots = vec![0.0];
    while *knots.last().unwrap() < span {
        let next = knots.last().unwrap() + segment.sample(rng);
        knots.push(next);
    }
    knots
}

/// Draws the parameter tuple of every task.
pub fn generate_task_params(spec: &CorpusSpec, seed: u64) -> Result<Vec<TaskParams>, DataError> {
    spec.validate()?;
    let families = spec.parsed_families()?;
    let has_gripper = families.contains(&Family::Gripper);
    let arm: Vec<Family> = families.iter().copied().filter(|f| *f != Family::Gripper).collect();
    let span = spec.steps as f64 * spec.dt;
    let r = &spec.ranges;
    let width = format!("{}", spec.tasks.saturating_sub(1)).len();

    let mut tasks = Vec::with_capacity(spec.tasks);
    for t in 0..spec.tasks {
        let mut rng = stream_rng(seed, (t as u64) << 32);
        let family = if arm.is_empty() {
            Family::Gripper
        } else {
            arm[t % arm.len()]
        };
        let gripper_dims = if arm.is_empty() {
            spec.dims
        } else if has_gripper && spec.dims >= 2 {
            1
        } else {
            0
        };
        let arm_dims = spec.dims - gripper_dims;
        let mut signals = Vec::with_capacity(spec.dims);
        match family {
            Family::Sinusoid => {
                for _ in 0..arm_dims {
                    let n = rng.random_range(r.components.0..=r.components.1);
                    let comps = (0..n)
                        .map(|_| Sinusoid {
                            amplitude: r.amplitude.sample(&mut rng),
                            frequency: r.frequency.sample(&mut rng),
                            phase: rng.random_range(0.0..TAU),
                        })
                        .collect();
                    signals.push(Signal::Sinusoids(comps));
                }
            }
            Family::MinJerk => {
                // All arm dimensions move between waypoints together.
                let knots = knot_times(&mut rng, r.segment, span);
                for _ in 0..arm_dims {
                    let positions = knots.iter().map(|_| r.waypoint.sample(&mut rng)).collect();
                    signals.push(Signal::MinJerk {
                        knots: knots.clone(),
                        positions,
                    });
                }
            }
            Family::Gripper => {}
        }
        for _ in 0..gripper_dims {
            let initial = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mut switches = Vec::new();
            let mut at = r.gripper_hold.sample(&mut rng) * rng.random_range(0.0..1.0);
            while at < span {
                switches.push(at);
                at += r.gripper_hold.sample(&mut rng);
            }
            signals.push(Signal::Gripper { initial, switches });
        }
        tasks.push(TaskParams {
            task_id: format!("task-{t:0width$}"),
            family,
            signals,
        });
    }
    Ok(tasks)
}

/// Renders `episodes_per_task` jittered episodes for every task. A pure
/// function of `(spec, seed)`.
pub fn generate_synthetic_corpus(spec: &CorpusSpec, seed: u64) -> Result<Vec<Episode>, DataError> {
    let tasks = generate_task_params(spec, seed)?;
    let mut episodes = Vec::with_capacity(tasks.len() * spec.episodes_per_task);
    for (t, task) in tasks.iter().enumerate() {
        for e in 0..spec.episodes_per_task {
            let mut rng = stream_rng(seed, ((t as u64) << 32) | (e as u64 + 1));
            let signals: Vec<Signal> = task
                .signals
                .iter()
                .map(|s| s.jittered(&mut rng, spec.noise_std))
                .collect();
            let states = (0..spec.steps)
                .map(|k| {
                    let time = k as f64 * spec.dt;
                    signals.iter().map(|s| s.eval(time)).collect()
                })
                .collect();
            episodes.push(Episode {
                task_id: task.task_id.clone(),
                dt: spec.dt,
                states,
            });
        }
    }
    Ok(episodes)
}
