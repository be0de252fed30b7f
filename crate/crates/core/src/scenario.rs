//! Scenario files: one TOML document describing a complete run, plus the
//! runner that writes every requested output into a directory.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorConfig, Trajectory};
use crate::metrics::{detect_desync_spread, detect_sync, measure_wave_speed, order_parameter, phase_spread};
use crate::model::{coupling_strength, KappaMode, ModelSpec, PhaseState};
use crate::noise::{DelayEvent, DelaySpec, EventList, NoiseSpec};
use crate::output;
use crate::potential::PotentialKind;
use crate::topology::{Boundary, DistanceSet, Topology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: usize,
    pub t_comp: f64,
    pub t_comm: f64,
    #[serde(default = "default_beta")]
    pub protocol_beta: u8,
    #[serde(default)]
    pub kappa_mode: KappaMode,
    pub potential: PotentialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq_offsets: Option<Vec<f64>>,
}

fn default_beta() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySection {
    Distances {
        distances: Vec<i64>,
        #[serde(default)]
        boundary: Boundary,
    },
    AllToAll,
    /// Edge-list file, relative paths resolved against the scenario file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    #[default]
    Synchronized,
    /// Phases drawn uniformly from `[0, spread]`.
    Desynchronized { spread: f64, seed: u64 },
    Explicit { phases: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSelection {
    #[serde(default = "yes")]
    pub phases: bool,
    #[serde(default = "yes")]
    pub phase_diffs: bool,
    #[serde(default)]
    pub potentials: bool,
    #[serde(default)]
    pub circle_snapshots: Vec<f64>,
    #[serde(default = "yes")]
    pub summary: bool,
    /// Synchronization threshold in radians.
    #[serde(default = "default_sync_eps")]
    pub sync_eps: f64,
    /// Sync must hold this long; ten iterations when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sync_window: Option<f64>,
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
    #[serde(default = "default_wave_threshold")]
    pub wave_threshold: f64,
}

fn yes() -> bool {
    true
}
fn default_sync_eps() -> f64 {
    1e-3
}
fn default_tail() -> f64 {
    0.1
}
fn default_wave_threshold() -> f64 {
    0.01
}

impl Default for OutputSelection {
    fn default() -> Self {
        Self {
            phases: true,
            phase_diffs: true,
            potentials: false,
            circle_snapshots: Vec::new(),
            summary: true,
            sync_eps: default_sync_eps(),
            sync_window: None,
            tail_fraction: default_tail(),
            wave_threshold: default_wave_threshold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub model: ModelSection,
    pub topology: TopologySection,
    pub integrator: IntegratorConfig,
    #[serde(default, skip_serializing_if = "NoiseSpec::is_none")]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub delay: DelaySpec,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default, skip_serializing_if = "EventList::is_empty")]
    pub events: EventList,
    #[serde(default)]
    pub outputs: OutputSelection,
}

/// Everything needed to call the integrator.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub spec: ModelSpec,
    pub init: PhaseState,
    pub events: EventList,
    pub config: IntegratorConfig,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0);
            Error::Parse { line, msg: e.message().to_string() }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario is always serializable")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::from_toml(&text)
    }

    pub fn build_topology(&self, base_dir: &Path) -> Result<Topology> {
        match &self.topology {
            TopologySection::Distances { distances, boundary } => {
                Topology::build_from_distances(self.model.n, &DistanceSet::new(distances.clone(), *boundary))
            }
            TopologySection::AllToAll => Topology::build_all_to_all(self.model.n),
            TopologySection::File { path } => {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                Topology::load_from_file(&full).map_err(|e| match e {
                    Error::Io(io) => Error::Config(format!("topology.path {}: {io}", full.display())),
                    other => other,
                })
            }
        }
    }

    /// Validates the scenario and resolves it into integrator inputs.
    pub fn prepare(&self, base_dir: &Path) -> Result<PreparedRun> {
        let m = &self.model;
        if m.n < 1 {
            return Err(Error::Config("model.n must be at least 1".into()));
        }
        let topology = self.build_topology(base_dir)?;
        let spec = ModelSpec {
            n: m.n,
            t_comp: m.t_comp,
            t_comm: m.t_comm,
            protocol_beta: m.protocol_beta,
            kappa_mode: m.kappa_mode,
            potential: m.potential,
            topology,
            local_noise: self.noise.clone(),
            interaction_delay: self.delay,
            freq_offsets: m.freq_offsets.clone(),
            kappa: m.kappa,
            coupling: m.coupling,
        };
        spec.validate()?;
        coupling_strength(&spec)?;
        self.integrator.validate()?;
        self.events.validate(m.n, self.integrator.t_end)?;
        let o = &self.outputs;
        if !(o.sync_eps > 0.0) || !(o.tail_fraction > 0.0 && o.tail_fraction <= 1.0) || !(o.wave_threshold > 0.0) {
            return Err(Error::Config("outputs.sync_eps, tail_fraction and wave_threshold must be positive".into()));
        }
        if let Some(&bad) = o.circle_snapshots.iter().find(|&&t| !(0.0..=self.integrator.t_end).contains(&t)) {
            return Err(Error::Config(format!("outputs.circle_snapshots time {bad} outside [0, t_end]")));
        }
        let theta = match &self.initial {
            InitialCondition::Synchronized => vec![0.0; m.n],
            InitialCondition::Desynchronized { spread, seed } => {
                if !(*spread >= 0.0 && spread.is_finite()) {
                    return Err(Error::Config(format!("initial.spread must be non-negative, got {spread}")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..m.n).map(|_| rng.random::<f64>() * spread).collect()
            }
            InitialCondition::Explicit { phases } => {
                if phases.len() != m.n {
                    return Err(Error::Config(format!("initial.phases has {} entries, expected {}", phases.len(), m.n)));
                }
                phases.clone()
            }
        };
        Ok(PreparedRun { spec, init: PhaseState::new(0.0, theta), events: self.events.clone(), config: self.integrator })
    }
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub t_end: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, scenario: &mut Scenario) {
        if let Some(seed) = self.seed {
            scenario.integrator.seed = seed;
        }
        if let Some(t_end) = self.t_end {
            scenario.integrator.t_end = t_end;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WaveSummary {
    pub source: usize,
    pub speed: f64,
    pub r_squared: f64,
    pub reached: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpreadSummary {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub n: usize,
    pub t_end: f64,
    pub coupling_strength: f64,
    pub resync_time: Option<f64>,
    pub desync_spread: Option<SpreadSummary>,
    pub desync_fixed_point: Option<f64>,
    pub wave: Option<WaveSummary>,
    pub order_parameter_start: f64,
    pub order_parameter_end: f64,
    pub final_phase_spread: f64,
    pub events_applied: usize,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
}

pub fn summarize(scenario: &Scenario, traj: &Trajectory) -> Result<RunSummary> {
    let o = &scenario.outputs;
    let window = o.sync_window.unwrap_or(10.0 * traj.spec.period());
    let wave = traj.events_applied.first().and_then(|ev| {
        let src = ev.event.process;
        measure_wave_speed(traj, src, o.wave_threshold)
            .ok()
            .map(|w| WaveSummary { source: src, speed: w.speed, r_squared: w.r_squared, reached: w.reached() })
    });
    Ok(RunSummary {
        name: scenario.name.clone(),
        n: traj.n(),
        t_end: traj.t_end(),
        coupling_strength: coupling_strength(&traj.spec)?,
        resync_time: detect_sync(traj, o.sync_eps, window),
        desync_spread: detect_desync_spread(traj, o.tail_fraction)
            .ok()
            .map(|s| SpreadSummary { mean: s.mean, std: s.std }),
        desync_fixed_point: traj.spec.potential.desync_fixed_point(),
        wave,
        order_parameter_start: order_parameter(&traj.phases[0]),
        order_parameter_end: order_parameter(traj.final_phases()),
        final_phase_spread: phase_spread(traj.final_phases()),
        events_applied: traj.events_applied.len(),
        accepted_steps: traj.stats.accepted_steps,
        rejected_steps: traj.stats.rejected_steps,
    })
}

/// File name of the circle snapshot at time `t`.
pub fn circle_file_name(t: f64) -> String {
    format!("circle_t{t}.csv")
}

/// Runs a scenario and writes the selected outputs into `out_dir`.
pub fn run(scenario: &Scenario, base_dir: &Path, out_dir: &Path) -> Result<(Trajectory, RunSummary)> {
    let prepared = scenario.prepare(base_dir)?;
    let traj = integrate(&prepared.spec, &prepared.init, &prepared.events, &prepared.config)?;
    std::fs::create_dir_all(out_dir)?;
    let create = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(out_dir.join(name))?)) };

    std::fs::write(out_dir.join("scenario.toml"), scenario.to_toml())?;
    let o = &scenario.outputs;
    if o.phases {
        output::write_trajectory_csv(create("trajectory.csv")?, &traj)?;
    }
    if o.phase_diffs {
        output::write_phase_diffs_csv(create("phase_diffs.csv")?, &traj)?;
    }
    if o.potentials {
        output::write_potentials_csv(create("potentials.csv")?, &traj)?;
    }
    for &t in &o.circle_snapshots {
        output::write_circle_snapshot(create(&circle_file_name(t))?, &traj, t)?;
    }
    let summary = summarize(scenario, &traj)?;
    if o.summary {
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(out_dir.join("summary.json"), text + "\n")?;
    }
    Ok((traj, summary))
}

/// Loads `config`, applies overrides and runs it.
pub fn run_scenario(config: &Path, out_dir: &Path, overrides: Overrides) -> Result<RunSummary> {
    let mut scenario = Scenario::load(config)?;
    overrides.apply(&mut scenario);
    let base = config.parent().unwrap_or(Path::new("."));
    run(&scenario, base, out_dir).map(|(_, s)| s)
}

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &["fig2a", "fig2b", "fig2d", "kuramoto"];

/// Built-in scenarios. Parameter values are documented defaults; the
/// original figures do not publish theirs.
///
/// * `fig2a`: 40 processes, next-neighbour ring, `tanh` potential, process 5
///   set back by 1 rad; resynchronizes.
/// * `fig2b`: same ring with the bottlenecked potential (`sigma = 1.5`) and
///   a 0.5 rad kick; settles at adjacent differences of `2 sigma / 3`. A
///   kick of exactly `2 sigma / 3` would start on the fixed point and
///   spread only very slowly.
/// * `fig2d`: as `fig2b` with distances `{+1, -1, -2}`.
/// * `kuramoto`: classic all-to-all sine coupling with a frequency spread.
pub fn preset(name: &str) -> Option<Scenario> {
    let kicked_ring = |name: &str, distances: Vec<i64>, potential: PotentialKind, kick: f64, t_end: f64| Scenario {
        name: name.to_string(),
        model: ModelSection {
            n: 40,
            t_comp: 0.8,
            t_comm: 0.2,
            protocol_beta: 1,
            kappa_mode: KappaMode::LongestDistance,
            potential,
            kappa: None,
            coupling: None,
            freq_offsets: None,
        },
        topology: TopologySection::Distances { distances, boundary: Boundary::Periodic },
        integrator: IntegratorConfig { seed: 1, ..IntegratorConfig::new(t_end, 2.0) },
        noise: NoiseSpec::default(),
        delay: DelaySpec::None,
        initial: InitialCondition::Synchronized,
        events: EventList::new(vec![DelayEvent::kick(5, 10.0, kick)]),
        outputs: OutputSelection {
            potentials: true,
            circle_snapshots: vec![0.0, 20.0, t_end],
            ..OutputSelection::default()
        },
    };
    let bottlenecked = PotentialKind::Bottlenecked { sigma: 1.5 };
    match name {
        "fig2a" => Some(kicked_ring("fig2a", vec![1, -1], PotentialKind::Scalable, -1.0, 8000.0)),
        "fig2b" => Some(kicked_ring("fig2b", vec![1, -1], bottlenecked, -0.5, 1000.0)),
        "fig2d" => Some(kicked_ring("fig2d", vec![1, -1, -2], bottlenecked, -0.5, 1000.0)),
        "kuramoto" => {
            let n = 10;
            let offsets = (0..n).map(|i| -0.1 + 0.2 * i as f64 / (n - 1) as f64).collect();
            Some(Scenario {
                name: "kuramoto".into(),
                model: ModelSection {
                    n,
                    t_comp: 1.0,
                    t_comm: 0.0,
                    protocol_beta: 1,
                    kappa_mode: KappaMode::LongestDistance,
                    potential: PotentialKind::Kuramoto,
                    kappa: None,
                    coupling: Some(2.0),
                    freq_offsets: Some(offsets),
                },
                topology: TopologySection::AllToAll,
                integrator: IntegratorConfig { seed: 1, ..IntegratorConfig::new(60.0, 0.1) },
                noise: NoiseSpec::default(),
                delay: DelaySpec::None,
                initial: InitialCondition::Desynchronized { spread: std::f64::consts::TAU, seed: 7 },
                events: EventList::empty(),
                outputs: OutputSelection { circle_snapshots: vec![0.0, 60.0], ..OutputSelection::default() },
            })
        }
        _ => None,
    }
}
