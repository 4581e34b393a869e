//! Synthetic demonstration generator: hug-like multimodal interactions with
//! controllable temporal/spatial sparsity, per-demo body-size variation,
//! monotone time warping, and the edge-case observation sequences used for
//! halting analysis. Ground truth (warp, informative channels, contact
//! windows) is recorded alongside every dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::ObservationFrame;
use crate::model::{ChannelSpec, Interaction, Modality, Role, SensorLayout};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Scenario parameters; one concrete demo is a deterministic function of
/// this config (including its seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_joints: usize,
    /// Observed input force sensors.
    pub n_force_sensors: usize,
    pub n_groups: usize,
    /// Tracked 2D markers; each contributes an x and a y channel.
    pub n_pose_markers: usize,
    /// Controlled output force channels (left/right split for metrics).
    pub n_output_forces: usize,
    /// Inclusive range the demo length is sampled from.
    pub duration_range: (usize, usize),
    /// Phase interval where contact forces are nonzero.
    pub contact_window: (f64, f64),
    /// Per-demo force multiplier (body-size proxy); joints are unaffected.
    pub amplitude_scale: f64,
    /// Monotone time-warp strength; per-demo warp is drawn from [-warp, warp].
    pub warp: f64,
    /// Hold length used by the delay edge cases.
    pub edge_delay_steps: usize,
    /// Seconds per sample.
    pub timestep: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_joints: 12,
            n_force_sensors: 61,
            n_groups: 16,
            n_pose_markers: 8,
            n_output_forces: 12,
            duration_range: (100, 160),
            contact_window: (0.4, 0.7),
            amplitude_scale: 1.0,
            warp: 0.15,
            edge_delay_steps: 150,
            timestep: 1.0 / 30.0,
            seed: 42,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let (c0, c1) = self.contact_window;
        if !(0.0 <= c0 && c0 < c1 && c1 <= 1.0) {
            return Err(Error::Parse(format!("contact_window ({c0}, {c1}) not inside [0, 1]")));
        }
        if self.duration_range.0 < 50 || self.duration_range.0 > self.duration_range.1 {
            return Err(Error::Parse(format!(
                "duration_range {:?} must be ordered with at least 50 steps",
                self.duration_range
            )));
        }
        if !(self.amplitude_scale > 0.0) {
            return Err(Error::Parse("amplitude_scale must be positive".into()));
        }
        if !(0.0..=0.4).contains(&self.warp) {
            return Err(Error::Parse(format!("warp {} outside [0, 0.4]", self.warp)));
        }
        if self.n_force_sensors < 2 * self.n_output_forces {
            return Err(Error::Parse(format!(
                "{} force sensors cannot host 2 designated inputs for each of {} outputs",
                self.n_force_sensors, self.n_output_forces
            )));
        }
        if self.n_joints == 0
            || self.n_pose_markers == 0
            || self.n_output_forces == 0
            || self.n_groups == 0
        {
            return Err(Error::Parse("channel counts must be positive".into()));
        }
        if !(self.timestep > 0.0) {
            return Err(Error::Parse("timestep must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Structural role of one input force sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ForceKind {
    /// One of the two inputs an output channel is a function of.
    Designated { output: usize, slot: usize },
    /// Co-located with a designated sensor; partially correlated with it.
    Neighbor { output: usize, slot: usize },
    /// Sees contact but carries only body-size information.
    OtherActive,
    /// Never sees contact (spatial sparsity).
    Inactive,
}

/// Deterministic structure of the synthetic layout: channel roles, group
/// assignment, and per-group contact sub-windows.
#[derive(Debug, Clone)]
pub struct SynthPlan {
    pub layout: SensorLayout,
    /// Role of each input force sensor, indexed like the `fin` channels.
    pub force_kinds: Vec<ForceKind>,
    /// Group index per input force sensor.
    pub force_group: Vec<usize>,
    /// Contact sub-window per input force sensor (None for inactive).
    pub force_window: Vec<Option<(f64, f64)>>,
    /// For each output, the layout indices of its two designated inputs.
    pub designated: Vec<(usize, usize)>,
    /// Layout index of the first input force channel.
    pub force_offset: usize,
    /// Layout index of the first output force channel.
    pub output_offset: usize,
}

impl SynthPlan {
    /// Sorted layout indices of the designated (ground-truth informative)
    /// input channels.
    pub fn informative_inputs(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.designated.iter().flat_map(|&(a, b)| [a, b]).collect();
        v.sort_unstable();
        v
    }
}

fn fract(x: f64) -> f64 {
    x - x.floor()
}

/// Builds the channel plan for a config. Channel order: pose x/y pairs,
/// input force sensors grouped by physical group, joints, output forces.
pub fn plan_layout(config: &ScenarioConfig) -> Result<SynthPlan> {
    config.validate()?;
    let k_out = config.n_output_forces;
    let f = config.n_force_sensors;
    let g = config.n_groups;
    let active_groups = k_out.min(g);

    // roles for the input sensors beyond the designated pairs
    let rem = f - 2 * k_out;
    let n_neighbors = (rem as f64 * 0.55).floor() as usize;
    let n_other = (rem as f64 * 0.15).floor() as usize;
    let n_inactive = rem - n_neighbors - n_other;

    // group -> member roles, flattened in group order afterwards
    let mut group_members: Vec<Vec<ForceKind>> = vec![Vec::new(); g];
    for out in 0..k_out {
        let grp = out % active_groups;
        group_members[grp].push(ForceKind::Designated { output: out, slot: 0 });
        group_members[grp].push(ForceKind::Designated { output: out, slot: 1 });
    }
    for i in 0..n_neighbors {
        let out = i % k_out;
        let slot = (i / k_out) % 2;
        group_members[out % active_groups].push(ForceKind::Neighbor { output: out, slot });
    }
    let spare_groups: Vec<usize> =
        if g > active_groups { (active_groups..g).collect() } else { (0..g).collect() };
    for i in 0..n_other {
        group_members[spare_groups[i % spare_groups.len()]].push(ForceKind::OtherActive);
    }
    for i in 0..n_inactive {
        group_members[spare_groups[i % spare_groups.len()]].push(ForceKind::Inactive);
    }

    let (c0, c1) = config.contact_window;
    let span = c1 - c0;
    let group_window = |grp: usize| -> (f64, f64) {
        let a = fract(grp as f64 * GOLDEN);
        let b = fract((grp as f64 + 7.0) * GOLDEN);
        (c0 + 0.12 * span * a, c1 - 0.12 * span * b)
    };

    let mut channels = Vec::new();
    for m in 0..config.n_pose_markers {
        channels.push(ChannelSpec::new(format!("pose_m{m:02}_x"), Modality::Pose, Role::Observed));
        channels.push(ChannelSpec::new(format!("pose_m{m:02}_y"), Modality::Pose, Role::Observed));
    }
    let force_offset = channels.len();
    let mut force_kinds = Vec::with_capacity(f);
    let mut force_group = Vec::with_capacity(f);
    let mut force_window = Vec::with_capacity(f);
    let mut designated = vec![(usize::MAX, usize::MAX); k_out];
    let mut sensor = 0usize;
    for (grp, members) in group_members.iter().enumerate() {
        for kind in members {
            let idx = force_offset + sensor;
            channels.push(
                ChannelSpec::new(format!("fin_{sensor:02}"), Modality::ContactForce, Role::Observed)
                    .with_group(format!("grp_{grp:02}")),
            );
            force_kinds.push(*kind);
            force_group.push(grp);
            force_window.push(match kind {
                ForceKind::Inactive => None,
                _ => Some(group_window(grp)),
            });
            if let ForceKind::Designated { output, slot } = kind {
                if *slot == 0 {
                    designated[*output].0 = idx;
                } else {
                    designated[*output].1 = idx;
                }
            }
            sensor += 1;
        }
    }
    for j in 0..config.n_joints {
        channels.push(ChannelSpec::new(
            format!("joint_{j:02}"),
            Modality::JointPosition,
            Role::Controlled,
        ));
    }
    let output_offset = channels.len();
    let half = k_out / 2;
    for o in 0..k_out {
        let side = if o < half { "left" } else { "right" };
        channels.push(ChannelSpec::new(
            format!("fout_{side}_{o:02}"),
            Modality::ContactForce,
            Role::Controlled,
        ));
    }

    Ok(SynthPlan {
        layout: SensorLayout::new(channels)?,
        force_kinds,
        force_group,
        force_window,
        designated,
        force_offset,
        output_offset,
    })
}

/// Per-demo ground truth record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoTruth {
    pub seed: u64,
    pub amplitude: f64,
    pub duration: usize,
    pub warp_lambda: f64,
    /// True phase of every step (the monotone warp).
    pub true_phase: Vec<f64>,
}

struct DemoDraws {
    duration: usize,
    lambda: f64,
    joint_scale: f64,
    /// Designated amplitude factors, [output][slot].
    u: Vec<[f64; 2]>,
    /// Private amplitude factor per input sensor (used by neighbor and
    /// other-active channels).
    private: Vec<f64>,
}

fn draw_demo(config: &ScenarioConfig, plan: &SynthPlan) -> (DemoDraws, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = config.duration_range;
    let duration = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
    let lambda = if config.warp > 0.0 { rng.gen_range(-config.warp..=config.warp) } else { 0.0 };
    let joint_scale = rng.gen_range(0.9..1.1);
    let u: Vec<[f64; 2]> = (0..config.n_output_forces)
        .map(|_| [rng.gen_range(0.7..1.3), rng.gen_range(0.7..1.3)])
        .collect();
    let private: Vec<f64> = plan.force_kinds.iter().map(|_| rng.gen_range(0.7..1.3)).collect();
    (DemoDraws { duration, lambda, joint_scale, u, private }, rng)
}

fn smoothstep(x: f64) -> f64 {
    let t = x.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Monotone warp of the base phase u in [0, 1]; endpoints fixed.
fn warp_phase(u: f64, lambda: f64) -> f64 {
    (1.0 - lambda) * u + lambda * smoothstep(u)
}

fn raise(p: f64) -> f64 {
    smoothstep((p - 0.10) / 0.25)
}

fn approach(p: f64) -> f64 {
    smoothstep((p - 0.05) / 0.20)
}

fn lower(p: f64) -> f64 {
    smoothstep((p - 0.75) / 0.20)
}

/// Raised-cosine contact bump with compact support on (lo, hi).
fn bump(p: f64, lo: f64, hi: f64) -> f64 {
    if p <= lo || p >= hi {
        0.0
    } else {
        let u = (p - lo) / (hi - lo);
        0.5 * (1.0 - (2.0 * std::f64::consts::PI * u).cos())
    }
}

fn pose_value(marker: usize, coord: usize, p: f64, joint_scale: f64, with_approach: bool) -> f64 {
    let side = if marker % 2 == 0 { 1.0 } else { -1.0 };
    let hold = raise(p) - lower(p);
    if coord == 0 {
        let appr = if with_approach { approach(p) - lower(p) } else { 0.0 };
        0.35 + 0.03 * marker as f64 + 0.16 * appr + 0.04 * side * hold
    } else {
        0.25 + 0.02 * marker as f64 + 0.28 * joint_scale * hold
    }
}

fn joint_value(j: usize, p: f64, joint_scale: f64) -> f64 {
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    sign * joint_scale * (0.45 + 0.04 * j as f64) * (raise(p) - lower(p))
}

/// Noiseless bump peak of input sensor `i` for this demo.
fn force_amplitude(config: &ScenarioConfig, plan: &SynthPlan, draws: &DemoDraws, i: usize) -> f64 {
    let s = config.amplitude_scale;
    match plan.force_kinds[i] {
        ForceKind::Designated { output, slot } => s * draws.u[output][slot],
        ForceKind::Neighbor { output, slot } => {
            s * 0.6 * (0.6 * draws.u[output][slot] + 0.4 * draws.private[i])
        }
        ForceKind::OtherActive => s * 0.8 * draws.private[i],
        ForceKind::Inactive => 0.0,
    }
}

fn force_profile(plan: &SynthPlan, amplitude: f64, i: usize, p: f64) -> f64 {
    match plan.force_window[i] {
        Some((lo, hi)) => amplitude * bump(p, lo, hi),
        None => 0.0,
    }
}

/// Generates one synthetic demonstration; bit-identical for equal configs.
pub fn generate_demo(config: &ScenarioConfig) -> Result<Interaction> {
    generate_demo_with_truth(config).map(|(i, _)| i)
}

/// Demo plus its ground truth record.
pub fn generate_demo_with_truth(config: &ScenarioConfig) -> Result<(Interaction, DemoTruth)> {
    let plan = plan_layout(config)?;
    generate_on_plan(config, &plan)
}

/// Same as [`generate_demo_with_truth`] with a precomputed plan.
pub fn generate_on_plan(
    config: &ScenarioConfig,
    plan: &SynthPlan,
) -> Result<(Interaction, DemoTruth)> {
    let (draws, mut rng) = draw_demo(config, plan);
    let t_len = draws.duration;
    let d = plan.layout.len();
    let s = config.amplitude_scale;
    let amps: Vec<f64> =
        (0..plan.force_kinds.len()).map(|i| force_amplitude(config, plan, &draws, i)).collect();

    let mut true_phase = Vec::with_capacity(t_len);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let u = t as f64 / (t_len - 1) as f64;
        let p = warp_phase(u, draws.lambda);
        true_phase.push(p);
        let mut row = vec![0.0; d];
        for m in 0..config.n_pose_markers {
            row[2 * m] =
                pose_value(m, 0, p, draws.joint_scale, true) + 0.002 * rng.gen_range(-1.0..1.0);
            row[2 * m + 1] =
                pose_value(m, 1, p, draws.joint_scale, true) + 0.002 * rng.gen_range(-1.0..1.0);
        }
        for i in 0..plan.force_kinds.len() {
            row[plan.force_offset + i] =
                force_profile(plan, amps[i], i, p) + s * 0.004 * rng.gen_range(-1.0..1.0);
        }
        for j in 0..config.n_joints {
            row[plan.force_offset + plan.force_kinds.len() + j] =
                joint_value(j, p, draws.joint_scale);
        }
        for o in 0..config.n_output_forces {
            let (a, b) = plan.designated[o];
            let fa = force_profile(plan, amps[a - plan.force_offset], a - plan.force_offset, p);
            let fb = force_profile(plan, amps[b - plan.force_offset], b - plan.force_offset, p);
            row[plan.output_offset + o] = 0.5 * fa + 0.5 * fb + s * 0.008 * rng.gen_range(-1.0..1.0);
        }
        rows.push(row);
    }
    let interaction = Interaction::from_rows(plan.layout.clone(), &rows, config.timestep)?;
    let truth = DemoTruth {
        seed: config.seed,
        amplitude: config.amplitude_scale,
        duration: t_len,
        warp_lambda: draws.lambda,
        true_phase,
    };
    Ok((interaction, truth))
}

/// Edge-case observation behaviors from the in-person test protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeCase {
    DoNothing,
    DelayBeforeHug,
    DelayAfterRaise,
    HugAir,
    HugNoContact,
}

impl EdgeCase {
    pub const ALL: [EdgeCase; 5] = [
        EdgeCase::DoNothing,
        EdgeCase::DelayBeforeHug,
        EdgeCase::DelayAfterRaise,
        EdgeCase::HugAir,
        EdgeCase::HugNoContact,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EdgeCase::DoNothing => "do-nothing",
            EdgeCase::DelayBeforeHug => "delay-before-hug",
            EdgeCase::DelayAfterRaise => "delay-after-raise",
            EdgeCase::HugAir => "hug-air",
            EdgeCase::HugNoContact => "hug-no-contact",
        }
    }

    pub fn parse(name: &str) -> Option<EdgeCase> {
        EdgeCase::ALL.iter().copied().find(|e| e.name() == name)
    }
}

/// Observed-channel frame sequences implementing each edge behavior. Frames
/// are noise-free and unwarped so halting onsets are exactly known.
pub fn generate_edge_case(kind: EdgeCase, config: &ScenarioConfig) -> Result<Vec<ObservationFrame>> {
    let plan = plan_layout(config)?;
    let (draws, _) = draw_demo(config, &plan);
    let t_len = draws.duration;
    let amps: Vec<f64> =
        (0..plan.force_kinds.len()).map(|i| force_amplitude(config, &plan, &draws, i)).collect();

    let observed_frame = |p: f64, with_approach: bool, with_contact: bool| -> ObservationFrame {
        let mut values = Vec::with_capacity(2 * config.n_pose_markers + plan.force_kinds.len());
        for m in 0..config.n_pose_markers {
            values.push(pose_value(m, 0, p, draws.joint_scale, with_approach));
            values.push(pose_value(m, 1, p, draws.joint_scale, with_approach));
        }
        for i in 0..plan.force_kinds.len() {
            values.push(if with_contact { force_profile(&plan, amps[i], i, p) } else { 0.0 });
        }
        ObservationFrame::full(values, config.timestep)
    };
    let phase_at = |t: usize| t as f64 / (t_len - 1) as f64;

    let frames = match kind {
        EdgeCase::DoNothing => {
            vec![observed_frame(0.0, true, true); t_len]
        }
        EdgeCase::DelayBeforeHug => {
            let mut v = vec![observed_frame(0.0, true, true); config.edge_delay_steps];
            v.extend((0..t_len).map(|t| observed_frame(phase_at(t), true, true)));
            v
        }
        EdgeCase::DelayAfterRaise => {
            let hold_at = (0..t_len).find(|&t| raise(phase_at(t)) >= 1.0).unwrap_or(t_len / 3);
            let mut v: Vec<ObservationFrame> =
                (0..=hold_at).map(|t| observed_frame(phase_at(t), true, true)).collect();
            v.extend(vec![observed_frame(phase_at(hold_at), true, true); config.edge_delay_steps]);
            v.extend((hold_at + 1..t_len).map(|t| observed_frame(phase_at(t), true, true)));
            v
        }
        EdgeCase::HugAir => (0..t_len).map(|t| observed_frame(phase_at(t), false, false)).collect(),
        EdgeCase::HugNoContact => {
            (0..t_len).map(|t| observed_frame(phase_at(t), true, false)).collect()
        }
    };
    Ok(frames)
}

/// Step index, within the generated frame sequence, at which the scenario
/// stops carrying progress information (the stall onset).
pub fn stall_onset_step(kind: EdgeCase, config: &ScenarioConfig) -> Result<usize> {
    let plan = plan_layout(config)?;
    let (draws, _) = draw_demo(config, &plan);
    let t_len = draws.duration;
    let phase_at = |t: usize| t as f64 / (t_len - 1) as f64;
    Ok(match kind {
        EdgeCase::DoNothing | EdgeCase::DelayBeforeHug => 0,
        EdgeCase::DelayAfterRaise => {
            (0..t_len).find(|&t| raise(phase_at(t)) >= 1.0).unwrap_or(t_len / 3)
        }
        // conflict starts where contact pressure is first expected
        EdgeCase::HugAir | EdgeCase::HugNoContact => {
            (0..t_len).find(|&t| phase_at(t) >= config.contact_window.0).unwrap_or(t_len - 1)
        }
    })
}

/// A generated dataset: the shared layout, all demos, and ground truth.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub layout: SensorLayout,
    pub demos: Vec<Interaction>,
    pub truth: GroundTruth,
}

/// Dataset-level ground truth sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Output channel name -> its two designated input channel names.
    pub designated_pairs: Vec<(String, [String; 2])>,
    /// All ground-truth informative input channel names, sorted.
    pub informative_inputs: Vec<String>,
    pub contact_window: (f64, f64),
    pub demos: Vec<DemoTruth>,
}

/// Generates `n_demos` demonstrations with per-demo amplitude (body size),
/// duration, and warp variation, all derived from the config seed.
pub fn generate_dataset(config: &ScenarioConfig, n_demos: usize) -> Result<SynthDataset> {
    if n_demos < 2 {
        return Err(Error::Parse(format!("dataset needs at least 2 demos, got {n_demos}")));
    }
    let plan = plan_layout(config)?;
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let mut demos = Vec::with_capacity(n_demos);
    let mut demo_truths = Vec::with_capacity(n_demos);
    for _ in 0..n_demos {
        let demo_seed: u64 = master.gen();
        let amplitude = master.gen_range(0.7..1.3);
        let mut c = config.clone();
        c.seed = demo_seed;
        c.amplitude_scale = config.amplitude_scale * amplitude;
        let (demo, truth) = generate_on_plan(&c, &plan)?;
        demos.push(demo);
        demo_truths.push(truth);
    }
    let name = |i: usize| plan.layout.channel(i).name.clone();
    let designated_pairs = plan
        .designated
        .iter()
        .enumerate()
        .map(|(o, &(a, b))| (name(plan.output_offset + o), [name(a), name(b)]))
        .collect();
    let informative_inputs = plan.informative_inputs().into_iter().map(name).collect();
    Ok(SynthDataset {
        layout: plan.layout.clone(),
        demos,
        truth: GroundTruth {
            designated_pairs,
            informative_inputs,
            contact_window: config.contact_window,
            demos: demo_truths,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_interaction;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            n_joints: 3,
            n_force_sensors: 10,
            n_groups: 4,
            n_pose_markers: 2,
            n_output_forces: 2,
            duration_range: (60, 80),
            warp: 0.1,
            seed: 7,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn demo_regeneration_is_bit_identical() {
        let c = small_config();
        let a = generate_demo(&c).unwrap();
        let b = generate_demo(&c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generated_demo_passes_validation() {
        let demo = generate_demo(&ScenarioConfig { seed: 3, ..ScenarioConfig::default() }).unwrap();
        assert_eq!(demo.dim(), 16 + 61 + 12 + 12);
        validate_interaction(demo).unwrap();
    }

    #[test]
    fn forces_outside_window_below_one_percent_of_peak() {
        let c = small_config();
        let plan = plan_layout(&c).unwrap();
        let (demo, truth) = generate_demo_with_truth(&c).unwrap();
        for (i, window) in plan.force_window.iter().enumerate() {
            let series = demo.channel_series(plan.force_offset + i);
            let peak = series.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
            if peak <= 0.0 {
                continue;
            }
            let Some((lo, hi)) = window else { continue };
            for (t, &v) in series.iter().enumerate() {
                let p = truth.true_phase[t];
                if p < *lo || p > *hi {
                    assert!(v.abs() < 0.01 * peak, "channel {i} at step {t}: {v} vs peak {peak}");
                }
            }
        }
    }

    #[test]
    fn amplitude_scales_forces_not_joints() {
        let c1 = small_config();
        let mut c2 = c1.clone();
        c2.amplitude_scale = 1.5;
        let plan = plan_layout(&c1).unwrap();
        let a = generate_demo(&c1).unwrap();
        let b = generate_demo(&c2).unwrap();
        for i in 0..plan.force_kinds.len() {
            let pa =
                a.channel_series(plan.force_offset + i).into_iter().fold(0.0f64, |x, y| x.max(y));
            let pb =
                b.channel_series(plan.force_offset + i).into_iter().fold(0.0f64, |x, y| x.max(y));
            if pa > 0.05 {
                assert!((pb / pa - 1.5).abs() < 1e-6, "channel {i} peak ratio {} not 1.5", pb / pa);
            }
        }
        let joints_start = plan.force_offset + plan.force_kinds.len();
        for j in 0..c1.n_joints {
            assert_eq!(a.channel_series(joints_start + j), b.channel_series(joints_start + j));
        }
    }

    #[test]
    fn outputs_follow_designated_inputs() {
        let c = small_config();
        let plan = plan_layout(&c).unwrap();
        let demo = generate_demo(&c).unwrap();
        for (o, &(a, b)) in plan.designated.iter().enumerate() {
            let out = demo.channel_series(plan.output_offset + o);
            let ia = demo.channel_series(a);
            let ib = demo.channel_series(b);
            let peak = out.iter().cloned().fold(0.0f64, f64::max);
            for t in 0..demo.len() {
                let expected = 0.5 * ia[t] + 0.5 * ib[t];
                // designated inputs carry their own floor noise, outputs 1%
                assert!(
                    (out[t] - expected).abs() <= 0.02 * peak.max(0.5),
                    "output {o} step {t}: {} vs {expected}",
                    out[t]
                );
            }
        }
    }

    #[test]
    fn dataset_truth_records_informative_channels() {
        let c = small_config();
        let ds = generate_dataset(&c, 5).unwrap();
        assert_eq!(ds.demos.len(), 5);
        assert_eq!(ds.truth.demos.len(), 5);
        assert_eq!(ds.truth.informative_inputs.len(), 2 * c.n_output_forces);
        for t in &ds.truth.demos {
            assert_eq!(t.true_phase.len(), t.duration);
            // warp is monotone with fixed endpoints
            for w in t.true_phase.windows(2) {
                assert!(w[1] > w[0]);
            }
            assert_eq!(t.true_phase[0], 0.0);
            assert!((t.true_phase[t.duration - 1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn do_nothing_frames_all_equal_initial_posture() {
        let c = small_config();
        let frames = generate_edge_case(EdgeCase::DoNothing, &c).unwrap();
        assert!(frames.len() >= 2);
        for f in &frames {
            assert_eq!(f, &frames[0]);
        }
    }

    #[test]
    fn delay_before_hug_prefix_then_normal() {
        let mut c = small_config();
        c.edge_delay_steps = 37;
        let frames = generate_edge_case(EdgeCase::DelayBeforeHug, &c).unwrap();
        for f in &frames[..37] {
            assert_eq!(f, &frames[0]);
        }
        // afterwards the pose starts moving
        assert_ne!(frames[37 + 30], frames[0]);
    }

    #[test]
    fn hug_no_contact_matches_pose_zero_forces() {
        let c = small_config();
        let normal = generate_edge_case(EdgeCase::DelayBeforeHug, &c).unwrap();
        let nc = generate_edge_case(EdgeCase::HugNoContact, &c).unwrap();
        let n_pose = 2 * c.n_pose_markers;
        let delay = c.edge_delay_steps;
        for (t, f) in nc.iter().enumerate() {
            // pose equals the normal trajectory (the delayed sequence, offset)
            for k in 0..n_pose {
                assert_eq!(f.values[k], normal[delay + t].values[k]);
            }
            for k in n_pose..f.values.len() {
                assert_eq!(f.values[k], Some(0.0));
            }
        }
    }

    #[test]
    fn plan_respects_counts() {
        let c = ScenarioConfig::default();
        let plan = plan_layout(&c).unwrap();
        assert_eq!(plan.layout.len(), 101);
        assert_eq!(plan.force_kinds.len(), 61);
        let designated =
            plan.force_kinds.iter().filter(|k| matches!(k, ForceKind::Designated { .. })).count();
        assert_eq!(designated, 24);
        let inactive = plan.force_kinds.iter().filter(|k| matches!(k, ForceKind::Inactive)).count();
        assert_eq!(inactive, 12);
        // group sizes stay small, mirroring dense physical placement
        for g in 0..c.n_groups {
            let size = plan.force_group.iter().filter(|&&x| x == g).count();
            assert!((3..=6).contains(&size), "group {g} has {size} sensors");
        }
    }
}
