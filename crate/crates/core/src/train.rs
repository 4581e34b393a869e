//! Variant training pipeline: applies the configured sparsity reductions
//! (grouping, MIFS, OLS basis selection), fits every demonstration into the
//! latent space, and packages everything a runtime session needs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::{self, BasisSpace, ChannelBasis, LatentModel};
use crate::error::{Error, Result};
use crate::filter::{EnsembleState, ObservationFrame, ProcessNoise, MIN_MEASUREMENT_VAR};
use crate::model::{phase_of, Interaction, Modality, Role, SensorLayout};
use crate::sparsity::{self, GroupMap, SelectionReport};

/// The four model variants compared in the offline evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// All input force DoFs, uniform basis.
    All,
    /// Input force DoFs selected through mutual information.
    Mifs,
    /// Force sensor grouping, uniform basis.
    Group,
    /// Force sensor grouping plus OLS-selected non-uniform basis.
    GroupOls,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::All, Variant::Mifs, Variant::Group, Variant::GroupOls];

    pub fn uses_grouping(&self) -> bool {
        matches!(self, Variant::Group | Variant::GroupOls)
    }

    pub fn uses_mifs(&self) -> bool {
        matches!(self, Variant::Mifs)
    }

    pub fn uses_ols(&self) -> bool {
        matches!(self, Variant::GroupOls)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::All => "all",
            Variant::Mifs => "mifs",
            Variant::Group => "group",
            Variant::GroupOls => "group-ols",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.iter().copied().find(|v| v.name() == s)
    }
}

/// Tunable training parameters with the defaults used throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    /// Uniform basis functions per channel.
    pub basis_per_channel: usize,
    /// Basis width as a multiple of center spacing.
    pub width_factor: f64,
    pub ridge: f64,
    /// Uniform candidate centers offered to OLS per force channel.
    pub ols_candidates: usize,
    /// OLS regressor width as a multiple of the candidate spacing.
    pub ols_width_factor: f64,
    /// Unexplained-energy stopping tolerance for OLS.
    pub ols_tolerance: f64,
    /// Bins for the MI estimator; defaults to ceil(sqrt(demo count)).
    pub mi_bins: Option<usize>,
    /// Per-step MI improvement threshold.
    pub mi_threshold: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            basis_per_channel: 8,
            width_factor: 1.0,
            ridge: basis::DEFAULT_RIDGE,
            ols_candidates: basis::DEFAULT_OLS_CANDIDATES,
            ols_width_factor: 2.0,
            ols_tolerance: 1e-4,
            mi_bins: None,
            mi_threshold: sparsity::DEFAULT_MI_THRESHOLD,
        }
    }
}

/// Everything a runtime inference session needs, plus the audit records of
/// how the latent space was reduced.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub variant: Variant,
    /// Layout the training data arrived in.
    pub raw_layout: SensorLayout,
    /// Layout after all reductions; the model's working channel order.
    pub layout: SensorLayout,
    pub basis: Arc<BasisSpace>,
    pub group_map: Option<GroupMap>,
    pub selection: Option<SelectionReport>,
    pub latents: Vec<LatentModel>,
    pub lengths: Vec<usize>,
    /// Per working-layout channel, RMS fit residual averaged over demos.
    pub residual_rms: Vec<f64>,
    pub process_noise: ProcessNoise,
    /// Per observed channel, floored fit-residual variance.
    pub measurement_var: Vec<f64>,
    pub timestep: f64,
}

impl TrainedModel {
    /// Latent state dimension B (phase and velocity excluded).
    pub fn latent_dim(&self) -> usize {
        self.basis.total()
    }

    /// Maps a raw-layout interaction into the model's working layout:
    /// grouping first, then the channel subset.
    pub fn reduce_interaction(&self, raw: &Interaction) -> Result<Interaction> {
        if raw.layout() != &self.raw_layout {
            return Err(Error::Layout(
                "interaction layout does not match the model's training layout".into(),
            ));
        }
        let intermediate = match &self.group_map {
            Some(map) => sparsity::group_reduce(raw, map)?,
            None => raw.clone(),
        };
        let rows: Result<Vec<usize>> = self
            .layout
            .channels()
            .iter()
            .map(|c| {
                intermediate.layout().index_of(&c.name).ok_or_else(|| {
                    Error::Layout(format!("channel '{}' missing after reduction", c.name))
                })
            })
            .collect();
        let rows = rows?;
        let t_len = intermediate.len();
        let mut samples = nalgebra::DMatrix::zeros(rows.len(), t_len);
        for (r, &src) in rows.iter().enumerate() {
            for t in 0..t_len {
                samples[(r, t)] = intermediate.value(src, t);
            }
        }
        Interaction::new(self.layout.clone(), samples, intermediate.timestep())
    }

    /// Maps frames over the raw layout's observed channels into the model's
    /// observed channels: group channels take the max over their available
    /// members (masked when every member is masked).
    pub fn reduce_frames(&self, frames: &[ObservationFrame]) -> Result<Vec<ObservationFrame>> {
        let raw_observed = self.raw_layout.observed_indices();
        let name_to_pos: Vec<(String, usize)> = raw_observed
            .iter()
            .enumerate()
            .map(|(pos, &i)| (self.raw_layout.channel(i).name.clone(), pos))
            .collect();
        let pos_of = |name: &str| -> Option<usize> {
            name_to_pos.iter().find(|(n, _)| n == name).map(|(_, p)| *p)
        };

        enum Source {
            Direct(usize),
            GroupMax(Vec<usize>),
        }
        let mut sources = Vec::new();
        for &i in &self.layout.observed_indices() {
            let name = &self.layout.channel(i).name;
            if let Some(pos) = pos_of(name) {
                sources.push(Source::Direct(pos));
                continue;
            }
            let members = self
                .group_map
                .as_ref()
                .and_then(|m| m.groups().iter().find(|(id, _)| id == name))
                .map(|(_, members)| members.clone())
                .ok_or_else(|| {
                    Error::Layout(format!("observed channel '{name}' not derivable from raw frames"))
                })?;
            let positions: Result<Vec<usize>> = members
                .iter()
                .map(|m| {
                    pos_of(m).ok_or_else(|| {
                        Error::Layout(format!("group member '{m}' is not an observed raw channel"))
                    })
                })
                .collect();
            sources.push(Source::GroupMax(positions?));
        }

        frames
            .iter()
            .map(|f| {
                if f.values.len() != raw_observed.len() {
                    return Err(Error::Filter(format!(
                        "frame has {} values, raw layout has {} observed channels",
                        f.values.len(),
                        raw_observed.len()
                    )));
                }
                let values = sources
                    .iter()
                    .map(|s| match s {
                        Source::Direct(pos) => f.values[*pos],
                        Source::GroupMax(positions) => positions
                            .iter()
                            .filter_map(|&p| f.values[p])
                            .fold(None, |acc: Option<f64>, v| {
                                Some(acc.map_or(v, |a| a.max(v)))
                            }),
                    })
                    .collect();
                Ok(ObservationFrame { values, step_duration: f.step_duration })
            })
            .collect()
    }

    /// Frame sequence replaying an interaction's observed channels.
    pub fn frames_from(&self, reduced: &Interaction) -> Result<Vec<ObservationFrame>> {
        if reduced.layout() != &self.layout {
            return Err(Error::Layout("interaction is not in the model's working layout".into()));
        }
        let observed = self.layout.observed_indices();
        Ok((0..reduced.len())
            .map(|t| {
                ObservationFrame::full(
                    observed.iter().map(|&d| reduced.value(d, t)).collect(),
                    reduced.timestep(),
                )
            })
            .collect())
    }

    /// Builds the initial ensemble from the stored latent demonstrations.
    pub fn make_ensemble(&self) -> Result<EnsembleState> {
        EnsembleState::init(
            &self.latents,
            &self.lengths,
            self.process_noise,
            self.measurement_var.clone(),
            &self.layout,
        )
    }
}

fn fit_all(
    demos: &[Interaction],
    basis: &Arc<BasisSpace>,
    ridge: f64,
) -> Result<(Vec<LatentModel>, Vec<f64>)> {
    let d = basis.channel_count();
    let mut latents = Vec::with_capacity(demos.len());
    let mut mean_sq = vec![0.0f64; d];
    for demo in demos {
        let result = basis::fit(demo, basis, ridge)?;
        for (k, r) in result.residuals.iter().enumerate() {
            mean_sq[k] += r * r;
        }
        latents.push(result.model);
    }
    let residual_rms: Vec<f64> =
        mean_sq.iter().map(|s| (s / demos.len() as f64).sqrt()).collect();
    Ok((latents, residual_rms))
}

/// Trains one variant end to end on raw-layout demonstrations.
pub fn train(
    demos: &[Interaction],
    layout: &SensorLayout,
    variant: Variant,
    params: &TrainParams,
) -> Result<TrainedModel> {
    if demos.len() < 2 {
        return Err(Error::Eval(format!("training needs at least 2 demos, got {}", demos.len())));
    }
    if demos.iter().any(|d| d.layout() != layout) {
        return Err(Error::Layout("demonstration layout mismatch".into()));
    }
    if params.basis_per_channel == 0 {
        return Err(Error::Basis("basis_per_channel must be at least 1".into()));
    }

    // 1. grouping
    let (group_map, mut work_demos, mut work_layout) = if variant.uses_grouping() {
        let map = GroupMap::from_layout(layout)?.ok_or_else(|| {
            Error::Layout(format!("variant '{}' needs grouped channels in the layout", variant.name()))
        })?;
        let reduced: Result<Vec<Interaction>> =
            demos.iter().map(|d| sparsity::group_reduce(d, &map)).collect();
        let reduced = reduced?;
        let new_layout = reduced[0].layout().clone();
        (Some(map), reduced, new_layout)
    } else {
        (None, demos.to_vec(), layout.clone())
    };

    // 2. MIFS over the input force channels
    let selection = if variant.uses_mifs() {
        let uniform = Arc::new(BasisSpace::uniform(
            work_layout.len(),
            params.basis_per_channel,
            params.width_factor,
        ));
        let (prelim, _) = fit_all(&work_demos, &uniform, params.ridge)?;
        let is_force = |i: usize| work_layout.channel(i).modality == Modality::ContactForce;
        let candidates: Vec<usize> = work_layout
            .observed_indices()
            .into_iter()
            .filter(|&i| is_force(i))
            .collect();
        let targets: Vec<usize> = work_layout
            .controlled_indices()
            .into_iter()
            .filter(|&i| is_force(i))
            .collect();
        if candidates.is_empty() || targets.is_empty() {
            return Err(Error::Selection(
                "MIFS needs observed and controlled force channels".into(),
            ));
        }
        let bins = params.mi_bins.unwrap_or_else(|| sparsity::default_bins(work_demos.len()));
        let report = sparsity::select_inputs(
            &prelim,
            &work_layout,
            &candidates,
            &targets,
            bins,
            params.mi_threshold,
        )?;
        // drop unselected observed force channels
        let keep: Vec<usize> = (0..work_layout.len())
            .filter(|&i| {
                let c = work_layout.channel(i);
                !(c.role == Role::Observed && c.modality == Modality::ContactForce)
                    || report.selected.contains(&c.name)
            })
            .collect();
        let new_layout = SensorLayout::new(
            keep.iter().map(|&i| work_layout.channel(i).clone()).collect(),
        )?;
        work_demos = work_demos
            .iter()
            .map(|d| {
                let mut samples = nalgebra::DMatrix::zeros(keep.len(), d.len());
                for (r, &src) in keep.iter().enumerate() {
                    for t in 0..d.len() {
                        samples[(r, t)] = d.value(src, t);
                    }
                }
                Interaction::new(new_layout.clone(), samples, d.timestep())
            })
            .collect::<Result<Vec<_>>>()?;
        work_layout = new_layout;
        Some(report)
    } else {
        None
    };

    // 3. basis: uniform everywhere, OLS-selected on force channels
    let basis = if variant.uses_ols() {
        let candidates = crate::basis::uniform_candidates(params.ols_candidates);
        let spacing = if params.ols_candidates > 1 {
            1.0 / (params.ols_candidates - 1) as f64
        } else {
            1.0
        };
        let width = params.ols_width_factor * spacing;
        let mut channel_bases = Vec::with_capacity(work_layout.len());
        for d in 0..work_layout.len() {
            if work_layout.channel(d).modality != Modality::ContactForce {
                channel_bases.push(ChannelBasis::uniform(params.basis_per_channel, params.width_factor));
                continue;
            }
            // stack (phase, value) samples over every training demo,
            // normalized per demo so amplitude diversity does not put a
            // floor under the explainable energy
            let mut phases = Vec::new();
            let mut values = Vec::new();
            for demo in &work_demos {
                let t_len = demo.len();
                let series = demo.channel_series(d);
                let rms = (series.iter().map(|v| v * v).sum::<f64>() / t_len as f64).sqrt();
                if rms <= 1e-12 {
                    continue;
                }
                for (t, v) in series.iter().enumerate() {
                    phases.push(phase_of(t, t_len)?);
                    values.push(v / rms);
                }
            }
            if values.is_empty() {
                channel_bases.push(ChannelBasis::new(vec![0.5], width)?);
                continue;
            }
            let sel =
                basis::ols_select_samples(&phases, &values, &candidates, width, params.ols_tolerance)?;
            // a reduced basis never exceeds the uniform budget; degenerate or
            // empty selections fall back to a single mid-domain function
            let mut centers: Vec<f64> =
                sel.centers.iter().copied().take(params.basis_per_channel).collect();
            if centers.is_empty() {
                centers.push(0.5);
            }
            channel_bases.push(ChannelBasis::new(centers, width)?);
        }
        Arc::new(BasisSpace::new(channel_bases))
    } else {
        Arc::new(BasisSpace::uniform(
            work_layout.len(),
            params.basis_per_channel,
            params.width_factor,
        ))
    };

    // 4. fit
    let (latents, residual_rms) = fit_all(&work_demos, &basis, params.ridge)?;
    let lengths: Vec<usize> = work_demos.iter().map(|d| d.len()).collect();
    let mean_len = lengths.iter().sum::<usize>() as f64 / lengths.len() as f64;
    let measurement_var: Vec<f64> = work_layout
        .observed_indices()
        .iter()
        .map(|&i| (residual_rms[i] * residual_rms[i]).max(MIN_MEASUREMENT_VAR))
        .collect();

    Ok(TrainedModel {
        variant,
        raw_layout: layout.clone(),
        layout: work_layout,
        basis,
        group_map,
        selection,
        latents,
        lengths,
        residual_rms,
        process_noise: ProcessNoise::default_for(mean_len),
        measurement_var,
        timestep: demos[0].timestep(),
    })
}
