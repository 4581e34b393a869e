//! Domain types shared by every module: sensor layouts, interactions, and
//! the normalized phase coordinate.
//!
//! Channel order inside a [`SensorLayout`] is frozen at construction and is
//! the single source of truth for every vector layout downstream (latent
//! weights, ensemble members, observation frames).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationIssue, ValidationReport};

/// Physical meaning of a channel's values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    /// Joint position in radians.
    JointPosition,
    /// Contact force in raw sensor units.
    ContactForce,
    /// Normalized image coordinate of a tracked marker.
    Pose,
}

/// Whether a channel is observed at runtime (human side) or inferred and
/// commanded (robot side).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Observed,
    Controlled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub modality: Modality,
    pub role: Role,
    /// Group label for force channels that are aggregated together.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
}

impl ChannelSpec {
    pub fn new(name: impl Into<String>, modality: Modality, role: Role) -> Self {
        ChannelSpec { name: name.into(), modality, role, group_id: None }
    }

    pub fn with_group(mut self, group_id: impl Into<String>) -> Self {
        self.group_id = Some(group_id.into());
        self
    }
}

/// An ordered set of channel specs. Order is frozen at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ChannelSpec>", into = "Vec<ChannelSpec>")]
pub struct SensorLayout {
    channels: Vec<ChannelSpec>,
}

impl SensorLayout {
    /// Checks name uniqueness, that grouped channels are contact-force, and
    /// that at least one observed and one controlled channel exist.
    pub fn new(channels: Vec<ChannelSpec>) -> Result<Self> {
        for (i, c) in channels.iter().enumerate() {
            if channels[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Layout(format!("duplicate channel name '{}'", c.name)));
            }
            if c.group_id.is_some() && c.modality != Modality::ContactForce {
                return Err(Error::Layout(format!(
                    "channel '{}' has a group_id but is not a contact-force channel",
                    c.name
                )));
            }
        }
        if !channels.iter().any(|c| c.role == Role::Observed) {
            return Err(Error::Layout("layout has no observed channel".into()));
        }
        if !channels.iter().any(|c| c.role == Role::Controlled) {
            return Err(Error::Layout("layout has no controlled channel".into()));
        }
        Ok(SensorLayout { channels })
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channels(&self) -> &[ChannelSpec] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> &ChannelSpec {
        &self.channels[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    /// Indices of observed channels, in layout order.
    pub fn observed_indices(&self) -> Vec<usize> {
        self.indices_with_role(Role::Observed)
    }

    /// Indices of controlled channels, in layout order.
    pub fn controlled_indices(&self) -> Vec<usize> {
        self.indices_with_role(Role::Controlled)
    }

    fn indices_with_role(&self, role: Role) -> Vec<usize> {
        self.channels
            .iter()
            .enumerate()
            .filter(|(_, c)| c.role == role)
            .map(|(i, _)| i)
            .collect()
    }
}

impl TryFrom<Vec<ChannelSpec>> for SensorLayout {
    type Error = Error;
    fn try_from(channels: Vec<ChannelSpec>) -> Result<Self> {
        SensorLayout::new(channels)
    }
}

impl From<SensorLayout> for Vec<ChannelSpec> {
    fn from(layout: SensorLayout) -> Self {
        layout.channels
    }
}

/// A multichannel time series: `dim()` channels by `len()` timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    layout: SensorLayout,
    /// D x T, one column per timestep, rows in layout order.
    samples: DMatrix<f64>,
    /// Seconds per sample.
    timestep: f64,
}

impl Interaction {
    /// Validates all invariants, reporting every violation at once.
    pub fn new(layout: SensorLayout, samples: DMatrix<f64>, timestep: f64) -> Result<Self> {
        let mut issues = Vec::new();
        if samples.ncols() < 2 {
            issues.push(ValidationIssue::TooShort { len: samples.ncols() });
        }
        if samples.nrows() != layout.len() {
            for step in 0..samples.ncols() {
                issues.push(ValidationIssue::DimensionMismatch {
                    step,
                    expected: layout.len(),
                    got: samples.nrows(),
                });
            }
        }
        for step in 0..samples.ncols() {
            for channel in 0..samples.nrows() {
                if !samples[(channel, step)].is_finite() {
                    issues.push(ValidationIssue::NonFinite { channel, step });
                }
            }
        }
        if !(timestep.is_finite() && timestep > 0.0) {
            issues.push(ValidationIssue::BadTimestep { timestep });
        }
        if issues.is_empty() {
            Ok(Interaction { layout, samples, timestep })
        } else {
            Err(Error::Validation(ValidationReport { issues }))
        }
    }

    /// Builds from per-timestep rows (each of layout dimension).
    pub fn from_rows(layout: SensorLayout, rows: &[Vec<f64>], timestep: f64) -> Result<Self> {
        let t = rows.len();
        let d = layout.len();
        let mut samples = DMatrix::zeros(d, t);
        for (step, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Validation(ValidationReport {
                    issues: vec![ValidationIssue::DimensionMismatch {
                        step,
                        expected: d,
                        got: row.len(),
                    }],
                }));
            }
            for (channel, &v) in row.iter().enumerate() {
                samples[(channel, step)] = v;
            }
        }
        Interaction::new(layout, samples, timestep)
    }

    pub fn layout(&self) -> &SensorLayout {
        &self.layout
    }

    /// Number of timesteps T.
    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    /// Number of channels D.
    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    pub fn timestep(&self) -> f64 {
        self.timestep
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn value(&self, channel: usize, step: usize) -> f64 {
        self.samples[(channel, step)]
    }

    /// One channel's full time series.
    pub fn channel_series(&self, channel: usize) -> Vec<f64> {
        self.samples.row(channel).iter().copied().collect()
    }

    /// One timestep as a vector over all channels.
    pub fn sample(&self, step: usize) -> Vec<f64> {
        self.samples.column(step).iter().copied().collect()
    }
}

/// Returns the interaction unchanged if all invariants hold; otherwise the
/// full violation report. Construction through [`Interaction::new`] already
/// guarantees validity, so this is primarily useful after deserialization
/// paths that bypass it.
pub fn validate_interaction(interaction: Interaction) -> Result<Interaction> {
    let Interaction { layout, samples, timestep } = interaction;
    Interaction::new(layout, samples, timestep)
}

/// Linearly interpolated relative phase of step `t` in a series of length
/// `len`: endpoints map to exactly 0 and 1.
pub fn phase_of(t: usize, len: usize) -> Result<f64> {
    if len < 2 {
        return Err(Error::Parse(format!("phase_of requires len >= 2, got {len}")));
    }
    if t >= len {
        return Err(Error::Parse(format!("step {t} out of range for length {len}")));
    }
    Ok(t as f64 / (len - 1) as f64)
}

/// Normalized interaction progress and its per-step rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    /// In [0, 1], clamped.
    pub value: f64,
    /// Per-step rate, >= 0.
    pub velocity: f64,
}

impl Phase {
    pub fn new(value: f64, velocity: f64) -> Self {
        Phase { value: value.clamp(0.0, 1.0), velocity: velocity.max(0.0) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_layout() -> SensorLayout {
        SensorLayout::new(vec![
            ChannelSpec::new("pose_0", Modality::Pose, Role::Observed),
            ChannelSpec::new("force_in", Modality::ContactForce, Role::Observed),
            ChannelSpec::new("joint_0", Modality::JointPosition, Role::Controlled),
        ])
        .unwrap()
    }

    #[test]
    fn valid_interaction_accepted_unchanged() {
        let layout = small_layout();
        let rows: Vec<Vec<f64>> = (0..10).map(|t| vec![t as f64, 0.5, -0.1 * t as f64]).collect();
        let i = Interaction::from_rows(layout, &rows, 0.1).unwrap();
        assert_eq!(i.len(), 10);
        assert_eq!(i.dim(), 3);
        let j = validate_interaction(i.clone()).unwrap();
        assert_eq!(i, j);
    }

    #[test]
    fn non_finite_entry_named_in_report() {
        let layout = small_layout();
        let mut samples = DMatrix::zeros(3, 10);
        samples[(2, 5)] = f64::NAN;
        let err = Interaction::new(layout, samples, 0.1).unwrap_err();
        match err {
            Error::Validation(report) => {
                assert_eq!(report.issues, vec![ValidationIssue::NonFinite { channel: 2, step: 5 }]);
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn single_sample_too_short() {
        let layout = small_layout();
        let samples = DMatrix::zeros(3, 1);
        let err = Interaction::new(layout, samples, 0.1).unwrap_err();
        match err {
            Error::Validation(report) => {
                assert!(report.issues.contains(&ValidationIssue::TooShort { len: 1 }));
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn all_violations_reported_together() {
        let layout = small_layout();
        let mut samples = DMatrix::zeros(3, 1);
        samples[(0, 0)] = f64::INFINITY;
        let err = Interaction::new(layout, samples, 0.0).unwrap_err();
        match err {
            Error::Validation(report) => {
                assert_eq!(report.issues.len(), 3);
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn layout_rejects_duplicate_names() {
        let err = SensorLayout::new(vec![
            ChannelSpec::new("a", Modality::Pose, Role::Observed),
            ChannelSpec::new("a", Modality::JointPosition, Role::Controlled),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn layout_rejects_grouped_non_force() {
        let err = SensorLayout::new(vec![
            ChannelSpec::new("a", Modality::Pose, Role::Observed).with_group("g0"),
            ChannelSpec::new("b", Modality::JointPosition, Role::Controlled),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("group_id"));
    }

    #[test]
    fn layout_requires_both_roles() {
        assert!(SensorLayout::new(vec![ChannelSpec::new(
            "a",
            Modality::Pose,
            Role::Observed
        )])
        .is_err());
    }

    #[test]
    fn phase_endpoints_exact() {
        assert_eq!(phase_of(0, 100).unwrap(), 0.0);
        assert_eq!(phase_of(99, 100).unwrap(), 1.0);
        assert_eq!(phase_of(49, 99).unwrap(), 49.0 / 98.0);
        assert!(phase_of(100, 100).is_err());
        assert!(phase_of(0, 1).is_err());
    }

    #[test]
    fn phase_clamps() {
        let p = Phase::new(1.5, -0.2);
        assert_eq!(p.value, 1.0);
        assert_eq!(p.velocity, 0.0);
    }
}
