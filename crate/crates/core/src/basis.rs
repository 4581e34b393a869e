//! Gaussian radial basis decomposition over the phase domain: per-channel
//! basis spaces, ridge-regularized weight fitting, decoding back to
//! observation space, and orthogonal least squares selection of a
//! non-uniform basis concentrated on the informative phase subregion.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{phase_of, Interaction};

/// Default ridge regularizer for [`fit`], in channel-unit^2.
pub const DEFAULT_RIDGE: f64 = 1e-6;
/// Default number of uniform candidate centers offered to OLS per channel.
pub const DEFAULT_OLS_CANDIDATES: usize = 64;

fn gaussian(phase: f64, center: f64, width: f64) -> f64 {
    let d = phase - center;
    (-d * d / (2.0 * width * width)).exp()
}

/// Basis centers and shared bandwidth for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelBasis {
    /// Sorted ascending, all within [0, 1].
    pub centers: Vec<f64>,
    /// Bandwidth in phase units.
    pub width: f64,
}

impl ChannelBasis {
    pub fn new(mut centers: Vec<f64>, width: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Basis("channel basis needs at least one center".into()));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::Basis(format!("basis width must be positive, got {width}")));
        }
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if centers.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Basis("basis centers must lie in [0, 1]".into()));
        }
        Ok(ChannelBasis { centers, width })
    }

    /// Evenly spaced centers on [0, 1] inclusive; a single center sits at 0.5.
    /// Width is `width_factor` times the center spacing (spacing is taken as
    /// the full domain for the degenerate single-center case).
    pub fn uniform(count: usize, width_factor: f64) -> Self {
        assert!(count >= 1, "uniform basis needs at least one center");
        let (centers, spacing) = if count == 1 {
            (vec![0.5], 1.0)
        } else {
            let spacing = 1.0 / (count - 1) as f64;
            ((0..count).map(|k| k as f64 * spacing).collect(), spacing)
        };
        ChannelBasis { centers, width: width_factor * spacing }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Gaussian activations at `phase` (clamped to [0, 1]); all in (0, 1].
    pub fn activations(&self, phase: f64) -> DVector<f64> {
        let p = phase.clamp(0.0, 1.0);
        DVector::from_iterator(
            self.centers.len(),
            self.centers.iter().map(|&c| gaussian(p, c, self.width)),
        )
    }
}

/// Per-channel basis configuration for a full layout; the concatenation
/// order of weight segments follows the channel order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpace {
    channels: Vec<ChannelBasis>,
    #[serde(skip)]
    offsets: Vec<usize>,
}

impl BasisSpace {
    pub fn new(channels: Vec<ChannelBasis>) -> Self {
        let offsets = Self::compute_offsets(&channels);
        BasisSpace { channels, offsets }
    }

    /// Same uniform basis for every channel.
    pub fn uniform(n_channels: usize, per_channel: usize, width_factor: f64) -> Self {
        Self::new(vec![ChannelBasis::uniform(per_channel, width_factor); n_channels])
    }

    fn compute_offsets(channels: &[ChannelBasis]) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(channels.len() + 1);
        let mut acc = 0;
        for c in channels {
            offsets.push(acc);
            acc += c.len();
        }
        offsets.push(acc);
        offsets
    }

    /// Rebuild cached offsets; needed after deserialization.
    pub(crate) fn restore(mut self) -> Self {
        self.offsets = Self::compute_offsets(&self.channels);
        self
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, d: usize) -> &ChannelBasis {
        &self.channels[d]
    }

    pub fn channels(&self) -> &[ChannelBasis] {
        &self.channels
    }

    /// Total latent dimension B = sum of per-channel counts.
    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Start of channel `d`'s weight segment in the concatenated vector.
    pub fn offset(&self, d: usize) -> usize {
        self.offsets[d]
    }

    /// Activation row for channel `d` at `phase`.
    pub fn row(&self, d: usize, phase: f64) -> DVector<f64> {
        self.channels[d].activations(phase)
    }

    /// Inner product of channel `d`'s activations with its weight segment.
    pub fn decode_channel(&self, weights: &[f64], d: usize, phase: f64) -> f64 {
        let p = phase.clamp(0.0, 1.0);
        let basis = &self.channels[d];
        let seg = &weights[self.offsets[d]..self.offsets[d + 1]];
        basis
            .centers
            .iter()
            .zip(seg)
            .map(|(&c, &w)| w * gaussian(p, c, basis.width))
            .sum()
    }

    /// Decodes the requested channels from a concatenated weight vector.
    pub fn decode_channels(&self, weights: &[f64], phase: f64, channels: &[usize]) -> Vec<f64> {
        channels.iter().map(|&d| self.decode_channel(weights, d, phase)).collect()
    }
}

/// Activation row of channel `channel` of `basis` at `phase`.
pub fn basis_row(basis: &BasisSpace, channel: usize, phase: f64) -> DVector<f64> {
    basis.row(channel, phase)
}

/// Concatenated basis weights for one demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    weights: DVector<f64>,
    basis: Arc<BasisSpace>,
}

impl LatentModel {
    pub fn new(weights: DVector<f64>, basis: Arc<BasisSpace>) -> Result<Self> {
        if weights.len() != basis.total() {
            return Err(Error::Basis(format!(
                "weight vector length {} does not match basis total {}",
                weights.len(),
                basis.total()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Basis("latent weights must be finite".into()));
        }
        Ok(LatentModel { weights, basis })
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn basis(&self) -> &Arc<BasisSpace> {
        &self.basis
    }

    /// Weight segment belonging to channel `d`.
    pub fn channel_weights(&self, d: usize) -> &[f64] {
        let s = self.basis.offset(d);
        let e = self.basis.offset(d + 1);
        &self.weights.as_slice()[s..e]
    }

    /// Mean absolute coefficient of channel `d`'s segment; the per-channel
    /// scalar summary used by feature selection.
    pub fn channel_magnitude(&self, d: usize) -> f64 {
        let seg = self.channel_weights(d);
        seg.iter().map(|w| w.abs()).sum::<f64>() / seg.len() as f64
    }
}

/// Reconstructs the requested channels at `phase` (clamped to [0, 1]).
pub fn decode(model: &LatentModel, phase: f64, channels: &[usize]) -> Vec<f64> {
    model.basis.decode_channels(model.weights.as_slice(), phase, channels)
}

/// Fit output: the latent model plus the achieved per-channel RMS residual.
#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub model: LatentModel,
    /// Root-mean-square reconstruction error per channel, in channel units.
    pub residuals: Vec<f64>,
}

/// Ridge-regularized least-squares fit of every channel's weight segment.
pub fn fit(interaction: &Interaction, basis: &Arc<BasisSpace>, ridge: f64) -> Result<DecompositionResult> {
    if basis.channel_count() != interaction.dim() {
        return Err(Error::Basis(format!(
            "basis has {} channels, interaction has {}",
            basis.channel_count(),
            interaction.dim()
        )));
    }
    if ridge < 0.0 {
        return Err(Error::Basis(format!("ridge must be >= 0, got {ridge}")));
    }
    let t_len = interaction.len();
    let phases: Vec<f64> = (0..t_len).map(|t| phase_of(t, t_len).expect("validated length")).collect();

    let mut weights = DVector::zeros(basis.total());
    let mut residuals = Vec::with_capacity(interaction.dim());
    for d in 0..interaction.dim() {
        let y = DVector::from_vec(interaction.channel_series(d));
        let (w, rms) = fit_channel(basis.channel(d), &phases, &y, ridge)?;
        let off = basis.offset(d);
        for (k, &v) in w.iter().enumerate() {
            weights[off + k] = v;
        }
        residuals.push(rms);
    }
    let model = LatentModel::new(weights, Arc::clone(basis))?;
    Ok(DecompositionResult { model, residuals })
}

fn fit_channel(
    basis: &ChannelBasis,
    phases: &[f64],
    y: &DVector<f64>,
    ridge: f64,
) -> Result<(DVector<f64>, f64)> {
    let n = phases.len();
    let b = basis.len();
    let mut design = DMatrix::zeros(n, b);
    for (i, &p) in phases.iter().enumerate() {
        for (k, &c) in basis.centers.iter().enumerate() {
            design[(i, k)] = gaussian(p, c, basis.width);
        }
    }
    let mut normal = design.transpose() * &design;
    for k in 0..b {
        normal[(k, k)] += ridge;
    }
    let rhs = design.transpose() * y;
    let chol = Cholesky::new(normal).ok_or_else(|| {
        Error::Basis("singular normal equations; refit with ridge > 0".into())
    })?;
    let w = chol.solve(&rhs);
    let resid = y - &design * &w;
    let rms = (resid.norm_squared() / n as f64).sqrt();
    Ok((w, rms))
}

/// Result of a greedy orthogonal least squares pass: centers in selection
/// order with their error-reduction ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsSelection {
    /// Selected centers, in selection order.
    pub centers: Vec<f64>,
    /// Indices into the candidate list, in selection order.
    pub indices: Vec<usize>,
    /// Error-reduction ratio of each selection; each in [0, 1], sum <= 1.
    pub ratios: Vec<f64>,
    /// Set when the target had nothing to explain (zero variance).
    pub degenerate: bool,
    pub width: f64,
}

impl OlsSelection {
    /// Total fraction of target energy explained.
    pub fn explained(&self) -> f64 {
        self.ratios.iter().sum()
    }

    /// Converts into a channel basis (centers sorted ascending).
    pub fn to_channel_basis(&self) -> Result<ChannelBasis> {
        ChannelBasis::new(self.centers.clone(), self.width)
    }
}

/// Greedy OLS over Gaussian regressors centered at `candidates`, applied to
/// one channel of an interaction. See [`ols_select_samples`] for the stopping
/// rule.
pub fn ols_select(
    interaction: &Interaction,
    channel: usize,
    candidates: &[f64],
    width: f64,
    tolerance: f64,
) -> Result<OlsSelection> {
    let t_len = interaction.len();
    let phases: Vec<f64> = (0..t_len).map(|t| phase_of(t, t_len).expect("validated length")).collect();
    let values = interaction.channel_series(channel);
    ols_select_samples(&phases, &values, candidates, width, tolerance)
}

/// Greedy orthogonal least squares on raw (phase, value) samples.
///
/// At each step the candidate with the maximum error-reduction ratio on the
/// orthogonalized residual is selected (ties broken by lowest candidate
/// index); selection stops once the unexplained ratio drops below
/// `tolerance` or candidates are exhausted. A zero-variance target yields an
/// empty selection with the degenerate flag set.
pub fn ols_select_samples(
    phases: &[f64],
    values: &[f64],
    candidates: &[f64],
    width: f64,
    tolerance: f64,
) -> Result<OlsSelection> {
    if candidates.is_empty() {
        return Err(Error::Basis("OLS candidate list is empty".into()));
    }
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(Error::Basis(format!("OLS tolerance must be in (0, 1), got {tolerance}")));
    }
    if phases.len() != values.len() {
        return Err(Error::Basis("phase and value sample counts differ".into()));
    }
    let n = phases.len();
    let y = DVector::from_column_slice(values);
    let y_energy = y.norm_squared();
    let mean = y.sum() / n as f64;
    let variance = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if y_energy <= 1e-24 || variance <= 1e-24 {
        return Ok(OlsSelection {
            centers: Vec::new(),
            indices: Vec::new(),
            ratios: Vec::new(),
            degenerate: true,
            width,
        });
    }

    // Working copies of each regressor, orthogonalized in place against the
    // selected set as it grows (modified Gram-Schmidt).
    let mut work: Vec<DVector<f64>> = candidates
        .iter()
        .map(|&c| DVector::from_iterator(n, phases.iter().map(|&p| gaussian(p, c, width))))
        .collect();
    let mut available: Vec<bool> = vec![true; candidates.len()];
    let mut selected_q: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut indices = Vec::new();
    let mut ratios = Vec::new();
    let mut explained = 0.0;

    while 1.0 - explained >= tolerance && indices.len() < candidates.len() {
        let mut best: Option<(usize, f64)> = None;
        for (k, w) in work.iter().enumerate() {
            if !available[k] {
                continue;
            }
            let energy = w.norm_squared();
            if energy <= 1e-18 {
                continue;
            }
            let proj = w.dot(&y);
            let ratio = proj * proj / (energy * y_energy);
            if best.map_or(true, |(_, b)| ratio > b) {
                best = Some((k, ratio));
            }
        }
        let Some((k, ratio)) = best else {
            break; // remaining candidates linearly dependent on the selection
        };
        let q = work[k].clone();
        let q_energy = q.norm_squared();
        available[k] = false;
        for (j, w) in work.iter_mut().enumerate() {
            if available[j] {
                let coeff = q.dot(w) / q_energy;
                *w -= &q * coeff;
            }
        }
        selected_q.push((q, q_energy));
        indices.push(k);
        ratios.push(ratio);
        explained += ratio;
    }

    Ok(OlsSelection {
        centers: indices.iter().map(|&k| candidates[k]).collect(),
        indices,
        ratios,
        degenerate: false,
        width,
    })
}

/// Evenly spaced candidate grid on [0, 1] for OLS.
pub fn uniform_candidates(count: usize) -> Vec<f64> {
    ChannelBasis::uniform(count, 1.0).centers
}
