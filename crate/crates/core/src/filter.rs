//! Ensemble recursive Bayesian filter over the augmented state
//! [phase, phase velocity, weights]: constant-velocity prediction,
//! perturbed-measurement update with a sample-covariance gain, and decoded
//! inference with phase look-ahead.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpace, LatentModel};
use crate::error::{Error, Result};
use crate::model::{Phase, SensorLayout};

/// Floor applied to measurement-noise variances.
pub const MIN_MEASUREMENT_VAR: f64 = 1e-6;

/// One step of runtime observations over the observed channels, in layout
/// order. A `None` entry is masked out and contributes nothing to the
/// update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationFrame {
    pub values: Vec<Option<f64>>,
    /// Seconds represented by this frame.
    pub step_duration: f64,
}

impl ObservationFrame {
    pub fn full(values: Vec<f64>, step_duration: f64) -> Self {
        ObservationFrame { values: values.into_iter().map(Some).collect(), step_duration }
    }

    pub fn masked(n_channels: usize, step_duration: f64) -> Self {
        ObservationFrame { values: vec![None; n_channels], step_duration }
    }

    /// Indices (into the observed-channel list) carrying a value.
    pub fn available(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|_| i))
            .collect()
    }

    pub fn is_fully_masked(&self) -> bool {
        self.values.iter().all(|v| v.is_none())
    }
}

/// Diagonal process-noise configuration for the augmented state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessNoise {
    pub phase_var: f64,
    pub velocity_var: f64,
    pub weight_var: f64,
}

impl ProcessNoise {
    pub const ZERO: ProcessNoise =
        ProcessNoise { phase_var: 0.0, velocity_var: 0.0, weight_var: 0.0 };

    /// Default: no phase or weight diffusion; phase-velocity diffusion of
    /// (0.1 / mean demo length)^2 per step so temporal adaptation stays
    /// responsive.
    pub fn default_for(mean_length: f64) -> Self {
        let sd = 0.1 / mean_length.max(2.0);
        ProcessNoise { phase_var: 0.0, velocity_var: sd * sd, weight_var: 0.0 }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("phase_var", self.phase_var),
            ("velocity_var", self.velocity_var),
            ("weight_var", self.weight_var),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Filter(format!("process noise {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Decoded posterior summary after one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceOutput {
    /// Posterior mean phase and phase velocity.
    pub phase: Phase,
    /// All channels (observed and controlled) decoded at phase + look-ahead.
    pub decoded: Vec<f64>,
    pub look_ahead: f64,
}

/// Monte Carlo ensemble of augmented states [phase, velocity, weights].
/// Members are stored as columns of an (2 + B) x E matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    members: DMatrix<f64>,
    process_noise: ProcessNoise,
    /// Per observed channel, in observed order.
    measurement_var: Vec<f64>,
    basis: Arc<BasisSpace>,
    layout: SensorLayout,
    observed: Vec<usize>,
}

impl EnsembleState {
    /// Seeds the ensemble directly from the latent representations of the
    /// training demonstrations: member j starts at [0, 1/T_j, w_j].
    pub fn init(
        demos: &[LatentModel],
        lengths: &[usize],
        process_noise: ProcessNoise,
        measurement_var: Vec<f64>,
        layout: &SensorLayout,
    ) -> Result<Self> {
        if demos.len() < 2 {
            return Err(Error::Filter(format!(
                "ensemble needs at least 2 demonstrations, got {}",
                demos.len()
            )));
        }
        if demos.len() != lengths.len() {
            return Err(Error::Filter("demonstration and length counts differ".into()));
        }
        let basis = Arc::clone(demos[0].basis());
        if demos.iter().any(|d| d.basis().as_ref() != basis.as_ref()) {
            return Err(Error::Filter("demonstrations use different basis spaces".into()));
        }
        if lengths.iter().any(|&t| t < 2) {
            return Err(Error::Filter("demonstration lengths must be at least 2".into()));
        }
        let state_dim = 2 + basis.total();
        let mut members = DMatrix::zeros(state_dim, demos.len());
        for (j, (demo, &t_len)) in demos.iter().zip(lengths).enumerate() {
            members[(0, j)] = 0.0;
            members[(1, j)] = 1.0 / t_len as f64;
            for (k, &w) in demo.weights().iter().enumerate() {
                members[(2 + k, j)] = w;
            }
        }
        Self::from_parts(members, process_noise, measurement_var, basis, layout.clone())
    }

    /// Assembles an ensemble from raw member columns. The first two state
    /// rows are phase and phase velocity; the rest follow the basis layout.
    pub fn from_parts(
        members: DMatrix<f64>,
        process_noise: ProcessNoise,
        measurement_var: Vec<f64>,
        basis: Arc<BasisSpace>,
        layout: SensorLayout,
    ) -> Result<Self> {
        if members.ncols() < 2 {
            return Err(Error::Filter("ensemble needs at least 2 members".into()));
        }
        if members.nrows() != 2 + basis.total() {
            return Err(Error::Filter(format!(
                "member dimension {} does not match 2 + basis total {}",
                members.nrows(),
                2 + basis.total()
            )));
        }
        if basis.channel_count() != layout.len() {
            return Err(Error::Filter(format!(
                "basis covers {} channels, layout has {}",
                basis.channel_count(),
                layout.len()
            )));
        }
        process_noise.validate()?;
        let observed = layout.observed_indices();
        if measurement_var.len() != observed.len() {
            return Err(Error::Filter(format!(
                "{} measurement variances for {} observed channels",
                measurement_var.len(),
                observed.len()
            )));
        }
        if measurement_var.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::Filter("measurement variances must be >= 0".into()));
        }
        for j in 0..members.ncols() {
            if !(0.0..=1.0).contains(&members[(0, j)]) || members[(1, j)] < 0.0 {
                return Err(Error::Filter(format!(
                    "member {j} violates phase/velocity bounds"
                )));
            }
        }
        Ok(EnsembleState { members, process_noise, measurement_var, basis, layout, observed })
    }

    pub fn ensemble_size(&self) -> usize {
        self.members.ncols()
    }

    /// Augmented state dimension 2 + B.
    pub fn state_dim(&self) -> usize {
        self.members.nrows()
    }

    pub fn layout(&self) -> &SensorLayout {
        &self.layout
    }

    pub fn basis(&self) -> &Arc<BasisSpace> {
        &self.basis
    }

    pub fn members(&self) -> &DMatrix<f64> {
        &self.members
    }

    pub fn measurement_var(&self) -> &[f64] {
        &self.measurement_var
    }

    /// Sample mean of the augmented state.
    pub fn mean_state(&self) -> DVector<f64> {
        let e = self.members.ncols() as f64;
        let mut mean = DVector::zeros(self.members.nrows());
        for j in 0..self.members.ncols() {
            mean += self.members.column(j);
        }
        mean / e
    }

    /// Constant-velocity prediction with additive process noise; phases are
    /// clamped to [0, 1] and velocities to >= 0 afterwards.
    pub fn predict(&mut self, rng: &mut ChaCha8Rng) {
        let q = self.process_noise;
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let phase_sd = q.phase_var.sqrt();
        let vel_sd = q.velocity_var.sqrt();
        let weight_sd = q.weight_var.sqrt();
        for j in 0..self.members.ncols() {
            let mut col = self.members.column_mut(j);
            col[0] = (col[0] + col[1]).clamp(0.0, 1.0);
            if phase_sd > 0.0 {
                col[0] = (col[0] + phase_sd * normal.sample(rng)).clamp(0.0, 1.0);
            }
            if vel_sd > 0.0 {
                col[1] = (col[1] + vel_sd * normal.sample(rng)).max(0.0);
            }
            if weight_sd > 0.0 {
                for k in 2..col.nrows() {
                    col[k] += weight_sd * normal.sample(rng);
                }
            }
        }
    }

    /// Perturbed-measurement ensemble update against the frame's available
    /// channels. Returns the mean innovation per observed channel (None for
    /// masked-out channels).
    pub fn update(
        &mut self,
        frame: &ObservationFrame,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Option<f64>>> {
        if frame.values.len() != self.observed.len() {
            return Err(Error::Filter(format!(
                "frame has {} observed channels, model expects {}",
                frame.values.len(),
                self.observed.len()
            )));
        }
        let avail = frame.available();
        if avail.is_empty() {
            return Err(Error::Filter(
                "fully masked frame: skip the update and run predict only".into(),
            ));
        }
        let e = self.members.ncols();
        let s = self.members.nrows();
        let m = avail.len();
        let channels: Vec<usize> = avail.iter().map(|&i| self.observed[i]).collect();
        let obs = DVector::from_iterator(m, avail.iter().map(|&i| frame.values[i].unwrap()));
        let r_diag: Vec<f64> = avail.iter().map(|&i| self.measurement_var[i]).collect();

        // h: decode the masked channel subset at each member's own phase.
        let mut predicted = DMatrix::zeros(m, e);
        for j in 0..e {
            let col = self.members.column(j);
            let phase = col[0];
            let weights = &col.as_slice()[2..];
            for (row, &d) in channels.iter().enumerate() {
                predicted[(row, j)] = self.basis.decode_channel(weights, d, phase);
            }
        }

        let x_mean = self.mean_state();
        let mut y_mean = DVector::zeros(m);
        for j in 0..e {
            y_mean += predicted.column(j);
        }
        y_mean /= e as f64;

        let mut anomalies_x = self.members.clone();
        let mut anomalies_y = predicted.clone();
        for j in 0..e {
            let mut cx = anomalies_x.column_mut(j);
            cx -= &x_mean;
            let mut cy = anomalies_y.column_mut(j);
            cy -= &y_mean;
        }
        let denom = (e - 1) as f64;
        let c_xy = &anomalies_x * anomalies_y.transpose() / denom; // s x m
        let mut c_yy = &anomalies_y * anomalies_y.transpose() / denom; // m x m
        for (row, &v) in r_diag.iter().enumerate() {
            c_yy[(row, row)] += v;
        }
        let chol = Cholesky::new(c_yy).ok_or_else(|| {
            Error::Filter(
                "innovation covariance not positive definite; set measurement noise R > 0".into(),
            )
        })?;
        let gain_t = chol.solve(&c_xy.transpose()); // m x s, K = gain_t'

        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let r_sd: Vec<f64> = r_diag.iter().map(|v| v.sqrt()).collect();
        let mut innovation = DVector::zeros(m);
        for j in 0..e {
            for row in 0..m {
                let perturbed = obs[row] + r_sd[row] * normal.sample(rng);
                innovation[row] = perturbed - predicted[(row, j)];
            }
            let delta = gain_t.transpose() * &innovation; // s x 1
            let mut col = self.members.column_mut(j);
            col += &delta;
            col[0] = col[0].clamp(0.0, 1.0);
            col[1] = col[1].max(0.0);
            debug_assert_eq!(col.nrows(), s);
        }

        let mut report = vec![None; self.observed.len()];
        for (row, &i) in avail.iter().enumerate() {
            report[i] = Some(obs[row] - y_mean[row]);
        }
        Ok(report)
    }

    /// Decodes all channels at the posterior mean phase plus `look_ahead`
    /// (clamped to [0, 1]); the reported phase statistics are unmodified.
    pub fn infer(&self, look_ahead: f64) -> InferenceOutput {
        let mean = self.mean_state();
        let phase = Phase::new(mean[0], mean[1]);
        let decode_at = (mean[0] + look_ahead).clamp(0.0, 1.0);
        let channels: Vec<usize> = (0..self.layout.len()).collect();
        let decoded = self.basis.decode_channels(&mean.as_slice()[2..], decode_at, &channels);
        InferenceOutput { phase, decoded, look_ahead }
    }
}

/// One predict/update cycle's outcome inside a [`Session`].
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// False when the frame was fully masked and only prediction ran.
    pub updated: bool,
    /// Mean innovation per observed channel for updated steps.
    pub innovation: Vec<Option<f64>>,
}

/// A stateful inference session: owns the ensemble and its noise stream.
pub struct Session {
    state: EnsembleState,
    rng: ChaCha8Rng,
    steps: usize,
}

impl Session {
    pub fn new(state: EnsembleState, seed: u64) -> Self {
        Session { state, rng: ChaCha8Rng::seed_from_u64(seed), steps: 0 }
    }

    /// Predict, then update when the frame carries any observation.
    pub fn step(&mut self, frame: &ObservationFrame) -> Result<StepOutcome> {
        self.state.predict(&mut self.rng);
        let outcome = if frame.is_fully_masked() {
            StepOutcome { updated: false, innovation: vec![None; frame.values.len()] }
        } else {
            let innovation = self.state.update(frame, &mut self.rng)?;
            StepOutcome { updated: true, innovation }
        };
        self.steps += 1;
        Ok(outcome)
    }

    pub fn infer(&self, look_ahead: f64) -> InferenceOutput {
        self.state.infer(look_ahead)
    }

    pub fn state(&self) -> &EnsembleState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

use rand::SeedableRng;

/// Runs the full predict/update/infer loop over a frame sequence,
/// deterministic for a given seed. Fully masked frames run predict only.
pub fn run_session(
    state: EnsembleState,
    frames: &[ObservationFrame],
    look_ahead: f64,
    seed: u64,
) -> Result<Vec<InferenceOutput>> {
    if frames.is_empty() {
        return Err(Error::Filter("frame sequence is empty".into()));
    }
    let mut session = Session::new(state, seed);
    let mut outputs = Vec::with_capacity(frames.len());
    for frame in frames {
        session.step(frame)?;
        outputs.push(session.infer(look_ahead));
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisSpace, ChannelBasis, LatentModel};
    use crate::model::{ChannelSpec, Modality, Role, SensorLayout};
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn two_channel_layout() -> SensorLayout {
        SensorLayout::new(vec![
            ChannelSpec::new("obs", Modality::ContactForce, Role::Observed),
            ChannelSpec::new("ctl", Modality::JointPosition, Role::Controlled),
        ])
        .unwrap()
    }

    fn demo_models(weights: &[Vec<f64>], basis: &Arc<BasisSpace>) -> Vec<LatentModel> {
        weights
            .iter()
            .map(|w| LatentModel::new(DVector::from_vec(w.clone()), Arc::clone(basis)).unwrap())
            .collect()
    }

    #[test]
    fn init_sets_velocities_from_lengths() {
        let basis = Arc::new(BasisSpace::uniform(2, 3, 1.0));
        let demos = demo_models(&[vec![0.0; 6], vec![1.0; 6]], &basis);
        let s = EnsembleState::init(
            &demos,
            &[100, 200],
            ProcessNoise::ZERO,
            vec![1e-6],
            &two_channel_layout(),
        )
        .unwrap();
        assert_eq!(s.ensemble_size(), 2);
        assert_relative_eq!(s.members()[(1, 0)], 0.01);
        assert_relative_eq!(s.members()[(1, 1)], 0.005);
        assert_eq!(s.members()[(0, 0)], 0.0);
    }

    #[test]
    fn init_rejects_single_demo_and_mixed_bases() {
        let basis = Arc::new(BasisSpace::uniform(2, 3, 1.0));
        let demos = demo_models(&[vec![0.0; 6]], &basis);
        assert!(EnsembleState::init(
            &demos,
            &[100],
            ProcessNoise::ZERO,
            vec![1e-6],
            &two_channel_layout()
        )
        .is_err());
        let other = Arc::new(BasisSpace::uniform(2, 4, 1.0));
        let mixed = vec![
            LatentModel::new(DVector::zeros(6), Arc::clone(&basis)).unwrap(),
            LatentModel::new(DVector::zeros(8), other).unwrap(),
        ];
        assert!(EnsembleState::init(
            &mixed,
            &[100, 100],
            ProcessNoise::ZERO,
            vec![1e-6],
            &two_channel_layout()
        )
        .is_err());
    }

    #[test]
    fn predict_constant_velocity_and_clamp() {
        let basis = Arc::new(BasisSpace::uniform(2, 1, 1.0));
        let layout = two_channel_layout();
        let mut members = DMatrix::zeros(4, 2);
        members[(0, 0)] = 0.5;
        members[(1, 0)] = 0.01;
        members[(0, 1)] = 1.0;
        members[(1, 1)] = 0.02;
        let mut s =
            EnsembleState::from_parts(members, ProcessNoise::ZERO, vec![1e-6], basis, layout)
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        s.predict(&mut rng);
        assert_relative_eq!(s.members()[(0, 0)], 0.51);
        assert_relative_eq!(s.members()[(1, 0)], 0.01);
        assert_relative_eq!(s.members()[(0, 1)], 1.0); // clamped at the end
    }

    #[test]
    fn predict_velocity_noise_grows_variance_by_q() {
        let basis = Arc::new(BasisSpace::uniform(2, 1, 1.0));
        let layout = two_channel_layout();
        let e = 100_000;
        let mut members = DMatrix::zeros(4, e);
        for j in 0..e {
            members[(1, j)] = 0.5; // far from the >= 0 clamp
        }
        let sigma = 0.01;
        let q = ProcessNoise { phase_var: 0.0, velocity_var: sigma * sigma, weight_var: 0.0 };
        let mut s = EnsembleState::from_parts(members, q, vec![1e-6], basis, layout).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        s.predict(&mut rng);
        let vels: Vec<f64> = (0..e).map(|j| s.members()[(1, j)]).collect();
        let mean = vels.iter().sum::<f64>() / e as f64;
        let var = vels.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (e - 1) as f64;
        assert!(
            (var - sigma * sigma).abs() <= 0.03 * sigma * sigma,
            "variance grew by {var}, expected {} +- 3%",
            sigma * sigma
        );
    }

    #[test]
    fn zero_spread_update_is_identity() {
        let basis = Arc::new(BasisSpace::uniform(2, 2, 1.0));
        let demos = demo_models(&[vec![0.3, 0.5, 0.1, 0.2], vec![0.3, 0.5, 0.1, 0.2]], &basis);
        let mut s = EnsembleState::init(
            &demos,
            &[100, 100],
            ProcessNoise::ZERO,
            vec![1e-4],
            &two_channel_layout(),
        )
        .unwrap();
        let before = s.members().clone();
        let frame = ObservationFrame::full(vec![10.0], 0.03);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        s.update(&frame, &mut rng).unwrap();
        // zero sample covariance means zero gain regardless of innovation
        assert_eq!(s.members(), &before);
    }

    /// Exact Kalman oracle for the update step on a linear-Gaussian system
    /// where members share one fixed phase so decoding is linear in the
    /// weights: y = a w + noise.
    fn kalman_oracle(
        mu0: &[f64],
        var0: &[f64],
        a: f64,
        obs: &[f64],
        r: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        // channels are independent scalar systems here
        mu0.iter()
            .zip(var0)
            .zip(obs)
            .map(|((&m, &v), &y)| {
                let s = a * a * v + r;
                let k = v * a / s;
                (m + k * (y - a * m), (1.0 - k * a) * v)
            })
            .unzip()
    }

    #[test]
    fn update_matches_exact_kalman_scalar() {
        run_linear_gaussian_case(1, 0xBEEF);
    }

    #[test]
    fn update_matches_exact_kalman_dim2_and_5() {
        run_linear_gaussian_case(2, 0xA11CE);
        run_linear_gaussian_case(5, 0x5EED);
    }

    fn run_linear_gaussian_case(dim: usize, seed: u64) {
        let e = 100_000;
        // dim observed channels with one basis center each + 1 controlled
        let mut channels = Vec::new();
        for d in 0..dim {
            channels.push(ChannelSpec::new(
                format!("obs{d}"),
                Modality::ContactForce,
                Role::Observed,
            ));
        }
        channels.push(ChannelSpec::new("ctl", Modality::JointPosition, Role::Controlled));
        let layout = SensorLayout::new(channels).unwrap();
        let basis = Arc::new(BasisSpace::new(vec![
            ChannelBasis::new(vec![0.5], 0.4).unwrap();
            dim + 1
        ]));
        // all members share phase 0.3: activation a is constant
        let phase = 0.3;
        let a = (-(phase - 0.5f64).powi(2) / (2.0 * 0.4 * 0.4)).exp();

        let mu0: Vec<f64> = (0..dim).map(|d| 0.5 + 0.3 * d as f64).collect();
        let var0: Vec<f64> = (0..dim).map(|d| 0.04 + 0.02 * d as f64).collect();
        let obs: Vec<f64> = (0..dim).map(|d| a * (mu0[d] + 0.4) + 0.05 * d as f64).collect();
        let r = 0.02;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let state_dim = 2 + dim + 1;
        let mut members = DMatrix::zeros(state_dim, e);
        for j in 0..e {
            members[(0, j)] = phase;
            for d in 0..dim {
                members[(2 + d, j)] = mu0[d] + var0[d].sqrt() * normal.sample(&mut rng);
            }
        }
        let mut s = EnsembleState::from_parts(
            members,
            ProcessNoise::ZERO,
            vec![r; dim],
            basis,
            layout,
        )
        .unwrap();
        let frame = ObservationFrame::full(obs.clone(), 0.03);
        s.update(&frame, &mut rng).unwrap();

        // sample-based prior moments feed the oracle so only the update
        // mechanism itself is being tested against the closed form
        let (post_mu, post_var) = kalman_oracle(&mu0, &var0, a, &obs, r);
        for d in 0..dim {
            let vals: Vec<f64> = (0..e).map(|j| s.members()[(2 + d, j)]).collect();
            let mean = vals.iter().sum::<f64>() / e as f64;
            let var =
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (e - 1) as f64;
            assert!(
                (mean - post_mu[d]).abs() / post_mu[d].abs() <= 0.02,
                "dim {d}: posterior mean {mean} vs exact {}",
                post_mu[d]
            );
            assert!(
                (var - post_var[d]).abs() / post_var[d] <= 0.02,
                "dim {d}: posterior variance {var} vs exact {}",
                post_var[d]
            );
        }
    }

    #[test]
    fn zero_innovation_leaves_mean_unchanged() {
        let e = 2000;
        let basis = Arc::new(BasisSpace::new(vec![ChannelBasis::new(vec![0.5], 0.4).unwrap(); 2]));
        let layout = two_channel_layout();
        let phase = 0.4;
        let a = (-(phase - 0.5f64).powi(2) / (2.0 * 0.4 * 0.4)).exp();
        let mut members = DMatrix::zeros(4, e);
        // symmetric spread around 1.0
        for j in 0..e {
            let offset = 0.2 * ((j as f64 / e as f64) - 0.5);
            members[(0, j)] = phase;
            members[(2, j)] = 1.0 + offset;
            members[(3, j)] = -offset;
        }
        let r = 1e-12;
        let mut s =
            EnsembleState::from_parts(members, ProcessNoise::ZERO, vec![r], basis, layout).unwrap();
        let before = s.mean_state();
        // observation equals the ensemble-mean prediction
        let frame = ObservationFrame::full(vec![a * 1.0], 0.03);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        s.update(&frame, &mut rng).unwrap();
        let after = s.mean_state();
        for k in 0..4 {
            assert!(
                (after[k] - before[k]).abs() <= 1e-3,
                "state {k} moved from {} to {}",
                before[k],
                after[k]
            );
        }
    }

    #[test]
    fn masked_frames_advance_at_prior_velocity() {
        let basis = Arc::new(BasisSpace::uniform(2, 2, 1.0));
        let demos = demo_models(&[vec![0.1, 0.2, 0.0, 0.1], vec![0.2, 0.1, 0.1, 0.0]], &basis);
        let layout = two_channel_layout();
        let s = EnsembleState::init(&demos, &[100, 200], ProcessNoise::ZERO, vec![1e-6], &layout)
            .unwrap();
        let mean_vel = (0.01 + 0.005) / 2.0;
        let frames = vec![ObservationFrame::masked(1, 0.03); 20];
        let outputs = run_session(s, &frames, 0.0, 7).unwrap();
        for (k, out) in outputs.iter().enumerate() {
            assert_relative_eq!(out.phase.value, mean_vel * (k + 1) as f64, epsilon = 1e-12);
            assert_relative_eq!(out.phase.velocity, mean_vel, epsilon = 1e-12);
        }
    }

    #[test]
    fn update_rejects_fully_masked_and_wrong_width() {
        let basis = Arc::new(BasisSpace::uniform(2, 1, 1.0));
        let demos = demo_models(&[vec![0.0, 0.0], vec![0.1, 0.1]], &basis);
        let layout = two_channel_layout();
        let mut s =
            EnsembleState::init(&demos, &[50, 60], ProcessNoise::ZERO, vec![1e-6], &layout)
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(s.update(&ObservationFrame::masked(1, 0.03), &mut rng).is_err());
        assert!(s.update(&ObservationFrame::full(vec![0.0, 1.0], 0.03), &mut rng).is_err());
    }

    #[test]
    fn ensemble_invariants_hold_after_operations() {
        let basis = Arc::new(BasisSpace::uniform(2, 3, 1.0));
        let demos = demo_models(
            &[vec![0.5, -0.2, 0.1, 0.0, 0.3, -0.1], vec![0.4, 0.1, -0.3, 0.2, 0.0, 0.1]],
            &basis,
        );
        let layout = two_channel_layout();
        let q = ProcessNoise { phase_var: 1e-4, velocity_var: 1e-5, weight_var: 1e-4 };
        let mut s = EnsembleState::init(&demos, &[80, 90], q, vec![1e-3], &layout).unwrap();
        let e0 = s.ensemble_size();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for step in 0..50 {
            s.predict(&mut rng);
            let frame = ObservationFrame::full(vec![0.2 * (step as f64 / 50.0)], 0.03);
            s.update(&frame, &mut rng).unwrap();
            assert_eq!(s.ensemble_size(), e0);
            for j in 0..e0 {
                assert!((0.0..=1.0).contains(&s.members()[(0, j)]));
                assert!(s.members()[(1, j)] >= 0.0);
            }
        }
        let out = s.infer(0.1);
        assert_eq!(out.decoded.len(), 2);
        assert!((0.0..=1.0).contains(&out.phase.value));
    }
}
