//! Spatial-sparsity reduction: max-over-group aggregation of co-located
//! force sensors and mutual-information feature selection over basis
//! coefficients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::basis::LatentModel;
use crate::error::{Error, Result};
use crate::model::{ChannelSpec, Interaction, Modality, SensorLayout};

/// Null quantile for the chi-square significance adjustment applied to
/// plug-in MI estimates during selection. 2N ln2 * I_plugin is
/// asymptotically chi-square distributed under independence (the G-test
/// relation), so subtracting this quantile leaves only improvements that
/// clear the estimator's noise floor before the threshold is applied.
pub const MI_NULL_QUANTILE: f64 = 0.90;

/// Default improvement threshold for stopping selection, in bits.
pub const DEFAULT_MI_THRESHOLD: f64 = 0.07;

/// Plug-in bin-count rule: ceil(sqrt(sample count)).
pub fn default_bins(n_samples: usize) -> usize {
    ((n_samples as f64).sqrt().ceil() as usize).max(2)
}

/// Ordered mapping from group id to member force-channel names. The output
/// channel of each group takes the group id as its name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMap {
    groups: Vec<(String, Vec<String>)>,
}

impl GroupMap {
    /// Builds from explicit (id, members) pairs; groups are ordered by id.
    pub fn new(mut groups: Vec<(String, Vec<String>)>) -> Result<Self> {
        groups.sort_by(|a, b| a.0.cmp(&b.0));
        let mut seen = Vec::new();
        for (id, members) in &groups {
            if members.is_empty() {
                return Err(Error::Layout(format!("group '{id}' has no members")));
            }
            for m in members {
                if seen.contains(m) {
                    return Err(Error::Layout(format!(
                        "channel '{m}' appears in more than one group"
                    )));
                }
                seen.push(m.clone());
            }
        }
        if groups.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Layout("duplicate group id".into()));
        }
        Ok(GroupMap { groups })
    }

    /// Collects the group structure declared by a layout's `group_id` tags.
    /// Returns `None` when the layout has no grouped channels.
    pub fn from_layout(layout: &SensorLayout) -> Result<Option<Self>> {
        let mut groups: Vec<(String, Vec<String>)> = Vec::new();
        for c in layout.channels() {
            if let Some(id) = &c.group_id {
                match groups.iter_mut().find(|(g, _)| g == id) {
                    Some((_, members)) => members.push(c.name.clone()),
                    None => groups.push((id.clone(), vec![c.name.clone()])),
                }
            }
        }
        if groups.is_empty() {
            return Ok(None);
        }
        GroupMap::new(groups).map(Some)
    }

    pub fn groups(&self) -> &[(String, Vec<String>)] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    fn validate_against(&self, layout: &SensorLayout) -> Result<Vec<(usize, Vec<usize>)>> {
        let mut resolved = Vec::with_capacity(self.groups.len());
        for (gi, (id, members)) in self.groups.iter().enumerate() {
            let mut idx = Vec::with_capacity(members.len());
            for m in members {
                let i = layout
                    .index_of(m)
                    .ok_or_else(|| Error::Layout(format!("group '{id}' member '{m}' not in layout")))?;
                if layout.channel(i).modality != Modality::ContactForce {
                    return Err(Error::Layout(format!(
                        "group '{id}' member '{m}' is not a contact-force channel"
                    )));
                }
                idx.push(i);
            }
            let role = layout.channel(idx[0]).role;
            if idx.iter().any(|&i| layout.channel(i).role != role) {
                return Err(Error::Layout(format!("group '{id}' mixes observed and controlled channels")));
            }
            resolved.push((gi, idx));
        }
        Ok(resolved)
    }
}

/// Replaces each group's member channels with a single channel holding the
/// per-step maximum over members. Non-grouped channels pass through in their
/// original order, followed by one channel per group in group-id order.
pub fn group_reduce(interaction: &Interaction, map: &GroupMap) -> Result<Interaction> {
    let layout = interaction.layout();
    let resolved = map.validate_against(layout)?;
    let grouped: Vec<usize> = resolved.iter().flat_map(|(_, idx)| idx.iter().copied()).collect();

    let mut channels: Vec<ChannelSpec> = Vec::new();
    let mut sources: Vec<Vec<usize>> = Vec::new();
    for (i, c) in layout.channels().iter().enumerate() {
        if !grouped.contains(&i) {
            channels.push(c.clone());
            sources.push(vec![i]);
        }
    }
    for (gi, idx) in &resolved {
        let (id, _) = &map.groups[*gi];
        if channels.iter().any(|c| &c.name == id) {
            return Err(Error::Layout(format!(
                "group output name '{id}' collides with an existing channel"
            )));
        }
        channels.push(ChannelSpec::new(id.clone(), Modality::ContactForce, layout.channel(idx[0]).role));
        sources.push(idx.clone());
    }

    let t_len = interaction.len();
    let mut samples = DMatrix::zeros(channels.len(), t_len);
    for (row, src) in sources.iter().enumerate() {
        for t in 0..t_len {
            samples[(row, t)] = src
                .iter()
                .map(|&i| interaction.value(i, t))
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    Interaction::new(SensorLayout::new(channels)?, samples, interaction.timestep())
}

/// A plug-in mutual-information estimate in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub bits: f64,
    /// Set when either variable had zero variance (all samples in one bin).
    pub degenerate: bool,
    /// Occupied bins per marginal.
    pub occupied: (usize, usize),
}

/// Plug-in mutual information of two samples under equal-width binning of
/// each variable over its observed range.
pub fn mi_binned(x: &[f64], y: &[f64], bins: usize) -> Result<MiEstimate> {
    if x.len() != y.len() {
        return Err(Error::Selection(format!(
            "sample lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Selection("mutual information needs at least 2 samples".into()));
    }
    if bins < 2 {
        return Err(Error::Selection("bin count must be at least 2".into()));
    }
    let xi = match bin_indices(x, bins) {
        Some(v) => v,
        None => return Ok(MiEstimate { bits: 0.0, degenerate: true, occupied: (1, 1) }),
    };
    let yi = match bin_indices(y, bins) {
        Some(v) => v,
        None => return Ok(MiEstimate { bits: 0.0, degenerate: true, occupied: (1, 1) }),
    };
    let n = x.len() as f64;
    let mut joint = vec![0.0f64; bins * bins];
    for (&a, &b) in xi.iter().zip(&yi) {
        joint[a * bins + b] += 1.0;
    }
    let mut px = vec![0.0f64; bins];
    let mut py = vec![0.0f64; bins];
    for a in 0..bins {
        for b in 0..bins {
            let p = joint[a * bins + b] / n;
            px[a] += p;
            py[b] += p;
        }
    }
    let mut bits = 0.0;
    for a in 0..bins {
        for b in 0..bins {
            let p = joint[a * bins + b] / n;
            if p > 0.0 {
                bits += p * (p / (px[a] * py[b])).log2();
            }
        }
    }
    let occupied = (px.iter().filter(|&&p| p > 0.0).count(), py.iter().filter(|&&p| p > 0.0).count());
    Ok(MiEstimate { bits: bits.max(0.0), degenerate: false, occupied })
}

/// Equal-width bin index per sample, or None when the range is empty.
fn bin_indices(v: &[f64], bins: usize) -> Option<Vec<usize>> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return None;
    }
    let scale = bins as f64 / (hi - lo);
    Some(v.iter().map(|&x| (((x - lo) * scale) as usize).min(bins - 1)).collect())
}

/// Noise-adjusted MI used as the selection statistic: the plug-in estimate
/// minus the [`MI_NULL_QUANTILE`] quantile of its null distribution
/// (chi-square with (Ka-1)(Kb-1) degrees of freedom over 2N ln2), floored
/// at zero.
fn mi_adjusted(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    let est = mi_binned(x, y, bins)?;
    if est.degenerate {
        return Ok(0.0);
    }
    let df = (est.occupied.0.saturating_sub(1)) * (est.occupied.1.saturating_sub(1));
    if df == 0 {
        return Ok(0.0);
    }
    let null = ChiSquared::new(df as f64)
        .map_err(|e| Error::Selection(format!("chi-square df {df}: {e}")))?
        .inverse_cdf(MI_NULL_QUANTILE);
    let correction = null / (2.0 * x.len() as f64 * std::f64::consts::LN_2);
    Ok((est.bits - correction).max(0.0))
}

/// Least-squares residual of `target` on an intercept plus the selected
/// summary columns.
fn residualize(target: &[f64], selected: &[&[f64]]) -> Vec<f64> {
    let n = target.len();
    let t = DVector::from_column_slice(target);
    if selected.is_empty() {
        let mean = t.mean();
        return t.iter().map(|v| v - mean).collect();
    }
    let mut design = DMatrix::zeros(n, selected.len() + 1);
    for i in 0..n {
        design[(i, 0)] = 1.0;
        for (j, col) in selected.iter().enumerate() {
            design[(i, j + 1)] = col[i];
        }
    }
    let svd = design.clone().svd(true, true);
    match svd.solve(&t, 1e-12) {
        Ok(beta) => {
            let fitted = design * beta;
            t.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect()
        }
        Err(_) => t.iter().map(|&v| v).collect(),
    }
}

/// Audit record of one greedy selection pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Input channel names in selection order.
    pub selected: Vec<String>,
    /// Score increment of each selection (adjusted bits), each >= threshold.
    pub increments: Vec<f64>,
    /// Cumulative score after each selection; non-decreasing.
    pub mi_trace: Vec<f64>,
    /// The sub-threshold increment that terminated selection, if any
    /// candidates remained.
    pub terminating_increment: Option<f64>,
    pub threshold: f64,
    pub bins: usize,
    /// Estimator description for auditability.
    pub estimator: String,
}

impl SelectionReport {
    /// Human-readable table (channel, increment, cumulative score).
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# {} | bins={} | per-step increment threshold={}\n",
            self.estimator, self.bins, self.threshold
        ));
        out.push_str("channel\tincrement_bits\tcumulative_bits\n");
        for (i, name) in self.selected.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{}\n", name, self.increments[i], self.mi_trace[i]));
        }
        if let Some(t) = self.terminating_increment {
            out.push_str(&format!("# terminated: best remaining increment {t} < threshold\n"));
        }
        out
    }
}

/// Greedy forward selection of input force channels by dependency with the
/// output force channels.
///
/// Each channel is summarized per demonstration by the mean absolute basis
/// coefficient of its weight segment. The increment of a candidate is the
/// summed noise-adjusted MI between the candidate summary and each target
/// summary residualized on the already-selected set, so redundancy with
/// prior selections is handled without an explicit penalty term. Selection
/// stops when the best available increment falls below `threshold`.
pub fn select_inputs(
    demos: &[LatentModel],
    layout: &SensorLayout,
    candidates: &[usize],
    targets: &[usize],
    bins: usize,
    threshold: f64,
) -> Result<SelectionReport> {
    if demos.len() < 2 {
        return Err(Error::Selection("need at least 2 demonstrations".into()));
    }
    if demos.len() < bins {
        return Err(Error::Selection(format!(
            "{} demonstrations with {bins} bins; lower the bin count to at most the demonstration count",
            demos.len()
        )));
    }
    if candidates.is_empty() || targets.is_empty() {
        return Err(Error::Selection("candidates and targets must be non-empty".into()));
    }
    if candidates.iter().any(|c| targets.contains(c)) {
        return Err(Error::Selection("candidates and targets must be disjoint".into()));
    }
    let basis = demos[0].basis();
    if demos.iter().any(|d| d.basis().as_ref() != basis.as_ref()) {
        return Err(Error::Selection("demonstrations use different basis spaces".into()));
    }
    if basis.channel_count() != layout.len() {
        return Err(Error::Selection(format!(
            "basis covers {} channels, layout has {}",
            basis.channel_count(),
            layout.len()
        )));
    }

    let summarize =
        |d: usize| -> Vec<f64> { demos.iter().map(|m| m.channel_magnitude(d)).collect() };
    let cand_summaries: Vec<Vec<f64>> = candidates.iter().map(|&c| summarize(c)).collect();
    let target_summaries: Vec<Vec<f64>> = targets.iter().map(|&t| summarize(t)).collect();

    let mut selected_pos: Vec<usize> = Vec::new();
    let mut increments = Vec::new();
    let mut mi_trace = Vec::new();
    let mut terminating = None;
    let mut cumulative = 0.0;

    while selected_pos.len() < candidates.len() {
        let picked: Vec<&[f64]> = selected_pos.iter().map(|&p| cand_summaries[p].as_slice()).collect();
        let residuals: Vec<Vec<f64>> =
            target_summaries.iter().map(|t| residualize(t, &picked)).collect();
        let mut best: Option<(usize, f64)> = None;
        for (pos, summary) in cand_summaries.iter().enumerate() {
            if selected_pos.contains(&pos) {
                continue;
            }
            let mut inc = 0.0;
            for r in &residuals {
                inc += mi_adjusted(summary, r, bins)?;
            }
            // ties broken by lowest candidate index
            if best.map_or(true, |(_, b)| inc > b + 1e-12) {
                best = Some((pos, inc));
            }
        }
        let Some((pos, inc)) = best else { break };
        if inc < threshold {
            terminating = Some(inc);
            break;
        }
        selected_pos.push(pos);
        increments.push(inc);
        cumulative += inc;
        mi_trace.push(cumulative);
    }

    Ok(SelectionReport {
        selected: selected_pos
            .iter()
            .map(|&p| layout.channel(candidates[p]).name.clone())
            .collect(),
        increments,
        mi_trace,
        terminating_increment: terminating,
        threshold,
        bins,
        estimator: format!(
            "equal-width plug-in MI, chi-square {MI_NULL_QUANTILE} null-quantile adjustment, \
             targets residualized on selected set"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisSpace, LatentModel};
    use crate::model::{ChannelSpec, Modality, Role};
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn grouped_layout() -> SensorLayout {
        SensorLayout::new(vec![
            ChannelSpec::new("j0", Modality::JointPosition, Role::Controlled),
            ChannelSpec::new("f0", Modality::ContactForce, Role::Observed).with_group("gA"),
            ChannelSpec::new("f1", Modality::ContactForce, Role::Observed).with_group("gA"),
            ChannelSpec::new("f2", Modality::ContactForce, Role::Observed).with_group("gA"),
            ChannelSpec::new("f3", Modality::ContactForce, Role::Observed).with_group("gB"),
            ChannelSpec::new("p0", Modality::Pose, Role::Observed),
        ])
        .unwrap()
    }

    #[test]
    fn group_reduce_takes_max() {
        let layout = grouped_layout();
        let rows = vec![vec![0.1, 1.0, 5.0, 3.0, 2.0, 0.5], vec![0.2, 4.0, 1.0, 2.0, 7.0, 0.6]];
        let i = Interaction::from_rows(layout.clone(), &rows, 0.1).unwrap();
        let map = GroupMap::from_layout(&layout).unwrap().unwrap();
        let reduced = group_reduce(&i, &map).unwrap();
        // non-grouped first (j0, p0), then gA, gB
        let names: Vec<&str> = reduced.layout().channels().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["j0", "p0", "gA", "gB"]);
        assert_eq!(reduced.value(2, 0), 5.0);
        assert_eq!(reduced.value(2, 1), 4.0);
        assert_eq!(reduced.value(3, 0), 2.0);
        assert_eq!(reduced.value(3, 1), 7.0);
        // dominance: group output >= every member at every step
        for (t, row) in rows.iter().enumerate() {
            for member in 1..=3 {
                assert!(reduced.value(2, t) >= row[member]);
            }
        }
    }

    #[test]
    fn group_reduce_singleton_identity_and_idempotence() {
        let layout = grouped_layout();
        let rows = vec![vec![0.1, 1.0, 5.0, 3.0, 2.0, 0.5], vec![0.2, 4.0, 1.0, 2.0, 7.0, 0.6]];
        let i = Interaction::from_rows(layout.clone(), &rows, 0.1).unwrap();
        let map = GroupMap::from_layout(&layout).unwrap().unwrap();
        let reduced = group_reduce(&i, &map).unwrap();
        // singleton max equals the sole member
        let singleton = GroupMap::new(vec![("gB".into(), vec!["f3".into()])]).unwrap();
        let only_b = group_reduce(&i, &singleton).unwrap();
        let b_idx = only_b.layout().index_of("gB").unwrap();
        assert_eq!(only_b.value(b_idx, 0), 2.0);
        assert_eq!(only_b.value(b_idx, 1), 7.0);
        // idempotence: re-grouping each group output as a singleton is a no-op
        let regroup = GroupMap::new(vec![
            ("gA".into(), vec!["gA".into()]),
            ("gB".into(), vec!["gB".into()]),
        ])
        .unwrap();
        let again = group_reduce(&reduced, &regroup).unwrap();
        assert_eq!(again, reduced);
    }

    #[test]
    fn group_reduce_unknown_member_fails() {
        let layout = grouped_layout();
        let rows = vec![vec![0.0; 6]; 3];
        let i = Interaction::from_rows(layout, &rows, 0.1).unwrap();
        let map = GroupMap::new(vec![("g".into(), vec!["missing".into()])]).unwrap();
        assert!(group_reduce(&i, &map).is_err());
    }

    #[test]
    fn mi_identity_is_entropy() {
        // x uniform over 4 distinct values
        let x: Vec<f64> = (0..32).map(|k| (k % 4) as f64).collect();
        let est = mi_binned(&x, &x, 4).unwrap();
        assert_relative_eq!(est.bits, 2.0, epsilon = 1e-12);
        // monotone relabeling at equal occupancy
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        let est = mi_binned(&x, &y, 4).unwrap();
        assert_relative_eq!(est.bits, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn mi_independent_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let est = mi_binned(&x, &y, 8).unwrap();
        assert!(est.bits <= 0.02, "independent MI {} > 0.02", est.bits);
    }

    #[test]
    fn mi_zero_variance_degenerate() {
        let x = vec![1.0; 10];
        let y: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let est = mi_binned(&x, &y, 4).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.bits, 0.0);
    }

    /// Independent brute-force MI: builds the joint histogram cell by cell
    /// with nested loops over explicit bin edges.
    pub(crate) fn mi_brute_force(x: &[f64], y: &[f64], bins: usize) -> f64 {
        let n = x.len() as f64;
        let (xlo, xhi) = (
            x.iter().cloned().fold(f64::INFINITY, f64::min),
            x.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
        let (ylo, yhi) = (
            y.iter().cloned().fold(f64::INFINITY, f64::min),
            y.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
        if !(xhi > xlo) || !(yhi > ylo) {
            return 0.0;
        }
        let mut mi = 0.0;
        for a in 0..bins {
            let x0 = xlo + (xhi - xlo) * a as f64 / bins as f64;
            let x1 = xlo + (xhi - xlo) * (a + 1) as f64 / bins as f64;
            let in_x = |v: f64| {
                if a + 1 == bins {
                    v >= x0
                } else {
                    v >= x0 && v < x1
                }
            };
            let pa = x.iter().filter(|&&v| in_x(v)).count() as f64 / n;
            for b in 0..bins {
                let y0 = ylo + (yhi - ylo) * b as f64 / bins as f64;
                let y1 = ylo + (yhi - ylo) * (b + 1) as f64 / bins as f64;
                let in_y = |v: f64| {
                    if b + 1 == bins {
                        v >= y0
                    } else {
                        v >= y0 && v < y1
                    }
                };
                let pb = y.iter().filter(|&&v| in_y(v)).count() as f64 / n;
                let pab = x
                    .iter()
                    .zip(y)
                    .filter(|(&xv, &yv)| in_x(xv) && in_y(yv))
                    .count() as f64
                    / n;
                if pab > 0.0 {
                    mi += pab * (pab / (pa * pb)).log2();
                }
            }
        }
        mi
    }

    #[test]
    fn mi_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.gen_range(20..200);
            let bins = rng.gen_range(2..9);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..5.0)).collect();
            let y: Vec<f64> =
                x.iter().map(|&v| 0.5 * v + rng.gen_range(-1.0..1.0)).collect();
            let est = mi_binned(&x, &y, bins).unwrap();
            let oracle = mi_brute_force(&x, &y, bins);
            assert_relative_eq!(est.bits, oracle, epsilon = 1e-12);
        }
    }

    /// Builds a layout and per-demo latent models whose channel magnitudes
    /// equal the given per-channel summary rows (one basis center per
    /// channel, weight = summary).
    pub(crate) fn summaries_fixture(
        cand: &[(&str, Vec<f64>)],
        targ: &[(&str, Vec<f64>)],
    ) -> (SensorLayout, Vec<LatentModel>, Vec<usize>, Vec<usize>) {
        let mut channels = Vec::new();
        for (name, _) in cand {
            channels.push(ChannelSpec::new(*name, Modality::ContactForce, Role::Observed));
        }
        for (name, _) in targ {
            channels.push(ChannelSpec::new(*name, Modality::ContactForce, Role::Controlled));
        }
        let layout = SensorLayout::new(channels).unwrap();
        let basis = Arc::new(BasisSpace::uniform(layout.len(), 1, 1.0));
        let n_demos = cand[0].1.len();
        let mut demos = Vec::with_capacity(n_demos);
        for j in 0..n_demos {
            let mut w = Vec::new();
            for (_, vals) in cand {
                w.push(vals[j]);
            }
            for (_, vals) in targ {
                w.push(vals[j]);
            }
            demos.push(LatentModel::new(DVector::from_vec(w), Arc::clone(&basis)).unwrap());
        }
        let candidates = (0..cand.len()).collect();
        let targets = (cand.len()..cand.len() + targ.len()).collect();
        (layout, demos, candidates, targets)
    }

    fn informative_fixture(seed: u64, n: usize) -> (SensorLayout, Vec<LatentModel>, Vec<usize>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.7..1.3)).collect();
        let u1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.7..1.3)).collect();
        let jitter = |rng: &mut ChaCha8Rng| 1.0 + 0.005 * rng.gen_range(-1.0..1.0);
        let mut cand: Vec<(&str, Vec<f64>)> = vec![
            ("c0", u0.iter().map(|&v| v * jitter(&mut rng)).collect()),
            ("c1", u1.iter().map(|&v| v * jitter(&mut rng)).collect()),
        ];
        let noise_names = ["n0", "n1", "n2", "n3", "n4", "n5"];
        for name in noise_names {
            cand.push((name, (0..n).map(|_| rng.gen_range(0.7..1.3)).collect()));
        }
        let t0: Vec<f64> = u0
            .iter()
            .zip(&u1)
            .map(|(&a, &b)| (0.65 * a + 0.35 * b) * jitter(&mut rng))
            .collect();
        let t1: Vec<f64> = u0
            .iter()
            .zip(&u1)
            .map(|(&a, &b)| (0.35 * a + 0.65 * b) * jitter(&mut rng))
            .collect();
        summaries_fixture(&cand, &[("t0", t0), ("t1", t1)])
    }

    #[test]
    fn select_inputs_informative_first() {
        let (layout, demos, candidates, targets) = informative_fixture(1, 40);
        let report = select_inputs(&demos, &layout, &candidates, &targets, 6, 0.07).unwrap();
        assert!(report.selected.len() >= 2, "selected {:?}", report.selected);
        let first_two: Vec<&str> = report.selected[..2].iter().map(|s| s.as_str()).collect();
        assert!(first_two.contains(&"c0") && first_two.contains(&"c1"), "{first_two:?}");
        // trace is cumulative and non-decreasing
        for w in report.mi_trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for &inc in &report.increments {
            assert!(inc >= report.threshold);
        }
    }

    #[test]
    fn select_inputs_duplicate_picked_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200;
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.7..1.3)).collect();
        let c1: Vec<f64> = u.iter().map(|&v| v * (1.0 + 0.005 * rng.gen_range(-1.0..1.0))).collect();
        let cand = vec![
            ("c1", c1.clone()),
            ("c2", c1.clone()), // exact duplicate
            ("n0", (0..n).map(|_| rng.gen_range(0.7..1.3)).collect()),
        ];
        let t: Vec<f64> = u.iter().map(|&v| v * (1.0 + 0.01 * rng.gen_range(-1.0..1.0))).collect();
        let (layout, demos, candidates, targets) = summaries_fixture(&cand, &[("t", t)]);
        let report = select_inputs(&demos, &layout, &candidates, &targets, 6, 0.07).unwrap();
        let dups = report.selected.iter().filter(|s| s.as_str() == "c1" || s.as_str() == "c2").count();
        assert_eq!(dups, 1, "selected {:?}", report.selected);
        assert_eq!(report.selected[0], "c1"); // tie broken by lowest index
    }

    #[test]
    fn select_inputs_rejects_too_many_bins() {
        let (layout, demos, candidates, targets) = informative_fixture(1, 10);
        let err = select_inputs(&demos, &layout, &candidates, &targets, 11, 0.07).unwrap_err();
        assert!(err.to_string().contains("lower the bin count"));
    }

    #[test]
    fn select_inputs_rejects_overlap() {
        let (layout, demos, candidates, _) = informative_fixture(1, 10);
        let err = select_inputs(&demos, &layout, &candidates, &candidates, 3, 0.07).unwrap_err();
        assert!(err.to_string().contains("disjoint"));
    }

    #[test]
    fn select_inputs_deterministic() {
        let (layout, demos, candidates, targets) = informative_fixture(9, 40);
        let a = select_inputs(&demos, &layout, &candidates, &targets, 6, 0.07).unwrap();
        let b = select_inputs(&demos, &layout, &candidates, &targets, 6, 0.07).unwrap();
        assert_eq!(a, b);
    }

    proptest::proptest! {
        #[test]
        fn mi_symmetric(values in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 8..120),
                        bins in 2usize..10) {
            let x: Vec<f64> = values.iter().map(|p| p.0).collect();
            let y: Vec<f64> = values.iter().map(|p| p.1).collect();
            let a = mi_binned(&x, &y, bins).unwrap();
            let b = mi_binned(&y, &x, bins).unwrap();
            proptest::prop_assert!((a.bits - b.bits).abs() < 1e-12);
            proptest::prop_assert!(a.bits >= 0.0);
        }
    }
}
