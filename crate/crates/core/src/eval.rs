//! Cross-validated comparison of the model variants: MAE metrics per
//! channel group and look-ahead, plus Mann-Whitney U significance testing
//! between variants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::filter::Session;
use crate::model::{Interaction, Modality, Role, SensorLayout};
use crate::train::{train, TrainParams, TrainedModel, Variant};

/// Mean absolute error over the given channels of two equal-length series
/// of full decoded vectors.
pub fn mae(predicted: &[Vec<f64>], actual: &[Vec<f64>], channels: &[usize]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::Eval(format!(
            "series lengths differ: {} vs {}",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() || channels.is_empty() {
        return Err(Error::Eval("mae needs at least one step and one channel".into()));
    }
    let mut acc = 0.0;
    for (p, a) in predicted.iter().zip(actual) {
        for &c in channels {
            if c >= p.len() || c >= a.len() {
                return Err(Error::Eval(format!("channel {c} out of range")));
            }
            acc += (p[c] - a[c]).abs();
        }
    }
    Ok(acc / (predicted.len() * channels.len()) as f64)
}

/// Midranks of the pooled sample.
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0; // 1-based midrank
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Mann-Whitney U with a two-sided p-value: exact by enumeration over all
/// rank assignments for n + m <= 16, normal approximation with tie
/// correction (and continuity correction) otherwise. Returns (U of `a`, p).
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(Error::Eval("both samples must be non-empty".into()));
    }
    let mut pooled: Vec<f64> = Vec::with_capacity(n + m);
    pooled.extend_from_slice(a);
    pooled.extend_from_slice(b);
    let ranks = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..n].iter().sum();
    let u_a = rank_sum_a - (n * (n + 1)) as f64 / 2.0;
    let center = (n * m) as f64 / 2.0;

    if n + m <= 16 {
        // exact: enumerate every assignment of n pooled ranks to sample a
        let dev_obs = (u_a - center).abs();
        let total = n + m;
        let mut count = 0u64;
        let mut extreme = 0u64;
        let mut chosen: Vec<usize> = Vec::with_capacity(n);
        enumerate_subsets(total, n, 0, &mut chosen, &mut |subset: &[usize]| {
            let rs: f64 = subset.iter().map(|&i| ranks[i]).sum();
            let u = rs - (n * (n + 1)) as f64 / 2.0;
            count += 1;
            if (u - center).abs() >= dev_obs - 1e-9 {
                extreme += 1;
            }
        });
        return Ok((u_a, extreme as f64 / count as f64));
    }

    // tie-corrected normal approximation
    let nm = (n * m) as f64;
    let big_n = (n + m) as f64;
    let mut tie_sum = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_sum += t * t * t - t;
        i = j;
    }
    let variance = nm / 12.0 * (big_n + 1.0 - tie_sum / (big_n * (big_n - 1.0)));
    if variance <= 0.0 {
        return Ok((u_a, 1.0)); // every value tied
    }
    let dev = (u_a - center).abs() - 0.5; // continuity correction
    if dev <= 0.0 {
        return Ok((u_a, 1.0));
    }
    let z = dev / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p = (2.0 * (1.0 - normal.cdf(z))).clamp(f64::MIN_POSITIVE, 1.0);
    Ok((u_a, p))
}

fn enumerate_subsets(
    total: usize,
    k: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    let remaining = k - chosen.len();
    for i in start..=total - remaining {
        chosen.push(i);
        enumerate_subsets(total, k, i + 1, chosen, visit);
        chosen.pop();
    }
}

/// Named set of controlled channels evaluated together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricGroup {
    pub name: String,
    pub channels: Vec<String>,
}

/// Default metric groups: controlled joints, and the controlled force
/// channels split into left/right by name (falling back to halves).
pub fn default_metric_groups(layout: &SensorLayout) -> Vec<MetricGroup> {
    let mut joints = Vec::new();
    let mut forces = Vec::new();
    for c in layout.channels() {
        if c.role != Role::Controlled {
            continue;
        }
        match c.modality {
            Modality::JointPosition => joints.push(c.name.clone()),
            Modality::ContactForce => forces.push(c.name.clone()),
            Modality::Pose => {}
        }
    }
    let mut groups = Vec::new();
    if !joints.is_empty() {
        groups.push(MetricGroup { name: "joints".into(), channels: joints });
    }
    if !forces.is_empty() {
        let left: Vec<String> = forces.iter().filter(|n| n.contains("left")).cloned().collect();
        let right: Vec<String> = forces.iter().filter(|n| n.contains("right")).cloned().collect();
        if !left.is_empty() && !right.is_empty() && left.len() + right.len() == forces.len() {
            groups.push(MetricGroup { name: "left-forces".into(), channels: left });
            groups.push(MetricGroup { name: "right-forces".into(), channels: right });
        } else {
            let half = forces.len() / 2;
            groups.push(MetricGroup {
                name: "left-forces".into(),
                channels: forces[..half].to_vec(),
            });
            groups.push(MetricGroup {
                name: "right-forces".into(),
                channels: forces[half..].to_vec(),
            });
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub folds: usize,
    pub look_aheads: Vec<f64>,
    pub seed: u64,
    pub train: TrainParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 10,
            look_aheads: vec![0.0, 0.05, 0.1],
            seed: 42,
            train: TrainParams::default(),
        }
    }
}

/// One (look-ahead, metric group) cell of a variant's report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeCell {
    pub look_ahead: f64,
    pub group: String,
    /// Mean over held-out demos of the per-demo MAE.
    pub mae: f64,
    /// (demo index, per-demo MAE), sorted by demo index.
    pub per_demo: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Variant,
    pub folds: usize,
    pub seed: u64,
    pub look_aheads: Vec<f64>,
    /// Latent dimension per fold (reductions may differ slightly by fold).
    pub dimensions: Vec<usize>,
    /// Rounded mean latent dimension.
    pub dimension: usize,
    pub cells: Vec<MaeCell>,
}

impl EvalReport {
    pub fn cell(&self, look_ahead: f64, group: &str) -> Option<&MaeCell> {
        self.cells
            .iter()
            .find(|c| c.group == group && (c.look_ahead - look_ahead).abs() < 1e-12)
    }
}

/// Deterministic fold assignment: a seeded shuffle split into `folds`
/// contiguous chunks (the first `n % folds` chunks get one extra demo).
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut at = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        out.push(indices[at..at + size].to_vec());
        at += size;
    }
    out
}

fn session_seed(seed: u64, demo_index: usize) -> u64 {
    seed ^ (demo_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Per-demo MAE of the decoded controlled channels for each (look-ahead,
/// metric group) pair, using one filtering pass per demo.
fn evaluate_demo(
    model: &TrainedModel,
    demo: &Interaction,
    demo_index: usize,
    look_aheads: &[f64],
    groups: &[(String, Vec<usize>)],
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let reduced = model.reduce_interaction(demo)?;
    let frames = model.frames_from(&reduced)?;
    let mut session = Session::new(model.make_ensemble()?, session_seed(seed, demo_index));
    // acc[la][group]
    let mut acc = vec![vec![0.0f64; groups.len()]; look_aheads.len()];
    for (t, frame) in frames.iter().enumerate() {
        session.step(frame)?;
        for (li, &la) in look_aheads.iter().enumerate() {
            let out = session.infer(la);
            for (gi, (_, channels)) in groups.iter().enumerate() {
                for &c in channels {
                    acc[li][gi] += (out.decoded[c] - reduced.value(c, t)).abs();
                }
            }
        }
    }
    let steps = frames.len() as f64;
    Ok(acc
        .into_iter()
        .map(|row| {
            row.into_iter()
                .zip(groups)
                .map(|(a, (_, ch))| a / (steps * ch.len() as f64))
                .collect()
        })
        .collect())
}

/// 10-fold style cross validation of one variant: per fold, train on the
/// remaining demos, filter each held-out demo's observed channels, and
/// aggregate the per-demo MAE of the decoded controlled channels.
pub fn cross_validate(
    demos: &[Interaction],
    layout: &SensorLayout,
    variant: Variant,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if cfg.folds < 2 {
        return Err(Error::Eval(format!("folds must be at least 2, got {}", cfg.folds)));
    }
    if demos.len() < cfg.folds {
        return Err(Error::Eval(format!(
            "{} demos cannot fill {} folds",
            demos.len(),
            cfg.folds
        )));
    }
    if cfg.look_aheads.is_empty() {
        return Err(Error::Eval("look_aheads must be non-empty".into()));
    }
    let metric_groups = default_metric_groups(layout);
    if metric_groups.is_empty() {
        return Err(Error::Eval("no controlled channels to evaluate".into()));
    }

    let folds = fold_assignment(demos.len(), cfg.folds, cfg.seed);
    let mut dimensions = Vec::with_capacity(cfg.folds);
    // per (la, group): (demo index, mae)
    let mut per_cell: Vec<Vec<(usize, f64)>> =
        vec![Vec::new(); cfg.look_aheads.len() * metric_groups.len()];

    for (fold_idx, test_set) in folds.iter().enumerate() {
        let train_demos: Vec<Interaction> = (0..demos.len())
            .filter(|i| !test_set.contains(i))
            .map(|i| demos[i].clone())
            .collect();
        let model = train(&train_demos, layout, variant, &cfg.train)
            .map_err(|e| Error::Eval(format!("fold {fold_idx}: {e}")))?;
        dimensions.push(model.latent_dim());
        // group channel names -> indices in the model's working layout
        let groups: Result<Vec<(String, Vec<usize>)>> = metric_groups
            .iter()
            .map(|g| {
                let idx: Result<Vec<usize>> = g
                    .channels
                    .iter()
                    .map(|n| {
                        model.layout.index_of(n).ok_or_else(|| {
                            Error::Eval(format!("metric channel '{n}' missing after reduction"))
                        })
                    })
                    .collect();
                Ok((g.name.clone(), idx?))
            })
            .collect();
        let groups = groups?;

        let results: Result<Vec<(usize, Vec<Vec<f64>>)>> = test_set
            .par_iter()
            .map(|&demo_index| {
                evaluate_demo(&model, &demos[demo_index], demo_index, &cfg.look_aheads, &groups, cfg.seed)
                    .map(|maes| (demo_index, maes))
                    .map_err(|e| Error::Eval(format!("fold {fold_idx}, demo {demo_index}: {e}")))
            })
            .collect();
        for (demo_index, maes) in results? {
            for (li, row) in maes.iter().enumerate() {
                for (gi, &v) in row.iter().enumerate() {
                    per_cell[li * metric_groups.len() + gi].push((demo_index, v));
                }
            }
        }
    }

    let mut cells = Vec::with_capacity(per_cell.len());
    for (li, &la) in cfg.look_aheads.iter().enumerate() {
        for (gi, g) in metric_groups.iter().enumerate() {
            let mut per_demo = per_cell[li * metric_groups.len() + gi].clone();
            per_demo.sort_by_key(|&(i, _)| i);
            let mean = per_demo.iter().map(|&(_, v)| v).sum::<f64>() / per_demo.len() as f64;
            cells.push(MaeCell { look_ahead: la, group: g.name.clone(), mae: mean, per_demo });
        }
    }
    let dim_mean =
        (dimensions.iter().sum::<usize>() as f64 / dimensions.len() as f64).round() as usize;
    Ok(EvalReport {
        variant,
        folds: cfg.folds,
        seed: cfg.seed,
        look_aheads: cfg.look_aheads.clone(),
        dimensions,
        dimension: dim_mean,
        cells,
    })
}

/// Multi-variant comparison with pairwise significance tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub variants: Vec<Variant>,
    pub dimensions: Vec<usize>,
    pub rows: Vec<ComparisonRow>,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub look_ahead: f64,
    pub group: String,
    pub mae: Vec<f64>,
    pub best: usize,
    /// Pairwise (U, p) over per-demo MAE samples; entry [i][j] compares
    /// variant i against variant j (None on the diagonal).
    pub significance: Vec<Vec<Option<(f64, f64)>>>,
}

impl ComparisonRow {
    /// True when variant `i` is statistically worse than the row's best
    /// method (two-sided p < alpha and a larger MAE).
    pub fn significantly_worse_than_best(&self, i: usize, alpha: f64) -> bool {
        if i == self.best {
            return false;
        }
        match self.significance[i][self.best] {
            Some((_, p)) => p < alpha && self.mae[i] > self.mae[self.best],
            None => false,
        }
    }
}

/// Significance threshold used in the comparison outputs.
pub const SIGNIFICANCE_ALPHA: f64 = 0.05;

pub fn compare_variants(reports: &[EvalReport]) -> Result<ComparisonReport> {
    if reports.is_empty() {
        return Err(Error::Eval("no reports to compare".into()));
    }
    let first = &reports[0];
    for r in reports {
        if r.look_aheads != first.look_aheads {
            return Err(Error::Eval("reports disagree on look-aheads".into()));
        }
    }
    let groups: Vec<String> = {
        let mut seen = Vec::new();
        for c in &first.cells {
            if !seen.contains(&c.group) {
                seen.push(c.group.clone());
            }
        }
        seen
    };
    let mut rows = Vec::new();
    for &la in &first.look_aheads {
        for g in &groups {
            let cells: Result<Vec<&MaeCell>> = reports
                .iter()
                .map(|r| {
                    r.cell(la, g).ok_or_else(|| {
                        Error::Eval(format!("variant {} missing cell ({la}, {g})", r.variant.name()))
                    })
                })
                .collect();
            let cells = cells?;
            let mae: Vec<f64> = cells.iter().map(|c| c.mae).collect();
            let best = mae
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            let n = reports.len();
            let mut significance = vec![vec![None; n]; n];
            if n > 1 {
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        let a: Vec<f64> = cells[i].per_demo.iter().map(|&(_, v)| v).collect();
                        let b: Vec<f64> = cells[j].per_demo.iter().map(|&(_, v)| v).collect();
                        significance[i][j] = Some(mann_whitney_u(&a, &b)?);
                    }
                }
            }
            rows.push(ComparisonRow { look_ahead: la, group: g.clone(), mae, best, significance });
        }
    }
    Ok(ComparisonReport {
        variants: reports.iter().map(|r| r.variant).collect(),
        dimensions: reports.iter().map(|r| r.dimension).collect(),
        rows,
        alpha: SIGNIFICANCE_ALPHA,
    })
}

impl ComparisonReport {
    /// Delimited table: a dimension row, then one MAE row per
    /// (look-ahead, group).
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str("look_ahead\tgroup");
        for v in &self.variants {
            out.push_str(&format!("\t{}", v.name()));
        }
        out.push('\n');
        out.push_str("-\tdimension");
        for d in &self.dimensions {
            out.push_str(&format!("\t{d}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{}\t{}", row.look_ahead, row.group));
            for &m in &row.mae {
                out.push_str(&format!("\t{m:.6}"));
            }
            out.push('\n');
        }
        out
    }

    /// Plain-text summary with best-method highlighting and markers for
    /// methods statistically worse than the best.
    pub fn render_summary(&self) -> String {
        let mut out = String::new();
        out.push_str("variant dimensions: ");
        for (v, d) in self.variants.iter().zip(&self.dimensions) {
            out.push_str(&format!("{}={d} ", v.name()));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("look-ahead {:.2} | {:<13}", row.look_ahead, row.group));
            for (i, v) in self.variants.iter().enumerate() {
                let mark = if i == row.best {
                    "*"
                } else if row.significantly_worse_than_best(i, self.alpha) {
                    "!"
                } else {
                    " "
                };
                out.push_str(&format!("  {}={:.5}{mark}", v.name(), row.mae[i]));
            }
            out.push('\n');
        }
        out.push_str("(* best method, ! statistically worse than best at p < 0.05)\n");
        out
    }
}
