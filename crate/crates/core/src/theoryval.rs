//! Synthetic experiments for the agreement-gap theory: gap size and
//! significance on a fixed split, its persistence in sample size, its growth
//! with interaction density, the additive escape condition, and the two
//! attribution lemmas behind it.

use crate::agreement::{agreement_gap, lottery_rate_where, spearman, AgreementTable, NamedModel, PairClass};
use crate::attribution::{
    exact_shapley, explain, linear_shap, tree_shap, value_interventional, BackgroundSet, ExplainContext,
};
use crate::data::{generate_synthetic, split, Dataset, SplitSpec, SyntheticSpec};
use crate::models::{self, GbtConfig, LogisticConfig, ModelConfig, ModelPayload};
use crate::pipeline::{default_roster, run_split, AttributionOptions, RosterEntry};
use crate::stats;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Band around zero accepted as "no gap" for finite samples.
pub const NULL_GAP_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dgp: SyntheticSpec,
    pub roster: Vec<RosterEntry>,
    pub seeds: Vec<u64>,
    pub n: usize,
    pub tau: f64,
    pub train_fraction: f64,
    pub intra: PairClass,
    pub inter: PairClass,
    pub attribution: AttributionOptions,
}

impl ExperimentSpec {
    /// Default roster on `dgp`, five seeds, `n = 2000`, 80/20 split, `tau = 0.5`.
    pub fn new(dgp: SyntheticSpec) -> Self {
        Self {
            dgp,
            roster: default_roster(),
            seeds: vec![42, 123, 456, 789, 1011],
            n: 2000,
            tau: 0.5,
            train_fraction: 0.8,
            intra: PairClass::IntraTree,
            inter: PairClass::CrossTreeLinear,
            attribution: AttributionOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::invalid("experiment needs at least one seed"));
        }
        let classes: Vec<_> = self.roster.iter().map(|e| e.config.hypothesis_class()).collect();
        let has = |pc: PairClass| {
            (0..classes.len()).any(|i| (i + 1..classes.len()).any(|j| PairClass::of(classes[i], classes[j]) == pc))
        };
        if !has(self.intra) || !has(self.inter) {
            return Err(Error::invalid(format!(
                "roster lacks a {} or a {} pair",
                self.intra, self.inter
            )));
        }
        Ok(())
    }
}

/// Noiseless `d = 6` DGP with weak main effects (`beta_j = 0.1`) and `alpha_12 = 2`.
///
/// Every feature carries a main effect. Features the trees never split on
/// get exactly zero attribution, and those ties would otherwise inflate
/// tree-tree agreement even without interactions.
pub fn interaction_dgp() -> SyntheticSpec {
    SyntheticSpec::additive(vec![0.1; 6], 0.0).with_interaction(0, 1, 2.0)
}

/// [`interaction_dgp`] without its interaction term.
pub fn additive_dgp() -> SyntheticSpec {
    interaction_dgp().scale_interactions(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub seed: u64,
    pub n: usize,
    pub rho_intra: f64,
    pub rho_inter: f64,
    pub delta: f64,
    pub lottery_rate_inter: f64,
    pub lottery_rate_intra: f64,
    pub p_value: f64,
    pub cohens_d: f64,
    pub cles: f64,
    pub equivalence_coverage: f64,
    pub n_equivalent: usize,
    #[serde(skip)]
    pub table: AgreementTable,
}

impl GapResult {
    fn from_table(table: AgreementTable, spec: &ExperimentSpec, seed: u64, coverage: f64, n_equivalent: usize) -> Result<Self> {
        let intra = table.rhos(spec.intra);
        let inter = table.rhos(spec.inter);
        let delta = agreement_gap(&table, spec.intra, spec.inter)?;
        let test = stats::mann_whitney_u(&intra, &inter)?;
        let effects = stats::effect_sizes(&intra, &inter)?;
        let rate = |class: PairClass| -> Result<f64> {
            Ok(lottery_rate_where(&table, spec.tau, |r| r.pair.pair_class == class, None)?.rate)
        };
        Ok(Self {
            seed,
            n: spec.n,
            rho_intra: stats::mean(&intra),
            rho_inter: stats::mean(&inter),
            delta,
            lottery_rate_inter: rate(spec.inter)?,
            lottery_rate_intra: rate(spec.intra)?,
            p_value: test.p_value,
            cohens_d: effects.cohens_d,
            cles: effects.cles,
            equivalence_coverage: coverage,
            n_equivalent,
            table,
        })
    }
}

/// Generate data for `seed`, split it once, and measure the gap on that split.
pub fn run_gap_experiment(spec: &ExperimentSpec, seed: u64) -> Result<GapResult> {
    spec.validate()?;
    let ds = generate_synthetic(&spec.dgp, spec.n, seed)?;
    let (train, test) = split(&ds, &SplitSpec::new(seed, spec.train_fraction))?;
    let run = run_split(&train, &test, &spec.roster, seed, &spec.attribution)?;
    GapResult::from_table(run.table, spec, seed, run.equivalent.coverage_fraction, run.equivalent.len())
}

/// [`run_gap_experiment`] for every seed of the spec, in seed order.
pub fn run_gap_seeds(spec: &ExperimentSpec) -> Result<Vec<GapResult>> {
    spec.seeds.par_iter().map(|&s| run_gap_experiment(spec, s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub abscissa: f64,
    pub mean_delta: f64,
    pub per_seed: Vec<GapResult>,
}

impl SweepPoint {
    fn new(abscissa: f64, per_seed: Vec<GapResult>) -> Self {
        let deltas: Vec<f64> = per_seed.iter().map(|g| g.delta).collect();
        Self {
            abscissa,
            mean_delta: stats::mean(&deltas),
            per_seed,
        }
    }

    fn mean_of(&self, f: impl Fn(&GapResult) -> f64) -> f64 {
        self.per_seed.iter().map(f).sum::<f64>() / self.per_seed.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
    /// Persistence: last-point gap at least half the curve maximum.
    /// Density: Spearman correlation of abscissa and mean gap.
    pub statistic: Option<f64>,
    pub pass: Option<bool>,
}

impl SweepCurve {
    pub fn deltas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_delta).collect()
    }

    /// Columns: abscissa, rho_intra, rho_inter, delta, lottery_rate, p, d (seed means).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["abscissa", "rho_intra", "rho_inter", "delta", "lottery_rate", "p", "d"])?;
        for p in &self.points {
            w.write_record([
                p.abscissa.to_string(),
                p.mean_of(|g| g.rho_intra).to_string(),
                p.mean_of(|g| g.rho_inter).to_string(),
                p.mean_delta.to_string(),
                p.mean_of(|g| g.lottery_rate_inter).to_string(),
                p.mean_of(|g| g.p_value).to_string(),
                p.mean_of(|g| g.cohens_d).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<sweep csv>", e))?;
        Ok(())
    }
}

fn sorted_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("sweep grid must be nonempty and finite"));
    }
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    if g.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("sweep grid has repeated values"));
    }
    Ok(g)
}

/// Gap per sample size; passes when the largest-n gap keeps at least half of the maximum.
pub fn run_persistence_sweep(spec: &ExperimentSpec, n_grid: &[usize]) -> Result<SweepCurve> {
    let grid = sorted_grid(&n_grid.iter().map(|&n| n as f64).collect::<Vec<_>>())?;
    let points = grid
        .par_iter()
        .map(|&n| {
            let s = ExperimentSpec { n: n as usize, ..spec.clone() };
            Ok(SweepPoint::new(n, run_gap_seeds(&s)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let deltas: Vec<f64> = points.iter().map(|p| p.mean_delta).collect();
    let max = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let last = *deltas.last().expect("grid nonempty");
    Ok(SweepCurve {
        statistic: Some(last),
        pass: Some(last >= 0.5 * max),
        points,
    })
}

/// Gap per interaction scale; the statistic is Spearman(scale, mean gap),
/// undefined for a single-point grid.
pub fn run_density_sweep(spec: &ExperimentSpec, alpha_grid: &[f64]) -> Result<SweepCurve> {
    let grid = sorted_grid(alpha_grid)?;
    let points = grid
        .par_iter()
        .map(|&a| {
            let s = ExperimentSpec {
                dgp: spec.dgp.scale_interactions(a),
                ..spec.clone()
            };
            Ok(SweepPoint::new(a, run_gap_seeds(&s)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let statistic = if points.len() < 2 {
        None
    } else {
        let deltas: Vec<f64> = points.iter().map(|p| p.mean_delta).collect();
        spearman(&grid, &deltas)?
    };
    Ok(SweepCurve {
        pass: statistic.map(|s| s >= 0.9),
        statistic,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearCollapse {
    pub max_abs_diff: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Closed-form linear attributions against brute-force Shapley values with a
/// feature-means background, on up to 20 training rows.
pub fn verify_linear_collapse(train: &Dataset, tol: f64) -> Result<LinearCollapse> {
    let model = models::train(train, &ModelConfig::Logistic(LogisticConfig::default()), 0)?;
    let ModelPayload::Linear(lin) = &model.payload else {
        unreachable!("logistic trainer yields a linear payload")
    };
    let background = BackgroundSet::means_only(lin.feature_means.clone())?;
    let mut max_abs_diff: f64 = 0.0;
    for x in train.rows().take(20) {
        let closed = linear_shap(lin, x)?;
        let brute = exact_shapley(|s| value_interventional(|z| lin.margin(z), x, s, &background), x.len())?;
        for (a, b) in closed.phi.iter().zip(&brute.phi) {
            max_abs_diff = max_abs_diff.max((a - b).abs());
        }
    }
    Ok(LinearCollapse {
        max_abs_diff,
        tol,
        pass: max_abs_diff <= tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionProbe {
    /// Largest change of the tree attribution of feature `i` when only feature `j` moves.
    pub tree_diff: f64,
    pub linear_diff: f64,
    pub pass: bool,
}

/// Probe whether the attribution of `i` depends on the value of `j`: rows of
/// the data are evaluated with `x_j = -1` and `x_j = +1`.
pub fn verify_tree_interaction(data: &Dataset, gbt: &GbtConfig, i: usize, j: usize) -> Result<InteractionProbe> {
    let d = data.n_features();
    if i >= d || j >= d || i == j {
        return Err(Error::invalid("probe needs two distinct in-range features"));
    }
    let tree = models::train_gbt(data, gbt, 0)?;
    let lin = models::train_logistic(data, &LogisticConfig::default())?;
    let (mut tree_diff, mut linear_diff): (f64, f64) = (0.0, 0.0);
    for x in data.rows().take(50) {
        let mut lo = x.to_vec();
        let mut hi = x.to_vec();
        lo[j] = -1.0;
        hi[j] = 1.0;
        tree_diff = tree_diff.max((tree_shap(&tree, &hi)?.phi[i] - tree_shap(&tree, &lo)?.phi[i]).abs());
        linear_diff = linear_diff.max((linear_shap(&lin, &hi)?.phi[i] - linear_shap(&lin, &lo)?.phi[i]).abs());
    }
    Ok(InteractionProbe {
        tree_diff,
        linear_diff,
        pass: tree_diff > 1e-3 && linear_diff <= 1e-9,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticityReport {
    pub repeats: usize,
    /// Mean per-feature variance over repeated explanations of each model.
    pub within_variance: f64,
    /// Mean per-feature variance across roster models.
    pub cross_variance: f64,
    /// `cross / within`; infinite when the engines are deterministic.
    pub ratio: f64,
}

/// L1-normalized attribution shares, so models on different output scales compare.
fn shares(phi: &[f64]) -> Vec<f64> {
    let total: f64 = phi.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        phi.to_vec()
    } else {
        phi.iter().map(|v| v / total).collect()
    }
}

fn mean_feature_variance(vectors: &[Vec<f64>]) -> f64 {
    let d = vectors[0].len();
    (0..d)
        .map(|f| stats::variance(&vectors.iter().map(|v| v[f]).collect::<Vec<_>>()))
        .sum::<f64>()
        / d as f64
}

/// Explain `x` `repeats` times per model (each repeat on a fresh sampling
/// stream) and compare the within-model spread to the across-model spread.
pub fn stochasticity_control(
    models: &[NamedModel],
    x: &[f64],
    repeats: usize,
    ctx: &ExplainContext,
) -> Result<StochasticityReport> {
    if models.len() < 2 || repeats < 2 {
        return Err(Error::invalid("stochasticity control needs >= 2 models and >= 2 repeats"));
    }
    let runs: Vec<Vec<Vec<f64>>> = models
        .iter()
        .map(|m| {
            (0..repeats as u64)
                .map(|r| Ok(shares(&explain(&m.model, x, ctx, r)?.phi)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let within = runs.iter().map(|r| mean_feature_variance(r)).sum::<f64>() / runs.len() as f64;
    let first: Vec<Vec<f64>> = runs.iter().map(|r| r[0].clone()).collect();
    let cross = mean_feature_variance(&first);
    Ok(StochasticityReport {
        repeats,
        within_variance: within,
        cross_variance: cross,
        ratio: if within == 0.0 { f64::INFINITY } else { cross / within },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{KernelOptions, LinearEngine, Scale};
    use crate::pipeline::preset;

    fn small_spec(dgp: SyntheticSpec) -> ExperimentSpec {
        ExperimentSpec {
            roster: ["gbt", "gbt2", "cart", "logistic", "ridge"].iter().map(|n| preset(n).unwrap()).collect(),
            seeds: vec![1, 2],
            n: 400,
            ..ExperimentSpec::new(dgp)
        }
    }

    #[test]
    fn gap_is_recomputable_from_table() {
        let g = run_gap_experiment(&small_spec(interaction_dgp()), 7).unwrap();
        let intra = g.table.rhos(PairClass::IntraTree);
        let inter = g.table.rhos(PairClass::CrossTreeLinear);
        assert!((g.delta - (stats::mean(&intra) - stats::mean(&inter))).abs() < 1e-12);
        assert!((g.delta - (g.rho_intra - g.rho_inter)).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&g.equivalence_coverage));
    }

    #[test]
    fn roster_without_requested_pairs_is_rejected() {
        let spec = ExperimentSpec {
            roster: vec![preset("logistic").unwrap(), preset("ridge").unwrap()],
            ..small_spec(interaction_dgp())
        };
        assert!(run_gap_experiment(&spec, 1).is_err());
    }

    #[test]
    fn single_point_density_grid_is_undefined() {
        let spec = ExperimentSpec {
            seeds: vec![1],
            ..small_spec(interaction_dgp())
        };
        let curve = run_density_sweep(&spec, &[1.0]).unwrap();
        assert_eq!((curve.statistic, curve.pass), (None, None));
        assert!(run_density_sweep(&spec, &[]).is_err());
    }

    #[test]
    fn persistence_grid_is_sorted() {
        let spec = ExperimentSpec {
            seeds: vec![1],
            ..small_spec(interaction_dgp())
        };
        let curve = run_persistence_sweep(&spec, &[600, 300]).unwrap();
        assert_eq!(curve.points.iter().map(|p| p.abscissa).collect::<Vec<_>>(), vec![300.0, 600.0]);
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn linear_collapse_holds_and_zero_model_is_trivial() {
        let ds = generate_synthetic(&SyntheticSpec::additive(vec![1.0, -0.5, 0.3, 0.0, 2.0, -1.0], 0.5), 300, 4).unwrap();
        let res = verify_linear_collapse(&ds, 1e-9).unwrap();
        assert!(res.pass, "{res:?}");
    }

    #[test]
    fn interaction_probe() {
        let ds = generate_synthetic(&interaction_dgp(), 1000, 3).unwrap();
        let probe = verify_tree_interaction(&ds, &GbtConfig::default(), 0, 1).unwrap();
        assert!(probe.pass, "{probe:?}");
        assert!(probe.linear_diff <= 1e-9);

        let additive = generate_synthetic(&additive_dgp(), 1000, 3).unwrap();
        let stumps = GbtConfig {
            max_depth: 1,
            ..GbtConfig::default()
        };
        assert!(verify_tree_interaction(&additive, &stumps, 0, 1).unwrap().tree_diff <= 0.05);
    }

    #[test]
    fn stochasticity_tree_exact_kernel_noisy() {
        let ds = generate_synthetic(&interaction_dgp(), 500, 2).unwrap();
        let roster: Vec<_> = ["gbt", "cart", "logistic"].iter().map(|n| preset(n).unwrap()).collect();
        let models = crate::pipeline::train_roster(&ds, &roster, 2).unwrap();
        let mut ctx = ExplainContext {
            background: BackgroundSet::sample(&ds, 50, 1).unwrap(),
            kernel: KernelOptions {
                n_samples: 30,
                ..KernelOptions::default()
            },
            linear_engine: LinearEngine::Exact,
            scale: Scale::Margin,
        };
        let trees = &models[..2];
        let det = stochasticity_control(trees, ds.row(0), 10, &ctx).unwrap();
        assert_eq!(det.within_variance, 0.0);
        assert!(det.cross_variance > 0.0);

        ctx.linear_engine = LinearEngine::Kernel;
        let noisy = stochasticity_control(&models[1..], ds.row(0), 10, &ctx).unwrap();
        assert!(noisy.within_variance > 0.0);
    }
}
