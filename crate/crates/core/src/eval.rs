//! Accuracy, the repeated-round ablation and prototype-stability protocols,
//! the Wilcoxon signed-rank test, and embedding export.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::experiment::{Experiment, RunSeeds};
use crate::model::ReMarNet;
use crate::rng::{derive_indexed, splitmix64};
use crate::train::TrainMode;

/// Fraction of positions where `pred` equals `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Degenerate("accuracy of an empty set".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Which output a prediction is read from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Prediction {
    Rm,
    Fc,
    Ensemble,
}

impl Prediction {
    pub fn name(self) -> &'static str {
        match self {
            Prediction::Rm => "rm",
            Prediction::Fc => "fc",
            Prediction::Ensemble => "ensemble",
        }
    }
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The predictions reported for a training mode. A single-branch run
/// reports only its own branch.
pub fn predictions_for(mode: TrainMode) -> &'static [Prediction] {
    match mode {
        TrainMode::SingleRm => &[Prediction::Rm],
        TrainMode::SingleFc => &[Prediction::Fc],
        TrainMode::Joint => &[Prediction::Rm, Prediction::Fc, Prediction::Ensemble],
    }
}

/// Mean and (population) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Test accuracies of every (mode, prediction) cell over all rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub rounds: usize,
    /// Per-round accuracies, indexed by round.
    pub cells: BTreeMap<(TrainMode, Prediction), Vec<f64>>,
    /// Test samples, summed over joint rounds, where the two branches agreed
    /// but the ensemble picked a different class. Always zero for a correct
    /// ensemble rule.
    pub agreement_violations: usize,
}

impl AblationReport {
    pub fn summary(&self) -> Vec<(TrainMode, Prediction, f64, f64)> {
        self.cells
            .iter()
            .map(|(&(m, p), v)| {
                let (mean, std) = mean_std(v);
                (m, p, mean, std)
            })
            .collect()
    }

    /// `mode,prediction,round,test_acc`, rounds numbered from 0.
    pub fn rounds_csv(&self) -> String {
        let mut out = String::from("mode,prediction,round,test_acc\n");
        for (&(m, p), values) in &self.cells {
            for (r, v) in values.iter().enumerate() {
                out.push_str(&format!("{m},{p},{r},{v}\n"));
            }
        }
        out
    }

    /// `mode,prediction,mean,std`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("mode,prediction,mean,std\n");
        for (m, p, mean, std) in self.summary() {
            out.push_str(&format!("{m},{p},{mean},{std}\n"));
        }
        out
    }
}

/// Test accuracies of one training run, plus its agreement-rule check.
#[derive(Clone, Debug)]
struct RoundRun {
    accs: Vec<(Prediction, f64)>,
    violations: usize,
}

fn train_and_score(exp: &Experiment, seeds: &RunSeeds, mode: TrainMode) -> Result<RoundRun> {
    let outcome = exp.run(seeds, mode, |_| {})?;
    let out = outcome.test_outputs(exp.train.eval_chunk)?;
    let truth = outcome.prepared.test.labels();
    let ens = out.predict()?;
    let rm = out.scores.as_ref().map(|r| r.argmax_rows());
    let fc = out.probs.as_ref().map(|p| p.argmax_rows());
    let mut violations = 0;
    if let (Some(rm), Some(fc)) = (&rm, &fc) {
        violations = (0..ens.len())
            .filter(|&i| rm[i] == fc[i] && ens[i] != rm[i])
            .count();
    }
    let mut accs = Vec::new();
    for &p in predictions_for(mode) {
        let pred = match p {
            Prediction::Rm => rm.as_ref(),
            Prediction::Fc => fc.as_ref(),
            Prediction::Ensemble => Some(&ens),
        };
        let pred = pred.ok_or_else(|| Error::Config(format!("{mode} run has no {p} output")))?;
        accs.push((p, accuracy(pred, truth)?));
    }
    Ok(RoundRun { accs, violations })
}

/// Run `f(i)` for `i in 0..n` on up to `jobs` threads; results keep index
/// order, so the outcome does not depend on `jobs`.
fn parallel_map<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(f).collect();
    }
    let f = &f;
    let mut slots: Vec<Option<Result<T>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                s.spawn(move || {
                    (j..n)
                        .step_by(jobs)
                        .map(|i| (i, f(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every index filled")).collect()
}

/// Seed of round `round` of a protocol started from `seed`.
pub fn round_seed(seed: u64, round: usize) -> u64 {
    splitmix64(seed, round as u64)
}

/// Train every mode in each of `rounds` rounds. Round `r` draws a fresh
/// split, prototypes, initialization and batch order from
/// `splitmix64(exp.train.seed, r)`; the three modes of a round share them.
pub fn run_ablation(exp: &Experiment, rounds: usize, jobs: usize) -> Result<AblationReport> {
    run_ablation_modes(exp, rounds, jobs, &TrainMode::ALL)
}

/// [`run_ablation`] restricted to `modes`.
pub fn run_ablation_modes(
    exp: &Experiment,
    rounds: usize,
    jobs: usize,
    modes: &[TrainMode],
) -> Result<AblationReport> {
    if rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    let tasks: Vec<(usize, TrainMode)> = (0..rounds)
        .flat_map(|r| modes.iter().map(move |&m| (r, m)))
        .collect();
    let runs = parallel_map(tasks.len(), jobs, |i| {
        let (r, mode) = tasks[i];
        train_and_score(exp, &RunSeeds::derive(round_seed(exp.train.seed, r)), mode)
    })?;
    let mut report = AblationReport {
        rounds,
        cells: BTreeMap::new(),
        agreement_violations: 0,
    };
    for (&(_, mode), run) in tasks.iter().zip(runs) {
        report.agreement_violations += run.violations;
        for (p, acc) in run.accs {
            report.cells.entry((mode, p)).or_default().push(acc);
        }
    }
    Ok(report)
}

/// Mean joint-mode ensemble accuracy per prototype set.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub proto_seeds: Vec<u64>,
    /// `per_round[s][r]`: accuracy of set `s` in round `r`.
    pub per_round: Vec<Vec<f64>>,
}

impl StabilityReport {
    pub fn means(&self) -> Vec<(f64, f64)> {
        self.per_round.iter().map(|v| mean_std(v)).collect()
    }

    /// `max(mean) − min(mean)` over prototype sets.
    pub fn spread(&self) -> f64 {
        let means: Vec<f64> = self.means().into_iter().map(|m| m.0).collect();
        let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = means.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// `set,proto_seed,mean,std`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("set,proto_seed,mean,std\n");
        for (s, (mean, std)) in self.means().into_iter().enumerate() {
            out.push_str(&format!("{s},{},{mean},{std}\n", self.proto_seeds[s]));
        }
        out
    }

    /// `set,round,test_acc`.
    pub fn rounds_csv(&self) -> String {
        let mut out = String::from("set,round,test_acc\n");
        for (s, v) in self.per_round.iter().enumerate() {
            for (r, acc) in v.iter().enumerate() {
                out.push_str(&format!("{s},{r},{acc}\n"));
            }
        }
        out
    }
}

/// Prototype seed of set `set` in a stability study started from `seed`.
pub fn proto_set_seed(seed: u64, set: usize) -> u64 {
    derive_indexed(seed, "prototype-set", set as u64)
}

/// Repeat the round protocol (joint mode, ensemble accuracy) for
/// `proto_sets` different prototype draws.
pub fn prototype_stability(exp: &Experiment, proto_sets: usize, rounds: usize, jobs: usize) -> Result<StabilityReport> {
    if proto_sets < 2 {
        return Err(Error::Config("stability needs at least 2 prototype sets".into()));
    }
    let seeds: Vec<u64> = (0..proto_sets).map(|s| proto_set_seed(exp.train.seed, s)).collect();
    prototype_stability_with_seeds(exp, &seeds, rounds, jobs)
}

/// [`prototype_stability`] with explicit prototype seeds. Within round `r`
/// every set shares the split, initialization and batch order; only the
/// prototype draw differs.
pub fn prototype_stability_with_seeds(
    exp: &Experiment,
    proto_seeds: &[u64],
    rounds: usize,
    jobs: usize,
) -> Result<StabilityReport> {
    if rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    let n_sets = proto_seeds.len();
    let accs = parallel_map(n_sets * rounds, jobs, |i| {
        let (s, r) = (i / rounds, i % rounds);
        let seeds = RunSeeds {
            prototypes: proto_seeds[s],
            ..RunSeeds::derive(round_seed(exp.train.seed, r))
        };
        let run = train_and_score(exp, &seeds, TrainMode::Joint)?;
        Ok(run.accs.iter().find(|a| a.0 == Prediction::Ensemble).expect("joint run").1)
    })?;
    Ok(StabilityReport {
        proto_seeds: proto_seeds.to_vec(),
        per_round: accs.chunks(rounds).map(<[f64]>::to_vec).collect(),
    })
}

/// How a Wilcoxon p-value was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WilcoxonMethod {
    Exact,
    NormalApprox,
}

impl fmt::Display for WilcoxonMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WilcoxonMethod::Exact => "exact",
            WilcoxonMethod::NormalApprox => "normal-approx",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WilcoxonResult {
    /// Number of non-zero differences.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub method: WilcoxonMethod,
}

impl fmt::Display for WilcoxonResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={} W+={} p={} method={}", self.n, self.w_plus, self.p, self.method)
    }
}

pub const DEFAULT_EXACT_CUTOFF: usize = 12;

/// Ranks of `values` (1-based), ties sharing their average rank, returned
/// doubled so that every rank is an integer.
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end; twice their mean:
        let doubled = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = doubled;
        }
        start = end;
    }
    ranks
}

/// Wilcoxon signed-rank test of paired samples `x` and `y`.
///
/// Zero differences are dropped and tied magnitudes share average ranks.
/// With at most `exact_cutoff` non-zero differences the two-sided p-value is
/// exact (the null distribution of W+ over all 2ⁿ sign patterns); above it,
/// a normal approximation with tie and continuity corrections is used.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64], exact_cutoff: usize) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::dim(format!("paired samples of lengths {} and {}", x.len(), y.len())));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|&d| d != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite difference".into()));
    }
    if d.is_empty() {
        return Err(Error::Degenerate("degenerate sample: all differences are zero".into()));
    }
    let n = d.len();
    let ranks = doubled_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let w2: u64 = ranks.iter().zip(&d).filter(|(_, &v)| v > 0.0).map(|(r, _)| r).sum();
    let total2 = (n * (n + 1)) as u64;
    let (w_plus, w_minus) = (w2 as f64 / 2.0, (total2 - w2) as f64 / 2.0);
    let (p, method) = if n <= exact_cutoff {
        (exact_p(&ranks, w2), WilcoxonMethod::Exact)
    } else {
        (normal_p(&ranks, w_plus), WilcoxonMethod::NormalApprox)
    };
    Ok(WilcoxonResult {
        n,
        w_plus,
        w_minus,
        p,
        method,
    })
}

/// Count sign patterns by their doubled W+ (subset sums of the doubled ranks).
fn exact_p(ranks: &[u64], w2: u64) -> f64 {
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    for &r in ranks {
        for s in (r as usize..=total as usize).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    let patterns = (1u64 << ranks.len()) as f64;
    let le: u64 = counts[..=w2 as usize].iter().sum();
    let ge: u64 = counts[w2 as usize..].iter().sum();
    (2.0 * le.min(ge) as f64 / patterns).min(1.0)
}

fn normal_p(ranks: &[u64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let ties: f64 = sorted
        .chunk_by(|a, b| a == b)
        .map(|g| {
            let t = g.len() as f64;
            t * t * t - t
        })
        .sum();
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    libm::erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Write `label,f0,…,f(D−1)`: one row per sample with its eval-mode
/// embedding, flattened channel-major.
pub fn export_embeddings(net: &ReMarNet<f32>, ds: &Dataset, path: &Path, chunk: usize) -> Result<()> {
    let feats = net.embed_images(ds.images(), chunk)?;
    let dim = feats.len() / ds.len();
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(w, "label")?;
    for i in 0..dim {
        write!(w, ",f{i}")?;
    }
    writeln!(w)?;
    for (row, &label) in feats.data().chunks(dim).zip(ds.labels()) {
        write!(w, "{label}")?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_basics() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1, 0, 1], &[0, 0, 0, 0]).unwrap(), 0.5);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(doubled_ranks(&[3.0, 1.0, 1.0, 2.0]), vec![8, 3, 3, 6]);
        assert_eq!(doubled_ranks(&[5.0, 5.0, 5.0]), vec![4, 4, 4]);
    }

    #[test]
    fn wilcoxon_examples() {
        let zero = [0.0; 5];
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], &zero, 12).unwrap();
        assert_eq!((r.n, r.w_plus, r.w_minus, r.p), (5, 15.0, 0.0, 0.0625));
        assert_eq!(r.to_string(), "n=5 W+=15 p=0.0625 method=exact");

        let r = wilcoxon_signed_rank(&[1.0, -1.0], &[0.0, 0.0], 12).unwrap();
        assert_eq!((r.w_plus, r.p), (1.5, 1.0));

        assert!(matches!(
            wilcoxon_signed_rank(&zero, &zero, 12),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn wilcoxon_normal_path_is_symmetric() {
        let x: Vec<f64> = (1..=20).map(|i| i as f64 * if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let y = vec![0.0; 20];
        let a = wilcoxon_signed_rank(&x, &y, 12).unwrap();
        let b = wilcoxon_signed_rank(&y, &x, 12).unwrap();
        assert_eq!(a.method, WilcoxonMethod::NormalApprox);
        assert_eq!(a.p, b.p);
        assert_eq!(a.w_plus, b.w_minus);
        assert!(a.p > 0.0 && a.p <= 1.0);
    }

    #[test]
    fn report_csvs() {
        let mut cells = BTreeMap::new();
        cells.insert((TrainMode::Joint, Prediction::Ensemble), vec![0.5, 1.0]);
        cells.insert((TrainMode::SingleFc, Prediction::Fc), vec![0.25, 0.75]);
        let r = AblationReport {
            rounds: 2,
            cells,
            agreement_violations: 0,
        };
        assert_eq!(
            r.rounds_csv(),
            "mode,prediction,round,test_acc\njoint,ensemble,0,0.5\njoint,ensemble,1,1\n\
             single-fc,fc,0,0.25\nsingle-fc,fc,1,0.75\n"
        );
        assert_eq!(
            r.summary_csv(),
            "mode,prediction,mean,std\njoint,ensemble,0.75,0.25\nsingle-fc,fc,0.5,0.25\n"
        );
        assert_eq!(mean_std(&[0.3]), (0.3, 0.0));
    }

    #[test]
    fn parallel_map_keeps_order() {
        let v = parallel_map(10, 3, |i| Ok(i * i)).unwrap();
        assert_eq!(v, (0..10).map(|i| i * i).collect::<Vec<_>>());
        assert!(parallel_map(4, 2, |i| if i == 3 { Err(Error::Usage("x".into())) } else { Ok(i) }).is_err());
    }
}
