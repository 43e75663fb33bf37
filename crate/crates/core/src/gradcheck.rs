//! Central finite-difference checks of analytic gradients.
//!
//! Checks run in `f64`: the loss closure is evaluated on a
//! `ParamStore<f64>`, analytic gradients come from one backward pass, and
//! each checked coordinate is perturbed by `±step`.
//!
//! Networks with ReLU and max pooling are only piecewise smooth. A closure
//! may report a kink signature with each loss; when a perturbation lands on
//! a different piece than the unperturbed point, the step is divided by 10
//! (up to [`GradCheckOptions::max_refinements`] times) so the difference
//! quotient stays on the piece where the analytic gradient is defined.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::graph::{Graph, Group, ParamId, ParamStore};
use crate::model::{one_hot, Branches, Mode, ModelConfig, ReMarNet};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// What to check and how strictly.
#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Check at most this many coordinates per parameter tensor, chosen at
    /// random. `None` checks every coordinate.
    pub max_per_param: Option<usize>,
    pub seed: u64,
    pub max_refinements: usize,
    /// Combine central differences at `step` and `step / 2` by Richardson
    /// extrapolation, cancelling the leading O(step²) truncation term.
    pub richardson: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            tolerance: 1e-3,
            max_per_param: None,
            seed: 0,
            max_refinements: 3,
            richardson: true,
        }
    }
}

/// One loss evaluation and the kink signature of the point it was taken at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub loss: f64,
    pub signature: u64,
}

impl From<f64> for Probe {
    fn from(loss: f64) -> Self {
        Probe { loss, signature: 0 }
    }
}

/// Largest disagreement seen for one coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Worst {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub checked: usize,
    /// Coordinates whose step had to be refined because of a kink.
    pub refined: usize,
    /// Coordinates still straddling a kink at the smallest step.
    pub unresolved: usize,
    /// Max relative error per parameter group (groups with no parameters
    /// are absent).
    pub per_group: BTreeMap<Group, f64>,
    /// Max relative error per parameter, by name.
    pub per_param: Vec<(String, f64)>,
    pub worst: Option<Worst>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_group.values().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compare analytic and numeric gradients of a scalar loss.
///
/// `loss(store, backward)` must return the same value for the same
/// parameters every time. When `backward` is true it must also accumulate
/// analytic gradients into `store`.
pub fn gradcheck<F, R>(
    store: &mut ParamStore<f64>,
    mut loss: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore<f64>, bool) -> Result<R>,
    R: Into<Probe>,
{
    let mut eval = |s: &mut ParamStore<f64>, back: bool| loss(s, back).map(Into::into);
    store.zero_grads();
    let base = eval(store, true)?.signature;
    let analytic: Vec<Vec<f64>> = store.iter().map(|p| p.grad().data().to_vec()).collect();
    store.zero_grads();

    let mut rng = Rng::new(opts.seed);
    let mut report = GradCheckReport {
        tolerance: opts.tolerance,
        checked: 0,
        refined: 0,
        unresolved: 0,
        per_group: BTreeMap::new(),
        per_param: Vec::new(),
        worst: None,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        let (name, group, n) = {
            let p = store.get(id);
            (p.name().to_string(), p.group(), p.value().len())
        };
        let coords: Vec<usize> = match opts.max_per_param {
            Some(m) if m < n => {
                let mut perm = rng.permutation(n);
                perm.truncate(m);
                perm.sort_unstable();
                perm
            }
            _ => (0..n).collect(),
        };
        let mut param_max: f64 = 0.0;
        for idx in coords {
            let orig = store.get(id).value().data()[idx];
            let mut step = opts.step;
            let mut numeric;
            let mut attempt = 0;
            loop {
                let mut smooth = true;
                let mut central = |h: f64| -> Result<f64> {
                    store.get_mut(id).value_mut()[idx] = orig + h;
                    let plus = eval(store, false)?;
                    store.get_mut(id).value_mut()[idx] = orig - h;
                    let minus = eval(store, false)?;
                    store.get_mut(id).value_mut()[idx] = orig;
                    smooth &= plus.signature == base && minus.signature == base;
                    Ok((plus.loss - minus.loss) / (2.0 * h))
                };
                let coarse = central(step)?;
                numeric = if opts.richardson {
                    let fine = central(step / 2.0)?;
                    (4.0 * fine - coarse) / 3.0
                } else {
                    coarse
                };
                if smooth {
                    break;
                }
                if attempt == opts.max_refinements {
                    report.unresolved += 1;
                    break;
                }
                if attempt == 0 {
                    report.refined += 1;
                }
                attempt += 1;
                step /= 10.0;
            }
            let a = analytic[pi][idx];
            let rel = relative_error(a, numeric);
            report.checked += 1;
            param_max = param_max.max(rel);
            if report.worst.as_ref().map_or(true, |w| rel > w.rel_error) {
                report.worst = Some(Worst {
                    param: name.clone(),
                    index: idx,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
        let g = report.per_group.entry(group).or_insert(0.0);
        *g = g.max(param_max);
        report.per_param.push((name, param_max));
    }
    Ok(report)
}

/// A small end-to-end problem for checking the full two-branch loss.
#[derive(Clone, Debug)]
pub struct MicroInstance {
    pub net: ReMarNet<f64>,
    pub images: Tensor<f64>,
    pub prototypes: Tensor<f64>,
    pub targets: Tensor<f64>,
    pub weights: (f64, f64),
    pub mode: Mode,
}

impl MicroInstance {
    /// Four 16×16 samples, three classes, narrow convolutions.
    pub fn new(seed: u64, channels: usize, mode: Mode) -> Result<Self> {
        let config = ModelConfig {
            in_channels: 1,
            height: 16,
            width: 16,
            classes: 3,
            channels,
            embed_blocks: 4,
            rm_hidden: 8,
            fc_hidden: 8,
            ..ModelConfig::default()
        };
        let mut net = ReMarNet::<f64>::new(config, Branches::BOTH, seed)?;
        let mut rng = Rng::new(crate::rng::derive_seed(seed, "micro-data"));
        // Move gamma/beta and biases off their init values so every term is live.
        let ids: Vec<ParamId> = net.params().ids().collect();
        for id in ids {
            let p = net.params().get(id);
            let name = p.name().to_string();
            if name.ends_with("bias") || name.contains(".bn.") {
                let base = if name.ends_with("gamma") { 1.0 } else { 0.0 };
                let v = Tensor::from_fn(p.value().shape(), |_| base + rng.uniform_range(-0.3, 0.3));
                net.params_mut().set_value(id, v)?;
            }
        }
        let images = Tensor::from_fn(&[4, 1, 16, 16], |_| rng.uniform());
        let prototypes = Tensor::from_fn(&[3, 1, 16, 16], |_| rng.uniform());
        let targets = one_hot(&[0, 1, 2, 1], 3);
        Ok(Self {
            net,
            images,
            prototypes,
            targets,
            weights: (1.0, 1.0),
            mode,
        })
    }

    /// Loss at the given parameters; optionally accumulates gradients.
    pub fn loss(&self, params: &mut ParamStore<f64>, backward: bool) -> Result<Probe> {
        let mut net = self.net.clone();
        std::mem::swap(net.params_mut(), params);
        let mut g = Graph::new();
        let out = net.forward_batch(
            &mut g,
            &self.images,
            &self.prototypes,
            &self.targets,
            self.weights,
            self.mode,
        );
        let res = out.and_then(|nodes| {
            if backward {
                g.backward(nodes.loss, net.params_mut())?;
            }
            Ok(Probe {
                loss: g.value(nodes.loss).item(),
                signature: g.kink_signature(),
            })
        });
        std::mem::swap(net.params_mut(), params);
        res
    }

    pub fn check(&self, opts: &GradCheckOptions) -> Result<GradCheckReport> {
        let mut params = self.net.params().clone();
        gradcheck(&mut params, |p, back| self.loss(p, back), opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::tensor::Tensor;

    #[test]
    fn constant_loss_reports_zero() {
        let mut store = ParamStore::new();
        store.add("w", Group::Fc, Tensor::<f64>::full(&[3], 1.0));
        let report = gradcheck(&mut store, |_, _| Ok(2.5), &GradCheckOptions::default()).unwrap();
        assert_eq!(report.max_rel_error(), 0.0);
        assert!(report.passed());
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn linear_softmax_cross_entropy() {
        let mut rng = Rng::new(3);
        let mut store = ParamStore::new();
        let w = store.add(
            "w",
            Group::Fc,
            Tensor::from_fn(&[5, 3], |_| rng.uniform_range(-1.0, 1.0)),
        );
        let b = store.add(
            "b",
            Group::Fc,
            Tensor::from_fn(&[3], |_| rng.uniform_range(-1.0, 1.0)),
        );
        let x = Tensor::from_fn(&[4, 5], |_| rng.uniform_range(-1.0, 1.0));
        let y = Tensor::new(
            &[4, 3],
            vec![1., 0., 0., 0., 1., 0., 0., 0., 1., 1., 0., 0.],
        )
        .unwrap();
        let report = gradcheck(
            &mut store,
            |s, backward| {
                let mut g = Graph::new();
                let xi = g.input(x.clone());
                let (wn, bn) = (g.param(s, w), g.param(s, b));
                let z = g.linear(xi, wn, bn)?;
                let p = g.softmax_rows(z)?;
                let l = g.cross_entropy(p, &y)?;
                if backward {
                    g.backward(l, s)?;
                }
                Ok(g.value(l).item())
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn micro_model_gradients() {
        let inst = MicroInstance::new(11, 4, Mode::Train).unwrap();
        let report = inst.check(&GradCheckOptions::default()).unwrap();
        eprintln!("{:?} worst {:?} refined {} unresolved {}", report.per_group, report.worst, report.refined, report.unresolved);
        assert!(report.passed());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.001) - 0.001 / 1.001).abs() < 1e-15);
    }
}
