//! Reference implementations and suites shared by the integration tests and
//! the acceptance report.
#![allow(dead_code)]

use remarnet::gradcheck::{gradcheck, GradCheckOptions, Probe};
use remarnet::graph::{Graph, Group, NormMode, ParamStore};
use remarnet::data::TensorMap;
use remarnet::rng::Rng;
use remarnet::{Result, Tensor};

pub fn random_tensor(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f32> {
    Tensor::from_fn(shape, |_| rng.uniform_range(lo, hi) as f32)
}

pub fn random_tensor64(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform_range(lo, hi))
}

/// Direct convolution: for each output, products summed in
/// (input channel, kernel row, kernel column) order, bias added last.
pub fn conv2d_oracle(x: &Tensor<f32>, w: &Tensor<f32>, b: &Tensor<f32>, stride: usize, pad: usize) -> Tensor<f32> {
    let [n, cin, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [cout, _, k, _] = [w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]];
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = Vec::with_capacity(n * cout * oh * ow);
    for bi in 0..n {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f32;
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += w.at(&[co, ci, ky, kx]) * x.at(&[bi, ci, iy as usize, ix as usize]);
                            }
                        }
                    }
                    out.push(acc + b.at(&[co]));
                }
            }
        }
    }
    Tensor::new(&[n, cout, oh, ow], out).unwrap()
}

/// Window maximum; the first maximal element in row-major order wins.
pub fn maxpool_oracle(x: &Tensor<f32>) -> (Tensor<f32>, Vec<usize>) {
    let s = x.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (mut out, mut arg) = (Vec::new(), Vec::new());
    for bi in 0..n {
        for ci in 0..c {
            for oy in 0..h / 2 {
                for ox in 0..w / 2 {
                    let mut best: Option<(f32, usize)> = None;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let (y, xx) = (2 * oy + dy, 2 * ox + dx);
                            let v = x.at(&[bi, ci, y, xx]);
                            let flat = ((bi * c + ci) * h + y) * w + xx;
                            if best.map_or(true, |(bv, _)| v > bv) {
                                best = Some((v, flat));
                            }
                        }
                    }
                    let (v, i) = best.unwrap();
                    out.push(v);
                    arg.push(i);
                }
            }
        }
    }
    (Tensor::new(&[n, c, h / 2, w / 2], out).unwrap(), arg)
}

/// `x · w + b` with products summed in feature order, bias added last.
pub fn linear_oracle(x: &Tensor<f32>, w: &Tensor<f32>, b: &Tensor<f32>) -> Tensor<f32> {
    let (n, f, g) = (x.shape()[0], x.shape()[1], w.shape()[1]);
    let mut out = Vec::with_capacity(n * g);
    for i in 0..n {
        for j in 0..g {
            let mut acc = 0.0f32;
            for k in 0..f {
                acc += x.at(&[i, k]) * w.at(&[k, j]);
            }
            out.push(acc + b.at(&[j]));
        }
    }
    Tensor::new(&[n, g], out).unwrap()
}

fn same_bits(a: &Tensor<f32>, b: &Tensor<f32>) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Compare conv2d, maxpool2x2 and linear with the oracles on `cases`
/// random shapes each (up to 2×8×16×16). Returns the mismatch descriptions.
pub fn oracle_equivalence(cases: usize, seed: u64) -> Vec<String> {
    let mut rng = Rng::new(seed);
    let mut failures = Vec::new();
    for case in 0..cases {
        let n = 1 + rng.below(2);
        let cin = 1 + rng.below(8);
        let cout = 1 + rng.below(8);
        let k = [1, 3][rng.below(2)];
        let stride = 1 + rng.below(2);
        let pad = rng.below(2).min(k / 2);
        let h = k + rng.below(17 - k);
        let w = k + rng.below(17 - k);
        let x = random_tensor(&mut rng, &[n, cin, h, w], -1.0, 1.0);
        let wt = random_tensor(&mut rng, &[cout, cin, k, k], -1.0, 1.0);
        let b = random_tensor(&mut rng, &[cout], -1.0, 1.0);
        let got = remarnet::kernels::conv2d(&x, &wt, &b, stride, pad).unwrap();
        if !same_bits(&got, &conv2d_oracle(&x, &wt, &b, stride, pad)) {
            failures.push(format!("conv2d case {case}: x {:?} w {:?} s{stride} p{pad}", x.shape(), wt.shape()));
        }

        let (ph, pw) = (2 * (1 + rng.below(8)), 2 * (1 + rng.below(8)));
        // Coarse values make ties inside pooling windows common.
        let xp = Tensor::from_fn(&[n, cin, ph, pw], |_| rng.below(4) as f32);
        let (got, arg) = remarnet::kernels::maxpool2x2(&xp).unwrap();
        let (want, want_arg) = maxpool_oracle(&xp);
        if !same_bits(&got, &want) || arg != want_arg {
            failures.push(format!("maxpool2x2 case {case}: {:?}", xp.shape()));
        }

        let (f, g) = (1 + rng.below(256), 1 + rng.below(64));
        let rows = n * (1 + rng.below(8));
        let xl = random_tensor(&mut rng, &[rows, f], -1.0, 1.0);
        let wl = random_tensor(&mut rng, &[f, g], -1.0, 1.0);
        let bl = random_tensor(&mut rng, &[g], -1.0, 1.0);
        let got = remarnet::kernels::linear(&xl, &wl, &bl).unwrap();
        if !same_bits(&got, &linear_oracle(&xl, &wl, &bl)) {
            failures.push(format!("linear case {case}: x {:?} w {:?}", xl.shape(), wl.shape()));
        }
    }
    failures
}

/// Result of checking one operation over many random trials.
#[derive(Debug)]
pub struct OpCheck {
    pub op: &'static str,
    pub trials: usize,
    pub max_rel_error: f64,
    pub unresolved: usize,
}

type Builder = fn(&mut Rng, &mut ParamStore<f64>) -> Box<dyn Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<remarnet::NodeId>>;

/// Random projection target so that every output element influences the loss.
fn project(g: &mut Graph<f64>, y: remarnet::NodeId, seed: u64) -> Result<remarnet::NodeId> {
    let shape = g.value(y).shape().to_vec();
    let rows = shape[0];
    let flat = g.reshape(y, &[rows, shape.iter().product::<usize>() / rows])?;
    let mut rng = Rng::new(seed);
    let t = Tensor::from_fn(g.value(flat).shape(), |_| rng.uniform_range(-1.0, 1.0));
    g.squared_error(flat, &t)
}

fn dims(rng: &mut Rng) -> (usize, usize, usize, usize) {
    (1 + rng.below(3), 1 + rng.below(3), 2 * (1 + rng.below(3)), 2 * (1 + rng.below(3)))
}

fn add(store: &mut ParamStore<f64>, rng: &mut Rng, name: &str, shape: &[usize], lo: f64, hi: f64) -> remarnet::ParamId {
    store.add(name, Group::Embedding, random_tensor64(rng, shape, lo, hi))
}

pub fn op_builders() -> Vec<(&'static str, Builder)> {
    vec![
        ("conv2d", |rng, s| {
            let (n, c, h, w) = dims(rng);
            let co = 1 + rng.below(3);
            let k = [1, 3][rng.below(2)];
            let (stride, pad) = (1 + rng.below(2), rng.below(2));
            let (h, w) = (h + k, w + k);
            let x = add(s, rng, "x", &[n, c, h, w], -1.0, 1.0);
            let wt = add(s, rng, "w", &[co, c, k, k], -1.0, 1.0);
            let b = add(s, rng, "b", &[co], -1.0, 1.0);
            Box::new(move |g, s| {
                let (x, wt, b) = (g.param(s, x), g.param(s, wt), g.param(s, b));
                g.conv2d(x, wt, b, stride, pad)
            })
        }),
        ("maxpool2x2", |rng, s| {
            let (n, c, h, w) = dims(rng);
            let x = add(s, rng, "x", &[n, c, h, w], -1.0, 1.0);
            Box::new(move |g, s| {
                let x = g.param(s, x);
                g.maxpool2x2(x)
            })
        }),
        ("batchnorm2d-train", |rng, s| {
            let (n, c, h, w) = dims(rng);
            let n = n.max(2);
            let x = add(s, rng, "x", &[n, c, h, w], -1.0, 1.0);
            let gamma = add(s, rng, "gamma", &[c], 0.5, 1.5);
            let beta = add(s, rng, "beta", &[c], -0.5, 0.5);
            Box::new(move |g, s| {
                let (x, gm, bt) = (g.param(s, x), g.param(s, gamma), g.param(s, beta));
                g.batchnorm2d(x, gm, bt, 1e-5, NormMode::Train { layer: 0 })
            })
        }),
        ("batchnorm2d-eval", |rng, s| {
            let (n, c, h, w) = dims(rng);
            let x = add(s, rng, "x", &[n, c, h, w], -1.0, 1.0);
            let gamma = add(s, rng, "gamma", &[c], 0.5, 1.5);
            let beta = add(s, rng, "beta", &[c], -0.5, 0.5);
            let mean: Vec<f64> = (0..c).map(|_| rng.uniform_range(-0.2, 0.2)).collect();
            let var: Vec<f64> = (0..c).map(|_| rng.uniform_range(0.5, 1.5)).collect();
            Box::new(move |g, s| {
                let (x, gm, bt) = (g.param(s, x), g.param(s, gamma), g.param(s, beta));
                g.batchnorm2d(x, gm, bt, 1e-5, NormMode::Eval { mean: &mean, var: &var })
            })
        }),
        ("linear", |rng, s| {
            let (n, f, o) = (1 + rng.below(4), 1 + rng.below(6), 1 + rng.below(5));
            let x = add(s, rng, "x", &[n, f], -1.0, 1.0);
            let w = add(s, rng, "w", &[f, o], -1.0, 1.0);
            let b = add(s, rng, "b", &[o], -1.0, 1.0);
            Box::new(move |g, s| {
                let (x, w, b) = (g.param(s, x), g.param(s, w), g.param(s, b));
                g.linear(x, w, b)
            })
        }),
        ("relu", |rng, s| {
            let (n, c, h, w) = dims(rng);
            let x = add(s, rng, "x", &[n, c, h, w], -1.0, 1.0);
            Box::new(move |g, s| {
                let x = g.param(s, x);
                Ok(g.relu(x))
            })
        }),
        ("sigmoid", |rng, s| {
            let (n, f) = (1 + rng.below(4), 1 + rng.below(6));
            let x = add(s, rng, "x", &[n, f], -4.0, 4.0);
            Box::new(move |g, s| {
                let x = g.param(s, x);
                Ok(g.sigmoid(x))
            })
        }),
        ("softmax_rows", |rng, s| {
            let (n, f) = (1 + rng.below(4), 2 + rng.below(5));
            let x = add(s, rng, "x", &[n, f], -3.0, 3.0);
            Box::new(move |g, s| {
                let x = g.param(s, x);
                g.softmax_rows(x)
            })
        }),
        ("concat_channels", |rng, s| {
            let (n, c, h, w) = dims(rng);
            let c2 = 1 + rng.below(3);
            let a = add(s, rng, "a", &[n, c, h, w], -1.0, 1.0);
            let b = add(s, rng, "b", &[n, c2, h, w], -1.0, 1.0);
            Box::new(move |g, s| {
                let (a, b) = (g.param(s, a), g.param(s, b));
                g.concat_channels(a, b)
            })
        }),
        ("batch-select", |rng, s| {
            let (n, c, h, w) = dims(rng);
            let n = n + 1;
            let x = add(s, rng, "x", &[n, c, h, w], -1.0, 1.0);
            let y = add(s, rng, "y", &[2, c, h, w], -1.0, 1.0);
            let idx: Vec<usize> = (0..5).map(|_| rng.below(n)).collect();
            Box::new(move |g, s| {
                let (x, y) = (g.param(s, x), g.param(s, y));
                let both = g.concat_batch(&[x, y])?;
                let tail = g.narrow_batch(both, 1, n)?;
                let picked = g.select_batch(tail, &idx)?;
                g.reshape(picked, &[5, c * h * w])
            })
        }),
        ("cross_entropy", |rng, s| {
            let (n, k) = (1 + rng.below(4), 2 + rng.below(4));
            let p = add(s, rng, "p", &[n, k], 0.05, 1.0);
            let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
            let t = remarnet::model::one_hot(&labels, k);
            Box::new(move |g, s| {
                let p = g.param(s, p);
                let l = g.cross_entropy(p, &t)?;
                g.weighted_sum(&[(l, 0.7)])
            })
        }),
        ("weighted_sum", |rng, s| {
            let (n, f) = (1 + rng.below(4), 1 + rng.below(6));
            let x = add(s, rng, "x", &[n, f], -1.0, 1.0);
            let y = add(s, rng, "y", &[n, f], -1.0, 1.0);
            let (wa, wb) = (rng.uniform_range(0.0, 2.0), rng.uniform_range(0.0, 2.0));
            Box::new(move |g, s| {
                let (x, y) = (g.param(s, x), g.param(s, y));
                let zx = Tensor::zeros(&[n, f]);
                let lx = g.squared_error(x, &zx)?;
                let ly = g.squared_error(y, &zx)?;
                g.weighted_sum(&[(lx, wa), (ly, wb)])
            })
        }),
    ]
}

/// Gradient-check every operation on `trials` random instances.
pub fn op_gradient_suite(trials: usize, seed: u64) -> Vec<OpCheck> {
    let opts = GradCheckOptions::default();
    op_builders()
        .into_iter()
        .enumerate()
        .map(|(oi, (op, build))| {
            let mut worst: f64 = 0.0;
            let mut unresolved = 0;
            for t in 0..trials {
                let mut rng = Rng::new(remarnet::rng::derive_indexed(seed, op, t as u64));
                let mut store = ParamStore::new();
                let forward = build(&mut rng, &mut store);
                let proj_seed = (oi * 1000 + t) as u64;
                let report = gradcheck(
                    &mut store,
                    |s, back| -> Result<Probe> {
                        let mut g = Graph::new();
                        let y = forward(&mut g, s)?;
                        let loss = if g.value(y).len() == 1 { y } else { project(&mut g, y, proj_seed)? };
                        if back {
                            g.backward(loss, s)?;
                        }
                        Ok(Probe { loss: g.value(loss).item(), signature: g.kink_signature() })
                    },
                    &opts,
                )
                .unwrap();
                worst = worst.max(report.max_rel_error());
                unresolved += report.unresolved;
            }
            OpCheck { op, trials, max_rel_error: worst, unresolved }
        })
        .collect()
}

/// All 2ⁿ sign patterns of `|d|`'s average ranks, enumerated one by one.
pub fn wilcoxon_brute_force(d: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = d.iter().copied().filter(|&v| v != 0.0).collect();
    let n = d.len();
    let mut ranks = vec![0.0; n];
    for i in 0..n {
        let less = d.iter().filter(|v| v.abs() < d[i].abs()).count();
        let equal = d.iter().filter(|v| v.abs() == d[i].abs()).count();
        ranks[i] = less as f64 + (equal as f64 + 1.0) / 2.0;
    }
    let w: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s <= w + 1e-9 {
            le += 1;
        }
        if s >= w - 1e-9 {
            ge += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (w, (2.0 * le.min(ge) as f64 / total).min(1.0))
}

/// Random integer differences of length 1..=12 with ties and zeros.
pub fn random_integer_differences(rng: &mut Rng) -> Vec<f64> {
    loop {
        let n = 1 + rng.below(12);
        let d: Vec<f64> = (0..n).map(|_| rng.below(11) as f64 - 5.0).collect();
        if d.iter().any(|&v| v != 0.0) {
            return d;
        }
    }
}

/// A map of one to six randomly named tensors holding arbitrary bit
/// patterns.
pub fn random_map(rng: &mut Rng) -> TensorMap {
    let mut map = TensorMap::new();
    for _ in 0..1 + rng.below(6) {
        let len = 1 + rng.below(12);
        let name: String = (0..len).map(|_| (b'a' + rng.below(26) as u8) as char).collect();
        let shape: Vec<usize> = (0..1 + rng.below(4)).map(|_| 1 + rng.below(5)).collect();
        let n = shape.iter().product();
        let data = (0..n).map(|_| f32::from_bits(rng.next_u64() as u32)).collect();
        map.insert(name, Tensor::new(&shape, data).unwrap());
    }
    map
}

pub fn bits(map: &TensorMap) -> Vec<(String, Vec<usize>, Vec<u32>)> {
    map.iter()
        .map(|(k, t)| (k.clone(), t.shape().to_vec(), t.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}
