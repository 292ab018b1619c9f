//! Central finite-difference checks in f64.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbsr::loss::{combined_loss_with, contrastive_loss, CombinedTerms, GradientRouting, Label};
use sbsr::nn::{
    conv_backward, conv_forward, linear_backward, linear_forward, maxpool_backward,
    maxpool_forward, relu, relu_backward, ConvStage, ForwardTrace, LinearStage, NetworkParams,
    INPUT_SIZE,
};
use sbsr::Tensor;

pub const EPS: f64 = 1e-5;
pub const LAYER_TOL: f64 = 1e-6;
pub const NETWORK_TOL: f64 = 1e-4;
pub const MIN_COORDS: usize = 50;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub coords: usize,
    pub max_rel: f64,
    pub tol: f64,
    /// Analytic and numeric values at the worst coordinate.
    pub worst: (f64, f64),
    /// Candidate coordinates dropped because the probe crossed a ReLU or
    /// max-pool switch.
    pub skipped: usize,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.coords >= MIN_COORDS && self.max_rel < self.tol
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-12 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Central difference of `f` at coordinate `i` of `x`, restoring `x`.
pub fn central(x: &mut [f64], i: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + EPS;
    let plus = f(x);
    x[i] = orig - EPS;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * EPS)
}

/// Indices to test: all of them when fewer than `n`, else `n` distinct
/// random ones.
pub fn pick(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<usize> {
    if len <= n {
        (0..len).collect()
    } else {
        sample(rng, len, n).into_vec()
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values spread over `[-1, 1]` with every pair and every value at least
/// `gap` apart from each other and from zero.
fn separated(rng: &mut ChaCha8Rng, n: usize, gap: f64) -> Vec<f64> {
    let mut slots: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    for s in &mut slots {
        *s += rng.random_range(-0.2..0.2) / n as f64;
    }
    let mut out: Vec<f64> = slots.iter().map(|s| 2.0 * s - 1.0).collect();
    for v in &mut out {
        if v.abs() < gap {
            *v = gap.copysign(*v) * 2.0;
        }
    }
    for i in (1..n).rev() {
        out.swap(i, rng.random_range(0..=i));
    }
    out
}

struct Acc {
    name: String,
    coords: usize,
    max_rel: f64,
    tol: f64,
    worst: (f64, f64),
    skipped: usize,
}

impl Acc {
    fn new(name: &str, tol: f64) -> Self {
        Acc {
            name: name.to_owned(),
            coords: 0,
            max_rel: 0.0,
            tol,
            worst: (0.0, 0.0),
            skipped: 0,
        }
    }

    fn add(&mut self, analytic: f64, numeric: f64) {
        self.coords += 1;
        let e = rel_err(analytic, numeric);
        if e > self.max_rel {
            self.max_rel = e;
            self.worst = (analytic, numeric);
        }
    }

    fn done(self) -> Check {
        Check {
            name: self.name,
            coords: self.coords,
            max_rel: self.max_rel,
            tol: self.tol,
            worst: self.worst,
            skipped: self.skipped,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn conv_layer(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, h, w, o, k) = (3, 9, 8, 4, 3);
    let mut stage = ConvStage::<f64>::zeros(o, c, k, 1);
    stage.kernels =
        Tensor::from_vec(&[o, c, k, k], uniform(&mut rng, o * c * k * k, -1.0, 1.0)).unwrap();
    stage.bias = uniform(&mut rng, o, -1.0, 1.0);
    let input = uniform(&mut rng, c * h * w, -1.0, 1.0);
    let out_len = o * (h - k + 1) * (w - k + 1);
    let weights = uniform(&mut rng, out_len, -1.0, 1.0);
    let objective = |stage: &ConvStage<f64>, x: &[f64]| {
        let t = Tensor::from_vec(&[c, h, w], x.to_vec()).unwrap();
        dot(conv_forward(&t, stage).unwrap().data(), &weights)
    };
    let x_t = Tensor::from_vec(&[c, h, w], input.clone()).unwrap();
    let g_out = Tensor::from_vec(&[o, h - k + 1, w - k + 1], weights.clone()).unwrap();
    let g = conv_backward(&x_t, &stage, &g_out, true).unwrap();

    let mut acc = Acc::new("conv (kernels, bias, input)", LAYER_TOL);
    let mut kernels = stage.kernels.data().to_vec();
    for i in pick(&mut rng, kernels.len(), 40) {
        let n = central(&mut kernels, i, |kd| {
            let mut s = stage.clone();
            s.kernels = Tensor::from_vec(&[o, c, k, k], kd.to_vec()).unwrap();
            objective(&s, &input)
        });
        acc.add(g.kernels.data()[i], n);
    }
    let mut bias = stage.bias.clone();
    for i in 0..o {
        let n = central(&mut bias, i, |b| {
            let mut s = stage.clone();
            s.bias = b.to_vec();
            objective(&s, &input)
        });
        acc.add(g.bias[i], n);
    }
    let mut x = input.clone();
    let gi = g.input.expect("input gradient requested");
    for i in pick(&mut rng, x.len(), 30) {
        let n = central(&mut x, i, |xd| objective(&stage, xd));
        acc.add(gi.data()[i], n);
    }
    acc.done()
}

pub fn linear_layer(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n_in) = (7, 12);
    let mut stage = LinearStage::<f64>::zeros(m, n_in);
    stage.weights = Tensor::from_vec(&[m, n_in], uniform(&mut rng, m * n_in, -1.0, 1.0)).unwrap();
    stage.bias = uniform(&mut rng, m, -1.0, 1.0);
    let input = uniform(&mut rng, n_in, -1.0, 1.0);
    let up = uniform(&mut rng, m, -1.0, 1.0);
    let objective = |s: &LinearStage<f64>, x: &[f64]| dot(&linear_forward(x, s).unwrap(), &up);
    let g = linear_backward(&input, &stage, &up).unwrap();

    let mut acc = Acc::new("linear (weights, bias, input)", LAYER_TOL);
    let mut wd = stage.weights.data().to_vec();
    for i in pick(&mut rng, wd.len(), 40) {
        let n = central(&mut wd, i, |w| {
            let mut s = stage.clone();
            s.weights = Tensor::from_vec(&[m, n_in], w.to_vec()).unwrap();
            objective(&s, &input)
        });
        acc.add(g.weights.data()[i], n);
    }
    let mut bias = stage.bias.clone();
    for i in 0..m {
        let n = central(&mut bias, i, |b| {
            let mut s = stage.clone();
            s.bias = b.to_vec();
            objective(&s, &input)
        });
        acc.add(g.bias[i], n);
    }
    let mut x = input.clone();
    for i in 0..n_in {
        let n = central(&mut x, i, |xd| objective(&stage, xd));
        acc.add(g.input[i], n);
    }
    acc.done()
}

pub fn relu_layer(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = 64;
    let input = separated(&mut rng, len, 1e-3);
    let up = uniform(&mut rng, len, -1.0, 1.0);
    let objective = |x: &[f64]| {
        dot(
            relu(&Tensor::from_vec(&[1, 8, 8], x.to_vec()).unwrap()).data(),
            &up,
        )
    };
    let g = relu_backward(
        &Tensor::from_vec(&[1, 8, 8], input.clone()).unwrap(),
        &Tensor::from_vec(&[1, 8, 8], up.clone()).unwrap(),
    )
    .unwrap();
    let mut acc = Acc::new("relu", LAYER_TOL);
    let mut x = input;
    for i in 0..len {
        let n = central(&mut x, i, objective);
        acc.add(g.data()[i], n);
    }
    acc.done()
}

pub fn maxpool_layer(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [2, 8, 8];
    let len = 128;
    let input = separated(&mut rng, len, 1e-3);
    let up = uniform(&mut rng, len / 4, -1.0, 1.0);
    let objective = |x: &[f64]| {
        let (p, _) = maxpool_forward(&Tensor::from_vec(&shape, x.to_vec()).unwrap(), 2).unwrap();
        dot(p.data(), &up)
    };
    let (_, mask) = maxpool_forward(&Tensor::from_vec(&shape, input.clone()).unwrap(), 2).unwrap();
    let g = maxpool_backward(&Tensor::from_vec(&[2, 4, 4], up.clone()).unwrap(), &mask).unwrap();
    let mut acc = Acc::new("max pool", LAYER_TOL);
    let mut x = input;
    for i in 0..len {
        let n = central(&mut x, i, objective);
        acc.add(g.data()[i], n);
    }
    acc.done()
}

/// Feature pairs whose coordinate differences stay clear of zero.
fn feature_pair(rng: &mut ChaCha8Rng, scale: f64) -> (Vec<f64>, Vec<f64>) {
    let a = uniform(rng, 64, -1.0, 1.0);
    let d = separated(rng, 64, 1e-3);
    let b = a.iter().zip(&d).map(|(x, dd)| x + scale * dd).collect();
    (a, b)
}

pub fn contrastive(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Acc::new("contrastive loss (y = 0 and y = 1)", LAYER_TOL);
    for (label, scale) in [(Label::Similar, 0.05), (Label::Dissimilar, 0.2)] {
        let (a, b) = feature_pair(&mut rng, scale);
        let g = contrastive_loss(&a, &b, label);
        let mut x = a.clone();
        for i in pick(&mut rng, 64, 20) {
            let n = central(&mut x, i, |v| contrastive_loss(v, &b, label).loss);
            acc.add(g.grad_a[i], n);
        }
        let mut y = b.clone();
        for i in pick(&mut rng, 64, 20) {
            let n = central(&mut y, i, |v| contrastive_loss(&a, v, label).loss);
            acc.add(g.grad_b[i], n);
        }
    }
    acc.done()
}

pub fn combined(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Acc::new(
        "combined loss (raw routing, both labels, both term sets)",
        LAYER_TOL,
    );
    for (label, symmetric) in [
        (Label::Similar, false),
        (Label::Dissimilar, false),
        (Label::Similar, true),
        (Label::Dissimilar, true),
    ] {
        let terms = CombinedTerms {
            symmetric_cross: symmetric,
        };
        let scale = if label == Label::Similar { 0.02 } else { 0.2 };
        // Every pairwise coordinate difference is kept away from zero.
        let base = uniform(&mut rng, 64, -1.0, 1.0);
        let offsets: Vec<Vec<f64>> = (0..4).map(|_| separated(&mut rng, 64, 1e-3)).collect();
        let mut f: Vec<Vec<f64>> = (0..4)
            .map(|k| {
                base.iter()
                    .zip(&offsets[k])
                    .enumerate()
                    .map(|(i, (b, o))| {
                        b + scale * (k as f64 + 0.5 * o.abs()) * if i % 2 == 0 { 1.0 } else { -1.0 }
                    })
                    .collect()
            })
            .collect();
        let g = combined_loss_with(
            &f[0],
            &f[1],
            &f[2],
            &f[3],
            label,
            terms,
            GradientRouting::RAW,
        );
        let grads = [&g.grad_s1, &g.grad_s2, &g.grad_v1, &g.grad_v2];
        for (k, grad) in grads.iter().enumerate() {
            for i in pick(&mut rng, 64, 4) {
                let n = {
                    let orig = f[k][i];
                    let mut eval = |v: f64| {
                        f[k][i] = v;
                        combined_loss_with(
                            &f[0],
                            &f[1],
                            &f[2],
                            &f[3],
                            label,
                            terms,
                            GradientRouting::RAW,
                        )
                        .loss
                    };
                    let plus = eval(orig + EPS);
                    let minus = eval(orig - EPS);
                    f[k][i] = orig;
                    (plus - minus) / (2.0 * EPS)
                };
                acc.add(grad[i], n);
            }
        }
    }
    acc.done()
}

fn random_net(rng: &mut ChaCha8Rng) -> NetworkParams<f64> {
    let mut net = NetworkParams::<f32>::init(rng).cast::<f64>();
    for stage in &mut net.conv {
        for b in &mut stage.bias {
            *b = rng.random_range(-0.05..0.05);
        }
    }
    for b in &mut net.linear.bias {
        *b = rng.random_range(-0.05..0.05);
    }
    net
}

fn random_image(rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_vec(
        &[1, INPUT_SIZE, INPUT_SIZE],
        uniform(rng, INPUT_SIZE * INPUT_SIZE, 0.0, 1.0),
    )
    .unwrap()
}

/// ReLU on/off state and max-pool winners of a forward pass.
fn pattern(trace: &ForwardTrace<f64>) -> Vec<u64> {
    let mut out = Vec::new();
    for st in trace.stages() {
        out.extend(st.pre_act.data().iter().map(|&v| u64::from(v > 0.0)));
        out.extend(st.mask.indices().iter().map(|&i| i as u64));
    }
    out
}

/// Central difference of `f` over `nets`, or `None` when the two probes
/// see different activation patterns.
fn smooth_central(
    nets: &mut [NetworkParams<f64>],
    which: usize,
    t: usize,
    i: usize,
    f: impl Fn(&[NetworkParams<f64>]) -> (f64, Vec<u64>),
) -> Option<f64> {
    let orig = nets[which].params_mut()[t][i];
    nets[which].params_mut()[t][i] = orig + EPS;
    let (plus, pp) = f(nets);
    nets[which].params_mut()[t][i] = orig - EPS;
    let (minus, pm) = f(nets);
    nets[which].params_mut()[t][i] = orig;
    (pp == pm).then(|| (plus - minus) / (2.0 * EPS))
}

/// Takes up to `want` coordinates of `len` for which `probe` succeeds.
fn sample_smooth(
    rng: &mut ChaCha8Rng,
    len: usize,
    want: usize,
    acc: &mut Acc,
    mut probe: impl FnMut(usize) -> Option<(f64, f64)>,
) {
    let mut taken = 0;
    for i in pick(rng, len, len.min(want * 4)) {
        if taken == want {
            break;
        }
        match probe(i) {
            Some((analytic, numeric)) => {
                acc.add(analytic, numeric);
                taken += 1;
            }
            None => acc.skipped += 1,
        }
    }
}

/// `upstream · f(image)` against the analytic parameter and input gradients.
pub fn network(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = random_net(&mut rng);
    let image = random_image(&mut rng);
    let up = uniform(&mut rng, 64, -1.0, 1.0);
    let trace = net.forward_trace(&image).unwrap();
    let g = net.backward(&trace, &up, true).unwrap();
    let mut acc = Acc::new("network (all 8 parameter tensors and input)", NETWORK_TOL);
    let eval = |nets: &[NetworkParams<f64>], image: &Tensor<f64>| {
        let tr = nets[0].forward_trace(image).unwrap();
        (dot(tr.features(), &up), pattern(&tr))
    };
    let analytic: Vec<Vec<f64>> = g.params.params().iter().map(|p| p.data.to_vec()).collect();
    let mut nets = [net.clone()];
    for (t, grad) in analytic.iter().enumerate() {
        sample_smooth(&mut rng, grad.len(), 8, &mut acc, |i| {
            smooth_central(&mut nets, 0, t, i, |n| eval(n, &image)).map(|n| (grad[i], n))
        });
    }
    let gi = g.input.expect("input gradient requested");
    let shape = [1, INPUT_SIZE, INPUT_SIZE];
    sample_smooth(&mut rng, image.len(), 10, &mut acc, |i| {
        let mut x = image.data().to_vec();
        x[i] += EPS;
        let (plus, pp) = eval(&nets, &Tensor::from_vec(&shape, x.clone()).unwrap());
        x[i] -= 2.0 * EPS;
        let (minus, pm) = eval(&nets, &Tensor::from_vec(&shape, x).unwrap());
        (pp == pm).then(|| (gi.data()[i], (plus - minus) / (2.0 * EPS)))
    });
    acc.done()
}

/// Combined loss over a sketch network and a view network, differentiated
/// end to end with raw routing.
pub fn siamese_objective(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nets = [random_net(&mut rng), random_net(&mut rng)];
    let images: Vec<Tensor<f64>> = (0..4).map(|_| random_image(&mut rng)).collect();
    // Images 0 and 1 are sketches, 2 and 3 are views.
    let owner = [0, 0, 1, 1];
    let terms = CombinedTerms {
        symmetric_cross: true,
    };
    let traces: Vec<_> = (0..4)
        .map(|k| nets[owner[k]].forward_trace(&images[k]).unwrap())
        .collect();
    let mut acc = Acc::new(
        "siamese combined objective (both networks, both labels)",
        NETWORK_TOL,
    );
    for label in [Label::Similar, Label::Dissimilar] {
        let loss_of = |nets: &[NetworkParams<f64>]| {
            let tr: Vec<_> = (0..4)
                .map(|k| nets[owner[k]].forward_trace(&images[k]).unwrap())
                .collect();
            let loss = combined_loss_with(
                tr[0].features(),
                tr[1].features(),
                tr[2].features(),
                tr[3].features(),
                label,
                terms,
                GradientRouting::RAW,
            )
            .loss;
            (loss, tr.iter().flat_map(pattern).collect())
        };
        let c = combined_loss_with(
            traces[0].features(),
            traces[1].features(),
            traces[2].features(),
            traces[3].features(),
            label,
            terms,
            GradientRouting::RAW,
        );
        let ups = [&c.grad_s1, &c.grad_s2, &c.grad_v1, &c.grad_v2];
        let mut totals = [NetworkParams::<f64>::zeros(), NetworkParams::<f64>::zeros()];
        for k in 0..4 {
            let g = nets[owner[k]].backward(&traces[k], ups[k], false).unwrap();
            totals[owner[k]].add_assign(&g.params);
        }
        let mut probe = nets.clone();
        for (which, total) in totals.iter().enumerate() {
            let analytic: Vec<Vec<f64>> = total.params().iter().map(|p| p.data.to_vec()).collect();
            for (t, grad) in analytic.iter().enumerate() {
                sample_smooth(&mut rng, grad.len(), 2, &mut acc, |i| {
                    smooth_central(&mut probe, which, t, i, loss_of).map(|n| (grad[i], n))
                });
            }
        }
    }
    acc.done()
}

pub fn full_suite(seed: u64) -> Vec<Check> {
    vec![
        conv_layer(seed),
        linear_layer(seed + 1),
        relu_layer(seed + 2),
        maxpool_layer(seed + 3),
        contrastive(seed + 4),
        combined(seed + 5),
        network(seed + 6),
        siamese_objective(seed + 7),
    ]
}
