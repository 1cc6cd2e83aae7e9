//! Oracles and helpers shared by the integration tests.
#![allow(dead_code)]

pub mod checks;
pub mod grad_cases;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use texstyle::tensor::{Graph, NodeId, Shape, Tensor};
use texstyle::Result;

pub const FD_STEP: f32 = 1e-3;
pub const FD_REL: f64 = 1e-2;
pub const FD_ABS: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: Shape, lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(lo..hi))
}

/// Uniform values whose magnitude is at least `gap`, with random sign.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: Shape, gap: f32, hi: f32) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| {
        let v = rng.random_range(gap..hi);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug)]
pub struct FdReport {
    pub checked: usize,
    pub failures: usize,
    pub worst: f64,
    pub worst_detail: String,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn fraction_ok(&self) -> f64 {
        1.0 - self.failures as f64 / self.checked.max(1) as f64
    }
}

/// `sum_i w_i y_i` in f64, so the finite-difference objective keeps more
/// precision than an f32 scalar loss would.
fn projected(y: &Tensor, w: &[f32]) -> f64 {
    y.data().iter().zip(w).map(|(&a, &b)| a as f64 * b as f64).sum()
}

/// Compares the backward gradient of `sum(w * f(x))` with central
/// differences at up to `samples` coordinates of `x`, using fixed random
/// projection weights `w`. `f` must build the same graph every time.
pub fn fd_check<F>(x: &Tensor, samples: usize, seed: u64, f: F) -> FdReport
where
    F: Fn(&mut Graph, NodeId) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let xn = g.param(x.clone()).unwrap();
    let y = f(&mut g, xn).unwrap();
    let ys = g.shape(y);
    let mut r = rng(seed);
    let w: Vec<f32> = if ys.is_scalar() {
        vec![1.0]
    } else {
        (0..ys.numel()).map(|_| r.random_range(-1.0..1.0)).collect()
    };
    let wn = g.constant(Tensor::new(ys, w.clone()).unwrap()).unwrap();
    let prod = g.mul(y, wn).unwrap();
    let loss = g.sum(prod).unwrap();
    let grads = g.backward(loss).unwrap();
    let analytic = grads.get(xn).expect("input gradient").data().to_vec();

    let eval = |t: Tensor| -> f64 {
        let mut h = Graph::new();
        let xn = h.param(t).unwrap();
        let y = f(&mut h, xn).unwrap();
        projected(h.value(y), &w)
    };

    let n = x.numel();
    let coords: Vec<usize> = if n <= samples {
        (0..n).collect()
    } else {
        rand::seq::index::sample(&mut r, n, samples).into_vec()
    };
    let mut report = FdReport {
        checked: 0,
        failures: 0,
        worst: 0.0,
        worst_detail: String::new(),
    };
    for &i in &coords {
        let mut plus = x.clone();
        plus.data_mut()[i] += FD_STEP;
        let mut minus = x.clone();
        minus.data_mut()[i] -= FD_STEP;
        let numeric = (eval(plus) - eval(minus)) / (2.0 * FD_STEP as f64);
        let a = analytic[i] as f64;
        let err = (a - numeric).abs();
        let allowed = FD_ABS.max(FD_REL * a.abs().max(numeric.abs()));
        report.checked += 1;
        if err > allowed {
            report.failures += 1;
        }
        let ratio = err / allowed;
        if ratio > report.worst {
            report.worst = ratio;
            report.worst_detail = format!("coord {i}: analytic {a:.6e}, numeric {numeric:.6e}");
        }
    }
    report
}

/// Direct six-loop cross-correlation with zero padding.
pub fn conv2d_reference(x: &Tensor, w: &Tensor, b: &[f32], stride: usize, pad: usize) -> Tensor {
    let (xs, ws) = (x.shape(), w.shape());
    let oh = (xs.h + 2 * pad - ws.h) / stride + 1;
    let ow = (xs.w + 2 * pad - ws.w) / stride + 1;
    Tensor::from_fn(Shape::new(xs.n, ws.n, oh, ow), |n, o, y, xx| {
        let mut acc = b.get(o).copied().unwrap_or(0.0) as f64;
        for c in 0..xs.c {
            for ky in 0..ws.h {
                for kx in 0..ws.w {
                    let iy = (y * stride + ky) as i64 - pad as i64;
                    let ix = (xx * stride + kx) as i64 - pad as i64;
                    if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                        acc += x.at(n, c, iy as usize, ix as usize) as f64 * w.at(o, c, ky, kx) as f64;
                    }
                }
            }
        }
        acc as f32
    })
}

pub fn max_pool_reference(x: &Tensor, k: usize, stride: usize) -> Tensor {
    let s = x.shape();
    let oh = (s.h - k) / stride + 1;
    let ow = (s.w - k) / stride + 1;
    Tensor::from_fn(Shape::new(s.n, s.c, oh, ow), |n, c, y, xx| {
        let mut m = f32::NEG_INFINITY;
        for ky in 0..k {
            for kx in 0..k {
                m = m.max(x.at(n, c, y * stride + ky, xx * stride + kx));
            }
        }
        m
    })
}

pub fn cosine_reference(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    1.0 - dot / (na * nb + 1e-8)
}

/// Rows of `c` components.
pub fn rows(v: &[f32], c: usize) -> Vec<&[f32]> {
    v.chunks_exact(c).collect()
}

/// `(1/M) sum_i min_j D(r_i, s_j)` by exhaustive double loop.
pub fn nnfm_reference(render: &[&[f32]], style: &[&[f32]]) -> f64 {
    let total: f64 = render
        .iter()
        .map(|r| style.iter().map(|s| cosine_reference(r, s)).fold(f64::INFINITY, f64::min))
        .sum();
    total / render.len() as f64
}

/// Packs row vectors into a (1, C, 1, M) map, one vector per column.
pub fn as_map(v: &[&[f32]]) -> Tensor {
    let c = v.first().map_or(0, |r| r.len());
    Tensor::from_fn(Shape::new(1, c, 1, v.len()), |_, k, _, x| v[x][k])
}

pub fn random_vectors(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Vec<f32> {
    (0..n * c).map(|_| rng.random_range(-1.0..1.0)).collect()
}
