#![allow(dead_code)]

use std::sync::OnceLock;

use safeinit_core::reachability::{signed_distance_init, solve_brs, GridSpec, ValueGrid};

pub const V: f64 = 5.0;
pub const OMEGA: f64 = 1.0;
pub const RC: f64 = 5.0;

/// Converged default grid for `(v, ω̄, Rc) = (5, 1, 5)`, solved once per binary.
pub fn grid() -> &'static ValueGrid {
    static GRID: OnceLock<ValueGrid> = OnceLock::new();
    GRID.get_or_init(|| {
        let init = signed_distance_init(GridSpec::default(), RC).unwrap();
        let g = solve_brs(&init, V, OMEGA, 1e-3, 40.0).unwrap();
        assert!(g.converged, "grid did not converge: residual {}", g.residual);
        g
    })
}

pub mod learn {
    use rand::Rng;
    use safeinit_core::learner::{backward, nll_loss, LabeledSample, MlpParams, Normalization};
    use safeinit_core::scenario_features::FeatureVector;

    pub const FD_STEP: f64 = 1e-5;

    /// Pre-activations closer than this to zero would put a central difference across the ReLU kink.
    pub const KINK_MARGIN: f64 = 1e-3;

    fn clear_of_kinks(p: &MlpParams, batch: &[LabeledSample]) -> bool {
        batch.iter().all(|s| {
            let x: Vec<f64> = s.h.0.iter().enumerate().map(|(i, v)| (v - p.norm.offsets[i]) / p.norm.scales[i]).collect();
            (0..p.n_hidden).all(|k| {
                let a: f64 = (0..p.n_in).map(|i| p.w1[k * p.n_in + i] * x[i]).sum::<f64>() + p.b1[k];
                a.abs() > KINK_MARGIN
            })
        })
    }

    /// Small random network with a non-trivial input normalization and a batch
    /// for it, redrawn until no pre-activation sits on the ReLU kink.
    pub fn tiny_instance<R: Rng>(rng: &mut R) -> (MlpParams, Vec<LabeledSample>) {
        loop {
            let (p, batch) = draw_instance(rng);
            if clear_of_kinks(&p, &batch) {
                return (p, batch);
            }
        }
    }

    fn draw_instance<R: Rng>(rng: &mut R) -> (MlpParams, Vec<LabeledSample>) {
        let n_in = rng.gen_range(1..=6);
        let n_hidden = rng.gen_range(1..=5);
        let mut p = MlpParams::zeros(n_in, n_hidden);
        p.w1.iter_mut().chain(&mut p.b1).chain(&mut p.w2).for_each(|w| *w = rng.gen_range(-1.0..1.0));
        p.b2 = rng.gen_range(-1.0..1.0);
        p.norm = Normalization {
            scales: (0..n_in).map(|_| rng.gen_range(0.5..2.0)).collect(),
            offsets: (0..n_in).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        };
        let batch = (0..rng.gen_range(1..=8))
            .map(|_| LabeledSample {
                h: FeatureVector((0..n_in).map(|_| rng.gen_range(-2.0..2.0)).collect()),
                y: rng.gen_range(0..=1),
            })
            .collect();
        (p, batch)
    }

    fn flat(p: &MlpParams) -> Vec<f64> {
        let mut v = p.w1.clone();
        v.extend(&p.b1);
        v.extend(&p.w2);
        v.push(p.b2);
        v
    }

    fn set_flat(p: &mut MlpParams, v: &[f64]) {
        let (a, b) = (p.w1.len(), p.b1.len());
        p.w1.copy_from_slice(&v[..a]);
        p.b1.copy_from_slice(&v[a..a + b]);
        p.w2.copy_from_slice(&v[a + b..a + b + p.n_hidden]);
        p.b2 = v[v.len() - 1];
    }

    /// Largest relative error between the analytic gradient and central
    /// differences; the denominator is floored at 1e-6.
    pub fn gradient_error(p: &MlpParams, batch: &[LabeledSample]) -> f64 {
        let g = backward(p, batch).unwrap();
        let mut analytic = g.w1.clone();
        analytic.extend(&g.b1);
        analytic.extend(&g.w2);
        analytic.push(g.b2);
        let theta = flat(p);
        let mut worst = 0.0f64;
        for k in 0..theta.len() {
            let mut q = p.clone();
            let mut t = theta.clone();
            t[k] = theta[k] + FD_STEP;
            set_flat(&mut q, &t);
            let up = nll_loss(&q, batch).unwrap();
            t[k] = theta[k] - FD_STEP;
            set_flat(&mut q, &t);
            let down = nll_loss(&q, batch).unwrap();
            let numeric = (up - down) / (2.0 * FD_STEP);
            let denom = analytic[k].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[k] - numeric).abs() / denom);
        }
        worst
    }

    /// Points uniform in `[-1, 1]^dim`, labeled by the sign of the first coordinate.
    pub fn separable_set<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Vec<LabeledSample> {
        (0..n)
            .map(|_| {
                let h: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                LabeledSample {
                    y: (h[0] > 0.0) as u8,
                    h: FeatureVector(h),
                }
            })
            .collect()
    }
}
