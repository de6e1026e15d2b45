//! Central finite-difference checks of analytic gradients.
//!
//! The loss is evaluated with a freshly seeded stream before every forward,
//! so dropout masks are identical across perturbations. A coordinate that
//! misses the tolerance is retried with a five-point stencil and then with a
//! tenth of the step. One whose
//! one-sided slopes still disagree sharply sits on a ReLU-style kink; such
//! coordinates are counted as skipped only when they would otherwise fail.

use crate::error::Result;
use crate::layer::{zero_grads, Ctx, Layer, Mode, Param};
use crate::network::Network;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub tol: f64,
    /// Denominator floor for the relative error.
    pub floor: f64,
    /// Coordinates checked per tensor; larger tensors are sampled.
    pub max_coords: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { eps: 1e-5, tol: 1e-4, floor: 1e-6, max_coords: 40, seed: 17, mode: Mode::Train }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub kinks: usize,
    pub failures: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }
}

/// Something with a forward pass, a backward pass and parameters.
pub trait Differentiable {
    fn run_forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor>;
    fn run_backward(&mut self, g: &Tensor) -> Result<Tensor>;
    fn all_params_mut(&mut self) -> Vec<&mut Param>;
}

impl Differentiable for Network {
    fn run_forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor> {
        self.forward(x, ctx)
    }

    fn run_backward(&mut self, g: &Tensor) -> Result<Tensor> {
        self.backward(g)
    }

    fn all_params_mut(&mut self) -> Vec<&mut Param> {
        self.params_mut()
    }
}

impl<L: Layer + ?Sized> Differentiable for Box<L> {
    fn run_forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor> {
        self.forward(x, ctx)
    }

    fn run_backward(&mut self, g: &Tensor) -> Result<Tensor> {
        self.backward(g)
    }

    fn all_params_mut(&mut self) -> Vec<&mut Param> {
        self.params_mut()
    }
}

/// Loss `Σ out ⊙ R` for a fixed random `R` shaped like the output.
pub fn projection_loss(seed: u64) -> impl Fn(&Tensor) -> Result<(f64, Tensor)> {
    move |out: &Tensor| {
        let mut rng = Rng::new(seed);
        let r = Tensor::from_fn(out.shape(), |_| rng.normal());
        let l = out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum();
        Ok((l, r))
    }
}

fn coords(len: usize, max: usize, rng: &mut Rng) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..len).collect();
    rng.shuffle(&mut idx);
    idx.truncate(max);
    idx.sort_unstable();
    idx
}

struct Tally<'a> {
    cfg: &'a GradCheckConfig,
    report: GradCheckReport,
}

impl Tally<'_> {
    fn rel(&self, analytic: f64, numeric: f64) -> f64 {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(self.cfg.floor)
    }

    /// `f(k)` is the loss with the coordinate shifted by `k * eps`.
    fn record(&mut self, label: &str, analytic: f64, base: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<()> {
        let eps = self.cfg.eps;
        let (plus, minus) = (f(1.0)?, f(-1.0)?);
        let mut numeric = (plus - minus) / (2.0 * eps);
        let mut rel = self.rel(analytic, numeric);
        if rel >= self.cfg.tol {
            // Five-point stencil: cancels the curvature term of the
            // three-point estimate.
            let (plus2, minus2) = (f(2.0)?, f(-2.0)?);
            numeric = (8.0 * (plus - minus) - (plus2 - minus2)) / (12.0 * eps);
            rel = self.rel(analytic, numeric);
        }
        if rel >= self.cfg.tol {
            // A tenth of the step, in case a kink lies inside the first.
            let fine = (f(0.1)? - f(-0.1)?) / (0.2 * eps);
            let fine_rel = self.rel(analytic, fine);
            if fine_rel < rel {
                (numeric, rel) = (fine, fine_rel);
            }
        }
        if rel >= self.cfg.tol {
            let fwd = (plus - base) / eps;
            let bwd = (base - minus) / eps;
            let spread = (fwd - bwd).abs() / fwd.abs().max(bwd.abs()).max(self.cfg.floor);
            if spread > 1e-2 {
                self.report.kinks += 1;
                return Ok(());
            }
            self.report.failures += 1;
        }
        self.report.checked += 1;
        if rel > self.report.max_rel_err {
            self.report.max_rel_err = rel;
            self.report.worst = format!("{label}: analytic {analytic:e}, numeric {numeric:e}");
        }
        Ok(())
    }
}

/// Check parameter and input gradients of `model` at `x`.
pub fn check<M, F>(model: &mut M, x: &Tensor, loss: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    M: Differentiable,
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    let eval = |model: &mut M, x: &Tensor| -> Result<f64> {
        let mut rng = Rng::new(cfg.seed);
        let mut ctx = Ctx { mode: cfg.mode, rng: &mut rng };
        let out = model.run_forward(x, &mut ctx)?;
        Ok(loss(&out)?.0)
    };

    for p in model.all_params_mut() {
        p.grad.fill(0.0);
    }
    let mut rng = Rng::new(cfg.seed);
    let out = model.run_forward(x, &mut Ctx { mode: cfg.mode, rng: &mut rng })?;
    let (base, g) = loss(&out)?;
    let dx = model.run_backward(&g)?;
    let grads: Vec<Tensor> = model.all_params_mut().into_iter().map(|p| p.grad.clone()).collect();

    let mut pick = Rng::new(cfg.seed ^ 0x9e37_79b9);
    let mut tally = Tally { cfg, report: GradCheckReport::default() };
    for (pi, grad) in grads.iter().enumerate() {
        for c in coords(grad.len(), cfg.max_coords, &mut pick) {
            let orig = model.all_params_mut()[pi].value.data()[c];
            tally.record(&format!("param {pi}[{c}]"), grad.data()[c], base, |k| {
                model.all_params_mut()[pi].value.data_mut()[c] = orig + k * cfg.eps;
                let l = eval(model, x);
                model.all_params_mut()[pi].value.data_mut()[c] = orig;
                l
            })?;
        }
    }
    let mut xp = x.clone();
    for c in coords(x.len(), cfg.max_coords, &mut pick) {
        let orig = x.data()[c];
        tally.record(&format!("input[{c}]"), dx.data()[c], base, |k| {
            xp.data_mut()[c] = orig + k * cfg.eps;
            let l = eval(model, &xp);
            xp.data_mut()[c] = orig;
            l
        })?;
    }
    Ok(tally.report)
}

/// Convenience wrapper for a single layer.
pub fn check_layer(layer: Box<dyn Layer>, x: &Tensor, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut layer = layer;
    zero_grads(layer.as_mut());
    check(&mut layer, x, projection_loss(cfg.seed.wrapping_add(1)), cfg)
}
