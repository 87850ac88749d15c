//! Momentum mask optimizer.
//!
//! Each iteration takes the gradient of
//! `L_attack + lambda1 * L_binary + lambda2 * L_agg` with respect to the
//! mask, restricts it to the object region, L1-normalizes it into the
//! momentum accumulator, modulates the accumulator by the min-max
//! normalized Gaussian-smoothed previous mask, steps, projects onto the
//! object region and clamps to `[0, 1]`. The loop stops at the first
//! iterate whose top-1 score is at most `s_thr` while `||M||_1` is within
//! the size budget.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggreg::{aggregation_map, loss_agg};
use crate::binreg::{loss_binary, BinRegConfig};
use crate::error::{Error, Result};
use crate::imgcore::{
    compose_adversarial, convolve, gaussian_kernel, minmax_normalize, CoverSpec, GrayImage, Grid,
    Mask,
};
use crate::victim::{DetectionSet, VictimModel};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu: f64,
    pub epsilon_step: f64,
    pub max_iters: usize,
    /// Absolute L1 budget. When `None`, `epsilon_max_fraction * ||M_obj||_1`.
    pub epsilon_max: Option<f64>,
    pub epsilon_max_fraction: f64,
    pub s_thr: f64,
    pub gauss_size: usize,
    pub gauss_sigma: f64,
    pub seed: u64,
    pub binary: BinRegConfig,
    /// Record a mask snapshot every this many iterations (0 included).
    pub snapshot_every: Option<usize>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lambda1: 0.04,
            lambda2: 300.0,
            mu: 0.9,
            epsilon_step: 6.0,
            max_iters: 1000,
            epsilon_max: None,
            epsilon_max_fraction: 0.15,
            s_thr: 0.3,
            gauss_size: 5,
            gauss_sigma: 1.0,
            seed: 0,
            binary: BinRegConfig::default(),
            snapshot_every: None,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Parameter(what));
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad(format!(
                "loss weights must be non-negative, got {} and {}",
                self.lambda1, self.lambda2
            ));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return bad(format!("mu must lie in [0, 1), got {}", self.mu));
        }
        if !(self.epsilon_step > 0.0) {
            return bad(format!(
                "epsilon_step must be positive, got {}",
                self.epsilon_step
            ));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if let Some(e) = self.epsilon_max {
            if !(e > 0.0) {
                return bad(format!("epsilon_max must be positive, got {e}"));
            }
        }
        if !(self.epsilon_max_fraction > 0.0) {
            return bad(format!(
                "epsilon_max_fraction must be positive, got {}",
                self.epsilon_max_fraction
            ));
        }
        if !(self.s_thr > 0.0 && self.s_thr <= 1.0) {
            return bad(format!("s_thr must lie in (0, 1], got {}", self.s_thr));
        }
        if self.gauss_size % 2 == 0 || !(self.gauss_sigma > 0.0) {
            return bad(format!(
                "gaussian kernel needs odd size and positive sigma, got {} and {}",
                self.gauss_size, self.gauss_sigma
            ));
        }
        if self.snapshot_every == Some(0) {
            return bad("snapshot_every must be at least 1".into());
        }
        self.binary.validate()
    }

    pub fn budget(&self, m_obj: &Mask) -> f64 {
        self.epsilon_max
            .unwrap_or(self.epsilon_max_fraction * m_obj.l1_norm())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRecord {
    pub attack: f64,
    pub binary: f64,
    pub agg: f64,
    pub top1: f64,
    pub mask_l1: f64,
    pub aggregation: f64,
}

impl HistoryRecord {
    pub const CSV_HEADER: &'static str =
        "iteration,l_attack,l_binary,l_agg,top1_score,mask_l1,aggregation";
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    /// Ran out of iterations with the score under threshold but the mask
    /// over budget.
    BudgetExceededAtT,
    MaxIters,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::BudgetExceededAtT => "budget_exceeded_at_T",
            StopReason::MaxIters => "max_iters",
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimState {
    pub t: usize,
    pub m: Mask,
    pub g: Grid,
    pub history: Vec<HistoryRecord>,
    pub stop_reason: StopReason,
    pub snapshots: Vec<(usize, Mask)>,
}

#[derive(Clone, Debug)]
pub struct OptimOutcome {
    pub mask: Mask,
    pub x_adv: GrayImage,
    pub detections: DetectionSet,
    pub epsilon_max: f64,
    pub state: OptimState,
}

/// Component values and the total gradient at one mask.
#[derive(Clone, Debug)]
pub struct LossBreakdown {
    pub total: f64,
    pub attack: f64,
    pub binary: f64,
    pub agg: f64,
    pub grad: Grid,
    pub detections: DetectionSet,
    pub x_adv: GrayImage,
}

fn check_shapes(x: &GrayImage, m: &Mask) -> Result<()> {
    x.grid().check_same_shape(m.grid())
}

/// Evaluates every loss term at `m`. The attack gradient is chained
/// through the composition: `d x_adv / d M = cover - x` per pixel.
pub fn evaluate_losses(
    model: &dyn VictimModel,
    x: &GrayImage,
    cover: CoverSpec,
    m: &Mask,
    cfg: &OptimConfig,
) -> Result<LossBreakdown> {
    check_shapes(x, m)?;
    let x_adv = compose_adversarial(x, cover, m)?;
    let (detections, grad_x) = model.evaluate(&x_adv)?;
    let attack = detections.top1_score();
    let mut grad = grad_x.zip_map(x.grid(), |g, xv| g * (cover.value - xv))?;
    let (binary, g_bin) = loss_binary(m, &cfg.binary);
    let (agg, g_agg) = loss_agg(m);
    if cfg.lambda1 != 0.0 {
        grad.add_scaled(cfg.lambda1, &g_bin)?;
    }
    if cfg.lambda2 != 0.0 {
        grad.add_scaled(cfg.lambda2, &g_agg)?;
    }
    Ok(LossBreakdown {
        total: attack + cfg.lambda1 * binary + cfg.lambda2 * agg,
        attack,
        binary,
        agg,
        grad,
        detections,
        x_adv,
    })
}

pub fn total_loss(
    model: &dyn VictimModel,
    x: &GrayImage,
    cover: CoverSpec,
    m: &Mask,
    cfg: &OptimConfig,
) -> Result<(f64, Grid)> {
    let b = evaluate_losses(model, x, cover, m, cfg)?;
    Ok((b.total, b.grad))
}

/// `mu * g_prev + grad / ||grad||_1`; a zero gradient contributes nothing.
pub fn momentum_step(g_prev: &Grid, grad: &Grid, mu: f64) -> Result<Grid> {
    let norm = grad.l1_norm();
    let mut next = g_prev.scale(mu);
    if norm > 0.0 {
        next.add_scaled(1.0 / norm, grad)?;
    } else {
        g_prev.check_same_shape(grad)?;
    }
    Ok(next)
}

/// `g * Norm(m_prev * k_gau)`.
pub fn finetune_gradient(g: &Grid, m_prev: &Mask, k_gau: &Grid) -> Result<Grid> {
    let smooth = convolve(m_prev.grid(), k_gau)?;
    g.hadamard(&minmax_normalize(&smooth))
}

/// `clamp((m - eps * g) * m_obj, 0, 1)`.
pub fn mask_update(m: &Mask, g: &Grid, epsilon_step: f64, m_obj: &Mask) -> Result<Mask> {
    m.grid().check_same_shape(g)?;
    m.grid().check_same_shape(m_obj.grid())?;
    let stepped = m.grid().zip_map(g, |mv, gv| mv - epsilon_step * gv)?;
    Ok(Mask::continuous_clamped(stepped.hadamard(m_obj.grid())?))
}

/// Uniform `[0, 1)` mask drawn row-major from `seed`, restricted to `m_obj`.
pub fn initial_mask(m_obj: &Mask, seed: u64) -> Mask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = m_obj.shape();
    let g = Grid::from_fn(h, w, |r, c| rng.gen::<f64>() * m_obj.get(r, c));
    Mask::continuous_clamped(g)
}

pub fn run(
    model: &dyn VictimModel,
    x: &GrayImage,
    cover: CoverSpec,
    m_obj: &Mask,
    cfg: &OptimConfig,
) -> Result<OptimOutcome> {
    cfg.validate()?;
    check_shapes(x, m_obj)?;
    if !(m_obj.l1_norm() > 0.0) {
        return Err(Error::Parameter("object mask is empty".into()));
    }
    let epsilon_max = cfg.budget(m_obj);
    let k_gau = gaussian_kernel(cfg.gauss_size, cfg.gauss_sigma)?;
    let (h, w) = x.shape();

    let mut m = initial_mask(m_obj, cfg.seed);
    let mut eval = evaluate_losses(model, x, cover, &m, cfg)?;
    let mut g = Grid::zeros(h, w);
    let mut history = Vec::with_capacity(cfg.max_iters.min(4096));
    let mut snapshots = Vec::new();
    if cfg.snapshot_every.is_some() {
        snapshots.push((0, m.clone()));
    }
    let mut stop_reason = StopReason::MaxIters;

    for t in 0..cfg.max_iters {
        // the patch only acts through M * M_obj
        let grad = eval.grad.hadamard(m_obj.grid())?;
        g = momentum_step(&g, &grad, cfg.mu)?;
        g = finetune_gradient(&g, &m, &k_gau)?;
        m = mask_update(&m, &g, cfg.epsilon_step, m_obj)?;
        eval = evaluate_losses(model, x, cover, &m, cfg)?;

        let mask_l1 = m.l1_norm();
        history.push(HistoryRecord {
            attack: eval.attack,
            binary: eval.binary,
            agg: eval.agg,
            top1: eval.attack,
            mask_l1,
            aggregation: aggregation_map(&m, Some(m_obj))?.mean_support,
        });
        if let Some(k) = cfg.snapshot_every {
            if (t + 1) % k == 0 {
                snapshots.push((t + 1, m.clone()));
            }
        }
        if eval.attack <= cfg.s_thr && mask_l1 <= epsilon_max {
            stop_reason = StopReason::Converged;
            break;
        }
    }
    if stop_reason != StopReason::Converged && eval.attack <= cfg.s_thr {
        stop_reason = StopReason::BudgetExceededAtT;
    }

    let state = OptimState {
        t: history.len(),
        m: m.clone(),
        g,
        history,
        stop_reason,
        snapshots,
    };
    Ok(OptimOutcome {
        mask: m,
        x_adv: eval.x_adv,
        detections: eval.detections,
        epsilon_max,
        state,
    })
}

/// Recorded snapshots at iterations `0, k, 2k, ...`.
pub fn trace_masks(state: &OptimState, every_k: usize) -> Result<Vec<(usize, &Mask)>> {
    if every_k == 0 {
        return Err(Error::Parameter("every_k must be at least 1".into()));
    }
    if state.snapshots.is_empty() {
        return Err(Error::Precondition(
            "no snapshots recorded; enable snapshot_every in the config".into(),
        ));
    }
    Ok(state
        .snapshots
        .iter()
        .filter(|(t, _)| t % every_k == 0)
        .map(|(t, m)| (*t, m))
        .collect())
}
