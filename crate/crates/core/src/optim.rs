//! Classical optimizers behind one minimization contract.
//!
//! One "iteration" is one outer update: a GD/ADAM/AQGD/SPSA step, a CG or
//! L-BFGS line search, a Nelder-Mead reflection, a Powell cycle, a COBYLA
//! trust-region step or an NFT sweep. Cost evaluations are counted separately.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::GradientMode;
use crate::error::{Error, Result};
use crate::rng::rng_for;

/// Central finite-difference step used when a cost exposes no gradient.
pub const FD_STEP: f64 = 1e-6;

/// A scalar cost over real parameters.
pub trait Objective {
    fn value(&mut self, x: &[f64]) -> Result<f64>;

    /// Analytic gradient, if the cost has one.
    fn gradient(&mut self, _x: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }

    /// Parameter-shift gradient for costs backed by a circuit.
    fn shift_gradient(&mut self, _x: &[f64], _mode: GradientMode) -> Option<Result<Vec<f64>>> {
        None
    }

    /// Lets the caller end a run early once `best` is good enough.
    fn should_stop(&self, _best: f64) -> bool {
        false
    }
}

/// Adapts a closure.
pub struct FnCost<F>(pub F);

impl<F: FnMut(&[f64]) -> f64> Objective for FnCost<F> {
    fn value(&mut self, x: &[f64]) -> Result<f64> {
        Ok((self.0)(x))
    }
}

/// Adapts a closure pair `(value, gradient)`.
pub struct FnCostGrad<F, G>(pub F, pub G);

impl<F: FnMut(&[f64]) -> f64, G: FnMut(&[f64]) -> Vec<f64>> Objective for FnCostGrad<F, G> {
    fn value(&mut self, x: &[f64]) -> Result<f64> {
        Ok((self.0)(x))
    }

    fn gradient(&mut self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(Ok((self.1)(x)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gd,
    Adam,
    Cg,
    Lbfgs,
    NelderMead,
    Spsa,
    Powell,
    Cobyla,
    Aqgd,
    Nft,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Gd,
        Method::Adam,
        Method::Cg,
        Method::Lbfgs,
        Method::NelderMead,
        Method::Spsa,
        Method::Powell,
        Method::Cobyla,
        Method::Aqgd,
        Method::Nft,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Gd => "GD",
            Method::Adam => "ADAM",
            Method::Cg => "CG",
            Method::Lbfgs => "LBFGS",
            Method::NelderMead => "NM",
            Method::Spsa => "SPSA",
            Method::Powell => "POWELL",
            Method::Cobyla => "COBYLA",
            Method::Aqgd => "AQGD",
            Method::Nft => "NFT",
        }
    }

    pub fn uses_gradient(self) -> bool {
        matches!(self, Method::Gd | Method::Adam | Method::Cg | Method::Lbfgs | Method::Aqgd)
    }

    fn default_max_iter(self) -> usize {
        match self {
            Method::Aqgd => 1000,
            _ => 100,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        Ok(match key.as_str() {
            "gd" | "gradient-descent" => Method::Gd,
            "adam" => Method::Adam,
            "cg" => Method::Cg,
            "lbfgs" | "l-bfgs" | "l-bfgs-b" => Method::Lbfgs,
            "nm" | "nelder-mead" | "neldermead" => Method::NelderMead,
            "spsa" => Method::Spsa,
            "powell" => Method::Powell,
            "cobyla" => Method::Cobyla,
            "aqgd" => Method::Aqgd,
            "nft" => Method::Nft,
            _ => return Err(Error::Parse(format!("unknown optimizer {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdConfig {
    pub learning_rate: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig { learning_rate: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsConfig {
    pub memory: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig { memory: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NelderMeadConfig {
    /// Dimension-dependent coefficients.
    pub adaptive: bool,
    /// Spread of simplex vertices at termination.
    pub xtol: f64,
    /// Fixed initial edge; `None` uses 5% of each coordinate (0.00025 at zero).
    pub initial_step: Option<f64>,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig { adaptive: true, xtol: 1e-4, initial_step: None }
    }
}

/// Gains `a_k = a/(A+k+1)^alpha`, `c_k = c/(k+1)^gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpsaConfig {
    /// `None` calibrates `a` from the first gradient estimate.
    pub a: Option<f64>,
    pub c: f64,
    /// `None` means `0.1 * max_iter`.
    #[serde(rename = "big_a")]
    pub stability: Option<f64>,
    pub alpha: f64,
    pub gamma: f64,
    /// Per-component magnitude of the first step when `a` is calibrated.
    pub target_step: f64,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        SpsaConfig { a: None, c: 0.1, stability: None, alpha: 0.602, gamma: 0.101, target_step: 0.1 }
    }
}

impl SpsaConfig {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Domain("SPSA needs c > 0 and 0 < alpha <= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowellConfig {
    pub line_tol: f64,
}

impl Default for PowellConfig {
    fn default() -> Self {
        PowellConfig { line_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CobylaConfig {
    pub initial_radius: f64,
    pub final_radius: f64,
}

impl Default for CobylaConfig {
    fn default() -> Self {
        CobylaConfig { initial_radius: 1.0, final_radius: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AqgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub mode: GradientMode,
}

impl Default for AqgdConfig {
    fn default() -> Self {
        AqgdConfig { learning_rate: 1.0, momentum: 0.25, mode: GradientMode::NaiveTwoterm }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexOrder {
    Sequential,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NftConfig {
    pub index_order: IndexOrder,
}

impl Default for NftConfig {
    fn default() -> Self {
        NftConfig { index_order: IndexOrder::Sequential }
    }
}

/// Settings shared by every method plus per-method tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    /// Overrides the per-method cap (100, or 1000 for AQGD).
    pub max_iter: Option<usize>,
    /// Successive-value tolerance.
    pub tol: f64,
    /// Cap on cost plus gradient calls; unlimited when unset.
    pub max_evaluations: Option<usize>,
    pub seed: u64,
    pub gd: GdConfig,
    pub adam: AdamConfig,
    pub lbfgs: LbfgsConfig,
    pub nelder_mead: NelderMeadConfig,
    pub spsa: SpsaConfig,
    pub powell: PowellConfig,
    pub cobyla: CobylaConfig,
    pub aqgd: AqgdConfig,
    pub nft: NftConfig,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            max_iter: None,
            tol: 1e-6,
            max_evaluations: None,
            seed: 0,
            gd: GdConfig::default(),
            adam: AdamConfig::default(),
            lbfgs: LbfgsConfig::default(),
            nelder_mead: NelderMeadConfig::default(),
            spsa: SpsaConfig::default(),
            powell: PowellConfig::default(),
            cobyla: CobylaConfig::default(),
            aqgd: AqgdConfig::default(),
            nft: NftConfig::default(),
        }
    }
}

impl OptimizerOptions {
    pub fn max_iter_for(&self, m: Method) -> usize {
        self.max_iter.unwrap_or(m.default_max_iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    MaxIterations,
    MaxEvaluations,
    Converged,
    TargetReached,
    LineSearchFailed,
    NonFiniteCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerResult {
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub n_iterations: usize,
    /// Calls to the cost, including finite-difference probes.
    pub n_evaluations: usize,
    /// Calls to an analytic or parameter-shift gradient.
    pub n_gradient_evaluations: usize,
    /// `(iteration, best value so far)`.
    pub trajectory: Vec<(usize, f64)>,
    pub termination: Termination,
    pub message: String,
}

/// Reasons an optimizer loop stops before its own criteria.
enum Halt {
    NonFinite(String),
    Target,
    Budget,
    Fail(Error),
}

impl From<Error> for Halt {
    fn from(e: Error) -> Self {
        Halt::Fail(e)
    }
}

type Step<T> = std::result::Result<T, Halt>;

/// Counts evaluations and keeps the best point seen.
struct Tracker<'a> {
    obj: &'a mut dyn Objective,
    evals: usize,
    grads: usize,
    budget: Option<usize>,
    iter: usize,
    /// Evaluation count when the current iteration began, once iterating.
    mark: Option<usize>,
    best_x: Vec<f64>,
    best_f: f64,
    trajectory: Vec<(usize, f64)>,
}

impl<'a> Tracker<'a> {
    fn new(obj: &'a mut dyn Objective, x0: &[f64], budget: Option<usize>) -> Self {
        Tracker {
            obj,
            evals: 0,
            grads: 0,
            budget,
            iter: 0,
            mark: None,
            best_x: x0.to_vec(),
            best_f: f64::INFINITY,
            trajectory: Vec::new(),
        }
    }

    fn f(&mut self, x: &[f64]) -> Step<f64> {
        let v = self.probe(x)?;
        // ties go to the later point, which is never further from convergence
        if v <= self.best_f {
            self.best_f = v;
            self.best_x.copy_from_slice(x);
        }
        if self.obj.should_stop(self.best_f) {
            return Err(Halt::Target);
        }
        Ok(v)
    }

    /// Counted evaluation that is not a candidate for the best point
    /// (finite-difference and shift-rule probes).
    fn spend(&self) -> Step<()> {
        match self.budget {
            Some(b) if self.evals + self.grads >= b => Err(Halt::Budget),
            _ => Ok(()),
        }
    }

    fn probe(&mut self, x: &[f64]) -> Step<f64> {
        self.spend()?;
        let v = self.obj.value(x)?;
        self.evals += 1;
        if !v.is_finite() {
            return Err(Halt::NonFinite(format!("cost returned {v} at evaluation {}", self.evals)));
        }
        Ok(v)
    }

    fn check_grad(&self, g: Vec<f64>, n: usize) -> Step<Vec<f64>> {
        if g.len() != n {
            return Err(Halt::Fail(Error::Dimension(format!("gradient has {} entries, expected {n}", g.len()))));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Halt::NonFinite(format!("non-finite gradient at evaluation {}", self.evals)));
        }
        Ok(g)
    }

    /// Analytic gradient or central differences with `FD_STEP`.
    fn grad(&mut self, x: &[f64]) -> Step<Vec<f64>> {
        self.spend()?;
        if let Some(g) = self.obj.gradient(x) {
            self.grads += 1;
            return self.check_grad(g?, x.len());
        }
        let mut g = vec![0.0; x.len()];
        let mut probe = x.to_vec();
        for i in 0..x.len() {
            probe[i] = x[i] + FD_STEP;
            let fp = self.probe(&probe)?;
            probe[i] = x[i] - FD_STEP;
            let fm = self.probe(&probe)?;
            probe[i] = x[i];
            g[i] = (fp - fm) / (2.0 * FD_STEP);
        }
        Ok(g)
    }

    /// Shift-rule gradient from the cost, or the black-box two-term rule.
    fn shift_grad(&mut self, x: &[f64], mode: GradientMode) -> Step<Vec<f64>> {
        self.spend()?;
        if let Some(g) = self.obj.shift_gradient(x, mode) {
            self.grads += 1;
            return self.check_grad(g?, x.len());
        }
        let mut g = vec![0.0; x.len()];
        let mut probe = x.to_vec();
        for i in 0..x.len() {
            probe[i] = x[i] + FRAC_PI_2;
            let fp = self.probe(&probe)?;
            probe[i] = x[i] - FRAC_PI_2;
            let fm = self.probe(&probe)?;
            probe[i] = x[i];
            g[i] = 0.5 * (fp - fm);
        }
        Ok(g)
    }

    /// Marks the start of iteration 1 without recording a trajectory point.
    fn begin(&mut self) {
        self.mark = Some(self.evals);
    }

    /// Leaves the iteration loop; later evaluations belong to no update.
    fn settle(&mut self) {
        self.mark = None;
    }

    fn start(&mut self) {
        self.begin();
        self.trajectory.push((0, self.best_f));
    }

    fn end_iteration(&mut self) {
        self.iter += 1;
        self.mark = Some(self.evals);
        self.trajectory.push((self.iter, self.best_f));
    }

    fn finish(mut self, termination: Termination, message: String) -> OptimizerResult {
        // a target hit partway through an update counts that update
        if termination == Termination::TargetReached && self.mark.is_some_and(|m| self.evals > m) {
            self.iter += 1;
        }
        match self.trajectory.last_mut() {
            Some(last) if last.0 == self.iter => last.1 = self.best_f,
            _ => self.trajectory.push((self.iter, self.best_f)),
        }
        OptimizerResult {
            best_params: self.best_x,
            best_value: self.best_f,
            n_iterations: self.iter,
            n_evaluations: self.evals,
            n_gradient_evaluations: self.grads,
            trajectory: self.trajectory,
            termination,
            message,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}

/// Minimizes `obj` from `x0` with `method`.
pub fn minimize(method: Method, obj: &mut dyn Objective, x0: &[f64], opts: &OptimizerOptions) -> Result<OptimizerResult> {
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial parameters".into()));
    }
    if opts.tol.is_nan() || opts.tol < 0.0 {
        return Err(Error::Domain("tolerance must be non-negative".into()));
    }
    let max_iter = opts.max_iter_for(method);
    let mut t = Tracker::new(obj, x0, opts.max_evaluations);
    let outcome = match method {
        Method::Gd => gd(&mut t, x0, max_iter, opts),
        Method::Adam => adam(&mut t, x0, max_iter, opts),
        Method::Cg => cg(&mut t, x0, max_iter, opts.tol),
        Method::Lbfgs => lbfgs(&mut t, x0, max_iter, opts.tol, opts.lbfgs.memory.max(1)),
        Method::NelderMead => nelder_mead(&mut t, x0, max_iter, opts.tol, &opts.nelder_mead),
        Method::Spsa => {
            opts.spsa.validate()?;
            spsa(&mut t, x0, max_iter, &opts.spsa, opts.seed)
        }
        Method::Powell => powell(&mut t, x0, max_iter, opts.tol, opts.powell.line_tol),
        Method::Cobyla => cobyla(&mut t, x0, max_iter, &opts.cobyla),
        Method::Aqgd => aqgd(&mut t, x0, max_iter, opts.tol, &opts.aqgd),
        Method::Nft => nft(&mut t, x0, max_iter, opts.tol, &opts.nft, opts.seed),
    };
    match outcome {
        Ok(term) => Ok(t.finish(term, String::new())),
        Err(Halt::Target) => Ok(t.finish(Termination::TargetReached, String::new())),
        Err(Halt::Budget) => Ok(t.finish(Termination::MaxEvaluations, String::new())),
        Err(Halt::NonFinite(msg)) => Ok(t.finish(Termination::NonFiniteCost, msg)),
        Err(Halt::Fail(e)) => Err(e),
    }
}

fn gd(t: &mut Tracker, x0: &[f64], max_iter: usize, opts: &OptimizerOptions) -> Step<Termination> {
    let h = opts.gd.learning_rate;
    let mut x = x0.to_vec();
    let mut f = t.f(&x)?;
    t.start();
    for _ in 0..max_iter {
        let g = t.grad(&x)?;
        x = axpy(&x, -h, &g);
        let f_new = t.f(&x)?;
        t.end_iteration();
        if (f_new - f).abs() < opts.tol {
            return Ok(Termination::Converged);
        }
        f = f_new;
    }
    Ok(Termination::MaxIterations)
}

fn adam(t: &mut Tracker, x0: &[f64], max_iter: usize, opts: &OptimizerOptions) -> Step<Termination> {
    let cfg = &opts.adam;
    let mut x = x0.to_vec();
    let mut m = vec![0.0; x.len()];
    let mut v = vec![0.0; x.len()];
    let mut f = t.f(&x)?;
    t.start();
    for k in 1..=max_iter {
        let g = t.grad(&x)?;
        let b1t = 1.0 - cfg.beta1.powi(k as i32);
        let b2t = 1.0 - cfg.beta2.powi(k as i32);
        for i in 0..x.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            x[i] -= cfg.learning_rate * (m[i] / b1t) / ((v[i] / b2t).sqrt() + cfg.eps);
        }
        let f_new = t.f(&x)?;
        t.end_iteration();
        if (f_new - f).abs() < opts.tol {
            return Ok(Termination::Converged);
        }
        f = f_new;
    }
    Ok(Termination::MaxIterations)
}

struct LinePoint {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Strong-Wolfe line search (bracketing then zoom with safeguarded
/// quadratic interpolation).
fn wolfe_search(
    t: &mut Tracker,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    alpha_init: f64,
    c2: f64,
) -> Step<Option<LinePoint>> {
    const C1: f64 = 1e-4;
    let dphi0 = dot(g0, d);
    if dphi0 >= 0.0 {
        return Ok(None);
    }
    // sufficient decrease up to rounding in f, so that the curvature test
    // still drives the gradient down once f stops resolving progress
    let slack = 1e-13 * (1.0 + f0.abs());
    let mut probe = |t: &mut Tracker, alpha: f64, need_grad: bool| -> Step<(Vec<f64>, f64, Option<Vec<f64>>)> {
        let xa = axpy(x, alpha, d);
        let fa = t.f(&xa)?;
        let ga = if need_grad { Some(t.grad(&xa)?) } else { None };
        Ok((xa, fa, ga))
    };
    let zoom = |t: &mut Tracker,
                probe: &mut dyn FnMut(&mut Tracker, f64, bool) -> Step<(Vec<f64>, f64, Option<Vec<f64>>)>,
                mut lo: f64,
                mut hi: f64,
                mut f_lo: f64,
                mut f_hi: f64,
                mut dphi_lo: f64|
     -> Step<Option<LinePoint>> {
        for _ in 0..40 {
            let width = hi - lo;
            // minimizer of the quadratic through (lo, f_lo, dphi_lo) and (hi, f_hi)
            let denom = 2.0 * (f_hi - f_lo - dphi_lo * width);
            let mut a = if denom.abs() > 1e-300 { lo - dphi_lo * width * width / denom } else { f64::NAN };
            let (left, right) = if lo < hi { (lo, hi) } else { (hi, lo) };
            let margin = 0.1 * (right - left);
            if !a.is_finite() || a < left + margin || a > right - margin {
                a = 0.5 * (lo + hi);
            }
            if (right - left).abs() < 1e-14 * (1.0 + left.abs()) {
                break;
            }
            let (xa, fa, _) = probe(t, a, false)?;
            if fa > f0 + C1 * a * dphi0 + slack || fa > f_lo + slack {
                hi = a;
                f_hi = fa;
            } else {
                let ga = t.grad(&xa)?;
                let dphi = dot(&ga, d);
                if dphi.abs() <= -c2 * dphi0 {
                    return Ok(Some(LinePoint { alpha: a, x: xa, f: fa, g: ga }));
                }
                if dphi * (hi - lo) >= 0.0 {
                    hi = lo;
                    f_hi = f_lo;
                }
                lo = a;
                f_lo = fa;
                dphi_lo = dphi;
            }
        }
        if lo > 0.0 && f_lo < f0 {
            let (xa, fa, ga) = probe(t, lo, true)?;
            return Ok(Some(LinePoint { alpha: lo, x: xa, f: fa, g: ga.expect("requested") }));
        }
        Ok(None)
    };
    let (mut a_prev, mut f_prev, mut dphi_prev) = (0.0, f0, dphi0);
    let mut a = alpha_init;
    for i in 0..30 {
        let (xa, fa, _) = probe(t, a, false)?;
        if fa > f0 + C1 * a * dphi0 + slack || (i > 0 && fa > f_prev + slack) {
            return zoom(t, &mut probe, a_prev, a, f_prev, fa, dphi_prev);
        }
        let ga = t.grad(&xa)?;
        let dphi = dot(&ga, d);
        if dphi.abs() <= -c2 * dphi0 {
            return Ok(Some(LinePoint { alpha: a, x: xa, f: fa, g: ga }));
        }
        if dphi >= 0.0 {
            return zoom(t, &mut probe, a, a_prev, fa, f_prev, dphi);
        }
        a_prev = a;
        f_prev = fa;
        dphi_prev = dphi;
        a *= 2.0;
    }
    Ok(None)
}

fn first_step(g: &[f64]) -> f64 {
    1.0 / norm(g).max(1.0)
}

/// Polak-Ribière+ nonlinear conjugate gradients.
fn cg(t: &mut Tracker, x0: &[f64], max_iter: usize, tol: f64) -> Step<Termination> {
    let mut x = x0.to_vec();
    let mut f = t.f(&x)?;
    t.start();
    if max_iter == 0 {
        return Ok(Termination::MaxIterations);
    }
    let mut g = t.grad(&x)?;
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut f_old: Option<f64> = None;
    for _ in 0..max_iter {
        if norm(&g) < 1e-12 {
            return Ok(Termination::Converged);
        }
        if dot(&g, &d) >= 0.0 {
            d = g.iter().map(|v| -v).collect();
        }
        let alpha0 = match f_old {
            Some(fo) => {
                let a = 1.01 * 2.0 * (f - fo) / dot(&g, &d);
                if a.is_finite() && a > 0.0 { a.min(1.0) } else { 1.0 }
            }
            None => first_step(&g),
        };
        let Some(p) = wolfe_search(t, &x, f, &g, &d, alpha0, 0.1)? else {
            t.end_iteration();
            return Ok(Termination::LineSearchFailed);
        };
        let beta = {
            let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
            (dot(&p.g, &y) / dot(&g, &g)).max(0.0)
        };
        d = p.g.iter().zip(&d).map(|(gi, di)| -gi + beta * di).collect();
        let _ = p.alpha;
        f_old = Some(f);
        let df = (p.f - f).abs();
        x = p.x;
        f = p.f;
        g = p.g;
        t.end_iteration();
        if df < tol {
            return Ok(Termination::Converged);
        }
    }
    Ok(Termination::MaxIterations)
}

/// Limited-memory BFGS with the two-loop recursion (unbounded).
fn lbfgs(t: &mut Tracker, x0: &[f64], max_iter: usize, tol: f64, memory: usize) -> Step<Termination> {
    let mut x = x0.to_vec();
    let mut f = t.f(&x)?;
    t.start();
    if max_iter == 0 {
        return Ok(Termination::MaxIterations);
    }
    let mut g = t.grad(&x)?;
    let mut hist: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    for k in 0..max_iter {
        if norm(&g) < 1e-12 {
            return Ok(Termination::Converged);
        }
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q = axpy(&q, -a, y);
            alphas.push(a);
        }
        let gamma = hist.back().map_or(1.0, |(s, y, _)| dot(s, y) / dot(y, y));
        let mut r: Vec<f64> = q.iter().map(|v| gamma * v).collect();
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &r);
            r = axpy(&r, a - b, s);
        }
        let mut d: Vec<f64> = r.iter().map(|v| -v).collect();
        if dot(&d, &g) >= 0.0 {
            hist.clear();
            d = g.iter().map(|v| -v).collect();
        }
        let alpha0 = if k == 0 && hist.is_empty() { first_step(&g) } else { 1.0 };
        let Some(p) = wolfe_search(t, &x, f, &g, &d, alpha0, 0.9)? else {
            t.end_iteration();
            return Ok(Termination::LineSearchFailed);
        };
        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * norm(&s) * norm(&y) {
            if hist.len() == memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let df = (p.f - f).abs();
        x = p.x;
        f = p.f;
        g = p.g;
        t.end_iteration();
        if df < tol {
            return Ok(Termination::Converged);
        }
    }
    Ok(Termination::MaxIterations)
}

fn nelder_mead(t: &mut Tracker, x0: &[f64], max_iter: usize, tol: f64, cfg: &NelderMeadConfig) -> Step<Termination> {
    let n = x0.len();
    let nf = n.max(1) as f64;
    let (rho, chi, psi, sigma) = if cfg.adaptive && n > 0 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = t.f(x0)?;
    if max_iter == 0 {
        t.start();
        return Ok(Termination::MaxIterations);
    }
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut v = x0.to_vec();
        let step = match cfg.initial_step {
            Some(s) => s,
            None if v[i] != 0.0 => 0.05 * v[i],
            None => 0.00025,
        };
        v[i] += step;
        let fv = t.f(&v)?;
        simplex.push((v, fv));
    }
    t.start();
    if n == 0 {
        return Ok(Termination::Converged);
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_spread = simplex[n].1 - simplex[0].1;
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_spread <= tol && x_spread <= cfg.xtol {
            return Ok(Termination::Converged);
        }
        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for i in 0..n {
                centroid[i] += v[i] / nf;
            }
        }
        let worst = simplex[n].clone();
        let toward = |coef: f64| -> Vec<f64> {
            centroid.iter().zip(&worst.0).map(|(c, w)| c + coef * (c - w)).collect()
        };
        let xr = toward(rho);
        let fr = t.f(&xr)?;
        if fr < simplex[0].1 {
            let xe = toward(rho * chi);
            let fe = t.f(&xe)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let outside = fr < worst.1;
            let xc = if outside { toward(rho * psi) } else { toward(-psi) };
            let fc = t.f(&xc)?;
            if (outside && fc <= fr) || (!outside && fc < worst.1) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let v: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, x)| b + sigma * (x - b)).collect();
                    let fv = t.f(&v)?;
                    *vertex = (v, fv);
                }
            }
        }
        t.end_iteration();
    }
    Ok(Termination::MaxIterations)
}

/// One simultaneous-perturbation gradient estimate: two cost calls at
/// `x ± ck Δ` with Rademacher `Δ`, regardless of dimension.
pub fn spsa_gradient_estimate<E, R: Rng>(
    mut cost: impl FnMut(&[f64]) -> std::result::Result<f64, E>,
    x: &[f64],
    ck: f64,
    rng: &mut R,
) -> std::result::Result<Vec<f64>, E> {
    let delta: Vec<f64> = (0..x.len()).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
    let plus = cost(&axpy(x, ck, &delta))?;
    let minus = cost(&axpy(x, -ck, &delta))?;
    Ok(delta.iter().map(|d| (plus - minus) / (2.0 * ck * d)).collect())
}

fn spsa(t: &mut Tracker, x0: &[f64], max_iter: usize, cfg: &SpsaConfig, seed: u64) -> Step<Termination> {
    let mut rng = rng_for(seed, 0x5b5a);
    let big_a = cfg.stability.unwrap_or(0.1 * max_iter as f64);
    let mut a = cfg.a;
    let mut x = x0.to_vec();
    t.begin();
    for k in 0..max_iter {
        let kf = k as f64;
        let ck = cfg.c / (kf + 1.0).powf(cfg.gamma);
        let g = spsa_gradient_estimate(|p| t.f(p), &x, ck, &mut rng)?;
        if a.is_none() {
            let mag = g.iter().map(|v| v.abs()).sum::<f64>() / g.len().max(1) as f64;
            if mag > 0.0 {
                a = Some(cfg.target_step * (big_a + 1.0).powf(cfg.alpha) / mag);
            }
        }
        let ak = a.unwrap_or(0.0) / (big_a + kf + 1.0).powf(cfg.alpha);
        x = axpy(&x, -ak, &g);
        t.end_iteration();
    }
    t.settle();
    t.f(&x)?;
    Ok(Termination::MaxIterations)
}

/// Brent minimization of `phi` on the bracket `a < b < c` (or reversed).
fn brent(
    t: &mut Tracker,
    phi: &mut dyn FnMut(&mut Tracker, f64) -> Step<f64>,
    bracket: (f64, f64, f64),
    fb: f64,
    tol: f64,
) -> Step<(f64, f64)> {
    const CGOLD: f64 = 0.381_966_011_250_105;
    const ZEPS: f64 = 1e-20;
    let (ax, bx, cx) = bracket;
    let (mut a, mut b) = if ax < cx { (ax, cx) } else { (cx, ax) };
    let (mut x, mut w, mut v) = (bx, bx, bx);
    let (mut fx, mut fw, mut fv) = (fb, fb, fb);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..100 {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + ZEPS;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if !(p.abs() >= (0.5 * q * etemp).abs() || p <= q * (a - x) || p >= q * (b - x)) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = phi(t, u)?;
        // ties keep the incumbent, which is usually the interpolated minimum
        if fu < fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            w = x;
            x = u;
            fv = fw;
            fw = fx;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                w = u;
                fv = fw;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok((x, fx))
}

/// Line minimization from `x` (value `fx`) along `d`: bracketing by golden
/// expansion with parabolic extrapolation, then Brent.
fn line_minimize(t: &mut Tracker, x: &[f64], fx: f64, d: &[f64], tol: f64) -> Step<(Vec<f64>, f64)> {
    const GOLD: f64 = 1.618_033_988_749_895;
    const GLIMIT: f64 = 100.0;
    if norm(d) == 0.0 {
        return Ok((x.to_vec(), fx));
    }
    let mut phi = |t: &mut Tracker, s: f64| t.f(&axpy(x, s, d));
    let (mut ax, mut bx) = (0.0, 1.0);
    let (mut fa, mut fb) = (fx, phi(t, bx)?);
    if fb > fa {
        std::mem::swap(&mut ax, &mut bx);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut cx = bx + GOLD * (bx - ax);
    let mut fc = phi(t, cx)?;
    let mut guard = 0;
    while fb > fc && guard < 60 {
        guard += 1;
        let r = (bx - ax) * (fb - fc);
        let q = (bx - cx) * (fb - fa);
        let denom = 2.0 * (q - r).abs().max(1e-20).copysign(q - r);
        let mut u = bx - ((bx - cx) * q - (bx - ax) * r) / denom;
        let ulim = bx + GLIMIT * (cx - bx);
        let fu;
        if (bx - u) * (u - cx) > 0.0 {
            let f = phi(t, u)?;
            if f < fc {
                ax = bx;
                bx = u;
                fa = fb;
                fb = f;
                break;
            } else if f > fb {
                cx = u;
                break;
            }
            u = cx + GOLD * (cx - bx);
            fu = phi(t, u)?;
        } else if (cx - u) * (u - ulim) > 0.0 {
            let f = phi(t, u)?;
            if f < fc {
                bx = cx;
                cx = u;
                u = cx + GOLD * (cx - bx);
                fb = fc;
                fc = f;
                fu = phi(t, u)?;
            } else {
                fu = f;
            }
        } else if (u - ulim) * (ulim - cx) >= 0.0 {
            u = ulim;
            fu = phi(t, u)?;
        } else {
            u = cx + GOLD * (cx - bx);
            fu = phi(t, u)?;
        }
        ax = bx;
        bx = cx;
        cx = u;
        fa = fb;
        fb = fc;
        fc = fu;
    }
    let _ = fa;
    let (s, fs) = brent(t, &mut phi, (ax, bx, cx), fb, tol)?;
    if fs < fx {
        Ok((axpy(x, s, d), fs))
    } else {
        Ok((x.to_vec(), fx))
    }
}

fn powell(t: &mut Tracker, x0: &[f64], max_iter: usize, tol: f64, line_tol: f64) -> Step<Termination> {
    let n = x0.len();
    let axes = || -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect()
    };
    let mut dirs = axes();
    let mut x = x0.to_vec();
    let mut f = t.f(&x)?;
    t.start();
    for _ in 0..max_iter {
        let (x_start, f_start) = (x.clone(), f);
        for d in &dirs {
            (x, f) = line_minimize(t, &x, f, d, line_tol)?;
        }
        let disp: Vec<f64> = x.iter().zip(&x_start).map(|(a, b)| a - b).collect();
        if norm(&disp) == 0.0 {
            dirs = axes();
        } else {
            dirs.remove(0);
            dirs.push(disp.clone());
            (x, f) = line_minimize(t, &x, f, &disp, line_tol)?;
        }
        t.end_iteration();
        if f_start - f < tol {
            return Ok(Termination::Converged);
        }
    }
    Ok(Termination::MaxIterations)
}

/// Unconstrained COBYLA: linear interpolation on an `n+1` vertex simplex and
/// steps of length `Δ` against the model gradient.
fn cobyla(t: &mut Tracker, x0: &[f64], max_iter: usize, cfg: &CobylaConfig) -> Step<Termination> {
    let n = x0.len();
    let mut radius = cfg.initial_radius;
    let f0 = t.f(x0)?;
    t.start();
    if !(radius > cfg.final_radius) || n == 0 {
        return Ok(Termination::Converged);
    }
    if max_iter == 0 {
        return Ok(Termination::MaxIterations);
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    let reseed = |t: &mut Tracker, centre: (Vec<f64>, f64), radius: f64| -> Step<Vec<(Vec<f64>, f64)>> {
        let mut s = vec![centre.clone()];
        for i in 0..n {
            let mut v = centre.0.clone();
            v[i] += radius;
            let fv = t.f(&v)?;
            s.push((v, fv));
        }
        Ok(s)
    };
    simplex = {
        let centre = simplex.remove(0);
        reseed(t, centre, radius)?
    };
    let mut reseeds = 0;
    while t.iter < max_iter {
        let best = (0..=n).min_by(|&a, &b| simplex[a].1.total_cmp(&simplex[b].1)).expect("non-empty");
        let (xb, fb) = simplex[best].clone();
        let others: Vec<usize> = (0..=n).filter(|&i| i != best).collect();
        let dmat = DMatrix::from_fn(n, n, |r, c| simplex[others[r]].0[c] - xb[c]);
        let rhs = DVector::from_iterator(n, others.iter().map(|&i| simplex[i].1 - fb));
        let diameter = others.iter().map(|&i| norm(&axpy(&simplex[i].0, -1.0, &xb))).fold(0.0, f64::max);
        // volume relative to a right simplex with edges `radius`
        let volume = dmat.determinant().abs() / radius.powi(n as i32);
        let model = if volume < 1e-10 || diameter > 4.0 * radius { None } else { dmat.lu().solve(&rhs) };
        let Some(grad) = model else {
            reseeds += 1;
            if reseeds > 2 {
                radius *= 0.5;
                t.end_iteration();
            }
            simplex = reseed(t, (xb, fb), radius)?;
            continue;
        };
        reseeds = 0;
        let gnorm = grad.norm();
        let worst = (0..=n).max_by(|&a, &b| simplex[a].1.total_cmp(&simplex[b].1)).expect("non-empty");
        if gnorm == 0.0 || !gnorm.is_finite() {
            radius *= 0.5;
        } else {
            let xn: Vec<f64> = xb.iter().zip(grad.iter()).map(|(x, g)| x - radius * g / gnorm).collect();
            let fnew = t.f(&xn)?;
            if fnew >= fb {
                radius *= 0.5;
            }
            simplex[worst] = (xn, fnew);
        }
        t.end_iteration();
        if radius < cfg.final_radius {
            return Ok(Termination::Converged);
        }
    }
    Ok(Termination::MaxIterations)
}

fn aqgd(t: &mut Tracker, x0: &[f64], max_iter: usize, tol: f64, cfg: &AqgdConfig) -> Step<Termination> {
    let mut x = x0.to_vec();
    let mut v = vec![0.0; x.len()];
    let mut f = t.f(&x)?;
    t.start();
    for _ in 0..max_iter {
        let g = t.shift_grad(&x, cfg.mode)?;
        for i in 0..x.len() {
            v[i] = cfg.momentum * v[i] + g[i];
            x[i] -= cfg.learning_rate * v[i];
        }
        let f_new = t.f(&x)?;
        t.end_iteration();
        if (f_new - f).abs() < tol {
            return Ok(Termination::Converged);
        }
        f = f_new;
    }
    Ok(Termination::MaxIterations)
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut w = theta.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Closed-form minimizer of `a1 cos(θ - a2) + a3` through the values at
/// `θ0`, `θ0 + π/2`, `θ0 - π/2`. Returns `(θ*, predicted minimum)` or `None`
/// when the direction is flat.
pub fn nft_update(theta0: f64, e0: f64, e_plus: f64, e_minus: f64) -> Option<(f64, f64)> {
    let a3 = 0.5 * (e_plus + e_minus);
    let big_a = e0 - a3;
    let big_b = 0.5 * (e_minus - e_plus);
    let a1 = big_a.hypot(big_b);
    if a1 < 1e-14 {
        return None;
    }
    let a2 = theta0 - big_b.atan2(big_a);
    Some((wrap_angle(a2 + PI), a3 - a1))
}

fn nft(t: &mut Tracker, x0: &[f64], max_iter: usize, tol: f64, cfg: &NftConfig, seed: u64) -> Step<Termination> {
    let n = x0.len();
    let mut rng = rng_for(seed, 0x4e46);
    let mut x = x0.to_vec();
    let mut current = t.f(&x)?;
    t.start();
    let mut term = Termination::MaxIterations;
    for _ in 0..max_iter {
        let sweep_start = current;
        let mut order: Vec<usize> = (0..n).collect();
        if cfg.index_order == IndexOrder::Random {
            order.shuffle(&mut rng);
        }
        for j in order {
            let e0 = match cfg.index_order {
                IndexOrder::Sequential => current,
                IndexOrder::Random => t.f(&x)?,
            };
            let theta0 = x[j];
            x[j] = theta0 + FRAC_PI_2;
            let ep = t.f(&x)?;
            x[j] = theta0 - FRAC_PI_2;
            let em = t.f(&x)?;
            match nft_update(theta0, e0, ep, em) {
                Some((theta, predicted)) => {
                    x[j] = theta;
                    current = predicted;
                }
                None => {
                    x[j] = theta0;
                    current = e0;
                }
            }
        }
        t.end_iteration();
        if n == 0 || (sweep_start - current).abs() < tol {
            term = Termination::Converged;
            break;
        }
    }
    t.settle();
    t.f(&x)?;
    Ok(term)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quad(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn gd_follows_update_rule() {
        let mut obj = FnCostGrad(|x: &[f64]| x[0] * x[0], |x: &[f64]| vec![2.0 * x[0]]);
        let opts = OptimizerOptions { max_iter: Some(3), tol: 0.0, gd: GdConfig { learning_rate: 0.4 }, ..Default::default() };
        let r = minimize(Method::Gd, &mut obj, &[1.0], &opts).unwrap();
        assert!((r.best_params[0] - 0.008).abs() < 1e-15);
        let vals: Vec<f64> = r.trajectory.iter().map(|p| p.1).collect();
        let want = [1.0, 0.04, 0.0016, 0.000064];
        for (v, w) in vals.iter().zip(want) {
            assert!((v - w).abs() < 1e-15);
        }
    }

    #[test]
    fn spsa_constant_cost_keeps_x() {
        let opts = OptimizerOptions { max_iter: Some(7), ..Default::default() };
        let mut seen = Vec::new();
        let mut obj = FnCost(|x: &[f64]| {
            seen.push(x.to_vec());
            3.0
        });
        let r = minimize(Method::Spsa, &mut obj, &[0.5, -0.25], &opts).unwrap();
        assert_eq!(r.n_evaluations, 2 * 7 + 1);
        assert_eq!(seen.last().unwrap(), &vec![0.5, -0.25]);
    }

    #[test]
    fn spsa_estimator_uses_two_calls() {
        let mut rng = rng_for(1, 2);
        let mut calls = 0;
        let g = spsa_gradient_estimate(
            |x: &[f64]| -> Result<f64> {
                calls += 1;
                Ok(quad(x))
            },
            &[1.0; 8],
            0.1,
            &mut rng,
        )
        .unwrap();
        assert_eq!(calls, 2);
        assert_eq!(g.len(), 8);
    }

    #[test]
    fn powell_separable_one_cycle() {
        let c = [0.3, -1.2, 2.0];
        let mut obj = FnCost(|x: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>());
        let opts = OptimizerOptions { max_iter: Some(1), ..Default::default() };
        let r = minimize(Method::Powell, &mut obj, &[0.0; 3], &opts).unwrap();
        assert_eq!(r.n_iterations, 1);
        for (x, want) in r.best_params.iter().zip(c) {
            assert!((x - want).abs() < 1e-8);
        }
    }

    #[test]
    fn powell_coupled_quadratic() {
        // f = x^T A x - 2 b^T x, minimizer A^{-1} b
        let f = |x: &[f64]| 2.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + 3.0 * x[1] * x[1] - 2.0 * (x[0] + 2.0 * x[1]);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let want = a.lu().solve(&DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let mut obj = FnCost(f);
        let opts = OptimizerOptions { max_iter: Some(5), tol: 0.0, ..Default::default() };
        let r = minimize(Method::Powell, &mut obj, &[0.0, 0.0], &opts).unwrap();
        assert!((r.best_params[0] - want[0]).abs() < 1e-6 && (r.best_params[1] - want[1]).abs() < 1e-6);
    }

    #[test]
    fn cobyla_linear_steps() {
        let mut obj = FnCost(|x: &[f64]| x[0]);
        let opts = OptimizerOptions { max_iter: Some(4), ..Default::default() };
        let r = minimize(Method::Cobyla, &mut obj, &[0.0, 0.0], &opts).unwrap();
        // simplex seed at radius 1 then four unit steps along -x0
        assert!((r.best_params[0] + 4.0).abs() < 1e-12, "{:?}", r.best_params);
        assert!(r.best_params[1].abs() < 1e-12);
    }

    #[test]
    fn cobyla_bowl_and_zero_radius() {
        let mut obj = FnCost(|x: &[f64]| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2));
        let opts = OptimizerOptions { max_iter: Some(1000), ..Default::default() };
        let r = minimize(Method::Cobyla, &mut obj, &[0.0, 0.0], &opts).unwrap();
        assert!(r.best_value < 1e-6, "{}", r.best_value);
        assert!(r.n_evaluations <= 200, "{}", r.n_evaluations);
        let opts = OptimizerOptions { cobyla: CobylaConfig { initial_radius: 0.0, final_radius: 1e-6 }, ..Default::default() };
        let r = minimize(Method::Cobyla, &mut obj, &[0.0, 0.0], &opts).unwrap();
        assert_eq!(r.n_iterations, 0);
    }

    #[test]
    fn nelder_mead_abs() {
        let mut obj = FnCost(|x: &[f64]| (x[0] - 3.0).abs());
        let opts = OptimizerOptions { max_iter: Some(200), ..Default::default() };
        let r = minimize(Method::NelderMead, &mut obj, &[0.0], &opts).unwrap();
        assert!(r.best_value < 1e-4, "{}", r.best_value);
    }

    #[test]
    fn lbfgs_convex_quadratic() {
        let a = DMatrix::from_fn(5, 5, |i, j| if i == j { 2.0 + i as f64 } else { 0.3 / (1.0 + (i + j) as f64) });
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0, 3.0]);
        let (a2, b2) = (a.clone(), b.clone());
        let f = move |x: &[f64]| {
            let v = DVector::from_column_slice(x);
            0.5 * v.dot(&(&a * &v)) - b.dot(&v)
        };
        let g = move |x: &[f64]| {
            let v = DVector::from_column_slice(x);
            (&a2 * v - &b2).iter().copied().collect::<Vec<f64>>()
        };
        let mut obj = FnCostGrad(f, g.clone());
        let opts = OptimizerOptions { max_iter: Some(50), tol: 0.0, ..Default::default() };
        let r = minimize(Method::Lbfgs, &mut obj, &[0.0; 5], &opts).unwrap();
        assert!(norm(&g(&r.best_params)) < 1e-8);
        assert!(r.n_iterations <= 50);
    }

    #[test]
    fn smooth_methods_agree_on_quadratic() {
        let f = |x: &[f64]| 1.5 * (x[0] - 0.4).powi(2) + (x[1] + 0.7).powi(2) + 0.5 * (x[0] - 0.4) * (x[1] + 0.7);
        let g = |x: &[f64]| {
            vec![3.0 * (x[0] - 0.4) + 0.5 * (x[1] + 0.7), 2.0 * (x[1] + 0.7) + 0.5 * (x[0] - 0.4)]
        };
        let base = OptimizerOptions { max_iter: Some(20000), tol: 0.0, ..Default::default() };
        let runs = [
            (Method::Gd, OptimizerOptions { gd: GdConfig { learning_rate: 0.2 }, max_iter: Some(500), ..base.clone() }),
            (Method::Adam, OptimizerOptions { adam: AdamConfig { learning_rate: 0.01, ..Default::default() }, ..base.clone() }),
            (Method::Cg, OptimizerOptions { max_iter: Some(100), ..base.clone() }),
            (Method::Lbfgs, OptimizerOptions { max_iter: Some(100), ..base.clone() }),
        ];
        for (m, opts) in runs {
            let r = minimize(m, &mut FnCostGrad(f, g), &[2.0, 2.0], &opts).unwrap();
            assert!((r.best_params[0] - 0.4).abs() < 1e-6 && (r.best_params[1] + 0.7).abs() < 1e-6, "{m}: {:?}", r.best_params);
        }
    }

    #[test]
    fn aqgd_single_step() {
        let mut obj = FnCost(|x: &[f64]| x[0].cos());
        let opts = OptimizerOptions {
            max_iter: Some(1),
            aqgd: AqgdConfig { learning_rate: 0.1, ..Default::default() },
            ..Default::default()
        };
        let x0 = FRAC_PI_2;
        let r = minimize(Method::Aqgd, &mut obj, &[x0], &opts).unwrap();
        assert!((r.best_params[0] - (x0 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn nft_cosine() {
        let (theta, value) = nft_update(0.0, 1.0, (FRAC_PI_2).cos(), (-FRAC_PI_2).cos()).unwrap();
        assert_eq!(theta, PI);
        assert!((value + 1.0).abs() < 1e-15);
        assert!(nft_update(0.3, 1.0, 1.0, 1.0).is_none());
        let mut obj = FnCost(|x: &[f64]| x[0].cos());
        let opts = OptimizerOptions { max_iter: Some(1), ..Default::default() };
        let r = minimize(Method::Nft, &mut obj, &[0.0], &opts).unwrap();
        assert_eq!(r.best_params[0], PI);
        assert_eq!(r.best_value, -1.0);
    }

    #[test]
    fn zero_iterations_evaluate_only_x0() {
        for m in Method::ALL {
            let mut seen = Vec::new();
            let mut obj = FnCost(|x: &[f64]| {
                seen.push(x.to_vec());
                quad(x)
            });
            let opts = OptimizerOptions { max_iter: Some(0), ..Default::default() };
            let r = minimize(m, &mut obj, &[0.5, 0.5], &opts).unwrap();
            assert_eq!(r.n_iterations, 0);
            assert_eq!(r.best_value, 0.5, "{m}");
            assert!(seen.iter().all(|x| x == &vec![0.5, 0.5]), "{m}");
        }
    }

    #[test]
    fn target_stop_counts_partial_iteration() {
        struct Stop;
        impl Objective for Stop {
            fn value(&mut self, x: &[f64]) -> Result<f64> {
                Ok(quad(x))
            }
            fn should_stop(&self, best: f64) -> bool {
                best < 0.9
            }
        }
        let r = minimize(Method::Powell, &mut Stop, &[1.0], &OptimizerOptions::default()).unwrap();
        assert_eq!(r.termination, Termination::TargetReached);
        assert_eq!(r.n_iterations, 1);
        let r = minimize(Method::Powell, &mut Stop, &[0.1], &OptimizerOptions::default()).unwrap();
        assert_eq!((r.n_iterations, r.n_evaluations), (0, 1));
    }

    #[test]
    fn evaluation_budget_is_respected() {
        for m in Method::ALL {
            let opts = OptimizerOptions { max_evaluations: Some(9), tol: 0.0, ..Default::default() };
            let r = minimize(m, &mut FnCost(quad), &[1.0, -1.0, 0.5], &opts).unwrap();
            assert!(r.n_evaluations + r.n_gradient_evaluations <= 9, "{m}");
        }
    }

    #[test]
    fn nan_aborts_with_best_so_far() {
        let mut calls = 0;
        let mut obj = FnCost(|x: &[f64]| {
            calls += 1;
            if calls > 3 { f64::NAN } else { quad(x) }
        });
        let r = minimize(Method::Powell, &mut obj, &[1.0, 1.0], &OptimizerOptions::default()).unwrap();
        assert_eq!(r.termination, Termination::NonFiniteCost);
        assert!(r.best_value <= 2.0);
        assert!(!r.message.is_empty());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert_eq!("L_BFGS_B".parse::<Method>().unwrap(), Method::Lbfgs);
        assert!("slsqp".parse::<Method>().is_err());
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn generic_invariants(seed in 0u64..1000, m in 0usize..10, x0 in proptest::collection::vec(-2.0f64..2.0, 1..4)) {
            let method = Method::ALL[m];
            let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (1.0 + i as f64) * (v - 0.3).powi(2)).sum::<f64>();
            let f0 = f(&x0);
            let max_iter = 20;
            let opts = OptimizerOptions { max_iter: Some(max_iter), seed, ..Default::default() };
            let mut calls = 0usize;
            let mut obj = FnCost(|x: &[f64]| { calls += 1; f(x) });
            let r = minimize(method, &mut obj, &x0, &opts).unwrap();
            prop_assert_eq!(r.n_evaluations, calls);
            prop_assert!(r.n_evaluations >= r.n_iterations);
            prop_assert!(r.trajectory.len() <= max_iter + 1);
            let traj_min = r.trajectory.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(r.best_value, traj_min);
            if method != Method::Spsa {
                prop_assert!(r.best_value <= f0);
            }
            let mut again = FnCost(f);
            let r2 = minimize(method, &mut again, &x0, &opts).unwrap();
            prop_assert_eq!(r, r2);
        }

        #[test]
        fn nft_update_dominates_probes(a1 in 0.01f64..3.0, a2 in -3.0f64..3.0, a3 in -2.0f64..2.0, t0 in -3.0f64..3.0) {
            let f = |t: f64| a1 * (t - a2).cos() + a3;
            let (e0, ep, em) = (f(t0), f(t0 + FRAC_PI_2), f(t0 - FRAC_PI_2));
            let (theta, predicted) = nft_update(t0, e0, ep, em).unwrap();
            prop_assert!((f(theta) - predicted).abs() < 1e-10);
            prop_assert!(f(theta) <= e0.min(ep).min(em) + 1e-12);
            prop_assert!((predicted - (a3 - a1)).abs() < 1e-10);
        }
    }
}
