//! The full adjustment pipeline: flip, fit the score spline, compute plug-in
//! conditional moments (plain, bias-corrected, or mixture), apply the oracle
//! rule, and select the variance and bias parameters by grid search.

use serde::{Deserialize, Serialize};

use crate::error::{EcapError, Result};
use crate::model::{flip, oracle_adjust, BiasLinkParam, ConditionalMoments, Probability};
use crate::numeric::{lin_space, log_space};
use crate::rng::stream_rng;
use crate::spline::{build_basis, cross_validate_lambda, fit_g, CvConfig, ScoreSplineFit};

/// One raw probability estimate, optionally paired with a realized outcome
/// (for likelihood tuning) and with the true probability (simulation only).
#[derive(Debug, Clone)]
pub struct ProbabilitySample {
    pub p_tilde: Probability,
    pub outcome: Option<bool>,
    pub p_true: Option<Probability>,
}

impl ProbabilitySample {
    pub fn new(p_tilde: Probability) -> Self {
        Self {
            p_tilde,
            outcome: None,
            p_true: None,
        }
    }

    pub fn with_outcome(p_tilde: Probability, outcome: bool) -> Self {
        Self {
            p_tilde,
            outcome: Some(outcome),
            p_true: None,
        }
    }
}

/// Lower-bounding policy for the plug-in conditional variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceFloor {
    /// Fixed absolute floor.
    Absolute(f64),
    /// Rate-based floor `c sqrt(r_n s_n)` with
    /// `r_n = n^{-4/7}/lambda + n^{-2/7} + lambda` and
    /// `s_n = 1 + n^{-4/7}/lambda^2`, resolved at fit time.
    Theoretical { c: f64 },
}

impl VarianceFloor {
    fn resolve(self, n: usize, lambda: f64) -> f64 {
        match self {
            VarianceFloor::Absolute(eps) => eps,
            VarianceFloor::Theoretical { c } => {
                let nf = n as f64;
                let r = nf.powf(-4.0 / 7.0) / lambda + nf.powf(-2.0 / 7.0) + lambda;
                let s = 1.0 + nf.powf(-4.0 / 7.0) / (lambda * lambda);
                c * (r * s).sqrt()
            }
        }
    }
}

/// Which sample the likelihood search sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MleMode {
    /// Tune on the same sample the spline was fitted on.
    InSample,
    /// Fit and tune on a seeded random fraction of the sample, leaving the
    /// rest untouched for the caller's own holdout evaluation.
    SplitSample { fraction: f64 },
}

/// Fixed beta-mixture weights and scales with `sum w = 1`, `sum w c = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    weights: Vec<f64>,
    scales: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(weights: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != scales.len() {
            return Err(EcapError::Config(
                "mixture weights and scales must be nonempty and equal length".into(),
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0)) || scales.iter().any(|&c| !(c > 0.0)) {
            return Err(EcapError::Config(
                "mixture weights and scales must be positive".into(),
            ));
        }
        let sum_w: f64 = weights.iter().sum();
        let sum_wc: f64 = weights.iter().zip(&scales).map(|(w, c)| w * c).sum();
        if (sum_w - 1.0).abs() > 1e-12 || (sum_wc - 1.0).abs() > 1e-12 {
            return Err(EcapError::Config(format!(
                "mixture constraints violated: sum w = {sum_w}, sum w c = {sum_wc}"
            )));
        }
        Ok(Self { weights, scales })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Re-checks the constructor invariants (deserialized specs bypass the
    /// constructor).
    pub fn validate(&self) -> Result<()> {
        Self::new(self.weights.clone(), self.scales.clone()).map(|_| ())
    }

    /// `sum_k w_k / c_k`
    pub fn inverse_scale_mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.scales)
            .map(|(w, c)| w / c)
            .sum()
    }

    /// `sum_k w_k / c_k^2`
    pub fn inverse_scale_square_mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.scales)
            .map(|(w, c)| w / (c * c))
            .sum()
    }
}

/// Settings for the full fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EcapConfig {
    /// Candidate variance parameters (all positive).
    pub gamma_grid: Vec<f64>,
    /// Candidate bias-link parameters in `[-4, 2]`; the singleton `{0}`
    /// disables bias correction.
    pub theta_grid: Vec<f64>,
    pub cv: CvConfig,
    /// Cap on the number of spline knots; beyond it knots sit at empirical
    /// quantiles of the distinct flipped values.
    pub max_knots: usize,
    pub variance_floor: VarianceFloor,
    /// Clamp applied to means and likelihood terms to keep logs finite.
    pub likelihood_clamp: f64,
    pub mixture: Option<MixtureSpec>,
    pub mle_mode: MleMode,
}

impl Default for EcapConfig {
    fn default() -> Self {
        Self {
            gamma_grid: log_space(1e-4, 0.1, 30),
            theta_grid: lin_space(-4.0, 2.0, 61),
            cv: CvConfig::default(),
            max_knots: 400,
            variance_floor: VarianceFloor::Absolute(1e-12),
            likelihood_clamp: 1e-6,
            mixture: None,
            mle_mode: MleMode::InSample,
        }
    }
}

impl EcapConfig {
    /// The default configuration with bias correction disabled.
    pub fn unbiased() -> Self {
        Self {
            theta_grid: vec![0.0],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma_grid.is_empty() || self.gamma_grid.iter().any(|&g| !(g > 0.0)) {
            return Err(EcapError::Config(
                "gamma grid must be nonempty and strictly positive".into(),
            ));
        }
        if self.theta_grid.is_empty() {
            return Err(EcapError::Config("theta grid must be nonempty".into()));
        }
        for &t in &self.theta_grid {
            BiasLinkParam::new(t)?;
        }
        if !(self.likelihood_clamp > 0.0 && self.likelihood_clamp <= 0.01) {
            return Err(EcapError::Config(
                "likelihood clamp must lie in (0, 0.01]".into(),
            ));
        }
        if let MleMode::SplitSample { fraction } = self.mle_mode {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(EcapError::Config(
                    "split-sample fraction must lie in (0, 1)".into(),
                ));
            }
        }
        match self.variance_floor {
            VarianceFloor::Absolute(e) if !(e >= 0.0) => {
                return Err(EcapError::Config("variance floor must be >= 0".into()))
            }
            VarianceFloor::Theoretical { c } if !(c > 0.0) => {
                return Err(EcapError::Config("floor constant must be positive".into()))
            }
            _ => {}
        }
        if let Some(m) = &self.mixture {
            m.validate()?;
        }
        Ok(())
    }
}

/// A fitted adjuster, immutable and safe to share across threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EcapModel {
    spline: ScoreSplineFit,
    gamma_hat: f64,
    theta_hat: f64,
    mixture: Option<MixtureSpec>,
    config: EcapConfig,
    n_train: usize,
    sigma2_floor: f64,
}

impl EcapModel {
    pub fn spline(&self) -> &ScoreSplineFit {
        &self.spline
    }

    pub fn gamma_hat(&self) -> f64 {
        self.gamma_hat
    }

    pub fn theta_hat(&self) -> f64 {
        self.theta_hat
    }

    pub fn mixture(&self) -> Option<&MixtureSpec> {
        self.mixture.as_ref()
    }

    pub fn config(&self) -> &EcapConfig {
        &self.config
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn sigma2_floor(&self) -> f64 {
        self.sigma2_floor
    }

    pub fn validate(&self) -> Result<()> {
        self.spline.validate()?;
        self.config.validate()?;
        if !(self.gamma_hat > 0.0) {
            return Err(EcapError::Config("gamma must be positive".into()));
        }
        BiasLinkParam::new(self.theta_hat)?;
        if !(self.sigma2_floor >= 0.0) {
            return Err(EcapError::Config("variance floor must be >= 0".into()));
        }
        Ok(())
    }

    fn adjust_at(&self, p_tilde: Probability, gamma: f64, theta: BiasLinkParam) -> f64 {
        let f = flip(p_tilde);
        let (g, gp) = self.spline.evaluate(f.value);
        let s = ScoredSample {
            v: f.value,
            flipped: f.flipped,
            g,
            g_prime: gp,
        };
        let m = moments_chain(
            &s,
            gamma,
            theta,
            self.mixture.as_ref(),
            self.sigma2_floor,
            self.config.likelihood_clamp,
        );
        adjusted_from_chain(&s, m)
    }

    /// Outcome log-likelihood of the sample under this model's score spline
    /// with an overridden `(gamma, theta)`; the surface the likelihood search
    /// explores.
    pub fn log_likelihood_at(
        &self,
        samples: &[ProbabilitySample],
        gamma: f64,
        theta: f64,
    ) -> Result<f64> {
        let theta = BiasLinkParam::new(theta)?;
        let clamp = self.config.likelihood_clamp;
        let mut acc = 0.0;
        for s in samples {
            let z = s.outcome.ok_or_else(|| {
                EcapError::Config("log-likelihood evaluation requires outcomes".into())
            })?;
            let p_hat = self
                .adjust_at(s.p_tilde, gamma, theta)
                .clamp(clamp, 1.0 - clamp);
            acc += if z { p_hat.ln() } else { (1.0 - p_hat).ln() };
        }
        Ok(acc)
    }

    /// Mean squared excess certainty against known truths with an overridden
    /// `(gamma, theta)`; the surface the loss search explores.
    pub fn mean_ec2_at(
        &self,
        samples: &[ProbabilitySample],
        gamma: f64,
        theta: f64,
    ) -> Result<f64> {
        let theta = BiasLinkParam::new(theta)?;
        let mut acc = 0.0;
        for s in samples {
            let p = s
                .p_true
                .ok_or_else(|| {
                    EcapError::Config("loss evaluation requires true probabilities".into())
                })?
                .value();
            let p_hat = self.adjust_at(s.p_tilde, gamma, theta);
            let ec = (p - p_hat) / p_hat.min(1.0 - p_hat);
            acc += ec * ec;
        }
        Ok(acc / samples.len() as f64)
    }
}

/// Output record of a single adjustment. The reported moments are the ones
/// actually used by the oracle rule, i.e. on the flipped scale.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AdjustedProbability {
    pub p_tilde: Probability,
    pub p_hat: Probability,
    pub mu_hat: f64,
    pub sigma2_hat: f64,
    pub flipped: bool,
}

fn clamp_mean(mean: f64, clamp: f64) -> f64 {
    mean.clamp(clamp, 1.0 - clamp)
}

/// Plug-in conditional moments from explicit score values:
/// `mu = v + gamma (g + 1 - 2v)` and
/// `sigma^2 = gamma v(1-v) + gamma^2 v(1-v)(g' - 2)`, floored and clamped.
pub fn plug_in_moments_raw(
    p_flipped: f64,
    g: f64,
    g_prime: f64,
    gamma: f64,
    floor: f64,
    clamp: f64,
) -> ConditionalMoments {
    let v = p_flipped;
    let pq = v * (1.0 - v);
    let mu = v + gamma * (g + 1.0 - 2.0 * v);
    let sigma2 = gamma * pq + gamma * gamma * pq * (g_prime - 2.0);
    ConditionalMoments::new(clamp_mean(mu, clamp), sigma2.max(floor))
        .expect("clamped moments are always valid")
}

/// Plug-in conditional moments evaluated through a fitted score spline.
pub fn plug_in_moments(
    p_flipped: f64,
    fit: &ScoreSplineFit,
    gamma: f64,
    floor: f64,
    clamp: f64,
) -> ConditionalMoments {
    let (g, gp) = fit.evaluate(p_flipped);
    plug_in_moments_raw(p_flipped, g, gp, gamma, floor, clamp)
}

/// Bias-corrected conditional moments under the cubic link.
pub fn bias_corrected_moments(
    moments: ConditionalMoments,
    theta: BiasLinkParam,
    floor: f64,
    clamp: f64,
) -> ConditionalMoments {
    let t = theta.value();
    let mu = moments.mean();
    let s2 = moments.variance();
    let mean = mu + 0.5 * t * (3.0 * s2 - 6.0 * mu * s2 + 3.0 * mu * mu - mu - 2.0 * mu * mu * mu);
    let half = 1.0 - 0.5 * t;
    let var = half * half * s2
        + t * s2 * (3.0 * mu * (1.0 - mu) * (3.0 * t * mu * (1.0 - mu) - 0.5 * t + 1.0));
    ConditionalMoments::new(clamp_mean(mean, clamp), var.max(floor))
        .expect("clamped moments are always valid")
}

/// Conditional moments under the beta-mixture observation model. Written as
/// `sigma^2 S2 + mu^2 (S2 - S1^2)` so the single-component case is exact.
pub fn mixture_moments(
    moments: ConditionalMoments,
    spec: &MixtureSpec,
    clamp: f64,
) -> ConditionalMoments {
    let s1 = spec.inverse_scale_mean();
    let s2 = spec.inverse_scale_square_mean();
    let mu = moments.mean();
    let var = moments.variance() * s2 + mu * mu * (s2 - s1 * s1);
    ConditionalMoments::new(clamp_mean(mu * s1, clamp), var.max(0.0))
        .expect("clamped moments are always valid")
}

struct ScoredSample {
    v: f64,
    flipped: bool,
    g: f64,
    g_prime: f64,
}

fn moments_chain(
    s: &ScoredSample,
    gamma: f64,
    theta: BiasLinkParam,
    mixture: Option<&MixtureSpec>,
    floor: f64,
    clamp: f64,
) -> ConditionalMoments {
    let mut m = plug_in_moments_raw(s.v, s.g, s.g_prime, gamma, floor, clamp);
    if theta.value() != 0.0 {
        m = bias_corrected_moments(m, theta, floor, clamp);
    }
    if let Some(spec) = mixture {
        m = mixture_moments(m, spec, clamp);
    }
    m
}

fn adjusted_from_chain(s: &ScoredSample, m: ConditionalMoments) -> f64 {
    let p_flip = oracle_adjust(m, true).value();
    if s.flipped {
        1.0 - p_flip
    } else {
        p_flip
    }
}

/// Applies a fitted model to one probability estimate.
pub fn adjust(model: &EcapModel, p_tilde: Probability) -> AdjustedProbability {
    let f = flip(p_tilde);
    let (g, gp) = model.spline.evaluate(f.value);
    let s = ScoredSample {
        v: f.value,
        flipped: f.flipped,
        g,
        g_prime: gp,
    };
    let theta = BiasLinkParam::new(model.theta_hat).expect("validated at fit time");
    let m = moments_chain(
        &s,
        model.gamma_hat,
        theta,
        model.mixture.as_ref(),
        model.sigma2_floor,
        model.config.likelihood_clamp,
    );
    let p_hat = adjusted_from_chain(&s, m);
    AdjustedProbability {
        p_tilde,
        p_hat: Probability::new(p_hat).expect("oracle output is a probability"),
        mu_hat: m.mean(),
        sigma2_hat: m.variance(),
        flipped: s.flipped,
    }
}

enum TuneObjective {
    /// Maximize the outcome log-likelihood.
    Likelihood,
    /// Minimize mean squared excess certainty against the true probabilities.
    TrueLoss,
}

fn fit_impl(
    samples: &[ProbabilitySample],
    config: &EcapConfig,
    objective: TuneObjective,
) -> Result<EcapModel> {
    config.validate()?;
    if samples.len() < 20 {
        return Err(EcapError::InsufficientData(format!(
            "need at least 20 samples to fit, got {}",
            samples.len()
        )));
    }

    // optionally restrict the whole pipeline to a seeded random subsample
    let work: Vec<&ProbabilitySample> = match config.mle_mode {
        MleMode::InSample => samples.iter().collect(),
        MleMode::SplitSample { fraction } => {
            let mut idx: Vec<usize> = (0..samples.len()).collect();
            use rand::seq::SliceRandom;
            idx.shuffle(&mut stream_rng(config.cv.rng_seed, 1));
            let keep = ((samples.len() as f64 * fraction).round() as usize).clamp(1, samples.len());
            let mut chosen: Vec<usize> = idx.into_iter().take(keep).collect();
            chosen.sort_unstable();
            chosen.into_iter().map(|i| &samples[i]).collect()
        }
    };
    if work.len() < 20 {
        return Err(EcapError::InsufficientData(
            "split sample leaves fewer than 20 observations".into(),
        ));
    }

    let flips: Vec<_> = work.iter().map(|s| flip(s.p_tilde)).collect();
    let flipped_values: Vec<f64> = flips.iter().map(|f| f.value).collect();

    let (lambda_hat, _curve) =
        cross_validate_lambda(&flipped_values, &config.cv, config.max_knots)?;
    let basis = build_basis(&flipped_values, config.max_knots)?;
    let spline = fit_g(&flipped_values, &basis, lambda_hat)?;
    let floor = config.variance_floor.resolve(work.len(), lambda_hat);
    let clamp = config.likelihood_clamp;

    let single = config.gamma_grid.len() == 1 && config.theta_grid.len() == 1;
    let (gamma_hat, theta_hat) = if single {
        (config.gamma_grid[0], config.theta_grid[0])
    } else {
        // the spline is a functional of the estimate marginal only, so score
        // values are shared across the whole (gamma, theta) grid
        let scored: Vec<ScoredSample> = flips
            .iter()
            .map(|f| {
                let (g, gp) = spline.evaluate(f.value);
                ScoredSample {
                    v: f.value,
                    flipped: f.flipped,
                    g,
                    g_prime: gp,
                }
            })
            .collect();

        let outcomes: Option<Vec<bool>> = work.iter().map(|s| s.outcome).collect();
        let truths: Option<Vec<f64>> = work
            .iter()
            .map(|s| s.p_true.map(Probability::value))
            .collect();
        match objective {
            TuneObjective::Likelihood if outcomes.is_none() => {
                return Err(EcapError::Config(
                    "likelihood tuning over a nontrivial grid requires observed outcomes".into(),
                ))
            }
            TuneObjective::TrueLoss if truths.is_none() => {
                return Err(EcapError::Config(
                    "loss tuning requires the true probabilities".into(),
                ))
            }
            _ => {}
        }

        let mut candidates: Vec<(f64, f64)> = Vec::new();
        for &t in &config.theta_grid {
            for &g in &config.gamma_grid {
                candidates.push((t, g));
            }
        }
        // ties prefer the less-adjusted model: smaller |theta|, then smaller
        // gamma
        candidates.sort_by(|a, b| {
            (a.0.abs(), a.1, a.0)
                .partial_cmp(&(b.0.abs(), b.1, b.0))
                .unwrap()
        });

        let mut best: Option<((f64, f64), f64)> = None;
        for &(t, gamma) in &candidates {
            let theta = BiasLinkParam::new(t)?;
            let mut score = 0.0;
            match objective {
                TuneObjective::Likelihood => {
                    let z = outcomes.as_ref().unwrap();
                    for (s, &zi) in scored.iter().zip(z) {
                        let m =
                            moments_chain(s, gamma, theta, config.mixture.as_ref(), floor, clamp);
                        let p_hat = adjusted_from_chain(s, m).clamp(clamp, 1.0 - clamp);
                        score += if zi { p_hat.ln() } else { (1.0 - p_hat).ln() };
                    }
                }
                TuneObjective::TrueLoss => {
                    let p = truths.as_ref().unwrap();
                    for (s, &pi) in scored.iter().zip(p) {
                        let m =
                            moments_chain(s, gamma, theta, config.mixture.as_ref(), floor, clamp);
                        let p_hat = adjusted_from_chain(s, m);
                        let ec = (pi - p_hat) / p_hat.min(1.0 - p_hat);
                        score -= ec * ec;
                    }
                }
            }
            if score.is_finite() {
                match best {
                    Some((_, bs)) if bs >= score => {}
                    _ => best = Some(((t, gamma), score)),
                }
            }
        }
        let ((t, g), _) = best.ok_or_else(|| {
            EcapError::Numeric("no finite objective value across the parameter grid".into())
        })?;
        (g, t)
    };

    Ok(EcapModel {
        spline,
        gamma_hat,
        theta_hat,
        mixture: config.mixture.clone(),
        config: config.clone(),
        n_train: work.len(),
        sigma2_floor: floor,
    })
}

/// Fits the adjuster, selecting `(gamma, theta)` by maximizing the outcome
/// likelihood over the configured grids.
pub fn fit(samples: &[ProbabilitySample], config: &EcapConfig) -> Result<EcapModel> {
    fit_impl(samples, config, TuneObjective::Likelihood)
}

/// Fits the adjuster, selecting `(gamma, theta)` by minimizing the mean
/// squared excess certainty against known true probabilities (simulation
/// benchmarking only).
pub fn fit_opt(samples: &[ProbabilitySample], config: &EcapConfig) -> Result<EcapModel> {
    fit_impl(samples, config, TuneObjective::TrueLoss)
}
