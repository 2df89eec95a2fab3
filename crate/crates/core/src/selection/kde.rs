//! Gaussian kernel density estimate over pose-error samples, and the expected
//! cost under it.

use num_traits::{Float, FromPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{CostFunction, SelectionError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    #[default]
    Gaussian,
}

impl Kernel {
    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Gaussian => "gaussian",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "gaussian" => Some(Kernel::Gaussian),
            _ => None,
        }
    }

    fn eval<T: Float + FromPrimitive>(&self, u: T) -> T {
        match self {
            Kernel::Gaussian => {
                let inv_sqrt_2pi = T::from_f64(0.398_942_280_401_432_7).unwrap();
                inv_sqrt_2pi * (-(u * u) / (T::one() + T::one())).exp()
            }
        }
    }
}

/// How the expected cost is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExpectationMode {
    #[default]
    MonteCarlo,
    /// Trapezoid integration; the reference used to check the Monte Carlo path.
    Quadrature,
}

impl ExpectationMode {
    pub fn name(&self) -> &'static str {
        match self {
            ExpectationMode::MonteCarlo => "mc",
            ExpectationMode::Quadrature => "quadrature",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "mc" => Some(ExpectationMode::MonteCarlo),
            "quadrature" => Some(ExpectationMode::Quadrature),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeConfig<T> {
    pub kernel: Kernel,
    /// Bandwidth in meters of pose error.
    pub bandwidth: T,
    pub mc_samples: usize,
    pub rng_seed: u64,
    pub mode: ExpectationMode,
}

impl<T: Float + FromPrimitive> KdeConfig<T> {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if !self.bandwidth.is_finite() || self.bandwidth <= T::zero() {
            return Err(SelectionError::Config("KDE bandwidth must be > 0".into()));
        }
        if self.mc_samples == 0 {
            return Err(SelectionError::Config("Monte Carlo sample count must be > 0".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

impl<T: Float + FromPrimitive> Default for KdeConfig<T> {
    fn default() -> Self {
        Self {
            kernel: Kernel::Gaussian,
            bandwidth: T::from_f64(0.1).unwrap(),
            mc_samples: 10_000,
            rng_seed: 0,
            mode: ExpectationMode::MonteCarlo,
        }
    }
}

/// Translation errors observed for one camera inside one place.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseErrorSampleSet<T> {
    pub camera_id: usize,
    pub place_id: usize,
    samples: Vec<T>,
}

impl<T: Float> PoseErrorSampleSet<T> {
    pub fn new(camera_id: usize, place_id: usize, samples: Vec<T>) -> Result<Self, SelectionError> {
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || **s < T::zero()) {
            return Err(SelectionError::InvalidSample(bad.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self {
            camera_id,
            place_id,
            samples,
        })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn range(&self) -> (T, T) {
        self.samples
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), s| {
                (lo.min(*s), hi.max(*s))
            })
    }
}

/// `f(x) = 1/(n h) Σ K((x - x_i) / h)`, with no boundary correction.
pub fn kde_density<T: Float + FromPrimitive>(
    samples: &PoseErrorSampleSet<T>,
    cfg: &KdeConfig<T>,
    x: T,
) -> Result<T, SelectionError> {
    if samples.is_empty() {
        return Err(SelectionError::EmptySamples);
    }
    Ok(density_unchecked(samples.samples(), cfg.kernel, cfg.bandwidth, x))
}

fn density_unchecked<T: Float + FromPrimitive>(samples: &[T], kernel: Kernel, h: T, x: T) -> T {
    let n = T::from_usize(samples.len()).unwrap();
    let sum = samples
        .iter()
        .fold(T::zero(), |acc, xi| acc + kernel.eval((x - *xi) / h));
    sum / (n * h)
}

/// Composite trapezoid rule with at most `step` spacing.
pub fn trapezoid<T: Float + FromPrimitive>(f: impl Fn(T) -> T, a: T, b: T, step: T) -> T {
    if b <= a {
        return T::zero();
    }
    let n = ((b - a) / step).ceil().to_usize().unwrap_or(1).max(1);
    let dx = (b - a) / T::from_usize(n).unwrap();
    let half = T::from_f64(0.5).unwrap();
    let mut total = (f(a) + f(b)) * half;
    for i in 1..n {
        total = total + f(a + dx * T::from_usize(i).unwrap());
    }
    total * dx
}

/// Monte Carlo estimate of the expected cost under the KDE.
///
/// Each draw picks a kernel centre and adds `N(0, h)` noise; negative draws are
/// clamped to zero. Centres are visited systematically from a random offset,
/// which samples the mixture exactly in proportion while keeping the estimate
/// unbiased.
pub fn expected_cost<T>(
    samples: &PoseErrorSampleSet<T>,
    cf: &CostFunction<T>,
    cfg: &KdeConfig<T>,
) -> Result<T, SelectionError>
where
    T: Float + FromPrimitive,
    StandardNormal: Distribution<T>,
{
    if samples.is_empty() {
        return Err(SelectionError::EmptySamples);
    }
    cfg.validate()?;
    cf.validate()?;
    let xs = samples.samples();
    let n = xs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let offset = rng.random_range(0..n);
    let mut total = T::zero();
    for j in 0..cfg.mc_samples {
        let centre = xs[(offset + j) % n];
        let z: T = StandardNormal.sample(&mut rng);
        let draw = (centre + cfg.bandwidth * z).max(T::zero());
        total = total + cf.cost_unchecked(draw);
    }
    Ok(total / T::from_usize(cfg.mc_samples).unwrap())
}

/// Expected cost by trapezoid integration of `c(x) f(x)` with step `h/20`.
///
/// Mass the KDE places below zero is charged at `c(0)`, matching the clamping
/// of the Monte Carlo path. The upper limit covers both the cost ceiling and the
/// largest sample by six bandwidths.
pub fn expected_cost_quadrature<T: Float + FromPrimitive>(
    samples: &PoseErrorSampleSet<T>,
    cf: &CostFunction<T>,
    cfg: &KdeConfig<T>,
) -> Result<T, SelectionError> {
    if samples.is_empty() {
        return Err(SelectionError::EmptySamples);
    }
    cfg.validate()?;
    cf.validate()?;
    let h = cfg.bandwidth;
    let six_h = h * T::from_f64(6.0).unwrap();
    let step = h / T::from_f64(20.0).unwrap();
    let (lo, hi) = samples.range();
    let f = |x: T| density_unchecked(samples.samples(), cfg.kernel, h, x);

    let upper = cf.x_max.max(hi) + six_h;
    let above = trapezoid(|x| cf.cost_unchecked(x) * f(x), T::zero(), upper, step);
    let below_mass = trapezoid(f, lo - six_h, T::zero(), step);
    Ok(above + cf.cost_unchecked(T::zero()) * below_mass)
}

/// Dispatches on `cfg.mode`.
pub(crate) fn expected_cost_with_mode<T>(
    samples: &PoseErrorSampleSet<T>,
    cf: &CostFunction<T>,
    cfg: &KdeConfig<T>,
) -> Result<T, SelectionError>
where
    T: Float + FromPrimitive,
    StandardNormal: Distribution<T>,
{
    match cfg.mode {
        ExpectationMode::MonteCarlo => expected_cost(samples, cf, cfg),
        ExpectationMode::Quadrature => expected_cost_quadrature(samples, cf, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(samples: Vec<f64>) -> PoseErrorSampleSet<f64> {
        PoseErrorSampleSet::new(0, 0, samples).unwrap()
    }

    #[test]
    fn single_sample_peak() {
        let cfg = KdeConfig::<f64>::default();
        let d = kde_density(&set(vec![0.5]), &cfg, 0.5).unwrap();
        // 1 / (0.1 * sqrt(2π))
        assert!((d - 3.989_422_804_014_327).abs() < 1e-12);
    }

    #[test]
    fn far_from_samples_is_negligible() {
        let cfg = KdeConfig::<f64>::default();
        assert!(kde_density(&set(vec![0.5, 0.7]), &cfg, 5.0).unwrap() < 1e-12);
    }

    #[test]
    fn density_is_mean_of_single_sample_densities() {
        let cfg = KdeConfig::<f64>::default();
        let both = kde_density(&set(vec![0.2, 0.5]), &cfg, 0.35).unwrap();
        let a = kde_density(&set(vec![0.2]), &cfg, 0.35).unwrap();
        let b = kde_density(&set(vec![0.5]), &cfg, 0.35).unwrap();
        assert!((both - (a + b) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn empty_and_invalid_samples() {
        let cfg = KdeConfig::<f64>::default();
        let cf = CostFunction::default();
        let empty = set(vec![]);
        assert_eq!(kde_density(&empty, &cfg, 0.0), Err(SelectionError::EmptySamples));
        assert_eq!(expected_cost(&empty, &cf, &cfg), Err(SelectionError::EmptySamples));
        assert_eq!(
            expected_cost_quadrature(&empty, &cf, &cfg),
            Err(SelectionError::EmptySamples)
        );
        assert!(PoseErrorSampleSet::new(0, 0, vec![-1.0]).is_err());
        assert!(PoseErrorSampleSet::new(0, 0, vec![f64::NAN]).is_err());
    }

    #[test]
    fn saturated_samples_cost_ceiling() {
        let cfg = KdeConfig::<f64>::default();
        let cf = CostFunction::default();
        let s = set(vec![3.0; 10]);
        let mc = expected_cost(&s, &cf, &cfg).unwrap();
        assert!((3.9..=4.0).contains(&mc), "{mc}");
        let q = expected_cost_quadrature(&s, &cf, &cfg).unwrap();
        assert!((3.9..=4.0).contains(&q), "{q}");
    }

    #[test]
    fn zero_samples_cost_little() {
        let cfg = KdeConfig::<f64>::default();
        let cf = CostFunction::default();
        let s = set(vec![0.0; 10]);
        // Half-normal second moment: E[max(0, hZ)^2] = h^2 / 2 = 0.005.
        let q = expected_cost_quadrature(&s, &cf, &cfg).unwrap();
        assert!((q - 0.005).abs() < 1e-6, "{q}");
        let mc = expected_cost(&s, &cf, &cfg).unwrap();
        assert!(mc < 0.02);
        assert!((mc - 0.005).abs() < 5e-4, "{mc}");
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let cfg = KdeConfig::<f64>::default().with_seed(17);
        let cf = CostFunction::default();
        let s = set(vec![0.1, 0.4, 1.3, 2.5]);
        assert_eq!(
            expected_cost(&s, &cf, &cfg).unwrap(),
            expected_cost(&s, &cf, &cfg).unwrap()
        );
    }

    #[test]
    fn single_precision_path() {
        let cfg = KdeConfig::<f32>::default();
        let cf = CostFunction::<f32>::default();
        let s = PoseErrorSampleSet::new(0, 0, vec![0.3f32, 0.6, 0.9]).unwrap();
        let mc = expected_cost(&s, &cf, &cfg).unwrap();
        let q = expected_cost_quadrature(&s, &cf, &cfg).unwrap();
        assert!((mc - q).abs() < 0.02);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn expected_cost_bounded(samples in proptest::collection::vec(0.0f64..10.0, 1..30), seed in any::<u64>()) {
            let cfg = KdeConfig { mc_samples: 500, ..KdeConfig::default() }.with_seed(seed);
            let cf = CostFunction::default();
            let s = set(samples);
            let mc = expected_cost(&s, &cf, &cfg).unwrap();
            prop_assert!((0.0..=cf.ceiling()).contains(&mc));
            let q = expected_cost_quadrature(&s, &cf, &cfg).unwrap();
            prop_assert!(q >= 0.0 && q <= cf.ceiling() * (1.0 + 1e-9));
        }
    }
}
