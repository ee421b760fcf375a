use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stmix::evaluation::*;
use stmix::model::{Event, SeasonalityConfig, SpatialPoint, StudyRegion};
use stmix::priors::Hyperparams;
use stmix::sampler::{run_chain, McmcConfig, PosteriorDraw};

fn square() -> StudyRegion<f64> {
    StudyRegion::rectangle(0.0, 0.0, 10.0, 10.0, 0.5).unwrap()
}

fn random_events(rng: &mut ChaCha8Rng, n: usize, periods: usize) -> Vec<Event> {
    (0..n).map(|_| Event::new(rng.random_range(1..=periods), rng.random_range(0.0..10.0), rng.random_range(0.0..10.0))).collect()
}

fn draws() -> (Vec<PosteriorDraw>, Vec<Event>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let season = SeasonalityConfig::new(40, 20, 2).unwrap();
    let events = random_events(&mut rng, 400, 40);
    let hp = Hyperparams::from_ranges(SpatialPoint::new(5.0, 5.0), [10.0, 10.0]).unwrap();
    let cfg = McmcConfig { components: 3, n_iter: 300, burn_in: 100, thin: 2, seed: 2, init: stmix::sampler::InitMethod::KMeans, ..Default::default() };
    let out = run_chain(&events, &square(), &hp, &season, &cfg).unwrap();
    (out.draws, random_events(&mut rng, 300, 80))
}

#[test]
fn mixed_periods_match_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let events = random_events(&mut rng, 200, 7);
    let f = |t: usize, s: &SpatialPoint<f64>| (t as f64 * 0.3 + s.x * 0.1 + s.y * 0.05).exp() / 100.0;
    let mut total = 0.0;
    let mut n = 0;
    for t in 1..=7 {
        for e in events.iter().filter(|e| e.t == t) {
            total += f(t, &e.location).ln();
            n += 1;
        }
    }
    let got = predictive_accuracy(&events, &f).unwrap().pa;
    assert!((got - total / n as f64).abs() < 1e-12);
}

#[test]
fn pa_mix_averages_draw_scores() {
    let (draws, test) = draws();
    assert_eq!(draws.len(), 100);
    let region = square();
    let one = pa_mix(&test, &draws[..1], &region).unwrap().pa;
    let direct = predictive_accuracy(&test, &DrawDensity::new(&draws[0], &region).unwrap()).unwrap().pa;
    assert_eq!(one, direct);
    let dup = vec![draws[0].clone(); 5];
    assert!((pa_mix(&test, &dup, &region).unwrap().pa - one).abs() < 1e-12);
    let all = pa_mix(&test, &draws, &region).unwrap();
    // averaging oracle with an explicit density
    let mut acc = 0.0;
    for d in &draws {
        let mut s = 0.0;
        for e in &test {
            let b = (e.t - 1) % 20;
            let f: f64 = (0..3)
                .map(|j| d.mixture.weights.get(b, j) * stmix::model::gaussian_pdf2d(&e.location, &d.mixture.components[j]).unwrap())
                .sum();
            s += (f / d.normalizers[b]).ln();
        }
        acc += s / test.len() as f64;
    }
    assert!((all.pa - acc / draws.len() as f64).abs() < 1e-12);
    let lo = all.per_draw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.per_draw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(lo <= all.pa && all.pa <= hi);
    assert!(pa_mix(&test, &[], &region).is_err());
}

#[test]
fn relabelled_draw_scores_the_same() {
    let (draws, test) = draws();
    let region = square();
    let d = &draws[7];
    let mut p = d.clone();
    p.mixture = d.mixture.permuted(&[2, 0, 1]);
    let a = predictive_accuracy(&test, &DrawDensity::new(d, &region).unwrap()).unwrap().pa;
    let b = predictive_accuracy(&test, &DrawDensity::new(&p, &region).unwrap()).unwrap().pa;
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn batch_means_interval_covers_true_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut hits = 0;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..400).map(|_| 1.5 + rng.sample::<f64, _>(StandardNormal)).collect();
        let (m, h) = batch_means_ci(&x, 0.95).unwrap();
        hits += usize::from((m - 1.5).abs() <= h);
    }
    // binomial sd at 95% over 1000 replicates is about 0.7%
    assert!((925..=975).contains(&hits), "coverage {hits}/1000");
}

#[test]
fn ess_of_iid_and_ar1_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 10_000;
    let iid: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let ess = effective_sample_size(&iid).unwrap();
    assert!((ess / n as f64 - 1.0).abs() < 0.15, "iid ESS {ess}");
    let mut ar = vec![0.0; n];
    for i in 1..n {
        ar[i] = 0.9 * ar[i - 1] + rng.sample::<f64, _>(StandardNormal);
    }
    let ess = effective_sample_size(&ar).unwrap();
    let want = n as f64 * 0.1 / 1.9;
    assert!((ess / want - 1.0).abs() < 0.25, "AR(1) ESS {ess} vs {want}");
}

#[test]
fn gelman_rubin_separates_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let same: Vec<Vec<f64>> = (0..4).map(|_| (0..2000).map(|_| rng.sample(StandardNormal)).collect()).collect();
    assert!((gelman_rubin(&same).unwrap() - 1.0).abs() < 0.05);
    let apart: Vec<Vec<f64>> =
        (0..3).map(|c| (0..500).map(|_| c as f64 * 10.0 + rng.random_range(0.0..1.0)).collect()).collect();
    assert!(gelman_rubin(&apart).unwrap() > 1.1 * 10.0);
}

fn uniform(_: usize, s: &SpatialPoint<f64>) -> f64 {
    if (0.0..=10.0).contains(&s.x) && (0.0..=10.0).contains(&s.y) {
        0.01
    } else {
        0.0
    }
}

#[test]
fn diamond_area_oracle() {
    let rt = ResponseTimeConfig::new(vec![SpatialPoint::new(5.0, 5.0)]);
    let r = 2.0 * 3600.0 / rt.speed;
    let got = coverage_fraction(&uniform, 1, &rt, &square(), r).unwrap();
    assert!((got / 0.08 - 1.0).abs() < 1e-3, "{got}");
    // off-lattice base and radius
    let rt = ResponseTimeConfig::new(vec![SpatialPoint::new(4.37, 5.81)]);
    let r = 1.73 * 3600.0 / rt.speed;
    let got = coverage_fraction(&uniform, 1, &rt, &square(), r).unwrap();
    assert!((got / (2.0 * 1.73 * 1.73 / 100.0) - 1.0).abs() < 1e-3, "{got}");
}

#[test]
fn coverage_limits() {
    let rt = ResponseTimeConfig::new(vec![SpatialPoint::new(2.0, 3.0), SpatialPoint::new(7.0, 7.0)]);
    let f = |_: usize, s: &SpatialPoint<f64>| (-(s.x - 3.0).powi(2) / 8.0 - (s.y - 6.0).powi(2) / 5.0).exp();
    let all = coverage_fraction(&f, 1, &rt, &square(), 1e5).unwrap();
    assert!((all - 1.0).abs() < 1e-6);
    let zero = coverage_fraction(&f, 1, &rt, &square(), 0.0).unwrap();
    assert_eq!(zero, 0.0);
    // a base on a cell centroid still covers at most that cell
    let rt = ResponseTimeConfig::new(vec![SpatialPoint::new(5.25, 5.25)]);
    assert!(coverage_fraction(&uniform, 1, &rt, &square(), 0.0).unwrap() <= 0.0025);
}

#[test]
fn self_comparison_error_is_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let region = StudyRegion::rectangle(0.0, 0.0, 10.0, 10.0, 0.25).unwrap();
    let test: Vec<Event> = (0..6000)
        .map(|i| {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            Event::new(i % 3 + 1, (5.0 + 1.5 * dx).clamp(0.0, 10.0), (5.0 + 1.5 * dy).clamp(0.0, 10.0))
        })
        .collect();
    let grid = stmix::baselines::GridSpec::covering(&region, 0.25).unwrap();
    let hist = stmix::baselines::grid_history(&test, &grid);
    let f = move |t: usize, s: &SpatialPoint<f64>| hist.get(&t).map_or(0.0, |d| d.at(s));
    let rt = ResponseTimeConfig::new(vec![SpatialPoint::new(3.0, 4.0), SpatialPoint::new(6.5, 6.0)]);
    let cov = CoverageGrid::new(&region, &rt, COVERAGE_LINES).unwrap();
    let err = operational_error(&f, &test, &[1, 2, 3, 4], &rt, &cov).unwrap();
    assert_eq!(err.periods_used, 3);
    assert_eq!(err.periods_excluded, 1);
    assert!(err.mean_abs_error.iter().all(|&e| e < 0.01), "{:?}", err.mean_abs_error);
    let again = operational_error(&f, &test, &[1, 2, 3, 4], &rt, &cov).unwrap();
    assert_eq!(err, again);
}

#[test]
fn mass_outside_every_diamond_gives_unit_error() {
    let rt = ResponseTimeConfig::new(vec![SpatialPoint::new(1.0, 1.0)]);
    let test = vec![Event::new(1, 1.0, 1.2), Event::new(1, 1.1, 0.9)];
    let far = |_: usize, s: &SpatialPoint<f64>| if s.x > 8.0 && s.y > 8.0 { 0.25 } else { 0.0 };
    let cov = CoverageGrid::new(&square(), &rt, COVERAGE_LINES).unwrap();
    let err = operational_error(&far, &test, &[1], &rt, &cov).unwrap();
    assert!(err.mean_abs_error.iter().all(|&e| e == 1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn coverage_is_monotone_and_bounded(
        bases in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..6),
        cx in 0.0f64..10.0,
        cy in 0.0f64..10.0,
        t in 1usize..5,
    ) {
        let rt = ResponseTimeConfig::new(bases.iter().map(|&(x, y)| SpatialPoint::new(x, y)).collect());
        let region = StudyRegion::new(
            vec![SpatialPoint::new(0.0, 0.0), SpatialPoint::new(10.0, 0.0), SpatialPoint::new(10.0, 10.0), SpatialPoint::new(5.0, 6.0), SpatialPoint::new(0.0, 10.0)],
            0.5,
        ).unwrap();
        let cov = CoverageGrid::new(&region, &rt, COVERAGE_LINES).unwrap();
        let f = |t: usize, s: &SpatialPoint<f64>| (-((s.x - cx).powi(2) + (s.y - cy).powi(2)) / (2.0 * t as f64)).exp();
        let curve = cov.curve(t, &f);
        for w in curve.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        prop_assert!(curve.iter().all(|&c| (0.0..=1.0).contains(&c)));
    }
}
