//! Hyperparameters, the CAR prior on transformed weights, and the joint log prior.

pub mod car;
pub mod density;
pub mod hyper;
pub mod sample;

pub use car::{
    car_conditional, car_joint_precision, car_log_density, CarNeighborhood, CarState, C_PRIOR_VAR, NU2_MAX, RHO_MAX,
};
pub use density::{log_prior, mvn2_log_pdf, normal_log_pdf, wishart_log_pdf};
pub use hyper::{hyperparams_from_data, Hyperparams};
pub use sample::{sample_beta_prior, sample_car_column, sample_car_hyper_prior, sample_prior_component, sample_wishart};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{inverse_logit, log_jacobian, logit_transform, Component, SpatialPoint, Sym2};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::function::gamma::ln_gamma;

    fn random_spd(rng: &mut ChaCha8Rng) -> Sym2<f64> {
        let a: f64 = rng.random_range(0.3..2.5);
        let d: f64 = rng.random_range(0.3..2.5);
        let r: f64 = rng.random_range(-0.7..0.7);
        Sym2::new(a, r * (a * d).sqrt(), d)
    }

    fn random_car(rng: &mut ChaCha8Rng, blocks: usize, cols: usize) -> CarState {
        let pi = (0..blocks * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rho = (0..cols).map(|_| rng.random_range(0.0..0.249)).collect();
        let nu2 = (0..cols).map(|_| rng.random_range(0.1..3.0)).collect();
        CarState::new(blocks, pi, c, rho, nu2).unwrap()
    }

    fn hp() -> Hyperparams {
        Hyperparams::from_ranges(SpatialPoint::new(0.5, -0.5), [5.0, 3.0]).unwrap()
    }

    // Oracle densities written from the textbook formulas with dense algebra.
    fn oracle_wishart(w: &Sym2<f64>, n: f64, v: &Sym2<f64>) -> f64 {
        let wm = DMatrix::from_row_slice(2, 2, &[w.xx, w.xy, w.xy, w.yy]);
        let vm = DMatrix::from_row_slice(2, 2, &[v.xx, v.xy, v.xy, v.yy]);
        let vinv = vm.clone().try_inverse().unwrap();
        let tr = (vinv * &wm).trace();
        let lg = 0.5 * std::f64::consts::PI.ln() + ln_gamma(n / 2.0) + ln_gamma((n - 1.0) / 2.0);
        (n - 3.0) / 2.0 * wm.determinant().ln() - tr / 2.0 - n * 2f64.ln() - n / 2.0 * vm.determinant().ln() - lg
    }

    fn oracle_mvn(x: &SpatialPoint<f64>, mean: &SpatialPoint<f64>, cov: &Sym2<f64>) -> f64 {
        let c = DMatrix::from_row_slice(2, 2, &[cov.xx, cov.xy, cov.xy, cov.yy]);
        let d = DVector::from_vec(vec![x.x - mean.x, x.y - mean.y]);
        let q = (d.transpose() * c.clone().try_inverse().unwrap() * &d)[(0, 0)];
        -0.5 * q - (2.0 * std::f64::consts::PI) .ln() - 0.5 * c.determinant().ln()
    }

    fn oracle_car(col: &[f64], c: f64, rho: f64, nu2: f64, nb: &CarNeighborhood) -> f64 {
        let q = car::precision_matrix(rho, nu2, nb).unwrap();
        let chol = q.clone().cholesky().unwrap();
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let d = DVector::from_iterator(col.len(), col.iter().map(|v| v - c));
        let quad = (d.transpose() * q * &d)[(0, 0)];
        -0.5 * col.len() as f64 * (2.0 * std::f64::consts::PI).ln() + 0.5 * logdet - 0.5 * quad
    }

    #[test]
    fn log_prior_matches_term_by_term_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let nb = CarNeighborhood::new(84, 12).unwrap();
        let hp = hp();
        for _ in 0..5 {
            let comps: Vec<Component<f64>> = (0..3)
                .map(|_| {
                    Component::new(
                        SpatialPoint::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
                        random_spd(&mut rng),
                    )
                })
                .collect();
            let beta = random_spd(&mut rng);
            let car = random_car(&mut rng, 84, 2);
            let got = log_prior(&comps, &beta, &car, &hp, &nb);

            let kappa_inv = hp.kappa.inverse().unwrap();
            let mut want = 0.0;
            let beta_m = DMatrix::from_row_slice(2, 2, &[beta.xx, beta.xy, beta.xy, beta.yy]);
            let sb = (beta_m * 2.0).try_inverse().unwrap();
            let sb = Sym2::new(sb[(0, 0)], sb[(0, 1)], sb[(1, 1)]);
            for c in &comps {
                want += oracle_mvn(&c.mu, &hp.xi, &kappa_inv);
                want += oracle_wishart(&c.sigma.inverse().unwrap(), 2.0 * hp.alpha, &sb);
            }
            want += oracle_wishart(&beta, 2.0 * hp.g, &Sym2::diag(0.5 / hp.h.xx, 0.5 / hp.h.yy));
            for r in 0..2 {
                want += oracle_car(&car.column(r), car.c[r], car.rho[r], car.nu2[r], &nb);
                want += -0.5 * (2.0 * std::f64::consts::PI * 1e4).ln() - car.c[r] * car.c[r] / 2e4;
                want += -(0.25f64).ln() - (1e4f64).ln();
            }
            assert!((got - want).abs() < 1e-10 * want.abs().max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn outside_support_is_negative_infinity() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let nb = CarNeighborhood::new(84, 12).unwrap();
        let mut car = random_car(&mut rng, 84, 1);
        car.rho[0] = 0.3;
        let comps = vec![Component::standard(), Component::standard()];
        assert_eq!(log_prior(&comps, &Sym2::identity(), &car, &hp(), &nb), f64::NEG_INFINITY);
    }

    #[test]
    fn single_component_has_no_weight_terms() {
        let nb = CarNeighborhood::new(84, 12).unwrap();
        let hp = hp();
        let comps = vec![Component::new(SpatialPoint::new(0.1, 0.2), Sym2::new(1.0, 0.1, 0.5))];
        let beta = Sym2::new(0.7, 0.0, 0.9);
        let got = log_prior(&comps, &beta, &CarState::empty(84), &hp, &nb);
        let want = mvn2_log_pdf(&comps[0].mu, &hp.xi, &hp.kappa)
            + wishart_log_pdf(&comps[0].sigma.inverse().unwrap(), 6.0, &beta.scale(2.0).inverse().unwrap())
            + wishart_log_pdf(&beta, 2.0, &hp.h.scale(2.0).inverse().unwrap());
        assert!((got - want).abs() < 1e-12);
    }

    /// Weight-space density: CAR density of the log-odds plus the logit Jacobian per block.
    fn weight_space_log_prior(
        comps: &[Component<f64>],
        beta: &Sym2<f64>,
        weights: &[Vec<f64>],
        c: &[f64],
        rho: &[f64],
        nu2: &[f64],
        nb: &CarNeighborhood,
    ) -> f64 {
        let blocks = weights.len();
        let pi: Vec<f64> = weights.iter().flat_map(|w| logit_transform(w).unwrap()).collect();
        let car = CarState::new(blocks, pi, c.to_vec(), rho.to_vec(), nu2.to_vec()).unwrap();
        let jac: f64 = weights.iter().map(|w| log_jacobian(w)).sum();
        log_prior(comps, beta, &car, &hp(), nb) + jac
    }

    #[test]
    fn relabeling_non_reference_components_is_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let nb = CarNeighborhood::new(30, 3).unwrap();
        let comps: Vec<Component<f64>> = (0..4)
            .map(|_| {
                Component::new(SpatialPoint::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)), random_spd(&mut rng))
            })
            .collect();
        let beta = random_spd(&mut rng);
        let weights: Vec<Vec<f64>> = (0..30)
            .map(|_| inverse_logit(&(0..3).map(|_| rng.random_range(-1.5..1.5)).collect::<Vec<f64>>()))
            .collect();
        let c = [0.2, -0.3, 0.1];
        let rho = [0.1, 0.2, 0.05];
        let nu2 = [0.5, 1.5, 0.9];
        let base = weight_space_log_prior(&comps, &beta, &weights, &c, &rho, &nu2, &nb);
        // permutation of the first three labels, reference (last) fixed
        let perm = [2usize, 0, 1, 3];
        let comps_p: Vec<_> = perm.iter().map(|&j| comps[j]).collect();
        let weights_p: Vec<Vec<f64>> = weights.iter().map(|w| perm.iter().map(|&j| w[j]).collect()).collect();
        let c_p: Vec<f64> = perm[..3].iter().map(|&j| c[j]).collect();
        let rho_p: Vec<f64> = perm[..3].iter().map(|&j| rho[j]).collect();
        let nu2_p: Vec<f64> = perm[..3].iter().map(|&j| nu2[j]).collect();
        let permuted = weight_space_log_prior(&comps_p, &beta, &weights_p, &c_p, &rho_p, &nu2_p, &nb);
        assert!((base - permuted).abs() < 1e-9 * base.abs().max(1.0));
    }
}
