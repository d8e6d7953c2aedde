mod common;

use common::*;
use pdsim_core::filters::{
    confidence_bands, extended_kalman_filter, kalman_filter, linearized_filter, run_filter,
    unscented_filter, unscented_kalman_filter, FilterInit, FilterOutput, MeasurementModel,
    ObservationPanel,
};
use pdsim_core::mathcore::{cholesky, expm, Matrix, Vector};
use pdsim_core::pd_model::{generator_matrix, induced_linear_system, PdPricer};
use pdsim_core::simulator::{simulate, SimConfig};
use pdsim_core::ss_model::{build_measurement, build_transition, MeasurementErrorSpec, StateTransition};
use pdsim_core::{Error, FilterKind, ModelKind, ModelParams};

/// Degree-1 polynomial measurement written as an explicit affine map.
struct Affine(pdsim_core::pd_model::PDParams);

impl MeasurementModel for Affine {
    fn observe(&self, x: &Vector, taus: &[f64]) -> pdsim_core::Result<Vector> {
        let (d, f) = induced_linear_system(&self.0, taus)?;
        Ok(d + f * x)
    }
    fn jacobian(&self, _x: &Vector, taus: &[f64]) -> pdsim_core::Result<Matrix> {
        Ok(induced_linear_system(&self.0, taus)?.1)
    }
}

fn max_state_gap(a: &FilterOutput, b: &FilterOutput) -> f64 {
    a.a_filt
        .iter()
        .zip(&b.a_filt)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max)
}

fn pd_panel(params: pdsim_core::pd_model::PDParams, n: usize, m: usize, seed: u64) -> ObservationPanel {
    let cfg = SimConfig::new(ModelKind::Pd, n, m, seed);
    let errs = MeasurementErrorSpec::new(m, 0.02, 0.01);
    simulate(&params.into(), &errs, &cfg)
        .unwrap()
        .observation_panel(cfg.dt)
        .unwrap()
}

#[test]
fn kalman_recovers_noiseless_path() {
    let p = ss_params();
    let real = build_transition(&p, 1.0 / 360.0).unwrap();
    let trans = StateTransition {
        sigma_w: Matrix::zeros(2, 2),
        ..real
    };
    let x0 = v2(0.4, 2.5);
    // Two contracts identify the two factors; a third would make S singular
    // at this noise level.
    let (n, m) = (60, 2);
    let taus = [0.1, 0.7];
    let mut x = x0.clone();
    let mut path = Vec::new();
    let mut y = Matrix::zeros(n, m);
    for t in 0..n {
        x = trans.mean_step(&x);
        let (d, f) = build_measurement(&p, &taus).unwrap();
        y.set_row(t, &(d + f * &x).transpose());
        path.push(x.clone());
    }
    let mats = Matrix::from_fn(n, m, |_, j| taus[j]);
    let panel = ObservationPanel::new(y, mats, trans.dt, ModelKind::Ss).unwrap();
    let errs = MeasurementErrorSpec::new(m, 1e-12, 1e-12);
    // A wrong prior mean with a wide prior: the data alone pin the state.
    let init = FilterInit::new(v2(0.0, 2.0), Matrix::identity(2, 2)).unwrap();
    let out = kalman_filter(&trans, &p, &panel, &errs, &init).unwrap();
    for (est, truth) in out.a_filt.iter().zip(&path) {
        assert!((est - truth).amax() < 1e-6);
    }
}

#[test]
fn kalman_single_step_matches_straight_line_update() {
    let p = ss_params();
    let trans = build_transition(&p, 1.0 / 360.0).unwrap();
    let tau = 0.25;
    let obs = 1.37;
    let sigma = 0.03;
    let panel = ObservationPanel::new(
        Matrix::from_element(1, 1, obs),
        Matrix::from_element(1, 1, tau),
        trans.dt,
        ModelKind::Ss,
    )
    .unwrap();
    let errs = MeasurementErrorSpec::new(1, sigma, sigma);
    let init = FilterInit::new(v2(0.1, 3.0), Matrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.3]))
        .unwrap();
    let out = kalman_filter(&trans, &p, &panel, &errs, &init).unwrap();

    // scalar algebra, no matrix library
    let (e1, e2) = ((-p.kappa * trans.dt).exp(), (-p.gamma * trans.dt).exp());
    let c2 = trans.c[1];
    let (q11, q12, q22) = (trans.sigma_w[(0, 0)], trans.sigma_w[(0, 1)], trans.sigma_w[(1, 1)]);
    let (a1, a2) = (e1 * 0.1, c2 + e2 * 3.0);
    let (p11, p12, p22) = (e1 * e1 * 0.2 + q11, e1 * e2 * 0.05 + q12, e2 * e2 * 0.3 + q22);
    let (h1, h2) = ((-p.kappa * tau).exp(), (-p.gamma * tau).exp());
    let (k, g, mu) = (p.kappa, p.gamma, p.mu_xi);
    let a_tau = mu / g * (1.0 - (-g * tau).exp())
        + 0.5
            * ((1.0 - (-2.0 * k * tau).exp()) / (2.0 * k) * p.sigma_chi.powi(2)
                + (1.0 - (-2.0 * g * tau).exp()) / (2.0 * g) * p.sigma_xi.powi(2)
                + 2.0 * (1.0 - (-(k + g) * tau).exp()) / (k + g) * p.sigma_chi * p.sigma_xi * p.rho);
    let nu = obs - (a_tau + h1 * a1 + h2 * a2);
    let ph1 = p11 * h1 + p12 * h2;
    let ph2 = p12 * h1 + p22 * h2;
    let s = h1 * ph1 + h2 * ph2 + sigma * sigma;
    let (k1, k2) = (ph1 / s, ph2 / s);
    let (f1, f2) = (a1 + k1 * nu, a2 + k2 * nu);
    let (u11, u12, u22) = (p11 - k1 * ph1, p12 - k1 * ph2, p22 - k2 * ph2);
    let ll = -0.5 * ((2.0 * std::f64::consts::PI).ln() + s.ln() + nu * nu / s);

    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
    assert!(close(out.a_pred[0][0], a1) && close(out.a_pred[0][1], a2));
    assert!(close(out.innovation[(0, 0)], nu));
    assert!(close(out.innovation_cov[0][(0, 0)], s));
    assert!(close(out.a_filt[0][0], f1) && close(out.a_filt[0][1], f2));
    assert!(close(out.p_filt[0][(0, 0)], u11));
    assert!(close(out.p_filt[0][(0, 1)], u12));
    assert!(close(out.p_filt[0][(1, 1)], u22));
    assert!(close(out.loglik, ll));
}

#[test]
fn kalman_bands_cover_simulated_log_prices() {
    let p = ss_params();
    let cfg = SimConfig::new(ModelKind::Ss, 1000, 5, 42);
    let errs = MeasurementErrorSpec::new(5, 0.03, 0.01);
    let sim = simulate(&p.into(), &errs, &cfg).unwrap();
    let out = run_filter(&p.into(), FilterKind::Kf, &sim.observation_panel(cfg.dt).unwrap(), &errs)
        .unwrap();
    let bands = confidence_bands(&out, 0.95).unwrap();
    let logs = sim.log_prices.unwrap();
    let inside = logs
        .iter()
        .zip(bands.lower.iter().zip(bands.upper.iter()))
        .filter(|(y, (lo, hi))| lo.ln() <= **y && **y <= hi.ln())
        .count();
    let rate = inside as f64 / logs.len() as f64;
    assert!(rate >= 0.93, "coverage {rate}");
}

#[test]
fn kalman_rejects_bad_panels() {
    let p = ss_params();
    let trans = build_transition(&p, 1.0 / 360.0).unwrap();
    let panel = pd_panel(pd_params(), 5, 2, 1);
    let errs = MeasurementErrorSpec::new(2, 0.01, 0.01);
    let init = FilterInit::stationary(&p);
    let err = kalman_filter(&trans, &p, &panel, &errs, &init).unwrap_err();
    assert_eq!(err.field(), Some("model"));

    let ss_panel = ObservationPanel { model_kind: ModelKind::Ss, ..panel };
    let errs3 = MeasurementErrorSpec::new(3, 0.01, 0.01);
    assert_eq!(kalman_filter(&trans, &p, &ss_panel, &errs3, &init).unwrap_err().field(), Some("m"));
}

#[test]
fn singular_innovation_covariance_reports_time_index() {
    // Zero prior, zero process noise and a degenerate contract layout give S = Σ_v ≈ 0.
    let p = ss_params();
    let trans = StateTransition {
        sigma_w: Matrix::zeros(2, 2),
        ..build_transition(&p, 1.0 / 360.0).unwrap()
    };
    let panel = ObservationPanel::new(Matrix::zeros(3, 2), Matrix::zeros(3, 2), trans.dt, ModelKind::Ss)
        .unwrap();
    let init = FilterInit::new(v2(0.0, 1.0), Matrix::zeros(2, 2)).unwrap();
    let errs = MeasurementErrorSpec::new(2, 1.0, 1.0);
    let mut sigma_v = errs.covariance();
    sigma_v[(1, 1)] = -1.0;
    let err = linearized_filter(&trans, &pdsim_core::filters::SsMeasurement(&p), &panel, &sigma_v, &init)
        .unwrap_err();
    assert!(matches!(err, Error::NumericalFailure { time_index: 0, .. }), "{err:?}");
}

#[test]
fn ekf_on_linear_polynomial_equals_kalman() {
    let p = linear_pd_params();
    let panel = pd_panel(p, 300, 4, 3);
    let trans = build_transition(&p.base, panel.dt).unwrap();
    let errs = MeasurementErrorSpec::new(4, 0.02, 0.01);
    let init = FilterInit::stationary(&p.base);
    let kf = linearized_filter(&trans, &Affine(p), &panel, &errs.covariance(), &init).unwrap();
    let ekf = extended_kalman_filter(&trans, &p, &panel, &errs, &init).unwrap();
    assert!(max_state_gap(&kf, &ekf) < 1e-12);
    assert!((kf.loglik - ekf.loglik).abs() < 1e-9 * kf.loglik.abs());
}

#[test]
fn ekf_single_step_matches_longhand_update() {
    let p = pd_params();
    let trans = build_transition(&p.base, 1.0 / 360.0).unwrap();
    let tau = 0.4;
    let obs = 2.1;
    let sigma = 0.05;
    let panel = ObservationPanel::new(
        Matrix::from_element(1, 1, obs),
        Matrix::from_element(1, 1, tau),
        trans.dt,
        ModelKind::Pd,
    )
    .unwrap();
    let errs = MeasurementErrorSpec::new(1, sigma, sigma);
    let init = FilterInit::new(v2(0.2, 0.5), Matrix::from_row_slice(2, 2, &[0.1, 0.02, 0.02, 0.05]))
        .unwrap();
    let out = extended_kalman_filter(&trans, &p, &panel, &errs, &init).unwrap();

    let coords = expm(&(generator_matrix(&p) * tau)).unwrap() * p.coeffs.as_vector();
    let c: Vec<f64> = coords.iter().copied().collect();
    let (e1, e2) = (trans.e[(0, 0)], trans.e[(1, 1)]);
    let (a1, a2) = (e1 * 0.2 + trans.c[0], e2 * 0.5 + trans.c[1]);
    let (p11, p12, p22) = (
        e1 * e1 * 0.1 + trans.sigma_w[(0, 0)],
        e1 * e2 * 0.02 + trans.sigma_w[(0, 1)],
        e2 * e2 * 0.05 + trans.sigma_w[(1, 1)],
    );
    let h = c[0] + c[1] * a1 + c[2] * a2 + c[3] * a1 * a1 + c[4] * a1 * a2 + c[5] * a2 * a2;
    let j1 = c[1] + 2.0 * c[3] * a1 + c[4] * a2;
    let j2 = c[2] + c[4] * a1 + 2.0 * c[5] * a2;
    let nu = obs - h;
    let ph1 = p11 * j1 + p12 * j2;
    let ph2 = p12 * j1 + p22 * j2;
    let s = j1 * ph1 + j2 * ph2 + sigma * sigma;
    let (k1, k2) = (ph1 / s, ph2 / s);

    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
    assert!(close(out.innovation[(0, 0)], nu));
    assert!(close(out.innovation_cov[0][(0, 0)], s));
    assert!(close(out.a_filt[0][0], a1 + k1 * nu));
    assert!(close(out.a_filt[0][1], a2 + k2 * nu));
    assert!(close(out.p_filt[0][(0, 0)], p11 - k1 * ph1));
    assert!(close(out.p_filt[0][(0, 1)], p12 - k1 * ph2));
    assert!(close(out.p_filt[0][(1, 1)], p22 - k2 * ph2));
}

#[test]
fn ekf_update_never_increases_uncertainty() {
    let p = pd_params();
    let panel = pd_panel(p, 400, 5, 11);
    let errs = MeasurementErrorSpec::new(5, 0.02, 0.01);
    let out = run_filter(&p.into(), FilterKind::Ekf, &panel, &errs).unwrap();
    for (pp, pf) in out.p_pred.iter().zip(&out.p_filt) {
        let diff = pp - pf + Matrix::identity(2, 2) * 1e-9;
        assert!(cholesky(&diff).is_ok());
    }
}

#[test]
fn ukf_on_linear_polynomial_matches_kalman() {
    let p = linear_pd_params();
    let panel = pd_panel(p, 500, 5, 21);
    let trans = build_transition(&p.base, panel.dt).unwrap();
    let errs = MeasurementErrorSpec::new(5, 0.02, 0.01);
    let init = FilterInit::stationary(&p.base);
    let kf = linearized_filter(&trans, &Affine(p), &panel, &errs.covariance(), &init).unwrap();
    let ukf = unscented_kalman_filter(&trans, &p, &panel, &errs, &init).unwrap();
    assert!(max_state_gap(&kf, &ukf) < 1e-8);
    let generic = unscented_filter(&trans, &Affine(p), &panel, &errs.covariance(), &init).unwrap();
    assert!(max_state_gap(&kf, &generic) < 1e-8);
}

#[test]
fn ukf_and_ekf_agree_on_quadratic_panel() {
    let p = pd_params();
    let panel = pd_panel(p, 1000, 5, 7);
    let errs = MeasurementErrorSpec::new(5, 0.02, 0.01);
    let ekf = run_filter(&p.into(), FilterKind::Ekf, &panel, &errs).unwrap();
    let ukf = run_filter(&p.into(), FilterKind::Ukf, &panel, &errs).unwrap();
    let close = ekf
        .a_filt
        .iter()
        .zip(&ukf.a_filt)
        .filter(|(e, u)| (*e - *u).norm() <= 0.05 * e.norm())
        .count();
    assert!(close as f64 >= 0.95 * 1000.0, "{close} of 1000 steps within 5%");
}

#[test]
fn ukf_rejects_ss_panels() {
    let p = pd_params();
    let trans = build_transition(&p.base, 1.0 / 360.0).unwrap();
    let panel = ObservationPanel::new(Matrix::zeros(2, 2), Matrix::zeros(2, 2), trans.dt, ModelKind::Ss)
        .unwrap();
    let errs = MeasurementErrorSpec::new(2, 0.01, 0.01);
    let init = FilterInit::stationary(&p.base);
    assert!(unscented_kalman_filter(&trans, &p, &panel, &errs, &init).is_err());
}

#[test]
fn run_filter_enforces_pairing() {
    let panel = pd_panel(pd_params(), 5, 2, 1);
    let errs = MeasurementErrorSpec::new(2, 0.01, 0.01);
    let err = run_filter(&pd_params().into(), FilterKind::Kf, &panel, &errs).unwrap_err();
    assert_eq!(err.field(), Some("filter"));
}

#[test]
fn stored_covariances_are_symmetric_and_psd() {
    let cases: Vec<(ModelParams, FilterKind)> = vec![
        (ss_params().into(), FilterKind::Kf),
        (pd_params().into(), FilterKind::Ekf),
        (pd_params().into(), FilterKind::Ukf),
    ];
    for (params, filter) in cases {
        let cfg = SimConfig { filter_kind: filter, ..SimConfig::new(params.kind(), 300, 4, 5) };
        let errs = MeasurementErrorSpec::new(4, 0.02, 0.01);
        let sim = simulate(&params, &errs, &cfg).unwrap();
        let out = run_filter(&params, filter, &sim.observation_panel(cfg.dt).unwrap(), &errs).unwrap();
        assert!(out.loglik.is_finite());
        for p in out.p_pred.iter().chain(&out.p_filt) {
            assert_eq!(p[(0, 1)], p[(1, 0)]);
            assert!(min_eig2(p) >= -1e-9 * p.trace());
        }
        for s in &out.innovation_cov {
            assert_eq!(s, &s.transpose());
            assert!(cholesky(s).is_ok());
        }
        let again = run_filter(&params, filter, &sim.observation_panel(cfg.dt).unwrap(), &errs).unwrap();
        assert_eq!(out.loglik.to_bits(), again.loglik.to_bits());
    }
}

#[test]
fn whitened_innovations_are_centred_at_true_parameters() {
    let cases: Vec<(ModelParams, FilterKind)> = vec![
        (ss_params().into(), FilterKind::Kf),
        (pd_params().into(), FilterKind::Ekf),
        (pd_params().into(), FilterKind::Ukf),
    ];
    for (params, filter) in cases {
        let (n, m) = (1000, 5);
        let cfg = SimConfig { filter_kind: filter, ..SimConfig::new(params.kind(), n, m, 31) };
        let errs = MeasurementErrorSpec::new(m, 0.02, 0.01);
        let sim = simulate(&params, &errs, &cfg).unwrap();
        let out = run_filter(&params, filter, &sim.observation_panel(cfg.dt).unwrap(), &errs).unwrap();
        let mut sums = vec![0.0; m];
        for t in 0..n {
            let l = cholesky(&out.innovation_cov[t]).unwrap();
            let z = l.solve_lower_triangular(&out.innovation.row(t).transpose()).unwrap();
            for j in 0..m {
                sums[j] += z[j];
            }
        }
        let pooled = sums.iter().sum::<f64>() / (n * m) as f64;
        assert!(pooled.abs() < 5.0 / ((n * m) as f64).sqrt(), "{filter}: pooled {pooled}");
        for s in sums {
            assert!((s / n as f64).abs() < 5.0 / (n as f64).sqrt(), "{filter}");
        }
    }
}

#[test]
fn cached_pricer_is_shareable_across_threads() {
    let pricer = PdPricer::with_grid(&pd_params(), [0.1, 0.2]).unwrap();
    std::thread::scope(|s| {
        for _ in 0..2 {
            s.spawn(|| pricer.price(&v2(0.1, 0.2), 0.1).unwrap());
        }
    });
}
