//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use bicycle_critic_sim::trace_csv::trace_to_string;
use bicycle_critic_core::critic::{update_consequents, LearnConfig};
use bicycle_critic_core::dynamics::{stability_eigenvalues, system_matrix, BicycleParams};
use bicycle_critic_core::estimation::{Imu, ImuModel, KalmanConfig, KalmanFilter};
use bicycle_critic_core::fuzzy::{infer, InputPartition, MembershipFn, TskRuleBase};
use bicycle_critic_core::harness::{compare, metrics, run, LoopConfig, RunMetrics, RunTrace, Scenario, Sensing};
use nalgebra::{Matrix2, Matrix4, RowVector2};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const BAND_DEG: f64 = 0.25;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_rule_base(rng: &mut StdRng, spread: f64) -> TskRuleBase {
    let mut rb = TskRuleBase::pd_seeded(0.0, 0.0);
    let flat: [f64; 27] = std::array::from_fn(|_| rng.random_range(-spread..spread));
    rb.set_coefficients(&flat);
    rb
}

fn c1_fuzzy_oracle() -> Outcome {
    fn mu(mf: &MembershipFn, x: f64) -> f64 {
        match *mf {
            MembershipFn::Sigmoid { slope, center } => 1.0 / (1.0 + (slope * (x - center)).exp()),
            MembershipFn::Gaussian { center, sigma } => (-(x - center).powi(2) / (2.0 * sigma * sigma)).exp(),
        }
    }
    let parts = |p: &InputPartition| [p.negative, p.zero, p.positive];
    let mut rng = StdRng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let rb = random_rule_base(&mut rng, 10.0);
        let e = rng.random_range(-0.5..0.5);
        let de = rng.random_range(-0.6..0.6);
        let (pe, pd) = (parts(&rb.error), parts(&rb.difference));
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let w = mu(&pe[i], e) * mu(&pd[j], de);
                let c = rb.consequents[3 * i + j];
                num += w * (c.a0 + c.a1 * e + c.a2 * de);
                den += w;
            }
        }
        worst = worst.max((infer(&rb, e, de).unwrap().u - num / den).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-12 && secs < 1.0,
        format!("max |u - oracle| = {worst:.2e} (< 1e-12), {secs:.3} s (< 1 s)"),
    )
}

fn c2_gradient_check() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let rb = random_rule_base(&mut rng, 30.0);
        let e = rng.random_range(-0.4..0.4);
        let de = rng.random_range(-0.6..0.6);
        let base = infer(&rb, e, de).unwrap();
        let flat = rb.coefficients();
        for k in 0..27 {
            let analytic = [1.0, e, de][k % 3] * base.weights[k / 3];
            if analytic == 0.0 {
                continue;
            }
            // u is affine in each coefficient; size the step so the change
            // in u clears its rounding noise
            let h = (1e-3f64).max(1e-4 * (1.0 + base.u.abs()) / analytic.abs());
            let u_with = |delta: f64| {
                let mut f = flat;
                f[k] += delta;
                let mut probe = rb.clone();
                probe.set_coefficients(&f);
                infer(&probe, e, de).unwrap().u
            };
            let fd = (u_with(h) - u_with(-h)) / (2.0 * h);
            worst = worst.max((fd - analytic).abs() / analytic.abs());
        }
    }
    outcome(worst < 1e-6, format!("max relative error {worst:.2e} over 100 x 27 partials (< 1e-6)"))
}

fn c3_descent_identity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut rb = random_rule_base(&mut rng, 30.0);
        let e = rng.random_range(-0.4..0.4);
        let de = rng.random_range(-0.6..0.6);
        let r = rng.random_range(-2.0..2.0);
        let lc = LearnConfig::SIMULATION;
        let before = infer(&rb, e, de).unwrap();
        update_consequents(&mut rb, r, e, de, &before.weights, &lc, 0).unwrap();
        let after = infer(&rb, e, de).unwrap().u;
        let sum_sq: f64 = before.weights.iter().map(|w| w * w).sum();
        let expected = lc.eta * r * (1.0 + e * e + de * de) * sum_sq;
        worst = worst.max((after - before.u - expected).abs());
    }
    outcome(worst < 1e-10, format!("max deviation {worst:.2e} over 1000 updates (< 1e-10)"))
}

fn c4_open_loop_instability() -> Outcome {
    let p = BicycleParams::experimental(2.78);
    let a = system_matrix(&p).unwrap();
    let oracle = Matrix4::from_fn(|i, j| a[i][j])
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let ours = stability_eigenvalues(&p).unwrap()[0].re;
    let agree = (ours - oracle).abs() <= 5e-7 * oracle.abs();
    outcome(
        ours > 0.0 && agree,
        format!(
            "max Re(lambda) = {ours:.9} (oracle {oracle:.9}, 6-digit match: {agree}); required > 0"
        ),
    )
}

fn pair(s: &Scenario) -> Result<(RunMetrics, RunMetrics, f64), String> {
    let cfg = LoopConfig::default();
    let start = Instant::now();
    let adaptive = run(s, &cfg).map_err(|f| f.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let frozen = run(&s.clone().frozen(), &cfg).map_err(|f| f.to_string())?;
    let ma = metrics(&adaptive, BAND_DEG).unwrap();
    let mf = metrics(&frozen, BAND_DEG).unwrap();
    Ok((ma, mf, secs))
}

fn settle(m: &RunMetrics) -> String {
    m.settling_time.map_or("never".into(), |t| format!("{t:.2} s"))
}

fn step_case(s: Scenario, max_overshoot: f64, max_settle: f64, runtime: Option<f64>) -> Outcome {
    let (ma, mf, secs) = match pair(&s) {
        Ok(x) => x,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let report = compare(&ma, &mf);
    let settled = ma.settling_time.is_some_and(|t| t < max_settle);
    let fast = runtime.is_none_or(|limit| secs < limit);
    let pass = ma.converged && ma.overshoot < max_overshoot && settled && report.a_dominates() && fast;
    outcome(
        pass,
        format!(
            "adaptive {:.3} deg / {}, frozen {:.3} deg / {}; bounds < {max_overshoot} deg, < {max_settle} s; \
             lower overshoot: {}, earlier settling: {}; run {secs:.2} s",
            ma.overshoot,
            settle(&ma),
            mf.overshoot,
            settle(&mf),
            report.lower_overshoot,
            report.lower_settling_time
        ),
    )
}

fn c5_case1() -> Outcome {
    step_case(Scenario::case1(), 3.0, 2.0, Some(5.0))
}

fn c6_case2() -> Outcome {
    let cfg = LoopConfig::default();
    let s = Scenario::case2();
    let adaptive = match run(&s, &cfg) {
        Ok(t) => t,
        Err(f) => return outcome(false, format!("run failed: {f}")),
    };
    let frozen = match run(&s.clone().frozen(), &cfg) {
        Ok(t) => t,
        Err(f) => return outcome(false, format!("run failed: {f}")),
    };
    let ra = metrics(&adaptive, BAND_DEG).unwrap().tracking_rmse;
    let rf = metrics(&frozen, BAND_DEG).unwrap().tracking_rmse;
    let period = 6.0;
    let first = adaptive.rmse_between(0.0, period).unwrap();
    let last = adaptive.rmse_between(s.duration - period, s.duration).unwrap();
    outcome(
        ra < rf && last <= first,
        format!(
            "RMSE adaptive {ra:.5} deg vs frozen {rf:.5} deg; adaptive first period {first:.5}, last period {last:.5}"
        ),
    )
}

fn c7_case3() -> Outcome {
    step_case(Scenario::case3a(), 1.5, 4.0, None)
}

fn case3b_report() -> String {
    match pair(&Scenario::case3b()) {
        Ok((ma, mf, _)) => format!(
            "case 3b (sine tracking, heavier, 1.39 m/s): RMSE adaptive {:.4} deg, frozen {:.4} deg",
            ma.tracking_rmse, mf.tracking_rmse
        ),
        Err(e) => format!("case 3b run failed: {e}"),
    }
}

fn c8_kalman() -> Outcome {
    let dt = 0.01;
    let cfg = KalmanConfig::default();

    // (a) symmetric PSD under random interleavings
    let mut rng = StdRng::seed_from_u64(8);
    let mut kf = KalmanFilter::new(&cfg, dt, 0.0);
    let mut worst_asym = 0.0f64;
    let mut psd = true;
    for _ in 0..100_000 {
        if rng.random_bool(0.5) {
            kf.predict(rng.random_range(-3.0..3.0));
        } else {
            kf.update(rng.random_range(-1.0..1.0)).unwrap();
        }
        let p = kf.p;
        worst_asym = worst_asym.max((p[0][1] - p[1][0]).abs());
        psd &= p[0][0] >= -1e-12 && p[1][1] >= -1e-12 && p[0][0] * p[1][1] - p[0][1] * p[1][0] >= -1e-12;
    }
    let a = psd && worst_asym <= 1e-12;

    // (b) constant bias, noiseless truth
    let truth = |t: f64| {
        let (amp, w) = (5f64.to_radians(), std::f64::consts::FRAC_PI_3);
        (amp * (w * t).sin(), amp * w * (w * t).cos())
    };
    let bias = 0.05;
    let mut imu = Imu::new(
        ImuModel {
            gyro_bias_init: bias,
            ..ImuModel::IDEAL
        },
        0,
    );
    let mut kf = KalmanFilter::new(&cfg, dt, truth(0.0).0);
    for k in 0..3000 {
        let (phi, rate) = truth(k as f64 * dt);
        let s = imu.sample(phi, rate, dt);
        if k > 0 {
            kf.predict(s.gyro_rate);
            kf.update(s.accel_roll).unwrap();
        }
    }
    let b_est = kf.bias();
    let b = (b_est - bias).abs() <= 0.2 * bias;

    // (c) steady-state gain against an a-priori Riccati iteration
    let f = Matrix2::new(1.0, -dt, 0.0, 1.0);
    let h = RowVector2::new(1.0, 0.0);
    let q = Matrix2::new(cfg.q_phi * dt, 0.0, 0.0, cfg.q_bias * dt);
    let mut p = f * Matrix2::new(cfg.p0[0], 0.0, 0.0, cfg.p0[1]) * f.transpose() + q;
    for _ in 0..200_000 {
        let s = p[(0, 0)] + cfg.r;
        p = f * (p - p * h.transpose() * h * p / s) * f.transpose() + q;
    }
    let k_ref = [p[(0, 0)] / (p[(0, 0)] + cfg.r), p[(1, 0)] / (p[(0, 0)] + cfg.r)];
    let mut kf = KalmanFilter::new(&cfg, dt, 0.0);
    for _ in 0..200_000 {
        kf.predict(0.0);
        kf.update(0.0).unwrap();
    }
    let gain_err = (kf.gain[0] - k_ref[0]).abs().max((kf.gain[1] - k_ref[1]).abs());
    let c = gain_err < 1e-8;

    // (d) closed-loop noisy case 2
    let s = Scenario::case2().with_sensing(Sensing::Imu {
        model: ImuModel::default(),
    });
    let (filt, raw) = match run(&s, &LoopConfig::default()) {
        Ok(t) => {
            let rms = |f: &dyn Fn(&bicycle_critic_core::harness::TraceRecord) -> f64| {
                (t.records.iter().map(|r| f(r).powi(2)).sum::<f64>() / t.len() as f64).sqrt()
            };
            (rms(&|r| r.phi_est - r.phi_true), rms(&|r| r.accel_roll - r.phi_true))
        }
        Err(_) => (f64::NAN, f64::NAN),
    };
    let d = filt < raw;

    outcome(
        a && b && c && d,
        format!(
            "(a) PSD {a}, max asym {worst_asym:.1e}; (b) bias {b_est:.5} vs {bias} ({b}); \
             (c) |K - K_riccati| {gain_err:.1e} ({c}); (d) roll RMSE filtered {filt:.4} rad vs raw {raw:.4} rad ({d})"
        ),
    )
}

fn c9_equilibrium() -> Outcome {
    let s = Scenario {
        phi0: 0.0,
        ..Scenario::case1()
    };
    let trace = match run(&s, &LoopConfig::default()) {
        Ok(t) => t,
        Err(f) => return outcome(false, format!("run failed: {f}")),
    };
    let worst = trace
        .records
        .iter()
        .flat_map(|r| {
            let a = r.to_array();
            a.into_iter().enumerate().filter(|(j, _)| *j != 0 && *j != 10).map(|(_, v)| v.abs())
        })
        .fold(0.0f64, f64::max);
    let span = trace.records.last().map_or(0.0, |r| r.t + s.control_dt);
    outcome(
        worst < 1e-9 && span >= 10.0 - 1e-9,
        format!("max |column| except t, x = {worst:.1e} over {span:.2} s"),
    )
}

fn c10_determinism() -> Outcome {
    let s = Scenario {
        seed: 7,
        ..Scenario::case2().with_sensing(Sensing::Imu {
            model: ImuModel::default(),
        })
    };
    let csv = |t: Result<RunTrace, _>| t.map(|t| trace_to_string(&t)).map_err(|f: bicycle_critic_core::harness::RunFailure| f.to_string());
    let cfg = LoopConfig::default();
    match (csv(run(&s, &cfg)), csv(run(&s, &cfg))) {
        (Ok(a), Ok(b)) => outcome(a.as_bytes() == b.as_bytes(), format!("{} bytes per CSV, identical: {}", a.len(), a == b)),
        (Err(e), _) | (_, Err(e)) => outcome(false, format!("run failed: {e}")),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1  fuzzy inference oracle", c1_fuzzy_oracle),
        ("2  gradient check", c2_gradient_check),
        ("3  descent identity", c3_descent_identity),
        ("4  open-loop instability at 2.78 m/s", c4_open_loop_instability),
        ("5  case 1 lean recovery", c5_case1),
        ("6  case 2 sine tracking", c6_case2),
        ("7  case 3 heavier bicycle", c7_case3),
        ("8  Kalman filter", c8_kalman),
        ("9  equilibrium null test", c9_equilibrium),
        ("10 determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("info {}", case3b_report());
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
