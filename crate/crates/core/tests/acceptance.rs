//! Acceptance harness: one PASS/FAIL line per criterion, non-zero exit when
//! any criterion fails. Run with `cargo test --test acceptance`.

mod common;

use std::cell::UnsafeCell;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use multicf::blend::{fit_blend, ridge_weights, BlendOptions, PredictionMatrix};
use multicf::data::TimeBinner;
use multicf::factor::{predict_mf, predict_svdpp, predict_time, sgd_epoch, AlsProblem, EpochPlan, FactorModel, Side, UserItems};
use multicf::mfitr::{edge_weights, sgd_epoch_mfitr, MfitrModel};
use multicf::neighborhood::{build_neighbors, user_means};
use multicf::parallel::LockTable;
use multicf::synth::{generate_synthetic, SynthConfig, SyntheticData};
use multicf::taxonomy::{LinkPolicy, TaxonomyBuilder};
use multicf::train::{train, TrainInput};
use multicf::{Engine, HyperParams, ModelKind};
use rand::Rng;

use common::*;

// Tolerances and budgets.
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const FD_BUDGET: Duration = Duration::from_secs(10);
const ALS_TOL: f64 = 1e-9;
const ALS_BUDGET: Duration = Duration::from_secs(5);
const KNN_BUDGET: Duration = Duration::from_secs(5);
const RIDGE_TOL: f64 = 1e-10;
const ORDERING_BUDGET: Duration = Duration::from_secs(15 * 60);
const ORDERING_MIN_SEEDS: usize = 4;
const PARALLEL_RMSE_REL_TOL: f64 = 0.005;
const DEADLOCK_BUDGET: Duration = Duration::from_secs(60);
const MIN_ALS_SPEEDUP_4: f64 = 2.0;
const MAX_SGD_WIDTH_RATIO: f64 = 6.0;
const SCALING_MIN_CORES: usize = 4;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, pass, detail }
}

fn main() {
    let start = Instant::now();
    let ordering_data: Vec<SyntheticData> = (1..=5).map(|s| generate_synthetic(&ordering_config(s)).unwrap()).collect();
    let runs: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1", Box::new(gradient_suite)),
        ("2", Box::new(als_monotonicity)),
        ("3", Box::new(neighbourhood_oracle)),
        ("4", Box::new(ridge_oracle_check)),
        ("5", Box::new(reduction_chain)),
        ("6", Box::new(|| table_two_orderings(&ordering_data))),
        ("7", Box::new(|| parallel_accuracy(&ordering_data[0]))),
        ("8", Box::new(parallel_safety)),
        ("9", Box::new(scaling_proxies)),
    ];
    let mut failed = 0;
    for (_, run) in runs {
        let t = Instant::now();
        let o = run();
        println!(
            "{} criterion {}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.detail,
            t.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} of 9 passed in {:.1}s", 9 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

// 1 ------------------------------------------------------------------------

fn gradient_suite() -> Outcome {
    let t = Instant::now();
    let kinds = [
        ModelKind::Sgd,
        ModelKind::Svdpp,
        ModelKind::TimeSvd,
        ModelKind::TimeSvdpp,
        ModelKind::Mfitr,
        ModelKind::TimeMfitr,
    ];
    let mut worst: Vec<String> = Vec::new();
    let mut pass = true;
    for kind in kinds {
        let mut kind_worst: f64 = 0.0;
        for seed in 0..3 {
            let (gm, data, reg, edges) = gradient_instance(kind, 100 + seed);
            let a = analytic_gradient(&gm, &data, reg, &edges);
            let f = fd_gradient(&gm, &data, reg, &edges, FD_STEP);
            kind_worst = kind_worst.max(max_relative_error(&a, &f));
        }
        pass &= kind_worst < FD_REL_TOL;
        worst.push(format!("{kind}={kind_worst:.1e}"));
    }
    let elapsed = t.elapsed();
    pass &= elapsed < FD_BUDGET;
    outcome(
        "1",
        pass,
        format!("gradient check, max relative error {} (tol {FD_REL_TOL:e}), {:.2}s", worst.join(" "), elapsed.as_secs_f64()),
    )
}

// 2 ------------------------------------------------------------------------

fn als_instance(seed: u64) -> (multicf::Dataset, FactorModel) {
    let mut r = rng(seed);
    let data = random_ratings(&mut r, 20, 30, 0.3, 10);
    let h = HyperParams {
        dim: 5,
        lambda: 1.0,
        seed,
        init_scale: 1.0,
        ..HyperParams::defaults(ModelKind::Als)
    };
    let model = FactorModel::init(ModelKind::Als, 20, 30, 0.0, &h, None).unwrap();
    (data, model)
}

fn als_monotonicity() -> Outcome {
    let t = Instant::now();
    let (data, mut model) = als_instance(7);
    let problem = AlsProblem::new(&data, None).unwrap();
    let engine = Engine::sequential();
    let mut prev = problem.objective(&model, 1.0);
    let first = prev;
    let mut worst_rise = f64::NEG_INFINITY;
    let mut ok = true;
    for _ in 0..25 {
        for side in [Side::Items, Side::Users] {
            problem.half_step(&mut model, side, 1.0, &engine).unwrap();
            let obj = problem.objective(&model, 1.0);
            let rise = obj - prev;
            worst_rise = worst_rise.max(rise);
            ok &= rise <= ALS_TOL;
            prev = obj;
        }
    }
    let elapsed = t.elapsed();
    outcome(
        "2",
        ok && elapsed < ALS_BUDGET,
        format!(
            "ALS objective {first:.3} -> {prev:.3} over 50 half-steps, largest change {worst_rise:.3e} (tol {ALS_TOL:e}), {:.3}s",
            elapsed.as_secs_f64()
        ),
    )
}

// 3 ------------------------------------------------------------------------

fn neighbourhood_oracle() -> Outcome {
    let t = Instant::now();
    let mut r = rng(33);
    let mut data = random_ratings(&mut r, 30, 50, 0.35, 100);
    // A few repeated ratings exercise the latest-rating rule.
    let mut recs = data.records().to_vec();
    for k in 0..10 {
        let mut rep = recs[k * 7];
        rep.score = r.random_range(0..=100) as f64;
        recs.push(rep);
    }
    data = dataset(recs, multicf::Split::Train);
    let k = 10;
    let oracle = brute_force_neighbors(&data, k);
    let mut ok = true;
    for parts in [1, 3, 7] {
        let table = build_neighbors(&data, k, parts, &Engine::sequential()).unwrap();
        for (i, expect) in oracle.iter().enumerate() {
            let got = table.neighbors(i as u32);
            ok &= got.len() == expect.len()
                && got
                    .iter()
                    .zip(expect)
                    .all(|(a, b)| a.0 == b.0 && a.1.to_bits() == b.1.to_bits());
        }
    }
    let elapsed = t.elapsed();
    outcome(
        "3",
        ok && elapsed < KNN_BUDGET,
        format!("blocked kNN vs brute force, 50 items x 30 users, K={k}, parts 1/3/7: {}", if ok { "bit-identical" } else { "MISMATCH" }),
    )
}

// 4 ------------------------------------------------------------------------

fn ridge_oracle_check() -> Outcome {
    let mut r = rng(44);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..100).map(|_| r.random_range(0.0..100.0)).collect()).collect();
        let y: Vec<f64> = (0..100).map(|_| r.random_range(0.0..100.0)).collect();
        let lambda = r.random_range(0.0..10.0);
        let mut x = PredictionMatrix::unkeyed(100);
        for (k, c) in cols.iter().enumerate() {
            x.push(format!("m{k}"), c.clone()).unwrap();
        }
        let w = ridge_weights(&x, &y, lambda).unwrap();
        let o = ridge_oracle(&cols, &y, lambda);
        for (a, b) in w.w.iter().zip(&o) {
            worst = worst.max((a - b).abs());
        }
    }
    let mut x = PredictionMatrix::unkeyed(2);
    x.push("a", vec![1.0, 0.0]).unwrap();
    x.push("b", vec![0.0, 1.0]).unwrap();
    let hand = ridge_weights(&x, &[3.0, 4.0], 1.0).unwrap();
    let exact = hand.w == vec![1.5, 2.0];
    outcome(
        "4",
        worst < RIDGE_TOL && exact,
        format!("ridge vs Gauss-Jordan on 20 instances, max |dw| {worst:.2e} (tol {RIDGE_TOL:e}); hand example {:?}", hand.w),
    )
}

// 5 ------------------------------------------------------------------------

fn reduction_chain() -> Outcome {
    let mut r = rng(55);
    let mut predictions_ok = true;
    for m in 0..100 {
        let (nu, ni, d) = (4, 6, 1 + m % 4);
        let binner = TimeBinner::new(0, 50, 4).unwrap();
        let mut full = FactorModel::zeros(ModelKind::TimeSvdpp, nu, ni, d, 2, Some(binner)).unwrap();
        full.mu = r.random_range(0.0..100.0);
        for v in [&mut full.bu, &mut full.bi, &mut full.p, &mut full.q, &mut full.y] {
            v.iter_mut().for_each(|x| *x = r.random_range(-3.0..3.0));
        }
        let mut svdpp = FactorModel::zeros(ModelKind::Svdpp, nu, ni, d, 0, None).unwrap();
        svdpp.mu = full.mu;
        svdpp.bu.clone_from(&full.bu);
        svdpp.bi.clone_from(&full.bi);
        svdpp.p.clone_from(&full.p);
        svdpp.q.clone_from(&full.q);
        svdpp.y.clone_from(&full.y);
        let mut mf = FactorModel::zeros(ModelKind::Sgd, nu, ni, d, 0, None).unwrap();
        mf.mu = full.mu;
        mf.bu.clone_from(&full.bu);
        mf.bi.clone_from(&full.bi);
        mf.p.clone_from(&full.p);
        mf.q.clone_from(&full.q);
        let mut svdpp_no_y = svdpp.clone();
        svdpp_no_y.y.iter_mut().for_each(|v| *v = 0.0);
        for u in 0..nu as u32 {
            let r_u: Vec<u32> = (0..ni as u32).filter(|_| r.random_bool(0.5)).collect();
            for i in 0..ni as u32 {
                let t = r.random_range(0..=50);
                let a = predict_time(&full, u, i, t, &r_u).unwrap();
                let b = predict_svdpp(&svdpp, u, i, &r_u).unwrap();
                let c = predict_svdpp(&svdpp_no_y, u, i, &r_u).unwrap();
                let e = predict_mf(&mf, u, i).unwrap();
                predictions_ok &= a.to_bits() == b.to_bits() && c.to_bits() == e.to_bits();
            }
        }
    }

    // MFITR with λ3 = λ4 = 0 against bias-MF.
    let data = generate_synthetic(&SynthConfig {
        users: 200,
        artists: 10,
        ratings_per_user: 20,
        seed: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    let train_set = &data.train;
    let n_items = train_set.num_items();
    let h = HyperParams {
        dim: 4,
        gamma: 2e-3,
        lambda: 0.3,
        lambda1: 0.3,
        lambda2: 0.3,
        lambda3: 0.0,
        lambda4: 0.0,
        init_scale: 0.1,
        seed: 9,
        ..HyperParams::defaults(ModelKind::Mfitr)
    };
    let mu = train_set.mean_score().unwrap();
    let mf = FactorModel::init(ModelKind::Sgd, train_set.num_users(), n_items, mu, &h, None).unwrap();
    let zeroed = MfitrModel::init(ModelKind::Mfitr, train_set.num_users(), n_items, mu, &h, None, &data.taxonomy).unwrap();
    let mut zero_pred_ok = zeroed.num_artists() > 0;
    for rec in data.validation.records() {
        zero_pred_ok &= zeroed.predict(rec.user, rec.item, rec.time).to_bits() == mf.predict(rec.user, rec.item, rec.time).to_bits();
    }

    // Trajectories: a taxonomy whose items carry no artist link.
    let mut b = TaxonomyBuilder::new();
    for i in 0..n_items as u32 {
        b.track(i, None, None, vec![]);
    }
    let flat = b.build(LinkPolicy::Strict).unwrap();
    let mut a = MfitrModel::init(ModelKind::Mfitr, train_set.num_users(), n_items, mu, &h, None, &flat).unwrap();
    let mut m = mf.clone();
    let ui = UserItems::build(train_set);
    let ew = edge_weights(&flat, train_set, &user_means(train_set));
    let engine = Engine::sequential();
    let plan_mfitr = EpochPlan::new(ModelKind::Mfitr, train_set, &ui, &h, 0);
    let h_sgd = HyperParams { lambda: 0.3, ..h.clone() };
    let plan_sgd = EpochPlan::new(ModelKind::Sgd, train_set, &ui, &h_sgd, 0);
    sgd_epoch_mfitr(&mut a, train_set, &ew, &plan_mfitr, &engine).unwrap();
    sgd_epoch(&mut m, train_set, &plan_sgd, &engine).unwrap();
    let trajectory_ok = a.base.bu == m.bu && a.base.bi == m.bi && a.base.p == m.p && a.base.q == m.q;

    outcome(
        "5",
        predictions_ok && zero_pred_ok && trajectory_ok,
        format!(
            "time-svdpp->svdpp->mf on 100 models: {}; zeroed-artist mfitr predictions: {}; one-epoch trajectory: {}",
            verdict(predictions_ok),
            verdict(zero_pred_ok),
            verdict(trajectory_ok)
        ),
    )
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "bit-identical"
    } else {
        "MISMATCH"
    }
}

// 6 ------------------------------------------------------------------------

fn ordering_config(seed: u64) -> SynthConfig {
    SynthConfig {
        users: 5000,
        artists: 200,
        albums_per_artist: 3,
        tracks_per_album: 5,
        ratings_per_user: 40,
        drift: true,
        coherent_taxonomy: true,
        seed,
        ..SynthConfig::default()
    }
}

/// Desk-scale settings shared by the ordering and parallel criteria.
fn ordering_hyper(kind: ModelKind, seed: u64) -> HyperParams {
    let base = HyperParams {
        iters: 30,
        dim: 10,
        gamma: 3e-3,
        lambda: 1.5,
        lambda1: 1.5,
        lambda2: 1.5,
        seed,
        ..HyperParams::defaults(kind)
    };
    match kind {
        ModelKind::TimeSvdpp | ModelKind::TimeSvd => HyperParams { lambda3: 1.0, ..base },
        ModelKind::Mfitr => HyperParams {
            lambda3: 5.0,
            lambda4: 5.0,
            ..base
        },
        _ => base,
    }
}

fn ordering_input<'a>(data: &'a SyntheticData) -> TrainInput<'a> {
    let mut input = TrainInput::new(&data.train).with_taxonomy(&data.taxonomy);
    let binner = TimeBinner::covering([&data.train, &data.validation], 1).unwrap();
    input.time_range = Some((binner.t_min(), binner.t_max()));
    input.min_dims = (data.validation.num_users(), data.validation.num_items());
    input
}

fn table_two_orderings(all: &[SyntheticData]) -> Outcome {
    let t = Instant::now();
    let engine = Engine::sequential();
    let kinds = [
        ModelKind::Sgd,
        ModelKind::Mfitr,
        ModelKind::Svdpp,
        ModelKind::TimeSvdpp,
        ModelKind::Knn,
        ModelKind::TimeKnn,
    ];
    let mut wins = [0usize; 4];
    let mut lines = Vec::new();
    for (s, data) in all.iter().enumerate() {
        let seed = s as u64 + 1;
        let input = ordering_input(data);
        let truth: Vec<f64> = data.validation.records().iter().map(|r| r.score).collect();
        let mut rmse = std::collections::BTreeMap::new();
        let mut blend_x = PredictionMatrix::unkeyed(data.validation.len());
        for kind in kinds {
            let (model, _) = train(kind, &input, &ordering_hyper(kind, seed), &engine).unwrap();
            let pred = model.predict_dataset(&data.validation, &engine);
            rmse.insert(kind, multicf::eval::rmse(&pred, &truth).unwrap());
            if matches!(kind, ModelKind::TimeSvdpp | ModelKind::Mfitr | ModelKind::Svdpp) {
                blend_x.push(kind.name(), pred).unwrap();
            }
        }
        let (_, report) = fit_blend(&blend_x, &truth, &BlendOptions::default()).unwrap();
        let best_single = rmse.values().copied().fold(f64::INFINITY, f64::min);
        let checks = [
            rmse[&ModelKind::Mfitr] <= rmse[&ModelKind::Sgd],
            rmse[&ModelKind::TimeSvdpp] <= rmse[&ModelKind::Svdpp],
            rmse[&ModelKind::TimeKnn] <= rmse[&ModelKind::Knn],
            report.blend_cv_rmse < best_single,
        ];
        for (w, c) in wins.iter_mut().zip(checks) {
            *w += usize::from(c);
        }
        lines.push(format!(
            "seed {seed}: sgd {:.3} mfitr {:.3} svdpp {:.3} time-svdpp {:.3} knn {:.3} time-knn {:.3} blend {:.3} (cv {:.3})",
            rmse[&ModelKind::Sgd],
            rmse[&ModelKind::Mfitr],
            rmse[&ModelKind::Svdpp],
            rmse[&ModelKind::TimeSvdpp],
            rmse[&ModelKind::Knn],
            rmse[&ModelKind::TimeKnn],
            report.blend_rmse,
            report.blend_cv_rmse,
        ));
    }
    for l in &lines {
        println!("    {l}");
    }
    let elapsed = t.elapsed();
    let names = ["(a) mfitr<=sgd", "(b) time-svdpp<=svdpp", "(c) time-knn<=knn", "(d) blend<best"];
    let summary: Vec<String> = names.iter().zip(wins).map(|(n, w)| format!("{n} {w}/5")).collect();
    outcome(
        "6",
        wins.iter().all(|&w| w >= ORDERING_MIN_SEEDS) && elapsed < ORDERING_BUDGET,
        format!("orderings on 5 seeds: {}; {:.0}s", summary.join(", "), elapsed.as_secs_f64()),
    )
}

// 7 ------------------------------------------------------------------------

fn parallel_accuracy(data: &SyntheticData) -> Outcome {
    let h = HyperParams {
        iters: 5,
        ..ordering_hyper(ModelKind::Sgd, 1)
    };
    let input = ordering_input(data);
    let run = |threads: usize| {
        let engine = Engine::new(threads).unwrap();
        let (model, _) = train(ModelKind::Sgd, &input, &h, &engine).unwrap();
        model.rmse_on(&data.validation, &engine).unwrap()
    };
    let base = run(1);
    let mut worst: f64 = 0.0;
    let mut parts = vec![format!("1t {base:.4}")];
    for threads in [2, 4, 8] {
        let r = run(threads);
        worst = worst.max((r - base).abs() / base);
        parts.push(format!("{threads}t {r:.4}"));
    }
    outcome(
        "7",
        worst <= PARALLEL_RMSE_REL_TOL,
        format!("SGD 5-epoch validation RMSE {}; max relative gap {:.3}% (tol 0.5%)", parts.join(", "), worst * 100.0),
    )
}

// 8 ------------------------------------------------------------------------

struct Shared(UnsafeCell<Vec<u64>>);
// SAFETY: entries are only touched while holding the matching lock slot.
unsafe impl Sync for Shared {}

impl Shared {
    /// Caller must hold lock slot `k`.
    unsafe fn bump(&self, k: usize) {
        (&mut *self.0.get())[k] += 1;
    }
}

fn parallel_safety() -> Outcome {
    // ALS determinism across thread counts.
    let (data, init) = als_instance(8);
    let problem = AlsProblem::new(&data, None).unwrap();
    let run = |threads: usize| {
        let engine = Engine::new(threads).unwrap();
        let mut m = init.clone();
        let mut snapshots = Vec::new();
        for _ in 0..5 {
            for side in [Side::Items, Side::Users] {
                problem.half_step(&mut m, side, 1.0, &engine).unwrap();
                snapshots.push((m.p.clone(), m.q.clone()));
            }
        }
        snapshots
    };
    let one = run(1);
    let deterministic = run(2) == one && run(8) == one;

    // Lost updates: every user touches one shared slot.
    let users: Vec<u32> = (0..20_000).collect();
    let locks = LockTable::new(1);
    let counter = Shared(UnsafeCell::new(vec![0]));
    Engine::new(16)
        .unwrap()
        .for_each_user(&users, &locks, |_, locks| {
            let _g = locks.lock_one(0);
            unsafe { counter.bump(0) };
            Ok(())
        })
        .unwrap();
    let total = counter.0.into_inner()[0];
    let no_lost = total == users.len() as u64;

    // Deadlock stress: random overlapping lock sets on a handful of slots.
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let slots = 6;
        let tasks: Vec<u32> = (0..200_000).collect();
        let locks = LockTable::new(slots);
        let counts = Shared(UnsafeCell::new(vec![0; slots]));
        let expected = std::sync::atomic::AtomicU64::new(0);
        let result = Engine::new(16).unwrap().for_each_user(&tasks, &locks, |u, locks| {
            let mut r = rng(u as u64);
            let n = r.random_range(1..=4);
            let ids: Vec<usize> = (0..n).map(|_| r.random_range(0..slots)).collect();
            let set = locks.lock_set(&ids);
            for &k in set.ids() {
                unsafe { counts.bump(k) };
            }
            expected.fetch_add(set.ids().len() as u64, std::sync::atomic::Ordering::Relaxed);
            Ok(())
        });
        let sum: u64 = counts.0.into_inner().iter().sum();
        let _ = tx.send(result.is_ok() && sum == expected.into_inner());
    });
    let t = Instant::now();
    let stress = rx.recv_timeout(DEADLOCK_BUDGET);
    let stress_ok = matches!(stress, Ok(true));
    outcome(
        "8",
        deterministic && no_lost && stress_ok,
        format!(
            "ALS threads 1/2/8 {}; shared-slot counter {total}/{}; deadlock stress {} in {:.1}s",
            if deterministic { "bit-identical" } else { "DIFFER" },
            users.len(),
            match stress {
                Ok(true) => "completed",
                Ok(false) => "LOST UPDATES",
                Err(_) => "TIMED OUT",
            },
            t.elapsed().as_secs_f64()
        ),
    )
}

// 9 ------------------------------------------------------------------------

fn median_iteration(kind: ModelKind, input: &TrainInput<'_>, h: &HyperParams, engine: &Engine) -> f64 {
    let mut trainer = multicf::train::Trainer::new(kind, input, h).unwrap();
    trainer.step(engine).unwrap();
    let mut times: Vec<f64> = (0..3)
        .map(|_| {
            let t = Instant::now();
            trainer.step(engine).unwrap();
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[1]
}

fn scaling_proxies() -> Outcome {
    let data = generate_synthetic(&SynthConfig {
        users: 3125,
        ratings_per_user: 40,
        seed: 99,
        ..ordering_config(99)
    })
    .unwrap();
    let input = TrainInput::new(&data.train);
    let als = HyperParams {
        dim: 20,
        lambda: 1.0,
        ..HyperParams::defaults(ModelKind::Als)
    };
    let single = Engine::sequential();
    let t1 = median_iteration(ModelKind::Als, &input, &als, &single);
    let t4 = median_iteration(ModelKind::Als, &input, &als, &Engine::new(4).unwrap());
    let speedup = t1 / t4;
    let sgd = |dim| HyperParams {
        dim,
        ..ordering_hyper(ModelKind::Sgd, 1)
    };
    let d25 = median_iteration(ModelKind::Sgd, &input, &sgd(25), &single);
    let d100 = median_iteration(ModelKind::Sgd, &input, &sgd(100), &single);
    let ratio = d100 / d25;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let asserted = cores >= SCALING_MIN_CORES;
    let pass = !asserted || (speedup >= MIN_ALS_SPEEDUP_4 && ratio <= MAX_SGD_WIDTH_RATIO);
    outcome(
        "9",
        pass,
        format!(
            "{} ratings: ALS D=20 speedup(4) {speedup:.2} (min {MIN_ALS_SPEEDUP_4}), SGD time(D=100)/time(D=25) {ratio:.2} (max {MAX_SGD_WIDTH_RATIO}); {}",
            data.train.len(),
            if asserted {
                format!("asserted on {cores} cores")
            } else {
                format!("reported only: {cores} core(s) available, bounds asserted on >= {SCALING_MIN_CORES}")
            }
        ),
    )
}
