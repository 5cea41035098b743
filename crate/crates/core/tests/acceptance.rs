//! Acceptance suite. Runs every criterion, prints one line each, and exits
//! nonzero when any of them fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use noma_mec::channel::SystemParams;
use noma_mec::dqn::{loss_and_gradients, QNetwork, Sample};
use noma_mec::harness::{self, compare_schemes, sample_contexts, ExperimentConfig, ExperimentId, Scheme, Sweep};
use noma_mec::lambertw::lambert_w0;
use noma_mec::rng;
use noma_mec::solver::{
    branch_allocation, branch_beta_interval, grid_oracle, kkt_residual, lemma1_gap, optimal_beta, optimal_time,
    solve_pair, PairContext, SchemeTag,
};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn contexts(seed: u64, n: usize) -> Vec<PairContext> {
    sample_contexts(&SystemParams::default(), seed, n).unwrap()
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn solver_optimality() -> Outcome {
    let (mut worst_excess, mut worst_gap) = (f64::NEG_INFINITY, 0.0f64);
    for ctx in contexts(101, 200) {
        let closed = solve_pair(&ctx).e_tot;
        let grid = grid_oracle(&ctx, 128).e_tot;
        worst_excess = worst_excess.max(closed - grid);
        worst_gap = worst_gap.max((grid - closed).abs() / closed);
    }
    check(
        worst_excess <= 1e-9 && worst_gap <= 0.01,
        format!("200 contexts: max(E_closed − E_grid) = {worst_excess:.3e} J, max gap = {worst_gap:.3e}"),
    )
}

fn kkt_suite() -> Outcome {
    let (mut stat, mut comp, mut branches) = (0.0f64, 0.0f64, 0usize);
    for ctx in contexts(102, 200) {
        let t_r = optimal_time(&ctx);
        for scheme in SchemeTag::all().filter(|s| s.mode.is_hybrid()) {
            let Some((lo, hi)) = branch_beta_interval(&ctx, scheme, t_r) else {
                continue;
            };
            let beta = optimal_beta(&ctx, scheme).unwrap().clamp(lo, hi);
            let alloc = branch_allocation(&ctx, scheme, beta, t_r);
            if !alloc.e_tot.is_finite() {
                continue;
            }
            let kkt = kkt_residual(&ctx, &alloc, scheme.indicator()).unwrap();
            stat = stat.max(kkt.max_stationarity());
            comp = comp.max(kkt.max_complementarity());
            branches += 1;
        }
    }
    check(
        branches > 0 && stat <= 1e-6 && comp <= 1e-8,
        format!("{branches} hybrid branches: max stationarity {stat:.3e}, max complementarity {comp:.3e}"),
    )
}

fn slot_monotonicity() -> Outcome {
    let (mut curves, mut worst) = (0usize, f64::NEG_INFINITY);
    for ctx in contexts(103, 50) {
        let slack = ctx.tau_n - ctx.tau_m;
        if slack <= 0.0 {
            continue;
        }
        for scheme in SchemeTag::all().filter(|s| s.mode.is_hybrid()) {
            for beta in [0.25, 0.5, 0.75, 1.0] {
                let mut prev: Option<f64> = None;
                for k in 0..1000 {
                    let t_r = slack * k as f64 / 999.0;
                    let inside = branch_beta_interval(&ctx, scheme, t_r).is_some_and(|(lo, hi)| (lo..=hi).contains(&beta));
                    if !inside {
                        prev = None;
                        continue;
                    }
                    let e = branch_allocation(&ctx, scheme, beta, t_r).e_tot;
                    if let Some(p) = prev {
                        worst = worst.max(e - p);
                    }
                    prev = Some(e);
                }
                curves += 1;
            }
        }
    }
    check(
        worst <= 1e-12,
        format!("{curves} curves × 1000 points: largest step increase {worst:.3e} J"),
    )
}

fn beta_stationarity() -> Outcome {
    let (mut n, mut worst_arg, mut worst_slope) = (0usize, 0.0f64, 0.0f64);
    for ctx in contexts(104, 200) {
        let t_r = optimal_time(&ctx);
        for scheme in SchemeTag::all().filter(|s| s.mode.is_hybrid()) {
            let Some((lo, hi)) = branch_beta_interval(&ctx, scheme, t_r) else {
                continue;
            };
            let beta = optimal_beta(&ctx, scheme).unwrap();
            let h = 1e-7;
            if !(beta - h > lo && beta + h < hi) {
                continue;
            }
            let f = |b: f64| branch_allocation(&ctx, scheme, b, t_r).e_tot;
            let argmin = golden_min(f, lo, hi);
            let slope = (f(beta + h) - f(beta - h)) / (2.0 * h);
            worst_arg = worst_arg.max((argmin - beta).abs());
            worst_slope = worst_slope.max(slope.abs());
            n += 1;
        }
    }
    check(
        n > 0 && worst_arg <= 1e-6 && worst_slope <= 1e-6,
        format!("{n} interior optima: max |β* − β_golden| {worst_arg:.3e}, max |dE/dβ| {worst_slope:.3e} J"),
    )
}

fn two_window_gap() -> Outcome {
    let mut found = Vec::new();
    let mut r = rng::stream(105, rng::streams::ENVIRONMENT);
    let params = SystemParams::default();
    let mut drawn = 0usize;
    while found.len() < 200 && drawn < 1_000_000 {
        drawn += 1;
        let ctx = PairContext::sample(&mut r, &params).unwrap();
        if let Ok(gap) = lemma1_gap(&ctx) {
            found.push(gap);
        }
    }
    let worst = found.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        found.len() == 200 && worst >= -1e-12,
        format!("{} in-range contexts (of {drawn} drawn): min gap {worst:.3e} J", found.len()),
    )
}

fn lambert_residual() -> Outcome {
    let mut r = rng::stream(106, 1);
    let (lo, hi) = (1e-12f64.ln(), 1e6f64.ln());
    let mut points: Vec<f64> = (0..10_000).map(|_| (lo + r.random::<f64>() * (hi - lo)).exp()).collect();
    points.push(0.0);
    points.push(1e6);
    let mut worst = 0.0f64;
    for &x in &points {
        let w = match lambert_w0(x) {
            Ok(w) => w,
            Err(e) => return Err(format!("W({x}) failed: {e}")),
        };
        worst = worst.max((w * w.exp() - x).abs() / x.max(1.0));
    }
    check(
        worst <= 1e-12,
        format!("{} points: max |W·e^W − x| / max(x, 1) = {worst:.3e}", points.len()),
    )
}

fn gradient_check() -> Outcome {
    let mut r = rng::stream(107, rng::streams::INIT);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let depth = r.random_range(2..=4);
        let dims: Vec<usize> = (0..depth).map(|_| r.random_range(1..=8)).collect();
        let mut net = QNetwork::random(&dims, &mut r).unwrap();
        for p in net.params_mut() {
            for v in p.iter_mut() {
                *v += r.random_range(-0.3..0.3);
            }
        }
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..dims[0]).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let out = dims[depth - 1];
        let batch: Vec<Sample> = xs
            .iter()
            .map(|x| Sample {
                x,
                action: r.random_range(0..out),
                target: r.random_range(-1.0..1.0),
            })
            .collect();
        let (_, grads) = loss_and_gradients(&net, &batch).unwrap();
        let analytic: Vec<f64> = grads.params().iter().flat_map(|p| p.iter().copied()).collect();
        let h = 1e-6;
        let mut k = 0;
        for layer in 0..net.params().len() {
            for i in 0..net.params()[layer].len() {
                let orig = net.params()[layer][i];
                net.params_mut()[layer][i] = orig + h;
                let up = loss_and_gradients(&net, &batch).unwrap().0;
                net.params_mut()[layer][i] = orig - h;
                let down = loss_and_gradients(&net, &batch).unwrap().0;
                net.params_mut()[layer][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[k];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
                k += 1;
            }
        }
    }
    check(worst <= 1e-4, format!("100 nets: max relative error {worst:.3e}"))
}

fn read_means(path: &Path) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect()
}

fn final_ten(v: &[f64]) -> f64 {
    v[v.len() - 10..].iter().sum::<f64>() / 10.0
}

fn dqn_vs_baselines() -> Vec<(String, Outcome)> {
    let config_path = repo_root().join("configs/dqn_baseline.toml");
    let mut config = ExperimentConfig::load(&config_path).unwrap();
    let dir = tempfile::tempdir().unwrap();
    config.output_dir = Some(dir.path().to_path_buf());
    let setup_ok = config.num_users == 6
        && config.hyper.lr == 0.01
        && config.hyper.episodes == 150
        && config.hyper.steps_per_episode == 500
        && config.system == SystemParams::default();
    assert!(setup_ok, "shipped config deviates from the required settings");
    harness::run(&config, 1).unwrap();
    let label = "num_users=6";
    let dqn = final_ten(&read_means(&dir.path().join(format!("dqn_{label}.csv"))));
    let random = final_ten(&read_means(&dir.path().join(format!("random_{label}.csv"))));
    let optimal = final_ten(&read_means(&dir.path().join(format!("optimal_{label}.csv"))));
    let rel = dqn / optimal - 1.0;
    vec![
        (
            "8a DQN below random policy".into(),
            check(
                dqn < random,
                format!("final-10 mean {dqn:.4e} J vs random {random:.4e} J"),
            ),
        ),
        (
            "8b DQN within 15% of exhaustive optimum".into(),
            check(
                rel <= 0.15,
                format!("final-10 mean {dqn:.4e} J vs optimum {optimal:.4e} J: {:.1}% above", 100.0 * rel),
            ),
        ),
    ]
}

fn scheme_ordering() -> Outcome {
    let root = repo_root().join("configs");
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let mut config = ExperimentConfig::load(&root.join(format!("{name}.toml"))).unwrap();
        config.output_dir = Some(dir.path().join(name));
        harness::run(&config, 1).unwrap();
        (config, dir.path().join(name))
    };
    let mut notes = Vec::new();
    let mut ok = true;

    let (pm, pm_dir) = run("energy_vs_pm");
    if pm.trials < 200 {
        return Err(format!("P_m sweep uses only {} contexts", pm.trials));
    }
    let mut pointwise = 0usize;
    for &p in &pm.resolved_sweep().values {
        let params = SystemParams {
            primary_power_w: p,
            ..pm.system.clone()
        };
        for e in compare_schemes(&sample_contexts(&params, pm.seed, pm.trials).unwrap()).unwrap() {
            let h = e.get(Scheme::HybridSic);
            if h > e.get(Scheme::FixedOrder) || h > e.get(Scheme::HybridSicBetaOne) {
                ok = false;
            }
            pointwise += 1;
        }
    }
    let hybrid = read_means(&pm_dir.join("hybrid_sic.csv"));
    let oma = read_means(&pm_dir.join("oma.csv"));
    let below_oma = hybrid.iter().zip(&oma).all(|(h, o)| h <= o);
    ok &= below_oma;
    notes.push(format!("{pointwise} pointwise dominance checks, mean below OMA: {below_oma}"));

    let monotone = |v: &[f64], rising: bool| {
        v.windows(2)
            .all(|w| if rising { w[1] >= w[0] / 1.01 } else { w[1] <= w[0] * 1.01 })
    };
    let (_, l_dir) = run("energy_vs_L");
    let by_l = read_means(&l_dir.join("hybrid_sic.csv"));
    let (_, d_dir) = run("energy_vs_deadline");
    let by_tau = read_means(&d_dir.join("hybrid_sic.csv"));
    let (l_ok, tau_ok) = (monotone(&by_l, true), monotone(&by_tau, false));
    ok &= l_ok && tau_ok;
    let show = |v: &[f64]| v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ");
    notes.push(format!("rising in L: {l_ok} [{}]", show(&by_l)));
    notes.push(format!("falling in tau_n: {tau_ok} [{}]", show(&by_tau)));
    check(ok, notes.join("; "))
}

fn small_config(id: ExperimentId) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(id, 77);
    c.trials = if id.is_training() { 2 } else { 12 };
    c.hyper.episodes = 2;
    c.hyper.steps_per_episode = 30;
    c.hyper.batch = 8;
    c.hyper.calibration_steps = 10;
    if id == ExperimentId::ConvergenceUsers {
        c.sweep.push(Sweep {
            name: "num_users".into(),
            values: vec![4.0, 6.0],
        });
    }
    if id == ExperimentId::SolverValidate {
        c.sweep.push(Sweep {
            name: "resolution".into(),
            values: vec![40.0],
        });
    }
    c
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let ids = [
        ExperimentId::ConvergenceLr,
        ExperimentId::ConvergenceUsers,
        ExperimentId::EpsilonPolicy,
        ExperimentId::EnergyVsPm,
        ExperimentId::EnergyVsL,
        ExperimentId::EnergyVsDeadline,
        ExperimentId::SolverValidate,
    ];
    let dir = tempfile::tempdir().unwrap();
    let mut files = 0usize;
    let mut differing = Vec::new();
    for id in ids {
        let mut outputs = Vec::new();
        for (run, threads) in [(0, 1), (1, 2)] {
            let mut config = small_config(id);
            config.output_dir = Some(dir.path().join(format!("{}_{run}", id.name())));
            harness::run(&config, threads).unwrap();
            outputs.push(csv_bytes(config.output_dir.as_ref().unwrap()));
        }
        files += outputs[0].len();
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            differing.push(id.name());
        }
    }
    check(
        differing.is_empty(),
        format!("7 experiments, {files} CSVs compared across re-runs on 1 and 2 threads; differing: {differing:?}"),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    // `cargo test -- --list` and filters come from the test runner; honour the listing request only.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let criteria: Vec<Criterion> = vec![
        ("1 solver optimality against grid oracle", solver_optimality),
        ("2 KKT residuals of hybrid branches", kkt_suite),
        ("3 energy non-increasing in dedicated slot", slot_monotonicity),
        ("4 interior beta stationarity", beta_stationarity),
        ("5 two-window energy gap non-negative", two_window_gap),
        ("6 Lambert W residual", lambert_residual),
        ("7 analytic gradients", gradient_check),
    ];
    let mut results: Vec<(String, Outcome, f64)> = Vec::new();
    let mut record = |name: String, f: &mut dyn FnMut() -> Outcome, secs: Option<f64>| {
        let start = Instant::now();
        let outcome = guarded(f);
        let secs = secs.unwrap_or_else(|| start.elapsed().as_secs_f64());
        let tag = if outcome.is_ok() { "PASS" } else { "FAIL" };
        let detail = outcome.as_ref().unwrap_or_else(|e| e);
        println!("[{tag}] criterion {name}: {detail} ({secs:.1} s)");
        results.push((name, outcome, secs));
    };
    for (name, f) in criteria {
        record(name.to_string(), &mut || f(), None);
    }
    let start = Instant::now();
    let trained = catch_unwind(dqn_vs_baselines);
    let secs = Some(start.elapsed().as_secs_f64());
    match trained {
        Ok(parts) => {
            for (name, outcome) in parts {
                let mut once = Some(outcome);
                record(name, &mut || once.take().unwrap(), secs);
            }
        }
        Err(_) => record("8 DQN vs baselines".into(), &mut || Err("training panicked".into()), secs),
    }
    record("9 scheme ordering and trends".into(), &mut || scheme_ordering(), None);
    record("10 byte-identical re-runs".into(), &mut || determinism(), None);

    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, o, _)| o.is_err())
        .map(|(n, _, _)| n.as_str())
        .collect();
    println!("acceptance: {} of {} checks passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}

