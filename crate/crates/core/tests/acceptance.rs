//! Acceptance criteria 1-11. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line whatever the outcome; exits non-zero if any
//! criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use procfair::data::{dataset_dp, generate_synthetic, SyntheticConfig};
use procfair::explain::{exact_shapley, kernel_shap, Background, ShapBudget};
use procfair::fairness::{mmd_permutation_test, MmdConfig};
use procfair::explain::{ExplanationSet, Method};
use procfair::harness::{
    compare_scenarios, is_timing, metric, p_sweep, prepare, presets, run_once, run_scenario, sensitive_attributions,
    ResultBundle, ScenarioConfig, METRICS,
};
use procfair::linexp::{nearest, sweep_p_ws};
use procfair::model::{mlp_init, GradTarget, Scorer};
use procfair::stats::{ks_uniform, spearman};
use procfair::train::{train, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

#[derive(Default)]
struct Ctx {
    bundles: BTreeMap<String, ResultBundle>,
}

impl Ctx {
    fn run(&mut self, cfg: ScenarioConfig) -> &ResultBundle {
        let id = cfg.id.clone();
        let bundle = run_scenario(&cfg).expect("scenario runs");
        for r in &bundle.repetitions {
            if let Some(e) = &r.error {
                panic!("{id} repetition {} failed in {}: {}", r.index, e.stage, e.message);
            }
        }
        self.bundles.insert(id.clone(), bundle);
        &self.bundles[&id]
    }

    fn mean(&self, id: &str, m: &str) -> f64 {
        self.bundles[id].mean(m).unwrap_or(f64::NAN)
    }
}

fn c1_synthetic_statistics(_: &mut Ctx) -> Check {
    let start = Instant::now();
    let dp65 = dataset_dp(&generate_synthetic(&SyntheticConfig::new(0.65, 0)).unwrap()).unwrap();
    let dp50 = dataset_dp(&generate_synthetic(&SyntheticConfig::new(0.5, 0)).unwrap()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    ensure(
        (0.275..=0.315).contains(&dp65) && dp50 <= 0.02 && secs < 5.0,
        format!("DP(p=0.65)={dp65:.4} in [0.275, 0.315], DP(p=0.5)={dp50:.4} <= 0.02, {secs:.2}s < 5s"),
    )
}

fn c2_bce_vs_procedural(ctx: &mut Ctx) -> Check {
    let start = Instant::now();
    ctx.run(presets::synth65_bce());
    ctx.run(presets::synth65_procedural());
    let secs = start.elapsed().as_secs_f64();
    let (acc_b, gpf_b, dp_b) =
        (ctx.mean("synth65_bce", "accuracy"), ctx.mean("synth65_bce", "gpf_fae"), ctx.mean("synth65_bce", "dp"));
    let (acc_p, gpf_p, dp_p) = (
        ctx.mean("synth65_procedural", "accuracy"),
        ctx.mean("synth65_procedural", "gpf_fae"),
        ctx.mean("synth65_procedural", "dp"),
    );
    ensure(
        (0.866..=0.906).contains(&acc_b)
            && gpf_b <= 0.15
            && (0.29..=0.39).contains(&dp_b)
            && gpf_p >= 0.90
            && dp_p <= 0.28
            && acc_p >= 0.85
            && secs < 600.0,
        format!(
            "bce ACC={acc_b:.4} GPF={gpf_b:.4} DP={dp_b:.4}; procedural ACC={acc_p:.4} GPF={gpf_p:.4} DP={dp_p:.4}; {secs:.0}s"
        ),
    )
}

fn c3_unbiased_procedural(ctx: &mut Ctx) -> Check {
    ctx.run(presets::synth50_procedural());
    let (gpf, dp) = (ctx.mean("synth50_procedural", "gpf_fae"), ctx.mean("synth50_procedural", "dp"));
    ensure(gpf >= 0.90 && dp <= 0.05, format!("GPF={gpf:.4} >= 0.90, DP={dp:.4} <= 0.05"))
}

fn c4_inverse(ctx: &mut Ctx) -> Check {
    ctx.run(presets::synth50_inverse());
    ctx.run(presets::synth65_inverse());
    let (gpf6, dp6) = (ctx.mean("synth50_inverse", "gpf_fae"), ctx.mean("synth50_inverse", "dp"));
    let (gpf7, dp7) = (ctx.mean("synth65_inverse", "gpf_fae"), ctx.mean("synth65_inverse", "dp"));
    let metrics = ["dp".to_string(), "gpf_fae".to_string()];
    let b = &ctx.bundles;
    let cmp6 = compare_scenarios(&[b["synth50_procedural"].clone(), b["synth50_inverse"].clone()], &metrics, 0.05).unwrap();
    let cmp7 = compare_scenarios(&[b["synth50_procedural"].clone(), b["synth65_inverse"].clone()], &metrics, 0.05).unwrap();
    let p = |c: &procfair::harness::Comparison, second: &str, m: &str| c.get("synth50_procedural", second, m).unwrap().p_value;
    let pv = [
        p(&cmp6, "synth50_inverse", "dp"),
        p(&cmp6, "synth50_inverse", "gpf_fae"),
        p(&cmp7, "synth65_inverse", "dp"),
        p(&cmp7, "synth65_inverse", "gpf_fae"),
    ];
    ensure(
        gpf6 <= 0.10 && gpf7 <= 0.10 && dp6 >= 0.08 && dp7 >= 0.30 && pv.iter().all(|&v| v < 0.05),
        format!(
            "alpha=-0.40 p=0.5: GPF={gpf6:.4} DP={dp6:.4}; alpha=-0.02 p=0.65: GPF={gpf7:.4} DP={dp7:.4}; \
             rank-sum vs procedural p=0.5 (dp, gpf): {:.2e} {:.2e} / {:.2e} {:.2e}",
            pv[0], pv[1], pv[2], pv[3]
        ),
    )
}

fn c5_p_sweep(_: &mut Ctx) -> Check {
    let preset = presets::p_sweep_procedural();
    let points = p_sweep(&preset.base, preset.p).unwrap();
    let ps: Vec<f64> = points.iter().map(|p| p.p).collect();
    let dps: Vec<f64> = points.iter().map(|p| p.dp).collect();
    let rho = spearman(&ps, &dps).unwrap();
    let min_gpf = points.iter().map(|p| p.gpf_fae).fold(f64::INFINITY, f64::min);
    ensure(
        points.len() == 20 && rho >= 0.9 && min_gpf >= 0.8,
        format!("{} points, Spearman rho(p, DP)={rho:.4} >= 0.9, min GPF={min_gpf:.4} >= 0.8", points.len()),
    )
}

fn c6_ws_sweep(_: &mut Ctx) -> Check {
    let preset = presets::ws_sweep_linear();
    let grid = sweep_p_ws(preset.p, preset.ws, &preset.config, preset.seed).unwrap();
    let ws = &grid.ws_values;
    let dp: Vec<f64> = grid.cells.iter().map(|c| c.dp).collect();
    let gpf: Vec<f64> = grid.cells.iter().map(|c| c.gpf_fae.unwrap()).collect();
    let argmax = (0..gpf.len()).fold(0, |b, i| if gpf[i] > gpf[b] { i } else { b });
    let argmin = (0..dp.len()).fold(0, |b, i| if dp[i] < dp[b] { i } else { b });
    let zero = nearest(ws, 0.0);
    let gpf_ok = gpf[argmax] == gpf[zero] && gpf.iter().enumerate().all(|(i, &g)| i == zero || g < gpf[zero]);
    let rising = (argmin..dp.len() - 1).all(|i| dp[i] <= dp[i + 1]);
    // walking from w_s = 0 towards -5: down to the minimum, then up again
    let falling = (0..argmin).all(|i| dp[i] >= dp[i + 1]);
    let u_shape = argmin > 0 && dp[0] > dp[argmin] && dp[zero] > dp[argmin];
    ensure(
        gpf_ok && ws[argmin] < 0.0 && rising && falling && u_shape,
        format!(
            "GPF argmax at w_s={:.2} (nearest 0: {:.2}, GPF={:.3}, next best {:.3}); DP argmin at w_s={:.2} (DP={:.4}); \
             non-decreasing after argmin: {rising}; U-shape over w_s<0: {} (DP at -5={:.4}, at 0={:.4})",
            ws[argmax],
            ws[zero],
            gpf[zero],
            gpf.iter().enumerate().filter(|(i, _)| *i != zero).map(|(_, g)| *g).fold(0.0, f64::max),
            ws[argmin],
            dp[argmin],
            falling && u_shape,
            dp[0],
            dp[zero]
        ),
    )
}

fn c7_dp_regularized(ctx: &mut Ctx) -> Check {
    let cfg = presets::synth65_dp_regularized();
    ctx.run(cfg.clone());
    let (dp, gpf) = (ctx.mean("synth65_dp_regularized", "dp"), ctx.mean("synth65_dp_regularized", "gpf_fae"));
    let mut gaps = Vec::new();
    for rep in 0..3 {
        let seed = cfg.master_seed + rep;
        let (model, _, _, prep) = run_once(&cfg, seed).unwrap();
        let attr = sensitive_attributions(&model, &prep.test, &prep.eval_pairs, &prep.background, cfg.eval.shap_budget, seed)
            .unwrap();
        gaps.push((attr.summary.mean_disadvantaged, attr.summary.mean_advantaged));
    }
    let dis = gaps.iter().map(|g| g.0).sum::<f64>() / gaps.len() as f64;
    let adv = gaps.iter().map(|g| g.1).sum::<f64>() / gaps.len() as f64;
    ensure(
        dp <= 0.10 && gpf <= 0.15 && dis > adv,
        format!("DP={dp:.4} <= 0.10, GPF={gpf:.4} <= 0.15; mean SHAP(xs) disadvantaged={dis:.4} > advantaged={adv:.4} (3 models)"),
    )
}

/// Shapley values by direct enumeration of feature orderings.
fn brute_shapley<M: Scorer>(model: &M, x: &[f64], bg: &[Vec<f64>]) -> Vec<f64> {
    let d = x.len();
    let value = |mask: usize| {
        bg.iter()
            .map(|b| {
                let z: Vec<f64> = (0..d).map(|j| if mask >> j & 1 == 1 { x[j] } else { b[j] }).collect();
                model.logit(&z)
            })
            .sum::<f64>()
            / bg.len() as f64
    };
    let mut phi = vec![0.0; d];
    let mut perm: Vec<usize> = (0..d).collect();
    let mut count = 0usize;
    permutations(&mut perm, 0, &mut |order| {
        let mut mask = 0;
        let mut prev = value(0);
        for &j in order {
            mask |= 1 << j;
            let next = value(mask);
            phi[j] += next - prev;
            prev = next;
        }
        count += 1;
    });
    phi.iter().map(|v| v / count as f64).collect()
}

fn permutations(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, f);
        v.swap(k, i);
    }
}

fn c8_oracles(_: &mut Ctx) -> Check {
    let bce = common::bce_check(0..40);
    let gpf_logit = common::gpf_check(GradTarget::Logit, 100..160);
    let gpf_prob = common::gpf_check(GradTarget::Probability, 100..160);
    let dp = common::dp_proxy_check(200..240);
    let grads = [&bce, &gpf_logit, &gpf_prob, &dp];
    let grad_ok = grads.iter().all(|c| c.checked >= 20 && c.worst < 1e-4);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut shap_gap, mut brute_gap, mut efficiency): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut instances = 0;
    for d in 2..=6 {
        let model = mlp_init(d, 8, d as u64).unwrap();
        let bg_rows: Vec<Vec<f64>> = (0..6).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let bg = Background::from_rows(&bg_rows).unwrap();
        for _ in 0..4 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let exact = exact_shapley(&model, &x, &bg).unwrap();
            let kernel = kernel_shap(&model, &x, &bg, ShapBudget::Exhaustive, 0).unwrap();
            let brute = brute_shapley(&model, &x, &bg_rows);
            for j in 0..d {
                shap_gap = shap_gap.max((exact.phi[j] - kernel.phi[j]).abs());
                brute_gap = brute_gap.max((exact.phi[j] - brute[j]).abs());
            }
            let total = exact.base_value + exact.phi.iter().sum::<f64>();
            efficiency = efficiency.max((total - model.logit(&x)).abs());
            instances += 1;
        }
    }
    ensure(
        grad_ok && shap_gap <= 1e-6 && brute_gap <= 1e-9 && efficiency <= 1e-9,
        format!(
            "FD worst rel. error (configs): BCE {:.1e} ({}), L_GPF logit {:.1e} ({}), L_GPF prob {:.1e} ({}), DP proxy {:.1e} ({}); \
             {instances} SHAP instances d=2..6: |kernel-exact| {shap_gap:.1e}, |exact-enumeration| {brute_gap:.1e}, efficiency {efficiency:.1e}",
            bce.worst, bce.checked, gpf_logit.worst, gpf_logit.checked, gpf_prob.worst, gpf_prob.checked, dp.worst, dp.checked
        ),
    )
}

fn c9_calibration(_: &mut Ctx) -> Check {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let sample = |rng: &mut ChaCha8Rng, n: usize| {
        let values: Vec<f64> = (0..n * 3).map(|_| normal.sample(rng)).collect();
        ExplanationSet::new(values, 3, Method::KernelShap, (0..n).collect(), 0.0).unwrap()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pvals: Vec<f64> = (0..200)
        .map(|trial| {
            let (a, b) = (sample(&mut rng, 30), sample(&mut rng, 30));
            mmd_permutation_test(&a, &b, &MmdConfig { seed: trial, ..Default::default() }).unwrap().p_value
        })
        .collect();
    let ks = ks_uniform(&pvals);
    let a = sample(&mut rng, 30);
    let same = mmd_permutation_test(&a, &a.clone(), &MmdConfig::default()).unwrap().p_value;
    ensure(ks <= 0.1 && same == 1.0, format!("KS distance of 200 null p-values {ks:.4} <= 0.1; identical sets p={same}"))
}

fn c10_overhead(_: &mut Ctx) -> Check {
    let prep = prepare(&presets::synth65_bce(), 0).map_err(|e| e.message).unwrap();
    let time = |cfg: &TrainConfig| {
        let start = Instant::now();
        train(&prep.train, cfg).unwrap();
        start.elapsed().as_secs_f64()
    };
    let (mut bce, mut proc) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..3 {
        bce = bce.min(time(&TrainConfig::bce_only(0)));
        proc = proc.min(time(&TrainConfig::procedural(0.5, 0)));
    }
    let ratio = proc / bce;
    ensure(
        ratio <= 3.0,
        format!("{} training rows: bce {bce:.2}s, procedural {proc:.2}s, ratio {ratio:.2} <= 3 (min of 3 interleaved runs)", prep.train.n_rows()),
    )
}

fn c11_determinism(ctx: &mut Ctx) -> Check {
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (id, bundle) in &ctx.bundles {
        let cfg = ScenarioConfig { repetitions: 2, ..bundle.scenario.clone() };
        let rerun = run_scenario(&cfg).unwrap();
        for (a, b) in bundle.repetitions.iter().zip(&rerun.repetitions) {
            let (ra, rb) = (a.report.as_ref().unwrap(), b.report.as_ref().unwrap());
            for m in METRICS.iter().filter(|m| !is_timing(m)) {
                compared += 1;
                let (x, y) = (metric(ra, m), metric(rb, m));
                if x.map(f64::to_bits) != y.map(f64::to_bits) {
                    mismatches.push(format!("{id}#{} {m}", a.index));
                }
            }
        }
    }
    let cfg = ScenarioConfig { repetitions: 3, ..presets::synth65_fake_sensitive_bce() };
    let first = run_scenario(&cfg).unwrap().metric_payload();
    let second = run_scenario(&cfg).unwrap().metric_payload();
    ensure(
        mismatches.is_empty() && compared > 0 && first == second,
        format!(
            "{compared} metric values from {} scenario reruns bit-identical ({} mismatches); full synth65_fake_sensitive_bce rerun payload identical: {}",
            ctx.bundles.len(),
            mismatches.len(),
            first == second
        ),
    )
}

fn main() {
    let criteria: [(u8, &str, fn(&mut Ctx) -> Check); 11] = [
        (1, "synthetic dataset statistics", c1_synthetic_statistics),
        (2, "BCE vs procedural on p=0.65", c2_bce_vs_procedural),
        (3, "procedural on p=0.5", c3_unbiased_procedural),
        (4, "inverse optimization", c4_inverse),
        (5, "bias-level sweep trend", c5_p_sweep),
        (6, "sensitive-weight sweep shape", c6_ws_sweep),
        (7, "DP-regularized contrast", c7_dp_regularized),
        (8, "numerical oracles", c8_oracles),
        (9, "permutation-test calibration", c9_calibration),
        (10, "procedural training overhead", c10_overhead),
        (11, "determinism", c11_determinism),
    ];
    let mut ctx = Ctx::default();
    let mut failed = 0;
    for (n, name, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(&mut ctx))).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag} {name} [{secs:.1}s]: {detail}");
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
