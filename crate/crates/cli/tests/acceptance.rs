//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs as part of `cargo test`. A failing criterion is reported but only
//! turns into a non-zero exit when `GLLE_ACCEPTANCE_STRICT=1`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use glle::gaussian::{condition, log_pdf, GaussianParams};
use glle::glle_direct::{direct_params, sample_direct, DirectMean};
use glle::glle_em::{
    e_step, fit_em, full_cov_gradient, m_step_sigma, relaxed_objective, run_em, sample_posterior, EmConfig,
    SecondMoment,
};
use glle::lle::{embed_weights, embedding_matrix, lle_pipeline, reconstruct_all, scatter_weights, solve_weights};
use glle::manifold_data::{s_curve, severed_bowl, swiss_roll};
use glle::metrics::{neighborhood_preservation, procrustes_residual};
use glle::neighborhood::build_knn;
use glle::{Dataset, Embedding};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 1000;
const K: usize = 10;
const SCALES: [f64; 5] = [0.01, 0.1, 1.0, 5.0, 10.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn uniform(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_pd(k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = uniform(k, k, rng);
    &b * b.transpose() + DMatrix::identity(k, k) * 0.2
}

fn datasets(n: usize) -> Vec<Dataset> {
    let mut hole = swiss_roll(n, true, 0).unwrap();
    hole.name = "swiss-roll-hole".into();
    vec![s_curve(n, 0).unwrap(), swiss_roll(n, false, 0).unwrap(), hole, severed_bowl(n, 0).unwrap()]
}

#[derive(Clone, Copy, Debug)]
enum Method {
    Lle,
    Em,
    Direct,
}

/// Prepared state for one dataset: the LLE reference, the EM fit and the
/// direct-sampling covariances.
struct Fitted {
    ds: Dataset,
    lle: glle::lle::LleOutput,
    em: glle::glle_em::EmFit,
    direct: glle::glle_direct::DirectParams,
}

impl Fitted {
    fn new(ds: Dataset) -> Self {
        let lle = lle_pipeline(&ds, K, 2, 1e-3).unwrap();
        let em = fit_em(&ds, &lle.graph, &EmConfig::default()).unwrap();
        let direct = direct_params(&ds, &lle, 1e-6).unwrap();
        Self { ds, lle, em, direct }
    }

    fn embed(&self, method: Method, seed: u64, scale: f64) -> glle::Result<Embedding> {
        let w = match method {
            Method::Lle => return Ok(self.lle.embedding.clone()),
            Method::Em => sample_posterior(&self.em.state, scale, seed)?,
            Method::Direct => sample_direct(&self.direct, scale, seed, DirectMean::Lle)?,
        };
        embed_weights(&w, &self.lle.graph, 2)
    }
}

fn kkt_weights(a: &DMatrix<f64>) -> DVector<f64> {
    let k = a.nrows();
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    kkt.view_mut((0, 0), (k, k)).copy_from(&(a * 2.0));
    for i in 0..k {
        kkt[(i, k)] = 1.0;
        kkt[(k, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    kkt.lu().solve(&rhs).unwrap().rows(0, k).into_owned()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for inst in 0..100 {
        let g = random_pd(1 + inst % 6, &mut rng);
        let w = solve_weights(&g, 0.0).unwrap();
        worst = worst.max((&w - kkt_weights(&g)).amax());
        worst_sum = worst_sum.max((w.sum() - 1.0).abs());
    }
    let ds = swiss_roll(N, false, 0).unwrap();
    let w = reconstruct_all(&ds, &build_knn(&ds, K).unwrap(), 1e-3).unwrap();
    for i in 0..N {
        worst_sum = worst_sum.max((w.row(i).sum() - 1.0).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-9 && worst_sum < 1e-10 && secs < 1.0,
        format!("max |w - w_kkt| {worst:.2e}, max |1ᵀw - 1| {worst_sum:.2e}, {secs:.2}s"),
    )
}

fn constraint_error(y: &DMatrix<f64>) -> (f64, f64) {
    let n = y.nrows() as f64;
    let cov = (y.transpose() * y / n - DMatrix::identity(y.ncols(), y.ncols())).amax();
    let mean = (0..y.ncols()).map(|c| (y.column(c).sum() / n).abs()).fold(0.0, f64::max);
    (cov, mean)
}

fn criterion_2(fits: &[Fitted]) -> Outcome {
    let start = Instant::now();
    let (mut cov, mut mean): (f64, f64) = (0.0, 0.0);
    for f in fits {
        for m in [Method::Lle, Method::Em, Method::Direct] {
            let emb = f.embed(m, 0, 1.0).unwrap();
            let (c, u) = constraint_error(&emb.coords);
            cov = cov.max(c);
            mean = mean.max(u);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        cov < 1e-8 && mean < 1e-8 && secs < 600.0,
        format!("12 runs: max |(1/n)YᵀY - I| {cov:.2e}, max |column mean| {mean:.2e}, {secs:.1}s"),
    )
}

fn criterion_3(fit: &Fitted) -> Outcome {
    let m = embedding_matrix(&scatter_weights(&fit.lle.weights, &fit.lle.graph).unwrap()).unwrap();
    let m1 = m.mul_vec(&DVector::from_element(N, 1.0)).amax();
    let ones = DVector::from_element(N, 1.0 / (N as f64).sqrt());
    let y = &fit.lle.embedding.coords;
    let corr = (0..2).map(|c| (y.column(c).dot(&ones) / y.column(c).norm()).abs()).fold(0.0, f64::max);
    outcome(m1 < 1e-9 && corr < 1e-6, format!("‖M1‖∞ {m1:.2e}, max |cos(Y_c, 1)| {corr:.2e}"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_ratio: f64 = 0.0;
    for inst in 0..50 {
        let b = uniform(4, 4, &mut rng);
        let cov = &b * b.transpose() + DMatrix::identity(4, 4) * 0.2;
        let mean = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
        let joint = GaussianParams::new(mean.clone(), cov.clone()).unwrap();
        let first = 1 + inst % 3;
        let x1 = DVector::from_fn(first, |_, _| rng.gen_range(-1.0..1.0));
        let cond = condition(&joint, first, &x1).unwrap();
        let marginal = GaussianParams::new(
            mean.rows(0, first).into_owned(),
            cov.view((0, 0), (first, first)).into_owned(),
        )
        .unwrap();
        let x2 = DVector::from_fn(4 - first, |_, _| rng.gen_range(-1.0..1.0));
        let mut full = DVector::zeros(4);
        full.rows_mut(0, first).copy_from(&x1);
        full.rows_mut(first, 4 - first).copy_from(&x2);
        let ratio = log_pdf(&full, &joint).unwrap() - log_pdf(&x1, &marginal).unwrap();
        worst_ratio = worst_ratio.max((ratio - log_pdf(&x2, &cond).unwrap()).abs());
    }
    let mut worst_e: f64 = 0.0;
    for _ in 0..50 {
        let (d, k) = (3, 5);
        let nb = uniform(d, k, &mut rng);
        let omega = random_pd(k, &mut rng);
        let mu = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let mut cov = DMatrix::zeros(d + k, d + k);
        cov.view_mut((0, 0), (d, d)).copy_from(&(&nb * &omega * nb.transpose()));
        cov.view_mut((0, d), (d, k)).copy_from(&(&nb * &omega));
        cov.view_mut((d, 0), (k, d)).copy_from(&(omega.transpose() * nb.transpose()));
        cov.view_mut((d, d), (k, k)).copy_from(&omega);
        let cov = (&cov + cov.transpose()) * 0.5;
        let mut mean = DVector::zeros(d + k);
        mean.rows_mut(0, d).copy_from(&mu);
        let oracle = condition(&GaussianParams::new(mean, cov).unwrap(), d, &x).unwrap();
        let s = e_step(&x, &nb, &mu, &omega, SecondMoment::Standard).unwrap();
        worst_e = worst_e.max((&s.mean - &oracle.mean).amax()).max((&s.cov - &oracle.cov).amax());
    }
    outcome(
        worst_ratio < 1e-6 && worst_e < 1e-9,
        format!("density-ratio gap {worst_ratio:.2e}, e_step vs condition {worst_e:.2e}"),
    )
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        }
    }
    0.5 * (lo + hi)
}

fn criterion_5() -> Outcome {
    let ds = swiss_roll(500, false, 0).unwrap();
    let g = build_knn(&ds, K).unwrap();
    let (_, state, trace) = run_em(&ds, &g, &EmConfig::default()).unwrap();
    let drop = trace.worst_decrease();
    let relaxed_drop = trace
        .records
        .windows(2)
        .map(|w| w[0].relaxed - w[1].relaxed)
        .fold(0.0, f64::max);
    let positive = state.sigmas.iter().all(|&s| s > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for inst in 0..100 {
        let k = 4 + inst % 7;
        let nb = uniform(3, k, &mut rng);
        let s1 = random_pd(3, &mut rng) * rng.gen_range(0.01..3.0);
        let s2 = random_pd(k, &mut rng) * rng.gen_range(0.01..3.0);
        let sigma = m_step_sigma(&nb, &s1, &s2);
        let oracle = golden_max(|t| relaxed_objective(&nb, &s1, &s2, t.exp()), -20.0, 20.0).exp();
        worst = worst.max(((sigma - oracle) / oracle).abs());
    }
    outcome(
        drop <= 1e-7 && positive && worst < 1e-6,
        format!(
            "{} iterations, largest objective decrease {drop:.2e} (bare relaxed term: {relaxed_drop:.2e}), \
             σ > 0: {positive}, M-step vs golden section {worst:.2e}",
            trace.records.len()
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let objective = |lambda: &DMatrix<f64>, nb: &DMatrix<f64>, s1: &DMatrix<f64>, s2: &DMatrix<f64>| {
        let omega = lambda.clone().try_inverse().unwrap();
        let p = nb * &omega * nb.transpose();
        let p_inv = p.clone().try_inverse().unwrap();
        -0.5 * p.determinant().ln() - 0.5 * (p_inv * s1).trace() + 0.5 * lambda.determinant().ln()
            - 0.5 * (lambda * s2).trace()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let nb = uniform(3, 4, &mut rng);
        let omega = random_pd(4, &mut rng);
        let s1 = random_pd(3, &mut rng);
        let s2 = random_pd(4, &mut rng);
        let lambda = omega.clone().try_inverse().unwrap();
        let h = 1e-5;
        let fd = DMatrix::from_fn(4, 4, |i, j| {
            let mut up = lambda.clone();
            let mut down = lambda.clone();
            up[(i, j)] += h;
            down[(i, j)] -= h;
            (objective(&up, &nb, &s1, &s2) - objective(&down, &nb, &s1, &s2)) / (2.0 * h)
        });
        let g = full_cov_gradient(&omega, &nb, &s1, &s2).unwrap();
        worst = worst.max((g - &fd).norm() / fd.norm());
    }
    outcome(worst < 1e-5, format!("max relative error vs central differences {worst:.2e}"))
}

fn criterion_7(fit: &Fitted) -> Outcome {
    let emb = fit.embed(Method::Direct, 0, 1e-6).unwrap();
    let r = procrustes_residual(&fit.lle.embedding.coords, &emb.coords).unwrap();
    let ev = &fit.lle.embedding.eigenvalues;
    outcome(
        r < 1e-2,
        format!(
            "residual {r:.3e} at scale 1e-6 (LLE eigenvalues {:.2e}, {:.2e})",
            ev[0], ev[1]
        ),
    )
}

fn criterion_8(fits: &[Fitted]) -> Outcome {
    let start = Instant::now();
    let threshold = 10.0 * K as f64 / (N - 1) as f64;
    let mut lowest = (f64::INFINITY, String::new());
    for f in fits {
        for m in [Method::Em, Method::Direct] {
            for seed in 0..4 {
                let emb = f.embed(m, seed, 1.0).unwrap();
                let p = neighborhood_preservation(&f.ds, &emb, K).unwrap();
                if p < lowest.0 {
                    lowest = (p, format!("{} {m:?} seed {seed}", f.ds.name));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        lowest.0 >= threshold && secs < 900.0,
        format!(
            "lowest preservation {:.4} ({}) vs threshold {threshold:.4}, {secs:.1}s",
            lowest.0, lowest.1
        ),
    )
}

fn criterion_9(fits: &[Fitted]) -> Outcome {
    let mut worst = (0.0, String::new());
    let mut completed = true;
    for f in fits {
        for m in [Method::Em, Method::Direct] {
            let mut pres = Vec::new();
            for a in SCALES {
                match f.embed(m, 0, a).and_then(|e| neighborhood_preservation(&f.ds, &e, K)) {
                    Ok(p) => pres.push(p),
                    Err(_) => completed = false,
                }
            }
            if pres.len() == SCALES.len() {
                let gap = (pres[4] - pres[2]).abs();
                if gap >= worst.0 {
                    worst = (gap, format!("{} {m:?}", f.ds.name));
                }
            }
        }
    }
    outcome(
        completed && worst.0 <= 0.25,
        format!("all runs completed: {completed}, largest |P(a=10) - P(a=1)| {:.4} ({})", worst.0, worst.1),
    )
}

fn run_cli(dir: &Path, threads: &str, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_glle"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env("RAYON_NUM_THREADS", threads)
        .env("RUST_LOG", "warn")
        .stdout(std::process::Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn criterion_10() -> Outcome {
    let runs: [&[&str]; 4] = [
        &["generate", "--dataset", "severed-bowl", "--n", "1000", "--seed", "3"],
        &["embed", "--method", "glle-em", "--dataset", "swiss-roll", "--n", "1000", "--generations", "2"],
        &["sweep", "--method", "glle-direct", "--dataset", "s-curve", "--n", "1000", "--scales", "0.1,10"],
        &["compare", "--method", "glle-direct", "--dataset", "swiss-roll-hole", "--n", "1000", "--generations", "2"],
    ];
    let root = tempfile::tempdir().unwrap();
    let mut files = 0;
    let mut mismatches = Vec::new();
    for (r, args) in runs.iter().enumerate() {
        let dirs: Vec<_> = ["1", "1", "4"]
            .iter()
            .enumerate()
            .map(|(i, threads)| {
                let d = root.path().join(format!("run{r}_{i}"));
                std::fs::create_dir_all(&d).unwrap();
                (d, *threads)
            })
            .collect();
        for (d, threads) in &dirs {
            if !run_cli(d, threads, args) {
                return outcome(false, format!("command {args:?} failed"));
            }
        }
        let mut names: Vec<_> = std::fs::read_dir(&dirs[0].0)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        for name in names {
            files += 1;
            let reference = std::fs::read(dirs[0].0.join(&name)).unwrap();
            for (d, _) in &dirs[1..] {
                if std::fs::read(d.join(&name)).ok().as_ref() != Some(&reference) {
                    mismatches.push(name.to_string_lossy().into_owned());
                }
            }
        }
    }
    outcome(
        mismatches.is_empty() && files > 0,
        format!("{files} output files byte-identical across reruns and 1 vs 4 threads; mismatches {mismatches:?}"),
    )
}

fn main() {
    // Accept and ignore libtest flags such as --nocapture.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if filter.iter().any(|f| !"acceptance".contains(f.as_str())) {
        return;
    }
    let start = Instant::now();
    let fits: Vec<Fitted> = datasets(N).into_iter().map(Fitted::new).collect();
    let swiss = &fits[1];
    let results = [
        ("LLE weights match the KKT oracle", criterion_1()),
        ("embedding constraints", criterion_2(&fits)),
        ("null-space handling", criterion_3(swiss)),
        ("Gaussian conditioning oracles", criterion_4()),
        ("EM sanity", criterion_5()),
        ("full-covariance gradient", criterion_6()),
        ("direct-sampling small-scale limit", criterion_7(swiss)),
        ("generative neighborhood preservation", criterion_8(&fits)),
        ("scale-sweep robustness", criterion_9(&fits)),
        ("CLI determinism", criterion_10()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("{tag} criterion {:>2} {name}: {}", i + 1, o.detail);
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 && std::env::var("GLLE_ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}
