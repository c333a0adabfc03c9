//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line.

use std::ffi::OsString;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use minhgr::cli::{run, EXIT_NOT_TIGHT, EXIT_OK};
use minhgr::distributions::io::write_joint_csv;
use minhgr::distributions::{
    additive_fixture, copy_fixture, independent_uniform_fixture, nonadditive_fixture,
    pairwise_from_joint, product_joint, random_joint, AlphabetSpec, Dataset, DiscreteJoint,
};
use minhgr::gaussian::{discretize_bivariate_gaussian, min_hgr_gaussian, GaussianMoments};
use minhgr::hgr::{hgr_binary, hgr_svd, pearson, GenericJoint};
use minhgr::lowerbound::{
    design_matrix, gamma_lb_closed, gamma_lb_iterative, lower_bound_closed, lsq_objective,
    pseudoinverse_identities, rho_lb, QdSystem,
};
use minhgr::tightness::{
    check_tightness, construct_additive, near_uniform_joints, Verdict, TIGHT_TOL,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn spec(p: usize, m: usize) -> AlphabetSpec {
    AlphabetSpec::new(p, m).unwrap()
}

fn cli(args: &[&str]) -> (i32, String) {
    let argv: Vec<OsString> = std::iter::once("minhgr")
        .chain(args.iter().copied())
        .map(Into::into)
        .collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap())
}

fn results(stdout: &str) -> Value {
    let v: Value = serde_json::from_str(stdout).expect("report is JSON");
    v["results"].clone()
}

fn num(v: &Value) -> f64 {
    v.as_f64().expect("numeric field")
}

fn write_joint(dir: &Path, name: &str, j: &DiscreteJoint) -> String {
    let path = dir.join(name);
    write_joint_csv(std::fs::File::create(&path).unwrap(), j).unwrap();
    path.to_str().unwrap().to_owned()
}

/// `gamma` by ordinary normal equations in the reduced basis
/// `(1, [X_i = k] for k >= 1)`, which spans the same functions as the
/// one-hot encoding but has full rank on a full-support joint.
fn gamma_normal_equations(j: &DiscreteJoint) -> f64 {
    let s = j.spec();
    let (p, m) = (s.p(), s.m());
    let n = 1 + p * (m - 1);
    let mut g = DMatrix::<f64>::zeros(n, n);
    let mut h = DVector::<f64>::zeros(n);
    for x in 0..j.x_states() {
        let mut v = DVector::<f64>::zeros(n);
        v[0] = 1.0;
        for i in 0..p {
            let k = s.label(x, i);
            if k > 0 {
                v[1 + i * (m - 1) + k - 1] = 1.0;
            }
        }
        let px = j.prob(x, 0) + j.prob(x, 1);
        g += &v * v.transpose() * px;
        h += &v * (0.5 * j.prob(x, 1) - 0.5 * j.prob(x, 0));
    }
    let a = g.lu().solve(&h).expect("full-rank normal equations");
    0.25 - h.dot(&a)
}

/// `sqrt(Var(E[Y | X]) / Var(Y))` computed directly from the table.
fn correlation_ratio(j: &DiscreteJoint) -> f64 {
    let p1: f64 = (0..j.x_states()).map(|x| j.prob(x, 1)).sum();
    let mut between = 0.0;
    for x in 0..j.x_states() {
        let px = j.prob(x, 0) + j.prob(x, 1);
        if px > 0.0 {
            between += px * (j.prob(x, 1) / px - p1).powi(2);
        }
    }
    (between / (p1 * (1.0 - p1))).sqrt()
}

/// Max deviation of `P*(Y=1|x)` from `1/2 + z'w_x` on the support.
fn conditional_error(star: &DiscreteJoint, z: &DVector<f64>) -> f64 {
    let s = star.spec();
    (0..star.x_states())
        .filter(|&x| star.p_x(x) > 0.0)
        .map(|x| {
            let zw: f64 = (0..s.p()).map(|i| z[s.offset(i, s.label(x, i))]).sum();
            (star.prob(x, 1) / star.p_x(x) - 0.5 - zw).abs()
        })
        .fold(0.0, f64::max)
}

fn additive_cases() -> Vec<DiscreteJoint> {
    let specs = [(2, 2), (2, 3), (3, 2), (3, 3)];
    (0..100u64)
        .map(|seed| {
            let (p, m) = specs[seed as usize % 4];
            additive_fixture(spec(p, m), 1000 + seed, seed % 2 == 0)
                .unwrap()
                .joint
        })
        .collect()
}

fn probe_cases() -> Vec<DiscreteJoint> {
    near_uniform_joints(spec(2, 2), 0.01, 100, 0).unwrap()
}

fn random_cases(n: u64, base: u64) -> Vec<DiscreteJoint> {
    let specs = [(1, 2), (2, 2), (2, 3), (3, 2), (3, 3), (1, 4)];
    (0..n)
        .map(|s| {
            let (p, m) = specs[s as usize % 6];
            random_joint(spec(p, m), base + s).unwrap()
        })
        .collect()
}

fn embedded_fixtures() -> Vec<DiscreteJoint> {
    vec![
        nonadditive_fixture(),
        copy_fixture(),
        independent_uniform_fixture(),
    ]
}

fn criterion_1() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let r2 = nonadditive_fixture();
    let path = write_joint(dir.path(), "nonadditive.csv", &r2);

    let gamma_oracle = gamma_normal_equations(&r2);
    let rho_lb_oracle = (1.0 - gamma_oracle / (0.6 * 0.4)).sqrt();
    let rho_m_oracle = correlation_ratio(&r2);
    ensure((gamma_oracle - 0.1775).abs() < 1e-12, || {
        format!("oracle gamma {gamma_oracle}")
    })?;

    let (code, out) = cli(&["lower-bound", "--joint", &path]);
    ensure(code == EXIT_OK, || format!("lower-bound exit {code}"))?;
    let lb = results(&out);
    let (gamma, rho) = (num(&lb["gamma_lb"]), num(&lb["rho_lb"]));
    ensure((gamma - gamma_oracle).abs() <= 1e-9, || {
        format!("gamma {gamma}")
    })?;
    ensure((rho - rho_lb_oracle).abs() <= 1e-9, || {
        format!("rho_lb {rho}")
    })?;

    let (code, out) = cli(&["oracle", "--joint", &path]);
    ensure(code == EXIT_OK, || format!("oracle exit {code}"))?;
    let rho_m = num(&results(&out)["rho"]);
    ensure((rho_m - rho_m_oracle).abs() <= 1e-9, || {
        format!("rho_m {rho_m}")
    })?;

    let (code, out) = cli(&["check-tight", "--joint", &path]);
    ensure(code == EXIT_OK, || format!("check-tight exit {code}"))?;
    let cert = results(&out);
    ensure(cert["verdict"] == "NotTight", || {
        format!("verdict {}", cert["verdict"])
    })?;
    let lp = num(&cert["lp_value"]);
    ensure((lp - 0.6).abs() <= 1e-9, || format!("lp_value {lp}"))?;

    let star = dir.path().join("star.csv");
    let (code, _) = cli(&[
        "construct",
        "--joint",
        &path,
        "--out",
        star.to_str().unwrap(),
    ]);
    ensure(code == EXIT_NOT_TIGHT, || format!("construct exit {code}"))?;
    Ok(format!(
        "gamma={gamma:.10} rho_lb={rho:.10} rho_m={rho_m:.10} lp={lp:.10}"
    ))
}

fn criterion_2() -> Check {
    let mut worst: f64 = 0.0;
    for (n, j) in additive_cases().iter().enumerate() {
        let sys = QdSystem::from_joint(j).map_err(|e| e.to_string())?;
        let cert = check_tightness(&sys, TIGHT_TOL).map_err(|e| e.to_string())?;
        ensure(cert.verdict == Verdict::Tight, || {
            format!("case {n} not tight (lp {})", cert.lp_value)
        })?;
        let star = construct_additive(&cert.z_star, j, TIGHT_TOL).map_err(|e| e.to_string())?;
        let gap = hgr_svd(&star.flatten()).unwrap().rho - rho_lb(&sys).unwrap();
        worst = worst.max(gap.abs());
        ensure(gap.abs() <= 1e-8, || {
            format!("case {n}: hgr - rho_lb = {gap:e}")
        })?;
    }
    Ok(format!("100 tight, max |hgr(P*) - rho_lb| = {worst:.2e}"))
}

fn criterion_3() -> Check {
    let mut cases = embedded_fixtures();
    cases.extend(random_cases(100, 3000));
    let (mut g_worst, mut id_worst): (f64, f64) = (0.0, 0.0);
    for (n, j) in cases.iter().enumerate() {
        let sys = QdSystem::from_joint(j).unwrap();
        let closed = gamma_lb_closed(&sys).unwrap();
        let iter = gamma_lb_iterative(&sys).unwrap().gamma_lb;
        g_worst = g_worst.max((closed - iter).abs());
        ensure((closed - iter).abs() <= 1e-10, || {
            format!("case {n}: {closed} vs {iter}")
        })?;
        let ids = pseudoinverse_identities(&sys).unwrap();
        let p1 = sys.p_y1();
        let dev = (ids.ew_ew - 1.0)
            .abs()
            .max((ids.ew_d - (2.0 * p1 - 1.0)).abs())
            .max(ids.ew_d_prime.abs());
        id_worst = id_worst.max(dev);
        ensure(dev <= 1e-8, || {
            format!("case {n}: identity deviation {dev:e}")
        })?;
    }
    Ok(format!(
        "{} joints, gamma delta {g_worst:.2e}, identity deviation {id_worst:.2e}",
        cases.len()
    ))
}

fn criterion_4() -> Check {
    let s = spec(3, 3);
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let rows: Vec<(Vec<usize>, usize)> = (0..200)
            .map(|_| {
                (
                    (0..3).map(|_| rng.gen_range(0..3)).collect(),
                    rng.gen_range(0..2),
                )
            })
            .collect();
        let data = Dataset::new(s, &rows).unwrap();
        let sys = QdSystem::from_dataset(&data).unwrap();
        let design = design_matrix(&data);
        for _ in 0..10 {
            let z = DVector::from_fn(9, |_, _| rng.gen_range(-2.0..2.0));
            let lhs = lsq_objective(&design, &z).unwrap() / 200.0;
            let rhs = sys.objective(&z).unwrap();
            worst = worst.max((lhs - rhs).abs());
            ensure((lhs - rhs).abs() <= 1e-12, || {
                format!("seed {seed}: {lhs} vs {rhs}")
            })?;
        }
    }
    Ok(format!("500 (dataset, z) pairs, max delta {worst:.2e}"))
}

fn criterion_5() -> Check {
    let mut min_slack = f64::INFINITY;
    for (n, j) in random_cases(200, 5000).iter().enumerate() {
        let lb = lower_bound_closed(&QdSystem::from_joint(j).unwrap())
            .unwrap()
            .rho_lb
            .unwrap();
        let rho = hgr_svd(&j.flatten()).unwrap().rho;
        min_slack = min_slack.min(rho - lb);
        ensure(lb <= rho + 1e-9, || {
            format!("case {n}: rho_lb {lb} > hgr {rho}")
        })?;
    }
    Ok(format!("200 joints, min hgr - rho_lb = {min_slack:.2e}"))
}

fn criterion_6() -> Check {
    let (code, out) = cli(&[
        "probe-uniform",
        "--p",
        "2",
        "--m",
        "2",
        "--eps",
        "0.01",
        "--trials",
        "100",
        "--seed",
        "0",
    ]);
    ensure(code == EXIT_OK, || format!("probe exit {code}"))?;
    let r = results(&out);
    let frac = num(&r["fraction"]);
    ensure(frac == 1.0, || format!("fraction {frac}"))?;
    Ok(format!("eps=0.01: {}/{} tight", r["tight"], r["trials"]))
}

fn criterion_7() -> Check {
    let err = |n: usize| -> f64 {
        let d = discretize_bivariate_gaussian(0.5, n, 5.0).unwrap();
        (hgr_svd(&d.joint).unwrap().rho - 0.5).abs()
    };
    let (e50, e200) = (err(50), err(200));
    ensure(e200 <= 1e-2, || format!("grid 200 error {e200}"))?;
    ensure(e200 < e50, || {
        format!("error 200 {e200} not below error 50 {e50}")
    })?;
    let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.6, 0.5, 1.0, 0.3, 0.6, 0.3, 1.0]);
    let g = GaussianMoments::from_covariance(DVector::zeros(3), sigma).unwrap();
    let v = min_hgr_gaussian(&g).unwrap();
    ensure((v - 0.6).abs() <= 1e-12, || format!("p=2 moments gave {v}"))?;
    Ok(format!(
        "error(50)={e50:.2e} error(200)={e200:.2e} moments={v:.15}"
    ))
}

fn criterion_8() -> Check {
    let mut worst: f64 = 0.0;
    for (n, j) in random_cases(100, 8000).iter().enumerate() {
        let d = (hgr_binary(j).unwrap() - hgr_svd(&j.flatten()).unwrap().rho).abs();
        worst = worst.max(d);
        ensure(d <= 1e-10, || format!("case {n}: binary vs svd {d:e}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8100);
    for n in 0..20 {
        let m = 2 + n % 3;
        let margs: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                let v: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
                let t: f64 = v.iter().sum();
                v.into_iter().map(|x| x / t).collect()
            })
            .collect();
        let j = product_joint(&margs, rng.gen_range(0.1..0.9)).unwrap();
        let rho = hgr_svd(&j.flatten()).unwrap().rho;
        ensure(rho == 0.0, || format!("product case {n}: rho {rho:e}"))?;
    }
    for k in 2..8usize {
        let perm: Vec<usize> = (0..k).map(|i| (i + 1) % k).collect();
        let w: Vec<f64> = (0..k).map(|i| (i + 1) as f64).collect();
        let total: f64 = w.iter().sum();
        let triples: Vec<_> = (0..k).map(|i| (i, perm[i], w[i] / total)).collect();
        let rho = hgr_svd(&GenericJoint::from_triples(k, k, &triples).unwrap())
            .unwrap()
            .rho;
        ensure((rho - 1.0).abs() <= 1e-10, || {
            format!("bijection k={k}: rho {rho}")
        })?;
    }
    let mut fixtures = embedded_fixtures();
    fixtures.extend(additive_cases().into_iter().take(8));
    for (n, j) in fixtures.iter().enumerate() {
        let g = j.flatten();
        let rho = hgr_svd(&g).unwrap().rho;
        for _ in 0..10 {
            let xv: Vec<f64> = (0..g.nx()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c = pearson(&g, &xv, &[0.0, 1.0]).unwrap();
            ensure(rho + 1e-12 >= c.abs(), || {
                format!("fixture {n}: pearson {c} > rho {rho}")
            })?;
        }
    }
    Ok(format!(
        "binary vs svd max delta {worst:.2e}; products exactly 0; bijections 1"
    ))
}

fn criterion_9() -> Check {
    let (mut marg, mut cond): (f64, f64) = (0.0, 0.0);
    let mut cases = additive_cases();
    cases.extend(probe_cases());
    let mut tight = 0;
    for (n, j) in cases.iter().enumerate() {
        let sys = QdSystem::from_joint(j).unwrap();
        let cert = check_tightness(&sys, TIGHT_TOL).unwrap();
        if cert.verdict != Verdict::Tight {
            continue;
        }
        tight += 1;
        let star = construct_additive(&cert.z_star, j, TIGHT_TOL).map_err(|e| e.to_string())?;
        let dm = pairwise_from_joint(&star).max_abs_diff(&pairwise_from_joint(j));
        let dc = conditional_error(&star, &cert.z_star);
        marg = marg.max(dm);
        cond = cond.max(dc);
        ensure(dm <= 1e-12, || format!("case {n}: marginal error {dm:e}"))?;
        ensure(dc <= 1e-10, || {
            format!("case {n}: conditional error {dc:e}")
        })?;
    }
    Ok(format!(
        "{tight} tight cases, marginal error {marg:.2e}, conditional error {cond:.2e}"
    ))
}

fn criterion_10() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let r2 = write_joint(dir.path(), "r2.csv", &nonadditive_fixture());
    let add = write_joint(
        dir.path(),
        "add.csv",
        &additive_fixture(spec(2, 3), 7, false).unwrap().joint,
    );
    let star = dir.path().join("star.csv");
    let star = star.to_str().unwrap();
    let invocations: Vec<Vec<&str>> = vec![
        vec!["oracle", "--joint", &r2],
        vec!["lower-bound", "--joint", &r2],
        vec!["check-tight", "--joint", &add],
        vec!["construct", "--joint", &add, "--out", star],
        vec![
            "probe-uniform",
            "--p",
            "2",
            "--m",
            "3",
            "--eps",
            "0.05",
            "--trials",
            "20",
            "--seed",
            "3",
        ],
    ];
    for args in &invocations {
        let (c1, a) = cli(args);
        let (c2, b) = cli(args);
        ensure(c1 == c2 && a == b && !a.is_empty(), || {
            format!("{} differs between runs", args[0])
        })?;
    }
    Ok(format!("{} invocations byte-identical", invocations.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("non-additive fixture end-to-end", criterion_1),
        ("additive fixtures are tight", criterion_2),
        ("closed vs iterative gamma", criterion_3),
        ("dataset least squares equivalence", criterion_4),
        ("lower bound dominance", criterion_5),
        ("near-uniform probe", criterion_6),
        ("gaussian witness", criterion_7),
        ("oracle self-consistency", criterion_8),
        ("construction fidelity", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("criterion {:>2} PASS  {name}: {detail}", n + 1),
            Ok(Err(why)) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", n + 1);
            }
            Err(_) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: panicked", n + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
