//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use opscale_core::fnf::{self, FnfOutlook};
use opscale_core::matcomb::{self, NonnegPattern};
use opscale_core::numkernel::{self, identity, ComplexMatrix, HermitianMatrix};
use opscale_core::posmap::{self, ChoiMap};
use opscale_core::random::{self, SeededRng};
use opscale_core::scaling::{self, ScalingOptions, Verdict};
use opscale_core::{BipartiteState, FnfOutcome, FnfResult, Tolerances};
use rand::Rng;

type Outcome = Result<String, String>;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn unit(n: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut e = ComplexMatrix::zeros(n, n);
    e[(i, j)] = c(1.0);
    e
}

/// `T*(Y)` from the defining identity `⟨T(E_ij), Y⟩ = ⟨E_ij, T*(Y)⟩`.
fn adjoint_by_duality(t: &ChoiMap, y: &ComplexMatrix) -> ComplexMatrix {
    let k = t.k();
    ComplexMatrix::from_fn(k, k, |i, j| {
        let image = t.apply(&unit(k, i, j)).unwrap();
        numkernel::trace(&(image * y.adjoint())).conj()
    })
}

/// Both marginal residuals of the doubly stochastic identities.
fn ds_residuals(t: &ChoiMap) -> (f64, f64) {
    let (k, m) = (t.k() as f64, t.m() as f64);
    let fwd = t.apply(&(identity(t.k()) * c(1.0 / k.sqrt()))).unwrap() - identity(t.m()) * c(1.0 / m.sqrt());
    let adj = adjoint_by_duality(t, &(identity(t.m()) * c(1.0 / m.sqrt()))) - identity(t.k()) * c(1.0 / k.sqrt());
    (fwd.norm(), adj.norm())
}

/// `Σ_i ρ[(i m + p, i m + q)]` and `Σ_p ρ[(i m + p, j m + p)]` by loops.
fn marginals(rho: &ComplexMatrix, k: usize, m: usize) -> (ComplexMatrix, ComplexMatrix) {
    let over_first = ComplexMatrix::from_fn(m, m, |p, q| (0..k).map(|i| rho[(i * m + p, i * m + q)]).sum());
    let over_second = ComplexMatrix::from_fn(k, k, |i, j| (0..m).map(|p| rho[(i * m + p, j * m + p)]).sum());
    (over_first, over_second)
}

fn r_matrix() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(1.0)])
}

/// `X ↦ tr(XP) e₀e₀ᵀ + tr(X e₂e₂ᵀ)(e₁e₁ᵀ + e₂e₂ᵀ)` with `P = e₀e₀ᵀ + e₁e₁ᵀ`.
fn no_support_3x3() -> ChoiMap {
    ChoiMap::from_action(3, 3, |x| {
        let mut out = ComplexMatrix::zeros(3, 3);
        out[(0, 0)] = x[(0, 0)] + x[(1, 1)];
        out[(1, 1)] = x[(2, 2)];
        out[(2, 2)] = x[(2, 2)];
        out
    })
    .unwrap()
}

/// `X ↦ X₀₀ (e₀e₀ᵀ + e₁e₁ᵀ) + X₁₁ e₂e₂ᵀ`; pattern `[[1,1,0],[0,0,1]]` has no
/// support while both marginals are positive definite.
fn no_support_2x3() -> ChoiMap {
    ChoiMap::from_action(2, 3, |x| {
        let mut out = ComplexMatrix::zeros(3, 3);
        out[(0, 0)] = x[(0, 0)];
        out[(1, 1)] = x[(0, 0)];
        out[(2, 2)] = x[(1, 1)];
        out
    })
    .unwrap()
}

/// Random completely positive map whose Choi matrix is a full-rank random PSD
/// matrix; rejects draws with ill-conditioned marginals.
fn random_cp(rng: &mut SeededRng, k: usize, m: usize) -> ChoiMap {
    loop {
        let choi = random::psd_of_rank(rng, k * m, k * m).into_matrix();
        let t = ChoiMap::new(k, m, choi).unwrap();
        let tol = Tolerances::default();
        let pd = |h: ComplexMatrix| HermitianMatrix::new(h).unwrap().is_pd(&tol).unwrap();
        if pd(t.apply(&identity(k)).unwrap()) && pd(t.apply_adjoint(&identity(m)).unwrap()) {
            return t;
        }
    }
}

fn random_state(rng: &mut SeededRng, k: usize, m: usize, rank: usize) -> BipartiteState {
    BipartiteState::new(k, m, random::psd_of_rank(rng, k * m, rank).into_matrix(), &Tolerances::default()).unwrap()
}

fn log_abs_det(x: &ComplexMatrix) -> f64 {
    x.clone().determinant().norm().ln()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut patterns = 0usize;
    for k in 1..=4 {
        for m in 1..=4 {
            for mask in 0..(1u64 << (k * m)) {
                let a = NonnegPattern::from_bits(k, m, mask).unwrap();
                let s = matcomb::has_support(&a).holds;
                let ts = matcomb::has_total_support(&a).holds;
                let bs = matcomb::has_support_bruteforce(&a).unwrap();
                let bts = matcomb::has_total_support_bruteforce(&a).unwrap();
                ensure(s == bs && ts == bts, || {
                    format!("{k}x{m} mask {mask:b}: flow ({s}, {ts}) vs brute force ({bs}, {bts})")
                })?;
                patterns += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{patterns} patterns agree in {secs:.1} s"))
}

fn criterion_2() -> Outcome {
    let tol = Tolerances::default();
    let pattern = NonnegPattern::from_rows(&[&[0.0, 1.0], &[1.0, 1.0]]).unwrap();
    ensure(matcomb::has_support(&pattern).holds, || "R should have support".into())?;
    ensure(!matcomb::has_total_support(&pattern).holds, || "R should lack total support".into())?;
    let t = ChoiMap::congruence(&r_matrix()).unwrap();
    let opts = ScalingOptions { max_iter: 5000, divergence_logdet: None };
    let rep = scaling::run(&t, &tol, &opts).map_err(|e| e.to_string())?;
    ensure(rep.verdict == Verdict::ConvergedDs, || format!("verdict {}", rep.verdict.as_str()))?;
    let (fwd, adj) = ds_residuals(rep.ds_map.as_ref().unwrap());
    ensure(rep.residual_a <= 1e-8 && rep.residual_b <= 1e-8 && fwd <= 1e-8 && adj <= 1e-8, || {
        format!("residuals {:e} {:e}, DS {fwd:e} {adj:e}", rep.residual_a, rep.residual_b)
    })?;
    Ok(format!("support without total support; T(X)=RXR converged in {} iterations", rep.iterations))
}

/// Runs scaling step by step, checking the trace identities and an
/// independently computed log-determinant after every step.
fn check_invariants_along(t: &ChoiMap, steps: usize) -> Result<usize, String> {
    let tol = Tolerances::default();
    let (k, m) = (t.k(), t.m());
    let logdet = |s: &scaling::ScalingState| m as f64 * log_abs_det(&s.x) + k as f64 * log_abs_det(&s.y);
    let mut s = scaling::init(t, &tol).map_err(|e| e.to_string())?;
    let mut prev = logdet(&s);
    for _ in 0..steps {
        s = scaling::step(&s, t, &tol).map_err(|e| e.to_string())?;
        let da = (numkernel::trace(s.a.as_matrix()).re - (k as f64).sqrt()).abs();
        let db = (numkernel::trace(s.b.as_matrix()).re - (m as f64).sqrt()).abs();
        ensure(da <= 1e-8 && db <= 1e-8, || format!("n={}: trace defects {da:e} {db:e}", s.n))?;
        let now = logdet(&s);
        ensure(now >= prev - 1e-9, || format!("n={}: logdet dropped {prev} -> {now}", s.n))?;
        ensure((now - s.logdet()).abs() <= 1e-8 * (1.0 + now.abs()), || {
            format!("n={}: tracked logdet {} vs direct {now}", s.n, s.logdet())
        })?;
        prev = now;
        if s.residual_a() <= tol.conv_eps && s.residual_b() <= tol.conv_eps {
            break;
        }
    }
    Ok(s.n)
}

fn criterion_3() -> Outcome {
    let mut rng = random::seeded(3);
    let mut steps = 0;
    for (k, m) in [(2, 2), (2, 3), (3, 4)] {
        for _ in 0..20 {
            let t = random_cp(&mut rng, k, m);
            steps += check_invariants_along(&t, 200)?;
        }
    }
    Ok(format!("60 maps, {steps} steps checked"))
}

fn criterion_4() -> Outcome {
    let tol = Tolerances::default();
    let mut rng = random::seeded(4);
    let mut maps = vec![ChoiMap::congruence(&r_matrix()).unwrap(), ChoiMap::trace_to_identity(2, 3)];
    for (k, m) in [(2, 2), (2, 3), (3, 4), (3, 2), (4, 3)] {
        for _ in 0..6 {
            maps.push(random_cp(&mut rng, k, m));
        }
    }
    let mut worst: f64 = 0.0;
    let mut converged = 0;
    for t in &maps {
        let rep = scaling::run(t, &tol, &ScalingOptions::default()).map_err(|e| e.to_string())?;
        if rep.verdict != Verdict::ConvergedDs {
            continue;
        }
        converged += 1;
        let (fwd, adj) = ds_residuals(rep.ds_map.as_ref().unwrap());
        worst = worst.max(fwd).max(adj);
        ensure(fwd <= 1e-7 && adj <= 1e-7, || format!("{}x{} map: DS residuals {fwd:e} {adj:e}", t.k(), t.m()))?;
    }
    ensure(converged == maps.len(), || format!("only {converged} of {} runs converged", maps.len()))?;
    Ok(format!("{converged} converged maps are DS (worst residual {worst:.1e})"))
}

fn criterion_5() -> Outcome {
    let tol = Tolerances::default();
    let t = no_support_3x3();
    let p = numkernel::diag(&[1.0, 1.0, 0.0]);
    let rank = |x: ComplexMatrix| numkernel::rank_tol(&HermitianMatrix::new(x).unwrap(), &tol).unwrap();
    let (rp, rtp) = (rank(p.clone()), rank(t.apply(&p).unwrap()));
    ensure(rtp * 3 < rp * 3, || format!("rank witness fails: rank T(P) = {rtp}, rank P = {rp}"))?;
    let rep = scaling::run(&t, &tol, &ScalingOptions::default()).map_err(|e| e.to_string())?;
    ensure(rep.verdict == Verdict::NoSupportNumerical, || format!("verdict {}", rep.verdict.as_str()))?;
    ensure(rep.iterations <= 10_000, || format!("{} iterations", rep.iterations))?;
    Ok(format!(
        "rank(T(P))·3 = {} < rank(P)·3 = {}; logdet grew {:.1} > {} after {} iterations",
        rtp * 3,
        rp * 3,
        rep.logdet_growth(),
        rep.divergence_threshold,
        rep.iterations
    ))
}

/// Independent re-check of one normal form: marginals by loops, Gram
/// matrices, exact leading term and reconstruction.
fn check_fnf_result(r: &FnfResult, state_tol: f64) -> Result<(), String> {
    let (k, m) = (r.state_fnf.k(), r.state_fnf.m());
    let rho = r.state_fnf.rho().as_matrix();
    let (g, f) = marginals(rho, k, m);
    let dg = (g - identity(m) * c(1.0 / m as f64)).norm();
    let df = (f - identity(k) * c(1.0 / k as f64)).norm();
    ensure(dg <= state_tol && df <= state_tol, || format!("{k}x{m}: marginal defects {dg:e} {df:e}"))?;

    let first = &r.schmidt[0];
    ensure(first.c == identity(k) * c(1.0 / (k as f64).sqrt()), || "C_1 is not Id/√k".into())?;
    ensure(first.d == identity(m) * c(1.0 / (m as f64).sqrt()), || "D_1 is not Id/√m".into())?;
    let n = r.schmidt.len();
    let gram = |pick: &dyn Fn(usize) -> ComplexMatrix| {
        let ms: Vec<ComplexMatrix> = (0..n).map(pick).collect();
        let g = ComplexMatrix::from_fn(n, n, |i, j| numkernel::trace(&(&ms[i] * ms[j].adjoint())));
        (g - identity(n)).norm()
    };
    let gc = gram(&|i| r.schmidt[i].c.clone());
    let gd = gram(&|i| r.schmidt[i].d.clone());
    ensure(gc <= 1e-8 && gd <= 1e-8, || format!("{k}x{m}: Gram defects {gc:e} {gd:e}"))?;
    let mut sum = ComplexMatrix::zeros(k * m, k * m);
    for t in &r.schmidt {
        sum += t.c.kronecker(&t.d) * c(t.coefficient);
    }
    let rec = (rho - sum).norm();
    ensure(rec <= 1e-8, || format!("{k}x{m}: reconstruction error {rec:e}"))?;
    Ok(())
}

fn criterion_6(successes: &mut Vec<FnfResult>) -> Outcome {
    let start = Instant::now();
    let tol = Tolerances::default();
    let opts = ScalingOptions::default();
    let mut rng = random::seeded(6);
    for (k, m) in [(2, 3), (3, 4), (2, 5)] {
        for _ in 0..20 {
            let kernel = rng.gen_range(0..k.min(m));
            let a = random_state(&mut rng, k, m, k * m - kernel);
            let sc = fnf::sufficient_conditions(&a, &tol, &opts).map_err(|e| e.to_string())?;
            ensure(sc.outlook == FnfOutlook::Guaranteed, || format!("{k}x{m} ker {kernel}: outlook {:?}", sc.outlook))?;
            let r = match fnf::compute_fnf(&a, &tol, &opts).map_err(|e| e.to_string())? {
                FnfOutcome::Success(r) => *r,
                FnfOutcome::Inconclusive(rep) => return Err(format!("{k}x{m}: inconclusive after {}", rep.iterations)),
            };
            check_fnf_result(&r, 1e-8)?;
            let v = fnf::verify_fnf(&r, &tol);
            ensure(v.passed, || format!("{k}x{m}: verify_fnf {v:?}"))?;
            successes.push(r);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.1} s"))?;
    Ok(format!("60 states predicted and normalized in {secs:.1} s"))
}

fn criterion_7(successes: &mut Vec<FnfResult>) -> Outcome {
    let tol = Tolerances::default();
    let opts = ScalingOptions::default();
    let mut rng = random::seeded(7);
    let (k, m) = (2, 3);
    let mut converged = 0;
    for i in 0..20 {
        let rank = 1 + i % 6;
        let a = random_state(&mut rng, k, m, rank);
        if !fnf::check_preconditions(&a, &tol).map_err(|e| e.to_string())?.passed {
            continue;
        }
        let (g, _) = posmap::from_state(a.rho(), k, m, &tol).map_err(|e| e.to_string())?;
        let rep = scaling::run(&g, &tol, &opts).map_err(|e| e.to_string())?;
        if rep.verdict != Verdict::ConvergedDs {
            continue;
        }
        converged += 1;
        match fnf::compute_fnf(&a, &tol, &opts).map_err(|e| e.to_string())? {
            FnfOutcome::Success(r) => {
                ensure(fnf::verify_fnf(&r, &tol).passed, || format!("rank {rank}: verification failed"))?;
                successes.push(*r);
            }
            FnfOutcome::Inconclusive(_) => return Err(format!("rank {rank}: G_A converged but FNF did not")),
        }
    }
    ensure(converged >= 10, || format!("only {converged} of 20 states had converging G_A"))?;
    Ok(format!("{converged} of 20 states (ranks 1..6) converged, all gave a normal form"))
}

fn criterion_8() -> Outcome {
    let tol = Tolerances::default();
    let opts = ScalingOptions::default();
    let mut rng = random::seeded(8);
    let mut maps = vec![no_support_3x3(), no_support_2x3(), ChoiMap::congruence(&r_matrix()).unwrap()];
    for (k, m) in [(2, 2), (2, 3), (3, 2), (2, 2), (2, 3), (3, 2), (2, 3)] {
        maps.push(random_cp(&mut rng, k, m));
    }
    let mut summary = Vec::new();
    for t in &maps {
        let direct = scaling::run(t, &tol, &opts).map_err(|e| e.to_string())?.verdict;
        let lifted = scaling::run(&posmap::tilde_lift(t), &tol, &opts).map_err(|e| e.to_string())?.verdict;
        ensure(direct == lifted, || {
            format!("{}x{}: map {} vs lift {}", t.k(), t.m(), direct.as_str(), lifted.as_str())
        })?;
        summary.push(direct);
    }
    let ns = summary.iter().filter(|v| **v == Verdict::NoSupportNumerical).count();
    ensure(ns == 2, || format!("expected the two no-support fixtures to diverge, got {ns}"))?;
    Ok(format!("{} maps ({} scalable, {ns} without support) match their lifts", maps.len(), maps.len() - ns))
}

fn criterion_9(successes: &[FnfResult]) -> Outcome {
    ensure(!successes.is_empty(), || "no normal forms to check".into())?;
    let mut terms = 0;
    for r in successes {
        check_fnf_result(r, 1e-8)?;
        terms += r.schmidt.len();
    }
    Ok(format!("{} normal forms, {terms} Schmidt terms", successes.len()))
}

fn criterion_10() -> Outcome {
    let tol = Tolerances::default();
    let mut rng = random::seeded(10);
    let shapes = [(2, 2), (2, 3), (3, 2), (3, 4), (2, 5)];
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let (k, m) = shapes[i % shapes.len()];
        let t = random_cp(&mut rng, k, m);
        let rep = scaling::run(&t, &tol, &ScalingOptions::default()).map_err(|e| e.to_string())?;
        let ds = rep.ds_map.ok_or_else(|| format!("{k}x{m}: scaling did not converge"))?;
        let v = random::haar_unitary(&mut rng, k);
        let w = random::haar_unitary(&mut rng, m);
        let p = posmap::pattern_matrix(&ds, &v, &w).map_err(|e| e.to_string())?;
        let n = k * m;
        let lift = |r: usize, col: usize| p.get(r / m, col / k);
        let target = (n as f64).sqrt();
        for r in 0..n {
            let row: f64 = (0..n).map(|col| lift(r, col)).sum();
            let col: f64 = (0..n).map(|x| lift(x, r)).sum();
            worst = worst.max((row - target).abs()).max((col - target).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("lift sums off by {worst:e}"))?;
    Ok(format!("10 maps, lift sums within {worst:.1e} of √(km)"))
}

fn main() -> ExitCode {
    let mut fnf_results = Vec::new();
    let results: Vec<(usize, &str, Outcome)> = vec![
        (1, "flow verdicts match brute force on all 0/1 patterns up to 4x4", criterion_1()),
        (2, "R has support but not total support; RXR scales to DS", criterion_2()),
        (3, "trace invariants and monotone log-determinant", criterion_3()),
        (4, "converged runs emit doubly stochastic maps", criterion_4()),
        (5, "no-support fixture diverges", criterion_5()),
        (6, "normal form on states with small kernels", criterion_6(&mut fnf_results)),
        (7, "coprime shape: converging G_A gives a normal form", criterion_7(&mut fnf_results)),
        (8, "map and square lift get the same verdict", criterion_8()),
        (9, "Schmidt factors orthonormal and reconstructing", criterion_9(&fnf_results)),
        (10, "pattern of a DS map has lift sums √(km)", criterion_10()),
    ];

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {n:>2}: {name} ({detail})"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {n:>2}: {name} ({why})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
