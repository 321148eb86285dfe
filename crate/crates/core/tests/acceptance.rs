//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when
//! any criterion fails. Run with `cargo test -p twisted-ep --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twisted_ep::betadyne::betadyne_equivalence;
use twisted_ep::dilation::{build_dilation, dilated_dynamics, metric_equation_convergence, MetricScaling};
use twisted_ep::dynamics::{
    chirality_probe, extract_permutation, initial_basis, propagate, stiffness_probe, Direction, EvolveOptions,
    ModulationSchedule, PermutationOutcome, StiffnessOptions, EP_EXCLUSION_RADIUS,
};
use twisted_ep::eigen::eigenvalues;
use twisted_ep::hamiltonian::{build_metric, build_nhh, field_point, pseudo_hermiticity_residual};
use twisted_ep::linalg::{normalized_overlap, numerical_rank};
use twisted_ep::permutation::{closure, transfer_table, Permutation};
use twisted_ep::spectral::{eigensystem_sorted, extended_3x3, single_qubit_eigenpair};
use twisted_ep::{ComplexMatrix, Result, SystemConfig};

const GENERATORS: [&str; 6] = [
    "(1,5)(2,6)(3,4)(7,8)",
    "(1,2)(3,6)(4,5)(7,8)",
    "(1,3)(2,6)(4,8)(5,7)",
    "(1,3)(2,6)(4,5)(7,8)",
    "(1,3)(2,4)(5,7)(6,8)",
    "(1,8)(2,6)(3,7)(4,5)",
];

/// Reference transfer table as (from, to, generators), 1-based.
const REFERENCE_TABLE: &[(usize, usize, &[usize])] = &[
    (1, 2, &[2]),
    (1, 3, &[3, 4, 5]),
    (1, 5, &[1]),
    (1, 8, &[6]),
    (2, 1, &[2]),
    (2, 4, &[5]),
    (2, 6, &[1, 3, 4, 6]),
    (3, 1, &[3, 4, 5]),
    (3, 4, &[1]),
    (3, 6, &[2]),
    (3, 7, &[6]),
    (4, 2, &[5]),
    (4, 3, &[1]),
    (4, 5, &[2, 4]),
    (4, 8, &[3]),
    (5, 1, &[1]),
    (5, 4, &[2, 4]),
    (5, 7, &[3, 5]),
    (6, 2, &[1, 3, 4, 6]),
    (6, 3, &[2]),
    (6, 8, &[5]),
    (7, 3, &[6]),
    (7, 5, &[3, 5]),
    (7, 8, &[1, 2, 4]),
    (8, 1, &[6]),
    (8, 4, &[3]),
    (8, 6, &[5]),
    (8, 7, &[1, 2, 4]),
];

struct Suite {
    failures: usize,
    total: usize,
}

impl Suite {
    fn check(&mut self, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Result<(bool, String)>) {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let (mut ok, mut detail) = match outcome {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if let Some(limit) = limit {
            if elapsed > limit {
                ok = false;
                detail.push_str(&format!("; runtime {:.1}s exceeds {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()));
            }
        }
        self.total += 1;
        if !ok {
            self.failures += 1;
        }
        println!("{} {name}: {detail} [{:.1}s]", if ok { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
    }
}

fn base_config() -> SystemConfig {
    SystemConfig::uniform(vec![1.0, 1.0, 2.0], 1.0).unwrap()
}

fn generator(k: usize) -> Permutation {
    Permutation::parse(GENERATORS[k - 1], 8).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    loop {
        let (x, y): (f64, f64) = (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        if x.hypot(y - 1.0).min(x.hypot(y + 1.0)) > radius {
            return (x, y);
        }
    }
}

fn random_config(rng: &mut ChaCha8Rng, n: usize) -> SystemConfig {
    let scales = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut j = vec![vec![0.0; n]; n];
    for k in 0..n {
        for l in k + 1..n {
            let v = rng.random_range(-1.5..1.5);
            j[k][l] = v;
            j[l][k] = v;
        }
    }
    SystemConfig::new(scales, j).unwrap()
}

/// A loop run with its expected generator.
struct LoopCase {
    label: &'static str,
    schedule: ModulationSchedule,
    expected: usize,
    outcome: Option<PermutationOutcome>,
}

fn loop_case(label: &'static str, r: (f64, f64), modulated: Vec<(usize, usize)>, expected: usize) -> LoopCase {
    let schedule = ModulationSchedule::from_origin(base_config(), r.0, r.1, 2500.0, modulated).unwrap();
    LoopCase { label, schedule, expected, outcome: None }
}

fn run_cases(cases: &mut [LoopCase], min_fidelity: f64) -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for c in cases.iter_mut() {
        let o = extract_permutation(&c.schedule, &EvolveOptions::default(), min_fidelity.min(0.9))?;
        let got = o.permutation();
        let hit = got.as_ref() == Some(&generator(c.expected)) && o.min_confidence() >= min_fidelity;
        ok &= hit;
        parts.push(format!(
            "{} -> {} (p{} expected, min fidelity {:.4})",
            c.label,
            o.cycles.as_deref().unwrap_or("not bijective"),
            c.expected,
            o.min_confidence()
        ));
        c.outcome = Some(o);
    }
    Ok((ok, parts.join("; ")))
}

fn main() -> ExitCode {
    let mut suite = Suite { failures: 0, total: 0 };
    let secs = Duration::from_secs;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut sample: Vec<(SystemConfig, f64, f64)> = Vec::new();
    for n in 1..=3 {
        for _ in 0..500 {
            let cfg = random_config(&mut rng, n);
            let (x, y) = random_point(&mut rng, EP_EXCLUSION_RADIUS);
            sample.push((cfg, x, y));
        }
    }

    suite.check("real spectrum (N=1,2,3; 500 points each; |Im E|/radius < 1e-9)", Some(secs(10)), || {
        let mut worst = 0.0f64;
        for (cfg, x, y) in &sample {
            let p = field_point(cfg, *x, *y)?;
            let ev = eigenvalues(&build_nhh(cfg, &p, None)?)?;
            let radius = ev.iter().fold(0.0f64, |m, z| m.max(z.norm()));
            worst = ev.iter().fold(worst, |m, z| m.max(z.im.abs() / radius));
        }
        Ok((worst < 1e-9, format!("max ratio {worst:.2e}")))
    });

    suite.check("hypercube ladder (N=3, J=0, f=1; 100 points; 1e-10 absolute)", Some(secs(5)), || {
        let cfg = SystemConfig::uniform(vec![1.0; 3], 0.0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let (x, y) = random_point(&mut rng, EP_EXCLUSION_RADIUS);
            let p = field_point(&cfg, x, y)?;
            let es = eigensystem_sorted(&build_nhh(&cfg, &p, None)?, None)?;
            let a = p.alpha.abs();
            let ladder = [-3.0 * a, -a, -a, -a, a, a, a, 3.0 * a];
            worst = es.eigenvalues.iter().zip(ladder).fold(worst, |m, (e, l)| m.max((e - l).abs()));
        }
        Ok((worst < 1e-10, format!("max deviation {worst:.2e}")))
    });

    suite.check("pseudo-Hermiticity (same 1500 points; residual < 1e-10)", Some(secs(10)), || {
        let mut worst = 0.0f64;
        for (cfg, x, y) in &sample {
            let p = field_point(cfg, *x, *y)?;
            let r = pseudo_hermiticity_residual(&build_nhh(cfg, &p, None)?, &build_metric(cfg, &p)?)?;
            worst = worst.max(r);
        }
        Ok((worst < 1e-10, format!("max residual {worst:.2e}")))
    });

    suite.check("EP coalescence (y=1, x=1e-1,1e-2,1e-3; monotone, > 0.999)", Some(secs(1)), || {
        let mut overlaps = Vec::new();
        for x in [1e-1, 1e-2, 1e-3] {
            let p = field_point(&SystemConfig::uniform(vec![1.0], 0.0)?, x, 1.0)?;
            let (v, _) = single_qubit_eigenpair(p.phi, p.alpha);
            overlaps.push(normalized_overlap(&v[0], &v[1]));
        }
        let ok = overlaps.windows(2).all(|w| w[1] > w[0]) && overlaps[2] > 0.999;
        Ok((ok, format!("overlaps {overlaps:.6?}")))
    });

    let mut ellipse = vec![loop_case("ellipse (3,6)", (3.0, 6.0), vec![], 1)];
    suite.check("unmodulated ellipse (p1, every final fidelity >= 0.99)", Some(secs(120)), || run_cases(&mut ellipse, 0.99));

    let mut single = vec![
        loop_case("J13 modulated", (3.0, 6.0), vec![(1, 3)], 2),
        loop_case("J23 modulated", (3.0, 6.0), vec![(2, 3)], 2),
    ];
    suite.check("single modulated coupling (p2 for J13 and J23, fidelities >= 0.99)", None, || run_cases(&mut single, 0.99));

    let mut suite_loops = vec![
        loop_case("J13+J23", (1.0, 2.0), vec![(1, 3), (2, 3)], 3),
        loop_case("J12", (1.0, 2.0), vec![(1, 2)], 4),
        loop_case("J12+J13", (1.0, 2.0), vec![(1, 2), (1, 3)], 5),
        loop_case("J12+J23", (1.0, 2.0), vec![(1, 2), (2, 3)], 5),
        loop_case("J12+J13+J23", (1.0, 2.0), vec![(1, 2), (1, 3), (2, 3)], 6),
    ];
    suite.check("generator suite (p3..p6, fidelities >= 0.95)", Some(secs(600)), || run_cases(&mut suite_loops, 0.95));

    suite.check("direction symmetry (clockwise repeats, eps=0)", None, || {
        let mut ok = true;
        let mut parts = Vec::new();
        for c in ellipse.iter().chain(&single).chain(&suite_loops) {
            let cw = extract_permutation(&c.schedule.with_direction(Direction::Clockwise), &EvolveOptions::default(), 0.9)?;
            let same = c.outcome.as_ref().map(|o| o.mapping == cw.mapping).unwrap_or(false);
            ok &= same;
            parts.push(format!("{} {}", c.label, if same { "same" } else { "differs" }));
        }
        Ok((ok, parts.join(", ")))
    });

    suite.check("group (order 576, non-Abelian, even; composite identities)", Some(secs(1)), || {
        let p: Vec<Permutation> = (1..=6).map(generator).collect();
        let g = closure(&p)?;
        let e18 = Permutation::product(&[&p[5], &p[4], &p[0], &p[2], &p[0]])?;
        let e19 = Permutation::product(&[&p[0], &p[4], &p[0]])?;
        let ok = g.order == 576
            && !g.is_abelian
            && g.all_even()
            && e18.to_string() == "(1,2)(3,4)(5,6)(7,8)"
            && e19.to_string() == "(1,8)(2,7)(3,6)(4,5)";
        Ok((ok, format!("order {}, abelian {}, even {}, p6p5p1p3p1 = {e18}, p1p5p1 = {e19}", g.order, g.is_abelian, g.all_even())))
    });

    suite.check("transfer table (every nonempty reference cell)", None, || {
        let t = transfer_table(&(1..=6).map(generator).collect::<Vec<_>>())?;
        let mismatches: Vec<String> = REFERENCE_TABLE
            .iter()
            .filter(|(a, b, want)| t.entry(*a, *b) != *want)
            .map(|(a, b, _)| format!("psi{a}->psi{b}"))
            .collect();
        let filled = (1..=8).flat_map(|a| (1..=8).map(move |b| (a, b))).filter(|&(a, b)| !t.entry(a, b).is_empty()).count();
        let ok = mismatches.is_empty() && filled == REFERENCE_TABLE.len();
        Ok((ok, format!("{} cells checked, {filled} filled, mismatches {mismatches:?}", REFERENCE_TABLE.len())))
    });

    suite.check("perturbation (eps=1e-3, T=500; both directions p1, fidelity > 0.9, complex spectrum)", Some(secs(120)), || {
        let s = ModulationSchedule::from_origin(base_config(), 3.0, 6.0, 500.0, vec![])?;
        let r = chirality_probe(&s, 1e-3, &EvolveOptions::default(), 0.9)?;
        let p1 = generator(1);
        let perm_ok = r.counter_clockwise.permutation() == Some(p1.clone()) && r.clockwise.permutation() == Some(p1);
        let fid_ok = r.min_fidelity_counter_clockwise > 0.9 && r.min_fidelity_clockwise > 0.9;
        Ok((
            perm_ok && fid_ok && r.complex_spectrum,
            format!(
                "ccw {} ({:.4}), cw {} ({:.4}), max |Im E|/radius {:.2e}, complex {}",
                r.counter_clockwise.cycles.as_deref().unwrap_or("-"),
                r.min_fidelity_counter_clockwise,
                r.clockwise.cycles.as_deref().unwrap_or("-"),
                r.min_fidelity_clockwise,
                r.max_imag_energy,
                r.complex_spectrum
            ),
        ))
    });

    suite.check("stiffness (circle/ellipse ripple on psi7,psi8 >= 10x; both p1)", None, || {
        let r = stiffness_probe(&base_config(), 1.0, (3.0, 6.0), &StiffnessOptions::default())?;
        let ratio = r.suppression_ratio(&[7, 8]);
        let p1 = Some(generator(1));
        let ok = ratio >= 10.0 && r.circle.outcome.permutation() == p1 && r.ellipse.outcome.permutation() == p1;
        Ok((
            ok,
            format!(
                "ratio {ratio:.2}, circle {}, ellipse {}",
                r.circle.outcome.cycles.as_deref().unwrap_or("-"),
                r.ellipse.outcome.cycles.as_deref().unwrap_or("-")
            ),
        ))
    });

    suite.check("dilation (Hermitian 1e-10 at 50 points; top block within 10x tolerance; order 2)", None, || {
        let cfg = base_config();
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let (x, y) = random_point(&mut rng, EP_EXCLUSION_RADIUS);
            let d = build_dilation(&cfg, &field_point(&cfg, x, y)?, MetricScaling::Auto)?;
            worst = worst.max(d.hermiticity_residual);
        }
        let s = ModulationSchedule::from_origin(cfg, 3.0, 6.0, 2500.0, vec![])?;
        let psi = initial_basis(&s, 0.0)?.right_vectors[0].clone();
        let dyn_ = dilated_dynamics(&s, &psi, 50_000, 0.25)?;
        let conv = metric_equation_convergence(&s, 700.0, 1.0, 4)?;
        let orders = conv.observed_orders();
        let ok = worst < 1e-10
            && dyn_.max_deviation < 10.0 * dyn_.integrator_tolerance
            && orders.iter().all(|o| (o - 2.0).abs() < 0.1);
        Ok((
            ok,
            format!(
                "max Hermiticity residual {worst:.2e}; deviation {:.2e} vs tolerance {:.2e}; orders {orders:.3?}",
                dyn_.max_deviation, dyn_.integrator_tolerance
            ),
        ))
    });

    suite.check("beta-dyne (50 points; H_eff - H_spin = c I, Re c = 0, 1e-9)", None, || {
        let cfg = base_config();
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let (mut worst_res, mut worst_re) = (0.0f64, 0.0f64);
        for _ in 0..50 {
            let (x, y) = random_point(&mut rng, EP_EXCLUSION_RADIUS);
            let p = field_point(&cfg, x, y)?;
            let gamma = rng.random_range(0.1..2.0);
            let e = betadyne_equivalence(&cfg, &p, gamma)?;
            let scale = build_nhh(&cfg, &p, None)?.frobenius_norm().max(1.0);
            worst_res = worst_res.max(e.residual);
            worst_re = worst_re.max(e.shift.re.abs() / scale);
        }
        Ok((worst_res < 1e-9 && worst_re < 1e-9, format!("residual {worst_res:.2e}, |Re c| {worst_re:.2e}")))
    });

    suite.check("extended 3x3 (closed form vs numeric 1e-10 on 50 points; EP block structure)", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let (x, y) = random_point(&mut rng, EP_EXCLUSION_RADIUS);
            let e = extended_3x3(x, y, 1.0);
            let numeric = eigenvalues(&e.matrix)?;
            for lam in e.eigenvalues {
                let d = numeric.iter().map(|z| (z - lam).norm()).fold(f64::INFINITY, f64::min);
                worst = worst.max(d / lam.norm().max(1.0));
            }
        }
        let ep = extended_3x3(0.0, 1.0, 1.0);
        let block = ComplexMatrix::from_fn(2, |i, j| ep.matrix[(i, j)]);
        let block_rank = numerical_rank(&block, 1e-10)?;
        let zero_dim = ep.eigenspace_dimension(C64::new(0.0, 0.0))?;
        let ok = worst < 1e-10 && block_rank == 1 && zero_dim == 2;
        Ok((ok, format!("max deviation {worst:.2e}; EP block rank {block_rank}, eigenvalue-0 eigenspace dimension {zero_dim}")))
    });

    suite.check("integrator order (error ratios within [8, 32] over three halvings)", None, || {
        let s = ModulationSchedule::from_origin(base_config(), 3.0, 6.0, 50.0, vec![])?;
        let psi = initial_basis(&s, 0.0)?.right_vectors[0].clone();
        let base = 1000;
        let reference = propagate(&s, &psi, &EvolveOptions::with_steps(32 * base))?;
        let mut errors = Vec::new();
        for k in 0..4 {
            let v = propagate(&s, &psi, &EvolveOptions::with_steps(base << k))?;
            errors.push(v.iter().zip(&reference).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt());
        }
        let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
        let ok = ratios.iter().all(|r| (8.0..=32.0).contains(r));
        Ok((ok, format!("errors {:?}, ratios {ratios:.2?}", errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>())))
    });

    println!("{} of {} criteria passed", suite.total - suite.failures, suite.total);
    if suite.failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
