//! Acceptance criteria, one PASS/FAIL line each.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikeopt::numerics::brent;
use spikeopt::{
    assemble_nlp, bang_max_time, bang_min_time, compute_prc, direct_prc, eval_unbounded_control,
    feasible_range, find_limit_cycle, hamiltonian_drift, lgl_grid, simulate_full, simulate_phase,
    solve_bounded, solve_direct, solve_extremal, spiking_time, ConductanceModel, ControlSolution,
    LimitCycle, NlpOptions, PhaseModel, SampledControl,
};

const TWO_PI: f64 = 2.0 * PI;

struct Check {
    what: String,
    ok: bool,
}

fn check(what: impl Into<String>, ok: bool) -> Check {
    Check { what: what.into(), ok }
}

struct Criterion {
    id: u32,
    title: &'static str,
    checks: Vec<Check>,
}

impl Criterion {
    fn new(id: u32, title: &'static str) -> Self {
        Self { id, title, checks: Vec::new() }
    }

    fn add(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.ok)
    }

    fn print(&self) {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.ok).map(|c| c.what.as_str()).collect();
        let detail = if failed.is_empty() {
            format!("{} checks", self.checks.len())
        } else {
            format!("failed: {}", failed.join("; "))
        };
        println!("{verdict} criterion {}: {} ({detail})", self.id, self.title);
        for c in &self.checks {
            println!("    [{}] {}", if c.ok { "ok" } else { "FAIL" }, c.what);
        }
    }
}

/// Hodgkin–Huxley cycle and its tabulated phase model, shared by several
/// criteria.
struct Hh {
    model: ConductanceModel,
    cycle: LimitCycle,
    phase: PhaseModel,
}

fn hh() -> Hh {
    let model = ConductanceModel::hodgkin_huxley();
    let cycle = find_limit_cycle(&model).unwrap();
    let table = compute_prc(&model, &cycle, 1024).unwrap();
    let phase = PhaseModel::tabulated(&table).unwrap();
    Hh { model, cycle, phase }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn natural_periods() -> Criterion {
    let mut c = Criterion::new(1, "natural periods of HH and ML");
    for (name, model, want) in [
        ("HH", ConductanceModel::hodgkin_huxley(), 14.64),
        ("ML", ConductanceModel::morris_lecar(), 22.202),
    ] {
        let (cycle, dt) = timed(|| find_limit_cycle(&model));
        match cycle {
            Ok(cy) => {
                c.add(check(
                    format!("{name} period {:.4} vs {want} ± 0.05", cy.period),
                    (cy.period - want).abs() <= 0.05,
                ));
                c.add(check(format!("{name} runtime {:.2} s < 10 s", dt.as_secs_f64()), dt.as_secs_f64() < 10.0));
            }
            Err(e) => c.add(check(format!("{name}: {e}"), false)),
        }
    }
    c
}

fn full_model_experiment(hh: &Hh) -> Criterion {
    let mut c = Criterion::new(2, "T = 16 ms HH design applied to the full HH model");
    let design = solve_bounded(&hh.phase, 16.0, 1.0, true).unwrap().1;
    let control = SampledControl::from_solution(&design).unwrap();
    let report = simulate_full(&hh.model, &hh.cycle, &control, 6).unwrap();
    c.add(check(
        format!("{} intervals simulated (>= 5)", report.inter_spike_intervals.len()),
        report.inter_spike_intervals.len() >= 5,
    ));
    c.add(check(
        format!("mean interval {:.4} ms vs 16.02 ± 0.3", report.mean_interval),
        (report.mean_interval - 16.02).abs() <= 0.3,
    ));
    c
}

/// Complete elliptic integral of the first kind K(m) by the AGM.
fn ellip_k(m: f64) -> f64 {
    let (mut a, mut b) = (1.0f64, (1.0 - m).sqrt());
    while (a - b).abs() > 1e-16 * a {
        let next = ((a + b) / 2.0, (a * b).sqrt());
        a = next.0;
        b = next.1;
    }
    PI / (2.0 * a)
}

fn closed_forms() -> Criterion {
    let mut c = Criterion::new(3, "sinusoidal closed-form checkpoints, M = 0.6");
    let (omega, zd, m) = (1.0f64, 1.0f64, 0.6f64);
    let model = PhaseModel::sinusoidal(omega, zd).unwrap();
    let s = (omega * omega - zd * zd * m * m).sqrt();
    let t_min_exact = TWO_PI / s - 4.0 * (zd * m / s).atan() / s;
    let t_max_exact = TWO_PI / s + 4.0 * (zd * m / s).atan() / s;
    let t_min = bang_min_time(&model, m).unwrap();
    let t_max = bang_max_time(&model, m).unwrap();
    c.add(check(format!("bang_min_time {t_min:.9} vs 4.636476 ± 1e-6"), (t_min - 4.636476).abs() <= 1e-6));
    c.add(check(
        format!("bang_min_time vs closed form {t_min_exact:.12}: {:.1e}", (t_min - t_min_exact).abs()),
        (t_min - t_min_exact).abs() <= 1e-9,
    ));
    c.add(check(format!("bang_max_time {t_max:.9} vs 11.0715 ± 1e-4"), (t_max - 11.0715).abs() <= 1e-4));
    c.add(check(
        format!("bang_max_time vs closed form {t_max_exact:.12}: {:.1e}", (t_max - t_max_exact).abs()),
        (t_max - t_max_exact).abs() <= 1e-9,
    ));
    // ∫₀^{2π} dθ / √(ω² + a sin²θ) with a = z_d M (z_d M + 2ω)
    let a = zd * m * (zd * m + 2.0 * omega) / (omega * omega);
    let elliptic = 4.0 / (omega * (1.0 + a).sqrt()) * ellip_k(a / (1.0 + a));
    let range = feasible_range(&model, m, true).unwrap();
    let t_istar = range.t_istar_min().unwrap_or(f64::NAN);
    c.add(check(
        format!("T_Istar_min {t_istar:.6} vs elliptic oracle {elliptic:.6}"),
        (t_istar - elliptic).abs() <= 1e-8,
    ));
    c.add(check(format!("T_Istar_min {t_istar:.6} vs 5.00 ± 0.01"), (t_istar - 5.00).abs() <= 0.01));
    c
}

/// Relative error of θ(T) = 2π and of the end time under forward
/// integration of the sampled control.
fn reach_error(model: &PhaseModel, sol: &ControlSolution) -> f64 {
    let traj = simulate_phase(model, sol).unwrap();
    let theta_end = *traj.theta.last().unwrap();
    let t_end = *traj.times.last().unwrap();
    ((theta_end - TWO_PI) / TWO_PI).abs().max(((t_end - sol.target_t) / sol.target_t).abs())
}

fn control_reproduction(hh: &Hh, solutions: &mut Vec<(String, PhaseModel, ControlSolution)>) -> Criterion {
    let mut c = Criterion::new(4, "control reproduction and trajectory reaching");
    let sin = PhaseModel::sinusoidal(1.0, 1.0).unwrap();
    for t in [4.0, 9.0] {
        let sol = solve_extremal(&sin, t, true).unwrap();
        let mut anti: f64 = 0.0;
        for k in 0..=1000 {
            let theta = PI * k as f64 / 1000.0;
            let i = |x: f64| eval_unbounded_control(&sin, &sol.params, x).unwrap();
            anti = anti.max((i(theta) + i(theta + PI)).abs());
            anti = anti.max((i(theta) + i(TWO_PI - theta)).abs());
        }
        c.add(check(format!("sinusoidal T = {t}: anti-symmetry {anti:.1e} < 1e-9"), anti < 1e-9));
        let err = reach_error(&sin, &sol);
        c.add(check(format!("sinusoidal T = {t}: reach error {err:.1e} < 1e-6"), err < 1e-6));
        c.add(check(
            format!("sinusoidal T = {t}: |net charge| {:.1e} < 1e-8", sol.net_charge.abs()),
            sol.net_charge.abs() < 1e-8,
        ));
        solutions.push((format!("sinusoidal T={t}"), sin.clone(), sol));
    }
    let sniper = PhaseModel::sniper(1.0, 1.0).unwrap();
    let theta = PhaseModel::theta(-0.25).unwrap();
    let mut cases: Vec<(String, PhaseModel, f64, Option<f64>, bool)> = Vec::new();
    for t in [4.7, 5.0, 8.0, 10.0] {
        cases.push((format!("sinusoidal M=0.6 T={t}"), sin.clone(), t, Some(0.6), true));
    }
    for t in [3.5, 4.0, 8.0, 12.0] {
        cases.push((format!("sinusoidal M=1.5 T={t}"), sin.clone(), t, Some(1.5), true));
    }
    for t in [5.0, 7.0] {
        for cb in [false, true] {
            cases.push((format!("sniper T={t} balanced={cb}"), sniper.clone(), t, None, cb));
        }
    }
    for t in [4.7, 6.0, 7.5, 10.0] {
        cases.push((format!("theta I_b=-0.25 M=1 T={t}"), theta.clone(), t, Some(1.0), true));
    }
    for t in [13.2, 14.0, 16.0, 16.9] {
        cases.push((format!("HH M=1 T={t}"), hh.phase.clone(), t, Some(1.0), true));
    }
    for (name, model, t, bound, cb) in cases {
        let sol = match bound {
            Some(m) => solve_bounded(&model, t, m, cb).map(|r| r.1),
            None => solve_extremal(&model, t, cb),
        };
        match sol {
            Ok(sol) => {
                let err = reach_error(&model, &sol);
                c.add(check(format!("{name}: reach error {err:.1e} < 1e-6"), err < 1e-6));
                solutions.push((name, model, sol));
            }
            Err(e) => c.add(check(format!("{name}: {e}"), false)),
        }
    }
    c
}

fn sniper_structures(solutions: &mut Vec<(String, PhaseModel, ControlSolution)>) -> Criterion {
    let mut c = Criterion::new(5, "SNIPER M = 0.4 structural classes");
    let sniper = PhaseModel::sniper(1.0, 1.0).unwrap();
    let mut classes = std::collections::BTreeSet::new();
    for t in [5.2, 5.3, 6.0, 7.0, 7.8, 8.2] {
        match solve_bounded(&sniper, t, 0.4, true) {
            Ok((policy, sol)) => {
                classes.insert(policy.switch_count());
                let peak = sol.peak_current();
                c.add(check(
                    format!("T = {t}: {} switches, peak {peak:.6} <= 0.4", policy.switch_count()),
                    peak <= 0.4 * (1.0 + 1e-12),
                ));
                c.add(check(
                    format!("T = {t}: |net charge| {:.1e} < 1e-8", sol.net_charge.abs()),
                    sol.net_charge.abs() < 1e-8,
                ));
                solutions.push((format!("sniper M=0.4 T={t}"), sniper.clone(), sol));
            }
            Err(e) => c.add(check(format!("T = {t}: {e}"), false)),
        }
    }
    let found: Vec<usize> = classes.into_iter().collect();
    c.add(check(format!("switch classes {found:?} == [0, 2, 4]"), found == [0, 2, 4]));
    c
}

fn cross_solver(hh: &Hh) -> Criterion {
    let mut c = Criterion::new(6, "collocation (N = 150) vs indirect, HH M = 1");
    let grid = lgl_grid(150).unwrap();
    for t in [13.2, 14.0, 16.0, 16.9] {
        let indirect = solve_bounded(&hh.phase, t, 1.0, true).unwrap().1;
        let problem = assemble_nlp(&hh.phase, t, 1.0, true, &grid).unwrap();
        let direct = match solve_direct(&problem, Some(&indirect), &NlpOptions::default()) {
            Ok(d) => d,
            Err(e) => {
                c.add(check(format!("T = {t}: {e}"), false));
                continue;
            }
        };
        let peak = indirect.peak_current();
        let dev = direct
            .t
            .iter()
            .zip(&direct.current)
            .map(|(tt, i)| (i - indirect.current_at(*tt)).abs())
            .fold(0.0, f64::max);
        let rel = (direct.objective - indirect.cost).abs() / indirect.cost;
        c.add(check(
            format!("T = {t}: max deviation {:.2}% of peak <= 2%", 100.0 * dev / peak),
            dev <= 0.02 * peak,
        ));
        c.add(check(format!("T = {t}: objective within {:.1e} <= 1%", rel), rel <= 0.01));
    }
    c
}

fn legendre(n: usize, t: f64) -> (f64, f64) {
    // P_n and P_n' by the three-term recurrence
    let (mut p0, mut p1) = (1.0, t);
    let (mut d0, mut d1) = (0.0, 1.0);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * t * p1 - kf * p0) / (kf + 1.0);
        let d2 = d0 + (2.0 * kf + 1.0) * p1;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
    }
    (p1, d1)
}

/// Piecewise-constant, zero-mean control scaled to hit `t` exactly; returns
/// its cost, or `None` if no scaling reaches the target.
fn random_control_cost(model: &PhaseModel, t: f64, rng: &mut ChaCha8Rng) -> Option<f64> {
    let pieces = rng.gen_range(2..=16);
    let mut shape: Vec<f64> = (0..pieces).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean = shape.iter().sum::<f64>() / pieces as f64;
    shape.iter_mut().for_each(|s| *s -= mean);
    let steps = 24;
    let h = t / (pieces * steps) as f64;
    let phase_at_end = |alpha: f64| -> spikeopt::Result<f64> {
        let mut theta = 0.0f64;
        for s in &shape {
            let u = alpha * s;
            let rhs = |x: f64| {
                let (f, g) = model.fg(x);
                f + g * u
            };
            for _ in 0..steps {
                let k1 = rhs(theta);
                let k2 = rhs(theta + 0.5 * h * k1);
                let k3 = rhs(theta + 0.5 * h * k2);
                let k4 = rhs(theta + h * k3);
                theta += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        Ok(theta - TWO_PI)
    };
    let r0 = phase_at_end(0.0).ok()?;
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let mut prev = 0.0;
    let mut alpha = 0.05 * sign;
    for _ in 0..12 {
        let r = phase_at_end(alpha).ok()?;
        if r.is_finite() && r.signum() != r0.signum() {
            let a = brent(phase_at_end, prev, alpha, 1e-13).ok()?;
            let energy: f64 = shape.iter().map(|s| s * s).sum::<f64>() * t / pieces as f64;
            return Some(a * a * energy);
        }
        prev = alpha;
        alpha *= 2.0;
    }
    None
}

fn properties(hh: &Hh, solutions: &[(String, PhaseModel, ControlSolution)]) -> Criterion {
    let mut c = Criterion::new(7, "property suites");

    let mut quad_err: f64 = 0.0;
    let mut diff_err: f64 = 0.0;
    for n in (2..=60).chain([100, 150]) {
        let grid = lgl_grid(n).unwrap();
        for k in 0..=(2 * n - 1) {
            let sum: f64 = grid.nodes.iter().zip(&grid.weights).map(|(t, w)| w * legendre(k, *t).0).sum();
            let exact = if k == 0 { 2.0 } else { 0.0 };
            quad_err = quad_err.max((sum - exact).abs());
        }
        for k in 0..=n {
            let scale = (k * (k + 1)) as f64 / 2.0;
            for i in 0..=n {
                let dq: f64 = (0..=n).map(|j| grid.diff[(i, j)] * legendre(k, grid.nodes[j]).0).sum();
                diff_err = diff_err.max((dq - legendre(k, grid.nodes[i]).1).abs() / scale.max(1.0));
            }
        }
    }
    c.add(check(format!("LGL quadrature exactness {quad_err:.1e} <= 1e-10"), quad_err <= 1e-10));
    c.add(check(format!("LGL differentiation exactness {diff_err:.1e} <= 1e-10"), diff_err <= 1e-10));

    let mut worst_h: f64 = 0.0;
    let mut worst_name = String::new();
    for (name, model, sol) in solutions {
        let drift = hamiltonian_drift(model, sol).unwrap() / (1.0 + sol.params.c.abs());
        if drift > worst_h {
            worst_h = drift;
            worst_name = name.clone();
        }
    }
    c.add(check(
        format!("Hamiltonian drift {worst_h:.1e} <= 1e-6 over {} extremals (worst {worst_name})", solutions.len()),
        worst_h <= 1e-6,
    ));

    let mut worst_rt: f64 = 0.0;
    let mut count = 0;
    for (_, model, sol) in solutions.iter().filter(|(_, _, s)| s.bound.is_none()) {
        let t = spiking_time(model, &sol.params).unwrap();
        worst_rt = worst_rt.max((t - sol.target_t).abs() / sol.target_t);
        count += 1;
    }
    c.add(check(format!("round-trip T recovery {worst_rt:.1e} <= 1e-8 over {count} solves"), worst_rt <= 1e-8));

    let phases: Vec<f64> = (0..8).map(|k| (k as f64 + 0.5) * TWO_PI / 8.0).collect();
    let ml = ConductanceModel::morris_lecar();
    let ml_cycle = find_limit_cycle(&ml).unwrap();
    let ml_phase = PhaseModel::tabulated(&compute_prc(&ml, &ml_cycle, 1024).unwrap()).unwrap();
    for (name, model, cycle, phase) in [
        ("HH", &hh.model, &hh.cycle, &hh.phase),
        ("ML", &ml, &ml_cycle, &ml_phase),
    ] {
        let direct = direct_prc(model, cycle, &phases, 1e-3).unwrap();
        let peak = (0..512).map(|k| phase.g(TWO_PI * k as f64 / 512.0).abs()).fold(0.0, f64::max);
        let mut worst: f64 = 0.0;
        for (theta, d) in phases.iter().zip(&direct) {
            let z = phase.g(*theta);
            worst = worst.max((d - z).abs() / z.abs().max(0.05 * peak));
        }
        c.add(check(format!("{name} PRC adjoint vs direct perturbation {:.2}% <= 5%", 100.0 * worst), worst <= 0.05));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let sin = PhaseModel::sinusoidal(1.0, 1.0).unwrap();
    let sniper = PhaseModel::sniper(1.0, 1.0).unwrap();
    for (name, model, t) in [("sinusoidal", &sin, 4.0), ("sinusoidal", &sin, 9.0), ("sniper", &sniper, 7.0)] {
        let optimal = solve_extremal(model, t, true).unwrap().cost;
        let mut cheapest = f64::INFINITY;
        let mut drawn = 0;
        let mut accepted = 0;
        while accepted < 10_000 && drawn < 200_000 {
            drawn += 1;
            if let Some(cost) = random_control_cost(model, t, &mut rng) {
                accepted += 1;
                cheapest = cheapest.min(cost);
            }
        }
        c.add(check(
            format!(
                "{name} T = {t}: optimal cost {optimal:.6} <= cheapest of {accepted} random controls {cheapest:.6}"
            ),
            accepted == 10_000 && optimal <= cheapest * (1.0 + 1e-6),
        ));
    }

    let grid = lgl_grid(60).unwrap();
    let problem = assemble_nlp(&sin, 9.0, 1e6, true, &grid).unwrap();
    let direct = solve_direct(&problem, None, &NlpOptions::default()).unwrap();
    let indirect = solve_extremal(&sin, 9.0, true).unwrap().cost;
    let rel = (direct.objective - indirect).abs() / indirect;
    c.add(check(format!("sinusoidal T = 9 wide box: collocation vs indirect {rel:.1e} <= 1%"), rel <= 0.01));
    c
}

fn shapes(solutions: &[(String, PhaseModel, ControlSolution)]) -> Criterion {
    let mut c = Criterion::new(8, "shape assertions: signs, switch counts, symmetry, endpoints");
    for (name, model, sol) in solutions {
        // θ = 0 and θ = 2π are the same phase, so the control closes up
        let first = sol.samples.first().unwrap().current;
        let last = sol.samples.last().unwrap().current;
        let scale = sol.peak_current().max(1e-12);
        c.add(check(
            format!("{name}: endpoint currents {first:.3e} / {last:.3e} agree"),
            (first - last).abs() <= 1e-6 * scale,
        ));
        if sol.bound.is_some() {
            c.add(check(
                format!("{name}: {} switch phases, even count", sol.switch_count()),
                sol.switch_count() % 2 == 0,
            ));
        }
        if name.starts_with("sinusoidal T=") {
            // speeding up needs I·g > 0, slowing down I·g < 0
            let natural = TWO_PI / model.omega();
            let speed = if sol.target_t < natural { 1.0 } else { -1.0 };
            let ok = sol.samples.iter().all(|s| s.current * model.g(s.theta) * speed >= -1e-12);
            c.add(check(format!("{name}: sign of I·g matches speed-up/slow-down"), ok));
        }
    }
    c
}

fn main() {
    let started = Instant::now();
    let hh = hh();
    let mut solutions = Vec::new();
    let criteria = [
        natural_periods(),
        full_model_experiment(&hh),
        closed_forms(),
        control_reproduction(&hh, &mut solutions),
        sniper_structures(&mut solutions),
        cross_solver(&hh),
        properties(&hh, &solutions),
        shapes(&solutions),
    ];
    println!();
    for c in &criteria {
        c.print();
    }
    let passed = criteria.iter().filter(|c| c.passed()).count();
    println!(
        "\nacceptance: {passed}/{} criteria passed in {:.1} s",
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
}
