//! Acceptance criteria. Each test prints one PASS/FAIL line (written straight
//! to stderr so it shows even when output capture is on) and then asserts.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinpair_core::analysis::{compare_detailed, compare_solutions, infidelity};
use spinpair_core::frame::{effective_hamiltonian_at, frame_unitary, mixing_angles};
use spinpair_core::hamiltonian::{build_hamiltonian, closed_eigenvalues_at, hamiltonian_at};
use spinpair_core::propagate::{
    midpoint_step, out_of_pattern_max, propagate_generator, reference_propagate,
};
use spinpair_core::{
    FieldProfile, Frame, Matrix4, ReferenceOptions, StateVector4, StepControl, SystemParams,
    TimeGrid,
};

const SEED: u64 = 0x5EED_2024;

fn report(n: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "acceptance criterion {n:>2} [{verdict}] {name}: {detail}"
    );
}

fn params(a_par: f64, a_perp: f64, zeta: f64, theta: f64, profile: FieldProfile) -> SystemParams {
    SystemParams {
        a_par,
        a_perp,
        zeta,
        theta,
        profile,
    }
}

/// The 200 random draws shared by criteria 1 and 2.
fn draws() -> Vec<(SystemParams, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    (0..200)
        .map(|k| {
            let theta = if k % 2 == 0 { 0.0 } else { FRAC_PI_2 };
            let p = params(
                rng.gen_range(0.1..=3.0),
                rng.gen_range(0.1..=3.0),
                rng.gen_range(-0.2..=0.2),
                theta,
                FieldProfile::Constant { omega0: 0.0 },
            );
            (p, rng.gen_range(0.0..=10.0))
        })
        .collect()
}

#[test]
fn criterion_01_spectrum_closure() {
    let mut worst = 0.0f64;
    for (p, omega) in draws() {
        let numeric = hamiltonian_at(&p, omega).eigenvalues_sorted().unwrap();
        let mut closed = closed_eigenvalues_at(&p, omega).unwrap();
        closed.sort_by(f64::total_cmp);
        for (a, b) in numeric.iter().zip(&closed) {
            worst = worst.max((a - b).abs());
        }
    }
    let pass = worst <= 1e-12;
    report(1, "spectrum closure", pass, format!("max |eig - closed form| = {worst:.3e} over 200 draws (limit 1e-12)"));
    assert!(pass);
}

#[test]
fn criterion_02_diagonalization() {
    let mut worst = 0.0f64;
    for (p, omega) in draws() {
        // static rotation: with zero rate the effective generator is T^dagger H T
        let snap = effective_hamiltonian_at(&p, 0.0, omega, 0.0).unwrap();
        let rotated = snap.frame_unitary.adjoint() * hamiltonian_at(&p, omega) * snap.frame_unitary;
        worst = worst.max(rotated.max_off_diagonal()).max(snap.effective_h.max_off_diagonal());
    }
    let pass = worst <= 1e-12;
    report(2, "diagonalization", pass, format!("max off-diagonal of T^dagger H T = {worst:.3e} (limit 1e-12)"));
    assert!(pass);
}

/// Five-point central difference.
fn derivative(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
    (f(t - 2.0 * h) - 8.0 * f(t - h) + 8.0 * f(t + h) - f(t + 2.0 * h)) / (12.0 * h)
}

#[test]
fn criterion_03_gauge_rates() {
    let profiles = [
        FieldProfile::TanhRamp { omega_mid: 0.3, amplitude: 2.0, timescale: 1.5 },
        FieldProfile::Harmonic { omega0: 1.0, amplitude: 1.5, angular_frequency: 0.8, phase: 0.4 },
    ];
    let systems = [
        (1.0, 0.5, 0.1, 0.0),
        (1.0, 0.5, 0.1, FRAC_PI_2),
        (0.4, 1.3, -0.15, FRAC_PI_2),
        (2.2, 0.3, 0.05, 0.0),
    ];
    let mut worst = 0.0f64;
    let mut checked = 0;
    for profile in &profiles {
        for &(a_par, a_perp, zeta, theta) in &systems {
            let p = params(a_par, a_perp, zeta, theta, profile.clone());
            for k in 0..41 {
                let t = -4.0 + 0.2 * k as f64;
                let analytic = mixing_angles(&p, t).unwrap();
                let fd1 = derivative(|s| mixing_angles(&p, s).unwrap().theta1, t, 1e-3);
                let fd2 = derivative(|s| mixing_angles(&p, s).unwrap().theta2, t, 1e-3);
                for (a, fd) in [(analytic.theta1_rate, fd1), (analytic.theta2_rate, fd2)] {
                    // rates that vanish identically are compared absolutely
                    if a == 0.0 {
                        worst = worst.max(fd.abs());
                    } else {
                        worst = worst.max(((a - fd) / a).abs());
                    }
                    checked += 1;
                }
            }
        }
    }
    let pass = worst <= 1e-5;
    report(3, "gauge-term rates", pass, format!("max relative deviation from finite differences = {worst:.3e} over {checked} rates (limit 1e-5)"));
    assert!(pass);
}

#[test]
fn criterion_04_constant_field_exactness() {
    let mut worst = 0.0f64;
    for theta in [0.0, FRAC_PI_2] {
        let p = params(1.0, 0.5, 0.1, theta, FieldProfile::Constant { omega0: 2.0 });
        let t_end = 20.0 / p.a_perp;
        let grid = TimeGrid::new(0.0, t_end, 200).unwrap();
        for initial in 0..4 {
            let r = compare_solutions(&p, &grid, initial).unwrap();
            worst = worst.max(r.final_infidelity_first());
        }
    }
    let pass = worst <= 1e-9;
    report(4, "constant-field exactness", pass, format!("max first-order infidelity at t = 20/A_perp = {worst:.3e} (limit 1e-9)"));
    assert!(pass);
}

#[test]
fn criterion_05_block_sparsity() {
    let mut worst = 0.0f64;
    let profile = FieldProfile::TanhRamp { omega_mid: -0.5, amplitude: 3.0, timescale: 0.7 };
    for theta in [0.0, FRAC_PI_2] {
        let p = params(0.8, 0.35, 0.12, theta, profile.clone());
        let grid = TimeGrid::new(-3.0, 3.0, 60).unwrap();
        let opts = ReferenceOptions { store_propagators: true, ..Default::default() };
        let psi0 = StateVector4::basis(1);
        let traj = reference_propagate(&p, &grid, &psi0, Frame::Lab, &opts).unwrap();
        for u in traj.propagators.as_ref().unwrap() {
            worst = worst.max(out_of_pattern_max(p.orientation(), u));
        }
    }
    let pass = worst <= 1e-10;
    report(5, "block sparsity", pass, format!("max out-of-pattern entry = {worst:.3e} (limit 1e-10)"));
    assert!(pass);
}

/// Adiabatic state with the largest overlap with basis state `basis` at `t`.
fn diabatic_label(p: &SystemParams, t: f64, basis: usize) -> usize {
    let tu = frame_unitary(&mixing_angles(p, t).unwrap());
    (0..4)
        .max_by(|&i, &j| tu.0[basis][i].norm().total_cmp(&tu.0[basis][j].norm()))
        .unwrap()
}

#[test]
fn criterion_06_landau_zener() {
    let start = Instant::now();
    let rate = 0.04;
    let p = params(1.0, 0.05, 0.0, 0.0, FieldProfile::LinearRamp { omega_start: -4.0, rate });
    let grid = TimeGrid::new(0.0, 8.0 / rate, 400).unwrap();
    // Start in the adiabatic level that coincides with |+-> far below the
    // crossing and read the survival off the level that coincides with |+->
    // far above it: the lab-basis populations of a finite sweep still carry
    // an O(coupling / field) admixture at both ends.
    let (from, to) = (diabatic_label(&p, grid.t_start, 1), diabatic_label(&p, grid.t_end, 1));
    let psi0 = StateVector4(frame_unitary(&mixing_angles(&p, grid.t_start).unwrap()).column(from));
    let traj = reference_propagate(&p, &grid, &psi0, Frame::Lab, &ReferenceOptions::default()).unwrap();
    let survival = traj.adiabatic_states.as_ref().unwrap().last().unwrap().populations()[to];
    let oracle = (-2.0 * std::f64::consts::PI * (2.0 * p.a_perp).powi(2) / rate).exp();
    let relative = (survival - oracle).abs() / oracle;
    let elapsed = start.elapsed().as_secs_f64();
    let pass = relative <= 0.02 && elapsed <= 30.0;
    report(6, "Landau-Zener survival", pass, format!("P = {survival:.6}, oracle {oracle:.6}, relative error {relative:.3e} (limit 2e-2), {elapsed:.2} s (limit 30 s)"));
    assert!(pass);
}

#[test]
fn criterion_07_adiabatic_scaling() {
    let mut leak = Vec::new();
    let mut ordered = true;
    let mut detail = String::new();
    for stretch in [1.0, 2.0, 4.0] {
        // starting at the steepest point makes the initial kick the dominant leakage
        let timescale = 2.0 * stretch;
        let p = params(
            1.0,
            0.5,
            0.0,
            0.0,
            FieldProfile::TanhRamp { omega_mid: 2.0, amplitude: 1.0, timescale },
        );
        let t_end = 12.0 * timescale;
        let grid = TimeGrid::new(0.0, t_end, (t_end / 0.25) as usize).unwrap();
        let c = compare_detailed(&p, &grid, 1, &ReferenceOptions::default()).unwrap();
        let frame_final = c.reference.adiabatic_states.as_ref().unwrap().last().unwrap();
        let l = frame_final.populations()[2];
        let (z, f) = (c.report.final_infidelity_zeroth(), c.report.final_infidelity_first());
        ordered &= f <= z;
        detail.push_str(&format!("x1/{stretch}: leak {l:.3e} inf0 {z:.3e} inf1 {f:.3e}; "));
        leak.push(l);
    }
    let ratios = [leak[0] / leak[1], leak[1] / leak[2]];
    let pass = leak[0] < 1e-3 && ratios.iter().all(|r| (3.0..=5.0).contains(r)) && ordered;
    report(7, "adiabatic scaling", pass, format!("{detail}ratios {:.3}, {:.3} (range [3, 5])", ratios[0], ratios[1]));
    assert!(pass);
}

#[test]
fn criterion_08_frame_round_trip() {
    let mut worst = 0.0f64;
    let mut t0_offset = f64::INFINITY;
    let profile = FieldProfile::Harmonic { omega0: 0.8, amplitude: 1.2, angular_frequency: 0.9, phase: 0.0 };
    for theta in [0.0, FRAC_PI_2] {
        let p = params(1.1, 0.45, -0.1, theta, profile.clone());
        let grid = TimeGrid::new(0.0, 10.0, 100).unwrap();
        let tu0 = frame_unitary(&mixing_angles(&p, 0.0).unwrap());
        t0_offset = t0_offset.min((tu0 - Matrix4::identity()).max_abs());
        let psi0 = StateVector4::normalized([
            spinpair_core::C64::new(0.3, 0.1),
            spinpair_core::C64::new(-0.5, 0.2),
            spinpair_core::C64::new(0.4, -0.6),
            spinpair_core::C64::new(0.1, 0.25),
        ])
        .unwrap();
        let opts = ReferenceOptions::default();
        let lab = reference_propagate(&p, &grid, &psi0, Frame::Lab, &opts).unwrap();
        let adia = reference_propagate(&p, &grid, &psi0, Frame::Adiabatic, &opts).unwrap();
        let phis = adia.adiabatic_states.as_ref().unwrap();
        for (k, t) in grid.times().into_iter().enumerate() {
            let tu = frame_unitary(&mixing_angles(&p, t).unwrap());
            // chi = T phi, across the two independent integrations and within each
            worst = worst.max(lab.states[k].max_abs_diff(&(tu * phis[k])));
            let lab_phi = lab.adiabatic_states.as_ref().unwrap()[k];
            worst = worst.max(lab.states[k].max_abs_diff(&(tu * lab_phi)));
        }
    }
    let pass = worst <= 5e-9 && t0_offset > 0.1;
    report(8, "frame round trip", pass, format!("max |chi - T phi| = {worst:.3e} (limit 5e-9), min |T(0) - 1| = {t0_offset:.3}"));
    assert!(pass);
}

#[test]
fn criterion_09_integrator_order() {
    let profile = FieldProfile::Harmonic { omega0: 1.0, amplitude: 2.0, angular_frequency: 1.3, phase: 0.2 };
    let mut orders = Vec::new();
    let mut defect = 0.0f64;
    for theta in [0.0, 0.6] {
        let p = params(0.9, 0.4, 0.1, theta, profile.clone());
        let grid = TimeGrid::new(0.0, 5.0, 10).unwrap();
        let finals: Vec<Matrix4> = [8, 16, 32]
            .iter()
            .map(|&m| {
                let (u, _) = propagate_generator(
                    |t| build_hamiltonian(&p, t),
                    &grid,
                    StepControl::Fixed { substeps: m },
                )
                .unwrap();
                *u.last().unwrap()
            })
            .collect();
        let e1 = (finals[0] - finals[1]).max_abs();
        let e2 = (finals[1] - finals[2]).max_abs();
        orders.push((e1 / e2).log2());

        let mut gen = |t| build_hamiltonian(&p, t);
        let h = 5.0 / 320.0;
        for k in 0..320 {
            let step = midpoint_step(&mut gen, k as f64 * h, h).unwrap();
            defect = defect.max(step.unitarity_defect());
        }
    }
    let pass = orders.iter().all(|q| (q - 2.0).abs() <= 0.2) && defect <= 1e-13;
    report(9, "integrator order", pass, format!("measured orders {orders:.3?} (2.0 +/- 0.2), max per-step unitarity defect {defect:.3e} (limit 1e-13)"));
    assert!(pass);
}

#[test]
fn first_order_block_transition_tracks_reference_on_slow_ramp() {
    // starts at the steepest point so the transition is not exponentially small
    let p = params(1.0, 0.5, 0.0, 0.0, FieldProfile::TanhRamp { omega_mid: 4.0, amplitude: 1.0, timescale: 100.0 });
    let grid = TimeGrid::new(0.0, 600.0, 600).unwrap();
    let c = compare_detailed(&p, &grid, 1, &ReferenceOptions::default()).unwrap();
    let reference = 1.0 - c.reference.adiabatic_states.as_ref().unwrap().last().unwrap().populations()[1];
    let approx = c.report.final_beta_sq.block23;
    assert!(c.report.eta_max <= 1e-3);
    assert!((approx - reference).abs() <= (0.1 * reference).max(1e-6), "{approx} vs {reference}");
    // the first-order term captures the leading behaviour well below the absolute floor too
    assert!((approx - reference).abs() <= 0.1 * reference, "{approx} vs {reference}");
}

#[test]
fn first_order_dominates_for_every_initial_state() {
    for theta in [0.0, FRAC_PI_2] {
        for (timescale, mid) in [(30.0, 3.0), (8.0, 3.0)] {
            let p = params(0.9, 0.45, 0.1, theta, FieldProfile::TanhRamp { omega_mid: mid, amplitude: 1.0, timescale });
            let grid = TimeGrid::new(0.0, 6.0 * timescale, 120).unwrap();
            for initial in 0..4 {
                let r = compare_solutions(&p, &grid, initial).unwrap();
                assert!(
                    r.final_infidelity_first() <= r.final_infidelity_zeroth(),
                    "theta {theta} tau {timescale} state {initial}: {} > {}",
                    r.final_infidelity_first(),
                    r.final_infidelity_zeroth()
                );
            }
        }
    }
}

#[test]
fn probability_is_conserved_and_frames_agree() {
    let p = params(1.3, 0.2, -0.05, FRAC_PI_2, FieldProfile::Harmonic { omega0: 0.5, amplitude: 2.0, angular_frequency: 2.0, phase: 0.0 });
    let grid = TimeGrid::new(0.0, 6.0, 60).unwrap();
    let r = compare_solutions(&p, &grid, 3).unwrap();
    assert!(r.diagnostics.max_probability_defect <= 1e-9);
    assert!(r.diagnostics.frame_agreement <= 1e-9);
    let c = compare_detailed(&p, &grid, 3, &ReferenceOptions::default()).unwrap();
    for (a, b) in c.reference.states.iter().zip(&c.first) {
        assert!(infidelity(a, b).unwrap() >= 0.0);
    }
}

#[test]
fn landau_zener_error_shrinks_with_wider_sweeps() {
    let rate = 0.04;
    let a_perp: f64 = 0.05;
    let oracle = (-2.0 * std::f64::consts::PI * (2.0 * a_perp).powi(2) / rate).exp();
    let mut errors = Vec::new();
    for omega0 in [40.0 * a_perp, 80.0 * a_perp] {
        let p = params(1.0, a_perp, 0.0, 0.0, FieldProfile::LinearRamp { omega_start: -omega0, rate });
        let grid = TimeGrid::new(0.0, 2.0 * omega0 / rate, 200).unwrap();
        let traj = reference_propagate(&p, &grid, &StateVector4::basis(1), Frame::Lab, &ReferenceOptions::default()).unwrap();
        errors.push((traj.final_state().populations()[1] - oracle).abs());
    }
    assert!(errors[1] < errors[0], "{errors:?}");
}

const LZ_SCENARIO: &str = r#"{
    "system": {"a_par": 1.0, "a_perp": 0.05, "zeta": 0.0, "orientation": "parallel"},
    "profile": {"kind": "linear_ramp", "omega_start": -4.0, "rate": 0.04},
    "grid": {"t_start": 0.0, "t_end": 200.0, "n_steps": 400},
    "initial_state": "phi3",
    "outputs": {"trajectory": true, "comparison": false, "propagators": false},
    "seed": 20240601
}"#;

#[test]
fn criterion_10_determinism_and_io() {
    use spinpair_core::scenario::{
        export_results, read_report, run_scenario, Command, OutputFormat, ScenarioConfig, REPORT_FILE,
    };
    let scenario = ScenarioConfig::from_json_str(LZ_SCENARIO)
        .unwrap()
        .resolve(std::path::Path::new("."))
        .unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut csv = Vec::new();
    let mut round_trip = true;
    let mut survival = f64::NAN;
    for dir in &dirs {
        let output = run_scenario(&scenario, Command::Propagate).unwrap();
        let report = export_results(output, dir.path(), OutputFormat::Csv).unwrap();
        round_trip &= read_report(&dir.path().join(REPORT_FILE)).unwrap() == report;
        survival = report.summary.as_ref().unwrap().reference_transition.unwrap();
        csv.push(std::fs::read(dir.path().join("trajectory.csv")).unwrap());
    }
    let identical = csv[0] == csv[1];
    let text = String::from_utf8(csv[0].clone()).unwrap();
    let rows_ok = text.lines().count() == 400 + 2 && !text.contains('\r');
    let oracle = (-2.0 * std::f64::consts::PI * 0.01 / 0.04f64).exp();
    let survival_ok = ((survival - oracle) / oracle).abs() <= 0.02;
    let pass = identical && round_trip && rows_ok && survival_ok;
    report(10, "determinism and I/O", pass, format!("byte-identical CSV {identical}, JSON round trip {round_trip}, 401 rows + header {rows_ok}, summary survival {survival:.6}"));
    assert!(pass);
}
