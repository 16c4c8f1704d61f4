//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! straight to stderr so the lines show up even when output is captured.

use std::io::Write;

use flexml::accel_sim::{simulate, CycleReport, SimKnobs};
use flexml::bench::{self, case, fit_energy, timing_report, HELD_OUT_ROWS};
use flexml::compiler::{link_program, MemConfig};
use flexml::energy_model::{estimate, EnergyParams, OperatingPoint};
use flexml::gen::{random_workload, rng};
use flexml::ir::layer::{Activation, LayerDescriptor};
use flexml::ir::requant::{NlFunction, NlfgTable, NLFG_IN_FRAC_BITS, NLFG_OUT_SCALE};
use flexml::ir::svm::{Norm, SvmModel};
use flexml::ir::tensor::Precision;
use flexml::oracle::{nlfg_exact, svm_decision_ref, svm_norm_ref};
use flexml::scenario::{duty_cycle_average, preset_kws, preset_machine_monitoring, run_scenario, ScenarioEnv};
use flexml::wuc::{check_sequencing, sleep_power, wake_latency, DomainMap, PowerMode, Wuc, WucParams};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timing(layers: &[LayerDescriptor], knobs: SimKnobs) -> CycleReport {
    let w = random_workload("acc", layers, 1);
    let cfg = MemConfig::default();
    let (img, _) = link_program(&w, &cfg).unwrap();
    simulate(&img, &cfg, &SimKnobs { functional: false, ..knobs }).unwrap().report
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    (got / want - 1.0).abs() <= tol
}

fn random_layer(kind: usize, p: Precision, r: &mut impl Rng) -> LayerDescriptor {
    let act = match r.gen_range(0..4) {
        0 | 1 => Activation::None,
        2 => Activation::Relu,
        _ if p == Precision::Int8 => [Activation::Tanh, Activation::Sigmoid][r.gen_range(0..2)],
        _ => Activation::Relu,
    };
    let shift = r.gen_range(0..p.bits() + 6);
    let d = match kind {
        0 => {
            let f = [1, 3, 5][r.gen_range(0..3)];
            LayerDescriptor::conv2d(r.gen_range(1..12), r.gen_range(1..40), r.gen_range(1..12), r.gen_range(1..7), f, f)
        }
        1 => LayerDescriptor::conv1d_dilated(
            r.gen_range(1..12),
            r.gen_range(1..40),
            r.gen_range(1..24),
            [1, 3, 5][r.gen_range(0..3)],
            [1, 2, 4][r.gen_range(0..3)],
        ),
        2 => {
            let f = [1, 3, 5][r.gen_range(0..3)];
            LayerDescriptor::deconv2d(
                r.gen_range(1..10),
                r.gen_range(1..36),
                r.gen_range(1..7),
                r.gen_range(1..5),
                f,
                r.gen_range(1..=2),
            )
        }
        3 => LayerDescriptor::dense(r.gen_range(1..80), r.gen_range(1..48), [1, 16][r.gen_range(0..2)]),
        4 => {
            let norm = if r.gen_bool(0.5) { Norm::L1 } else { Norm::L2 };
            return LayerDescriptor::svm_norm(r.gen_range(1..64), r.gen_range(1..40), r.gen_range(1..4))
                .with_norm(norm)
                .with_precision(p);
        }
        _ => {
            return LayerDescriptor::maxpool(r.gen_range(1..24), r.gen_range(1..9), r.gen_range(1..9), r.gen_range(1..=3))
                .with_precision(p);
        }
    };
    d.with_precision(p).with_shift(shift).with_activation(act)
}

const KINDS: [&str; 6] = ["CONV2D", "CONV1D_DILATED", "DECONV2D", "DENSE", "SVM_NORM", "MAXPOOL"];

fn c1_oracle_equivalence() -> Outcome {
    let start = std::time::Instant::now();
    let cfg = MemConfig::default();
    let mut failures = Vec::new();
    let mut runs = 0;
    for (kind, name) in KINDS.iter().enumerate() {
        for p in [Precision::Int2, Precision::Int4, Precision::Int8] {
            let mut r = rng(0xacc0 + kind as u64 * 16 + p.bits() as u64);
            for i in 0..200 {
                let d = random_layer(kind, p, &mut r);
                let w = random_workload("c1", &[d.clone()], r.gen());
                let res = link_program(&w, &cfg).and_then(|(img, golden)| {
                    let sim = simulate(&img, &cfg, &SimKnobs::default())?;
                    Ok(sim.final_output() == golden.final_output())
                });
                runs += 1;
                match res {
                    Ok(true) => {}
                    Ok(false) => failures.push(format!("{name} {p} #{i} differs")),
                    Err(e) => failures.push(format!("{name} {p} #{i}: {e}")),
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let first = failures.first().cloned().unwrap_or_default();
    outcome(
        failures.is_empty() && secs < 300.0,
        format!("{runs} random layers, {} mismatches, {secs:.1} s {first}", failures.len()),
    )
}

fn c2_precision_scaling() -> Outcome {
    let r = |p| timing(&[bench::cnn3x3(p)], SimKnobs::default());
    let (r8, r4, r2) = (r(Precision::Int8), r(Precision::Int4), r(Precision::Int2));
    let exact = r4.phases.compute * 2 == r8.phases.compute && r2.phases.compute * 4 == r8.phases.compute;
    let e4 = r8.total_cycles as f64 / r4.total_cycles as f64;
    let e2 = r8.total_cycles as f64 / r2.total_cycles as f64;
    let pass = exact && within(e4, 1.17 / 0.586, 0.02) && within(e2, 2.35 / 0.586, 0.02);
    outcome(
        pass,
        format!(
            "compute {}/{}/{} cycles, end-to-end speedup {e4:.4} (table {:.4}) and {e2:.4} (table {:.4})",
            r8.phases.compute,
            r4.phases.compute,
            r2.phases.compute,
            1.17 / 0.586,
            2.35 / 0.586
        ),
    )
}

fn c3_sparsity() -> Outcome {
    let dense = timing(&[bench::cnn3x3(Precision::Int8)], SimKnobs::default()).total_cycles as f64;
    let s50 = dense / timing(&[bench::cnn3x3_sparse(16)], SimKnobs::default()).total_cycles as f64;
    let s87 = dense / timing(&[bench::cnn3x3_sparse(28)], SimKnobs::default()).total_cycles as f64;
    outcome(
        (1.6..=2.0).contains(&s50) && (5.5..=8.0).contains(&s87),
        format!("speedup {s50:.3} at 16/32 pruned, {s87:.3} at 28/32 pruned"),
    )
}

fn c4_deconv() -> Outcome {
    let d = bench::deconv_standin();
    let skip = timing(&[d.clone()], SimKnobs::default());
    let naive = timing(
        &[d],
        SimKnobs {
            naive_deconv: true,
            ..Default::default()
        },
    );
    let ratio = naive.total_cycles as f64 / skip.total_cycles as f64;
    let ops = skip.macs_nominal as f64 / skip.macs_effective as f64;
    let table = 5.78 / 2.49;
    outcome(
        ratio >= 1.8 && within(ops, table, 0.05),
        format!(
            "naive/skipping cycles {ratio:.3} ({} vs {}), nominal/effective ops {ops:.3} vs {table:.3}",
            naive.total_cycles, skip.total_cycles
        ),
    )
}

fn c5_utilization() -> Outcome {
    let r = timing(&[bench::cnn3x3(Precision::Int8)], SimKnobs::default());
    let u: Vec<f64> = [5e6, 150e6].iter().map(|&f| r.gops(f) * 1e9 / (64.0 * 2.0 * f)).collect();
    outcome(
        u.iter().all(|x| (0.88..=0.95).contains(x)),
        format!(
            "{:.3} GOPS -> {:.4} at 5 MHz, {:.2} GOPS -> {:.4} at 150 MHz",
            r.gops(5e6),
            u[0],
            r.gops(150e6),
            u[1]
        ),
    )
}

fn c6_energy() -> Outcome {
    let cal = fit_energy(&EnergyParams::default()).unwrap();
    let op = OperatingPoint::efficient();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, want) in HELD_OUT_ROWS {
        let e = estimate(&timing_report(&case(name).unwrap()).unwrap(), &op, &cal.params).unwrap();
        let ok = within(e.power_w, want, 0.25);
        pass &= ok;
        parts.push(format!("{name} {:.1}/{:.0}", e.power_w * 1e6, want * 1e6));
    }
    let cnn = timing_report(&case("cnn-int8").unwrap()).unwrap();
    for (o, tops, gops) in [(OperatingPoint::efficient(), 2.5, 0.586), (OperatingPoint::fast(), 0.8, 17.6)] {
        let e = estimate(&cnn, &o, &cal.params).unwrap();
        pass &= within(e.tops_per_w, tops, 0.15) && within(e.gops, gops, 0.15);
        parts.push(format!("{:.3} TOPS/W at {:.3} GOPS", e.tops_per_w, e.gops));
    }
    outcome(pass, format!("4 groups fit on 4 rows; uW {}", parts.join(", ")))
}

fn c7_wuc() -> Outcome {
    let exact_latency =
        (wake_latency(33e3) * 1e6).round() == 788.0 && (wake_latency(40e6) * 1e9 - 650.0).abs() < 1e-6;
    let (p, map) = (WucParams::default(), DomainMap::default());
    let uw = |m| sleep_power(m, 33e3, &p, &map).unwrap() * 1e6;
    let powers = [uw(PowerMode::DeepSleep), uw(PowerMode::LpDataAcq), uw(PowerMode::DataAcq)];
    let exact_power = powers.iter().zip([1.7, 23.6, 67.0]).all(|(g, w)| (g - w).abs() < 1e-9);
    let mut r = rng(0x0c7);
    let mut bad = 0;
    for _ in 0..1000 {
        let mut w = Wuc::new(map.clone(), [33e3, 1e6, 40e6][r.gen_range(0..3)], 5e6);
        for _ in 0..r.gen_range(1..30) {
            let m = PowerMode::ALL[r.gen_range(0..PowerMode::ALL.len())];
            let rtc = r.gen_bool(0.2).then(|| r.gen_range(0.0..10.0));
            let _ = w.request_mode(m, rtc);
        }
        bad += check_sequencing(&w.log).is_err() as usize;
    }
    outcome(
        exact_latency && exact_power && bad == 0,
        format!(
            "wake {:.1} us / {:.1} ns, sleep {:.4}/{:.4}/{:.4} uW, {bad} of 1000 random sequences misordered",
            wake_latency(33e3) * 1e6,
            wake_latency(40e6) * 1e9,
            powers[0],
            powers[1],
            powers[2]
        ),
    )
}

fn c8_scenario() -> Outcome {
    let cal = fit_energy(&EnergyParams::default()).unwrap();
    let mut env = ScenarioEnv::new(Some(cal.params));
    let (k, m) = (preset_kws(), preset_machine_monitoring());
    env.load_bench_programs(&k).unwrap();
    env.load_bench_programs(&m).unwrap();
    let kws = run_scenario(&k, &env).unwrap().summary.average_w;
    let mm = run_scenario(&m, &env).unwrap().summary.average_w;
    let cf = duty_cycle_average(164e-6, 1.7e-6, 0.05).unwrap();
    let cf_ok = (cf * 1e7).round() / 10.0 == 9.8 && (cf - (164e-6 * 0.05 + 1.7e-6 * 0.95)).abs() < 1e-18;
    outcome(
        within(kws, 173e-6, 0.15) && within(mm, 9.5e-6, 0.15) && cf_ok,
        format!(
            "KWS {:.1} uW (173), monitoring {:.2} uW (9.5), closed form {:.3} uW",
            kws * 1e6,
            mm * 1e6,
            cf * 1e6
        ),
    )
}

fn c9_nlfg() -> Outcome {
    let mut worst = [0.0f64; 2];
    let mut worst_q = [0i32; 2];
    for (i, f) in [NlFunction::Tanh, NlFunction::Sigmoid].into_iter().enumerate() {
        let t = NlfgTable::get(f);
        for code in -128..=127 {
            let x = code as f64 / (1 << NLFG_IN_FRAC_BITS) as f64;
            let real = match f {
                NlFunction::Tanh => x.tanh(),
                NlFunction::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            } * NLFG_OUT_SCALE;
            let y = t.eval(code);
            // outputs saturate at the 8-bit code range
            let real = real.clamp(-128.0, 127.0);
            worst[i] = worst[i].max((y as f64 - real).abs());
            worst_q[i] = worst_q[i].max((y - nlfg_exact(code, f)).abs());
        }
    }
    outcome(
        worst.iter().all(|&e| e <= 2.0),
        format!(
            "max error over 256 codes: tanh {:.3} LSB ({} vs rounded), sigmoid {:.3} LSB ({} vs rounded)",
            worst[0], worst_q[0], worst[1], worst_q[1]
        ),
    )
}

/// Double-double arithmetic for the independent decision evaluation.
#[derive(Clone, Copy)]
struct Dd(f64, f64);

impl Dd {
    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let v = s - a;
        Dd(s, (a - (s - v)) + (b - v))
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.0, o.0);
        let t = Dd::two_sum(self.1, o.1);
        let s = Dd::two_sum(s.0, s.1 + t.0);
        Dd::two_sum(s.0, s.1 + t.1)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p);
        Dd::two_sum(p, e + self.0 * o.1 + self.1 * o.0)
    }

    fn mul_f(self, k: f64) -> Dd {
        self.mul(Dd(k, 0.0))
    }

    fn div_f(self, d: f64) -> Dd {
        let q = self.0 / d;
        let r = self.add(Dd(d, 0.0).mul(Dd(-q, 0.0)));
        Dd::two_sum(q, r.0 / d)
    }

    /// exp(x) by reduction x = k ln2 + r and a Taylor series in r.
    fn exp(self) -> Dd {
        const LN2: Dd = Dd(std::f64::consts::LN_2, 2.319_046_813_846_299_6e-17);
        let k = (self.0 / LN2.0).round();
        let r = self.add(LN2.mul_f(-k));
        let mut term = Dd(1.0, 0.0);
        let mut sum = Dd(1.0, 0.0);
        for n in 1..30 {
            term = term.mul(r).div_f(n as f64);
            sum = sum.add(term);
        }
        Dd(sum.0 * 2f64.powi(k as i32), sum.1 * 2f64.powi(k as i32))
    }
}

fn c10_svm() -> Outcome {
    let cfg = MemConfig::default();
    let mut r = rng(0x5f0);
    let mut worst = 0.0f64;
    let mut norm_mismatch = 0;
    for _ in 0..100 {
        let (d, n) = (r.gen_range(1..64), r.gen_range(1..64));
        let norm = if r.gen_bool(0.5) { Norm::L1 } else { Norm::L2 };
        let w = random_workload("c10", &[LayerDescriptor::svm_norm(d, n, 1).with_norm(norm)], r.gen());
        let sv = w.layers[0].weights.clone().unwrap();
        let alphas: Vec<f64> = (0..n).map(|_| r.gen_range(0.01..1.0)).collect();
        let sum_alpha: f64 = alphas.iter().sum();
        let sigma = r.gen_range(20.0..400.0);
        let model = SvmModel::new(sv, alphas, sigma, r.gen_range(0.0..0.5) * sum_alpha * 0.1, norm).unwrap();
        let want = svm_norm_ref(w.input.data(), &model).unwrap();
        let (img, _) = link_program(&w, &cfg).unwrap();
        let got = simulate(&img, &cfg, &SimKnobs::default()).unwrap();
        let got = got.final_output().unwrap().data().to_vec();
        norm_mismatch += (got != want) as usize;

        let f = svm_decision_ref(&got, &model);
        let denom = 2.0 * sigma * sigma;
        let mut acc = Dd(-model.bias, 0.0);
        for (&ni, &a) in got.iter().zip(&model.alphas) {
            let e = Dd(-(ni as f64), 0.0).div_f(denom).exp();
            acc = acc.add(e.mul_f(a));
        }
        let hp = acc.0 + acc.1;
        worst = worst.max(((f - hp) / hp).abs());
    }
    outcome(
        worst <= 1e-12 && norm_mismatch == 0,
        format!("100 models: worst relative error {worst:.2e}, {norm_mismatch} norm mismatches"),
    )
}

#[test]
fn acceptance_criteria() {
    let checks: [(&str, fn() -> Outcome); 10] = [
        ("oracle equivalence", c1_oracle_equivalence),
        ("precision throughput scaling", c2_precision_scaling),
        ("sparsity speedups", c3_sparsity),
        ("deconvolution zero skipping", c4_deconv),
        ("peak utilization", c5_utilization),
        ("energy model calibration", c6_energy),
        ("wake-up controller", c7_wuc),
        ("scenario averages", c8_scenario),
        ("NLFG accuracy", c9_nlfg),
        ("SVM decision", c10_svm),
    ];
    let results: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = checks.iter().map(|(_, f)| s.spawn(*f)).collect();
        handles.into_iter().map(|h| h.join().expect("criterion panicked")).collect()
    });
    let mut err = std::io::stderr().lock();
    let mut failed = Vec::new();
    for (i, ((name, _), o)) in checks.iter().zip(&results).enumerate() {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        writeln!(err, "[{tag}] {:>2}. {name}: {}", i + 1, o.detail).unwrap();
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
