//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Expected values come from closed forms or from direct
//! re-implementations below, never from the code under test.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use pgnbsc::bgwo::{self, BgwoConfig, WolfPack};
use pgnbsc::dataset::{balance_upsample, hash_split, row_hash, FeatureMatrix, LabelScheme};
use pgnbsc::evalreport::{build_heatmap, evaluate, ClassCounts, HeatmapGrid};
use pgnbsc::features::{higuchi_fd, hjorth, katz_fd, kurtosis, nonlinear_energy, spectral_entropy_stats, FeatureParams, FeatureVector};
use pgnbsc::nbayes::{ClassLabel, NbClassifier};
use pgnbsc::preprocess::{first_imf, notch_60, resample_250, FilterSpec};
use pgnbsc::signal_io::{Channel, Recording, SeizureType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

fn check(ok: bool, what: String) -> Result<String, String> {
    if ok {
        Ok(what)
    } else {
        Err(what)
    }
}

/// Runs every check in order and joins their messages; the first failure
/// fails the criterion but later checks still report.
fn all(results: Vec<Result<String, String>>) -> Outcome {
    let failed = results.iter().any(|r| r.is_err());
    let text = results
        .into_iter()
        .map(|r| match r {
            Ok(s) => s,
            Err(s) => format!("FAILED[{s}]"),
        })
        .collect::<Vec<_>>()
        .join("; ");
    if failed {
        Err(text)
    } else {
        Ok(text)
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let within = took <= limit;
    match out {
        Ok(s) if within => Ok(format!("{s}; {:.2}s <= {:.0}s", took.as_secs_f64(), limit.as_secs_f64())),
        Ok(s) => Err(format!("{s}; took {:.2}s > {:.0}s", took.as_secs_f64(), limit.as_secs_f64())),
        Err(s) => Err(format!("{s}; {:.2}s", took.as_secs_f64())),
    }
}

fn sine(freq: f64, rate: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate).sin()).collect()
}

fn normal_samples(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn criterion_1() -> Outcome {
    timed(Duration::from_secs(10), || {
        let ramp: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let h_ramp = higuchi_fd(&ramp, 8).map_err(|e| e.to_string())?;
        let h_noise = higuchi_fd(&normal_samples(5000, 7), 8).map_err(|e| e.to_string())?;
        let k_ramp = katz_fd(&ramp).map_err(|e| e.to_string())?;
        let (f, fs) = (10.0, 250.0);
        let s = sine(f, fs, 450);
        let mobility = hjorth(&s).map_err(|e| e.to_string())?.0;
        let mobility_ref = 2.0 * (PI * f / fs).sin();
        let tk = nonlinear_energy(&s).map_err(|e| e.to_string())?;
        let tk_ref = (2.0 * PI * f / fs).sin().powi(2);
        let p = FeatureParams::default();
        let se_sine = spectral_entropy_stats(&s, &p).map_err(|e| e.to_string())?.0;
        let se_noise = spectral_entropy_stats(&normal_samples(450, 3), &p).map_err(|e| e.to_string())?.0;
        let k = kurtosis(&normal_samples(100_000, 11)).map_err(|e| e.to_string())?;
        all(vec![
            check((h_ramp - 1.0).abs() <= 0.05, format!("higuchi(ramp)={h_ramp:.4}")),
            check((h_noise - 2.0).abs() <= 0.15, format!("higuchi(noise)={h_noise:.4}")),
            check((k_ramp - 1.0).abs() <= 1e-9, format!("katz(ramp)-1={:.1e}", k_ramp - 1.0)),
            check(
                ((mobility - mobility_ref) / mobility_ref).abs() <= 0.01,
                format!("mobility={mobility:.5} vs {mobility_ref:.5}"),
            ),
            check(((tk - tk_ref) / tk_ref).abs() <= 0.01, format!("TK={tk:.5} vs {tk_ref:.5}")),
            check(se_sine < 0.35, format!("spec-entropy(sine)={se_sine:.3}")),
            check(se_noise > 0.85, format!("spec-entropy(noise)={se_noise:.3}")),
            check((k - 3.0).abs() <= 0.1, format!("kurtosis={k:.4}")),
        ])
    })
}

fn one_channel(samples: Vec<f64>, rate: f64) -> Recording {
    Recording::new(vec![Channel { label: "Cz".into(), samples }], rate).expect("valid recording")
}

/// Amplitude of a sinusoid at `freq` by least-squares projection.
fn tone_amplitude(x: &[f64], freq: f64, rate: f64) -> f64 {
    let (mut c, mut s) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let w = 2.0 * PI * freq * i as f64 / rate;
        c += v * w.cos();
        s += v * w.sin();
    }
    2.0 * (c * c + s * s).sqrt() / x.len() as f64
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn criterion_2() -> Outcome {
    timed(Duration::from_secs(10), || {
        let spec = FilterSpec::default();
        let rec = one_channel(sine(10.0, 400.0, 1600), 400.0);
        let out = resample_250(&rec, &spec).map_err(|e| e.to_string())?;
        let y = &out.channels()[0].samples;
        let n = y.len();
        let mut buf: Vec<Complex<f64>> = y.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let (peak_bin, peak) = buf[1..n / 2]
            .iter()
            .enumerate()
            .map(|(i, c)| (i + 1, c.norm()))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        let peak_hz = peak_bin as f64 * 250.0 / n as f64;
        let amp = 2.0 * peak / n as f64;

        let notch = |f: f64| -> Result<f64, String> {
            let x = sine(f, 250.0, 5000);
            let y = notch_60(&one_channel(x, 250.0), &spec).map_err(|e| e.to_string())?;
            // steady state: skip the first 2000 samples of the transient
            Ok(tone_amplitude(&y.channels()[0].samples[2000..], f, 250.0))
        };
        let att_60 = -20.0 * notch(60.0)?.log10();
        let att_10 = -20.0 * notch(10.0)?.log10();

        let rate = 250.0;
        let fast = sine(50.0, rate, 1000);
        let x: Vec<f64> = sine(5.0, rate, 1000).iter().zip(&fast).map(|(a, b)| a + b).collect();
        let imf = first_imf(&x, spec.emd_max_sift, spec.emd_sd_threshold).map_err(|e| e.to_string())?;
        let corr = pearson(&imf.samples, &fast);
        all(vec![
            check((peak_hz - 10.0).abs() <= 0.2, format!("resampled peak {peak_hz:.3} Hz")),
            check((amp - 1.0).abs() <= 0.02, format!("amplitude {amp:.4}")),
            check(att_60 >= 30.0, format!("60 Hz attenuation {att_60:.1} dB")),
            check(att_10.abs() <= 1.0, format!("10 Hz attenuation {att_10:.3} dB")),
            check(corr > 0.95, format!("IMF1 corr with 50 Hz {corr:.4}")),
        ])
    })
}

fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Rule-of-thumb width written out independently of the library.
fn oracle_bandwidth(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = quantile_linear(&s, 0.75) - quantile_linear(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        1e-6 * (1.0 + mean.abs())
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n_classes = rng.random_range(2..=3);
        let width = rng.random_range(1..=2);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut targets = Vec::new();
        for c in 0..n_classes {
            for _ in 0..rng.random_range(1..=5) {
                rows.push((0..width).map(|_| rng.random_range(-3.0..3.0)).collect());
                targets.push(c);
            }
        }
        let classes: Vec<ClassLabel> = SeizureType::RAW[..n_classes].iter().map(|&t| ClassLabel::Seizure(t)).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let model = NbClassifier::fit(&refs, &targets, classes, &vec![true; width], "kde").map_err(|e| e.to_string())?;
        let x: Vec<f64> = (0..width).map(|_| rng.random_range(-4.0..4.0)).collect();
        let got = model.log_posterior(&x).map_err(|e| e.to_string())?;
        for (c, &got_c) in got.iter().enumerate().take(n_classes) {
            let mut expected = (1.0 / n_classes as f64).ln();
            for j in 0..width {
                let values: Vec<f64> = rows.iter().zip(&targets).filter(|(_, &t)| t == c).map(|(r, _)| r[j]).collect();
                let h = oracle_bandwidth(&values);
                let mut sum = 0.0;
                for v in &values {
                    let z = (x[j] - v) / h;
                    sum += (-0.5 * z * z).exp() / (h * (2.0 * PI).sqrt());
                }
                expected += (sum / values.len() as f64).max(1e-300).ln();
            }
            let err = (got_c - expected).abs() / expected.abs().max(1.0);
            worst = worst.max(err);
            if err > 1e-9 {
                return Err(format!("case {case} class {c}: {got_c} vs {expected}"));
            }
        }
    }
    Ok(format!("100 random cases, max scaled error {worst:.1e} <= 1e-9"))
}

fn planted(seed: u64, n: usize) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { SeizureType::Absence } else { SeizureType::Tonic };
            let shift = if label == SeizureType::Absence { 1.0 } else { -1.0 };
            let values = (0..50)
                .map(|j| Distribution::<f64>::sample(&StandardNormal, &mut rng) + if j < 5 { shift } else { 0.0 })
                .collect::<Vec<f64>>();
            FeatureVector { values, label, source_id: format!("p{i}"), window_index: 0, flags: Default::default() }
        })
        .collect();
    FeatureMatrix::new((0..50).map(|j| format!("f{j}")).collect(), rows, LabelScheme::SixClass).expect("valid")
}

fn criterion_4() -> Outcome {
    timed(Duration::from_secs(60), || {
        let cfg = BgwoConfig::default();
        let mut hits = 0;
        let mut monotone = true;
        let mut nonempty = true;
        let mut informative_first = true;
        for seed in 0..10u64 {
            let m = planted(1000 + seed, 200);
            let (train, eval) = hash_split(&m, 70);
            // single-column costs on a large fresh draw from the same generator:
            // every planted column must beat every noise column
            let fresh = planted(5000 + seed, 2000);
            let single = |j: usize| {
                let mask: Vec<bool> = (0..50).map(|k| k == j).collect();
                bgwo::fitness(&mask, &m, &fresh, SeizureType::Absence, "kde").unwrap()
            };
            let worst_informative = (0..5).map(single).fold(f64::MIN, f64::max);
            let best_noise = (5..50).map(single).fold(f64::MAX, f64::min);
            informative_first &= worst_informative < best_noise;
            let s = bgwo::select_features(&train, &eval, SeizureType::Absence, &cfg, "kde", seed).map_err(|e| e.to_string())?;
            if s.mask[..5].iter().filter(|&&b| b).count() >= 4 {
                hits += 1;
            }
            monotone &= s.trace.windows(2).all(|w| w[1] <= w[0]);
            nonempty &= s.mask.iter().any(|&b| b);
        }
        let plateau = [0.5, 0.4, 0.3, 0.29, 0.29, 0.29, 0.29, 0.29, 0.29];
        let fires = bgwo::trace_plateaued(&plateau, 6, 0.05);
        // a flat fitness landscape is a plateau from the start; stop must wait for 6 steps
        let flat = |_: &[bool]| 0.5;
        let mut pack = WolfPack::init(20, &cfg, 1, &flat).map_err(|e| e.to_string())?;
        let mut first_stop = None;
        while pack.t < 20 {
            if bgwo::should_stop(&pack, &cfg) {
                first_stop = Some(pack.t);
                break;
            }
            pack = pack.step(&cfg, &flat).map_err(|e| e.to_string())?;
        }
        all(vec![
            check(informative_first, "single-column oracle ranks planted columns first".into()),
            check(hits >= 8, format!("{hits}/10 seeds recover >=4/5 planted columns")),
            check(monotone, "best_history non-increasing".into()),
            check(nonempty, "masks non-empty".into()),
            check(fires, "plateau trace stops".into()),
            check(first_stop == Some(6), format!("flat run first stops at t={first_stop:?}")),
        ])
    })
}

fn criterion_5() -> Outcome {
    let f1 = ClassCounts { tp: 4, tn: 0, fp: 2, fn_: 2 }.f1();
    let acc = ClassCounts { tp: 3, tn: 5, fp: 1, fn_: 1 }.accuracy().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let classes = SeizureType::RAW;
    let mut conserved = true;
    let mut round_trip = true;
    for _ in 0..1000 {
        let n = rng.random_range(1..300);
        let truths: Vec<SeizureType> = (0..n).map(|_| classes[rng.random_range(0..6)]).collect();
        let preds: Vec<SeizureType> = (0..n).map(|_| classes[rng.random_range(0..6)]).collect();
        let g = build_heatmap(&classes, &truths, &preds).map_err(|e| e.to_string())?;
        for (i, c) in classes.iter().enumerate() {
            let prevalence = truths.iter().filter(|t| *t == c).count() as u64;
            let tp = truths.iter().zip(&preds).filter(|(t, p)| *t == c && *p == c).count() as u64;
            let fp = truths.iter().zip(&preds).filter(|(t, p)| *t != c && *p == c).count() as u64;
            let fn_ = truths.iter().zip(&preds).filter(|(t, p)| *t == c && *p != c).count() as u64;
            conserved &= g.grid[i].iter().sum::<u64>() == prevalence && g.grid[i][i] == tp && g.fp[i] == fp && g.fn_[i] == fn_;
        }
        let correct = truths.iter().zip(&preds).filter(|(t, p)| t == p).count();
        let r = evaluate("x", &classes, &truths, &preds).map_err(|e| e.to_string())?;
        conserved &= r.micro_accuracy == correct as f64 / n as f64;
        round_trip &= HeatmapGrid::from_csv(&g.to_csv()).map_err(|e| e.to_string())? == g;
    }
    all(vec![
        check(f1 == Some(2.0 / 3.0), format!("F1(4,2,2)={f1:?}")),
        check(acc == 0.8, format!("accuracy(3,5,1,1)={acc}")),
        check(round_trip, "heatmap CSV round-trips".into()),
        check(conserved, "grid/count conservation on 1000 random sets".into()),
    ])
}

fn counts_matrix(a: usize, b: usize) -> FeatureMatrix {
    let rows = (0..a + b)
        .map(|i| FeatureVector {
            values: vec![i as f64, (i * i) as f64],
            label: if i < a { SeizureType::Absence } else { SeizureType::Tonic },
            source_id: format!("r{i}"),
            window_index: i,
            flags: Default::default(),
        })
        .collect();
    FeatureMatrix::new(vec!["x".into(), "y".into()], rows, LabelScheme::SixClass).expect("valid")
}

fn criterion_6() -> Outcome {
    let mut results = Vec::new();
    for (a, b, want_b) in [(100, 30, 90), (100, 70, 70)] {
        let m = counts_matrix(a, b);
        let out = balance_upsample(&m).map_err(|e| e.to_string())?;
        let counts = out.class_counts();
        let (ca, cb) = (counts[&SeizureType::Absence], counts[&SeizureType::Tonic]);
        results.push(check(ca == a && cb == want_b, format!("{{{a},{b}}} -> {{{ca},{cb}}}")));
        let source: std::collections::HashSet<[u8; 32]> = m.rows().iter().map(row_hash).collect();
        let kept = m.rows().iter().all(|r| out.rows().contains(r));
        let dup_ok = out.rows().iter().all(|r| source.contains(&row_hash(r)));
        results.push(check(kept && dup_ok, "no row removed, copies hash-identical".into()));
    }
    all(results)
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_pgnbsc"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`{}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn micro_accuracy(dir: &Path) -> Result<f64, String> {
    let text = std::fs::read_to_string(dir.join("manifest.json")).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    v["micro_accuracy"].as_f64().ok_or_else(|| "manifest lacks micro_accuracy".into())
}

fn criterion_7(root: &Path) -> Outcome {
    let m3 = root.join("model3-a");
    let m1 = root.join("model1");
    let run3 = timed(Duration::from_secs(300), || {
        run_cli(&["run-all", "--model", "3", "--seed", "42", "--out", m3.to_str().unwrap()])?;
        Ok("model 3 run".into())
    });
    let run3 = run3?;
    run_cli(&["run-all", "--model", "1", "--seed", "42", "--out", m1.to_str().unwrap()])?;
    let (a3, a1) = (micro_accuracy(&m3)?, micro_accuracy(&m1)?);
    all(vec![
        Ok(run3),
        check(m3.join("report/heatmap.svg").exists(), "report written".into()),
        check(a3 >= 0.80, format!("model 3 micro accuracy {a3:.4}")),
        check(a3 >= a1, format!("model 1 micro accuracy {a1:.4}")),
    ])
}

fn criterion_8(root: &Path) -> Outcome {
    let a = root.join("model3-a");
    let b = root.join("model3-b");
    run_cli(&["run-all", "--model", "3", "--seed", "42", "--out", b.to_str().unwrap()])?;
    let mut results = Vec::new();
    for name in ["masks.json", "model.json", "report/metrics.csv", "report/heatmap.csv", "test_features.csv"] {
        let x = std::fs::read(a.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = std::fs::read(b.join(name)).map_err(|e| format!("{name}: {e}"))?;
        results.push(check(x == y, format!("{name} identical")));
    }
    all(results)
}

fn main() {
    // `cargo test` passes harness flags such as --nocapture or a filter; a
    // filter that names nothing here skips the suite.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filter.is_empty() && !filter.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }
    let root = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion<'_>> = vec![
        ("1 feature oracles", Box::new(criterion_1)),
        ("2 DSP", Box::new(criterion_2)),
        ("3 NB oracle", Box::new(criterion_3)),
        ("4 BGWO planted recovery", Box::new(criterion_4)),
        ("5 metrics", Box::new(criterion_5)),
        ("6 balancing", Box::new(criterion_6)),
        ("7 end-to-end run-all", Box::new(|| criterion_7(root.path()))),
        ("8 determinism", Box::new(|| criterion_8(root.path()))),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
