//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use ndarray::Array2;
use qctrl_cli::{ControlSummaryFile, EvalReport, EXIT_USAGE};
use qctrl_core::linalg::{expm_minus_i, hermitian_eig, unitarity_defect};
use qctrl_core::models::{graybox_spec, Checkpoint, GrayboxModel};
use qctrl_core::quantum::{born_probabilities, hermitianize};
use qctrl_core::simulator::{
    generate_split, measure_powers, sinkhorn_normalize, SinkhornConfig, Split,
};
use qctrl_core::{ChipGroundTruth, ComplexMatrix, MeasurementMode, Model, C64};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2024;

type Check = Result<(bool, String), String>;

fn qctrl(args: &[&str], dir: &Path, threads: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qctrl"));
    cmd.args(args).arg("--out-dir").arg(dir);
    if let Some(n) = threads {
        cmd.env("QCTRL_THREADS", n.to_string());
    }
    cmd.output().expect("qctrl binary runs")
}

fn qctrl_ok(args: &[&str], dir: &Path) -> Result<String, String> {
    let out = qctrl(args, dir, None);
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    } else {
        Err(format!(
            "`qctrl {}` failed ({}): {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: PathBuf) -> Result<T, String> {
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn final_train_mse(dir: &Path, model: &str) -> Result<f64, String> {
    let ck: Checkpoint = read_json(dir.join(format!("checkpoint_{model}.json")))?;
    ck.training
        .map(|t| t.final_train_mse)
        .ok_or_else(|| format!("{model} checkpoint has no training record"))
}

fn read_csv(path: PathBuf) -> Result<(Vec<String>, Vec<Vec<String>>), String> {
    let mut r = csv::Reader::from_path(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header = r
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    Ok((header, rows))
}

fn random_controls(rng: &mut ChaCha8Rng) -> [f64; 4] {
    std::array::from_fn(|_| rng.gen_range(-1.0..=1.0))
}

fn structural_invariants() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_unitary: f64 = 0.0;
    let mut worst_column: f64 = 0.0;
    for _ in 0..1000 {
        let a = ComplexMatrix::from_fn(3, |_, _| {
            C64::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0))
        });
        let u = expm_minus_i(&hermitianize(&a), 1.0).map_err(|e| e.to_string())?;
        worst_unitary = worst_unitary.max(unitarity_defect(&u));
        for s in born_probabilities(&u)
            .map_err(|e| e.to_string())?
            .column_sums()
        {
            worst_column = worst_column.max((s - 1.0).abs());
        }
    }
    let mut worst_hermitian: f64 = 0.0;
    let nets: Vec<GrayboxModel> = (0..10)
        .map(|s| GrayboxModel::new(MeasurementMode::Power, s))
        .collect();
    for i in 0..1000 {
        let h = nets[i % 10]
            .predict(&random_controls(&mut rng))
            .map_err(|e| e.to_string())?
            .hamiltonian;
        worst_hermitian = worst_hermitian.max(h.hermiticity_defect());
        for k in 0..3 {
            worst_hermitian = worst_hermitian.max(h[(k, k)].im.abs());
        }
    }
    let noisy = ChipGroundTruth {
        sigma: 0.02,
        ..ChipGroundTruth::reference()
    };
    let mut worst_sinkhorn: f64 = 0.0;
    for i in 0..1000 {
        let raw: Vec<f64> = if i % 2 == 0 {
            (0..9).map(|_| rng.gen_range(0.01..1.0)).collect()
        } else {
            measure_powers(&noisy, &random_controls(&mut rng), &mut rng)
                .map_err(|e| e.to_string())?
        };
        match sinkhorn_normalize(&raw, 3, SinkhornConfig::default()) {
            Ok(p) => worst_sinkhorn = worst_sinkhorn.max(p.bistochastic_defect()),
            Err(e) => return Err(format!("sinkhorn on {raw:?}: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_unitary < 1e-10
        && worst_hermitian == 0.0
        && worst_column < 1e-9
        && worst_sinkhorn < 1e-10
        && secs < 10.0;
    Ok((
        pass,
        format!(
            "1000 inputs each: unitarity defect {worst_unitary:.1e}, Hermiticity defect {worst_hermitian:.1e}, \
             Born column sums {worst_column:.1e}, Sinkhorn defect {worst_sinkhorn:.1e}; {secs:.2} s"
        ),
    ))
}

fn gradient_error(model: &Model, x: &Array2<f64>, y: &Array2<f64>, coords: &[usize]) -> f64 {
    let step = 1e-5;
    let (_, grad) = model.mse_and_gradient(x.view(), y.view()).unwrap();
    let base = model.params();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for &i in coords {
        let mut p = base.clone();
        p[i] = base[i] + step;
        probe.set_params(&p).unwrap();
        let up = probe.mse_and_gradient(x.view(), y.view()).unwrap().0;
        p[i] = base[i] - step;
        probe.set_params(&p).unwrap();
        let down = probe.mse_and_gradient(x.view(), y.view()).unwrap().0;
        let fd = (up - down) / (2.0 * step);
        worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6));
    }
    worst
}

fn gradient_oracle() -> Check {
    let start = Instant::now();
    let gt = ChipGroundTruth::reference();
    let (x, y) = generate_split(
        &gt,
        32,
        MeasurementMode::Interferometric,
        SEED,
        Split::Train,
    )
    .map_err(|e| e.to_string())?
    .to_arrays();
    let spec = graybox_spec();
    let n = spec.num_params();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let generic = Model::from(GrayboxModel::new(MeasurementMode::Interferometric, 1));
    let coords = sample(&mut rng, n, 60).into_vec();
    let err_generic = gradient_error(&generic, &x, &y, &coords);

    // Output layer squashed to a near-constant matrix with a near-repeated
    // eigenvalue pair.
    let mut gb = GrayboxModel::new(MeasurementMode::Interferometric, 2);
    let last = spec.num_layers() - 1;
    let (fan_in, fan_out) = spec.layer_shape(last);
    let off = spec.layer_offset(last);
    let params = &mut gb.net.weights.params;
    for w in &mut params[off..off + fan_in * fan_out] {
        *w *= 1e-9;
    }
    let bias = &mut params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
    bias.fill(0.0);
    bias[0] = 0.7;
    bias[4] = 0.7 + 1e-8;
    bias[8] = -0.4;
    let degenerate = Model::from(gb);
    let h = degenerate
        .predict_hamiltonian(&[0.0; 4])
        .map_err(|e| e.to_string())?;
    let ev = hermitian_eig(&h).map_err(|e| e.to_string())?.eigenvalues;
    let gap = ev
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let mut coords = sample(&mut rng, n, 50).into_vec();
    coords.extend(off + fan_in * fan_out..off + fan_in * fan_out + fan_out);
    let err_degenerate = gradient_error(&degenerate, &x, &y, &coords);

    let secs = start.elapsed().as_secs_f64();
    let pass = err_generic < 1e-4 && err_degenerate < 1e-4 && gap < 1e-6 && secs < 30.0;
    Ok((
        pass,
        format!(
            "max relative error {err_generic:.1e} over 60 parameters, {err_degenerate:.1e} over 68 parameters \
             with eigenvalue gap {gap:.1e}; {secs:.1} s"
        ),
    ))
}

fn whitebox_identifiability(root: &Path) -> Check {
    let dir = root.join("linear");
    let seed = SEED.to_string();
    qctrl_ok(
        &[
            "gen-data",
            "--linear",
            "--mode",
            "interferometric",
            "--sigma",
            "0",
            "--seed",
            &seed,
        ],
        &dir,
    )?;
    qctrl_ok(&["train", "--model", "whitebox", "--seed", &seed], &dir)?;
    let mse = final_train_mse(&dir, "whitebox")?;
    Ok((
        mse < 1e-6,
        format!("whitebox final training MSE {mse:.2e} on linear-simulator interferometric data"),
    ))
}

/// Data generation and training of the three models on the quadratic
/// simulator, shared by the ordering and control criteria.
fn simulation_study(dir: &Path) -> Result<(), String> {
    let seed = SEED.to_string();
    qctrl_ok(&["gen-data", "--seed", &seed], dir)?;
    for model in ["graybox", "blackbox", "whitebox"] {
        qctrl_ok(&["train", "--model", model, "--seed", &seed], dir)?;
        qctrl_ok(&["test", "--model", model], dir)?;
    }
    Ok(())
}

fn training_ordering(dir: &Path) -> Check {
    let gb = final_train_mse(dir, "graybox")?;
    let bb = final_train_mse(dir, "blackbox")?;
    let wb = final_train_mse(dir, "whitebox")?;
    let gb_eval: EvalReport = read_json(dir.join("eval_graybox.json"))?;
    let bb_eval: EvalReport = read_json(dir.join("eval_blackbox.json"))?;
    let pass = gb < bb && bb < wb && gb * 10.0 <= wb && gb_eval.ratio < 2.0 && bb_eval.ratio < 2.0;
    Ok((
        pass,
        format!(
            "final training MSE GB {gb:.2e} < BB {bb:.2e} < WB {wb:.2e} (WB/GB {:.0}x); test/train GB {:.3}, BB {:.3}",
            wb / gb,
            gb_eval.ratio,
            bb_eval.ratio
        ),
    ))
}

fn summary(dir: &Path, model: &str, kind: &str) -> Result<ControlSummaryFile, String> {
    read_json(dir.join(format!("control_{model}_{kind}_summary.json")))
}

fn output_controller(dir: &Path) -> Check {
    let seed = SEED.to_string();
    qctrl_ok(
        &[
            "control",
            "--model",
            "graybox",
            "--kind",
            "distribution",
            "--targets",
            "100",
            "--seed",
            &seed,
        ],
        dir,
    )?;
    let s = summary(dir, "graybox", "distribution")?;
    let mean = s.summary.mean.unwrap_or(0.0);
    let frac = s.summary.fraction_gt_99.unwrap_or(0.0);
    Ok((
        s.summary.count == 100 && mean >= 0.995 && frac >= 0.8,
        format!(
            "graybox, 100 reachable distribution targets: mean fidelity {mean:.5}, min {:.5}, fraction > 0.99 {frac:.2}",
            s.summary.min.unwrap_or(0.0)
        ),
    ))
}

fn unitary_controller(dir: &Path) -> Check {
    let seed = SEED.to_string();
    for model in ["graybox", "whitebox"] {
        qctrl_ok(
            &[
                "control",
                "--model",
                model,
                "--kind",
                "unitary",
                "--targets",
                "100",
                "--seed",
                &seed,
            ],
            dir,
        )?;
    }
    let gb = summary(dir, "graybox", "unitary")?
        .summary
        .mean
        .unwrap_or(0.0);
    let wb = summary(dir, "whitebox", "unitary")?
        .summary
        .mean
        .unwrap_or(0.0);
    let bb = qctrl(
        &[
            "control",
            "--model",
            "blackbox",
            "--kind",
            "unitary",
            "--targets",
            "100",
        ],
        dir,
        None,
    );
    let stderr = String::from_utf8_lossy(&bb.stderr);
    let rejected = bb.status.code() == Some(EXIT_USAGE) && stderr.contains("unsupported model");
    Ok((
        gb >= 0.99 && gb > wb && rejected,
        format!(
            "mean gate fidelity GB {gb:.5} > WB {wb:.5}; blackbox rejected with exit {:?}: {}",
            bb.status.code(),
            stderr.trim()
        ),
    ))
}

fn parse_row(row: &[String]) -> Result<Vec<f64>, String> {
    row.iter()
        .map(|s| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

fn hamiltonian_sweeps(dir: &Path) -> Check {
    qctrl_ok(
        &[
            "sweep-hamiltonian",
            "--model",
            "graybox",
            "--electrode",
            "1",
        ],
        dir,
    )?;
    qctrl_ok(
        &[
            "sweep-hamiltonian",
            "--model",
            "whitebox",
            "--electrode",
            "1",
        ],
        dir,
    )?;

    let (header, rows) = read_csv(dir.join("sweep_graybox_e1.csv"))?;
    let gb: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| parse_row(r))
        .collect::<Result<_, _>>()?;
    let shape_ok = gb.len() == 101 && header.len() == 19 && gb.iter().all(|r| r.len() == 19);
    let finite = gb.iter().flatten().all(|x| x.is_finite());
    let im_diag = ["im_h11", "im_h22", "im_h33"]
        .map(|name| header.iter().position(|h| h == name).unwrap_or(0));
    let im_zero = im_diag
        .iter()
        .all(|&c| c > 0 && gb.iter().all(|r| r[c] == 0.0));

    let (_, rows) = read_csv(dir.join("sweep_whitebox_e1.csv"))?;
    let wb: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| parse_row(r))
        .collect::<Result<_, _>>()?;
    let xs: Vec<f64> = wb.iter().map(|r| r[0]).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let mut worst: f64 = 0.0;
    for c in 1..19 {
        let ys: Vec<f64> = wb.iter().map(|r| r[c]).collect();
        let my = ys.iter().sum::<f64>() / n;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / sxx;
        for (x, y) in xs.iter().zip(&ys) {
            worst = worst.max((y - (my + slope * (x - mx))).abs());
        }
    }
    Ok((
        shape_ok && finite && im_zero && worst < 1e-9,
        format!(
            "graybox sweep {}x{} finite={finite}, imaginary diagonal identically zero={im_zero}; \
             whitebox max deviation from affine fit {worst:.1e}",
            gb.len(),
            header.len() - 1
        ),
    ))
}

fn pipeline(dir: &Path, threads: usize) -> Result<(), String> {
    let steps: [&[&str]; 6] = [
        &[
            "gen-data",
            "--seed",
            "7",
            "--n-train",
            "300",
            "--n-test",
            "100",
        ],
        &[
            "train",
            "--model",
            "graybox",
            "--seed",
            "7",
            "--iterations",
            "40",
        ],
        &["test", "--model", "graybox"],
        &[
            "control",
            "--model",
            "graybox",
            "--kind",
            "distribution",
            "--targets",
            "6",
            "--seed",
            "7",
            "--restarts",
            "2",
            "--control-iterations",
            "60",
        ],
        &[
            "control",
            "--model",
            "graybox",
            "--kind",
            "unitary",
            "--targets",
            "6",
            "--seed",
            "7",
            "--restarts",
            "2",
            "--control-iterations",
            "60",
        ],
        &["report"],
    ];
    for args in steps {
        let out = qctrl(args, dir, Some(threads));
        if !out.status.success() {
            return Err(format!(
                "`qctrl {}`: {}",
                args.join(" "),
                String::from_utf8_lossy(&out.stderr)
            ));
        }
    }
    Ok(())
}

fn determinism(root: &Path) -> Check {
    let a = root.join("run_a");
    let b = root.join("run_b");
    pipeline(&a, 1)?;
    pipeline(&b, 3)?;
    let mut names: Vec<String> = fs::read_dir(&a)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut differing = Vec::new();
    for name in &names {
        let x = fs::read(a.join(name)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(name)).unwrap_or_default();
        if x != y {
            differing.push(name.clone());
        }
    }
    Ok((
        differing.is_empty() && names.len() >= 10,
        if differing.is_empty() {
            format!(
                "{} output files byte-identical across two runs (1 and 3 threads)",
                names.len()
            )
        } else {
            format!("files differ: {differing:?}")
        },
    ))
}

fn main() {
    // Allow `cargo test -- --list` style harness probes to exit quietly.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let root = tempfile::tempdir().expect("temporary directory");
    let study = root.path().join("study");
    let start = Instant::now();

    let mut results: Vec<(usize, &str, Check)> = Vec::new();
    results.push((1, "structural invariants", structural_invariants()));
    results.push((2, "graybox gradient oracle", gradient_oracle()));
    results.push((
        3,
        "whitebox identifiability",
        whitebox_identifiability(root.path()),
    ));
    let study_ready = simulation_study(&study);
    let after_study = |f: fn(&Path) -> Check| match &study_ready {
        Ok(()) => f(&study),
        Err(e) => Err(format!("simulation study failed: {e}")),
    };
    results.push((
        4,
        "simulation-study ordering",
        after_study(training_ordering),
    ));
    results.push((5, "output controller", after_study(output_controller)));
    results.push((
        6,
        "unitary controller ordering",
        after_study(unitary_controller),
    ));
    results.push((
        7,
        "Hamiltonian sweep shape",
        after_study(hamiltonian_sweeps),
    ));
    results.push((8, "pipeline determinism", determinism(root.path())));

    let mut failed = 0;
    println!();
    for (n, name, check) in &results {
        let (pass, detail) = match check {
            Ok((pass, detail)) => (*pass, detail.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {n} ({name}): {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "\nacceptance: {} passed, {} failed in {:.0} s",
        results.len() - failed,
        failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
