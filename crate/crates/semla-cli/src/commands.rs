//! Implementations behind the subcommands.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use semla_core::arch::{forward, ModelInput, ModelParams};
use semla_core::checkpoint::Checkpoint;
use semla_core::metrics::{canonical_key, evaluate, ForceField, ValenceTable};
use semla_core::molecule::{sample_size_distribution, Molecule, Vocabulary};
use semla_core::ot::equivariant_align;
use semla_core::sampler::{generate_batch, make_log_schedule};
use semla_core::sdf::{read_sdf_subset, write_sdf_subset};
use semla_core::tensor::Tape;
use semla_core::trainer::{
    center_corpus, from_checkpoint, to_checkpoint, train, AmsGrad, StepStats,
};

use crate::config::AppConfig;
use crate::error::CliError;
use crate::manifest::RunManifest;

fn read_corpus(path: &Path, vocab: &Vocabulary) -> Result<Vec<Molecule>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(read_sdf_subset(&text, vocab)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?)
}

fn manifest_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("manifest.txt")
    } else {
        out.parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| Path::new("."))
            .join("manifest.txt")
    }
}

pub fn cmd_train(
    data: &Path,
    out_dir: &Path,
    cfg: &AppConfig,
    resume: Option<&Path>,
) -> Result<(), CliError> {
    let vocab = Vocabulary::default();
    let mut molecules = read_corpus(data, &vocab)?;
    center_corpus(&mut molecules)?;
    let train_cfg = cfg.train();

    let (mut params, mut opt) = match resume {
        Some(path) => from_checkpoint(&Checkpoint::load(path)?)?,
        None => {
            let params = ModelParams::init(cfg.model(), cfg.seed)?;
            let opt = AmsGrad::new(params.n_scalars());
            (params, opt)
        }
    };

    std::fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let mut curve = String::from(
        "step,lr,loss_total,loss_coord,loss_atom,loss_bond,loss_charge,grad_norm,self_cond\n",
    );
    let every = if cfg.checkpoint_every == 0 {
        cfg.steps.max(1)
    } else {
        cfg.checkpoint_every
    };
    let mut last_loss = f64::NAN;
    let mut done = 0;
    while done < cfg.steps {
        let chunk = every.min(cfg.steps - done);
        train(
            &mut params,
            &mut opt,
            &molecules,
            &train_cfg,
            chunk,
            |s: &StepStats| {
                let _ = writeln!(
                    curve,
                    "{},{},{},{},{},{},{},{},{}",
                    s.step,
                    s.lr,
                    s.loss.total,
                    s.loss.coord,
                    s.loss.atom,
                    s.loss.bond,
                    s.loss.charge,
                    s.grad_norm,
                    s.self_cond
                );
                last_loss = s.loss.total;
            },
        )?;
        done += chunk;
        to_checkpoint(&params, &opt, &train_cfg)
            .save(&out_dir.join(format!("ckpt_{:06}.bin", opt.step)))?;
    }

    let final_ckpt = to_checkpoint(&params, &opt, &train_cfg);
    final_ckpt.save(&out_dir.join("checkpoint.bin"))?;
    std::fs::write(out_dir.join("losses.csv"), curve)?;

    let wall = started.elapsed().as_secs_f64();
    RunManifest {
        command: "train".into(),
        config: cfg.snapshot(),
        seed: cfg.seed,
        checkpoint_crc: Some(final_ckpt.crc()),
        wall_seconds: wall,
        nfe: None,
    }
    .append(&manifest_path(out_dir, true))?;
    println!(
        "trained {} steps ({} molecules) in {:.1}s; final loss {:.6}; checkpoint {}",
        cfg.steps,
        molecules.len(),
        wall,
        last_loss,
        out_dir.join("checkpoint.bin").display()
    );
    Ok(())
}

pub fn cmd_sample(
    checkpoint: &Path,
    out: &Path,
    cfg: &AppConfig,
    reference: Option<&Path>,
) -> Result<(), CliError> {
    let vocab = Vocabulary::default();
    let ckpt = Checkpoint::load(checkpoint)?;
    let crc = ckpt.crc();
    let (params, _) = from_checkpoint(&ckpt)?;

    let sizes: Vec<usize> = if cfg.n_mols == 0 {
        Vec::new()
    } else if let Some(n) = cfg.n_atoms {
        vec![n; cfg.n_mols]
    } else if let Some(ref_path) = reference {
        let reference_set = read_corpus(ref_path, &vocab)?;
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x5349_5a45);
        (0..cfg.n_mols)
            .map(|_| Ok(sample_size_distribution(&reference_set, &mut rng)?))
            .collect::<Result<_, CliError>>()?
    } else {
        return Err(CliError::Usage(
            "need --n-atoms or --reference to choose molecule sizes".into(),
        ));
    };

    let schedule = make_log_schedule(cfg.steps, cfg.schedule_base)?;
    let started = Instant::now();
    let molecules = generate_batch(&params, &sizes, &schedule, cfg.self_cond, cfg.seed)?;
    let wall = started.elapsed().as_secs_f64();

    std::fs::write(out, write_sdf_subset(&molecules, &vocab)?)?;
    RunManifest {
        command: "sample".into(),
        config: cfg.snapshot(),
        seed: cfg.seed,
        checkpoint_crc: Some(crc),
        wall_seconds: wall,
        nfe: Some(cfg.steps),
    }
    .append(&manifest_path(out, false))?;
    println!(
        "sampled {} molecules ({} steps each) in {:.1}s -> {}",
        molecules.len(),
        cfg.steps,
        wall,
        out.display()
    );
    Ok(())
}

/// Splits an SDF into records and parses each independently so one bad
/// record cannot sink the rest.
fn parse_records(text: &str, vocab: &Vocabulary) -> (Vec<Molecule>, Vec<(usize, String)>) {
    let mut molecules = Vec::new();
    let mut failures = Vec::new();
    for (idx, chunk) in text.split("$$$$").enumerate() {
        if chunk.trim().is_empty() {
            continue;
        }
        // Drop only the newline left over from the previous terminator; a
        // record's own first line may legitimately be blank (empty title).
        let body = if idx == 0 {
            chunk
        } else {
            chunk
                .strip_prefix("\r\n")
                .or_else(|| chunk.strip_prefix('\n'))
                .unwrap_or(chunk)
        };
        let record = format!("{body}$$$$\n");
        match read_sdf_subset(&record, vocab) {
            Ok(mut m) => molecules.append(&mut m),
            Err(e) => failures.push((idx + 1, e.to_string())),
        }
    }
    (molecules, failures)
}

pub fn cmd_eval(
    input: &Path,
    reference: Option<&Path>,
    out_csv: &Path,
) -> Result<(), CliError> {
    let vocab = Vocabulary::default();
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let (molecules, failures) = parse_records(&text, &vocab);
    for (record, error) in &failures {
        eprintln!("record {record}: {error}");
    }
    if molecules.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no parseable records",
            input.display()
        )));
    }

    let reference_keys: Option<HashSet<String>> = match reference {
        Some(path) => {
            let mols = read_corpus(path, &vocab)?;
            Some(mols.iter().map(|m| canonical_key(m, &vocab)).collect())
        }
        None => None,
    };

    let table = ValenceTable::default();
    let ff = ForceField::default();
    let report = evaluate(&molecules, &vocab, &table, &ff, reference_keys.as_ref());

    let mut out = report.to_csv();
    out.push('\n');
    out.push_str(&report.summary_csv());
    std::fs::write(out_csv, out)?;
    print!("{}", report.summary_csv());
    Ok(())
}

fn median(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

pub fn cmd_bench_latent(
    grid: &[usize],
    cfg: &AppConfig,
    out_csv: &Path,
) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(CliError::Usage("--dl-grid must list at least one width".into()));
    }
    let n = cfg.bench_atoms;
    // The probe batch is identical for every grid entry.
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x4245_4e43);
    let coords: Vec<f64> = (0..n * 3)
        .map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0))
        .collect();
    let vocab = Vocabulary::default();
    let atom_types: Vec<usize> = (0..n)
        .map(|_| rand::Rng::random_range(&mut rng, 0..vocab.n_atom_types()))
        .collect();
    let charges: Vec<usize> = (0..n)
        .map(|_| rand::Rng::random_range(&mut rng, 0..vocab.n_charges()))
        .collect();
    let mut bonds = vec![0usize; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let k = rand::Rng::random_range(&mut rng, 0..vocab.n_bond_kinds());
            bonds[i * n + j] = k;
            bonds[j * n + i] = k;
        }
    }
    let mask = vec![true; n];

    let mut out = String::from("d_l,n_params,median_forward_ms\n");
    for &d_l in grid {
        let mut model_cfg = cfg.model();
        model_cfg.d_l = d_l;
        let params = ModelParams::init(model_cfg, cfg.seed)?;
        let run_once = || -> Result<f64, CliError> {
            let started = Instant::now();
            let mut tape = Tape::new();
            let b = params.bind(&mut tape)?;
            let input = ModelInput {
                coords: &coords,
                atom_types: &atom_types,
                charges: &charges,
                bonds: &bonds,
                t: 0.5,
                mask: &mask,
                self_cond: None,
            };
            let pred = forward(&mut tape, &params, &b, &input)?;
            std::hint::black_box(tape.values(pred.coords)[0]);
            Ok(started.elapsed().as_secs_f64() * 1e3)
        };
        for _ in 0..cfg.bench_warmups {
            run_once()?;
        }
        let times: Vec<f64> = (0..cfg.bench_reps)
            .map(|_| run_once())
            .collect::<Result<_, _>>()?;
        let _ = writeln!(
            out,
            "{},{},{:.6}",
            d_l,
            params.n_scalars(),
            median(times)
        );
    }
    std::fs::write(out_csv, &out)?;
    print!("{out}");
    Ok(())
}

pub fn cmd_align(path_a: &Path, path_b: &Path) -> Result<(), CliError> {
    let vocab = Vocabulary::default();
    let mols_a = read_corpus(path_a, &vocab)?;
    let mols_b = read_corpus(path_b, &vocab)?;
    if mols_a.len() != mols_b.len() {
        return Err(CliError::Data(format!(
            "record count mismatch: {} vs {}",
            mols_a.len(),
            mols_b.len()
        )));
    }
    let mut failures = 0usize;
    for (i, (a, b)) in mols_a.iter().zip(&mols_b).enumerate() {
        if a.n_atoms() != b.n_atoms() {
            eprintln!(
                "record {i}: size mismatch ({} vs {} atoms)",
                a.n_atoms(),
                b.n_atoms()
            );
            failures += 1;
            continue;
        }
        let n = a.n_atoms() as f64;
        let pre: f64 = a
            .coords()
            .iter()
            .zip(b.coords())
            .map(|(p, q)| {
                (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
            })
            .sum::<f64>()
            / n;
        let alignment = equivariant_align(b.coords(), a.coords())
            .map_err(|e| CliError::Data(e.to_string()))?;
        let post = alignment.cost() / n;
        let perm: Vec<String> = alignment.permutation.iter().map(|p| p.to_string()).collect();
        println!(
            "record {i}: pre_mse {pre:.6e} post_mse {post:.6e} permutation {}",
            perm.join(" ")
        );
    }
    if failures > 0 {
        return Err(CliError::Data(format!("{failures} record(s) failed")));
    }
    Ok(())
}
