use ntk_core::harness::episodes::{
    fewshot_costs, fewshot_episode_ap, fewshot_episodes, ridge_accuracy, subsample_protocol, summarize_fewshot,
    FewshotEpisode, FewshotSummary,
};
use ntk_core::harness::grid::{uci_costs, uci_protocol, GridPoint};
use ntk_core::harness::split::kfold_split;
use ntk_core::harness::stats::accuracy;
use ntk_core::harness::{MeanStd, TabularDataset};
use ntk_core::kernel::{gram_matrix, KernelConfig};
use ntk_core::net::{train_gd, NetConfig, Parameterization};
use ntk_core::ridge::one_hot;
use ntk_core::rng::stream_id;
use ntk_core::svm::{one_vs_rest_fit, ClassWeights, DEFAULT_TOL};
use ntk_core::GramMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::{log_manifest, RunOutcome};
use crate::error::{CliError, CliResult};
use crate::fmt_f64;
use crate::inputs::{kernel_grams, load_data, LoadedData, Samples};
use crate::manifest::{KernelKind, KernelSpec, Manifest, ProtocolSpec, Solver};
use crate::model::{gram_fingerprint, ModelDocument};

const NN_SEED_STREAM: u64 = 0x6e6e;

pub fn cmd_fit_eval(manifest: &Manifest) -> CliResult<RunOutcome> {
    let protocol =
        manifest.protocol.as_ref().ok_or_else(|| CliError::Usage("fit-eval needs a [protocol] section".into()))?;
    let data = load_data(manifest.data()?)?;
    let mut outputs = vec![log_manifest(manifest)?];
    let summary = match protocol {
        ProtocolSpec::UciCv { folds, max_depth, costs } => {
            uci_cv(manifest, &data, *folds, *max_depth, costs.as_deref(), &mut outputs)?
        }
        ProtocolSpec::ImageSubsample { n, repeats, test_subset, ridge } => {
            image_subsample(manifest, &data, *n, *repeats, *test_subset, *ridge, &mut outputs)?
        }
        ProtocolSpec::Fewshot { k, repeats, tuning_classes, costs } => {
            fewshot(manifest, &data, *k, *repeats, tuning_classes.as_deref(), costs.as_deref(), &mut outputs)?
        }
        ProtocolSpec::NnBaseline { .. } => nn_baseline(manifest, &data, protocol, &mut outputs)?,
    };
    Ok(RunOutcome { outputs, summary })
}

fn emit_csv(
    outputs: &mut Vec<std::path::PathBuf>,
    m: &Manifest,
    name: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> CliResult<()> {
    let p = m.output_dir.join(name);
    crate::write_csv(&p, header, rows)?;
    outputs.push(p);
    Ok(())
}

fn emit_json<T: Serialize>(
    outputs: &mut Vec<std::path::PathBuf>,
    m: &Manifest,
    name: &str,
    value: &T,
) -> CliResult<()> {
    let p = m.output_dir.join(name);
    crate::write_json(&p, value)?;
    outputs.push(p);
    Ok(())
}

fn tabular(data: &LoadedData, protocol: &str) -> CliResult<TabularDataset> {
    let Samples::Vectors(features) = &data.train else {
        return Err(CliError::Usage(format!("{protocol} needs tabular (csv or balance-scale) data")));
    };
    Ok(TabularDataset::new(data.name.clone(), features.clone(), data.train_labels.clone())?)
}

#[derive(Serialize)]
struct UciSummary<'a> {
    protocol: &'static str,
    dataset: &'a str,
    samples: usize,
    classes: usize,
    grid_points: usize,
    best: GridPoint,
    validation_accuracy: f64,
    fold_accuracies: &'a [f64],
    accuracy: MeanStd,
}

fn uci_cv(
    m: &Manifest,
    data: &LoadedData,
    folds: usize,
    max_depth: Option<usize>,
    costs: Option<&[f64]>,
    outputs: &mut Vec<std::path::PathBuf>,
) -> CliResult<String> {
    let ds = tabular(data, "uci-cv")?;
    let costs = costs.map_or_else(uci_costs, <[f64]>::to_vec);
    let kernels: Vec<KernelConfig> =
        KernelConfig::uci_grid().into_iter().filter(|k| max_depth.is_none_or(|d| k.depth <= d)).collect();
    if kernels.is_empty() || costs.is_empty() {
        return Err(CliError::Usage("uci-cv grid is empty (check max_depth and costs)".into()));
    }
    let grid: Vec<GridPoint> =
        kernels.iter().flat_map(|&kernel| costs.iter().map(move |&cost| GridPoint { kernel, cost })).collect();
    let report = uci_protocol(&ds, &grid, folds, m.seed)?;

    let rows: Vec<Vec<String>> = report
        .search
        .table
        .iter()
        .map(|e| {
            let (acc, err) = match &e.outcome {
                Ok(a) => (fmt_f64(*a), String::new()),
                Err(msg) => (String::new(), msg.clone()),
            };
            vec![
                e.point.kernel.depth.to_string(),
                e.point.kernel.fixed_layers.to_string(),
                fmt_f64(e.point.cost),
                acc,
                err,
            ]
        })
        .collect();
    emit_csv(outputs, m, "grid.csv", &["depth", "fixed_layers", "cost", "validation_accuracy", "error"], &rows)?;
    let rows: Vec<Vec<String>> =
        report.cv.fold_accuracies.iter().enumerate().map(|(i, a)| vec![i.to_string(), fmt_f64(*a)]).collect();
    emit_csv(outputs, m, "folds.csv", &["fold", "accuracy"], &rows)?;
    let best = report.search.best;
    emit_json(
        outputs,
        m,
        "summary.json",
        &UciSummary {
            protocol: "uci-cv",
            dataset: &ds.name,
            samples: ds.len(),
            classes: ds.class_count,
            grid_points: grid.len(),
            best,
            validation_accuracy: report.search.best_accuracy,
            fold_accuracies: &report.cv.fold_accuracies,
            accuracy: report.cv.summary,
        },
    )?;

    // final model on all samples at the chosen point
    let gram = gram_matrix(&ds.features, None, &best.kernel)?;
    let classifier = one_vs_rest_fit(&gram, &ds.labels, best.cost, ClassWeights::BALANCED, DEFAULT_TOL)?;
    let doc = ModelDocument {
        kernel: KernelSpec {
            kind: KernelKind::Ntk,
            depth: best.kernel.depth,
            fixed_layers: best.kernel.fixed_layers,
            ..KernelSpec::default()
        },
        classifier,
        training_fingerprint: gram_fingerprint(&gram),
    };
    let p = m.output_dir.join("model.json");
    doc.save(&p)?;
    outputs.push(p);

    Ok(format!(
        "{}: {}-fold accuracy {:.2}% ± {:.2} (L={}, L'={}, C={})",
        ds.name,
        folds,
        100.0 * report.cv.summary.mean,
        100.0 * report.cv.summary.std,
        best.kernel.depth,
        best.kernel.fixed_layers,
        best.cost
    ))
}

/// Sorted union of the given index lists and, for each list, the
/// positions of its members inside the union.
fn pool_of(lists: &[Vec<usize>]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut pool: Vec<usize> = lists.iter().flatten().copied().collect();
    pool.sort_unstable();
    pool.dedup();
    let pos = |i: &usize| pool.binary_search(i).expect("member of pool");
    let remapped = lists.iter().map(|l| l.iter().map(pos).collect()).collect();
    (pool, remapped)
}

#[derive(Serialize)]
struct SubsampleSummary {
    protocol: &'static str,
    n: usize,
    repeats: usize,
    test_samples: usize,
    ridge: f64,
    accuracy: MeanStd,
}

fn image_subsample(
    m: &Manifest,
    data: &LoadedData,
    n: usize,
    repeats: usize,
    test_subset: Option<usize>,
    ridge: f64,
    outputs: &mut Vec<std::path::PathBuf>,
) -> CliResult<String> {
    let (test, test_labels) = data.test()?;
    let test_idx: Vec<usize> = (0..test_subset.map_or(test.len(), |s| s.min(test.len()))).collect();
    let classes = data.class_count();
    let episodes = subsample_protocol(&data.train_labels, classes, n, repeats, m.seed)?;
    let (pool, local) = pool_of(&episodes);
    let (g, c) = kernel_grams(&m.kernel, &data.train.subset(&pool), Some(&test.subset(&test_idx)))?;
    let c = c.expect("cross gram requested");
    let truth: Vec<usize> = test_idx.iter().map(|&i| test_labels[i]).collect();
    let all_test: Vec<usize> = (0..truth.len()).collect();
    let acc: Vec<f64> = local
        .par_iter()
        .zip(&episodes)
        .map(|(pos, idx)| {
            let labels: Vec<usize> = idx.iter().map(|&i| data.train_labels[i]).collect();
            ridge_accuracy(&g.select(pos, pos), &c.select(pos, &all_test), &labels, &truth, classes, ridge)
        })
        .collect::<Result<_, _>>()?;
    let rows: Vec<Vec<String>> = acc.iter().enumerate().map(|(r, a)| vec![r.to_string(), fmt_f64(*a)]).collect();
    emit_csv(outputs, m, "episodes.csv", &["repeat", "accuracy"], &rows)?;
    let summary = MeanStd::of(&acc);
    emit_json(
        outputs,
        m,
        "summary.json",
        &SubsampleSummary {
            protocol: "image-subsample",
            n,
            repeats,
            test_samples: truth.len(),
            ridge,
            accuracy: summary,
        },
    )?;
    Ok(format!("n={n}: accuracy {:.2}% ± {:.2} over {repeats} repeats", 100.0 * summary.mean, 100.0 * summary.std))
}

#[derive(Serialize)]
struct FewshotReport<'a> {
    protocol: &'static str,
    repeats: usize,
    tuning_classes: &'a [usize],
    held_out_classes: &'a [usize],
    #[serde(flatten)]
    summary: &'a FewshotSummary,
}

fn fewshot(
    m: &Manifest,
    data: &LoadedData,
    k: usize,
    repeats: usize,
    tuning: Option<&[usize]>,
    costs: Option<&[f64]>,
    outputs: &mut Vec<std::path::PathBuf>,
) -> CliResult<String> {
    let (test, test_labels) = data.test()?;
    let classes: Vec<usize> = (0..data.class_count()).collect();
    let tuning: Vec<usize> = tuning.map_or_else(|| classes[..classes.len() / 2].to_vec(), <[usize]>::to_vec);
    if let Some(c) = tuning.iter().find(|c| **c >= classes.len()) {
        return Err(CliError::Usage(format!("tuning class {c} does not exist ({} classes)", classes.len())));
    }
    let held_out: Vec<usize> = classes.iter().copied().filter(|c| !tuning.contains(c)).collect();
    let costs = costs.map_or_else(fewshot_costs, <[f64]>::to_vec);
    if costs.is_empty() {
        return Err(CliError::Usage("fewshot cost grid is empty".into()));
    }
    let episodes = fewshot_episodes(&data.train_labels, &classes, k, repeats, m.seed)?;
    let lists: Vec<Vec<usize>> = episodes.iter().map(FewshotEpisode::train_indices).collect();
    let (pool, _) = pool_of(&lists);
    let pos = |i: &usize| pool.binary_search(i).expect("member of pool");
    let local: Vec<FewshotEpisode> = episodes
        .iter()
        .map(|e| FewshotEpisode {
            positives: e.positives.iter().map(pos).collect(),
            negatives: e.negatives.iter().map(pos).collect(),
            ..e.clone()
        })
        .collect();
    let (g, c) = kernel_grams(&m.kernel, &data.train.subset(&pool), Some(test))?;
    let c = c.expect("cross gram requested");
    let ap: Vec<Vec<f64>> =
        local.par_iter().map(|e| fewshot_episode_ap(e, &g, &c, test_labels, &costs)).collect::<Result<_, _>>()?;
    let summary = summarize_fewshot(k, &episodes, &ap, &costs, &tuning, &held_out);
    let sel = costs.iter().position(|c| *c == summary.selected_cost).expect("selected cost in grid");

    let rows: Vec<Vec<String>> = episodes
        .iter()
        .zip(&ap)
        .map(|(e, a)| vec![e.class.to_string(), e.repeat.to_string(), fmt_f64(a[sel])])
        .collect();
    emit_csv(outputs, m, "episodes.csv", &["class", "repeat", "average_precision"], &rows)?;
    let rows: Vec<Vec<String>> = episodes
        .iter()
        .zip(&ap)
        .flat_map(|(e, a)| {
            costs
                .iter()
                .zip(a)
                .map(move |(c, v)| vec![e.class.to_string(), e.repeat.to_string(), fmt_f64(*c), fmt_f64(*v)])
        })
        .collect();
    emit_csv(outputs, m, "ap_grid.csv", &["class", "repeat", "cost", "average_precision"], &rows)?;
    emit_json(
        outputs,
        m,
        "summary.json",
        &FewshotReport {
            protocol: "fewshot",
            repeats,
            tuning_classes: &tuning,
            held_out_classes: &held_out,
            summary: &summary,
        },
    )?;
    Ok(format!(
        "k={k}: held-out mAP {:.2} ± {:.2} at C={} over {repeats} repeats",
        100.0 * summary.held_out_map.mean,
        100.0 * summary.held_out_map.std,
        summary.selected_cost
    ))
}

#[derive(Serialize)]
struct BaselineSummary {
    protocol: &'static str,
    fold: usize,
    folds: usize,
    seeds: usize,
    width: usize,
    depth: usize,
    parameterization: Parameterization,
    ntk_accuracy: MeanStd,
    nn_accuracy: MeanStd,
}

fn kernel_accuracy(
    g: &GramMatrix,
    c: &GramMatrix,
    ytr: &[usize],
    yte: &[usize],
    classes: usize,
    solver: Solver,
    cost: f64,
) -> CliResult<f64> {
    Ok(match solver {
        Solver::Ridge => ridge_accuracy(g, c, ytr, yte, classes, 0.0)?,
        Solver::Svm => {
            let model = one_vs_rest_fit(g, ytr, cost, ClassWeights::BALANCED, DEFAULT_TOL)?;
            accuracy(&model.predict(c)?, yte)
        }
    })
}

fn nn_baseline(
    m: &Manifest,
    data: &LoadedData,
    protocol: &ProtocolSpec,
    outputs: &mut Vec<std::path::PathBuf>,
) -> CliResult<String> {
    let &ProtocolSpec::NnBaseline {
        folds,
        fold,
        seeds,
        width,
        depth,
        epochs,
        learning_rate,
        parameterization,
        solver,
        cost,
    } = protocol
    else {
        unreachable!("dispatched on nn-baseline")
    };
    let splits = kfold_split(data.train.len(), folds, m.seed)?;
    let (train, test) =
        splits.get(fold).ok_or_else(|| CliError::Usage(format!("fold {fold} out of range for {folds} folds")))?;
    let classes = data.class_count();
    let ytr: Vec<usize> = train.iter().map(|&i| data.train_labels[i]).collect();
    let yte: Vec<usize> = test.iter().map(|&i| data.train_labels[i]).collect();
    let (xtr, xte) = (data.train.subset(train), data.train.subset(test));
    let (vtr, vte) = (xtr.vectors(), xte.vectors());
    let targets = one_hot(&ytr, classes);
    let net = NetConfig { parameterization, learning_rate, epochs, outputs: classes, ..NetConfig::new(depth, width) };

    let per_seed: Vec<(f64, f64)> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            // the kernel predictor has no random state; it is refitted per
            // seed so both columns come from identical pipelines
            let (g, c) = kernel_grams(&m.kernel, &xtr, Some(&xte))?;
            let ntk = kernel_accuracy(&g, &c.expect("cross gram requested"), &ytr, &yte, classes, solver, cost)?;
            let trained = train_gd(&vtr, &targets, &net, stream_id(&[m.seed, NN_SEED_STREAM, s as u64]))?;
            Ok((ntk, accuracy(&trained.predict(&vte)?, &yte)))
        })
        .collect::<CliResult<_>>()?;

    let rows: Vec<Vec<String>> =
        per_seed.iter().enumerate().map(|(s, (a, b))| vec![s.to_string(), fmt_f64(*a), fmt_f64(*b)]).collect();
    emit_csv(outputs, m, "seeds.csv", &["seed", "ntk_accuracy", "nn_accuracy"], &rows)?;
    let ntk = MeanStd::of(&per_seed.iter().map(|p| p.0).collect::<Vec<_>>());
    let nn = MeanStd::of(&per_seed.iter().map(|p| p.1).collect::<Vec<_>>());
    emit_json(
        outputs,
        m,
        "summary.json",
        &BaselineSummary {
            protocol: "nn-baseline",
            fold,
            folds,
            seeds,
            width,
            depth,
            parameterization,
            ntk_accuracy: ntk,
            nn_accuracy: nn,
        },
    )?;
    Ok(format!(
        "fold {fold}: NTK {:.2}% ± {:.2}, NN(width {width}) {:.2}% ± {:.2} over {seeds} seeds",
        100.0 * ntk.mean,
        100.0 * ntk.std,
        100.0 * nn.mean,
        100.0 * nn.std
    ))
}
