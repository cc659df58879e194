//! Evaluation protocol: class-balanced accuracy, average precision,
//! leave-one-out retrieval mAP, harmonic mean, and the seen-bias sweep.

use crate::dataio::{DatasetBundle, Split};
use crate::error::{Error, Result};
use crate::inference::{class_distances, ChosenModality, Direction, Gallery};
use crate::objective::Distance;
use crate::projector::ProjectionModel;

/// Maps `f` over `items` with a fixed chunking so the output is identical
/// for any worker count.
pub fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    threads: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let threads = threads.max(1).min(items.len().max(1));
    if threads <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let mut out: Vec<Option<R>> = Vec::new();
    out.resize_with(items.len(), || None);
    let slots: Vec<(usize, &[T])> = items.chunks(chunk).enumerate().collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (ci, part) in &slots {
            let f = &f;
            handles.push((ci * chunk, scope.spawn(move || part.iter().map(f).collect::<Vec<R>>())));
        }
        for (offset, h) in handles {
            for (k, r) in h.join().expect("worker panicked").into_iter().enumerate() {
                out[offset + k] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.unwrap()).collect()
}

/// A split pushed through the projection model: per-example embeddings
/// plus the class-embedding table.
#[derive(Debug, Clone)]
pub struct EmbeddedSplit {
    /// Indices into the bundle's example list.
    pub example_idx: Vec<usize>,
    pub class_of: Vec<usize>,
    pub audio: Vec<Vec<f64>>,
    pub video: Vec<Vec<f64>>,
    pub class_embeddings: Vec<Vec<f64>>,
    pub class_seen: Vec<bool>,
    pub class_names: Vec<String>,
}

pub fn embed_split(
    model: &ProjectionModel,
    bundle: &DatasetBundle,
    split: Split,
    threads: usize,
) -> Result<EmbeddedSplit> {
    let example_idx = bundle.split_indices(split);
    if example_idx.is_empty() {
        return Err(Error::EmptyInput(format!("split {split} has no examples")));
    }
    let embedded = parallel_map(&example_idx, threads, |&i| {
        let e = &bundle.examples[i];
        let a = model.embed_audio(&e.audio)?;
        let v = model.embed_video(&e.video)?;
        Ok::<_, Error>((a, v))
    });
    let mut audio = Vec::with_capacity(example_idx.len());
    let mut video = Vec::with_capacity(example_idx.len());
    for r in embedded {
        let (a, v) = r?;
        audio.push(a);
        video.push(v);
    }
    let class_embeddings: Vec<Vec<f64>> = bundle
        .classes
        .iter()
        .map(|c| model.embed_text(&c.text_embedding))
        .collect::<Result<_>>()?;
    Ok(EmbeddedSplit {
        class_of: example_idx.iter().map(|&i| bundle.examples[i].class_idx).collect(),
        example_idx,
        audio,
        video,
        class_embeddings,
        class_seen: bundle.seen_flags(),
        class_names: bundle.classes.iter().map(|c| c.name.clone()).collect(),
    })
}

/// Per-example distances to every class under the chosen modalities.
pub fn distance_matrix(
    es: &EmbeddedSplit,
    chosen: &[ChosenModality],
    dist: Distance,
    threads: usize,
) -> Result<Vec<Vec<f64>>> {
    assert_eq!(chosen.len(), es.audio.len());
    let idx: Vec<usize> = (0..es.audio.len()).collect();
    parallel_map(&idx, threads, |&i| {
        class_distances(&es.audio[i], &es.video[i], &es.class_embeddings, dist, chosen[i])
    })
    .into_iter()
    .collect()
}

/// Argmin with the seen penalty applied; returns predictions and how many
/// of them landed on unseen classes.
pub fn predict_from_matrix(
    dmat: &[Vec<f64>],
    seen: &[bool],
    beta: f64,
) -> (Vec<usize>, usize) {
    let mut unseen_count = 0;
    let preds: Vec<usize> = dmat
        .iter()
        .map(|dists| {
            let s = crate::inference::classify_from_distances(dists, seen, beta);
            if !seen[s.predicted] {
                unseen_count += 1;
            }
            s.predicted
        })
        .collect();
    (preds, unseen_count)
}

/// Per-class accuracy averaged uniformly over `class_subset`. Classes in
/// the subset without any example are excluded and reported back.
pub fn mean_class_accuracy(
    predictions: &[usize],
    truths: &[usize],
    class_subset: &[usize],
) -> Result<(f64, Vec<usize>)> {
    if predictions.len() != truths.len() {
        return Err(Error::Shape {
            op: "mean_class_accuracy",
            expected: format!("{} predictions", truths.len()),
            got: format!("{}", predictions.len()),
        });
    }
    if truths.is_empty() {
        return Err(Error::EmptyInput("mean_class_accuracy".into()));
    }
    let mut acc_sum = 0.0;
    let mut counted = 0usize;
    let mut skipped = Vec::new();
    for &c in class_subset {
        let total = truths.iter().filter(|&&t| t == c).count();
        if total == 0 {
            skipped.push(c);
            continue;
        }
        let correct = truths
            .iter()
            .zip(predictions)
            .filter(|(&t, &p)| t == c && p == c)
            .count();
        acc_sum += correct as f64 / total as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::EmptyInput(
            "mean_class_accuracy: no subset class has examples".into(),
        ));
    }
    Ok((100.0 * acc_sum / counted as f64, skipped))
}

/// AP over a ranked relevance list: mean of precision@k at each relevant
/// rank. `None` when the list holds no relevant item (callers skip such
/// queries).
pub fn average_precision(ranked: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in ranked.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        None
    } else {
        Some(sum / hits as f64)
    }
}

/// 2SU/(S+U), defined as 0 when both inputs are 0.
pub fn harmonic_mean(s: f64, u: f64) -> f64 {
    if s + u == 0.0 {
        0.0
    } else {
        2.0 * s * u / (s + u)
    }
}

#[derive(Debug, Clone)]
pub struct RetrievalReport {
    pub direction: Direction,
    pub s: f64,
    pub u: f64,
    pub hm: f64,
    /// (class name, mean AP percent) for classes that produced queries.
    pub per_class: Vec<(String, f64)>,
    /// Classes skipped for lack of gallery relevants.
    pub skipped: Vec<String>,
}

/// Leave-one-out retrieval mAP. Example queries (`a2v`, `v2a`) use every
/// split example as a query against all remaining examples; text
/// directions use one query per class (the class embedding) against the
/// full split. Relevance is class identity. APs are averaged per class,
/// then uniformly over classes; S/U/HM aggregate seen and unseen classes.
pub fn leave_one_out_map(
    es: &EmbeddedSplit,
    direction: Direction,
    dist: Distance,
    threads: usize,
) -> Result<RetrievalReport> {
    let n = es.audio.len();
    if n == 0 {
        return Err(Error::EmptyInput("retrieval split".into()));
    }
    let n_classes = es.class_embeddings.len();
    let mut class_ap_sums = vec![0.0f64; n_classes];
    let mut class_ap_counts = vec![0usize; n_classes];
    let mut skipped = Vec::new();

    if direction.text_query() {
        let queries: Vec<usize> = (0..n_classes).collect();
        let results = parallel_map(&queries, threads, |&c| -> Result<Option<f64>> {
            let gallery = match direction {
                Direction::T2A => Gallery::Single(&es.audio),
                Direction::T2V => Gallery::Single(&es.video),
                Direction::T2AV => Gallery::Pairs(&es.audio, &es.video),
                _ => unreachable!(),
            };
            let ranked = crate::inference::rank_gallery(&es.class_embeddings[c], &gallery, dist)?;
            let rel: Vec<bool> = ranked.iter().map(|&(j, _)| es.class_of[j] == c).collect();
            Ok(average_precision(&rel))
        });
        for (c, r) in results.into_iter().enumerate() {
            match r? {
                Some(ap) => {
                    class_ap_sums[c] += ap;
                    class_ap_counts[c] += 1;
                }
                None => skipped.push(es.class_names[c].clone()),
            }
        }
    } else {
        let queries: Vec<usize> = (0..n).collect();
        let results = parallel_map(&queries, threads, |&i| -> Result<Option<f64>> {
            let (query, gallery_all): (&[f64], &[Vec<f64>]) = match direction {
                Direction::A2V => (&es.audio[i], &es.video),
                Direction::V2A => (&es.video[i], &es.audio),
                _ => unreachable!(),
            };
            // Leave the query's own example out of the gallery.
            let gallery: Vec<Vec<f64>> = gallery_all
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| v.clone())
                .collect();
            let kept: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let ranked = crate::inference::rank_gallery(query, &Gallery::Single(&gallery), dist)?;
            let rel: Vec<bool> = ranked
                .iter()
                .map(|&(j, _)| es.class_of[kept[j]] == es.class_of[i])
                .collect();
            Ok(average_precision(&rel))
        });
        let mut class_had_skip = vec![false; n_classes];
        for (i, r) in results.into_iter().enumerate() {
            match r? {
                Some(ap) => {
                    class_ap_sums[es.class_of[i]] += ap;
                    class_ap_counts[es.class_of[i]] += 1;
                }
                None => class_had_skip[es.class_of[i]] = true,
            }
        }
        for (c, &had) in class_had_skip.iter().enumerate() {
            if had && class_ap_counts[c] == 0 {
                skipped.push(es.class_names[c].clone());
            }
        }
    }

    let mut per_class = Vec::new();
    let (mut s_sum, mut s_n, mut u_sum, mut u_n) = (0.0, 0usize, 0.0, 0usize);
    for c in 0..n_classes {
        if class_ap_counts[c] == 0 {
            continue;
        }
        let mean_ap = 100.0 * class_ap_sums[c] / class_ap_counts[c] as f64;
        per_class.push((es.class_names[c].clone(), mean_ap));
        if es.class_seen[c] {
            s_sum += mean_ap;
            s_n += 1;
        } else {
            u_sum += mean_ap;
            u_n += 1;
        }
    }
    if s_n == 0 && u_n == 0 {
        return Err(Error::EmptyInput(
            "retrieval produced no scorable queries".into(),
        ));
    }
    let s = if s_n > 0 { s_sum / s_n as f64 } else { 0.0 };
    let u = if u_n > 0 { u_sum / u_n as f64 } else { 0.0 };
    Ok(RetrievalReport {
        direction,
        s,
        u,
        hm: harmonic_mean(s, u),
        per_class,
        skipped,
    })
}

#[derive(Debug, Clone)]
pub struct ClassificationReport {
    pub beta: f64,
    pub modality_label: String,
    pub s: f64,
    pub u: f64,
    pub hm: f64,
    pub per_class: Vec<(String, f64)>,
    pub unseen_pred_count: usize,
    pub num_examples: usize,
}

/// S/U/HM plus per-class accuracies from raw predictions.
pub fn classification_report(
    es: &EmbeddedSplit,
    predictions: &[usize],
    unseen_pred_count: usize,
    beta: f64,
    modality_label: &str,
) -> Result<ClassificationReport> {
    let n_classes = es.class_embeddings.len();
    let seen_subset: Vec<usize> = (0..n_classes).filter(|&c| es.class_seen[c]).collect();
    let unseen_subset: Vec<usize> = (0..n_classes).filter(|&c| !es.class_seen[c]).collect();
    let (s, _) = mean_class_accuracy(predictions, &es.class_of, &seen_subset)
        .unwrap_or((0.0, Vec::new()));
    let (u, _) = mean_class_accuracy(predictions, &es.class_of, &unseen_subset)
        .unwrap_or((0.0, Vec::new()));

    let mut per_class = Vec::new();
    for c in 0..n_classes {
        if let Ok((acc, _)) = mean_class_accuracy(predictions, &es.class_of, &[c]) {
            per_class.push((es.class_names[c].clone(), acc));
        }
    }
    Ok(ClassificationReport {
        beta,
        modality_label: modality_label.to_string(),
        s,
        u,
        hm: harmonic_mean(s, u),
        per_class,
        unseen_pred_count,
        num_examples: predictions.len(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub beta: f64,
    pub s: f64,
    pub u: f64,
    pub hm: f64,
    pub unseen_preds: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub best: SweepPoint,
}

pub const SWEEP_POINTS: usize = 25;

/// Evaluates S/U/HM on an equally spaced beta grid from 0 to the largest
/// per-example class-distance spread (which flips every prediction to an
/// unseen class at the top). Returns the grid and the best-HM point; ties
/// keep the smallest beta.
pub fn sweep_bias(
    es: &EmbeddedSplit,
    chosen: &[ChosenModality],
    dist: Distance,
    points: usize,
    threads: usize,
) -> Result<SweepResult> {
    if points < 2 {
        return Err(Error::InvalidConfig("sweep needs at least 2 points".into()));
    }
    let dmat = distance_matrix(es, chosen, dist, threads)?;
    // Largest per-example class-distance spread, nudged up so the example
    // attaining it flips strictly instead of tying (ties prefer the
    // lowest class index, which may be seen).
    let beta_max = dmat
        .iter()
        .map(|row| {
            let max = row.iter().cloned().fold(f64::MIN, f64::max);
            let min = row.iter().cloned().fold(f64::MAX, f64::min);
            max - min
        })
        .fold(0.0f64, f64::max)
        * (1.0 + 1e-9);

    let n_classes = es.class_embeddings.len();
    let seen_subset: Vec<usize> = (0..n_classes).filter(|&c| es.class_seen[c]).collect();
    let unseen_subset: Vec<usize> = (0..n_classes).filter(|&c| !es.class_seen[c]).collect();

    let mut out = Vec::with_capacity(points);
    for k in 0..points {
        let beta = beta_max * k as f64 / (points - 1) as f64;
        let (preds, unseen_preds) = predict_from_matrix(&dmat, &es.class_seen, beta);
        let (s, _) = mean_class_accuracy(&preds, &es.class_of, &seen_subset)?;
        let (u, _) = mean_class_accuracy(&preds, &es.class_of, &unseen_subset)?;
        out.push(SweepPoint {
            beta,
            s,
            u,
            hm: harmonic_mean(s, u),
            unseen_preds,
        });
    }
    let best = *out
        .iter()
        .reduce(|best, p| if p.hm > best.hm { p } else { best })
        .unwrap();
    Ok(SweepResult { points: out, best })
}
