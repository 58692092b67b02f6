//! End-to-end acceptance checks. Each check prints one PASS or FAIL line and
//! the binary exits non-zero if any fails.

use std::collections::HashMap;
use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use stylus_core::augment::{augment, pitch_shift, AugmentConfig};
use stylus_core::classifier::{
    fit, fit_indexed, sample_weights, top_k_accuracy, ClassWeight, LrConfig, Objective, Penalty,
};
use stylus_core::concepts::{
    embed_all, expand_concept, masked_sensitivity, most_distinctive_clip, sign_count_experiment,
    test_sign_counts, train_cav, upgma, cluster, wilcoxon_signed_rank, ConceptActivations,
    ConceptExercise, ConceptVariant, Embedder, MaskMode, PerformerActivations, PoolEmbedder,
    BONFERRONI_CONCEPTS, ITERATIONS,
};
use stylus_core::corpus::{
    assign_splits, time_to_column, to_piano_roll, Clip, DatasetTag, ManifestRecord, NoteEvent, PianoRoll,
    Split, SplitRatios, Transcription, MAX_PITCH, MIN_PITCH, ROLL_HEIGHT, ROLL_WIDTH,
};
use stylus_core::features::{
    build_vocabulary, count_matrix, extract_all, extract_features, ExtractConfig, FeatureKind, TfIdf,
};
use stylus_core::interpret::{permutation_importance, permutation_test, top_k_features};
use stylus_core::representations::{
    chord_bins, dynamics_roll, equal_spans, harmony_roll, melody_roll, rhythm_roll,
};
use stylus_core::seed;
use stylus_core::synthetic::{generate, SyntheticConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let checks: Vec<(&str, fn() -> Outcome)> = vec![
        ("synthetic-corpus classification", synthetic_classification),
        ("extraction oracle", extraction_oracle),
        ("logistic regression correctness", lr_correctness),
        ("permutation importance sanity", importance_sanity),
        ("top-K feature selection", top_k_selection),
        ("augmentation bounds", augmentation_bounds),
        ("representation contracts", representation_contracts),
        ("Wilcoxon exactness", wilcoxon_exactness),
        ("concept pipeline end-to-end", concept_pipeline),
        ("clustering oracle", clustering_oracle),
        ("permutation test calibration", permutation_calibration),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let t0 = Instant::now();
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag} criterion {:>2} {name}: {} [{:.1} s]",
            i + 1,
            o.detail,
            t0.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// 1 -------------------------------------------------------------------------

fn synthetic_classification() -> Outcome {
    let t0 = Instant::now();
    let cfg = SyntheticConfig {
        performers: 10,
        recordings_per_performer: 40,
        signature_ngrams: 5,
        signature_voicings: 3,
        signature_weight: 3.0,
        ..Default::default()
    };
    let corpus = generate(&cfg).expect("synthetic corpus");
    let records: Vec<ManifestRecord> = corpus
        .iter()
        .map(|t| ManifestRecord {
            recording_id: t.recording_id.clone(),
            performer: t.performer.clone(),
            dataset_tag: t.dataset_tag,
            path: format!("notes/{}.jsonl", t.recording_id).into(),
        })
        .collect();
    let splits = assign_splits(&records, SplitRatios::default(), 0).expect("splits");
    let feats = extract_all(&corpus, &ExtractConfig::default());
    let vocab = build_vocabulary(&feats, 10, 1000);
    let counts = count_matrix(&feats, &vocab);
    let x = TfIdf::fit(counts.view()).transform(counts.view());
    let rows_of = |s: Split| -> Vec<usize> {
        (0..corpus.len())
            .filter(|&i| splits[&corpus[i].recording_id] == s)
            .collect()
    };
    let (train, test) = (rows_of(Split::Train), rows_of(Split::Test));
    let y_train: Vec<String> = train.iter().map(|&i| corpus[i].performer.clone()).collect();
    let model = fit(
        x.select(Axis(0), &train).view(),
        &y_train,
        &LrConfig::new(1.0, ClassWeight::Balanced, Penalty::L2),
    )
    .expect("fit");
    let y_test: Vec<usize> = test
        .iter()
        .map(|&i| model.class_index(&corpus[i].performer).expect("known performer"))
        .collect();
    let probs = model.predict_proba(x.select(Axis(0), &test).view()).expect("probs");
    let top1 = top_k_accuracy(probs.view(), &y_test, 1);
    let top5 = top_k_accuracy(probs.view(), &y_test, 5);
    let secs = t0.elapsed().as_secs_f64();
    let threads = rayon::current_num_threads();
    outcome(
        top1 >= 0.90 && top5 == 1.0 && secs < 120.0,
        format!(
            "{} recordings, vocabulary {}, held-out n={}: top-1 {top1:.3}, top-5 {top5:.3}, {secs:.1} s on {threads} thread(s)",
            corpus.len(),
            vocab.len(),
            test.len()
        ),
    )
}

// 2 -------------------------------------------------------------------------

/// Notes on a 10 ms grid, kept as integer hundredths so the oracle never
/// touches floating point.
#[derive(Clone, Copy)]
struct GridNote {
    on: i64,
    off: i64,
    pitch: i32,
}

fn random_grid_notes(rng: &mut ChaCha8Rng) -> Vec<GridNote> {
    let n = rng.gen_range(1..=20);
    let mut notes = Vec::with_capacity(n);
    let mut t = 0i64;
    let mut pitch: i32 = rng.gen_range(45..=80);
    for _ in 0..n {
        t += match rng.gen_range(0..10) {
            0..=2 => rng.gen_range(0..=6),
            3..=7 => rng.gen_range(5..=60),
            // long silences, including gaps of exactly two seconds
            _ => rng.gen_range(150..=320),
        };
        pitch = if rng.gen_bool(0.15) {
            rng.gen_range(33..=93)
        } else {
            (pitch + rng.gen_range(-7..=7)).clamp(33, 93)
        };
        let dur = if rng.gen_bool(0.2) { 100 } else { rng.gen_range(1..=150) };
        notes.push(GridNote {
            on: t,
            off: t + dur,
            pitch,
        });
    }
    notes
}

fn to_events(notes: &[GridNote], shift: i32) -> Vec<NoteEvent> {
    notes
        .iter()
        .map(|n| NoteEvent::new(n.on as f64 / 100.0, n.off as f64 / 100.0, (n.pitch + shift) as u8, 64))
        .collect()
}

type Multiset = HashMap<(bool, Vec<i32>), u32>;

/// Brute-force n-grams and voicings straight from the definitions.
fn oracle_features(notes: &[GridNote]) -> Multiset {
    // snap to the nearest 100 ms; halves round up (onsets are non-negative)
    let mut frames: Vec<(i64, Vec<GridNote>)> = Vec::new();
    for n in notes {
        let key = (n.on + 5) / 10;
        match frames.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(*n),
            None => frames.push((key, vec![*n])),
        }
    }
    frames.sort_by_key(|(k, _)| *k);

    let mut out = Multiset::new();
    let melody: Vec<GridNote> = frames
        .iter()
        .map(|(_, v)| {
            let top = v.iter().map(|n| n.pitch).max().unwrap();
            *v.iter().filter(|n| n.pitch == top).min_by_key(|n| n.on).unwrap()
        })
        .collect();
    for n in 3..=7 {
        for start in 0..melody.len() {
            if start + n > melody.len() {
                break;
            }
            let w = &melody[start..start + n];
            let span = w.iter().map(|m| m.pitch).max().unwrap() - w.iter().map(|m| m.pitch).min().unwrap();
            let long_gap = (1..n).any(|i| w[i].on - w[i - 1].off > 200);
            if span <= 12 && !long_gap {
                let deltas = w.iter().map(|m| m.pitch - w[0].pitch).collect();
                *out.entry((false, deltas)).or_insert(0) += 1;
            }
        }
    }
    for (_, v) in &frames {
        let mut p: Vec<i32> = v.iter().map(|n| n.pitch).collect();
        p.sort();
        p.dedup();
        if !(3..=7).contains(&p.len()) {
            continue;
        }
        let leaps = (1..p.len()).filter(|&i| p[i] - p[i - 1] > 15).count();
        if leaps < 2 {
            *out.entry((true, p.iter().map(|x| x - p[0]).collect())).or_insert(0) += 1;
        }
    }
    out
}

fn library_features(events: &[NoteEvent]) -> Multiset {
    let t = Transcription::new("r", "p", DatasetTag::Solo, events.to_vec()).expect("valid notes");
    extract_features(t.notes(), &ExtractConfig::default())
        .into_iter()
        .map(|(f, c)| {
            let key = (f.kind == FeatureKind::Harmony, f.intervals.iter().map(|v| *v as i32).collect());
            (key, c)
        })
        .collect()
}

fn extraction_oracle() -> Outcome {
    let mut rng = seed::rng(2, "acceptance-extraction", 0);
    let (mut mismatches, mut variant_failures, mut features) = (0, 0, 0usize);
    for _ in 0..500 {
        let notes = random_grid_notes(&mut rng);
        let expected = oracle_features(&notes);
        let got = library_features(&to_events(&notes, 0));
        features += expected.values().sum::<u32>() as usize;
        if got != expected {
            mismatches += 1;
        }
        for k in -6..=6 {
            if library_features(&to_events(&notes, k)) != got {
                variant_failures += 1;
            }
        }
    }
    outcome(
        mismatches == 0 && variant_failures == 0,
        format!(
            "500 transcriptions, {features} oracle features: {mismatches} mismatches, {variant_failures} transposition failures"
        ),
    )
}

// 3 -------------------------------------------------------------------------

fn random_problem(rng: &mut ChaCha8Rng) -> (Array2<f64>, Vec<usize>, usize) {
    let n = rng.gen_range(5..=20);
    let v = rng.gen_range(1..=6);
    let k = rng.gen_range(2..=4);
    let x = Array2::from_shape_fn((n, v), |_| rng.gen_range(-2.0..2.0));
    let mut y: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
    y.shuffle(rng);
    (x, y, k)
}

fn lr_correctness() -> Outcome {
    let mut rng = seed::rng(3, "acceptance-lr", 0);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let (x, y, k) = random_problem(&mut rng);
        let mode = if case % 2 == 0 { ClassWeight::Balanced } else { ClassWeight::None };
        let lambda = [0.0, 0.1, 2.0][case % 3];
        let obj = Objective::new(x.view(), &y, sample_weights(&y, k, mode), k, lambda);
        let params: Vec<f64> = (0..obj.n_params()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let (_, grad) = obj.value_and_gradient(&params);
        let h = 1e-6;
        for (j, g) in grad.iter().enumerate() {
            let mut up = params.clone();
            let mut down = params.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (obj.value(&up) - obj.value(&down)) / (2.0 * h);
            // relative error, floored so that vanishing components compare absolutely
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }

    let mut softmax_worst = 0.0f64;
    let mut identical = true;
    for _ in 0..20 {
        let (x, y, k) = random_problem(&mut rng);
        let labels: Vec<String> = (0..k).map(|c| format!("class{c}")).collect();
        let cfg = LrConfig::new(rng.gen_range(0.01..100.0), ClassWeight::Balanced, Penalty::L2);
        let a = fit_indexed(x.view(), &y, labels.clone(), &cfg).expect("fit");
        let b = fit_indexed(x.view(), &y, labels, &cfg).expect("refit");
        let bits = |m: &stylus_core::classifier::LrModel| -> Vec<u64> {
            m.weights.iter().chain(m.bias.iter()).map(|v| v.to_bits()).collect()
        };
        identical &= bits(&a) == bits(&b);
        // extreme inputs push logits far apart
        let big = x.mapv(|v| v * 1e3);
        let p = a.predict_proba(big.view()).expect("probs");
        for row in p.rows() {
            softmax_worst = softmax_worst.max((row.sum() - 1.0).abs());
        }
    }
    outcome(
        worst < 1e-4 && softmax_worst <= 1e-9 && identical,
        format!(
            "max gradient relative error {worst:.2e} over 50 instances, max |row sum - 1| {softmax_worst:.1e}, refits bit-identical: {identical}"
        ),
    )
}

// 4 -------------------------------------------------------------------------

/// Four classes; columns 0..4 carry a noisy one-hot code of the class,
/// columns 4..8 are pure noise.
fn planted_data(rng: &mut ChaCha8Rng, n: usize) -> (Array2<f64>, Vec<usize>) {
    let y: Vec<usize> = (0..n).map(|i| i % 4).collect();
    let x = Array2::from_shape_fn((n, 8), |(i, j)| {
        let signal = if j < 4 && y[i] == j { 1.0 } else { 0.0 };
        let noise: f64 = rng.gen_range(-0.3..0.3);
        if j < 4 {
            signal + noise
        } else {
            noise
        }
    });
    (x, y)
}

fn importance_sanity() -> Outcome {
    let mut rng = seed::rng(4, "acceptance-importance", 0);
    let (xtr, ytr) = planted_data(&mut rng, 2000);
    let (xte, yte) = planted_data(&mut rng, 400);
    let labels: Vec<String> = (0..4).map(|c| format!("class{c}")).collect();
    let model = fit_indexed(xtr.view(), &ytr, labels, &LrConfig::new(1.0, ClassWeight::Balanced, Penalty::L2))
        .expect("fit");
    let planted = permutation_importance(&model, xte.view(), &yte, &[0, 1, 2, 3], 200, 4, "planted").unwrap();
    let noise = permutation_importance(&model, xte.view(), &yte, &[4, 5, 6, 7], 200, 4, "noise").unwrap();
    outcome(
        planted.mean_accuracy_loss >= 0.3 && noise.mean_accuracy_loss <= 0.02,
        format!(
            "baseline {:.3}; planted group loses {:.3}, noise group loses {:.4} (200 iterations)",
            planted.baseline_accuracy, planted.mean_accuracy_loss, noise.mean_accuracy_loss
        ),
    )
}

// 5 -------------------------------------------------------------------------

fn top_k_oracle(w: &Array2<f64>, k: usize) -> Vec<usize> {
    let v = w.ncols();
    let score = |j: usize| (0..w.nrows()).map(|i| w[[i, j]].abs()).fold(0.0, f64::max);
    // repeated selection of the best remaining column, lowest index on ties
    let mut remaining: Vec<usize> = (0..v).collect();
    let mut out = Vec::new();
    while out.len() < k.min(v) {
        let mut best = 0;
        for pos in 1..remaining.len() {
            if score(remaining[pos]) > score(remaining[best]) {
                best = pos;
            }
        }
        out.push(remaining.remove(best));
    }
    out
}

fn top_k_selection() -> Outcome {
    let mut rng = seed::rng(5, "acceptance-topk", 0);
    let (mut mismatches, mut tie_cases) = (0, 0);
    for case in 0..100 {
        let (kc, v) = (rng.gen_range(1..=5), rng.gen_range(1..=30));
        let w = if case % 2 == 0 {
            // small integers force ties, including +x against -x
            Array2::from_shape_fn((kc, v), |_| rng.gen_range(-3i32..=3) as f64)
        } else {
            Array2::from_shape_fn((kc, v), |_| rng.gen_range(-1.0..1.0))
        };
        let scores: Vec<f64> = w.axis_iter(Axis(1)).map(|c| c.iter().fold(0.0, |m: f64, x| m.max(x.abs()))).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        tie_cases += usize::from(sorted.windows(2).any(|p| p[0] == p[1]));
        let k = rng.gen_range(1..=v + 2);
        if top_k_features(w.view(), k) != top_k_oracle(&w, k) {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0 && tie_cases > 0,
        format!("100 weight matrices ({tie_cases} with tied scores): {mismatches} mismatches"),
    )
}

// 6 -------------------------------------------------------------------------

fn random_clip(rng: &mut ChaCha8Rng, id: usize, max_notes: usize) -> Clip {
    let n = rng.gen_range(1..=max_notes);
    let (lo, hi) = if rng.gen_bool(0.3) {
        // hug the keyboard edges so shifts are clamped
        if rng.gen_bool(0.5) {
            (MIN_PITCH, MIN_PITCH + 10)
        } else {
            (MAX_PITCH - 10, MAX_PITCH)
        }
    } else {
        (MIN_PITCH, MAX_PITCH)
    };
    let mut notes = Vec::with_capacity(n);
    let mut onset = 0.0;
    for _ in 0..n {
        if rng.gen_bool(0.7) {
            onset = rng.gen_range(0.0..29.99);
        }
        let dur = rng.gen_range(0.01..3.0);
        notes.push(NoteEvent::new(onset, onset + dur, rng.gen_range(lo..=hi), rng.gen_range(1..=127)));
    }
    Clip::from_notes(format!("clip{id}"), "p", notes)
}

fn intervals(c: &Clip) -> Vec<i16> {
    let mut out = Vec::new();
    for (i, a) in c.notes.iter().enumerate() {
        for b in &c.notes[i + 1..] {
            out.push((a.pitch as i16 - b.pitch as i16).abs());
        }
    }
    out.sort();
    out
}

fn augmentation_bounds() -> Outcome {
    let mut rng = seed::rng(6, "acceptance-augment", 0);
    let cfg = AugmentConfig::default();
    let (mut violations, mut interval_failures, mut applied) = (0, 0, 0);
    let total = 10_000;
    for i in 0..total {
        let clip = random_clip(&mut rng, i, 40);
        // the parent continues after the clip so compression can refill
        let mut parent = clip.notes.clone();
        for _ in 0..10 {
            let on = rng.gen_range(30.0..40.0);
            parent.push(NoteEvent::new(on, on + 0.5, rng.gen_range(MIN_PITCH..=MAX_PITCH), 80));
        }
        let (out, o) = augment(&clip, Some(&parent), &cfg, i as u64);
        applied += usize::from(o.applied);
        violations += out
            .notes
            .iter()
            .filter(|n| !(MIN_PITCH..=MAX_PITCH).contains(&n.pitch) || !(1..=127).contains(&n.velocity) || n.onset >= 30.0)
            .count();
        let (shifted, _) = pitch_shift(&clip, cfg.max_shift, &mut rng);
        interval_failures += usize::from(intervals(&shifted) != intervals(&clip));
    }
    let rate = applied as f64 / total as f64;
    outcome(
        violations == 0 && interval_failures == 0 && rate > 0.48 && rate < 0.52,
        format!("{total} clips: {violations} bound violations, {interval_failures} interval changes, application rate {rate:.4}"),
    )
}

// 7 -------------------------------------------------------------------------

/// Widths must all equal `total / m` when `m` divides `total`; otherwise the
/// first `total % m` are one wider, and the spans tile `0..total`.
fn spans_ok(spans: &[(usize, usize)], m: usize) -> bool {
    if spans.len() != m {
        return false;
    }
    if m == 0 {
        return true;
    }
    let (base, extra) = (ROLL_WIDTH / m, ROLL_WIDTH % m);
    let mut cursor = 0;
    for (i, &(a, b)) in spans.iter().enumerate() {
        let want = if i < extra { base + 1 } else { base };
        if a != cursor || b - a != want {
            return false;
        }
        cursor = b;
    }
    cursor == ROLL_WIDTH
}

/// Every span of an equally spaced roll paints the same rows in every column.
fn constant_over_spans(roll: &PianoRoll, spans: &[(usize, usize)]) -> bool {
    spans.iter().all(|&(a, b)| {
        let first = roll.values().column(a).to_owned();
        (a..b).all(|c| roll.values().column(c) == first) && first.iter().any(|v| *v > 0.0)
    })
}

fn representation_contracts() -> Outcome {
    let mut rng = seed::rng(7, "acceptance-rolls", 0);
    let mut failures: HashMap<&str, usize> = HashMap::new();
    let mut fail = |what: &'static str| *failures.entry(what).or_insert(0) += 1;
    let mut dividing = 0;
    for i in 0..1000 {
        let clip = random_clip(&mut rng, i, 60);
        let s = seed::derive(7, "clip", i as u64);
        let melody = melody_roll(&clip);
        let harmony = harmony_roll(&clip);
        let rhythm = rhythm_roll(&clip, s);
        let dynamics = dynamics_roll(&clip, s);
        for r in [&melody, &harmony, &rhythm, &dynamics] {
            if r.values().dim() != (ROLL_HEIGHT, ROLL_WIDTH) {
                fail("shape");
            }
        }
        // one melody item per distinct 100 ms onset bin
        let mut bins: Vec<i64> = clip.notes.iter().map(|n| time_to_column(n.onset + 0.05) / 10).collect();
        bins.dedup();
        let m = bins.len();
        dividing += usize::from(ROLL_WIDTH % m == 0);
        let spans = equal_spans(m, ROLL_WIDTH);
        if !spans_ok(&spans, m) {
            fail("melody spacing");
        }
        if !constant_over_spans(&melody, &spans) {
            fail("melody layout");
        }
        if melody.values().columns().into_iter().any(|c| c.iter().filter(|v| **v > 0.0).count() != 1) {
            fail("melody monophony");
        }
        let chords = chord_bins(&clip, 3);
        let hs = equal_spans(chords.len(), ROLL_WIDTH);
        if !spans_ok(&hs, chords.len()) || !constant_over_spans(&harmony, &hs) {
            fail("harmony spacing");
        }
        if rhythm.column_profile() != to_piano_roll(&clip).column_profile() {
            fail("rhythm profile");
        }
    }
    let mut detail: Vec<String> = failures.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    detail.sort();
    outcome(
        failures.is_empty(),
        format!(
            "1000 clips ({dividing} with melody length dividing {ROLL_WIDTH}); failures: {}",
            if detail.is_empty() { "none".to_string() } else { detail.join(", ") }
        ),
    )
}

// 8 -------------------------------------------------------------------------

/// Exact two-sided p as `(numerator, n)` with denominator `2^n`, by listing
/// every sign assignment of the ranked non-zero differences.
fn wilcoxon_enumerate(a: &[f64], b: &[f64]) -> (u64, u32) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let n = d.len();
    // doubled mid-rank: 2 * (#smaller) + (#equal) + 1
    let rank2: Vec<u64> = d
        .iter()
        .map(|x| {
            let smaller = d.iter().filter(|y| y.abs() < x.abs()).count() as u64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as u64;
            2 * smaller + equal + 1
        })
        .collect();
    let observed: u64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| rank2[i]).sum();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: u64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| rank2[i]).sum();
        le += u64::from(w <= observed);
        ge += u64::from(w >= observed);
    }
    ((2 * le.min(ge)).min(1 << n), n as u32)
}

fn wilcoxon_exactness() -> Outcome {
    let mut rng = seed::rng(8, "acceptance-wilcoxon", 0);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=8);
        // coarse values produce zero differences and tied magnitudes
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64 / 4.0).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64 / 4.0).collect();
        let (num, m) = wilcoxon_enumerate(&a, &b);
        let got = wilcoxon_signed_rank(&a, &b);
        let p = num as f64 / (1u64 << m) as f64;
        if got.exact != Some((num, m)) || got.p != p {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("1000 random cases with n <= 8: {mismatches} mismatches"))
}

// 9 -------------------------------------------------------------------------

const CONCEPT_ROOTS: [u8; 4] = [84, 24, 46, 64];

fn chord_clip(id: usize, chords: &[Vec<u8>]) -> Clip {
    let mut notes = Vec::new();
    for (j, c) in chords.iter().enumerate() {
        let on = j as f64 * 3.0;
        notes.extend(c.iter().map(|&p| NoteEvent::new(on, on + 1.0, p, 80)));
    }
    Clip::from_notes(format!("clip{id}"), "performer", notes)
}

fn pick_chord(rng: &mut ChaCha8Rng, variants: &[ConceptVariant]) -> Vec<u8> {
    let v = &variants[rng.gen_range(0..variants.len())];
    v.chords[rng.gen_range(0..v.chords.len())].clone()
}

fn concept_pipeline() -> Outcome {
    let exercises: Vec<ConceptExercise> = CONCEPT_ROOTS
        .iter()
        .enumerate()
        .map(|(i, &r)| ConceptExercise {
            concept_id: i as u32 + 1,
            chords: vec![vec![r, r + 4, r + 7], vec![r + 2, r + 5, r + 9]],
        })
        .collect();
    let variants: Vec<Vec<ConceptVariant>> = exercises.iter().map(expand_concept).collect();
    let embedder = PoolEmbedder;
    let concepts: Vec<ConceptActivations> = variants
        .iter()
        .zip(&exercises)
        .map(|(v, e)| ConceptActivations {
            concept_id: e.concept_id,
            acts: embed_all(&v.iter().map(|x| x.render()).collect::<Vec<_>>(), &embedder),
        })
        .collect();

    // Every clip opens with four chords of concept 1. The rest is filler:
    // concept 2 in half the clips, concepts 3 and 4 in the others.
    let mut rng = seed::rng(9, "acceptance-concept-clips", 0);
    let clips: Vec<Clip> = (0..40)
        .map(|k| {
            let mut chords: Vec<Vec<u8>> = (0..4).map(|_| pick_chord(&mut rng, &variants[0])).collect();
            let filler = if k % 2 == 0 { 1 } else { 2 + (k / 2) % 2 };
            chords.extend((0..4).map(|_| pick_chord(&mut rng, &variants[filler])));
            chord_clip(k, &chords)
        })
        .collect();
    let acts = embed_all(&clips.iter().map(harmony_roll).collect::<Vec<_>>(), &embedder);
    let performers = vec![PerformerActivations {
        performer: "performer".into(),
        acts: acts.clone(),
    }];
    let rows = sign_count_experiment(&concepts, &performers, ITERATIONS, 9).expect("sign counts");
    let tests = test_sign_counts(&rows, BONFERRONI_CONCEPTS);
    let planted = tests.iter().find(|t| t.concept == 1).unwrap();
    let other = tests.iter().find(|t| t.concept == 2).unwrap();

    // sensitivity of the clip the planted concept vector scores highest
    let pool = ndarray::concatenate(Axis(0), &[concepts[1].acts.view(), concepts[2].acts.view(), concepts[3].acts.view()])
        .unwrap();
    let cav = train_cav(concepts[0].acts.view(), pool.view(), 1, 9).expect("cav");
    let y = Array1::from(cav.y.clone());
    let best = most_distinctive_clip(&(0..clips.len()).collect::<Vec<_>>(), |&i| acts.row(i).dot(&y)).unwrap();
    let clip = &clips[best];
    let map = masked_sensitivity(clip, harmony_roll, &embedder as &dyn Embedder, &cav, MaskMode::PitchAndTime)
        .expect("sensitivity");
    // the planted chords occupy their pitch rows over the first four chord onsets
    let mut region = Array2::from_elem((ROLL_HEIGHT, ROLL_WIDTH), false);
    for n in clip.notes.iter().filter(|n| n.onset < 12.0) {
        let row = (n.pitch - MIN_PITCH) as usize;
        for c in time_to_column(n.onset) as usize..time_to_column(n.offset) as usize {
            region[[row, c]] = true;
        }
    }
    let (mut inside, mut outside) = ((0.0, 0usize), (0.0, 0usize));
    for ((r, c), v) in map.heatmap.indexed_iter() {
        let slot = if region[[r, c]] { &mut inside } else { &mut outside };
        slot.0 += *v as f64;
        slot.1 += 1;
    }
    let heat_in = inside.0 / inside.1 as f64;
    let heat_out = outside.0 / outside.1 as f64;
    let heat_ok = heat_in > 0.0 && heat_in >= 2.0 * heat_out;

    let pass = planted.mean_ratio > 0.5
        && planted.p_corrected < 0.05
        && other.mean_ratio > 0.4
        && other.mean_ratio < 0.6
        && heat_ok;
    outcome(
        pass,
        format!(
            "planted ratio {:.3} (null {:.3}, corrected p {:.4}); non-planted ratio {:.3}; heat over pattern {heat_in:.4} vs background {heat_out:.4}",
            planted.mean_ratio, planted.mean_null_ratio, planted.p_corrected, other.mean_ratio
        ),
    )
}

// 10 ------------------------------------------------------------------------

/// UPGMA over bitmask clusters, recomputing every average from the leaves.
fn upgma_oracle(d: &Array2<f64>) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let n = d.nrows();
    let mut clusters: Vec<u32> = (0..n).map(|i| 1 << i).collect();
    let leaves = |m: u32| -> Vec<usize> { (0..n).filter(|i| m >> i & 1 == 1).collect() };
    let mut out = Vec::new();
    while clusters.len() > 1 {
        let mut candidates = Vec::new();
        for (x, &a) in clusters.iter().enumerate() {
            for &b in &clusters[x + 1..] {
                let (la, lb) = (leaves(a), leaves(b));
                let total: f64 = la.iter().flat_map(|&i| lb.iter().map(move |&j| d[[i, j]])).sum();
                let avg = total / (la.len() * lb.len()) as f64;
                let key = (la[0].min(lb[0]), la[0].max(lb[0]));
                candidates.push((avg, key, a, b));
            }
        }
        candidates.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
        let (h, _, a, b) = candidates[0];
        out.push((leaves(a), leaves(b), h));
        clusters.retain(|&m| m != a && m != b);
        clusters.push(a | b);
    }
    out
}

fn clustering_oracle() -> Outcome {
    let mut rng = seed::rng(10, "acceptance-cluster", 0);
    let labels: Vec<String> = (0..4).map(|i| format!("e{i}")).collect();
    let mut mismatches = 0;
    for case in 0..50 {
        let mut d = Array2::zeros((4, 4));
        for i in 0..4 {
            for j in i + 1..4 {
                // integer distances in half the cases to exercise ties
                let v = if case % 2 == 0 { rng.gen_range(1..=4) as f64 } else { rng.gen_range(0.0..2.0) };
                d[[i, j]] = v;
                d[[j, i]] = v;
            }
        }
        let tree = upgma(d.view(), labels.clone()).unwrap();
        // expand the library's cluster ids into leaf sets
        let mut members: Vec<Vec<usize>> = (0..4).map(|i| vec![i]).collect();
        let mut got = Vec::new();
        for m in &tree.merges {
            let (mut a, mut b) = (members[m.a].clone(), members[m.b].clone());
            if a[0] > b[0] {
                std::mem::swap(&mut a, &mut b);
            }
            let mut joined = [a.clone(), b.clone()].concat();
            joined.sort();
            members.push(joined);
            got.push((a, b, m.height));
        }
        let mut want = upgma_oracle(&d);
        for w in &mut want {
            if w.0[0] > w.1[0] {
                std::mem::swap(&mut w.0, &mut w.1);
            }
        }
        let same = got.len() == want.len()
            && got.iter().zip(&want).all(|(g, w)| g.0 == w.0 && g.1 == w.1 && (g.2 - w.2).abs() < 1e-12);
        mismatches += usize::from(!same);
    }

    let mut duplicate_failures = 0;
    for _ in 0..50 {
        let n = rng.gen_range(3..=6);
        let mut rows = Array2::from_shape_fn((n, 8), |_| rng.gen_range(-1.0..1.0));
        let (src, dst) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if src == dst {
            continue;
        }
        let copy = rows.row(src).to_owned();
        rows.row_mut(dst).assign(&copy);
        let names: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
        let tree = cluster(rows.view(), names).unwrap();
        let first = tree.merges[0];
        let pair = (src.min(dst), src.max(dst));
        if (first.a, first.b) != pair || first.height.abs() > 1e-12 {
            duplicate_failures += 1;
        }
    }
    outcome(
        mismatches == 0 && duplicate_failures == 0,
        format!("50 four-entity matrices: {mismatches} merge-sequence mismatches; duplicated rows merged first at height 0 except {duplicate_failures} times"),
    )
}

// 11 ------------------------------------------------------------------------

/// Kolmogorov-Smirnov statistic of `sample` against U(0, 1).
fn ks_uniform(sample: &mut [f64]) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

fn permutation_calibration() -> Outcome {
    let n_perm = 199;
    let replicates = 500;
    let mut ps: Vec<f64> = (0..replicates)
        .map(|r| {
            // labels independent of the values: the null holds
            let mut rng = seed::rng(11, "acceptance-null", r as u64);
            let values: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..1.0)).collect();
            let labels: Vec<bool> = (0..30).map(|i| i < 15).collect();
            permutation_test(&labels, n_perm, seed::derive(11, "replicate", r as u64), |l: &[bool]| {
                let (mut a, mut b) = (0.0, 0.0);
                for (x, &flag) in values.iter().zip(l) {
                    if flag {
                        a += x;
                    } else {
                        b += x;
                    }
                }
                a - b
            })
        })
        .collect();
    let lo = 1.0 / (n_perm + 1) as f64;
    let in_range = ps.iter().all(|p| *p >= lo && *p <= 1.0);
    let d = ks_uniform(&mut ps);
    // asymptotic critical value at alpha = 0.01
    let critical = (-(0.01f64 / 2.0).ln() / 2.0).sqrt() / (replicates as f64).sqrt();
    outcome(
        in_range && d < critical,
        format!("{replicates} null replicates with N={n_perm}: all p in [1/200, 1]: {in_range}; KS D {d:.4} vs critical {critical:.4}"),
    )
}
