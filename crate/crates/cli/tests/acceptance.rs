//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use scenesketch::config::RunConfig;
use scenesketch_core::analysis::{coarse_to_fine, MaskEnd, StrokeTime};
use scenesketch_core::encoder::{ConvEncoder, ConvSpec, EncoderConfig};
use scenesketch_core::geometry::{rdp_keep_indices, rdp_simplify};
use scenesketch_core::hdecoder::{
    train_pretext, DecoderConfig, DecoderError, HDecoder, PretextConfig, SampleMode, UnrollLimits,
};
use scenesketch_core::retrieval::{
    chance_recall, evaluate, masked_retrieval_eval, raster_for, rank, recall_at_k, split_corpus, train_retrieval,
    Distance, EmbeddingModel, Gallery, MaskedItem, QueryRanking, RetrievalPair,
};
use scenesketch_core::sketch::{decode_stroke5, encode_stroke5, normalize, StrokePoint};
use scenesketch_core::synth::{generate_synthetic, SynthSpec};
use scenesketch_core::tensor::{grad_check, GradCheckConfig};
use scenesketch_core::{ParamStore, PenState, Rng, Stroke, Tape, Tensor, VectorSketch};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn random_sketch(rng: &mut Rng, id: usize) -> VectorSketch {
    let canvas = match rng.below(3) {
        0 => 1.0,
        1 => 256.0,
        _ => rng.uniform(10.0, 800.0),
    };
    let mut t = 0;
    let strokes = (0..1 + rng.below(8))
        .map(|_| {
            Stroke::new(
                (0..1 + rng.below(12))
                    .map(|_| {
                        t += 1 + rng.below(30) as u64;
                        StrokePoint::new(rng.uniform(0.0, canvas), rng.uniform(0.0, canvas), t)
                    })
                    .collect(),
            )
        })
        .collect();
    VectorSketch::new(format!("r{id}"), "u", strokes, canvas, canvas).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::seed_from_u64(1);
    let mut failures = 0;
    for i in 0..10_000 {
        let s = random_sketch(&mut rng, i);
        let seq = encode_stroke5(&s).unwrap();
        let back = decode_stroke5(seq.points()).unwrap();
        let norm = normalize(&s).unwrap();
        let same_geometry = back.strokes.iter().zip(&norm.strokes).all(|(a, b)| a.xy() == b.xy());
        if !(same_geometry && back.partition() == s.partition() && encode_stroke5(&back).unwrap() == seq) {
            failures += 1;
        }
    }
    let took = start.elapsed();
    outcome(failures == 0 && took < Duration::from_secs(5), format!("10000 round trips, {failures} failures, {}", secs(took)))
}

fn random_store(store: &mut ParamStore, rng: &mut Rng, scale: f64) {
    for id in store.ids().collect::<Vec<_>>() {
        for v in store.get_mut(id).data_mut() {
            *v = scale * rng.uniform(-1.0, 1.0);
        }
    }
}

fn primitive_checks(seed: u64) -> f64 {
    let mut rng = Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let add = |store: &mut ParamStore, shape: &[usize], rng: &mut Rng| {
        let n = shape.iter().product();
        store.add(format!("p{}", store.len()), Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap())
    };
    let a = add(&mut store, &[3, 4], &mut rng);
    let b = add(&mut store, &[4, 2], &mut rng);
    let v = add(&mut store, &[4], &mut rng);
    let img = add(&mut store, &[2, 6, 6], &mut rng);
    let k = add(&mut store, &[3, 2, 3, 3], &mut rng);
    let kb = add(&mut store, &[3], &mut rng);
    let one_hot = Tensor::new(vec![2, 3], vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let report = grad_check(
        |t: &mut Tape, p| {
            let m = t.matmul(p[a], p[b])?;
            let mv = t.matvec(p[a], p[v])?;
            let sg = t.sigmoid(mv)?;
            let th = t.tanh(m)?;
            let th = t.reshape(th, &[6])?;
            let sm = t.softmax(p[v])?;
            let nv = t.l2_normalize(p[v])?;
            let d = t.squared_distance(sm, nv)?;
            let c = t.conv2d(p[img], p[k], p[kb], 1, 1)?;
            let r = t.relu(c)?;
            let mp = t.max_pool2d(r, 2)?;
            let g = t.global_max_pool(mp)?;
            let g = t.add_scalar(g, 0.1)?;
            let g = t.sub(g, sg)?;
            let logits = t.slice(th, 0, 6)?;
            let logits = t.reshape(logits, &[2, 3])?;
            let ce = t.cross_entropy(logits, &one_hot)?;
            let mse = t.mse_loss(sg, g)?;
            let parts = [t.sum(th)?, d, ce, mse];
            let cat = t.concat(&[sg, g])?;
            let cs = t.mean(cat)?;
            let mut acc = t.scale(cs, 0.5)?;
            for p in parts {
                let q = t.mul(p, p)?;
                acc = t.add(acc, q)?;
            }
            Ok::<_, scenesketch_core::TensorError>(acc)
        },
        &store,
        GradCheckConfig { seed, ..GradCheckConfig::default() },
    )
    .unwrap();
    report.max_rel_error
}

fn full_graph_check(seed: u64) -> f64 {
    let mut rng = Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let enc_cfg = EncoderConfig { input_size: 8, layers: vec![ConvSpec::new(2, 3, 2, 1), ConvSpec::new(3, 3, 2, 1)], latent_dim: 4 };
    let enc = ConvEncoder::new(enc_cfg, &mut store, "encoder", &mut rng).unwrap();
    let dec_cfg = DecoderConfig { latent_dim: 4, global_hidden: 3, local_hidden: 3, stroke_dim: 2 };
    let dec = HDecoder::new(dec_cfg, &mut store, "decoder", &mut rng).unwrap();
    random_store(&mut store, &mut rng, 0.8);
    let sketch = VectorSketch::new(
        "g",
        "u",
        vec![
            Stroke::new(vec![StrokePoint::new(0.1, 0.2, 0), StrokePoint::new(0.8, 0.3, 1), StrokePoint::new(0.5, 0.9, 2)]),
            Stroke::new(vec![StrokePoint::new(0.2, 0.7, 5), StrokePoint::new(0.6, 0.6, 6)]),
        ],
        1.0,
        1.0,
    )
    .unwrap();
    // Grey-level input keeps ReLUs and pooling away from exact ties.
    let mut raster = scenesketch_core::geometry::rasterize(&sketch, 8, 8, 1).unwrap();
    for v in raster.pixels.iter_mut() {
        *v = 0.6 * *v + 0.4 * rng.next_f64();
    }
    let target = encode_stroke5(&sketch).unwrap();
    grad_check(
        |t: &mut Tape, p| {
            let l = enc.forward_raster(t, p, &raster)?;
            Ok::<_, DecoderError>(dec.teacher_forced_loss(t, p, l, &target, 1.0)?.total)
        },
        &store,
        GradCheckConfig { seed, ..GradCheckConfig::default() },
    )
    .unwrap()
    .max_rel_error
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let prim = (0..20).map(primitive_checks).fold(0.0, f64::max);
    let full = (0..10).map(full_graph_check).fold(0.0, f64::max);
    let took = start.elapsed();
    outcome(
        prim <= 1e-4 && full <= 1e-4 && took < Duration::from_secs(60),
        format!("max rel error primitives {prim:.2e}, encoder+decoder {full:.2e}, {}", secs(took)),
    )
}

fn criterion_3() -> Outcome {
    let mut failures = 0;
    for seed in 0..1000u64 {
        let mut rng = Rng::seed_from_u64(seed);
        let cfg = DecoderConfig { latent_dim: 6, global_hidden: 1 + rng.below(8), local_hidden: 1 + rng.below(8), stroke_dim: 1 + rng.below(5) };
        let mut store = ParamStore::new();
        let dec = HDecoder::new(cfg, &mut store, "d", &mut rng).unwrap();
        let scale = rng.uniform(0.1, 5.0);
        random_store(&mut store, &mut rng, scale);
        let latent: Vec<f64> = (0..6).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let (ms, mp) = (1 + rng.below(6), 1 + rng.below(10));
        let mode = if seed % 2 == 0 {
            SampleMode::Greedy
        } else {
            SampleMode::Stochastic { seed, temperature: rng.uniform(0.2, 2.0) }
        };
        let ok = match dec.sample(&store, &latent, UnrollLimits::new(ms, mp).unwrap(), mode) {
            Ok(out) => {
                let seq = out.sequence;
                seq.len() <= ms * mp
                    && seq.stroke_count() <= ms
                    && seq.points().last().map(|p| p.pen) == Some(PenState::End)
                    && decode_stroke5(seq.points()).is_ok()
            }
            Err(_) => false,
        };
        failures += usize::from(!ok);
    }
    outcome(failures == 0, format!("1000 random decoders sampled, {failures} invalid"))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let spec = SynthSpec { max_primitives: 4, ..SynthSpec::default() };
    let corpus: Vec<VectorSketch> = generate_synthetic(7, 20, &spec).unwrap().into_iter().map(|s| s.sketch).collect();
    let max_points = corpus.iter().flat_map(|s| &s.strokes).map(Stroke::len).max().unwrap();
    let max_strokes = corpus.iter().map(VectorSketch::stroke_count).max().unwrap();
    let cfg = PretextConfig {
        encoder: EncoderConfig {
            input_size: 32,
            layers: vec![ConvSpec::new(8, 3, 2, 1), ConvSpec::new(16, 3, 2, 1), ConvSpec::new(32, 3, 2, 1)],
            latent_dim: 32,
        },
        decoder: DecoderConfig { latent_dim: 32, global_hidden: 32, local_hidden: 32, stroke_dim: 32 },
        epochs: 200,
        batch_size: 4,
        lr: 5e-3,
        lambda: 1.0,
        seed: 7,
        thickness: 1,
        clip_norm: Some(1.0),
    };
    let out = train_pretext(&corpus, &cfg).unwrap();
    let ratio = out.curve.last().unwrap().total / out.curve[0].total;
    let limits = UnrollLimits::new(6, 12).unwrap();
    let matched = corpus
        .iter()
        .filter(|s| {
            let raster = scenesketch_core::hdecoder::PretextItem::from_sketch(s, 32, 1).unwrap().raster;
            out.model.sample(&raster, limits, SampleMode::Greedy).unwrap().sequence.stroke_count() == s.stroke_count()
        })
        .count();
    let took = start.elapsed();
    outcome(
        max_strokes <= 4 && max_points <= 10 && ratio < 0.2 && matched >= 15 && took < Duration::from_secs(600),
        format!("loss ratio {ratio:.4}, stroke counts matched {matched}/20, {}", secs(took)),
    )
}

fn oracle_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    if len == 0.0 {
        (p.0 - a.0).hypot(p.1 - a.1)
    } else {
        ((p.0 - a.0) * dy - (p.1 - a.1) * dx).abs() / len
    }
}

fn rdp_oracle(pts: &[(f64, f64)], eps: f64) -> Vec<(f64, f64)> {
    if pts.len() <= 2 {
        return pts.to_vec();
    }
    let (a, b) = (pts[0], pts[pts.len() - 1]);
    let (mut idx, mut dmax) = (0, -1.0);
    for (i, &p) in pts.iter().enumerate().take(pts.len() - 1).skip(1) {
        let d = oracle_dist(p, a, b);
        if d > dmax {
            idx = i;
            dmax = d;
        }
    }
    if dmax > eps {
        let mut left = rdp_oracle(&pts[..=idx], eps);
        left.pop();
        left.extend(rdp_oracle(&pts[idx..], eps));
        left
    } else {
        vec![a, b]
    }
}

fn criterion_5() -> Outcome {
    let eps = [0.0, 0.01, 0.05, 0.1, 0.3];
    let mut rng = Rng::seed_from_u64(5);
    let (mut mismatches, mut non_monotone) = (0, 0);
    for _ in 0..1000 {
        let n = rng.below(51);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.next_f64(), rng.next_f64())).collect();
        let mut prev: Option<Vec<usize>> = None;
        for &e in &eps {
            if rdp_simplify(&pts, e) != rdp_oracle(&pts, e) {
                mismatches += 1;
            }
            let keep = rdp_keep_indices(&pts, e);
            if let Some(p) = &prev {
                if !keep.iter().all(|i| p.contains(i)) {
                    non_monotone += 1;
                }
            }
            prev = Some(keep);
        }
    }
    outcome(
        mismatches == 0 && non_monotone == 0,
        format!("5000 cases, {mismatches} oracle mismatches, {non_monotone} monotonicity violations"),
    )
}

fn retrieval_data(seed: u64, n: usize) -> (RunConfig, Vec<(VectorSketch, scenesketch_core::RasterSketch)>) {
    let cfg = RunConfig { seed, ..RunConfig::default() };
    let scenes = generate_synthetic(seed, n, &cfg.data.to_core()).unwrap();
    (cfg, scenes.into_iter().map(|s| (s.sketch, s.photo)).collect())
}

fn pairs(model: &EmbeddingModel, data: &[(VectorSketch, scenesketch_core::RasterSketch)], idx: &[usize], thickness: usize) -> Vec<RetrievalPair> {
    idx.iter()
        .map(|&i| RetrievalPair { id: data[i].0.sketch_id.clone(), sketch: raster_for(model, &data[i].0, thickness).unwrap(), photo: data[i].1.clone() })
        .collect()
}

/// Counts queries whose truth sits among the top `k` by strict comparison
/// against every other gallery item, ties broken by gallery order.
fn recall_oracle(queries: &[Vec<f64>], gallery: &[Vec<f64>], truth: &[usize], k: usize) -> f64 {
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let hits = queries
        .iter()
        .zip(truth)
        .filter(|(q, &t)| {
            let dt = d(q, &gallery[t]);
            let ahead = gallery.iter().enumerate().filter(|(j, g)| d(q, g) < dt || (d(q, g) == dt && *j < t)).count();
            ahead < k
        })
        .count();
    100.0 * hits as f64 / queries.len() as f64
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let (cfg, data) = retrieval_data(0, 200);
    let sketches: Vec<VectorSketch> = data.iter().map(|d| d.0.clone()).collect();
    let split = split_corpus(&sketches, cfg.retrieval.train_fraction, cfg.seed).unwrap();
    let rc = cfg.retrieval_config();
    let probe = EmbeddingModel::new(rc.model.clone(), 0).unwrap();
    let train = pairs(&probe, &data, &split.train, cfg.retrieval.thickness);
    let test = pairs(&probe, &data, &split.test, cfg.retrieval.thickness);
    let model = train_retrieval(&train, &rc, None).unwrap().model;
    let r = evaluate(&model, &test, rc.distance).unwrap();
    let took = start.elapsed();

    let mut rng = Rng::seed_from_u64(66);
    let mut oracle_mismatch = 0;
    for g in 0..50 {
        let n = 1 + rng.below(40);
        let dim = 1 + rng.below(4);
        // Coarse values produce ties now and then.
        let mut v = || (0..dim).map(|_| (rng.below(5) as f64) * 0.5).collect::<Vec<f64>>();
        let gal: Vec<Vec<f64>> = (0..n).map(|_| v()).collect();
        let queries: Vec<Vec<f64>> = (0..n).map(|_| v()).collect();
        let mut gallery = Gallery::new();
        for (i, e) in gal.iter().enumerate() {
            gallery.push(format!("g{i}"), e.clone()).unwrap();
        }
        let mut truth_map = BTreeMap::new();
        let mut truth = Vec::new();
        let mut results = Vec::new();
        for (i, q) in queries.iter().enumerate() {
            let t = (i * 7 + g) % n;
            truth.push(t);
            truth_map.insert(format!("q{i}"), format!("g{t}"));
            results.push(QueryRanking { query_id: format!("q{i}"), ranked: rank(q, &gallery, Distance::SqEuclidean).unwrap() });
        }
        for k in [1, 5, 10] {
            if recall_at_k(&results, &truth_map, k).unwrap() != recall_oracle(&queries, &gal, &truth, k) {
                oracle_mismatch += 1;
            }
        }
    }
    outcome(
        r.r_at_1 >= 95.0 && r.r_at_10 == 100.0 && oracle_mismatch == 0 && took < Duration::from_secs(900),
        format!(
            "{} train / {} test pairs, R@1 {:.1}, R@10 {:.1}, {}; recall oracle mismatches {oracle_mismatch}/150",
            train.len(),
            test.len(),
            r.r_at_1,
            r.r_at_10,
            secs(took)
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut worst_gap: f64 = 0.0;
    let mut zero_exact = true;
    let mut details = Vec::new();
    for seed in 1..=5u64 {
        let (mut cfg, data) = retrieval_data(seed, 60);
        cfg.retrieval.epochs = 5;
        let rc = { let mut rc = cfg.retrieval_config(); rc.seed = seed; rc };
        let probe = EmbeddingModel::new(rc.model.clone(), 0).unwrap();
        let all: Vec<usize> = (0..data.len()).collect();
        let model = train_retrieval(&pairs(&probe, &data, &all[..40], cfg.retrieval.thickness), &rc, None).unwrap().model;
        let test = &data[40..];
        let items: Vec<MaskedItem> = test.iter().map(|(s, p)| MaskedItem { sketch: s.clone(), photo: p.clone() }).collect();
        let unmasked = evaluate(&model, &pairs(&model, test, &(0..test.len()).collect::<Vec<_>>(), cfg.retrieval.thickness), rc.distance).unwrap();
        let pts = masked_retrieval_eval(&model, &items, &[(0.0, MaskEnd::Early), (1.0, MaskEnd::Early), (1.0, MaskEnd::Late)], cfg.retrieval.thickness, rc.distance).unwrap();
        zero_exact &= pts[0].r_at_10 == unmasked.r_at_10;
        let chance = chance_recall(10, items.len());
        for p in &pts[1..] {
            worst_gap = worst_gap.max((p.r_at_10 - chance).abs());
        }
        details.push(format!("{:.1}", pts[1].r_at_10));
    }
    outcome(
        zero_exact && worst_gap <= 3.0,
        format!("mask 0 matches unmasked: {zero_exact}; mask 1 R@10 {} vs chance {:.1}", details.join("/"), chance_recall(10, 20)),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = Rng::seed_from_u64(8);
    let mut failures = 0;
    for _ in 0..200 {
        let n_strokes = 2 + rng.below(10);
        let corpus: Vec<VectorSketch> = (0..1 + rng.below(6))
            .map(|i| {
                // Every sketch has the same stroke count and lengths that fall
                // with drawing order.
                let strokes = (0..n_strokes)
                    .map(|k| {
                        let len = 0.9 * (n_strokes - k) as f64 / n_strokes as f64 + 0.001 * i as f64;
                        Stroke::new(vec![StrokePoint::new(0.05, 0.05 + 0.01 * k as f64, 10 * k as u64), StrokePoint::new(0.05 + len, 0.05 + 0.01 * k as f64, 10 * k as u64 + 5)])
                    })
                    .collect();
                VectorSketch::new(format!("c{i}"), "u", strokes, 1.0, 1.0).unwrap()
            })
            .collect();
        let bins = 2 + rng.below(n_strokes - 1);
        let curve = coarse_to_fine(&corpus, bins, StrokeTime::Ordinal).unwrap();
        failures += usize::from(!(curve.is_strictly_decreasing() && curve.bins.len() == bins));
    }
    outcome(failures == 0, format!("200 constructed corpora, {failures} non-decreasing curves"))
}

fn hash_tree(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let digest = Sha256::digest(std::fs::read(&p).unwrap());
                let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), hex);
            }
        }
    }
    out
}

const PIPELINE: &[&[&str]] = &[
    &["gen-data", "-o", "data", "--n", "40", "--seed", "11"],
    &["stats", "data/sketches.ndjson", "--coarse-to-fine", "c2f.csv", "--bins", "5"],
    &["convert", "data/sketches.ndjson", "-o", "s.stroke5"],
    &["convert", "s.stroke5", "-o", "back.ndjson", "--to", "ndjson"],
    &["simplify", "data/sketches.ndjson", "-o", "simple.ndjson", "--epsilon", "0.02"],
    &["rasterize", "data/sketches.ndjson", "-o", "rasters", "--size", "32"],
    &["train-pretext", "data/sketches.ndjson", "-o", "pretext.json", "--epochs", "2", "--seed", "3", "--loss-csv", "pretext.csv", "--config", "pretext.toml"],
    &["sample", "data/sketches.ndjson", "--checkpoint", "pretext.json", "-o", "greedy.stroke5"],
    &["sample", "data/sketches.ndjson", "--checkpoint", "pretext.json", "-o", "stoch.stroke5", "--temperature", "0.8", "--seed", "5"],
    &["train-retrieval", "--data", "data", "-o", "ret.json", "--epochs", "3", "--warm-start", "pretext.json", "--loss-csv", "ret.csv"],
    &["eval-retrieval", "--checkpoint", "ret.json", "--data", "data", "-o", "eval.json", "--rankings", "ranks.csv"],
    &["mask-eval", "--checkpoint", "ret.json", "--data", "data", "-o", "mask.csv", "--fractions", "0,0.5,1"],
];

fn run_pipeline(dir: &Path) -> Result<BTreeMap<String, String>, String> {
    // A small decoder keeps the pretext step quick.
    std::fs::write(dir.join("pretext.toml"), "task = \"pretext\"\n[decoder]\nglobal_hidden = 16\nlocal_hidden = 16\nstroke_dim = 8\n").unwrap();
    let mut stdout = String::new();
    for args in PIPELINE {
        let out = Command::new(env!("CARGO_BIN_EXE_scenesketch")).args(*args).current_dir(dir).output().unwrap();
        if !out.status.success() {
            return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&out.stderr)));
        }
        stdout.push_str(&String::from_utf8_lossy(&out.stdout));
    }
    let mut hashes = hash_tree(dir);
    let digest = Sha256::digest(stdout.as_bytes());
    hashes.insert("<stdout>".into(), digest.iter().map(|b| format!("{b:02x}")).collect());
    Ok(hashes)
}

fn criterion_9() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    match (run_pipeline(a.path()), run_pipeline(b.path())) {
        (Ok(ha), Ok(hb)) => {
            let differing: Vec<&String> = ha.keys().filter(|k| hb.get(*k) != ha.get(*k)).collect();
            outcome(
                differing.is_empty() && ha.len() == hb.len(),
                format!("{} commands, {} output files hashed, differing: {differing:?}", PIPELINE.len(), ha.len()),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 9] = [
        ("stroke-5 codec round trip", criterion_1),
        ("gradient checks", criterion_2),
        ("decoder sampling state machine", criterion_3),
        ("pretext optimization", criterion_4),
        ("RDP oracle and monotonicity", criterion_5),
        ("retrieval on synthetic pairs", criterion_6),
        ("masking protocol", criterion_7),
        ("coarse-to-fine curve", criterion_8),
        ("CLI determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        println!("{} criterion {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
