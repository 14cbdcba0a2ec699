//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line for
//! each, and exits non-zero if any failed.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use geobench_core::corpus::{
    char_slice, parse_unified_corpus, serialize_corpus, Corpus, CorpusEntry, GeoPoint, Genre, ToponymSpan,
};
use geobench_core::experiment::{find_experiment, run_experiment, ExperimentPlan, ExperimentStatus};
use geobench_core::gazetteer::load_gazetteer;
use geobench_core::geoparse::{
    geoparse_gazpop, parse_output_json, GeoparseError, GeoparseResult, Geoparser, GeoparserKind, GeoparserRef,
    ReplayFixture, ReplayGeoparser,
};
use geobench_core::matching::{match_spans, match_spans_with, MatchMode};
use geobench_core::metrics::{
    accuracy_at_161, auc_error, error_distance_km, evaluate_run, ErrorDistanceSet, Metric, MetricValue,
    MAX_ERROR_KM,
};
use geobench_core::store::Store;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

const REFERENCE_CORPUS: &[u8] = include_bytes!("../../../fixtures/reference_corpus.xml");
const REFERENCE_OUTPUT: &[u8] = include_bytes!("../../../fixtures/reference_output.json");
const GAZETTEER: &[u8] = include_bytes!("../../../fixtures/gazetteer.tsv");

type Outcome = Result<String, String>;

fn ensure(condition: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if condition {
        Ok(())
    } else {
        Err(message())
    }
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap()
}

// Independent reference formulas, written without the library's helpers.

const R_KM: f64 = 6371.0;

/// Central angle from unit vectors: atan2(|u×v|, u·v), well conditioned
/// everywhere, unlike the haversine route the library takes.
fn oracle_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let unit = |p: GeoPoint| {
        let (lat, lon) = (p.lat.to_radians(), p.lon.to_radians());
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    };
    let (u, v) = (unit(a), unit(b));
    let cross = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    let norm = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    R_KM * norm.atan2(dot)
}

struct OracleMetrics {
    precision: Option<f64>,
    recall: Option<f64>,
    fscore: Option<f64>,
    accuracy: Option<f64>,
    med: Option<f64>,
    mdned: Option<f64>,
    acc_at_161: Option<f64>,
    auc: Option<f64>,
}

fn oracle_metrics(tp: usize, fp: usize, fn_: usize, distances: &[f64]) -> OracleMetrics {
    let div = |a: usize, b: usize| if b == 0 { None } else { Some(a as f64 / b as f64) };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    let fscore = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    let n = distances.len();
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let max_error = std::f64::consts::PI * R_KM;
    OracleMetrics {
        precision,
        recall,
        fscore,
        accuracy: div(tp, tp + fn_),
        med: (n > 0).then(|| distances.iter().sum::<f64>() / n as f64),
        mdned: (n > 0).then(|| if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 }),
        acc_at_161: (n > 0).then(|| distances.iter().filter(|&&d| d <= 161.0).count() as f64 / n as f64),
        auc: (n > 0).then(|| {
            distances.iter().map(|&d| ((d + 1.0).ln() / max_error.ln()).min(1.0)).sum::<f64>() / n as f64
        }),
    }
}

fn random_point(rng: &mut StdRng) -> GeoPoint {
    GeoPoint { lon: rng.random_range(-180.0..=180.0), lat: rng.random_range(-90.0..=90.0) }
}

/// Corpus plus predictions with a known number of matched pairs, missed
/// gold spans and spurious predictions, spread over a few entries.
struct Instance {
    corpus: Corpus,
    results: Vec<GeoparseResult>,
    tp: usize,
    fp: usize,
    fn_: usize,
    distances: Vec<f64>,
}

fn random_instance(rng: &mut StdRng) -> Instance {
    let pairs = rng.random_range(0..=20usize);
    let misses = rng.random_range(0..=6usize);
    let spurious = rng.random_range(0..=6usize);
    let entry_count = rng.random_range(1..=4usize);
    let mut corpus = Corpus::new("oracle", Genre::Other, rng.random_bool(0.8));
    let mut results = Vec::new();
    let mut gold_sets = vec![Vec::new(); entry_count];
    let mut pred_sets = vec![Vec::new(); entry_count];
    let mut distances = Vec::new();
    // Each toponym gets its own 10-character slot; predictions may be
    // shifted inside the slot to exercise inexact matching.
    let mut slot = vec![0usize; entry_count];
    let mut next_slot = |e: usize| {
        slot[e] += 1;
        (slot[e] - 1) * 10
    };
    for _ in 0..pairs {
        let e = rng.random_range(0..entry_count);
        let base = next_slot(e);
        let gold_point = random_point(rng);
        let pred_point = if rng.random_bool(0.3) { gold_point } else { random_point(rng) };
        let gold_has_footprint = rng.random_bool(0.9);
        let mut gold = ToponymSpan::new(base, base + 4, "xxxxx");
        if gold_has_footprint {
            gold.footprint = Some(gold_point);
            distances.push(oracle_distance(gold_point, pred_point));
        }
        let shift = rng.random_range(0..=3usize);
        let pred = ToponymSpan::new(base + shift, base + 4 + shift, "xxxxx").with_footprint(pred_point);
        gold_sets[e].push(gold);
        pred_sets[e].push(pred);
    }
    for _ in 0..misses {
        let e = rng.random_range(0..entry_count);
        let base = next_slot(e);
        gold_sets[e].push(ToponymSpan::new(base, base + 4, "xxxxx").with_footprint(random_point(rng)));
    }
    for _ in 0..spurious {
        let e = rng.random_range(0..entry_count);
        let base = next_slot(e);
        pred_sets[e].push(ToponymSpan::new(base, base + 4, "xxxxx").with_footprint(random_point(rng)));
    }
    for e in 0..entry_count {
        let text = "x".repeat(slot[e] * 10 + 10);
        let entry_id = format!("e{e}");
        corpus.entries.push(CorpusEntry { entry_id: entry_id.clone(), text, annotations: gold_sets[e].clone() });
        results.push(GeoparseResult {
            entry_id,
            toponyms: pred_sets[e].clone(),
            parser: "oracle".into(),
            elapsed: Duration::ZERO,
        });
    }
    Instance { corpus, results, tp: pairs, fp: spurious, fn_: misses, distances }
}

fn compare(metric: Metric, got: MetricValue, want: Option<f64>, tol: f64) -> Result<(), String> {
    match (got, want) {
        (MetricValue::Value(g), Some(w)) if (g - w).abs() <= tol => Ok(()),
        (MetricValue::Undefined, None) => Ok(()),
        _ => Err(format!("{metric}: library {got:?}, reference {want:?}")),
    }
}

fn metric_oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5EED_0001);
    for i in 0..1000 {
        let inst = random_instance(&mut rng);
        let eval = evaluate_run(&inst.corpus, &inst.results, &Metric::all()).map_err(|e| e.to_string())?;
        let o = oracle_metrics(inst.tp, inst.fp, inst.fn_, &inst.distances);
        let lib_distances = eval.distances.as_slice();
        ensure(lib_distances.len() == inst.distances.len(), || format!("instance {i}: distance count differs"))?;
        let checks = [
            (Metric::Precision, o.precision),
            (Metric::Recall, o.recall),
            (Metric::FScore, o.fscore),
            (Metric::Accuracy, o.accuracy),
            (Metric::MeanErrorDistance, o.med),
            (Metric::MedianErrorDistance, o.mdned),
            (Metric::AccuracyAt161, o.acc_at_161),
            (Metric::Auc, o.auc),
        ];
        for (metric, want) in checks {
            let got = eval.cells[&metric];
            if metric.needs_full_annotation() && !inst.corpus.fully_annotated {
                ensure(got == MetricValue::NotApplicable, || format!("instance {i}: {metric} should be not_applicable"))?;
                continue;
            }
            compare(metric, got, want, 1e-9).map_err(|e| format!("instance {i}: {e}"))?;
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 instances, 8 metrics within 1e-9, {:.2}s", elapsed.as_secs_f64()))
}

fn distance_constants() -> Outcome {
    let origin = GeoPoint { lon: 0.0, lat: 0.0 };
    let half = error_distance_km(origin, GeoPoint { lon: 180.0, lat: 0.0 });
    let degree = error_distance_km(origin, GeoPoint { lon: 0.0, lat: 1.0 });
    ensure((half - 20015.087).abs() <= 0.001, || format!("antipodal distance {half}"))?;
    ensure((degree - 111.195).abs() <= 0.001, || format!("one degree {degree}"))?;
    ensure((MAX_ERROR_KM - 20015.087).abs() <= 0.001, || format!("MAX_ERROR_KM {MAX_ERROR_KM}"))?;
    Ok(format!("(0,0)-(180,0) = {half:.4} km, (0,0)-(0,1) = {degree:.4} km"))
}

fn accuracy_boundary() -> Outcome {
    let set = ErrorDistanceSet::new(vec![0.0, 161.0, 162.0]).map_err(|e| e.to_string())?;
    let acc = accuracy_at_161(&set);
    ensure(acc == Some(2.0 / 3.0), || format!("got {acc:?}"))?;
    Ok("{0, 161, 162} -> 2/3 exactly".into())
}

fn auc_endpoints() -> Outcome {
    let zeros = auc_error(&ErrorDistanceSet::new(vec![0.0; 7]).unwrap());
    ensure(zeros == Some(0.0), || format!("all zeros gave {zeros:?}"))?;
    let top = auc_error(&ErrorDistanceSet::new(vec![MAX_ERROR_KM - 1.0]).unwrap()).unwrap();
    ensure((top - 1.0).abs() <= 1e-9, || format!("MAX-1 gave {top}"))?;
    let mut rng = StdRng::seed_from_u64(0x5EED_0004);
    for case in 0..10_000 {
        let n = rng.random_range(1..=20usize);
        let mut distances: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=MAX_ERROR_KM)).collect();
        let before = auc_error(&ErrorDistanceSet::new(distances.clone()).unwrap()).unwrap();
        let i = rng.random_range(0..n);
        distances[i] = rng.random_range(distances[i]..=MAX_ERROR_KM);
        let after = auc_error(&ErrorDistanceSet::new(distances).unwrap()).unwrap();
        ensure(after >= before, || format!("case {case}: AUC fell from {before} to {after}"))?;
    }
    Ok(format!("zeros -> 0, MAX-1 -> {top}, 10000 monotonicity cases"))
}

fn matching_conservation() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5EED_0005);
    let random_spans = |rng: &mut StdRng| -> Vec<ToponymSpan> {
        (0..rng.random_range(0..15usize))
            .map(|_| {
                let start = rng.random_range(0..60usize);
                ToponymSpan::new(start, start + rng.random_range(0..10usize), "x")
            })
            .collect()
    };
    for case in 0..10_000 {
        let gold = random_spans(&mut rng);
        let pred = random_spans(&mut rng);
        for mode in [MatchMode::Inexact, MatchMode::Exact] {
            let r = match_spans_with(&gold, &pred, mode);
            ensure(r.true_positives + r.false_negatives == gold.len(), || format!("case {case}: tp+fn != |gold|"))?;
            ensure(r.true_positives + r.false_positives == pred.len(), || format!("case {case}: tp+fp != |pred|"))?;
        }
    }
    let text = "The Town of Amherst has been a leader";
    let gold = ToponymSpan::new(4, 18, char_slice(text, 4, 18).unwrap());
    let pred = ToponymSpan::new(12, 18, char_slice(text, 12, 18).unwrap());
    ensure(gold.phrase == "Town of Amherst" && pred.phrase == "Amherst", || "fixture offsets".into())?;
    let r = match_spans(&[gold], &[pred]);
    ensure((r.true_positives, r.false_positives, r.false_negatives) == (1, 0, 0), || format!("Amherst gave {r:?}"))?;
    Ok("10000 fuzzed sets conserve counts; Amherst inexact match tp=1".into())
}

fn random_corpus(rng: &mut StdRng, index: usize) -> Corpus {
    const ALPHABET: &[char] = &['a', 'b', 'Z', ' ', ' ', '&', '<', '>', '"', '\n', '\t', 'é', '日', '🌍'];
    let genres = [Genre::News, Genre::Wikipedia, Genre::SocialMedia, Genre::WebPages, Genre::Other];
    let mut corpus = Corpus::new(format!("gen-{index}"), genres[index % genres.len()], rng.random_bool(0.5));
    corpus.name = format!("Generated <{index}> & co");
    for e in 0..rng.random_range(0..6usize) {
        let len = rng.random_range(1..50usize);
        let text: String = (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect();
        let annotations = (0..rng.random_range(0..4usize))
            .map(|_| {
                let start = rng.random_range(0..len);
                let end = rng.random_range(start..len);
                let mut span = ToponymSpan::new(start, end, char_slice(&text, start, end).unwrap());
                if rng.random_bool(0.8) {
                    span.footprint = Some(random_point(rng));
                }
                if rng.random_bool(0.5) {
                    span.place_name = Some("Place & <name>".into());
                    span.place_type = Some("ADM3".into());
                }
                span
            })
            .collect();
        corpus.entries.push(CorpusEntry { entry_id: format!("entry-{e}"), text, annotations });
    }
    corpus
}

fn reference_fixtures() -> Outcome {
    let corpus = parse_unified_corpus(REFERENCE_CORPUS, true).map_err(|e| e.to_string())?;
    let span = &corpus.entries[0].annotations[0];
    let expected_point = Some(GeoPoint { lon: -95.5477, lat: 33.6625 });
    ensure(
        (span.start, span.end, span.phrase.as_str(), span.footprint) == (0, 4, "Paris", expected_point),
        || format!("corpus fixture parsed to {span:?}"),
    )?;
    let output = parse_output_json(REFERENCE_OUTPUT).map_err(|e| e.to_string())?;
    let t = &output.toponyms[0];
    ensure(
        (t.start, t.end, t.phrase.as_str(), t.footprint) == (0, 4, "Paris", expected_point),
        || format!("output fixture parsed to {t:?}"),
    )?;
    ensure(t.place_name.as_deref() == Some("City of Paris") && t.place_type.as_deref() == Some("ADM3"), || {
        "optional place fields lost".into()
    })?;
    let mut rng = StdRng::seed_from_u64(0x5EED_0006);
    for i in 0..100 {
        let corpus = random_corpus(&mut rng, i);
        let back = parse_unified_corpus(&serialize_corpus(&corpus), corpus.fully_annotated)
            .map_err(|e| format!("corpus {i}: {e}"))?;
        ensure(back == corpus, || format!("corpus {i} changed in a round trip"))?;
    }
    Ok("both fixtures parse to (0, 4, Paris, -95.5477 33.6625); 100 generated corpora round-trip".into())
}

fn replay_ref(id: &str) -> GeoparserRef {
    GeoparserRef {
        id: id.into(),
        display_name: id.into(),
        kind: GeoparserKind::Replay,
        endpoint_url: None,
        version: "1".into(),
        rate_limit: None,
    }
}

/// 50 entries with two gold toponyms each. The replay drops 20 of the 100
/// gold spans and moves 10 of the remaining 80 exactly 200 km north.
fn injected_error_fixture() -> (Corpus, ReplayFixture) {
    let mut corpus = Corpus::new("synthetic", Genre::News, true);
    let mut fixture = ReplayFixture::new();
    let degrees_per_km = 180.0 / (std::f64::consts::PI * R_KM);
    let mut gold_index = 0;
    for e in 0..50 {
        let text = "Alpha met Bravo near the river.".to_owned();
        let mut annotations = Vec::new();
        let mut predicted = Vec::new();
        for (start, end) in [(0usize, 4usize), (10, 14)] {
            let point = GeoPoint { lon: -120.0 + 4.7 * e as f64, lat: -50.0 + 2.0 * e as f64 };
            let gold = ToponymSpan::new(start, end, char_slice(&text, start, end).unwrap()).with_footprint(point);
            annotations.push(gold.clone());
            match gold_index % 10 {
                // Dropped: 2 of every 10 gold spans.
                0 | 5 => {}
                // Displaced: 1 of every 10 gold spans.
                3 => predicted.push(gold.with_footprint(GeoPoint { lat: point.lat + 200.0 * degrees_per_km, ..point })),
                _ => predicted.push(gold),
            }
            gold_index += 1;
        }
        let entry_id = format!("s{e:02}");
        corpus.entries.push(CorpusEntry { entry_id: entry_id.clone(), text, annotations });
        fixture.insert(entry_id, predicted);
    }
    (corpus, fixture)
}

fn injected_error_determinism() -> Outcome {
    let (corpus, fixture) = injected_error_fixture();
    let displaced: Vec<f64> = corpus
        .entries
        .iter()
        .flat_map(|e| {
            fixture[&e.entry_id].iter().filter_map(|p| e.annotations.iter().find(|g| g.start == p.start).map(|g| (g, p)))
        })
        .filter(|(g, p)| g.footprint != p.footprint)
        .map(|(g, p)| error_distance_km(g.footprint.unwrap(), p.footprint.unwrap()))
        .collect();
    ensure(displaced.len() == 10 && displaced.iter().all(|d| (d - 200.0).abs() < 1e-6), || {
        format!("displacements {displaced:?}")
    })?;

    let geoparser = ReplayGeoparser::new(replay_ref("injected"), fixture, &[&corpus]).map_err(|e| e.to_string())?;
    let store = Store::open_in_memory().map_err(|e| e.to_string())?;
    let plan = ExperimentPlan {
        corpora: vec![Arc::new(corpus)],
        geoparsers: vec![Arc::new(geoparser)],
        metrics: Metric::all(),
        parallelism: 4,
    };
    let rt = runtime();
    let mut tables = Vec::new();
    for _ in 0..2 {
        let record = rt.block_on(run_experiment(&store, &plan)).map_err(|e| e.to_string())?;
        tables.push(record.results.unwrap());
    }
    ensure(tables[0] == tables[1], || "repeated runs differ".into())?;
    let cell = |m| tables[0].cell("synthetic", "injected", m);
    let expected = [
        (Metric::Recall, 0.8),
        (Metric::Precision, 1.0),
        (Metric::AccuracyAt161, 0.875),
        (Metric::MedianErrorDistance, 0.0),
    ];
    for (metric, want) in expected {
        ensure(cell(metric) == Some(MetricValue::Value(want)), || format!("{metric} = {:?}, expected {want}", cell(metric)))?;
    }
    Ok("recall 0.8, precision 1.0, Acc@161 0.875, MdnED 0 (exact, stable across runs)".into())
}

fn partial_annotation_gating() -> Outcome {
    let (mut corpus, fixture) = injected_error_fixture();
    corpus.fully_annotated = false;
    let geoparser = ReplayGeoparser::new(replay_ref("injected"), fixture, &[&corpus]).map_err(|e| e.to_string())?;
    let store = Store::open_in_memory().map_err(|e| e.to_string())?;
    let plan = ExperimentPlan {
        corpora: vec![Arc::new(corpus)],
        geoparsers: vec![Arc::new(geoparser)],
        metrics: Metric::all(),
        parallelism: 2,
    };
    let record = runtime().block_on(run_experiment(&store, &plan)).map_err(|e| e.to_string())?;
    let table = record.results.unwrap();
    for metric in [Metric::Precision, Metric::Recall, Metric::FScore] {
        let got = table.cell("synthetic", "injected", metric);
        ensure(got == Some(MetricValue::NotApplicable), || format!("{metric} = {got:?}"))?;
    }
    for metric in [Metric::Accuracy, Metric::MeanErrorDistance, Metric::MedianErrorDistance, Metric::AccuracyAt161, Metric::Auc] {
        let got = table.cell("synthetic", "injected", metric);
        ensure(matches!(got, Some(MetricValue::Value(_))), || format!("{metric} = {got:?}"))?;
    }
    let acc = table.cell("synthetic", "injected", Metric::Accuracy);
    ensure(acc == Some(MetricValue::Value(0.8)), || format!("accuracy {acc:?}"))?;
    Ok("P/R/F not_applicable; accuracy 0.8 and distance metrics computed".into())
}

struct Counting {
    inner: ReplayGeoparser,
    calls: Arc<AtomicUsize>,
}

#[async_trait]
impl Geoparser for Counting {
    fn reference(&self) -> &GeoparserRef {
        self.inner.reference()
    }

    async fn geoparse(&self, entry: &CorpusEntry) -> Result<GeoparseResult, GeoparseError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.geoparse(entry).await
    }
}

fn archiving() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("archive.db");
    let (corpus, fixture) = injected_error_fixture();
    let calls = Arc::new(AtomicUsize::new(0));
    let geoparser = Counting {
        inner: ReplayGeoparser::new(replay_ref("injected"), fixture, &[&corpus]).map_err(|e| e.to_string())?,
        calls: calls.clone(),
    };
    let plan = ExperimentPlan {
        corpora: vec![Arc::new(corpus)],
        geoparsers: vec![Arc::new(geoparser)],
        metrics: Metric::all(),
        parallelism: 4,
    };
    let rt = runtime();

    let first = {
        let store = Store::open(&path).map_err(|e| e.to_string())?;
        rt.block_on(run_experiment(&store, &plan)).map_err(|e| e.to_string())?
    };
    let id = first.experiment_id.as_str();
    let well_formed = id.len() == 16 && id.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit());
    ensure(well_formed, || format!("id {id:?} is not 16 characters of A-Z0-9"))?;
    ensure(first.status == ExperimentStatus::Complete, || format!("status {:?}", first.status))?;
    let first_calls = calls.load(Ordering::SeqCst);
    ensure(first_calls == 50, || format!("first run made {first_calls} calls"))?;

    // A fresh connection to the same file stands in for a restarted process.
    let store = Store::open(&path).map_err(|e| e.to_string())?;
    let reloaded = find_experiment(&store, id).map_err(|e| e.to_string())?;
    ensure(reloaded.as_ref() == Some(&first), || "record changed or vanished after reopening the store".into())?;

    let second = rt.block_on(run_experiment(&store, &plan)).map_err(|e| e.to_string())?;
    let extra_calls = calls.load(Ordering::SeqCst) - first_calls;
    ensure(extra_calls == 0, || format!("second run made {extra_calls} geoparser calls"))?;
    ensure(second.experiment_id != first.experiment_id, || "re-run reused the id".into())?;
    ensure(second.results == first.results, || "second run produced a different table".into())?;
    Ok(format!("id {id}; record survives reopen; re-run: 0 geoparser calls, identical table"))
}

fn baseline_behavior() -> Outcome {
    let (gazetteer, _) = load_gazetteer(GAZETTEER).map_err(|e| e.to_string())?;
    let entry = |text: &str| CorpusEntry { entry_id: "e".into(), text: text.into(), annotations: vec![] };
    let result = geoparse_gazpop(&gazetteer, &entry("Paris is a city in Texas"));
    let paris = result.toponyms.iter().find(|t| t.phrase == "Paris").ok_or("Paris not recognized")?;
    let candidates = gazetteer.lookup_name("Paris");
    let most_populous = candidates.iter().max_by_key(|c| c.population).unwrap();
    ensure(candidates.len() == 2, || format!("fixture has {} Paris entries", candidates.len()))?;
    ensure(paris.footprint == Some(most_populous.location), || format!("Paris resolved to {:?}", paris.footprint))?;
    ensure(most_populous.population == 2_140_526, || "fixture changed".into())?;

    let nyc = geoparse_gazpop(&gazetteer, &entry("I love New York City"));
    let phrases: Vec<_> = nyc.toponyms.iter().map(|t| t.phrase.as_str()).collect();
    ensure(phrases == ["New York City"], || format!("got {phrases:?}"))?;
    Ok("Paris -> population 2140526 instance; \"New York City\" -> one span".into())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let suite_started = Instant::now();
    let criteria: [Criterion; 10] = [
        ("metric oracle equivalence", metric_oracle_equivalence),
        ("distance constants", distance_constants),
        ("Accuracy@161 inclusive boundary", accuracy_boundary),
        ("AUC endpoints and monotonicity", auc_endpoints),
        ("matching conservation", matching_conservation),
        ("reference corpus/output fixtures and round trip", reference_fixtures),
        ("end-to-end determinism with injected error", injected_error_determinism),
        ("partial-annotation gating", partial_annotation_gating),
        ("archiving, restart and cache re-use", archiving),
        ("gazetteer + population baseline", baseline_behavior),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|panic| Err(panic.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    let elapsed = suite_started.elapsed();
    if elapsed < Duration::from_secs(300) {
        println!("PASS  acceptance runtime under 5 minutes, offline: {:.2}s", elapsed.as_secs_f64());
    } else {
        failed += 1;
        println!("FAIL  acceptance runtime under 5 minutes, offline: {:.2}s", elapsed.as_secs_f64());
    }
    let unique: BTreeSet<_> = criteria.iter().map(|(n, _)| *n).collect();
    assert_eq!(unique.len(), criteria.len());
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all {} acceptance criteria passed", criteria.len() + 1);
}
