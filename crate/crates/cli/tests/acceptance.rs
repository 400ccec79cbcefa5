//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so every criterion is reported
//! even when an earlier one fails; the process exits non-zero if any did.

// Checks are written as `!(x <= tol)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[path = "../../core/tests/common/oracles.rs"]
mod oracles;

use std::collections::{HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use biasfeed_core::aggregation::{
    aggregate_all, read_csv, read_jsonl, write_csv, write_jsonl, Band, VoteMatrix, CSV_HEADER,
};
use biasfeed_core::classifier::BaselineClassifier;
use biasfeed_core::config::QualityKind;
use biasfeed_core::metrics::{
    active_seconds, bootstrap_alpha_ci, efficiency, engagement, engagement_by_session, krippendorff_alpha, ols,
    MetricsError, ParticipantActivity, Scope,
};
use biasfeed_core::model::{
    Article, ArticleId, FeedbackEvent, Label, Mechanism, SentenceId, SessionId, Verdict,
};
use biasfeed_core::replay::{ReplayBundle, ReplayData};
use biasfeed_core::synthetic::{calibrated_matrix, LatentClassSpec};
use biasfeed_core::{run_pipeline, Config, PipelineInput, PipelineOutput};
use biasfeed_service::platform::{ExportFormat, FeedbackRequest};
use biasfeed_service::Platform;

use oracles::{alpha_bruteforce, mean_sd, status_rational};

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [(u8, &str, Check); 9] = [
        (1, "alpha matches the brute-force oracle", alpha_oracle),
        (2, "hand-computed alpha fixtures", alpha_by_hand),
        (3, "replay counts, alpha and expert agreement", replay_counts),
        (4, "status flags for every tally below 12", status_exhaustive),
        (5, "bootstrap interval", bootstrap),
        (6, "size-quality regression", size_regression),
        (7, "durability under concurrent posts and restarts", durability),
        (8, "export format", export_format),
        (9, "efficiency and engagement", efficiency_engagement),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, check) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|payload| {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} PASS  {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} FAIL  {name} ({secs:.1}s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}

fn fixture_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/replay")
}

fn replay_data() -> ReplayData {
    let root = fixture_root();
    ReplayBundle {
        articles: root.join("articles"),
        annotations: root.join("annotations.csv"),
        experts: Some(root.join("experts.csv")),
    }
    .load(&Config::default().replay, &BaselineClassifier::default())
    .expect("replay fixture loads")
}

fn pipeline(data: &ReplayData, config: &Config) -> PipelineOutput {
    run_pipeline(
        PipelineInput {
            articles: &data.articles,
            events: &data.events,
            excluded_sessions: &HashSet::new(),
            experts: data.experts.as_ref(),
            article_opens: &[],
        },
        config,
    )
}

fn label(biased: bool) -> Label {
    if biased {
        Label::Biased
    } else {
        Label::NotBiased
    }
}

fn matrix_from(grid: &[&[Option<bool>]]) -> VoteMatrix {
    let units = (0..grid.len()).map(|u| SentenceId::from(format!("u{u}"))).collect();
    let width = grid.iter().map(|r| r.len()).max().unwrap_or(0);
    let annotators = (0..width).map(|a| SessionId::from(format!("a{a}"))).collect();
    let mut m = VoteMatrix::new(units, annotators);
    for (u, row) in grid.iter().enumerate() {
        for (a, cell) in row.iter().enumerate() {
            if let Some(b) = cell {
                m.insert(u, a, label(*b));
            }
        }
    }
    m
}

fn rows(m: &VoteMatrix) -> Vec<Vec<u8>> {
    (0..m.units().len())
        .map(|u| m.unit_cells(u).map(|(_, l)| u8::from(l == Label::Biased)).collect())
        .collect()
}

fn alpha_oracle() -> Result<String, String> {
    let started = Instant::now();
    let mut defined = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xa1fa_0000 + seed);
        let n_annotators = rng.random_range(1..=4);
        let n_units = rng.random_range(1..=6);
        let missing = rng.random_range(0.0..=0.5);
        let grid: Vec<Vec<Option<bool>>> = (0..n_units)
            .map(|_| {
                (0..n_annotators)
                    .map(|_| (!rng.random_bool(missing)).then(|| rng.random_bool(0.5)))
                    .collect()
            })
            .collect();
        let refs: Vec<&[Option<bool>]> = grid.iter().map(Vec::as_slice).collect();
        let m = matrix_from(&refs);
        match (krippendorff_alpha(&m), alpha_bruteforce(&rows(&m))) {
            (Ok(a), Some(b)) => {
                worst = worst.max((a.value - b).abs());
                ensure!((a.value - b).abs() <= 1e-12, "seed {seed}: {} vs oracle {b}", a.value);
                defined += 1;
            }
            (Err(MetricsError::AlphaUndefined), None) => {}
            (got, want) => return Err(format!("seed {seed}: {got:?} vs oracle {want:?}")),
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("{defined} defined of 1000, max |diff| {worst:.1e}, {elapsed:.2?}"))
}

fn alpha_by_hand() -> Result<String, String> {
    let (t, f) = (Some(true), Some(false));
    // Two readers who disagree on both sentences: n = 4, two values per
    // class, o_BN = o_NB = 2, so alpha = 1 - 3 * 4 / (2 * 2 * 2) = -1/2.
    let disagreement = krippendorff_alpha(&matrix_from(&[&[t, f], &[f, t]])).map_err(|e| e.to_string())?;
    ensure!((disagreement.value + 0.5).abs() <= 1e-12, "2x2 disagreement gave {}", disagreement.value);
    let perfect: [&[&[Option<bool>]]; 3] = [
        &[&[t, t], &[f, f]],
        &[&[t, t, t], &[f, f, None], &[t, None, t], &[f, f, f]],
        &[&[t, t], &[t, t, t]],
    ];
    for grid in perfect {
        let a = krippendorff_alpha(&matrix_from(grid)).map_err(|e| e.to_string())?;
        ensure!((a.value - 1.0).abs() <= 1e-12, "perfect agreement {grid:?} gave {}", a.value);
    }
    Ok(format!("disagreement {}, perfect agreement 1.0 on 3 fixtures", disagreement.value))
}

fn replay_counts() -> Result<String, String> {
    let started = Instant::now();
    let data = replay_data();
    let out = pipeline(&data, &Config::default());
    let elapsed = started.elapsed();
    let c = &out.report.counts;
    let got = (c.raw_events, c.removed_votes, c.valid_votes, c.labeled, c.decided);
    ensure!(got == (1997, 47, 1950, 316, 310), "counts (raw, removed, valid, labeled, decided) = {got:?}");
    let alpha = out.report.alpha.ok_or("alpha missing")?;
    ensure!((alpha - 0.504).abs() <= 0.01, "alpha {alpha}");
    let all = out.report.expert_agreement.as_ref().ok_or("no expert agreement")?;
    let filtered = out.report.expert_agreement_without_quotes.as_ref().ok_or("no filtered agreement")?;
    ensure!(all.n_compared == 310, "compared {} labels", all.n_compared);
    ensure!((all.percent_agree - 90.97).abs() <= 0.5, "agreement {}", all.percent_agree);
    ensure!((filtered.percent_agree - 95.44).abs() <= 0.5, "filtered agreement {}", filtered.percent_agree);
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "raw {} removed {} valid {} labeled {} decided {}, alpha {alpha:.4}, agreement {:.2}% ({} of {}), without quotes {:.2}% ({} of {}), {elapsed:.2?}",
        c.raw_events, c.removed_votes, c.valid_votes, c.labeled, c.decided,
        all.percent_agree, all.n_agree, all.n_compared,
        filtered.percent_agree, filtered.n_agree, filtered.n_compared
    ))
}

fn status_exhaustive() -> Result<String, String> {
    let mut checked = 0;
    for total in 0..12u32 {
        for b in 0..=total {
            let n = total - b;
            let mut m = VoteMatrix::new(
                vec![SentenceId::from("x")],
                (0..total).map(|a| SessionId::from(format!("a{a}"))).collect(),
            );
            for a in 0..total as usize {
                m.insert(0, a, label(a < b as usize));
            }
            let agg = &aggregate_all(&m, 5, Band { lo: 0.4, hi: 0.6 })[0];
            let s = agg.status;
            let want = status_rational(b, n, 5, 2, 3, 5);
            ensure!(
                (s.insufficient, s.decided, s.undecided, s.controversial) == want,
                "b={b} n={n}: got {s:?}, oracle (insufficient, decided, undecided, controversial) = {want:?}"
            );
            if want.1 {
                ensure!(agg.final_label == Some(label(b > n)), "b={b} n={n}: final label {:?}", agg.final_label);
            } else {
                ensure!(agg.final_label.is_none(), "b={b} n={n}: undecided sentence has a label");
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} tallies"))
}

fn bootstrap() -> Result<String, String> {
    let started = Instant::now();
    let data = replay_data();
    let mut config = Config::default();
    config.regression.samples = 0;
    config.bootstrap.iterations = 1000;
    let a = pipeline(&data, &config);
    let b = pipeline(&data, &config);
    let nuda = a.report.alpha_ci.clone().ok_or("no interval on replay data")?;
    ensure!(Some(&nuda) == b.report.alpha_ci.as_ref(), "same seed gave different intervals");
    config.bootstrap.seed ^= 1;
    ensure!(pipeline(&data, &config).report.alpha_ci.as_ref() != Some(&nuda), "seed has no effect");

    let (t, f) = (Some(true), Some(false));
    let perfect = matrix_from(&[&[t, t, t], &[f, f, f], &[t, t, None], &[f, None, f], &[t, t, t]]);
    let ci = bootstrap_alpha_ci(&perfect, 1000, 0.95, &mut ChaCha8Rng::seed_from_u64(3)).map_err(|e| e.to_string())?;
    ensure!(ci.lo == 1.0 && ci.hi == 1.0, "perfect agreement interval [{}, {}]", ci.lo, ci.hi);

    // A matrix of the replay's shape whose alpha sits at the lower level.
    let spec = LatentClassSpec {
        units: 316,
        annotators: 31,
        votes_per_unit: 6,
        prevalence: 0.4,
        accuracy: 0.8,
    };
    let (synthetic, accuracy) = calibrated_matrix(spec, 0.399, 0.005, 0x399);
    let syn_alpha = krippendorff_alpha(&synthetic).map_err(|e| e.to_string())?.value;
    ensure!((syn_alpha - 0.399).abs() <= 0.005, "calibration reached {syn_alpha}");
    let syn = bootstrap_alpha_ci(&synthetic, 1000, 0.95, &mut ChaCha8Rng::seed_from_u64(config.bootstrap.seed))
        .map_err(|e| e.to_string())?;
    ensure!(nuda.lo > syn.hi, "replay [{:.4}, {:.4}] does not lie above synthetic [{:.4}, {:.4}]", nuda.lo, nuda.hi, syn.lo, syn.hi);
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "replay 95% CI [{:.4}, {:.4}] above synthetic (alpha {syn_alpha:.4}, accuracy {accuracy:.4}) [{:.4}, {:.4}], B = 1000, {elapsed:.2?}",
        nuda.lo, nuda.hi, syn.lo, syn.hi
    ))
}

fn size_regression() -> Result<String, String> {
    let data = replay_data();
    let mut parts = Vec::new();
    for quality in [QualityKind::F1, QualityKind::Alpha] {
        let mut config = Config::default();
        config.regression.samples = 100;
        config.regression.quality = Some(quality);
        config.bootstrap.iterations = 100;
        let r = pipeline(&data, &config).report.regression.ok_or(format!("{quality:?}: no regression"))?;
        ensure!(r.n_observations == 100, "{quality:?}: n = {}", r.n_observations);
        ensure!(r.r_squared < 0.05 && r.p_value > 0.05, "{quality:?}: R^2 {} p {}", r.r_squared, r.p_value);
        parts.push(format!("{quality:?} R^2 {:.4} p {:.3}", r.r_squared, r.p_value));
    }
    let xs: Vec<f64> = (1..=20).map(f64::from).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x + 3.0).collect();
    let fit = ols(&xs, &ys).map_err(|e| e.to_string())?;
    ensure!(fit.slope == 1.0 && fit.r_squared == 1.0, "collinear fit slope {} R^2 {}", fit.slope, fit.r_squared);
    parts.push("collinear slope 1, R^2 1".into());
    Ok(parts.join("; "))
}

/// What a client saw acknowledged.
#[derive(Debug, Clone)]
struct Acked {
    event_id: u64,
    session: SessionId,
    sentence: SentenceId,
    verdict: Verdict,
}

fn durability() -> Result<String, String> {
    let mut summaries = Vec::new();
    for round in 0..3u64 {
        summaries.push(durability_round(round)?);
    }
    Ok(summaries.join("; "))
}

fn durability_round(round: u64) -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut config = Config::default();
    config.storage.dir = dir.path().to_owned();
    config.storage.snapshot_every = 37 + round * 20;
    config.min_votes = 3;
    let open = || Platform::open(config.clone()).map_err(|e| e.to_string());

    let docs: Vec<_> = biasfeed_core::ingest::article_files(&fixture_root().join("articles"))
        .map_err(|e| e.to_string())?
        .iter()
        .take(2)
        .map(|p| biasfeed_core::ingest::read_doc(p).unwrap())
        .collect();
    let mut platform = Arc::new(open()?);
    ensure!(platform.ingest(&docs, false).failures.is_empty(), "ingest failed");
    let sessions: Vec<SessionId> = (0..24).map(|_| platform.enroll(None).unwrap().session_id).collect();
    let sentences: Vec<SentenceId> = platform
        .articles(None)
        .iter()
        .flat_map(|a| platform.article_view(&a.article_id, None).unwrap().sentences)
        .map(|s| s.sentence_id)
        .collect();

    let acked = Arc::new(Mutex::new(Vec::<Acked>::new()));
    // 500 posts in four phases of 125 with a restart between phases.
    for phase in 0..4u64 {
        let threads: Vec<_> = (0..5u64)
            .map(|t| {
                let platform = platform.clone();
                let sessions = sessions.clone();
                let sentences = sentences.clone();
                let acked = acked.clone();
                std::thread::spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(round << 32 | phase << 8 | t);
                    for _ in 0..25 {
                        // A few sessions and sentences take most of the posts,
                        // so overwrites are common.
                        let session = sessions[rng.random_range(0..sessions.len()).min(rng.random_range(0..sessions.len()))].clone();
                        let sentence = sentences[rng.random_range(0..sentences.len() / 3)].clone();
                        let verdict = if rng.random_bool(0.6) { Verdict::Agree } else { Verdict::Disagree };
                        let ack = platform
                            .post_feedback(
                                &session,
                                FeedbackRequest {
                                    sentence_id: sentence.clone(),
                                    verdict: Some(verdict),
                                    direct_label: None,
                                    reason: None,
                                },
                            )
                            .expect("post accepted");
                        acked.lock().unwrap().push(Acked {
                            event_id: ack.event_id,
                            session,
                            sentence,
                            verdict,
                        });
                    }
                })
            })
            .collect();
        for t in threads {
            t.join().map_err(|_| "writer thread panicked")?;
        }
        if phase < 3 {
            // Restart: drop without a final snapshot, as after a kill. The
            // second restart also leaves a torn write behind.
            drop(platform);
            if phase == 1 {
                use std::io::Write;
                let mut log = std::fs::OpenOptions::new()
                    .append(true)
                    .open(dir.path().join(biasfeed_service::store::LOG_FILE))
                    .map_err(|e| e.to_string())?;
                log.write_all(br#"{"event_id":999999,"at":"2024-01-0"#).map_err(|e| e.to_string())?;
            }
            platform = Arc::new(open()?);
        }
    }

    let mut acked = acked.lock().unwrap().clone();
    ensure!(acked.len() == 500, "{} posts acknowledged", acked.len());
    acked.sort_by_key(|a| a.event_id);
    ensure!(acked.windows(2).all(|w| w[0].event_id < w[1].event_id), "duplicate event ids");

    // Single-shot run over the acknowledged sequence, built from the client
    // side only.
    let snapshot = platform.pipeline_snapshot();
    let epoch: DateTime<Utc> = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let events: Vec<FeedbackEvent> = acked
        .iter()
        .enumerate()
        .map(|(i, a)| FeedbackEvent {
            event_id: a.event_id,
            session_id: a.session.clone(),
            sentence_id: a.sentence.clone(),
            mechanism: Mechanism::Highlights,
            verdict: Some(a.verdict),
            direct_label: None,
            reason: None,
            created_at: epoch + chrono::Duration::seconds(i as i64),
        })
        .collect();
    let articles: Vec<Article> = snapshot.articles.clone();
    let expected = run_pipeline(
        PipelineInput {
            articles: &articles,
            events: &events,
            excluded_sessions: &HashSet::new(),
            experts: None,
            article_opens: &[],
        },
        &config,
    );
    let report = platform.report();
    ensure!(report == expected.report, "report differs:\n  service {report:?}\n  single-shot {:?}", expected.report);
    let export = platform.export(ExportFormat::Csv);
    ensure!(
        export == biasfeed_service::platform::render_export(&expected.dataset, ExportFormat::Csv),
        "export differs"
    );
    ensure!(report.counts.raw_events == 500, "raw events {}", report.counts.raw_events);
    Ok(format!(
        "round {round}: 500 posts, {} cells, {} decided",
        report.counts.folded_votes, report.counts.decided
    ))
}

fn export_format() -> Result<String, String> {
    let data = replay_data();
    let mut config = Config::default();
    config.regression.samples = 0;
    config.bootstrap.iterations = 100;
    let out = pipeline(&data, &config);
    ensure!(out.dataset.len() == 310, "{} records", out.dataset.len());

    let mut csv = Vec::new();
    write_csv(&out.dataset, &mut csv).map_err(|e| e.to_string())?;
    let text = String::from_utf8(csv.clone()).map_err(|e| e.to_string())?;
    let header = text.lines().next().unwrap_or_default();
    ensure!(
        header == r#""text";"news_link";"outlet";"topic";"type";"label_bias";"source""#,
        "header {header}"
    );
    ensure!(CSV_HEADER.join(";") == "text;news_link;outlet;topic;type;label_bias;source", "column list");
    let mut reader = csv::ReaderBuilder::new().delimiter(b';').from_reader(csv.as_slice());
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        ensure!(record.len() == 7, "row with {} fields", record.len());
        ensure!(matches!(&record[5], "Biased" | "Non-biased"), "label_bias {:?}", &record[5]);
        ensure!(matches!(&record[4], "left" | "center" | "right"), "type {:?}", &record[4]);
        ensure!(!record[0].is_empty() && record[1].starts_with("http"), "text/link empty");
        rows += 1;
    }
    ensure!(rows == 310, "{rows} CSV rows");
    ensure!(read_csv(csv.as_slice()).map_err(|e| e.to_string())? == out.dataset, "CSV round trip differs");

    let mut jsonl = Vec::new();
    write_jsonl(&out.dataset, &mut jsonl).map_err(|e| e.to_string())?;
    let text = String::from_utf8(jsonl.clone()).map_err(|e| e.to_string())?;
    ensure!(text.lines().count() == 310, "{} JSON lines", text.lines().count());
    for line in text.lines() {
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let mut keys: Vec<&str> = value.as_object().ok_or("not an object")?.keys().map(String::as_str).collect();
        keys.sort_unstable();
        let mut want = CSV_HEADER.to_vec();
        want.sort_unstable();
        ensure!(keys == want, "JSON keys {keys:?}");
    }
    ensure!(read_jsonl(jsonl.as_slice()).map_err(|e| e.to_string())? == out.dataset, "JSONL round trip differs");
    Ok("310 rows; header, quoting, field values and both round trips".into())
}

fn efficiency_engagement() -> Result<String, String> {
    let p = |id: &str, engagement: usize, secs: f64, f1: f64| ParticipantActivity {
        session_id: SessionId::from(id),
        engagement,
        active_seconds: secs,
        f1,
    };
    // Per participant engagement / seconds * F1, then mean and sample SD,
    // worked out by hand:
    //   h: .06, .0625, .1         -> mean .0741667, sd .0224072
    //   c: .0733, .056, .075, .06 -> mean .0660833, sd .0095
    //   n: .075, .06              -> mean .0675,    sd .0106066
    let groups = [
        (vec![p("h1", 10, 100.0, 0.6), p("h2", 20, 160.0, 0.5), p("h3", 15, 120.0, 0.8)], 0.07416666666666667, 0.022407216099581257),
        (vec![p("c1", 12, 90.0, 0.55), p("c2", 8, 100.0, 0.7), p("c3", 30, 200.0, 0.5), p("c4", 5, 50.0, 0.6)], 0.06608333333333333, 0.0095),
        (vec![p("n1", 9, 60.0, 0.5), p("n2", 14, 140.0, 0.6)], 0.0675, 0.010606601717798213),
    ];
    for (participants, mean, sd) in &groups {
        let got = efficiency(participants).map_err(|e| e.to_string())?;
        ensure!((got.mean - mean).abs() < 1e-9 && (got.sd - sd).abs() < 1e-9, "got {} ± {}, want {mean} ± {sd}", got.mean, got.sd);
        let values: Vec<f64> = participants.iter().map(|q| q.engagement as f64 / q.active_seconds * q.f1).collect();
        let (m, s) = mean_sd(&values);
        ensure!((got.mean - m).abs() < 1e-9 && (got.sd - s).abs() < 1e-9, "two-pass oracle {m} ± {s}");
    }

    // One reader votes three times on one sentence and once on another;
    // another votes once. Engagement counts distinct pairs: 3.
    let t0 = Utc.with_ymd_and_hms(2023, 3, 1, 12, 0, 0).unwrap();
    let ev = |id: u64, s: &str, sentence: &str, secs: i64, verdict: Verdict| FeedbackEvent {
        event_id: id,
        session_id: SessionId::from(s),
        sentence_id: SentenceId::from(sentence),
        mechanism: Mechanism::Highlights,
        verdict: Some(verdict),
        direct_label: None,
        reason: None,
        created_at: t0 + chrono::Duration::seconds(secs),
    };
    let events = [
        ev(1, "r1", "a-s0", 30, Verdict::Agree),
        ev(2, "r1", "a-s0", 45, Verdict::Disagree),
        ev(3, "r1", "a-s0", 60, Verdict::Agree),
        ev(4, "r1", "a-s1", 90, Verdict::Agree),
        ev(5, "r2", "a-s1", 20, Verdict::Disagree),
    ];
    ensure!(engagement(&events, Scope::Global) == 3, "engagement {}", engagement(&events, Scope::Global));
    let per = engagement_by_session(&events);
    ensure!(per[&SessionId::from("r1")] == 2 && per[&SessionId::from("r2")] == 1, "per session {per:?}");
    let article: HashMap<SentenceId, ArticleId> =
        ["a-s0", "a-s1"].into_iter().map(|s| (SentenceId::from(s), ArticleId::from("a"))).collect();
    let opens = [(SessionId::from("r1"), ArticleId::from("a"), t0)];
    let secs = active_seconds(&events, &article, &opens);
    // r1: opened at 0, last vote at 90. r2: no open, a single vote spans 0 s.
    ensure!(secs[&SessionId::from("r1")] == 90.0, "r1 active {:?}", secs.get(&SessionId::from("r1")));
    ensure!(secs.get(&SessionId::from("r2")).copied().unwrap_or(0.0) == 0.0, "r2 active {secs:?}");
    Ok("3 hand-computed groups within 1e-9; duplicate votes count once".into())
}
