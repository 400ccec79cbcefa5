//! Writes the bundled replay fixture: 12 articles, an annotation dump and an
//! expert label file whose aggregate statistics match the published figures
//! of the original deployment (1997 annotations from 33 readers on 357
//! sentences, two spammers, 310 decided sentences, alpha near .504, 282/310
//! expert agreement, 230/241 without quote sentences).
//!
//! Usage: `cargo run -p biasfeed-core --example make_replay_fixture [out_dir]`

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::PathBuf;

use biasfeed_core::aggregation::{filter_spammers, spammer_scores, VoteMatrix};
use biasfeed_core::classifier::BaselineClassifier;
use biasfeed_core::ingest::{build_article, segment, RawArticleDoc};
use biasfeed_core::metrics::alpha_from_counts;
use biasfeed_core::model::{Label, Lean, SentenceId, SessionId};
use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::index::sample_weighted;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0x4e55_4441;
const TARGET_ALPHA: f64 = 0.504;
const TOPICS: [&str; 9] = [
    "gender equality",
    "black lives matter",
    "climate change",
    "immigration",
    "abortion",
    "gun control",
    "vaccines",
    "student debt",
    "elections",
];
const OUTLETS: [&str; 4] = ["Daily Ledger", "The Civic Post", "Morning Standard", "Harbor Times"];
const GENUINE: usize = 31;
const SPAMMER_VOTES: [usize; 2] = [24, 23];

#[derive(Debug, Clone, Copy)]
struct Plan {
    /// Votes for the majority side (or biased side when tied / insufficient).
    major: u32,
    minor: u32,
    /// Label of the `major` side.
    label: Label,
    decided: bool,
    quote: bool,
}

impl Plan {
    fn counts(&self) -> [u32; 2] {
        match self.label {
            Label::Biased => [self.major, self.minor],
            Label::NotBiased => [self.minor, self.major],
        }
    }
}

fn repeat(out: &mut Vec<(u32, u32, bool)>, n: usize, major: u32, minor: u32, decided: bool) {
    out.extend(std::iter::repeat_n((major, minor, decided), n));
}

/// Unit plans in shuffled order for a given number of 4/2 and 3/2 splits.
fn plans(c42: usize, c32: usize, seed: u64) -> Vec<Plan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c51, c41) = (90, 22);
    let mut shapes = Vec::new();
    repeat(&mut shapes, 241 - c51 - c42, 6, 0, true);
    repeat(&mut shapes, c51, 5, 1, true);
    repeat(&mut shapes, c42, 4, 2, true);
    repeat(&mut shapes, 69 - c41 - c32, 5, 0, true);
    repeat(&mut shapes, c41, 4, 1, true);
    repeat(&mut shapes, c32, 3, 2, true);
    repeat(&mut shapes, 6, 3, 3, false);
    // 41 sentences below the vote minimum, 123 votes.
    repeat(&mut shapes, 5, 4, 0, false);
    repeat(&mut shapes, 6, 3, 1, false);
    repeat(&mut shapes, 4, 2, 2, false);
    repeat(&mut shapes, 7, 3, 0, false);
    repeat(&mut shapes, 6, 2, 1, false);
    repeat(&mut shapes, 7, 2, 0, false);
    repeat(&mut shapes, 4, 1, 1, false);
    repeat(&mut shapes, 2, 1, 0, false);
    assert_eq!(shapes.len(), 357);
    assert_eq!(shapes.iter().map(|(a, b, _)| a + b).sum::<u32>(), 1950);

    let mut plans: Vec<Plan> = shapes
        .into_iter()
        .map(|(major, minor, decided)| Plan {
            major,
            minor,
            label: if rng.random_bool(0.42) { Label::Biased } else { Label::NotBiased },
            decided: decided && major != minor,
            quote: false,
        })
        .collect();
    plans.shuffle(&mut rng);
    let decided: Vec<usize> = (0..plans.len()).filter(|&i| plans[i].decided).collect();
    for &i in decided.choose_multiple(&mut rng, 69) {
        plans[i].quote = true;
    }
    plans
}

fn sentence_text(index: usize, topic: &str, loaded: bool, quote: bool, rng: &mut ChaCha8Rng) -> String {
    const SUBJECTS: [&str; 8] = [
        "The city council",
        "Local organizers",
        "State lawmakers",
        "A coalition of advocates",
        "Federal regulators",
        "School board members",
        "Several economists",
        "Community leaders",
    ];
    const VERBS: [&str; 5] = ["discussed", "reviewed", "announced", "debated", "presented"];
    const OBJECTS: [&str; 4] = ["a plan on", "new figures on", "a report about", "proposals related to"];
    const LOADED_VERBS: [&str; 4] = ["slammed", "blasted", "mocked", "ranted about"];
    const LOADED_ADJ: [&str; 5] = ["outrageous", "disastrous", "radical", "shameful", "absurd"];
    const DAYS: [&str; 5] = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"];
    const SPEAKERS: [&str; 4] = ["she said", "he said", "a spokesperson said", "the organizer said"];
    let district = index + 1;
    let day = DAYS[rng.random_range(0..DAYS.len())];
    let subject = SUBJECTS[rng.random_range(0..SUBJECTS.len())];
    match (quote, loaded) {
        (false, false) => format!(
            "{subject} {} {} {topic} in district {district} on {day}.",
            VERBS[rng.random_range(0..VERBS.len())],
            OBJECTS[rng.random_range(0..OBJECTS.len())],
        ),
        (false, true) => format!(
            "{subject} {} the {} approach to {topic} in district {district} on {day}.",
            LOADED_VERBS[rng.random_range(0..LOADED_VERBS.len())],
            LOADED_ADJ[rng.random_range(0..LOADED_ADJ.len())],
        ),
        (true, false) => format!(
            "\"We have studied the question of {topic} in district {district} for months and we will keep listening to every family,\" {}.",
            SPEAKERS[rng.random_range(0..SPEAKERS.len())],
        ),
        (true, true) => format!(
            "\"This {} policy on {topic} is a {} failure for district {district} and everyone here knows it,\" {}.",
            LOADED_ADJ[rng.random_range(0..LOADED_ADJ.len())],
            LOADED_ADJ[rng.random_range(0..LOADED_ADJ.len())],
            SPEAKERS[rng.random_range(0..SPEAKERS.len())],
        ),
    }
}

fn main() {
    let out: PathBuf = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/replay"));

    // Pick the split mix whose alpha lands closest to the target.
    let mut best = (f64::INFINITY, 0, 0);
    for c42 in 0..=120 {
        for c32 in 0..=40 {
            let units = plans(c42, c32, SEED);
            let alpha = alpha_from_counts(units.iter().map(Plan::counts)).unwrap().value;
            if (alpha - TARGET_ALPHA).abs() < best.0 {
                best = ((alpha - TARGET_ALPHA).abs(), c42, c32);
            }
        }
    }
    let (_, c42, c32) = best;
    let plans = plans(c42, c32, SEED);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x5eed);

    // Articles: 9 of 30 sentences and 3 of 29.
    let classifier = BaselineClassifier::default();
    let mut docs = Vec::new();
    let mut sentence_ids: Vec<SentenceId> = Vec::new();
    let mut shown: Vec<Label> = Vec::new();
    let mut next = 0;
    for a in 0..12 {
        let len = if a < 9 { 30 } else { 29 };
        let topic = TOPICS[a % TOPICS.len()];
        let mut sentences = Vec::new();
        for (i, &p) in plans.iter().enumerate().skip(next).take(len) {
            let leans_biased = p.label == Label::Biased && p.major > p.minor;
            let loaded = rng.random_bool(if leans_biased { 0.75 } else { 0.15 });
            sentences.push(sentence_text(i, topic, loaded, p.quote, &mut rng));
        }
        let body = sentences
            .chunks(5)
            .map(|c| c.join(" "))
            .collect::<Vec<_>>()
            .join("\n\n");
        let doc = RawArticleDoc {
            title: format!("Readers weigh in on {topic}, part {}", a / 9 + 1),
            author: Some(format!("Staff writer {}", a + 1)),
            outlet: OUTLETS[a % OUTLETS.len()].into(),
            source_url: format!("https://news.example.org/{}/{:02}", topic.replace(' ', "-"), a + 1),
            topic: topic.into(),
            lean: [Lean::Left, Lean::Center, Lean::Right][a % 3],
            published_at: Some(Utc.with_ymd_and_hms(2023, 3, 1, 6, 0, 0).unwrap() + Duration::hours(a as i64 * 5)),
            body,
        };
        assert_eq!(segment(&doc.body).unwrap(), sentences, "segmentation drifted in article {a}");
        let article = build_article(&doc, &classifier).unwrap();
        for (s, i) in article.sentences.iter().zip(next..) {
            assert_eq!(s.is_quote, plans[i].quote, "quote detection drifted: {}", s.text);
            sentence_ids.push(s.sentence_id.clone());
            shown.push(s.shown_label);
        }
        docs.push(doc);
        next += len;
    }

    // Genuine readers with uneven activity.
    let mut names: Vec<usize> = (1..=GENUINE + 2).collect();
    names.shuffle(&mut rng);
    let session = |k: usize| SessionId::from(format!("reader-{:02}", names[k]));
    let weights: Vec<f64> = (0..GENUINE).map(|_| rng.random_range(0.5..2.5)).collect();
    let mut minority_seen = [0u32; GENUINE];
    let mut total_seen = [0u32; GENUINE];
    let mut cells: Vec<(usize, usize, Label)> = Vec::new();
    for (u, p) in plans.iter().enumerate() {
        let m = (p.major + p.minor) as usize;
        let voters: Vec<usize> = sample_weighted(&mut rng, GENUINE, |i| weights[i], m).unwrap().into_vec();
        let mut ranked = voters.clone();
        ranked.sort_by(|&x, &y| {
            let rx = minority_seen[x] as f64 / (total_seen[x] + 1) as f64;
            let ry = minority_seen[y] as f64 / (total_seen[y] + 1) as f64;
            rx.total_cmp(&ry).then(x.cmp(&y))
        });
        for (k, &a) in ranked.iter().enumerate() {
            let label = if k < p.minor as usize { p.label.opposite() } else { p.label };
            minority_seen[a] += u32::from(k < p.minor as usize);
            total_seen[a] += 1;
            cells.push((u, a, label));
        }
    }
    // Spammers label everything biased, on unanimous sentences only.
    let unanimous: Vec<usize> = (0..plans.len())
        .filter(|&u| plans[u].decided && plans[u].minor == 0)
        .collect();
    let picks: Vec<usize> = unanimous
        .choose_multiple(&mut rng, SPAMMER_VOTES.iter().sum())
        .copied()
        .collect();
    for (u, k) in picks.iter().zip(0..) {
        let spammer = GENUINE + usize::from(k >= SPAMMER_VOTES[0]);
        cells.push((*u, spammer, Label::Biased));
    }
    assert_eq!(cells.len(), 1997);

    // Sanity: exactly the two spammers are filtered, under both percentile readings.
    let sessions: Vec<SessionId> = (0..GENUINE + 2).map(session).collect();
    let matrix = VoteMatrix::from_triples(
        &sentence_ids,
        cells.iter().map(|&(u, a, l)| (&sessions[a], &sentence_ids[u], l)),
    )
    .unwrap();
    let scores = spammer_scores(&matrix, 5);
    for p in [5.0, 0.05] {
        let outcome = filter_spammers(&scores, &matrix, p, 0.5);
        let expected: HashSet<SessionId> = [session(GENUINE), session(GENUINE + 1)].into();
        assert_eq!(outcome.excluded.iter().cloned().collect::<HashSet<_>>(), expected, "percentile {p}");
        assert_eq!(outcome.removed_votes, 47);
    }

    // Timestamps: every reader works through sentences in reading order.
    let start = Utc.with_ymd_and_hms(2023, 3, 4, 8, 0, 0).unwrap();
    let mut by_reader: BTreeMap<usize, Vec<(usize, Label)>> = BTreeMap::new();
    for &(u, a, l) in &cells {
        by_reader.entry(a).or_default().push((u, l));
    }
    let mut rows: Vec<(DateTime<Utc>, SessionId, SentenceId, &str)> = Vec::new();
    for (a, mut votes) in by_reader {
        votes.sort_by_key(|(u, _)| *u);
        let begin = start + Duration::minutes(rng.random_range(0..7 * 24 * 60));
        let step = if a >= GENUINE { 3 } else { rng.random_range(12..40) };
        for (k, (u, label)) in votes.into_iter().enumerate() {
            let verdict = if label == shown[u] { "agree" } else { "disagree" };
            rows.push((begin + Duration::seconds(step * k as i64), session(a), sentence_ids[u].clone(), verdict));
        }
    }
    rows.sort_by(|x, y| x.0.cmp(&y.0).then_with(|| x.1.cmp(&y.1)));

    // Expert labels on decided sentences: 25 biased where the crowd said
    // not biased and 3 the other way; 11 of the 28 outside quote sentences.
    let mut expert: BTreeMap<SentenceId, Label> = BTreeMap::new();
    let mut pools: HashMap<(bool, Label), Vec<usize>> = HashMap::new();
    for (u, p) in plans.iter().enumerate() {
        if p.decided {
            expert.insert(sentence_ids[u].clone(), p.label);
            pools.entry((p.quote, p.label)).or_default().push(u);
        }
    }
    for (quote, crowd, n) in [
        (false, Label::NotBiased, 10),
        (false, Label::Biased, 1),
        (true, Label::NotBiased, 15),
        (true, Label::Biased, 2),
    ] {
        for &u in pools[&(quote, crowd)].choose_multiple(&mut rng, n) {
            expert.insert(sentence_ids[u].clone(), crowd.opposite());
        }
    }

    let articles_dir = out.join("articles");
    fs::create_dir_all(&articles_dir).unwrap();
    for (i, doc) in docs.iter().enumerate() {
        let path = articles_dir.join(format!("article_{:02}.json", i + 1));
        fs::write(path, serde_json::to_string_pretty(doc).unwrap() + "\n").unwrap();
    }
    let mut w = csv::Writer::from_path(out.join("annotations.csv")).unwrap();
    w.write_record(["session_id", "sentence_id", "label", "verdict", "timestamp"]).unwrap();
    for (at, s, u, verdict) in &rows {
        w.write_record([s.as_str(), u.as_str(), "", verdict, &at.to_rfc3339()]).unwrap();
    }
    w.flush().unwrap();
    let mut w = csv::Writer::from_path(out.join("experts.csv")).unwrap();
    w.write_record(["sentence_id", "label"]).unwrap();
    for (id, label) in &expert {
        w.write_record([id.as_str(), label.as_str()]).unwrap();
    }
    w.flush().unwrap();
    println!(
        "wrote {} ({} annotations, 4/2 splits {c42}, 3/2 splits {c32}, alpha gap {:.4})",
        out.display(),
        rows.len(),
        best.0
    );
}
