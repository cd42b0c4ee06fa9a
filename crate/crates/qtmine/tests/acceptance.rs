//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --release --test acceptance -- 3 4`.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use qtmine::io::{load_aliases, load_analogies, load_trials, vocab_to_json};
use qtmine::synth::{self, SynthCorpus};
use qtmine_core::analogy::compare_kshot;
use qtmine_core::corpus::{
    candidates_at_year, group_analogies, records_at_year, ApprovalRecord, Document, TrialRecord,
};
use qtmine_core::fcrank::{fc_analysis, FcConfig};
use qtmine_core::highlight::{
    highlight_passage, parse_html_scores, qt_attention, render_html, self_attention, split_sentences, AttentionView,
};
use qtmine_core::model::{ModelConfig, Params, TensorRole};
use qtmine_core::qt::{
    mlm_predict, phrase_ids, topk_tokens, QuerySpec, Scorer, TargetSpec, DEFAULT_EFFICACY_TARGET,
    DEFAULT_RANK_TEMPLATE,
};
use qtmine_core::tokenizer::train_bpe;
use qtmine_core::train::{dynamic_mask, kshot_finetune, mlm_loss, train, MaskedBatch, TrainConfig};
use qtmine_core::{rng, TokenSeq, Vocab};
use rand::Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// A regular token id drawn uniformly.
fn regular(vocab: &Vocab, r: &mut impl Rng) -> u32 {
    loop {
        let id = r.random_range(0..vocab.len() as u32);
        if !vocab.is_special(id) {
            return id;
        }
    }
}

fn random_text(r: &mut impl Rng, max_chars: usize) -> String {
    const POOLS: [(u32, u32); 6] =
        [(0x20, 0x7e), (0x20, 0x7e), (0xa0, 0x17f), (0x391, 0x3c9), (0x4e00, 0x4fff), (0x1f600, 0x1f64f)];
    let n = r.random_range(0..=max_chars);
    (0..n)
        .map(|_| {
            if r.random_bool(0.05) {
                return ['\n', '\t', ' '][r.random_range(0..3)];
            }
            let (lo, hi) = POOLS[r.random_range(0..POOLS.len())];
            char::from_u32(r.random_range(lo..=hi)).unwrap_or('?')
        })
        .collect()
}

fn tokenizer_properties() -> Check {
    let fixture = synth::generate(0, 50_000).docs;
    let vocab = train_bpe(&fixture, 1000).map_err(|e| e.to_string())?;
    let again = train_bpe(&fixture, 1000).map_err(|e| e.to_string())?;
    let identical = vocab_to_json(&vocab) == vocab_to_json(&again);
    let mut r = rng::stream(1, "acceptance-utf8");
    let mut failures = 0;
    for _ in 0..1000 {
        let s = random_text(&mut r, 60);
        if vocab.decode(&vocab.encode(&s)).ok().as_deref() != Some(s.as_str()) {
            failures += 1;
        }
    }
    ensure(
        identical && failures == 0,
        format!("1000 round trips, {failures} failures; retrained vocab byte-identical: {identical}"),
    )
}

fn gradient_oracle() -> Check {
    let vocab_size = 17;
    let cfg = ModelConfig { n_layers: 1, n_heads: 2, d_model: 8, d_ff: 16, max_seq: 12, vocab_size };
    let mut p = Params::<f64>::init_with_std(cfg, 11, 0.4).map_err(|e| e.to_string())?;
    let mut r = rng::stream(2, "acceptance-grad");
    for tensor in p.layout.tensors.clone() {
        if matches!(tensor.role, TensorRole::Bias | TensorRole::NormBias | TensorRole::NormGain) {
            for x in &mut p.data[tensor.range()] {
                *x += r.random_range(-0.3..0.3);
            }
        }
    }
    let seq = [0u32, 7, 4, 9, 12, 4, 15, 8, 2];
    let labels = seq.iter().enumerate().map(|(i, &t)| (i % 2 == 1).then_some(t)).collect();
    let corrupted = seq.iter().enumerate().map(|(i, &t)| if i % 4 == 1 { 4 } else { t }).collect();
    let batch = MaskedBatch { corrupted: TokenSeq(corrupted), labels };
    let analytic = mlm_loss(&p, &batch).map_err(|e| e.to_string())?.grad;
    let h = 1e-5;
    let mut worst = (0.0f64, String::new());
    let mut families = BTreeSet::new();
    for tensor in p.layout.tensors.clone() {
        families.insert(format!("{:?}", tensor.role));
        for j in 0..tensor.len() {
            let idx = tensor.offset + j;
            let orig = p.data[idx];
            p.data[idx] = orig + h;
            let up = mlm_loss(&p, &batch).unwrap().loss;
            p.data[idx] = orig - h;
            let down = mlm_loss(&p, &batch).unwrap().loss;
            p.data[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let scale = analytic[idx].abs().max(numeric.abs());
            // Both sides vanish for parameters the loss does not touch
            // (positions past the sequence end).
            let rel = if scale < 1e-9 { 0.0 } else { (analytic[idx] - numeric).abs() / scale };
            if rel > worst.0 {
                worst = (rel, format!("{}[{j}]", tensor.name));
            }
        }
    }
    ensure(
        worst.0 < 1e-4,
        format!(
            "{} parameters over {} families, max relative error {:.2e} at {}",
            p.data.len(),
            families.len(),
            worst.0,
            worst.1
        ),
    )
}

fn masking_statistics() -> Check {
    let vocab = Vocab::base();
    let cfg = TrainConfig::default();
    let mut r = rng::stream(3, "acceptance-mask");
    let (mut positions, mut targeted, mut masked) = (0usize, 0usize, 0usize);
    while positions < 100_000 {
        let seq: Vec<u32> = (0..100).map(|_| regular(&vocab, &mut r)).collect();
        let b = dynamic_mask(&seq, &cfg, &vocab.special(), vocab.len(), &mut r);
        positions += seq.len();
        for (t, _) in b.targets() {
            targeted += 1;
            masked += (b.corrupted.0[t] == vocab.special().mask) as usize;
        }
    }
    let frac = targeted as f64 / positions as f64;
    let mask_share = masked as f64 / targeted as f64;
    ensure(
        (frac - 0.135).abs() <= 0.01 && (mask_share - 0.90).abs() <= 0.02,
        format!("targeted {frac:.4} of {positions}; mask/random {mask_share:.4}/{:.4}", 1.0 - mask_share),
    )
}

fn qt_decomposition() -> Check {
    let s = synth::generate(4, 30_000);
    let vocab = train_bpe(&s.docs, 600).map_err(|e| e.to_string())?;
    let cfg = ModelConfig { n_layers: 2, n_heads: 2, d_model: 16, d_ff: 32, max_seq: 64, vocab_size: vocab.len() };
    let mut r = rng::stream(4, "acceptance-qt");
    let regular_ids: Vec<u32> = vocab.regular_ids().collect();
    let (mut single_err, mut full_err, mut mono_fail) = (0.0f64, 0.0f64, 0);
    for case in 0..1000u64 {
        let p = Params::<f32>::init_with_std(cfg, case, 0.3).unwrap();
        let scorer = Scorer::new(&p, &vocab);
        let doc = &s.docs.documents[r.random_range(0..s.docs.len())].body;
        let words: Vec<&str> = doc.split_whitespace().take(12).collect();
        let n_masks = r.random_range(1..=3);
        let text = format!("{}{}", words.join(" "), " <mask>".repeat(n_masks));
        let q = QuerySpec::render(&vocab, &text).unwrap();
        let probs = mlm_predict(&p, &q).unwrap();

        let id = regular(&vocab, &mut r);
        let single = scorer.qt_score(&q, &TargetSpec::from_ids("one", [id]).unwrap()).unwrap();
        let full = scorer.qt_score(&q, &TargetSpec::from_ids("all", regular_ids.iter().copied()).unwrap()).unwrap();
        for (i, pr) in probs.iter().enumerate() {
            single_err = single_err.max((single.per_position[i] - pr[id as usize]).abs());
            let special: f64 = vocab.special().all().iter().map(|&t| pr[t as usize]).sum();
            let mass = 1.0 - special;
            full_err = full_err.max((full.per_position[i] - mass).abs());
        }

        let small: BTreeSet<u32> = (0..r.random_range(1..20)).map(|_| regular(&vocab, &mut r)).collect();
        let mut big = small.clone();
        big.extend((0..r.random_range(1..40)).map(|_| regular(&vocab, &mut r)));
        let a = scorer.qt_score(&q, &TargetSpec::from_ids("s", small).unwrap()).unwrap();
        let b = scorer.qt_score(&q, &TargetSpec::from_ids("b", big).unwrap()).unwrap();
        let ok = a.per_position.iter().zip(&b.per_position).all(|(x, y)| y >= x) && b.aggregate >= a.aggregate;
        mono_fail += (!ok) as usize;
    }
    ensure(
        single_err <= 1e-15 && full_err <= 1e-6 && mono_fail == 0,
        format!(
            "singleton max error {single_err:.1e}; full-vocab max error {full_err:.1e}; monotonicity failures {mono_fail}/1000"
        ),
    )
}

const E2E_BYTES: usize = 100_000;
const E2E_VOCAB: usize = 1000;
const E2E_TRAIN: (usize, usize, f64) = (2000, 32, 3e-3);
/// Per-seed training for the ranking check.
const SEED_TRAIN: (usize, usize, f64) = (1000, 16, 3e-3);
const SEEDS: u64 = 10;

fn train_synth(s: &SynthCorpus, seed: u64, (steps, batch_size, learning_rate): (usize, usize, f64)) -> (Vocab, Params<f32>, f64, f64) {
    let vocab = train_bpe(&s.docs, E2E_VOCAB).unwrap();
    let mut p = Params::init(ModelConfig::desk(vocab.len()), seed).unwrap();
    let cfg = TrainConfig { steps, batch_size, learning_rate, eval_every: steps, seed, ..Default::default() };
    let out = train(&mut p, &vocab, &s.docs, &cfg).unwrap();
    (vocab, p, out.initial_eval_loss, out.final_eval_loss)
}

/// Designated efficacy drug and never-mentioned drug for a corpus.
fn efficacy_outranks_unseen(s: &SynthCorpus, vocab: &Vocab, p: &Params<f32>) -> (bool, usize, usize) {
    let scorer = Scorer::new(p, vocab);
    let target = scorer.target(DEFAULT_EFFICACY_TARGET).unwrap();
    let (eff, unseen) = (s.efficacious()[0].name.clone(), s.unseen[0].clone());
    let ranked = scorer.rank_by_qt(&[eff.clone(), unseen.clone()], DEFAULT_RANK_TEMPLATE, &target).unwrap();
    let (re, ru) = (ranked.rank_of(&eff).unwrap(), ranked.rank_of(&unseen).unwrap());
    (re < ru, re, ru)
}

fn end_to_end_synthetic() -> Check {
    let s = synth::generate(0, E2E_BYTES);
    let (vocab, p, init_loss, final_loss) = train_synth(&s, 0, E2E_TRAIN);
    let loss_ok = final_loss < 0.5 * init_loss;

    let facts = s.cloze_facts();
    let hits = facts
        .iter()
        .filter(|(q, ans)| {
            let qs = QuerySpec::render(&vocab, q).unwrap();
            let probs = mlm_predict(&p, &qs).unwrap();
            topk_tokens(&vocab, &probs[0], 1)[0].0 == phrase_ids(&vocab, ans)[0]
        })
        .count();
    let cloze = hits as f64 / facts.len() as f64;

    let kcfg = TrainConfig { steps: 100, batch_size: 8, learning_rate: 1e-3, eval_every: 100, seed: 0, ..Default::default() };
    let k = kshot_finetune(&p, &vocab, &s.analogies, 5, &kcfg).unwrap();
    let excluded: BTreeSet<usize> = k.sampled.iter().copied().collect();
    let cmp = compare_kshot(&p, &k.params, &vocab, &s.analogies, &excluded).unwrap();
    let overall = &cmp.subcategories[0];
    let kshot_ok = overall.top5_after >= 0.9 && overall.top1_delta() > 0.0;

    let mut wins = efficacy_outranks_unseen(&s, &vocab, &p).0 as u64;
    let mut seed_ranks = Vec::new();
    for seed in 1..SEEDS {
        let sc = synth::generate(seed, E2E_BYTES);
        let (v, ps, _, _) = train_synth(&sc, seed, SEED_TRAIN);
        let (w, re, ru) = efficacy_outranks_unseen(&sc, &v, &ps);
        wins += w as u64;
        seed_ranks.push(format!("{re}v{ru}"));
    }
    let rank_ok = wins >= 9;

    ensure(
        loss_ok && cloze >= 0.9 && kshot_ok && rank_ok,
        format!(
            "(a) eval loss {init_loss:.3}->{final_loss:.3} {}; (b) cloze {hits}/{} {}; \
             (c) analogy top5 {:.3}, top1 {:.3}->{:.3} {}; (d) efficacy beats unseen in {wins}/{SEEDS} seeds [{}] {}",
            verdict(loss_ok),
            facts.len(),
            verdict(cloze >= 0.9),
            overall.top5_after,
            overall.top1_before,
            overall.top1_after,
            verdict(kshot_ok),
            seed_ranks.join(" "),
            verdict(rank_ok),
        ),
    )
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn fc_causality() -> Check {
    let s = synth::generate(6, 30_000);
    let trials: Vec<TrialRecord> = s
        .drugs
        .iter()
        .enumerate()
        .map(|(i, d)| TrialRecord {
            trial_id: format!("T{i}"),
            year: 2001 + (i as i32 % 12),
            drugs: vec![d.name.clone()],
            condition: "influenza".into(),
        })
        .collect();
    let approvals: Vec<ApprovalRecord> = s
        .efficacious()
        .iter()
        .enumerate()
        .map(|(i, d)| ApprovalRecord { drug: d.name.clone(), approval_year: 2006 + 3 * i as i32 })
        .collect();
    let cfg = FcConfig {
        years: vec![2004, 2007, 2010, 2013],
        template: DEFAULT_RANK_TEMPLATE.into(),
        target: DEFAULT_EFFICACY_TARGET.into(),
        vocab_size: 500,
        model: ModelConfig { n_layers: 1, n_heads: 2, d_model: 32, d_ff: 64, max_seq: 64, vocab_size: 0 },
        train: TrainConfig { steps: 40, batch_size: 8, eval_every: 0, seed: 9, ..Default::default() },
        retrain: true,
    };
    let base = fc_analysis(&s.docs, &trials, &approvals, &cfg).map_err(|e| e.to_string())?;
    let eff = &s.efficacious()[0].name;
    let mut injected = s.docs.clone();
    injected.documents.insert(
        0,
        Document {
            id: "leak".into(),
            title: "Late result".into(),
            abstract_text: String::new(),
            body: format!("In clinical trials, {eff} demonstrated clinical trials efficacy in adults."),
            publish_year: Some(2011),
            source: "canary".into(),
            license: "cc0".into(),
        },
    );
    let leaked = fc_analysis(&injected, &trials, &approvals, &cfg).map_err(|e| e.to_string())?;
    let mut identical = 0;
    let mut pre = 0;
    for (a, b) in base.runs.iter().zip(&leaked.runs) {
        if a.cutoff_year < 2011 {
            pre += 1;
            identical += (serde_json::to_vec(a).unwrap() == serde_json::to_vec(b).unwrap()) as usize;
        }
    }
    let post_saw_it = base.runs.iter().zip(&leaked.runs).filter(|(a, _)| a.cutoff_year >= 2011).all(|(a, b)| b.n_documents == a.n_documents + 1);
    ensure(
        pre > 0 && identical == pre && post_saw_it,
        format!("{identical}/{pre} pre-cutoff runs byte-identical after injecting a 2011 document"),
    )
}

fn data_fixtures() -> Check {
    let aliases = load_aliases(&fixture("aliases.csv")).map_err(|e| e.to_string())?;
    let trials = load_trials(&fixture("trials.csv"), &aliases).map_err(|e| e.to_string())?;
    let mut details = Vec::new();
    let mut ok = true;
    for (year, records, drugs) in [(2005, 17, 16), (2019, 659, 621)] {
        let (r, d) = (records_at_year(&trials, year), candidates_at_year(&trials, year).len());
        ok &= r == records && d == drugs;
        details.push(format!("{year}: {r}/{d}"));
    }
    let items = load_analogies(&fixture("analogies.tsv")).map_err(|e| e.to_string())?;
    let groups = group_analogies(&items);
    let count = |cat: &str| groups.iter().filter(|g| g.category == cat).map(|g| g.items.len()).sum::<usize>();
    for (cat, n) in [("drug -- inhibition", 211), ("opposites", 703)] {
        let got = count(cat);
        ok &= got == n;
        details.push(format!("{cat} {got}"));
    }
    ensure(ok, details.join("; "))
}

fn visualization_invariants() -> Check {
    let s = synth::generate(8, 20_000);
    let vocab = train_bpe(&s.docs, 500).map_err(|e| e.to_string())?;
    let cfg = ModelConfig { n_layers: 2, n_heads: 4, d_model: 32, d_ff: 64, max_seq: 128, vocab_size: vocab.len() };
    let p = Params::<f32>::init_with_std(cfg, 8, 0.3).unwrap();
    let scorer = Scorer::new(&p, &vocab);
    let target = scorer.target("nausea").unwrap();
    let mut r = rng::stream(8, "acceptance-viz");
    let (mut worst_row, mut worst_r, mut html_bad, mut span_bad) = (0.0f64, 0.0f64, 0, 0);
    let mut passages = 0;
    for doc in s.docs.documents.iter().take(60) {
        let mut passage = doc.body.clone();
        if r.random_bool(0.5) {
            passage.push_str("  Trailing?! ");
            passage.push_str(&random_text(&mut r, 20));
        }
        passages += 1;
        let spans = split_sentences(&passage);
        let rebuilt: String = spans.iter().map(|&(a, b)| &passage[a..b]).collect();
        let contiguous = spans.windows(2).all(|w| w[0].1 == w[1].0)
            && spans.first().is_none_or(|f| f.0 == 0)
            && spans.last().is_none_or(|l| l.1 == passage.len());
        span_bad += (rebuilt != passage || !contiguous) as usize;

        let q = QuerySpec::render(&vocab, &format!("{} This concerns <mask>.", doc.body)).unwrap();
        for layer in 0..cfg.n_layers {
            let mut views = vec![AttentionView::Averaged { layer }];
            views.extend((0..cfg.n_heads).map(|head| AttentionView::Head { layer, head }));
            for v in views {
                let m = self_attention(&p, &q.ids.0, Some(v)).unwrap();
                for i in 0..m.seq_len {
                    worst_row = worst_row.max((m.row(i).iter().sum::<f64>() - 1.0).abs());
                }
            }
        }
        let rl = qt_attention(&p, &q, &target).unwrap();
        worst_r = worst_r.max((rl.iter().sum::<f64>() - 1.0).abs());

        if let Ok(h) = highlight_passage(&scorer, &passage, "nausea", qtmine_core::highlight::DEFAULT_SENTENCE_TEMPLATE) {
            let parsed = parse_html_scores(&render_html(&h));
            let expect: Vec<String> = h.sentences.iter().map(|s| format!("{:.6}", s.score)).collect();
            let got: Vec<String> = parsed.iter().map(|x| format!("{x:.6}")).collect();
            html_bad += (expect != got) as usize;
        }
    }
    ensure(
        worst_row <= 1e-6 && worst_r <= 1e-6 && html_bad == 0 && span_bad == 0,
        format!(
            "{passages} passages: attention row error {worst_row:.1e}, R_l error {worst_r:.1e}, html mismatches {html_bad}, span mismatches {span_bad}"
        ),
    )
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "tokenizer properties", limit: Duration::from_secs(60), run: tokenizer_properties },
        Criterion { id: 2, name: "gradient oracle", limit: Duration::from_secs(120), run: gradient_oracle },
        Criterion { id: 3, name: "masking statistics", limit: Duration::from_secs(10), run: masking_statistics },
        Criterion { id: 4, name: "qt decomposition", limit: Duration::from_secs(60), run: qt_decomposition },
        Criterion { id: 5, name: "end-to-end synthetic run", limit: Duration::from_secs(900), run: end_to_end_synthetic },
        Criterion { id: 6, name: "fc causality canary", limit: Duration::from_secs(300), run: fc_causality },
        Criterion { id: 7, name: "data fixtures", limit: Duration::from_secs(10), run: data_fixtures },
        Criterion { id: 8, name: "visualization invariants", limit: Duration::from_secs(60), run: visualization_invariants },
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let took = t0.elapsed();
        let in_time = took <= c.limit;
        let (pass, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        failed += (!pass) as usize;
        println!(
            "criterion {} {}: {} ({detail}; {:.1}s of {}s{})",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            c.limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
