//! Acceptance criteria, one line each. Runs without the libtest harness so
//! the lines always appear in `cargo test` output.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use evolvesim_core::bfi::{score_bfi, BfiAnswerSheet, ITEMS};
use evolvesim_core::evaluation::{check_log_invariants, final_structures, initial_structures, metrics_report, MetricsReport};
use evolvesim_core::simkernel::{
    records_hash, replay, replay_transcript, transcript, Ablation, Command, EventLog, Kernel, LogRecord, RunConfig, DEFAULT_WORLD,
};
use evolvesim_metrics::{
    activity_level, cohens_d, delta_overall, distance_matrix, euclid_distance, holm_adjust, kruskal_wallis, trueskill_rank,
    wilcoxon_signed_rank, DistanceMatrix64, GoalCountVector64, ScoreSeries64, TrueSkillConfig64,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REL_TOL: f64 = 1e-12;
const KW_TOL: f64 = 1e-3;
const TS_TOL: f64 = 1e-3;
const ABLATED_BUDGET: Duration = Duration::from_secs(30);
const FULL_BUDGET: Duration = Duration::from_secs(60);

/// Criteria that fail on the default scenario; see the decisions ledger.
const KNOWN_FAILING: &[&str] = &["full-architecture-activity"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Run {
    records: Vec<LogRecord>,
    report: MetricsReport,
    elapsed: Duration,
}

fn simulate(ablate: &str) -> Run {
    let mut c = RunConfig::default_scenario();
    c.days = 7;
    c.ablation = Ablation::parse(ablate).expect("known flags");
    let t = Instant::now();
    let mut k = Kernel::new(c, EventLog::in_memory()).expect("valid scenario");
    k.run().expect("scripted run");
    let records = k.log().records().to_vec();
    let report = metrics_report(&records).expect("metrics");
    Run { elapsed: t.elapsed(), records, report }
}

fn ablation_nullity(ablated: &Run) -> Outcome {
    let deltas: Vec<Option<f64>> = ablated.report.agents.iter().map(|a| a.delta_overall).collect();
    let zero = deltas.iter().all(|d| *d == Some(0.0));
    let first = initial_structures(&ablated.records).expect("init records");
    let last = final_structures(&ablated.records).expect("structures");
    let same = first.len() == 3
        && first.iter().all(|(id, cs)| serde_json::to_vec(cs).ok() == last.get(id).and_then(|l| serde_json::to_vec(l).ok()));
    let fast = ablated.elapsed < ABLATED_BUDGET;
    outcome(
        zero && same && fast,
        format!("delta {deltas:?}, day-7 structures identical: {same}, {:.2?} (< {ABLATED_BUDGET:?})", ablated.elapsed),
    )
}

fn full_activity(full: &Run, ablated: &Run) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = full.elapsed < FULL_BUDGET;
    for (f, a) in full.report.agents.iter().zip(&ablated.report.agents) {
        let (df, af, aa) = (f.delta_overall.unwrap_or(0.0), f.activity.unwrap_or(0.0), a.activity.unwrap_or(0.0));
        pass &= df > 0.0 && af > aa;
        parts.push(format!("{} delta {df:.3} activity {af:.3} vs {aa:.3}", f.agent));
    }
    outcome(pass, format!("{}, {:.2?} (< {FULL_BUDGET:?})", parts.join("; "), full.elapsed))
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * b.abs().max(f64::MIN_POSITIVE)
}

#[allow(clippy::needless_range_loop)]
fn formula_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut bad = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=9);
        let scores: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| rng.random_range(8..=50) as f64).collect()).collect();
        let mut sum = 0.0;
        for d in 0..5 {
            for i in 0..n - 1 {
                sum += (scores[i][d] - scores[i + 1][d]).abs();
            }
        }
        let want = sum / (5.0 * (n - 1) as f64);
        let got = delta_overall(&ScoreSeries64::from_days(&scores).expect("shape")).expect("n >= 2");
        bad += usize::from(!(got == want || rel_close(got, want)));
    }
    for _ in 0..1000 {
        let a: Vec<f64> = (0..10).map(|_| rng.random_range(0..8) as f64).collect();
        let b: Vec<f64> = (0..10).map(|_| rng.random_range(0..8) as f64).collect();
        let want = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let got = euclid_distance(&GoalCountVector64::new(a).expect("counts"), &GoalCountVector64::new(b).expect("counts")).expect("axes");
        bad += usize::from(!(got == want || rel_close(got, want)));
    }
    for _ in 0..1000 {
        let n = rng.random_range(2..=9);
        let days: Vec<Vec<f64>> = (0..n).map(|_| (0..10).map(|_| rng.random_range(0..6) as f64).collect()).collect();
        let mut sum = 0.0;
        let mut pairs = 0;
        for i in 0..n {
            for j in i + 1..n {
                sum += days[i].iter().zip(&days[j]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                pairs += 1;
            }
        }
        let want = sum / f64::from(pairs);
        let vs: Vec<GoalCountVector64> = days.into_iter().map(|d| GoalCountVector64::new(d).expect("counts")).collect();
        let got = activity_level(&distance_matrix(&vs).expect("matrix")).expect("n >= 2");
        bad += usize::from(!(got == want || rel_close(got, want)));
    }
    let m = DistanceMatrix64::from_rows(vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 3.0], vec![2.0, 3.0, 0.0]]).expect("symmetric");
    let a3 = activity_level(&m).expect("n = 3");
    outcome(bad == 0 && a3 == 2.0, format!("{bad} of 3000 random inputs outside {REL_TOL:e}; upper (1,2,3) -> {a3}"))
}

fn bfi_scoring() -> Outcome {
    let sheet = |answers: Vec<u8>| BfiAnswerSheet { agent: "x".into(), day: 1, answers };
    let base = score_bfi(&sheet(vec![3; 44])).scores.as_array();
    let expect = [24.0, 27.0, 27.0, 24.0, 30.0];
    let mut local = true;
    for i in 0..ITEMS.len() {
        for v in [1u8, 2, 4, 5] {
            let mut a = vec![3; 44];
            a[i] = v;
            let s = score_bfi(&sheet(a)).scores.as_array();
            let changed: Vec<f64> = s.iter().zip(&base).map(|(x, y)| (x - y).abs()).filter(|d| *d > 0.0).collect();
            local &= changed.len() == 1 && changed[0] <= 2.0;
        }
    }
    outcome(base == expect && local, format!("all-3s -> {base:?}, single-item changes local: {local}"))
}

fn wilcoxon_enumeration(xs: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = xs.iter().copied().filter(|x| *x != 0.0).collect();
    let mags: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks: Vec<f64> = mags
        .iter()
        .map(|&m| mags.iter().filter(|&&o| o < m).count() as f64 + (mags.iter().filter(|&&o| o == m).count() as f64 + 1.0) / 2.0)
        .collect();
    let total: f64 = ranks.iter().sum();
    let wp: f64 = ranks.iter().zip(&d).filter(|(_, x)| **x > 0.0).map(|(r, _)| r).sum();
    let t = wp.min(total - wp);
    let n = d.len();
    let hits = (0u32..1 << n)
        .filter(|mask| {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            w.min(total - w) <= t + 1e-9
        })
        .count();
    (t, (hits as f64 / f64::from(1u32 << n)).min(1.0))
}

fn reference_trueskill(rankings: &[Vec<&str>]) -> Vec<(String, f64)> {
    use skillratings::trueskill::{trueskill_multi_team, TrueSkillConfig, TrueSkillRating};
    use skillratings::MultiTeamOutcome;
    let cfg = TrueSkillConfig { draw_probability: 0.1, beta: 25.0 / 6.0, dynamics_factor: 25.0 / 300.0 };
    let mut ratings: std::collections::BTreeMap<&str, TrueSkillRating> =
        rankings[0].iter().map(|g| (*g, TrueSkillRating { rating: 25.0, uncertainty: 25.0 / 3.0 })).collect();
    for r in rankings {
        let teams: Vec<[TrueSkillRating; 1]> = r.iter().map(|g| [ratings[g]]).collect();
        let input: Vec<(&[TrueSkillRating], MultiTeamOutcome)> =
            teams.iter().enumerate().map(|(i, t)| (&t[..], MultiTeamOutcome::new(i + 1))).collect();
        let out = trueskill_multi_team(&input, &cfg, None).expect("valid match");
        for (g, t) in r.iter().zip(out) {
            ratings.insert(g, t[0]);
        }
    }
    rankings[0].iter().map(|g| ((*g).to_owned(), ratings[g].rating)).collect()
}

fn statistics_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut wil_bad = 0;
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(1..=12);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-3..=3) as f64).collect();
        let Ok(r) = wilcoxon_signed_rank(&xs, 0.0) else { continue };
        let (t, p) = wilcoxon_enumeration(&xs);
        wil_bad += usize::from((r.statistic - t).abs() > 1e-12 || (r.p_value.unwrap_or(-1.0) - p).abs() > 1e-12);
        checked += 1;
    }

    let kw = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).expect("two groups");
    let kw_p = kw.p_value.unwrap_or(f64::NAN);
    let kw_ok = (kw.statistic - 3.857).abs() < KW_TOL && (kw_p - 0.0495).abs() < KW_TOL;

    let mut holm_ok = true;
    for _ in 0..500 {
        let raw: Vec<f64> = (0..rng.random_range(1..12)).map(|_| rng.random::<f64>()).collect();
        holm_ok &= holm_adjust(&raw).iter().zip(&raw).all(|(a, r)| a >= r);
    }

    let d = cohens_d(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).expect("two samples");

    let groups = ["full", "group2", "group3", "group4"];
    let mut ts_ok = true;
    let cfg = TrueSkillConfig64::default();
    for _ in 0..100 {
        let rankings: Vec<Vec<&str>> = (0..rng.random_range(3..25))
            .map(|_| {
                let mut rest = groups[1..].to_vec();
                rest.shuffle(&mut rng);
                std::iter::once(groups[0]).chain(rest).collect()
            })
            .collect();
        let ours = trueskill_rank(&rankings, &cfg).expect("rankings");
        let theirs = reference_trueskill(&rankings);
        let best = ours.iter().max_by(|a, b| a.mu.total_cmp(&b.mu)).expect("groups");
        let ref_best = theirs.iter().max_by(|a, b| a.1.total_cmp(&b.1)).expect("groups");
        ts_ok &= best.group == "full" && ref_best.0 == "full";
        ts_ok &= ours.iter().zip(&theirs).all(|(o, t)| o.group == t.0 && (o.mu - t.1).abs() < TS_TOL);
    }

    outcome(
        wil_bad == 0 && kw_ok && holm_ok && d == -1.0 && ts_ok,
        format!(
            "wilcoxon mismatches {wil_bad}/200, H = {:.4} p = {kw_p:.4}, holm >= raw: {holm_ok}, d = {d}, trueskill dominant + reference agree: {ts_ok}",
            kw.statistic
        ),
    )
}

fn steered_run() -> Kernel {
    let mut c = RunConfig::default_scenario();
    c.days = 2;
    let mut k = Kernel::new(c, EventLog::in_memory()).expect("valid scenario");
    k.apply(Command::Step).expect("step");
    let id = k.ids()[0].clone();
    let _ = k.apply(Command::Chat { agent: id, text: "What matters to you this week?".into() });
    k.apply(Command::RunDay).expect("day");
    let csv = format!("{DEFAULT_WORLD}Annex,Quiet Room,20,20,4,Learning,A quiet study room,08:00,20:00\n");
    k.apply(Command::EnvUpdate { csv }).expect("staged");
    k.apply(Command::RunDay).expect("day");
    k
}

fn determinism_replay(full: &Run) -> Outcome {
    let a = steered_run();
    let b = steered_run();
    let ha = records_hash(a.log().records());
    let same = ha == records_hash(b.log().records());
    let folded = replay(a.log().records()).map(|v| v == a.replay_view()).unwrap_or(false);

    let entries = transcript(a.log().records()).expect("commands");
    let mut c = RunConfig::default_scenario();
    c.days = 2;
    let fresh = Kernel::new(c, EventLog::in_memory()).expect("valid scenario");
    let again = replay_transcript(fresh, &entries, a.log().next_seq()).expect("transcript");
    let transcript_ok = records_hash(again.log().records()) == ha;

    let full_again = simulate("");
    let full_same = records_hash(&full.records) == records_hash(&full_again.records);
    outcome(
        same && folded && transcript_ok && full_same,
        format!("steered logs identical: {same} ({ha}), replay state equal: {folded}, transcript replay identical: {transcript_ok}, 7-day rerun identical: {full_same}"),
    )
}

fn mechanism_invariants(full: &Run, ablated: &Run) -> Outcome {
    let mut logs: Vec<(String, Vec<LogRecord>)> =
        vec![("full seed 7".into(), full.records.clone()), ("ablated seed 7".into(), ablated.records.clone())];
    for (seed, ablate) in [(1, ""), (2, ""), (3, "feelings"), (4, "simple-character"), (5, "growth,insight")] {
        let mut c = RunConfig::default_scenario();
        c.seed = seed;
        c.days = 3;
        c.ablation = Ablation::parse(ablate).expect("flags");
        let mut k = Kernel::new(c, EventLog::in_memory()).expect("valid");
        k.run().expect("run");
        logs.push((format!("seed {seed} [{ablate}]"), k.log().records().to_vec()));
    }
    logs.push(("steered".into(), steered_run().log().records().to_vec()));
    let mut problems = Vec::new();
    let mut emotion_replans = 0;
    for (name, recs) in &logs {
        emotion_replans += recs.iter().filter(|r| r.kind == "replan" && r.payload["reason"] == "emotion").count();
        let rep = check_log_invariants(recs).expect("readable log");
        for (section, v) in rep.sections() {
            if let Some(first) = v.first() {
                problems.push(format!("{name} {section}: {first}"));
            }
        }
    }
    let detail = if problems.is_empty() {
        format!(
            "emotion, memory, appointment, occupancy and growth checks clean over {} runs, {emotion_replans} emotion replans seen",
            logs.len()
        )
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty() && emotion_replans > 0, detail)
}

fn main() -> ExitCode {
    let full = simulate("");
    let ablated = simulate("growth,insight,feelings");
    let results = [
        ("ablation-nullity", ablation_nullity(&ablated)),
        ("full-architecture-activity", full_activity(&full, &ablated)),
        ("formula-oracles", formula_oracles()),
        ("bfi-scoring", bfi_scoring()),
        ("statistics-suite", statistics_suite()),
        ("determinism-replay", determinism_replay(&full)),
        ("mechanism-invariants", mechanism_invariants(&full, &ablated)),
    ];
    let mut unexpected = 0;
    for (name, o) in &results {
        let known = KNOWN_FAILING.contains(name);
        let tag = match (o.pass, known) {
            (true, false) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
            (true, true) => "PASS (listed as known failure)",
        };
        unexpected += usize::from(o.pass == known);
        println!("{tag:<14} {name}: {}", o.detail);
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("{unexpected} criteria differ from the expected outcome");
        ExitCode::FAILURE
    }
}
