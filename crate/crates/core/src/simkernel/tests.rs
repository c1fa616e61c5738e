use super::*;

fn small(days: u32) -> RunConfig {
    let mut c = RunConfig::default_scenario();
    c.days = days;
    c
}

#[test]
fn config_defaults_and_validation() {
    let c = RunConfig::default_scenario();
    assert_eq!((c.tick_minutes, c.memory_capacity, c.blur_batch), (15, 30, 10));
    assert_eq!(c.window().ticks_per_day(), 68);
    assert!(RunConfig::from_json(r#"{"seed":1,"days":0,"agents":[{"brief":"x"}]}"#).is_err());
    assert!(RunConfig::from_json(r#"{"seed":1,"days":1,"agents":[]}"#).is_err());
    assert!(RunConfig::from_json(r#"{"seed":1,"days":1,"agents":[{"brief":"a"}],"blur_batch":1}"#).is_err());
    assert_eq!(
        Ablation::parse("growth, feelings").unwrap(),
        Ablation { disable_growth: true, disable_cognitive_feelings: true, ..Ablation::default() }
    );
    assert!(Ablation::parse("nope").is_err());
}

#[test]
fn one_day_runs_and_replays() {
    let mut k = Kernel::new(small(1), EventLog::in_memory()).unwrap();
    k.run().unwrap();
    assert!(k.is_finished());
    assert!(k.check_invariants().is_empty(), "{:?}", k.check_invariants());
    let view = replay(k.log().records()).unwrap();
    assert_eq!(view, k.replay_view());
    let kinds: std::collections::BTreeSet<&str> = k.log().records().iter().map(|r| r.kind.as_str()).collect();
    for want in ["run", "init", "plan", "action", "emotion", "memory", "insight", "growth", "bfi", "day_end", "lm"] {
        assert!(kinds.contains(want), "missing {want}");
    }
    assert!(matches!(k.step(), Err(KernelError::Finished)));
}

#[test]
fn same_seed_same_log() {
    let run = || {
        let mut k = Kernel::new(small(1), EventLog::in_memory()).unwrap();
        k.run().unwrap();
        records_hash(k.log().records())
    };
    assert_eq!(run(), run());
}

#[test]
fn chat_is_remembered_and_charges_a_tick() {
    let mut k = Kernel::new(small(1), EventLog::in_memory()).unwrap();
    k.step().unwrap();
    let id = k.ids()[0].clone();
    if k.state().agents[&id].busy_until > k.state().clock.tick {
        return;
    }
    let msg = k.chat(&id, "What are you working on today?").unwrap();
    assert!(!msg.reply.is_empty());
    assert_eq!(k.state().agents[&id].dialog.with("user").len(), 1);
    assert!(matches!(k.chat(&id, "again"), Err(KernelError::Busy(_))));
    assert!(matches!(k.chat("nobody", "hi"), Err(KernelError::UnknownAgent(_))));
}

#[test]
fn staged_world_applies_next_morning() {
    let mut k = Kernel::new(small(2), EventLog::in_memory()).unwrap();
    k.step().unwrap();
    let csv = format!("{}Annex,Quiet Room,20,20,4,Learning,a quiet room,08:00,20:00\n", DEFAULT_WORLD);
    let s = k.stage_world(&csv).unwrap();
    assert_eq!((s.effective_day, s.diff.added.clone()), (2, vec!["Annex/Quiet Room".to_string()]));
    k.run_day().unwrap();
    assert!(k.state().world.place("Annex/Quiet Room").is_none());
    k.step().unwrap();
    assert!(k.state().world.place("Annex/Quiet Room").is_some());
    assert!(k.stage_world("building,place\n").is_err());
}

#[test]
fn save_and_resume_matches_straight_run() {
    let dir = tempfile::tempdir().unwrap();
    let straight = dir.path().join("a.jsonl");
    let summary = run_simulation(small(2), &straight).unwrap();

    let split = dir.path().join("b.jsonl");
    let save = dir.path().join("b.save.json");
    let mut k = Kernel::new(small(2), EventLog::create(&split).unwrap()).unwrap();
    k.run_day().unwrap();
    k.save(&save).unwrap();
    drop(k);
    let sf = Kernel::load_save(&save).unwrap();
    let client = sf.state.config.client().unwrap();
    let log = EventLog::append_to(&split, sf.next_seq).unwrap();
    let mut k = Kernel::resume(sf, client, log).unwrap();
    k.run().unwrap();
    assert_eq!(content_hash(&std::fs::read(&split).unwrap()), summary.hash);
}

#[test]
fn transcript_replay_reproduces_log() {
    let mut k = Kernel::new(small(2), EventLog::in_memory()).unwrap();
    k.apply(Command::Step).unwrap();
    k.apply(Command::Step).unwrap();
    let id = k.ids()[1].clone();
    let _ = k.apply(Command::Chat { agent: id, text: "How is your morning going?".into() });
    k.apply(Command::Resume).unwrap();
    for _ in 0..20 {
        k.step().unwrap();
    }
    let csv = format!("{DEFAULT_WORLD}Annex,Quiet Room,20,20,4,Learning,a quiet room,08:00,20:00\n");
    k.apply(Command::EnvUpdate { csv }).unwrap();
    k.apply(Command::Pause).unwrap();
    k.apply(Command::RunDay).unwrap();
    k.step().unwrap();
    let original = k.log().records().to_vec();

    let entries = transcript(&original).unwrap();
    assert_eq!(entries.len(), 7);
    let fresh = Kernel::new(small(2), EventLog::in_memory()).unwrap();
    let again = replay_transcript(fresh, &entries, original.len() as u64).unwrap();
    assert_eq!(records_hash(again.log().records()), records_hash(&original));
}
