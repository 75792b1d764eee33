//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL
//! line; the process fails if any criterion does.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::cell::Cell;
use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use serde_json::json;

use sde_core::backends::{FailingImageBackend, FailingTextClient, StubImageBackend, StubTextClient, TaskKind};
use sde_core::composition::{builtin_template, builtin_templates};
use sde_core::detailing::{expand_recursive, fuse_history, populate_scene, ExpansionConfig, ExpansionTarget};
use sde_core::evaluation::{benchmark, reproducibility, Strategy, TABLE_ROWS};
use sde_core::pipeline::{
    named_style, session_to_json, AdvanceParams, Backends, EditField, FileSessionStore, IterationRecord, NewSession,
    Pipeline, PipelineConfig, SceneEdit, SessionState, SessionStore, Stage,
};
use sde_core::prompt_compiler::{compile_prompt, deserialize_scene, scene_hash, serialize_scene};
use sde_core::scene_model::{detailset_to_scene, scene_to_detailset, validate_scene};
use sde_core::theme_extraction::{cluster_vectors, Linkage};
use sde_core::{SceneGraph, ThemeConcept};

use support::faults::FlakyStore;
use support::gen;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const ABSTRACTS: [&str; 4] = [
    "Structured scene descriptions make image generation repeatable. A scene graph records content, \
     position, style and color for every element, and composition templates place each element on the canvas.",
    "Coral reefs shelter fish. Warming oceans bleach coral, and bleached reefs lose the fish that \
     depend on coral for food and shelter.",
    "Rail networks connect cities. Freight trains carry grain from farms to ports, while passenger \
     trains link suburbs to city centers every morning.",
    "Bees pollinate orchards; orchards feed bees. Pesticide use in orchards harms bees and, in turn, \
     the harvest of the orchards themselves.",
];

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check(ok: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message())
    }
}

fn harness_error(context: &str, message: impl ToString) -> sde_core::Error {
    sde_core::Error::Parse {
        context: context.to_string(),
        message: message.to_string(),
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("abstract.txt");
    std::fs::write(&input, ABSTRACTS[0]).map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_sde");
    let mut outputs: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    let mut run_index = 0;
    let started = Instant::now();
    let score = reproducibility(
        || {
            run_index += 1;
            let out = |name: &str| dir.path().join(format!("{name}-{run_index}"));
            let status = Command::new(bin)
                .args(["run", "--backend", "stub", "--seed", "7", "--input"])
                .arg(&input)
                .arg("--out-scene")
                .arg(out("scene"))
                .arg("--out-svg")
                .arg(out("svg"))
                .arg("--out-prompt")
                .arg(out("prompt"))
                .arg("--runs-dir")
                .arg(dir.path().join("runs"))
                .output()
                .map_err(|e| harness_error("spawn", e))?;
            if !status.status.success() {
                return Err(harness_error("run", String::from_utf8_lossy(&status.stderr)));
            }
            let read = |p: PathBuf| std::fs::read(&p).map_err(|e| harness_error("read", e));
            let scene = deserialize_scene(&String::from_utf8_lossy(&read(out("scene"))?))?;
            outputs.push((read(out("prompt"))?, read(out("svg"))?));
            scene_hash(&scene)
        },
        10,
    )
    .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let hashes: BTreeSet<_> = outputs.iter().collect();
    check(score == 100.0, || format!("reproducibility {score}"))?;
    check(hashes.len() == 1, || {
        format!("{} distinct prompt/svg pairs", hashes.len())
    })?;
    check(elapsed < Duration::from_secs(5), || format!("10 runs took {elapsed:?}"))?;
    Ok(format!(
        "10 runs, 1 hash, reproducibility {score:.1}, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn clustering_oracle() -> Outcome {
    let compared = Cell::new(0usize);
    runner(200)
        .run(&(gen::vectors(), any::<usize>()), |(vs, kseed)| {
            let k = 1 + kseed % vs.len();
            let refs: Vec<&[f64]> = vs.iter().map(Vec::as_slice).collect();
            for linkage in [Linkage::Single, Linkage::Average] {
                let got = cluster_vectors(&refs, linkage, k).unwrap();
                let want = support::oracle::cluster(&vs, linkage, k);
                prop_assert_eq!(&got.clusters, &want.clusters);
                prop_assert_eq!(got.dendrogram.merges.len(), want.merges.len());
                for (g, w) in got.dendrogram.merges.iter().zip(&want.merges) {
                    prop_assert_eq!((g.a, g.b, g.size), (w.a, w.b, w.size));
                    prop_assert!((g.distance - w.distance).abs() < 1e-9);
                }
                compared.set(compared.get() + 1);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{} clusterings equal the brute-force oracle", compared.get()))
}

fn fusion_contract() -> Outcome {
    runner(1000)
        .run(
            &(vec(gen::detail_set(), 0..4), gen::detail_set()),
            |(history, current)| {
                prop_assert_eq!(&fuse_history(&[], &current, None).unwrap(), &current);
                let fused = fuse_history(&history, &current, None).unwrap();
                let mut keys: BTreeSet<&str> = current.paths().collect();
                for h in &history {
                    keys.extend(h.paths());
                }
                prop_assert_eq!(fused.paths().collect::<BTreeSet<_>>(), keys);
                for (path, rec) in &fused.entries {
                    macro_rules! winner {
                        ($f:ident) => {{
                            let expected = current.get(path).and_then(|r| r.$f.clone()).or_else(|| {
                                history
                                    .iter()
                                    .rev()
                                    .find_map(|h| h.get(path).and_then(|r| r.$f.clone()))
                            });
                            prop_assert_eq!(&rec.$f, &expected, "{} {}", path, stringify!($f));
                        }};
                    }
                    winner!(content);
                    winner!(bbox);
                    winner!(style);
                    winner!(color);
                    winner!(z_order);
                    winner!(region_id);
                }
                Ok(())
            },
        )
        .map_err(|e| e.to_string())?;
    Ok("1000 random histories, including empty-history identity".into())
}

fn recursion_bounds() -> Outcome {
    let template = builtin_template("radial").ok_or("no radial template")?;
    let concepts = [ThemeConcept {
        label: "lighthouse".into(),
        keywords: vec!["lighthouse".into()],
        weight: 1.0,
    }];
    let style = named_style("line-art").ok_or("no style")?;
    let root = populate_scene("a lighthouse", &concepts, &template, &style, None, 0).map_err(|e| e.to_string())?;
    let stub = StubTextClient::new();
    let paths = |s: &SceneGraph| -> Vec<String> { s.walk().into_iter().map(|(_, e)| e.path.clone()).collect() };
    let mut combos = 0;
    for b in 1..=4usize {
        for d in 0..=3usize {
            let unbounded = ExpansionConfig {
                max_depth: d,
                max_children: b,
                element_budget: usize::MAX,
            };
            let full = paths(
                &expand_recursive(&root, &ExpansionTarget::AllRoots, &unbounded, &stub).map_err(|e| e.to_string())?,
            );
            let total: usize = (0..=d as u32).map(|i| b.pow(i)).sum();
            check(full.len() == total, || {
                format!("b={b} d={d}: {} elements, want {total}", full.len())
            })?;
            for budget in 1..=64usize {
                let cfg = ExpansionConfig {
                    element_budget: budget,
                    ..unbounded
                };
                let out =
                    expand_recursive(&root, &ExpansionTarget::AllRoots, &cfg, &stub).map_err(|e| e.to_string())?;
                let got = paths(&out);
                let want = total.min(budget);
                check(got.len() == want, || {
                    format!("b={b} d={d} B={budget}: {} elements, want {want}", got.len())
                })?;
                check(got[..] == full[..want], || {
                    format!("b={b} d={d} B={budget}: not the depth-first prefix")
                })?;
                let v = validate_scene(&out, &template);
                check(v.is_empty(), || format!("b={b} d={d} B={budget}: {v:?}"))?;
                combos += 1;
            }
        }
    }
    Ok(format!("{combos} (b, d, B) combinations"))
}

fn session_of(i: usize, scene: SceneGraph) -> SessionState {
    let template = builtin_template(&scene.template_id).unwrap();
    let t = Utc.timestamp_opt(1_700_000_000 + i as i64, 123_456_789).unwrap();
    let record = IterationRecord {
        index: 0,
        compiled_prompt: compile_prompt(&scene, &template).unwrap(),
        scene_hash: scene_hash(&scene).unwrap(),
        image_ref: i.is_multiple_of(2).then(|| format!("runs/s-{i}/iter-0/image.svg")),
        user_edits: vec![SceneEdit::Set {
            path: "e1".into(),
            field: EditField::Color,
            value: json!("#FF0000"),
        }],
        timestamp: t,
        scene_snapshot: scene.clone(),
    };
    SessionState {
        id: format!("s-{i}"),
        input_text: scene.theme.clone(),
        seed: scene.seed,
        style: Some(scene.style.clone()),
        stage: Stage::ALL[i % Stage::ALL.len()],
        theme: Some(scene.theme.clone()),
        concepts: scene.theme_concepts.clone(),
        template_id: Some(scene.template_id.clone()),
        current_scene: Some(scene),
        iterations: vec![record],
        created_at: t,
        updated_at: t,
    }
}

fn round_trips() -> Outcome {
    runner(500)
        .run(&gen::scene(), |s| {
            let text = serialize_scene(&s).unwrap();
            let back = deserialize_scene(&text).unwrap();
            prop_assert_eq!(serialize_scene(&back).unwrap(), text);
            prop_assert_eq!(&deserialize_scene(&serialize_scene(&back).unwrap()).unwrap(), &back);
            Ok(())
        })
        .map_err(|e| format!("scene: {e}"))?;
    runner(500)
        .run(&gen::scene(), |s| {
            let d = scene_to_detailset(&s).unwrap();
            let back = detailset_to_scene(&d, &s).unwrap();
            prop_assert_eq!(serialize_scene(&back).unwrap(), serialize_scene(&s).unwrap());
            prop_assert_eq!(scene_to_detailset(&back).unwrap(), d);
            Ok(())
        })
        .map_err(|e| format!("detail set: {e}"))?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = FileSessionStore::new(dir.path()).map_err(|e| e.to_string())?;
    let i = Cell::new(0);
    runner(500)
        .run(&gen::scene(), |s| {
            i.set(i.get() + 1);
            let state = session_of(i.get(), s);
            store.save(&state).unwrap();
            let loaded = store.load(&state.id).unwrap();
            prop_assert_eq!(session_to_json(&loaded).unwrap(), session_to_json(&state).unwrap());
            store.save(&loaded).unwrap();
            prop_assert_eq!(&store.load(&state.id).unwrap(), &loaded);
            Ok(())
        })
        .map_err(|e| format!("session: {e}"))?;
    Ok("500 scenes, 500 detail sets, 500 sessions".into())
}

fn stub_pipeline(dir: &Path) -> Pipeline {
    let store = Arc::new(FileSessionStore::new(dir.join("sessions")).unwrap());
    Pipeline::new(store, Backends::stub(), PipelineConfig::new(dir.join("runs")))
}

fn pipeline_equivalence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pipeline = stub_pipeline(dir.path());
    let ids: Vec<String> = builtin_templates().into_iter().map(|t| t.id).collect();
    let strategy = (0..ABSTRACTS.len(), proptest::option::of(0..ids.len()), any::<u64>());
    runner(20)
        .run(&strategy, |(text, template, seed)| {
            let template = template.map(|i| ids[i].clone());
            let one_shot = pipeline
                .art_image_creation(ABSTRACTS[text], template.as_deref(), seed)
                .unwrap();
            let params = AdvanceParams {
                template_id: template,
                ..Default::default()
            };
            let mut state = pipeline.create(NewSession::new(ABSTRACTS[text], seed)).unwrap();
            for _ in 0..5 {
                state = pipeline.advance(&state.id, &params).unwrap();
            }
            prop_assert_eq!(state.stage, Stage::Generate);
            let record = state.latest().unwrap();
            prop_assert_eq!(&record.scene_hash, &scene_hash(&one_shot.scene).unwrap());
            prop_assert_eq!(&record.compiled_prompt, &one_shot.prompt);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("20 (text, template, seed) triples".into())
}

fn golden_prompts() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden");
    let mut names = Vec::new();
    let mut scenes: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".scene.json"))
        .collect();
    scenes.sort();
    check(scenes.len() == 3, || format!("{} golden scenes", scenes.len()))?;
    for path in scenes {
        let name = path.file_name().unwrap().to_string_lossy().replace(".scene.json", "");
        let scene = deserialize_scene(&std::fs::read_to_string(&path).map_err(|e| e.to_string())?)
            .map_err(|e| format!("{name}: {e}"))?;
        let template = builtin_template(&scene.template_id).ok_or("unknown template")?;
        let prompt = compile_prompt(&scene, &template).map_err(|e| e.to_string())?;
        let want = std::fs::read_to_string(dir.join(format!("{name}.prompt.txt"))).map_err(|e| e.to_string())?;
        check(prompt == want, || format!("{name}: prompt drifted"))?;
        names.push(name);
    }
    Ok(names.join(", "))
}

fn benchmark_smoke() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus: Vec<String> = ABSTRACTS[1..].iter().map(|s| s.to_string()).collect();
    let judge = StubTextClient::new().reply_for(
        TaskKind::Judge,
        r#"{"theme_conformity": 93, "artistic_quality": 56, "understandability": 72}"#,
    );
    let config = PipelineConfig::new(dir.path());
    let report = benchmark(&corpus, Strategy::Sde, &Backends::stub(), &judge, &config, 3).map_err(|e| e.to_string())?;
    let means = (
        report.theme_conformity,
        report.artistic_quality,
        report.understandability,
    );
    check(means == (93.0, 56.0, 72.0), || format!("means {means:?}"))?;
    check(report.n_samples == 3 && report.n_failed == 0, || {
        format!("{} ok, {} failed", report.n_samples, report.n_failed)
    })?;
    check(report.image_reproducibility == 100.0, || {
        format!("reproducibility {}", report.image_reproducibility)
    })?;
    let table = report.table();
    for row in TABLE_ROWS {
        check(table.lines().any(|l| l.starts_with(row)), || {
            format!("row {row:?} missing:\n{table}")
        })?;
    }
    Ok("3 texts, scripted means reproduced, 5 table rows".into())
}

/// Drives a session through `stage`'s predecessor with working backends,
/// then makes `stage` fail and compares the stored bytes.
fn atomicity() -> Outcome {
    let text_failing = |kind: TaskKind| {
        Backends::new(
            Arc::new(FailingTextClient::new(Arc::new(StubTextClient::new()), [kind])),
            Arc::new(StubImageBackend),
        )
    };
    let mut checked = Vec::new();
    for stage in Stage::ALL {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let sessions = dir.path().join("sessions");
        let flaky = Arc::new(FlakyStore::new(
            FileSessionStore::new(&sessions).map_err(|e| e.to_string())?,
        ));
        let config = PipelineConfig::new(dir.path().join("runs"));
        let good = Pipeline::new(flaky.clone(), Backends::stub(), config.clone());
        let (backends, fault) = match stage {
            Stage::Input | Stage::Composition => (Backends::stub(), "store write"),
            Stage::Creativity => (text_failing(TaskKind::SuggestStyle), "style backend"),
            Stage::Theme => (text_failing(TaskKind::Theme), "theme backend"),
            Stage::Detailing => (text_failing(TaskKind::Expand), "expansion backend"),
            Stage::Generate => (
                Backends::new(Arc::new(StubTextClient::new()), Arc::new(FailingImageBackend)),
                "image backend",
            ),
        };
        let failing = Pipeline::new(flaky.clone(), backends, config);
        let snapshot = || -> Vec<(PathBuf, Vec<u8>)> {
            let mut files: Vec<_> = std::fs::read_dir(&sessions)
                .unwrap()
                .map(|e| {
                    let p = e.unwrap().path();
                    let bytes = std::fs::read(&p).unwrap();
                    (p, bytes)
                })
                .collect();
            files.sort();
            files
        };

        // an unrelated session that must never change
        let bystander = good
            .create(NewSession::new(ABSTRACTS[2], 1))
            .map_err(|e| e.to_string())?;
        if stage == Stage::Input {
            let before = snapshot();
            flaky.set_failing(true);
            let r = failing.create(NewSession::new(ABSTRACTS[0], 3));
            flaky.set_failing(false);
            check(r.is_err(), || "input stage did not fail".into())?;
            check(snapshot() == before, || "input: stored sessions changed".into())?;
            checked.push(format!("input ({fault})"));
            continue;
        }
        let mut state = good
            .create(NewSession::new(ABSTRACTS[0], 3))
            .map_err(|e| e.to_string())?;
        while state.stage.next() != stage {
            state = good
                .advance(&state.id, &AdvanceParams::default())
                .map_err(|e| e.to_string())?;
        }
        let before = snapshot();
        if stage == Stage::Composition {
            flaky.set_failing(true);
        }
        let r = failing.advance(&state.id, &AdvanceParams::default());
        flaky.set_failing(false);
        check(r.is_err(), || format!("{}: advance did not fail", stage.name()))?;
        check(snapshot() == before, || {
            format!("{}: stored bytes changed", stage.name())
        })?;
        let reloaded = good.load(&state.id).map_err(|e| e.to_string())?;
        check(reloaded.stage == state.stage, || {
            format!("{}: stage moved", stage.name())
        })?;
        check(good.load(&bystander.id).is_ok(), || "bystander lost".into())?;
        checked.push(format!("{} ({fault})", stage.name()));
    }
    Ok(checked.join(", "))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("determinism", determinism),
        ("clustering-oracle", clustering_oracle),
        ("fusion-contract", fusion_contract),
        ("recursion-bounds", recursion_bounds),
        ("round-trips", round_trips),
        ("pipeline-equivalence", pipeline_equivalence),
        ("golden-prompts", golden_prompts),
        ("benchmark-smoke", benchmark_smoke),
        ("atomicity", atomicity),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.2} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({secs:.2} s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
