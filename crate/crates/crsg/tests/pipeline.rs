//! End-to-end checks against the bundled demo scene: graph construction,
//! persistence, sequence runs across modes, and run determinism.

use std::path::{Path, PathBuf};

use crsg::commands::{run_sequence, SequenceOutcome};
use crsg::navigation::RunMode;
use crsg::providers::Providers;
use crsg::scenegraph::{build_graph, load_graph, query, resolve_command, save_graph};
use crsg::simworld::{embedder_info, load_scene, Scene};
use crsg::navigation::CommandInput;

fn demo_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes/demo.json")
}

fn demo_scene() -> Scene {
    load_scene(&demo_path()).expect("bundled demo scene loads")
}

fn build_demo(scene: &Scene) -> (crsg::CarrierRelationshipSceneGraph, Providers) {
    let providers = Providers::from_env(&scene.provider);
    let graph = build_graph(
        scene.name.clone(),
        scene.world.records(),
        scene.world.rooms.clone(),
        &scene.construction,
        &providers,
        embedder_info(&scene.provider),
    )
    .expect("demo graph builds");
    (graph, providers)
}

#[test]
fn demo_graph_builds_with_expected_layers() {
    let scene = demo_scene();
    let (graph, _) = build_demo(&scene);
    graph.check_partition().expect("partition holds");
    assert_eq!(graph.carriers.len(), 3, "carriers: {:?}", graph.carriers);
    let carried: usize = graph.carried.values().map(|s| s.len()).sum();
    assert_eq!(carried, 5);
    assert!(graph.carriers.contains("table_living"));
    assert_eq!(graph.carrier_of(&"cup_black".to_string()).map(String::as_str), Some("table_living"));
    assert_eq!(graph.version, 0);
}

#[test]
fn graph_survives_save_and_load() {
    let scene = demo_scene();
    let (graph, _) = build_demo(&scene);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.json");
    save_graph(&graph, &path).unwrap();
    let loaded = load_graph(&path).unwrap();
    assert_eq!(graph, loaded);
}

#[test]
fn resolve_prefers_exact_caption_and_query_restricts_by_carrier() {
    let scene = demo_scene();
    let (graph, providers) = build_demo(&scene);
    let command = resolve_command(
        &graph,
        &CommandInput { text: Some("black cup".into()), image: None, image_hint: None },
        &providers,
    )
    .unwrap();
    assert_eq!(command.resolved_target_id, "cup_black");

    let ranked = query(&graph, "a cup on the counter", 3, &providers).unwrap();
    assert_eq!(ranked[0].0, "cup_white", "ranked: {ranked:?}");
}

#[test]
fn full_mode_demo_sequence_finds_every_target() {
    let scene = demo_scene();
    let outcome = run_sequence(&scene, None, RunMode::Full, scene.seed).unwrap();
    assert_eq!(outcome.tasks.len(), 5);
    for task in &outcome.tasks {
        assert!(task.success, "task {} failed: {:?}", task.task_idx, task.accepted);
        assert!(task.spl > 0.0 && task.spl <= 1.0);
    }
    // The two seeded displacements are discovered and healed along the way.
    assert_eq!(outcome.graph.version, 4);
    assert_eq!(
        outcome.graph.carrier_of(&"book_red".to_string()),
        None,
        "the stale book record is replaced by a fresh observation"
    );
    outcome.graph.check_partition().unwrap();
}

#[test]
fn no_update_mode_never_touches_the_graph() {
    let scene = demo_scene();
    let (initial, _) = build_demo(&scene);
    let outcome = run_sequence(&scene, Some(&initial), RunMode::NoUpdate, scene.seed).unwrap();
    assert_eq!(outcome.graph, initial);
    for trace in &outcome.traces {
        for step in &trace.steps {
            assert!(step.graph_delta.is_empty());
        }
    }
}

#[test]
fn same_seed_reruns_are_equal() {
    let scene = demo_scene();
    let a: SequenceOutcome = run_sequence(&scene, None, RunMode::Full, 31).unwrap();
    let b: SequenceOutcome = run_sequence(&scene, None, RunMode::Full, 31).unwrap();
    assert_eq!(a.tasks, b.tasks);
    assert_eq!(a.traces, b.traces);
    assert_eq!(a.graph, b.graph);
}

#[test]
fn signal_ablations_still_complete_the_demo() {
    let scene = demo_scene();
    for mode in [RunMode::WithoutGpt, RunMode::WithoutRgb] {
        let outcome = run_sequence(&scene, None, mode, scene.seed).unwrap();
        assert_eq!(outcome.tasks.len(), 5, "mode {}", mode.name());
        for task in &outcome.tasks {
            assert!(task.found, "mode {} task {} never stopped on a verdict", mode.name(), task.task_idx);
        }
    }
}
