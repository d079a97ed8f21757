//! End-to-end command tests: index a repo layout, serve it, retrieve
//! over it, and check determinism, resume and the hit-rate report.

use std::fs;
use std::path::{Path, PathBuf};

use scs_cli::commands::{
    cmd_hitrate, cmd_index, cmd_retrieve, make_ladder_config, HitrateOptions, IndexOptions,
    RetrieveOptions, EXIT_OK, EXIT_PARTIAL,
};
use scs_cli::pipeline::{BudgetOptions, OutputLine};
use scs_cli::CommandError;
use scs_core::dataset::FieldMap;
use scs_core::ladder::SearchMode;
use scs_service::{spawn_server, ServerHandle, ServiceConfig, ShardSet};

struct Fixture {
    root: tempfile::TempDir,
}

impl Fixture {
    fn repos(&self) -> PathBuf {
        self.root.path().join("repos")
    }

    fn shards(&self) -> PathBuf {
        self.root.path().join("shards")
    }

    fn dataset(&self) -> PathBuf {
        self.root.path().join("dataset.jsonl")
    }

    fn out(&self) -> PathBuf {
        self.root.path().join("contexts.jsonl")
    }
}

fn write_file(path: &Path, content: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, content).unwrap();
}

fn record(id: &str, repo: &str, rev: &str, path: &str, prefix: &str, suffix: &str) -> String {
    serde_json::to_string(&serde_json::json!({
        "id": id, "repo": repo, "revision": rev, "path": path,
        "prefix": prefix, "suffix": suffix,
    }))
    .unwrap()
}

/// Three revisions of projA. `walk_tree_nodes` exists only in r3.
fn build_fixture() -> Fixture {
    let fx = Fixture { root: tempfile::tempdir().unwrap() };
    let repos = fx.repos();

    write_file(
        &repos.join("projA/r1/src/util.py"),
        "def parse_config(path):\n    return load_yaml(path)\n\ndef load_yaml(path):\n    return path\n",
    );
    write_file(&repos.join("projA/r1/src/extra.py"), "alpha_marker = 1\n");
    write_file(
        &repos.join("projA/r2/src/util.py"),
        "def parse_config(path):\n    return load_yaml(path)\n",
    );
    write_file(&repos.join("projA/r3/src/tree.py"), "def walk_tree_nodes(root):\n    return root\n");

    let dataset = [
        // terms present in its own revision: hits in both modes
        record(
            "p1",
            "projA",
            "r1",
            "src/util.py",
            "def parse_config(path):\n    return load_yaml(",
            ")\n",
        ),
        // brand-new file whose terms exist only in r3: cross-only hit
        record(
            "p2",
            "projA",
            "r2",
            "src/new.py",
            "def helper():\n    return walk_tree_nodes(",
            ")\n",
        ),
        // degenerate record: empty prefix+suffix
        record("p3", "projA", "r1", "src/extra.py", "", ""),
    ]
    .join("\n");
    fs::write(fx.dataset(), dataset + "\n").unwrap();
    fx
}

fn index_fixture(fx: &Fixture) {
    let code = cmd_index(
        &IndexOptions {
            dataset: fx.dataset(),
            repos: fx.repos(),
            out: fx.shards(),
            field_map: FieldMap::default(),
        },
        &mut Vec::new(),
    )
    .unwrap();
    assert_eq!(code, EXIT_OK);
}

fn start_server(fx: &Fixture) -> ServerHandle {
    let set = ShardSet::load_dir(&fx.shards()).unwrap();
    spawn_server(set, "127.0.0.1:0", ServiceConfig::default()).unwrap()
}

fn retrieve_opts(fx: &Fixture, server: &str, mode: SearchMode) -> RetrieveOptions {
    RetrieveOptions {
        dataset: fx.dataset(),
        server: server.to_string(),
        mode,
        out: fx.out(),
        shards: fx.shards(),
        field_map: FieldMap::default(),
        budget: BudgetOptions::default(),
        ladder: make_ladder_config(200, 3, 50),
        jobs: 4,
        resume: false,
        tokenizer_cmd: None,
        revision_order: None,
    }
}

#[test]
fn index_builds_one_shard_per_distinct_revision() {
    let fx = build_fixture();
    let mut summary = Vec::new();
    let code = cmd_index(
        &IndexOptions {
            dataset: fx.dataset(),
            repos: fx.repos(),
            out: fx.shards(),
            field_map: FieldMap::default(),
        },
        &mut summary,
    )
    .unwrap();
    assert_eq!(code, EXIT_OK);
    let mut names: Vec<String> = fs::read_dir(fx.shards())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    // three records over two distinct dataset revisions; r3 is never a
    // dataset revision so no shard for it
    assert_eq!(names, vec!["projA__r1.shard", "projA__r2.shard"]);
    let text = String::from_utf8(summary).unwrap();
    assert!(text.contains("projA"), "summary should list the repo: {text}");
}

#[test]
fn empty_dataset_indexes_nothing_successfully() {
    let fx = build_fixture();
    fs::write(fx.dataset(), "").unwrap();
    let code = cmd_index(
        &IndexOptions {
            dataset: fx.dataset(),
            repos: fx.repos(),
            out: fx.shards(),
            field_map: FieldMap::default(),
        },
        &mut Vec::new(),
    )
    .unwrap();
    assert_eq!(code, EXIT_OK);
    assert_eq!(fs::read_dir(fx.shards()).unwrap().count(), 0);
}

#[test]
fn missing_revision_directory_is_skipped_with_nonzero_exit() {
    let fx = build_fixture();
    let mut dataset = fs::read_to_string(fx.dataset()).unwrap();
    dataset.push_str(&record("p9", "projA", "ghost", "a.py", "x", "y"));
    dataset.push('\n');
    fs::write(fx.dataset(), dataset).unwrap();

    let mut summary = Vec::new();
    let code = cmd_index(
        &IndexOptions {
            dataset: fx.dataset(),
            repos: fx.repos(),
            out: fx.shards(),
            field_map: FieldMap::default(),
        },
        &mut summary,
    )
    .unwrap();
    assert_eq!(code, EXIT_PARTIAL);
    let text = String::from_utf8(summary).unwrap();
    assert!(text.contains("skipped: projA@ghost"), "{text}");
    // the resolvable revisions were still indexed
    assert_eq!(fs::read_dir(fx.shards()).unwrap().count(), 2);
}

#[test]
fn retrieve_emits_one_line_per_record_and_is_deterministic() {
    let fx = build_fixture();
    index_fixture(&fx);
    let server = start_server(&fx);
    let url = format!("http://{}", server.addr);

    let opts = retrieve_opts(&fx, &url, SearchMode::SingleShard);
    assert_eq!(cmd_retrieve(&opts, &mut Vec::new()).unwrap(), EXIT_OK);
    let first = fs::read(fx.out()).unwrap();

    let lines: Vec<OutputLine> = String::from_utf8(first.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3, "one output line per record");
    assert_eq!(lines[0].id, "p1");
    assert!(lines[0].hit, "p1 terms are in its own revision");
    assert!(!lines[0].context.is_empty());
    assert!(lines[0].total_tokens > 0);
    assert!(!lines[1].hit, "p2 terms exist only in r3");
    assert_eq!(lines[1].context, "");
    assert_eq!(lines[2].id, "p3");

    // byte-identical on a second run
    assert_eq!(cmd_retrieve(&opts, &mut Vec::new()).unwrap(), EXIT_OK);
    let second = fs::read(fx.out()).unwrap();
    assert_eq!(first, second);

    // cross mode finds p2's terms in the sibling revision... only if
    // r3 were indexed; here it is not, so p2 stays a miss but p1 hits
    let cross = retrieve_opts(&fx, &url, SearchMode::CrossShard);
    assert_eq!(cmd_retrieve(&cross, &mut Vec::new()).unwrap(), EXIT_OK);
}

#[test]
fn unreachable_server_aborts_with_checkpoint_and_resume_completes() {
    let fx = build_fixture();
    index_fixture(&fx);

    // nothing listens on this port
    let opts = retrieve_opts(&fx, "http://127.0.0.1:9", SearchMode::SingleShard);
    let err = cmd_retrieve(&opts, &mut Vec::new()).unwrap_err();
    assert!(matches!(err, CommandError::Unreachable(_)));
    assert_eq!(err.exit_code(), 2);
    let checkpoint = fx.root.path().join("contexts.jsonl.checkpoint");
    assert!(checkpoint.exists(), "checkpoint file should exist after abort");

    // resume against a live server completes all records
    let server = start_server(&fx);
    let mut opts = retrieve_opts(&fx, &format!("http://{}", server.addr), SearchMode::SingleShard);
    opts.resume = true;
    assert_eq!(cmd_retrieve(&opts, &mut Vec::new()).unwrap(), EXIT_OK);
    let lines = fs::read_to_string(fx.out()).unwrap();
    assert_eq!(lines.lines().count(), 3);
}

#[test]
fn hitrate_reports_both_modes_and_cross_dominates() {
    let fx = build_fixture();
    // index r3 as well so cross-shard can find walk_tree_nodes
    let mut dataset = fs::read_to_string(fx.dataset()).unwrap();
    dataset.push_str(&record("p4", "projA", "r3", "src/tree.py", "def walk_tree_nodes(root):\n    return ", "\n"));
    dataset.push('\n');
    fs::write(fx.dataset(), dataset).unwrap();
    index_fixture(&fx);
    let server = start_server(&fx);

    let mut report = Vec::new();
    let code = cmd_hitrate(
        &HitrateOptions {
            dataset: fx.dataset(),
            server: format!("http://{}", server.addr),
            shards: fx.shards(),
            field_map: FieldMap::default(),
            budget: BudgetOptions::default(),
            ladder: make_ladder_config(200, 3, 50),
            jobs: 4,
            tokenizer_cmd: None,
        },
        &mut report,
    )
    .unwrap();
    assert_eq!(code, EXIT_OK);
    let text = String::from_utf8(report).unwrap();
    assert!(text.contains("single-shard"), "{text}");
    assert!(text.contains("cross-shard"), "{text}");
    assert!(text.contains(">= single-shard hits"), "{text}");
    // p2's terms live only in r3: cross must win it, single cannot
    assert!(text.contains("variant wins"), "{text}");
}

#[test]
fn revision_order_guard_filters_later_revisions() {
    let fx = build_fixture();
    index_fixture(&fx);
    // also index r3 so the un-guarded cross search can hit it
    let mut dataset = fs::read_to_string(fx.dataset()).unwrap();
    dataset.push_str(&record("p4", "projA", "r3", "src/tree.py", "x", "y"));
    dataset.push('\n');
    fs::write(fx.dataset(), dataset).unwrap();
    index_fixture(&fx);

    let order = fx.root.path().join("order.jsonl");
    fs::write(
        &order,
        concat!(
            "{\"repo\":\"projA\",\"revision\":\"r1\",\"order\":1}\n",
            "{\"repo\":\"projA\",\"revision\":\"r2\",\"order\":2}\n",
            "{\"repo\":\"projA\",\"revision\":\"r3\",\"order\":3}\n",
        ),
    )
    .unwrap();

    let server = start_server(&fx);
    let url = format!("http://{}", server.addr);

    // without the guard, p2 (at r2) finds walk_tree_nodes in r3
    let opts = retrieve_opts(&fx, &url, SearchMode::CrossShard);
    cmd_retrieve(&opts, &mut Vec::new()).unwrap();
    let lines: Vec<OutputLine> = fs::read_to_string(fx.out())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let p2 = lines.iter().find(|l| l.id == "p2").unwrap();
    assert!(p2.hit, "unguarded cross-shard should reach r3");

    // with the guard, r3 (order 3) is after r2 (order 2): p2 misses
    let mut guarded = retrieve_opts(&fx, &url, SearchMode::CrossShard);
    guarded.revision_order = Some(order);
    cmd_retrieve(&guarded, &mut Vec::new()).unwrap();
    let lines: Vec<OutputLine> = fs::read_to_string(fx.out())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let p2 = lines.iter().find(|l| l.id == "p2").unwrap();
    assert!(!p2.hit, "guard must hide later revisions");
}

#[test]
fn binary_runs_and_reports_version() {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_scs"))
        .arg("--version")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("scs"));

    // port conflict exits nonzero cleanly
    let fx = build_fixture();
    index_fixture(&fx);
    let server = start_server(&fx);
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_scs"))
        .args([
            "serve",
            "--shards",
            fx.shards().to_str().unwrap(),
            "--bind",
            &server.addr.ip().to_string(),
            "--port",
            &server.addr.port().to_string(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
