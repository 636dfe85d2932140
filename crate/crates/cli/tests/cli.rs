use std::path::PathBuf;
use std::process::{Command, Output};

fn aql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aql")).args(args).output().expect("binary runs")
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_passing_scenario() {
    let o = aql(&["run", &scenario("fk_delete_vs_insert_update_wins.aqlsim")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("ok   visible @r3 Albums/'A1'"), "{out}");
    assert!(!out.contains("FAIL"));
    assert!(stderr(&o).is_empty());
}

#[test]
fn run_machine_format() {
    let o = aql(&["run", "--format", "machine", &scenario("cascade_vs_insert_update_wins.aqlsim")]);
    assert_eq!(o.status.code(), Some(0));
    for line in stdout(&o).lines() {
        assert!(line.starts_with("{\"name\":") && line.ends_with("\"pass\":true}"), "{line}");
    }
}

#[test]
fn failed_assertion_exits_1() {
    let dir = std::env::temp_dir().join(format!("aql-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("wrong.aqlsim");
    std::fs::write(
        &path,
        "schema {\nCREATE TABLE A(Id INT PRIMARY KEY);\n}\nbegin t @r1\nstmt t: INSERT INTO A VALUES (1)\ncommit t\nassert table @r2 A = 1\n",
    )
    .unwrap();
    let o = aql(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL table @r2 A"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn check_schema() {
    let bad = aql(&["check-schema", &scenario("bad.aql")]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("ADDITIVE requires an INT column"), "{}", stderr(&bad));
    assert!(stdout(&bad).is_empty());

    let good = aql(&["check-schema", &scenario("music.aql")]);
    assert_eq!(good.status.code(), Some(0));
    assert!(stdout(&good).contains("CREATE DELETE_WINS TABLE Labels(Name VARCHAR PRIMARY KEY, City VARCHAR LWW);"));
}

#[test]
fn fuzz_is_deterministic() {
    let args = ["fuzz", "--seed", "42", "--replicas", "3", "--events", "200"];
    let a = aql(&args);
    let b = aql(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    let c = aql(&["fuzz", "--seed", "42", "--partition", "-v"]);
    assert_eq!(c.status.code(), Some(0));
    assert!(stdout(&c).contains("no lock-guarded commit on the partitioned minority"));
}

#[test]
fn dump_prints_one_replica() {
    let o = aql(&["dump", &scenario("cascade_vs_insert_update_wins.aqlsim"), "--replica", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "Artists\n  'Sam', 'UK'\nAlbums\n  'A1', 'Sam'\n");
    let missing = aql(&["dump", &scenario("cascade_vs_insert_update_wins.aqlsim"), "--replica", "7"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(aql(&[]).status.code(), Some(2));
    assert_eq!(aql(&["fuzz"]).status.code(), Some(2));
    assert_eq!(aql(&["run", "/nonexistent/x.aqlsim"]).status.code(), Some(2));
    let help = aql(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("check-schema"));
}
