use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn trendgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trendgp"))
        .args(args)
        .env_remove("TRENDGP_COVID_URL")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {line}"))
}

fn fit(out: &Path, extra: &[&str]) -> Output {
    let input = fixture("synthetic_series.csv");
    let mut args = vec!["fit", "-i", input.to_str().unwrap(), "-o", out.to_str().unwrap(), "--grid", "60", "--restarts", "4"];
    args.extend_from_slice(extra);
    trendgp(&args)
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn repeated_fits_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let extra = ["--interval", "2005:2015", "--seed", "7"];
    stdout(&fit(&a, &extra));
    stdout(&fit(&b, &extra));
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    assert!(ta.iter().any(|(name, _)| name == "report.json"));
    assert_eq!(ta, tb);
}

#[test]
fn reports_validate_against_the_schema() {
    let schema: serde_json::Value = serde_json::from_str(&stdout(&trendgp(&["schema"]))).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let ml = tmp.path().join("ml");
    stdout(&fit(&ml, &["--interval", "2000:2024", "--crosspoint", "2010:2020"]));
    let bayes = tmp.path().join("bayes");
    stdout(&fit(&bayes, &["--estimator", "bayes", "--chains", "2", "--iters", "1000", "--max-draws", "50"]));
    for dir in [ml, bayes] {
        let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", dir.display());
        for f in report["files"].as_array().unwrap() {
            assert!(dir.join(f.as_str().unwrap()).is_file(), "{f}");
        }
    }
}

#[test]
fn ingested_data_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    stdout(&fit(&out, &[]));
    let copy = out.join("data.csv");
    let again = tmp.path().join("r2");
    let o = trendgp(&["fit", "-i", copy.to_str().unwrap(), "-o", again.to_str().unwrap(), "--grid", "60", "--restarts", "4"]);
    stdout(&o);
    assert_eq!(fs::read(&copy).unwrap(), fs::read(again.join("data.csv")).unwrap());
}

#[test]
fn tdi_is_one_half_on_symmetric_data() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("sym.csv");
    fs::write(&input, "t,y\n-2,0.4\n-1,-0.3\n0,1.0\n1,-0.3\n2,0.4\n").unwrap();
    let text = stdout(&trendgp(&[
        "tdi", "-i", input.to_str().unwrap(), "--model", "zero:se", "--fixed", "alpha=1,rho=0.8,sigma=0.2", "--at", "0",
    ]));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,delta,tdi"));
    let v: f64 = lines.next().unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((v - 0.5).abs() < 1e-12, "{v}");
}

#[test]
fn empty_interval_has_zero_eti() {
    let input = fixture("synthetic_series.csv");
    let text = stdout(&trendgp(&["eti", "-i", input.to_str().unwrap(), "--restarts", "2", "--interval", "2010:2010"]));
    assert_eq!(text.lines().nth(1), Some("2010,2010,0"));
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "t,y\n0,1\n1,oops\n").unwrap();
    let o = trendgp(&["tdi", "-i", bad.to_str().unwrap(), "--at", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "parse");

    let out = tmp.path().join("m32");
    let o = fit(&out, &["--model", "constant:m32", "--interval", "2001:2003"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(error_json(&o)["assumption"].is_string());

    let o = trendgp(&["fetch-covid", "-o", tmp.path().join("c.csv").to_str().unwrap(), "--url", "http://127.0.0.1:9/none.csv"]);
    assert_eq!(o.status.code(), Some(5));

    let o = trendgp(&[
        "fetch-covid", "-o", tmp.path().join("d.csv").to_str().unwrap(), "--offline",
        fixture("covid_ita_missing_column.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(6));
    assert_eq!(error_json(&o)["column"], "nuovi_positivi");

    let o = trendgp(&["tdi", "-i", tmp.path().join("absent.csv").to_str().unwrap(), "--at", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn covid_fixture_is_normalized() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("covid.csv");
    stdout(&trendgp(&["fetch-covid", "-o", out.to_str().unwrap(), "--offline", fixture("covid_ita_2020.csv").to_str().unwrap()]));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,y");
    assert_eq!(lines.len() - 1, 90);
    assert!(lines[1].starts_with("2020-02-24,"));
    let prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("covid.csv.provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["rows"], 90);
    assert_eq!(prov["first_date"], "2020-02-24");
    assert_eq!(prov["offline"], true);
}

#[test]
fn simulate_writes_two_rows_per_scenario() {
    let text = stdout(&trendgp(&["simulate", "--n", "15,20", "--sigma", "0.1", "--reps", "1", "--grid", "31", "--restarts", "2"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("n,sigma,reps"));
    let o = trendgp(&["simulate", "--sigma", "-0.1", "--reps", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
