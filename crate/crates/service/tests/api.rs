mod common;

use std::collections::BTreeSet;

use axum::http::StatusCode;
use common::*;
use serde_json::Value;
use subtab_core::fixtures::FLIGHTS_EXAMPLE_CSV;
use subtab_service::ServiceConfig;

const FIXTURE: &[u8] = FLIGHTS_EXAMPLE_CSV.as_bytes();

async fn ready_fixture(app: &axum::Router) -> String {
    let id = upload_ok(app, FIXTURE).await;
    let job = preprocess(app, &id, FIXTURE_PREPROCESS).await;
    assert_eq!(job["status"], "succeeded", "{job}");
    id
}

#[tokio::test]
async fn upload_reports_size_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (s, v) = upload(&app, FIXTURE).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!((v["n"].as_u64(), v["m"].as_u64()), (Some(8), Some(5)));
    assert_eq!(v["status"], "loaded");
    assert_eq!(v["schema"]["columns"][0]["name"], "CANCELLED");

    let again = upload_ok(&app, FIXTURE).await;
    assert_ne!(again, v["tableId"].as_str().unwrap());
    let (s, info) = get(&app, &format!("/tables/{again}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(info["status"], "loaded");
}

#[tokio::test]
async fn bad_uploads() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (s, v) = upload(&app, b"").await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");

    let (s, v) = upload(&app, b"a,b\n1,2\n3\n").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "parse");
    assert_eq!(v["line"], 3);

    let req = axum::http::Request::post("/tables").body(axum::body::Body::from("a,b\n1,2\n")).unwrap();
    let (s, _) = send(&app, req).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let small = app_with(ServiceConfig { max_upload_bytes: 1024, ..ServiceConfig::new(dir.path()) });
    let (s, v) = upload(&small, &numeric_csv(500, 4)).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE, "{v}");
}

#[tokio::test]
async fn upload_options_choose_the_dialect() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let req = axum::http::Request::post("/tables")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(axum::body::Body::from(multipart(b"1;x\n2;y\n", Some(r#"{"delimiter": ";", "hasHeader": false}"#))))
        .unwrap();
    let (s, v) = send(&app, req).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!((v["n"].as_u64(), v["m"].as_u64()), (Some(2), Some(2)));
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    assert_eq!(get(&app, "/tables/nope").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/jobs/nope").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/tables/nope/rules").await.0, StatusCode::NOT_FOUND);
    assert_eq!(post_json(&app, "/tables/nope/preprocess", "{}").await.0, StatusCode::NOT_FOUND);
    assert_eq!(post_json(&app, "/tables/nope/subtable", r#"{"k":1,"l":1}"#).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn preprocess_validation() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = upload_ok(&app, FIXTURE).await;
    let uri = format!("/tables/{id}/preprocess");
    let (s, v) = post_json(&app, &uri, r#"{"bins": 0}"#).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert_eq!(post_json(&app, &uri, r#"{"bins": "#).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(post_json(&app, &uri, r#"{"binz": 3}"#).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, v) = post_json(&app, &uri, r#"{"ruleParams": {"mode": "per-target", "targets": ["NOPE"]}}"#).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    // nothing started
    assert_eq!(get(&app, &format!("/tables/{id}")).await.1["status"], "loaded");
}

#[tokio::test]
async fn preprocess_reports_phases_and_becomes_ready() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = upload_ok(&app, FIXTURE).await;
    let job = preprocess(&app, &id, FIXTURE_PREPROCESS).await;
    assert_eq!(job["status"], "succeeded");
    assert_eq!(job["cacheHit"], false);
    let phases: Vec<&str> = job["completedPhases"].as_array().unwrap().iter().map(|p| p.as_str().unwrap()).collect();
    assert_eq!(phases, ["normalize", "bin", "corpus", "embed", "mine"]);
    let (_, info) = get(&app, &format!("/tables/{id}")).await;
    assert_eq!(info["status"], "ready");
    assert_eq!(info["jobId"], job["jobId"]);

    // same content and settings on another upload: served from the cache
    let other = upload_ok(&app, FIXTURE).await;
    let job = preprocess(&app, &other, FIXTURE_PREPROCESS).await;
    assert_eq!(job["cacheHit"], true);
}

#[tokio::test]
async fn second_preprocess_while_running_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = upload_ok(&app, &numeric_csv(20_000, 8)).await;
    let uri = format!("/tables/{id}/preprocess");
    let (s, first) = post_json(&app, &uri, r#"{"ruleParams": {"enabled": false}}"#).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let (s, v) = post_json(&app, &uri, "{}").await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
    assert_eq!(get(&app, &format!("/tables/{id}")).await.1["status"], "preprocessing");
    let (s, v) = post_json(&app, &format!("/tables/{id}/subtable"), r#"{"k":3,"l":3}"#).await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
    let done = wait_job(&app, first["jobId"].as_str().unwrap()).await;
    assert_eq!(done["status"], "succeeded");
    // without rules, rule-based methods and the rules page are unavailable
    assert_eq!(get(&app, &format!("/tables/{id}/rules")).await.0, StatusCode::NOT_FOUND);
    let (s, _) = post_json(&app, &format!("/tables/{id}/subtable"), r#"{"k":3,"l":3,"method":"random","iterations":5}"#).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, v) = post_json(&app, &format!("/tables/{id}/subtable"), r#"{"k":3,"l":3}"#).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert!(v.get("score").is_none());
}

#[tokio::test]
async fn failed_preprocessing_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    // one distinct value per column leaves nothing to embed
    let id = upload_ok(&app, b"a,b\n1,x\n1,x\n").await;
    let job = preprocess(&app, &id, r#"{"dim": 4, "epochs": 1}"#).await;
    if job["status"] == "failed" {
        assert!(job["error"].as_str().is_some_and(|e| !e.is_empty()));
        let (_, info) = get(&app, &format!("/tables/{id}")).await;
        assert_eq!(info["status"], "failed");
        assert_eq!(info["error"], job["error"]);
    } else {
        assert_eq!(job["status"], "succeeded");
    }
}

#[tokio::test]
async fn rules_are_paged_by_support() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = ready_fixture(&app).await;
    let (s, v) = get(&app, &format!("/tables/{id}/rules?limit=100")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["total"], 21);
    let rules = v["rules"].as_array().unwrap();
    assert_eq!(rules.len(), 21);
    let keys: Vec<(f64, f64)> = rules.iter().map(|r| (r["support"].as_f64().unwrap(), r["confidence"].as_f64().unwrap())).collect();
    assert!(keys.windows(2).all(|w| w[0].0 > w[1].0 || (w[0].0 == w[1].0 && w[0].1 >= w[1].1)));
    for r in rules {
        assert_eq!(r["consequent"][0]["col"], "CANCELLED");
    }

    let (_, one) = get(&app, &format!("/tables/{id}/rules?limit=1")).await;
    assert_eq!(one["rules"].as_array().unwrap().len(), 1);
    assert_eq!(one["rules"][0]["support"], rules[0]["support"]);
    let (_, past) = get(&app, &format!("/tables/{id}/rules?offset=500")).await;
    assert_eq!(past["rules"], Value::Array(vec![]));
    assert_eq!(get(&app, &format!("/tables/{id}/rules?limit=abc")).await.0, StatusCode::BAD_REQUEST);
}

fn row_ids(v: &Value) -> BTreeSet<u64> {
    v["rows"].as_array().unwrap().iter().map(|r| r["rowId"].as_u64().unwrap()).collect()
}

fn columns(v: &Value) -> BTreeSet<String> {
    v["columns"].as_array().unwrap().iter().map(|c| c.as_str().unwrap().to_string()).collect()
}

#[tokio::test]
async fn greedy_finds_the_optimal_fixture_subtable() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = ready_fixture(&app).await;
    let uri = format!("/tables/{id}/subtable");
    let (s, v) = post_json(&app, &uri, r#"{"k":3,"l":4,"targets":["CANCELLED"],"method":"greedy"}"#).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    // rows 1, 5 and 7 counting from one
    assert_eq!(row_ids(&v), BTreeSet::from([0, 4, 6]));
    let want: BTreeSet<String> = ["CANCELLED", "DEP._TIME", "YEAR", "DISTANCE"].iter().map(|s| s.to_string()).collect();
    assert_eq!(columns(&v), want);
    let combined = v["score"]["combined"].as_f64().unwrap();
    assert!((combined - 0.80).abs() <= 0.01, "{combined}");
}

#[tokio::test]
async fn highlights_and_clamping() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = ready_fixture(&app).await;
    let uri = format!("/tables/{id}/subtable");
    let (s, v) = post_json(&app, &uri, r#"{"k":4,"l":4,"highlight":true}"#).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let hl = v["highlights"].as_array().unwrap();
    let rows: BTreeSet<u64> = hl.iter().map(|h| h["rowId"].as_u64().unwrap()).collect();
    assert_eq!(rows.len(), hl.len(), "one highlight per row at most");
    assert!(rows.is_subset(&row_ids(&v)));

    let (s, v) = post_json(&app, &uri, r#"{"k":10,"l":10}"#).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((v["rows"].as_array().unwrap().len(), v["columns"].as_array().unwrap().len()), (8, 5));
    assert_eq!(v["warnings"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn queries_restrict_the_rows() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = ready_fixture(&app).await;
    let uri = format!("/tables/{id}/subtable");
    let body = r#"{"k":3,"l":3,"highlight":true,"query":{"predicates":[{"column":"CANCELLED","op":"=","value":1}]}}"#;
    let (s, v) = post_json(&app, &uri, body).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert!(row_ids(&v).iter().all(|&r| r < 4));
    for method in ["random", "naive", "mab", "embedding"] {
        let body = format!(r#"{{"k":2,"l":3,"method":"{method}","iterations":20,"query":{{"predicates":[{{"column":"YEAR","op":"=","value":2015}}]}}}}"#);
        let (s, v) = post_json(&app, &uri, &body).await;
        assert_eq!(s, StatusCode::OK, "{method}: {v}");
        assert!(!row_ids(&v).contains(&4), "{method}");
    }
}

#[tokio::test]
async fn subtable_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = upload_ok(&app, FIXTURE).await;
    let uri = format!("/tables/{id}/subtable");
    // not preprocessed: only naive works
    assert_eq!(post_json(&app, &uri, r#"{"k":3,"l":3}"#).await.0, StatusCode::CONFLICT);
    assert_eq!(post_json(&app, &uri, r#"{"k":3,"l":3,"method":"greedy"}"#).await.0, StatusCode::CONFLICT);
    let (s, v) = post_json(&app, &uri, r#"{"k":3,"l":3,"method":"naive"}"#).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);

    let id = ready_fixture(&app).await;
    let uri = format!("/tables/{id}/subtable");
    let cases = [
        (r#"{"k":0,"l":3}"#, StatusCode::UNPROCESSABLE_ENTITY),
        (r#"{"k":3,"l":1,"targets":["CANCELLED","YEAR"]}"#, StatusCode::UNPROCESSABLE_ENTITY),
        (r#"{"k":3,"l":3,"targets":["NOPE"]}"#, StatusCode::UNPROCESSABLE_ENTITY),
        (r#"{"k":3,"l":3,"method":"bogus"}"#, StatusCode::UNPROCESSABLE_ENTITY),
        (r#"{"k":3,"l":3,"query":{"predicates":[{"column":"NOPE","op":"=","value":1}]}}"#, StatusCode::BAD_REQUEST),
        (r#"{"k":3,"l":3,"query":{"predicates":[{"column":"CANCELLED","op":"=","value":7}]}}"#, StatusCode::UNPROCESSABLE_ENTITY),
        (r#"{"k":3,"#, StatusCode::BAD_REQUEST),
    ];
    for (body, want) in cases {
        let (s, v) = post_json(&app, &uri, body).await;
        assert_eq!(s, want, "{body}: {v}");
        assert!(v["message"].is_string(), "{v}");
    }
}

#[tokio::test]
async fn greedy_guard_trips_with_422() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = upload_ok(&app, &numeric_csv(300, 40)).await;
    let job = preprocess(&app, &id, r#"{"dim": 8, "epochs": 1, "ruleParams": {"support": 0.3}}"#).await;
    assert_eq!(job["status"], "succeeded", "{job}");
    let (s, v) = post_json(&app, &format!("/tables/{id}/subtable"), r#"{"k":3,"l":20,"method":"greedy"}"#).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
}

#[tokio::test]
async fn repeated_preprocessing_writes_identical_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut dirs = Vec::new();
    for d in [&a, &b] {
        let app = app(d.path());
        let id = upload_ok(&app, FIXTURE).await;
        let job = preprocess(&app, &id, FIXTURE_PREPROCESS).await;
        assert_eq!(job["status"], "succeeded");
        let root = d.path().join(subtab_service::ARTIFACTS_DIR);
        let entry = std::fs::read_dir(&root).unwrap().next().unwrap().unwrap();
        dirs.push(entry.path());
    }
    assert_eq!(dirs[0].file_name(), dirs[1].file_name(), "same cache key");
    let mut files: Vec<_> = std::fs::read_dir(&dirs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert!(files.len() >= 4);
    for f in files {
        let x = std::fs::read(dirs[0].join(&f)).unwrap();
        let y = std::fs::read(dirs[1].join(&f)).unwrap();
        assert!(x == y, "{f:?} differs");
    }
}

#[tokio::test]
async fn state_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let app = app(dir.path());
        ready_fixture(&app).await
    };
    let app = app(dir.path());
    let (s, info) = get(&app, &format!("/tables/{id}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(info["status"], "ready");
    let (s, v) = post_json(&app, &format!("/tables/{id}/subtable"), r#"{"k":3,"l":4,"targets":["CANCELLED"],"method":"greedy"}"#).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(row_ids(&v), BTreeSet::from([0, 4, 6]));
    assert_eq!(get(&app, &format!("/tables/{id}/rules")).await.1["total"], 21);
}
