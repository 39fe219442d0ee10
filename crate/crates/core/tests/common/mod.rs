#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use rusqlite::Connection;
use serde_json::{json, Value};

pub const BATTLE_DDL: &str = "CREATE TABLE battle ( id INT, name TEXT, date TEXT, bulgarian_commander TEXT, latin_commander TEXT, result TEXT, PRIMARY KEY ( id ) );\n\nCREATE TABLE death ( caused_by_ship_id INT, id INT, note TEXT, killed INT, injured INT, PRIMARY KEY ( id ), FOREIGN KEY ( caused_by_ship_id ) REFERENCES ship (id) );\n\nCREATE TABLE ship ( lost_in_battle INT, id INT, name TEXT, tonnage TEXT, ship_type TEXT, location TEXT, disposition_of_ship TEXT, PRIMARY KEY ( id ), FOREIGN KEY ( lost_in_battle ) REFERENCES battle (id) );";

pub const TONNAGE_QUESTION: &str = "What are the death and injury situations caused by the ship with tonnage 't '?";
pub const WRONG_JOIN_SQL: &str = "SELECT killed, injured FROM death WHERE caused_by_ship_id = t;";
pub const RIGHT_JOIN_SQL: &str =
    "SELECT T1.killed , T1.injured FROM death AS T1 JOIN ship AS t2 ON T1.caused_by_ship_id = T2.id WHERE T2.tonnage = 't'";

const SEED_ROWS: &str = "
INSERT INTO battle VALUES
  (1, 'Battle of Adrianople', '14 April 1205', 'Kaloyan', 'Baldwin I', 'Bulgarian victory'),
  (2, 'Battle of Serres', 'June 1205', 'Kaloyan', 'Unknown', 'Bulgarian victory'),
  (3, 'Battle of Rusion', '31 January 1206', 'Kaloyan', 'Thierry de Termond', 'Bulgarian victory'),
  (4, 'Battle of Rodosto', 'February 1206', 'Kaloyan', 'Unknown', 'Bulgarian victory'),
  (5, 'Battle of Messinopolis', '4 September 1207', 'Unknown', 'Boniface of Montferrat', 'Bulgarian victory'),
  (6, 'Battle of Boruy', 'June 1205', 'Kaloyan', 'Unknown', 'Latin victory');
INSERT INTO ship VALUES
  (1, 1, 'Lettice', 't', 'Brig', 'English Channel', 'Captured'),
  (2, 2, 'Bon Accord', 't', 'Brig', 'English Channel', 'Captured'),
  (5, 3, 'Mary', 't', 'Brig', 'English Channel', 'Captured'),
  (4, 4, 'HMS Avon', '391', 'Brig', 'English Channel', 'Wrecked'),
  (5, 5, 'Three Brothers', 't', 'Brig', 'SW Approaches', 'Scuttled'),
  (5, 6, 'Bacchus', 't', 'Brig', 'English Channel', 'Sank'),
  (3, 7, 'HMS Atalanta', '225', '8 gun Brig', 'Mid-Atlantic', 'Captured');
INSERT INTO death VALUES
  (1, 1, 'Dead', 8, 0),
  (2, 2, 'Dead', 3, 0),
  (3, 3, NULL, 0, 0),
  (1, 4, 'Injured', 0, 9),
  (4, 5, '', 2, 4),
  (7, 6, 'Killed', 14, 7),
  (6, 7, '', 4, 9),
  (5, 8, '', 0, 1);
CREATE TABLE singer ( singer_id INT, name TEXT, country TEXT, age INT, PRIMARY KEY ( singer_id ) );
INSERT INTO singer VALUES (1, 'Joe Sharp', 'Netherlands', 52), (2, 'Timbaland', 'United States', 32),
  (3, 'Justin Brown', 'France', 29), (4, 'Rose White', 'France', 41);
";

const TABLES_JSON: &str = r#"[{
    "db_id": "battle_death",
    "table_names_original": ["battle", "death", "ship"],
    "table_names": ["battle", "death", "ship"],
    "column_names_original": [[-1, "*"], [0, "id"], [0, "name"], [0, "date"], [0, "bulgarian_commander"],
        [0, "latin_commander"], [0, "result"], [1, "caused_by_ship_id"], [1, "id"], [1, "note"], [1, "killed"],
        [1, "injured"], [2, "lost_in_battle"], [2, "id"], [2, "name"], [2, "tonnage"], [2, "ship_type"],
        [2, "location"], [2, "disposition_of_ship"]],
    "column_names": [[-1, "*"], [0, "id"], [0, "name"], [0, "date"], [0, "bulgarian commander"],
        [0, "latin commander"], [0, "result"], [1, "caused by ship id"], [1, "id"], [1, "note"], [1, "killed"],
        [1, "injured"], [2, "lost in battle"], [2, "id"], [2, "name"], [2, "tonnage"], [2, "ship type"],
        [2, "location"], [2, "disposition of ship"]],
    "column_types": ["text", "number", "text", "text", "text", "text", "text", "number", "number", "text",
        "number", "number", "number", "number", "text", "text", "text", "text", "text"],
    "primary_keys": [1, 8, 13],
    "foreign_keys": [[7, 13], [12, 1]]
}]"#;

/// Creates `<dir>/battle_death/battle_death.sqlite` with seeded rows and an
/// extra `singer` table, returning the database path.
pub fn build_battle_db(db_dir: &Path) -> PathBuf {
    let path = db_dir.join("battle_death").join("battle_death.sqlite");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    let conn = Connection::open(&path).unwrap();
    conn.execute_batch(BATTLE_DDL).unwrap();
    conn.execute_batch(SEED_ROWS).unwrap();
    path
}

/// (question, gold SQL) pairs of the micro-dataset.
pub const MICRO_TASKS: [(&str, &str); 5] = [
    ("How many ships are there?", "SELECT count(*) FROM ship"),
    ("List the names of all battles.", "SELECT name FROM battle"),
    (
        TONNAGE_QUESTION,
        "SELECT T1.killed, T1.injured FROM death AS T1 JOIN ship AS T2 ON T1.caused_by_ship_id = T2.id WHERE T2.tonnage = 't'",
    ),
    ("What is the total number of people killed?", "SELECT sum(killed) FROM death"),
    ("List the ship names ordered by id.", "SELECT name FROM ship ORDER BY id"),
];

pub struct MicroDataset {
    pub dir: tempfile::TempDir,
    pub tasks_path: PathBuf,
    pub tables_path: PathBuf,
    pub db_dir: PathBuf,
}

/// Spider-layout files for the micro-dataset in a fresh temp directory.
pub fn micro_dataset() -> MicroDataset {
    let dir = tempfile::tempdir().unwrap();
    let db_dir = dir.path().join("database");
    build_battle_db(&db_dir);
    let tables_path = dir.path().join("tables.json");
    std::fs::write(&tables_path, TABLES_JSON).unwrap();
    let tasks: Vec<Value> =
        MICRO_TASKS.iter().map(|(q, gold)| json!({"db_id": "battle_death", "question": q, "query": gold})).collect();
    let tasks_path = dir.path().join("dev.json");
    std::fs::write(&tasks_path, serde_json::to_string_pretty(&tasks).unwrap()).unwrap();
    MicroDataset { dir, tasks_path, tables_path, db_dir }
}

/// Actor replies per micro task, by generation.
pub fn micro_actor_script(question: &str) -> &'static [&'static str] {
    match question {
        "How many ships are there?" => &["SELECT count(*) FROM ship"],
        "List the names of all battles." => &["SELECT name FROM battles", "SELECT name FROM battle"],
        TONNAGE_QUESTION => &[WRONG_JOIN_SQL, RIGHT_JOIN_SQL],
        "What is the total number of people killed?" => {
            &["SELECT sum(injured) FROM death", "SELECT sum(killed) FROM death"]
        }
        _ => &["```sql\nSELECT name FROM ship ORDER BY name\n```"],
    }
}

/// LLM critic reply for a candidate SQL of the micro-dataset.
pub fn micro_critic_reply(sql: &str) -> &'static str {
    match sql {
        "SELECT count(*) FROM ship" | "SELECT name FROM battles" | "SELECT name FROM battle" => "True",
        RIGHT_JOIN_SQL | "SELECT sum(killed) FROM death" => "True",
        "SELECT name FROM ship ORDER BY name" => "I am not sure.",
        _ => "False",
    }
}

/// Plays both roles of the micro-dataset from the message contents alone.
pub fn micro_llm_reply(messages: &[Value]) -> String {
    let first = messages[0]["content"].as_str().unwrap_or_default();
    if let Some(pos) = first.find(" SQL: ") {
        return micro_critic_reply(&first[pos + 6..]).to_string();
    }
    let question = first.rsplit("without explanation: ").next().unwrap_or_default();
    let script = micro_actor_script(question);
    let generation = messages.iter().filter(|m| m["role"] == "assistant").count();
    script[generation.min(script.len() - 1)].to_string()
}

pub fn completion(content: &str) -> String {
    json!({
        "id": "stub",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
    })
    .to_string()
}

#[derive(Debug, Clone)]
pub struct Recorded {
    pub path: String,
    pub body: Value,
    pub authorization: Option<String>,
}

type Handler = dyn Fn(usize, &Value) -> (u16, String) + Send + Sync;

/// Local HTTP server answering every request through `handler(n, body)`,
/// where `n` counts requests from 0.
pub struct StubServer {
    pub base_url: String,
    pub requests: Arc<Mutex<Vec<Recorded>>>,
    server: Arc<tiny_http::Server>,
    workers: Vec<JoinHandle<()>>,
}

impl StubServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(usize, &Value) -> (u16, String) + Send + Sync + 'static,
    {
        Self::start_with_threads(1, handler)
    }

    pub fn start_with_threads<F>(threads: usize, handler: F) -> Self
    where
        F: Fn(usize, &Value) -> (u16, String) + Send + Sync + 'static,
    {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let addr = server.server_addr().to_ip().unwrap();
        let requests: Arc<Mutex<Vec<Recorded>>> = Arc::default();
        let handler: Arc<Handler> = Arc::new(handler);
        let workers = (0..threads)
            .map(|_| {
                let server = Arc::clone(&server);
                let requests = Arc::clone(&requests);
                let handler = Arc::clone(&handler);
                std::thread::spawn(move || {
                    while let Ok(mut request) = server.recv() {
                        let mut raw = String::new();
                        let _ = request.as_reader().read_to_string(&mut raw);
                        let body: Value = serde_json::from_str(&raw).unwrap_or(Value::Null);
                        let authorization = request
                            .headers()
                            .iter()
                            .find(|h| h.field.equiv("Authorization"))
                            .map(|h| h.value.to_string());
                        let n = {
                            let mut log = requests.lock().unwrap();
                            log.push(Recorded { path: request.url().to_string(), body: body.clone(), authorization });
                            log.len() - 1
                        };
                        let (status, text) = handler(n, &body);
                        let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                        let response =
                            tiny_http::Response::from_string(text).with_status_code(status).with_header(header);
                        let _ = request.respond(response);
                    }
                })
            })
            .collect();
        StubServer { base_url: format!("http://{addr}/v1"), requests, server, workers }
    }

    /// Answers chat requests for the micro-dataset.
    pub fn micro() -> Self {
        Self::start_with_threads(2, |_, body| {
            let messages = body["messages"].as_array().cloned().unwrap_or_default();
            (200, completion(&micro_llm_reply(&messages)))
        })
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn recorded(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for worker in self.workers.drain(..) {
            let _ = worker.join();
        }
    }
}

/// (predicted, gold, expected EX) on the battle fixture database.
pub const EX_CASES: [(&str, &str, bool); 17] = [
    ("SELECT name FROM battle", "SELECT name FROM battle", true),
    ("SELECT singer.name FROM singer", "SELECT name FROM singer", true),
    ("SELECT name FROM battle ORDER BY id DESC", "SELECT name FROM battle ORDER BY id", false),
    ("SELECT name FROM battle ORDER BY name", "SELECT name FROM battle", true),
    ("SELECT count(id) FROM ship", "SELECT count(*) FROM ship", true),
    (
        "SELECT killed, injured FROM death WHERE caused_by_ship_id = t",
        "SELECT T1.killed, T1.injured FROM death AS T1 JOIN ship AS T2 ON T1.caused_by_ship_id = T2.id WHERE T2.tonnage = 't'",
        false,
    ),
    (
        RIGHT_JOIN_SQL,
        "SELECT T1.killed, T1.injured FROM death AS T1 JOIN ship AS T2 ON T1.caused_by_ship_id = T2.id WHERE T2.tonnage = 't'",
        true,
    ),
    ("SELECT killed FROM death", "SELECT killed, injured FROM death", false),
    ("SELECT injured, killed FROM death", "SELECT killed, injured FROM death", false),
    ("SELECT sum(killed) * 1.0 / count(*) FROM death", "SELECT avg(killed) FROM death", true),
    ("SELECT DISTINCT ship_type FROM ship", "SELECT ship_type FROM ship", false),
    ("SELECT name FROM ship WHERE tonnage = 'zzz'", "SELECT name FROM ship WHERE id < 0", true),
    ("SELECT name FROM ship ORDER BY name ASC", "SELECT name FROM ship ORDER BY name", true),
    ("SELECT NULL", "SELECT note FROM death WHERE id = 3", true),
    ("SELECT name FROM ship ORDER BY id", "SELECT name FROM ship", true),
    (
        "SELECT name FROM singer WHERE country = 'France' ORDER BY age",
        "SELECT name FROM singer WHERE country = 'France' ORDER BY age DESC",
        false,
    ),
    ("SELECT avg(age) FROM singer", "SELECT sum(age) / count(*) FROM singer", false),
];
