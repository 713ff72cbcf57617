//! A small inventory service with planted defects, used as ground truth
//! for end-to-end tests. It runs in-process through [`DemoService`] or on
//! a port through [`serve`].
//!
//! `POST /reset` restores the initial state and `GET /openapi.json`
//! returns the service's schema. Neither is part of the schema itself.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::http::{HttpRequest, HttpResponse, Server};
use crate::oracle::{CheckKind, DefectKey};
use crate::transport::Service;

const OPENAPI: &str = include_str!("openapi.json");
const MANIFEST: &str = include_str!("defects.json");

/// Values above this overflow the "storage layer".
const INT32_MAX: i64 = 2_147_483_647;
const SLOW: Duration = Duration::from_millis(1500);
const BASKET_CAPACITY_LIMIT: i64 = 100;

/// The service's OpenAPI document.
pub fn openapi() -> &'static str {
    OPENAPI
}

/// One planted defect and the key a correct run reports for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeededDefect {
    pub id: String,
    pub trigger: String,
    pub expected_check_kind: CheckKind,
    pub expected_operation: String,
    pub key: DefectKey,
    /// Part of the set that recall is measured on.
    pub recall: bool,
}

#[derive(Deserialize)]
struct Manifest {
    defects: Vec<SeededDefect>,
}

/// The ground-truth list of planted defects.
pub fn manifest() -> Vec<SeededDefect> {
    serde_json::from_str::<Manifest>(MANIFEST)
        .map(|m| m.defects)
        .unwrap_or_default()
}

#[derive(Debug, Clone)]
struct Item {
    id: u64,
    name: String,
    quantity: i64,
    deleted: bool,
}

impl Item {
    fn to_json(&self) -> Value {
        json!({"id": self.id, "name": self.name, "quantity": self.quantity})
    }
}

#[derive(Debug, Clone)]
struct State {
    items: BTreeMap<u64, Item>,
    next_id: u64,
    baskets: BTreeMap<String, i64>,
}

impl State {
    fn initial() -> Self {
        let items = [("widget", 12), ("gadget", 3), ("gizmo", 0)]
            .iter()
            .enumerate()
            .map(|(i, (name, quantity))| {
                let id = i as u64 + 1;
                (
                    id,
                    Item {
                        id,
                        name: name.to_string(),
                        quantity: *quantity,
                        deleted: false,
                    },
                )
            })
            .collect();
        State {
            items,
            next_id: 4,
            baskets: BTreeMap::new(),
        }
    }
}

/// The demo service.
#[derive(Debug)]
pub struct DemoService {
    state: Mutex<State>,
}

impl Default for DemoService {
    fn default() -> Self {
        DemoService {
            state: Mutex::new(State::initial()),
        }
    }
}

fn error(status: u16, message: &str) -> HttpResponse {
    HttpResponse::json(status, &json!({"error": message}))
}

fn decode_segment(s: &str) -> String {
    percent_encoding::percent_decode_str(s).decode_utf8_lossy().into_owned()
}

fn parse_id(s: &str) -> Option<u64> {
    let s = decode_segment(s);
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok().filter(|&n| n >= 1)
}

impl DemoService {
    pub fn new() -> Self {
        Self::default()
    }

    fn state(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn route(&self, req: &HttpRequest) -> HttpResponse {
        let path = req.path();
        let segments: Vec<&str> = path.trim_start_matches('/').split('/').collect();
        let method = req.method.as_str();
        match (method, segments.as_slice()) {
            ("GET", ["openapi.json"]) => HttpResponse::new(200).with_body("application/json", OPENAPI),
            ("POST", ["reset"]) => {
                *self.state() = State::initial();
                HttpResponse::new(204)
            }
            ("GET", ["health"]) => HttpResponse::json(200, &json!({"status": "ok"})),
            // Planted: 200 with no body.
            ("GET", ["ping"]) => HttpResponse::new(200),
            ("GET", ["items"]) => self.list_items(req),
            ("POST", ["items"]) => self.create_item(req),
            // Planted: 405 without an Allow header.
            ("PUT", ["items"]) => HttpResponse::new(405),
            ("GET", ["items", id]) => self.get_item(id),
            ("DELETE", ["items", id]) => self.delete_item(id),
            ("GET", ["search"]) => self.search(req),
            ("GET", ["slow"]) => {
                // Planted: slow.
                let mut r = HttpResponse::json(200, &json!({"status": "ok"}));
                r.elapsed = SLOW;
                r
            }
            ("GET", ["export"]) => self.export(),
            ("POST", ["baskets"]) => self.create_basket(req),
            ("GET", ["baskets", id]) => {
                let id = decode_segment(id);
                match self.state().baskets.get(&id) {
                    Some(c) => HttpResponse::json(200, &json!({"id": id, "capacity": c})),
                    None => error(404, "no such basket"),
                }
            }
            (_, segs) => {
                let allow = match segs {
                    ["items"] => Some("GET, POST, PUT"),
                    ["items", _] => Some("GET, DELETE"),
                    ["baskets"] | ["reset"] => Some("POST"),
                    ["baskets", _] | ["health"] | ["ping"] | ["search"] | ["slow"] | ["export"] | ["openapi.json"] => {
                        Some("GET")
                    }
                    _ => None,
                };
                match allow {
                    Some(a) => HttpResponse::new(405).with_header("Allow", a),
                    None => HttpResponse::new(404).with_body("text/plain", "no route"),
                }
            }
        }
    }

    fn list_items(&self, req: &HttpRequest) -> HttpResponse {
        let mut limit = 100usize;
        if let Some((_, v)) = req.query_pairs().into_iter().find(|(k, _)| k == "limit") {
            match v.parse::<usize>() {
                Ok(n) if (1..=100).contains(&n) && v.bytes().all(|b| b.is_ascii_digit()) => limit = n,
                _ => return error(400, "limit must be an integer between 1 and 100"),
            }
        }
        let st = self.state();
        let items: Vec<Value> = st
            .items
            .values()
            .filter(|i| !i.deleted)
            .take(limit)
            .map(Item::to_json)
            .collect();
        // Planted: count is serialised as a string.
        let count = items.len().to_string();
        HttpResponse::json(200, &json!({"items": items, "count": count}))
    }

    fn create_item(&self, req: &HttpRequest) -> HttpResponse {
        let Ok(Value::Object(body)) = serde_json::from_slice::<Value>(&req.body) else {
            return error(400, "body must be a JSON object");
        };
        // Planted: no validation beyond "is an object".
        let name = body.get("name").and_then(Value::as_str).unwrap_or("item").to_string();
        let quantity = match body.get("quantity") {
            Some(Value::Number(n)) => {
                // Planted: the column is 32 bits wide.
                let too_big = match n.as_i64() {
                    Some(q) => q > INT32_MAX,
                    None => n.as_u64().is_some() || n.as_f64().is_some_and(|f| f > INT32_MAX as f64),
                };
                if too_big {
                    return error(500, "integer overflow in quantity column");
                }
                n.as_i64().unwrap_or_else(|| n.as_f64().unwrap_or(0.0) as i64).max(0)
            }
            _ => 0,
        };
        let mut st = self.state();
        let id = st.next_id;
        st.next_id += 1;
        let item = Item {
            id,
            name,
            quantity,
            deleted: false,
        };
        let out = item.to_json();
        st.items.insert(id, item);
        HttpResponse::json(201, &out)
    }

    fn get_item(&self, id: &str) -> HttpResponse {
        // Planted: deleted items are still served.
        match parse_id(id).and_then(|id| self.state().items.get(&id).cloned()) {
            Some(item) => HttpResponse::json(200, &item.to_json()),
            None => error(404, "no such item"),
        }
    }

    fn delete_item(&self, id: &str) -> HttpResponse {
        let Some(id) = parse_id(id) else {
            return HttpResponse::new(404);
        };
        if let Some(item) = self.state().items.get_mut(&id) {
            item.deleted = true;
        }
        // Planted: 204 with a body.
        HttpResponse::new(204).with_body("text/plain", "deleted")
    }

    fn search(&self, req: &HttpRequest) -> HttpResponse {
        let q = req.query_pairs().into_iter().find(|(k, _)| k == "q").map(|(_, v)| v);
        let q = match q {
            Some(q) if !q.is_empty() && q.chars().count() <= 32 => q,
            _ => return error(400, "q must be 1 to 32 characters"),
        };
        let st = self.state();
        let hits: Vec<Value> = st
            .items
            .values()
            .filter(|i| !i.deleted && i.name.contains(&q))
            .map(Item::to_json)
            .collect();
        // Planted: X-Total-Count is declared required but never sent.
        HttpResponse::json(200, &Value::Array(hits))
    }

    fn export(&self) -> HttpResponse {
        // Planted: a tiny request gets a large answer.
        let rows: Vec<Value> = (0..500)
            .map(|i| Value::String(format!("row {i:04} {}", "-".repeat(64))))
            .collect();
        HttpResponse::json(200, &Value::Array(rows))
    }

    fn create_basket(&self, req: &HttpRequest) -> HttpResponse {
        let Ok(Value::Object(body)) = serde_json::from_slice::<Value>(&req.body) else {
            return error(400, "body must be a JSON object");
        };
        if body.keys().any(|k| k != "id" && k != "capacity") {
            return error(400, "unknown field");
        }
        let id = match body.get("id").and_then(Value::as_str) {
            Some(s) if (1..=8).contains(&s.len()) && s.bytes().all(|b| b.is_ascii_lowercase()) => s.to_string(),
            _ => return error(400, "id must be 1 to 8 lowercase letters"),
        };
        let capacity = match body.get("capacity") {
            Some(Value::Number(n)) => n
                .as_i64()
                .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0 && f.abs() < 1e15).map(|f| f as i64)),
            _ => None,
        };
        let Some(capacity) = capacity.filter(|c| (1..=1000).contains(c)) else {
            return error(400, "capacity must be an integer between 1 and 1000");
        };
        let mut st = self.state();
        if st.baskets.contains_key(&id) {
            return error(409, "basket exists");
        }
        // Planted: stored before the limit check.
        st.baskets.insert(id.clone(), capacity);
        if capacity > BASKET_CAPACITY_LIMIT {
            return error(422, "capacity above limit");
        }
        HttpResponse::json(201, &json!({"id": id, "capacity": capacity}))
    }
}

impl Service for DemoService {
    fn handle(&self, req: &HttpRequest) -> HttpResponse {
        self.route(req)
    }

    fn reset(&self) {
        *self.state() = State::initial();
    }
}

/// Serves a fresh demo service on `addr` (port 0 picks a free port).
pub fn serve(addr: &str) -> std::io::Result<Server> {
    let service = Arc::new(DemoService::new());
    Server::start(addr, Arc::new(move |req: &HttpRequest| service.handle(req)))
}
