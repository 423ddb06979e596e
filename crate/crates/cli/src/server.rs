//! HTTP edit service for one map session.
//!
//! | method | path              | body                 | response                       |
//! |--------|-------------------|----------------------|--------------------------------|
//! | GET    | `/api/map`        |                      | grid document                  |
//! | POST   | `/api/edits`      | edit script          | `{version, warnings}`, 409 if stale |
//! | GET    | `/api/zones`      |                      | zone list                      |
//! | PUT    | `/api/zones`      | zone list            | zone list                      |
//! | POST   | `/api/pad`        | `{levels}`           | grid document                  |
//! | GET    | `/api/robot-pose` |                      | transform, 404 if unreferenced |
//!
//! The grid document on the wire is byte-for-byte what `save_grid` writes.
//! Errors are `{"error": ...}` objects.

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use cellmap_core::geom::RigidTransform;
use cellmap_core::occupancy::{
    pad, read_grid, save_grid, snap_edits, validate_zones, write_grid, EditScript, EditWarning, OccupancyGrid,
    SafetyZone,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Padding requests above this are refused; each level quadruples the cells
/// of a face.
pub const MAX_PAD_LEVELS: usize = 6;

/// On-disk session description read by `serve`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    /// Grid document, relative to the session file.
    pub grid: PathBuf,
    /// Referenced robot-to-map transform, if known.
    #[serde(default)]
    pub robot_pose: Option<RigidTransform>,
    /// Write the grid document back after every change.
    #[serde(default = "yes")]
    pub persist: bool,
}

fn yes() -> bool {
    true
}

/// In-memory map state: the grid as loaded, the applied edit log, the
/// current grid and zones, and the robot pose.
#[derive(Debug, Clone)]
pub struct MapSession {
    base: OccupancyGrid,
    log: Vec<EditScript>,
    grid: OccupancyGrid,
    zones: Vec<SafetyZone>,
    robot_pose: Option<RigidTransform>,
}

impl MapSession {
    pub fn new(grid: OccupancyGrid, zones: Vec<SafetyZone>, robot_pose: Option<RigidTransform>) -> MapSession {
        MapSession {
            base: grid.clone(),
            log: Vec::new(),
            grid,
            zones,
            robot_pose,
        }
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn zones(&self) -> &[SafetyZone] {
        &self.zones
    }

    pub fn log(&self) -> &[EditScript] {
        &self.log
    }

    pub fn document(&self) -> String {
        save_grid(&self.grid, &self.zones)
    }

    pub fn apply(&mut self, script: &EditScript) -> cellmap_core::Result<Vec<EditWarning>> {
        let (grid, warnings) = snap_edits(&self.grid, script)?;
        self.grid = grid;
        self.log.push(script.clone());
        Ok(warnings)
    }

    /// The occupied cells obtained by replaying the log over the base grid;
    /// always equal to the current occupied set.
    pub fn replay(&self) -> cellmap_core::Result<OccupancyGrid> {
        self.log
            .iter()
            .try_fold(self.base.clone(), |g, s| snap_edits(&g, s).map(|(g, _)| g))
    }
}

pub struct AppState {
    session: RwLock<MapSession>,
    persist_to: Option<PathBuf>,
}

impl AppState {
    pub fn new(session: MapSession, persist_to: Option<PathBuf>) -> Arc<AppState> {
        Arc::new(AppState {
            session: RwLock::new(session),
            persist_to,
        })
    }

    /// Loads the session file and the grid it names.
    pub fn open(session_path: &Path) -> anyhow::Result<Arc<AppState>> {
        let text = std::fs::read_to_string(session_path)
            .with_context(|| format!("reading session {}", session_path.display()))?;
        let file: SessionFile =
            serde_json::from_str(&text).with_context(|| format!("parsing session {}", session_path.display()))?;
        let grid_path = session_path.parent().unwrap_or(Path::new(".")).join(&file.grid);
        let (grid, zones) = read_grid(&grid_path)?;
        let session = MapSession::new(grid, zones, file.robot_pose);
        Ok(AppState::new(session, file.persist.then_some(grid_path)))
    }

    pub fn snapshot(&self) -> MapSession {
        self.session.read().expect("session lock").clone()
    }

    fn persist(&self, session: &MapSession) -> Result<(), ApiError> {
        if let Some(path) = &self.persist_to {
            write_grid(path, session.grid(), session.zones()).map_err(ApiError::internal)?;
        }
        Ok(())
    }
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn bad_request(msg: impl ToString) -> ApiError {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": msg.to_string() }),
        }
    }

    fn internal(msg: impl ToString) -> ApiError {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: json!({ "error": msg.to_string() }),
        }
    }

    fn conflict(msg: impl ToString, current: u64) -> ApiError {
        ApiError {
            status: StatusCode::CONFLICT,
            body: json!({ "error": msg.to_string(), "current_version": current }),
        }
    }
}

impl From<cellmap_core::Error> for ApiError {
    fn from(e: cellmap_core::Error) -> Self {
        match e {
            cellmap_core::Error::Conflict { current, .. } => ApiError::conflict(&e, current),
            cellmap_core::Error::Io { .. } => ApiError::internal(e),
            _ => ApiError::bad_request(e),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, axum::Json(self.body)).into_response()
    }
}

fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn document_response(doc: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], doc).into_response()
}

type Shared = State<Arc<AppState>>;

async fn get_map(State(state): Shared) -> Response {
    document_response(state.session.read().expect("session lock").document())
}

#[derive(Serialize)]
struct EditResponse {
    version: u64,
    warnings: Vec<EditWarning>,
}

async fn post_edits(State(state): Shared, body: Bytes) -> Result<axum::Json<EditResponse>, ApiError> {
    let script: EditScript = parse(&body)?;
    let mut session = state.session.write().expect("session lock");
    let warnings = session.apply(&script)?;
    state.persist(&session)?;
    log::info!("applied {} edits, map now at version {}", script.edits.len(), session.grid().version());
    Ok(axum::Json(EditResponse {
        version: session.grid().version(),
        warnings,
    }))
}

async fn get_zones(State(state): Shared) -> axum::Json<Vec<SafetyZone>> {
    axum::Json(state.session.read().expect("session lock").zones().to_vec())
}

async fn put_zones(State(state): Shared, body: Bytes) -> Result<axum::Json<Vec<SafetyZone>>, ApiError> {
    let zones: Vec<SafetyZone> = parse(&body)?;
    validate_zones(&zones)?;
    let mut session = state.session.write().expect("session lock");
    session.zones = zones.clone();
    state.persist(&session)?;
    Ok(axum::Json(zones))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PadRequest {
    levels: usize,
}

async fn post_pad(State(state): Shared, body: Bytes) -> Result<Response, ApiError> {
    let req: PadRequest = parse(&body)?;
    if req.levels > MAX_PAD_LEVELS {
        return Err(ApiError::bad_request(format!(
            "levels must be at most {MAX_PAD_LEVELS}, got {}",
            req.levels
        )));
    }
    let snapshot = state.session.read().expect("session lock").grid().clone();
    let version = snapshot.version();
    // Padding is the slow operation; compute it without holding the lock and
    // install it only if no edit landed meanwhile.
    let padded = tokio::task::spawn_blocking(move || pad(&snapshot, req.levels))
        .await
        .map_err(ApiError::internal)?;
    let mut session = state.session.write().expect("session lock");
    if session.grid().version() != version {
        let current = session.grid().version();
        return Err(ApiError::conflict(
            format!("map changed from version {version} to {current} while padding"),
            current,
        ));
    }
    session.grid = padded;
    state.persist(&session)?;
    Ok(document_response(session.document()))
}

async fn get_robot_pose(State(state): Shared) -> Result<axum::Json<RigidTransform>, ApiError> {
    match state.session.read().expect("session lock").robot_pose {
        Some(t) => Ok(axum::Json(t)),
        None => Err(ApiError {
            status: StatusCode::NOT_FOUND,
            body: json!({ "error": "no robot pose in this session" }),
        }),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/map", get(get_map))
        .route("/api/edits", post(post_edits))
        .route("/api/zones", get(get_zones).put(put_zones))
        .route("/api/pad", post(post_pad))
        .route("/api/robot-pose", get(get_robot_pose))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .with_context(|| format!("binding {bind}"))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use cellmap_core::geom::Point3;
    use cellmap_core::occupancy::Edit;

    #[test]
    fn log_replays_to_current_grid() {
        let grid = OccupancyGrid::with_occupied(0.05, Point3::origin(), [[0, 0, 0], [1, 0, 0]]).unwrap();
        let mut s = MapSession::new(grid, vec![], None);
        for v in 0..5u64 {
            let script = EditScript {
                version: v,
                edits: vec![
                    Edit::Add { position: [0.05 * v as f64, 0.3, 0.01] },
                    Edit::Remove { key: [v as i64 % 2, 0, 0] },
                ],
            };
            s.apply(&script).unwrap();
        }
        assert_eq!(s.log().len(), 5);
        assert_eq!(&s.replay().unwrap(), s.grid());
        let stale = EditScript { version: 1, edits: vec![] };
        assert!(matches!(s.apply(&stale), Err(cellmap_core::Error::Conflict { current: 5, .. })));
        assert_eq!(s.log().len(), 5);
    }
}
