//! The session: one dataset, its index, selection and playback state, driven
//! by a totally ordered stream of commands.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use base64::Engine;
use base64::engine::general_purpose::STANDARD as B64;
use fixedbitset::FixedBitSet;
use glam::DVec3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::animation::{PlaybackMode, PlaybackState, drop_on_selection, sphere_positions};
use crate::district::{DistrictGrid, GridSpec, QueryOptions, RibbonRef, build_grid, default_cell_size};
use crate::error::{Error, Result};
use crate::ingest::{self, Asset};
use crate::mesh::{build_mesh, encode_bundle, encode_mesh};
use crate::model::{Aabb, Dataset, PathId};
use crate::selection::{OpType, Operation, SelectionState, StrokeResult};
use crate::selector::{AnchorFrame, Color, Selector, SelectorPose, SelectorShape, ShapeKind};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Selection,
    Creation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum Command {
    LoadDataset {
        config: String,
    },
    SetSelectorShape {
        shape: ShapeKind,
    },
    SetSelectorParams {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offset: Option<DVec3>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rotation: Option<DVec3>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        width: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        size: Option<DVec3>,
    },
    SetColor {
        color: Color,
    },
    Stroke {
        poses: Vec<AnchorFrame>,
        #[serde(default)]
        deselect: bool,
    },
    PlacePersistent {
        anchor: AnchorFrame,
    },
    RemovePersistent {
        index: usize,
    },
    ActivatePersistent {
        index: usize,
        #[serde(default)]
        deselect: bool,
    },
    /// Toggles `color`, or the active color, on the operation panel.
    ToggleOpColor {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        color: Option<Color>,
    },
    /// Sets the operation type, or toggles it when absent.
    SetOpType {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        op_type: Option<OpType>,
    },
    /// Executes the panel operation. Given fields overwrite the panel first.
    ExecuteOp {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        op_type: Option<OpType>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        colors: Option<Vec<Color>>,
    },
    Invert,
    Reset,
    ClearGroup {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        color: Option<Color>,
    },
    SetPlayback {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        enabled: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mode: Option<PlaybackMode>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clock: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        speed: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sphere_radius: Option<f64>,
    },
    DropSpheres {
        anchor: AnchorFrame,
    },
    SetMode {
        mode: Mode,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::LoadDataset { .. } => "LoadDataset",
            Command::SetSelectorShape { .. } => "SetSelectorShape",
            Command::SetSelectorParams { .. } => "SetSelectorParams",
            Command::SetColor { .. } => "SetColor",
            Command::Stroke { .. } => "Stroke",
            Command::PlacePersistent { .. } => "PlacePersistent",
            Command::RemovePersistent { .. } => "RemovePersistent",
            Command::ActivatePersistent { .. } => "ActivatePersistent",
            Command::ToggleOpColor { .. } => "ToggleOpColor",
            Command::SetOpType { .. } => "SetOpType",
            Command::ExecuteOp { .. } => "ExecuteOp",
            Command::Invert => "Invert",
            Command::Reset => "Reset",
            Command::ClearGroup { .. } => "ClearGroup",
            Command::SetPlayback { .. } => "SetPlayback",
            Command::DropSpheres { .. } => "DropSpheres",
            Command::SetMode { .. } => "SetMode",
        }
    }
}

/// A bit set over path ids: `len` bits packed little-endian (bit `i` is bit
/// `i % 8` of byte `i / 8`), base64 encoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitSet {
    pub len: usize,
    pub bits: String,
}

impl BitSet {
    pub fn from_fixed(set: &FixedBitSet) -> Self {
        let mut bytes = vec![0u8; set.len().div_ceil(8)];
        for i in set.ones() {
            bytes[i / 8] |= 1 << (i % 8);
        }
        BitSet { len: set.len(), bits: B64.encode(bytes) }
    }

    pub fn to_fixed(&self) -> Result<FixedBitSet> {
        let bytes = B64.decode(&self.bits).map_err(|e| Error::Load(format!("bit set: {e}")))?;
        if bytes.len() != self.len.div_ceil(8) {
            return Err(Error::Load(format!("bit set: {} bytes for {} bits", bytes.len(), self.len)));
        }
        let mut set = FixedBitSet::with_capacity(self.len);
        for i in 0..self.len {
            if bytes[i / 8] >> (i % 8) & 1 == 1 {
                set.insert(i);
            }
        }
        Ok(set)
    }

    pub fn ids(&self) -> Result<Vec<PathId>> {
        Ok(self.to_fixed()?.ones().map(|i| i as PathId).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PaintRecord {
    pub path_id: PathId,
    pub index: u32,
    pub color: Color,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpherePosition {
    pub path_id: PathId,
    pub position: [f32; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub paths: usize,
    pub atoms: usize,
    pub ribbons: usize,
    pub attribute_schema: Vec<String>,
    pub bounds: Option<Aabb>,
    pub grid: GridSpec,
    pub base_colors: Vec<[u8; 3]>,
    pub assets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub protocol: u32,
    pub revision: u64,
    pub dataset: Option<DatasetInfo>,
    pub visible_count: usize,
    pub visible: BitSet,
    pub groups: BTreeMap<Color, BitSet>,
    pub paint: Vec<PaintRecord>,
    pub spheres: Vec<SpherePosition>,
    pub playback: PlaybackState,
    pub mode: Mode,
    pub active_color: Color,
    pub operation: Operation,
    /// Hand-held selectors, one per color, in color order.
    pub selectors: Vec<Selector>,
    pub persistent: Vec<Selector>,
}

impl Snapshot {
    /// Canonical serialisation used for comparisons and exports.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serialises")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrokeSummary {
    pub ribbons: usize,
    pub paths: usize,
}

/// What a command changed. Fields left out did not change.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Event {
    pub revision: u64,
    pub command: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub noop: bool,
    pub visible_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stroke: Option<StrokeSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible: Option<BitSet>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub groups: BTreeMap<Color, BitSet>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paint_added: Vec<PaintRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paint_removed: Vec<RibbonRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spheres: Option<Vec<SpherePosition>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub playback: Option<PlaybackState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_color: Option<Color>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operation: Option<Operation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selectors: Option<Vec<Selector>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persistent: Option<Vec<Selector>>,
    /// Sent instead of a delta when the dataset is replaced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<Box<Snapshot>>,
}

impl Event {
    /// Applies this delta to `base`, producing the snapshot it describes.
    pub fn apply_to(&self, base: &Snapshot) -> Snapshot {
        if let Some(s) = &self.snapshot {
            return (**s).clone();
        }
        let mut s = base.clone();
        s.revision = self.revision;
        s.visible_count = self.visible_count;
        if let Some(v) = &self.visible {
            s.visible = v.clone();
        }
        for (c, g) in &self.groups {
            s.groups.insert(*c, g.clone());
        }
        if !self.paint_added.is_empty() || !self.paint_removed.is_empty() {
            let mut paint: BTreeMap<RibbonRef, Color> =
                s.paint.iter().map(|p| (RibbonRef { path_id: p.path_id, index: p.index }, p.color)).collect();
            for r in &self.paint_removed {
                paint.remove(r);
            }
            for p in &self.paint_added {
                paint.insert(RibbonRef { path_id: p.path_id, index: p.index }, p.color);
            }
            s.paint = paint_records(&paint);
        }
        if let Some(v) = &self.spheres {
            s.spheres = v.clone();
        }
        if let Some(v) = &self.playback {
            s.playback = v.clone();
        }
        if let Some(v) = self.mode {
            s.mode = v;
        }
        if let Some(v) = self.active_color {
            s.active_color = v;
        }
        if let Some(v) = &self.operation {
            s.operation = v.clone();
        }
        if let Some(v) = &self.selectors {
            s.selectors = v.clone();
        }
        if let Some(v) = &self.persistent {
            s.persistent = v.clone();
        }
        s
    }
}

fn paint_records(paint: &BTreeMap<RibbonRef, Color>) -> Vec<PaintRecord> {
    paint.iter().map(|(r, &color)| PaintRecord { path_id: r.path_id, index: r.index, color }).collect()
}

fn diff(prev: &Snapshot, next: &Snapshot, command: &str) -> Event {
    let mut ev = Event { revision: next.revision, command: command.to_string(), visible_count: next.visible_count, ..Default::default() };
    if prev.dataset != next.dataset {
        ev.snapshot = Some(Box::new(next.clone()));
        return ev;
    }
    if prev.visible != next.visible {
        ev.visible = Some(next.visible.clone());
    }
    for (c, g) in &next.groups {
        if prev.groups.get(c) != Some(g) {
            ev.groups.insert(*c, g.clone());
        }
    }
    let (mut i, mut j) = (0, 0);
    let (a, b) = (&prev.paint, &next.paint);
    while i < a.len() || j < b.len() {
        let ka = a.get(i).map(|p| (p.path_id, p.index));
        let kb = b.get(j).map(|p| (p.path_id, p.index));
        match (ka, kb) {
            (Some(x), Some(y)) if x == y => {
                if a[i].color != b[j].color {
                    ev.paint_added.push(b[j]);
                }
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                ev.paint_removed.push(RibbonRef { path_id: x.0, index: x.1 });
                i += 1;
            }
            (Some(x), None) => {
                ev.paint_removed.push(RibbonRef { path_id: x.0, index: x.1 });
                i += 1;
            }
            _ => {
                ev.paint_added.push(b[j]);
                j += 1;
            }
        }
    }
    if prev.spheres != next.spheres {
        ev.spheres = Some(next.spheres.clone());
    }
    if prev.playback != next.playback {
        ev.playback = Some(next.playback.clone());
    }
    if prev.mode != next.mode {
        ev.mode = Some(next.mode);
    }
    if prev.active_color != next.active_color {
        ev.active_color = Some(next.active_color);
    }
    if prev.operation != next.operation {
        ev.operation = Some(next.operation.clone());
    }
    if prev.selectors != next.selectors {
        ev.selectors = Some(next.selectors.clone());
    }
    if prev.persistent != next.persistent {
        ev.persistent = Some(next.persistent.clone());
    }
    ev
}

/// One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub timestamp_ms: u64,
    pub revision: u64,
    pub command: Command,
}

/// Append-only JSON-lines command log, flushed after every entry.
pub struct CommandLog {
    out: BufWriter<File>,
}

impl CommandLog {
    pub fn create(path: &FsPath) -> Result<Self> {
        let file = OpenOptions::new().create(true).truncate(true).write(true).open(path)?;
        Ok(CommandLog { out: BufWriter::new(file) })
    }

    fn record(&mut self, revision: u64, command: &Command) -> Result<()> {
        let timestamp_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
        let entry = LogEntry { timestamp_ms, revision, command: command.clone() };
        serde_json::to_writer(&mut self.out, &entry)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

struct Loaded {
    dataset: Arc<Dataset>,
    grid: Arc<DistrictGrid>,
    assets: Arc<Vec<Asset>>,
}

pub struct Session {
    loaded: Option<Loaded>,
    selection: SelectionState,
    playback: PlaybackState,
    selectors: Vec<Selector>,
    active_color: Color,
    mode: Mode,
    operation: Operation,
    paint: BTreeMap<RibbonRef, Color>,
    revision: u64,
    options: QueryOptions,
    log: Option<CommandLog>,
    current: Snapshot,
}

impl Default for Session {
    fn default() -> Self {
        Session::new()
    }
}

impl Session {
    /// A session without a dataset.
    pub fn new() -> Self {
        let mut s = Session {
            loaded: None,
            selection: SelectionState::new(0),
            playback: PlaybackState::default(),
            selectors: Color::ALL.iter().map(|&c| Selector::sphere(0.5, c)).collect(),
            active_color: Color::Red,
            mode: Mode::Selection,
            operation: Operation::default(),
            paint: BTreeMap::new(),
            revision: 0,
            options: QueryOptions::default(),
            log: None,
            current: placeholder_snapshot(),
        };
        s.current = s.build_snapshot();
        s
    }

    /// A session with `config` loaded at revision 0.
    pub fn open(config: &FsPath) -> Result<Self> {
        let mut s = Session::new();
        s.install(ingest::load_file(config)?);
        s.current = s.build_snapshot();
        Ok(s)
    }

    pub fn with_dataset(dataset: Dataset, cell_size: Option<DVec3>) -> Self {
        let mut s = Session::new();
        let cell = cell_size.unwrap_or_else(|| default_cell_size(&dataset));
        s.install_parts(dataset, cell, Vec::new());
        s.current = s.build_snapshot();
        s
    }

    pub fn set_log(&mut self, log: CommandLog) {
        self.log = Some(log);
    }

    pub fn set_query_options(&mut self, options: QueryOptions) {
        self.options = options;
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn dataset(&self) -> Option<&Arc<Dataset>> {
        self.loaded.as_ref().map(|l| &l.dataset)
    }

    pub fn grid(&self) -> Option<&Arc<DistrictGrid>> {
        self.loaded.as_ref().map(|l| &l.grid)
    }

    pub fn selection(&self) -> &SelectionState {
        &self.selection
    }

    pub fn snapshot(&self) -> Snapshot {
        self.current.clone()
    }

    pub fn assets(&self) -> &[Asset] {
        self.loaded.as_ref().map_or(&[], |l| l.assets.as_slice())
    }

    pub fn asset(&self, name: &str) -> Option<&Asset> {
        self.assets().iter().find(|a| a.name == name)
    }

    /// Encoded mesh of one path.
    pub fn mesh_blob(&self, id: PathId) -> Result<Vec<u8>> {
        let ds = self.dataset().ok_or(Error::NoDataset)?;
        let path = ds.path(id).ok_or(Error::OutOfRange { index: id as usize, len: ds.path_count() })?;
        Ok(encode_mesh(&build_mesh(path)))
    }

    /// Bundle of the meshes of all visible paths, in path order.
    pub fn visible_mesh_bundle(&self) -> Result<Vec<u8>> {
        let ds = self.dataset().ok_or(Error::NoDataset)?;
        let ids = self.selection.visible_ids();
        let meshes: Vec<_> = ids.par_iter().map(|&id| build_mesh(&ds.paths[id as usize])).collect();
        Ok(encode_bundle(&meshes))
    }

    fn install(&mut self, loaded: ingest::LoadedDataset) {
        let cell = loaded
            .config
            .grid
            .cell_size
            .map(DVec3::from)
            .unwrap_or_else(|| default_cell_size(&loaded.dataset));
        self.install_parts(loaded.dataset, cell, loaded.assets);
    }

    fn install_parts(&mut self, dataset: Dataset, cell: DVec3, assets: Vec<Asset>) {
        let grid = build_grid(&dataset, cell);
        let persistent = std::mem::take(&mut self.selection.persistent);
        self.selection = SelectionState::new(dataset.path_count());
        self.selection.persistent = persistent;
        self.paint.clear();
        self.playback.drop_offsets.clear();
        if self.playback.mode == PlaybackMode::Drop {
            self.playback.mode = PlaybackMode::Index;
        }
        self.loaded = Some(Loaded { dataset: Arc::new(dataset), grid: Arc::new(grid), assets: Arc::new(assets) });
    }

    fn loaded(&self) -> Result<(Arc<Dataset>, Arc<DistrictGrid>)> {
        self.loaded.as_ref().map(|l| (l.dataset.clone(), l.grid.clone())).ok_or(Error::NoDataset)
    }

    fn build_snapshot(&self) -> Snapshot {
        let dataset = self.loaded.as_ref().map(|l| DatasetInfo {
            paths: l.dataset.path_count(),
            atoms: l.dataset.total_atoms,
            ribbons: l.dataset.ribbon_count(),
            attribute_schema: l.dataset.attribute_schema.clone(),
            bounds: l.dataset.bounds,
            grid: l.grid.spec,
            base_colors: l.dataset.paths.iter().map(|p| p.base_color).collect(),
            assets: l.assets.iter().map(|a| a.name.clone()).collect(),
        });
        let spheres = match &self.loaded {
            Some(l) if self.playback.enabled => sphere_positions(&l.dataset, &self.playback, self.selection.visible())
                .into_iter()
                .map(|(path_id, p)| SpherePosition { path_id, position: p.to_array() })
                .collect(),
            _ => Vec::new(),
        };
        Snapshot {
            protocol: PROTOCOL_VERSION,
            revision: self.revision,
            dataset,
            visible_count: self.selection.visible().count_ones(..),
            visible: BitSet::from_fixed(self.selection.visible()),
            groups: Color::ALL.iter().map(|&c| (c, BitSet::from_fixed(self.selection.group(c)))).collect(),
            paint: paint_records(&self.paint),
            spheres,
            playback: self.playback.clone(),
            mode: self.mode,
            active_color: self.active_color,
            operation: self.operation.clone(),
            selectors: self.selectors.clone(),
            persistent: self.selection.persistent.clone(),
        }
    }

    /// Applies one command. On error the session is unchanged. A stroke
    /// with no poses is a no-op and keeps the revision.
    pub fn apply(&mut self, command: Command) -> Result<Event> {
        let command = normalize(command)?;
        if matches!(&command, Command::Stroke { poses, .. } if poses.is_empty()) {
            return Ok(Event {
                revision: self.revision,
                command: command.name().into(),
                noop: true,
                visible_count: self.current.visible_count,
                ..Default::default()
            });
        }
        let stroke = self.execute(&command)?;
        self.revision += 1;
        let next = self.build_snapshot();
        let mut event = diff(&self.current, &next, command.name());
        event.stroke = stroke;
        self.current = next;
        if let Some(log) = &mut self.log {
            log.record(self.revision, &command)?;
        }
        Ok(event)
    }

    fn active(&self) -> &Selector {
        &self.selectors[self.active_color.index()]
    }

    fn record_paint(&mut self, result: &StrokeResult, color: Color, deselect: bool) {
        for r in &result.touched {
            if deselect {
                if self.paint.get(r) == Some(&color) {
                    self.paint.remove(r);
                }
            } else {
                self.paint.insert(*r, color);
            }
        }
    }

    fn execute(&mut self, command: &Command) -> Result<Option<StrokeSummary>> {
        let summary = |r: &StrokeResult| Some(StrokeSummary { ribbons: r.touched.len(), paths: r.paths.len() });
        match command {
            Command::LoadDataset { config } => {
                let loaded = ingest::load_file(FsPath::new(config))?;
                self.install(loaded);
            }
            Command::SetSelectorShape { shape } => {
                let i = self.active_color.index();
                if self.selectors[i].shape.kind() != *shape {
                    self.selectors[i].set_shape(SelectorShape::default_for(*shape));
                }
            }
            Command::SetSelectorParams { offset, rotation, radius, width, size } => {
                let mut sel = self.active().clone();
                let mut pose: SelectorPose = sel.pose();
                if let Some(o) = offset {
                    pose.offset = *o;
                }
                if let Some(r) = rotation {
                    pose.rotation = *r;
                }
                if !(pose.offset.is_finite() && pose.rotation.is_finite()) {
                    return Err(Error::InvalidParameter("offset and rotation must be finite".into()));
                }
                let mut shape = sel.shape;
                match &mut shape {
                    SelectorShape::Sphere { radius: r } => {
                        reject_field(*width, "width", "sphere")?;
                        reject_field(*size, "size", "sphere")?;
                        if let Some(v) = radius {
                            *r = *v;
                        }
                    }
                    SelectorShape::Cylinder { radius: r, width: w } => {
                        reject_field(*size, "size", "cylinder")?;
                        if let Some(v) = radius {
                            *r = *v;
                        }
                        if let Some(v) = width {
                            *w = *v;
                        }
                    }
                    SelectorShape::Cuboid { size: s } => {
                        reject_field(*radius, "radius", "cuboid")?;
                        reject_field(*width, "width", "cuboid")?;
                        if let Some(v) = size {
                            *s = *v;
                        }
                    }
                }
                shape.validate()?;
                sel.set_shape(shape);
                sel.set_pose(pose);
                self.selectors[self.active_color.index()] = sel;
            }
            Command::SetColor { color } => self.active_color = *color,
            Command::Stroke { poses, deselect } => {
                let (_, grid) = self.loaded()?;
                let sel = self.active().clone();
                let result = self.selection.apply_stroke(&sel, poses, &grid, self.options, *deselect);
                self.record_paint(&result, sel.color, *deselect);
                return Ok(summary(&result));
            }
            Command::PlacePersistent { anchor } => {
                let sel = self.active().clone();
                self.selection.place_persistent(&sel, *anchor);
            }
            Command::RemovePersistent { index } => {
                self.selection.remove_persistent(*index)?;
            }
            Command::ActivatePersistent { index, deselect } => {
                let (_, grid) = self.loaded()?;
                let result = self.selection.activate_persistent(*index, &grid, self.options, *deselect)?;
                let color = self.selection.persistent[*index].color;
                self.record_paint(&result, color, *deselect);
                return Ok(summary(&result));
            }
            Command::ToggleOpColor { color } => {
                let c = color.unwrap_or(self.active_color);
                self.operation.toggle_color(c);
            }
            Command::SetOpType { op_type } => {
                self.operation.op_type = op_type.unwrap_or(self.operation.op_type.toggled());
            }
            Command::ExecuteOp { op_type, colors } => {
                self.loaded()?;
                let mut op = self.operation.clone();
                if let Some(t) = op_type {
                    op.op_type = *t;
                }
                if let Some(cs) = colors {
                    op.colors = cs.iter().copied().collect();
                }
                self.selection.execute(&op)?;
                self.operation = op;
            }
            Command::Invert => {
                self.loaded()?;
                self.selection.invert();
            }
            Command::Reset => {
                self.loaded()?;
                self.selection.reset_visibility();
            }
            Command::ClearGroup { color } => {
                let c = color.unwrap_or(self.active_color);
                self.selection.clear_group(c);
                self.paint.retain(|_, v| *v != c);
            }
            Command::SetPlayback { enabled, mode, clock, speed, sphere_radius } => {
                let finite = |v: &Option<f64>| v.is_none_or(f64::is_finite);
                if !(finite(clock) && finite(speed) && finite(sphere_radius)) {
                    return Err(Error::InvalidParameter("playback values must be finite".into()));
                }
                if clock.is_some_and(|c| c < 0.0) || speed.is_some_and(|s| s < 0.0) || sphere_radius.is_some_and(|r| r <= 0.0) {
                    return Err(Error::InvalidParameter("clock and speed must be >= 0, sphere_radius > 0".into()));
                }
                if *mode == Some(PlaybackMode::Drop) && self.playback.drop_offsets.is_empty() {
                    return Err(Error::InvalidOperation("drop mode needs a prior DropSpheres".into()));
                }
                let p = &mut self.playback;
                if let Some(v) = enabled {
                    p.enabled = *v;
                }
                if let Some(v) = mode {
                    p.mode = *v;
                }
                if let Some(v) = clock {
                    p.clock = *v;
                }
                if let Some(v) = speed {
                    p.speed = *v;
                }
                if let Some(v) = sphere_radius {
                    p.sphere_radius = *v;
                }
            }
            Command::DropSpheres { anchor } => {
                let (_, grid) = self.loaded()?;
                let shape = self.active().resolve(*anchor);
                drop_on_selection(&grid, &mut self.playback, &shape, self.selection.visible(), self.options);
                self.playback.enabled = true;
            }
            Command::SetMode { mode } => self.mode = *mode,
        }
        Ok(None)
    }
}

fn reject_field<T>(v: Option<T>, field: &str, shape: &str) -> Result<()> {
    match v {
        Some(_) => Err(Error::InvalidParameter(format!("`{field}` does not apply to a {shape}"))),
        None => Ok(()),
    }
}

/// Makes a command self-contained for logging: dataset paths become absolute.
fn normalize(command: Command) -> Result<Command> {
    match command {
        Command::LoadDataset { config } => {
            let path = PathBuf::from(&config);
            let abs = path.canonicalize().map_err(|e| Error::Load(format!("config {config}: {e}")))?;
            Ok(Command::LoadDataset { config: abs.to_string_lossy().into_owned() })
        }
        other => Ok(other),
    }
}

fn placeholder_snapshot() -> Snapshot {
    Snapshot {
        protocol: PROTOCOL_VERSION,
        revision: 0,
        dataset: None,
        visible_count: 0,
        visible: BitSet { len: 0, bits: String::new() },
        groups: BTreeMap::new(),
        paint: Vec::new(),
        spheres: Vec::new(),
        playback: PlaybackState::default(),
        mode: Mode::Selection,
        active_color: Color::Red,
        operation: Operation::default(),
        selectors: Vec::new(),
        persistent: Vec::new(),
    }
}

pub fn read_log<R: BufRead>(input: R) -> Result<Vec<LogEntry>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry = serde_json::from_str(&line)
            .map_err(|e| Error::Script { line: i + 1, message: format!("bad log entry: {e}") })?;
        out.push(entry);
    }
    Ok(out)
}

/// Rebuilds a session by applying logged commands in order on top of the
/// optional initial configuration, checking each recorded revision.
pub fn replay(initial_config: Option<&FsPath>, entries: &[LogEntry]) -> Result<Session> {
    let mut session = match initial_config {
        Some(c) => Session::open(c)?,
        None => Session::new(),
    };
    for (i, entry) in entries.iter().enumerate() {
        let ev = session.apply(entry.command.clone())?;
        if ev.revision != entry.revision {
            return Err(Error::Script {
                line: i + 1,
                message: format!("replay reached revision {} where the log recorded {}", ev.revision, entry.revision),
            });
        }
    }
    Ok(session)
}
