//! Dataset loading: JSON configuration, the `TRJ1` binary trajectory file,
//! a CSV importer, and the sampling steps applied at load time.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path as FsPath, PathBuf};

use glam::Vec3;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Path};

pub const TRJ_MAGIC: &[u8; 4] = b"TRJ1";
pub const TRJ_VERSION: u32 = 1;
/// Written little-endian, so the file bytes read `04 03 02 01`.
pub const ENDIAN_MARKER: u32 = 0x0102_0304;
const HEADER_BYTES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(rename = "type", default = "default_attr_type")]
    pub ty: String,
}

fn default_attr_type() -> String {
    "f32".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisMap {
    pub x: String,
    pub y: String,
    pub z: String,
}

impl Default for AxisMap {
    fn default() -> Self {
        AxisMap { x: "x".into(), y: "y".into(), z: "z".into() }
    }
}

/// `"random"`, an attribute name, or a fixed `[r, g, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColorMap {
    Fixed([u8; 3]),
    Named(String),
}

impl Default for ColorMap {
    fn default() -> Self {
        ColorMap::Named("random".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sampling {
    pub atom_stride: usize,
    pub path_fraction: f64,
    pub path_seed: u64,
    /// Inclusive window on the time attribute, or on the atom index when
    /// the dataset has no time attribute.
    pub instant_range: Option<[f64; 2]>,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling { atom_stride: 1, path_fraction: 1.0, path_seed: 0, instant_range: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextAssets {
    pub background_image: Option<String>,
    pub background_mesh: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub cell_size: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Binary,
    Csv,
}

/// The `.json` dataset description. Relative paths resolve against the
/// directory holding the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub data_path: String,
    #[serde(default)]
    pub format: Option<DataFormat>,
    #[serde(default)]
    pub attributes: Vec<AttributeSpec>,
    #[serde(default)]
    pub axis_map: AxisMap,
    #[serde(default)]
    pub color_map: ColorMap,
    #[serde(default = "unit_scale")]
    pub scale: [f32; 3],
    #[serde(default)]
    pub time_attribute: Option<String>,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub context: ContextAssets,
    #[serde(default)]
    pub grid: GridConfig,
}

fn unit_scale() -> [f32; 3] {
    [1.0; 3]
}

impl DatasetConfig {
    pub fn new(data_path: impl Into<String>) -> Self {
        DatasetConfig {
            data_path: data_path.into(),
            format: None,
            attributes: Vec::new(),
            axis_map: AxisMap::default(),
            color_map: ColorMap::default(),
            scale: unit_scale(),
            time_attribute: None,
            sampling: Sampling::default(),
            context: ContextAssets::default(),
            grid: GridConfig::default(),
        }
    }

    pub fn from_file(path: &FsPath) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Load(format!("{}: {e}", path.display())))
    }

    fn schema(&self) -> Vec<String> {
        self.attributes.iter().map(|a| a.name.clone()).collect()
    }

    /// Column of a name within an atom record (`x`, `y`, `z`, then attributes).
    fn column(&self, name: &str, field: &str) -> Result<usize> {
        match name {
            "x" => Ok(0),
            "y" => Ok(1),
            "z" => Ok(2),
            _ => self
                .attributes
                .iter()
                .position(|a| a.name == name)
                .map(|i| i + 3)
                .ok_or_else(|| Error::Load(format!("{field}: unknown attribute `{name}`"))),
        }
    }

    fn validate(&self) -> Result<()> {
        for a in &self.attributes {
            if a.ty != "f32" {
                return Err(Error::Load(format!("attributes.{}: unsupported type `{}`", a.name, a.ty)));
            }
            if matches!(a.name.as_str(), "x" | "y" | "z" | "path_id") {
                return Err(Error::Load(format!("attributes: `{}` is a reserved column name", a.name)));
            }
        }
        if self.sampling.atom_stride < 1 {
            return Err(Error::Load("sampling.atom_stride: must be >= 1".into()));
        }
        let f = self.sampling.path_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Load(format!("sampling.path_fraction: {f} not in (0, 1]")));
        }
        if self.scale.iter().any(|s| !s.is_finite()) {
            return Err(Error::Load("scale: components must be finite".into()));
        }
        Ok(())
    }
}

/// Raw records as stored on disk: per path, rows of `x y z attr...`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTrajectories {
    pub attribute_count: usize,
    pub paths: Vec<Vec<f32>>,
}

impl RawTrajectories {
    fn stride(&self) -> usize {
        3 + self.attribute_count
    }

    pub fn atom_count(&self, path: usize) -> usize {
        self.paths[path].len() / self.stride()
    }
}

pub fn write_binary<W: Write>(mut out: W, raw: &RawTrajectories) -> Result<()> {
    out.write_all(TRJ_MAGIC)?;
    for v in [TRJ_VERSION, ENDIAN_MARKER, raw.paths.len() as u32, raw.attribute_count as u32] {
        out.write_all(&v.to_le_bytes())?;
    }
    let stride = raw.stride();
    for rows in &raw.paths {
        out.write_all(&((rows.len() / stride) as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(rows.len() * 4);
        for v in rows {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<RawTrajectories> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode_binary(&bytes)
}

fn le_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Load(format!("truncated file: {what} at byte {at}")))
}

pub fn decode_binary(bytes: &[u8]) -> Result<RawTrajectories> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Load(format!("truncated header: {} bytes", bytes.len())));
    }
    if &bytes[..4] != TRJ_MAGIC {
        return Err(Error::Load(format!("header.magic: expected \"TRJ1\", found {:?}", &bytes[..4])));
    }
    let version = le_u32(bytes, 4, "header.version")?;
    if version != TRJ_VERSION {
        return Err(Error::Load(format!("header.version: unsupported version {version}")));
    }
    let marker = le_u32(bytes, 8, "header.endianness")?;
    if marker != ENDIAN_MARKER {
        return Err(Error::Load(format!("header.endianness: bad marker {marker:#010x}")));
    }
    let path_count = le_u32(bytes, 12, "header.path_count")? as usize;
    let attribute_count = le_u32(bytes, 16, "header.attribute_count")? as usize;
    let stride = 3 + attribute_count;
    let mut pos = HEADER_BYTES;
    let mut paths = Vec::with_capacity(path_count.min(bytes.len() / 4));
    for p in 0..path_count {
        let atoms = le_u32(bytes, pos, &format!("path {p} atom_count"))? as usize;
        pos += 4;
        let len = atoms
            .checked_mul(stride * 4)
            .filter(|&n| pos + n <= bytes.len())
            .ok_or_else(|| Error::Load(format!("truncated file: path {p} declares {atoms} atoms")))?;
        let rows = bytes[pos..pos + len]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        pos += len;
        paths.push(rows);
    }
    if pos != bytes.len() {
        return Err(Error::Load(format!("{} trailing bytes after {path_count} paths", bytes.len() - pos)));
    }
    Ok(RawTrajectories { attribute_count, paths })
}

/// CSV with a header row holding `path_id`, `x`, `y`, `z` and one column per
/// schema attribute. Rows of one path keep file order; paths are ordered by
/// first appearance.
pub fn read_csv<R: Read>(input: R, schema: &[String]) -> Result<RawTrajectories> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(|e| Error::Load(format!("csv header: {e}")))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Load(format!("csv header: missing column `{name}`")))
    };
    let id_col = find("path_id")?;
    let mut cols = vec![find("x")?, find("y")?, find("z")?];
    for name in schema {
        cols.push(find(name)?);
    }
    let mut order: Vec<String> = Vec::new();
    let mut index = std::collections::HashMap::new();
    let mut paths: Vec<Vec<f32>> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| Error::Load(format!("csv line {line}: {e}")))?;
        let id = record.get(id_col).unwrap_or_default().to_string();
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            paths.push(Vec::new());
            paths.len() - 1
        });
        for &c in &cols {
            let field = record.get(c).unwrap_or_default();
            let v: f32 = field
                .parse()
                .map_err(|_| Error::Load(format!("csv line {line}: column `{}` value `{field}` is not a number", &headers[c])))?;
            paths[slot].push(v);
        }
    }
    Ok(RawTrajectories { attribute_count: schema.len(), paths })
}

/// Keeps atoms `0, k, 2k, ...` of each path plus its final atom.
pub fn decimate(dataset: &Dataset, stride: usize) -> Dataset {
    let k = stride.max(1);
    let paths = dataset
        .paths
        .iter()
        .map(|p| {
            if k == 1 || p.len() <= 1 {
                return p.clone();
            }
            let mut keep: Vec<usize> = (0..p.len()).step_by(k).collect();
            if keep.last() != Some(&(p.len() - 1)) {
                keep.push(p.len() - 1);
            }
            p.retain_indices(&keep)
        })
        .collect();
    Dataset::new(paths, dataset.attribute_schema.clone())
}

/// Number of paths kept out of `n` for `fraction`: the ceiling of the
/// product, ignoring binary round-off of the fraction itself.
pub fn subsample_count(n: usize, fraction: f64) -> usize {
    let exact = fraction * n as f64;
    let count = (exact - exact * 1e-12).ceil() as usize;
    count.clamp(usize::from(n > 0), n)
}

/// Seeded choice of paths without replacement; original order is kept.
pub fn subsample_paths(dataset: &Dataset, fraction: f64, seed: u64) -> Dataset {
    let n = dataset.path_count();
    let k = subsample_count(n, fraction);
    if k == n {
        return dataset.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    Dataset::new(chosen.into_iter().map(|i| dataset.paths[i].clone()).collect(), dataset.attribute_schema.clone())
}

/// Crops every path to atoms whose time (or index, without times) lies in
/// `[lo, hi]`, dropping paths left empty.
pub fn crop_instants(dataset: &Dataset, range: [f64; 2]) -> Dataset {
    let [lo, hi] = range;
    let paths = dataset
        .paths
        .iter()
        .map(|p| {
            let keep: Vec<usize> = (0..p.len())
                .filter(|&i| {
                    let t = p.times.as_ref().map_or(i as f64, |t| t[i] as f64);
                    t >= lo && t <= hi
                })
                .collect();
            p.retain_indices(&keep)
        })
        .filter(|p| !p.is_empty())
        .collect();
    Dataset::new(paths, dataset.attribute_schema.clone())
}

/// Bytes of a background asset, passed to viewers untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct Asset {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub config: DatasetConfig,
    pub assets: Vec<Asset>,
}

pub fn load_file(config_path: &FsPath) -> Result<LoadedDataset> {
    let config = DatasetConfig::from_file(config_path)?;
    let base = config_path.parent().map(FsPath::to_path_buf).unwrap_or_default();
    load(&config, &base)
}

fn resolve(base: &FsPath, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() { p } else { base.join(p) }
}

pub fn load(config: &DatasetConfig, base_dir: &FsPath) -> Result<LoadedDataset> {
    config.validate()?;
    let schema = config.schema();
    let data_path = resolve(base_dir, &config.data_path);
    let format = config.format.unwrap_or_else(|| {
        if data_path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            DataFormat::Csv
        } else {
            DataFormat::Binary
        }
    });
    let file = fs::File::open(&data_path).map_err(|e| Error::Load(format!("data_path {}: {e}", data_path.display())))?;
    let raw = match format {
        DataFormat::Binary => read_binary(std::io::BufReader::new(file))?,
        DataFormat::Csv => read_csv(file, &schema)?,
    };
    if raw.attribute_count != schema.len() {
        return Err(Error::Load(format!(
            "attributes: file has {} attribute columns, config declares {}",
            raw.attribute_count,
            schema.len()
        )));
    }
    let dataset = shape_dataset(config, &raw)?;

    let mut assets = Vec::new();
    for (name, path) in [("background_image", &config.context.background_image), ("background_mesh", &config.context.background_mesh)] {
        if let Some(p) = path {
            let full = resolve(base_dir, p);
            let bytes = fs::read(&full).map_err(|e| Error::Load(format!("context.{name} {}: {e}", full.display())))?;
            assets.push(Asset { name: name.to_string(), bytes });
        }
    }
    Ok(LoadedDataset { dataset, config: config.clone(), assets })
}

/// Applies axis mapping, scaling, time extraction, sampling and coloring.
pub fn shape_dataset(config: &DatasetConfig, raw: &RawTrajectories) -> Result<Dataset> {
    config.validate()?;
    let axes = [
        config.column(&config.axis_map.x, "axis_map.x")?,
        config.column(&config.axis_map.y, "axis_map.y")?,
        config.column(&config.axis_map.z, "axis_map.z")?,
    ];
    let time_col = config.time_attribute.as_deref().map(|t| config.column(t, "time_attribute")).transpose()?;
    let stride = raw.stride();
    let scale = Vec3::from(config.scale);
    let mut paths = Vec::with_capacity(raw.paths.len());
    for (pi, rows) in raw.paths.iter().enumerate() {
        let n = rows.len() / stride;
        let mut path = Path::new(pi as u32, Vec::with_capacity(n));
        path.attribute_count = raw.attribute_count;
        path.attributes.reserve(n * raw.attribute_count);
        let mut times = time_col.map(|_| Vec::with_capacity(n));
        for (ai, row) in rows.chunks_exact(stride).enumerate() {
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                let column = if c < 3 { ["x", "y", "z"][c].to_string() } else { config.attributes[c - 3].name.clone() };
                return Err(Error::Load(format!("path {pi} atom {ai}: `{column}` is not finite ({})", row[c])));
            }
            path.positions.push(Vec3::new(row[axes[0]], row[axes[1]], row[axes[2]]) * scale);
            path.attributes.extend_from_slice(&row[3..]);
            if let (Some(t), Some(c)) = (times.as_mut(), time_col) {
                t.push(row[c]);
            }
        }
        path.times = times;
        if !path.is_empty() {
            paths.push(path);
        }
    }
    let mut dataset = Dataset::new(paths, config.schema());
    if let Some(range) = config.sampling.instant_range {
        dataset = crop_instants(&dataset, range);
    }
    if config.sampling.path_fraction < 1.0 {
        dataset = subsample_paths(&dataset, config.sampling.path_fraction, config.sampling.path_seed);
    }
    if config.sampling.atom_stride > 1 {
        dataset = decimate(&dataset, config.sampling.atom_stride);
    }
    assign_colors(&mut dataset, &config.color_map, config.sampling.path_seed)?;
    Ok(dataset)
}

fn assign_colors(dataset: &mut Dataset, map: &ColorMap, seed: u64) -> Result<()> {
    match map {
        ColorMap::Fixed(rgb) => dataset.paths.iter_mut().for_each(|p| p.base_color = *rgb),
        ColorMap::Named(name) if name == "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0105);
            for p in &mut dataset.paths {
                p.base_color = [rng.random_range(64..=255), rng.random_range(64..=255), rng.random_range(64..=255)];
            }
        }
        ColorMap::Named(name) => {
            let col = dataset
                .attribute_schema
                .iter()
                .position(|a| a == name)
                .ok_or_else(|| Error::Load(format!("color_map: unknown attribute `{name}`")))?;
            let means: Vec<f64> = dataset
                .paths
                .iter()
                .map(|p| (0..p.len()).map(|i| p.atom_attributes(i)[col] as f64).sum::<f64>() / p.len().max(1) as f64)
                .collect();
            let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (p, m) in dataset.paths.iter_mut().zip(means) {
                let t = if hi > lo { (m - lo) / (hi - lo) } else { 0.5 };
                // blue (low) to red (high)
                p.base_color = [(255.0 * t).round() as u8, 64, (255.0 * (1.0 - t)).round() as u8];
            }
        }
    }
    Ok(())
}

/// Serialises a dataset's positions and attributes in the binary layout.
pub fn to_raw(dataset: &Dataset) -> RawTrajectories {
    let k = dataset.attribute_schema.len();
    RawTrajectories {
        attribute_count: k,
        paths: dataset
            .paths
            .iter()
            .map(|p| {
                let mut rows = Vec::with_capacity(p.len() * (3 + k));
                for i in 0..p.len() {
                    rows.extend_from_slice(&p.positions[i].to_array());
                    rows.extend_from_slice(p.atom_attributes(i));
                }
                rows
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_two_paths() -> RawTrajectories {
        // attributes: time, player_load
        RawTrajectories {
            attribute_count: 2,
            paths: vec![
                vec![0.0, 1.0, 2.0, 0.0, 7.5, 1.0, 1.0, 2.0, 1.0, 8.5],
                vec![5.0, 5.0, 5.0, 0.0, 1.0],
            ],
        }
    }

    fn config() -> DatasetConfig {
        let mut c = DatasetConfig::new("unused.trj");
        c.attributes = vec![
            AttributeSpec { name: "time".into(), ty: "f32".into() },
            AttributeSpec { name: "player_load".into(), ty: "f32".into() },
        ];
        c.color_map = ColorMap::Fixed([1, 2, 3]);
        c
    }

    #[test]
    fn axis_remap_uses_attribute() {
        let mut c = config();
        c.axis_map.z = "player_load".into();
        c.scale = [1.0, 1.0, 0.5];
        let ds = shape_dataset(&c, &raw_two_paths()).unwrap();
        assert_eq!(ds.paths[0].positions[0], Vec3::new(0.0, 1.0, 3.75));
        assert_eq!(ds.paths[0].positions[1], Vec3::new(1.0, 1.0, 4.25));
    }

    #[test]
    fn identity_mapping_is_bit_exact() {
        let ds = shape_dataset(&config(), &raw_two_paths()).unwrap();
        assert_eq!(ds.paths[0].positions[1].to_array().map(f32::to_bits), [1.0f32, 1.0, 2.0].map(f32::to_bits));
        assert_eq!(ds.total_atoms, 3);
        assert_eq!(ds.paths[1].base_color, [1, 2, 3]);
    }

    #[test]
    fn unknown_attribute_named_in_error() {
        let mut c = config();
        c.axis_map.y = "speed".into();
        let err = shape_dataset(&c, &raw_two_paths()).unwrap_err().to_string();
        assert!(err.contains("axis_map.y") && err.contains("speed"), "{err}");
    }

    #[test]
    fn non_finite_value_located() {
        let mut raw = raw_two_paths();
        raw.paths[0][9] = f32::NAN;
        let err = shape_dataset(&config(), &raw).unwrap_err().to_string();
        assert!(err.contains("path 0 atom 1") && err.contains("player_load"), "{err}");
    }

    #[test]
    fn header_errors() {
        let mut bytes = Vec::new();
        write_binary(&mut bytes, &raw_two_paths()).unwrap();
        assert!(decode_binary(&bytes).is_ok());

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_binary(&bad).unwrap_err().to_string().contains("magic"));
        let mut bad = bytes.clone();
        bad[8] = 0;
        assert!(decode_binary(&bad).unwrap_err().to_string().contains("endianness"));
        assert!(decode_binary(&bytes[..bytes.len() - 2]).unwrap_err().to_string().contains("truncated"));
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode_binary(&long).unwrap_err().to_string().contains("trailing"));
        assert!(decode_binary(&bytes[..10]).is_err());
    }

    #[test]
    fn header_layout() {
        let mut bytes = Vec::new();
        write_binary(&mut bytes, &raw_two_paths()).unwrap();
        assert_eq!(&bytes[..4], b"TRJ1");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[4, 3, 2, 1]);
        assert_eq!(&bytes[12..16], &[2, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &[2, 0, 0, 0]);
        assert_eq!(&bytes[20..24], &[2, 0, 0, 0]);
        assert_eq!(bytes.len(), 20 + 4 + 2 * 5 * 4 + 4 + 5 * 4);
    }

    #[test]
    fn decimate_keeps_endpoint() {
        let ds = Dataset::from_positions(vec![(0..101).map(|i| Vec3::splat(i as f32)).collect()]);
        let d = decimate(&ds, 10);
        assert_eq!(d.paths[0].len(), 11);
        assert_eq!(d.paths[0].positions[10], Vec3::splat(100.0));
        assert_eq!(decimate(&ds, 1), ds);
        let ds = Dataset::from_positions(vec![(0..15).map(|i| Vec3::splat(i as f32)).collect()]);
        // indices 0, 10 and the final 14
        assert_eq!(decimate(&ds, 10).paths[0].len(), 3);
    }

    #[test]
    fn subsample_counts_and_determinism() {
        assert_eq!(subsample_count(1_000_000, 0.02), 20_000);
        assert_eq!(subsample_count(10, 0.25), 3);
        assert_eq!(subsample_count(10, 1.0), 10);
        assert_eq!(subsample_count(3, 0.01), 1);
        let ds = Dataset::from_positions((0..500).map(|i| vec![Vec3::splat(i as f32)]).collect());
        let a = subsample_paths(&ds, 0.1, 42);
        let b = subsample_paths(&ds, 0.1, 42);
        assert_eq!(a.path_count(), 50);
        assert_eq!(a, b);
        assert_ne!(a, subsample_paths(&ds, 0.1, 43));
        assert_eq!(subsample_paths(&ds, 1.0, 9), ds);
    }

    #[test]
    fn crop_by_time_window() {
        let mut c = config();
        c.time_attribute = Some("time".into());
        c.sampling.instant_range = Some([0.5, 2.0]);
        let ds = shape_dataset(&c, &raw_two_paths()).unwrap();
        // only atom 1 of path 0 has time in the window; path 1 drops out
        assert_eq!(ds.path_count(), 1);
        assert_eq!(ds.paths[0].times.as_deref(), Some(&[1.0f32][..]));
    }

    #[test]
    fn csv_import() {
        let text = "path_id,x,y,z,speed\n7,0,0,0,1.5\n3,1,1,1,2\n7,1,0,0,2.5\n";
        let raw = read_csv(text.as_bytes(), &["speed".to_string()]).unwrap();
        assert_eq!(raw.paths.len(), 2);
        assert_eq!(raw.paths[0], vec![0.0, 0.0, 0.0, 1.5, 1.0, 0.0, 0.0, 2.5]);
        let err = read_csv("path_id,x,y\n1,2,3\n".as_bytes(), &[]).unwrap_err().to_string();
        assert!(err.contains("`z`"));
        let err = read_csv("path_id,x,y,z\n1,2,oops,3\n".as_bytes(), &[]).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok = r#"{"data_path": "a.trj", "attributes": [{"name": "t"}], "sampling": {"atom_stride": 2}}"#;
        let c: DatasetConfig = serde_json::from_str(ok).unwrap();
        assert_eq!(c.sampling.atom_stride, 2);
        assert_eq!(c.sampling.path_fraction, 1.0);
        let bad = r#"{"data_path": "a.trj", "colour": "red"}"#;
        assert!(serde_json::from_str::<DatasetConfig>(bad).is_err());
        let c: DatasetConfig = serde_json::from_str(r#"{"data_path": "a", "color_map": [1,2,3]}"#).unwrap();
        assert_eq!(c.color_map, ColorMap::Fixed([1, 2, 3]));
    }

    #[test]
    fn random_colors_are_seeded() {
        let mut c = config();
        c.color_map = ColorMap::default();
        let a = shape_dataset(&c, &raw_two_paths()).unwrap();
        let b = shape_dataset(&c, &raw_two_paths()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn load_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = fs::File::create(dir.path().join("d.trj")).unwrap();
        write_binary(&mut f, &raw_two_paths()).unwrap();
        fs::write(dir.path().join("map.png"), b"\x89PNG fake").unwrap();
        let mut c = config();
        c.data_path = "d.trj".into();
        c.context.background_image = Some("map.png".into());
        fs::write(dir.path().join("c.json"), serde_json::to_string(&c).unwrap()).unwrap();
        let loaded = load_file(&dir.path().join("c.json")).unwrap();
        assert_eq!(loaded.dataset.path_count(), 2);
        assert_eq!(loaded.assets[0].bytes, b"\x89PNG fake");

        c.data_path = "missing.trj".into();
        let err = load(&c, dir.path()).unwrap_err().to_string();
        assert!(err.contains("data_path"));
    }
}
