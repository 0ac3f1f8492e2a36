//! Line-oriented command scripts.
//!
//! ```text
//! # comment
//! load data/config.json
//! color blue
//! shape sphere
//! params radius=0.5 offset=0,0,0.1 rotation=0,0,90
//! stroke 1,2,0 1.5,2,0@45
//! execute or blue
//! export visible visible.txt
//! ```
//!
//! Poses are `x,y,z` with an optional `@yaw` in degrees. Rotations given to
//! `params` are Euler angles in degrees. `json {...}` passes a raw command.

use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use glam::{DQuat, DVec3};

use crate::animation::PlaybackMode;
use crate::error::{Error, Result};
use crate::mesh::decode_bundle;
use crate::selection::OpType;
use crate::selector::{AnchorFrame, Color, ShapeKind};
use crate::session::{Command, Event, Mode, Session, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    Visible,
    Meshes,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Command(Command),
    Export { kind: ExportKind, file: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub number: usize,
    pub step: Step,
}

/// Anything that accepts commands: a local session or a remote service.
pub trait CommandSink {
    fn apply(&mut self, command: Command) -> Result<Event>;
    fn snapshot(&mut self) -> Result<Snapshot>;
    fn visible_meshes(&mut self) -> Result<Vec<u8>>;
}

impl CommandSink for Session {
    fn apply(&mut self, command: Command) -> Result<Event> {
        Session::apply(self, command)
    }

    fn snapshot(&mut self) -> Result<Snapshot> {
        Ok(Session::snapshot(self))
    }

    fn visible_meshes(&mut self) -> Result<Vec<u8>> {
        self.visible_mesh_bundle()
    }
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Script { line, message: message.into() }
}

fn parse_f64(line: usize, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| err(line, format!("`{s}` is not a finite number")))
}

fn parse_vec3(line: usize, s: &str) -> Result<DVec3> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(err(line, format!("`{s}` is not an x,y,z triple")));
    }
    Ok(DVec3::new(parse_f64(line, parts[0])?, parse_f64(line, parts[1])?, parse_f64(line, parts[2])?))
}

fn parse_pose(line: usize, s: &str) -> Result<AnchorFrame> {
    let (pos, yaw) = match s.split_once('@') {
        Some((p, y)) => (p, parse_f64(line, y)?),
        None => (s, 0.0),
    };
    Ok(AnchorFrame { position: parse_vec3(line, pos)?, rotation: DQuat::from_rotation_z(yaw.to_radians()) })
}

fn parse_color(line: usize, s: &str) -> Result<Color> {
    s.parse().map_err(|_| err(line, format!("unknown color `{s}`")))
}

fn parse_op(line: usize, s: &str) -> Result<OpType> {
    match s.to_ascii_lowercase().as_str() {
        "and" | "&" => Ok(OpType::And),
        "or" | "||" => Ok(OpType::Or),
        _ => Err(err(line, format!("unknown operation type `{s}`"))),
    }
}

fn parse_bool(line: usize, s: &str) -> Result<bool> {
    match s {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(err(line, format!("`{s}` is not a boolean"))),
    }
}

fn parse_index(line: usize, s: Option<&&str>) -> Result<usize> {
    let s = s.ok_or_else(|| err(line, "missing index"))?;
    s.parse().map_err(|_| err(line, format!("`{s}` is not an index")))
}

fn key_values<'a>(line: usize, args: &[&'a str]) -> Result<Vec<(&'a str, &'a str)>> {
    args.iter()
        .map(|a| a.split_once('=').ok_or_else(|| err(line, format!("expected key=value, found `{a}`"))))
        .collect()
}

fn no_extra(line: usize, args: &[&str], max: usize) -> Result<()> {
    if args.len() > max {
        Err(err(line, format!("unexpected argument `{}`", args[max])))
    } else {
        Ok(())
    }
}

/// Parses a script. Relative `load` paths resolve against `base_dir`.
pub fn parse(text: &str, base_dir: &FsPath) -> Result<Vec<Line>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
        if line.is_empty() {
            continue;
        }
        let (word, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        if word == "json" {
            let command: Command = serde_json::from_str(rest.trim()).map_err(|e| err(n, format!("bad json command: {e}")))?;
            out.push(Line { number: n, step: Step::Command(command) });
            continue;
        }
        let args: Vec<&str> = rest.split_whitespace().collect();
        let step = match word {
            "load" => {
                no_extra(n, &args, 1)?;
                let p = args.first().ok_or_else(|| err(n, "load needs a config path"))?;
                let path = PathBuf::from(p);
                let path = if path.is_absolute() { path } else { base_dir.join(path) };
                Step::Command(Command::LoadDataset { config: path.to_string_lossy().into_owned() })
            }
            "mode" => {
                no_extra(n, &args, 1)?;
                let mode = match args.first().copied() {
                    Some("selection") => Mode::Selection,
                    Some("creation") => Mode::Creation,
                    other => return Err(err(n, format!("unknown mode {other:?}"))),
                };
                Step::Command(Command::SetMode { mode })
            }
            "color" => {
                no_extra(n, &args, 1)?;
                Step::Command(Command::SetColor { color: parse_color(n, args.first().ok_or_else(|| err(n, "missing color"))?)? })
            }
            "shape" => {
                no_extra(n, &args, 1)?;
                let shape = match args.first().copied() {
                    Some("sphere") => ShapeKind::Sphere,
                    Some("cylinder") => ShapeKind::Cylinder,
                    Some("cuboid") => ShapeKind::Cuboid,
                    other => return Err(err(n, format!("unknown shape {other:?}"))),
                };
                Step::Command(Command::SetSelectorShape { shape })
            }
            "params" => {
                let (mut offset, mut rotation, mut radius, mut width, mut size) = (None, None, None, None, None);
                for (k, v) in key_values(n, &args)? {
                    match k {
                        "offset" => offset = Some(parse_vec3(n, v)?),
                        "rotation" => {
                            let r = parse_vec3(n, v)?;
                            rotation = Some(DVec3::new(r.x.to_radians(), r.y.to_radians(), r.z.to_radians()));
                        }
                        "radius" => radius = Some(parse_f64(n, v)?),
                        "width" => width = Some(parse_f64(n, v)?),
                        "size" => size = Some(parse_vec3(n, v)?),
                        _ => return Err(err(n, format!("unknown parameter `{k}`"))),
                    }
                }
                Step::Command(Command::SetSelectorParams { offset, rotation, radius, width, size })
            }
            "stroke" => {
                let (deselect, poses) = match args.first() {
                    Some(&"deselect") => (true, &args[1..]),
                    _ => (false, &args[..]),
                };
                let poses = poses.iter().map(|p| parse_pose(n, p)).collect::<Result<_>>()?;
                Step::Command(Command::Stroke { poses, deselect })
            }
            "place" => {
                no_extra(n, &args, 1)?;
                Step::Command(Command::PlacePersistent { anchor: parse_pose(n, args.first().ok_or_else(|| err(n, "missing pose"))?)? })
            }
            "remove" => {
                no_extra(n, &args, 1)?;
                Step::Command(Command::RemovePersistent { index: parse_index(n, args.first())? })
            }
            "activate" => {
                no_extra(n, &args, 2)?;
                let deselect = match args.get(1) {
                    None => false,
                    Some(&"deselect") => true,
                    Some(other) => return Err(err(n, format!("unexpected argument `{other}`"))),
                };
                Step::Command(Command::ActivatePersistent { index: parse_index(n, args.first())?, deselect })
            }
            "opcolor" => {
                no_extra(n, &args, 1)?;
                Step::Command(Command::ToggleOpColor { color: args.first().map(|c| parse_color(n, c)).transpose()? })
            }
            "optype" => {
                no_extra(n, &args, 1)?;
                Step::Command(Command::SetOpType { op_type: args.first().map(|o| parse_op(n, o)).transpose()? })
            }
            "execute" => match args.split_first() {
                None => Step::Command(Command::ExecuteOp { op_type: None, colors: None }),
                Some((op, colors)) => {
                    let op_type = Some(parse_op(n, op)?);
                    let colors = if colors.is_empty() {
                        None
                    } else {
                        Some(colors.iter().map(|c| parse_color(n, c)).collect::<Result<_>>()?)
                    };
                    Step::Command(Command::ExecuteOp { op_type, colors })
                }
            },
            "invert" => {
                no_extra(n, &args, 0)?;
                Step::Command(Command::Invert)
            }
            "reset" => {
                no_extra(n, &args, 0)?;
                Step::Command(Command::Reset)
            }
            "clear" => {
                no_extra(n, &args, 1)?;
                Step::Command(Command::ClearGroup { color: args.first().map(|c| parse_color(n, c)).transpose()? })
            }
            "playback" => {
                let (mut enabled, mut mode, mut clock, mut speed, mut sphere_radius) = (None, None, None, None, None);
                for (k, v) in key_values(n, &args)? {
                    match k {
                        "enabled" => enabled = Some(parse_bool(n, v)?),
                        "mode" => {
                            mode = Some(match v {
                                "global_time" | "time" => PlaybackMode::GlobalTime,
                                "index" => PlaybackMode::Index,
                                "drop" => PlaybackMode::Drop,
                                _ => return Err(err(n, format!("unknown playback mode `{v}`"))),
                            })
                        }
                        "clock" => clock = Some(parse_f64(n, v)?),
                        "speed" => speed = Some(parse_f64(n, v)?),
                        "radius" => sphere_radius = Some(parse_f64(n, v)?),
                        _ => return Err(err(n, format!("unknown playback key `{k}`"))),
                    }
                }
                Step::Command(Command::SetPlayback { enabled, mode, clock, speed, sphere_radius })
            }
            "drop" => {
                no_extra(n, &args, 1)?;
                Step::Command(Command::DropSpheres { anchor: parse_pose(n, args.first().ok_or_else(|| err(n, "missing pose"))?)? })
            }
            "export" => {
                no_extra(n, &args, 2)?;
                let kind = match args.first().copied() {
                    Some("visible") => ExportKind::Visible,
                    Some("meshes") => ExportKind::Meshes,
                    other => return Err(err(n, format!("unknown export kind {other:?}"))),
                };
                let file = args.get(1).ok_or_else(|| err(n, "export needs a file name"))?;
                Step::Export { kind, file: file.to_string() }
            }
            other => return Err(err(n, format!("unknown command `{other}`"))),
        };
        out.push(Line { number: n, step });
    }
    Ok(out)
}

fn dataset_line(snap: &Snapshot) -> String {
    match &snap.dataset {
        Some(d) => format!(
            "dataset: {} paths, {} atoms, {} ribbons, grid {}x{}x{}",
            d.paths, d.atoms, d.ribbons, d.grid.dims[0], d.grid.dims[1], d.grid.dims[2]
        ),
        None => "dataset: none".to_string(),
    }
}

/// Runs parsed lines against `sink`, writing one report line per step.
/// Exports land in `export_dir`. Returns the final snapshot.
pub fn run<S: CommandSink + ?Sized>(
    sink: &mut S,
    lines: &[Line],
    export_dir: &FsPath,
    report: &mut dyn Write,
) -> Result<Snapshot> {
    let snap = sink.snapshot()?;
    writeln!(report, "{}", dataset_line(&snap))?;
    for line in lines {
        let n = line.number;
        match &line.step {
            Step::Command(command) => {
                let ev = sink.apply(command.clone()).map_err(|e| err(n, e.to_string()))?;
                let mut text = format!("line {n}: {} rev {} visible {}", ev.command, ev.revision, ev.visible_count);
                if let Some(s) = ev.stroke {
                    text += &format!(" touched {} paths ({} ribbons)", s.paths, s.ribbons);
                }
                if ev.noop {
                    text += " (no-op)";
                }
                writeln!(report, "{text}")?;
                if matches!(command, Command::LoadDataset { .. }) {
                    writeln!(report, "{}", dataset_line(&sink.snapshot()?))?;
                }
            }
            Step::Export { kind, file } => {
                fs::create_dir_all(export_dir)?;
                let target = export_dir.join(file);
                match kind {
                    ExportKind::Visible => {
                        let ids = sink.snapshot()?.visible.ids()?;
                        let text: String = ids.iter().map(|id| format!("{id}\n")).collect();
                        fs::write(&target, text)?;
                        writeln!(report, "line {n}: exported {} visible ids to {}", ids.len(), target.display())?;
                    }
                    ExportKind::Meshes => {
                        let bytes = sink.visible_meshes()?;
                        let count = decode_bundle(&bytes)?.len();
                        fs::write(&target, &bytes)?;
                        writeln!(report, "line {n}: exported {count} meshes ({} bytes) to {}", bytes.len(), target.display())?;
                    }
                }
            }
        }
    }
    let snap = sink.snapshot()?;
    writeln!(report, "final: revision {} visible {}", snap.revision, snap.visible_count)?;
    Ok(snap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dataset;
    use glam::Vec3;

    #[test]
    fn parses_vocabulary() {
        let text = "# header\n\
            load cfg.json\n\
            color Blue\n\
            shape cuboid\n\
            params size=1,2,3 rotation=0,0,90\n\
            stroke 1,2,3 4,5,6@90  # trailing comment\n\
            stroke deselect 0,0,0\n\
            place 1,1,1\n\
            activate 0 deselect\n\
            remove 0\n\
            opcolor\n\
            optype and\n\
            execute or blue green\n\
            execute\n\
            invert\n\
            reset\n\
            clear red\n\
            playback enabled=true mode=index speed=2 radius=0.2\n\
            drop 1,2,3\n\
            mode creation\n\
            json {\"type\":\"Invert\"}\n\
            export visible out.txt\n";
        let lines = parse(text, FsPath::new("/base")).unwrap();
        assert_eq!(lines.len(), 21);
        assert_eq!(lines[0].number, 2);
        assert_eq!(lines[0].step, Step::Command(Command::LoadDataset { config: "/base/cfg.json".into() }));
        match &lines[3].step {
            Step::Command(Command::SetSelectorParams { rotation: Some(r), size: Some(s), .. }) => {
                assert!((r.z - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
                assert_eq!(*s, DVec3::new(1.0, 2.0, 3.0));
            }
            other => panic!("{other:?}"),
        }
        match &lines[4].step {
            Step::Command(Command::Stroke { poses, deselect: false }) => {
                assert_eq!(poses.len(), 2);
                assert!((poses[1].rotation * DVec3::X - DVec3::Y).length() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            lines[11].step,
            Step::Command(Command::ExecuteOp { op_type: Some(OpType::Or), colors: Some(vec![Color::Blue, Color::Green]) })
        );
        assert_eq!(lines[20].step, Step::Export { kind: ExportKind::Visible, file: "out.txt".into() });
    }

    #[test]
    fn errors_name_the_line() {
        for (text, line) in [
            ("invert\nfrobnicate\n", 2),
            ("\n\nstroke 1,2\n", 3),
            ("color mauve", 1),
            ("reset now", 1),
            ("params radius=abc", 1),
            ("json {nope}", 1),
            ("export visible", 1),
        ] {
            match parse(text, FsPath::new(".")) {
                Err(Error::Script { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn runs_against_a_session() {
        let ds = Dataset::from_positions((0..4).map(|p| (0..5).map(|i| Vec3::new(i as f32, 2.0 * p as f32, 0.0)).collect()).collect());
        let mut session = Session::with_dataset(ds, Some(DVec3::ONE));
        let dir = tempfile::tempdir().unwrap();
        let lines = parse("color blue\nstroke 2,0,0 2,2,0\nstroke\nexecute or blue\nexport visible v.txt\nexport meshes m.bin\n", dir.path()).unwrap();
        let mut report = Vec::new();
        let snap = run(&mut session, &lines, dir.path(), &mut report).unwrap();
        let report = String::from_utf8(report).unwrap();
        assert_eq!(snap.visible_count, 2);
        assert!(report.contains("line 2: Stroke rev 2 visible 4 touched 2 paths"), "{report}");
        assert!(report.contains("(no-op)"));
        assert!(report.ends_with("final: revision 3 visible 2\n"));
        assert_eq!(fs::read_to_string(dir.path().join("v.txt")).unwrap(), "0\n1\n");
        assert_eq!(decode_bundle(&fs::read(dir.path().join("m.bin")).unwrap()).unwrap().len(), 2);

        let bad = parse("execute and\n", dir.path()).unwrap();
        let mut sink = Session::with_dataset(Dataset::from_positions(vec![vec![Vec3::ZERO, Vec3::X]]), None);
        match run(&mut sink, &bad, dir.path(), &mut Vec::new()) {
            Err(Error::Script { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
