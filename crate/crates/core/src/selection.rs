//! Color groups, the visible-path set, and the operations that mutate them.

use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::district::{DistrictGrid, QueryOptions, RibbonRef};
use crate::error::{Error, Result};
use crate::model::PathId;
use crate::selector::{AnchorFrame, Color, Selector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OpType {
    And,
    Or,
}

impl OpType {
    pub fn toggled(self) -> OpType {
        match self {
            OpType::And => OpType::Or,
            OpType::Or => OpType::And,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            OpType::And => "&",
            OpType::Or => "||",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operation {
    pub op_type: OpType,
    pub colors: BTreeSet<Color>,
}

impl Operation {
    pub fn new(op_type: OpType, colors: impl IntoIterator<Item = Color>) -> Self {
        Operation { op_type, colors: colors.into_iter().collect() }
    }

    pub fn toggle_color(&mut self, color: Color) {
        if !self.colors.remove(&color) {
            self.colors.insert(color);
        }
    }
}

impl Default for Operation {
    fn default() -> Self {
        Operation { op_type: OpType::Or, colors: BTreeSet::new() }
    }
}

/// Outcome of a stroke or persistent activation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StrokeResult {
    /// Ribbons hit, ascending, duplicate-free.
    pub touched: Vec<RibbonRef>,
    /// Paths owning a touched ribbon, ascending.
    pub paths: Vec<PathId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionState {
    groups: [FixedBitSet; 6],
    visible: FixedBitSet,
    pub persistent: Vec<Selector>,
}

fn ids(set: &FixedBitSet) -> Vec<PathId> {
    set.ones().map(|i| i as PathId).collect()
}

impl SelectionState {
    /// Every path visible, every group empty.
    pub fn new(path_count: usize) -> Self {
        let mut visible = FixedBitSet::with_capacity(path_count);
        visible.insert_range(..);
        SelectionState {
            groups: std::array::from_fn(|_| FixedBitSet::with_capacity(path_count)),
            visible,
            persistent: Vec::new(),
        }
    }

    pub fn path_count(&self) -> usize {
        self.visible.len()
    }

    pub fn visible(&self) -> &FixedBitSet {
        &self.visible
    }

    pub fn group(&self, color: Color) -> &FixedBitSet {
        &self.groups[color.index()]
    }

    pub fn visible_ids(&self) -> Vec<PathId> {
        ids(&self.visible)
    }

    pub fn group_ids(&self, color: Color) -> Vec<PathId> {
        ids(self.group(color))
    }

    pub fn is_visible(&self, id: PathId) -> bool {
        self.visible.contains(id as usize)
    }

    /// Overwrites visibility; used by tests and replay fixtures.
    pub fn set_visible(&mut self, ids: impl IntoIterator<Item = PathId>) {
        self.visible.clear();
        for id in ids {
            self.visible.insert(id as usize);
        }
    }

    pub fn set_group(&mut self, color: Color, ids: impl IntoIterator<Item = PathId>) {
        let g = &mut self.groups[color.index()];
        g.clear();
        for id in ids {
            g.insert(id as usize);
        }
    }

    /// Runs the selector at each pose in turn. Only currently visible paths
    /// can be hit; every hit path joins (or, with `deselect`, leaves) the
    /// selector's color group as a whole.
    pub fn apply_stroke(
        &mut self,
        selector: &Selector,
        poses: &[AnchorFrame],
        grid: &DistrictGrid,
        options: QueryOptions,
        deselect: bool,
    ) -> StrokeResult {
        let mut touched = Vec::new();
        for &pose in poses {
            let shape = selector.resolve(pose);
            touched.extend(grid.query(&shape, options, Some(&self.visible)));
        }
        if poses.len() > 1 {
            touched.sort_unstable();
            touched.dedup();
        }
        let mut paths: Vec<PathId> = touched.iter().map(|r| r.path_id).collect();
        paths.dedup();
        let group = &mut self.groups[selector.color.index()];
        for &id in &paths {
            group.set(id as usize, !deselect);
        }
        StrokeResult { touched, paths }
    }

    /// Clones `selector` into world space at the hand's current frame.
    pub fn place_persistent(&mut self, selector: &Selector, hand: AnchorFrame) -> usize {
        self.persistent.push(selector.to_persistent(hand));
        self.persistent.len() - 1
    }

    pub fn remove_persistent(&mut self, index: usize) -> Result<Selector> {
        if index >= self.persistent.len() {
            return Err(Error::OutOfRange { index, len: self.persistent.len() });
        }
        Ok(self.persistent.remove(index))
    }

    pub fn activate_persistent(
        &mut self,
        index: usize,
        grid: &DistrictGrid,
        options: QueryOptions,
        deselect: bool,
    ) -> Result<StrokeResult> {
        let selector = self
            .persistent
            .get(index)
            .cloned()
            .ok_or(Error::OutOfRange { index, len: self.persistent.len() })?;
        let anchor = selector.world_anchor.unwrap_or_default();
        Ok(self.apply_stroke(&selector, &[anchor], grid, options, deselect))
    }

    /// Filters the displayed paths: OR keeps paths in at least one of the
    /// operation's groups, AND keeps paths in all of them.
    pub fn execute(&mut self, op: &Operation) -> Result<()> {
        let mut colors = op.colors.iter();
        let first = colors
            .next()
            .ok_or_else(|| Error::InvalidOperation("operation has no color groups".into()))?;
        let mut keep = self.groups[first.index()].clone();
        for c in colors {
            let g = &self.groups[c.index()];
            match op.op_type {
                OpType::Or => keep.union_with(g),
                OpType::And => keep.intersect_with(g),
            }
        }
        self.visible.intersect_with(&keep);
        Ok(())
    }

    pub fn invert(&mut self) {
        self.visible.toggle_range(..);
    }

    pub fn reset_visibility(&mut self) {
        self.visible.insert_range(..);
    }

    pub fn clear_group(&mut self, color: Color) {
        self.groups[color.index()].clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::district::build_grid;
    use crate::model::Dataset;
    use glam::{DVec3, Vec3};

    fn state(n: usize, visible: &[PathId], groups: &[(Color, &[PathId])]) -> SelectionState {
        let mut s = SelectionState::new(n);
        s.set_visible(visible.iter().copied());
        for (c, ids) in groups {
            s.set_group(*c, ids.iter().copied());
        }
        s
    }

    #[test]
    fn or_example() {
        let mut s = state(4, &[1, 2, 3], &[(Color::Blue, &[1]), (Color::Green, &[2])]);
        s.execute(&Operation::new(OpType::Or, [Color::Blue, Color::Green])).unwrap();
        assert_eq!(s.visible_ids(), vec![1, 2]);
    }

    #[test]
    fn and_example() {
        let mut s = state(4, &[1, 2, 3], &[(Color::Blue, &[1, 2]), (Color::Green, &[2, 3])]);
        s.execute(&Operation::new(OpType::And, [Color::Blue, Color::Green])).unwrap();
        assert_eq!(s.visible_ids(), vec![2]);
    }

    #[test]
    fn consecutive_ops_compose() {
        let mut s = state(4, &[0, 1, 2, 3], &[(Color::Blue, &[1, 2]), (Color::Green, &[2])]);
        s.execute(&Operation::new(OpType::Or, [Color::Blue])).unwrap();
        s.execute(&Operation::new(OpType::Or, [Color::Green])).unwrap();
        assert_eq!(s.visible_ids(), vec![2]);
    }

    #[test]
    fn empty_operation_rejected() {
        let mut s = SelectionState::new(3);
        let err = s.execute(&Operation::new(OpType::And, [])).unwrap_err();
        assert!(matches!(err, Error::InvalidOperation(_)));
        assert_eq!(s.visible_ids(), vec![0, 1, 2]);
    }

    #[test]
    fn invert_and_reset() {
        let mut s = state(5, &[0, 3], &[(Color::Blue, &[1, 3])]);
        s.invert();
        assert_eq!(s.visible_ids(), vec![1, 2, 4]);
        s.invert();
        assert_eq!(s.visible_ids(), vec![0, 3]);
        s.reset_visibility();
        assert_eq!(s.visible_ids().len(), 5);
        s.invert();
        assert!(s.visible_ids().is_empty());
        s.reset_visibility();
        s.reset_visibility();
        s.execute(&Operation::new(OpType::And, [Color::Blue])).unwrap();
        assert_eq!(s.visible_ids(), s.group_ids(Color::Blue));
    }

    #[test]
    fn invert_then_and() {
        let mut s = state(6, &[0, 1, 2], &[(Color::Blue, &[1, 4, 5])]);
        s.invert();
        s.execute(&Operation::new(OpType::And, [Color::Blue])).unwrap();
        assert_eq!(s.visible_ids(), vec![4, 5]);
    }

    fn scene() -> (Dataset, DistrictGrid) {
        // path 7 passes through the origin; the rest are far away
        let mut paths: Vec<Vec<Vec3>> = (0..7).map(|i| vec![Vec3::new(10.0, i as f32, 0.0), Vec3::new(12.0, i as f32, 0.0)]).collect();
        paths.push(vec![Vec3::new(-3.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(3.0, 0.0, 0.0)]);
        let ds = Dataset::from_positions(paths);
        let grid = build_grid(&ds, DVec3::splat(0.75));
        (ds, grid)
    }

    #[test]
    fn stroke_selects_whole_path() {
        let (_, grid) = scene();
        let mut s = SelectionState::new(8);
        let sel = Selector::sphere(0.5, Color::Blue);
        let r = s.apply_stroke(&sel, &[AnchorFrame::IDENTITY], &grid, QueryOptions::default(), false);
        assert_eq!(r.paths, vec![7]);
        assert_eq!(r.touched, vec![RibbonRef { path_id: 7, index: 1 }]);
        assert_eq!(s.group_ids(Color::Blue), vec![7]);
    }

    #[test]
    fn stroke_ignores_hidden_paths() {
        let (_, grid) = scene();
        let mut s = SelectionState::new(8);
        s.set_visible(0..7);
        let sel = Selector::sphere(0.5, Color::Blue);
        let r = s.apply_stroke(&sel, &[AnchorFrame::IDENTITY], &grid, QueryOptions::default(), false);
        assert!(r.touched.is_empty());
        assert!(s.group_ids(Color::Blue).is_empty());
    }

    #[test]
    fn deselect_undoes_select() {
        let (_, grid) = scene();
        let mut s = state(8, &[0, 1, 2, 3, 4, 5, 6, 7], &[(Color::Red, &[2])]);
        let sel = Selector::sphere(1.5, Color::Red);
        let poses = [AnchorFrame::IDENTITY, AnchorFrame::at(DVec3::new(11.0, 0.0, 0.0))];
        let before = s.group_ids(Color::Red);
        s.apply_stroke(&sel, &poses, &grid, QueryOptions::default(), false);
        assert_eq!(s.group_ids(Color::Red), vec![0, 1, 2, 7]);
        s.apply_stroke(&sel, &poses, &grid, QueryOptions::default(), true);
        assert_eq!(s.group_ids(Color::Red), before);
        let mut t = state(8, &[0, 1, 2, 3, 4, 5, 6, 7], &[(Color::Red, &[5])]);
        t.apply_stroke(&sel, &poses, &grid, QueryOptions::default(), false);
        t.apply_stroke(&sel, &poses, &grid, QueryOptions::default(), true);
        assert_eq!(t.group_ids(Color::Red), vec![5]);
    }

    #[test]
    fn persistent_selector_stays_put() {
        let (_, grid) = scene();
        let mut s = SelectionState::new(8);
        let hand = Selector::sphere(0.5, Color::Green);
        let idx = s.place_persistent(&hand, AnchorFrame::IDENTITY);
        assert!(!hand.persistent);
        // the hand has moved; the placed clone has not
        let moved = AnchorFrame::at(DVec3::new(50.0, 0.0, 0.0));
        assert_eq!(s.persistent[idx].resolve(moved).center(), DVec3::ZERO);

        let first = s.activate_persistent(idx, &grid, QueryOptions::default(), false).unwrap();
        let groups_after_first = s.group_ids(Color::Green);
        let second = s.activate_persistent(idx, &grid, QueryOptions::default(), false).unwrap();
        assert_eq!(first, second);
        assert_eq!(groups_after_first, s.group_ids(Color::Green));

        let mut clone = s.clone();
        let direct = clone.apply_stroke(&hand, &[AnchorFrame::IDENTITY], &grid, QueryOptions::default(), false);
        assert_eq!(direct.touched, first.touched);

        assert!(matches!(s.activate_persistent(3, &grid, QueryOptions::default(), false), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn remove_keeps_later_selectors_addressable() {
        let mut s = SelectionState::new(1);
        s.place_persistent(&Selector::sphere(1.0, Color::Red), AnchorFrame::IDENTITY);
        s.place_persistent(&Selector::sphere(2.0, Color::Cyan), AnchorFrame::at(DVec3::X));
        s.remove_persistent(0).unwrap();
        assert_eq!(s.persistent.len(), 1);
        assert_eq!(s.persistent[0].color, Color::Cyan);
        assert!(s.remove_persistent(4).is_err());
    }

    #[test]
    fn activation_respects_current_visibility() {
        let (_, grid) = scene();
        let mut s = SelectionState::new(8);
        s.place_persistent(&Selector::sphere(1.5, Color::Yellow), AnchorFrame::at(DVec3::new(11.0, 0.5, 0.0)));
        s.set_visible([1, 3, 5]);
        let r = s.activate_persistent(0, &grid, QueryOptions::default(), false).unwrap();
        assert_eq!(r.paths, vec![1]);
        assert_eq!(s.group_ids(Color::Yellow), vec![1]);
    }
}
