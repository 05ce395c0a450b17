//! Glyph-grid toy environment: insertion and removal of simple shapes on a
//! C x C board, rendered to grayscale images.
//!
//! Two variants:
//! - `Constrained`: occupied cells always form a row-major prefix. Inserts go
//!   to the first empty slot, removal pops the last occupied one, so the
//!   action table is one insert per shape plus a single remove.
//! - `Free`: every (shape, cell) insert and every per-cell remove is its own
//!   action, so many distinct sequences map the same pair.

use crate::env::{ActionId, ActionInfo, EnvError, Environment, Episode, Trajectory, UsageCounter};
use crate::image::Image;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub const SHAPE_NAMES: [&str; 3] = ["triangle", "circle", "square"];

/// Frozen 9x9 glyph bitmaps for the default `cell_pixels = 9`. `glyph_bitmap`
/// must reproduce these exactly; a unit test pins them.
pub const TRIANGLE_9: [&str; 9] = [
    ".........",
    "....#....",
    "....#....",
    "...###...",
    "...###...",
    "..#####..",
    "..#####..",
    ".#######.",
    ".........",
];
pub const CIRCLE_9: [&str; 9] = [
    ".........",
    "...###...",
    "..#...#..",
    ".#.....#.",
    ".#.....#.",
    ".#.....#.",
    "..#...#..",
    "...###...",
    ".........",
];
pub const SQUARE_9: [&str; 9] = [
    ".........",
    ".#######.",
    ".#######.",
    ".#######.",
    ".#######.",
    ".#######.",
    ".#######.",
    ".#######.",
    ".........",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyVariant {
    Constrained,
    Free,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    /// Cells per side (C).
    pub grid_size: usize,
    /// Number of shapes used from `SHAPE_NAMES`, in order.
    pub shape_count: usize,
    pub variant: ToyVariant,
    /// Side length of one cell's glyph patch, in pixels.
    pub cell_pixels: usize,
}

impl ToyConfig {
    pub fn new(variant: ToyVariant) -> Self {
        Self {
            grid_size: 3,
            shape_count: 3,
            variant,
            cell_pixels: 9,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.grid_size * self.grid_size
    }

    pub fn image_side(&self) -> u32 {
        (self.grid_size * self.cell_pixels) as u32
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.grid_size < 1 {
            return Err("grid_size must be >= 1".into());
        }
        if self.shape_count < 1 || self.shape_count > SHAPE_NAMES.len() {
            return Err(format!("shape_count must be in 1..={}", SHAPE_NAMES.len()));
        }
        if self.cell_pixels < 5 {
            return Err("cell_pixels must be >= 5 for distinguishable glyphs".into());
        }
        Ok(())
    }
}

/// Logical board state: each cell is empty or holds a shape index.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridState {
    pub cells: Vec<Option<u8>>,
}

impl GridState {
    pub fn empty(cell_count: usize) -> Self {
        Self {
            cells: vec![None; cell_count],
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Constrained-variant invariant: occupied cells form a row-major prefix.
    pub fn is_prefix_organized(&self) -> bool {
        let k = self.occupied_count();
        self.cells[..k].iter().all(|c| c.is_some())
    }

    /// Integer encoding used in episode JSON: 0 = empty, shape index + 1.
    pub fn to_ints(&self) -> Vec<u8> {
        self.cells.iter().map(|c| c.map_or(0, |s| s + 1)).collect()
    }

    pub fn from_ints(ints: &[u8]) -> Self {
        Self {
            cells: ints
                .iter()
                .map(|&v| if v == 0 { None } else { Some(v - 1) })
                .collect(),
        }
    }
}

/// Decoded meaning of an action id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyAction {
    /// Constrained: first empty slot. Free: the given cell.
    Insert { shape: u8, cell: Option<usize> },
    /// Constrained: last occupied slot. Free: the given cell.
    Remove { cell: Option<usize> },
}

pub struct ToyEnv {
    cfg: ToyConfig,
    actions: Vec<ActionInfo>,
    glyphs: Vec<Vec<bool>>,
}

impl ToyEnv {
    pub fn new(cfg: ToyConfig) -> Result<Self, EnvError> {
        cfg.validate().map_err(EnvError::InvalidConfig)?;
        let actions = build_action_table(&cfg);
        let glyphs = (0..cfg.shape_count as u8)
            .map(|s| glyph_bitmap(s, cfg.cell_pixels))
            .collect();
        Ok(Self {
            cfg,
            actions,
            glyphs,
        })
    }

    pub fn constrained() -> Self {
        Self::new(ToyConfig::new(ToyVariant::Constrained)).unwrap()
    }

    pub fn free() -> Self {
        Self::new(ToyConfig::new(ToyVariant::Free)).unwrap()
    }

    pub fn config(&self) -> &ToyConfig {
        &self.cfg
    }

    pub fn decode_action(&self, id: ActionId) -> ToyAction {
        let cells = self.cfg.cell_count();
        match self.cfg.variant {
            ToyVariant::Constrained => {
                if id < self.cfg.shape_count {
                    ToyAction::Insert {
                        shape: id as u8,
                        cell: None,
                    }
                } else {
                    ToyAction::Remove { cell: None }
                }
            }
            ToyVariant::Free => {
                if id < self.cfg.shape_count * cells {
                    ToyAction::Insert {
                        shape: (id / cells) as u8,
                        cell: Some(id % cells),
                    }
                } else {
                    ToyAction::Remove {
                        cell: Some(id - self.cfg.shape_count * cells),
                    }
                }
            }
        }
    }

    /// Applies an action at the board level.
    pub fn state_apply(&self, state: &GridState, id: ActionId) -> Result<GridState, EnvError> {
        let illegal = Err(EnvError::IllegalAction {
            action: id,
            position: None,
        });
        let mut next = state.clone();
        match self.decode_action(id) {
            ToyAction::Insert { shape, cell: None } => {
                let k = state.occupied_count();
                if k == self.cfg.cell_count() {
                    return illegal;
                }
                next.cells[k] = Some(shape);
            }
            ToyAction::Remove { cell: None } => {
                let k = state.occupied_count();
                if k == 0 {
                    return illegal;
                }
                next.cells[k - 1] = None;
            }
            ToyAction::Insert {
                shape,
                cell: Some(cell),
            } => {
                if state.cells[cell].is_some() {
                    return illegal;
                }
                next.cells[cell] = Some(shape);
            }
            ToyAction::Remove { cell: Some(cell) } => {
                if state.cells[cell].is_none() {
                    return illegal;
                }
                next.cells[cell] = None;
            }
        }
        Ok(next)
    }

    pub fn legal_mask_state(&self, state: &GridState) -> Vec<bool> {
        let cells = self.cfg.cell_count();
        match self.cfg.variant {
            ToyVariant::Constrained => {
                let k = state.occupied_count();
                let mut mask = vec![k < cells; self.cfg.shape_count];
                mask.push(k > 0);
                mask
            }
            ToyVariant::Free => {
                let mut mask = Vec::with_capacity(self.actions.len());
                for _shape in 0..self.cfg.shape_count {
                    for cell in 0..cells {
                        mask.push(state.cells[cell].is_none());
                    }
                }
                for cell in 0..cells {
                    mask.push(state.cells[cell].is_some());
                }
                mask
            }
        }
    }

    /// Renders the board: occupied cells draw their glyph at 255 on a 0
    /// background, empty cells stay uniform 0. Deterministic and injective
    /// over states.
    pub fn render(&self, state: &GridState) -> Image {
        let p = self.cfg.cell_pixels;
        let side = self.cfg.image_side();
        let mut img = Image::zeros(side);
        for (idx, cell) in state.cells.iter().enumerate() {
            if let Some(shape) = *cell {
                let r0 = (idx / self.cfg.grid_size) * p;
                let c0 = (idx % self.cfg.grid_size) * p;
                let bitmap = &self.glyphs[shape as usize];
                for dr in 0..p {
                    for dc in 0..p {
                        if bitmap[dr * p + dc] {
                            img.set((r0 + dr) as u32, (c0 + dc) as u32, 255);
                        }
                    }
                }
            }
        }
        img
    }

    /// Inverse of `render`; `None` when the image is not a valid rendering.
    pub fn decode_image(&self, img: &Image) -> Option<GridState> {
        if img.side() != self.cfg.image_side() {
            return None;
        }
        let p = self.cfg.cell_pixels;
        let mut cells = Vec::with_capacity(self.cfg.cell_count());
        for idx in 0..self.cfg.cell_count() {
            let r0 = (idx / self.cfg.grid_size) * p;
            let c0 = (idx % self.cfg.grid_size) * p;
            let mut patch = Vec::with_capacity(p * p);
            for dr in 0..p {
                for dc in 0..p {
                    patch.push(img.get((r0 + dr) as u32, (c0 + dc) as u32));
                }
            }
            if patch.iter().all(|&v| v == 0) {
                cells.push(None);
                continue;
            }
            let shape = (0..self.cfg.shape_count as u8).find(|&s| {
                self.glyphs[s as usize]
                    .iter()
                    .zip(&patch)
                    .all(|(&bit, &v)| v == if bit { 255 } else { 0 })
            })?;
            cells.push(Some(shape));
        }
        Some(GridState { cells })
    }

    /// Start-state distribution: each cell independently empty with
    /// probability 0.5, otherwise a uniform shape. The constrained variant
    /// compacts the occupied cells into a prefix, preserving their order.
    pub fn sample_start(&self, rng: &mut dyn RngCore) -> GridState {
        let mut cells: Vec<Option<u8>> = (0..self.cfg.cell_count())
            .map(|_| {
                if rng.random::<bool>() {
                    None
                } else {
                    Some(rng.random_range(0..self.cfg.shape_count) as u8)
                }
            })
            .collect();
        if self.cfg.variant == ToyVariant::Constrained {
            let shapes: Vec<u8> = cells.iter().flatten().copied().collect();
            cells = (0..self.cfg.cell_count())
                .map(|i| shapes.get(i).copied())
                .collect();
        }
        GridState { cells }
    }

    pub fn insert_action_id(&self, shape: u8, cell: Option<usize>) -> ActionId {
        match self.cfg.variant {
            ToyVariant::Constrained => shape as usize,
            ToyVariant::Free => shape as usize * self.cfg.cell_count() + cell.unwrap(),
        }
    }

    pub fn remove_action_id(&self, cell: Option<usize>) -> ActionId {
        match self.cfg.variant {
            ToyVariant::Constrained => self.cfg.shape_count,
            ToyVariant::Free => self.cfg.shape_count * self.cfg.cell_count() + cell.unwrap(),
        }
    }

    /// Constrained ground truth: all removals first, then insertions, with
    /// the first inserted shape different from the last removed one. That
    /// makes the sequence the unique minimum-length solution for its pair.
    fn generate_constrained(
        &self,
        start: &GridState,
        max_len: usize,
        rng: &mut dyn RngCore,
    ) -> Option<(GridState, Trajectory)> {
        let cells = self.cfg.cell_count();
        let shapes = self.cfg.shape_count;
        let k = start.occupied_count();
        let len = rng.random_range(1..=max_len);
        let feasible: Vec<usize> = (0..=len.min(k))
            .filter(|&r| {
                let i = len - r;
                if k - r + i > cells {
                    return false;
                }
                // With a single shape, a removal followed by an insertion
                // would recreate the removed prefix, so the pair is banned.
                !(shapes == 1 && r > 0 && i > 0)
            })
            .collect();
        if feasible.is_empty() {
            return None;
        }
        let removals = feasible[rng.random_range(0..feasible.len())];
        let inserts = len - removals;

        let mut state = start.clone();
        let mut trajectory = Trajectory::empty();
        for _ in 0..removals {
            state = self.state_apply(&state, self.remove_action_id(None)).ok()?;
            trajectory.push(self.remove_action_id(None));
        }
        for step in 0..inserts {
            let mut shape = rng.random_range(0..shapes) as u8;
            if step == 0 && removals > 0 {
                // Re-inserting the shape that was just removed would leave a
                // shorter hidden solution; draw from the remaining shapes.
                let removed_last = start.cells[k - removals].expect("removed slot was occupied");
                let mut pick = rng.random_range(0..shapes - 1) as u8;
                if pick >= removed_last {
                    pick += 1;
                }
                shape = pick;
            }
            state = self
                .state_apply(&state, self.insert_action_id(shape, None))
                .ok()?;
            trajectory.push(self.insert_action_id(shape, None));
        }
        if state == *start {
            return None;
        }
        Some((state, trajectory))
    }

    /// Free ground truth: a uniformly random legal action at every step.
    fn generate_free(
        &self,
        start: &GridState,
        max_len: usize,
        rng: &mut dyn RngCore,
    ) -> Option<(GridState, Trajectory)> {
        let len = rng.random_range(1..=max_len);
        let mut state = start.clone();
        let mut trajectory = Trajectory::empty();
        for _ in 0..len {
            let mask = self.legal_mask_state(&state);
            let legal: Vec<ActionId> = mask
                .iter()
                .enumerate()
                .filter_map(|(a, &ok)| ok.then_some(a))
                .collect();
            let action = legal[rng.random_range(0..legal.len())];
            state = self.state_apply(&state, action).ok()?;
            trajectory.push(action);
        }
        if state == *start {
            return None;
        }
        Some((state, trajectory))
    }
}

impl Environment for ToyEnv {
    fn actions(&self) -> &[ActionInfo] {
        &self.actions
    }

    fn side(&self) -> u32 {
        self.cfg.image_side()
    }

    fn max_depth(&self) -> usize {
        // Enough to empty the board and refill every cell.
        2 * self.cfg.cell_count()
    }

    fn legal_mask(&self, current: &Image, _usage: &UsageCounter) -> Vec<bool> {
        match self.decode_image(current) {
            Some(state) => self.legal_mask_state(&state),
            None => vec![false; self.actions.len()],
        }
    }

    fn apply(&self, action: ActionId, image: &Image) -> Result<Image, EnvError> {
        if image.side() != self.cfg.image_side() {
            return Err(EnvError::DimensionMismatch {
                expected: self.cfg.image_side(),
                got: image.side(),
            });
        }
        let state = self
            .decode_image(image)
            .ok_or(EnvError::UnrecognizedState)?;
        let next = self.state_apply(&state, action)?;
        Ok(self.render(&next))
    }

    fn generate_pair(&self, max_len: usize, rng: &mut dyn RngCore) -> Result<Episode, EnvError> {
        const MAX_ATTEMPTS: usize = 256;
        let max_len = max_len.min(self.max_depth()).max(1);
        for _ in 0..MAX_ATTEMPTS {
            let start = self.sample_start(rng);
            let generated = match self.cfg.variant {
                ToyVariant::Constrained => self.generate_constrained(&start, max_len, rng),
                ToyVariant::Free => self.generate_free(&start, max_len, rng),
            };
            if let Some((end, trajectory)) = generated {
                return Ok(Episode {
                    source: self.render(&start),
                    target: self.render(&end),
                    ground_truth: trajectory,
                    reward: 0.0,
                });
            }
        }
        Err(EnvError::GenerationFailure {
            attempts: MAX_ATTEMPTS,
        })
    }
}

fn build_action_table(cfg: &ToyConfig) -> Vec<ActionInfo> {
    let mut actions = Vec::new();
    match cfg.variant {
        ToyVariant::Constrained => {
            for shape in SHAPE_NAMES.iter().take(cfg.shape_count) {
                actions.push(ActionInfo {
                    id: actions.len(),
                    name: format!("insert_{shape}"),
                });
            }
            actions.push(ActionInfo {
                id: actions.len(),
                name: "remove".into(),
            });
        }
        ToyVariant::Free => {
            for shape in SHAPE_NAMES.iter().take(cfg.shape_count) {
                for cell in 0..cfg.cell_count() {
                    actions.push(ActionInfo {
                        id: actions.len(),
                        name: format!("insert_{shape}_{cell}"),
                    });
                }
            }
            for cell in 0..cfg.cell_count() {
                actions.push(ActionInfo {
                    id: actions.len(),
                    name: format!("remove_{}", cell),
                });
            }
        }
    }
    actions
}

/// Procedural glyph at any patch size >= 5. Shape 0 is a filled triangle,
/// 1 a circle outline, 2 a filled square. The 9x9 outputs are pinned to the
/// `*_9` constants above.
pub fn glyph_bitmap(shape: u8, p: usize) -> Vec<bool> {
    assert!(p >= 5, "glyph patch must be at least 5 pixels");
    let mut bits = vec![false; p * p];
    let mut set = |r: usize, c: usize| bits[r * p + c] = true;
    match shape {
        0 => {
            // Filled triangle: apex at the top, widening towards the base.
            let mid = (p - 1) / 2;
            let half_max = (p - 3) / 2;
            for r in 1..p - 1 {
                let half = (r - 1) * half_max / (p - 3).max(1);
                for c in mid.saturating_sub(half)..=(mid + half).min(p - 1) {
                    set(r, c);
                }
            }
        }
        1 => {
            // Circle outline: ring of radius (p-3)/2 around the center.
            let m = (p - 1) as i64 / 2;
            let radius = (p as i64 - 3) / 2;
            for r in 0..p {
                for c in 0..p {
                    let dr = r as i64 - m;
                    let dc = c as i64 - m;
                    let d2 = dr * dr + dc * dc;
                    if d2 > 0 && (d2 - radius * radius).abs() <= radius {
                        set(r, c);
                    }
                }
            }
        }
        2 => {
            // Filled square with a one-pixel margin.
            for r in 1..p - 1 {
                for c in 1..p - 1 {
                    set(r, c);
                }
            }
        }
        _ => panic!("unknown shape index {shape}"),
    }
    bits
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bitmap_from_art(art: &[&str]) -> Vec<bool> {
        art.iter()
            .flat_map(|row| row.bytes().map(|b| b == b'#'))
            .collect()
    }

    #[test]
    fn glyphs_match_frozen_constants() {
        assert_eq!(glyph_bitmap(0, 9), bitmap_from_art(&TRIANGLE_9));
        assert_eq!(glyph_bitmap(1, 9), bitmap_from_art(&CIRCLE_9));
        assert_eq!(glyph_bitmap(2, 9), bitmap_from_art(&SQUARE_9));
    }

    #[test]
    fn glyphs_distinct_and_nonempty_across_sizes() {
        for p in 5..16 {
            let glyphs: Vec<Vec<bool>> = (0..3).map(|s| glyph_bitmap(s, p)).collect();
            for g in &glyphs {
                assert!(g.iter().any(|&b| b), "empty glyph at p={p}");
            }
            assert_ne!(glyphs[0], glyphs[1], "p={p}");
            assert_ne!(glyphs[0], glyphs[2], "p={p}");
            assert_ne!(glyphs[1], glyphs[2], "p={p}");
        }
    }

    #[test]
    fn action_table_sizes() {
        assert_eq!(ToyEnv::constrained().action_count(), 4);
        assert_eq!(ToyEnv::free().action_count(), 36);
        let tiny = ToyEnv::new(ToyConfig {
            grid_size: 1,
            shape_count: 1,
            variant: ToyVariant::Free,
            cell_pixels: 9,
        })
        .unwrap();
        assert_eq!(tiny.action_count(), 2);
    }

    #[test]
    fn constrained_masks() {
        let env = ToyEnv::constrained();
        let empty = GridState::empty(9);
        assert_eq!(env.legal_mask_state(&empty), vec![true, true, true, false]);
        let full = GridState {
            cells: vec![Some(0); 9],
        };
        assert_eq!(env.legal_mask_state(&full), vec![false, false, false, true]);
    }

    #[test]
    fn free_mask_tracks_occupancy() {
        let env = ToyEnv::free();
        let mut state = GridState::empty(9);
        state.cells[0] = Some(1);
        let mask = env.legal_mask_state(&state);
        let remove_base = env.remove_action_id(Some(0));
        assert!(mask[remove_base]);
        for cell in 1..9 {
            assert!(!mask[remove_base + cell], "cell {cell}");
        }
        // Inserts only into empty cells.
        assert!(!mask[env.insert_action_id(0, Some(0))]);
        assert!(mask[env.insert_action_id(0, Some(1))]);
    }

    #[test]
    fn insert_into_full_constrained_grid_is_illegal() {
        let env = ToyEnv::constrained();
        let full = GridState {
            cells: vec![Some(1); 9],
        };
        let img = env.render(&full);
        assert!(matches!(
            env.apply(env.insert_action_id(1, None), &img),
            Err(EnvError::IllegalAction { .. })
        ));
    }

    #[test]
    fn render_empty_is_black_and_deterministic() {
        let env = ToyEnv::free();
        let empty = GridState::empty(9);
        assert_eq!(env.render(&empty), Image::zeros(27));
        let mut state = GridState::empty(9);
        state.cells[4] = Some(2);
        assert_eq!(env.render(&state), env.render(&state));
    }

    /// Exhaustive injectivity over all 4^9 boards for C=3, |S|=3: decoding a
    /// rendering recovers the exact state, so distinct states render
    /// distinctly.
    #[test]
    fn render_decode_roundtrip_exhaustive() {
        let env = ToyEnv::free();
        for code in 0u64..4u64.pow(9) {
            let mut c = code;
            let cells: Vec<Option<u8>> = (0..9)
                .map(|_| {
                    let v = (c % 4) as u8;
                    c /= 4;
                    if v == 0 {
                        None
                    } else {
                        Some(v - 1)
                    }
                })
                .collect();
            let state = GridState { cells };
            let decoded = env.decode_image(&env.render(&state)).expect("decodable");
            assert_eq!(decoded, state);
        }
    }

    #[test]
    fn free_insert_then_remove_restores_state() {
        let env = ToyEnv::free();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let state = env.sample_start(&mut rng);
            let empty_cells: Vec<usize> = (0..9).filter(|&i| state.cells[i].is_none()).collect();
            if empty_cells.is_empty() {
                continue;
            }
            let cell = empty_cells[0];
            let inserted = env
                .state_apply(&state, env.insert_action_id(1, Some(cell)))
                .unwrap();
            let removed = env
                .state_apply(&inserted, env.remove_action_id(Some(cell)))
                .unwrap();
            assert_eq!(removed, state);
        }
    }

    #[test]
    fn constrained_ground_truth_is_removals_then_inserts() {
        let env = ToyEnv::constrained();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let remove_id = env.remove_action_id(None);
        for _ in 0..200 {
            let ep = env.generate_pair(8, &mut rng).unwrap();
            let first_insert = ep
                .ground_truth
                .actions
                .iter()
                .position(|&a| a != remove_id)
                .unwrap_or(ep.ground_truth.len());
            assert!(
                ep.ground_truth.actions[first_insert..]
                    .iter()
                    .all(|&a| a != remove_id),
                "removals must all come first: {:?}",
                ep.ground_truth
            );
        }
    }

    #[test]
    fn generated_pairs_replay_and_differ() {
        for env in [ToyEnv::constrained(), ToyEnv::free()] {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            for _ in 0..100 {
                let ep = env.generate_pair(6, &mut rng).unwrap();
                assert_ne!(ep.source, ep.target);
                assert!(!ep.ground_truth.is_empty() && ep.ground_truth.len() <= 6);
                let replay = env.apply_sequence(&ep.ground_truth, &ep.source).unwrap();
                assert_eq!(replay, ep.target);
            }
        }
    }

    #[test]
    fn empty_trajectory_is_identity() {
        let env = ToyEnv::free();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let img = env.render(&env.sample_start(&mut rng));
        assert_eq!(env.apply_sequence(&Trajectory::empty(), &img).unwrap(), img);
    }

    #[test]
    fn apply_sequence_reports_failing_position() {
        let env = ToyEnv::constrained();
        let empty = env.render(&GridState::empty(9));
        let remove = env.remove_action_id(None);
        let t = Trajectory::new(vec![env.insert_action_id(0, None), remove, remove]);
        match env.apply_sequence(&t, &empty) {
            Err(EnvError::IllegalAction { position, .. }) => assert_eq!(position, Some(2)),
            other => panic!("expected illegal action, got {other:?}"),
        }
    }
}
