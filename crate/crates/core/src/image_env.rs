//! Classic-transform environment: rotation, grayscale morphology, box blur,
//! and inversion on square 8-bit images, with a repetition cap per transform
//! and a hard length cap on trajectories.
//!
//! All five transforms use deterministic integer arithmetic so the bit-exact
//! goal test is sound. Morphology and blur use a 3x3 window with
//! replicate (clamp-to-edge) padding; under that choice grayscale erosion and
//! dilation are exact duals under inversion.

use crate::env::{ActionId, ActionInfo, EnvError, Environment, Episode, Trajectory, UsageCounter};
use crate::image::Image;
use crate::oracle::UsageDp;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub const TRANSFORM_NAMES: [&str; 5] = ["rotate90", "erode", "dilate", "blur", "invert"];

pub const ROTATE90: ActionId = 0;
pub const ERODE: ActionId = 1;
pub const DILATE: ActionId = 2;
pub const BLUR: ActionId = 3;
pub const INVERT: ActionId = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEnvConfig {
    /// Side length of every image in the pool.
    pub side: u32,
    /// Hard cap on trajectory length.
    pub max_len: usize,
    /// How often each transform may appear in one trajectory.
    pub max_repeats: usize,
}

impl Default for ImageEnvConfig {
    fn default() -> Self {
        Self {
            side: 32,
            max_len: 10,
            max_repeats: 2,
        }
    }
}

impl ImageEnvConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.side < 2 {
            return Err("side must be >= 2".into());
        }
        if self.max_len < 1 || self.max_repeats < 1 {
            return Err("max_len and max_repeats must be >= 1".into());
        }
        Ok(())
    }
}

/// Counterclockwise quarter turn: pixel (r, c) maps to (side-1-c, r).
pub fn rotate90(img: &Image) -> Image {
    let side = img.side();
    Image::from_fn(side, |r, c| img.get(c, side - 1 - r))
}

/// Every pixel v maps to 255 - v.
pub fn invert(img: &Image) -> Image {
    let side = img.side();
    let data = img.data().iter().map(|&v| 255 - v).collect();
    Image::new(side, side, data).expect("same shape")
}

/// Grayscale erosion: minimum over the 3x3 neighborhood, replicate padding.
pub fn erode(img: &Image) -> Image {
    window3(img, |acc, v| acc.min(v), u8::MAX)
}

/// Grayscale dilation: maximum over the 3x3 neighborhood, replicate padding.
pub fn dilate(img: &Image) -> Image {
    window3(img, |acc, v| acc.max(v), u8::MIN)
}

/// 3x3 box filter with replicate padding; each output pixel is the
/// round-half-up of (neighborhood sum / 9). The denominator is odd, so exact
/// halves never occur and `(sum + 4) / 9` realizes the rounding in integers.
pub fn blur(img: &Image) -> Image {
    let side = img.side() as i64;
    Image::from_fn(img.side(), |r, c| {
        let mut sum: u32 = 0;
        for dr in -1..=1i64 {
            for dc in -1..=1i64 {
                let rr = (r as i64 + dr).clamp(0, side - 1) as u32;
                let cc = (c as i64 + dc).clamp(0, side - 1) as u32;
                sum += u32::from(img.get(rr, cc));
            }
        }
        ((sum + 4) / 9) as u8
    })
}

fn window3(img: &Image, fold: impl Fn(u8, u8) -> u8, init: u8) -> Image {
    let side = img.side() as i64;
    Image::from_fn(img.side(), |r, c| {
        let mut acc = init;
        for dr in -1..=1i64 {
            for dc in -1..=1i64 {
                let rr = (r as i64 + dr).clamp(0, side - 1) as u32;
                let cc = (c as i64 + dc).clamp(0, side - 1) as u32;
                acc = fold(acc, img.get(rr, cc));
            }
        }
        acc
    })
}

pub fn apply_transform(action: ActionId, img: &Image) -> Image {
    match action {
        ROTATE90 => rotate90(img),
        ERODE => erode(img),
        DILATE => dilate(img),
        BLUR => blur(img),
        INVERT => invert(img),
        other => panic!("unknown transform id {other}"),
    }
}

pub struct ImageEnv {
    cfg: ImageEnvConfig,
    actions: Vec<ActionInfo>,
    pool: Vec<Image>,
    dp: UsageDp,
}

impl ImageEnv {
    pub fn new(cfg: ImageEnvConfig, pool: Vec<Image>) -> Result<Self, EnvError> {
        cfg.validate().map_err(EnvError::InvalidConfig)?;
        if pool.is_empty() {
            return Err(EnvError::InvalidConfig("source pool is empty".into()));
        }
        for img in &pool {
            if img.side() != cfg.side {
                return Err(EnvError::DimensionMismatch {
                    expected: cfg.side,
                    got: img.side(),
                });
            }
        }
        let actions = TRANSFORM_NAMES
            .iter()
            .enumerate()
            .map(|(id, name)| ActionInfo {
                id,
                name: (*name).to_string(),
            })
            .collect();
        let dp = UsageDp::new(TRANSFORM_NAMES.len(), cfg.max_repeats, cfg.max_len);
        Ok(Self {
            cfg,
            actions,
            pool,
            dp,
        })
    }

    /// Environment over a procedurally generated fixture pool.
    pub fn with_procedural_pool(cfg: ImageEnvConfig, seed: u64, count: usize) -> Self {
        let side = cfg.side;
        let pool = (0..count)
            .map(|i| procedural_texture(side, seed, i as u64))
            .collect();
        Self::new(cfg, pool).expect("procedural pool matches config")
    }

    pub fn config(&self) -> &ImageEnvConfig {
        &self.cfg
    }

    pub fn pool(&self) -> &[Image] {
        &self.pool
    }

    pub fn pool_index_of(&self, img: &Image) -> Option<usize> {
        self.pool.iter().position(|p| p == img)
    }

    /// Uniform sample over all legal sequences of exactly `len` transforms,
    /// drawn step by step with weights from the completion-count DP.
    fn sample_sequence(&self, len: usize, rng: &mut dyn RngCore) -> Vec<ActionId> {
        let mut usage_state = 0usize;
        let mut out = Vec::with_capacity(len);
        for step in 0..len {
            let remaining = len - step - 1;
            let weights: Vec<u64> = (0..TRANSFORM_NAMES.len())
                .map(|sym| {
                    self.dp
                        .advance(usage_state, sym)
                        .map_or(0, |next| self.dp.completions(remaining, next))
                })
                .collect();
            let total: u64 = weights.iter().sum();
            debug_assert!(total > 0, "no legal completion");
            let mut draw = rng.random_range(0..total);
            let mut chosen = 0;
            for (sym, &w) in weights.iter().enumerate() {
                if draw < w {
                    chosen = sym;
                    break;
                }
                draw -= w;
            }
            usage_state = self
                .dp
                .advance(usage_state, chosen)
                .expect("weighted legal");
            out.push(chosen);
        }
        out
    }
}

impl Environment for ImageEnv {
    fn actions(&self) -> &[ActionInfo] {
        &self.actions
    }

    fn side(&self) -> u32 {
        self.cfg.side
    }

    fn max_depth(&self) -> usize {
        self.cfg.max_len
    }

    /// A transform already used `max_repeats` times is masked out.
    fn legal_mask(&self, _current: &Image, usage: &UsageCounter) -> Vec<bool> {
        (0..self.actions.len())
            .map(|a| usize::from(usage.count(a)) < self.cfg.max_repeats)
            .collect()
    }

    fn apply(&self, action: ActionId, image: &Image) -> Result<Image, EnvError> {
        if image.side() != self.cfg.side {
            return Err(EnvError::DimensionMismatch {
                expected: self.cfg.side,
                got: image.side(),
            });
        }
        if action >= self.actions.len() {
            return Err(EnvError::IllegalAction {
                action,
                position: None,
            });
        }
        Ok(apply_transform(action, image))
    }

    /// Draws a pool image and a uniformly random legal sequence of length
    /// `1..=max_len`; rejects pairs whose target equals the source or is
    /// already produced by a strict prefix of the sequence.
    fn generate_pair(&self, max_len: usize, rng: &mut dyn RngCore) -> Result<Episode, EnvError> {
        const MAX_ATTEMPTS: usize = 256;
        let max_len = max_len.min(self.cfg.max_len).max(1);
        'attempt: for _ in 0..MAX_ATTEMPTS {
            let source = self.pool[rng.random_range(0..self.pool.len())].clone();
            let len = rng.random_range(1..=max_len);
            let actions = self.sample_sequence(len, rng);
            let mut current = source.clone();
            let mut prefixes = Vec::with_capacity(len);
            for &a in &actions {
                current = apply_transform(a, &current);
                prefixes.push(current.clone());
            }
            let target = prefixes.pop().expect("len >= 1");
            if target == source || prefixes.contains(&target) {
                continue 'attempt;
            }
            return Ok(Episode {
                source,
                target,
                ground_truth: Trajectory::new(actions),
                reward: 0.0,
            });
        }
        Err(EnvError::GenerationFailure {
            attempts: MAX_ATTEMPTS,
        })
    }
}

/// Deterministic texture for fixture pools: layered sinusoid-free integer
/// patterns (gradients, checkers, blobs, stripes) picked by a per-image hash.
pub fn procedural_texture(side: u32, seed: u64, index: u64) -> Image {
    let mut h = crate::seeds::derive_seed(seed, "fixture", &[index]);
    let mut next = move || {
        h = h ^ (h >> 33);
        h = h.wrapping_mul(0xff51afd7ed558ccd);
        h = h ^ (h >> 29);
        h
    };
    let kind = next() % 4;
    let a = next();
    let b = next();
    let c = next();
    match kind {
        0 => {
            // Diagonal gradient with per-image slope and offset.
            let sx = 1 + (a % 7) as u32;
            let sy = 1 + (b % 7) as u32;
            let off = (c % 256) as u32;
            Image::from_fn(side, |r, c_| {
                (((r * sy + c_ * sx) * 255 / (side * 8)) + off) as u8
            })
        }
        1 => {
            // Checkerboard with random phase and tile size.
            let tile = 2 + (a % 6) as u32;
            let phase = (b % 2) as u32;
            let lo = (c % 96) as u8;
            let hi = 255 - (c % 64) as u8;
            Image::from_fn(side, |r, cc| {
                if ((r / tile + cc / tile) + phase).is_multiple_of(2) {
                    lo
                } else {
                    hi
                }
            })
        }
        2 => {
            // Soft blobs: inverse-square falloff around a few random centers.
            let count = 2 + (a % 4);
            let mut centers = Vec::new();
            for i in 0..count {
                let ca = crate::seeds::derive_seed(seed, "blob", &[index, i]);
                centers.push((
                    (ca % u64::from(side)) as i64,
                    ((ca >> 16) % u64::from(side)) as i64,
                    160 + (ca >> 32) % 96,
                ));
            }
            Image::from_fn(side, |r, cc| {
                let mut v = (b % 40) as i64;
                for &(cr, ccc, amp) in &centers {
                    let d2 = (r as i64 - cr).pow(2) + (cc as i64 - ccc).pow(2);
                    v += (amp as i64 * 16) / (16 + d2);
                }
                v.clamp(0, 255) as u8
            })
        }
        _ => {
            // Stripes with random direction and width.
            let width = 2 + (a % 5) as u32;
            let vertical = b % 2 == 0;
            let lo = (c % 80) as u8;
            let hi = 170 + (c % 80) as u8;
            Image::from_fn(side, |r, cc| {
                let coord = if vertical { cc } else { r };
                if (coord / width).is_multiple_of(2) {
                    lo
                } else {
                    hi
                }
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_env() -> ImageEnv {
        ImageEnv::with_procedural_pool(ImageEnvConfig::default(), 7, 16)
    }

    fn random_image(side: u32, seed: u64) -> Image {
        let mut state = seed | 1;
        Image::from_fn(side, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 33) as u8
        })
    }

    #[test]
    fn rotate_small_example() {
        let img = Image::new(2, 2, vec![10, 20, 30, 40]).unwrap();
        // [[a,b],[c,d]] -> [[b,d],[a,c]]
        assert_eq!(rotate90(&img).data(), &[20, 40, 10, 30]);
    }

    #[test]
    fn rotate_four_times_is_identity() {
        let img = random_image(9, 5);
        let mut out = img.clone();
        for _ in 0..4 {
            out = rotate90(&out);
        }
        assert_eq!(out, img);
    }

    #[test]
    fn invert_is_involution_and_flips_extremes() {
        let img = random_image(8, 3);
        assert_eq!(invert(&invert(&img)), img);
        assert_eq!(invert(&Image::zeros(4)), Image::filled(4, 255));
    }

    #[test]
    fn rotate_commutes_with_invert() {
        let img = random_image(7, 11);
        assert_eq!(rotate90(&invert(&img)), invert(&rotate90(&img)));
    }

    #[test]
    fn morphology_fixes_constants() {
        for v in [0u8, 127, 255] {
            let img = Image::filled(6, v);
            assert_eq!(erode(&img), img);
            assert_eq!(dilate(&img), img);
            assert_eq!(blur(&img), img);
        }
    }

    #[test]
    fn dilate_spreads_impulse_to_block() {
        let mut img = Image::zeros(5);
        img.set(2, 2, 255);
        let out = dilate(&img);
        for r in 0..5 {
            for c in 0..5 {
                let inside = (1..=3).contains(&r) && (1..=3).contains(&c);
                assert_eq!(out.get(r, c), if inside { 255 } else { 0 });
            }
        }
    }

    #[test]
    fn blur_impulse_center_rounds_down() {
        let mut img = Image::zeros(5);
        img.set(2, 2, 255);
        // 255 / 9 = 28.33..., round-half-up gives 28.
        assert_eq!(blur(&img).get(2, 2), 28);
    }

    #[test]
    fn blur_commutes_with_rotation() {
        for seed in 0..20 {
            let img = random_image(6, seed);
            assert_eq!(blur(&rotate90(&img)), rotate90(&blur(&img)));
        }
    }

    #[test]
    fn erode_dilate_duality_under_inversion() {
        for seed in 0..50 {
            let img = random_image(8, seed);
            assert_eq!(invert(&erode(&img)), dilate(&invert(&img)));
            assert_eq!(invert(&dilate(&img)), erode(&invert(&img)));
        }
    }

    #[test]
    fn mask_caps_repeats() {
        let env = test_env();
        let mut usage = env.new_usage();
        usage.bump(BLUR);
        usage.bump(BLUR);
        let mask = env.legal_mask(&env.pool()[0], &usage);
        assert!(!mask[BLUR]);
        assert!(mask[ERODE] && mask[ROTATE90] && mask[DILATE] && mask[INVERT]);
    }

    #[test]
    fn generated_pairs_respect_constraints() {
        let env = test_env();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..60 {
            let ep = env.generate_pair(10, &mut rng).unwrap();
            assert!((1..=10).contains(&ep.ground_truth.len()));
            for a in 0..TRANSFORM_NAMES.len() {
                let uses = ep.ground_truth.actions.iter().filter(|&&x| x == a).count();
                assert!(uses <= 2, "transform {a} used {uses} times");
            }
            let replay = env.apply_sequence(&ep.ground_truth, &ep.source).unwrap();
            assert_eq!(replay, ep.target);
            assert_ne!(ep.source, ep.target);
            // No strict prefix may already reach the target.
            let mut current = ep.source.clone();
            for &a in &ep.ground_truth.actions[..ep.ground_truth.len() - 1] {
                current = apply_transform(a, &current);
                assert_ne!(current, ep.target);
            }
        }
    }

    #[test]
    fn procedural_pool_is_reproducible() {
        let a = procedural_texture(32, 9, 4);
        let b = procedural_texture(32, 9, 4);
        assert_eq!(a, b);
        assert_ne!(a, procedural_texture(32, 9, 5));
    }

    proptest! {
        #[test]
        fn erode_below_dilate_pointwise(seed in any::<u64>()) {
            let img = random_image(8, seed);
            let lo = erode(&img);
            let hi = dilate(&img);
            for ((l, x), h) in lo.data().iter().zip(img.data()).zip(hi.data()) {
                prop_assert!(l <= x && x <= h);
            }
        }

        #[test]
        fn fold_law_split(seed in any::<u64>(), split in 0usize..6) {
            let env = ImageEnv::with_procedural_pool(ImageEnvConfig::default(), 3, 4);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ep = env.generate_pair(6, &mut rng).unwrap();
            let t = &ep.ground_truth;
            let split = split.min(t.len());
            let first = Trajectory::new(t.actions[..split].to_vec());
            let second = Trajectory::new(t.actions[split..].to_vec());
            let staged = env
                .apply_sequence(&second, &env.apply_sequence(&first, &ep.source).unwrap())
                .unwrap();
            prop_assert_eq!(staged, ep.target);
        }
    }
}
