use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::features::{FeatureSpec, FeatureVector};
use crate::error::{LabError, Result};

/// Fixed map for environment B: both exits from the start cell are covered by
/// keys, so the agent always holds a key before it can reach any food. One
/// food lies on the shortest key-to-chest route; the second sits across the
/// grid at exactly the distance an agent that banked the first food can still
/// cover after opening the chest, so eating without a key takes a deliberate
/// detour that a wandering agent almost never completes.
pub const FIXED_B_LAYOUT: &str = "\
PK.....
K......
..F....
...C...
.......
.......
.F....B
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Item {
    Empty,
    Food,
    Key,
    Chest,
    Button,
}

/// Map family. `RandomA` is a 5x5 grid with randomly placed items, `FixedB`
/// the hand-authored map above, `RandomC` a 10x10 grid where food is placed
/// near the key and the chest far from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    RandomA,
    FixedB,
    RandomC,
}

impl Layout {
    /// (food, keys, chests, buttons) placed by this layout.
    pub fn item_counts(&self) -> (usize, usize, usize, usize) {
        match self {
            Layout::RandomA => (2, 1, 1, 1),
            Layout::FixedB => (2, 2, 1, 1),
            Layout::RandomC => (3, 1, 1, 1),
        }
    }

    pub fn grid_size(&self) -> (usize, usize) {
        match self {
            Layout::RandomA => (5, 5),
            Layout::FixedB => (7, 7),
            Layout::RandomC => (10, 10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub layout: Layout,
    /// Probability that a cell without food displays food in the observation.
    pub food_noise_prob: f64,
    pub initial_health: i64,
    pub food_health_gain: i64,
    pub chest_reward: f64,
    pub max_episode_steps: usize,
    pub seed: u64,
}

impl GridConfig {
    pub fn for_layout(layout: Layout) -> Self {
        let (width, height) = layout.grid_size();
        let (initial_health, max_episode_steps) = match layout {
            Layout::RandomA => (10, 30),
            Layout::FixedB => (12, 40),
            Layout::RandomC => (12, 60),
        };
        Self {
            width,
            height,
            layout,
            food_noise_prob: 0.2,
            initial_health,
            food_health_gain: 5,
            chest_reward: 1.0,
            max_episode_steps,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.layout.grid_size();
        if self.width != w || self.height != h {
            return Err(LabError::Config(format!(
                "layout {:?} requires a {w}x{h} grid, got {}x{}",
                self.layout, self.width, self.height
            )));
        }
        let (f, k, c, b) = self.layout.item_counts();
        if self.width * self.height < f + k + c + b + 1 {
            return Err(LabError::Config("grid too small for items and player".into()));
        }
        if !(0.0..=1.0).contains(&self.food_noise_prob) {
            return Err(LabError::Config(format!(
                "food_noise_prob {} outside [0, 1]",
                self.food_noise_prob
            )));
        }
        if self.initial_health <= 0 {
            return Err(LabError::Config("initial_health must be positive".into()));
        }
        if self.max_episode_steps == 0 {
            return Err(LabError::Config("max_episode_steps must be positive".into()));
        }
        Ok(())
    }

    /// Highest health reachable: the initial budget plus every food on the map.
    pub fn max_health(&self) -> i64 {
        let (food, _, _, _) = self.layout.item_counts();
        self.initial_health + self.food_health_gain * food as i64
    }

    /// Feature spec of the learner's view of this environment: counters,
    /// event flags, the noisy food-visibility count, the step reward, and the
    /// keys-and-food conjunction.
    pub fn feature_spec(&self) -> FeatureSpec {
        let (_, keys, _, _) = self.layout.item_counts();
        let cells = (self.width * self.height) as f64;
        FeatureSpec::new(
            vec![
                ("health".into(), 0.0, self.max_health() as f64),
                ("keys".into(), 0.0, keys as f64),
                ("lamp".into(), 0.0, 1.0),
                ("food_collected".into(), 0.0, 1.0),
                ("key_collected".into(), 0.0, 1.0),
                ("chest_opened".into(), 0.0, 1.0),
                ("button_pressed".into(), 0.0, 1.0),
                ("food_visible".into(), 0.0, cells),
                ("reward".into(), 0.0, self.chest_reward.max(0.0)),
            ],
            vec![(1, 3)],
        )
        .expect("keychest feature spec is well-formed")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    NoOp,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::NoOp];

    pub fn from_index(i: usize) -> Result<Self> {
        Action::ALL
            .get(i)
            .copied()
            .ok_or_else(|| LabError::Usage(format!("action index {i} out of range 0..5")))
    }

    fn delta(&self) -> (i64, i64) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::NoOp => (0, 0),
        }
    }
}

/// Event flags applied with a one-step delay, so the learner can see the
/// event at step t and its effect on the counters at step t+1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Pending {
    pub food: bool,
    pub key: bool,
    pub chest: bool,
    pub button: bool,
}

/// What the feature extractor reads off one step: counters after the delayed
/// updates, this step's event flags, the noisy food-visibility count, and the
/// reward emitted this step.
///
/// `food_collected` is derived from the rendered observation, so it also
/// fires when the agent walks onto a cell that merely displays food because
/// of observation noise. The other event flags are noiseless.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureObservation {
    pub health: i64,
    pub keys: i64,
    pub lamp: bool,
    pub food_collected: bool,
    pub key_collected: bool,
    pub chest_opened: bool,
    pub button_pressed: bool,
    pub food_visible_count: usize,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct GridState {
    pub player: (usize, usize),
    pub items: Vec<Item>,
    pub health: i64,
    pub keys: i64,
    pub lamp: bool,
    pub pending: Pending,
    pub step_count: usize,
    pub done: bool,
    width: usize,
    height: usize,
    rng: ChaCha8Rng,
    displayed_food: Vec<bool>,
    last_obs: FeatureObservation,
}

impl GridState {
    fn cell(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn item_at(&self, row: usize, col: usize) -> Item {
        self.items[self.cell(row, col)]
    }

    /// The observation produced by the most recent reset or step.
    pub fn observation(&self) -> &FeatureObservation {
        &self.last_obs
    }

    pub fn displayed_food(&self) -> &[bool] {
        &self.displayed_food
    }

    fn render(&mut self, noise_prob: f64) {
        self.displayed_food.clear();
        for item in &self.items {
            let shown = *item == Item::Food || (noise_prob > 0.0 && self.rng.gen::<f64>() < noise_prob);
            self.displayed_food.push(shown);
        }
    }
}

/// Parses a plain-text layout (`.`=empty, `P`=player, `F`=food, `K`=key,
/// `C`=chest, `B`=button). Returns (width, height, items, player position).
pub fn parse_layout(text: &str) -> Result<(usize, usize, Vec<Item>, (usize, usize))> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.is_empty() {
        return Err(LabError::Parse { path: "<layout>".into(), detail: "empty layout".into() });
    }
    let width = rows[0].chars().count();
    let height = rows.len();
    let mut items = Vec::with_capacity(width * height);
    let mut player = None;
    for (r, row) in rows.iter().enumerate() {
        if row.chars().count() != width {
            return Err(LabError::Parse {
                path: "<layout>".into(),
                detail: format!("row {r} has width {} != {width}", row.chars().count()),
            });
        }
        for (c, ch) in row.chars().enumerate() {
            let item = match ch {
                '.' => Item::Empty,
                'F' => Item::Food,
                'K' => Item::Key,
                'C' => Item::Chest,
                'B' => Item::Button,
                'P' => {
                    if player.replace((r, c)).is_some() {
                        return Err(LabError::Parse {
                            path: "<layout>".into(),
                            detail: "multiple player cells".into(),
                        });
                    }
                    Item::Empty
                }
                other => {
                    return Err(LabError::Parse {
                        path: "<layout>".into(),
                        detail: format!("unknown cell character {other:?}"),
                    })
                }
            };
            items.push(item);
        }
    }
    let player = player.ok_or_else(|| LabError::Parse {
        path: "<layout>".into(),
        detail: "no player cell".into(),
    })?;
    Ok((width, height, items, player))
}

/// Renders items and player back to the text layout format.
pub fn render_layout(width: usize, items: &[Item], player: (usize, usize)) -> String {
    let height = items.len() / width;
    let mut out = String::with_capacity((width + 1) * height);
    for r in 0..height {
        for c in 0..width {
            let ch = if (r, c) == player {
                'P'
            } else {
                match items[r * width + c] {
                    Item::Empty => '.',
                    Item::Food => 'F',
                    Item::Key => 'K',
                    Item::Chest => 'C',
                    Item::Button => 'B',
                }
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}

fn place_random_a(config: &GridConfig, rng: &mut ChaCha8Rng) -> (Vec<Item>, (usize, usize)) {
    let cells = config.width * config.height;
    let mut order: Vec<usize> = (0..cells).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let (food, keys, chests, buttons) = config.layout.item_counts();
    let mut items = vec![Item::Empty; cells];
    let mut it = order.into_iter();
    for _ in 0..food {
        items[it.next().unwrap()] = Item::Food;
    }
    for _ in 0..keys {
        items[it.next().unwrap()] = Item::Key;
    }
    for _ in 0..chests {
        items[it.next().unwrap()] = Item::Chest;
    }
    for _ in 0..buttons {
        items[it.next().unwrap()] = Item::Button;
    }
    let p = it.next().unwrap();
    (items, (p / config.width, p % config.width))
}

fn manhattan(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

/// Environment C: food clusters within distance 2 of the key, chest at least
/// distance 10 away from the key.
fn place_random_c(config: &GridConfig, rng: &mut ChaCha8Rng) -> (Vec<Item>, (usize, usize)) {
    let w = config.width;
    let h = config.height;
    let cells = w * h;
    let (n_food, _, _, _) = config.layout.item_counts();
    loop {
        let mut items = vec![Item::Empty; cells];
        let key = (rng.gen_range(0..h), rng.gen_range(0..w));
        let far: Vec<(usize, usize)> = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .filter(|&p| manhattan(p, key) >= 10)
            .collect();
        if far.is_empty() {
            continue;
        }
        let near: Vec<(usize, usize)> = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .filter(|&p| p != key && manhattan(p, key) <= 2)
            .collect();
        if near.len() < n_food {
            continue;
        }
        items[key.0 * w + key.1] = Item::Key;
        let chest = far[rng.gen_range(0..far.len())];
        items[chest.0 * w + chest.1] = Item::Chest;
        let mut near = near;
        for _ in 0..n_food {
            let idx = rng.gen_range(0..near.len());
            let p = near.swap_remove(idx);
            items[p.0 * w + p.1] = Item::Food;
        }
        let free: Vec<usize> = (0..cells).filter(|&i| items[i] == Item::Empty).collect();
        let button = free[rng.gen_range(0..free.len())];
        items[button] = Item::Button;
        let free: Vec<usize> = (0..cells).filter(|&i| items[i] == Item::Empty).collect();
        let player = free[rng.gen_range(0..free.len())];
        return (items, (player / w, player % w));
    }
}

/// Places items per the layout and returns the initial state. The initial
/// observation (with noise already rendered) is available via
/// [`GridState::observation`].
pub fn keychest_reset(config: &GridConfig, seed: u64) -> Result<GridState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (items, player) = match config.layout {
        Layout::RandomA => place_random_a(config, &mut rng),
        Layout::RandomC => place_random_c(config, &mut rng),
        Layout::FixedB => {
            let (w, h, items, player) = parse_layout(FIXED_B_LAYOUT)?;
            debug_assert_eq!((w, h), (config.width, config.height));
            (items, player)
        }
    };
    let mut state = GridState {
        player,
        items,
        health: config.initial_health,
        keys: 0,
        lamp: false,
        pending: Pending::default(),
        step_count: 0,
        done: false,
        width: config.width,
        height: config.height,
        rng,
        displayed_food: Vec::new(),
        last_obs: FeatureObservation {
            health: config.initial_health,
            keys: 0,
            lamp: false,
            food_collected: false,
            key_collected: false,
            chest_opened: false,
            button_pressed: false,
            food_visible_count: 0,
            reward: 0.0,
        },
    };
    state.render(config.food_noise_prob);
    state.last_obs.food_visible_count = state.displayed_food.iter().filter(|&&d| d).count();
    Ok(state)
}

/// Advances the environment one step.
///
/// Update order: delayed events from the previous step are applied first
/// (health gain, key gain, chest key-consumption plus reward, lamp toggle),
/// then health decrements, then the player moves and item events at the
/// destination are recorded for the next step. Item events fire only when the
/// player enters a cell, not when it stays put.
pub fn keychest_step(
    state: &mut GridState,
    config: &GridConfig,
    action: Action,
) -> Result<(FeatureObservation, f64, bool)> {
    if state.done {
        return Err(LabError::Usage("keychest_step called on a finished episode".into()));
    }
    let mut reward = 0.0;
    if state.pending.food {
        state.health += config.food_health_gain;
    }
    if state.pending.key {
        state.keys += 1;
    }
    if state.pending.chest {
        state.keys -= 1;
        reward += config.chest_reward;
    }
    if state.pending.button {
        state.lamp = !state.lamp;
    }
    state.pending = Pending::default();

    state.health -= 1;
    if state.health < 0 {
        state.health = 0;
    }

    let (dr, dc) = action.delta();
    let nr = (state.player.0 as i64 + dr).clamp(0, state.height as i64 - 1) as usize;
    let nc = (state.player.1 as i64 + dc).clamp(0, state.width as i64 - 1) as usize;
    let moved = (nr, nc) != state.player;
    state.player = (nr, nc);

    let mut real_food = false;
    let mut key_collected = false;
    let mut chest_opened = false;
    let mut button_pressed = false;
    if moved {
        let idx = state.cell(nr, nc);
        match state.items[idx] {
            Item::Food => {
                state.items[idx] = Item::Empty;
                state.pending.food = true;
                real_food = true;
            }
            Item::Key => {
                state.items[idx] = Item::Empty;
                state.pending.key = true;
                key_collected = true;
            }
            Item::Chest => {
                if state.keys > 0 {
                    state.items[idx] = Item::Empty;
                    state.pending.chest = true;
                    chest_opened = true;
                }
            }
            Item::Button => {
                state.pending.button = true;
                button_pressed = true;
            }
            Item::Empty => {}
        }
    }

    state.step_count += 1;
    state.done = state.health == 0 || state.step_count >= config.max_episode_steps;

    state.render(config.food_noise_prob);
    let player_idx = state.cell(state.player.0, state.player.1);
    let food_collected = real_food || (moved && state.displayed_food[player_idx]);
    let obs = FeatureObservation {
        health: state.health,
        keys: state.keys,
        lamp: state.lamp,
        food_collected,
        key_collected,
        chest_opened,
        button_pressed,
        food_visible_count: state.displayed_food.iter().filter(|&&d| d).count(),
        reward,
    };
    state.last_obs = obs.clone();
    Ok((obs, reward, state.done))
}

/// Maps one step's observation onto the learner's feature vector.
pub fn extract_features(obs: &FeatureObservation, spec: &FeatureSpec) -> Result<FeatureVector> {
    let base = [
        obs.health as f64,
        obs.keys as f64,
        if obs.lamp { 1.0 } else { 0.0 },
        if obs.food_collected { 1.0 } else { 0.0 },
        if obs.key_collected { 1.0 } else { 0.0 },
        if obs.chest_opened { 1.0 } else { 0.0 },
        if obs.button_pressed { 1.0 } else { 0.0 },
        obs.food_visible_count as f64,
        obs.reward,
    ];
    spec.augment(&base)
}

/// Observation the policy acts on: per-cell planes for displayed food, keys,
/// chests, buttons and the player position, plus scaled health, key count and
/// lamp scalars. Richer than the learner's features.
pub fn policy_observation(state: &GridState, config: &GridConfig) -> Vec<f64> {
    let cells = config.width * config.height;
    let mut obs = vec![0.0; 5 * cells + 3];
    for i in 0..cells {
        if state.displayed_food[i] {
            obs[i] = 1.0;
        }
        match state.items[i] {
            Item::Key => obs[cells + i] = 1.0,
            Item::Chest => obs[2 * cells + i] = 1.0,
            Item::Button => obs[3 * cells + i] = 1.0,
            _ => {}
        }
    }
    obs[4 * cells + state.player.0 * config.width + state.player.1] = 1.0;
    obs[5 * cells] = state.health as f64 / config.initial_health as f64;
    obs[5 * cells + 1] = state.keys as f64;
    obs[5 * cells + 2] = if state.lamp { 1.0 } else { 0.0 };
    obs
}
