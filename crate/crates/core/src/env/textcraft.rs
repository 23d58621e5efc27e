//! Text crafting over a seeded recipe tree.
//!
//! Each episode draws a recipe tree of configurable depth whose leaves are
//! base items from a shared pool. Base items are gathered with `get`,
//! intermediates are produced with `craft ... using ...`. The recipe list is
//! part of the goal message. Reward is binary.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;

use super::{EnvError, EnvSpec, Game, Outcome};
use crate::rng::SeededRng;

const BASE_ITEMS: &[&str] = &[
    "oak log", "iron ore", "coal", "string", "cobblestone", "sand", "wool", "copper ore",
    "clay", "feather", "flint", "redstone",
];

const INTERMEDIATES: &[&str] = &[
    "oak plank", "stick", "iron ingot", "gear", "rope", "glass pane", "brick", "frame",
    "lens", "panel", "wheel", "hinge", "bolt", "torch", "copper wire", "spring", "axle",
    "furnace", "pulley", "lever", "chest", "lantern", "compass", "bucket", "rail",
    "piston", "arrow", "bow", "clock", "cart", "dial", "crate",
];

static GET_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^get\s+(?:(\d+)\s+)?(.+)$").expect("valid regex"));
static CRAFT_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^craft\s+(?:(\d+)\s+)?(.+?)\s+using\s+(.+)$").expect("valid regex")
});
static INGREDIENT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d+)\s+(.+)$").expect("valid regex"));

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recipe {
    pub output: String,
    pub ingredients: Vec<(String, u32)>,
}

impl Recipe {
    pub fn command(&self) -> String {
        let parts: Vec<String> =
            self.ingredients.iter().map(|(name, n)| format!("{n} {name}")).collect();
        format!("craft 1 {} using {}", self.output, parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Get { item: String, count: u32 },
    Craft { item: String, ingredients: Vec<(String, u32)> },
    Inventory,
}

#[derive(Debug, Clone)]
pub struct TextCraft {
    target: String,
    /// Recipes keyed by output item.
    recipes: BTreeMap<String, Recipe>,
    /// Recipe listing order shown in the goal.
    listing: Vec<String>,
    inventory: BTreeMap<String, u32>,
}

impl TextCraft {
    pub fn generate(spec: &EnvSpec, rng: &mut SeededRng) -> Result<Self, EnvError> {
        let depth: usize = spec.knob("depth", 4)?;
        if !(1..=5).contains(&depth) {
            return Err(EnvError::Config("textcraft depth must be in 1..=5".into()));
        }
        let mut names: Vec<&str> = INTERMEDIATES.to_vec();
        names.shuffle(rng);
        let mut names = names.into_iter();
        let target = names.next().unwrap_or("crate").to_string();
        let mut recipes = BTreeMap::new();
        let mut frontier = vec![(target.clone(), 1usize)];
        while let Some((item, level)) = frontier.pop() {
            let branching = rng.gen_range(2..=3);
            let mut bases: Vec<&str> = BASE_ITEMS.to_vec();
            bases.shuffle(rng);
            let mut ingredients = Vec::new();
            for k in 0..branching {
                // The first slot keeps the tree at full depth.
                let deeper = level < depth && (k == 0 || rng.gen_bool(0.3));
                match deeper.then(|| names.next()).flatten() {
                    Some(name) => {
                        ingredients.push((name.to_string(), 1));
                        frontier.push((name.to_string(), level + 1));
                    }
                    None => ingredients.push((bases[k].to_string(), rng.gen_range(1..=3))),
                }
            }
            recipes.insert(
                item.clone(),
                Recipe {
                    output: item,
                    ingredients,
                },
            );
        }
        let mut listing: Vec<String> = recipes.keys().cloned().collect();
        listing.shuffle(rng);
        Ok(Self {
            target,
            recipes,
            listing,
            inventory: BTreeMap::new(),
        })
    }

    pub fn from_recipes(target: &str, recipes: Vec<Recipe>) -> Self {
        let listing = recipes.iter().map(|r| r.output.clone()).collect();
        Self {
            target: target.to_string(),
            recipes: recipes.into_iter().map(|r| (r.output.clone(), r)).collect(),
            listing,
            inventory: BTreeMap::new(),
        }
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn recipe(&self, item: &str) -> Option<&Recipe> {
        self.recipes.get(item)
    }

    pub fn count(&self, item: &str) -> u32 {
        self.inventory.get(item).copied().unwrap_or(0)
    }

    fn is_base(&self, item: &str) -> bool {
        !self.recipes.contains_key(item)
    }

    fn is_known(&self, item: &str) -> bool {
        self.recipes.contains_key(item)
            || self.recipes.values().any(|r| r.ingredients.iter().any(|(n, _)| n == item))
    }

    /// Parses the last command in the text.
    pub fn parse(text: &str) -> Option<Command> {
        let lower = text.to_ascii_lowercase();
        let start = ["get ", "craft ", "inventory"]
            .iter()
            .filter_map(|k| {
                lower.match_indices(k).map(|(i, _)| i).filter(|&i| {
                    i == 0 || !lower.as_bytes()[i - 1].is_ascii_alphanumeric()
                }).last()
            })
            .max()?;
        let line = lower[start..].lines().next().unwrap_or("");
        let line = line.trim().trim_end_matches(['.', '!', '`', '"', '\'']).trim();
        if line.starts_with("inventory") {
            return Some(Command::Inventory);
        }
        let count = |m: Option<regex::Match>| m.map_or(Some(1), |m| m.as_str().parse().ok());
        if let Some(c) = GET_RE.captures(line) {
            return Some(Command::Get {
                item: c[2].trim().to_string(),
                count: count(c.get(1))?,
            });
        }
        let c = CRAFT_RE.captures(line)?;
        let ingredients = c[3]
            .split(',')
            .map(|part| {
                let m = INGREDIENT_RE.captures(part.trim())?;
                Some((m[2].trim().to_string(), m[1].parse().ok()?))
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Command::Craft {
            item: c[2].trim().to_string(),
            ingredients,
        })
    }

    /// Outstanding base deficits and intermediates still to craft, given
    /// the current inventory.
    fn outstanding(&self) -> (BTreeMap<String, u32>, Vec<String>) {
        let mut sim = self.inventory.clone();
        let mut deficits = BTreeMap::new();
        let mut crafts = Vec::new();
        self.require(&self.target, 1, &mut sim, &mut deficits, &mut crafts);
        (deficits, crafts)
    }

    fn require(
        &self,
        item: &str,
        qty: u32,
        sim: &mut BTreeMap<String, u32>,
        deficits: &mut BTreeMap<String, u32>,
        crafts: &mut Vec<String>,
    ) {
        let have = sim.entry(item.to_string()).or_insert(0);
        let taken = (*have).min(qty);
        *have -= taken;
        let missing = qty - taken;
        if missing == 0 {
            return;
        }
        match self.recipes.get(item) {
            None => *deficits.entry(item.to_string()).or_insert(0) += missing,
            Some(recipe) => {
                for (ing, n) in &recipe.ingredients {
                    self.require(ing, n * missing, sim, deficits, crafts);
                }
                crafts.push(item.to_string());
            }
        }
    }

    fn can_craft(&self, recipe: &Recipe) -> bool {
        recipe.ingredients.iter().all(|(n, q)| self.count(n) >= *q)
    }

    fn inventory_text(&self) -> String {
        let items: Vec<String> = self
            .inventory
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(k, n)| format!("{n} {k}"))
            .collect();
        if items.is_empty() {
            "empty".to_string()
        } else {
            items.join(", ")
        }
    }
}

impl Game for TextCraft {
    fn instructions(&self) -> String {
        "You are crafting items in a text world. Commands: `get <n> <item>` gathers a base \
         item, `craft <n> <item> using <n> <ingredient>, <n> <ingredient>` crafts one item \
         from a listed recipe, and `inventory` shows what you hold. Reply with one command."
            .to_string()
    }

    fn goal(&self) -> String {
        let lines: Vec<String> =
            self.listing.iter().map(|k| self.recipes[k].command()).collect();
        format!("Goal: craft 1 {}.\nRecipes:\n{}", self.target, lines.join("\n"))
    }

    fn render(&self) -> String {
        format!(
            "Inventory: {}.\nValid actions: get <n> <item>, craft <n> <item> using <ingredients>, inventory.",
            self.inventory_text()
        )
    }

    fn apply(&mut self, action: &str) -> Outcome {
        let Some(cmd) = Self::parse(action) else {
            return Outcome::Invalid("use `get`, `craft ... using ...`, or `inventory`.".into());
        };
        match cmd {
            Command::Inventory => Outcome::Continue(format!("You hold: {}.", self.inventory_text())),
            Command::Get { item, count } => {
                if !self.is_known(&item) || !self.is_base(&item) {
                    return Outcome::Invalid(format!("{item} cannot be gathered."));
                }
                if count == 0 || count > 64 {
                    return Outcome::Invalid("you can get between 1 and 64 items at once.".into());
                }
                *self.inventory.entry(item.clone()).or_insert(0) += count;
                Outcome::Continue(format!("Got {count} {item}."))
            }
            Command::Craft { item, ingredients } => {
                let Some(recipe) = self.recipes.get(&item).cloned() else {
                    return Outcome::Invalid(format!("there is no recipe for {item}."));
                };
                let mut given = ingredients;
                given.sort();
                let mut expected = recipe.ingredients.clone();
                expected.sort();
                if given != expected {
                    return Outcome::Invalid(format!("wrong ingredients; use `{}`.", recipe.command()));
                }
                if !self.can_craft(&recipe) {
                    return Outcome::Invalid(format!("not enough ingredients for {item}."));
                }
                for (n, q) in &recipe.ingredients {
                    if let Some(have) = self.inventory.get_mut(n) {
                        *have -= q;
                    }
                }
                *self.inventory.entry(item.clone()).or_insert(0) += 1;
                if item == self.target {
                    Outcome::Goal(format!("Crafted 1 {item}!"))
                } else {
                    Outcome::Continue(format!("Crafted 1 {item}."))
                }
            }
        }
    }

    fn partial_reward(&self) -> f64 {
        0.0
    }

    fn optimal_hint(&self) -> Option<String> {
        if self.count(&self.target) > 0 {
            return None;
        }
        let (deficits, crafts) = self.outstanding();
        if let Some(recipe) = crafts
            .iter()
            .map(|c| &self.recipes[c])
            .find(|r| self.can_craft(r))
        {
            return Some(recipe.command());
        }
        deficits
            .iter()
            .next()
            .map(|(item, n)| format!("get {n} {item}"))
    }

    fn action_space(&self) -> Vec<String> {
        let mut actions: Vec<String> = self
            .recipes
            .values()
            .flat_map(|r| r.ingredients.iter().map(|(n, _)| n.clone()))
            .filter(|n| self.is_base(n))
            .map(|n| format!("get 1 {n}"))
            .collect();
        actions.sort();
        actions.dedup();
        actions.extend(self.listing.iter().map(|k| self.recipes[k].command()));
        actions.push("inventory".to_string());
        actions
    }

    fn clone_box(&self) -> Box<dyn Game> {
        Box::new(self.clone())
    }
}
