//! Symbolic tabletop domain: colored blocks and bowls on a grid, referring
//! expressions over them, and the ground-truth ambiguity label.

mod render;
mod sample;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use render::{
    cell_center, render_png, render_scene, BACKGROUND, BLOCK_SIDE, BOWL_RADIUS, IMAGE_SIZE,
};
pub use sample::{sample_scene, DEFAULT_OBJECTS};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum WorldError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid sampling range: {0}")]
    InvalidRange(String),
    #[error("referent {0:?} matches no object")]
    UnmatchableReferent(String),
    #[error("no attribute distinguishes the intended object {0}")]
    NoDistinguishingAttribute(String),
    #[error("image encoding failed: {0}")]
    Image(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Block,
    Bowl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Orange,
    Purple,
}

/// Spatial superlative used to single out one object among several.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ordinal {
    Leftmost,
    Rightmost,
    Frontmost,
    Backmost,
}

impl Category {
    pub const ALL: [Category; 2] = [Category::Block, Category::Bowl];

    pub fn name(self) -> &'static str {
        match self {
            Category::Block => "block",
            Category::Bowl => "bowl",
        }
    }
}

impl Color {
    pub const ALL: [Color; 6] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Orange,
        Color::Purple,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Orange => "orange",
            Color::Purple => "purple",
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [220, 50, 47],
            Color::Green => [0, 160, 70],
            Color::Blue => [38, 110, 220],
            Color::Yellow => [240, 200, 0],
            Color::Orange => [245, 130, 30],
            Color::Purple => [130, 70, 200],
        }
    }
}

impl Ordinal {
    /// Order in which the simulated user tries ordinals.
    pub const ALL: [Ordinal; 4] = [
        Ordinal::Leftmost,
        Ordinal::Rightmost,
        Ordinal::Frontmost,
        Ordinal::Backmost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ordinal::Leftmost => "leftmost",
            Ordinal::Rightmost => "rightmost",
            Ordinal::Frontmost => "frontmost",
            Ordinal::Backmost => "backmost",
        }
    }

    /// Sort key whose minimum is the extremal object. Columns grow to the
    /// right and rows grow toward the front of the table.
    fn key(self, cell: Cell) -> (i32, i32) {
        let (c, r) = (i32::from(cell.0), i32::from(cell.1));
        match self {
            Ordinal::Leftmost => (c, r),
            Ordinal::Rightmost => (-c, r),
            Ordinal::Frontmost => (-r, c),
            Ordinal::Backmost => (r, c),
        }
    }
}

macro_rules! word_from_str {
    ($ty:ty) => {
        impl FromStr for $ty {
            type Err = ();

            fn from_str(s: &str) -> Result<Self, ()> {
                <$ty>::ALL.into_iter().find(|v| v.name() == s).ok_or(())
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

word_from_str!(Category);
word_from_str!(Color);
word_from_str!(Ordinal);

/// `(col, row)` on the table grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell(pub u8, pub u8);

/// `(cols, rows)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid(pub u8, pub u8);

impl Default for Grid {
    fn default() -> Self {
        Grid(6, 4)
    }
}

impl Grid {
    pub fn contains(&self, cell: Cell) -> bool {
        cell.0 < self.0 && cell.1 < self.1
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.1).flat_map(move |r| (0..self.0).map(move |c| Cell(c, r)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub category: Category,
    pub color: Color,
    pub cell: Cell,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: String,
    pub grid: Grid,
    pub seed: u64,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn validate(&self) -> Result<(), WorldError> {
        if !DEFAULT_OBJECTS.contains(&self.objects.len()) {
            return Err(WorldError::InvalidScene(format!(
                "{} objects",
                self.objects.len()
            )));
        }
        let mut ids = BTreeSet::new();
        let mut cells = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.id.as_str()) {
                return Err(WorldError::InvalidScene(format!("duplicate id {}", o.id)));
            }
            if !self.grid.contains(o.cell) {
                return Err(WorldError::InvalidScene(format!(
                    "{} outside the grid",
                    o.id
                )));
            }
            if !cells.insert(o.cell) {
                return Err(WorldError::InvalidScene(format!(
                    "two objects in cell {:?}",
                    o.cell
                )));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}

/// Description of one or more objects: a category, optionally narrowed by
/// color and then by an ordinal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReferringExpression {
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Color>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<Ordinal>,
}

impl ReferringExpression {
    pub fn new(category: Category) -> Self {
        ReferringExpression {
            category,
            color: None,
            ordinal: None,
        }
    }

    pub fn with_color(mut self, color: Color) -> Self {
        self.color = Some(color);
        self
    }

    pub fn with_ordinal(mut self, ordinal: Ordinal) -> Self {
        self.ordinal = Some(ordinal);
        self
    }

    /// Canonical description, e.g. `"leftmost blue block"`.
    pub fn describe(&self) -> String {
        let mut words = Vec::with_capacity(3);
        if let Some(o) = self.ordinal {
            words.push(o.name());
        }
        if let Some(c) = self.color {
            words.push(c.name());
        }
        words.push(self.category.name());
        words.join(" ")
    }

    /// Inverse of [`describe`](Self::describe), after normalization.
    pub fn parse(description: &str) -> Option<Self> {
        let normalized = normalize(description);
        let mut words: Vec<&str> = normalized.split(' ').collect();
        let category: Category = words.pop()?.parse().ok()?;
        let mut expr = ReferringExpression::new(category);
        let mut rest = words.into_iter().peekable();
        if let Some(o) = rest.peek().and_then(|w| w.parse::<Ordinal>().ok()) {
            expr.ordinal = Some(o);
            rest.next();
        }
        if let Some(c) = rest.peek().and_then(|w| w.parse::<Color>().ok()) {
            expr.color = Some(c);
            rest.next();
        }
        rest.next().is_none().then_some(expr)
    }
}

impl fmt::Display for ReferringExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Ids of the objects `expr` denotes, in scene order.
pub fn match_expression<'s>(expr: &ReferringExpression, scene: &'s Scene) -> Vec<&'s SceneObject> {
    let filtered: Vec<&SceneObject> = scene
        .objects
        .iter()
        .filter(|o| o.category == expr.category && expr.color.is_none_or(|c| c == o.color))
        .collect();
    match expr.ordinal {
        None => filtered,
        Some(ordinal) => filtered
            .into_iter()
            .min_by_key(|o| ordinal.key(o.cell))
            .into_iter()
            .collect(),
    }
}

pub fn match_ids(expr: &ReferringExpression, scene: &Scene) -> BTreeSet<String> {
    match_expression(expr, scene)
        .into_iter()
        .map(|o| o.id.clone())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// "pick up the {0}"
    Pick,
    /// "put the {0} in the {1}"
    MoveTo,
    /// "stack the {0} on the {1}"
    Stack,
}

impl Template {
    pub const ALL: [Template; 3] = [Template::Pick, Template::MoveTo, Template::Stack];

    pub fn arity(self) -> usize {
        match self {
            Template::Pick => 1,
            Template::MoveTo | Template::Stack => 2,
        }
    }

    /// Categories each slot must refer to.
    pub fn slot_categories(self) -> &'static [Option<Category>] {
        match self {
            Template::Pick => &[None],
            Template::MoveTo => &[Some(Category::Block), Some(Category::Bowl)],
            Template::Stack => &[Some(Category::Block), Some(Category::Block)],
        }
    }

    pub fn realize(self, referents: &[ReferringExpression]) -> String {
        match self {
            Template::Pick => format!("pick up the {}", referents[0]),
            Template::MoveTo => format!("put the {} in the {}", referents[0], referents[1]),
            Template::Stack => format!("stack the {} on the {}", referents[0], referents[1]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub task_id: String,
    pub scene_id: String,
    pub template: Template,
    pub text: String,
    pub referents: Vec<ReferringExpression>,
    pub intended: Vec<String>,
    pub ambiguous: bool,
    pub split: Split,
}

impl TaskInstance {
    /// Canonical descriptions of the referents, as the task text states them.
    pub fn referent_descriptions(&self) -> Vec<String> {
        self.referents
            .iter()
            .map(ReferringExpression::describe)
            .collect()
    }

    pub fn validate(&self, scene: &Scene) -> Result<(), WorldError> {
        if self.scene_id != scene.scene_id {
            return Err(WorldError::InvalidScene(format!(
                "task {} is not in scene {}",
                self.task_id, scene.scene_id
            )));
        }
        if self.intended.len() != self.referents.len()
            || self.referents.len() != self.template.arity()
        {
            return Err(WorldError::InvalidScene(format!(
                "task {} has mismatched referents",
                self.task_id
            )));
        }
        for (id, expr) in self.intended.iter().zip(&self.referents) {
            if !match_ids(expr, scene).contains(id) {
                return Err(WorldError::InvalidScene(format!(
                    "{id} is not denoted by {expr}"
                )));
            }
        }
        if self.ambiguous != ambiguity_label(self, scene)? {
            return Err(WorldError::InvalidScene(format!(
                "task {} carries a stale label",
                self.task_id
            )));
        }
        Ok(())
    }
}

/// True iff some referent denotes two or more objects.
pub fn ambiguity_label(task: &TaskInstance, scene: &Scene) -> Result<bool, WorldError> {
    let mut ambiguous = false;
    for expr in &task.referents {
        match match_expression(expr, scene).len() {
            0 => return Err(WorldError::UnmatchableReferent(expr.describe())),
            1 => {}
            _ => ambiguous = true,
        }
    }
    Ok(ambiguous)
}

/// One attribute a user can add to narrow a referent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Refinement {
    Color(Color),
    Ordinal(Ordinal),
}

impl Refinement {
    pub fn apply(self, expr: ReferringExpression) -> ReferringExpression {
        match self {
            Refinement::Color(c) => expr.with_color(c),
            Refinement::Ordinal(o) => expr.with_ordinal(o),
        }
    }

    /// `"the blue one"`, `"the leftmost one"`.
    pub fn phrase(self) -> String {
        match self {
            Refinement::Color(c) => format!("the {c} one"),
            Refinement::Ordinal(o) => format!("the {o} one"),
        }
    }

    /// Accepts `"the blue one"`, `"the blue"`, `"blue one"` or `"blue"`.
    pub fn parse_phrase(text: &str) -> Option<Self> {
        let normalized = normalize(&text.replace(['.', '!', ','], " "));
        let mut word = normalized.as_str();
        word = word.strip_prefix("the ").unwrap_or(word);
        word = word.strip_suffix(" one").unwrap_or(word);
        if let Ok(c) = word.parse() {
            Some(Refinement::Color(c))
        } else {
            word.parse().ok().map(Refinement::Ordinal)
        }
    }
}

/// The first refinement that narrows `expr` to exactly the object `intended`:
/// its color if no other match shares it, else the first selecting ordinal.
pub fn distinguishing_refinement(
    expr: &ReferringExpression,
    scene: &Scene,
    intended: &str,
) -> Option<Refinement> {
    let target = scene.object(intended)?;
    let candidates = [Refinement::Color(target.color)]
        .into_iter()
        .chain(Ordinal::ALL.map(Refinement::Ordinal));
    candidates.into_iter().find(|r| {
        let narrowed = match_expression(&r.apply(*expr), scene);
        narrowed.len() == 1 && narrowed[0].id == intended
    })
}

/// Lowercase `"<color> <category>"`.
pub fn canonical_name(obj: &SceneObject) -> String {
    format!("{} {}", obj.color.name(), obj.category.name())
}

/// Trims, lowercases and collapses internal whitespace.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}
