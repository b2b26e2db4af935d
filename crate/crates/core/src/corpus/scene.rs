use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::digest::sha256;
use crate::error::{shape_err, Error, Result};
use crate::math::rng::{splitmix64, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Cube,
    Sphere,
    Pyramid,
    Cylinder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red,
    Blue,
    Green,
    Yellow,
    Black,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Size {
    Small,
    Large,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    LeftOf,
    On,
    Beside,
    Behind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    Table,
    Floor,
    Grass,
    Sky,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Cube, Shape::Sphere, Shape::Pyramid, Shape::Cylinder];
}
impl Color {
    pub const ALL: [Color; 5] = [Color::Red, Color::Blue, Color::Green, Color::Yellow, Color::Black];
}
impl Size {
    pub const ALL: [Size; 2] = [Size::Small, Size::Large];
}
impl Relation {
    pub const ALL: [Relation; 4] = [Relation::LeftOf, Relation::On, Relation::Beside, Relation::Behind];
}
impl Background {
    pub const ALL: [Background; 4] = [Background::Table, Background::Floor, Background::Grass, Background::Sky];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub color: Color,
    pub size: Size,
}

impl SceneObject {
    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            shape: Shape::ALL[rng.random_range(0..Shape::ALL.len())],
            color: Color::ALL[rng.random_range(0..Color::ALL.len())],
            size: Size::ALL[rng.random_range(0..Size::ALL.len())],
        }
    }
}

pub const MAX_OBJECTS: usize = 3;
const SLOT_WIDTH: usize = 4 + 5 + 2;
const RELATION_OFFSET: usize = MAX_OBJECTS * SLOT_WIDTH;
const BACKGROUND_OFFSET: usize = RELATION_OFFSET + 4;
/// Number of coordinates used by the one-hot attribute blocks.
pub const ATTRIBUTE_DIM: usize = BACKGROUND_OFFSET + 4;
/// Default feature dimension: the attribute blocks plus zero padding.
pub const FEATURE_DIM: usize = 48;
pub const JITTER: f64 = 0.01;

/// Synthetic stand-in for an image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub objects: Vec<SceneObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<Relation>,
    pub background: Background,
}

impl Scene {
    /// Builds a validated scene whose id is a digest of `seed` and the attributes.
    pub fn new(
        objects: Vec<SceneObject>,
        relation: Option<Relation>,
        background: Background,
        seed: u64,
    ) -> Result<Self> {
        let mut scene = Scene {
            id: String::new(),
            objects,
            relation,
            background,
        };
        scene.validate()?;
        scene.id = scene.derive_id(seed);
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() || self.objects.len() > MAX_OBJECTS {
            return Err(Error::Invariant(format!(
                "scene must hold 1..={MAX_OBJECTS} objects, has {}",
                self.objects.len()
            )));
        }
        if self.relation.is_some() != (self.objects.len() >= 2) {
            return Err(Error::Invariant(
                "scene relation must be present iff it has at least two objects".into(),
            ));
        }
        Ok(())
    }

    fn canonical(&self) -> String {
        let objects: Vec<String> = self
            .objects
            .iter()
            .map(|o| format!("{:?}/{:?}/{:?}", o.shape, o.color, o.size))
            .collect();
        format!("{}|{:?}|{:?}", objects.join(","), self.relation, self.background)
    }

    fn derive_id(&self, seed: u64) -> String {
        let digest = sha256(format!("{seed}|{}", self.canonical()).as_bytes());
        let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
        format!("sc-{hex}")
    }

    /// Same attributes (ignores the id).
    pub fn same_attributes(&self, other: &Scene) -> bool {
        self.objects == other.objects && self.relation == other.relation && self.background == other.background
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, seed: u64) -> Self {
        let roll: f64 = rng.random();
        let count = if roll < 0.2 {
            1
        } else if roll < 0.6 {
            2
        } else {
            3
        };
        let mut objects: Vec<SceneObject> = Vec::with_capacity(count);
        while objects.len() < count {
            let candidate = SceneObject::random(rng);
            if !objects.contains(&candidate) {
                objects.push(candidate);
            }
        }
        let relation = (count >= 2).then(|| Relation::ALL[rng.random_range(0..Relation::ALL.len())]);
        let background = Background::ALL[rng.random_range(0..Background::ALL.len())];
        Scene::new(objects, relation, background, seed).expect("random scene is valid")
    }

    /// Copy with exactly one attribute changed: an object's shape, color or
    /// size, the relation, or the background.
    pub fn mutate_one<R: Rng + ?Sized>(&self, rng: &mut R, seed: u64) -> Scene {
        loop {
            let mut out = self.clone();
            let slots = 3 * out.objects.len() + usize::from(out.relation.is_some()) + 1;
            let pick = rng.random_range(0..slots);
            if pick < 3 * out.objects.len() {
                let obj = &mut out.objects[pick / 3];
                match pick % 3 {
                    0 => obj.shape = Shape::ALL[rng.random_range(0..Shape::ALL.len())],
                    1 => obj.color = Color::ALL[rng.random_range(0..Color::ALL.len())],
                    _ => obj.size = Size::ALL[rng.random_range(0..Size::ALL.len())],
                }
            } else if pick == slots - 1 {
                out.background = Background::ALL[rng.random_range(0..Background::ALL.len())];
            } else {
                out.relation = Some(Relation::ALL[rng.random_range(0..Relation::ALL.len())]);
            }
            let distinct_objects = out
                .objects
                .iter()
                .enumerate()
                .all(|(i, a)| out.objects[..i].iter().all(|b| b != a));
            if !out.same_attributes(self) && distinct_objects {
                out.id = out.derive_id(seed);
                return out;
            }
        }
    }
}

/// Deterministic feature vector for a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn index_of<T: PartialEq>(all: &[T], v: &T) -> usize {
    all.iter().position(|x| x == v).expect("enum value listed in ALL")
}

/// One-hot attribute blocks (shape, color, size per object slot; relation;
/// background) zero-padded to `dim`, plus uniform jitter in `[-0.01, 0.01]`
/// seeded by the scene id.
pub fn render_feature(scene: &Scene, dim: usize) -> Result<FeatureVector> {
    if dim < ATTRIBUTE_DIM {
        return Err(shape_err("feature dimension", format!(">= {ATTRIBUTE_DIM}"), dim));
    }
    scene.validate()?;
    let mut values = vec![0.0; dim];
    for (slot, obj) in scene.objects.iter().enumerate() {
        let base = slot * SLOT_WIDTH;
        values[base + index_of(&Shape::ALL, &obj.shape)] = 1.0;
        values[base + 4 + index_of(&Color::ALL, &obj.color)] = 1.0;
        values[base + 9 + index_of(&Size::ALL, &obj.size)] = 1.0;
    }
    if let Some(rel) = scene.relation {
        values[RELATION_OFFSET + index_of(&Relation::ALL, &rel)] = 1.0;
    }
    values[BACKGROUND_OFFSET + index_of(&Background::ALL, &scene.background)] = 1.0;

    let key = sha256(scene.id.as_bytes());
    let mut rng = stream(splitmix64(u64::from_le_bytes(key[..8].try_into().unwrap())), &[0x6a17]);
    for v in values.iter_mut() {
        *v += JITTER * rng.random_range(-1.0..=1.0);
    }
    Ok(FeatureVector(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rng::seeded;

    fn two_object_scene(color: Color) -> Scene {
        Scene::new(
            vec![
                SceneObject { shape: Shape::Cube, color, size: Size::Small },
                SceneObject { shape: Shape::Sphere, color: Color::Blue, size: Size::Large },
            ],
            Some(Relation::On),
            Background::Table,
            7,
        )
        .unwrap()
    }

    #[test]
    fn color_change_moves_color_block() {
        let a = render_feature(&two_object_scene(Color::Red), FEATURE_DIM).unwrap();
        let b = render_feature(&two_object_scene(Color::Green), FEATURE_DIM).unwrap();
        let color_block = 4..9;
        assert!(color_block.clone().any(|k| (a.0[k] - b.0[k]).abs() > 0.5));
    }

    #[test]
    fn padding_holds_only_jitter() {
        let f = render_feature(&two_object_scene(Color::Red), FEATURE_DIM).unwrap();
        for v in &f.0[ATTRIBUTE_DIM..] {
            assert!(v.abs() <= JITTER);
        }
        assert!(f.0[ATTRIBUTE_DIM..].iter().any(|v| *v != 0.0));
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = two_object_scene(Color::Yellow);
        assert_eq!(render_feature(&s, 48).unwrap(), render_feature(&s, 48).unwrap());
    }

    #[test]
    fn ids_follow_attributes_and_seed() {
        assert_eq!(two_object_scene(Color::Red).id, two_object_scene(Color::Red).id);
        assert_ne!(two_object_scene(Color::Red).id, two_object_scene(Color::Black).id);
        let mut other_seed = two_object_scene(Color::Red);
        other_seed.id = other_seed.derive_id(8);
        assert_ne!(other_seed.id, two_object_scene(Color::Red).id);
    }

    #[test]
    fn relation_iff_two_objects() {
        let one = vec![SceneObject { shape: Shape::Cube, color: Color::Red, size: Size::Small }];
        assert!(Scene::new(one.clone(), Some(Relation::On), Background::Sky, 1).is_err());
        assert!(Scene::new(one, None, Background::Sky, 1).is_ok());
        assert!(Scene::new(vec![], None, Background::Sky, 1).is_err());
    }

    #[test]
    fn feature_dim_too_small() {
        assert!(render_feature(&two_object_scene(Color::Red), 32).is_err());
    }

    #[test]
    fn mutation_changes_exactly_one_attribute() {
        let mut rng = seeded(3);
        for _ in 0..200 {
            let s = Scene::random(&mut rng, 7);
            let m = s.mutate_one(&mut rng, 7);
            let mut diffs = usize::from(s.relation != m.relation) + usize::from(s.background != m.background);
            for (a, b) in s.objects.iter().zip(&m.objects) {
                diffs += usize::from(a.shape != b.shape) + usize::from(a.color != b.color) + usize::from(a.size != b.size);
            }
            assert_eq!(diffs, 1);
            assert_ne!(s.id, m.id);
            let fa = render_feature(&s, FEATURE_DIM).unwrap();
            let fb = render_feature(&m, FEATURE_DIM).unwrap();
            assert!(fa.0.iter().zip(&fb.0).any(|(x, y)| (x - y).abs() > 0.5));
        }
    }
}
