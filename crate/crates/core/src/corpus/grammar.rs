//! Caption grammar for synthetic scenes.
//!
//! A caption is a template wrapped around a core clause that names every
//! object (first object, relation, second object, then `and` + the third).
//! Nouns, sizes, relations and backgrounds draw from synonym pools, so two
//! captions of one scene usually differ in wording.

use rand::Rng;

use super::scene::{Background, Color, Relation, Scene, SceneObject, Shape, Size};

/// Longest caption body the grammar may emit.
pub const MAX_CAPTION_WORDS: usize = 16;

pub fn shape_words(shape: Shape) -> &'static [&'static str] {
    match shape {
        Shape::Cube => &["cube", "box", "block"],
        Shape::Sphere => &["sphere", "ball"],
        Shape::Pyramid => &["pyramid"],
        Shape::Cylinder => &["cylinder", "tube"],
    }
}

pub fn color_word(color: Color) -> &'static str {
    match color {
        Color::Red => "red",
        Color::Blue => "blue",
        Color::Green => "green",
        Color::Yellow => "yellow",
        Color::Black => "black",
    }
}

pub fn size_words(size: Size) -> &'static [&'static str] {
    match size {
        Size::Small => &["small", "little", "tiny"],
        Size::Large => &["large", "big"],
    }
}

pub fn relation_phrases(rel: Relation) -> &'static [&'static str] {
    match rel {
        Relation::LeftOf => &["left of", "to the left of"],
        Relation::On => &["on", "on top of"],
        Relation::Beside => &["beside", "next to"],
        Relation::Behind => &["behind", "in back of"],
    }
}

pub fn background_phrases(bg: Background) -> &'static [&'static str] {
    match bg {
        Background::Table => &["on a table", "on a desk"],
        Background::Floor => &["on the floor", "on the ground"],
        Background::Grass => &["on the grass", "on a lawn"],
        Background::Sky => &["under the sky", "below the sky"],
    }
}

/// `(prefix, takes background phrase)`
const TEMPLATES: [(&str, bool); 5] = [
    ("", true),
    ("there is", false),
    ("this picture shows", false),
    ("we can see", true),
    ("a photo of", false),
];

pub fn template_count() -> usize {
    TEMPLATES.len()
}

/// Every word the grammar can emit, sorted and deduplicated.
pub fn terminals() -> Vec<&'static str> {
    let mut words: Vec<&'static str> = Vec::new();
    let mut add = |phrase: &'static str| words.extend(phrase.split_whitespace());
    add("a and");
    for (prefix, _) in TEMPLATES {
        add(prefix);
    }
    for s in Shape::ALL {
        shape_words(s).iter().for_each(|w| add(w));
    }
    for c in Color::ALL {
        add(color_word(c));
    }
    for s in Size::ALL {
        size_words(s).iter().for_each(|w| add(w));
    }
    for r in Relation::ALL {
        relation_phrases(r).iter().for_each(|w| add(w));
    }
    for b in Background::ALL {
        background_phrases(b).iter().for_each(|w| add(w));
    }
    words.sort_unstable();
    words.dedup();
    words
}

fn pick<'a, R: Rng + ?Sized>(rng: &mut R, pool: &'a [&'a str]) -> &'a str {
    pool[rng.random_range(0..pool.len())]
}

fn noun_phrase<R: Rng + ?Sized>(rng: &mut R, obj: &SceneObject, words: &mut Vec<&'static str>) {
    words.push("a");
    if rng.random_bool(0.5) {
        words.push(pick(rng, size_words(obj.size)));
    }
    words.push(color_word(obj.color));
    words.push(pick(rng, shape_words(obj.shape)));
}

fn caption_once<R: Rng + ?Sized>(rng: &mut R, scene: &Scene, template: usize) -> Vec<&'static str> {
    let (prefix, with_background) = TEMPLATES[template];
    let mut words: Vec<&'static str> = prefix.split_whitespace().collect();
    noun_phrase(rng, &scene.objects[0], &mut words);
    if let (Some(rel), Some(second)) = (scene.relation, scene.objects.get(1)) {
        words.extend(pick(rng, relation_phrases(rel)).split_whitespace());
        noun_phrase(rng, second, &mut words);
    }
    for extra in scene.objects.iter().skip(2) {
        words.push("and");
        noun_phrase(rng, extra, &mut words);
    }
    if with_background {
        words.extend(pick(rng, background_phrases(scene.background)).split_whitespace());
    }
    words
}

/// Shortest wording: template 1, no size words, one-word relation.
fn fallback_caption(scene: &Scene) -> Vec<&'static str> {
    let mut words = vec!["there", "is"];
    let np = |o: &SceneObject, w: &mut Vec<&'static str>| {
        w.extend(["a", color_word(o.color), shape_words(o.shape)[0]]);
    };
    np(&scene.objects[0], &mut words);
    if let (Some(rel), Some(second)) = (scene.relation, scene.objects.get(1)) {
        words.extend(relation_phrases(rel)[0].split_whitespace());
        np(second, &mut words);
    }
    for extra in scene.objects.iter().skip(2) {
        words.push("and");
        np(extra, &mut words);
    }
    words
}

/// Samples one caption of at most [`MAX_CAPTION_WORDS`] words.
pub fn sample_caption<R: Rng + ?Sized>(rng: &mut R, scene: &Scene) -> String {
    for _ in 0..64 {
        let template = rng.random_range(0..TEMPLATES.len());
        let words = caption_once(rng, scene, template);
        if words.len() <= MAX_CAPTION_WORDS {
            return words.join(" ");
        }
    }
    fallback_caption(scene).join(" ")
}

/// Samples `count` captions, avoiding exact repeats where the grammar allows.
pub fn sample_captions<R: Rng + ?Sized>(rng: &mut R, scene: &Scene, count: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(count);
    while out.len() < count {
        let mut caption = sample_caption(rng, scene);
        for _ in 0..16 {
            if !out.contains(&caption) {
                break;
            }
            caption = sample_caption(rng, scene);
        }
        out.push(caption);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rng::seeded;

    #[test]
    fn captions_mention_every_object_and_fit() {
        let mut rng = seeded(1);
        for _ in 0..500 {
            let scene = Scene::random(&mut rng, 1);
            for caption in sample_captions(&mut rng, &scene, 5) {
                let words: Vec<&str> = caption.split_whitespace().collect();
                assert!(words.len() <= MAX_CAPTION_WORDS, "{caption}");
                for obj in &scene.objects {
                    assert!(words.iter().any(|w| shape_words(obj.shape).contains(w)), "{caption}");
                    assert!(words.contains(&color_word(obj.color)), "{caption}");
                }
            }
        }
    }

    #[test]
    fn fallback_is_short_enough() {
        let mut rng = seeded(2);
        for _ in 0..200 {
            let scene = Scene::random(&mut rng, 1);
            assert!(fallback_caption(&scene).len() <= MAX_CAPTION_WORDS);
        }
    }

    #[test]
    fn terminals_cover_every_emitted_word() {
        let terms = terminals();
        let mut rng = seeded(3);
        for _ in 0..300 {
            let scene = Scene::random(&mut rng, 3);
            for w in sample_caption(&mut rng, &scene).split_whitespace() {
                assert!(terms.contains(&w), "{w}");
            }
        }
        assert!(template_count() >= 4);
    }
}
