//! WebAssembly front end for the demo page in `www/`.
//!
//! A [`Room`] holds one synthetic scene. The page can segment it under a
//! chosen amount of affinity noise and sweep the noise level to chart how AP
//! falls off. All work runs on the calling thread.

use affseg::synth::{generate_scene, Scene, SceneConfig};
use affseg::{run_pipeline, ClassTable, PipelineConfig};
use wasm_bindgen::prelude::*;

pub const MAX_OBJECTS: u32 = 12;

#[wasm_bindgen]
pub struct Room {
    scene: Scene,
}

#[wasm_bindgen]
pub struct Segmentation {
    colors: Vec<u8>,
    mean_ap: f64,
    clusters: usize,
    instances: usize,
    rounds: usize,
}

#[wasm_bindgen]
impl Segmentation {
    /// RGB bytes per vertex, instances in distinct hues, background grey.
    pub fn colors(&self) -> Vec<u8> {
        self.colors.clone()
    }

    /// NaN when no class has a ground-truth instance.
    #[wasm_bindgen(getter)]
    pub fn mean_ap(&self) -> f64 {
        self.mean_ap
    }

    #[wasm_bindgen(getter)]
    pub fn clusters(&self) -> usize {
        self.clusters
    }

    #[wasm_bindgen(getter)]
    pub fn instances(&self) -> usize {
        self.instances
    }

    #[wasm_bindgen(getter)]
    pub fn rounds(&self) -> usize {
        self.rounds
    }
}

#[wasm_bindgen]
impl Room {
    /// A floor plus `objects` boxes and panels (clamped to 1..=12).
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, objects: u32) -> Room {
        let objects = objects.clamp(1, MAX_OBJECTS) as usize;
        let scene = generate_scene(&SceneConfig {
            seed: seed.into(),
            min_objects: objects,
            max_objects: objects,
            ..Default::default()
        });
        Room { scene }
    }

    /// `x y z` per vertex.
    pub fn positions(&self) -> Vec<f32> {
        self.scene
            .mesh
            .vertices
            .iter()
            .flat_map(|v| v.position.map(|c| c as f32))
            .collect()
    }

    #[wasm_bindgen(getter)]
    pub fn point_count(&self) -> usize {
        self.scene.mesh.len()
    }

    #[wasm_bindgen(getter)]
    pub fn object_count(&self) -> usize {
        self.scene.num_objects
    }

    /// Ground-truth instances colored like predictions; vertices of
    /// non-instance classes such as the floor stay grey.
    pub fn ground_truth_colors(&self) -> Vec<u8> {
        let classes = ClassTable::default();
        let labels = &self.scene.labels;
        let ids: Vec<u32> = labels
            .semantic
            .iter()
            .zip(&labels.instance)
            .map(|(&c, &i)| if classes.is_instance(c) { i } else { 0 })
            .collect();
        colorize(&ids)
    }

    /// Runs the whole pipeline with an oracle field whose pairs flip with
    /// probability `flip` and receive Gaussian jitter of deviation `jitter`.
    pub fn segment(&self, flip: f64, jitter: f64, seed: u32) -> Result<Segmentation, JsError> {
        self.try_segment(flip, jitter, seed)
            .map_err(|e| JsError::new(&e.to_string()))
    }

    /// Mean AP at `steps` evenly spaced flip probabilities in `[0, max_flip]`,
    /// each averaged over `trials` noise seeds.
    pub fn noise_curve(
        &self,
        max_flip: f64,
        steps: u32,
        jitter: f64,
        trials: u32,
    ) -> Result<Vec<f64>, JsError> {
        self.try_noise_curve(max_flip, steps, jitter, trials)
            .map_err(|e| JsError::new(&e.to_string()))
    }
}

impl Room {
    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn try_segment(&self, flip: f64, jitter: f64, seed: u32) -> affseg::Result<Segmentation> {
        let mut cfg = PipelineConfig::default();
        cfg.oracle.flip_probability = flip;
        cfg.oracle.jitter_stddev = jitter;
        cfg.oracle.seed = seed.into();
        cfg.densify.seed = seed.into();
        let mut rounds = 0;
        let out = run_pipeline(&self.scene.mesh, &self.scene.labels, &cfg, None, |_, _| {
            rounds += 1
        })?;
        Ok(Segmentation {
            colors: colorize(&out.segmentation.point_instance),
            mean_ap: out.report.mean_ap.unwrap_or(f64::NAN),
            clusters: out.graph.nodes.len(),
            instances: out.segmentation.instances.len(),
            rounds,
        })
    }

    pub fn try_noise_curve(
        &self,
        max_flip: f64,
        steps: u32,
        jitter: f64,
        trials: u32,
    ) -> affseg::Result<Vec<f64>> {
        let steps = steps.max(2);
        let trials = trials.max(1);
        (0..steps)
            .map(|i| {
                let flip = max_flip * f64::from(i) / f64::from(steps - 1);
                let mut total = 0.0;
                for t in 0..trials {
                    total += self.try_segment(flip, jitter, t)?.mean_ap;
                }
                Ok(total / f64::from(trials))
            })
            .collect()
    }
}

/// Golden-ratio hue walk so neighbouring ids get far-apart colors.
pub fn instance_color(id: u32) -> [u8; 3] {
    if id == 0 {
        return [150, 150, 150];
    }
    let hue = (f64::from(id) * 0.618_033_988_75).fract() * 6.0;
    let (s, v) = (0.75, 0.95);
    let f = hue.fract();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let rgb = match hue as u32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    };
    rgb.map(|c| (c * 255.0).round() as u8)
}

fn colorize(ids: &[u32]) -> Vec<u8> {
    ids.iter().flat_map(|&id| instance_color(id)).collect()
}
