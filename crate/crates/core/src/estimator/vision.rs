use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EstimatedUavState;
use crate::dynamics::RigidBodyState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Marker {
    pub id: String,
    /// Side length (m).
    pub side: f64,
    /// Offset of the marker centre from the pad centre (m, world x/y).
    pub offset: [f64; 2],
}

/// Fiducial markers printed on the landing pad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PadLayout {
    pub center: [f64; 3],
    pub markers: Vec<Marker>,
}

impl Default for PadLayout {
    /// One large central marker ringed by four small ones.
    fn default() -> Self {
        let small = |id: &str, x: f64, y: f64| Marker {
            id: id.into(),
            side: 0.15,
            offset: [x, y],
        };
        Self {
            center: [0.0; 3],
            markers: vec![
                Marker {
                    id: "tag-0".into(),
                    side: 0.5,
                    offset: [0.0, 0.0],
                },
                small("tag-1", 0.4, 0.0),
                small("tag-2", 0.0, 0.4),
                small("tag-3", -0.4, 0.0),
                small("tag-4", 0.0, -0.4),
            ],
        }
    }
}

impl PadLayout {
    pub fn validate(&self) -> Result<(), String> {
        if self.markers.is_empty() {
            return Err("layout needs at least one marker".into());
        }
        if !self.center.iter().all(|v| v.is_finite()) {
            return Err("pad centre must be finite".into());
        }
        let mut seen = BTreeSet::new();
        for m in &self.markers {
            if !seen.insert(m.id.as_str()) {
                return Err(format!("duplicate marker id `{}`", m.id));
            }
            if !(m.side.is_finite() && m.side > 0.0) {
                return Err(format!("marker `{}` side must be > 0", m.id));
            }
            if !m.offset.iter().all(|v| v.is_finite()) {
                return Err(format!("marker `{}` offset must be finite", m.id));
            }
        }
        Ok(())
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::from(self.center)
    }

    pub fn marker(&self, id: &str) -> Option<&Marker> {
        self.markers.iter().find(|m| m.id == id)
    }

    /// World position of a marker's centre.
    pub fn marker_position(&self, m: &Marker) -> Vector3<f64> {
        self.center() + Vector3::new(m.offset[0], m.offset[1], 0.0)
    }

    /// Only the first (primary) marker; used when redundancy is disabled.
    pub fn primary_only(&self) -> PadLayout {
        PadLayout {
            center: self.center,
            markers: self.markers.iter().take(1).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub rate_hz: f64,
    /// Capture-to-delivery processing latency (s).
    pub latency: f64,
    /// Frames allowed to wait for delivery; older ones are dropped.
    pub queue_depth: usize,
    /// Half-angle of the downward field-of-view cone (rad).
    pub half_fov: f64,
    /// Smallest resolvable apparent size (side / range).
    pub min_apparent_size: f64,
    /// Detection probability in full light with no occlusion.
    pub p_base: f64,
    /// Position noise sigma at unit apparent size (m).
    pub noise_base: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            rate_hz: 20.0,
            latency: 0.05,
            queue_depth: 3,
            half_fov: 60f64.to_radians(),
            min_apparent_size: 0.02,
            p_base: 0.95,
            noise_base: 0.002,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<(), String> {
        let pos = |n: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{n} must be > 0, got {v}"))
            }
        };
        pos("rate_hz", self.rate_hz)?;
        pos("half_fov", self.half_fov)?;
        pos("min_apparent_size", self.min_apparent_size)?;
        if !(self.latency.is_finite() && self.latency >= 0.0) {
            return Err("latency must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.p_base) {
            return Err("p_base must be within [0, 1]".into());
        }
        if !(self.noise_base.is_finite() && self.noise_base >= 0.0) {
            return Err("noise_base must be >= 0".into());
        }
        if self.queue_depth == 0 {
            return Err("queue_depth must be >= 1".into());
        }
        if self.half_fov >= std::f64::consts::FRAC_PI_2 {
            return Err("half_fov must be below 90 degrees".into());
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.rate_hz
    }

    /// Faster capture with a single-slot queue.
    pub fn optimized(&self) -> CameraConfig {
        CameraConfig {
            rate_hz: self.rate_hz * 2.0,
            queue_depth: 1,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerDetection {
    pub id: String,
    /// Camera-to-marker vector in the body frame (m).
    pub relative: Vector3<f64>,
    /// Side length over range.
    pub apparent_size: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFrame {
    pub timestamp: f64,
    pub sequence: u64,
    pub detections: Vec<MarkerDetection>,
}

/// Conditions a marker is seen under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visibility {
    pub lighting: f64,
    pub occlusion: f64,
}

/// Applies the detection model to one square marker of side `side` centred
/// at `world`. Always consumes the same number of draws from `rng`.
pub fn detect_marker<R: Rng + ?Sized>(
    truth: &RigidBodyState,
    id: &str,
    world: &Vector3<f64>,
    side: f64,
    cam: &CameraConfig,
    vis: Visibility,
    rng: &mut R,
) -> Option<MarkerDetection> {
    let roll: f64 = rng.random();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let n = Vector3::new(unit.sample(rng), unit.sample(rng), unit.sample(rng));

    let relative = truth.attitude.inverse_transform_vector(&(world - truth.position));
    let range = relative.norm();
    if range <= f64::EPSILON {
        return None;
    }
    let off_axis = (-relative.z / range).clamp(-1.0, 1.0).acos();
    if off_axis > cam.half_fov {
        return None;
    }
    let apparent_size = side / range;
    if apparent_size < cam.min_apparent_size {
        return None;
    }
    let lighting = vis.lighting.clamp(0.0, 1.0);
    let clear = 1.0 - vis.occlusion.clamp(0.0, 1.0);
    let p = cam.p_base * lighting * clear;
    if roll >= p {
        return None;
    }
    Some(MarkerDetection {
        id: id.to_owned(),
        relative: relative + n * (cam.noise_base / apparent_size),
        apparent_size,
        confidence: lighting * clear,
    })
}

/// Renders a frame of the layout as seen from `truth`.
#[allow(clippy::too_many_arguments)]
pub fn render_detections<R: Rng + ?Sized>(
    truth: &RigidBodyState,
    layout: &PadLayout,
    cam: &CameraConfig,
    lighting: f64,
    occluded: &BTreeMap<String, f64>,
    rng: &mut R,
    t: f64,
    seq: u64,
) -> CameraFrame {
    let detections = layout
        .markers
        .iter()
        .filter_map(|m| {
            let vis = Visibility {
                lighting,
                occlusion: occluded.get(&m.id).copied().unwrap_or(0.0),
            };
            detect_marker(truth, &m.id, &layout.marker_position(m), m.side, cam, vis, rng)
        })
        .collect();
    CameraFrame {
        timestamp: t,
        sequence: seq,
        detections,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuardDecision {
    Accept,
    Reject(RejectReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    StaleTimestamp,
    StaleSequence,
}

/// Accepts a frame only if both its timestamp and sequence number exceed the
/// last accepted pair.
pub fn guard_sequence(frame: &CameraFrame, last_accepted: Option<(f64, u64)>) -> GuardDecision {
    match last_accepted {
        None => GuardDecision::Accept,
        Some((_, seq)) if frame.sequence <= seq => GuardDecision::Reject(RejectReason::StaleSequence),
        Some((ts, _)) if frame.timestamp <= ts => GuardDecision::Reject(RejectReason::StaleTimestamp),
        Some(_) => GuardDecision::Accept,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandingPadEstimate {
    /// Pad centre in the estimator's world frame.
    pub position: Vector3<f64>,
    pub weight_sum: f64,
    /// Capture time of the frame it came from.
    pub timestamp: f64,
    pub contributors: BTreeSet<String>,
    /// Pad centre minus own estimated position at fusion time.
    pub relative_offset: Vector3<f64>,
}

impl LandingPadEstimate {
    /// Own position implied by this estimate and the surveyed pad centre.
    pub fn own_position(&self, pad_center: &Vector3<f64>) -> Vector3<f64> {
        pad_center - self.relative_offset
    }
}

/// Weighted mean of per-marker pad-centre candidates, weight = apparent size
/// × confidence. Unknown ids are discarded when `tagging` is set and
/// otherwise taken at face value as if centred on the pad.
pub fn fuse_pad_position(
    frame: &CameraFrame,
    layout: &PadLayout,
    eus: &EstimatedUavState,
    tagging: bool,
) -> Option<LandingPadEstimate> {
    let mut weight_sum = 0.0;
    let mut acc = Vector3::zeros();
    let mut contributors = BTreeSet::new();
    let mut first = None;
    let mut count = 0usize;
    for d in &frame.detections {
        let offset = match layout.marker(&d.id) {
            Some(m) => Vector2::from(m.offset),
            None if tagging => continue,
            None => Vector2::zeros(),
        };
        let w = d.apparent_size * d.confidence;
        if !(w > 0.0 && w.is_finite()) {
            continue;
        }
        let rel = eus.attitude * d.relative - Vector3::new(offset.x, offset.y, 0.0);
        acc += rel * w;
        weight_sum += w;
        count += 1;
        first.get_or_insert(rel);
        contributors.insert(d.id.clone());
    }
    if weight_sum <= 0.0 {
        return None;
    }
    let relative_offset = match (count, first) {
        (1, Some(rel)) => rel,
        _ => acc / weight_sum,
    };
    Some(LandingPadEstimate {
        position: eus.position + relative_offset,
        weight_sum,
        timestamp: frame.timestamp,
        contributors,
        relative_offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, prop_compose, proptest, ProptestConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame(detections: Vec<MarkerDetection>) -> CameraFrame {
        CameraFrame {
            timestamp: 1.0,
            sequence: 1,
            detections,
        }
    }

    fn det(id: &str, rel: [f64; 3], size: f64, conf: f64) -> MarkerDetection {
        MarkerDetection {
            id: id.into(),
            relative: Vector3::from(rel),
            apparent_size: size,
            confidence: conf,
        }
    }

    fn single_marker_layout(id: &str) -> PadLayout {
        PadLayout {
            center: [0.0; 3],
            markers: vec![Marker {
                id: id.into(),
                side: 0.5,
                offset: [0.0, 0.0],
            }],
        }
    }

    #[test]
    fn weighted_mean_of_two_candidates() {
        let layout = PadLayout {
            center: [0.0; 3],
            markers: vec![
                Marker {
                    id: "a".into(),
                    side: 1.0,
                    offset: [0.0, 0.0],
                },
                Marker {
                    id: "b".into(),
                    side: 1.0,
                    offset: [0.0, 0.0],
                },
            ],
        };
        let eus = EstimatedUavState::at_rest(Vector3::zeros(), 9.81);
        let f = frame(vec![det("a", [0.0; 3], 2.0, 1.0), det("b", [0.3, 0.0, 0.0], 1.0, 1.0)]);
        let est = fuse_pad_position(&f, &layout, &eus, true).unwrap();
        assert!((est.position - Vector3::new(0.1, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(est.weight_sum, 3.0);
    }

    #[test]
    fn tagging_discards_unknown_ids() {
        let layout = single_marker_layout("tag-0");
        let eus = EstimatedUavState::at_rest(Vector3::new(0.0, 0.0, 3.0), 9.81);
        let f = frame(vec![det("spoof", [0.8, 0.0, -3.0], 0.1, 1.0)]);
        assert!(fuse_pad_position(&f, &layout, &eus, true).is_none());
        let est = fuse_pad_position(&f, &layout, &eus, false).unwrap();
        assert!((est.position - Vector3::new(0.8, 0.0, 0.0)).norm() < 1e-12);
        assert!(est.contributors.contains("spoof"));
    }

    #[test]
    fn guard_examples() {
        let mk = |seq: u64| CameraFrame {
            timestamp: seq as f64 * 0.05,
            sequence: seq,
            detections: vec![],
        };
        let mut last = None;
        let mut accepted = vec![];
        for seq in [1, 3, 2] {
            let f = mk(seq);
            if guard_sequence(&f, last) == GuardDecision::Accept {
                last = Some((f.timestamp, f.sequence));
                accepted.push(seq);
            }
        }
        assert_eq!(accepted, [1, 3]);
        assert_eq!(guard_sequence(&mk(7), None), GuardDecision::Accept);
        assert_eq!(
            guard_sequence(&mk(3), Some((0.15, 3))),
            GuardDecision::Reject(RejectReason::StaleSequence)
        );
        let mut late = mk(4);
        late.timestamp = 0.1;
        assert_eq!(
            guard_sequence(&late, Some((0.15, 3))),
            GuardDecision::Reject(RejectReason::StaleTimestamp)
        );
    }

    fn above_pad(h: f64) -> RigidBodyState {
        let mut s = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, h));
        s.grounded = false;
        s
    }

    #[test]
    fn full_occlusion_hides_everything() {
        let layout = PadLayout::default();
        let occ: BTreeMap<String, f64> = layout.markers.iter().map(|m| (m.id.clone(), 1.0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..50 {
            let f = render_detections(&above_pad(3.0), &layout, &CameraConfig::default(), 1.0, &occ, &mut rng, 0.0, i);
            assert!(f.detections.is_empty());
        }
    }

    #[test]
    fn ideal_conditions_detect_all_resolvable_markers() {
        let layout = PadLayout::default();
        let cam = CameraConfig {
            p_base: 1.0,
            ..CameraConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = render_detections(&above_pad(3.0), &layout, &cam, 1.0, &BTreeMap::new(), &mut rng, 0.0, 0);
        assert_eq!(f.detections.len(), layout.markers.len());
        // small markers drop below the resolvability threshold at 10 m
        let f = render_detections(&above_pad(10.0), &layout, &cam, 1.0, &BTreeMap::new(), &mut rng, 0.0, 1);
        let ids: Vec<_> = f.detections.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["tag-0"]);
    }

    #[test]
    fn marker_outside_fov_is_not_detected() {
        let cam = CameraConfig {
            p_base: 1.0,
            ..CameraConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vis = Visibility {
            lighting: 1.0,
            occlusion: 0.0,
        };
        let truth = above_pad(1.0);
        assert!(detect_marker(&truth, "x", &Vector3::new(3.0, 0.0, 0.0), 0.5, &cam, vis, &mut rng).is_none());
        assert!(detect_marker(&truth, "x", &Vector3::new(0.5, 0.0, 0.0), 0.5, &cam, vis, &mut rng).is_some());
    }

    fn detection_rate(lighting: f64, occlusion: f64, seed: u64) -> usize {
        let layout = PadLayout::default();
        let occ: BTreeMap<String, f64> = layout.markers.iter().map(|m| (m.id.clone(), occlusion)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..1000)
            .map(|i| {
                render_detections(&above_pad(3.0), &layout, &CameraConfig::default(), lighting, &occ, &mut rng, 0.0, i)
                    .detections
                    .len()
            })
            .sum()
    }

    #[test]
    fn detection_rate_monotone_in_lighting_and_occlusion() {
        let lighting: Vec<usize> = [1.0, 0.8, 0.6, 0.4, 0.2, 0.0].iter().map(|l| detection_rate(*l, 0.0, 11)).collect();
        assert!(lighting.windows(2).all(|w| w[1] <= w[0]), "{lighting:?}");
        assert_eq!(*lighting.last().unwrap(), 0);
        let occlusion: Vec<usize> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|o| detection_rate(1.0, *o, 11)).collect();
        assert!(occlusion.windows(2).all(|w| w[1] <= w[0]), "{occlusion:?}");
    }

    #[test]
    fn detection_noise_shrinks_with_apparent_size() {
        let cam = CameraConfig {
            p_base: 1.0,
            ..CameraConfig::default()
        };
        let vis = Visibility {
            lighting: 1.0,
            occlusion: 0.0,
        };
        let spread = |h: f64| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let truth = above_pad(h);
            let xs: Vec<f64> = (0..2000)
                .filter_map(|_| detect_marker(&truth, "m", &Vector3::zeros(), 0.5, &cam, vis, &mut rng))
                .map(|d| d.relative.x)
                .collect();
            (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
        };
        let near = spread(2.0);
        let far = spread(8.0);
        assert!((near - 0.002 * 4.0).abs() < 0.002 * 4.0 * 0.1);
        assert!((far / near - 4.0).abs() < 0.4);
    }

    fn brute_force(frame: &CameraFrame, layout: &PadLayout, eus: &EstimatedUavState, tagging: bool) -> Option<[f64; 3]> {
        let r = eus.attitude.to_rotation_matrix();
        let (mut sx, mut sy, mut sz, mut sw) = (0.0, 0.0, 0.0, 0.0);
        for d in &frame.detections {
            let known = layout.markers.iter().find(|m| m.id == d.id);
            if tagging && known.is_none() {
                continue;
            }
            let off = known.map(|m| m.offset).unwrap_or([0.0, 0.0]);
            let mut world = [0.0; 3];
            for (i, w) in world.iter_mut().enumerate() {
                for j in 0..3 {
                    *w += r[(i, j)] * d.relative[j];
                }
            }
            let cand = [
                eus.position.x + world[0] - off[0],
                eus.position.y + world[1] - off[1],
                eus.position.z + world[2],
            ];
            let w = d.apparent_size * d.confidence;
            sx += w * cand[0];
            sy += w * cand[1];
            sz += w * cand[2];
            sw += w;
        }
        (sw > 0.0).then(|| [sx / sw, sy / sw, sz / sw])
    }

    prop_compose! {
        fn arb_case()(
            n in 1usize..6,
            extra in 0usize..3,
            seed in any::<u64>(),
            tagging in any::<bool>(),
        ) -> (CameraFrame, PadLayout, EstimatedUavState, bool) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let markers: Vec<Marker> = (0..n).map(|i| Marker {
                id: format!("m{i}"),
                side: rng.random_range(0.05..1.0),
                offset: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            }).collect();
            let layout = PadLayout { center: [0.0; 3], markers };
            let mut eus = EstimatedUavState::at_rest(
                Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.5..15.0)),
                9.81,
            );
            eus.attitude = UnitQuaternion::from_euler_angles(
                rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-3.0..3.0));
            let mut detections = Vec::new();
            for m in &layout.markers {
                if rng.random_bool(0.8) {
                    let rel = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-15.0..-0.5)];
                    detections.push(det(&m.id, rel, rng.random_range(0.01..1.0), rng.random_range(0.05..1.0)));
                }
            }
            for k in 0..extra {
                detections.push(det(&format!("unknown{k}"),
                    [rng.random_range(-3.0..3.0), 0.0, -5.0], rng.random_range(0.01..1.0), 1.0));
            }
            (frame(detections), layout, eus, tagging)
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn fusion_matches_brute_force((f, layout, eus, tagging) in arb_case()) {
            let got = fuse_pad_position(&f, &layout, &eus, tagging);
            let want = brute_force(&f, &layout, &eus, tagging);
            match (got, want) {
                (None, None) => {}
                (Some(g), Some(w)) => prop_assert!((g.position - Vector3::from(w)).norm() < 1e-9),
                (g, w) => prop_assert!(false, "mismatch {g:?} vs {w:?}"),
            }
        }

        #[test]
        fn fusion_permutation_and_scale_invariant((f, layout, eus, tagging) in arb_case(), k in 0.01f64..100.0) {
            let base = fuse_pad_position(&f, &layout, &eus, tagging);
            let mut rev = f.clone();
            rev.detections.reverse();
            let mut scaled = f.clone();
            for d in &mut scaled.detections {
                d.apparent_size *= k;
            }
            for other in [fuse_pad_position(&rev, &layout, &eus, tagging), fuse_pad_position(&scaled, &layout, &eus, tagging)] {
                match (&base, other) {
                    (None, None) => {}
                    (Some(a), Some(b)) => prop_assert!((a.position - b.position).norm() < 1e-9),
                    _ => prop_assert!(false),
                }
            }
        }

        #[test]
        fn single_marker_equals_its_candidate((f, layout, eus, _t) in arb_case()) {
            if let Some(d) = f.detections.iter().find(|d| layout.marker(&d.id).is_some()) {
                let one = frame(vec![d.clone()]);
                let m = layout.marker(&d.id).unwrap();
                let cand = eus.position + (eus.attitude * d.relative - Vector3::new(m.offset[0], m.offset[1], 0.0));
                let est = fuse_pad_position(&one, &layout, &eus, true).unwrap();
                prop_assert_eq!(est.position, cand);
            }
        }
    }
}
