//! Property tests over the public API. Simulation-backed properties run
//! fewer cases since each case is a full closed-loop run.

use std::f64::consts::PI;

use proptest::prelude::*;

use losnav::controller::EventKind;
use losnav::geometry::{bearing, distance, wrap_angle, Pose2D, Vec2};
use losnav::perception::{
    CameraConfig, Detection, DetectionReport, ObjectKind, ProximityConfig, VisionSource, Zone,
    ZoneConfig,
};
use losnav::protocol::{decode, encode, CommandMsg, TargetRequest, WireMessage};
use losnav::sim::{oracle, run, LegOutcome, RunResult, Scenario};
use losnav::world::{
    check_collision, ray_cast, step_kinematics, Aabb, MotionLimits, Obstacle, Shape,
    VelocityCommand, WorldModel,
};

fn arena() -> WorldModel {
    WorldModel::new(
        Aabb::new(Vec2::new(0.0, 0.0), Vec2::new(8.0, 8.0)),
        Pose2D::new(1.0, 1.0, 0.0),
        0.15,
    )
}

fn arb_obstacle(i: usize) -> impl Strategy<Value = Obstacle> {
    (
        0.8f64..7.2,
        0.8f64..7.2,
        0.15f64..0.6,
        0.15f64..0.6,
        any::<bool>(),
    )
        .prop_map(move |(x, y, a, b, disc)| {
            if disc {
                Obstacle::disc(format!("o{i}"), Vec2::new(x, y), a)
            } else {
                Obstacle::rect(
                    format!("o{i}"),
                    Vec2::new(x - a, y - b),
                    Vec2::new(x + a, y + b),
                )
            }
        })
}

fn arb_world() -> impl Strategy<Value = WorldModel> {
    (
        arb_obstacle(0),
        arb_obstacle(1),
        arb_obstacle(2),
        0usize..=3,
    )
        .prop_map(|(a, b, c, n)| {
            let mut w = arena();
            w.obstacles = vec![a, b, c];
            w.obstacles.truncate(n);
            w
        })
}

fn nearest_surface(w: &WorldModel, p: Vec2) -> f64 {
    w.obstacles
        .iter()
        .map(|o| o.shape.distance_to(p))
        .fold(f64::INFINITY, f64::min)
}

/// A scenario with a start and goal away from obstacles; None when the
/// draw leaves too little room.
fn closed_loop(
    w: WorldModel,
    start: Vec2,
    heading: f64,
    goal: Vec2,
    seed: u64,
) -> Option<Scenario> {
    let mut w = w;
    w.mrp = Pose2D::new(start.x, start.y, heading);
    if nearest_surface(&w, start) < 1.2
        || nearest_surface(&w, goal) < 1.2
        || distance(start, goal) < 1.0
    {
        return None;
    }
    let mut s = Scenario::new(w);
    s.targets.push(goal);
    s.seed = seed;
    Some(s)
}

fn arb_run() -> impl Strategy<Value = Option<Scenario>> {
    (
        arb_world(),
        1.3f64..6.7,
        1.3f64..6.7,
        -3.1f64..3.1,
        1.3f64..6.7,
        1.3f64..6.7,
        any::<u64>(),
    )
        .prop_map(|(w, sx, sy, h, gx, gy, seed)| {
            closed_loop(w, Vec2::new(sx, sy), h, Vec2::new(gx, gy), seed)
        })
}

fn strictly_inside(shape: &Shape, p: Vec2, eps: f64) -> bool {
    match *shape {
        Shape::Disc { center, radius } => (p.x - center.x).hypot(p.y - center.y) < radius - eps,
        Shape::Rect(r) => {
            p.x > r.min.x + eps && p.x < r.max.x - eps && p.y > r.min.y + eps && p.y < r.max.y - eps
        }
    }
}

/// Index of the first row after time `t`.
fn row_after(r: &RunResult, t: f64) -> usize {
    r.log.rows.partition_point(|row| row.t <= t + 1e-9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn bearing_is_translation_invariant(x in -50.0f64..50.0, y in -50.0f64..50.0, h in -PI..PI,
                                        tx in -50.0f64..50.0, ty in -50.0f64..50.0, dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
        let target = Vec2::new(tx, ty);
        prop_assume!(distance(Vec2::new(x, y), target) > 1e-6);
        let a = bearing(&Pose2D::new(x, y, h), target).unwrap();
        let b = bearing(&Pose2D::new(x + dx, y + dy, h), Vec2::new(tx + dx, ty + dy)).unwrap();
        let diff = wrap_angle(a - b).unwrap();
        prop_assert!(diff.abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn bearing_is_rotation_equivariant(x in -50.0f64..50.0, y in -50.0f64..50.0, h in -PI..PI,
                                       tx in -50.0f64..50.0, ty in -50.0f64..50.0, phi in -PI..PI) {
        let target = Vec2::new(tx, ty);
        prop_assume!(distance(Vec2::new(x, y), target) > 1e-3);
        let rot = |p: Vec2| Vec2::new(p.x * phi.cos() - p.y * phi.sin(), p.x * phi.sin() + p.y * phi.cos());
        let a = bearing(&Pose2D::new(x, y, h), target).unwrap();
        let p = rot(Vec2::new(x, y));
        let b = bearing(&Pose2D::new(p.x, p.y, h + phi), rot(target)).unwrap();
        prop_assert!(wrap_angle(a - b).unwrap().abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn distance_obeys_triangle_inequality(a in prop::array::uniform6(-1e3f64..1e3)) {
        let (p, q, r) = (Vec2::new(a[0], a[1]), Vec2::new(a[2], a[3]), Vec2::new(a[4], a[5]));
        prop_assert!(distance(p, r) <= distance(p, q) + distance(q, r) + 1e-9);
    }

    #[test]
    fn ray_hits_stay_in_range_and_on_surfaces(w in arb_world(), ox in 0.2f64..7.8, oy in 0.2f64..7.8,
                                              dir in -PI..PI, range in 0.1f64..6.0) {
        let origin = Vec2::new(ox, oy);
        prop_assume!(w.obstacles.iter().all(|o| o.shape.distance_to(origin) > 1e-6));
        if let Some(d) = ray_cast(origin, dir, range, &w).unwrap() {
            prop_assert!((0.0..=range).contains(&d));
            let hit = Vec2::new(ox + d * dir.cos(), oy + d * dir.sin());
            // Just short of the hit the ray is still in free space, and the
            // hit itself lies on some surface.
            let back = Vec2::new(hit.x - 1e-6 * dir.cos(), hit.y - 1e-6 * dir.sin());
            for o in &w.obstacles {
                prop_assert!(!strictly_inside(&o.shape, back, 1e-9), "ray passed into {}", o.id);
            }
            let b = w.bounds;
            let wall_gap = (hit.x - b.min.x).abs().min((b.max.x - hit.x).abs()).min((hit.y - b.min.y).abs()).min((b.max.y - hit.y).abs());
            prop_assert!(nearest_surface(&w, hit) <= 1e-6 || wall_gap <= 1e-6, "hit at {d} touches nothing");
        }
    }

    #[test]
    fn straight_and_spot_steps_preserve_their_invariant(x in -5.0f64..5.0, y in -5.0f64..5.0, h in -3.0f64..3.0,
                                                        v in -1.0f64..1.0, w in -2.0f64..2.0, dt in 0.001f64..0.5) {
        let pose = Pose2D::new(x, y, h);
        let limits = MotionLimits::default();
        let straight = step_kinematics(&pose, &VelocityCommand::new(v, 0.0), dt, &limits).unwrap();
        prop_assert_eq!(straight.heading, pose.heading);
        let spin = step_kinematics(&pose, &VelocityCommand::new(0.0, w), dt, &limits).unwrap();
        prop_assert_eq!(spin.position, pose.position);
        let a = step_kinematics(&pose, &VelocityCommand::new(v, w), dt, &limits).unwrap();
        let b = step_kinematics(&pose, &VelocityCommand::new(v, w), dt, &limits).unwrap();
        prop_assert_eq!(a.position.x.to_bits(), b.position.x.to_bits());
        prop_assert_eq!(a.position.y.to_bits(), b.position.y.to_bits());
        prop_assert_eq!(a.heading.to_bits(), b.heading.to_bits());
    }

    #[test]
    fn collision_is_monotone_in_radius(w in arb_world(), x in 0.0f64..8.0, y in 0.0f64..8.0, r in 0.01f64..1.0, shrink in 0.0f64..1.0) {
        let mut w = w;
        w.mrp = Pose2D::new(x, y, 0.0);
        w.mrp_radius = r;
        if !check_collision(&w) {
            w.mrp_radius = r * shrink;
            prop_assert!(!check_collision(&w));
        }
    }

    #[test]
    fn report_seq_strictly_increases(w in arb_world(), n in 2usize..20) {
        let mut src = VisionSource::new();
        let (cam, zones, prox) = (CameraConfig::default(), ZoneConfig::default(), ProximityConfig::default());
        let mut last = 0;
        for k in 0..n {
            let r = src.report(&w, &cam, &zones, &prox, k as u64 * 200);
            prop_assert!(r.seq > last);
            last = r.seq;
        }
    }

    #[test]
    fn datagrams_decode_independently(xs in prop::collection::vec((0u64..1000, -100.0f64..100.0, -100.0f64..100.0), 1..30),
                                      keep in prop::collection::vec(any::<bool>(), 30)) {
        let msgs: Vec<WireMessage> = xs.iter().enumerate().map(|(i, &(s, x, y))| {
            if i % 2 == 0 {
                WireMessage::TargetRequest(TargetRequest { seq: s, timestamp_ms: i as u64, x, y })
            } else {
                WireMessage::Command(CommandMsg { seq: s, timestamp_ms: i as u64, command: VelocityCommand::new(x / 100.0, y / 100.0) })
            }
        }).collect();
        let datagrams: Vec<Vec<u8>> = msgs.iter().map(|m| encode(m).unwrap()).collect();
        // Any subset of datagrams decodes to exactly the corresponding messages.
        for (i, d) in datagrams.iter().enumerate() {
            if keep[i] {
                prop_assert_eq!(decode(d).unwrap(), msgs[i].canonical());
            }
        }
    }

    #[test]
    fn report_round_trip(seq in any::<u32>(), ts in any::<u32>(), d in 0.0f64..10.0, close in any::<bool>()) {
        let r = DetectionReport { seq: seq.into(), timestamp_ms: ts.into(), detections: vec![Detection {
            kind: ObjectKind::Obstacle, zone: Zone::Front, est_distance: Some(d), close, source_id: "x".into(),
        }]};
        let m = WireMessage::DetectionReport(r);
        let bytes = encode(&m).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(&back, &m.canonical());
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_loop_contracts(scn in arb_run()) {
        let Some(scn) = scn else { return Ok(()) };
        let r = run(&scn);
        let goal = scn.targets[0];
        let cfg = scn.control_config();

        // Safety with noiseless sensors.
        prop_assert!(!r.collided);

        // Arrival contract and reachability honesty.
        if r.legs == [LegOutcome::Arrived] {
            prop_assert!(distance(r.final_position, goal) <= cfg.arrival_tolerance + 1e-9);
        }
        if !oracle::reachable(&scn.world, goal, 0.0) {
            prop_assert_ne!(r.legs.clone(), vec![LegOutcome::Arrived]);
        }

        // Termination bound, in forward intervals of driving.
        let driving = r.log.rows.iter().filter(|row| row.v > 0.0).count() as f64 * scn.sim.dt;
        prop_assert!(driving <= cfg.forward_budget() as f64 * cfg.forward_interval + 1e-9);

        // Right-first: the first turn after each avoid start is clockwise.
        for e in r.log.events.iter().filter(|e| e.kind == EventKind::AvoidStart) {
            let first_turn = r.log.rows[row_after(&r, e.t)..].iter().find(|row| row.omega != 0.0);
            if let Some(row) = first_turn {
                prop_assert!(row.omega < 0.0, "avoid at t={} turned {}", e.t, row.omega);
            }
        }

        // Heading contract: forward after a rotate starts facing the goal.
        for w in r.log.rows.windows(2) {
            if w[0].mode == "rotating" && w[1].mode == "moving_forward" {
                let b = bearing(&Pose2D::new(w[0].x, w[0].y, w[0].theta), goal).unwrap();
                prop_assert!(b.abs() <= cfg.heading_tolerance + 1e-9, "bearing {b} at t={}", w[0].t);
            }
        }
    }

    #[test]
    fn empty_world_progress_is_monotone(sx in 0.5f64..7.5, sy in 0.5f64..7.5, h in -3.1f64..3.1,
                                        gx in 0.5f64..7.5, gy in 0.5f64..7.5) {
        // Truly empty: no obstacles and no solid arena walls.
        let mut w = arena();
        w.solid_walls = false;
        w.mrp = Pose2D::new(sx, sy, h);
        let goal = Vec2::new(gx, gy);
        let mut scn = Scenario::new(w);
        scn.targets.push(goal);
        let r = run(&scn);
        prop_assert_eq!(r.legs.clone(), vec![LegOutcome::Arrived]);
        // Distance sampled where each outer iteration begins its rotation.
        let mut last = f64::INFINITY;
        let mut prev_mode = "";
        for row in &r.log.rows {
            if row.mode == "rotating" && prev_mode != "rotating" {
                let d = distance(Vec2::new(row.x, row.y), goal);
                prop_assert!(d <= last + 1e-9, "{d} after {last}");
                last = d;
            }
            prev_mode = &row.mode;
        }
    }

    #[test]
    fn seeded_runs_are_bit_identical(scn in arb_run(), noise in 0.0f64..0.05, loss in 0.0f64..0.6) {
        let Some(mut scn) = scn else { return Ok(()) };
        scn.sensor.noise = noise;
        scn.sim.report_loss = loss;
        prop_assert_eq!(run(&scn).log.trajectory_csv().unwrap(), run(&scn).log.trajectory_csv().unwrap());
    }
}
