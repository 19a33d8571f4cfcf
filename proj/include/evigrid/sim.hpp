#pragma once

#include <random>

#include "evigrid/io.hpp"

namespace evigrid {

// ---------------------------------------------------------------------------
// World description

struct Segment {
    Vec2 a, b;
};

/// Axis-aligned rectangle, world frame.
struct RectShape {
    Vec2 center;
    double size_x{1.0};
    double size_y{1.0};

    bool contains(Vec2 p) const {
        return std::abs(p.x - center.x) <= size_x * 0.5 &&
               std::abs(p.y - center.y) <= size_y * 0.5;
    }

    std::array<Segment, 4> edges() const {
        const double hx = size_x * 0.5, hy = size_y * 0.5;
        const Vec2 c = center;
        const Vec2 bl{c.x - hx, c.y - hy}, br{c.x + hx, c.y - hy};
        const Vec2 tr{c.x + hx, c.y + hy}, tl{c.x - hx, c.y + hy};
        return {Segment{bl, br}, Segment{br, tr}, Segment{tr, tl}, Segment{tl, bl}};
    }
};

/// Piecewise-linear path with one speed per leg (a single speed is
/// broadcast). An entity past the last waypoint, or on a zero-speed leg,
/// holds position with zero speed.
struct Trajectory {
    std::vector<Vec2> waypoints;
    std::vector<double> speeds;

    bool valid() const {
        if (waypoints.empty()) return false;
        for (double s : speeds)
            if (s < 0.0 || !std::isfinite(s)) return false;
        return true;
    }
};

struct TrajectoryState {
    Vec2 position;
    double heading{0.0};
    double speed{0.0};
};

inline TrajectoryState trajectory_at(const Trajectory& traj, double t) {
    if (!traj.valid()) throw InvalidSpec("degenerate trajectory");
    TrajectoryState st{traj.waypoints.front(), 0.0, 0.0};
    if (traj.waypoints.size() == 1) return st;

    double remaining = t;
    for (std::size_t i = 0; i + 1 < traj.waypoints.size(); ++i) {
        const Vec2 a = traj.waypoints[i], b = traj.waypoints[i + 1];
        const Vec2 d = b - a;
        const double len = d.norm();
        const double speed =
            traj.speeds.empty() ? 0.0 : traj.speeds[std::min(i, traj.speeds.size() - 1)];
        if (len > 1e-12) st.heading = std::atan2(d.y, d.x);
        if (speed <= 0.0 || len <= 1e-12) {
            // Parked on this leg.
            st.position = a;
            st.speed = 0.0;
            return st;
        }
        const double leg_time = len / speed;
        if (remaining < leg_time) {
            const double frac = remaining * speed / len;
            st.position = a + d * frac;
            st.speed = speed;
            return st;
        }
        remaining -= leg_time;
        st.position = b;
        st.speed = 0.0;
    }
    return st;  // past the end: hold the final waypoint
}

struct AgentSpec {
    double size_x{1.0};   // footprint extent along world x, meters
    double size_y{0.66};
    Trajectory trajectory;

    bool valid() const {
        return size_x > 0.0 && size_y > 0.0 && trajectory.valid();
    }
};

struct SensorSpec {
    int beams{720};
    double max_range{30.0};
    double span{2.0 * M_PI};
    double noise_sigma{0.02};

    bool valid() const { return beams >= 1 && max_range > 0.0 && span > 0.0 && noise_sigma >= 0.0; }
};

struct WorldSpec {
    std::vector<RectShape> rects;
    std::vector<Segment> walls;
    std::vector<AgentSpec> agents;
    Trajectory ego;
    SensorSpec sensor;
    std::uint64_t seed{0};
    bool inject_ground{false};  // adds z=0 returns to exercise ground removal

    void require_valid() const {
        if (!sensor.valid()) throw InvalidSpec("invalid sensor spec");
        if (!ego.valid()) throw InvalidSpec("degenerate ego trajectory");
        for (const auto& a : agents)
            if (!a.valid()) throw InvalidSpec("degenerate agent spec");
        for (const auto& r : rects)
            if (r.size_x <= 0.0 || r.size_y <= 0.0) throw InvalidSpec("degenerate rect");
    }
};

/// Positions and speeds of everything at one instant.
struct WorldState {
    Pose2 ego;
    std::vector<RectShape> agent_rects;
    std::vector<double> agent_speeds;
};

inline WorldState world_at(const WorldSpec& spec, double t) {
    WorldState st;
    const auto ego = trajectory_at(spec.ego, t);
    st.ego = Pose2(ego.position.x, ego.position.y, ego.heading);
    for (const auto& a : spec.agents) {
        const auto s = trajectory_at(a.trajectory, t);
        st.agent_rects.push_back({s.position, a.size_x, a.size_y});
        st.agent_speeds.push_back(s.speed);
    }
    return st;
}

// ---------------------------------------------------------------------------
// Sensing

namespace detail {

/// Ray-segment intersection: distance along the ray, or nothing.
inline std::optional<double> ray_segment(Vec2 origin, Vec2 dir, const Segment& seg) {
    const Vec2 e = seg.b - seg.a;
    const double denom = dir.x * e.y - dir.y * e.x;
    if (std::abs(denom) < 1e-14) return std::nullopt;
    const Vec2 ao = seg.a - origin;
    const double t = (ao.x * e.y - ao.y * e.x) / denom;
    const double s = (ao.x * dir.y - ao.y * dir.x) / denom;
    if (t < 0.0 || s < 0.0 || s > 1.0) return std::nullopt;
    return t;
}

inline void collect_segments(const WorldSpec& spec, const WorldState& st,
                             std::vector<Segment>& out) {
    out.clear();
    out.insert(out.end(), spec.walls.begin(), spec.walls.end());
    for (const auto& r : spec.rects)
        for (const auto& e : r.edges()) out.push_back(e);
    for (const auto& r : st.agent_rects)
        for (const auto& e : r.edges()) out.push_back(e);
}

}  // namespace detail

/// Casts beams uniformly over the angular span from the ego origin and
/// returns the nearest hits within max range as z=1 points in the ego
/// frame, with seeded Gaussian range noise. Beams without a hit return
/// nothing.
inline PointCloud lidar_scan(const WorldSpec& spec, const WorldState& st, double timestamp,
                             std::mt19937_64& rng) {
    spec.require_valid();
    PointCloud cloud;
    cloud.timestamp = timestamp;
    cloud.ego_pose = st.ego;

    std::vector<Segment> segments;
    detail::collect_segments(spec, st, segments);
    std::normal_distribution<double> noise(0.0, 1.0);

    const Vec2 origin{st.ego.x, st.ego.y};
    for (int i = 0; i < spec.sensor.beams; ++i) {
        const double local_angle =
            -spec.sensor.span * 0.5 + spec.sensor.span * i / spec.sensor.beams;
        const double angle = st.ego.heading + local_angle;
        const Vec2 dir{std::cos(angle), std::sin(angle)};
        double best = std::numeric_limits<double>::infinity();
        for (const auto& seg : segments) {
            if (auto t = detail::ray_segment(origin, dir, seg)) best = std::min(best, *t);
        }
        if (best > spec.sensor.max_range) continue;
        double range = best;
        if (spec.sensor.noise_sigma > 0.0) {
            range = std::max(0.0, range + spec.sensor.noise_sigma * noise(rng));
        }
        cloud.points.push_back(
            {range * std::cos(local_angle), range * std::sin(local_angle), 1.0});
        if (spec.inject_ground)
            cloud.points.push_back({0.5 * range * std::cos(local_angle),
                                    0.5 * range * std::sin(local_angle), 0.0});
    }
    return cloud;
}

constexpr double kMovingSpeedThreshold = 0.05;  // m/s

/// Ground-truth dynamic labels: cells whose centers fall inside a moving
/// agent's footprint. Momentarily stopped agents count as static.
inline DynamicMask gt_dynamic_mask(const WorldState& st, const GridConfig& grid,
                                   double speed_threshold = kMovingSpeedThreshold) {
    grid.require_valid();
    DynamicMask mask(grid, 0);
    mask.pose = st.ego;
    for (int r = 0; r < grid.height; ++r) {
        for (int c = 0; c < grid.width; ++c) {
            const Vec2 world = st.ego.to_world(cell_center({r, c}, grid));
            for (std::size_t a = 0; a < st.agent_rects.size(); ++a) {
                if (st.agent_speeds[a] > speed_threshold && st.agent_rects[a].contains(world)) {
                    mask.at(r, c) = 1;
                    break;
                }
            }
        }
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Sequences and datasets

struct Frame {
    PointCloud cloud;
    Pose2 ego_pose;
    DynamicMask gt_mask;
    Sgm gt_sgm;  // built from a noiseless scan
    double timestamp{0.0};
};

struct Sequence {
    std::string name;
    bool is_static_control{false};
    std::vector<Frame> frames;
};

struct Dataset {
    std::vector<Sequence> sequences;
    RepresentationConfig config;
    std::uint64_t seed{0};
    std::string world_hash;
};

/// Simulates one sequence: advances ego and agents along their
/// trajectories and emits one frame per step. Identical spec and seed
/// give bit-identical output.
inline std::vector<Frame> simulate(const WorldSpec& spec, int frames, double frame_dt,
                                   const RepresentationConfig& repr) {
    spec.require_valid();
    if (frames < 1) throw InvalidSpec("frame count must be >= 1");
    if (frame_dt <= 0.0) throw InvalidSpec("frame_dt must be positive");

    std::vector<Frame> out;
    out.reserve(frames);
    for (int k = 0; k < frames; ++k) {
        const double t = k * frame_dt;
        const WorldState st = world_at(spec, t);
        std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(k));

        Frame frame;
        frame.timestamp = t;
        frame.ego_pose = st.ego;
        frame.cloud = lidar_scan(spec, st, t, rng);
        frame.gt_mask = gt_dynamic_mask(st, repr.grid);
        frame.gt_mask.timestamp = t;

        WorldSpec noiseless = spec;
        noiseless.sensor.noise_sigma = 0.0;
        noiseless.inject_ground = false;
        std::mt19937_64 unused(0);
        PointCloud clean = lidar_scan(noiseless, st, t, unused);
        frame.gt_sgm = build_sgm(clean, repr);

        out.push_back(std::move(frame));
    }
    return out;
}

// ---------------------------------------------------------------------------
// WorldSpec JSON

inline nlohmann::json to_json(const Trajectory& t) {
    nlohmann::json wps = nlohmann::json::array();
    for (const auto& w : t.waypoints) wps.push_back({w.x, w.y});
    return {{"waypoints", wps}, {"speeds", t.speeds}};
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
    Trajectory t;
    for (const auto& w : j.at("waypoints")) t.waypoints.push_back({w.at(0), w.at(1)});
    if (j.contains("speeds")) t.speeds = j.at("speeds").get<std::vector<double>>();
    return t;
}

inline nlohmann::json to_json(const WorldSpec& spec) {
    nlohmann::json j;
    j["seed"] = spec.seed;
    j["inject_ground"] = spec.inject_ground;
    j["sensor"] = {{"beams", spec.sensor.beams},
                   {"max_range", spec.sensor.max_range},
                   {"span", spec.sensor.span},
                   {"noise_sigma", spec.sensor.noise_sigma}};
    j["rects"] = nlohmann::json::array();
    for (const auto& r : spec.rects)
        j["rects"].push_back(
            {{"cx", r.center.x}, {"cy", r.center.y}, {"size_x", r.size_x}, {"size_y", r.size_y}});
    j["walls"] = nlohmann::json::array();
    for (const auto& w : spec.walls)
        j["walls"].push_back({{"x1", w.a.x}, {"y1", w.a.y}, {"x2", w.b.x}, {"y2", w.b.y}});
    j["agents"] = nlohmann::json::array();
    for (const auto& a : spec.agents)
        j["agents"].push_back({{"size_x", a.size_x},
                               {"size_y", a.size_y},
                               {"trajectory", to_json(a.trajectory)}});
    j["ego"] = to_json(spec.ego);
    return j;
}

inline WorldSpec world_spec_from_json(const nlohmann::json& j) {
    WorldSpec spec;
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.inject_ground = j.value("inject_ground", false);
    if (j.contains("sensor")) {
        const auto& s = j.at("sensor");
        spec.sensor.beams = s.value("beams", spec.sensor.beams);
        spec.sensor.max_range = s.value("max_range", spec.sensor.max_range);
        spec.sensor.span = s.value("span", spec.sensor.span);
        spec.sensor.noise_sigma = s.value("noise_sigma", spec.sensor.noise_sigma);
    }
    for (const auto& r : j.value("rects", nlohmann::json::array()))
        spec.rects.push_back(
            {{r.at("cx"), r.at("cy")}, r.at("size_x"), r.at("size_y")});
    for (const auto& w : j.value("walls", nlohmann::json::array()))
        spec.walls.push_back({{w.at("x1"), w.at("y1")}, {w.at("x2"), w.at("y2")}});
    for (const auto& a : j.value("agents", nlohmann::json::array())) {
        AgentSpec agent;
        agent.size_x = a.at("size_x");
        agent.size_y = a.at("size_y");
        agent.trajectory = trajectory_from_json(a.at("trajectory"));
        spec.agents.push_back(agent);
    }
    spec.ego = trajectory_from_json(j.at("ego"));
    spec.require_valid();
    return spec;
}

/// FNV-1a over the canonical JSON serialization of the spec.
inline std::string world_spec_hash(const WorldSpec& spec) {
    const std::string s = to_json(spec).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Standard synthetic suite

namespace detail {

inline int pick(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Suite geometry lives on the cell-center lattice of the default 0.33 m
// grid: positions are cell centers, footprints span a whole number of
// cells with a 0.03 m margin to the cell boundaries, and speeds are whole
// (or half) cells per 0.1 s frame. That keeps object boundaries away from
// cell edges at every sampled instant, so the segmentation thresholds
// measure motion evidence rather than discretization flicker.
constexpr double kSuiteRes = 0.33;
constexpr double kCellPerFrame = 3.3;  // m/s: one cell per 0.1 s frame

/// Ordinate of cell-center k of the default grid.
inline double lattice(int k) { return (k + 0.5) * kSuiteRes; }

constexpr double kSlabDepth = 0.27;   // 1 cell minus margins
constexpr double kSlabWidth = 0.93;   // 3 cells minus margins
constexpr double kParkedLen = 1.59;   // 5 cells minus margins
constexpr double kSuiteSigma = 0.003;  // range noise, well under the margins

/// Multiple vehicles driving in traffic on a walled straight road. The
/// ego drives one cell per frame; vehicles close at one or two cells per
/// frame relative to it.
inline WorldSpec traffic_scene(std::mt19937_64& rng, std::uint64_t seed) {
    WorldSpec spec;
    spec.seed = seed;
    spec.sensor.noise_sigma = kSuiteSigma;
    // Wall extents keep every wall cell within the grazing range where the
    // 0.5 deg beam fan still lands at least one hit per 0.33 m cell
    // (|x - ego| < ~13.6 m at this lateral offset); beyond that, hit gaps
    // open up and the gap cells flicker between occupied and free.
    // Endpoints sit on cell boundaries so no cell holds a partial stub.
    spec.walls.push_back({{-5.94, -lattice(17)}, {12.54, -lattice(17)}});
    spec.walls.push_back({{-5.94, lattice(17)}, {12.54, lattice(17)}});
    spec.ego.waypoints = {{0.0, 0.0}, {33.0, 0.0}};
    spec.ego.speeds = {kCellPerFrame};

    struct VehiclePlan {
        int lane_cell;
        int x0_cell;
        double speed;
        double direction;
    };
    const VehiclePlan plans[3] = {
        // Overtaker in the near lane, starting behind the ego.
        {pick(rng, 5, 6), pick(rng, -15, -6), 2.0 * kCellPerFrame, 1.0},
        // Oncoming vehicle in the opposite lane.
        {-1 - pick(rng, 4, 7), pick(rng, 25, 40), kCellPerFrame, -1.0},
        // Oncoming vehicle in the far lane.
        {pick(rng, 9, 10), pick(rng, 45, 58), kCellPerFrame, -1.0},
    };
    for (const auto& p : plans) {
        AgentSpec car;
        car.size_x = kSlabDepth;
        car.size_y = kSlabWidth;
        const double lane = lattice(p.lane_cell);
        const double x0 = lattice(p.x0_cell);
        car.trajectory.waypoints = {{x0, lane}, {x0 + p.direction * 66.0, lane}};
        car.trajectory.speeds = {p.speed};
        spec.agents.push_back(car);
    }
    return spec;
}

/// Parked cars along both curbs around a stationary ego; optionally one
/// vehicle drives through.
inline WorldSpec parked_scene(std::mt19937_64& rng, std::uint64_t seed, bool with_mover) {
    WorldSpec spec;
    spec.seed = seed;
    spec.sensor.noise_sigma = kSuiteSigma;
    spec.ego.waypoints = {{0.0, 0.0}};
    // Kerb walls behind the parked rows keep the road observed through the
    // gaps between cars, so a mover's leading cells are known-free before
    // it arrives.
    spec.walls.push_back({{-12.21, lattice(16)}, {12.21, lattice(16)}});
    spec.walls.push_back({{-12.21, -lattice(16)}, {12.21, -lattice(16)}});
    for (int i = 0; i < 4; ++i) {
        spec.rects.push_back(
            {{lattice(-21 + 12 * i + pick(rng, 0, 3)), lattice(13)}, kParkedLen, kSlabWidth});
        spec.rects.push_back(
            {{lattice(-16 + 12 * i + pick(rng, 0, 3)), -lattice(13)}, kParkedLen, kSlabWidth});
    }
    if (with_mover) {
        AgentSpec car;
        car.size_x = kSlabDepth;
        car.size_y = kSlabWidth;
        // Lane offset keeps the mover clear of the ego at the origin.
        int lane_cell = pick(rng, 4, 7);
        if (pick(rng, 0, 1) == 1) lane_cell = -1 - lane_cell;
        const double lane = lattice(lane_cell);
        const double x0 = lattice(pick(rng, -12, -8));
        car.trajectory.waypoints = {{x0, lane}, {x0 + 66.0, lane}};
        car.trajectory.speeds = {kCellPerFrame};
        spec.agents.push_back(car);
    }
    return spec;
}

/// Pedestrians crossing the street in front of a stationary ego near a
/// building wall: small agents at half a cell per frame.
inline WorldSpec pedestrian_scene(std::mt19937_64& rng, std::uint64_t seed) {
    WorldSpec spec;
    spec.seed = seed;
    spec.sensor.noise_sigma = kSuiteSigma;
    spec.walls.push_back({{-28.71, lattice(23)}, {28.71, lattice(23)}});
    spec.rects.push_back({{lattice(pick(rng, -27, -18)), -lattice(13)}, kParkedLen, kSlabWidth});
    spec.ego.waypoints = {{0.0, 0.0}};
    // Both pedestrians step off the building side and walk toward the ego
    // lane, so the cells they walk into are backed by wall returns and are
    // known-free before each step.
    for (int p = 0; p < 2; ++p) {
        AgentSpec ped;
        ped.size_x = kSlabDepth;
        ped.size_y = kSlabWidth;
        const double side = (p == 0) ? 1.0 : -1.0;
        const double x = side * lattice(pick(rng, 6, 9));
        const double y0 = lattice(13);
        ped.trajectory.waypoints = {{x, y0}, {x, y0 - 33.0}};
        ped.trajectory.speeds = {0.25 * kCellPerFrame};
        spec.agents.push_back(ped);
    }
    return spec;
}

}  // namespace detail

constexpr int kSuiteSequences = 30;
constexpr int kSuiteFrames = 20;

/// 30 deterministic sequences of 20 frames: 10 traffic scenes, 10
/// parked-car scenes (two of them all-static controls), 10 crossing
/// pedestrians.
inline Dataset standard_suite(std::uint64_t seed,
                              const RepresentationConfig& repr = RepresentationConfig{}) {
    Dataset ds;
    ds.config = repr;
    ds.seed = seed;
    std::mt19937_64 rng(seed ^ 0xabcdef0123456789ULL);

    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (int i = 0; i < kSuiteSequences; ++i) {
        const std::uint64_t scene_seed = seed * 1000 + static_cast<std::uint64_t>(i);
        WorldSpec spec;
        Sequence seq;
        char name[16];
        std::snprintf(name, sizeof(name), "seq_%03d", i);
        seq.name = name;
        if (i < 10) {
            spec = detail::traffic_scene(rng, scene_seed);
        } else if (i < 20) {
            const bool control = (i == 18 || i == 19);
            spec = detail::parked_scene(rng, scene_seed, !control);
            seq.is_static_control = control;
        } else {
            spec = detail::pedestrian_scene(rng, scene_seed);
        }
        seq.frames = simulate(spec, kSuiteFrames, repr.frame_dt, repr);
        ds.sequences.push_back(std::move(seq));
        for (unsigned char ch : world_spec_hash(spec)) {
            hash ^= ch;
            hash *= 0x100000001b3ULL;
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    ds.world_hash = buf;
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset persistence

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create dataset directory: " + dir.string());

    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["seed"] = ds.seed;
    manifest["world_hash"] = ds.world_hash;
    manifest["grid"] = {{"width", ds.config.grid.width},
                        {"height", ds.config.grid.height},
                        {"resolution", ds.config.grid.resolution}};
    manifest["frame_dt"] = ds.config.frame_dt;
    manifest["rgm_offset"] = ds.config.rgm_offset;
    manifest["ground_z_threshold"] = ds.config.ground_z_threshold;
    manifest["alpha_occ"] = ds.config.measurement.alpha_occ;
    manifest["alpha_free"] = ds.config.measurement.alpha_free;
    manifest["sequences"] = nlohmann::json::array();

    for (const auto& seq : ds.sequences) {
        fs::create_directories(dir / seq.name, ec);
        if (ec) throw IoError("cannot create sequence directory: " + (dir / seq.name).string());
        nlohmann::json jseq;
        jseq["name"] = seq.name;
        jseq["control"] = seq.is_static_control;
        jseq["frames"] = nlohmann::json::array();
        for (std::size_t f = 0; f < seq.frames.size(); ++f) {
            const Frame& frame = seq.frames[f];
            char stem[32];
            std::snprintf(stem, sizeof(stem), "frame_%03zu", f);
            const std::string cloud_rel = seq.name + "/" + stem + ".cloud.epcd";
            const std::string mask_rel = seq.name + "/" + stem + ".gt_mask.egrd";
            const std::string sgm_rel = seq.name + "/" + stem + ".gt_sgm.egrd";
            write_epcd(dir / cloud_rel, frame.cloud);
            write_egrd(dir / mask_rel, frame.gt_mask);
            write_egrd(dir / sgm_rel, frame.gt_sgm);
            jseq["frames"].push_back({{"cloud", cloud_rel},
                                      {"gt_mask", mask_rel},
                                      {"gt_sgm", sgm_rel},
                                      {"timestamp", frame.timestamp}});
        }
        manifest["sequences"].push_back(std::move(jseq));
    }

    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
    if (!out.flush()) throw IoError("manifest write failed");
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest: " + manifest_path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }

    Dataset ds;
    try {
        if (manifest.at("version").get<int>() != 1)
            throw FormatError("unsupported manifest version in " + manifest_path.string());
        ds.seed = manifest.at("seed");
        ds.world_hash = manifest.value("world_hash", "");
        const auto& grid = manifest.at("grid");
        ds.config.grid = {grid.at("width"), grid.at("height"), grid.at("resolution")};
        ds.config.frame_dt = manifest.at("frame_dt");
        ds.config.rgm_offset = manifest.value("rgm_offset", 5);
        ds.config.ground_z_threshold = manifest.value("ground_z_threshold", 0.2);
        ds.config.measurement.alpha_occ = manifest.value("alpha_occ", 0.9);
        ds.config.measurement.alpha_free = manifest.value("alpha_free", 0.7);
        if (!ds.config.valid()) throw FormatError("invalid config in " + manifest_path.string());

        for (const auto& jseq : manifest.at("sequences")) {
            Sequence seq;
            seq.name = jseq.at("name");
            seq.is_static_control = jseq.value("control", false);
            for (const auto& jf : jseq.at("frames")) {
                Frame frame;
                const fs::path cloud = dir / jf.at("cloud").get<std::string>();
                const fs::path mask = dir / jf.at("gt_mask").get<std::string>();
                const fs::path sgm = dir / jf.at("gt_sgm").get<std::string>();
                for (const fs::path& p : {cloud, mask, sgm})
                    if (!fs::exists(p))
                        throw FormatError("manifest references missing file: " + p.string());
                frame.cloud = read_epcd(cloud);
                frame.gt_mask = read_egrd_mask(mask);
                frame.gt_sgm = read_egrd_sgm(sgm);
                frame.timestamp = jf.at("timestamp");
                frame.ego_pose = frame.cloud.ego_pose;
                seq.frames.push_back(std::move(frame));
            }
            ds.sequences.push_back(std::move(seq));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    return ds;
}

}  // namespace evigrid
