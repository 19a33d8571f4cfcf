#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace evigrid {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

// ---------------------------------------------------------------------------
// Errors

struct TotalConflict : std::runtime_error {
    TotalConflict() : std::runtime_error("Dempster combination of totally conflicting masses") {}
};

struct DimensionMismatch : std::runtime_error {
    explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct LengthMismatch : std::runtime_error {
    explicit LengthMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyDataset : std::runtime_error {
    explicit EmptyDataset(const std::string& what) : std::runtime_error(what) {}
};

struct AlignmentError : std::runtime_error {
    explicit AlignmentError(const std::string& what) : std::runtime_error(what) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidSpec : std::runtime_error {
    explicit InvalidSpec(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Geometry

struct Vec2 {
    double x{0.0};
    double y{0.0};

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double norm() const { return std::hypot(x, y); }
};

/// Normalizes an angle to (-pi, pi].
inline double normalize_angle(double a) {
    a = std::remainder(a, 2.0 * M_PI);
    if (a <= -M_PI) a += 2.0 * M_PI;
    return a;
}

/// SE(2) ego pose in the world frame.
struct Pose2 {
    double x{0.0};
    double y{0.0};
    double heading{0.0};  // normalized to (-pi, pi]

    Pose2() = default;
    Pose2(double px, double py, double h) : x(px), y(py), heading(normalize_angle(h)) {}

    /// Maps a point from this pose's local frame to the world frame.
    Vec2 to_world(Vec2 p) const {
        const double c = std::cos(heading), s = std::sin(heading);
        return {x + p.x * c - p.y * s, y + p.x * s + p.y * c};
    }

    /// Maps a world-frame point into this pose's local frame.
    Vec2 to_local(Vec2 p) const {
        const double c = std::cos(heading), s = std::sin(heading);
        const double dx = p.x - x, dy = p.y - y;
        return {dx * c + dy * s, -dx * s + dy * c};
    }
};

// ---------------------------------------------------------------------------
// Grid containers

struct GridConfig {
    int width{128};
    int height{128};
    double resolution{0.33};

    bool valid() const { return width >= 1 && height >= 1 && resolution > 0.0; }

    void require_valid() const {
        if (!valid()) throw InvalidSpec("invalid grid config");
    }

    bool operator==(const GridConfig&) const = default;
};

struct Cell {
    int row{0};
    int col{0};

    bool operator==(const Cell&) const = default;
    auto operator<=>(const Cell&) const = default;
};

/// Cell occupancy class as observed by the sensor. Numeric codes are the
/// on-disk EGRD codes.
enum class CellClass : std::uint8_t {
    Free = 0,
    Occupied = 1,
    Occluded = 2,
};

/// Ego-centered lookup: +x to increasing column, +y to increasing row,
/// ego at cell (height/2, width/2). Returns nothing for points outside
/// the grid extent.
inline std::optional<Cell> world_to_cell(Vec2 p, const GridConfig& cfg) {
    const double col = std::floor(p.x / cfg.resolution + cfg.width * 0.5);
    const double row = std::floor(p.y / cfg.resolution + cfg.height * 0.5);
    if (col < 0.0 || col >= cfg.width || row < 0.0 || row >= cfg.height) return std::nullopt;
    return Cell{static_cast<int>(row), static_cast<int>(col)};
}

/// Center of a cell in the ego frame. Inverse of world_to_cell up to
/// in-cell position.
inline Vec2 cell_center(Cell c, const GridConfig& cfg) {
    return {(c.col - cfg.width * 0.5 + 0.5) * cfg.resolution,
            (c.row - cfg.height * 0.5 + 0.5) * cfg.resolution};
}

/// Generic ego-centered grid. The tag keeps semantically different grids
/// (e.g. residual grids vs dynamic masks) from mixing silently.
template <class T, class Tag = void>
struct GridMap {
    GridConfig config;
    std::vector<T> cells;
    Pose2 pose;
    double timestamp{0.0};

    GridMap() = default;
    explicit GridMap(const GridConfig& cfg, T fill = T{}) : config(cfg) {
        cfg.require_valid();
        cells.assign(static_cast<std::size_t>(cfg.width) * cfg.height, fill);
    }

    T& at(int row, int col) { return cells[static_cast<std::size_t>(row) * config.width + col]; }
    const T& at(int row, int col) const {
        return cells[static_cast<std::size_t>(row) * config.width + col];
    }
    T& at(Cell c) { return at(c.row, c.col); }
    const T& at(Cell c) const { return at(c.row, c.col); }

    bool in_bounds(Cell c) const {
        return c.row >= 0 && c.row < config.height && c.col >= 0 && c.col < config.width;
    }

    std::size_t size() const { return cells.size(); }
};

/// Same cell layout. Resolutions are compared with a small tolerance so
/// grids that round-tripped through the f32 file header still match.
template <class T, class TagA, class U, class TagB>
inline void require_same_dims(const GridMap<T, TagA>& a, const GridMap<U, TagB>& b,
                              const char* where) {
    const bool res_ok =
        std::abs(a.config.resolution - b.config.resolution) <= 1e-6 * a.config.resolution;
    if (a.config.width != b.config.width || a.config.height != b.config.height || !res_ok)
        throw DimensionMismatch(std::string(where) + ": grid dimensions differ");
}

// ---------------------------------------------------------------------------
// Dempster-Shafer masses over the frame {O, F}

/// Belief mass over {O}, {F} and the ignorance hypothesis {O,F}.
/// Components sum to one.
struct BeliefMass {
    double o{0.0};  // m({O})
    double f{0.0};  // m({F})
    double u{1.0};  // m({O,F})

    static BeliefMass vacuous() { return {0.0, 0.0, 1.0}; }

    bool valid(double tol = 1e-9) const {
        auto in01 = [](double v) { return v >= -1e-12 && v <= 1.0 + 1e-12; };
        return in01(o) && in01(f) && in01(u) && std::abs(o + f + u - 1.0) <= tol;
    }

    bool operator==(const BeliefMass&) const = default;
};

/// Dempster's rule on the 2-element frame. Returns nothing on total
/// conflict (K = 1 within 1e-12); callers pick the fallback.
inline std::optional<BeliefMass> try_combine(BeliefMass a, BeliefMass b) {
    const double conflict = a.o * b.f + a.f * b.o;
    const double norm = 1.0 - conflict;
    if (norm <= 1e-12) return std::nullopt;
    BeliefMass r;
    r.o = (a.o * b.o + a.o * b.u + a.u * b.o) / norm;
    r.f = (a.f * b.f + a.f * b.u + a.u * b.f) / norm;
    r.u = (a.u * b.u) / norm;
    return r;
}

inline BeliefMass combine_masses(BeliefMass a, BeliefMass b) {
    auto r = try_combine(a, b);
    if (!r) throw TotalConflict{};
    return *r;
}

/// Scales the informative masses by gamma, moving the remainder to
/// ignorance. gamma=1 is the identity, gamma=0 is vacuous.
inline BeliefMass discount_mass(BeliefMass m, double gamma) {
    BeliefMass r;
    r.o = gamma * m.o;
    r.f = gamma * m.f;
    r.u = 1.0 - r.o - r.f;
    return r;
}

/// Point occupancy probability: ignorance mass split evenly.
inline double pignistic(BeliefMass m) { return m.o + 0.5 * m.u; }

/// Discretizes a mass to the class of its largest component. Ties prefer
/// Occluded over Occupied over Free.
inline CellClass classify_mass(BeliefMass m) {
    if (m.u >= m.o && m.u >= m.f) return CellClass::Occluded;
    if (m.o >= m.f) return CellClass::Occupied;
    return CellClass::Free;
}

// ---------------------------------------------------------------------------
// Named grid types

struct SgmTag;
struct RgmTag;
struct MaskTag;
struct EogmTag;
struct OgmTag;

using Sgm = GridMap<CellClass, SgmTag>;
using Rgm = GridMap<std::uint8_t, RgmTag>;
using DynamicMask = GridMap<std::uint8_t, MaskTag>;
using Eogm = GridMap<BeliefMass, EogmTag>;
using Ogm = GridMap<double, OgmTag>;

inline Sgm make_sgm(const GridConfig& cfg) { return Sgm(cfg, CellClass::Occluded); }

// ---------------------------------------------------------------------------
// Ego-motion compensation

/// Resamples a grid captured at from_pose into the local frame of to_pose.
/// Each destination cell center is mapped through the SE(2) frame change
/// into the source frame and filled by nearest-neighbor lookup; cells
/// falling outside the source extent take `fill`.
template <class T, class Tag>
GridMap<T, Tag> warp_grid(const GridMap<T, Tag>& src, const Pose2& from_pose,
                          const Pose2& to_pose, T fill) {
    GridMap<T, Tag> dst(src.config, fill);
    dst.pose = to_pose;
    dst.timestamp = src.timestamp;
    for (int r = 0; r < src.config.height; ++r) {
        for (int c = 0; c < src.config.width; ++c) {
            const Vec2 p_world = to_pose.to_world(cell_center({r, c}, src.config));
            const Vec2 p_src = from_pose.to_local(p_world);
            if (auto sc = world_to_cell(p_src, src.config)) dst.at(r, c) = src.at(*sc);
        }
    }
    return dst;
}

/// warp_grid for sensor grids with the out-of-view fill fixed to Occluded.
inline Sgm transform_grid(const Sgm& src, const Pose2& from_pose, const Pose2& to_pose) {
    return warp_grid(src, from_pose, to_pose, CellClass::Occluded);
}

// ---------------------------------------------------------------------------
// Connected components on binary grids

/// Partitions mask=1 cells into maximal connected sets (4- or
/// 8-connectivity). Components are ordered by their smallest (row, col)
/// member and each component's cells are sorted.
template <class Tag>
std::vector<std::vector<Cell>> connected_components(const GridMap<std::uint8_t, Tag>& mask,
                                                    int connectivity = 8) {
    if (connectivity != 4 && connectivity != 8)
        throw InvalidSpec("connectivity must be 4 or 8");
    const int h = mask.config.height, w = mask.config.width;
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::vector<std::vector<Cell>> components;

    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const std::size_t idx = static_cast<std::size_t>(r) * w + c;
            if (!mask.cells[idx] || seen[idx]) continue;
            std::vector<Cell> comp;
            std::deque<Cell> queue{{r, c}};
            seen[idx] = 1;
            while (!queue.empty()) {
                Cell cur = queue.front();
                queue.pop_front();
                comp.push_back(cur);
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        if (connectivity == 4 && dr != 0 && dc != 0) continue;
                        Cell nb{cur.row + dr, cur.col + dc};
                        if (!mask.in_bounds(nb)) continue;
                        const std::size_t nidx =
                            static_cast<std::size_t>(nb.row) * w + nb.col;
                        if (!mask.cells[nidx] || seen[nidx]) continue;
                        seen[nidx] = 1;
                        queue.push_back(nb);
                    }
                }
            }
            std::sort(comp.begin(), comp.end());
            components.push_back(std::move(comp));
        }
    }
    // Scan order already yields ordering by smallest member.
    return components;
}

}  // namespace evigrid
