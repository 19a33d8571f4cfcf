#pragma once

#include <cstdlib>
#include <utility>

#include "evigrid/core.hpp"

namespace evigrid {

struct Point3 {
    double x{0.0}, y{0.0}, z{0.0};
};

struct PointCloud {
    std::vector<Point3> points;
    double timestamp{0.0};
    Pose2 ego_pose;  // world frame
};

/// Inverse sensor model: how much mass one observation commits.
struct MeasurementModel {
    double alpha_occ{0.9};   // mass on {O} for an occupied observation
    double alpha_free{0.7};  // mass on {F} for a free observation

    bool valid() const {
        return alpha_occ > 0.0 && alpha_occ < 1.0 && alpha_free > 0.0 && alpha_free < 1.0;
    }
};

struct RepresentationConfig {
    GridConfig grid;
    int rgm_offset{5};             // frames between the SGM pair feeding the RGM
    double frame_dt{0.1};          // seconds per frame
    double ground_z_threshold{0.2};
    MeasurementModel measurement;

    bool valid() const {
        return grid.valid() && rgm_offset >= 1 && frame_dt > 0.0 && measurement.valid();
    }
};

/// Drops points at or below the ground threshold. Order preserved.
inline PointCloud remove_ground(const PointCloud& cloud, double z_threshold) {
    PointCloud out;
    out.timestamp = cloud.timestamp;
    out.ego_pose = cloud.ego_pose;
    out.points.reserve(cloud.points.size());
    for (const auto& p : cloud.points)
        if (p.z > z_threshold) out.points.push_back(p);
    return out;
}

/// Cells crossed by the segment between the centers of origin and target,
/// in traversal order, excluding both endpoints. A cell counts as crossed
/// when a sample of the segment at 0.01-cell spacing falls strictly inside
/// it; samples landing exactly on a cell boundary belong to neither side
/// and are skipped.
inline std::vector<Cell> raytrace_cells(Cell origin, Cell target, const GridConfig& cfg) {
    cfg.require_valid();
    std::vector<Cell> out;
    if (origin == target) return out;

    // Sample i of n lies at row coordinate (2*(origin.row*n + i*dr) + n)
    // / (2n) in cell units, all exact integers.
    const long long dr = target.row - origin.row;
    const long long dc = target.col - origin.col;
    const long long n = std::max<long long>(
        1, static_cast<long long>(
               std::ceil(100.0 * std::hypot(static_cast<double>(dr), static_cast<double>(dc)))));
    const long long den = 2 * n;

    // Incremental remainders: numerator = cell * den + rem with
    // 0 <= rem < den. Each step adds 2*dr (2*dc); |2*dr| <= den / 100, so
    // one conditional adjustment per step keeps the invariant.
    long long row = origin.row, rem_r = n;
    long long col = origin.col, rem_c = n;
    long long last_row = origin.row, last_col = origin.col;
    for (long long i = 0; i <= n; ++i) {
        if (i > 0) {
            rem_r += 2 * dr;
            if (rem_r >= den) {
                rem_r -= den;
                ++row;
            } else if (rem_r < 0) {
                rem_r += den;
                --row;
            }
            rem_c += 2 * dc;
            if (rem_c >= den) {
                rem_c -= den;
                ++col;
            } else if (rem_c < 0) {
                rem_c += den;
                --col;
            }
        }
        if (rem_r == 0 || rem_c == 0) continue;  // sample on a cell boundary
        if (row == last_row && col == last_col) continue;
        last_row = row;
        last_col = col;
        if ((row == origin.row && col == origin.col) ||
            (row == target.row && col == target.col))
            continue;
        out.push_back({static_cast<int>(row), static_cast<int>(col)});
    }
    return out;
}

namespace detail {

/// Clips an out-of-extent ego-frame point onto the grid boundary (just
/// inside) along the ray from the ego origin.
inline std::optional<Cell> boundary_cell_toward(Vec2 p, const GridConfig& cfg) {
    const double hx = cfg.width * cfg.resolution * 0.5;
    const double hy = cfg.height * cfg.resolution * 0.5;
    const double eps = 1e-6 * cfg.resolution;
    double t = 1.0;
    if (std::abs(p.x) > hx - eps) t = std::min(t, (hx - eps) / std::abs(p.x));
    if (std::abs(p.y) > hy - eps) t = std::min(t, (hy - eps) / std::abs(p.y));
    return world_to_cell(p * t, cfg);
}

}  // namespace detail

/// Builds a sensor grid map from a ground-filtered point cloud. All cells
/// start Occluded. Hit cells are marked first, then each beam marks Free
/// cells from the ego center outward, stopping at the first Occupied cell
/// so that construction is independent of point order. Out-of-extent
/// returns certify free space along their in-grid prefix.
inline Sgm build_sgm(const PointCloud& cloud, const RepresentationConfig& cfg) {
    if (!cfg.valid()) throw InvalidSpec("invalid representation config");
    Sgm sgm = make_sgm(cfg.grid);
    sgm.pose = cloud.ego_pose;
    sgm.timestamp = cloud.timestamp;
    const Cell ego = *world_to_cell({0.0, 0.0}, cfg.grid);

    struct Beam {
        Cell target;
        bool hit;
    };
    std::vector<Beam> beams;
    beams.reserve(cloud.points.size());

    for (const auto& p : cloud.points) {
        const Vec2 xy{p.x, p.y};
        if (auto c = world_to_cell(xy, cfg.grid)) {
            sgm.at(*c) = CellClass::Occupied;
            beams.push_back({*c, true});
        } else if (auto b = detail::boundary_cell_toward(xy, cfg.grid)) {
            beams.push_back({*b, false});
        }
    }

    for (const auto& beam : beams) {
        for (Cell c : raytrace_cells(ego, beam.target, cfg.grid)) {
            if (sgm.at(c) == CellClass::Occupied) break;
            sgm.at(c) = CellClass::Free;
        }
        // An out-of-range beam frees its boundary cell as well.
        if (!beam.hit && sgm.at(beam.target) != CellClass::Occupied)
            sgm.at(beam.target) = CellClass::Free;
    }
    return sgm;
}

/// Residual grid: 1 where the occupancy class flipped between the two
/// known classes, 0 everywhere else. Transitions involving Occluded carry
/// no motion evidence and stay 0. The past SGM must already be
/// ego-compensated into the current frame.
inline Rgm build_rgm(const Sgm& current, const Sgm& past) {
    require_same_dims(current, past, "build_rgm");
    Rgm rgm(current.config, 0);
    rgm.pose = current.pose;
    rgm.timestamp = current.timestamp;
    for (std::size_t i = 0; i < current.size(); ++i) {
        const CellClass a = current.cells[i], b = past.cells[i];
        if (a == CellClass::Occluded || b == CellClass::Occluded) continue;
        rgm.cells[i] = (a != b) ? 1 : 0;
    }
    return rgm;
}

/// Converts one SGM into a per-cell evidential measurement.
inline Eogm sgm_to_measurement(const Sgm& sgm, const MeasurementModel& model) {
    if (!model.valid()) throw InvalidSpec("invalid measurement model");
    Eogm out(sgm.config, BeliefMass::vacuous());
    out.pose = sgm.pose;
    out.timestamp = sgm.timestamp;
    for (std::size_t i = 0; i < sgm.size(); ++i) {
        switch (sgm.cells[i]) {
            case CellClass::Occupied:
                out.cells[i] = {model.alpha_occ, 0.0, 1.0 - model.alpha_occ};
                break;
            case CellClass::Free:
                out.cells[i] = {0.0, model.alpha_free, 1.0 - model.alpha_free};
                break;
            case CellClass::Occluded:
                break;  // vacuous
        }
    }
    return out;
}

/// Per-cell Dempster update of a prior with a fresh measurement. The
/// prior must already be warped into the measurement's ego frame. Cells
/// in total conflict reset to the measurement.
inline Eogm update_eogm(const Eogm& prior, const Eogm& measurement) {
    require_same_dims(prior, measurement, "update_eogm");
    Eogm out(measurement.config);
    out.pose = measurement.pose;
    out.timestamp = measurement.timestamp;
    for (std::size_t i = 0; i < prior.size(); ++i) {
        auto r = try_combine(prior.cells[i], measurement.cells[i]);
        out.cells[i] = r ? *r : measurement.cells[i];
    }
    return out;
}

/// Splits an evidential grid into its static and dynamic parts: masked
/// cells keep their mass on the dynamic side and turn vacuous on the
/// static side, and vice versa.
inline std::pair<Eogm, Eogm> split_by_mask(const Eogm& grid, const DynamicMask& mask) {
    require_same_dims(grid, mask, "split_by_mask");
    Eogm stat(grid.config, BeliefMass::vacuous());
    Eogm dyn(grid.config, BeliefMass::vacuous());
    stat.pose = dyn.pose = grid.pose;
    stat.timestamp = dyn.timestamp = grid.timestamp;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        (mask.cells[i] ? dyn : stat).cells[i] = grid.cells[i];
    }
    return {std::move(stat), std::move(dyn)};
}

}  // namespace evigrid
