#pragma once

#include "evigrid/representation.hpp"

namespace evigrid {

struct SequenceSpec {
    int past_frames{5};
    int horizon{15};
    double frame_dt{0.1};

    bool valid() const { return past_frames >= 2 && horizon >= 1 && frame_dt > 0.0; }
};

/// One tracked moving component at the current frame.
struct Track {
    int id{0};
    std::vector<Cell> cells;   // member cells, current frame
    Vec2 centroid;             // (x=col, y=row), fractional cells
    Vec2 velocity;             // m/s, x along columns, y along rows
};

struct PredictorConfig {
    SequenceSpec sequence;
    double gate_radius{2.0};      // meters, track association gate
    double static_discount{0.98}; // per-step confidence decay
    int track_offset{5};          // frames between the mask pair for velocities

    bool valid() const {
        return sequence.valid() && gate_radius > 0.0 && static_discount > 0.0 &&
               static_discount <= 1.0 && track_offset >= 1;
    }
};

namespace detail {

inline Vec2 component_centroid(const std::vector<Cell>& cells) {
    Vec2 sum;
    for (Cell c : cells) sum = sum + Vec2{static_cast<double>(c.col), static_cast<double>(c.row)};
    const double n = static_cast<double>(cells.size());
    return {sum.x / n, sum.y / n};
}

}  // namespace detail

/// Greedy nearest-centroid association between the components of two
/// dynamic masks, closest pairs first. Matches beyond gate_radius are
/// rejected; unmatched current components get zero velocity. `offset` is
/// the frame gap between the two masks. Components must be expressed in
/// the current ego frame.
inline std::vector<Track> match_tracks(const std::vector<std::vector<Cell>>& prev,
                                       const std::vector<std::vector<Cell>>& curr,
                                       const PredictorConfig& cfg, const GridConfig& grid,
                                       int offset) {
    if (!cfg.valid() || offset < 1) throw InvalidSpec("match_tracks: invalid config");
    std::vector<Vec2> prev_cent(prev.size()), curr_cent(curr.size());
    for (std::size_t i = 0; i < prev.size(); ++i) prev_cent[i] = detail::component_centroid(prev[i]);
    for (std::size_t i = 0; i < curr.size(); ++i) curr_cent[i] = detail::component_centroid(curr[i]);

    struct Pair {
        double dist;
        std::size_t p, c;
    };
    std::vector<Pair> pairs;
    for (std::size_t p = 0; p < prev.size(); ++p) {
        for (std::size_t c = 0; c < curr.size(); ++c) {
            const double d = (curr_cent[c] - prev_cent[p]).norm() * grid.resolution;
            if (d <= cfg.gate_radius) pairs.push_back({d, p, c});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        if (a.p != b.p) return a.p < b.p;
        return a.c < b.c;
    });

    std::vector<bool> prev_used(prev.size(), false), curr_used(curr.size(), false);
    std::vector<Vec2> velocity(curr.size(), Vec2{});
    const double dt = offset * cfg.sequence.frame_dt;
    for (const auto& pr : pairs) {
        if (prev_used[pr.p] || curr_used[pr.c]) continue;
        prev_used[pr.p] = curr_used[pr.c] = true;
        const Vec2 delta = curr_cent[pr.c] - prev_cent[pr.p];
        velocity[pr.c] = {delta.x * grid.resolution / dt, delta.y * grid.resolution / dt};
    }

    std::vector<Track> tracks;
    tracks.reserve(curr.size());
    for (std::size_t c = 0; c < curr.size(); ++c)
        tracks.push_back({static_cast<int>(c), curr[c], curr_cent[c], velocity[c]});
    return tracks;
}

/// Mask overload: components are computed here; the previous mask must
/// already be warped into the current ego frame.
inline std::vector<Track> match_tracks(const DynamicMask& prev, const DynamicMask& curr,
                                       const PredictorConfig& cfg, int offset) {
    require_same_dims(prev, curr, "match_tracks");
    return match_tracks(connected_components(prev), connected_components(curr), cfg,
                        curr.config, offset);
}

/// Static prong: the current static evidence warped through each future
/// ego pose, with the informative masses decayed by gamma per step. Cells
/// leaving the window become vacuous.
inline std::vector<Eogm> static_prong(const Eogm& static_eogm,
                                      const std::vector<Pose2>& future_poses, double gamma) {
    std::vector<Eogm> out;
    out.reserve(future_poses.size());
    for (std::size_t i = 0; i < future_poses.size(); ++i) {
        Eogm step = warp_grid(static_eogm, static_eogm.pose, future_poses[i],
                              BeliefMass::vacuous());
        const double g = std::pow(gamma, static_cast<double>(i + 1));
        for (auto& m : step.cells) m = discount_mass(m, g);
        step.timestamp = static_eogm.timestamp;  // caller assigns real future stamps
        out.push_back(std::move(step));
    }
    return out;
}

/// Dynamic prong: constant-velocity translation of each track's member
/// masses, re-expressed in every future ego frame. Vacated cells stay
/// vacuous; colliding tracks combine evidentially.
inline std::vector<Eogm> dynamic_prong(const Eogm& dynamic_eogm, const std::vector<Track>& tracks,
                                       const std::vector<Pose2>& future_poses,
                                       const PredictorConfig& cfg) {
    const GridConfig& grid = dynamic_eogm.config;
    const double dt = cfg.sequence.frame_dt;
    std::vector<Eogm> out;
    out.reserve(future_poses.size());

    for (std::size_t i = 0; i < future_poses.size(); ++i) {
        Eogm step(grid, BeliefMass::vacuous());
        step.pose = future_poses[i];
        step.timestamp = dynamic_eogm.timestamp;
        const double t_ahead = (static_cast<double>(i) + 1.0) * dt;
        for (const auto& track : tracks) {
            const int dcol = static_cast<int>(
                std::lround(track.velocity.x * t_ahead / grid.resolution));
            const int drow = static_cast<int>(
                std::lround(track.velocity.y * t_ahead / grid.resolution));
            for (Cell c : track.cells) {
                const Cell moved{c.row + drow, c.col + dcol};
                // Current-frame cell, displaced, then re-expressed at the future pose.
                const Vec2 world = dynamic_eogm.pose.to_world(cell_center(moved, grid));
                auto dst = world_to_cell(future_poses[i].to_local(world), grid);
                if (!dst) continue;
                const BeliefMass m = dynamic_eogm.at(c);
                auto fused = try_combine(step.at(*dst), m);
                step.at(*dst) = fused ? *fused : m;
            }
        }
        out.push_back(std::move(step));
    }
    return out;
}

/// Per-cell evidential fusion of the two prongs. On total conflict the
/// dynamic prong wins: its evidence is the fresher of the two.
inline std::vector<Eogm> fuse_prongs(const std::vector<Eogm>& static_seq,
                                     const std::vector<Eogm>& dynamic_seq) {
    if (static_seq.size() != dynamic_seq.size())
        throw LengthMismatch("fuse_prongs: sequence lengths differ");
    std::vector<Eogm> out;
    out.reserve(static_seq.size());
    for (std::size_t s = 0; s < static_seq.size(); ++s) {
        require_same_dims(static_seq[s], dynamic_seq[s], "fuse_prongs");
        Eogm fused(static_seq[s].config);
        fused.pose = static_seq[s].pose;
        fused.timestamp = static_seq[s].timestamp;
        for (std::size_t i = 0; i < fused.size(); ++i) {
            auto r = try_combine(static_seq[s].cells[i], dynamic_seq[s].cells[i]);
            fused.cells[i] = r ? *r : dynamic_seq[s].cells[i];
        }
        out.push_back(std::move(fused));
    }
    return out;
}

/// Extrapolates future ego poses at constant velocity from the last two
/// history poses. Fallback for when ground-truth future poses are absent.
inline std::vector<Pose2> extrapolate_poses(const Pose2& prev, const Pose2& last, int horizon) {
    std::vector<Pose2> out;
    out.reserve(horizon);
    const double dx = last.x - prev.x, dy = last.y - prev.y;
    const double dh = normalize_angle(last.heading - prev.heading);
    for (int i = 1; i <= horizon; ++i)
        out.emplace_back(last.x + dx * i, last.y + dy * i, last.heading + dh * i);
    return out;
}

inline Ogm eogm_to_ogm(const Eogm& e) {
    Ogm ogm(e.config, 0.5);
    ogm.pose = e.pose;
    ogm.timestamp = e.timestamp;
    for (std::size_t i = 0; i < e.size(); ++i) ogm.cells[i] = pignistic(e.cells[i]);
    return ogm;
}

struct PredictionInput {
    std::vector<Eogm> history;       // oldest first, length past_frames
    std::vector<DynamicMask> masks;  // aligned to history
    std::vector<Pose2> future_poses; // length horizon; empty = extrapolate
};

namespace detail {

inline void check_history(const PredictionInput& in, const PredictorConfig& cfg) {
    if (!cfg.valid()) throw InvalidSpec("predict: invalid config");
    if (static_cast<int>(in.history.size()) != cfg.sequence.past_frames)
        throw LengthMismatch("predict: history length != past_frames");
    if (in.masks.size() != in.history.size())
        throw AlignmentError("predict: masks not aligned to history");
    for (std::size_t i = 0; i < in.history.size(); ++i)
        require_same_dims(in.history[i], in.masks[i], "predict");
}

inline std::vector<Pose2> future_poses_for(const PredictionInput& in,
                                           const PredictorConfig& cfg) {
    if (!in.future_poses.empty()) {
        if (static_cast<int>(in.future_poses.size()) != cfg.sequence.horizon)
            throw LengthMismatch("predict: future pose count != horizon");
        return in.future_poses;
    }
    const auto& h = in.history;
    return extrapolate_poses(h[h.size() - 2].pose, h.back().pose, cfg.sequence.horizon);
}

}  // namespace detail

/// Double-prong prediction: split the current frame by its dynamic mask,
/// warp the static part through the future ego poses, extrapolate the
/// masked components at their tracked velocities, fuse per cell, and
/// convert to occupancy probabilities.
inline std::vector<Ogm> predict(const PredictionInput& in, const PredictorConfig& cfg) {
    detail::check_history(in, cfg);
    const auto future = detail::future_poses_for(in, cfg);

    const Eogm& now = in.history.back();
    const DynamicMask& mask_now = in.masks.back();
    auto [stat, dyn] = split_by_mask(now, mask_now);

    // The track baseline is clamped to the second-oldest mask: the oldest
    // frame of a residual window has no earlier frame to diff against, so
    // its mask carries no motion evidence.
    const int offset = std::max(
        1, std::min<int>(cfg.track_offset, static_cast<int>(in.history.size()) - 2));
    const std::size_t prev_idx = in.history.size() - 1 - offset;
    DynamicMask prev_warped =
        warp_grid(in.masks[prev_idx], in.history[prev_idx].pose, now.pose, std::uint8_t{0});
    const auto tracks = match_tracks(prev_warped, mask_now, cfg, offset);

    auto static_seq = static_prong(stat, future, cfg.static_discount);
    auto dynamic_seq = dynamic_prong(dyn, tracks, future, cfg);
    auto fused = fuse_prongs(static_seq, dynamic_seq);

    std::vector<Ogm> out;
    out.reserve(fused.size());
    for (std::size_t i = 0; i < fused.size(); ++i) {
        fused[i].timestamp = now.timestamp + (i + 1) * cfg.sequence.frame_dt;
        out.push_back(eogm_to_ogm(fused[i]));
    }
    return out;
}

/// Single-prong baseline: the whole current frame warped through the
/// future poses with the same discount, no dynamic handling.
inline std::vector<Ogm> persistence_baseline(const PredictionInput& in,
                                             const PredictorConfig& cfg) {
    detail::check_history(in, cfg);
    const auto future = detail::future_poses_for(in, cfg);
    const Eogm& now = in.history.back();
    auto seq = static_prong(now, future, cfg.static_discount);
    std::vector<Ogm> out;
    out.reserve(seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i) {
        seq[i].timestamp = now.timestamp + (i + 1) * cfg.sequence.frame_dt;
        out.push_back(eogm_to_ogm(seq[i]));
    }
    return out;
}

}  // namespace evigrid
