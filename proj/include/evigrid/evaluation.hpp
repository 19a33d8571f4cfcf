#pragma once

#include <array>
#include <iomanip>
#include <limits>
#include <sstream>

#include "evigrid/prediction.hpp"

namespace evigrid {

struct ClassesTag;
using ClassGrid = GridMap<CellClass, ClassesTag>;

/// Mean squared occupancy-probability error over all cells.
inline double mse(const Ogm& pred, const Ogm& target) {
    require_same_dims(pred, target, "mse");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.cells[i] - target.cells[i];
        sum += d * d;
    }
    return sum / static_cast<double>(pred.size());
}

/// MSE restricted to ground-truth dynamic cells; 0 when the mask is empty.
inline double dynamic_mse(const Ogm& pred, const Ogm& target, const DynamicMask& mask) {
    require_same_dims(pred, target, "dynamic_mse");
    require_same_dims(pred, mask, "dynamic_mse");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask.cells[i]) continue;
        const double d = pred.cells[i] - target.cells[i];
        sum += d * d;
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

namespace detail {

/// Multi-source BFS Manhattan distance to the nearest cell of class c;
/// -1 where the class is absent from the whole grid.
inline std::vector<int> distance_field(const ClassGrid& g, CellClass c) {
    const int h = g.config.height, w = g.config.width;
    std::vector<int> dist(g.size(), -1);
    std::deque<Cell> queue;
    for (int r = 0; r < h; ++r)
        for (int col = 0; col < w; ++col)
            if (g.at(r, col) == c) {
                dist[static_cast<std::size_t>(r) * w + col] = 0;
                queue.push_back({r, col});
            }
    while (!queue.empty()) {
        Cell cur = queue.front();
        queue.pop_front();
        const int d = dist[static_cast<std::size_t>(cur.row) * w + cur.col];
        constexpr std::array<std::pair<int, int>, 4> steps{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
        for (auto [dr, dc] : steps) {
            const int rr = cur.row + dr, cc = cur.col + dc;
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            auto& slot = dist[static_cast<std::size_t>(rr) * w + cc];
            if (slot < 0) {
                slot = d + 1;
                queue.push_back({rr, cc});
            }
        }
    }
    return dist;
}

/// Mean over cells of `a` with class c of the distance to the nearest
/// same-class cell of `b`. W+H when c is absent from b; -1 when c is
/// absent from a (no term).
inline double mean_class_distance(const ClassGrid& a, const std::vector<int>& dist_b,
                                  CellClass c, bool class_in_b) {
    const int w = a.config.width, h = a.config.height;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.cells[i] != c) continue;
        ++n;
        sum += class_in_b ? static_cast<double>(dist_b[i]) : static_cast<double>(w + h);
    }
    if (n == 0) return -1.0;
    return sum / static_cast<double>(n);
}

}  // namespace detail

/// Symmetrized image-similarity metric: for each of the three classes,
/// the mean minimum Manhattan distance from same-class cells of one grid
/// to the other, summed both ways. A class present on only one side
/// contributes the W+H penalty; classes absent from both contribute 0.
/// Lower is better; identical grids score 0.
inline double image_similarity(const ClassGrid& pred, const ClassGrid& target) {
    require_same_dims(pred, target, "image_similarity");
    double total = 0.0;
    for (CellClass c : {CellClass::Free, CellClass::Occupied, CellClass::Occluded}) {
        const auto dist_pred = detail::distance_field(pred, c);
        const auto dist_target = detail::distance_field(target, c);
        const bool in_pred = std::any_of(pred.cells.begin(), pred.cells.end(),
                                         [c](CellClass x) { return x == c; });
        const bool in_target = std::any_of(target.cells.begin(), target.cells.end(),
                                           [c](CellClass x) { return x == c; });
        const double d_pt = detail::mean_class_distance(pred, dist_target, c, in_target);
        const double d_tp = detail::mean_class_distance(target, dist_pred, c, in_pred);
        if (d_pt >= 0.0) total += d_pt;
        if (d_tp >= 0.0) total += d_tp;
    }
    return total;
}

struct IouResult {
    double statics{1.0};
    double dynamic{1.0};
    double mean{1.0};
};

/// Intersection-over-union of the dynamic (mask=1) and static (mask=0)
/// cell sets. Empty-on-both-sides sets score 1.
inline IouResult mask_iou(const DynamicMask& pred, const DynamicMask& truth) {
    require_same_dims(pred, truth, "mask_iou");
    std::size_t dyn_inter = 0, dyn_union = 0, stat_inter = 0, stat_union = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.cells[i] != 0, t = truth.cells[i] != 0;
        dyn_inter += p && t;
        dyn_union += p || t;
        stat_inter += !p && !t;
        stat_union += !p || !t;
    }
    IouResult r;
    r.dynamic = dyn_union ? static_cast<double>(dyn_inter) / dyn_union : 1.0;
    r.statics = stat_union ? static_cast<double>(stat_inter) / stat_union : 1.0;
    r.mean = 0.5 * (r.statics + r.dynamic);
    return r;
}

// ---------------------------------------------------------------------------
// Sequence-level evaluation

/// Class grid for the IS metric from ground-truth evidence.
inline ClassGrid classes_from_eogm(const Eogm& e) {
    ClassGrid g(e.config, CellClass::Occluded);
    g.pose = e.pose;
    g.timestamp = e.timestamp;
    for (std::size_t i = 0; i < e.size(); ++i) g.cells[i] = classify_mass(e.cells[i]);
    return g;
}

/// Class grid for predictions: Occupied for p >= 0.6, Free for p <= 0.4,
/// Occluded in between.
inline ClassGrid classes_from_ogm(const Ogm& o, double occ_threshold = 0.6,
                                  double free_threshold = 0.4) {
    ClassGrid g(o.config, CellClass::Occluded);
    g.pose = o.pose;
    g.timestamp = o.timestamp;
    for (std::size_t i = 0; i < o.size(); ++i) {
        if (o.cells[i] >= occ_threshold)
            g.cells[i] = CellClass::Occupied;
        else if (o.cells[i] <= free_threshold)
            g.cells[i] = CellClass::Free;
    }
    return g;
}

/// One prediction sample: a horizon of predicted OGMs with its aligned
/// ground truth and per-step ground-truth dynamic masks.
struct EvalSample {
    std::vector<Ogm> predicted;
    std::vector<Eogm> target;
    std::vector<DynamicMask> target_masks;
};

struct MetricReport {
    std::vector<double> mse_per_step;
    std::vector<double> dynamic_mse_per_step;
    std::vector<double> is_per_step;
    double mse_avg{0.0};
    double dynamic_mse_avg{0.0};
    double is_avg{0.0};
    double iou_static{1.0};
    double iou_dynamic{1.0};
    double iou_mean{1.0};
    std::size_t samples{0};
};

/// Per-step metrics averaged over samples, then over steps for the
/// headline numbers. Mask IoU is micro-averaged over the supplied
/// (predicted, truth) mask pairs; with no pairs it reports the empty
/// convention of 1.
inline MetricReport evaluate(
    const std::vector<EvalSample>& samples,
    const std::vector<std::pair<DynamicMask, DynamicMask>>& mask_pairs = {}) {
    if (samples.empty()) throw EmptyDataset("evaluate: no samples");
    const std::size_t horizon = samples[0].predicted.size();
    for (const auto& s : samples) {
        if (s.predicted.size() != horizon || s.target.size() != horizon ||
            s.target_masks.size() != horizon)
            throw AlignmentError("evaluate: misaligned sample lengths");
    }

    MetricReport rep;
    rep.samples = samples.size();
    rep.mse_per_step.assign(horizon, 0.0);
    rep.dynamic_mse_per_step.assign(horizon, 0.0);
    rep.is_per_step.assign(horizon, 0.0);

    for (const auto& s : samples) {
        for (std::size_t step = 0; step < horizon; ++step) {
            const Ogm target_ogm = eogm_to_ogm(s.target[step]);
            rep.mse_per_step[step] += mse(s.predicted[step], target_ogm);
            rep.dynamic_mse_per_step[step] +=
                dynamic_mse(s.predicted[step], target_ogm, s.target_masks[step]);
            rep.is_per_step[step] += image_similarity(classes_from_ogm(s.predicted[step]),
                                                      classes_from_eogm(s.target[step]));
        }
    }
    const double n = static_cast<double>(samples.size());
    for (std::size_t step = 0; step < horizon; ++step) {
        rep.mse_per_step[step] /= n;
        rep.dynamic_mse_per_step[step] /= n;
        rep.is_per_step[step] /= n;
    }
    auto mean = [horizon](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(horizon);
    };
    rep.mse_avg = mean(rep.mse_per_step);
    rep.dynamic_mse_avg = mean(rep.dynamic_mse_per_step);
    rep.is_avg = mean(rep.is_per_step);

    if (!mask_pairs.empty()) {
        std::size_t dyn_i = 0, dyn_u = 0, stat_i = 0, stat_u = 0;
        for (const auto& [pm, tm] : mask_pairs) {
            require_same_dims(pm, tm, "evaluate");
            for (std::size_t i = 0; i < pm.size(); ++i) {
                const bool p = pm.cells[i] != 0, t = tm.cells[i] != 0;
                dyn_i += p && t;
                dyn_u += p || t;
                stat_i += !p && !t;
                stat_u += !p || !t;
            }
        }
        rep.iou_dynamic = dyn_u ? static_cast<double>(dyn_i) / dyn_u : 1.0;
        rep.iou_static = stat_u ? static_cast<double>(stat_i) / stat_u : 1.0;
        rep.iou_mean = 0.5 * (rep.iou_static + rep.iou_dynamic);
    }
    return rep;
}

/// Fixed-width text table of a report, one row per horizon step.
inline std::string report_table(const MetricReport& rep) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    os << "step        mse    dyn_mse         is\n";
    for (std::size_t i = 0; i < rep.mse_per_step.size(); ++i) {
        os << std::setw(4) << (i + 1) << " " << std::setw(10) << rep.mse_per_step[i] << " "
           << std::setw(10) << rep.dynamic_mse_per_step[i] << " " << std::setw(10)
           << rep.is_per_step[i] << "\n";
    }
    os << " avg " << std::setw(10) << rep.mse_avg << " " << std::setw(10)
       << rep.dynamic_mse_avg << " " << std::setw(10) << rep.is_avg << "\n";
    os << "iou_static=" << rep.iou_static << " iou_dynamic=" << rep.iou_dynamic
       << " iou_mean=" << rep.iou_mean << " samples=" << rep.samples << "\n";
    return os.str();
}

}  // namespace evigrid
