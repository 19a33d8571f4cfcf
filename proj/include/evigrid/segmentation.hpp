#pragma once

#include <random>
#include <tuple>

#include "evigrid/representation.hpp"

namespace evigrid {

// ---------------------------------------------------------------------------
// Rule-based segmenter

struct HeuristicParams {
    int dilation_radius{2};
    int min_component_size{2};
    int connectivity{8};

    bool valid() const {
        return dilation_radius >= 0 && min_component_size >= 1 &&
               (connectivity == 4 || connectivity == 8);
    }
};

/// Marks moving-object cells from residual evidence: Occupied cells
/// within Chebyshev distance dilation_radius of a residual hit form
/// candidate components; components large enough and containing at least
/// one residual hit become dynamic.
inline DynamicMask segment_heuristic(const Sgm& sgm, const Rgm& rgm,
                                     const HeuristicParams& params = {}) {
    require_same_dims(sgm, rgm, "segment_heuristic");
    if (!params.valid()) throw InvalidSpec("invalid heuristic params");
    const int h = sgm.config.height, w = sgm.config.width;

    DynamicMask candidates(sgm.config, 0);
    const int rad = params.dilation_radius;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!rgm.at(r, c)) continue;
            for (int dr = -rad; dr <= rad; ++dr) {
                for (int dc = -rad; dc <= rad; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                    if (sgm.at(rr, cc) == CellClass::Occupied) candidates.at(rr, cc) = 1;
                }
            }
        }
    }

    DynamicMask mask(sgm.config, 0);
    mask.pose = sgm.pose;
    mask.timestamp = sgm.timestamp;
    for (const auto& comp : connected_components(candidates, params.connectivity)) {
        if (static_cast<int>(comp.size()) < params.min_component_size) continue;
        bool has_hit = false;
        for (Cell c : comp) has_hit = has_hit || rgm.at(c) != 0;
        if (!has_hit) continue;
        for (Cell c : comp) mask.at(c) = 1;
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Per-cell logistic segmenter

/// Logistic classifier over a local (2k+1)^2 patch with 4 channels per
/// position (one-hot cell class + residual bit). Weights end with the bias.
struct SegModel {
    int k{5};
    std::vector<double> weights;  // (2k+1)^2 * 4 + 1, bias last
    int trained_epochs{0};

    static std::size_t weight_count(int k) {
        const std::size_t side = 2 * static_cast<std::size_t>(k) + 1;
        return side * side * 4 + 1;
    }

    static SegModel zeros(int k) {
        SegModel m;
        m.k = k;
        m.weights.assign(weight_count(k), 0.0);
        return m;
    }

    bool valid() const { return k >= 0 && weights.size() == weight_count(k); }
};

struct SegTrainConfig {
    double learning_rate{0.01};
    int epochs{60};
    double positive_class_weight{0.0};  // <= 0: derived from the class ratio
    double threshold{0.5};
    std::uint64_t seed{0};

    bool valid() const {
        return learning_rate > 0.0 && epochs >= 1 && threshold > 0.0 && threshold < 1.0;
    }
};

/// Patch features around a cell: row-major over the window, four values
/// per position (Free, Occupied, Occluded one-hot, then residual bit).
/// Out-of-grid positions read as Occluded with residual 0.
inline std::vector<double> extract_features(const Sgm& sgm, const Rgm& rgm, Cell cell, int k) {
    require_same_dims(sgm, rgm, "extract_features");
    std::vector<double> feat;
    feat.reserve(SegModel::weight_count(k) - 1);
    for (int dr = -k; dr <= k; ++dr) {
        for (int dc = -k; dc <= k; ++dc) {
            Cell p{cell.row + dr, cell.col + dc};
            CellClass cls = CellClass::Occluded;
            double hit = 0.0;
            if (sgm.in_bounds(p)) {
                cls = sgm.at(p);
                hit = rgm.at(p) ? 1.0 : 0.0;
            }
            feat.push_back(cls == CellClass::Free ? 1.0 : 0.0);
            feat.push_back(cls == CellClass::Occupied ? 1.0 : 0.0);
            feat.push_back(cls == CellClass::Occluded ? 1.0 : 0.0);
            feat.push_back(hit);
        }
    }
    return feat;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Dynamic-cell probability for one feature vector.
inline double forward(const SegModel& model, const std::vector<double>& features) {
    if (features.size() + 1 != model.weights.size())
        throw LengthMismatch("forward: feature length does not match model");
    double z = model.weights.back();
    for (std::size_t i = 0; i < features.size(); ++i) z += model.weights[i] * features[i];
    return sigmoid(z);
}

namespace detail {

/// Class-weighted binary cross-entropy and its gradient factor dL/dz.
inline std::pair<double, double> bce_loss_and_dz(double p, double label, double pos_weight) {
    const double eps = 1e-12;
    const double loss =
        -(pos_weight * label * std::log(std::max(p, eps)) +
          (1.0 - label) * std::log(std::max(1.0 - p, eps)));
    const double dz = -pos_weight * label * (1.0 - p) + (1.0 - label) * p;
    return {loss, dz};
}

struct SegSample {
    std::vector<double> features;
    double label;
};

}  // namespace detail

/// Compares the analytic gradient of the weighted cross-entropy against
/// central finite differences. Returns the max relative error over all
/// weight coordinates.
inline double gradient_check(const SegModel& model, const std::vector<double>& features,
                             double label, double epsilon = 1e-5, double pos_weight = 1.0) {
    if (epsilon <= 0.0) throw InvalidSpec("epsilon must be positive");
    const double p = forward(model, features);
    const double dz = detail::bce_loss_and_dz(p, label, pos_weight).second;

    auto loss_at = [&](SegModel m) {
        return detail::bce_loss_and_dz(forward(m, features), label, pos_weight).first;
    };

    double max_err = 0.0;
    for (std::size_t j = 0; j < model.weights.size(); ++j) {
        const double xj = j + 1 == model.weights.size() ? 1.0 : features[j];
        const double analytic = dz * xj;
        SegModel plus = model, minus = model;
        plus.weights[j] += epsilon;
        minus.weights[j] -= epsilon;
        const double numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * epsilon);
        const double rel = std::abs(analytic - numeric) /
                           std::max(1e-12, std::abs(analytic) + std::abs(numeric));
        max_err = std::max(max_err, rel);
    }
    return max_err;
}

/// Trains the logistic segmenter by plain SGD over per-cell samples: all
/// dynamic cells of each frame plus an equal number of static cells drawn
/// from the Occupied set. A 10% held-out split selects the returned
/// model. Deterministic for a fixed seed.
inline SegModel train(const std::vector<std::tuple<Sgm, Rgm, DynamicMask>>& dataset,
                      const SegTrainConfig& cfg, int k = 5) {
    if (dataset.empty()) throw EmptyDataset("train: empty dataset");
    if (!cfg.valid()) throw InvalidSpec("train: invalid training config");

    std::mt19937_64 rng(cfg.seed ^ 0x5e9d1ab3c4f7e215ULL);
    std::vector<detail::SegSample> samples;
    std::size_t n_dynamic = 0, n_static = 0;

    for (const auto& [sgm, rgm, mask] : dataset) {
        require_same_dims(sgm, rgm, "train");
        require_same_dims(sgm, mask, "train");
        std::vector<Cell> dyn_cells, static_pool;
        for (int r = 0; r < sgm.config.height; ++r) {
            for (int c = 0; c < sgm.config.width; ++c) {
                if (mask.at(r, c)) {
                    dyn_cells.push_back({r, c});
                    ++n_dynamic;
                } else {
                    ++n_static;
                    if (sgm.at(r, c) == CellClass::Occupied) static_pool.push_back({r, c});
                }
            }
        }
        for (Cell c : dyn_cells)
            samples.push_back({extract_features(sgm, rgm, c, k), 1.0});
        if (!static_pool.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, static_pool.size() - 1);
            for (std::size_t i = 0; i < dyn_cells.size() || (dyn_cells.empty() && i < 8); ++i)
                samples.push_back({extract_features(sgm, rgm, static_pool[pick(rng)], k), 0.0});
        }
    }
    if (samples.empty()) throw EmptyDataset("train: no trainable cells");

    const double pos_weight =
        cfg.positive_class_weight > 0.0
            ? cfg.positive_class_weight
            : static_cast<double>(n_static) / std::max<std::size_t>(1, n_dynamic);

    std::shuffle(samples.begin(), samples.end(), rng);
    const std::size_t held = std::max<std::size_t>(1, samples.size() / 10);
    const std::size_t n_train = samples.size() > held ? samples.size() - held : samples.size();

    SegModel model = SegModel::zeros(k);
    SegModel best = model;
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.learning_rate / (1.0 + epoch / 20.0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t idx : order) {
            const auto& s = samples[idx];
            const double p = forward(model, s.features);
            const double dz = detail::bce_loss_and_dz(p, s.label, pos_weight).second;
            for (std::size_t j = 0; j < s.features.size(); ++j)
                model.weights[j] -= lr * dz * s.features[j];
            model.weights.back() -= lr * dz;
        }
        model.trained_epochs = epoch + 1;

        double held_loss = 0.0;
        std::size_t held_n = 0;
        for (std::size_t i = n_train; i < samples.size(); ++i, ++held_n)
            held_loss +=
                detail::bce_loss_and_dz(forward(model, samples[i].features), samples[i].label,
                                        pos_weight)
                    .first;
        if (held_n == 0) {  // degenerate tiny dataset: score on the training data
            for (std::size_t i = 0; i < n_train; ++i, ++held_n)
                held_loss += detail::bce_loss_and_dz(forward(model, samples[i].features),
                                                     samples[i].label, pos_weight)
                                 .first;
        }
        held_loss /= static_cast<double>(held_n);
        if (held_loss < best_loss) {
            best_loss = held_loss;
            best = model;
        }
    }
    return best;
}

/// Thresholded per-cell inference. Cells that are not Occupied in the SGM
/// are forced static.
inline DynamicMask segment_learned(const SegModel& model, const Sgm& sgm, const Rgm& rgm,
                                   double threshold = 0.5) {
    require_same_dims(sgm, rgm, "segment_learned");
    if (!model.valid()) throw InvalidSpec("segment_learned: malformed model");
    DynamicMask mask(sgm.config, 0);
    mask.pose = sgm.pose;
    mask.timestamp = sgm.timestamp;
    for (int r = 0; r < sgm.config.height; ++r) {
        for (int c = 0; c < sgm.config.width; ++c) {
            if (sgm.at(r, c) != CellClass::Occupied) continue;
            const double p = forward(model, extract_features(sgm, rgm, {r, c}, model.k));
            if (p >= threshold) mask.at(r, c) = 1;
        }
    }
    return mask;
}

}  // namespace evigrid
