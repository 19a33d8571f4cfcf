#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "evigrid/segmentation.hpp"

using namespace evigrid;

namespace {

std::mt19937_64 rng(4242);

// A blocky moving object: occupied cells with residual hits underneath.
void stamp_object(Sgm& sgm, Rgm& rgm, Cell origin, int h, int w, bool residual) {
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            sgm.at(origin.row + r, origin.col + c) = CellClass::Occupied;
            if (residual) rgm.at(origin.row + r, origin.col + c) = 1;
        }
    }
}

}  // namespace

TEST_CASE("segment_heuristic marks residual-backed components only") {
    GridConfig g{32, 32, 0.5};
    Sgm sgm = make_sgm(g);
    Rgm rgm(g, 0);
    stamp_object(sgm, rgm, {5, 5}, 2, 3, true);    // moving object
    stamp_object(sgm, rgm, {20, 20}, 2, 3, false); // static wall, no residual

    const DynamicMask mask = segment_heuristic(sgm, rgm);
    for (int r = 5; r < 7; ++r)
        for (int c = 5; c < 8; ++c) CHECK(mask.at(r, c) == 1);
    for (int r = 20; r < 22; ++r)
        for (int c = 20; c < 23; ++c) CHECK(mask.at(r, c) == 0);
}

TEST_CASE("segment_heuristic dilation pulls in nearby occupied cells") {
    GridConfig g{16, 16, 0.5};
    Sgm sgm = make_sgm(g);
    Rgm rgm(g, 0);
    // One residual hit; the occupied run extends two cells to the right,
    // still within the dilation radius.
    sgm.at(8, 8) = CellClass::Occupied;
    rgm.at(8, 8) = 1;
    sgm.at(8, 9) = CellClass::Occupied;
    sgm.at(8, 10) = CellClass::Occupied;
    const DynamicMask mask = segment_heuristic(sgm, rgm);
    CHECK(mask.at(8, 8) == 1);
    CHECK(mask.at(8, 9) == 1);
    CHECK(mask.at(8, 10) == 1);

    // Beyond the dilation radius the occupied cell stays static.
    Sgm sgm2 = make_sgm(g);
    Rgm rgm2(g, 0);
    sgm2.at(8, 8) = CellClass::Occupied;
    sgm2.at(8, 9) = CellClass::Occupied;  // keeps component size >= 2
    rgm2.at(8, 8) = 1;
    sgm2.at(8, 12) = CellClass::Occupied;
    const DynamicMask mask2 = segment_heuristic(sgm2, rgm2);
    CHECK(mask2.at(8, 8) == 1);
    CHECK(mask2.at(8, 12) == 0);
}

TEST_CASE("segment_heuristic filters single-cell components") {
    GridConfig g{16, 16, 0.5};
    Sgm sgm = make_sgm(g);
    Rgm rgm(g, 0);
    sgm.at(3, 3) = CellClass::Occupied;  // lone speckle with a residual hit
    rgm.at(3, 3) = 1;
    const DynamicMask mask = segment_heuristic(sgm, rgm);
    for (std::uint8_t v : mask.cells) CHECK(v == 0);
}

TEST_CASE("segment_heuristic validates inputs") {
    GridConfig g{8, 8, 1.0};
    Sgm sgm = make_sgm(g);
    Rgm rgm(GridConfig{16, 16, 1.0}, 0);
    CHECK_THROWS_AS(segment_heuristic(sgm, rgm), DimensionMismatch);

    Rgm ok(g, 0);
    HeuristicParams bad;
    bad.connectivity = 6;
    CHECK_THROWS_AS(segment_heuristic(sgm, ok, bad), InvalidSpec);
}

TEST_CASE("extract_features single-cell patches") {
    GridConfig g{8, 8, 1.0};
    Sgm sgm = make_sgm(g);
    Rgm rgm(g, 0);
    sgm.at(4, 4) = CellClass::Occupied;
    rgm.at(4, 4) = 1;
    CHECK(extract_features(sgm, rgm, {4, 4}, 0) == std::vector<double>{0, 1, 0, 1});
    CHECK(extract_features(sgm, rgm, {2, 2}, 0) == std::vector<double>{0, 0, 1, 0});
    sgm.at(5, 5) = CellClass::Free;
    CHECK(extract_features(sgm, rgm, {5, 5}, 0) == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("extract_features at a grid corner encodes out-of-grid as Occluded") {
    GridConfig g{8, 8, 1.0};
    Sgm sgm(g, CellClass::Free);
    Rgm rgm(g, 0);
    const auto feat = extract_features(sgm, rgm, {0, 0}, 1);
    REQUIRE(feat.size() == 9 * 4);
    // Direct patch walk with explicit bounds checks.
    int idx = 0, out_of_grid = 0;
    for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc, idx += 4) {
            const bool in = dr >= 0 && dc >= 0;
            if (!in) ++out_of_grid;
            CHECK(feat[idx + 0] == (in ? 1.0 : 0.0));  // Free
            CHECK(feat[idx + 1] == 0.0);               // Occupied
            CHECK(feat[idx + 2] == (in ? 0.0 : 1.0));  // Occluded
            CHECK(feat[idx + 3] == 0.0);               // residual
        }
    }
    CHECK(out_of_grid == 5);
}

TEST_CASE("forward is a logistic over the affine score") {
    SegModel m = SegModel::zeros(0);
    CHECK(forward(m, {0, 0, 1, 0}) == doctest::Approx(0.5));
    m.weights.back() = 2.0;
    CHECK(forward(m, {0, 0, 1, 0}) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
    m.weights[2] = -4.0;
    CHECK(forward(m, {0, 0, 1, 0}) == doctest::Approx(1.0 / (1.0 + std::exp(2.0))));
    CHECK_THROWS_AS(forward(m, {1.0, 2.0}), LengthMismatch);
}

TEST_CASE("analytic gradient matches central differences") {
    std::normal_distribution<double> w(0.0, 0.5);
    std::bernoulli_distribution label(0.5), bit(0.4);
    for (int trial = 0; trial < 100; ++trial) {
        SegModel m = SegModel::zeros(1);
        for (auto& v : m.weights) v = w(rng);
        std::vector<double> feat(SegModel::weight_count(1) - 1);
        for (auto& f : feat) f = bit(rng) ? 1.0 : 0.0;
        const double pw = 1.0 + 4.0 * std::uniform_real_distribution<double>(0, 1)(rng);
        CHECK(gradient_check(m, feat, label(rng) ? 1.0 : 0.0, 1e-5, pw) < 1e-4);
    }
}

namespace {

// Perfectly separable toy world: dynamic objects always carry residual
// hits, static ones never do.
std::vector<std::tuple<Sgm, Rgm, DynamicMask>> toy_dataset(std::uint64_t seed, int frames) {
    std::mt19937_64 local(seed);
    GridConfig g{24, 24, 0.5};
    std::uniform_int_distribution<int> at(2, 18);
    std::vector<std::tuple<Sgm, Rgm, DynamicMask>> out;
    for (int f = 0; f < frames; ++f) {
        Sgm sgm = make_sgm(g);
        Rgm rgm(g, 0);
        DynamicMask mask(g, 0);
        const Cell dyn{at(local), at(local)};
        const Cell stat{at(local), at(local)};
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 2; ++c) {
                sgm.at(dyn.row + r, dyn.col + c) = CellClass::Occupied;
                rgm.at(dyn.row + r, dyn.col + c) = 1;
                mask.at(dyn.row + r, dyn.col + c) = 1;
                sgm.at(stat.row + r, stat.col + c) = CellClass::Occupied;
            }
        }
        // Dynamic wins where the two stamps overlap.
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c)
                if (mask.at(stat.row + r, stat.col + c)) rgm.at(stat.row + r, stat.col + c) = 1;
        out.emplace_back(std::move(sgm), std::move(rgm), std::move(mask));
    }
    return out;
}

}  // namespace

TEST_CASE("train separates residual-backed cells") {
    const auto data = toy_dataset(11, 30);
    SegTrainConfig cfg;
    cfg.seed = 5;
    const SegModel model = train(data, cfg, 1);
    CHECK(model.valid());

    // Score held-back frames the trainer never saw.
    const auto fresh = toy_dataset(99, 10);
    std::size_t correct = 0, total = 0;
    for (const auto& [sgm, rgm, mask] : fresh) {
        const DynamicMask pred = segment_learned(model, sgm, rgm);
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (sgm.cells[i] != CellClass::Occupied) continue;
            ++total;
            correct += (pred.cells[i] != 0) == (mask.cells[i] != 0);
        }
    }
    CHECK(total > 0);
    CHECK(static_cast<double>(correct) / total > 0.95);
}

TEST_CASE("train is deterministic for a fixed seed") {
    const auto data = toy_dataset(3, 8);
    SegTrainConfig cfg;
    cfg.seed = 7;
    cfg.epochs = 5;
    const SegModel a = train(data, cfg, 1);
    const SegModel b = train(data, cfg, 1);
    CHECK(a.weights == b.weights);
}

TEST_CASE("train rejects bad inputs") {
    CHECK_THROWS_AS(train({}, SegTrainConfig{}), EmptyDataset);
    const auto data = toy_dataset(1, 2);
    SegTrainConfig bad;
    bad.learning_rate = -1.0;
    CHECK_THROWS_AS(train(data, bad), InvalidSpec);
}

TEST_CASE("segment_learned threshold is monotone and spares non-occupied cells") {
    const auto data = toy_dataset(21, 12);
    SegTrainConfig cfg;
    cfg.seed = 1;
    const SegModel model = train(data, cfg, 1);

    const auto& [sgm, rgm, mask] = data.front();
    const DynamicMask loose = segment_learned(model, sgm, rgm, 0.2);
    const DynamicMask strict = segment_learned(model, sgm, rgm, 0.8);
    for (std::size_t i = 0; i < loose.size(); ++i) {
        if (strict.cells[i]) CHECK(loose.cells[i] == 1);  // strict subset of loose
        if (sgm.cells[i] != CellClass::Occupied) {
            CHECK(loose.cells[i] == 0);
            CHECK(strict.cells[i] == 0);
        }
    }

    SegModel malformed = model;
    malformed.weights.pop_back();
    CHECK_THROWS_AS(segment_learned(malformed, sgm, rgm), InvalidSpec);
}
