#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "evigrid/prediction.hpp"

using namespace evigrid;

namespace {

std::mt19937_64 rng(99);

BeliefMass random_mass() {
    std::exponential_distribution<double> ex(1.0);
    const double a = ex(rng), b = ex(rng), c = ex(rng);
    const double s = a + b + c;
    return {a / s, b / s, c / s};
}

Eogm random_eogm(const GridConfig& g) {
    Eogm e(g);
    for (auto& m : e.cells) m = random_mass();
    return e;
}

}  // namespace

TEST_CASE("match_tracks recovers a constant-velocity displacement") {
    GridConfig g{128, 128, 0.33};
    PredictorConfig cfg;
    // A 2x2 component that moved +3 columns over 5 frames at 0.1 s/frame:
    // 3 * 0.33 m / 0.5 s = 1.98 m/s along +x.
    std::vector<std::vector<Cell>> prev{{{30, 30}, {30, 31}, {31, 30}, {31, 31}}};
    std::vector<std::vector<Cell>> curr{{{30, 33}, {30, 34}, {31, 33}, {31, 34}}};
    const auto tracks = match_tracks(prev, curr, cfg, g, 5);
    REQUIRE(tracks.size() == 1);
    CHECK(tracks[0].velocity.x == doctest::Approx(1.98));
    CHECK(tracks[0].velocity.y == doctest::Approx(0.0));
    CHECK(tracks[0].centroid.x == doctest::Approx(33.5));
    CHECK(tracks[0].centroid.y == doctest::Approx(30.5));
}

TEST_CASE("match_tracks rejects pairs beyond the gate") {
    GridConfig g{128, 128, 0.33};
    PredictorConfig cfg;  // gate 2.0 m
    std::vector<std::vector<Cell>> prev{{{30, 30}}};
    std::vector<std::vector<Cell>> curr{{{30, 40}}};  // 3.3 m away
    const auto tracks = match_tracks(prev, curr, cfg, g, 1);
    REQUIRE(tracks.size() == 1);
    CHECK(tracks[0].velocity.x == 0.0);
    CHECK(tracks[0].velocity.y == 0.0);
}

TEST_CASE("match_tracks greedy assignment pairs closest first") {
    GridConfig g{128, 128, 1.0};
    PredictorConfig cfg;
    cfg.gate_radius = 10.0;
    // Two previous components, one current component between them but
    // closer to the second.
    std::vector<std::vector<Cell>> prev{{{10, 10}}, {{10, 16}}};
    std::vector<std::vector<Cell>> curr{{{10, 14}}};
    const auto tracks = match_tracks(prev, curr, cfg, g, 1);
    REQUIRE(tracks.size() == 1);
    // Velocity from prev[1]: -2 columns over 0.1 s at 1 m/cell.
    CHECK(tracks[0].velocity.x == doctest::Approx(-20.0));
}

TEST_CASE("match_tracks mask overload finds components itself") {
    GridConfig g{32, 32, 0.5};
    DynamicMask prev(g, 0), curr(g, 0);
    prev.at(5, 5) = prev.at(5, 6) = 1;
    curr.at(5, 7) = curr.at(5, 8) = 1;
    PredictorConfig cfg;
    const auto tracks = match_tracks(prev, curr, cfg, 2);
    REQUIRE(tracks.size() == 1);
    // +2 columns * 0.5 m over 0.2 s.
    CHECK(tracks[0].velocity.x == doctest::Approx(5.0));
    CHECK(tracks[0].cells.size() == 2);
}

TEST_CASE("static_prong discounts by gamma per step under a fixed pose") {
    GridConfig g{16, 16, 0.5};
    Eogm e = random_eogm(g);
    const std::vector<Pose2> future(3, Pose2{});
    const auto seq = static_prong(e, future, 0.9);
    REQUIRE(seq.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const double gamma = std::pow(0.9, static_cast<double>(i + 1));
        for (std::size_t j = 0; j < e.size(); ++j) {
            CHECK(seq[i].cells[j].o == doctest::Approx(e.cells[j].o * gamma));
            CHECK(seq[i].cells[j].f == doctest::Approx(e.cells[j].f * gamma));
            CHECK(seq[i].cells[j].valid());
        }
    }
}

TEST_CASE("static_prong vacates cells that leave the window") {
    GridConfig g{16, 16, 0.5};
    Eogm e = random_eogm(g);
    // The future ego is far outside the old window: nothing carries over.
    const std::vector<Pose2> future{Pose2{100.0, 100.0, 0.0}};
    const auto seq = static_prong(e, future, 1.0);
    for (const auto& m : seq[0].cells) CHECK(m == BeliefMass::vacuous());
}

TEST_CASE("dynamic_prong translates tracked cells at constant velocity") {
    GridConfig g{32, 32, 1.0};
    Eogm e(g, BeliefMass::vacuous());
    const BeliefMass occ{0.8, 0.0, 0.2};
    e.at(10, 10) = occ;
    e.at(10, 11) = occ;

    Track track;
    track.cells = {{10, 10}, {10, 11}};
    track.velocity = {2.0, 1.0};  // m/s: +x columns, +y rows
    PredictorConfig cfg;
    const std::vector<Pose2> future(3, Pose2{});
    const auto seq = dynamic_prong(e, {track}, future, cfg);
    REQUIRE(seq.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const double t = 0.1 * (i + 1);
        const int dc = static_cast<int>(std::lround(2.0 * t));
        const int dr = static_cast<int>(std::lround(1.0 * t));
        std::size_t nonvacuous = 0;
        for (const auto& m : seq[i].cells) nonvacuous += !(m == BeliefMass::vacuous());
        CHECK(seq[i].at(10 + dr, 10 + dc).o == doctest::Approx(occ.o));
        CHECK(seq[i].at(10 + dr, 11 + dc).o == doctest::Approx(occ.o));
        CHECK(nonvacuous == 2);
    }
}

TEST_CASE("fuse_prongs: vacuous side is the identity, conflict favors dynamic") {
    GridConfig g{4, 4, 1.0};
    Eogm stat(g, BeliefMass::vacuous()), dyn(g, BeliefMass::vacuous());
    stat.at(0, 0) = {0.0, 1.0, 0.0};  // fully free
    dyn.at(0, 0) = {1.0, 0.0, 0.0};   // fully occupied: total conflict
    stat.at(1, 1) = {0.3, 0.4, 0.3};
    dyn.at(2, 2) = {0.6, 0.1, 0.3};
    const auto fused = fuse_prongs({stat}, {dyn});
    REQUIRE(fused.size() == 1);
    CHECK(fused[0].at(0, 0).o == 1.0);  // dynamic evidence wins the conflict
    CHECK(fused[0].at(1, 1).o == doctest::Approx(0.3));
    CHECK(fused[0].at(2, 2).o == doctest::Approx(0.6));
    CHECK(fused[0].at(3, 3) == BeliefMass::vacuous());

    CHECK_THROWS_AS(fuse_prongs({stat}, {}), LengthMismatch);
}

TEST_CASE("extrapolate_poses continues the last motion increment") {
    const Pose2 prev(0.0, 0.0, 0.0), last(1.0, 0.5, 0.1);
    const auto poses = extrapolate_poses(prev, last, 3);
    REQUIRE(poses.size() == 3);
    for (int i = 1; i <= 3; ++i) {
        CHECK(poses[i - 1].x == doctest::Approx(1.0 + 1.0 * i));
        CHECK(poses[i - 1].y == doctest::Approx(0.5 + 0.5 * i));
        CHECK(poses[i - 1].heading == doctest::Approx(0.1 + 0.1 * i));
    }
}

TEST_CASE("eogm_to_ogm applies the pignistic transform") {
    GridConfig g{4, 4, 1.0};
    Eogm e = random_eogm(g);
    const Ogm o = eogm_to_ogm(e);
    for (std::size_t i = 0; i < e.size(); ++i)
        CHECK(o.cells[i] == doctest::Approx(e.cells[i].o + 0.5 * e.cells[i].u));
}

namespace {

PredictionInput identity_input(const GridConfig& g, int past) {
    PredictionInput in;
    for (int f = 0; f < past; ++f) {
        Eogm e = random_eogm(g);
        e.timestamp = 0.1 * f;
        in.history.push_back(std::move(e));
        in.masks.emplace_back(g, std::uint8_t{0});
    }
    return in;
}

}  // namespace

TEST_CASE("predict equals the persistence baseline when no cell is dynamic") {
    GridConfig g{32, 32, 0.5};
    PredictorConfig cfg;
    cfg.sequence.horizon = 6;
    PredictionInput in = identity_input(g, cfg.sequence.past_frames);
    const auto dp = predict(in, cfg);
    const auto pb = persistence_baseline(in, cfg);
    REQUIRE(dp.size() == pb.size());
    for (std::size_t i = 0; i < dp.size(); ++i) CHECK(dp[i].cells == pb[i].cells);
}

TEST_CASE("predict validates its input") {
    GridConfig g{8, 8, 1.0};
    PredictorConfig cfg;
    PredictionInput in = identity_input(g, cfg.sequence.past_frames - 1);
    CHECK_THROWS_AS(predict(in, cfg), LengthMismatch);

    PredictionInput misaligned = identity_input(g, cfg.sequence.past_frames);
    misaligned.masks.pop_back();
    CHECK_THROWS_AS(predict(misaligned, cfg), AlignmentError);

    PredictionInput bad_future = identity_input(g, cfg.sequence.past_frames);
    bad_future.future_poses.assign(cfg.sequence.horizon + 1, Pose2{});
    CHECK_THROWS_AS(predict(bad_future, cfg), LengthMismatch);
}

TEST_CASE("predict moves a masked object while the static scene persists") {
    GridConfig g{64, 64, 0.5};
    PredictorConfig cfg;
    cfg.sequence.horizon = 4;
    cfg.gate_radius = 5.0;  // the object covers 3 m over the clamped track gap
    const BeliefMass occ{0.9, 0.0, 0.1};

    PredictionInput in;
    for (int f = 0; f < cfg.sequence.past_frames; ++f) {
        Eogm e(g, BeliefMass::vacuous());
        e.timestamp = 0.1 * f;
        // Static wall at a fixed location.
        e.at(10, 10) = occ;
        // Object moving +2 columns per frame (10 m/s at 0.5 m cells).
        DynamicMask mask(g, 0);
        const int col = 20 + 2 * f;
        e.at(40, col) = occ;
        e.at(40, col + 1) = occ;
        e.at(41, col) = occ;
        e.at(41, col + 1) = occ;
        for (int r = 40; r <= 41; ++r)
            for (int c = col; c <= col + 1; ++c) mask.at(r, c) = 1;
        in.history.push_back(std::move(e));
        in.masks.push_back(std::move(mask));
    }

    const auto preds = predict(in, cfg);
    REQUIRE(preds.size() == 4);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        // Static wall persists (discounted toward 0.5 but still occupied-leaning).
        CHECK(preds[i].at(10, 10) > 0.6);
        // The object keeps moving at +2 columns per step.
        const int col = 28 + 2 * static_cast<int>(i + 1);
        CHECK(preds[i].at(40, col) > 0.6);
        // Its old position is not predicted occupied.
        CHECK(preds[i].at(40, 28) < 0.55);
    }
}
