#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "evigrid/core.hpp"

using namespace evigrid;

namespace {

std::mt19937_64 rng(12345);

BeliefMass random_mass() {
    std::exponential_distribution<double> ex(1.0);
    double a = ex(rng), b = ex(rng), c = ex(rng);
    const double s = a + b + c;
    return {a / s, b / s, c / s};
}

// Independent 9-term enumeration of Dempster's rule: every hypothesis
// pair contributes its product to the intersection bucket.
BeliefMass combine_oracle(BeliefMass x, BeliefMass y) {
    const double mx[3] = {x.o, x.f, x.u};
    const double my[3] = {y.o, y.f, y.u};
    // 0 = {O}, 1 = {F}, 2 = {O,F}
    auto intersect = [](int a, int b) -> int {  // -1 = empty
        if (a == 2) return b;
        if (b == 2) return a;
        return a == b ? a : -1;
    };
    double bucket[3] = {0, 0, 0};
    double conflict = 0.0;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            const int s = intersect(a, b);
            if (s < 0)
                conflict += mx[a] * my[b];
            else
                bucket[s] += mx[a] * my[b];
        }
    const double norm = 1.0 - conflict;
    return {bucket[0] / norm, bucket[1] / norm, bucket[2] / norm};
}

}  // namespace

TEST_CASE("world_to_cell maps the ego origin to the grid center") {
    GridConfig cfg;
    auto c = world_to_cell({0.0, 0.0}, cfg);
    REQUIRE(c.has_value());
    CHECK(*c == Cell{64, 64});
}

TEST_CASE("world_to_cell rejects points beyond the half extent") {
    GridConfig cfg;  // 128 * 0.33 / 2 = 21.12 m
    CHECK_FALSE(world_to_cell({21.5, 0.0}, cfg).has_value());
    CHECK_FALSE(world_to_cell({0.0, -21.5}, cfg).has_value());
}

TEST_CASE("world_to_cell agrees with the floor-division oracle") {
    GridConfig cfg;
    auto c = world_to_cell({1.0, -1.0}, cfg);
    REQUIRE(c.has_value());
    // floor(1.0/0.33 + 64) = 67, floor(-1.0/0.33 + 64) = 60
    CHECK(*c == Cell{60, 67});

    std::uniform_real_distribution<double> coord(-25.0, 25.0);
    for (int i = 0; i < 2000; ++i) {
        const Vec2 p{coord(rng), coord(rng)};
        const auto got = world_to_cell(p, cfg);
        const int col = static_cast<int>(std::floor(p.x / cfg.resolution + cfg.width * 0.5));
        const int row = static_cast<int>(std::floor(p.y / cfg.resolution + cfg.height * 0.5));
        const bool inside = col >= 0 && col < cfg.width && row >= 0 && row < cfg.height;
        CHECK(got.has_value() == inside);
        if (got) CHECK(*got == Cell{row, col});
    }
}

TEST_CASE("cell_center round-trips through world_to_cell") {
    GridConfig cfg;
    std::uniform_int_distribution<int> pick(0, 127);
    for (int i = 0; i < 500; ++i) {
        const Cell c{pick(rng), pick(rng)};
        const auto back = world_to_cell(cell_center(c, cfg), cfg);
        REQUIRE(back.has_value());
        CHECK(*back == c);
    }
}

TEST_CASE("vacuous mass is the Dempster identity") {
    const BeliefMass m{0.6, 0.0, 0.4};
    const BeliefMass r = combine_masses(m, BeliefMass::vacuous());
    CHECK(r.o == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(r.f == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.u == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("combine_masses matches the 9-term enumeration oracle") {
    const BeliefMass r = combine_masses({0.6, 0.0, 0.4}, {0.5, 0.0, 0.5});
    CHECK(r.o == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(r.f == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.u == doctest::Approx(0.2).epsilon(1e-12));

    for (int i = 0; i < 5000; ++i) {
        const BeliefMass a = random_mass(), b = random_mass();
        const auto got = try_combine(a, b);
        REQUIRE(got.has_value());
        const BeliefMass want = combine_oracle(a, b);
        CHECK(got->o == doctest::Approx(want.o).epsilon(1e-12));
        CHECK(got->f == doctest::Approx(want.f).epsilon(1e-12));
        CHECK(got->u == doctest::Approx(want.u).epsilon(1e-12));
        CHECK(got->valid());
    }
}

TEST_CASE("categorical contradiction is total conflict") {
    CHECK_THROWS_AS(combine_masses({1, 0, 0}, {0, 1, 0}), TotalConflict);
    CHECK_FALSE(try_combine({1, 0, 0}, {0, 1, 0}).has_value());
}

TEST_CASE("combine_masses is commutative and associative away from conflict") {
    int tested = 0;
    while (tested < 2000) {
        const BeliefMass a = random_mass(), b = random_mass(), c = random_mass();
        const double k_ab = a.o * b.f + a.f * b.o;
        if (k_ab > 0.99) continue;
        const auto ab = try_combine(a, b);
        const auto ba = try_combine(b, a);
        REQUIRE(ab);
        REQUIRE(ba);
        CHECK(ab->o == doctest::Approx(ba->o).epsilon(1e-12));
        CHECK(ab->f == doctest::Approx(ba->f).epsilon(1e-12));
        const auto ab_c = try_combine(*ab, c);
        const auto bc = try_combine(b, c);
        if (!ab_c || !bc) continue;
        const auto a_bc = try_combine(a, *bc);
        if (!a_bc) continue;
        CHECK(ab_c->o == doctest::Approx(a_bc->o).epsilon(1e-12));
        CHECK(ab_c->f == doctest::Approx(a_bc->f).epsilon(1e-12));
        CHECK(ab_c->u == doctest::Approx(a_bc->u).epsilon(1e-12));
        ++tested;
    }
}

TEST_CASE("discount_mass") {
    const BeliefMass m{0.8, 0.1, 0.1};
    const BeliefMass id = discount_mass(m, 1.0);
    CHECK(id.o == doctest::Approx(0.8));
    CHECK(id.u == doctest::Approx(0.1));
    const BeliefMass full = discount_mass(m, 0.0);
    CHECK(full.o == 0.0);
    CHECK(full.f == 0.0);
    CHECK(full.u == 1.0);
    const BeliefMass half = discount_mass({0.5, 0.3, 0.2}, 0.5);
    CHECK(half.o == doctest::Approx(0.25));
    CHECK(half.f == doctest::Approx(0.15));
    CHECK(half.u == doctest::Approx(0.6));
    for (int i = 0; i < 1000; ++i) {
        std::uniform_real_distribution<double> g(0.0, 1.0);
        CHECK(discount_mass(random_mass(), g(rng)).valid());
    }
}

TEST_CASE("pignistic probability") {
    CHECK(pignistic(BeliefMass::vacuous()) == 0.5);
    CHECK(pignistic({1, 0, 0}) == 1.0);
    CHECK(pignistic({0.6, 0.2, 0.2}) == doctest::Approx(0.7));
    for (int i = 0; i < 1000; ++i) {
        const BeliefMass m = random_mass();
        const double p = pignistic(m);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        if (std::abs(m.o - m.f) < 1e-15) CHECK(p == doctest::Approx(0.5));
    }
}

TEST_CASE("classify_mass argmax and tie-breaks") {
    CHECK(classify_mass({0.7, 0.1, 0.2}) == CellClass::Occupied);
    CHECK(classify_mass({1.0 / 3, 1.0 / 3, 1.0 / 3}) == CellClass::Occluded);
    CHECK(classify_mass({0.2, 0.5, 0.3}) == CellClass::Free);

    // Swapping the two non-max components never changes the class.
    for (int i = 0; i < 1000; ++i) {
        const BeliefMass m = random_mass();
        const CellClass cls = classify_mass(m);
        BeliefMass swapped = m;
        if (cls == CellClass::Occupied) std::swap(swapped.f, swapped.u);
        if (cls == CellClass::Free) std::swap(swapped.o, swapped.u);
        if (cls == CellClass::Occluded) std::swap(swapped.o, swapped.f);
        if (classify_mass(swapped) != cls) {
            // Only legitimate on exact ties with the preferred class.
            CHECK((swapped.o == swapped.f || swapped.o == swapped.u || swapped.f == swapped.u));
        }
    }
}

TEST_CASE("transform_grid with equal poses is the identity") {
    GridConfig cfg{32, 32, 0.5};
    Sgm g = make_sgm(cfg);
    std::uniform_int_distribution<int> cls(0, 2);
    for (auto& c : g.cells) c = static_cast<CellClass>(cls(rng));
    const Pose2 pose(3.0, -2.0, 0.7);
    const Sgm out = transform_grid(g, pose, pose);
    CHECK(out.cells == g.cells);
}

TEST_CASE("transform_grid shifts whole columns for exact-cell translation") {
    GridConfig cfg{16, 16, 0.5};
    Sgm g = make_sgm(cfg);
    for (int r = 0; r < 16; ++r) g.at(r, 8) = CellClass::Occupied;
    const int k = 3;
    const Pose2 from(0, 0, 0), to(k * cfg.resolution, 0, 0);
    const Sgm out = transform_grid(g, from, to);
    for (int r = 0; r < 16; ++r) {
        CHECK(out.at(r, 8 - k) == CellClass::Occupied);
        for (int c = 16 - k; c < 16; ++c) CHECK(out.at(r, c) == CellClass::Occluded);
    }
}

TEST_CASE("transform_grid equals the per-cell trigonometric remap oracle") {
    GridConfig cfg{24, 24, 0.4};
    Sgm g = make_sgm(cfg);
    std::uniform_int_distribution<int> cls(0, 2);
    for (auto& c : g.cells) c = static_cast<CellClass>(cls(rng));
    const Pose2 from(1.0, 2.0, 0.3);
    const Pose2 to(1.5, 2.2, 0.4);  // +0.5 m, +0.2 m, +0.1 rad
    const Sgm out = transform_grid(g, from, to);

    for (int r = 0; r < cfg.height; ++r) {
        for (int c = 0; c < cfg.width; ++c) {
            // Straight double-precision remap, no shortcuts.
            const Vec2 center = cell_center({r, c}, cfg);
            const double wx = to.x + center.x * std::cos(to.heading) -
                              center.y * std::sin(to.heading);
            const double wy = to.y + center.x * std::sin(to.heading) +
                              center.y * std::cos(to.heading);
            const double lx = (wx - from.x) * std::cos(from.heading) +
                              (wy - from.y) * std::sin(from.heading);
            const double ly = -(wx - from.x) * std::sin(from.heading) +
                              (wy - from.y) * std::cos(from.heading);
            const int col = static_cast<int>(std::floor(lx / cfg.resolution + cfg.width * 0.5));
            const int row = static_cast<int>(std::floor(ly / cfg.resolution + cfg.height * 0.5));
            const CellClass want = (col >= 0 && col < cfg.width && row >= 0 && row < cfg.height)
                                       ? g.at(row, col)
                                       : CellClass::Occluded;
            CHECK(out.at(r, c) == want);
        }
    }
}

TEST_CASE("pose heading stays normalized") {
    CHECK(Pose2(0, 0, 3 * M_PI).heading == doctest::Approx(M_PI));
    CHECK(Pose2(0, 0, -M_PI).heading == doctest::Approx(M_PI));
    CHECK(Pose2(0, 0, 0.5).heading == doctest::Approx(0.5));
}

namespace {

// Recursive flood fill, independent of the BFS implementation.
void flood(const DynamicMask& m, int r, int c, std::vector<std::uint8_t>& seen,
           std::vector<Cell>& out, int connectivity) {
    if (r < 0 || r >= m.config.height || c < 0 || c >= m.config.width) return;
    const std::size_t idx = static_cast<std::size_t>(r) * m.config.width + c;
    if (seen[idx] || !m.cells[idx]) return;
    seen[idx] = 1;
    out.push_back({r, c});
    flood(m, r + 1, c, seen, out, connectivity);
    flood(m, r - 1, c, seen, out, connectivity);
    flood(m, r, c + 1, seen, out, connectivity);
    flood(m, r, c - 1, seen, out, connectivity);
    if (connectivity == 8) {
        flood(m, r + 1, c + 1, seen, out, connectivity);
        flood(m, r + 1, c - 1, seen, out, connectivity);
        flood(m, r - 1, c + 1, seen, out, connectivity);
        flood(m, r - 1, c - 1, seen, out, connectivity);
    }
}

}  // namespace

TEST_CASE("connected_components connectivity semantics") {
    DynamicMask m(GridConfig{8, 8, 1.0}, 0);
    m.at(2, 2) = 1;
    m.at(3, 3) = 1;
    CHECK(connected_components(m, 8).size() == 1);
    CHECK(connected_components(m, 4).size() == 2);
    CHECK(connected_components(DynamicMask(GridConfig{8, 8, 1.0}, 0)).empty());
}

TEST_CASE("connected_components equals the flood-fill oracle") {
    for (int trial = 0; trial < 20; ++trial) {
        DynamicMask m(GridConfig{32, 32, 1.0}, 0);
        std::bernoulli_distribution bit(0.35);
        for (auto& c : m.cells) c = bit(rng) ? 1 : 0;
        for (int connectivity : {4, 8}) {
            auto got = connected_components(m, connectivity);
            std::vector<std::uint8_t> seen(m.size(), 0);
            std::vector<std::vector<Cell>> want;
            for (int r = 0; r < 32; ++r)
                for (int c = 0; c < 32; ++c) {
                    std::vector<Cell> comp;
                    flood(m, r, c, seen, comp, connectivity);
                    if (!comp.empty()) {
                        std::sort(comp.begin(), comp.end());
                        want.push_back(std::move(comp));
                    }
                }
            REQUIRE(got.size() == want.size());
            std::sort(got.begin(), got.end());
            std::sort(want.begin(), want.end());
            CHECK(got == want);
        }
    }
}
