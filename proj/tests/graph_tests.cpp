#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "knn_oracle.hpp"
#include "tesla/graph.hpp"
#include "tesla/rng.hpp"

using namespace tesla;
using tesla::testing::knn_oracle_points;
using tesla::testing::random_points;
using tesla::testing::same_edges;

TEST_CASE("temporal_knn matches the brute-force oracle over a random sweep") {
    Rng rng(90210);
    for (int trial = 0; trial < 300; ++trial) {
        int n = static_cast<int>(rng.uniform_int(1, 64));
        auto pts = random_points(rng, n, 8);
        GraphConfig cfg;
        cfg.k = static_cast<int>(rng.uniform_int(1, 8));
        double alphas[] = {0.0, 1.0, 10.0, 100.0};
        cfg.alpha = alphas[rng.uniform_int(0, 3)];
        auto got = temporal_knn_points(pts, cfg, false);
        auto want = knn_oracle_points(pts, cfg, false);
        REQUIRE(same_edges(got, want));
    }
}

TEST_CASE("no edge ever points backward in time") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        auto pts = random_points(rng, 40, 6);
        GraphConfig cfg;
        cfg.k = 4;
        cfg.alpha = 1.0;
        auto g = temporal_knn_points(pts, cfg, false);
        for (const auto& e : g.edges) CHECK(pts[e.src].frame <= pts[e.dst].frame);
    }
}

TEST_CASE("large alpha pulls neighbors from the closest earlier populated frame") {
    Rng rng(23);
    auto pts = random_points(rng, 40, 20);
    GraphConfig cfg;
    cfg.k = 4;
    cfg.alpha = 100.0;
    auto g = temporal_knn_points(pts, cfg, false);

    // Frame-crossing neighbors must be greedy in time: no skipped earlier
    // candidate may live in a strictly later frame than a chosen one.
    int crossing = 0;
    for (int i = 0; i < g.node_count; ++i) {
        std::set<int> chosen;
        int min_chosen = std::numeric_limits<int>::max();
        for (int e = g.offsets[i]; e < g.offsets[i + 1]; ++e) {
            chosen.insert(g.edges[e].src);
            if (pts[g.edges[e].src].frame < pts[i].frame) {
                ++crossing;
                min_chosen = std::min(min_chosen, pts[g.edges[e].src].frame);
            }
        }
        if (min_chosen == std::numeric_limits<int>::max()) continue;
        for (int j = 0; j < g.node_count; ++j)
            if (!chosen.count(j) && pts[j].frame < pts[i].frame)
                CHECK(pts[j].frame <= min_chosen);
    }
    REQUIRE(crossing > 0);
}

TEST_CASE("alpha 0 ignores time except for the mask") {
    Rng rng(29);
    auto pts = random_points(rng, 30, 4);
    GraphConfig cfg;
    cfg.k = 3;
    cfg.alpha = 0.0;
    auto g = temporal_knn_points(pts, cfg, false);
    // With alpha = 0 the scored distance must equal the plain spatial distance
    // on normalized coordinates; re-derive it and compare.
    auto flat = std::vector<double>();
    for (const auto& p : pts) {
        flat.push_back(p.x);
        flat.push_back(p.y);
        flat.push_back(p.z);
        flat.push_back(p.frame);
    }
    auto norm = minmax_normalize(flat, static_cast<int>(pts.size()));
    for (const auto& e : g.edges) {
        const double* a = &norm[4 * e.dst];
        const double* b = &norm[4 * e.src];
        double spatial = std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                                   (a[2] - b[2]) * (a[2] - b[2]));
        CHECK(e.dist == doctest::Approx(spatial).epsilon(1e-12));
    }
}

TEST_CASE("degenerate graphs") {
    GraphConfig cfg;
    cfg.k = 4;
    cfg.alpha = 10.0;

    SUBCASE("a single point gets a single self-loop-free candidate set: just itself excluded") {
        std::vector<RadarPoint> one = {{0.5, 1.0, 0.2, 0}};
        auto g = temporal_knn_points(one, cfg, false);
        CHECK(g.node_count == 1);
        CHECK(g.edges.empty());
        CHECK(g.offsets == std::vector<int>{0, 0});
    }

    SUBCASE("two points in distinct frames with k=1 give exactly one edge") {
        std::vector<RadarPoint> two = {{0, 1, 0, 0}, {0.2, 1.1, 0, 1}};
        cfg.k = 1;
        auto g = temporal_knn_points(two, cfg, false);
        REQUIRE(g.edges.size() == 1);
        CHECK(g.edges[0].src == 0);
        CHECK(g.edges[0].dst == 1);
        CHECK(g.in_degree(0) == 0);
        CHECK(g.in_degree(1) == 1);
    }
}

TEST_CASE("masked_distance pins a 3-4-5 triangle and the infinity case") {
    double a[4] = {0, 0, 0, 0};
    double b[4] = {3, 4, 0, 0};
    CHECK(masked_distance(a, 0, b, 0) == 5.0);
    CHECK(masked_distance(a, 2, b, 1) == 5.0);
    CHECK(masked_distance(a, 0, b, 1) == std::numeric_limits<double>::infinity());
    double c[4] = {0, 0, 3, 4};
    CHECK(masked_distance(a, 1, c, 0) == 5.0);
}

TEST_CASE("minmax_normalize maps each column into [0, 1] and kills constants") {
    std::vector<double> f = {2, -1, 5, 0,  //
                             4, -1, 7, 2,  //
                             3, -1, 9, 1};
    auto out = minmax_normalize(f, 3);
    CHECK(out[0] == 0.0);
    CHECK(out[4] == 1.0);
    CHECK(out[8] == 0.5);
    CHECK(out[1] == 0.0);  // constant column
    CHECK(out[5] == 0.0);
    CHECK(out[2] == 0.0);
    CHECK(out[6] == 0.5);
    CHECK(out[10] == 1.0);
    CHECK(out[3] == 0.0);
    CHECK(out[7] == 1.0);
    CHECK(out[11] == 0.5);
}

TEST_CASE("every in-degree is at most k and exactly k when enough history exists") {
    Rng rng(31);
    auto pts = random_points(rng, 80, 5);
    GraphConfig cfg;
    cfg.k = 6;
    cfg.alpha = 1.0;
    auto g = temporal_knn_points(pts, cfg, false);
    for (int i = 0; i < g.node_count; ++i) {
        int eligible = 0;
        for (int j = 0; j < g.node_count; ++j)
            if (j != i && pts[j].frame <= pts[i].frame) ++eligible;
        CHECK(g.in_degree(i) == std::min(cfg.k, eligible));
    }
}

TEST_CASE("the edge set is invariant under storage-order permutation") {
    Rng rng(37);
    auto pts = random_points(rng, 25, 4);
    GraphConfig cfg;
    cfg.k = 3;
    cfg.alpha = 10.0;
    auto base = temporal_knn_points(pts, cfg, false);

    for (int rep = 0; rep < 20; ++rep) {
        std::vector<int> perm(pts.size());
        for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
        rng.shuffle(perm);
        std::vector<RadarPoint> shuffled(pts.size());
        for (size_t i = 0; i < perm.size(); ++i) shuffled[i] = pts[perm[i]];
        auto g = temporal_knn_points(shuffled, cfg, false);

        // Map edges back to the original identities and compare as sets.
        std::set<std::pair<int, int>> want, got;
        for (const auto& e : base.edges) want.insert({e.src, e.dst});
        std::vector<int> inv(perm.size());
        for (size_t i = 0; i < perm.size(); ++i) inv[i] = perm[i];
        for (const auto& e : g.edges) got.insert({inv[e.src], inv[e.dst]});
        CHECK(want == got);
    }
}

TEST_CASE("collapse_time joins everything into frame zero") {
    Rng rng(41);
    auto pts = random_points(rng, 30, 5);
    GraphConfig cfg;
    cfg.k = 4;
    cfg.alpha = 10.0;
    auto g = temporal_knn_points(pts, cfg, true);
    auto want = knn_oracle_points(pts, cfg, true);
    REQUIRE(same_edges(g, want));
    // The mask is vacuous, so every node with n > k sees exactly k neighbors.
    for (int i = 0; i < g.node_count; ++i) CHECK(g.in_degree(i) == cfg.k);
}

TEST_CASE("dump_graph_csv writes one row per edge") {
    Rng rng(43);
    auto pts = random_points(rng, 12, 3);
    GraphConfig cfg;
    cfg.k = 2;
    cfg.alpha = 1.0;
    auto g = temporal_knn_points(pts, cfg, false);
    auto path = std::filesystem::temp_directory_path() / "tesla_graph_dump.csv";
    dump_graph_csv(g, path);
    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "src,dst,distance");
    size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == g.edges.size());
    std::filesystem::remove(path);
}
