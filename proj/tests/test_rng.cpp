#include <doctest.h>

#include <algorithm>
#include <set>

#include "fairpipe/rng.hpp"

using namespace fairpipe;

TEST_CASE("same seed reproduces the stream") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform stays in [0, 1)") {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("below respects the bound and hits all values") {
    Rng rng(3);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto v = rng.below(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("shuffle permutes without losing elements") {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    auto shuffled = v;
    Rng rng(11);
    rng.shuffle(shuffled);
    CHECK(shuffled != v);
    std::sort(shuffled.begin(), shuffled.end());
    CHECK(shuffled == v);
}

TEST_CASE("derived seeds differ by tag and by extra words") {
    const auto base = derive_seed(5, "stage");
    CHECK(base != derive_seed(5, "other"));
    CHECK(base != derive_seed(6, "stage"));
    CHECK(derive_seed(5, "stage", 1) != derive_seed(5, "stage", 2));
    CHECK(derive_seed(5, "stage", 1, 2) != derive_seed(5, "stage", 2, 1));
    CHECK(base == derive_seed(5, "stage"));
}

TEST_CASE("gaussian has roughly standard moments") {
    Rng rng(19);
    double sum = 0.0;
    double sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sq += g * g;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.03);
    CHECK(std::abs(var - 1.0) < 0.05);
}
