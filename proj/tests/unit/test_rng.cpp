#include <doctest.h>

#include <algorithm>
#include <set>

#include "uniret/rng.hpp"

using namespace uniret;

TEST_CASE("rng streams are deterministic for a fixed seed") {
    RngStream a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform stays in [0,1)") {
    RngStream rng(7);
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("fork derives independent labeled streams without advancing the parent") {
    RngStream rng(9);
    RngStream f1 = rng.fork("alpha");
    std::uint64_t first = rng.next_u64();
    RngStream rng2(9);
    RngStream f2 = rng2.fork("alpha");
    CHECK(f1.next_u64() == f2.next_u64());
    CHECK(first == rng2.next_u64());
    CHECK(rng.fork("alpha").next_u64() != rng.fork("beta").next_u64());
}

TEST_CASE("sample_without_replacement yields distinct in-range indices") {
    RngStream rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto picks = rng.sample_without_replacement(20, 7);
        CHECK(picks.size() == 7);
        std::set<std::size_t> unique(picks.begin(), picks.end());
        CHECK(unique.size() == 7);
        for (std::size_t p : picks) CHECK(p < 20);
    }
}

TEST_CASE("shuffle permutes deterministically") {
    std::vector<int> v1{1, 2, 3, 4, 5, 6, 7, 8}, v2 = v1, sorted = v1;
    RngStream a(11), b(11);
    a.shuffle(v1);
    b.shuffle(v2);
    CHECK(v1 == v2);
    std::sort(v1.begin(), v1.end());
    CHECK(v1 == sorted);
}

TEST_CASE("fnv1a64 separates seeds and orderings") {
    CHECK(fnv1a64("a", 0) != fnv1a64("a", 1));
    CHECK(fnv1a64("abc", 0) != fnv1a64("acb", 0));
    CHECK(fnv1a64("abc", 5) == fnv1a64("abc", 5));
}
