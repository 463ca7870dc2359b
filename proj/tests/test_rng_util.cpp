#include <doctest.h>

#include <atomic>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "radpert/rng.hpp"
#include "radpert/util.hpp"

using namespace radpert;

TEST_SUITE("rng_util") {

TEST_CASE("splitmix64 reproduces the reference stream") {
  SplitMix64 g(0);
  CHECK(g.next() == 0xE220A8397B1DCDAFULL);
  CHECK(g.next() == 0x6E789E6AA1B965F4ULL);
  CHECK(g.next() == 0x06C45D188009454FULL);
}

TEST_CASE("next_below stays in range for awkward moduli") {
  SplitMix64 g(1);
  for (std::uint64_t n : {1ULL, 2ULL, 3ULL, 7ULL, 10ULL, 1000ULL}) {
    for (int i = 0; i < 2000; ++i) CHECK(g.next_below(n) < n);
  }
  SplitMix64 h(2);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 200; ++i) seen.insert(h.next_below(10));
  CHECK(seen.size() == 10);  // all residues show up quickly
}

TEST_CASE("stream mixing decorrelates seeds and replicates") {
  CHECK(mix_seed(42, 0) != mix_seed(42, 1));
  CHECK(mix_seed(42, 0) != mix_seed(43, 0));
  CHECK(mix_seed(42, 5) == mix_seed(42, 5));
}

TEST_CASE("resample_indices is deterministic per replicate") {
  const auto a = resample_indices(42, 3, 20);
  CHECK(a == resample_indices(42, 3, 20));
  CHECK(a.size() == 20);
  for (auto i : a) CHECK(i < 20);
  CHECK(a != resample_indices(42, 4, 20));
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xCBF29CE484222325ULL);
  CHECK(fnv1a64("a") == 0xAF63DC4C8601EC8CULL);
  CHECK(fnv1a64_hex("") == "cbf29ce484222325");
  CHECK(fnv1a64_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("string helpers") {
  CHECK(to_lower("EnLARGED") == "enlarged");
  CHECK(split_ws("  a  b\tc\n") == std::vector<std::string>{"a", "b", "c"});
  CHECK(split_ws("") == std::vector<std::string>{});
  CHECK(join({"a", "b", "c"}, ", ") == "a, b, c");
  CHECK(join({}, ", ") == "");
}

TEST_CASE("parallel_for_indexed covers every index exactly once") {
  for (int jobs : {1, 3, 16}) {
    std::vector<std::atomic<int>> hits(100);
    parallel_for_indexed(100, jobs, [&](std::size_t i) { hits[i]++; });
    for (const auto& h : hits) CHECK(h.load() == 1);
  }
  parallel_for_indexed(0, 4, [](std::size_t) { FAIL("must not be called"); });
}

}  // TEST_SUITE
