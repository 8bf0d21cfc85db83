#include <set>

#include "aes/csv.hpp"
#include "aes/error.hpp"
#include "aes/seed.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace aes;

TEST_CASE("csv split_line handles quotes and embedded commas") {
  const auto f = csv::split_line("1,\"a, \"\"b\"\"\",c\r");
  REQUIRE(f.size() == 3);
  CHECK(f[0] == "1");
  CHECK(f[1] == "a, \"b\"");
  CHECK(f[2] == "c");
  CHECK(csv::split_line("").size() == 1);
  CHECK(csv::split_line(",").size() == 2);
}

TEST_CASE("csv read_records keeps multiline quoted fields") {
  testing::TempDir dir;
  csv::write_file(dir / "x.csv", "a,b\r\n1,\"line one\nline two\"\n2,x");
  const auto r = csv::read_records(dir / "x.csv");
  REQUIRE(r.size() == 3);
  CHECK(r[1][1] == "line one\nline two");
  CHECK(r[2][0] == "2");
  csv::write_file(dir / "bad.csv", "a\n\"open");
  CHECK_THROWS_AS(csv::read_records(dir / "bad.csv"), DataError);
  CHECK_THROWS_AS(csv::read_records(dir / "missing.csv"), DataError);
}

TEST_CASE("csv quoting round-trips through split_line") {
  for (std::string s : {"plain", "with,comma", "with \"quote\"", "", "x\"\""}) {
    CHECK(csv::split_line(csv::quote(s) + "," + csv::quote_always(s)) ==
          std::vector<std::string>{s, s});
  }
  CHECK(csv::quote("plain") == "plain");
  CHECK(csv::quote_always("plain") == "\"plain\"");
}

TEST_CASE("fixed formatting is locale independent and drops negative zero") {
  CHECK(csv::fixed(0.5, 4) == "0.5000");
  CHECK(csv::fixed(2.0 / 3.0, 4) == "0.6667");
  CHECK(csv::fixed(-0.00001, 4) == "0.0000");
  CHECK(csv::fixed(-0.25, 2) == "-0.25");
  CHECK(csv::fixed(1e6, 1) == "1000000.0");
  CHECK(csv::exact(0.1) == "0.1");
  CHECK(csv::parse_double(csv::exact(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("number parsing trims and rejects junk") {
  CHECK(csv::parse_double(" 2.5 ") == 2.5);
  CHECK(csv::parse_double("+3") == 3.0);
  CHECK(csv::parse_int("\t42\r") == 42);
  CHECK(csv::parse_int("-7") == -7);
  CHECK_THROWS_AS(csv::parse_double(""), DataError);
  CHECK_THROWS_AS(csv::parse_double("1.5x"), DataError);
  CHECK_THROWS_AS(csv::parse_int("1.5"), DataError);
  CHECK_THROWS_AS(csv::parse_int("abc"), DataError);
}

TEST_CASE("write_file creates parent directories and replaces atomically") {
  testing::TempDir dir;
  const auto p = dir / "a/b/c.txt";
  csv::write_file(p, "one");
  csv::write_file(p, "two");
  CHECK(csv::read_file(p) == "two");
  CHECK_FALSE(std::filesystem::exists(dir / "a/b/c.txt.tmp"));
}

TEST_CASE("derive_seed separates stages and is stable") {
  CHECK(derive_seed(42, "split") == derive_seed(42, "split"));
  CHECK(derive_seed(42, "split") != derive_seed(42, "stacking-cv/ens-all"));
  CHECK(derive_seed(42, "split") != derive_seed(43, "split"));
}

TEST_CASE("uniform_index stays in range and covers every value") {
  std::mt19937_64 rng(7);
  CHECK(uniform_index(rng, 0) == 0);
  CHECK(uniform_index(rng, 1) == 0);
  for (std::uint64_t bound : {2ULL, 3ULL, 5ULL, 7ULL, 64ULL}) {
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
      const auto v = uniform_index(rng, bound);
      REQUIRE(v < bound);
      seen.insert(v);
    }
    CHECK(seen.size() == bound);
  }
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform_unit(rng);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("shuffle is a seeded permutation") {
  std::vector<int> a(50), b;
  for (int i = 0; i < 50; ++i) a[static_cast<std::size_t>(i)] = i;
  b = a;
  std::mt19937_64 r1(99), r2(99);
  shuffle(a, r1);
  shuffle(b, r2);
  CHECK(a == b);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
  std::vector<int> c(sorted);
  std::mt19937_64 r3(100);
  shuffle(c, r3);
  CHECK(c != a);
}
