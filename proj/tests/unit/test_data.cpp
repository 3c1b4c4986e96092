#include <cmath>
#include <set>
#include <sstream>

#include "claire/data/data.hpp"
#include "claire/error.hpp"
#include "claire/numerics/random.hpp"
#include "doctest.h"

using namespace claire;
using namespace claire::data;

namespace {

Schema law_like() {
  return Schema::from_json(nlohmann::json::parse(R"({
    "features": [{"name": "UGPA"}, {"name": "LSAT"}, {"name": "region", "type": "categorical"}],
    "sensitive": {"name": "race", "values": ["White", "Black", "Asian"]},
    "target": {"name": "ZFYA", "task": "regression"}
  })"));
}

}  // namespace

TEST_CASE("csv loading") {
  SUBCASE("filters sensitive values, one-hot encodes, counts skipped rows") {
    std::istringstream in(
        "race,UGPA,LSAT,region,ZFYA\n"
        "White,3.1,40,NE,0.5\n"
        "Hispanic,3.0,38,SW,0.1\n"
        "black,2.9,35,SW,-0.2\n"
        "Asian,3.5,44,GL,1.0\n"
        "White,abc,40,NE,0.5\n"
        "Asian,,40,NE,0.5\n");
    const auto r = parse_csv(in, law_like());
    CHECK(r.report.rows_read == 6);
    CHECK(r.report.rows_kept == 3);
    CHECK(r.report.dropped_sensitive == 1);
    CHECK(r.report.dropped_missing == 1);
    CHECK(r.report.skipped_unparseable == 1);
    const Dataset& d = r.data;
    CHECK(d.feature_names == std::vector<std::string>{"UGPA", "LSAT", "region=GL", "region=NE", "region=SW"});
    CHECK(d.s == std::vector<std::size_t>{0, 1, 2});
    CHECK(d.y == std::vector<double>{0.5, -0.2, 1.0});
    CHECK(d.x(1, 1) == 35.0);
    CHECK(r.continuous_columns == std::vector<std::size_t>{0, 1});
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.x(i, 2) + d.x(i, 3) + d.x(i, 4) == 1.0);
  }
  SUBCASE("header-less file with text labels and binary features") {
    auto schema = Schema::from_json(nlohmann::json::parse(R"({
      "columns": ["age", "race", "sex", "income"],
      "features": [{"name": "age"}, {"name": "sex", "type": "binary", "positive": ["Male"]}],
      "sensitive": {"name": "race", "values": ["White", "Black", "Asian-Pac-Islander"]},
      "target": {"name": "income", "task": "classification", "positive": [">50K"]}
    })"));
    std::istringstream in("39, White, Male, <=50K\n50, Asian-Pac-Islander, Female, >50K.\n");
    const auto r = parse_csv(in, schema);
    CHECK(r.data.y == std::vector<double>{0.0, 1.0});
    CHECK(r.data.s == std::vector<std::size_t>{0, 2});
    CHECK(r.data.x(0, 1) == 1.0);
    CHECK(r.data.x(1, 1) == 0.0);
    CHECK(r.data.task == Task::classification);
  }
  SUBCASE("empty input") {
    std::istringstream in("");
    CHECK_THROWS_AS(parse_csv(in, law_like()), DataError);
    std::istringstream only_header("race,UGPA,LSAT,region,ZFYA\n");
    CHECK_THROWS_AS(parse_csv(only_header, law_like()), DataError);
  }
  SUBCASE("missing column") {
    std::istringstream in("race,UGPA,region,ZFYA\nWhite,1,NE,0\n");
    try {
      parse_csv(in, law_like());
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("LSAT") != std::string::npos);
    }
  }
  SUBCASE("quoted cells") {
    CHECK(split_csv_line(R"(a,"b,c", "d""e" ,)") == std::vector<std::string>{"a", "b,c", "d\"e", ""});
  }
  SUBCASE("schema rejects overlap") {
    auto j = law_like().to_json();
    j["features"].push_back({{"name", "race"}});
    CHECK_THROWS_AS(Schema::from_json(j), ConfigError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", law_like()), DataError); }
}

TEST_CASE("standardization") {
  Rng rng(1);
  Matrix x = rng.normal_matrix(100, 3);
  for (std::size_t i = 0; i < 100; ++i) {
    x(i, 0) = 5.0 + 3.0 * x(i, 0);
    x(i, 2) = 7.0;
  }
  Dataset d;
  d.feature_names = {"a", "b", "c"};
  d.x = x;
  d.s.assign(100, 0);
  d.y.assign(100, 0.0);
  d.num_sensitive = 2;
  const auto sp = split(100, 3);
  const std::vector<std::size_t> cols{0, 1, 2};
  const auto st = standardize(d, sp.train, cols);
  for (std::size_t c : {0, 1}) {
    double m = 0, v = 0;
    for (std::size_t i : sp.train) m += st.data.x(i, c);
    m /= sp.train.size();
    for (std::size_t i : sp.train) v += (st.data.x(i, c) - m) * (st.data.x(i, c) - m);
    v /= sp.train.size();
    CHECK(std::abs(m) < 1e-10);
    CHECK(std::abs(std::sqrt(v) - 1.0) < 1e-10);
  }
  SUBCASE("constant column left alone with a warning") {
    for (std::size_t i = 0; i < 100; ++i) CHECK(st.data.x(i, 2) == 7.0);
    CHECK(st.scaler.warnings.size() == 1);
  }
  SUBCASE("round trip") {
    const Matrix back = st.scaler.inverse(st.data.x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(back[i] - x[i]) < 1e-10);
  }
  SUBCASE("statistics come from training rows only") {
    Dataset poisoned = d;
    for (std::size_t i : sp.test) poisoned.x(i, 0) = 1e6;
    const auto p = standardize(poisoned, sp.train, cols);
    CHECK(p.scaler.mean[0] == st.scaler.mean[0]);
    CHECK(p.scaler.scale[0] == st.scaler.scale[0]);
  }
  SUBCASE("json round trip") {
    const auto again = Scaler::from_json(st.scaler.to_json());
    CHECK(again.transform(x) == st.data.x);
  }
}

TEST_CASE("train/validation/test split") {
  const auto a = split(10, 1);
  CHECK(a.train.size() == 6);
  CHECK(a.validation.size() == 2);
  CHECK(a.test.size() == 2);
  const auto b = split(20412, 5);
  CHECK(b.train.size() == 12247);
  CHECK(b.validation.size() == 4082);
  CHECK(b.test.size() == 4083);
  std::set<std::size_t> all;
  for (const auto* part : {&b.train, &b.validation, &b.test}) all.insert(part->begin(), part->end());
  CHECK(all.size() == 20412);
  CHECK(*all.rbegin() == 20411);
  CHECK(split(20412, 5).train == b.train);
  CHECK_FALSE(split(20412, 6).train == b.train);
  CHECK_THROWS_AS(split(4, 1), ValidationError);
}
