#include <map>
#include <sstream>

#include <doctest.h>

#include "distill/config.hpp"

using namespace distill;

namespace {

SweepConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is, "test");
}

}  // namespace

TEST_CASE("full document") {
  const auto c = parse(R"(
# comment
[physics]
sigma = 550
L = 4000 ; trailing comment
[filter]
normalization = raw
response = amplitude
[sweep]
scenario = vary_d
a_values = 7
d_values = 0:6:2, 9
[grid]
preset = fine
[model]
phase_matching = gauss
svd = yes
[camera]
em_gain = 300
[run]
seed = 42
threads = 2
budget = 1e5
)");
  CHECK(c.params.sigma == 550);
  CHECK(c.params.L == 4000);
  CHECK(c.normalization == FilterNormalization::Raw);
  CHECK(c.response == FilterResponse::Amplitude);
  CHECK(c.scenario == Scenario::VaryD);
  CHECK(c.d_values == std::vector<double>{0, 2, 4, 6, 9});
  CHECK(c.grid.n == 1024);
  CHECK(c.phase_matching == PhaseMatchingKind::GaussianApprox);
  CHECK(c.with_svd);
  CHECK(c.camera.em_gain == 300);
  CHECK(c.seed == 42);
  CHECK(c.threads == 2);
  CHECK(c.budget == 1e5);
  const auto pts = c.points();
  REQUIRE(pts.size() == 5);
  CHECK(pts[4] == std::pair<double, double>{7, 9});
}

TEST_CASE("strict parsing") {
  CHECK_THROWS_AS(parse("[physics]\nsigmaa = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[nowhere]\n"), ConfigError);
  CHECK_THROWS_AS(parse("sigma = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[physics]\nsigma = 1\nsigma = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse("[physics]\nsigma = 12abc\n"), ConfigError);
  CHECK_THROWS_AS(parse("[physics]\nsigma = -3\n"), ConfigError);
  CHECK_THROWS_AS(parse("[sweep]\na_values = 5:1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[sweep]\na_values = 1,,2\n"), ConfigError);
  CHECK_THROWS_AS(parse("[model]\nsvd = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse("[grid]\npreset = huge\n"), ConfigError);
  CHECK_THROWS_AS(parse("[model]\nphase_matching = tophat\n"), ConfigError);
  CHECK_THROWS_AS(parse("[physics\n"), ConfigError);
}

TEST_CASE("describe round trip") {
  const auto c = parse("[physics]\nsigma = 610\n[sweep]\na_values = 4:8\n[run]\nseed = 9\nthreads = 3\n");
  std::map<std::string, std::vector<std::string>> sections;
  for (const auto& line : describe(c)) {
    const auto dot = line.find('.');
    sections[line.substr(0, dot)].push_back(line.substr(dot + 1));
  }
  std::string doc;
  for (const auto& [name, lines] : sections) {
    doc += "[" + name + "]\n";
    for (const auto& l : lines) doc += l + "\n";
  }
  const auto d = parse(doc);
  CHECK(describe(d) == describe(c));
  for (const auto& l : describe(c)) CHECK(l.find("threads") == std::string::npos);
}
