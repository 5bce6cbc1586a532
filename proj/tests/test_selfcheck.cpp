#include "doctest.h"

#include "histotex/selfcheck.hpp"

using namespace histotex;

TEST_CASE("selfcheck passes on seeded fixtures") {
  const auto results = run_selfcheck({});
  CHECK(results.size() >= 9);
  for (const auto& r : results) {
    INFO(r.name << " max error " << r.max_error << " tolerance " << r.tolerance);
    CHECK(r.passed);
    CHECK(r.cases > 0);
  }
}

TEST_CASE("selfcheck catches a sign-flipped gradient") {
  for (const char* term : {"gram", "histogram", "content", "mean_activation", "tv"}) {
    SelfcheckOptions o;
    o.gradient_inputs = 2;
    o.inject_fault = term;
    int failed = 0;
    for (const auto& r : gradient_checks(o)) {
      if (!r.passed) {
        ++failed;
        CHECK(r.name.find(term) != std::string::npos);
      }
    }
    CHECK(failed == 1);
  }
}

TEST_CASE("selfcheck JSON") {
  SelfcheckOptions o;
  o.gradient_inputs = 1;
  o.histogram_pairs = 1;
  const auto j = to_json(run_selfcheck(o));
  CHECK(j["passed"] == true);
  REQUIRE(j["checks"].is_array());
  for (const auto& c : j["checks"]) {
    CHECK(c.contains("name"));
    CHECK(c.contains("max_error"));
    CHECK(c.contains("tolerance"));
  }
}
