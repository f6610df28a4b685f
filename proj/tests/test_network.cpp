#include <catch2/catch_amalgamated.hpp>

#include "carbontrace/case_io.hpp"
#include "carbontrace/network.hpp"

using namespace ctrace;

namespace {

std::string cases_dir() { return CTRACE_CASES_DIR; }

Network two_bus() {
  std::vector<Bus> buses{{1, 0.0, true}, {2, 100.0, false}};
  std::vector<Line> lines{{1, 2, 0.1, 50.0}};
  std::vector<Generator> gens{{1, 0.0, 200.0, 900.0, {0.01, 10.0, 0.0}}};
  return Network(std::move(buses), std::move(lines), std::move(gens));
}

bool has_error_mentioning(const std::vector<Diagnostic>& ds,
                          const std::string& needle) {
  for (const auto& d : ds)
    if (d.severity == Diagnostic::Severity::error &&
        (d.message.find(needle) != std::string::npos ||
         d.location.find(needle) != std::string::npos))
      return true;
  return false;
}

}  // namespace

TEST_CASE("valid two-bus network passes validation") {
  auto net = two_bus();
  CHECK(validate_network(net).empty());
  CHECK(net.slack_index() == 0);
  CHECK(net.bus_index(2) == 1);
  CHECK_THROWS_AS(net.bus_index(3), std::out_of_range);
}

TEST_CASE("validation flags structural problems") {
  SECTION("no slack") {
    Network net({{1, 0.0, false}, {2, 10.0, false}}, {{1, 2, 0.1, 50.0}},
                {{1, 0.0, 20.0, 0.0, {}}});
    CHECK(has_error_mentioning(validate_network(net), "slack"));
  }
  SECTION("two slacks") {
    Network net({{1, 0.0, true}, {2, 10.0, true}}, {{1, 2, 0.1, 50.0}},
                {{1, 0.0, 20.0, 0.0, {}}});
    CHECK(has_error_mentioning(validate_network(net), "2 slack"));
  }
  SECTION("dangling line endpoint") {
    Network net({{1, 0.0, true}, {2, 10.0, false}}, {{1, 7, 0.1, 50.0}},
                {{1, 0.0, 20.0, 0.0, {}}});
    CHECK(has_error_mentioning(validate_network(net), "dangling"));
  }
  SECTION("dangling generator bus") {
    Network net({{1, 0.0, true}, {2, 10.0, false}}, {{1, 2, 0.1, 50.0}},
                {{9, 0.0, 20.0, 0.0, {}}});
    CHECK(has_error_mentioning(validate_network(net), "dangling"));
  }
  SECTION("nonpositive reactance") {
    Network net({{1, 0.0, true}, {2, 10.0, false}}, {{1, 2, 0.0, 50.0}},
                {{1, 0.0, 20.0, 0.0, {}}});
    CHECK(has_error_mentioning(validate_network(net), "reactance"));
  }
  SECTION("inverted generator limits") {
    Network net({{1, 0.0, true}, {2, 10.0, false}}, {{1, 2, 0.1, 50.0}},
                {{1, 30.0, 20.0, 0.0, {}}});
    CHECK(has_error_mentioning(validate_network(net), "p_min > p_max"));
  }
  SECTION("disconnected bus is named") {
    Network net({{1, 0.0, true}, {2, 10.0, false}, {3, 5.0, false}},
                {{1, 2, 0.1, 50.0}}, {{1, 0.0, 20.0, 0.0, {}}});
    CHECK(has_error_mentioning(validate_network(net), "3"));
  }
  SECTION("duplicate bus id rejected at construction") {
    CHECK_THROWS_AS(Network({{1, 0.0, true}, {1, 1.0, false}}, {}, {}),
                    std::invalid_argument);
  }
}

TEST_CASE("fingerprint tracks network content") {
  auto a = two_bus();
  auto b = two_bus();
  CHECK(a.fingerprint() == b.fingerprint());
  Network c({{1, 0.0, true}, {2, 100.5, false}}, {{1, 2, 0.1, 50.0}},
            {{1, 0.0, 200.0, 900.0, {0.01, 10.0, 0.0}}});
  CHECK(a.fingerprint() != c.fingerprint());
}

TEST_CASE("native json round trip") {
  auto pr = load_case_file(cases_dir() + "/case5.json");
  const Network& net = pr.network;
  REQUIRE(net.num_buses() == 5);
  REQUIRE(net.num_lines() == 6);
  REQUIRE(net.num_generators() == 3);
  CHECK(net.buses()[0].is_slack);
  CHECK(net.buses()[3].base_load == 400.0);
  CHECK(std::isinf(net.lines()[4].flow_limit));
  CHECK(net.generators()[1].emission_rate == 1890.0);
  CHECK(net.generators()[2].cost.b == 16.0);

  auto again = parse_native_json(serialize_network(net));
  CHECK(again.network.fingerprint() == net.fingerprint());
}

TEST_CASE("native json rejects malformed input") {
  CHECK_THROWS_AS(parse_native_json("{"), ParseError);
  CHECK_THROWS_AS(parse_native_json("{\"buses\": []}"), ParseError);
}

TEST_CASE("matpower subset parses") {
  const std::string text = R"(function mpc = tiny
% a comment
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0   0 0 0 1 1 0 138 1 1.05 0.95;
  2 1 80  0 0 0 1 1 0 138 1 1.05 0.95;
  3 1 40  0 0 0 1 1 0 138 1 1.05 0.95;
];
mpc.gen = [
  1 0 0 0 0 1 100 1 200 0 0 0 0 0 0 0 0 0 0 0 0;
  3 0 0 0 0 1 100 0 99  0 0 0 0 0 0 0 0 0 0 0 0;
];
mpc.branch = [
  1 2 0 0.05 0 90 0 0 0 0 1 -360 360;
  2 3 0 0.04 0 0  0 0 0 0 1 -360 360;
  1 3 0 0.08 0 60 0 0 0 0 0 -360 360;
];
mpc.gencost = [
  2 0 0 3 0.02 11 5;
  2 0 0 3 0.01 12 0;
];
)";
  auto pr = parse_matpower(text, {});
  const Network& net = pr.network;
  REQUIRE(net.num_buses() == 3);
  CHECK(net.slack_index() == 0);
  CHECK(net.buses()[1].base_load == 80.0);
  // out-of-service branch and generator are dropped, with warnings
  REQUIRE(net.num_lines() == 2);
  REQUIRE(net.num_generators() == 1);
  CHECK(std::isinf(net.lines()[1].flow_limit));  // rateA = 0 means unlimited
  CHECK(net.generators()[0].cost.a == 0.02);
  CHECK(net.generators()[0].cost.c == 5.0);
  bool warned_oos = false;
  for (const auto& w : pr.warnings)
    if (w.message.find("out-of-service") != std::string::npos)
      warned_oos = true;
  CHECK(warned_oos);
}

TEST_CASE("matpower errors carry line positions") {
  try {
    parse_matpower(
        "function mpc = x\nmpc.baseMVA = 100;\nmpc.bus = [\n1 3 0;\n];\n"
        "mpc.gen = [\n1 0 0 0 0 1 100 1 10 0;\n];\n",
        {});
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("13 columns") != std::string::npos);
  }
  try {
    parse_matpower("function mpc = x\nfor i = 1:3\n", {});
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    std::string msg = e.what();
    CHECK(msg.find("unsupported") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);  // line number
  }
}

TEST_CASE("emission sidecar formats") {
  auto arr = parse_emission_sidecar(
      R"({"emission_rates_lbs_per_mwh": [100.0, 200.0]})", 2);
  REQUIRE(arr.size() == 2);
  CHECK(arr[1] == 200.0);
  auto keyed = parse_emission_sidecar(
      R"({"emission_rates_lbs_per_mwh": {"2": 7.0, "1": 3.0}})", 2);
  REQUIRE(keyed.size() == 2);
  CHECK(keyed[0] == 3.0);
  CHECK(keyed[1] == 7.0);
  CHECK_THROWS_AS(
      parse_emission_sidecar(R"({"emission_rates_lbs_per_mwh": [-1.0]})", 1),
      ParseError);
}

TEST_CASE("generated matpower cases load cleanly") {
  for (const char* name : {"case24", "case30", "case118"}) {
    auto pr = load_case_file(cases_dir() + "/" + name + ".m");
    CHECK(validate_network(pr.network).empty());
    for (const auto& g : pr.network.generators())
      CHECK(g.emission_rate > 0.0);  // sidecar picked up
  }
  auto c30 = load_case_file(cases_dir() + "/case30.m");
  REQUIRE(c30.network.num_buses() == 30);
  REQUIRE(c30.network.num_generators() == 6);
  CHECK(c30.network.generators()[1].emission_rate == 1890.0);
}
