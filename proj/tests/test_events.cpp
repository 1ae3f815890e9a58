#include "prefopt/errors.hpp"
#include "prefopt/events.hpp"
#include "prefopt/experiment.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace prefopt;

namespace {

std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() / ("prefopt_test_events_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<std::string> lines_of(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string write_lines(const std::string& name, const std::vector<std::string>& lines, const std::string& tail = "") {
  const auto path = (scratch_dir() / name).string();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
  out << tail;
  return path;
}

std::string simulation_log(Algorithm alg, int budget) {
  ExperimentPlan plan;
  plan.functions = {FunctionId::branin2};
  plan.algorithms = {alg};
  plan.n_runs = 1;
  plan.budget = budget;
  plan.base_seed = 3;
  plan.grid_points = 21;
  plan.logs_dir = (scratch_dir() / "logs").string();
  const auto cell = run_cell(plan, FunctionId::branin2, alg, 0);
  REQUIRE_FALSE(cell.error);
  return cell.log_path;
}

}  // namespace

TEST_CASE("untampered logs replay exactly") {
  for (auto alg : {Algorithm::random_pairs, Algorithm::bpe4prost, Algorithm::eubo_linecospar}) {
    const auto path = simulation_log(alg, 4);
    const auto events = read_events(path);
    REQUIRE(events.size() > 3);
    CHECK(events.front().type == event_type::session_created);
    CHECK(events.back().type == event_type::session_closed);
    for (std::size_t i = 0; i < events.size(); ++i) CHECK(events[i].seq == static_cast<std::int64_t>(i + 1));
    const auto rep = replay_log(path);
    CHECK_MESSAGE(rep.matched, rep.mismatch);
    CHECK(rep.recommendations_checked == 4);
    CHECK(rep.responses_replayed == 5 + 4);
    CHECK(rep.queries_checked == 5 + 4);
    CHECK(rep.max_deviation <= 1e-9);
  }
}

TEST_CASE("a flipped response breaks the match") {
  const auto path = simulation_log(Algorithm::bpe4prost, 4);
  auto lines = lines_of(path);
  for (std::size_t target : {0u, 1u}) {
    auto copy = lines;
    std::size_t seen = 0;
    for (auto& l : copy) {
      auto j = nlohmann::json::parse(l);
      if (j["type"] != event_type::response) continue;
      if (seen++ != (target == 0 ? 2u : 6u)) continue;
      j["data"]["choice"] = j["data"]["choice"] == "A" ? "B" : "A";
      l = j.dump();
      break;
    }
    const auto rep = replay_log(write_lines("flipped_" + std::to_string(target) + ".jsonl", copy));
    CHECK_FALSE(rep.matched);
    CHECK_FALSE(rep.mismatch.empty());
  }
}

TEST_CASE("truncated logs replay their prefix") {
  const auto path = simulation_log(Algorithm::random_pairs, 4);
  const auto lines = lines_of(path);
  std::vector<std::string> prefix(lines.begin(), lines.begin() + static_cast<long>(lines.size() * 2 / 3));
  const auto rep = replay_log(write_lines("prefix.jsonl", prefix));
  CHECK(rep.matched);
  CHECK(rep.recommendations_checked < 4);

  // A torn final line is ignored.
  const auto torn = write_lines("torn.jsonl", prefix, "{\"seq\": 99, \"type\": \"resp");
  CHECK(read_events(torn).size() == prefix.size());
  CHECK(replay_log(torn).matched);

  // A malformed line elsewhere is an error with its line number.
  auto broken = lines;
  broken[2] = "not json";
  try {
    read_events(write_lines("broken.jsonl", broken));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 3);
  }
}

TEST_CASE("format version mismatch is rejected") {
  const auto path = simulation_log(Algorithm::random_pairs, 2);
  auto lines = lines_of(path);
  auto head = nlohmann::json::parse(lines.front());
  head["data"]["format_version"] = kLogFormatVersion + 1;
  lines.front() = head.dump();
  CHECK_THROWS_AS(replay_log(write_lines("future.jsonl", lines)), IncompatibleLogError);
  CHECK_THROWS_AS(session_setup_from_json(head["data"]), IncompatibleLogError);
}

TEST_CASE("setup and events round trip") {
  SessionSetup s;
  s.session_id = "abc";
  s.space = prosthesis4_preset();
  s.loop = LoopConfig::simulation(Algorithm::bpe4prost, 4, 9);
  s.model = ModelConfig::for_algorithm(Algorithm::bpe4prost, 4);
  s.acquisition = acquisition_for(Algorithm::bpe4prost, 3);
  s.x_ref = midpoint(s.space);
  const auto back = session_setup_from_json(nlohmann::json::parse(to_json(s).dump()));
  CHECK(to_json(back).dump() == to_json(s).dump());

  Event e{4, event_type::response, {{"query_id", 2}}, "2026-01-01T00:00:00Z"};
  const auto e2 = event_from_json(to_json(e));
  CHECK(e2.seq == 4);
  CHECK(e2.type == e.type);
  CHECK(e2.time == e.time);
  CHECK(utc_now_iso8601().size() >= 20);
}
