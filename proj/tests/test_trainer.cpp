#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cp/error.hpp"
#include "cp/follower.hpp"
#include "cp/trainer.hpp"
#include "probes.hpp"

using namespace cp;
using namespace cp::testing;

namespace {

struct Fixture {
  std::vector<Event> events;
  SampleGroups train_set;
  SampleGroups test_set;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    x.events = simulate_events(DetectorConfig{}, GenerationConfig{}, 17, 30);
    std::vector<EventCandidates> per;
    for (std::size_t i = 0; i < x.events.size(); ++i) {
      per.push_back({i, run_seed_search(x.events[i], 5, SearchWindow{})});
    }
    const auto split = split_candidates(per, x.events.size(), SplitConfig{});
    x.train_set = expand_split(x.events, split.train, 5);
    x.test_set = expand_split(x.events, split.test, 5);
    return x;
  }();
  return f;
}

ModelConfig small_model() {
  ModelConfig m = ModelConfig::for_detector(DetectorConfig{});
  m.conv_filters = 8;
  m.gru_hidden = {8, 8};
  return m;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("rates from a confusion matrix") {
  LengthMetrics m;
  m.tp = 5;
  m.tn = 10;
  finalize_rates(m);
  CHECK(m.recall == 1.0);
  CHECK(m.precision == 1.0);
  CHECK(m.accuracy == 1.0);
  LengthMetrics z;
  finalize_rates(z);
  CHECK(z.recall == 0.0);
  CHECK(z.precision == 0.0);
  LengthMetrics h{};
  h.tp = 3;
  h.fn = 1;
  h.fp = 6;
  h.tn = 10;
  finalize_rates(h);
  CHECK(h.recall == 0.75);
  CHECK(h.precision == doctest::Approx(1.0 / 3.0));
  CHECK(h.accuracy == doctest::Approx(13.0 / 20.0));
}

TEST_CASE("evaluation agrees with a per-sample recount") {
  const auto& fx = fixture();
  const CatchProlongNet net(small_model(), 3);
  const MetricsTable table = evaluate(net, fx.test_set, EvalOptions{0.5, 7});
  REQUIRE(table.rows.size() == fx.test_set.size());
  for (const auto& [len, group] : fx.test_set) {
    const LengthMetrics* row = table.find(len);
    REQUIRE(row);
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0, ell = 0, in = 0;
    double area = 0.0;
    for (const auto& s : group) {
      const auto out = net.forward(s.points);
      if (out.prob) {
        const bool pred = *out.prob >= 0.5;
        (pred ? (s.label ? tp : fp) : (s.label ? fn : tn))++;
      }
      if (out.ellipse && s.label == 1 && s.next) {
        ++ell;
        area += M_PI * out.ellipse->r1 * out.ellipse->r2;
        const double dx = (s.next->x - out.ellipse->cx) / out.ellipse->r1;
        const double dy = (s.next->y - out.ellipse->cy) / out.ellipse->r2;
        in += dx * dx + dy * dy <= 1.0;
      }
    }
    CHECK(row->samples == group.size());
    CHECK(row->tp == tp);
    CHECK(row->fp == fp);
    CHECK(row->tn == tn);
    CHECK(row->fn == fn);
    CHECK(row->tp + row->fp + row->tn + row->fn == (len >= 3 ? group.size() : 0));
    CHECK(row->ellipses == ell);
    if (ell > 0) {
      CHECK(row->mean_area == doctest::Approx(area / double(ell)).epsilon(1e-12));
      CHECK(row->coverage == double(in) / double(ell));
    }
  }
}

TEST_CASE("an always-positive classifier on the 1:10 mix") {
  const auto& fx = fixture();
  CatchProlongNet net(small_model(), 3);
  net.mutable_params()["cls.W"].fill(0.0);
  net.mutable_params()["cls.b"].fill(50.0);
  const MetricsTable table = evaluate(net, fx.test_set);
  // full-length candidates keep the exact mix; shorter prefixes of ghosts may be clean
  const LengthMetrics* full = table.find(6);
  REQUIRE(full);
  CHECK(full->recall == 1.0);
  CHECK(full->precision == doctest::Approx(1.0 / 11.0).epsilon(1e-12));
  CHECK(full->fn == 0);
  CHECK(full->tn == 0);
  for (const auto& r : table.rows) {
    if (r.has_classification) CHECK(r.recall == 1.0);
  }
}

TEST_CASE("batch loss is the mean of the per-sample joint loss") {
  const auto& fx = fixture();
  const CatchProlongNet net(small_model(), 4);
  const TrainConfig tc;
  for (const auto& [len, group] : fx.train_set) {
    std::vector<const TrainingSample*> batch;
    double sum = 0.0;
    for (std::size_t i = 0; i < std::min<std::size_t>(group.size(), 20); ++i) {
      batch.push_back(&group[i]);
      sum += batch_loss(net, std::vector<const TrainingSample*>{&group[i]}, tc, nullptr);
    }
    CHECK(batch_loss(net, batch, tc, nullptr) == doctest::Approx(sum / double(batch.size())).epsilon(1e-12));
  }
}

TEST_CASE("training is deterministic") {
  const auto& fx = fixture();
  TrainConfig tc;
  tc.epochs = 2;
  auto run = [&] {
    CatchProlongNet net(small_model(), tc.init_seed);
    const auto res = train(net, fx.train_set, &fx.test_set, tc);
    return std::pair{net.params(), res.history.back().test_loss};
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  tc.shuffle_seed = 12;
  CHECK_FALSE(run().first == a.first);
}

TEST_CASE("training lowers the loss") {
  const auto& fx = fixture();
  TrainConfig tc;
  tc.epochs = 5;
  CatchProlongNet net(small_model(), tc.init_seed);
  const double before = dataset_loss(net, fx.train_set, tc);
  const auto res = train(net, fx.train_set, nullptr, tc);
  CHECK(res.history.size() == 5);
  CHECK(dataset_loss(net, fx.train_set, tc) < before);
}

TEST_CASE("32 samples can be fitted") {
  const auto r = overfit_probe();
  INFO("best " << r.best);
  CHECK(r.first_epoch > 0);
}

TEST_CASE("training config errors") {
  TrainConfig tc;
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), Error);
  tc = TrainConfig{};
  tc.lr_decay = 1.5;
  CHECK_THROWS_AS(tc.validate(), Error);
  CatchProlongNet net(small_model(), 1);
  CHECK_THROWS_AS(train(net, SampleGroups{}, nullptr, TrainConfig{}), Error);
  CHECK_THROWS_AS(evaluate(net, fixture().test_set, EvalOptions{1.0, 8}), Error);
}

TEST_CASE("metric tables as CSV") {
  const auto& fx = fixture();
  const CatchProlongNet net(small_model(), 3);
  const MetricsTable table = evaluate(net, fx.test_set);

  const auto wide = parse_csv(metrics_table_csv(table, 5));
  REQUIRE(wide.size() == 5);
  CHECK(wide[0] == std::vector<std::string>{"metric", "3 points", "4 points", "5 points"});
  CHECK(wide[1][0] == "Recall");
  CHECK(wide[4][0] == "Ellipse square");
  for (std::size_t c = 1; c <= 3; ++c) {
    const LengthMetrics* m = table.find(c + 2);
    REQUIRE(m);
    CHECK(std::stod(wide[1][c]) == m->recall);
    CHECK(std::stod(wide[2][c]) == m->precision);
    CHECK(std::stod(wide[3][c]) == m->accuracy);
    CHECK(std::stod(wide[4][c]) == m->mean_area);
  }

  const auto tidy = parse_csv(metrics_tidy_csv(table));
  CHECK(tidy[0] == std::vector<std::string>{"length", "metric", "value"});
  std::size_t checked = 0;
  for (std::size_t i = 1; i < tidy.size(); ++i) {
    REQUIRE(tidy[i].size() == 3);
    const LengthMetrics* m = table.find(std::stoul(tidy[i][0]));
    REQUIRE(m);
    const double v = std::stod(tidy[i][2]);
    double want = -1.0;
    if (tidy[i][1] == "recall") want = m->recall;
    if (tidy[i][1] == "coverage") want = m->coverage;
    if (tidy[i][1] == "tp") want = double(m->tp);
    if (want < 0.0) continue;
    CHECK(v == want);
    ++checked;
  }
  CHECK(checked > 0);
}
