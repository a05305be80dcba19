#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "memlen/diag.hpp"
#include "memlen/envs.hpp"
#include "memlen/formats.hpp"
#include "json.hpp"

using namespace memlen;
using json = nlohmann::json;

TEST_CASE("pomdp text round trip is exact") {
  for (const TabularPOMDP& m :
       {build_passive_tmaze(4), build_active_tmaze(4), build_boat_mdp()}) {
    TabularPOMDP back = pomdp_from_text(pomdp_to_text(m));
    CHECK(back.name == m.name);
    CHECK(back.num_states == m.num_states);
    CHECK(back.num_actions == m.num_actions);
    CHECK(back.num_observations == m.num_observations);
    CHECK(back.horizon == m.horizon);
    CHECK(back.discount == m.discount);
    CHECK(back.initial_dist == m.initial_dist);
    CHECK(back.emission == m.emission);
    for (size_t a = 0; a < m.transition.size(); ++a)
      CHECK(back.transition[a] == m.transition[a]);
    for (int t = 1; t <= m.horizon; ++t)
      for (int s = 0; s < m.num_states; ++s)
        for (int a = 0; a < m.num_actions; ++a)
          for (int s2 = 0; s2 < m.num_states; ++s2)
            CHECK(back.reward(t, s, a, s2) == m.reward(t, s, a, s2));
    CHECK_NOTHROW(back.validate());
  }
}

TEST_CASE("malformed specs raise ValidationError") {
  CHECK_THROWS_AS(pomdp_from_text("not json"), ValidationError);
  CHECK_THROWS_AS(pomdp_from_text("{}"), ValidationError);
  // Valid JSON, invalid distribution.
  json doc = json::parse(pomdp_to_text(build_boat_mdp()));
  doc["initial_dist"][0] = 0.9;
  CHECK_THROWS_AS(pomdp_from_text(doc.dump()), ValidationError);
}

TEST_CASE("length report JSON carries the headline numbers") {
  LengthReport r = analyze(build_passive_tmaze(3));
  json doc = json::parse(length_report_to_json(r));
  CHECK(doc["l_mem"] == 3);
  CHECK(doc["m_reward"] == 3);
  CHECK(doc["c_task"] == 1);
  CHECK(doc["theorem1"]["holds"] == true);
  CHECK(doc.contains("witnesses"));
}

TEST_CASE("run record JSON") {
  RunRecord r;
  r.episode = 7;
  r.env_steps = 140;
  r.ret = 0.5;
  r.epsilon = 0.3;
  r.greedy_return = 1.0;
  json doc = json::parse(run_record_to_json(r));
  CHECK(doc["episode"] == 7);
  CHECK(doc["return"] == 0.5);
  CHECK(doc["greedy_return"] == 1.0);
  r.greedy_return.reset();
  doc = json::parse(run_record_to_json(r));
  CHECK(!doc.contains("greedy_return"));
}

TEST_CASE("train summary round trip and cell naming") {
  TrainSummary s;
  s.env = "passive-tmaze";
  s.encoder = "tabular";
  s.T = 20;
  s.context = 1;
  s.seed = 3;
  s.episodes_budget = 4000;
  s.episodes_run = 812;
  s.env_steps = 16240;
  s.final_greedy_return = 0.5;
  s.success_rate = 0.5;
  CHECK(s.cell_name() == "passive-tmaze-T20-tabular-k1-s3");
  TrainSummary back = train_summary_from_json(train_summary_to_json(s));
  CHECK(back.cell_name() == s.cell_name());
  CHECK(back.final_greedy_return == s.final_greedy_return);
  CHECK(back.episodes_run == s.episodes_run);
  CHECK(back.env_steps == s.env_steps);

  s.encoder = "transformer";
  s.context = 0;
  CHECK(s.cell_name() == "passive-tmaze-T20-transformer-s3");
}

TEST_CASE("read/write file round trip") {
  const std::string path = "/tmp/memlen_fmt_test.txt";
  write_file(path, "hello\n");
  CHECK(read_file(path) == "hello\n");
  CHECK_THROWS_AS(read_file("/nonexistent/nope"), ValidationError);
}
