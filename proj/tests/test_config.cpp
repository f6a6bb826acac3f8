#include <fstream>

#include "doctest.h"
#include "flowcast/config.hpp"
#include "flowcast/errors.hpp"
#include "test_util.hpp"

using namespace flowcast;
using json = nlohmann::json;

TEST_CASE("default config resolves to the desk layout") {
  const RunConfig c;
  CHECK(c.data.grid.n_lat == 24);
  CHECK(c.data.grid.n_lon == 48);
  CHECK(c.data.n_years == 4);
  CHECK(c.codec.channels == 5);
  CHECK(c.dit.lat_tokens == 6);
  CHECK(c.dit.lon_tokens == 12);
  CHECK(c.dit.latent_channels == c.codec.latent_channels);
  CHECK(c.dit.max_context_frames == 4);
  CHECK(c.dit.max_target_frames == 32);
  CHECK(c.rollout.chunk_frames == 16);
  CHECK(c.rollout.sampler.n_steps == 20);
}

TEST_CASE("printed config fed back in reproduces itself") {
  RunConfig c;
  c.dit.positional = PositionalScheme::rope3d;
  c.data.injected.push_back(InjectedEvent{CalendarTime(1, 20, 0, 3), 56.25, 37.5, -4.0, 10.0, 12.0, 96.0, 12.0});
  c.resolve();
  const auto flat = to_flat_json(c);
  RunConfig back;
  apply_flat_json(back, json::parse(flat.dump()));
  CHECK(to_flat_json(back) == flat);
  CHECK(back.dit.positional == PositionalScheme::rope3d);
  REQUIRE(back.data.injected.size() == 1);
  CHECK(back.data.injected[0].onset == CalendarTime(1, 20, 0, 3));
  CHECK(back.data.injected[0].plateau_hours == 96.0);
  // every registered key is printed
  CHECK(flat.size() == config_keys().size());
}

TEST_CASE("unknown keys and bad values are config errors") {
  RunConfig c;
  CHECK_THROWS_AS(apply_flat_json(c, json{{"dit.dmodel", 64}}), ConfigError);
  CHECK_THROWS_AS(apply_flat_json(c, json{{"dit.d_model", "wide"}}), ConfigError);
  CHECK_THROWS_AS(apply_flat_json(c, json{{"dit.positional", "rope2d"}}), ConfigError);
  CHECK_THROWS_AS(apply_flat_json(c, json{{"dit.d_model", 100}}), ConfigError);  // not divisible by 6 heads
  CHECK_THROWS_AS(apply_flat_json(c, json{{"codec.patch", 5}}), ConfigError);
  CHECK_THROWS_AS(apply_flat_json(c, json{{"data.injected", json::array({json{{"mnth", 1}}})}}), ConfigError);
  CHECK_THROWS_AS(apply_flat_json(c, json::array()), ConfigError);
}

TEST_CASE("derived fields follow the data and codec sections") {
  RunConfig c;
  apply_flat_json(c, json{{"data.grid.n_lat", 12}, {"data.grid.n_lon", 24}, {"codec.patch", 6},
                          {"codec.latent_channels", 9}, {"train.horizon_days_max", 2}, {"rollout.chunk_frames", 4}});
  CHECK(c.dit.lat_tokens == 2);
  CHECK(c.dit.lon_tokens == 4);
  CHECK(c.dit.latent_channels == 9);
  CHECK(c.dit.max_target_frames == 8);
  apply_flat_json(c, json{{"data.step_hours", 12}});
  CHECK(c.dit.max_target_frames == 4);
}

TEST_CASE("config files load and report the failing path") {
  const auto dir = test_tmp_dir("config_files");
  {
    std::ofstream os(dir / "ok.json");
    os << R"({"dit.n_blocks": 2, "train.steps": 10, "rollout.sampler_steps": 5})";
  }
  {
    std::ofstream os(dir / "bad.json");
    os << "{ not json";
  }
  const auto c = load_run_config(dir / "ok.json");
  CHECK(c.dit.n_blocks == 2);
  CHECK(c.train.steps == 10);
  CHECK(c.rollout.sampler.n_steps == 5);
  CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "absent.json"), ConfigError);
}

TEST_CASE("section subsets carry only their prefix") {
  const RunConfig c;
  const auto dit = section_json(c, "dit.");
  CHECK(dit.contains("dit.d_model"));
  CHECK(!dit.contains("train.steps"));
  CHECK(dit["dit.positional"] == "rope1d+spatial2d");
}
