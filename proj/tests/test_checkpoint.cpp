#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "emcom/checkpoint.hpp"
#include "emcom/collectors.hpp"
#include "emcom/errors.hpp"
#include "emcom/pong.hpp"
#include "emcom/trainer.hpp"

#include "doctest.h"

using namespace emcom;
namespace fs = std::filesystem;

namespace {

train::TrainerSetup small_setup() {
  train::TrainerSetup s;
  s.env_factory = [] { return std::make_unique<env::PongEnv>(); };
  s.lang = agent::LanguageSpec{3, 1};
  s.net.hidden = {8};
  s.ppo.num_envs = 4;
  s.ppo.horizon = 16;
  s.ppo.num_minibatches = 4;
  s.ppo.update_epochs = 2;
  s.ppo.total_timesteps = 4 * 16 * 6;  // six updates
  s.seed = 42;
  return s;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string write_tmp(const fs::path& dir, const std::string& name, const std::string& bytes) {
  const std::string p = (dir / name).string();
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  return p;
}

// Rewrites the trailing CRC so deliberate header edits still pass the
// integrity check and exercise the later validation stages.
std::string refresh_crc(std::string bytes) {
  const std::string payload = bytes.substr(0, bytes.size() - 4);
  const auto crc = static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(payload.data()),
              static_cast<uInt>(payload.size())));
  std::memcpy(bytes.data() + bytes.size() - 4, &crc, 4);
  return bytes;
}

bool logs_match(const train::IterationLog& a, const train::IterationLog& b) {
  return a.iteration == b.iteration && a.global_step == b.global_step && a.lr == b.lr &&
         a.mean_ep_reward == b.mean_ep_reward && a.mean_ep_length == b.mean_ep_length &&
         a.episodes == b.episodes && a.stats.pg_loss == b.stats.pg_loss &&
         a.stats.v_loss == b.stats.v_loss && a.stats.entropy == b.stats.entropy &&
         a.stats.approx_kl == b.stats.approx_kl && a.stats.clip_frac == b.stats.clip_frac;
}

}  // namespace

TEST_CASE("checkpoints round-trip to identical bytes") {
  const fs::path dir = fs::temp_directory_path() / "emcom_ckpt_roundtrip";
  fs::create_directories(dir);

  train::Trainer<float> a(small_setup());
  for (int i = 0; i < 3; ++i) a.run_update();
  const std::string p1 = (dir / "a.ckpt").string();
  ckpt::save_checkpoint(a, "cafe0123", p1);

  const auto info = ckpt::read_checkpoint_info(p1);
  CHECK(info.version == 1);
  CHECK(info.arch.env_name == "pong");
  CHECK(info.arch.env_dim == 11);
  CHECK(info.arch.num_actions == 3);
  CHECK(info.arch.lang.vocab_size == 3);
  CHECK(info.arch.lang.seq_len == 1);
  CHECK(info.arch.hidden == std::vector<int>{8});
  CHECK(info.arch.scalar_width == 4);
  CHECK(info.config_hash == "cafe0123");
  CHECK(info.update_index == 3);
  CHECK(info.global_step == 3 * 4 * 16);

  train::Trainer<float> b(small_setup());
  ckpt::resume_from_checkpoint(b, p1, "cafe0123");
  CHECK(b.update_index() == 3);
  CHECK(b.global_step() == 3 * 4 * 16);
  const std::string p2 = (dir / "b.ckpt").string();
  ckpt::save_checkpoint(b, "cafe0123", p2);
  CHECK(slurp(p1) == slurp(p2));

  const auto params = ckpt::read_checkpoint_params(p1);
  CHECK(params.size() ==
        a.nets().actor.param_count() + a.nets().critic.param_count());
  CHECK(params[0] == static_cast<float>(a.nets().actor.layers[0].w(0, 0)));
  fs::remove_all(dir);
}

TEST_CASE("a resumed run reproduces the original metric series exactly") {
  const fs::path dir = fs::temp_directory_path() / "emcom_ckpt_series";
  fs::create_directories(dir);
  const std::string p = (dir / "mid.ckpt").string();

  std::vector<train::IterationLog> full;
  {
    train::Trainer<float> t(small_setup());
    while (!t.finished()) full.push_back(t.run_update());
  }
  REQUIRE(full.size() == 6);

  {
    train::Trainer<float> t(small_setup());
    for (int i = 0; i < 3; ++i) t.run_update();
    ckpt::save_checkpoint(t, "h", p);
  }
  train::Trainer<float> resumed(small_setup());
  ckpt::resume_from_checkpoint(resumed, p);
  std::vector<train::IterationLog> tail;
  while (!resumed.finished()) tail.push_back(resumed.run_update());

  REQUIRE(tail.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(logs_match(tail[i], full[3 + i]));
  // Annealing resumes exactly where it left off.
  CHECK(tail[0].lr == train::lr_at(4, 1e-4, 6));
  fs::remove_all(dir);
}

TEST_CASE("damaged checkpoints fail the checksum") {
  const fs::path dir = fs::temp_directory_path() / "emcom_ckpt_damage";
  fs::create_directories(dir);
  const std::string p = (dir / "ok.ckpt").string();
  train::Trainer<float> t(small_setup());
  t.run_update();
  ckpt::save_checkpoint(t, "h", p);
  const std::string good = slurp(p);

  auto throws_checksum = [&](const std::string& bytes) {
    const std::string vp = write_tmp(dir, "bad.ckpt", bytes);
    try {
      ckpt::read_checkpoint_info(vp);
      return false;
    } catch (const ArtifactError& e) {
      return std::string(e.what()).find("checksum") != std::string::npos ||
             std::string(e.what()).find("truncated") != std::string::npos;
    }
  };

  CHECK(throws_checksum(good.substr(0, good.size() - 9)));
  CHECK(throws_checksum(good.substr(0, 7)));
  std::string flipped = good;
  flipped[good.size() / 2] = static_cast<char>(flipped[good.size() / 2] ^ 0x40);
  CHECK(throws_checksum(flipped));

  CHECK_THROWS_AS(ckpt::read_checkpoint_info((dir / "absent.ckpt").string()), ArtifactError);
  CHECK(ckpt::read_checkpoint_info(p).update_index == 1);  // original still fine
  fs::remove_all(dir);
}

TEST_CASE("wrong magic and unsupported versions are named") {
  const fs::path dir = fs::temp_directory_path() / "emcom_ckpt_header";
  fs::create_directories(dir);
  const std::string p = (dir / "ok.ckpt").string();
  train::Trainer<float> t(small_setup());
  ckpt::save_checkpoint(t, "h", p);
  const std::string good = slurp(p);

  std::string not_ckpt = good;
  not_ckpt[0] = 'X';
  const std::string p1 = write_tmp(dir, "m.ckpt", refresh_crc(not_ckpt));
  CHECK_THROWS_WITH_AS(ckpt::read_checkpoint_info(p1),
                       doctest::Contains("not a checkpoint"), ArtifactError);

  std::string vers = good;
  vers[4] = 9;
  const std::string p2 = write_tmp(dir, "v.ckpt", refresh_crc(vers));
  CHECK_THROWS_WITH_AS(ckpt::read_checkpoint_info(p2),
                       doctest::Contains("unsupported checkpoint version"), ArtifactError);
  fs::remove_all(dir);
}

TEST_CASE("architecture mismatches are rejected field by field") {
  const fs::path dir = fs::temp_directory_path() / "emcom_ckpt_arch";
  fs::create_directories(dir);
  const std::string p = (dir / "pong.ckpt").string();
  train::Trainer<float> t(small_setup());
  t.run_update();
  ckpt::save_checkpoint(t, "h", p);

  auto expect_mismatch = [&](train::TrainerSetup s, const char* needle) {
    train::Trainer<float> other(std::move(s));
    try {
      ckpt::resume_from_checkpoint(other, p);
      FAIL_CHECK("expected a mismatch for ", needle);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  auto s = small_setup();
  s.net.hidden = {8, 8};
  expect_mismatch(s, "hidden layer sizes");

  s = small_setup();
  s.lang.vocab_size = 5;
  expect_mismatch(s, "vocabulary size");

  s = small_setup();
  s.lang.seq_len = 2;
  expect_mismatch(s, "message length");

  s = small_setup();
  s.env_factory = [] { return std::make_unique<env::CollectorsEnv>(); };
  s.ppo.num_minibatches = 4;
  expect_mismatch(s, "environment");

  {
    train::Trainer<double> wide(small_setup());
    CHECK_THROWS_WITH_AS(ckpt::resume_from_checkpoint(wide, p),
                         doctest::Contains("scalar width"), ConfigError);
  }

  // Config-hash guard: only enforced when a hash is supplied.
  train::Trainer<float> same(small_setup());
  CHECK_THROWS_WITH_AS(ckpt::resume_from_checkpoint(same, p, "other"),
                       doctest::Contains("config"), ConfigError);
  ckpt::resume_from_checkpoint(same, p, "h");
  CHECK(same.update_index() == 1);
  ckpt::resume_from_checkpoint(same, p);  // empty hash skips the check
  fs::remove_all(dir);
}
