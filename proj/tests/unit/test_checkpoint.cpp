#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "selftime/checkpoint.hpp"
#include "selftime/errors.hpp"

using namespace selftime;
using namespace selftime::io;

namespace {

ModelCheckpoint sample() {
  ModelCheckpoint c;
  c.metadata = {{"architecture", "test"}, {"C", "3"}};
  c.entries.push_back({"a", {2, 3}, std::vector<float>{1, 2, 3, 4, 5, -0.0f}});
  c.entries.push_back({"b", {4}, std::vector<double>{1e-300, 2, 3, 4}});
  return c;
}

}  // namespace

TEST_CASE("checkpoint byte round trip") {
  const auto c = sample();
  const auto bytes = serialize_checkpoint(c);
  CHECK(bytes.substr(0, 4) == "STCK");
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back == c);
  CHECK(checkpoint_hash(back) == checkpoint_hash(c));
  CHECK(back.meta("C") == std::optional<std::string>("3"));
  CHECK_FALSE(back.meta("missing").has_value());
  // -0.0 survives bit for bit.
  CHECK(std::signbit(std::get<0>(back.find("a")->values)[5]));
}

TEST_CASE("checkpoint file round trip with a model") {
  model::SelfTimeModel m(4, 11);
  ModelCheckpoint c;
  store_model(c, m);
  const auto path = std::filesystem::temp_directory_path() / "selftime_ckpt_rt.stck";
  save_checkpoint(c, path);
  const auto back = load_checkpoint(path);
  CHECK(checkpoint_hash(back) == checkpoint_hash(c));
  model::SelfTimeModel other(4, 12);
  restore_model(back, other);
  ModelCheckpoint again;
  store_model(again, other);
  CHECK(again == c);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
}

TEST_CASE("checkpoint validation") {
  auto bytes = serialize_checkpoint(sample());
  SUBCASE("bad magic") {
    bytes.replace(0, 4, "XXXX");
    CHECK_THROWS_AS(deserialize_checkpoint(bytes), FormatError);
  }
  SUBCASE("unknown version") {
    const std::uint32_t v = 999;
    std::memcpy(bytes.data() + 4, &v, 4);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes), UnsupportedVersionError);
  }
  SUBCASE("truncated entry names the entry") {
    bytes.resize(bytes.size() - 3);
    try {
      deserialize_checkpoint(bytes);
      FAIL("expected CorruptionError");
    } catch (const CorruptionError& e) {
      CHECK(std::string(e.what()).find("b") != std::string::npos);
    }
  }
  SUBCASE("trailing bytes") {
    bytes += "zz";
    CHECK_THROWS_AS(deserialize_checkpoint(bytes), CorruptionError);
  }
}

TEST_CASE("restore rejects mismatched shapes") {
  model::SelfTimeModel three(3, 1), four(4, 1);
  ModelCheckpoint c;
  store_model(c, three);
  CHECK_THROWS(restore_model(c, four));
  RngStream rng(1, 0);
  model::Encoder enc(rng);
  restore_encoder(c, enc);
}
