#include <doctest.h>

#include <cstring>
#include <fstream>

#include "fisale/checkpoint.hpp"
#include "fisale/data_io.hpp"
#include "support.hpp"

using namespace fisale;
using fisale::test::TempDir;

namespace {

SystemState unit_state(double value) {
  SystemState s;
  s.fluid = {Tensor({1, 1}, value), Tensor({1, 1}, value)};
  s.solid = {Tensor({1, 1}, value), Tensor({1, 1}, value)};
  s.interface = {Tensor({1, 1}, value), Tensor({1, 2}, value)};
  return s;
}

Trajectory small_trajectory(const std::string& id, double value, bool ood = false) {
  Trajectory t;
  t.id = id;
  t.frames = {unit_state(value), unit_state(value + 1)};
  t.meta.ood = ood;
  t.meta.conditions = {{"kappa", value}};
  t.meta.channels = {std::vector<ChannelInfo>{{"p", "Pa"}},
                     std::vector<ChannelInfo>{{"sigma", "Pa"}},
                     std::vector<ChannelInfo>{{"p", "Pa"}, {"sigma", "Pa"}}};
  return t;
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("trajectory file layout") {
  TempDir dir("layout");
  Trajectory t;
  t.frames = {unit_state(0.5)};
  const auto path = dir.path() / "one.fsl";
  write_trajectory(t, path);
  auto bytes = read_bytes(path);
  REQUIRE(bytes.size() == 68);
  CHECK(std::memcmp(bytes.data(), "FSL1", 4) == 0);
  std::uint32_t header[9];
  std::memcpy(header, bytes.data() + 4, sizeof header);
  CHECK(header[0] == kTrajectoryVersion);
  const std::uint32_t expect[9] = {1, 1, 1, 1, 1, 1, 1, 1, 2};
  for (int i = 1; i < 9; ++i) CHECK(header[i] == expect[i]);
  float first;
  std::memcpy(&first, bytes.data() + 40, 4);
  CHECK(first == 0.5f);
}

TEST_CASE("trajectory round trip is bit-exact") {
  TempDir dir("roundtrip");
  Rng rng(61);
  for (int i = 0; i < 50; ++i) {
    Trajectory t = fisale::test::random_f32_trajectory(rng, "t");
    const auto path = dir.path() / "t.fsl";
    write_trajectory(t, path);
    Trajectory back = read_trajectory(path);
    CHECK(fisale::test::bit_equal(t, back));
  }
}

TEST_CASE("trajectory format errors") {
  TempDir dir("errors");
  const auto path = dir.path() / "x.fsl";
  Trajectory t = small_trajectory("x", 1.0);
  write_trajectory(t, path);
  const auto good = read_bytes(path);

  SUBCASE("wrong magic") {
    auto bytes = good;
    bytes[0] = 'X';
    write_bytes(path, bytes);
    CHECK_THROWS_AS(read_trajectory(path), FormatError);
  }
  SUBCASE("truncated payload") {
    auto bytes = good;
    bytes.pop_back();
    write_bytes(path, bytes);
    CHECK_THROWS_AS(read_trajectory(path), FormatError);
  }
  SUBCASE("trailing bytes") {
    auto bytes = good;
    bytes.push_back(0);
    write_bytes(path, bytes);
    CHECK_THROWS_AS(read_trajectory(path), FormatError);
  }
  SUBCASE("interface channels must add up") {
    auto bytes = good;
    const std::uint32_t bad = 3;
    std::memcpy(bytes.data() + 4 + 8 * 4, &bad, 4);
    write_bytes(path, bytes);
    CHECK_THROWS_AS(read_trajectory(path), FormatError);
  }
  SUBCASE("writer rejects inconsistent channels") {
    Trajectory bad = t;
    bad.frames[0].interface.quantities = Tensor({1, 3});
    CHECK_THROWS(write_trajectory(bad, path));
  }
}

TEST_CASE("save and load keep metadata") {
  TempDir dir("meta");
  Trajectory t = small_trajectory("abc", 2.0, true);
  t.meta.frame_dt = 0.02;
  t.meta.mask.solid = {true};
  save_trajectory(t, dir.path());
  Trajectory back = load_trajectory(dir.path(), "abc");
  CHECK(back.id == "abc");
  CHECK(back.meta.ood);
  CHECK(back.meta.frame_dt == 0.02);
  CHECK(back.meta.conditions == t.meta.conditions);
  CHECK(back.meta.channels[2].size() == 2);
  CHECK(back.meta.mask.solid == std::vector<bool>{true});
  CHECK(back.frames[1].time == doctest::Approx(0.02));
  CHECK(back.frames[0].conditions == t.meta.conditions);
}

TEST_CASE("compute_norm_stats examples") {
  SUBCASE("constant channel has the floor std") {
    Trajectory t = small_trajectory("a", 3.0);
    t.frames = {unit_state(3.0), unit_state(3.0)};
    NormStats s = compute_norm_stats({t});
    CHECK(s.fluid.quantity_mean[0] == 3.0);
    CHECK(s.fluid.quantity_std[0] == kStdFloor);
  }
  SUBCASE("values -1 and 1 give mean 0 std 1") {
    Trajectory t = small_trajectory("a", -1.0);
    t.frames = {unit_state(-1.0), unit_state(1.0)};
    NormStats s = compute_norm_stats({t});
    CHECK(s.solid.position_mean[0] == 0.0);
    CHECK(s.solid.position_std[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("build_manifest") {
  TempDir dir("manifest");
  for (int i = 0; i < 10; ++i)
    save_trajectory(small_trajectory("t" + std::to_string(i), i), dir.path());
  save_trajectory(small_trajectory("ood0", 50.0, true), dir.path());
  save_trajectory(small_trajectory("ood1", 60.0, true), dir.path());

  Manifest m = build_manifest(dir.path(), {8, 1, 1}, 7);
  CHECK(m.ids(Split::train).size() == 8);
  CHECK(m.ids(Split::val).size() == 1);
  CHECK(m.ids(Split::test).size() == 1);
  CHECK(m.ids(Split::ood) == std::vector<std::string>{"ood0", "ood1"});

  SUBCASE("same seed gives the same assignment, another seed differs") {
    Manifest again = build_manifest(dir.path(), {8, 1, 1}, 7);
    for (auto s : {Split::train, Split::val, Split::test}) CHECK(again.ids(s) == m.ids(s));
    bool differs = false;
    for (std::uint64_t seed = 8; seed < 20 && !differs; ++seed) {
      differs = build_manifest(dir.path(), {8, 1, 1}, seed).ids(Split::val) != m.ids(Split::val);
    }
    CHECK(differs);
  }
  SUBCASE("stats come from the train split only") {
    REQUIRE(m.has_stats);
    for (const auto& id : m.ids(Split::val)) std::filesystem::remove(dir.path() / (id + ".fsl"));
    for (const auto& id : m.ids(Split::test)) std::filesystem::remove(dir.path() / (id + ".fsl"));
    std::filesystem::remove(dir.path() / "ood0.fsl");
    NormStats again = compute_norm_stats(m, dir.path());
    CHECK(again.fluid.quantity_mean == m.stats.fluid.quantity_mean);
    CHECK(again.fluid.quantity_std == m.stats.fluid.quantity_std);
    CHECK(again.interface.position_std == m.stats.interface.position_std);
    CHECK(again.condition_mean == m.stats.condition_mean);
  }
  SUBCASE("manifest file round trip") {
    const auto path = dir.path() / kManifestName;
    write_manifest(m, path);
    Manifest back = load_manifest(dir.path());
    CHECK(back.entries.size() == m.entries.size());
    for (auto s : {Split::train, Split::val, Split::test, Split::ood})
      CHECK(back.ids(s) == m.ids(s));
    CHECK(back.stats.fluid.quantity_mean == m.stats.fluid.quantity_mean);
    CHECK(back.stats.solid.position_std == m.stats.solid.position_std);
    CHECK(back.layout().interface_channels() == 2);
    CHECK(back.channels[0].at(0).name == "p");
  }
  SUBCASE("errors") {
    CHECK_THROWS(build_manifest(dir.path() / "missing", {8, 1, 1}, 1));
    CHECK_THROWS(build_manifest(dir.path(), {0, 0, 0}, 1));
    CHECK_THROWS(m.entry("nope"));
  }
}

TEST_CASE("checkpoint round trip") {
  TempDir dir("ckpt");
  Rng rng(62);
  ParameterStore store;
  store.add("a.weight", fisale::test::random_tensor({3, 4}, rng));
  store.add("a.bias", fisale::test::random_tensor({4}, rng), false);
  store.add("s", Tensor::scalar(-0.0));
  store.add("tiny", Tensor({2}, std::vector<double>{4.9e-324, -2.2250738585072014e-308}));
  const auto path = dir.path() / "m.ckpt";
  write_checkpoint(path, store);
  auto named = read_checkpoint(path);
  REQUIRE(named.size() == 4);
  CHECK(named[0].name == "a.weight");
  CHECK_FALSE(named[1].trainable);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(fisale::test::bit_equal(named[i].value, store.at(i).value));

  ParameterStore other;
  other.add("a.weight", Tensor({3, 4}));
  other.add("a.bias", Tensor({4}));
  other.add("s", Tensor::scalar(1.0));
  other.add("tiny", Tensor({2}));
  load_checkpoint(path, other);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(fisale::test::bit_equal(other.at(i).value, store.at(i).value));

  ParameterStore wrong;
  wrong.add("a.weight", Tensor({4, 3}));
  CHECK_THROWS(load_checkpoint(path, wrong));

  auto bytes = read_bytes(path);
  bytes[1] = 'X';
  write_bytes(path, bytes);
  CHECK_THROWS_AS(read_checkpoint(path), FormatError);
}
