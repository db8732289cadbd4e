#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "hvp/shapes_world.h"

using namespace hvp;
using namespace hvp::shapes;

namespace {

WorldConfig world64() {
  WorldConfig w;
  w.height = 64;
  w.width = 64;
  w.sequence_length = 8;
  return w;
}

ShapeSpec centered_spec() {
  ShapeSpec s;
  s.kind = ShapeKind::kCircle;
  s.color = {1, 0, 0};
  s.base_radius = 5;
  s.radius_amplitude = 1;
  s.radius_period = 16;
  s.x0 = 32;
  s.y0 = 32;
  s.vx0 = 1;
  s.vy0 = 1;
  return s;
}

std::string temp_path(const char* name) {
  return std::string("/tmp/hvp_test_") + name;
}

bool file_bytes_equal(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return !sa.empty() && sa == sb;
}

}  // namespace

TEST_CASE("free motion integrates position per frame") {
  auto traj = simulate_trajectory(centered_spec(), world64(), 3);
  REQUIRE(traj.positions.size() == 3);
  CHECK(traj.positions[0][0] == doctest::Approx(33.0));
  CHECK(traj.positions[0][1] == doctest::Approx(33.0));
  CHECK(traj.positions[1][0] == doctest::Approx(34.0));
  CHECK(traj.positions[2][0] == doctest::Approx(35.0));
  CHECK(traj.positions[2][1] == doctest::Approx(35.0));
}

TEST_CASE("left wall contact flips velocity and re-enters bounds") {
  ShapeSpec s = centered_spec();
  s.radius_amplitude = 0;
  s.x0 = s.base_radius;  // touching the left wall
  s.vx0 = -1.5;
  s.vy0 = 0;
  auto traj = simulate_trajectory(s, world64(), 4);
  // After one step x would be r - 1.5; it must be mirrored back inside.
  CHECK(traj.positions[0][0] >= s.base_radius);
  // Velocity flipped: subsequent frames move right.
  CHECK(traj.positions[1][0] > traj.positions[0][0]);
  CHECK(traj.positions[2][0] > traj.positions[1][0]);
}

TEST_CASE("long trajectory stays in bounds for every frame") {
  WorldConfig w = world64();
  ShapeSpec s = centered_spec();
  s.vx0 = 1.7;
  s.vy0 = -0.9;
  auto traj = simulate_trajectory(s, w, 1100);
  REQUIRE(traj.positions.size() == 1100);
  for (size_t k = 0; k < traj.positions.size(); ++k) {
    double r = traj.radii[k];
    CHECK(traj.positions[k][0] - r >= 0.0);
    CHECK(traj.positions[k][0] + r <= w.width - 1.0);
    CHECK(traj.positions[k][1] - r >= 0.0);
    CHECK(traj.positions[k][1] + r <= w.height - 1.0);
  }
}

TEST_CASE("radius oscillates with the configured period") {
  ShapeSpec s = centered_spec();
  for (int t = 1; t < 40; ++t)
    CHECK(radius_at(s, t) == doctest::Approx(radius_at(s, t + s.radius_period)).epsilon(1e-6));
}

TEST_CASE("oversized shape is rejected") {
  ShapeSpec s = centered_spec();
  s.base_radius = 40;
  CHECK_THROWS_AS(simulate_trajectory(s, world64(), 1), InvalidSpecError);
}

TEST_CASE("zero radius renders pure background") {
  WorldConfig w = world64();
  Image img = render_frame(centered_spec(), {32, 32}, 0.0, w);
  for (float v : img.data) CHECK(v == 0.0f);
}

TEST_CASE("center pixel takes the shape color") {
  WorldConfig w = world64();
  ShapeSpec s = centered_spec();
  Image img = render_frame(s, {10, 10}, 4.0, w);
  CHECK(img.at(0, 10, 10) == 1.0f);
  CHECK(img.at(1, 10, 10) == 0.0f);
  CHECK(img.at(2, 10, 10) == 0.0f);
}

TEST_CASE("circle pixel count tracks pi r^2") {
  WorldConfig w = world64();
  ShapeSpec s = centered_spec();
  for (double r : {4.0, 5.5, 8.0, 11.0}) {
    Image img = render_frame(s, {31.3, 30.7}, r, w);
    int count = 0;
    for (int y = 0; y < w.height; ++y)
      for (int x = 0; x < w.width; ++x)
        if (img.at(0, y, x) > 0.5f) ++count;
    double expect = 3.14159265358979 * r * r;
    CHECK(std::abs(count - expect) <= 0.2 * expect);
  }
}

TEST_CASE("sequence of one frame equals first trajectory render") {
  WorldConfig w = world64();
  w.sequence_length = 1;
  ShapeSpec s = centered_spec();
  auto seq = generate_sequence(s, w);
  REQUIRE(seq.size() == 1);
  auto traj = simulate_trajectory(s, w, 1);
  Image ref = render_frame(s, traj.positions[0], traj.radii[0], w);
  CHECK(seq[0].data == ref.data);
}

TEST_CASE("generation is deterministic") {
  WorldConfig w = world64();
  ShapeSpec s = centered_spec();
  auto a = generate_sequence(s, w);
  auto b = generate_sequence(s, w);
  REQUIRE(a.size() == b.size());
  for (size_t t = 0; t < a.size(); ++t) CHECK(a[t].data == b[t].data);
}

TEST_CASE("static world repeats one frame") {
  WorldConfig w = world64();
  ShapeSpec s = centered_spec();
  s.vx0 = 0;
  s.vy0 = 0;
  s.radius_amplitude = 0;
  auto seq = generate_sequence(s, w);
  for (size_t t = 1; t < seq.size(); ++t) CHECK(seq[t].data == seq[0].data);
}

TEST_CASE("sample_dataset reproducible and palette-restricted") {
  WorldConfig w;
  w.height = 32;
  w.width = 32;
  w.sequence_length = 6;
  auto a = sample_dataset(w, 3, 42);
  auto b = sample_dataset(w, 3, 42);
  REQUIRE(a.specs.size() == 3);
  for (size_t i = 0; i < a.specs.size(); ++i) {
    CHECK(a.specs[i].x0 == b.specs[i].x0);
    CHECK(a.specs[i].color == b.specs[i].color);
    for (size_t t = 0; t < a.sequences[i].size(); ++t)
      CHECK(a.sequences[i][t].data == b.sequences[i][t].data);
    bool in_palette = false;
    for (const auto& c : default_palette()) in_palette = in_palette || c == a.specs[i].color;
    CHECK(in_palette);
  }
}

TEST_CASE("sampled trajectories satisfy bounds over many draws") {
  WorldConfig w;
  w.height = 32;
  w.width = 32;
  w.sequence_length = 40;
  auto ds = sample_dataset(w, 60, 7);
  for (const auto& spec : ds.specs) {
    auto traj = simulate_trajectory(spec, w, w.sequence_length);
    for (size_t k = 0; k < traj.positions.size(); ++k) {
      double r = traj.radii[k];
      REQUIRE(traj.positions[k][0] - r >= 0.0);
      REQUIRE(traj.positions[k][0] + r <= w.width - 1.0);
      REQUIRE(traj.positions[k][1] - r >= 0.0);
      REQUIRE(traj.positions[k][1] + r <= w.height - 1.0);
    }
  }
}

TEST_CASE("dataset round-trip is bit-identical") {
  WorldConfig w;
  w.height = 32;
  w.width = 32;
  w.sequence_length = 5;
  auto ds = sample_dataset(w, 4, 11);
  std::string p = temp_path("roundtrip.bin");
  write_dataset(p, ds);
  auto rd = read_dataset(p);
  REQUIRE(rd.sequences.size() == ds.sequences.size());
  CHECK(rd.seed == ds.seed);
  CHECK(rd.palette == ds.palette);
  for (size_t i = 0; i < ds.sequences.size(); ++i) {
    CHECK(rd.specs[i].base_radius == ds.specs[i].base_radius);
    CHECK(rd.specs[i].kind == ds.specs[i].kind);
    for (size_t t = 0; t < ds.sequences[i].size(); ++t)
      CHECK(rd.sequences[i][t].data == ds.sequences[i][t].data);
  }

  // Writing the same dataset twice yields byte-identical files.
  std::string p2 = temp_path("roundtrip2.bin");
  write_dataset(p2, ds);
  CHECK(file_bytes_equal(p, p2));
  std::remove(p2.c_str());
  std::remove(p.c_str());
}

TEST_CASE("container errors are distinct") {
  WorldConfig w;
  w.height = 32;
  w.width = 32;
  w.sequence_length = 3;
  auto ds = sample_dataset(w, 2, 5);
  std::string p = temp_path("errors.bin");
  write_dataset(p, ds);

  std::ifstream in(p, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  SUBCASE("corrupt magic") {
    std::string bad = bytes;
    bad[0] = 'X';
    std::string pb = temp_path("bad_magic.bin");
    std::ofstream(pb, std::ios::binary).write(bad.data(), static_cast<std::streamsize>(bad.size()));
    CHECK_THROWS_AS(read_dataset(pb), CorruptHeaderError);
    std::remove(pb.c_str());
  }
  SUBCASE("truncated payload") {
    std::string bad = bytes.substr(0, bytes.size() - 37);
    std::string pb = temp_path("truncated.bin");
    std::ofstream(pb, std::ios::binary).write(bad.data(), static_cast<std::streamsize>(bad.size()));
    CHECK_THROWS_AS(read_dataset(pb), TruncatedPayloadError);
    std::remove(pb.c_str());
  }
  SUBCASE("header claims more data than payload holds") {
    // Double T in the JSON header while keeping the payload.
    size_t len_pos = 8;
    uint32_t len;
    std::memcpy(&len, bytes.data() + len_pos, 4);
    std::string meta = bytes.substr(12, len);
    auto pos = meta.find("\"T\":3");
    REQUIRE(pos != std::string::npos);
    meta.replace(pos, 5, "\"T\":6");
    std::string bad = bytes.substr(0, 8);
    bad.append(reinterpret_cast<const char*>(&len), 4);
    bad += meta;
    bad += bytes.substr(12 + len);
    std::string pb = temp_path("mismatch.bin");
    std::ofstream(pb, std::ios::binary).write(bad.data(), static_cast<std::streamsize>(bad.size()));
    CHECK_THROWS_AS(read_dataset(pb), ShapeMismatchError);
    std::remove(pb.c_str());
  }
  std::remove(p.c_str());
}
