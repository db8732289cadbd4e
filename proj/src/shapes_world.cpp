#include "hvp/shapes_world.h"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

namespace hvp::shapes {

using nlohmann::json;

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::kCircle: return "circle";
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kTriangle: return "triangle";
  }
  return "circle";
}

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "circle") return ShapeKind::kCircle;
  if (s == "square") return ShapeKind::kSquare;
  if (s == "triangle") return ShapeKind::kTriangle;
  throw std::invalid_argument("unknown shape kind: " + s);
}

Tensor to_tensor(const Image& img) {
  Tensor t({img.channels, img.height, img.width});
  for (int64_t i = 0; i < img.size(); ++i) t[i] = static_cast<double>(img.data[static_cast<size_t>(i)]);
  return t;
}

Image to_image(const Tensor& t) {
  if (t.ndim() != 3) throw std::invalid_argument("to_image: expects CHW tensor");
  Image img(t.dim(0), t.dim(1), t.dim(2));
  for (int64_t i = 0; i < t.size(); ++i)
    img.data[static_cast<size_t>(i)] = static_cast<float>(t[i]);
  return img;
}

const std::vector<Color>& default_palette() {
  static const std::vector<Color> kPalette = {
      {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {0, 1, 1}, {1, 0, 1}};
  return kPalette;
}

void validate(const WorldConfig& world) {
  if (world.height < 16 || world.width < 16)
    throw InvalidSpecError("world: image must be at least 16x16");
  if (world.sequence_length < 1) throw InvalidSpecError("world: sequence_length must be >= 1");
}

void validate(const ShapeSpec& spec, const WorldConfig& world) {
  validate(world);
  if (spec.base_radius - spec.radius_amplitude < 1.0)
    throw InvalidSpecError("spec: base_radius - radius_amplitude must be >= 1 pixel");
  if (spec.radius_amplitude < 0.0) throw InvalidSpecError("spec: negative radius_amplitude");
  if (spec.radius_period < 2) throw InvalidSpecError("spec: radius_period must be >= 2");
  float cmax = std::max({spec.color[0], spec.color[1], spec.color[2]});
  if (cmax < 0.5f) throw InvalidSpecError("spec: color too close to black background");
  double rmax = spec.base_radius + spec.radius_amplitude;
  double half = (std::min(world.height, world.width) - 1) / 2.0;
  if (rmax > half - 0.5)
    throw InvalidSpecError("spec: shape cannot fit in the image at maximum radius");
  if (spec.x0 - spec.base_radius < 0.0 || spec.x0 + spec.base_radius > world.width - 1.0 ||
      spec.y0 - spec.base_radius < 0.0 || spec.y0 + spec.base_radius > world.height - 1.0)
    throw InvalidSpecError("spec: initial position lacks clearance for the initial radius");
}

double radius_at(const ShapeSpec& spec, int64_t t) {
  return spec.base_radius +
         spec.radius_amplitude * std::sin(kTwoPi * static_cast<double>(t) / spec.radius_period);
}

namespace {

// Mirror x into [lo, hi], flipping v on each wall contact.
void fold(double& x, double& v, double lo, double hi) {
  while (x < lo || x > hi) {
    if (x < lo) {
      x = 2.0 * lo - x;
      v = -v;
    } else {
      x = 2.0 * hi - x;
      v = -v;
    }
  }
}

}  // namespace

Trajectory simulate_trajectory(const ShapeSpec& spec, const WorldConfig& world, int steps) {
  validate(spec, world);
  Trajectory traj;
  traj.positions.reserve(static_cast<size_t>(steps));
  traj.radii.reserve(static_cast<size_t>(steps));
  double x = spec.x0, y = spec.y0, vx = spec.vx0, vy = spec.vy0;
  for (int k = 0; k < steps; ++k) {
    double r = radius_at(spec, k + 1);
    x += vx;
    y += vy;
    fold(x, vx, r, world.width - 1.0 - r);
    fold(y, vy, r, world.height - 1.0 - r);
    traj.positions.push_back({x, y});
    traj.radii.push_back(r);
  }
  return traj;
}

namespace {

bool inside_shape(ShapeKind kind, double dx, double dy, double r) {
  if (r <= 0.0) return false;
  switch (kind) {
    case ShapeKind::kCircle:
      return dx * dx + dy * dy < r * r;
    case ShapeKind::kSquare:
      return std::abs(dx) < r && std::abs(dy) < r;
    case ShapeKind::kTriangle: {
      // Equilateral, apex up (negative y in image coordinates), circumradius r.
      const double ax = 0.0, ay = -r;
      const double bx = r * 0.86602540378443864676, by = r * 0.5;
      const double cx = -bx, cy = by;
      auto edge = [](double px, double py, double qx, double qy, double tx, double ty) {
        return (qx - px) * (ty - py) - (qy - py) * (tx - px);
      };
      double w = edge(ax, ay, bx, by, cx, cy);
      return edge(ax, ay, bx, by, dx, dy) * w > 0.0 && edge(bx, by, cx, cy, dx, dy) * w > 0.0 &&
             edge(cx, cy, ax, ay, dx, dy) * w > 0.0;
    }
  }
  return false;
}

}  // namespace

Image render_frame(const ShapeSpec& spec, std::array<double, 2> position, double radius,
                   const WorldConfig& world) {
  Image img(3, world.height, world.width);
  for (int c = 0; c < 3; ++c)
    if (world.background[c] != 0.0f)
      std::fill(img.data.begin() + static_cast<size_t>(c) * world.height * world.width,
                img.data.begin() + static_cast<size_t>(c + 1) * world.height * world.width,
                world.background[c]);
  int y_lo = std::max(0, static_cast<int>(std::floor(position[1] - radius)) - 1);
  int y_hi = std::min(world.height - 1, static_cast<int>(std::ceil(position[1] + radius)) + 1);
  int x_lo = std::max(0, static_cast<int>(std::floor(position[0] - radius)) - 1);
  int x_hi = std::min(world.width - 1, static_cast<int>(std::ceil(position[0] + radius)) + 1);
  for (int y = y_lo; y <= y_hi; ++y)
    for (int x = x_lo; x <= x_hi; ++x)
      if (inside_shape(spec.kind, x - position[0], y - position[1], radius))
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = spec.color[static_cast<size_t>(c)];
  return img;
}

VideoSequence generate_sequence(const ShapeSpec& spec, const WorldConfig& world) {
  Trajectory traj = simulate_trajectory(spec, world, world.sequence_length);
  VideoSequence seq;
  seq.reserve(static_cast<size_t>(world.sequence_length));
  for (int t = 0; t < world.sequence_length; ++t)
    seq.push_back(render_frame(spec, traj.positions[static_cast<size_t>(t)],
                               traj.radii[static_cast<size_t>(t)], world));
  return seq;
}

ShapeSpec sample_spec(const WorldConfig& world, Rng& rng, const std::vector<Color>& palette) {
  double side = std::min(world.height, world.width);
  ShapeSpec spec;
  spec.kind = static_cast<ShapeKind>(rng.uniform_int(3));
  spec.color = palette[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(palette.size())))];
  spec.base_radius = rng.uniform(0.14, 0.19) * side;
  spec.radius_amplitude = rng.uniform(0.18, 0.28) * spec.base_radius;
  spec.radius_period = static_cast<int>(rng.uniform_int(21)) + 20;
  double speed = rng.uniform(0.025, 0.05) * side;
  double angle = rng.uniform(0.0, kTwoPi);
  spec.vx0 = speed * std::cos(angle);
  spec.vy0 = speed * std::sin(angle);
  double rmax = spec.base_radius + spec.radius_amplitude;
  spec.x0 = rng.uniform(rmax, world.width - 1.0 - rmax);
  spec.y0 = rng.uniform(rmax, world.height - 1.0 - rmax);
  validate(spec, world);
  return spec;
}

Dataset sample_dataset(const WorldConfig& world, int n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_dataset: n must be >= 1");
  validate(world);
  Dataset ds;
  ds.world = world;
  ds.palette = default_palette();
  ds.seed = seed;
  ds.specs.reserve(static_cast<size_t>(n));
  ds.sequences.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::derive(seed, static_cast<uint64_t>(i));
    ShapeSpec spec = sample_spec(world, rng, ds.palette);
    ds.specs.push_back(spec);
    ds.sequences.push_back(generate_sequence(spec, world));
  }
  return ds;
}

// ---- container ----

namespace {

constexpr char kMagic[8] = {'H', 'V', 'P', 'D', 'A', 'T', 'A', '1'};

json spec_to_json(const ShapeSpec& s) {
  return json{{"kind", to_string(s.kind)},
              {"color", {s.color[0], s.color[1], s.color[2]}},
              {"base_radius", s.base_radius},
              {"radius_amplitude", s.radius_amplitude},
              {"radius_period", s.radius_period},
              {"position", {s.x0, s.y0}},
              {"velocity", {s.vx0, s.vy0}}};
}

ShapeSpec spec_from_json(const json& j) {
  ShapeSpec s;
  s.kind = shape_kind_from_string(j.at("kind").get<std::string>());
  auto c = j.at("color");
  s.color = {c.at(0).get<float>(), c.at(1).get<float>(), c.at(2).get<float>()};
  s.base_radius = j.at("base_radius").get<double>();
  s.radius_amplitude = j.at("radius_amplitude").get<double>();
  s.radius_period = j.at("radius_period").get<int>();
  s.x0 = j.at("position").at(0).get<double>();
  s.y0 = j.at("position").at(1).get<double>();
  s.vx0 = j.at("velocity").at(0).get<double>();
  s.vy0 = j.at("velocity").at(1).get<double>();
  return s;
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot open for writing: " + path);

  int n = static_cast<int>(ds.sequences.size());
  int T = ds.world.sequence_length;
  int H = ds.world.height, W = ds.world.width, C = 3;

  json palette = json::array();
  for (const auto& c : ds.palette) palette.push_back({c[0], c[1], c[2]});
  json specs = json::array();
  for (const auto& s : ds.specs) specs.push_back(spec_to_json(s));
  json meta{{"n", n},      {"T", T},          {"H", H},
            {"W", W},      {"C", C},          {"palette", palette},
            {"seed", ds.seed}, {"specs", specs},
            {"background", {ds.world.background[0], ds.world.background[1], ds.world.background[2]}}};
  std::string meta_str = meta.dump();

  out.write(kMagic, 8);
  uint32_t len = static_cast<uint32_t>(meta_str.size());
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  // CHW in memory -> HWC on disk.
  std::vector<float> row(static_cast<size_t>(W) * C);
  for (const auto& seq : ds.sequences) {
    if (static_cast<int>(seq.size()) != T)
      throw ShapeMismatchError("write_dataset: sequence length differs from world config");
    for (const auto& img : seq) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x)
          for (int c = 0; c < C; ++c) row[static_cast<size_t>(x) * C + c] = img.at(c, y, x);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
      }
    }
  }
  if (!out) throw DatasetError("write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open for reading: " + path);
  in.seekg(0, std::ios::end);
  int64_t file_size = in.tellg();
  in.seekg(0);

  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw CorruptHeaderError("bad magic in " + path);
  uint32_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), 4) || 8 + 4 + static_cast<int64_t>(len) > file_size)
    throw CorruptHeaderError("metadata length exceeds file size");
  std::string meta_str(len, '\0');
  if (!in.read(meta_str.data(), len)) throw CorruptHeaderError("metadata block truncated");

  json meta;
  try {
    meta = json::parse(meta_str);
  } catch (const json::exception& e) {
    throw CorruptHeaderError(std::string("metadata is not valid JSON: ") + e.what());
  }

  Dataset ds;
  int n, T, H, W, C;
  try {
    n = meta.at("n").get<int>();
    T = meta.at("T").get<int>();
    H = meta.at("H").get<int>();
    W = meta.at("W").get<int>();
    C = meta.at("C").get<int>();
    ds.seed = meta.at("seed").get<uint64_t>();
    for (const auto& c : meta.at("palette"))
      ds.palette.push_back({c.at(0).get<float>(), c.at(1).get<float>(), c.at(2).get<float>()});
    for (const auto& s : meta.at("specs")) ds.specs.push_back(spec_from_json(s));
    if (meta.contains("background")) {
      auto b = meta.at("background");
      ds.world.background = {b.at(0).get<float>(), b.at(1).get<float>(), b.at(2).get<float>()};
    }
  } catch (const json::exception& e) {
    throw CorruptHeaderError(std::string("metadata missing fields: ") + e.what());
  }
  if (n < 0 || T < 1 || H < 1 || W < 1 || C != 3 ||
      static_cast<int>(ds.specs.size()) != n)
    throw ShapeMismatchError("metadata geometry is inconsistent");

  ds.world.height = H;
  ds.world.width = W;
  ds.world.sequence_length = T;
  ds.world.seed = ds.seed;

  int64_t frame_vals = static_cast<int64_t>(H) * W * C;
  int64_t seq_bytes = frame_vals * T * 4;
  int64_t expected = seq_bytes * n;
  int64_t remaining = file_size - 12 - static_cast<int64_t>(len);
  if (remaining != expected) {
    if (remaining < expected && remaining % seq_bytes != 0)
      throw TruncatedPayloadError("payload ends mid-sequence");
    throw ShapeMismatchError("header geometry disagrees with payload size");
  }

  std::vector<float> row(static_cast<size_t>(W) * C);
  ds.sequences.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    VideoSequence seq;
    seq.reserve(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
      Image img(C, H, W);
      for (int y = 0; y < H; ++y) {
        if (!in.read(reinterpret_cast<char*>(row.data()),
                     static_cast<std::streamsize>(row.size() * sizeof(float))))
          throw TruncatedPayloadError("payload ends mid-frame");
        for (int x = 0; x < W; ++x)
          for (int c = 0; c < C; ++c) img.at(c, y, x) = row[static_cast<size_t>(x) * C + c];
      }
      seq.push_back(std::move(img));
    }
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

}  // namespace hvp::shapes
