#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hvp/rng.h"
#include "hvp/tensor.h"

namespace hvp::shapes {

enum class ShapeKind { kCircle, kSquare, kTriangle };

const char* to_string(ShapeKind k);
ShapeKind shape_kind_from_string(const std::string& s);

using Color = std::array<float, 3>;

struct ShapeSpec {
  ShapeKind kind = ShapeKind::kCircle;
  Color color{1.0f, 0.0f, 0.0f};
  double base_radius = 5.0;
  double radius_amplitude = 1.0;
  int radius_period = 32;
  double x0 = 16.0, y0 = 16.0;   // subpixel initial position
  double vx0 = 1.0, vy0 = 0.5;   // pixels per frame
};

struct WorldConfig {
  int height = 32, width = 32;
  Color background{0.0f, 0.0f, 0.0f};
  int sequence_length = 20;
  uint64_t seed = 0;
};

struct Trajectory {
  std::vector<std::array<double, 2>> positions;  // (x, y) per frame
  std::vector<double> radii;
};

// One frame, CHW float32, values in [0,1].
struct Image {
  int channels = 0, height = 0, width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w) : channels(c), height(h), width(w) {
    data.assign(static_cast<size_t>(c) * h * w, 0.0f);
  }
  float& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  int64_t size() const { return static_cast<int64_t>(data.size()); }
};

using VideoSequence = std::vector<Image>;

Tensor to_tensor(const Image& img);
Image to_image(const Tensor& t);

struct Dataset {
  WorldConfig world;
  std::vector<Color> palette;
  uint64_t seed = 0;
  std::vector<ShapeSpec> specs;
  std::vector<VideoSequence> sequences;
};

// Saturated 6-color palette on a black background.
const std::vector<Color>& default_palette();

class InvalidSpecError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Dataset container errors, one class per failure mode.
class DatasetError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class CorruptHeaderError : public DatasetError {
  using DatasetError::DatasetError;
};
class ShapeMismatchError : public DatasetError {
  using DatasetError::DatasetError;
};
class TruncatedPayloadError : public DatasetError {
  using DatasetError::DatasetError;
};

// Throws InvalidSpecError unless the shape fits at maximum radius with at
// least one pixel of bounce clearance and the initial state is in bounds.
void validate(const ShapeSpec& spec, const WorldConfig& world);
void validate(const WorldConfig& world);

// Radius law shared by the simulator and its tests.
double radius_at(const ShapeSpec& spec, int64_t t);

// Entry k holds the state after k+1 integration steps (positions move before
// the first stored frame). Specular reflection keeps position +- radius inside
// [0, W-1] x [0, H-1] for the radius active at that frame.
Trajectory simulate_trajectory(const ShapeSpec& spec, const WorldConfig& world, int steps);

// Hard-edged rasterization: a pixel takes spec.color iff its center (integer
// coordinates) lies strictly inside the shape.
Image render_frame(const ShapeSpec& spec, std::array<double, 2> position, double radius,
                   const WorldConfig& world);

VideoSequence generate_sequence(const ShapeSpec& spec, const WorldConfig& world);

// Distribution: kind uniform over the three shapes; color uniform over the
// palette; base radius U[0.14, 0.19]*min(H,W); amplitude U[0.18, 0.28]*base;
// period uniform int [20, 40]; speed U[0.025, 0.05]*min(H,W) at a uniform
// angle; position uniform inside the valid region at maximum radius.
ShapeSpec sample_spec(const WorldConfig& world, Rng& rng,
                      const std::vector<Color>& palette = default_palette());

Dataset sample_dataset(const WorldConfig& world, int n, uint64_t seed);

// Binary container: 8-byte magic "HVPDATA1", u32 little-endian JSON length,
// JSON metadata {n,T,H,W,C,palette,seed,specs}, then n*T*H*W*C float32
// little-endian values in sequence-major, frame-major, row-major (HWC) order.
// A payload shorter than the header claims raises TruncatedPayloadError when
// the cut is mid-sequence and ShapeMismatchError when the header geometry
// itself disagrees with a whole number of stored sequences.
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

}  // namespace hvp::shapes
