#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hvp/nn.h"
#include "hvp/shapes_world.h"

namespace hvp::model {

// Architecture description. The VAN feature tensor is [m, s, s]; conv chains
// are stride-2 stages except the decoder, which upsamples x2 per stage.
struct NetSpec {
  int height = 32, width = 32, channels = 3;
  int d = 16;       // encoding dimension
  int s = 8, m = 12;
  int lstm_size = 48;
  int noise_dim = 4;
  std::vector<int> enc_channels{10, 16, 20};
  std::vector<int> img_channels{8, 12};
  std::vector<int> dec_channels{12, 8};

  void validate() const;
  bool operator==(const NetSpec&) const = default;
};

std::string net_spec_to_json(const NetSpec& s);
NetSpec net_spec_from_json(const std::string& s);

struct PredictorState {
  Tensor h, c;
};

struct VanOutput {
  Tensor raw;        // [C,H,W] in [0,1]
  Tensor mask;       // [1,H,W] in [0,1]
  Tensor composite;  // raw*mask + (1-mask)*first
};

// Elementwise convex combination per Eq-style compositing; exact for binary masks.
Tensor composite(const Tensor& raw, const Tensor& mask, const Tensor& first);

struct RolloutTrace {
  int encoder_calls = 0;
  // one entry per predictor step: true when the input was a context encoding
  std::vector<bool> used_context_input;
  size_t peak_tape_bytes = 0;
};

class FrameEncoder {
public:
  FrameEncoder() = default;
  FrameEncoder(const NetSpec& spec, Rng& rng);
  Value operator()(Tape& t, Value frame) const;
  void params(ParamList& out);

private:
  std::vector<Conv2d> convs_;
  Dense head_;
};

class Predictor {
public:
  Predictor() = default;
  Predictor(const NetSpec& spec, Rng& rng);

  struct StepOut {
    Value encoding;
    LSTMCell::State state;
  };
  // noise must be a length-noise_dim Value (zeros when unused).
  StepOut step(Tape& t, Value input, LSTMCell::State state, Value noise) const;
  LSTMCell::State zero_state(Tape& t) const;
  void params(ParamList& out);
  int state_size() const { return cell_.hidden; }

private:
  LSTMCell cell_;
  Dense out_;
};

class Van {
public:
  Van() = default;
  Van(const NetSpec& spec, Rng& rng);

  struct Out {
    Value raw, mask, composite;
  };

  Value encode_feat(Tape& t, Value encoding) const;  // f_enc: R^d -> [m,s,s]
  Value image_feat(Tape& t, Value frame) const;      // f_img: frame -> [m,s,s]

  // Eqs. 2-4. With analogy disabled the decoder sees only f_enc(e_target);
  // mask compositing against first_frame is kept either way. first_feat, when
  // defined, supplies a cached image_feat(first_frame).
  Out decode(Tape& t, Value e_first, Value e_target, Value first_frame,
             Value first_feat = Value(), bool analogy = true) const;

  void params(ParamList& out);

private:
  Dense fenc_fc_;
  Conv2d fenc_conv_;
  std::vector<Conv2d> fimg_;
  Conv2d fdiff_;
  Conv2d fana1_, fana2_;
  std::vector<Conv2d> fdec_;
  Conv2d fdec_out_;
  int m_ = 0, s_ = 0;
};

// Recurrent scorer over augmented encoding vectors; one scalar per step.
class Critic {
public:
  Critic() = default;
  Critic(const NetSpec& spec, Rng& rng);
  std::vector<Value> scores(Tape& t, const std::vector<Value>& aug_seq) const;
  void params(ParamList& out);
  static int aug_dim(const NetSpec& spec) { return spec.s * spec.s * spec.m + spec.d; }

private:
  Dense in_;
  LSTMCell cell_;
  Dense head_;
};

class Model {
public:
  Model(const NetSpec& spec, uint64_t init_seed);

  const NetSpec& spec() const { return spec_; }

  FrameEncoder& encoder() { return encoder_; }
  Predictor& predictor() { return predictor_; }
  Van& van() { return van_; }
  Critic& critic() { return critic_; }
  const FrameEncoder& encoder() const { return encoder_; }
  const Predictor& predictor() const { return predictor_; }
  const Van& van() const { return van_; }
  const Critic& critic() const { return critic_; }

  ParamList params() const;            // all parameters, fixed order
  ParamList generator_params() const;  // encoder + predictor + van
  ParamList critic_params() const;

  // Graph builder used by training loops; counts encoder invocations.
  Value encode_frame_g(Tape& t, Value frame) const;
  int64_t encode_calls() const { return encode_calls_; }

  // ---- tensor-level operations (inference mode) ----

  Tensor encode_frame(const Tensor& frame) const;
  Tensor encode_frame(const shapes::Image& frame) const;

  std::pair<Tensor, PredictorState> predictor_step(const Tensor& input,
                                                   const PredictorState& state,
                                                   const Tensor& noise) const;
  PredictorState initial_state() const;

  // Eq. 1 recurrence: steps 1..C consume context encodings, steps C+1..T the
  // model's previous output. Returns T predicted encodings.
  std::vector<Tensor> predict_encoding_sequence(const std::vector<Tensor>& context_encodings,
                                                int horizon,
                                                const std::vector<Tensor>& noise_seq = {},
                                                RolloutTrace* trace = nullptr) const;

  VanOutput van_decode(const Tensor& e_first, const Tensor& e_target,
                       const Tensor& first_frame) const;

  Tensor zero_noise() const { return Tensor({spec_.noise_dim}); }

private:
  NetSpec spec_;
  FrameEncoder encoder_;
  Predictor predictor_;
  Van van_;
  Critic critic_;
  mutable int64_t encode_calls_ = 0;
};

using FrameSink = std::function<void(int step, const VanOutput&)>;

// Streaming rollout: encodes the context frames once, free-runs the predictor
// and decodes each predicted encoding against (e_0, I_0). Peak memory is
// independent of horizon; frames are handed to the sink as they are produced.
void rollout_video(const Model& model, const std::vector<shapes::Image>& context_frames,
                   int horizon, const std::vector<Tensor>& noise_seq, const FrameSink& sink,
                   RolloutTrace* trace = nullptr);

// Convenience collector for short rollouts.
std::vector<VanOutput> rollout_video_collect(const Model& model,
                                             const std::vector<shapes::Image>& context_frames,
                                             int horizon,
                                             const std::vector<Tensor>& noise_seq = {},
                                             RolloutTrace* trace = nullptr);

}  // namespace hvp::model
