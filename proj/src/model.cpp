#include "hvp/model.h"

#include <json.hpp>

namespace hvp::model {

using nlohmann::json;

void NetSpec::validate() const {
  if (height != width) throw std::invalid_argument("NetSpec: square images required");
  if (channels != 3) throw std::invalid_argument("NetSpec: 3-channel images required");
  if (d < 1 || m < 1 || s < 1 || lstm_size < 1 || noise_dim < 0)
    throw std::invalid_argument("NetSpec: non-positive dimension");
  if (enc_channels.empty() || img_channels.empty() || dec_channels.empty())
    throw std::invalid_argument("NetSpec: empty conv chain");
  int enc_spatial = height >> enc_channels.size();
  if (enc_spatial < 1 || (enc_spatial << enc_channels.size()) != height)
    throw std::invalid_argument("NetSpec: enc_channels do not divide the image size");
  if ((height >> img_channels.size()) != s)
    throw std::invalid_argument("NetSpec: img_channels must reduce the image to s");
  if (img_channels.back() != m)
    throw std::invalid_argument("NetSpec: img_channels must end at depth m");
  if ((s << dec_channels.size()) != height)
    throw std::invalid_argument("NetSpec: dec_channels must expand s back to the image size");
}

std::string net_spec_to_json(const NetSpec& s) {
  json j{{"height", s.height},       {"width", s.width},
         {"channels", s.channels},   {"d", s.d},
         {"s", s.s},                 {"m", s.m},
         {"lstm_size", s.lstm_size}, {"noise_dim", s.noise_dim},
         {"enc_channels", s.enc_channels},
         {"img_channels", s.img_channels},
         {"dec_channels", s.dec_channels}};
  return j.dump();
}

NetSpec net_spec_from_json(const std::string& text) {
  json j = json::parse(text);
  NetSpec s;
  s.height = j.at("height").get<int>();
  s.width = j.at("width").get<int>();
  s.channels = j.at("channels").get<int>();
  s.d = j.at("d").get<int>();
  s.s = j.at("s").get<int>();
  s.m = j.at("m").get<int>();
  s.lstm_size = j.at("lstm_size").get<int>();
  s.noise_dim = j.at("noise_dim").get<int>();
  s.enc_channels = j.at("enc_channels").get<std::vector<int>>();
  s.img_channels = j.at("img_channels").get<std::vector<int>>();
  s.dec_channels = j.at("dec_channels").get<std::vector<int>>();
  return s;
}

Tensor composite(const Tensor& raw, const Tensor& mask, const Tensor& first) {
  if (!raw.same_shape(first)) throw std::invalid_argument("composite: frame shape mismatch");
  if (raw.ndim() != 3 || mask.ndim() != 3 || mask.dim(0) != 1 || mask.dim(1) != raw.dim(1) ||
      mask.dim(2) != raw.dim(2))
    throw std::invalid_argument("composite: mask shape mismatch");
  int C = raw.dim(0);
  int64_t hw = static_cast<int64_t>(raw.dim(1)) * raw.dim(2);
  Tensor out(raw.shape());
  for (int c = 0; c < C; ++c)
    for (int64_t i = 0; i < hw; ++i) {
      double m = mask[i];
      out[c * hw + i] = raw[c * hw + i] * m + (1.0 - m) * first[c * hw + i];
    }
  return out;
}

// ---- FrameEncoder ----

FrameEncoder::FrameEncoder(const NetSpec& spec, Rng& rng) {
  int in_ch = spec.channels;
  for (size_t i = 0; i < spec.enc_channels.size(); ++i) {
    convs_.emplace_back("encoder.conv" + std::to_string(i), in_ch, spec.enc_channels[i], 3, 2,
                        1, rng);
    in_ch = spec.enc_channels[i];
  }
  int spatial = spec.height >> spec.enc_channels.size();
  head_ = Dense("encoder.head", in_ch * spatial * spatial, spec.d, rng);
}

Value FrameEncoder::operator()(Tape& t, Value frame) const {
  Value h = frame;
  for (const auto& c : convs_) h = leaky_relu(c(t, h));
  return tanh_(head_(t, h));
}

void FrameEncoder::params(ParamList& out) {
  for (auto& c : convs_) c.params(out);
  head_.params(out);
}

// ---- Predictor ----

Predictor::Predictor(const NetSpec& spec, Rng& rng) {
  cell_ = LSTMCell("predictor.lstm", spec.d + spec.noise_dim, spec.lstm_size, rng);
  out_ = Dense("predictor.out", spec.lstm_size, spec.d, rng);
}

Predictor::StepOut Predictor::step(Tape& t, Value input, LSTMCell::State state,
                                   Value noise) const {
  Value x = noise.defined() && noise.val().size() > 0 ? concat(input, noise) : input;
  auto s = cell_.step(t, x, state);
  return {tanh_(out_(t, s.h)), s};
}

LSTMCell::State Predictor::zero_state(Tape& t) const { return cell_.zero_state(t); }

void Predictor::params(ParamList& out) {
  cell_.params(out);
  out_.params(out);
}

// ---- Van ----

Van::Van(const NetSpec& spec, Rng& rng) : m_(spec.m), s_(spec.s) {
  fenc_fc_ = Dense("van.fenc_fc", spec.d, spec.m * spec.s * spec.s, rng);
  fenc_conv_ = Conv2d("van.fenc_conv", spec.m, spec.m, 3, 1, 1, rng, false);
  int in_ch = spec.channels;
  for (size_t i = 0; i < spec.img_channels.size(); ++i) {
    fimg_.emplace_back("van.fimg" + std::to_string(i), in_ch, spec.img_channels[i], 3, 2, 1,
                       rng, i + 1 < spec.img_channels.size());
    in_ch = spec.img_channels[i];
  }
  fdiff_ = Conv2d("van.fdiff", spec.m, spec.m, 3, 1, 1, rng, false);
  fana1_ = Conv2d("van.fana1", 2 * spec.m, spec.m, 3, 1, 1, rng);
  fana2_ = Conv2d("van.fana2", spec.m, spec.m, 3, 1, 1, rng, false);
  in_ch = spec.m;
  for (size_t i = 0; i < spec.dec_channels.size(); ++i) {
    fdec_.emplace_back("van.fdec" + std::to_string(i), in_ch, spec.dec_channels[i], 3, 1, 1,
                       rng);
    in_ch = spec.dec_channels[i];
  }
  fdec_out_ = Conv2d("van.fdec_out", in_ch, spec.channels + 1, 3, 1, 1, rng, false);
}

Value Van::encode_feat(Tape& t, Value encoding) const {
  Value h = leaky_relu(fenc_fc_(t, encoding));
  return fenc_conv_(t, reshape(h, {m_, s_, s_}));
}

Value Van::image_feat(Tape& t, Value frame) const {
  Value h = frame;
  for (size_t i = 0; i < fimg_.size(); ++i) {
    h = fimg_[i](t, h);
    if (i + 1 < fimg_.size()) h = leaky_relu(h);
  }
  return h;
}

Van::Out Van::decode(Tape& t, Value e_first, Value e_target, Value first_frame,
                     Value first_feat, bool analogy) const {
  Value zf = encode_feat(t, e_target);
  Value dec_in = zf;
  if (analogy) {
    Value yf = encode_feat(t, e_first);
    Value xf = first_feat.defined() ? first_feat : image_feat(t, first_frame);
    Value diff = fdiff_(t, sub(xf, yf));
    Value ana = fana2_(t, leaky_relu(fana1_(t, reshape(concat(diff, zf), {2 * m_, s_, s_}))));
    dec_in = add(zf, ana);
  }
  Value h = dec_in;
  for (const auto& c : fdec_) h = leaky_relu(c(t, upsample2(h)));
  Value out = sigmoid(fdec_out_(t, h));
  int C = first_frame.val().dim(0);
  int H = out.val().dim(1), W = out.val().dim(2);
  Value raw = reshape(slice(reshape(out, {(C + 1) * H * W}), 0, static_cast<int64_t>(C) * H * W),
                      {C, H, W});
  Value mask = reshape(
      slice(reshape(out, {(C + 1) * H * W}), static_cast<int64_t>(C) * H * W, static_cast<int64_t>(H) * W),
      {1, H, W});
  Value comp = add(cmul(raw, mask), cmul(first_frame, affine(mask, -1.0, 1.0)));
  return {raw, mask, comp};
}

void Van::params(ParamList& out) {
  fenc_fc_.params(out);
  fenc_conv_.params(out);
  for (auto& c : fimg_) c.params(out);
  fdiff_.params(out);
  fana1_.params(out);
  fana2_.params(out);
  for (auto& c : fdec_) c.params(out);
  fdec_out_.params(out);
}

// ---- Critic ----

Critic::Critic(const NetSpec& spec, Rng& rng) {
  in_ = Dense("critic.in", aug_dim(spec), spec.lstm_size, rng);
  cell_ = LSTMCell("critic.lstm", spec.lstm_size, spec.lstm_size, rng);
  head_ = Dense("critic.head", spec.lstm_size, 1, rng);
}

std::vector<Value> Critic::scores(Tape& t, const std::vector<Value>& aug_seq) const {
  std::vector<Value> out;
  out.reserve(aug_seq.size());
  auto state = cell_.zero_state(t);
  for (const Value& x : aug_seq) {
    Value h = leaky_relu(in_(t, x));
    state = cell_.step(t, h, state);
    out.push_back(head_(t, state.h));
  }
  return out;
}

void Critic::params(ParamList& out) {
  in_.params(out);
  cell_.params(out);
  head_.params(out);
}

// ---- Model ----

Model::Model(const NetSpec& spec, uint64_t init_seed) : spec_(spec) {
  spec_.validate();
  Rng rng(init_seed);
  encoder_ = FrameEncoder(spec_, rng);
  predictor_ = Predictor(spec_, rng);
  van_ = Van(spec_, rng);
  critic_ = Critic(spec_, rng);
}

ParamList Model::params() const {
  ParamList ps = generator_params();
  ParamList cs = critic_params();
  ps.insert(ps.end(), cs.begin(), cs.end());
  return ps;
}

ParamList Model::generator_params() const {
  ParamList ps;
  const_cast<FrameEncoder&>(encoder_).params(ps);
  const_cast<Predictor&>(predictor_).params(ps);
  const_cast<Van&>(van_).params(ps);
  return ps;
}

ParamList Model::critic_params() const {
  ParamList ps;
  const_cast<Critic&>(critic_).params(ps);
  return ps;
}

Value Model::encode_frame_g(Tape& t, Value frame) const {
  const Tensor& f = frame.val();
  if (f.ndim() != 3 || f.dim(0) != spec_.channels || f.dim(1) != spec_.height ||
      f.dim(2) != spec_.width)
    throw std::invalid_argument("encode_frame: frame shape " + f.shape_str() +
                                " does not match the configured geometry");
  ++encode_calls_;
  return encoder_(t, frame);
}

Tensor Model::encode_frame(const Tensor& frame) const {
  Tape t;
  return encode_frame_g(t, t.input(frame)).val();
}

Tensor Model::encode_frame(const shapes::Image& frame) const {
  return encode_frame(shapes::to_tensor(frame));
}

PredictorState Model::initial_state() const {
  return {Tensor({spec_.lstm_size}), Tensor({spec_.lstm_size})};
}

std::pair<Tensor, PredictorState> Model::predictor_step(const Tensor& input,
                                                        const PredictorState& state,
                                                        const Tensor& noise) const {
  if (static_cast<int>(input.size()) != spec_.d)
    throw std::invalid_argument("predictor_step: input must have length d");
  if (static_cast<int>(noise.size()) != spec_.noise_dim)
    throw std::invalid_argument("predictor_step: noise must have length noise_dim");
  Tape t;
  auto out = predictor_.step(t, t.input(input), {t.input(state.h), t.input(state.c)},
                             t.input(noise));
  return {out.encoding.val(), {out.state.h.val(), out.state.c.val()}};
}

std::vector<Tensor> Model::predict_encoding_sequence(
    const std::vector<Tensor>& context_encodings, int horizon,
    const std::vector<Tensor>& noise_seq, RolloutTrace* trace) const {
  const int C = static_cast<int>(context_encodings.size());
  if (C < 1) throw std::invalid_argument("predict_encoding_sequence: empty context");
  if (horizon < C)
    throw std::invalid_argument("predict_encoding_sequence: horizon must be >= context length");
  std::vector<Tensor> out;
  out.reserve(static_cast<size_t>(horizon));
  PredictorState state = initial_state();
  Tensor zero = zero_noise();
  for (int t = 1; t <= horizon; ++t) {
    const Tensor& input =
        t <= C ? context_encodings[static_cast<size_t>(t - 1)] : out.back();
    const Tensor& noise =
        noise_seq.empty() ? zero : noise_seq[static_cast<size_t>(t - 1) % noise_seq.size()];
    auto [enc, st] = predictor_step(input, state, noise);
    state = st;
    if (trace) trace->used_context_input.push_back(t <= C);
    out.push_back(std::move(enc));
  }
  return out;
}

VanOutput Model::van_decode(const Tensor& e_first, const Tensor& e_target,
                            const Tensor& first_frame) const {
  if (static_cast<int>(e_first.size()) != spec_.d ||
      static_cast<int>(e_target.size()) != spec_.d)
    throw std::invalid_argument("van_decode: encodings must have length d");
  Tape t;
  auto out = van_.decode(t, t.input(e_first), t.input(e_target), t.input(first_frame));
  return {out.raw.val(), out.mask.val(), out.composite.val()};
}

void rollout_video(const Model& model, const std::vector<shapes::Image>& context_frames,
                   int horizon, const std::vector<Tensor>& noise_seq, const FrameSink& sink,
                   RolloutTrace* trace) {
  const int C = static_cast<int>(context_frames.size());
  if (C < 1) throw std::invalid_argument("rollout_video: empty context");
  if (horizon < C) throw std::invalid_argument("rollout_video: horizon must be >= context");

  int64_t enc_calls_before = model.encode_calls();
  std::vector<Tensor> context_encodings;
  context_encodings.reserve(static_cast<size_t>(C));
  for (const auto& img : context_frames)
    context_encodings.push_back(model.encode_frame(img));

  Tensor first_frame = shapes::to_tensor(context_frames[0]);
  Tensor first_feat;
  {
    Tape t;
    first_feat = model.van().image_feat(t, t.input(first_frame)).val();
  }
  const Tensor& e_first = context_encodings[0];

  PredictorState state = model.initial_state();
  Tensor prev_encoding;
  Tensor zero = model.zero_noise();
  Tape t;
  size_t peak = 0;
  for (int step = 1; step <= horizon; ++step) {
    t.reset();
    const Tensor& input =
        step <= C ? context_encodings[static_cast<size_t>(step - 1)] : prev_encoding;
    const Tensor& noise =
        noise_seq.empty() ? zero : noise_seq[static_cast<size_t>(step - 1) % noise_seq.size()];
    auto pred = model.predictor().step(t, t.input(input), {t.input(state.h), t.input(state.c)},
                                       t.input(noise));
    auto dec = model.van().decode(t, t.input(e_first), pred.encoding, t.input(first_frame),
                                  t.input(first_feat));
    state = {pred.state.h.val(), pred.state.c.val()};
    prev_encoding = pred.encoding.val();
    if (trace) trace->used_context_input.push_back(step <= C);
    peak = std::max(peak, t.live_bytes());
    sink(step, VanOutput{dec.raw.val(), dec.mask.val(), dec.composite.val()});
  }
  if (trace) {
    trace->encoder_calls = static_cast<int>(model.encode_calls() - enc_calls_before);
    trace->peak_tape_bytes = peak;
  }
}

std::vector<VanOutput> rollout_video_collect(const Model& model,
                                             const std::vector<shapes::Image>& context_frames,
                                             int horizon, const std::vector<Tensor>& noise_seq,
                                             RolloutTrace* trace) {
  std::vector<VanOutput> out;
  out.reserve(static_cast<size_t>(horizon));
  rollout_video(model, context_frames, horizon, noise_seq,
                [&](int, const VanOutput& v) { out.push_back(v); }, trace);
  return out;
}

}  // namespace hvp::model
