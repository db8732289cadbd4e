#include "hvp/objectives.h"

#include <cmath>

namespace hvp::objectives {

void AlphaSchedule::validate() const {
  if (!(alpha_start > 0.0) || alpha_start > alpha_end)
    throw std::invalid_argument("AlphaSchedule: need 0 < alpha_start <= alpha_end");
  if (ramp_steps < 0) throw std::invalid_argument("AlphaSchedule: negative ramp");
}

double alpha_at(const AlphaSchedule& schedule, int64_t step) {
  schedule.validate();
  if (step < 0) throw std::invalid_argument("alpha_at: negative step");
  if (step >= schedule.ramp_steps || schedule.ramp_steps == 0) return schedule.alpha_end;
  double f = static_cast<double>(step) / static_cast<double>(schedule.ramp_steps);
  return std::exp(std::log(schedule.alpha_start) +
                  f * (std::log(schedule.alpha_end) - std::log(schedule.alpha_start)));
}

namespace {

void check_lengths(size_t a, size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": sequence length mismatch");
}

Value sum_mse(Tape& t, const std::vector<Value>& a, const std::vector<Value>& b) {
  Value acc = t.scalar_input(0.0);
  for (size_t i = 0; i < a.size(); ++i) acc = add(acc, mse(a[i], b[i]));
  return acc;
}

}  // namespace

Value loss_e2e_g(Tape& t, const std::vector<Value>& predicted_frames,
                 const std::vector<Value>& target_frames) {
  check_lengths(predicted_frames.size(), target_frames.size(), "loss_e2e");
  return sum_mse(t, predicted_frames, target_frames);
}

LossBreakdown loss_e2e(const std::vector<Tensor>& predicted_frames,
                       const std::vector<Tensor>& target_frames) {
  Tape t;
  std::vector<Value> p, g;
  for (const auto& f : predicted_frames) p.push_back(t.input(f));
  for (const auto& f : target_frames) g.push_back(t.input(f));
  LossBreakdown b;
  b.image_l2 = loss_e2e_g(t, p, g).scalar();
  b.total = b.image_l2;
  return b;
}

EpvaTerms loss_epva_g(Tape& t, const std::vector<Value>& decoded_from_true_enc,
                      const std::vector<Value>& targets,
                      const std::vector<Value>& predicted_enc,
                      const std::vector<Value>& true_enc, double alpha) {
  check_lengths(decoded_from_true_enc.size(), targets.size(), "loss_epva images");
  check_lengths(predicted_enc.size(), true_enc.size(), "loss_epva encodings");
  Value image = sum_mse(t, decoded_from_true_enc, targets);
  Value enc = sum_mse(t, predicted_enc, true_enc);
  Value total = add(image, affine(enc, alpha, 0.0));
  return {total, image, enc};
}

LossBreakdown loss_epva(const std::vector<Tensor>& decoded_from_true_enc,
                        const std::vector<Tensor>& targets,
                        const std::vector<Tensor>& predicted_enc,
                        const std::vector<Tensor>& true_enc, double alpha) {
  Tape t;
  auto lift = [&t](const std::vector<Tensor>& xs) {
    std::vector<Value> vs;
    vs.reserve(xs.size());
    for (const auto& x : xs) vs.push_back(t.input(x));
    return vs;
  };
  auto terms = loss_epva_g(t, lift(decoded_from_true_enc), lift(targets), lift(predicted_enc),
                           lift(true_enc), alpha);
  LossBreakdown b;
  b.total = terms.total.scalar();
  b.image_l2 = terms.image.scalar();
  b.encoding_l2 = terms.encoding.scalar();
  b.alpha = alpha;
  return b;
}

Value augment_for_critic_g(Tape& t, const model::Van& van, Value encoding) {
  Value feat = van.encode_feat(t, encoding);
  return concat(reshape(feat, {static_cast<int>(feat.val().size())}), encoding);
}

Tensor augment_for_critic(const model::Van& van, const Tensor& encoding) {
  Tape t;
  return augment_for_critic_g(t, van, t.input(encoding)).val();
}

SequenceScorer scorer_of(const model::Critic& critic) {
  return [&critic](Tape& t, const std::vector<Value>& seq) { return critic.scores(t, seq); };
}

CriticLossTerms critic_loss_g(Tape& t, const SequenceScorer& scorer,
                              const std::vector<std::vector<Value>>& real_seqs,
                              const std::vector<std::vector<Value>>& fake_seqs,
                              const CriticLossOptions& opts,
                              const std::vector<double>& interp_u) {
  check_lengths(real_seqs.size(), fake_seqs.size(), "critic_loss batch");
  if (real_seqs.empty()) throw std::invalid_argument("critic_loss: empty batch");
  if (!opts.gp_at_fake) check_lengths(interp_u.size(), real_seqs.size(), "critic_loss interp_u");

  const double inv_b = 1.0 / static_cast<double>(real_seqs.size());
  Value wasserstein = t.scalar_input(0.0);
  Value penalty = t.scalar_input(0.0);

  for (size_t b = 0; b < real_seqs.size(); ++b) {
    const auto& real = real_seqs[b];
    const auto& fake = fake_seqs[b];
    check_lengths(real.size(), fake.size(), "critic_loss steps");

    auto real_scores = scorer(t, real);
    auto fake_scores = scorer(t, fake);
    Value w = t.scalar_input(0.0);
    for (size_t i = 0; i < real.size(); ++i)
      w = add(w, sub(fake_scores[i], real_scores[i]));
    wasserstein = add(wasserstein, w);

    // Penalty points: leaf copies so the input gradient is well-defined.
    std::vector<Value> points;
    points.reserve(real.size());
    for (size_t i = 0; i < real.size(); ++i) {
      Tensor p(real[i].val().shape());
      if (opts.gp_at_fake) {
        const Tensor& f = fake[i].val();
        for (int64_t k = 0; k < p.size(); ++k) p[k] = f[k];
      } else {
        double u = interp_u[b];
        const Tensor &r = real[i].val(), &f = fake[i].val();
        for (int64_t k = 0; k < p.size(); ++k) p[k] = u * r[k] + (1.0 - u) * f[k];
      }
      points.push_back(t.input(std::move(p), /*requires_grad=*/true));
    }
    auto point_scores = scorer(t, points);
    Value total_score = t.scalar_input(0.0);
    for (const Value& s : point_scores) total_score = add(total_score, s);
    GradMap gm = t.backward(total_score);
    for (size_t i = 0; i < points.size(); ++i) {
      if (!gm.has(points[i]))
        throw std::logic_error("critic_loss: scorer ignores its input");
      Value g = gm.grad(points[i]);
      Value norm = sqrt_(dot(g, g));
      Value dev = sub(norm, t.scalar_input(1.0));
      penalty = add(penalty, mul(dev, dev));
    }
  }

  wasserstein = affine(wasserstein, inv_b, 0.0);
  penalty = affine(penalty, opts.lambda * inv_b, 0.0);
  return {add(wasserstein, penalty), wasserstein, penalty};
}

LossBreakdown critic_loss(const SequenceScorer& scorer,
                          const std::vector<std::vector<Tensor>>& real_seqs,
                          const std::vector<std::vector<Tensor>>& fake_seqs, double lambda,
                          Rng& rng, bool gp_at_fake) {
  Tape t;
  auto lift = [&t](const std::vector<std::vector<Tensor>>& xs) {
    std::vector<std::vector<Value>> out;
    out.reserve(xs.size());
    for (const auto& seq : xs) {
      std::vector<Value> vs;
      vs.reserve(seq.size());
      for (const auto& x : seq) vs.push_back(t.input(x));
      out.push_back(std::move(vs));
    }
    return out;
  };
  std::vector<double> us;
  for (size_t i = 0; i < real_seqs.size(); ++i) us.push_back(rng.uniform());
  CriticLossOptions opts;
  opts.lambda = lambda;
  opts.gp_at_fake = gp_at_fake;
  auto terms = critic_loss_g(t, scorer, lift(real_seqs), lift(fake_seqs), opts, us);
  LossBreakdown b;
  b.total = terms.total.scalar();
  b.critic_term = terms.wasserstein.scalar();
  b.gradient_penalty = terms.penalty.scalar();
  b.lambda_gp = lambda;
  return b;
}

Value generator_adv_from_scores_g(Tape& t, const std::vector<std::vector<Value>>& real_scores,
                                  const std::vector<std::vector<Value>>& fake_scores) {
  check_lengths(real_scores.size(), fake_scores.size(), "generator_adv batch");
  if (real_scores.empty()) throw std::invalid_argument("generator_adv: empty batch");
  const double inv_b = 1.0 / static_cast<double>(real_scores.size());
  Value acc = t.scalar_input(0.0);
  for (size_t b = 0; b < real_scores.size(); ++b) {
    check_lengths(real_scores[b].size(), fake_scores[b].size(), "generator_adv steps");
    for (size_t i = 0; i < real_scores[b].size(); ++i)
      acc = add(acc, sub(fake_scores[b][i], real_scores[b][i]));
  }
  return affine(acc, -inv_b, 0.0);
}

Value generator_adv_loss_g(Tape& t, const SequenceScorer& scorer,
                           const std::vector<std::vector<Value>>& real_seqs,
                           const std::vector<std::vector<Value>>& fake_seqs) {
  check_lengths(real_seqs.size(), fake_seqs.size(), "generator_adv batch");
  std::vector<std::vector<Value>> rs, fs;
  for (const auto& seq : real_seqs) rs.push_back(scorer(t, seq));
  for (const auto& seq : fake_seqs) fs.push_back(scorer(t, seq));
  return generator_adv_from_scores_g(t, rs, fs);
}

double generator_adv_loss(const SequenceScorer& scorer,
                          const std::vector<std::vector<Tensor>>& real_seqs,
                          const std::vector<std::vector<Tensor>>& fake_seqs) {
  Tape t;
  auto lift = [&t](const std::vector<std::vector<Tensor>>& xs) {
    std::vector<std::vector<Value>> out;
    for (const auto& seq : xs) {
      std::vector<Value> vs;
      for (const auto& x : seq) vs.push_back(t.input(x));
      out.push_back(std::move(vs));
    }
    return out;
  };
  return generator_adv_loss_g(t, scorer, lift(real_seqs), lift(fake_seqs)).scalar();
}

AdvGeneratorTerms loss_epva_adversarial_g(Tape& t, const SequenceScorer& scorer,
                                          const std::vector<std::vector<Value>>& real_aug,
                                          const std::vector<std::vector<Value>>& fake_aug,
                                          const std::vector<Value>& decoded_from_true_enc,
                                          const std::vector<Value>& targets,
                                          const std::vector<Value>& predicted_enc,
                                          const std::vector<Value>& true_enc, double beta) {
  Value adv = generator_adv_loss_g(t, scorer, real_aug, fake_aug);
  check_lengths(predicted_enc.size(), true_enc.size(), "adv encodings");
  check_lengths(decoded_from_true_enc.size(), targets.size(), "adv images");
  Value enc = sum_mse(t, predicted_enc, true_enc);
  Value image = sum_mse(t, decoded_from_true_enc, targets);
  Value total = add(add(adv, affine(enc, beta, 0.0)), image);
  return {total, adv, enc, image};
}

LossBreakdown loss_epva_adversarial(const SequenceScorer& scorer,
                                    const std::vector<std::vector<Tensor>>& real_aug,
                                    const std::vector<std::vector<Tensor>>& fake_aug,
                                    const std::vector<Tensor>& decoded_from_true_enc,
                                    const std::vector<Tensor>& targets,
                                    const std::vector<Tensor>& predicted_enc,
                                    const std::vector<Tensor>& true_enc, double beta) {
  Tape t;
  auto lift1 = [&t](const std::vector<Tensor>& xs) {
    std::vector<Value> vs;
    for (const auto& x : xs) vs.push_back(t.input(x));
    return vs;
  };
  auto lift2 = [&t](const std::vector<std::vector<Tensor>>& xs) {
    std::vector<std::vector<Value>> out;
    for (const auto& seq : xs) {
      std::vector<Value> vs;
      for (const auto& x : seq) vs.push_back(t.input(x));
      out.push_back(std::move(vs));
    }
    return out;
  };
  auto terms = loss_epva_adversarial_g(t, scorer, lift2(real_aug), lift2(fake_aug),
                                       lift1(decoded_from_true_enc), lift1(targets),
                                       lift1(predicted_enc), lift1(true_enc), beta);
  LossBreakdown b;
  b.total = terms.total.scalar();
  b.critic_term = terms.adv.scalar();
  b.encoding_l2 = terms.encoding.scalar();
  b.image_l2 = terms.image.scalar();
  b.beta = beta;
  return b;
}

}  // namespace hvp::objectives
