#pragma once

#include <functional>
#include <vector>

#include "hvp/model.h"

namespace hvp::objectives {

// Per-step loss record. total always equals the weighted sum of the parts
// active in the regime that produced it.
struct LossBreakdown {
  double total = 0.0;
  double image_l2 = 0.0;
  double encoding_l2 = 0.0;
  double critic_term = 0.0;
  double gradient_penalty = 0.0;
  double alpha = 0.0;
  double lambda_gp = 0.0;
  double beta = 0.0;
};

// Geometric ramp of the encoding-consistency weight.
struct AlphaSchedule {
  double alpha_start = 1e-7;
  double alpha_end = 0.1;
  int64_t ramp_steps = 3000;

  void validate() const;
};

// Log-linear interpolation from alpha_start to alpha_end over ramp_steps,
// constant afterwards. Monotone nondecreasing.
double alpha_at(const AlphaSchedule& schedule, int64_t step);

// L2 convention everywhere: mean over elements, summed over timesteps.

// ---- E2E ----
Value loss_e2e_g(Tape& t, const std::vector<Value>& predicted_frames,
                 const std::vector<Value>& target_frames);
LossBreakdown loss_e2e(const std::vector<Tensor>& predicted_frames,
                       const std::vector<Tensor>& target_frames);

// ---- EPVA ----
struct EpvaTerms {
  Value total, image, encoding;
};
EpvaTerms loss_epva_g(Tape& t, const std::vector<Value>& decoded_from_true_enc,
                      const std::vector<Value>& targets,
                      const std::vector<Value>& predicted_enc,
                      const std::vector<Value>& true_enc, double alpha);
LossBreakdown loss_epva(const std::vector<Tensor>& decoded_from_true_enc,
                        const std::vector<Tensor>& targets,
                        const std::vector<Tensor>& predicted_enc,
                        const std::vector<Tensor>& true_enc, double alpha);

// ---- feature-space adversarial ----

// Critic input augmentation: [flatten(f_enc(e)), e].
Value augment_for_critic_g(Tape& t, const model::Van& van, Value encoding);
Tensor augment_for_critic(const model::Van& van, const Tensor& encoding);

// Any per-step sequence scorer; model::Critic::scores satisfies this.
using SequenceScorer =
    std::function<std::vector<Value>(Tape&, const std::vector<Value>&)>;

SequenceScorer scorer_of(const model::Critic& critic);

struct CriticLossOptions {
  double lambda = 10.0;
  // When true, evaluates the penalty gradient at the fake samples themselves
  // (the equation as printed); default uses random interpolates.
  bool gp_at_fake = false;
};

struct CriticLossTerms {
  Value total, wasserstein, penalty;
};

// Improved Wasserstein critic loss over a batch of augmented sequences:
// mean_b sum_t [ D(fake) - D(real) ] + mean_b sum_t lambda (||g_t|| - 1)^2,
// where g_t is the gradient of the summed scores with respect to the step-t
// penalty-point input. interp_u supplies one mixing coefficient per batch
// item; it is ignored when gp_at_fake is set.
CriticLossTerms critic_loss_g(Tape& t, const SequenceScorer& scorer,
                              const std::vector<std::vector<Value>>& real_seqs,
                              const std::vector<std::vector<Value>>& fake_seqs,
                              const CriticLossOptions& opts,
                              const std::vector<double>& interp_u);
LossBreakdown critic_loss(const SequenceScorer& scorer,
                          const std::vector<std::vector<Tensor>>& real_seqs,
                          const std::vector<std::vector<Tensor>>& fake_seqs, double lambda,
                          Rng& rng, bool gp_at_fake = false);

// Generator side of Eq-pair: -mean_b sum_t (D(fake) - D(real)).
Value generator_adv_loss_g(Tape& t, const SequenceScorer& scorer,
                           const std::vector<std::vector<Value>>& real_seqs,
                           const std::vector<std::vector<Value>>& fake_seqs);
// Same quantity from precomputed per-step scores.
Value generator_adv_from_scores_g(Tape& t, const std::vector<std::vector<Value>>& real_scores,
                                  const std::vector<std::vector<Value>>& fake_scores);
double generator_adv_loss(const SequenceScorer& scorer,
                          const std::vector<std::vector<Tensor>>& real_seqs,
                          const std::vector<std::vector<Tensor>>& fake_seqs);

// Generator-side total for the adversarial regime:
// adv + beta * sum_t L2(pred_enc, true_enc) + sum_t L2(decoded_from_true, target).
struct AdvGeneratorTerms {
  Value total, adv, encoding, image;
};
AdvGeneratorTerms loss_epva_adversarial_g(Tape& t, const SequenceScorer& scorer,
                                          const std::vector<std::vector<Value>>& real_aug,
                                          const std::vector<std::vector<Value>>& fake_aug,
                                          const std::vector<Value>& decoded_from_true_enc,
                                          const std::vector<Value>& targets,
                                          const std::vector<Value>& predicted_enc,
                                          const std::vector<Value>& true_enc, double beta);
LossBreakdown loss_epva_adversarial(const SequenceScorer& scorer,
                                    const std::vector<std::vector<Tensor>>& real_aug,
                                    const std::vector<std::vector<Tensor>>& fake_aug,
                                    const std::vector<Tensor>& decoded_from_true_enc,
                                    const std::vector<Tensor>& targets,
                                    const std::vector<Tensor>& predicted_enc,
                                    const std::vector<Tensor>& true_enc, double beta);

}  // namespace hvp::objectives
