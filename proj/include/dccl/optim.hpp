#pragma once

#include "dccl/model.hpp"

namespace dccl {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  ModelParams m;
  ModelParams v;
  long step = 0;

  static AdamWState zeros_like(const ModelParams& params);
};

// Bias-corrected adaptive-moment update with decoupled weight decay: the
// decay shrinks each parameter by lr * weight_decay * param directly, it is
// never folded into the gradient. Non-finite gradients abort the step.
void adamw_step(ModelParams& params, const ModelParams& grads, AdamWState& state,
                double lr, double weight_decay, const AdamWConfig& cfg = {});

// Linear warmup from 0 to peak over the first warmup_fraction of steps, then
// linear decay from peak back to 0 at step == total_steps.
double lr_schedule(long step, long total_steps, double warmup_fraction, double peak);

}  // namespace dccl
