#include "dccl/optim.hpp"

#include <cmath>
#include <vector>

namespace dccl {

AdamWState AdamWState::zeros_like(const ModelParams& params) {
  AdamWState s;
  s.m = ModelParams::zeros_like(params);
  s.v = ModelParams::zeros_like(params);
  s.step = 0;
  return s;
}

namespace {
std::vector<Mat*> arrays_of(ModelParams& p) {
  std::vector<Mat*> out;
  p.visit([&out](const std::string&, Mat& m) { out.push_back(&m); });
  return out;
}
std::vector<const Mat*> arrays_of(const ModelParams& p) {
  std::vector<const Mat*> out;
  p.visit([&out](const std::string&, const Mat& m) { out.push_back(&m); });
  return out;
}
}  // namespace

void adamw_step(ModelParams& params, const ModelParams& grads, AdamWState& state,
                double lr, double weight_decay, const AdamWConfig& cfg) {
  check_arg(lr >= 0.0 && weight_decay >= 0.0, "adamw: lr and decay must be >= 0");
  grads.visit([](const std::string& name, const Mat& g) {
    check_runtime(g.allFinite(), "adamw: non-finite gradient for '" + name +
                                     "', aborting the step");
  });

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  auto ps = arrays_of(params);
  auto gs = arrays_of(grads);
  auto ms = arrays_of(state.m);
  auto vs = arrays_of(state.v);
  for (size_t i = 0; i < ps.size(); ++i) {
    Mat& p = *ps[i];
    const Mat& g = *gs[i];
    Mat& m = *ms[i];
    Mat& v = *vs[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const Mat mhat = m / bc1;
    const Mat vhat = v / bc2;
    const Mat update =
        mhat.cwiseQuotient((vhat.cwiseSqrt().array() + cfg.eps).matrix()) +
        weight_decay * p;
    p -= lr * update;
  }
}

double lr_schedule(long step, long total_steps, double warmup_fraction, double peak) {
  check_arg(total_steps > 0, "lr_schedule: total_steps must be positive");
  check_arg(step >= 0 && step <= total_steps, "lr_schedule: step out of range");
  check_arg(warmup_fraction >= 0.0 && warmup_fraction < 1.0,
            "lr_schedule: warmup fraction must be in [0,1)");
  const long warmup_end = static_cast<long>(warmup_fraction * total_steps);
  if (warmup_end > 0 && step <= warmup_end) {
    return peak * static_cast<double>(step) / static_cast<double>(warmup_end);
  }
  return peak * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup_end);
}

}  // namespace dccl
