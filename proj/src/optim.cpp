#include "anysat/optim.hpp"

#include <cmath>
#include <numbers>

namespace anysat {

void AdamW::step(ParamTree& params, double lr) {
    if (lr < 0) lr = cfg_.lr;
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& [name, p] : params.items()) {
        if (!p.requires_grad()) continue;
        if (!p.has_grad())
            throw ConfigError("AdamW: trainable parameter " + name + " has no gradient");
        auto& st = moments_[name];
        if (st.m.empty()) {
            st.m.assign(p.numel(), 0.0);
            st.v.assign(p.numel(), 0.0);
        }
        auto& w = p.data();
        const auto& g = p.grad();
        for (size_t i = 0; i < w.size(); ++i) {
            st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g[i];
            st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            double mhat = st.m[i] / bc1;
            double vhat = st.v[i] / bc2;
            w[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
        }
    }
}

LrSchedule::LrSchedule(LrScheduleConfig cfg) : cfg_(cfg) {
    if (cfg_.base_lr <= 0 || cfg_.min_lr <= 0)
        throw ConfigError("LrSchedule: learning rates must be positive");
    if (cfg_.kind == LrScheduleConfig::Kind::WarmupCosine && cfg_.total_steps == 0)
        throw ConfigError("LrSchedule: total_steps must be >= 1 for warmup-cosine");
    if (cfg_.factor <= 0 || cfg_.factor >= 1.0)
        if (cfg_.kind == LrScheduleConfig::Kind::ReduceOnPlateau)
            throw ConfigError("LrSchedule: plateau factor must lie in (0,1)");
}

double LrSchedule::lr_at(size_t step, std::optional<double> monitored_loss) {
    switch (cfg_.kind) {
        case LrScheduleConfig::Kind::Constant:
            return cfg_.base_lr;
        case LrScheduleConfig::Kind::WarmupCosine: {
            if (step <= cfg_.warmup_steps && cfg_.warmup_steps > 0) {
                // Linear ramp min_lr -> base_lr; starts just above zero.
                double t = static_cast<double>(step) / static_cast<double>(cfg_.warmup_steps);
                return cfg_.min_lr + (cfg_.base_lr - cfg_.min_lr) * t;
            }
            size_t total = std::max(cfg_.total_steps, cfg_.warmup_steps + 1);
            double t = static_cast<double>(step - cfg_.warmup_steps) /
                       static_cast<double>(total - cfg_.warmup_steps);
            t = std::min(t, 1.0);
            double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * t));
            return cfg_.min_lr + (cfg_.base_lr - cfg_.min_lr) * cosine;
        }
        case LrScheduleConfig::Kind::ReduceOnPlateau: {
            if (!monitored_loss)
                throw ConfigError("LrSchedule: reduce-on-plateau requires a monitored loss");
            if (!has_best_ || *monitored_loss < best_) {
                best_ = *monitored_loss;
                has_best_ = true;
                evals_since_best_ = 0;
            } else if (++evals_since_best_ >= cfg_.patience) {
                plateau_scale_ *= cfg_.factor;
                evals_since_best_ = 0;
            }
            return std::max(cfg_.base_lr * plateau_scale_, cfg_.min_lr);
        }
    }
    throw ConfigError("LrSchedule: unknown kind");
}

}  // namespace anysat
