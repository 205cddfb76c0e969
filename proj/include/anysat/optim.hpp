#pragma once

// AdamW with decoupled weight decay, plus learning-rate schedules.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "anysat/params.hpp"

namespace anysat {

struct AdamWConfig {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    // One update over every leaf of `params`. Grads are read, never written.
    // `lr` overrides cfg.lr (schedules feed it in); pass <0 to use cfg.lr.
    void step(ParamTree& params, double lr = -1.0);

    uint64_t step_count() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }
    void set_step_count(uint64_t s) { step_ = s; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    AdamWConfig cfg_;
    uint64_t step_ = 0;
    std::unordered_map<std::string, Moments> moments_;
};

struct LrScheduleConfig {
    enum class Kind { Constant, WarmupCosine, ReduceOnPlateau };
    Kind kind = Kind::Constant;
    double base_lr = 5e-5;
    double min_lr = 1e-6;
    // warmup-cosine
    size_t warmup_steps = 0;
    size_t total_steps = 1;
    // reduce-on-plateau
    size_t patience = 10;
    double factor = 0.5;
};

// Stateful only for reduce-on-plateau (tracks the best monitored loss).
class LrSchedule {
public:
    explicit LrSchedule(LrScheduleConfig cfg);

    // Plateau kind requires monitored_loss; each call with one counts as an
    // evaluation. Result is always > 0.
    double lr_at(size_t step, std::optional<double> monitored_loss = std::nullopt);

    const LrScheduleConfig& config() const { return cfg_; }

private:
    LrScheduleConfig cfg_;
    double best_ = 0.0;
    bool has_best_ = false;
    size_t evals_since_best_ = 0;
    double plateau_scale_ = 1.0;
};

}  // namespace anysat
