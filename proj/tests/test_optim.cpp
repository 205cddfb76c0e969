#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "anysat/optim.hpp"

using namespace anysat;

TEST_CASE("zero grads and zero weight decay leave params unchanged") {
    ParamTree tree;
    tree.create("p", Tensor::from({3}, {1.0, -2.0, 0.5}, true));
    tree.ensure_grads();
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    opt.step(tree);
    Tensor p = tree.get("p");
    CHECK(p.data()[0] == 1.0);
    CHECK(p.data()[1] == -2.0);
    CHECK(p.data()[2] == 0.5);
    CHECK(opt.step_count() == 1);
}

TEST_CASE("one step on f(p)=p^2 moves towards the minimum") {
    ParamTree tree;
    Tensor& p = tree.create("p", Tensor::from({}, {1.0}, true));
    Tensor loss = mul(p, p);
    backward(loss);
    AdamWConfig cfg;
    cfg.lr = 5e-5;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    opt.step(tree);
    CHECK(std::abs(tree.get("p").item()) < 1.0);
}

TEST_CASE("200 steps on a 2-D quadratic decrease the loss") {
    // f(x) = 2 x0^2 + 0.5 x1^2, closed-form gradient (4 x0, x1).
    ParamTree tree;
    tree.create("x", Tensor::from({2}, {3.0, -2.0}, true));
    AdamWConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    auto loss_of = [](const std::vector<double>& x) {
        return 2.0 * x[0] * x[0] + 0.5 * x[1] * x[1];
    };
    Tensor x = tree.get("x");
    double prev = loss_of(x.data());
    int monotone_after_warmup = 0;
    for (int i = 0; i < 200; ++i) {
        x.zero_grad();
        auto& g = x.grad();
        g[0] = 4.0 * x.data()[0];
        g[1] = 1.0 * x.data()[1];
        opt.step(tree);
        double cur = loss_of(x.data());
        if (i >= 10 && cur < prev) ++monotone_after_warmup;
        prev = cur;
    }
    CHECK(monotone_after_warmup == 190);
    CHECK(loss_of(x.data()) < 20.0);  // strictly below the starting loss
}

TEST_CASE("missing grad on a trainable parameter is an error") {
    ParamTree tree;
    tree.create("p", Tensor::from({2}, {1.0, 2.0}, true));
    AdamW opt(AdamWConfig{});
    CHECK_THROWS_AS(opt.step(tree), ConfigError);
}

TEST_CASE("grads untouched by the step itself") {
    ParamTree tree;
    Tensor& p = tree.create("p", Tensor::from({2}, {1.0, 2.0}, true));
    p.grad()[0] = 0.3;
    p.grad()[1] = -0.7;
    AdamW opt(AdamWConfig{});
    opt.step(tree);
    CHECK(tree.get("p").grad()[0] == 0.3);
    CHECK(tree.get("p").grad()[1] == -0.7);
}

TEST_CASE("warmup-cosine ramp endpoints") {
    LrScheduleConfig cfg;
    cfg.kind = LrScheduleConfig::Kind::WarmupCosine;
    cfg.base_lr = 5e-5;
    cfg.min_lr = 1e-6;
    cfg.warmup_steps = 100;
    cfg.total_steps = 1000;
    LrSchedule sched(cfg);
    double lr0 = sched.lr_at(0);
    CHECK(lr0 > 0.0);
    CHECK(lr0 < 2e-6);  // ramp start, essentially zero
    CHECK(sched.lr_at(100) == doctest::Approx(5e-5));
    CHECK(sched.lr_at(1000) == doctest::Approx(1e-6));
    // lr positive everywhere
    for (size_t s = 0; s <= 1200; s += 7) CHECK(sched.lr_at(s) > 0.0);
}

TEST_CASE("plateau schedule never triggers on decreasing losses") {
    LrScheduleConfig cfg;
    cfg.kind = LrScheduleConfig::Kind::ReduceOnPlateau;
    cfg.base_lr = 1e-3;
    cfg.patience = 5;
    cfg.factor = 0.5;
    LrSchedule sched(cfg);
    for (size_t s = 0; s < 50; ++s)
        CHECK(sched.lr_at(s, 100.0 - static_cast<double>(s)) == doctest::Approx(1e-3));
}

TEST_CASE("plateau schedule halves after patience evaluations without improvement") {
    LrScheduleConfig cfg;
    cfg.kind = LrScheduleConfig::Kind::ReduceOnPlateau;
    cfg.base_lr = 1e-3;
    cfg.min_lr = 1e-9;
    cfg.patience = 3;
    cfg.factor = 0.5;
    LrSchedule sched(cfg);
    CHECK(sched.lr_at(0, 1.0) == doctest::Approx(1e-3));
    CHECK(sched.lr_at(1, 2.0) == doctest::Approx(1e-3));
    CHECK(sched.lr_at(2, 2.0) == doctest::Approx(1e-3));
    CHECK(sched.lr_at(3, 2.0) == doctest::Approx(5e-4));  // third bad evaluation
    CHECK(sched.lr_at(4, 0.5) == doctest::Approx(5e-4));  // improvement resets the counter
}

TEST_CASE("plateau requires a monitored loss") {
    LrScheduleConfig cfg;
    cfg.kind = LrScheduleConfig::Kind::ReduceOnPlateau;
    LrSchedule sched(cfg);
    CHECK_THROWS_AS(sched.lr_at(0), ConfigError);
}
